#include <cmath>

#include "llmdetect/classifiers.hpp"
#include "llmdetect/corpus.hpp"
#include "llmdetect/errors.hpp"

namespace llmdetect {

using json = nlohmann::json;

Label TrainedModel::predict(std::span<const double> raw) const { return argmax_label(predict_proba(raw)); }

Probabilities TrainedModel::predict_proba(std::span<const double> raw) const {
    if (const auto* lr = std::get_if<LogisticModel>(&model)) {
        if (schema) return lr->predict_proba(apply_schema(*schema, raw));
        return lr->predict_proba(raw);
    }
    return std::get<ForestModel>(model).predict_proba(raw);
}

std::vector<Label> TrainedModel::predict_all(const FeatureMatrix& raw) const {
    std::vector<Label> out;
    out.reserve(raw.size());
    for (const auto& row : raw) out.push_back(predict(row));
    return out;
}

TrainedModel train_model(ModelKind kind, const FeatureMatrix& raw, std::span<const Label> y,
                         const TrainConfig& config) {
    TrainedModel m;
    m.kind = kind;
    m.config = config;
    if (kind == ModelKind::Logistic) {
        std::vector<std::string> names;
        const std::size_t d = raw.empty() ? 0 : raw.front().size();
        for (std::size_t j = 0; j < d; ++j)
            names.push_back(d == kNumFeatures ? std::string(kFeatureNames[j]) : "f" + std::to_string(j));
        m.schema = fit_schema(raw, std::move(names));
        m.model = train_logistic(apply_schema(*m.schema, raw), y, config);
    } else {
        m.model = train_forest(raw, y, config);
    }
    return m;
}

namespace {

json schema_to_json(const FeatureSchema& s) {
    std::vector<int> constant(s.constant.begin(), s.constant.end());
    return {{"names", s.names}, {"means", s.means}, {"sds", s.sds}, {"constant", constant}};
}

FeatureSchema schema_from_json(const json& j) {
    FeatureSchema s;
    s.names = j.at("names").get<std::vector<std::string>>();
    s.means = j.at("means").get<std::vector<double>>();
    s.sds = j.at("sds").get<std::vector<double>>();
    for (int c : j.at("constant").get<std::vector<int>>()) s.constant.push_back(c != 0);
    if (s.means.size() != s.dim() || s.sds.size() != s.dim() || s.constant.size() != s.dim())
        throw DataError("feature schema arrays differ in length");
    return s;
}

json tree_to_json(const DecisionTree& t) {
    // Columnar layout keeps large forests compact.
    std::vector<int> feature, left, right, prediction;
    std::vector<double> threshold;
    std::vector<std::size_t> samples;
    for (const auto& n : t.nodes) {
        feature.push_back(n.feature);
        threshold.push_back(n.threshold);
        left.push_back(n.left);
        right.push_back(n.right);
        prediction.push_back(static_cast<int>(class_index(n.prediction)));
        samples.push_back(n.samples);
    }
    return {{"feature", feature}, {"threshold", threshold}, {"left", left},
            {"right", right},     {"prediction", prediction}, {"samples", samples}};
}

DecisionTree tree_from_json(const json& j) {
    const auto feature = j.at("feature").get<std::vector<int>>();
    const auto threshold = j.at("threshold").get<std::vector<double>>();
    const auto left = j.at("left").get<std::vector<int>>();
    const auto right = j.at("right").get<std::vector<int>>();
    const auto prediction = j.at("prediction").get<std::vector<int>>();
    const auto samples = j.at("samples").get<std::vector<std::size_t>>();
    const std::size_t n = feature.size();
    if (threshold.size() != n || left.size() != n || right.size() != n || prediction.size() != n ||
        samples.size() != n || n == 0)
        throw DataError("malformed tree in model file");
    DecisionTree t;
    for (std::size_t i = 0; i < n; ++i) {
        if (prediction[i] < 0 || prediction[i] >= static_cast<int>(kNumClasses))
            throw DataError("malformed tree in model file");
        if (feature[i] >= 0 && (left[i] <= static_cast<int>(i) || right[i] <= static_cast<int>(i) ||
                                left[i] >= static_cast<int>(n) || right[i] >= static_cast<int>(n)))
            throw DataError("malformed tree in model file");
        t.nodes.push_back({feature[i], threshold[i], left[i], right[i],
                           label_from_index(static_cast<std::size_t>(prediction[i])), samples[i]});
    }
    return t;
}

}  // namespace

json model_to_json(const TrainedModel& m) {
    json j = {{"format", "llmdetect.model"},
              {"version", 1},
              {"kind", to_string(m.kind)},
              {"config", to_json(m.config)},
              {"seed", m.config.seed}};
    j["schema"] = m.schema ? schema_to_json(*m.schema) : json(nullptr);
    if (const auto* lr = std::get_if<LogisticModel>(&m.model)) {
        j["logistic"] = {{"dim", lr->dim},
                         {"weights", lr->weights},
                         {"bias", lr->bias},
                         {"l2_strength", lr->l2_strength},
                         {"status", to_string(lr->status)},
                         {"iterations", lr->iterations},
                         {"gradient_norm", lr->gradient_norm}};
    } else {
        const auto& f = std::get<ForestModel>(m.model);
        json trees = json::array();
        for (const auto& t : f.trees) trees.push_back(tree_to_json(t));
        j["forest"] = {{"dim", f.dim},
                       {"max_depth", f.max_depth},
                       {"min_samples_leaf", f.min_samples_leaf},
                       {"seed", f.seed},
                       {"trees", trees}};
    }
    return j;
}

TrainedModel model_from_json(const json& j) {
    try {
        if (j.value("format", "") != "llmdetect.model") throw DataError("not a model file");
        if (j.at("version").get<int>() != 1) throw DataError("unsupported model version");
        TrainedModel m;
        auto kind = parse_model_kind(j.at("kind").get<std::string>());
        if (!kind) throw DataError("unknown model kind");
        m.kind = *kind;
        m.config = train_config_from_json(j.at("config"));
        if (!j.at("schema").is_null()) m.schema = schema_from_json(j.at("schema"));
        if (m.kind == ModelKind::Logistic) {
            const auto& l = j.at("logistic");
            LogisticModel lr;
            lr.dim = l.at("dim").get<std::size_t>();
            lr.weights = l.at("weights").get<std::vector<double>>();
            lr.bias = l.at("bias").get<std::array<double, kNumClasses>>();
            lr.l2_strength = l.at("l2_strength").get<double>();
            const auto status = l.at("status").get<std::string>();
            lr.status = status == "converged" ? TrainStatus::Converged
                        : status == "max_iterations" ? TrainStatus::MaxIterations
                                                     : TrainStatus::DegenerateSingleClass;
            lr.iterations = l.at("iterations").get<int>();
            lr.gradient_norm = l.at("gradient_norm").get<double>();
            if (lr.weights.size() != kNumClasses * lr.dim) throw DataError("weight matrix has the wrong size");
            if (m.schema && m.schema->dim() != lr.dim) throw DataError("schema and model dimensions differ");
            m.model = std::move(lr);
        } else {
            const auto& f = j.at("forest");
            ForestModel fm;
            fm.dim = f.at("dim").get<std::size_t>();
            fm.max_depth = f.at("max_depth").get<int>();
            fm.min_samples_leaf = f.at("min_samples_leaf").get<int>();
            fm.seed = f.at("seed").get<std::uint64_t>();
            for (const auto& t : f.at("trees")) fm.trees.push_back(tree_from_json(t));
            if (fm.trees.empty()) throw DataError("forest has no trees");
            m.model = std::move(fm);
        }
        return m;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed model file: ") + e.what());
    }
}

std::size_t select_winner(std::span<const CandidateResult> results) {
    if (results.empty()) throw std::invalid_argument("no candidates to select from");
    constexpr double kTie = 1e-12;
    std::size_t best = 0;
    for (std::size_t i = 1; i < results.size(); ++i) {
        const auto& a = results[i];
        const auto& b = results[best];
        if (a.mean_weighted_f1 > b.mean_weighted_f1 + kTie) {
            best = i;
        } else if (std::abs(a.mean_weighted_f1 - b.mean_weighted_f1) <= kTie) {
            if (a.mean_accuracy > b.mean_accuracy + kTie) {
                best = i;
            } else if (std::abs(a.mean_accuracy - b.mean_accuracy) <= kTie &&
                       a.candidate.kind == ModelKind::Logistic && b.candidate.kind == ModelKind::Forest) {
                best = i;
            }
        }
    }
    return best;
}

namespace {

std::pair<double, double> mean_sd(const std::vector<double>& v) {
    double m = 0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double ss = 0;
    for (double x : v) ss += (x - m) * (x - m);
    const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    return {m, sd};
}

}  // namespace

CrossValResult cross_validate(const FeatureMatrix& raw, std::span<const Label> y,
                              std::span<const std::string> learner_ids, std::size_t k,
                              std::span<const Candidate> candidates, std::uint64_t seed) {
    if (raw.size() != y.size() || raw.size() != learner_ids.size())
        throw std::invalid_argument("cross_validate: inputs differ in length");
    if (candidates.empty()) throw std::invalid_argument("cross_validate: no candidates");
    const auto folds = learner_folds(learner_ids, k, seed);

    CrossValResult out;
    out.k = k;
    out.seed = seed;
    for (const auto& cand : candidates) {
        CandidateResult res;
        res.candidate = cand;
        std::vector<double> acc, wf1;
        for (std::size_t f = 0; f < k; ++f) {
            FeatureMatrix train_x, test_x;
            std::vector<Label> train_y, test_y;
            for (std::size_t i = 0; i < raw.size(); ++i) {
                if (folds[i] == f) {
                    test_x.push_back(raw[i]);
                    test_y.push_back(y[i]);
                } else {
                    train_x.push_back(raw[i]);
                    train_y.push_back(y[i]);
                }
            }
            const TrainedModel model = train_model(cand.kind, train_x, train_y, cand.config);
            const auto pred = model.predict_all(test_x);
            res.folds.push_back(report(test_y, pred));
            acc.push_back(res.folds.back().accuracy);
            wf1.push_back(res.folds.back().weighted.f1);
        }
        std::tie(res.mean_accuracy, res.sd_accuracy) = mean_sd(acc);
        std::tie(res.mean_weighted_f1, res.sd_weighted_f1) = mean_sd(wf1);
        out.candidates.push_back(std::move(res));
    }
    out.winner = select_winner(out.candidates);
    return out;
}

json cross_val_to_json(const CrossValResult& r) {
    json cands = json::array();
    for (const auto& c : r.candidates) {
        json folds = json::array();
        for (const auto& f : c.folds) folds.push_back(report_to_json(f));
        cands.push_back({{"kind", to_string(c.candidate.kind)},
                         {"config", to_json(c.candidate.config)},
                         {"mean_accuracy", c.mean_accuracy},
                         {"sd_accuracy", c.sd_accuracy},
                         {"mean_weighted_f1", c.mean_weighted_f1},
                         {"sd_weighted_f1", c.sd_weighted_f1},
                         {"folds", folds}});
    }
    return {{"format", "llmdetect.crossval"},
            {"version", 1},
            {"k", r.k},
            {"seed", r.seed},
            {"winner", r.winner},
            {"winner_kind", to_string(r.best().candidate.kind)},
            {"candidates", cands}};
}

}  // namespace llmdetect
