#include <algorithm>
#include <cmath>
#include <limits>

#include "llmdetect/classifiers.hpp"
#include "llmdetect/errors.hpp"

namespace llmdetect {

std::string_view to_string(ModelKind k) { return k == ModelKind::Logistic ? "logistic" : "forest"; }

std::optional<ModelKind> parse_model_kind(std::string_view s) {
    if (s == "logistic") return ModelKind::Logistic;
    if (s == "forest") return ModelKind::Forest;
    return std::nullopt;
}

std::string_view to_string(TrainStatus s) {
    switch (s) {
    case TrainStatus::Converged: return "converged";
    case TrainStatus::MaxIterations: return "max_iterations";
    case TrainStatus::DegenerateSingleClass: return "degenerate_single_class";
    }
    return "";
}

void TrainConfig::validate() const {
    auto fail = [](const std::string& what) { throw ConfigError("invalid training config: " + what); };
    if (!(l2_strength >= 0.0) || !std::isfinite(l2_strength)) fail("l2_strength must be >= 0");
    if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
    if (max_iterations < 1) fail("max_iterations must be >= 1");
    if (!(gradient_tolerance > 0.0)) fail("gradient_tolerance must be > 0");
    if (trees_count < 1) fail("trees_count must be >= 1");
    if (max_depth < 0) fail("max_depth must be >= 0");
    if (min_samples_leaf < 1) fail("min_samples_leaf must be >= 1");
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"l2_strength", c.l2_strength},
            {"line_search", c.line_search},
            {"learning_rate", c.learning_rate},
            {"max_iterations", c.max_iterations},
            {"gradient_tolerance", c.gradient_tolerance},
            {"trees_count", c.trees_count},
            {"max_depth", c.max_depth},
            {"min_samples_leaf", c.min_samples_leaf},
            {"bootstrap", c.bootstrap},
            {"seed", c.seed},
            {"class_weighting", c.class_weighting}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
    try {
        c.l2_strength = j.value("l2_strength", c.l2_strength);
        c.line_search = j.value("line_search", c.line_search);
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.max_iterations = j.value("max_iterations", c.max_iterations);
        c.gradient_tolerance = j.value("gradient_tolerance", c.gradient_tolerance);
        c.trees_count = j.value("trees_count", c.trees_count);
        c.max_depth = j.value("max_depth", c.max_depth);
        c.min_samples_leaf = j.value("min_samples_leaf", c.min_samples_leaf);
        c.bootstrap = j.value("bootstrap", c.bootstrap);
        c.seed = j.value("seed", c.seed);
        c.class_weighting = j.value("class_weighting", c.class_weighting);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid training config: ") + e.what());
    }
    return c;
}

Probabilities softmax(const std::array<double, kNumClasses>& scores) {
    const double m = *std::max_element(scores.begin(), scores.end());
    Probabilities p{};
    double z = 0;
    for (std::size_t c = 0; c < kNumClasses; ++c) z += (p[c] = std::exp(scores[c] - m));
    for (auto& v : p) v /= z;
    return p;
}

Label argmax_label(const Probabilities& p) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < kNumClasses; ++c)
        if (p[c] > p[best]) best = c;
    return label_from_index(best);
}

std::vector<double> sample_weights(std::span<const Label> y, bool class_weighting) {
    std::vector<double> w(y.size(), 1.0);
    if (!class_weighting || y.empty()) return w;
    std::array<std::size_t, kNumClasses> counts{};
    for (Label l : y) ++counts[class_index(l)];
    std::size_t present = 0;
    for (auto c : counts) present += c > 0;
    for (std::size_t i = 0; i < y.size(); ++i)
        w[i] = static_cast<double>(y.size()) /
               (static_cast<double>(present) * static_cast<double>(counts[class_index(y[i])]));
    return w;
}

LogisticObjective::LogisticObjective(const FeatureMatrix& x, std::span<const Label> y, std::vector<double> weights,
                                     double l2_strength)
    : x_(x), y_(y), w_(std::move(weights)), l2_(l2_strength), dim_(x.empty() ? 0 : x.front().size()) {
    if (x.size() != y.size()) throw std::invalid_argument("feature rows and labels differ in count");
    if (w_.size() != y.size()) throw std::invalid_argument("sample weights and labels differ in count");
}

double LogisticObjective::value(std::span<const double> params) const {
    std::vector<double> scratch(num_params());
    return value_and_gradient(params, scratch);
}

double LogisticObjective::value_and_gradient(std::span<const double> params, std::span<double> grad) const {
    const std::size_t d = dim_;
    const double* W = params.data();
    const double* b = params.data() + kNumClasses * d;
    std::fill(grad.begin(), grad.end(), 0.0);
    double* gW = grad.data();
    double* gb = grad.data() + kNumClasses * d;

    double loss = 0;
    for (std::size_t i = 0; i < x_.size(); ++i) {
        const auto& xi = x_[i];
        std::array<double, kNumClasses> s{};
        for (std::size_t c = 0; c < kNumClasses; ++c) {
            double acc = b[c];
            for (std::size_t j = 0; j < d; ++j) acc += W[c * d + j] * xi[j];
            s[c] = acc;
        }
        const double m = *std::max_element(s.begin(), s.end());
        double z = 0;
        for (double v : s) z += std::exp(v - m);
        const double log_z = m + std::log(z);
        const std::size_t yi = class_index(y_[i]);
        loss += w_[i] * (log_z - s[yi]);
        for (std::size_t c = 0; c < kNumClasses; ++c) {
            const double r = w_[i] * (std::exp(s[c] - log_z) - (c == yi ? 1.0 : 0.0));
            gb[c] += r;
            for (std::size_t j = 0; j < d; ++j) gW[c * d + j] += r * xi[j];
        }
    }
    double sq = 0;
    for (std::size_t k = 0; k < kNumClasses * d; ++k) {
        sq += W[k] * W[k];
        gW[k] += l2_ * W[k];
    }
    loss += 0.5 * l2_ * sq;

    const double n = static_cast<double>(std::max<std::size_t>(x_.size(), 1));
    for (auto& g : grad) g /= n;
    return loss / n;
}

std::array<double, kNumClasses> LogisticModel::scores(std::span<const double> x) const {
    if (x.size() != dim)
        throw std::invalid_argument("feature vector has " + std::to_string(x.size()) + " entries, model expects " +
                                    std::to_string(dim));
    std::array<double, kNumClasses> s{};
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        double acc = bias[c];
        for (std::size_t j = 0; j < dim; ++j) acc += weights[c * dim + j] * x[j];
        s[c] = acc;
    }
    return s;
}

Probabilities LogisticModel::predict_proba(std::span<const double> x) const { return softmax(scores(x)); }

Label LogisticModel::predict(std::span<const double> x) const { return argmax_label(predict_proba(x)); }

double LogisticModel::weight_norm() const {
    double sq = 0;
    for (double w : weights) sq += w * w;
    return std::sqrt(sq);
}

namespace {

double norm2(std::span<const double> v) {
    double s = 0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace

LogisticModel train_logistic(const FeatureMatrix& x, std::span<const Label> y, const TrainConfig& config) {
    config.validate();
    if (x.empty()) throw DataError("cannot train on an empty training set");
    if (x.size() != y.size()) throw std::invalid_argument("feature rows and labels differ in count");
    const std::size_t d = x.front().size();
    for (const auto& row : x) {
        if (row.size() != d) throw std::invalid_argument("ragged feature matrix");
        for (double v : row)
            if (!std::isfinite(v)) throw DataError("non-finite feature value in training data");
    }

    LogisticModel model;
    model.dim = d;
    model.weights.assign(kNumClasses * d, 0.0);
    model.l2_strength = config.l2_strength;

    if (std::all_of(y.begin(), y.end(), [&](Label l) { return l == y.front(); })) {
        // Put kDegenerateConfidence on the observed class, split the rest.
        const double logit = std::log(kDegenerateConfidence / ((1.0 - kDegenerateConfidence) / 2.0));
        model.bias[class_index(y.front())] = logit;
        model.status = TrainStatus::DegenerateSingleClass;
        return model;
    }

    LogisticObjective objective(x, y, sample_weights(y, config.class_weighting), config.l2_strength);
    const std::size_t p = objective.num_params();
    std::vector<double> params(p, 0.0), grad(p), trial(p), trial_grad(p);

    double loss = objective.value_and_gradient(params, grad);
    model.loss_history.push_back(loss);
    double step = config.learning_rate;
    model.status = TrainStatus::MaxIterations;

    for (int it = 0; it < config.max_iterations; ++it) {
        const double gnorm = norm2(grad);
        model.gradient_norm = gnorm;
        if (gnorm < config.gradient_tolerance) {
            model.status = TrainStatus::Converged;
            break;
        }
        double trial_loss;
        if (config.line_search) {
            // Armijo backtracking; a successful step lets the next trial grow.
            for (;;) {
                for (std::size_t k = 0; k < p; ++k) trial[k] = params[k] - step * grad[k];
                trial_loss = objective.value_and_gradient(trial, trial_grad);
                if (trial_loss <= loss - 1e-4 * step * gnorm * gnorm) break;
                step *= 0.5;
                if (step < 1e-16) break;
            }
            if (step < 1e-16) break;
            step *= 2.0;
        } else {
            for (std::size_t k = 0; k < p; ++k) trial[k] = params[k] - step * grad[k];
            trial_loss = objective.value_and_gradient(trial, trial_grad);
        }
        params.swap(trial);
        grad.swap(trial_grad);
        loss = trial_loss;
        model.loss_history.push_back(loss);
        model.iterations = it + 1;
    }
    model.gradient_norm = norm2(grad);
    if (model.gradient_norm < config.gradient_tolerance) model.status = TrainStatus::Converged;

    std::copy(params.begin(), params.begin() + static_cast<long>(kNumClasses * d), model.weights.begin());
    for (std::size_t c = 0; c < kNumClasses; ++c) model.bias[c] = params[kNumClasses * d + c];
    return model;
}

}  // namespace llmdetect
