#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>
#include <stdexcept>

#include "cli.hpp"
#include "llmdetect/classifiers.hpp"
#include "llmdetect/corpus.hpp"
#include "llmdetect/evaluation.hpp"
#include "llmdetect/outcomes.hpp"
#include "llmdetect/stylometry.hpp"

namespace py = pybind11;
using namespace llmdetect;

namespace {

Label to_label(double code) {
    const auto l = label_from_code(code);
    if (!l) throw py::value_error("label code must be 0, 0.5 or 1");
    return *l;
}

std::vector<Label> to_labels(const std::vector<double>& codes) {
    std::vector<Label> out;
    out.reserve(codes.size());
    for (double c : codes) out.push_back(to_label(c));
    return out;
}

std::vector<double> to_codes(const std::vector<Label>& labels) {
    std::vector<double> out;
    out.reserve(labels.size());
    for (Label l : labels) out.push_back(numeric_code(l));
    return out;
}

CorpusFormat format_of(const std::string& s) {
    const auto f = parse_corpus_format(s);
    if (!f) throw py::value_error("format must be csv or jsonl");
    return *f;
}

py::dict row_dict(const LabeledResponse& r) {
    py::dict d;
    d["response_id"] = r.response_id;
    d["learner_id"] = r.learner_id;
    d["lesson_id"] = r.lesson_id;
    d["item_id"] = r.item_id;
    d["text"] = r.text;
    d["coder_a"] = r.coder_a ? py::cast(numeric_code(*r.coder_a)) : py::none();
    d["coder_b"] = r.coder_b ? py::cast(numeric_code(*r.coder_b)) : py::none();
    d["consensus"] = numeric_code(r.consensus);
    d["mcq_correct"] = r.mcq_correct ? py::cast(*r.mcq_correct) : py::none();
    return d;
}

ModelKind kind_of(const std::string& s) {
    const auto k = parse_model_kind(s);
    if (!k) throw py::value_error("model must be logistic or forest");
    return *k;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Native core of llmdetect";

    m.def("load_corpus", [](const std::string& path, const std::string& format) {
        const Corpus c = load_corpus(path, format_of(format));
        py::list rows;
        for (const auto& r : c) rows.append(row_dict(r));
        return rows;
    }, py::arg("path"), py::arg("format") = "csv");

    m.def("per_class_kappa", [](const std::string& path, const std::string& format) {
        const Corpus c = load_corpus(path, format_of(format));
        py::dict out;
        for (const auto& row : per_class_kappa(c))
            out[py::str(std::string(to_token(row.target)))] = row.kappa ? py::cast(*row.kappa) : py::none();
        return out;
    }, py::arg("path"), py::arg("format") = "csv");

    m.def("cohens_kappa", [](const std::vector<double>& a, const std::vector<double>& b, double target) {
        const auto la = to_labels(a), lb = to_labels(b);
        try {
            return py::cast(cohens_kappa_binary(la, lb, to_label(target)));
        } catch (const UndefinedKappa&) {
            return py::object(py::none());
        }
    }, py::arg("a"), py::arg("b"), py::arg("target"));

    m.def("learner_split", [](const std::string& path, double ratio, std::uint64_t seed, const std::string& format) {
        const SplitResult s = learner_level_split(load_corpus(path, format_of(format)), ratio, seed);
        std::vector<std::string> train, test;
        for (const auto& r : s.train) train.push_back(r.response_id);
        for (const auto& r : s.test) test.push_back(r.response_id);
        return py::make_tuple(train, test);
    }, py::arg("path"), py::arg("ratio") = 0.8, py::arg("seed") = 42, py::arg("format") = "csv");

    m.def("feature_names", [] { return std::vector<std::string>(kFeatureNames.begin(), kFeatureNames.end()); });

    m.def("extract_features", [](const std::string& text) {
        const auto v = extract_features(text).values();
        return std::vector<double>(v.begin(), v.end());
    }, py::arg("text"));

    m.def("train", [](const FeatureMatrix& x, const std::vector<double>& y, const std::string& model,
                      const std::string& config_json) {
        const TrainConfig cfg = train_config_from_json(nlohmann::json::parse(config_json));
        const auto labels = to_labels(y);
        py::gil_scoped_release release;
        return model_to_json(train_model(kind_of(model), x, labels, cfg)).dump();
    }, py::arg("features"), py::arg("labels"), py::arg("model") = "logistic", py::arg("config_json") = "{}");

    m.def("predict", [](const std::string& model_json, const FeatureMatrix& x) {
        const TrainedModel model = model_from_json(nlohmann::json::parse(model_json));
        return to_codes(model.predict_all(x));
    }, py::arg("model_json"), py::arg("features"));

    m.def("classification_report", [](const std::vector<double>& y_true, const std::vector<double>& y_pred) {
        const auto t = to_labels(y_true), p = to_labels(y_pred);
        if (t.size() != p.size()) throw py::value_error("label sequences differ in length");
        return report_to_json(report(t, p)).dump();
    }, py::arg("y_true"), py::arg("y_pred"));

    m.def("fit_glmm", [](const std::vector<std::tuple<std::string, std::string, bool, bool>>& rows) {
        std::vector<OutcomeRecord> records;
        records.reserve(rows.size());
        for (const auto& [learner, item, flagged, correct] : rows) records.push_back({learner, item, flagged, correct});
        MixedModelFit fit;
        {
            py::gil_scoped_release release;
            fit = fit_glmm(records);
        }
        if (!fit.converged) return fit_to_json(fit, nullptr).dump();
        const EffectSummary s = effect_summary(fit);
        return fit_to_json(fit, &s).dump();
    }, py::arg("records"));

    m.def("run_cli", [](const std::vector<std::string>& args) {
        std::vector<const char*> argv{"llmdetect"};
        for (const auto& a : args) argv.push_back(a.c_str());
        std::ostringstream out, err;
        int code;
        {
            py::gil_scoped_release release;
            code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
    }, py::arg("args"));
}
