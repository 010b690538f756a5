#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "llmdetect/classifiers.hpp"
#include "llmdetect/corpus.hpp"
#include "llmdetect/csv.hpp"
#include "llmdetect/errors.hpp"
#include "llmdetect/evaluation.hpp"
#include "llmdetect/gateway.hpp"
#include "llmdetect/outcomes.hpp"
#include "llmdetect/stylometry.hpp"

namespace llmdetect::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kToolVersion = "0.1.0";

struct RunConfig {
    std::string subcommand;
    fs::path input;
    fs::path out = "runs";
    CorpusFormat format = CorpusFormat::Csv;
    std::uint64_t seed = 42;
    double ratio = 0.8;
    std::size_t folds = 5;
    std::string model = "auto";
    std::string detector = "local";
    fs::path fixtures;
    fs::path markers;
    fs::path model_file;
    fs::path verdicts;
    fs::path prompt;
    TrainConfig train;
    DetectorConfig commercial;
    DetectorConfig judge;
};

/// Values given on the command line; unset members fall through to the
/// config file and then to the defaults.
struct Flags {
    std::string input, out, format, model, detector, fixtures, markers, config, model_file, verdicts, prompt;
    std::uint64_t seed = 0;
    double ratio = 0;
    std::size_t folds = 0;
    CLI::Option* seed_opt = nullptr;
    CLI::Option* ratio_opt = nullptr;
    CLI::Option* folds_opt = nullptr;
};

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("cannot open '" + p.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream o(p, std::ios::binary | std::ios::trunc);
    if (!o) throw DataError("cannot write '" + p.string() + "'");
    o << content;
}

CorpusFormat format_from(const std::string& s) {
    auto f = parse_corpus_format(s);
    if (!f) throw ConfigError("unknown format '" + s + "' (expected csv or jsonl)");
    return *f;
}

CorpusFormat guess_format(const fs::path& p, CorpusFormat fallback) {
    const auto ext = p.extension().string();
    if (ext == ".jsonl") return CorpusFormat::Jsonl;
    if (ext == ".csv") return CorpusFormat::Csv;
    return fallback;
}

void apply_config_file(RunConfig& rc, const fs::path& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + e.what());
    } catch (const DataError& e) {
        throw ConfigError(e.what());
    }
    if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
    try {
        if (j.contains("input")) rc.input = j["input"].get<std::string>();
        if (j.contains("out")) rc.out = j["out"].get<std::string>();
        if (j.contains("format")) rc.format = format_from(j["format"].get<std::string>());
        if (j.contains("seed")) rc.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("ratio")) rc.ratio = j["ratio"].get<double>();
        if (j.contains("folds")) rc.folds = j["folds"].get<std::size_t>();
        if (j.contains("model")) rc.model = j["model"].get<std::string>();
        if (j.contains("detector")) rc.detector = j["detector"].get<std::string>();
        if (j.contains("fixtures")) rc.fixtures = j["fixtures"].get<std::string>();
        if (j.contains("markers")) rc.markers = j["markers"].get<std::string>();
        if (j.contains("model_file")) rc.model_file = j["model_file"].get<std::string>();
        if (j.contains("verdicts")) rc.verdicts = j["verdicts"].get<std::string>();
        if (j.contains("prompt")) rc.prompt = j["prompt"].get<std::string>();
        if (j.contains("train")) rc.train = train_config_from_json(j["train"], rc.train);
        if (j.contains("detectors")) {
            const auto& d = j["detectors"];
            if (d.contains("commercial")) rc.commercial = detector_config_from_json(d["commercial"], rc.commercial);
            if (d.contains("judge")) rc.judge = detector_config_from_json(d["judge"], rc.judge);
        }
    } catch (const json::exception& e) {
        throw ConfigError("invalid config file '" + path.string() + "': " + e.what());
    }
}

RunConfig resolve(const std::string& sub, const Flags& f) {
    RunConfig rc;
    rc.subcommand = sub;
    rc.commercial.kind = ProviderKind::CommercialDetector;
    rc.judge.kind = ProviderKind::LlmJudge;
    if (!f.config.empty()) apply_config_file(rc, f.config);
    if (!f.input.empty()) rc.input = f.input;
    if (!f.out.empty()) rc.out = f.out;
    if (!f.format.empty()) rc.format = format_from(f.format);
    else if (!rc.input.empty()) rc.format = guess_format(rc.input, rc.format);
    if (f.seed_opt && f.seed_opt->count()) rc.seed = f.seed;
    if (f.ratio_opt && f.ratio_opt->count()) rc.ratio = f.ratio;
    if (f.folds_opt && f.folds_opt->count()) rc.folds = f.folds;
    if (!f.model.empty()) rc.model = f.model;
    if (!f.detector.empty()) rc.detector = f.detector;
    if (!f.fixtures.empty()) rc.fixtures = f.fixtures;
    if (!f.markers.empty()) rc.markers = f.markers;
    if (!f.model_file.empty()) rc.model_file = f.model_file;
    if (!f.verdicts.empty()) rc.verdicts = f.verdicts;
    if (!f.prompt.empty()) rc.prompt = f.prompt;
    rc.train.seed = rc.seed;
    rc.train.validate();
    if (!(rc.ratio > 0 && rc.ratio <= 1)) throw ConfigError("--ratio must lie in (0, 1]");
    if (rc.model != "auto" && rc.model != "logistic" && rc.model != "forest")
        throw ConfigError("--model must be logistic, forest or auto");
    if (rc.detector != "local" && rc.detector != "commercial" && rc.detector != "judge" && rc.detector != "mock")
        throw ConfigError("--detector must be local, commercial, judge or mock");
    return rc;
}

json file_ref(const std::string& role, const fs::path& p) {
    return {{"role", role}, {"name", p.filename().string()}, {"sha256", sha256_hex(read_file(p))}};
}

json fixtures_ref(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw DataError("fixtures directory '" + dir.string() + "' does not exist");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::string acc;
    for (const auto& p : files) acc += p.filename().string() + '\0' + read_file(p) + '\0';
    return {{"role", "fixtures"}, {"entries", files.size()}, {"sha256", sha256_hex(acc)}};
}

json detector_json(DetectorConfig c) {
    json j = to_json(c);
    j.erase("cache_dir");  // recorded through the fixtures digest instead
    return j;
}

/// The resolved configuration. File inputs are recorded by name and
/// content hash so the record does not depend on where runs live.
json resolved_json(const RunConfig& rc, const std::vector<json>& inputs) {
    json j = {{"format", "llmdetect.run"},
              {"version", 1},
              {"tool_version", kToolVersion},
              {"subcommand", rc.subcommand},
              {"seed", rc.seed},
              {"inputs", inputs}};
    const auto& s = rc.subcommand;
    if (s == "ingest" || s == "irr" || s == "split" || s == "features" || s == "train" || s == "evaluate" ||
        s == "compare" || s == "outcomes")
        j["input_format"] = to_string(rc.format);
    if (s == "split") j["ratio"] = rc.ratio;
    if (s == "train") {
        j["folds"] = rc.folds;
        j["model"] = rc.model;
        j["train"] = to_json(rc.train);
    }
    if (s == "evaluate") j["detector"] = rc.detector;
    if (s == "compare") j["detector"] = rc.detector;
    const bool uses_gateway =
        (s == "evaluate" && (rc.detector == "commercial" || rc.detector == "judge" || rc.detector == "mock")) ||
        s == "compare";
    if (uses_gateway) {
        j["detectors"] = {{"commercial", detector_json(rc.commercial)}, {"judge", detector_json(rc.judge)}};
    }
    return j;
}

struct RunDir {
    fs::path path;
};

/// Creates `<out>/<subcommand>-<id>`, where id is derived from the
/// resolved config, and writes config.json into it.
RunDir open_run(const RunConfig& rc, const json& resolved) {
    const std::string text = resolved.dump(2) + "\n";
    const std::string id = sha256_hex(text).substr(0, 12);
    RunDir rd{rc.out / (rc.subcommand + "-" + id)};
    std::error_code ec;
    fs::create_directories(rd.path, ec);
    if (ec) throw DataError("cannot create run directory '" + rd.path.string() + "': " + ec.message());
    write_file(rd.path / "config.json", text);
    return rd;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

StyleConfig style_for(const RunConfig& rc) {
    StyleConfig sc = StyleConfig::defaults();
    if (!rc.markers.empty()) sc.load_markers(rc.markers);
    return sc;
}

void add_marker_ref(const RunConfig& rc, std::vector<json>& inputs) {
    if (!rc.markers.empty()) inputs.push_back(file_ref("markers", rc.markers));
}

Corpus load_input(const RunConfig& rc) {
    if (rc.input.empty()) throw ConfigError("--input is required");
    return load_corpus(rc.input, rc.format);
}

std::string pad(std::string s, std::size_t w, bool left = true) {
    if (s.size() >= w) return s;
    return left ? s + std::string(w - s.size(), ' ') : std::string(w - s.size(), ' ') + s;
}

std::string predictions_csv(const Corpus& corpus, const std::vector<Label>& pred) {
    std::string out = "response_id,label\n";
    for (std::size_t i = 0; i < corpus.size(); ++i)
        out += csv::join_row({corpus[i].response_id, std::string(to_token(pred[i]))}) + "\n";
    return out;
}

void write_report(const fs::path& dir, const ClassificationReport& r, const Corpus& corpus,
                  const std::vector<Label>& pred) {
    write_file(dir / "report.json", dump(report_to_json(r)));
    write_file(dir / "report.txt", render_report(r, ReportFormat::Text));
    write_file(dir / "report.csv", render_report(r, ReportFormat::Csv));
    write_file(dir / "confusion.csv", confusion_csv(r.matrix));
    write_file(dir / "predictions.csv", predictions_csv(corpus, pred));
}

// ---------------------------------------------------------------------------

int cmd_ingest(const RunConfig& rc, std::ostream& out) {
    const Corpus corpus = load_input(rc);
    if (corpus.empty()) throw DataError("'" + rc.input.string() + "' holds no responses");
    const RunDir rd = open_run(rc, resolved_json(rc, {file_ref("input", rc.input)}));
    const auto counts = class_counts(corpus);
    std::size_t with_mcq = 0, both = 0;
    for (const auto& r : corpus) {
        with_mcq += r.mcq_correct.has_value();
        both += r.coder_a && r.coder_b;
    }
    json summary = {{"format", "llmdetect.corpus_summary"},
                    {"version", 1},
                    {"total", corpus.size()},
                    {"learners", corpus.learner_ids().size()},
                    {"with_mcq", with_mcq},
                    {"with_both_coders", both},
                    {"counts", json::object()}};
    std::ostringstream t;
    t << pad("Label", 22) << pad("N", 8, false) << "\n";
    for (Label l : kAllLabels) {
        summary["counts"][std::string(to_token(l))] = counts[class_index(l)];
        t << pad(std::string(display_name(l)), 22) << pad(std::to_string(counts[class_index(l)]), 8, false) << "\n";
    }
    t << pad("Total", 22) << pad(std::to_string(corpus.size()), 8, false) << "\n";
    t << pad("Learners", 22) << pad(std::to_string(corpus.learner_ids().size()), 8, false) << "\n";
    write_corpus_csv(corpus, rd.path / "corpus.csv");
    write_file(rd.path / "summary.json", dump(summary));
    write_file(rd.path / "summary.txt", t.str());
    out << t.str() << "run directory: " << rd.path.string() << "\n";
    return kOk;
}

int cmd_irr(const RunConfig& rc, std::ostream& out) {
    const Corpus corpus = load_input(rc);
    const auto rows = per_class_kappa(corpus);
    if (rows.empty() || rows.front().n_pairs == 0)
        throw DataError("no response carries both coder labels; kappa needs paired ratings");
    const RunDir rd = open_run(rc, resolved_json(rc, {file_ref("input", rc.input)}));
    json j = {{"format", "llmdetect.kappa"}, {"version", 1}, {"classes", json::array()}};
    std::ostringstream t;
    t << pad("Label", 22) << pad("Cohen's kappa", 15, false) << pad("Pairs", 8, false) << "\n";
    for (const auto& r : rows) {
        j["classes"].push_back({{"label", to_token(r.target)},
                                {"kappa", r.kappa ? json(*r.kappa) : json(nullptr)},
                                {"pairs", r.n_pairs}});
        char buf[32];
        if (r.kappa)
            std::snprintf(buf, sizeof buf, "%.3f", *r.kappa);
        else
            std::snprintf(buf, sizeof buf, "undefined");
        t << pad(std::string(display_name(r.target)), 22) << pad(buf, 15, false)
          << pad(std::to_string(r.n_pairs), 8, false) << "\n";
    }
    write_file(rd.path / "kappa.json", dump(j));
    write_file(rd.path / "kappa.txt", t.str());
    out << t.str() << "run directory: " << rd.path.string() << "\n";
    return kOk;
}

int cmd_split(const RunConfig& rc, std::ostream& out) {
    const Corpus corpus = load_input(rc);
    const SplitResult s = learner_level_split(corpus, rc.ratio, rc.seed);
    const RunDir rd = open_run(rc, resolved_json(rc, {file_ref("input", rc.input)}));
    write_corpus_csv(s.train, rd.path / "train.csv");
    write_corpus_csv(s.test, rd.path / "test.csv");
    const json j = {{"format", "llmdetect.split"},
                    {"version", 1},
                    {"seed", s.seed},
                    {"ratio", s.ratio},
                    {"train_learners", s.train_learners},
                    {"test_learners", s.test_learners},
                    {"train_responses", s.train.size()},
                    {"test_responses", s.test.size()}};
    write_file(rd.path / "split.json", dump(j));
    std::ostringstream t;
    t << pad("", 10) << pad("Learners", 10, false) << pad("Responses", 11, false) << "\n";
    t << pad("train", 10) << pad(std::to_string(s.train_learners), 10, false)
      << pad(std::to_string(s.train.size()), 11, false) << "\n";
    t << pad("test", 10) << pad(std::to_string(s.test_learners), 10, false)
      << pad(std::to_string(s.test.size()), 11, false) << "\n";
    write_file(rd.path / "split.txt", t.str());
    out << t.str() << "run directory: " << rd.path.string() << "\n";
    return kOk;
}

int cmd_features(const RunConfig& rc, std::ostream& out) {
    const Corpus corpus = load_input(rc);
    const StyleConfig sc = style_for(rc);
    std::vector<json> inputs{file_ref("input", rc.input)};
    add_marker_ref(rc, inputs);
    const RunDir rd = open_run(rc, resolved_json(rc, inputs));
    const FeatureMatrix m = extract_matrix(corpus, sc);
    write_file(rd.path / "features.csv", feature_matrix_csv(corpus, m));

    // Per-class means as a quick look at which features separate the labels.
    std::array<std::vector<double>, kNumClasses> sums;
    std::array<std::size_t, kNumClasses> n{};
    for (auto& s : sums) s.assign(kNumFeatures, 0.0);
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const auto c = class_index(corpus[i].consensus);
        ++n[c];
        for (std::size_t f = 0; f < kNumFeatures; ++f) sums[c][f] += m[i][f];
    }
    json j = {{"format", "llmdetect.features"}, {"version", 1}, {"rows", corpus.size()}, {"class_means", json::object()}};
    std::ostringstream t;
    t << pad("Feature", 30);
    for (Label l : kAllLabels) t << pad(std::string(to_token(l)), 12, false);
    t << "\n";
    for (Label l : kAllLabels) {
        const auto c = class_index(l);
        json means = json::object();
        for (std::size_t f = 0; f < kNumFeatures; ++f)
            means[std::string(kFeatureNames[f])] = n[c] ? sums[c][f] / static_cast<double>(n[c]) : 0.0;
        j["class_means"][std::string(to_token(l))] = means;
    }
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
        t << pad(std::string(kFeatureNames[f]), 30);
        for (Label l : kAllLabels) {
            const auto c = class_index(l);
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.3f", n[c] ? sums[c][f] / static_cast<double>(n[c]) : 0.0);
            t << pad(buf, 12, false);
        }
        t << "\n";
    }
    write_file(rd.path / "features.json", dump(j));
    write_file(rd.path / "features.txt", t.str());
    out << t.str() << "run directory: " << rd.path.string() << "\n";
    return kOk;
}

int cmd_train(const RunConfig& rc, std::ostream& out) {
    const Corpus corpus = load_input(rc);
    if (corpus.empty()) throw DataError("training corpus is empty");
    const StyleConfig sc = style_for(rc);
    std::vector<json> inputs{file_ref("input", rc.input)};
    add_marker_ref(rc, inputs);

    std::vector<Candidate> candidates;
    if (rc.model == "auto" || rc.model == "logistic") candidates.push_back({ModelKind::Logistic, rc.train});
    if (rc.model == "auto" || rc.model == "forest") candidates.push_back({ModelKind::Forest, rc.train});

    const FeatureMatrix x = extract_matrix(corpus, sc);
    const auto y = corpus.consensus_labels();
    std::vector<std::string> learners;
    for (const auto& r : corpus) learners.push_back(r.learner_id);
    if (rc.folds < 2) throw ConfigError("--folds must be at least 2");
    const CrossValResult cv = cross_validate(x, y, learners, rc.folds, candidates, rc.seed);
    const Candidate& win = cv.best().candidate;
    const TrainedModel model = train_model(win.kind, x, y, win.config);

    const RunDir rd = open_run(rc, resolved_json(rc, inputs));
    json mj = model_to_json(model);
    mj["style"] = {{"llm_markers", sc.llm_markers}, {"first_person", sc.first_person}};
    write_file(rd.path / "model.json", dump(mj));
    write_file(rd.path / "cv.json", dump(cross_val_to_json(cv)));

    std::ostringstream t;
    t << pad("Model", 12) << pad("Accuracy", 18, false) << pad("Weighted F1", 18, false) << "\n";
    for (std::size_t i = 0; i < cv.candidates.size(); ++i) {
        const auto& c = cv.candidates[i];
        char a[48], f[48];
        std::snprintf(a, sizeof a, "%.3f (%.3f)", c.mean_accuracy, c.sd_accuracy);
        std::snprintf(f, sizeof f, "%.3f (%.3f)", c.mean_weighted_f1, c.sd_weighted_f1);
        t << pad(std::string(to_string(c.candidate.kind)) + (i == cv.winner ? " *" : ""), 12) << pad(a, 18, false)
          << pad(f, 18, false) << "\n";
    }
    t << rc.folds << "-fold learner-level cross-validation, mean (sd); * selected\n";
    write_file(rd.path / "cv.txt", t.str());
    out << t.str() << "run directory: " << rd.path.string() << "\n";
    return kOk;
}

TrainedModel load_model(const fs::path& p, StyleConfig& sc) {
    json j;
    try {
        j = json::parse(read_file(p));
    } catch (const json::parse_error& e) {
        throw DataError("model file '" + p.string() + "' is not valid JSON: " + e.what());
    }
    if (j.contains("style")) {
        try {
            sc.llm_markers = j["style"].at("llm_markers").get<std::vector<std::string>>();
            sc.first_person = j["style"].at("first_person").get<std::vector<std::string>>();
        } catch (const json::exception& e) {
            throw DataError(std::string("malformed style block in model file: ") + e.what());
        }
    }
    return model_from_json(j);
}

std::vector<Label> local_predictions(const Corpus& corpus, const RunConfig& rc) {
    if (rc.model_file.empty()) throw ConfigError("--model-file is required for the local detector");
    StyleConfig sc = style_for(rc);
    const TrainedModel model = load_model(rc.model_file, sc);
    return model.predict_all(extract_matrix(corpus, sc));
}

std::string mock_reply(const std::string& text, bool judge) {
    // Stable pseudo-verdict from the text hash.
    const int v = std::stoi(sha256_hex(text).substr(0, 2), nullptr, 16) % 3;
    if (judge) return v == 0 ? "0" : v == 1 ? "0.5" : "1";
    return v == 0 ? "Human" : v == 1 ? "Mixed" : "AI";
}

struct GatewayRun {
    std::vector<Label> predictions;
    std::vector<std::pair<std::string, std::string>> failures;
};

GatewayRun run_gateway(const Corpus& corpus, DetectorConfig cfg, bool mock, const RunConfig& rc) {
    std::shared_ptr<HttpClient> http;
    if (mock) {
        cfg.endpoint = cfg.kind == ProviderKind::LlmJudge ? "mock://judge" : "mock://commercial";
        cfg.offline = false;
        cfg.credential_env.clear();
        cfg.cache_dir.clear();
        http = make_mock_http_client(mock_reply);
    } else {
        if (!rc.fixtures.empty()) cfg.cache_dir = rc.fixtures;
        // Recorded fixtures replay offline unless the config asks for live calls.
        if (cfg.endpoint.empty()) cfg.offline = true;
        if (cfg.offline && cfg.cache_dir.empty())
            throw ConfigError(std::string(to_string(cfg.kind)) +
                              " detector needs --fixtures or a configured endpoint");
    }
    JudgePrompt prompt = rc.prompt.empty() ? JudgePrompt::default_prompt() : JudgePrompt::from_file(rc.prompt);
    DetectorGateway gw(cfg, http, prompt);
    BatchResult br = batch_classify(gw, corpus);
    GatewayRun out;
    out.failures = br.failures;
    for (const auto& r : corpus) {
        auto it = br.verdicts.find(r.response_id);
        out.predictions.push_back(it == br.verdicts.end() ? Label::Uncertain : it->second.label);
    }
    return out;
}

std::vector<Label> verdict_predictions(const Corpus& corpus, const fs::path& path) {
    const auto verdicts = load_verdicts_csv(path);
    std::vector<Label> out;
    for (const auto& r : corpus) {
        auto it = verdicts.find(r.response_id);
        if (it == verdicts.end()) throw DataError("no prediction for response '" + r.response_id + "'");
        out.push_back(it->second);
    }
    return out;
}

int report_failures(const fs::path& dir, const std::vector<std::pair<std::string, std::string>>& failures,
                    std::ostream& err) {
    if (failures.empty()) return kOk;
    json j = json::array();
    for (const auto& [id, msg] : failures) j.push_back({{"response_id", id}, {"error", msg}});
    write_file(dir / "failures.json", dump(j));
    err << "error: " << failures.size() << " detector call(s) failed; first: " << failures.front().first << ": "
        << failures.front().second << "\n";
    return kServiceError;
}

int cmd_evaluate(const RunConfig& rc, std::ostream& out, std::ostream& err) {
    const Corpus corpus = load_input(rc);
    if (corpus.empty()) throw DataError("evaluation corpus is empty");
    std::vector<json> inputs{file_ref("input", rc.input)};
    std::vector<Label> pred;
    std::vector<std::pair<std::string, std::string>> failures;
    if (!rc.verdicts.empty()) {
        inputs.push_back(file_ref("verdicts", rc.verdicts));
        pred = verdict_predictions(corpus, rc.verdicts);
    } else if (rc.detector == "local") {
        if (rc.model_file.empty()) throw ConfigError("--model-file is required for the local detector");
        inputs.push_back(file_ref("model", rc.model_file));
        add_marker_ref(rc, inputs);
        pred = local_predictions(corpus, rc);
    } else {
        if (!rc.fixtures.empty()) inputs.push_back(fixtures_ref(rc.fixtures));
        if (!rc.prompt.empty()) inputs.push_back(file_ref("prompt", rc.prompt));
        const bool mock = rc.detector == "mock";
        const DetectorConfig& cfg = rc.detector == "judge" ? rc.judge : rc.commercial;
        auto g = run_gateway(corpus, cfg, mock, rc);
        pred = std::move(g.predictions);
        failures = std::move(g.failures);
    }
    const RunDir rd = open_run(rc, resolved_json(rc, inputs));
    const auto truth = corpus.consensus_labels();
    const ClassificationReport r = report(truth, pred);
    write_report(rd.path, r, corpus, pred);
    out << render_report(r, ReportFormat::Text) << "run directory: " << rd.path.string() << "\n";
    return report_failures(rd.path, failures, err);
}

int cmd_compare(const RunConfig& rc, std::ostream& out, std::ostream& err) {
    const Corpus corpus = load_input(rc);
    if (corpus.empty()) throw DataError("comparison corpus is empty");
    std::vector<json> inputs{file_ref("input", rc.input)};
    if (rc.model_file.empty()) throw ConfigError("--model-file is required for compare");
    inputs.push_back(file_ref("model", rc.model_file));
    add_marker_ref(rc, inputs);
    const bool mock = rc.detector == "mock";
    if (!mock && !rc.fixtures.empty()) inputs.push_back(fixtures_ref(rc.fixtures));
    if (!rc.prompt.empty()) inputs.push_back(file_ref("prompt", rc.prompt));

    struct System {
        std::string name;
        std::vector<Label> pred;
    };
    std::vector<System> systems;
    systems.push_back({"local", local_predictions(corpus, rc)});
    std::vector<std::pair<std::string, std::string>> failures;
    for (const auto* cfg : {&rc.commercial, &rc.judge}) {
        auto g = run_gateway(corpus, *cfg, mock, rc);
        for (auto& f : g.failures) failures.emplace_back(std::string(to_string(cfg->kind)) + ":" + f.first, f.second);
        systems.push_back({cfg == &rc.commercial ? "commercial" : "judge", std::move(g.predictions)});
    }

    const RunDir rd = open_run(rc, resolved_json(rc, inputs));
    const auto truth = corpus.consensus_labels();
    json summary = {{"format", "llmdetect.comparison"}, {"version", 1}, {"responses", corpus.size()}, {"systems", json::array()}};
    std::ostringstream t;
    t << pad("System", 12) << pad("Accuracy", 10, false) << pad("Macro F1", 10, false)
      << pad("Weighted F1", 13, false) << "\n";
    for (const auto& s : systems) {
        const ClassificationReport r = report(truth, s.pred);
        fs::create_directories(rd.path / s.name);
        write_report(rd.path / s.name, r, corpus, s.pred);
        summary["systems"].push_back({{"name", s.name},
                                      {"accuracy", r.accuracy},
                                      {"macro_f1", r.macro.f1},
                                      {"weighted_f1", r.weighted.f1}});
        t << pad(s.name, 12) << pad(round2(r.accuracy), 10, false) << pad(round2(r.macro.f1), 10, false)
          << pad(round2(r.weighted.f1), 13, false) << "\n";
    }
    write_file(rd.path / "comparison.json", dump(summary));
    write_file(rd.path / "comparison.txt", t.str());
    out << t.str() << "run directory: " << rd.path.string() << "\n";
    return report_failures(rd.path, failures, err);
}

int cmd_outcomes(const RunConfig& rc, std::ostream& out, std::ostream& err) {
    const Corpus corpus = load_input(rc);
    if (rc.verdicts.empty()) throw ConfigError("--verdicts is required for outcomes");
    const auto verdicts = load_verdicts_csv(rc.verdicts);
    const JoinResult joined = join_outcomes(corpus, verdicts);
    const MixedModelFit fit = fit_glmm(joined.records);
    const RunDir rd = open_run(rc, resolved_json(rc, {file_ref("input", rc.input), file_ref("verdicts", rc.verdicts)}));
    if (!fit.converged) {
        json j = fit_to_json(fit, nullptr);
        j["skipped_without_mcq"] = joined.skipped_without_mcq;
        write_file(rd.path / "glmm.json", dump(j));
        err << "error: mixed model did not converge; see " << (rd.path / "glmm.json").string() << "\n";
        return kDataError;
    }
    const EffectSummary s = effect_summary(fit);
    json j = fit_to_json(fit, &s);
    j["skipped_without_mcq"] = joined.skipped_without_mcq;
    const std::string text = render_effect_text(fit, s);
    write_file(rd.path / "glmm.json", dump(j));
    write_file(rd.path / "glmm.txt", text);
    out << text << "run directory: " << rd.path.string() << "\n";
    return kOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Stylometric and detector-based authorship analysis of learner responses", "llmdetect"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    Flags f;
    struct Spec {
        const char* name;
        const char* help;
    };
    const Spec specs[] = {
        {"ingest", "Load a corpus and print label counts"},
        {"irr", "Per-class Cohen's kappa between the two coders"},
        {"split", "Learner-level train/test split"},
        {"features", "Extract the stylometric feature matrix"},
        {"train", "Cross-validated model selection and final fit"},
        {"evaluate", "Classification report for a model, detector or prediction file"},
        {"compare", "Local model and both detectors side by side on one split"},
        {"outcomes", "Mixed-effects model of MCQ correctness on flagged responses"},
    };
    std::vector<CLI::App*> subs;
    for (const auto& s : specs) {
        CLI::App* sub = app.add_subcommand(s.name, s.help);
        sub->add_option("--input", f.input, "Corpus file (CSV or JSONL)");
        sub->add_option("--format", f.format, "Corpus format: csv or jsonl (default from extension)");
        sub->add_option("--out", f.out, "Output root directory (default: runs)");
        sub->add_option("--config", f.config, "JSON config file; flags take precedence");
        const std::string name = s.name;
        if (name == "split" || name == "train")
            sub->add_option("--seed", f.seed, "Random seed (default 42)");
        if (name == "split") sub->add_option("--ratio", f.ratio, "Training share of learners (default 0.8)");
        if (name == "train") {
            sub->add_option("--folds", f.folds, "Cross-validation folds (default 5)");
            sub->add_option("--model", f.model, "logistic, forest or auto (default auto)");
        }
        if (name == "features" || name == "train" || name == "evaluate" || name == "compare")
            sub->add_option("--markers", f.markers, "LLM marker phrase list, one per line");
        if (name == "evaluate" || name == "compare") {
            sub->add_option("--model-file", f.model_file, "model.json written by train");
            sub->add_option("--detector", f.detector, "local, commercial, judge or mock");
            sub->add_option("--fixtures", f.fixtures, "Recorded verdict directory (replayed offline)");
            sub->add_option("--prompt", f.prompt, "Judge system prompt file");
        }
        if (name == "evaluate" || name == "outcomes")
            sub->add_option("--verdicts", f.verdicts, "CSV with response_id,label");
        subs.push_back(sub);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    CLI::App* chosen = nullptr;
    for (auto* s : subs)
        if (s->parsed()) chosen = s;
    const std::string sub = chosen->get_name();
    auto count = [&](const char* flag) -> CLI::Option* {
        try {
            return chosen->get_option(flag);
        } catch (const CLI::OptionNotFound&) {
            return nullptr;
        }
    };
    f.seed_opt = count("--seed");
    f.ratio_opt = count("--ratio");
    f.folds_opt = count("--folds");

    try {
        const RunConfig rc = resolve(sub, f);
        if (sub == "ingest") return cmd_ingest(rc, out);
        if (sub == "irr") return cmd_irr(rc, out);
        if (sub == "split") return cmd_split(rc, out);
        if (sub == "features") return cmd_features(rc, out);
        if (sub == "train") return cmd_train(rc, out);
        if (sub == "evaluate") return cmd_evaluate(rc, out, err);
        if (sub == "compare") return cmd_compare(rc, out, err);
        if (sub == "outcomes") return cmd_outcomes(rc, out, err);
        return kUsage;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const GatewayError& e) {
        err << "error: " << e.what() << "\n";
        return kServiceError;
    } catch (const DataError& e) {
        err << "error: " << e.what() << "\n";
        return kDataError;
    } catch (const UndefinedKappa& e) {
        err << "error: " << e.what() << "\n";
        return kDataError;
    } catch (const NotConverged& e) {
        err << "error: " << e.what() << "\n";
        return kDataError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kDataError;
    }
}

}  // namespace llmdetect::cli
