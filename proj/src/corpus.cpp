#include "llmdetect/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "llmdetect/csv.hpp"
#include "llmdetect/rng.hpp"

namespace llmdetect {

namespace {

using json = nlohmann::json;

constexpr std::array<std::string_view, 9> kColumns{
    "response_id", "learner_id", "lesson_id", "item_id", "text",
    "coder_a",     "coder_b",    "consensus", "mcq_correct"};

std::optional<Label> label_field(const std::string& raw, const std::string& path,
                                 std::size_t line, std::string_view column) {
    if (raw.find_first_not_of(" \t") == std::string::npos) return std::nullopt;
    auto l = parse_label(raw);
    if (!l)
        throw ParseError(path, line,
                         "unknown label token '" + raw + "' in column " + std::string(column));
    return l;
}

std::optional<bool> mcq_field(const std::string& raw, const std::string& path, std::size_t line) {
    if (raw.empty()) return std::nullopt;
    if (raw == "1" || raw == "true" || raw == "TRUE" || raw == "True") return true;
    if (raw == "0" || raw == "false" || raw == "FALSE" || raw == "False") return false;
    throw ParseError(path, line, "invalid mcq_correct value '" + raw + "'");
}

/// Derives or checks the consensus label.
void settle_consensus(LabeledResponse& r, std::optional<Label> given, const std::string& path,
                      std::size_t line) {
    const bool both = r.coder_a && r.coder_b;
    if (both) {
        const Label derived = consensus_label(*r.coder_a, *r.coder_b);
        if (given && *given != derived)
            throw ParseError(path, line,
                             "consensus " + std::string(to_token(*given)) +
                                 " contradicts coder labels (expected " +
                                 std::string(to_token(derived)) + ")");
        r.consensus = derived;
        return;
    }
    if (!given)
        throw ParseError(path, line, "record has neither a consensus label nor both coder labels");
    r.consensus = *given;
}

void require_keys(const LabeledResponse& r, const std::string& path, std::size_t line) {
    if (r.response_id.empty()) throw ParseError(path, line, "empty response_id");
    if (r.learner_id.empty()) throw ParseError(path, line, "empty learner_id");
}

std::vector<LabeledResponse> read_csv(std::istream& in, const std::string& path,
                                      std::vector<std::size_t>& lines) {
    csv::Reader reader(in);
    std::optional<csv::Record> header;
    try {
        header = reader.next();
    } catch (const std::runtime_error& e) {
        throw ParseError(path, reader.line(), e.what());
    }
    if (!header || (header->fields.size() == 1 && header->fields[0].empty()))
        throw ParseError(path, 1, "missing header row");

    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header->fields.size(); ++i) {
        std::string name = header->fields[i];
        if (i == 0 && name.rfind("\xEF\xBB\xBF", 0) == 0) name.erase(0, 3);
        col.emplace(name, i);
    }
    for (std::string_view required : {"response_id", "learner_id", "text"})
        if (!col.contains(std::string(required)))
            throw ParseError(path, 1, "missing required column '" + std::string(required) + "'");
    if (!col.contains("consensus") && !(col.contains("coder_a") && col.contains("coder_b")))
        throw ParseError(path, 1, "need a consensus column or both coder_a and coder_b");

    std::vector<LabeledResponse> rows;
    for (;;) {
        std::optional<csv::Record> rec;
        try {
            rec = reader.next();
        } catch (const std::runtime_error& e) {
            throw ParseError(path, reader.line(), e.what());
        }
        if (!rec) break;
        if (rec->fields.size() == 1 && rec->fields[0].empty()) continue;
        if (rec->fields.size() != header->fields.size())
            throw ParseError(path, rec->line,
                             "expected " + std::to_string(header->fields.size()) + " fields, got " +
                                 std::to_string(rec->fields.size()));
        auto get = [&](std::string_view name) -> const std::string& {
            static const std::string empty;
            auto it = col.find(std::string(name));
            return it == col.end() ? empty : rec->fields[it->second];
        };
        LabeledResponse r;
        r.response_id = get("response_id");
        r.learner_id = get("learner_id");
        r.lesson_id = get("lesson_id");
        r.item_id = get("item_id");
        r.text = get("text");
        require_keys(r, path, rec->line);
        r.coder_a = label_field(get("coder_a"), path, rec->line, "coder_a");
        r.coder_b = label_field(get("coder_b"), path, rec->line, "coder_b");
        auto given = label_field(get("consensus"), path, rec->line, "consensus");
        settle_consensus(r, given, path, rec->line);
        r.mcq_correct = mcq_field(get("mcq_correct"), path, rec->line);
        rows.push_back(std::move(r));
        lines.push_back(rec->line);
    }
    return rows;
}

std::string json_string(const json& obj, std::string_view key, const std::string& path,
                        std::size_t line) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return {};
    if (it->is_string()) return it->get<std::string>();
    if (it->is_number_integer()) return std::to_string(it->get<long long>());
    throw ParseError(path, line, "key '" + std::string(key) + "' must be a string");
}

std::optional<Label> json_label(const json& obj, std::string_view key, const std::string& path,
                                std::size_t line) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (it->is_number()) {
        auto l = label_from_code(it->get<double>());
        if (!l) throw ParseError(path, line, "unknown label token '" + it->dump() + "'");
        return l;
    }
    if (it->is_string()) return label_field(it->get<std::string>(), path, line, key);
    throw ParseError(path, line, "unknown label token '" + it->dump() + "'");
}

std::vector<LabeledResponse> read_jsonl(std::istream& in, const std::string& path,
                                        std::vector<std::size_t>& lines) {
    std::vector<LabeledResponse> rows;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (!text.empty() && text.back() == '\r') text.pop_back();
        if (text.find_first_not_of(" \t") == std::string::npos) continue;
        json obj;
        try {
            obj = json::parse(text);
        } catch (const json::parse_error& e) {
            throw ParseError(path, line, std::string("malformed JSON: ") + e.what());
        }
        if (!obj.is_object()) throw ParseError(path, line, "expected a JSON object");
        for (std::string_view required : {"response_id", "learner_id", "text"})
            if (!obj.contains(required))
                throw ParseError(path, line, "missing required key '" + std::string(required) + "'");

        LabeledResponse r;
        r.response_id = json_string(obj, "response_id", path, line);
        r.learner_id = json_string(obj, "learner_id", path, line);
        r.lesson_id = json_string(obj, "lesson_id", path, line);
        r.item_id = json_string(obj, "item_id", path, line);
        r.text = json_string(obj, "text", path, line);
        require_keys(r, path, line);
        r.coder_a = json_label(obj, "coder_a", path, line);
        r.coder_b = json_label(obj, "coder_b", path, line);
        settle_consensus(r, json_label(obj, "consensus", path, line), path, line);
        if (auto it = obj.find("mcq_correct"); it != obj.end() && !it->is_null()) {
            if (it->is_boolean())
                r.mcq_correct = it->get<bool>();
            else if (it->is_number_integer() && (*it == 0 || *it == 1))
                r.mcq_correct = it->get<int>() == 1;
            else if (it->is_string())
                r.mcq_correct = mcq_field(it->get<std::string>(), path, line);
            else
                throw ParseError(path, line, "invalid mcq_correct value " + it->dump());
        }
        rows.push_back(std::move(r));
        lines.push_back(line);
    }
    return rows;
}

}  // namespace

std::string_view to_string(CorpusFormat f) { return f == CorpusFormat::Csv ? "csv" : "jsonl"; }

std::optional<CorpusFormat> parse_corpus_format(std::string_view s) {
    if (s == "csv") return CorpusFormat::Csv;
    if (s == "jsonl") return CorpusFormat::Jsonl;
    return std::nullopt;
}

Corpus::Corpus(std::vector<LabeledResponse> responses, Provenance provenance)
    : responses_(std::move(responses)), provenance_(std::move(provenance)) {
    std::unordered_set<std::string_view> seen;
    for (const auto& r : responses_) {
        if (r.learner_id.empty())
            throw DataError("response '" + r.response_id + "' has an empty learner_id");
        if (!seen.insert(r.response_id).second)
            throw DataError("duplicate response_id '" + r.response_id + "'");
    }
}

std::vector<Label> Corpus::consensus_labels() const {
    std::vector<Label> out;
    out.reserve(responses_.size());
    for (const auto& r : responses_) out.push_back(r.consensus);
    return out;
}

std::vector<std::string> Corpus::learner_ids() const {
    std::vector<std::string> out;
    std::unordered_set<std::string_view> seen;
    for (const auto& r : responses_)
        if (seen.insert(r.learner_id).second) out.push_back(r.learner_id);
    return out;
}

Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open corpus file '" + path.string() + "'");
    const std::string name = path.string();

    std::vector<std::size_t> lines;
    auto rows = format == CorpusFormat::Csv ? read_csv(in, name, lines) : read_jsonl(in, name, lines);

    std::unordered_map<std::string_view, std::size_t> first_line;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto [it, fresh] = first_line.emplace(rows[i].response_id, lines[i]);
        if (!fresh)
            throw ParseError(name, lines[i],
                             "duplicate response_id '" + rows[i].response_id +
                                 "' (first seen on line " + std::to_string(it->second) + ")");
    }
    return Corpus(std::move(rows), Provenance{name, format});
}

void write_corpus_csv(const Corpus& corpus, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    std::vector<std::string> header(kColumns.begin(), kColumns.end());
    out << csv::join_row(header) << '\n';
    auto lab = [](const std::optional<Label>& l) {
        return l ? std::string(to_token(*l)) : std::string();
    };
    for (const auto& r : corpus) {
        out << csv::join_row({r.response_id, r.learner_id, r.lesson_id, r.item_id, r.text,
                              lab(r.coder_a), lab(r.coder_b), std::string(to_token(r.consensus)),
                              r.mcq_correct ? (*r.mcq_correct ? "1" : "0") : ""})
            << '\n';
    }
    if (!out) throw DataError("failed writing '" + path.string() + "'");
}

ClassCounts class_counts(const Corpus& corpus) {
    ClassCounts counts{};
    for (const auto& r : corpus) ++counts[class_index(r.consensus)];
    return counts;
}

double cohens_kappa_binary(std::span<const Label> a, std::span<const Label> b, Label target) {
    if (a.size() != b.size()) throw std::invalid_argument("kappa: sequences differ in length");
    if (a.size() < 2) throw std::invalid_argument("kappa: need at least two paired ratings");

    std::size_t both = 0, neither = 0, a_pos = 0, b_pos = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const bool pa = a[i] == target;
        const bool pb = b[i] == target;
        a_pos += pa;
        b_pos += pb;
        both += pa && pb;
        neither += !pa && !pb;
    }
    const auto n = static_cast<double>(a.size());
    const double p_o = static_cast<double>(both + neither) / n;
    const double pa = static_cast<double>(a_pos) / n;
    const double pb = static_cast<double>(b_pos) / n;
    const double p_e = pa * pb + (1.0 - pa) * (1.0 - pb);
    if (p_e == 1.0) throw UndefinedKappa();
    return (p_o - p_e) / (1.0 - p_e);
}

std::vector<KappaRow> per_class_kappa(const Corpus& corpus) {
    std::vector<Label> a, b;
    for (const auto& r : corpus) {
        if (r.coder_a && r.coder_b) {
            a.push_back(*r.coder_a);
            b.push_back(*r.coder_b);
        }
    }
    std::vector<KappaRow> rows;
    for (Label t : kAllLabels) {
        KappaRow row{t, std::nullopt, a.size()};
        if (a.size() >= 2) {
            try {
                row.kappa = cohens_kappa_binary(a, b, t);
            } catch (const UndefinedKappa&) {
            }
        }
        rows.push_back(row);
    }
    return rows;
}

std::size_t train_learner_count(double ratio, std::size_t learners) {
    if (!(ratio > 0.0 && ratio <= 1.0)) throw std::invalid_argument("split ratio must lie in (0, 1]");
    // The small epsilon keeps exact products such as 0.7 * 10 from landing
    // one below the intended integer.
    auto n = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(learners) + 1e-9));
    return std::clamp<std::size_t>(n, 1, learners);
}

namespace {

std::vector<std::string> shuffled_learners(std::vector<std::string> ids, std::uint64_t seed) {
    std::sort(ids.begin(), ids.end());
    Rng rng(seed);
    rng.shuffle(std::span<std::string>(ids));
    return ids;
}

}  // namespace

SplitResult learner_level_split(const Corpus& corpus, double ratio, std::uint64_t seed) {
    if (corpus.empty()) throw std::invalid_argument("cannot split an empty corpus");
    auto learners = shuffled_learners(corpus.learner_ids(), seed);
    const std::size_t n_train = train_learner_count(ratio, learners.size());
    std::unordered_set<std::string_view> train_set(learners.begin(),
                                                   learners.begin() + static_cast<long>(n_train));

    std::vector<LabeledResponse> train, test;
    for (const auto& r : corpus) (train_set.contains(r.learner_id) ? train : test).push_back(r);

    const auto& src = corpus.provenance();
    SplitResult out;
    out.train = Corpus(std::move(train), {src.source + "#train", src.format});
    out.test = Corpus(std::move(test), {src.source + "#test", src.format});
    out.seed = seed;
    out.ratio = ratio;
    out.train_learners = n_train;
    out.test_learners = learners.size() - n_train;
    return out;
}

std::vector<std::size_t> learner_folds(std::span<const std::string> learner_of_row, std::size_t k,
                                       std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("need at least two folds");
    std::vector<std::string> ids;
    {
        std::set<std::string> uniq(learner_of_row.begin(), learner_of_row.end());
        ids.assign(uniq.begin(), uniq.end());
    }
    if (ids.size() < k)
        throw DataError("fewer learners (" + std::to_string(ids.size()) + ") than folds (" +
                        std::to_string(k) + ")");
    ids = shuffled_learners(std::move(ids), seed);
    std::unordered_map<std::string_view, std::size_t> fold_of;
    for (std::size_t i = 0; i < ids.size(); ++i) fold_of.emplace(ids[i], i % k);
    std::vector<std::size_t> out;
    out.reserve(learner_of_row.size());
    for (const auto& id : learner_of_row) out.push_back(fold_of.at(id));
    return out;
}

}  // namespace llmdetect
