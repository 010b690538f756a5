#include "llmdetect/stylometry.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "llmdetect/csv.hpp"
#include "utf8.hpp"

namespace llmdetect {

// Defined in the generated lexicon source.
extern const char* const kBundledLexicon;

namespace {

bool is_ascii_alpha(char32_t c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
bool is_ascii_digit(char32_t c) { return c >= '0' && c <= '9'; }
bool is_apostrophe(char32_t c) { return c == U'\'' || c == U'’'; }
bool is_word_char(char32_t c) { return is_ascii_alpha(c) || is_apostrophe(c); }
bool is_terminal(char32_t c) { return c == U'.' || c == U'!' || c == U'?'; }
bool is_closer(char32_t c) {
    return c == U'"' || c == U'\'' || c == U'”' || c == U'’' || c == U')' || c == U']';
}
bool is_space(char32_t c) {
    return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\f' || c == U'\v' ||
           c == U' ' || c == U' ' || c == U' ';
}

bool is_punctuation(char32_t c) {
    if (c < 0x80) return (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) ||
                         (c >= 0x5B && c <= 0x60) || (c >= 0x7B && c <= 0x7E);
    return c == 0xA1 || c == 0xAB || c == 0xB7 || c == 0xBB || c == 0xBF ||
           (c >= 0x2010 && c <= 0x2027) || (c >= 0x2030 && c <= 0x205E);
}

char to_lower_ascii(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

std::string lowercase(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = to_lower_ascii(c);
    return out;
}

/// Appends a finished word, normalizing U+2019 to ' and trimming edge
/// apostrophes.
void flush_word(std::u32string& buf, std::vector<std::string>& out) {
    std::size_t b = 0, e = buf.size();
    while (b < e && is_apostrophe(buf[b])) ++b;
    while (e > b && is_apostrophe(buf[e - 1])) --e;
    if (b < e) {
        std::string w;
        for (std::size_t i = b; i < e; ++i) w.push_back(is_apostrophe(buf[i]) ? '\'' : static_cast<char>(buf[i]));
        out.push_back(std::move(w));
    }
    buf.clear();
}

std::vector<std::string> words_of(std::u32string_view cps) {
    std::vector<std::string> out;
    std::u32string buf;
    for (char32_t c : cps) {
        if (is_word_char(c))
            buf.push_back(c);
        else if (!buf.empty())
            flush_word(buf, out);
    }
    if (!buf.empty()) flush_word(buf, out);
    return out;
}

std::vector<std::u32string> split_lines(const std::u32string& cps) {
    std::vector<std::u32string> lines(1);
    for (char32_t c : cps) {
        if (c == U'\n' || c == U' ' || c == U' ')
            lines.emplace_back();
        else if (c != U'\r')
            lines.back().push_back(c);
    }
    return lines;
}

std::u32string_view trim(std::u32string_view s) {
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

bool has_content(std::u32string_view s) {
    return std::any_of(s.begin(), s.end(), [](char32_t c) { return is_ascii_alpha(c) || is_ascii_digit(c); });
}

std::vector<std::u32string> sentences_of(const std::u32string& cps) {
    std::vector<std::u32string> out;
    auto emit = [&](std::u32string_view s) {
        s = trim(s);
        if (has_content(s)) out.emplace_back(s);
    };
    for (const auto& line : split_lines(cps)) {
        std::size_t start = 0;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (!is_terminal(line[i])) continue;
            // Decimal points such as "3.5" do not end a sentence.
            if (line[i] == U'.' && i > 0 && i + 1 < line.size() && is_ascii_digit(line[i - 1]) &&
                is_ascii_digit(line[i + 1]))
                continue;
            std::size_t j = i + 1;
            while (j < line.size() && (is_terminal(line[j]) || line[j] == U'…')) ++j;
            while (j < line.size() && is_closer(line[j])) ++j;
            emit(std::u32string_view(line).substr(start, j - start));
            start = j;
            i = j - 1;
        }
        emit(std::u32string_view(line).substr(start));
    }
    return out;
}

struct Analysis {
    std::u32string cps;
    std::vector<std::u32string> sentences;
    std::vector<std::string> words;
};

Analysis analyze(std::string_view text) {
    Analysis a;
    a.cps = utf8::decode(text);
    a.sentences = sentences_of(a.cps);
    a.words = words_of(a.cps);
    return a;
}

ReadabilityCounts counts_of(const Analysis& a) {
    ReadabilityCounts c;
    c.words = a.words.size();
    c.sentences = a.sentences.size();
    for (const auto& w : a.words) c.syllables += static_cast<std::size_t>(count_syllables(w));
    return c;
}

bool in_lexicon(const Lexicon& lex, const std::string& lower) {
    if (lex.contains(lower)) return true;
    const auto apos = lower.find('\'');
    if (apos == std::string::npos) return false;
    // Possessives and clitics: "kevin's", "students'" (already trimmed), "they'd".
    return lex.contains(lower.substr(0, apos));
}

std::size_t count_misspellings(const std::u32string& cps, const Lexicon& lex) {
    std::size_t missing = 0;
    std::size_t i = 0;
    while (i < cps.size()) {
        while (i < cps.size() && is_space(cps[i])) ++i;
        std::size_t j = i;
        bool digit = false;
        while (j < cps.size() && !is_space(cps[j])) digit |= is_ascii_digit(cps[j++]);
        if (!digit) {
            for (const auto& w : words_of(std::u32string_view(cps).substr(i, j - i)))
                if (!in_lexicon(lex, lowercase(w))) ++missing;
        }
        i = j;
    }
    return missing;
}

std::vector<std::vector<std::string>> tokenize_phrases(const std::vector<std::string>& phrases) {
    std::vector<std::vector<std::string>> out;
    for (const auto& p : phrases) {
        auto toks = words_of(utf8::decode(p));
        for (auto& t : toks) t = lowercase(t);
        if (!toks.empty()) out.push_back(std::move(toks));
    }
    return out;
}

bool starts_with_bullet(std::u32string_view s) {
    static constexpr std::u32string_view kGlyphs =
        U"•◦▪▫‣●○■□➢►✓✔⁃·";
    if (s.empty()) return false;
    if (kGlyphs.find(s[0]) != std::u32string_view::npos) return true;
    const bool dash = s[0] == U'-' || s[0] == U'*' || s[0] == U'–' || s[0] == U'—';
    return dash && s.size() > 1 && is_space(s[1]);
}

bool starts_numbered(std::u32string_view s) {
    std::size_t i = 0;
    if (i < s.size() && s[i] == U'(') ++i;
    const std::size_t digits_begin = i;
    while (i < s.size() && is_ascii_digit(s[i]) && i - digits_begin < 3) ++i;
    if (i == digits_begin) {
        // Single-letter enumerations: "a) ", "(b) "
        if (i < s.size() && is_ascii_alpha(s[i]) && i + 1 < s.size() && s[i + 1] == U')') i += 1;
        else return false;
    }
    if (i >= s.size() || (s[i] != U'.' && s[i] != U')')) return false;
    ++i;
    return i < s.size() && is_space(s[i]);
}

bool starts_with_header(std::u32string_view s) {
    if (s.empty()) return false;
    std::size_t i = 0;
    int words = 0;
    while (i < s.size()) {
        if (!(s[i] >= U'A' && s[i] <= U'Z')) return false;
        while (i < s.size() && (is_ascii_alpha(s[i]) || is_apostrophe(s[i]) || s[i] == U'-')) ++i;
        ++words;
        if (words > 4) return false;
        if (i < s.size() && s[i] == U':') return i + 1 == s.size() || is_space(s[i + 1]);
        if (i < s.size() && s[i] == U' ') {
            ++i;
            continue;
        }
        return false;
    }
    return false;
}

double per_100(std::size_t count, std::size_t base) {
    return base == 0 ? 0.0 : 100.0 * static_cast<double>(count) / static_cast<double>(base);
}

}  // namespace

std::array<double, kNumFeatures> FeatureVector::values() const {
    return {avg_word_length,   avg_sentence_length, flesch_reading_ease,
            flesch_kincaid_grade, punctuation_density, comma_rate,
            quote_wrapped,     list_formatting,     first_person_rate,
            misspelling_rate,  capitalization_irregularity, type_token_ratio,
            llm_marker_rate};
}

FeatureVector FeatureVector::from_values(const std::array<double, kNumFeatures>& v) {
    return {v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9], v[10], v[11], v[12]};
}

Segmentation segment(std::string_view text) {
    Analysis a = analyze(text);
    Segmentation s;
    for (const auto& sent : a.sentences) s.sentences.push_back(utf8::encode(sent));
    s.words = std::move(a.words);
    return s;
}

int count_syllables(std::string_view word) {
    std::string w;
    for (char c : word)
        if (std::isalpha(static_cast<unsigned char>(c))) w.push_back(to_lower_ascii(c));
    if (w.empty()) return 1;

    auto vowel = [](char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u' || c == 'y'; };
    int groups = 0;
    bool prev = false;
    for (char c : w) {
        const bool v = vowel(c);
        if (v && !prev) ++groups;
        prev = v;
    }
    if (w.back() == 'e') {
        const bool consonant_le = w.size() >= 3 && w[w.size() - 2] == 'l' && !vowel(w[w.size() - 3]);
        if (!consonant_le) --groups;
    }
    return std::max(groups, 1);
}

ReadabilityCounts readability_counts(std::string_view text) { return counts_of(analyze(text)); }

double flesch_reading_ease(const ReadabilityCounts& c) {
    if (c.words == 0 || c.sentences == 0) throw Unscorable();
    const double wps = static_cast<double>(c.words) / static_cast<double>(c.sentences);
    const double spw = static_cast<double>(c.syllables) / static_cast<double>(c.words);
    return 206.835 - 1.015 * wps - 84.6 * spw;
}

double flesch_kincaid_grade(const ReadabilityCounts& c) {
    if (c.words == 0 || c.sentences == 0) throw Unscorable();
    const double wps = static_cast<double>(c.words) / static_cast<double>(c.sentences);
    const double spw = static_cast<double>(c.syllables) / static_cast<double>(c.words);
    return 0.39 * wps + 11.8 * spw - 15.59;
}

double flesch_reading_ease(std::string_view text) { return flesch_reading_ease(readability_counts(text)); }
double flesch_kincaid_grade(std::string_view text) { return flesch_kincaid_grade(readability_counts(text)); }

std::shared_ptr<const Lexicon> Lexicon::bundled() {
    static const std::shared_ptr<const Lexicon> lex = [] {
        std::unordered_set<std::string> words;
        std::istringstream in(kBundledLexicon);
        std::string line;
        while (std::getline(in, line))
            if (!line.empty() && line[0] != '#') words.insert(lowercase(line));
        return std::make_shared<const Lexicon>(std::move(words));
    }();
    return lex;
}

Lexicon Lexicon::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open lexicon '" + path.string() + "'");
    std::unordered_set<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty() && line[0] != '#') words.insert(lowercase(line));
    }
    return Lexicon(std::move(words));
}

bool Lexicon::contains(std::string_view lowercase_word) const {
    return words_.contains(std::string(lowercase_word));
}

std::vector<std::string> default_llm_markers() {
    return {"additionally", "moreover", "furthermore", "overall",  "fostering",
            "crucial",      "emphasizes", "leverage",  "engaging", "ultimately"};
}

StyleConfig StyleConfig::defaults() {
    StyleConfig c;
    c.llm_markers = default_llm_markers();
    c.first_person = {"i", "i'm", "i'll", "i've", "me", "my", "we", "our"};
    c.lexicon = Lexicon::bundled();
    return c;
}

void StyleConfig::load_markers(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open marker list '" + path.string() + "'");
    std::vector<std::string> markers;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto b = line.find_first_not_of(" \t");
        if (b == std::string::npos || line[b] == '#') continue;
        const auto e = line.find_last_not_of(" \t");
        markers.push_back(lowercase(line.substr(b, e - b + 1)));
    }
    llm_markers = std::move(markers);
}

bool is_quote_wrapped(std::string_view text) {
    const auto cps = utf8::decode(text);
    const auto t = trim(cps);
    if (t.empty()) return false;
    auto quote = [](char32_t c) { return c == U'"' || c == U'“' || c == U'”'; };
    return quote(t.front()) || quote(t.back());
}

bool has_list_formatting(std::string_view text) {
    for (const auto& line : split_lines(utf8::decode(text))) {
        const auto t = trim(line);
        if (starts_with_bullet(t) || starts_numbered(t) || starts_with_header(t)) return true;
    }
    return false;
}

FeatureVector extract_features(std::string_view text, const StyleConfig& config) {
    FeatureVector f;
    const Analysis a = analyze(text);
    const std::size_t n_words = a.words.size();
    const std::size_t n_sent = a.sentences.size();

    f.quote_wrapped = is_quote_wrapped(text) ? 1.0 : 0.0;
    f.list_formatting = has_list_formatting(text) ? 1.0 : 0.0;

    std::size_t punct = 0, commas = 0;
    for (char32_t c : a.cps) {
        punct += is_punctuation(c);
        commas += c == U',';
    }
    f.punctuation_density = per_100(punct, a.cps.size());
    if (n_words == 0) return f;

    std::size_t letters = 0;
    std::vector<std::string> lower;
    lower.reserve(n_words);
    for (const auto& w : a.words) {
        letters += static_cast<std::size_t>(std::count_if(w.begin(), w.end(), [](char c) { return c != '\''; }));
        lower.push_back(lowercase(w));
    }
    f.avg_word_length = static_cast<double>(letters) / static_cast<double>(n_words);

    if (n_sent > 0) {
        const ReadabilityCounts c = counts_of(a);
        f.avg_sentence_length = static_cast<double>(n_words) / static_cast<double>(n_sent);
        f.flesch_reading_ease = flesch_reading_ease(c);
        f.flesch_kincaid_grade = flesch_kincaid_grade(c);
        f.comma_rate = static_cast<double>(commas) / static_cast<double>(n_sent);
        std::size_t irregular = 0;
        for (const auto& s : a.sentences) {
            auto it = std::find_if(s.begin(), s.end(), is_ascii_alpha);
            if (it != s.end() && *it >= U'a' && *it <= U'z') ++irregular;
        }
        f.capitalization_irregularity = static_cast<double>(irregular) / static_cast<double>(n_sent);
    }

    std::size_t first_person = 0;
    for (const auto& w : lower)
        first_person += std::find(config.first_person.begin(), config.first_person.end(), w) !=
                        config.first_person.end();
    f.first_person_rate = per_100(first_person, n_words);

    if (config.lexicon) f.misspelling_rate = per_100(count_misspellings(a.cps, *config.lexicon), n_words);

    std::unordered_set<std::string_view> types(lower.begin(), lower.end());
    f.type_token_ratio = static_cast<double>(types.size()) / static_cast<double>(n_words);

    std::size_t markers = 0;
    for (const auto& phrase : tokenize_phrases(config.llm_markers)) {
        if (phrase.size() > lower.size()) continue;
        for (std::size_t i = 0; i + phrase.size() <= lower.size(); ++i)
            markers += std::equal(phrase.begin(), phrase.end(), lower.begin() + static_cast<long>(i));
    }
    f.llm_marker_rate = per_100(markers, n_words);
    return f;
}

FeatureVector extract_features(std::string_view text) {
    static const StyleConfig config = StyleConfig::defaults();
    return extract_features(text, config);
}

FeatureSchema fit_schema(const FeatureMatrix& rows, std::vector<std::string> names) {
    if (rows.empty()) throw DataError("cannot fit a feature schema on an empty training set");
    const std::size_t d = names.size();
    FeatureSchema s;
    s.names = std::move(names);
    s.means.assign(d, 0.0);
    s.sds.assign(d, 0.0);
    s.constant.assign(d, false);
    const auto n = static_cast<double>(rows.size());
    for (const auto& r : rows) {
        if (r.size() != d) throw std::invalid_argument("feature row width does not match schema");
        for (std::size_t j = 0; j < d; ++j) s.means[j] += r[j];
    }
    for (auto& m : s.means) m /= n;
    for (const auto& r : rows)
        for (std::size_t j = 0; j < d; ++j) s.sds[j] += (r[j] - s.means[j]) * (r[j] - s.means[j]);
    for (std::size_t j = 0; j < d; ++j) {
        s.sds[j] = rows.size() > 1 ? std::sqrt(s.sds[j] / (n - 1.0)) : 0.0;
        s.constant[j] = !(s.sds[j] > 1e-12 * std::max(1.0, std::abs(s.means[j])));
    }
    return s;
}

FeatureSchema fit_schema(const Corpus& train, const StyleConfig& config) {
    return fit_schema(extract_matrix(train, config));
}

FeatureRow apply_schema(const FeatureSchema& schema, std::span<const double> row) {
    if (row.size() != schema.dim()) throw std::invalid_argument("feature row width does not match schema");
    FeatureRow out(row.size());
    for (std::size_t j = 0; j < row.size(); ++j)
        out[j] = schema.constant[j] ? 0.0 : (row[j] - schema.means[j]) / schema.sds[j];
    return out;
}

FeatureMatrix apply_schema(const FeatureSchema& schema, const FeatureMatrix& rows) {
    FeatureMatrix out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(apply_schema(schema, r));
    return out;
}

FeatureMatrix extract_matrix(const Corpus& corpus, const StyleConfig& config) {
    FeatureMatrix out;
    out.reserve(corpus.size());
    for (const auto& r : corpus) {
        const auto v = extract_features(r.text, config).values();
        out.emplace_back(v.begin(), v.end());
    }
    return out;
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string feature_matrix_csv(const Corpus& corpus, const FeatureMatrix& rows) {
    if (rows.size() != corpus.size()) throw std::invalid_argument("feature matrix and corpus differ in size");
    std::string out = "response_id";
    for (auto name : kFeatureNames) (out += ',') += name;
    out += '\n';
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out += csv::escape(corpus[i].response_id);
        for (double v : rows[i]) (out += ',') += format_double(v);
        out += '\n';
    }
    return out;
}

}  // namespace llmdetect
