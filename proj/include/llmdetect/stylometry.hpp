#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "llmdetect/corpus.hpp"

namespace llmdetect {

inline constexpr std::size_t kNumFeatures = 13;

inline constexpr std::array<std::string_view, kNumFeatures> kFeatureNames{
    "avg_word_length",
    "avg_sentence_length",
    "flesch_reading_ease",
    "flesch_kincaid_grade",
    "punctuation_density",
    "comma_rate",
    "quote_wrapped",
    "list_formatting",
    "first_person_rate",
    "misspelling_rate",
    "capitalization_irregularity",
    "type_token_ratio",
    "llm_marker_rate",
};

/// Stylometric measurements for one response.
struct FeatureVector {
    double avg_word_length = 0;              // letters per word
    double avg_sentence_length = 0;          // words per sentence
    double flesch_reading_ease = 0;
    double flesch_kincaid_grade = 0;
    double punctuation_density = 0;          // marks per 100 characters
    double comma_rate = 0;                   // commas per sentence
    double quote_wrapped = 0;                // 0/1
    double list_formatting = 0;              // 0/1
    double first_person_rate = 0;            // per 100 words
    double misspelling_rate = 0;             // per 100 words
    double capitalization_irregularity = 0;  // fraction of sentences
    double type_token_ratio = 0;
    double llm_marker_rate = 0;  // per 100 words

    std::array<double, kNumFeatures> values() const;
    static FeatureVector from_values(const std::array<double, kNumFeatures>& v);
};

struct Segmentation {
    std::vector<std::string> sentences;
    std::vector<std::string> words;
};

/// Lines are sentence boundaries; within a line, runs of . ! ? end a
/// sentence. Words are maximal runs of ASCII letters and apostrophes
/// (straight or U+2019), with edge apostrophes stripped.
Segmentation segment(std::string_view text);

/// Vowel-group syllable estimate, never below 1.
int count_syllables(std::string_view word);

struct ReadabilityCounts {
    std::size_t words = 0;
    std::size_t sentences = 0;
    std::size_t syllables = 0;
};

ReadabilityCounts readability_counts(std::string_view text);

class Unscorable : public std::domain_error {
public:
    Unscorable() : std::domain_error("text has no words or no sentences") {}
};

double flesch_reading_ease(const ReadabilityCounts& c);
double flesch_kincaid_grade(const ReadabilityCounts& c);
double flesch_reading_ease(std::string_view text);
double flesch_kincaid_grade(std::string_view text);

/// Word list used for misspelling detection. Lookups are lowercase.
class Lexicon {
public:
    Lexicon() = default;
    explicit Lexicon(std::unordered_set<std::string> words) : words_(std::move(words)) {}

    /// The bundled English word list.
    static std::shared_ptr<const Lexicon> bundled();
    /// One word per line; blank lines and lines starting with '#' ignored.
    static Lexicon from_file(const std::filesystem::path& path);

    bool contains(std::string_view lowercase_word) const;
    std::size_t size() const noexcept { return words_.size(); }

private:
    std::unordered_set<std::string> words_;
};

/// Marker-phrase and lexicon settings for feature extraction.
struct StyleConfig {
    std::vector<std::string> llm_markers;   // lowercase phrases, one or more words
    std::vector<std::string> first_person;  // lowercase tokens
    std::shared_ptr<const Lexicon> lexicon;

    static StyleConfig defaults();
    /// Replaces llm_markers with the phrases in a text file, one per line.
    void load_markers(const std::filesystem::path& path);
};

std::vector<std::string> default_llm_markers();

/// Trimmed text begins or ends with a straight or curly double quote.
bool is_quote_wrapped(std::string_view text);
/// Some line opens with a bullet glyph, "- ", a numbered prefix, or a
/// short title-case "Header:" label.
bool has_list_formatting(std::string_view text);

FeatureVector extract_features(std::string_view text, const StyleConfig& config);
FeatureVector extract_features(std::string_view text);

/// Per-feature standardization fitted on training rows.
struct FeatureSchema {
    std::vector<std::string> names;
    std::vector<double> means;
    std::vector<double> sds;
    std::vector<bool> constant;

    std::size_t dim() const noexcept { return names.size(); }
};

using FeatureRow = std::vector<double>;
using FeatureMatrix = std::vector<FeatureRow>;

/// Sample standard deviation (N-1). Columns with zero spread, or a single
/// row, are marked constant.
FeatureSchema fit_schema(const FeatureMatrix& rows,
                         std::vector<std::string> names = {kFeatureNames.begin(),
                                                           kFeatureNames.end()});
FeatureSchema fit_schema(const Corpus& train, const StyleConfig& config);

FeatureRow apply_schema(const FeatureSchema& schema, std::span<const double> row);
FeatureMatrix apply_schema(const FeatureSchema& schema, const FeatureMatrix& rows);

FeatureMatrix extract_matrix(const Corpus& corpus, const StyleConfig& config);

/// CSV with header "response_id,<feature names>" and round-trip precision.
std::string feature_matrix_csv(const Corpus& corpus, const FeatureMatrix& rows);

/// Shortest decimal that round-trips to the same double.
std::string format_double(double v);

}  // namespace llmdetect
