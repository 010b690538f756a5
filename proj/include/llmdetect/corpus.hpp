#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "llmdetect/errors.hpp"
#include "llmdetect/label.hpp"

namespace llmdetect {

struct LabeledResponse {
    std::string response_id;
    std::string learner_id;
    std::string lesson_id;
    std::string item_id;
    std::string text;
    std::optional<Label> coder_a;
    std::optional<Label> coder_b;
    Label consensus = Label::Uncertain;
    std::optional<bool> mcq_correct;
};

enum class CorpusFormat { Csv, Jsonl };

std::string_view to_string(CorpusFormat f);
std::optional<CorpusFormat> parse_corpus_format(std::string_view s);

struct Provenance {
    std::string source;
    CorpusFormat format = CorpusFormat::Csv;
};

/// Ordered, immutable-after-construction collection of responses.
class Corpus {
public:
    Corpus() = default;
    /// Validates unique response ids and nonempty learner ids.
    Corpus(std::vector<LabeledResponse> responses, Provenance provenance);

    const std::vector<LabeledResponse>& responses() const noexcept { return responses_; }
    const Provenance& provenance() const noexcept { return provenance_; }
    std::size_t size() const noexcept { return responses_.size(); }
    bool empty() const noexcept { return responses_.empty(); }
    const LabeledResponse& operator[](std::size_t i) const { return responses_[i]; }
    auto begin() const noexcept { return responses_.begin(); }
    auto end() const noexcept { return responses_.end(); }

    std::vector<Label> consensus_labels() const;
    /// Distinct learner ids in first-appearance order.
    std::vector<std::string> learner_ids() const;

private:
    std::vector<LabeledResponse> responses_;
    Provenance provenance_;
};

/// Reads a corpus file. CSV needs a header row; JSONL holds one object per
/// line. Consensus is derived from both coder labels when absent and must
/// agree with them when present.
Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format);

/// Writes the CSV interchange form (all nine columns, header included).
void write_corpus_csv(const Corpus& corpus, const std::filesystem::path& path);

using ClassCounts = std::array<std::size_t, kNumClasses>;

ClassCounts class_counts(const Corpus& corpus);

/// Raised when both raters are constant on the same side, so chance
/// agreement is 1 and kappa has no value.
class UndefinedKappa : public std::domain_error {
public:
    UndefinedKappa() : std::domain_error("kappa undefined: chance agreement is 1") {}
};

/// Cohen's kappa after one-vs-rest binarization on `target`.
double cohens_kappa_binary(std::span<const Label> a, std::span<const Label> b, Label target);

struct KappaRow {
    Label target;
    std::optional<double> kappa;  // nullopt when undefined
    std::size_t n_pairs = 0;
};

/// Per-class kappa over the records carrying both coder labels.
std::vector<KappaRow> per_class_kappa(const Corpus& corpus);

struct SplitResult {
    Corpus train;
    Corpus test;
    std::uint64_t seed = 0;
    double ratio = 1.0;
    std::size_t train_learners = 0;
    std::size_t test_learners = 0;
};

/// Number of learners assigned to the training side: floor(ratio * L),
/// at least one.
std::size_t train_learner_count(double ratio, std::size_t learners);

/// Shuffles the sorted distinct learner ids with `seed` and assigns every
/// response of the first train_learner_count() learners to train.
SplitResult learner_level_split(const Corpus& corpus, double ratio, std::uint64_t seed);

/// Deterministic learner-level fold assignment (round-robin over shuffled
/// learners). Returns one fold index per response.
std::vector<std::size_t> learner_folds(std::span<const std::string> learner_of_row,
                                       std::size_t k, std::uint64_t seed);

}  // namespace llmdetect
