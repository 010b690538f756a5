#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmdetect/evaluation.hpp"
#include "llmdetect/label.hpp"
#include "llmdetect/stylometry.hpp"

namespace llmdetect {

enum class ModelKind { Logistic, Forest };

std::string_view to_string(ModelKind k);
std::optional<ModelKind> parse_model_kind(std::string_view s);

struct TrainConfig {
    // multinomial logistic regression
    double l2_strength = 1.0;
    bool line_search = true;
    double learning_rate = 1.0;  // fixed step, or first trial step under line search
    int max_iterations = 500;
    double gradient_tolerance = 1e-6;
    // random forest
    int trees_count = 200;
    int max_depth = 8;
    int min_samples_leaf = 2;
    bool bootstrap = true;
    // shared
    std::uint64_t seed = 42;
    bool class_weighting = false;  // inverse-frequency sample weights

    /// Throws ConfigError when a field is out of range.
    void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

using Probabilities = std::array<double, kNumClasses>;

/// Numerically stable softmax.
Probabilities softmax(const std::array<double, kNumClasses>& scores);

/// Index of the largest entry; ties go to the lowest class code.
Label argmax_label(const Probabilities& p);

/// Per-sample weights n / (K * n_c) when enabled, otherwise all ones.
std::vector<double> sample_weights(std::span<const Label> y, bool class_weighting);

// ---------------------------------------------------------------------------
// Multinomial logistic regression

enum class TrainStatus { Converged, MaxIterations, DegenerateSingleClass };

std::string_view to_string(TrainStatus s);

/// Loss = (sum_i w_i * NLL_i + l2/2 * ||W||^2) / n, bias unpenalized.
/// Parameters are laid out as [W row-major (class x feature), bias].
class LogisticObjective {
public:
    LogisticObjective(const FeatureMatrix& x, std::span<const Label> y, std::vector<double> weights,
                      double l2_strength);

    std::size_t dim() const noexcept { return dim_; }
    std::size_t num_params() const noexcept { return (dim_ + 1) * kNumClasses; }

    double value(std::span<const double> params) const;
    /// Writes the gradient into `grad` and returns the loss.
    double value_and_gradient(std::span<const double> params, std::span<double> grad) const;

private:
    const FeatureMatrix& x_;
    std::span<const Label> y_;
    std::vector<double> w_;
    double l2_;
    std::size_t dim_;
};

struct LogisticModel {
    std::size_t dim = 0;
    std::vector<double> weights;  // kNumClasses x dim, row-major
    std::array<double, kNumClasses> bias{};
    double l2_strength = 0;

    TrainStatus status = TrainStatus::Converged;
    int iterations = 0;
    double gradient_norm = 0;
    std::vector<double> loss_history;  // loss after each accepted iteration, starting point first

    std::array<double, kNumClasses> scores(std::span<const double> x) const;
    Probabilities predict_proba(std::span<const double> x) const;
    Label predict(std::span<const double> x) const;
    double weight_norm() const;
};

/// Gradient descent from zero weights. A single-class `y` yields a constant
/// model with status DegenerateSingleClass.
LogisticModel train_logistic(const FeatureMatrix& x, std::span<const Label> y, const TrainConfig& config);

/// Probability a degenerate single-class model assigns to its class.
inline constexpr double kDegenerateConfidence = 0.999;

// ---------------------------------------------------------------------------
// Random forest

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0;  // left branch takes x[feature] <= threshold
    int left = -1;
    int right = -1;
    Label prediction = Label::Human;
    std::size_t samples = 0;
};

struct DecisionTree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root

    Label predict(std::span<const double> x) const;
    int depth() const;
    std::size_t leaf_count() const;
};

struct ForestModel {
    std::size_t dim = 0;
    std::vector<DecisionTree> trees;
    int max_depth = 0;
    int min_samples_leaf = 0;
    std::uint64_t seed = 0;

    /// Vote fractions per class.
    Probabilities predict_proba(std::span<const double> x) const;
    /// Plurality vote; ties go to the lowest class code.
    Label predict(std::span<const double> x) const;
};

/// Features tried at each split: ceil(sqrt(dim)).
std::size_t features_per_split(std::size_t dim);

/// Total Gini decrease of splitting `parent` class weights into `left`
/// and its complement, weighted by node mass.
double gini_decrease(const Probabilities& parent, const Probabilities& left);

ForestModel train_forest(const FeatureMatrix& x, std::span<const Label> y, const TrainConfig& config);

// ---------------------------------------------------------------------------
// A trained model bundled with its feature preprocessing.

struct TrainedModel {
    ModelKind kind = ModelKind::Logistic;
    std::optional<FeatureSchema> schema;  // logistic only
    std::variant<LogisticModel, ForestModel> model;
    TrainConfig config;

    /// Takes raw (unstandardized) feature rows.
    Label predict(std::span<const double> raw) const;
    Probabilities predict_proba(std::span<const double> raw) const;
    std::vector<Label> predict_all(const FeatureMatrix& raw) const;
};

/// Fits the schema (for logistic) on `raw` and trains the requested model.
TrainedModel train_model(ModelKind kind, const FeatureMatrix& raw, std::span<const Label> y,
                         const TrainConfig& config);

/// Versioned JSON with weights, trees, schema, config and seed.
nlohmann::json model_to_json(const TrainedModel& m);
TrainedModel model_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Cross-validated model selection

struct Candidate {
    ModelKind kind = ModelKind::Logistic;
    TrainConfig config;
};

struct CandidateResult {
    Candidate candidate;
    std::vector<ClassificationReport> folds;
    double mean_accuracy = 0;
    double sd_accuracy = 0;
    double mean_weighted_f1 = 0;
    double sd_weighted_f1 = 0;
};

struct CrossValResult {
    std::size_t k = 0;
    std::uint64_t seed = 0;
    std::vector<CandidateResult> candidates;
    std::size_t winner = 0;

    const CandidateResult& best() const { return candidates.at(winner); }
};

/// Highest mean weighted F1, then higher mean accuracy, then logistic before
/// forest, then list order. Means closer than 1e-12 count as tied.
std::size_t select_winner(std::span<const CandidateResult> results);

/// Learner-level k-fold cross-validation of each candidate on raw features.
CrossValResult cross_validate(const FeatureMatrix& raw, std::span<const Label> y,
                              std::span<const std::string> learner_ids, std::size_t k,
                              std::span<const Candidate> candidates, std::uint64_t seed);

nlohmann::json cross_val_to_json(const CrossValResult& r);

}  // namespace llmdetect
