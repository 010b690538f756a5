#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmdetect/corpus.hpp"

namespace llmdetect {

/// One paired (open response, MCQ) observation.
struct OutcomeRecord {
    std::string learner_id;
    std::string item_id;
    bool flagged = false;
    bool mcq_correct = false;
};

/// Per-learner sufficient statistics: trials and successes split by the
/// flagged indicator.
struct LearnerCounts {
    std::string learner_id;
    std::array<int, 2> trials{};
    std::array<int, 2> correct{};
};

/// Learners in sorted id order.
std::vector<LearnerCounts> group_by_learner(std::span<const OutcomeRecord> records);

struct GlmmConfig {
    double gradient_tolerance = 1e-6;
    // Also stop once the quasi-Newton predicted decrease falls below this
    // fraction of the objective.
    double relative_decrease_tolerance = 1e-14;
    int max_outer_iterations = 200;
    int max_inner_iterations = 50;
    double inner_tolerance = 1e-10;
};

struct MixedModelFit {
    double beta0 = 0;
    double beta1 = 0;
    double sigma_u = 0;
    double se_beta0 = 0;
    double se_beta1 = 0;
    double cov_beta01 = 0;
    double log_likelihood = 0;
    double start_log_likelihood = 0;
    bool converged = false;
    bool at_boundary = false;  // sigma_u estimated as exactly 0
    int iterations = 0;
    std::vector<std::string> diagnostics;
    std::size_t n_learners = 0;
    std::size_t n_observations = 0;
    double flagged_share = 0;  // fraction of observations with flagged = true
};

/// Laplace-approximated marginal log-likelihood of
/// logit P(correct) = beta0 + beta1 * flagged + u_i, u_i ~ N(0, sigma_u^2).
double laplace_loglik(std::span<const LearnerCounts> learners, double beta0, double beta1, double sigma_u,
                      const GlmmConfig& config = {});

/// Gradient of laplace_loglik with respect to (beta0, beta1, log sigma_u).
std::array<double, 3> laplace_gradient(std::span<const LearnerCounts> learners, double beta0, double beta1,
                                       double log_sigma_u, const GlmmConfig& config = {});

/// Pooled (sigma_u = 0) Bernoulli log-likelihood.
double pooled_loglik(std::span<const LearnerCounts> learners, double beta0, double beta1);

struct PooledFit {
    double beta0 = 0;
    double beta1 = 0;
    double se_beta0 = 0;
    double se_beta1 = 0;
    double cov_beta01 = 0;
    double log_likelihood = 0;
    bool converged = false;
};

/// Ordinary logistic regression on the pooled observations (Newton).
PooledFit fit_pooled_logistic(std::span<const LearnerCounts> learners, int max_iterations = 100);

/// Maximizes the Laplace likelihood over (beta0, beta1, log sigma_u) with
/// BFGS, and compares against the sigma_u = 0 boundary.
MixedModelFit fit_glmm(std::span<const OutcomeRecord> records, const GlmmConfig& config = {});

/// Adaptive Gauss-Hermite marginal log-likelihood. Exact for sigma_u = 0.
double gh_loglik(std::span<const OutcomeRecord> records, double beta0, double beta1, double sigma_u, int points);

/// Nodes and weights for weight function exp(-x^2).
struct GaussHermiteRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};
GaussHermiteRule gauss_hermite(int points);

struct Interval {
    double low = 0;
    double high = 0;
};

struct EffectSummary {
    double odds_ratio = 1;
    Interval odds_ratio_ci95;
    double z = 0;
    double p_value = 1;
    double r2_marginal = 0;
    double prob_unflagged = 0;
    Interval prob_unflagged_ci95;
    double prob_flagged = 0;
    Interval prob_flagged_ci95;
};

class NotConverged : public std::runtime_error {
public:
    NotConverged() : std::runtime_error("mixed model fit did not converge") {}
};

/// Wald inference on the fit; probabilities are population-level (u = 0).
EffectSummary effect_summary(const MixedModelFit& fit);

double inverse_logit(double x);
double logit(double p);

struct JoinResult {
    std::vector<OutcomeRecord> records;
    std::size_t skipped_without_mcq = 0;
};

/// Pairs corpus responses that carry an MCQ outcome with their verdicts;
/// only LLM verdicts count as flagged.
JoinResult join_outcomes(const Corpus& corpus, const std::map<std::string, Label>& verdicts);

/// Reads a "response_id,label" CSV.
std::map<std::string, Label> load_verdicts_csv(const std::filesystem::path& path);

nlohmann::json fit_to_json(const MixedModelFit& fit, const EffectSummary* summary);
/// Human-readable block quoting OR, CI, p, marginal R^2 and both probabilities.
std::string render_effect_text(const MixedModelFit& fit, const EffectSummary& s);

}  // namespace llmdetect
