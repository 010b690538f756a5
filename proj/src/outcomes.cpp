#include "llmdetect/outcomes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "llmdetect/csv.hpp"
#include "llmdetect/errors.hpp"

namespace llmdetect {

using json = nlohmann::json;

double inverse_logit(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

namespace {

/// log(1 + exp(x)) without overflow.
double log1p_exp(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

/// Bernoulli log-likelihood of k successes in n trials at linear predictor eta.
double binom_ll(int n, int k, double eta) { return k * eta - n * log1p_exp(eta); }

struct InnerState {
    double u = 0;
    double W = 0;        // sum n p (1 - p)
    double W1 = 0;       // flagged part of W
    double Wu = 0;       // dW/du
    double W1u = 0;      // flagged part of dW/du
    double loglik = 0;   // conditional log-likelihood at u
};

InnerState evaluate(const LearnerCounts& l, double beta0, double beta1, double u) {
    InnerState st;
    st.u = u;
    for (int x = 0; x < 2; ++x) {
        const int n = l.trials[static_cast<std::size_t>(x)];
        if (n == 0) continue;
        const int k = l.correct[static_cast<std::size_t>(x)];
        const double eta = beta0 + beta1 * x + u;
        const double p = inverse_logit(eta);
        const double w = n * p * (1 - p);
        const double wu = w * (1 - 2 * p);
        st.W += w;
        st.Wu += wu;
        if (x == 1) {
            st.W1 += w;
            st.W1u += wu;
        }
        st.loglik += binom_ll(n, k, eta);
    }
    return st;
}

double residual(const LearnerCounts& l, double beta0, double beta1, double u) {
    double r = 0;
    for (int x = 0; x < 2; ++x) {
        const auto xi = static_cast<std::size_t>(x);
        if (l.trials[xi] == 0) continue;
        r += l.correct[xi] - l.trials[xi] * inverse_logit(beta0 + beta1 * x + u);
    }
    return r;
}

/// Conditional mode of u for one learner: Newton on a strictly concave
/// objective. Steps are halved until the score shrinks; the score stays
/// accurate near the mode where objective differences are lost to rounding.
InnerState conditional_mode(const LearnerCounts& l, double beta0, double beta1, double s, const GlmmConfig& cfg) {
    auto score = [&](double v) { return residual(l, beta0, beta1, v) - v / s; };
    double u = 0;
    double g = score(u);
    for (int it = 0; it < cfg.max_inner_iterations && g != 0; ++it) {
        const InnerState st = evaluate(l, beta0, beta1, u);
        double step = g / (st.W + 1.0 / s);
        double nu = u + step;
        double ng = score(nu);
        while (std::abs(ng) > std::abs(g) && std::abs(step) > 1e-15 * (1 + std::abs(u))) {
            step *= 0.5;
            nu = u + step;
            ng = score(nu);
        }
        u = nu;
        g = ng;
        if (std::abs(step) < cfg.inner_tolerance * (1 + std::abs(u))) break;
    }
    return evaluate(l, beta0, beta1, u);
}

}  // namespace

std::vector<LearnerCounts> group_by_learner(std::span<const OutcomeRecord> records) {
    std::map<std::string, LearnerCounts> by;
    for (const auto& r : records) {
        auto& c = by[r.learner_id];
        c.learner_id = r.learner_id;
        const std::size_t x = r.flagged ? 1 : 0;
        ++c.trials[x];
        c.correct[x] += r.mcq_correct ? 1 : 0;
    }
    std::vector<LearnerCounts> out;
    out.reserve(by.size());
    for (auto& [_, c] : by) out.push_back(std::move(c));
    return out;
}

double pooled_loglik(std::span<const LearnerCounts> learners, double beta0, double beta1) {
    double ll = 0;
    for (const auto& l : learners)
        for (int x = 0; x < 2; ++x) {
            const auto xi = static_cast<std::size_t>(x);
            if (l.trials[xi]) ll += binom_ll(l.trials[xi], l.correct[xi], beta0 + beta1 * x);
        }
    return ll;
}

double laplace_loglik(std::span<const LearnerCounts> learners, double beta0, double beta1, double sigma_u,
                      const GlmmConfig& config) {
    if (sigma_u <= 0) return pooled_loglik(learners, beta0, beta1);
    const double s = sigma_u * sigma_u;
    double ll = 0;
    for (const auto& l : learners) {
        const InnerState st = conditional_mode(l, beta0, beta1, s, config);
        ll += st.loglik - st.u * st.u / (2 * s) - 0.5 * std::log1p(s * st.W);
    }
    return ll;
}

std::array<double, 3> laplace_gradient(std::span<const LearnerCounts> learners, double beta0, double beta1,
                                       double log_sigma_u, const GlmmConfig& config) {
    const double s = std::exp(2 * log_sigma_u);
    std::array<double, 3> g{};
    for (const auto& l : learners) {
        const InnerState st = conditional_mode(l, beta0, beta1, s, config);
        const double A = 1 + s * st.W;
        // Partial derivatives at fixed u, then the chain through u-hat(theta).
        const double dF_du = -0.5 * s * st.Wu / A;
        const double r_all = residual(l, beta0, beta1, st.u);
        double r_flag = 0;
        if (l.trials[1]) r_flag = l.correct[1] - l.trials[1] * inverse_logit(beta0 + beta1 + st.u);
        const double dF_db0 = r_all - 0.5 * s * st.Wu / A;
        const double dF_db1 = r_flag - 0.5 * s * st.W1u / A;
        const double dF_ds = st.u * st.u / (2 * s * s) - 0.5 * st.W / A;
        const double du_db0 = -s * st.W / A;
        const double du_db1 = -s * st.W1 / A;
        const double du_ds = st.u / (s * A);
        g[0] += dF_db0 + dF_du * du_db0;
        g[1] += dF_db1 + dF_du * du_db1;
        g[2] += (dF_ds + dF_du * du_ds) * 2 * s;
    }
    return g;
}

PooledFit fit_pooled_logistic(std::span<const LearnerCounts> learners, int max_iterations) {
    PooledFit fit;
    double b0 = 0, b1 = 0;
    std::array<double, 3> info{};  // I00, I01, I11
    for (int it = 0; it < max_iterations; ++it) {
        double g0 = 0, g1 = 0;
        info = {};
        for (const auto& l : learners)
            for (int x = 0; x < 2; ++x) {
                const auto xi = static_cast<std::size_t>(x);
                const int n = l.trials[xi];
                if (!n) continue;
                const double p = inverse_logit(b0 + b1 * x);
                const double r = l.correct[xi] - n * p;
                const double w = n * p * (1 - p);
                g0 += r;
                g1 += x * r;
                info[0] += w;
                info[1] += x * w;
                info[2] += x * w;
            }
        const double det = info[0] * info[2] - info[1] * info[1];
        if (!(det > 0)) break;
        const double d0 = (info[2] * g0 - info[1] * g1) / det;
        const double d1 = (-info[1] * g0 + info[0] * g1) / det;
        b0 += d0;
        b1 += d1;
        if (std::abs(d0) + std::abs(d1) < 1e-12 * (1 + std::abs(b0) + std::abs(b1)) ||
            std::max(std::abs(g0), std::abs(g1)) < 1e-12) {
            fit.converged = true;
            break;
        }
    }
    // Information at the final estimate.
    info = {};
    for (const auto& l : learners)
        for (int x = 0; x < 2; ++x) {
            const auto xi = static_cast<std::size_t>(x);
            if (!l.trials[xi]) continue;
            const double p = inverse_logit(b0 + b1 * x);
            const double w = l.trials[xi] * p * (1 - p);
            info[0] += w;
            info[1] += x * w;
            info[2] += x * w;
        }
    const double det = info[0] * info[2] - info[1] * info[1];
    fit.beta0 = b0;
    fit.beta1 = b1;
    if (det > 0) {
        fit.se_beta0 = std::sqrt(info[2] / det);
        fit.se_beta1 = std::sqrt(info[0] / det);
        fit.cov_beta01 = -info[1] / det;
    } else {
        fit.se_beta0 = fit.se_beta1 = std::numeric_limits<double>::quiet_NaN();
        fit.converged = false;
    }
    fit.log_likelihood = pooled_loglik(learners, b0, b1);
    return fit;
}

namespace {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<std::array<double, 3>, 3>;

bool invert3(const Mat3& m, Mat3& out) {
    const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                       m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                       m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    if (!(std::abs(det) > 0) || !std::isfinite(det)) return false;
    out[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
    out[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
    out[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
    out[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
    out[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
    out[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
    out[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
    out[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
    out[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
    return true;
}

double max_abs(const Vec3& v) { return std::max({std::abs(v[0]), std::abs(v[1]), std::abs(v[2])}); }

constexpr double kLogSigmaFloor = -12.0;

}  // namespace

MixedModelFit fit_glmm(std::span<const OutcomeRecord> records, const GlmmConfig& config) {
    const auto learners = group_by_learner(records);
    if (learners.size() < 2) throw DataError("mixed model needs at least two learners");
    std::size_t correct = 0, flagged = 0;
    for (const auto& r : records) {
        correct += r.mcq_correct;
        flagged += r.flagged;
    }
    if (correct == 0 || correct == records.size())
        throw DataError("mixed model needs both correct and incorrect MCQ outcomes");
    if (flagged == 0 || flagged == records.size())
        throw DataError("flagged indicator has no variation; its effect is not identifiable");

    MixedModelFit fit;
    fit.n_learners = learners.size();
    fit.n_observations = records.size();
    fit.flagged_share = static_cast<double>(flagged) / static_cast<double>(records.size());

    for (int x = 0; x < 2; ++x) {
        std::size_t n = 0, k = 0;
        for (const auto& r : records)
            if (r.flagged == (x == 1)) {
                ++n;
                k += r.mcq_correct;
            }
        if (n > 0 && (k == 0 || k == n))
            fit.diagnostics.push_back("separation: every observation with flagged=" + std::to_string(x) +
                                      (k == 0 ? " is incorrect" : " is correct"));
    }

    const PooledFit pooled = fit_pooled_logistic(learners);
    auto neg_ll = [&](const Vec3& t) { return -laplace_loglik(learners, t[0], t[1], std::exp(t[2]), config); };
    auto neg_grad = [&](const Vec3& t) {
        auto g = laplace_gradient(learners, t[0], t[1], t[2], config);
        return Vec3{-g[0], -g[1], -g[2]};
    };

    Vec3 theta{pooled.converged ? pooled.beta0 : 0.0, pooled.converged ? pooled.beta1 : 0.0, 0.0};
    double f = neg_ll(theta);
    fit.start_log_likelihood = -f;
    Vec3 g = neg_grad(theta);
    Mat3 H{};  // inverse Hessian approximation
    for (int i = 0; i < 3; ++i) H[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] = 1.0;
    bool first = true;
    bool converged = false;
    bool hit_floor = false;
    int it = 0;
    for (; it < config.max_outer_iterations; ++it) {
        if (max_abs(g) < config.gradient_tolerance) {
            converged = true;
            break;
        }
        Vec3 dir{};
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j) dir[i] -= H[i][j] * g[j];
        double slope = dir[0] * g[0] + dir[1] * g[1] + dir[2] * g[2];
        if (!(slope < 0)) {  // reset to steepest descent
            H = {};
            for (std::size_t i = 0; i < 3; ++i) H[i][i] = 1.0;
            dir = {-g[0], -g[1], -g[2]};
            slope = -(g[0] * g[0] + g[1] * g[1] + g[2] * g[2]);
            first = true;
        }
        // Predicted decrease below what the objective can resolve.
        if (!first && -slope < config.relative_decrease_tolerance * (1 + std::abs(f))) {
            converged = true;
            break;
        }
        double step = 1.0;
        Vec3 next{};
        double fn = 0;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            for (std::size_t i = 0; i < 3; ++i) next[i] = theta[i] + step * dir[i];
            next[2] = std::max(next[2], kLogSigmaFloor);
            fn = neg_ll(next);
            if (std::isfinite(fn) && fn <= f + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;
        const Vec3 gn = neg_grad(next);
        const Vec3 sv{next[0] - theta[0], next[1] - theta[1], next[2] - theta[2]};
        const Vec3 yv{gn[0] - g[0], gn[1] - g[1], gn[2] - g[2]};
        const double sy = sv[0] * yv[0] + sv[1] * yv[1] + sv[2] * yv[2];
        if (sy > 1e-12) {
            if (first) {
                const double yy = yv[0] * yv[0] + yv[1] * yv[1] + yv[2] * yv[2];
                for (std::size_t i = 0; i < 3; ++i) H[i][i] = sy / yy;
                first = false;
            }
            const double rho = 1.0 / sy;
            Vec3 Hy{};
            for (std::size_t i = 0; i < 3; ++i)
                for (std::size_t j = 0; j < 3; ++j) Hy[i] += H[i][j] * yv[j];
            const double yHy = yv[0] * Hy[0] + yv[1] * Hy[1] + yv[2] * Hy[2];
            for (std::size_t i = 0; i < 3; ++i)
                for (std::size_t j = 0; j < 3; ++j)
                    H[i][j] += (1 + rho * yHy) * rho * sv[i] * sv[j] - rho * (Hy[i] * sv[j] + sv[i] * Hy[j]);
        }
        theta = next;
        f = fn;
        g = gn;
        if (theta[2] <= kLogSigmaFloor) {
            hit_floor = true;
            ++it;
            break;
        }
    }
    fit.iterations = it;

    // sigma_u = 0 lies outside the log parameterization; compare against it.
    const bool boundary_better = pooled.converged && pooled.log_likelihood >= -f - 1e-9;
    if (hit_floor || boundary_better) {
        fit.at_boundary = true;
        fit.beta0 = pooled.beta0;
        fit.beta1 = pooled.beta1;
        fit.sigma_u = 0;
        fit.se_beta0 = pooled.se_beta0;
        fit.se_beta1 = pooled.se_beta1;
        fit.cov_beta01 = pooled.cov_beta01;
        fit.log_likelihood = pooled.log_likelihood;
        // A pooled optimum is stationary for beta, and the variance score at
        // zero is non-positive whenever the boundary wins.
        fit.converged = pooled.converged;
        fit.diagnostics.push_back("random-intercept variance estimated at the boundary (sigma_u = 0)");
        return fit;
    }

    fit.beta0 = theta[0];
    fit.beta1 = theta[1];
    fit.sigma_u = std::exp(theta[2]);
    fit.log_likelihood = -f;
    fit.converged = converged;
    if (!converged) fit.diagnostics.push_back("outer optimizer stopped before reaching the gradient tolerance");

    // Observed information by central differences of the analytic gradient.
    Mat3 hess{};
    for (std::size_t j = 0; j < 3; ++j) {
        const double h = 1e-5 * std::max(1.0, std::abs(theta[j]));
        Vec3 tp = theta, tm = theta;
        tp[j] += h;
        tm[j] -= h;
        const Vec3 gp = neg_grad(tp), gm = neg_grad(tm);
        for (std::size_t i = 0; i < 3; ++i) hess[i][j] = (gp[i] - gm[i]) / (2 * h);
    }
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = i + 1; j < 3; ++j) hess[i][j] = hess[j][i] = 0.5 * (hess[i][j] + hess[j][i]);
    Mat3 cov{};
    if (invert3(hess, cov) && cov[0][0] > 0 && cov[1][1] > 0) {
        fit.se_beta0 = std::sqrt(cov[0][0]);
        fit.se_beta1 = std::sqrt(cov[1][1]);
        fit.cov_beta01 = cov[0][1];
    } else {
        fit.se_beta0 = fit.se_beta1 = std::numeric_limits<double>::quiet_NaN();
        fit.converged = false;
        fit.diagnostics.push_back("observed information is singular; standard errors unavailable");
    }
    return fit;
}

GaussHermiteRule gauss_hermite(int points) {
    if (points < 1) throw std::invalid_argument("Gauss-Hermite rule needs at least one point");
    const auto n = static_cast<std::size_t>(points);
    GaussHermiteRule rule;
    rule.nodes.assign(n, 0.0);
    rule.weights.assign(n, 0.0);
    const double pim4 = 1.0 / std::pow(std::numbers::pi, 0.25);
    const std::size_t m = (n + 1) / 2;
    double z = 0;
    for (std::size_t i = 0; i < m; ++i) {
        // Initial guesses for the largest roots first.
        if (i == 0)
            z = std::sqrt(2.0 * points + 1) - 1.85575 * std::pow(2.0 * points + 1, -0.16667);
        else if (i == 1)
            z -= 1.14 * std::pow(static_cast<double>(points), 0.426) / z;
        else if (i == 2)
            z = 1.86 * z - 0.86 * rule.nodes[0];
        else if (i == 3)
            z = 1.91 * z - 0.91 * rule.nodes[1];
        else
            z = 2.0 * z - rule.nodes[i - 2];
        double pp = 0;
        for (int its = 0; its < 100; ++its) {
            double p1 = pim4, p2 = 0;
            for (int j = 1; j <= points; ++j) {
                const double p3 = p2;
                p2 = p1;
                p1 = z * std::sqrt(2.0 / j) * p2 - std::sqrt(static_cast<double>(j - 1) / j) * p3;
            }
            pp = std::sqrt(2.0 * points) * p2;
            const double z1 = z;
            z = z1 - p1 / pp;
            if (std::abs(z - z1) <= 1e-15 * std::max(1.0, std::abs(z))) break;
        }
        rule.nodes[i] = z;
        rule.nodes[n - 1 - i] = -z;
        rule.weights[i] = 2.0 / (pp * pp);
        rule.weights[n - 1 - i] = rule.weights[i];
    }
    return rule;
}

double gh_loglik(std::span<const OutcomeRecord> records, double beta0, double beta1, double sigma_u, int points) {
    if (points < 5) throw std::invalid_argument("gh_loglik needs at least 5 quadrature points");
    struct Obs {
        int x;
        int y;
    };
    std::map<std::string, std::vector<Obs>> by;
    for (const auto& r : records) by[r.learner_id].push_back({r.flagged ? 1 : 0, r.mcq_correct ? 1 : 0});

    auto cond_ll = [&](const std::vector<Obs>& obs, double u) {
        double ll = 0;
        for (const auto& o : obs) {
            const double eta = beta0 + beta1 * o.x + u;
            ll += o.y * eta - log1p_exp(eta);
        }
        return ll;
    };
    if (sigma_u <= 0) {
        double ll = 0;
        for (const auto& [_, obs] : by) ll += cond_ll(obs, 0.0);
        return ll;
    }

    const double s = sigma_u * sigma_u;
    const auto rule = gauss_hermite(points);
    double total = 0;
    for (const auto& [_, obs] : by) {
        // Mode and curvature of the integrand on the log scale.
        auto score = [&](double v, double& curvature) {
            double g = -v / s;
            curvature = 1.0 / s;
            for (const auto& o : obs) {
                const double p = inverse_logit(beta0 + beta1 * o.x + v);
                g += o.y - p;
                curvature += p * (1 - p);
            }
            return g;
        };
        double u = 0;
        double curv = 0;
        double g = score(u, curv);
        for (int it = 0; it < 200 && g != 0; ++it) {
            double step = g / curv;
            double nc = 0;
            double ng = score(u + step, nc);
            while (std::abs(ng) > std::abs(g) && std::abs(step) > 1e-15 * (1 + std::abs(u))) {
                step *= 0.5;
                ng = score(u + step, nc);
            }
            u += step;
            g = ng;
            curv = nc;
            if (std::abs(step) < 1e-13 * (1 + std::abs(u))) break;
        }
        score(u, curv);
        const double scale = std::sqrt(2.0 / curv);
        std::vector<double> terms;
        terms.reserve(rule.nodes.size());
        for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
            const double t = rule.nodes[k];
            const double v = u + scale * t;
            const double log_prior = -0.5 * std::log(2 * std::numbers::pi * s) - v * v / (2 * s);
            terms.push_back(std::log(rule.weights[k]) + t * t + cond_ll(obs, v) + log_prior);
        }
        const double mx = *std::max_element(terms.begin(), terms.end());
        double acc = 0;
        for (double t : terms) acc += std::exp(t - mx);
        total += std::log(scale) + mx + std::log(acc);
    }
    return total;
}

EffectSummary effect_summary(const MixedModelFit& fit) {
    if (!fit.converged || !std::isfinite(fit.se_beta1) || !std::isfinite(fit.se_beta0)) throw NotConverged();
    constexpr double kZ = 1.96;
    EffectSummary s;
    s.odds_ratio = std::exp(fit.beta1);
    s.odds_ratio_ci95 = {std::exp(fit.beta1 - kZ * fit.se_beta1), std::exp(fit.beta1 + kZ * fit.se_beta1)};
    s.z = fit.beta1 / fit.se_beta1;
    s.p_value = std::erfc(std::abs(s.z) / std::numbers::sqrt2);

    const double q = fit.flagged_share;
    const double var_f = fit.beta1 * fit.beta1 * q * (1 - q);
    s.r2_marginal = var_f / (var_f + fit.sigma_u * fit.sigma_u + std::numbers::pi * std::numbers::pi / 3);

    const double eta0 = fit.beta0;
    const double eta1 = fit.beta0 + fit.beta1;
    const double se0 = fit.se_beta0;
    const double se1 = std::sqrt(std::max(
        0.0, fit.se_beta0 * fit.se_beta0 + fit.se_beta1 * fit.se_beta1 + 2 * fit.cov_beta01));
    s.prob_unflagged = inverse_logit(eta0);
    s.prob_unflagged_ci95 = {inverse_logit(eta0 - kZ * se0), inverse_logit(eta0 + kZ * se0)};
    s.prob_flagged = inverse_logit(eta1);
    s.prob_flagged_ci95 = {inverse_logit(eta1 - kZ * se1), inverse_logit(eta1 + kZ * se1)};
    return s;
}

JoinResult join_outcomes(const Corpus& corpus, const std::map<std::string, Label>& verdicts) {
    JoinResult out;
    std::set<std::pair<std::string, std::string>> seen;
    std::vector<std::string> duplicates;
    for (const auto& r : corpus) {
        if (!r.mcq_correct) {
            ++out.skipped_without_mcq;
            continue;
        }
        auto it = verdicts.find(r.response_id);
        if (it == verdicts.end()) throw DataError("no verdict for response '" + r.response_id + "'");
        if (!seen.emplace(r.learner_id, r.item_id).second)
            duplicates.push_back("(" + r.learner_id + ", " + r.item_id + ")");
        out.records.push_back({r.learner_id, r.item_id, it->second == Label::LLM, *r.mcq_correct});
    }
    if (!duplicates.empty()) {
        std::string msg = "duplicate (learner, item) pairs:";
        for (const auto& d : duplicates) msg += " " + d;
        throw DataError(msg);
    }
    return out;
}

std::map<std::string, Label> load_verdicts_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open verdict file '" + path.string() + "'");
    csv::Reader reader(in);
    const auto header = reader.next();
    if (!header || header->fields.size() < 2 || header->fields[0] != "response_id" || header->fields[1] != "label")
        throw ParseError(path.string(), 1, "verdict file header must be 'response_id,label'");
    std::map<std::string, Label> out;
    while (auto rec = reader.next()) {
        if (rec->fields.size() == 1 && rec->fields[0].empty()) continue;
        if (rec->fields.size() < 2) throw ParseError(path.string(), rec->line, "expected response_id,label");
        auto l = parse_label(rec->fields[1]);
        if (!l) throw ParseError(path.string(), rec->line, "unknown label token '" + rec->fields[1] + "'");
        if (!out.emplace(rec->fields[0], *l).second)
            throw ParseError(path.string(), rec->line, "duplicate response_id '" + rec->fields[0] + "'");
    }
    return out;
}

json fit_to_json(const MixedModelFit& fit, const EffectSummary* s) {
    json j = {{"format", "llmdetect.glmm"},
              {"version", 1},
              {"beta0", fit.beta0},
              {"beta1", fit.beta1},
              {"sigma_u", fit.sigma_u},
              {"se_beta0", fit.se_beta0},
              {"se_beta1", fit.se_beta1},
              {"cov_beta01", fit.cov_beta01},
              {"log_likelihood", fit.log_likelihood},
              {"converged", fit.converged},
              {"at_boundary", fit.at_boundary},
              {"iterations", fit.iterations},
              {"n_learners", fit.n_learners},
              {"n_observations", fit.n_observations},
              {"diagnostics", fit.diagnostics}};
    if (s) {
        auto iv = [](const Interval& i) { return json::array({i.low, i.high}); };
        j["effect"] = {{"odds_ratio", s->odds_ratio},
                       {"odds_ratio_ci95", iv(s->odds_ratio_ci95)},
                       {"z", s->z},
                       {"p_value", s->p_value},
                       {"r2_marginal", s->r2_marginal},
                       {"prob_unflagged", s->prob_unflagged},
                       {"prob_unflagged_ci95", iv(s->prob_unflagged_ci95)},
                       {"prob_flagged", s->prob_flagged},
                       {"prob_flagged_ci95", iv(s->prob_flagged_ci95)}};
    }
    return j;
}

std::string render_effect_text(const MixedModelFit& fit, const EffectSummary& s) {
    char buf[512];
    std::ostringstream out;
    std::snprintf(buf, sizeof buf, "Mixed-effects logistic regression (%zu observations, %zu learners)\n",
                  fit.n_observations, fit.n_learners);
    out << buf;
    std::snprintf(buf, sizeof buf, "  beta0 = %.4f (SE %.4f), beta1 = %.4f (SE %.4f), sigma_u = %.4f\n", fit.beta0,
                  fit.se_beta0, fit.beta1, fit.se_beta1, fit.sigma_u);
    out << buf;
    const std::string p = s.p_value < 0.001 ? "p < .001" : [&] {
        char pb[32];
        std::snprintf(pb, sizeof pb, "p = %.3f", s.p_value);
        return std::string(pb);
    }();
    std::snprintf(buf, sizeof buf, "  OR = %.2f, 95%% CI [%.2f, %.2f], %s\n", s.odds_ratio, s.odds_ratio_ci95.low,
                  s.odds_ratio_ci95.high, p.c_str());
    out << buf;
    std::snprintf(buf, sizeof buf, "  marginal R^2 = %.3f\n", s.r2_marginal);
    out << buf;
    std::snprintf(buf, sizeof buf, "  P(correct | not flagged) = %.3f, 95%% CI [%.3f, %.3f]\n", s.prob_unflagged,
                  s.prob_unflagged_ci95.low, s.prob_unflagged_ci95.high);
    out << buf;
    std::snprintf(buf, sizeof buf, "  P(correct | flagged)     = %.3f, 95%% CI [%.3f, %.3f]\n", s.prob_flagged,
                  s.prob_flagged_ci95.low, s.prob_flagged_ci95.high);
    out << buf;
    for (const auto& d : fit.diagnostics) out << "  note: " << d << '\n';
    return out.str();
}

}  // namespace llmdetect
