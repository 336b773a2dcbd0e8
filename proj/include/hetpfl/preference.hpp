#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <utility>
#include <vector>

#include "hetpfl/errors.hpp"
#include "hetpfl/hypervolume.hpp"

namespace hetpfl {

inline constexpr double kEpsilonLambda = 1e-3;
inline constexpr double kAlphaMin = 0.1;
inline constexpr double kAlphaMax = 50.0;
inline constexpr double kSimplexTol = 1e-9;

/// Trade-off weights on the 2-simplex: components sum to 1 and each stays
/// at or above kEpsilonLambda so scalarized losses remain bounded.
struct PreferenceVector {
    double l1 = 0.5;
    double l2 = 0.5;

    static PreferenceVector of(double l1, double l2) {
        if (std::fabs(l1 + l2 - 1.0) > kSimplexTol)
            throw ContractError("preference vector off the simplex: sum differs from 1 by more "
                                "than 1e-9");
        if (l1 < kEpsilonLambda - 1e-15 || l2 < kEpsilonLambda - 1e-15)
            throw ContractError("preference component below the 1e-3 floor");
        return PreferenceVector{l1, l2};
    }

    /// Clamp the first component into [eps, 1-eps] and renormalize.
    static PreferenceVector clamped(double raw_l1) {
        double l1 = std::clamp(raw_l1, kEpsilonLambda, 1.0 - kEpsilonLambda);
        return PreferenceVector{l1, 1.0 - l1};
    }
};

/// Per-client Dirichlet concentration parameters, kept inside
/// [kAlphaMin, kAlphaMax] by every update.
struct DirichletParams {
    double a1 = 1.0;
    double a2 = 1.0;

    bool valid() const {
        return a1 >= kAlphaMin && a1 <= kAlphaMax && a2 >= kAlphaMin && a2 <= kAlphaMax;
    }
};

/// A sampled preference batch together with the loss vector each preference
/// induced (evaluated on a fixed batch) and the parameters it was drawn from.
struct PrefBatch {
    DirichletParams alpha;
    std::vector<PreferenceVector> lambdas;
    std::vector<Point2> losses;  // (ce, fair) per lambda

    std::size_t size() const { return lambdas.size(); }
};

/// i.i.d. draws via normalized Gamma variates, then clamped to the
/// epsilon-floored simplex. Rejection-free.
inline std::vector<PreferenceVector> sample_dirichlet(const DirichletParams& alpha, std::size_t n,
                                                      std::mt19937_64& rng) {
    if (!alpha.valid()) throw ContractError("sample_dirichlet: alpha outside [0.1, 50]");
    if (n == 0) throw ContractError("sample_dirichlet: need at least one draw");
    std::gamma_distribution<double> g1(alpha.a1, 1.0);
    std::gamma_distribution<double> g2(alpha.a2, 1.0);
    std::vector<PreferenceVector> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        double x1 = g1(rng);
        double x2 = g2(rng);
        double s = x1 + x2;
        out.push_back(s > 0.0 ? PreferenceVector::clamped(x1 / s)
                              : PreferenceVector{0.5, 0.5});
    }
    return out;
}

/**
 * Digamma via upward recurrence to x >= 10 followed by the asymptotic
 * series. Absolute error below 1e-10 on [0.1, 100].
 */
inline double digamma(double x) {
    if (!(x > 0.0)) throw std::domain_error("digamma: argument must be positive");
    double acc = 0.0;
    while (x < 10.0) {
        acc -= 1.0 / x;
        x += 1.0;
    }
    double inv = 1.0 / x;
    double inv2 = inv * inv;
    // ln x - 1/(2x) - sum B_{2n} / (2n x^{2n})
    double series = std::log(x) - 0.5 * inv -
                    inv2 * (1.0 / 12.0 -
                            inv2 * (1.0 / 120.0 -
                                    inv2 * (1.0 / 252.0 -
                                            inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0)))));
    return acc + series;
}

/// Gradient of the Dirichlet log-density w.r.t. its concentration:
/// component i is log(lambda_i) - psi(alpha_i) + psi(alpha_1 + alpha_2).
inline std::pair<double, double> log_density_grad(const DirichletParams& alpha,
                                                  const PreferenceVector& lam) {
    double psi_sum = digamma(alpha.a1 + alpha.a2);
    return {std::log(lam.l1) - digamma(alpha.a1) + psi_sum,
            std::log(lam.l2) - digamma(alpha.a2) + psi_sum};
}

/**
 * Score-function estimate of the gradient of E[score(lambda)] w.r.t. alpha:
 * (1/N) sum_v (score_v - b_v) * grad_alpha log p(lambda_v | alpha), where
 * b_v is the batch mean of the other N-1 scores. The leave-one-out form
 * keeps the estimator unbiased (a same-sample mean would shrink the
 * expectation by 1 - 1/N) while taming the variance of tiny batches.
 */
inline std::pair<double, double> nes_gradient_from_scores(
    const DirichletParams& alpha, const std::vector<PreferenceVector>& lambdas,
    const std::vector<double>& scores) {
    if (lambdas.size() != scores.size() || lambdas.size() < 2)
        throw ContractError("nes_gradient: need >= 2 (lambda, score) pairs");
    double total = 0.0;
    for (double s : scores) total += s;
    double n = static_cast<double>(lambdas.size());
    double g1 = 0.0, g2 = 0.0;
    for (std::size_t v = 0; v < lambdas.size(); ++v) {
        auto [d1, d2] = log_density_grad(alpha, lambdas[v]);
        double baseline = (total - scores[v]) / (n - 1.0);
        double w = scores[v] - baseline;
        g1 += w * d1;
        g2 += w * d2;
    }
    return {g1 / n, g2 / n};
}

/// NES gradient of the objective E[-HVC] for a collected preference batch.
inline std::pair<double, double> nes_gradient(const PrefBatch& batch, RefPoint r = {}) {
    if (batch.size() < 2 || batch.losses.size() != batch.size())
        throw ContractError("nes_gradient: preference batch needs >= 2 entries with losses");
    std::vector<double> scores(batch.size());
    for (std::size_t v = 0; v < batch.size(); ++v) scores[v] = -hvc(v, batch.losses, r);
    return nes_gradient_from_scores(batch.alpha, batch.lambdas, scores);
}

/// Plain clamped gradient step on the concentration parameters.
inline DirichletParams update_alpha(const DirichletParams& alpha,
                                    std::pair<double, double> grad, double lr) {
    if (!(lr > 0.0)) throw ContractError("update_alpha: learning rate must be positive");
    if (!std::isfinite(grad.first) || !std::isfinite(grad.second))
        throw NumericError("update_alpha: non-finite gradient");
    return DirichletParams{std::clamp(alpha.a1 - lr * grad.first, kAlphaMin, kAlphaMax),
                           std::clamp(alpha.a2 - lr * grad.second, kAlphaMin, kAlphaMax)};
}

/// Even grid of m interior preferences used for front evaluation; grids with
/// (m-1) | (m'-1) are nested, making hypervolume monotone under refinement.
inline std::vector<PreferenceVector> preference_grid(std::size_t m) {
    if (m < 2) throw ContractError("preference_grid: need at least 2 points");
    std::vector<PreferenceVector> out;
    out.reserve(m);
    double span = 1.0 - 2.0 * kEpsilonLambda;
    for (std::size_t i = 0; i < m; ++i) {
        double l1 = kEpsilonLambda + span * static_cast<double>(i) / static_cast<double>(m - 1);
        out.push_back(PreferenceVector{l1, 1.0 - l1});
    }
    return out;
}

}  // namespace hetpfl
