#pragma once

#include <cmath>
#include <vector>

#include "hetpfl/autodiff.hpp"
#include "hetpfl/preference.hpp"
#include "hetpfl/tensor.hpp"

namespace hetpfl {

/// The two training objectives: cross-entropy and the covariance-magnitude
/// fairness penalty. Both finite; fair is kept >= 0 (see fair_loss).
struct LossVector {
    double ce = 0.0;
    double fair = 0.0;

    Point2 as_point() const { return Point2{ce, fair}; }
};

namespace detail {

inline void require_binary(const std::vector<int>& v, const char* what) {
    for (int x : v)
        if (x != 0 && x != 1) throw ContractError(std::string(what) + ": entries must be 0/1");
}

inline bool has_both_groups(const std::vector<int>& sensitive) {
    bool saw0 = false, saw1 = false;
    for (int a : sensitive) (a ? saw1 : saw0) = true;
    return saw0 && saw1;
}

inline void require_preds(const Tensor& preds, std::size_t n, const char* op) {
    if (preds.shape.size() != 1 || preds.shape[0] != n)
        throw DimensionError(std::string(op) + ": predictions " + preds.shape_str() +
                             " vs " + std::to_string(n) + " targets");
}

inline void check_lambda(const PreferenceVector& lam) {
    if (lam.l1 < kEpsilonLambda - 1e-15 || lam.l2 < kEpsilonLambda - 1e-15)
        throw ContractError("tch_loss: preference component below the 1e-3 floor");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Plain value path (evaluation / telemetry).
// ---------------------------------------------------------------------------

/// Mean binary cross-entropy with log arguments floored at 1e-12.
inline double ce_loss(const Tensor& preds, const std::vector<int>& labels) {
    if (labels.empty()) throw ContractError("ce_loss: empty batch");
    detail::require_binary(labels, "ce_loss labels");
    detail::require_preds(preds, labels.size(), "ce_loss");
    double s = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        double p = preds.at(i);
        s -= labels[i] ? std::log(std::max(p, kLogFloor))
                       : std::log(std::max(1.0 - p, kLogFloor));
    }
    return s / static_cast<double>(labels.size());
}

/// Magnitude of the empirical covariance between the sensitive attribute and
/// the predictions, with batch-mean centering.
inline double fair_loss(const Tensor& preds, const std::vector<int>& sensitive) {
    if (sensitive.size() < 2) throw ContractError("fair_loss: batch needs >= 2 rows");
    detail::require_binary(sensitive, "fair_loss sensitive");
    detail::require_preds(preds, sensitive.size(), "fair_loss");
    if (!detail::has_both_groups(sensitive))
        throw ContractError("fair_loss: batch contains a single sensitive group");
    double n = static_cast<double>(sensitive.size());
    double abar = 0.0, pbar = 0.0;
    for (std::size_t i = 0; i < sensitive.size(); ++i) {
        abar += sensitive[i];
        pbar += preds.at(i);
    }
    abar /= n;
    pbar /= n;
    double cov = 0.0;
    for (std::size_t i = 0; i < sensitive.size(); ++i)
        cov += (sensitive[i] - abar) * (preds.at(i) - pbar);
    return std::fabs(cov / n);
}

/// Weighted Tchebycheff scalarization: max(ce / l1, fair / l2).
inline double tch_loss(const LossVector& l, const PreferenceVector& lam) {
    detail::check_lambda(lam);
    return std::max(l.ce / lam.l1, l.fair / lam.l2);
}

/// Batch-robust value form: zero for a single-group batch, where the
/// covariance is identically zero.
inline double fair_loss_or_zero(const Tensor& preds, const std::vector<int>& sensitive) {
    if (!detail::has_both_groups(sensitive)) return 0.0;
    return fair_loss(preds, sensitive);
}

// ---------------------------------------------------------------------------
// Tape path (training). Same formulas, expressed as tape nodes.
// ---------------------------------------------------------------------------

inline Tape::NodeId ce_loss_node(Tape& t, Tape::NodeId preds, const std::vector<int>& labels) {
    if (labels.empty()) throw ContractError("ce_loss: empty batch");
    detail::require_binary(labels, "ce_loss labels");
    detail::require_preds(t.value(preds), labels.size(), "ce_loss");
    std::vector<double> y(labels.begin(), labels.end());
    std::vector<double> ym(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) ym[i] = 1.0 - y[i];
    Tape::NodeId logp = t.log_floored(preds);
    Tape::NodeId log1mp = t.log_floored(t.add_const(t.scale(preds, -1.0), 1.0));
    Tape::NodeId term = t.add(t.mul_const(logp, Tensor::vec(std::move(y))),
                              t.mul_const(log1mp, Tensor::vec(std::move(ym))));
    return t.scale(t.mean(term), -1.0);
}

/// Batch-robust fairness node: for a single-group batch the covariance is
/// identically zero, so a constant zero is returned instead of failing.
inline Tape::NodeId fair_loss_node_or_zero(Tape& t, Tape::NodeId preds,
                                           const std::vector<int>& sensitive) {
    if (sensitive.size() < 2) throw ContractError("fair_loss: batch needs >= 2 rows");
    detail::require_binary(sensitive, "fair_loss sensitive");
    detail::require_preds(t.value(preds), sensitive.size(), "fair_loss");
    if (!detail::has_both_groups(sensitive)) return t.input(Tensor::scalar(0.0));
    double n = static_cast<double>(sensitive.size());
    double abar = 0.0;
    for (int a : sensitive) abar += a;
    abar /= n;
    std::vector<double> centered(sensitive.size());
    for (std::size_t i = 0; i < sensitive.size(); ++i) centered[i] = sensitive[i] - abar;
    Tape::NodeId p_centered = t.sub(preds, t.spread(t.mean(preds), sensitive.size()));
    Tape::NodeId cov = t.mean(t.mul_const(p_centered, Tensor::vec(std::move(centered))));
    return t.abs(cov);
}

inline Tape::NodeId fair_loss_node(Tape& t, Tape::NodeId preds,
                                   const std::vector<int>& sensitive) {
    if (!detail::has_both_groups(sensitive))
        throw ContractError("fair_loss: batch contains a single sensitive group");
    return fair_loss_node_or_zero(t, preds, sensitive);
}

/// Gradient flows only through the attaining branch; ties go to the
/// cross-entropy branch.
inline Tape::NodeId tch_loss_node(Tape& t, Tape::NodeId ce, Tape::NodeId fair,
                                  const PreferenceVector& lam) {
    detail::check_lambda(lam);
    return t.max2(t.scale(ce, 1.0 / lam.l1), t.scale(fair, 1.0 / lam.l2));
}

}  // namespace hetpfl
