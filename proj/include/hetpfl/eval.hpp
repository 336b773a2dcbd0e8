#pragma once

#include <span>
#include <string>
#include <vector>

#include "hetpfl/data.hpp"
#include "hetpfl/hypervolume.hpp"
#include "hetpfl/nets.hpp"
#include "hetpfl/preference.hpp"

namespace hetpfl {

/// Fraction of rows where the thresholded prediction disagrees with the
/// label.
inline double error_rate(const Tensor& preds, const std::vector<int>& labels,
                         double threshold = 0.5) {
    if (labels.empty()) throw ContractError("error_rate: empty input");
    if (preds.numel() != labels.size())
        throw DimensionError("error_rate: " + std::to_string(preds.numel()) +
                             " predictions vs " + std::to_string(labels.size()) + " labels");
    double wrong = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        wrong += (preds.at(i) >= threshold ? 1 : 0) != labels[i];
    return wrong / static_cast<double>(labels.size());
}

/// Demographic-parity disparity: |P(yhat=1 | a=0) - P(yhat=1 | a=1)|.
inline double dp_disparity(const Tensor& preds, const std::vector<int>& sensitive,
                           double threshold = 0.5) {
    if (sensitive.empty()) throw ContractError("dp_disparity: empty input");
    if (preds.numel() != sensitive.size())
        throw DimensionError("dp_disparity: " + std::to_string(preds.numel()) +
                             " predictions vs " + std::to_string(sensitive.size()) +
                             " sensitive entries");
    double pos[2] = {0, 0}, cnt[2] = {0, 0};
    for (std::size_t i = 0; i < sensitive.size(); ++i) {
        int g = sensitive[i] ? 1 : 0;
        cnt[g] += 1.0;
        pos[g] += preds.at(i) >= threshold ? 1.0 : 0.0;
    }
    if (cnt[0] == 0.0 || cnt[1] == 0.0)
        throw ContractError("dp_disparity: input contains a single sensitive group");
    return std::fabs(pos[0] / cnt[0] - pos[1] / cnt[1]);
}

/// One evaluated trade-off point on a front.
struct FrontPoint {
    PreferenceVector lambda;
    double error = 0.0;
    double dp = 0.0;

    Point2 as_point() const { return Point2{error, dp}; }
};

enum class FrontScope { local, global };

/// All evaluated points of one front, their dominance flags, and the
/// hypervolume w.r.t. the unit reference point.
struct FrontReport {
    FrontScope scope = FrontScope::local;
    std::size_t client = 0;  // meaningful for local scope
    std::size_t grid_size = 0;
    std::vector<FrontPoint> points;
    std::vector<bool> dominated;  // parallel to points
    double hv = 0.0;

    std::vector<Point2> metric_points() const {
        std::vector<Point2> out;
        out.reserve(points.size());
        for (const FrontPoint& p : points) out.push_back(p.as_point());
        return out;
    }
};

namespace detail {

inline FrontReport finish_report(FrontScope scope, std::size_t client,
                                 std::vector<FrontPoint> points) {
    FrontReport rep;
    rep.scope = scope;
    rep.client = client;
    rep.grid_size = points.size();
    rep.points = std::move(points);
    std::vector<Point2> metric = rep.metric_points();
    rep.dominated.assign(metric.size(), false);
    for (std::size_t i = 0; i < metric.size(); ++i)
        for (std::size_t j = 0; j < metric.size(); ++j)
            if (j != i && dominates(metric[j], metric[i])) {
                rep.dominated[i] = true;
                break;
            }
    rep.hv = hv_2d(metric, RefPoint{1.0, 1.0});
    return rep;
}

}  // namespace detail

/**
 * Front induced by one client's hypernet on a test set: evaluate the
 * preference-specific model on an even m-point grid and report
 * (error rate, DP disparity) per grid preference plus the hypervolume.
 * Deterministic: the grid is fixed, nothing is sampled.
 */
inline FrontReport local_hv_report(const CommModel& psi, const HyperNet& beta,
                                   const Dataset& test, std::size_t client, std::size_t m = 1000) {
    Tensor latents = comm_forward(psi, test.features);
    std::vector<FrontPoint> points;
    points.reserve(m);
    for (const PreferenceVector& lam : preference_grid(m)) {
        Tensor preds = predict_latent(latents, hyper_forward(beta, lam));
        points.push_back(
            FrontPoint{lam, error_rate(preds, test.labels), dp_disparity(preds, test.sensitive)});
    }
    return detail::finish_report(FrontScope::local, client, std::move(points));
}

/**
 * Global front: for each grid preference, fuse the client hypernets with the
 * given weights rule and evaluate on the union of all clients' test sets
 * through the final global encoder.
 */
inline FrontReport global_hv_report(const CommModel& psi, std::span<const HyperNet> hypernets,
                                    const FusionNet* fusion, const Dataset& union_test,
                                    std::size_t m = 1000) {
    Tensor latents = comm_forward(psi, union_test.features);
    std::vector<FrontPoint> points;
    points.reserve(m);
    std::vector<double> uniform(hypernets.size(),
                                1.0 / static_cast<double>(hypernets.size()));
    for (const PreferenceVector& lam : preference_grid(m)) {
        std::vector<double> omega = fusion ? fusion_weights(*fusion, lam) : uniform;
        HyperNet fused = fuse(omega, hypernets);
        Tensor preds = predict_latent(latents, hyper_forward(fused, lam));
        points.push_back(FrontPoint{lam, error_rate(preds, union_test.labels),
                                    dp_disparity(preds, union_test.sensitive)});
    }
    return detail::finish_report(FrontScope::global, 0, std::move(points));
}

/// Concatenate datasets (used for the union of client test sets).
inline Dataset concat_datasets(std::span<const Dataset> parts) {
    if (parts.empty()) throw ContractError("concat: no datasets");
    std::size_t total = 0, d = parts.front().feature_dim();
    for (const Dataset& p : parts) {
        if (p.feature_dim() != d)
            throw DimensionError("concat: feature widths differ across datasets");
        total += p.size();
    }
    Dataset out;
    out.features = Tensor::zeros({total, d});
    out.labels.reserve(total);
    out.sensitive.reserve(total);
    std::size_t row = 0;
    for (const Dataset& p : parts) {
        for (std::size_t i = 0; i < p.size(); ++i, ++row)
            for (std::size_t c = 0; c < d; ++c) out.features.at(row, c) = p.features.at(i, c);
        out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
        out.sensitive.insert(out.sensitive.end(), p.sensitive.begin(), p.sensitive.end());
    }
    return out;
}

}  // namespace hetpfl
