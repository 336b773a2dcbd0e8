#pragma once

// Shared test-only helpers. The finite-difference oracle lives here so it
// stays independent of the tape implementation it is used to check.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "hetpfl/tensor.hpp"

namespace testutil {

inline constexpr double kFdStep = 1e-5;

/// Central finite differences of a scalar function w.r.t. every entry of
/// every parameter tensor.
inline std::vector<hetpfl::Tensor> finite_diff(
    const std::function<double(const std::vector<hetpfl::Tensor>&)>& f,
    std::vector<hetpfl::Tensor> params, double h = kFdStep) {
    std::vector<hetpfl::Tensor> grads;
    grads.reserve(params.size());
    for (std::size_t p = 0; p < params.size(); ++p) {
        hetpfl::Tensor g = hetpfl::Tensor::zeros(params[p].shape);
        for (std::size_t i = 0; i < params[p].numel(); ++i) {
            double orig = params[p].data[i];
            params[p].data[i] = orig + h;
            double up = f(params);
            params[p].data[i] = orig - h;
            double down = f(params);
            params[p].data[i] = orig;
            g.data[i] = (up - down) / (2.0 * h);
        }
        grads.push_back(std::move(g));
    }
    return grads;
}

/// |a - b| / max(1, |b|): relative where gradients are large, absolute near
/// zero.
inline double rel_err(double a, double b) {
    return std::fabs(a - b) / std::max(1.0, std::fabs(b));
}

inline double max_rel_err(const std::vector<hetpfl::Tensor>& got,
                          const std::vector<hetpfl::Tensor>& want) {
    double worst = 0.0;
    for (std::size_t p = 0; p < got.size(); ++p)
        for (std::size_t i = 0; i < got[p].numel(); ++i)
            worst = std::max(worst, rel_err(got[p].data[i], want[p].data[i]));
    return worst;
}

inline hetpfl::Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng,
                                    double lo = -2.0, double hi = 2.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    hetpfl::Tensor t = hetpfl::Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = u(rng);
    return t;
}

/// Random tensor with entries kept away from zero (for ops with a kink
/// there, where finite differences are not meaningful).
inline hetpfl::Tensor random_tensor_off_kink(std::vector<std::size_t> shape,
                                             std::mt19937_64& rng, double margin = 1e-3) {
    hetpfl::Tensor t = random_tensor(std::move(shape), rng);
    for (double& v : t.data)
        if (std::fabs(v) < margin) v = v < 0.0 ? -margin : margin;
    return t;
}

/// Raw (unclamped) Dirichlet draw on the 2-simplex, for checks stated
/// against the true distribution rather than the epsilon-floored sampler.
inline std::pair<double, double> raw_dirichlet2(double a1, double a2, std::mt19937_64& rng) {
    std::gamma_distribution<double> g1(a1, 1.0), g2(a2, 1.0);
    double x1 = g1(rng), x2 = g2(rng);
    double s = x1 + x2;
    return s > 0.0 ? std::pair{x1 / s, x2 / s} : std::pair{0.5, 0.5};
}

}  // namespace testutil
