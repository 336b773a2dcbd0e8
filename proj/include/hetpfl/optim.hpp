#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "hetpfl/tensor.hpp"

namespace hetpfl {

/// Adam with the usual defaults and bias correction.
struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    long step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState for_params(const std::vector<Tensor*>& params) {
        AdamState s;
        s.m.reserve(params.size());
        s.v.reserve(params.size());
        for (const Tensor* p : params) {
            s.m.push_back(Tensor::zeros(p->shape));
            s.v.push_back(Tensor::zeros(p->shape));
        }
        return s;
    }
};

inline void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
                      AdamState& state, double lr,
                      const std::vector<std::string>* names = nullptr) {
    if (lr <= 0.0) throw ContractError("adam_step: learning rate must be positive");
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw DimensionError("adam_step: " + std::to_string(params.size()) + " params vs " +
                             std::to_string(grads.size()) + " grads vs " +
                             std::to_string(state.m.size()) + " state slots");
    for (std::size_t i = 0; i < params.size(); ++i) {
        require_same_shape(*params[i], grads[i], "adam_step");
        if (!grads[i].all_finite()) {
            std::string who = names && i < names->size() ? (*names)[i]
                                                         : "param[" + std::to_string(i) + "]";
            throw NumericError("adam_step: non-finite gradient for " + who);
        }
    }
    state.step += 1;
    double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = grads[i];
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        for (std::size_t j = 0; j < p.numel(); ++j) {
            m.data[j] = state.beta1 * m.data[j] + (1.0 - state.beta1) * g.data[j];
            v.data[j] = state.beta2 * v.data[j] + (1.0 - state.beta2) * g.data[j] * g.data[j];
            double mhat = m.data[j] / bc1;
            double vhat = v.data[j] / bc2;
            p.data[j] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

}  // namespace hetpfl
