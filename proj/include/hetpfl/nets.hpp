#pragma once

#include <array>
#include <cmath>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hetpfl/autodiff.hpp"
#include "hetpfl/preference.hpp"
#include "hetpfl/tensor.hpp"

namespace hetpfl {

inline constexpr std::size_t kLatentDim = 4;
inline constexpr std::size_t kHiddenDim = 4;
inline constexpr std::size_t kHeadParamCount = kLatentDim + 1;  // weight[4] + bias

namespace detail {

/// Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)], seeded.
inline Tensor init_linear(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Tensor w = Tensor::zeros({fan_in, fan_out});
    for (double& v : w.data) v = u(rng);
    return w;
}

inline Tensor init_bias(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Tensor b = Tensor::zeros({fan_out});
    for (double& v : b.data) v = u(rng);
    return b;
}

inline void check_lambda_input(const PreferenceVector& lam, const char* op) {
    if (std::fabs(lam.l1 + lam.l2 - 1.0) > kSimplexTol)
        throw ContractError(std::string(op) + ": preference vector off the simplex");
    if (lam.l1 < kEpsilonLambda - 1e-15 || lam.l2 < kEpsilonLambda - 1e-15)
        throw ContractError(std::string(op) + ": preference component below the 1e-3 floor");
}

inline Tensor lambda_row(const PreferenceVector& lam) {
    return Tensor({1, 2}, {lam.l1, lam.l2});
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Communicated encoder: features -> 4-d latent. Two ReLU linear layers.
// ---------------------------------------------------------------------------

struct CommModel {
    Tensor w1, b1, w2, b2;

    static CommModel init(std::size_t d_in, std::mt19937_64& rng) {
        CommModel m;
        m.w1 = detail::init_linear(d_in, kHiddenDim, rng);
        m.b1 = detail::init_bias(d_in, kHiddenDim, rng);
        m.w2 = detail::init_linear(kHiddenDim, kLatentDim, rng);
        m.b2 = detail::init_bias(kHiddenDim, kLatentDim, rng);
        return m;
    }

    static CommModel zeros(std::size_t d_in) {
        CommModel m;
        m.w1 = Tensor::zeros({d_in, kHiddenDim});
        m.b1 = Tensor::zeros({kHiddenDim});
        m.w2 = Tensor::zeros({kHiddenDim, kLatentDim});
        m.b2 = Tensor::zeros({kLatentDim});
        return m;
    }

    std::size_t input_dim() const { return w1.shape[0]; }

    std::vector<Tensor*> params() { return {&w1, &b1, &w2, &b2}; }
    std::vector<const Tensor*> params() const { return {&w1, &b1, &w2, &b2}; }
    static std::vector<std::string> param_names() {
        return {"psi.w1", "psi.b1", "psi.w2", "psi.b2"};
    }
};

inline Tensor comm_forward(const CommModel& m, const Tensor& x) {
    require_matrix(x, "comm_forward");
    if (x.shape[1] != m.input_dim())
        throw DimensionError("comm_forward: input width " + x.shape_str() +
                             " does not match encoder " + m.w1.shape_str());
    Tensor h = relu(add_bias(matmul(x, m.w1), m.b1));
    return relu(add_bias(matmul(h, m.w2), m.b2));
}

struct BoundComm {
    std::array<Tape::NodeId, 4> p;  // w1, b1, w2, b2
};

inline BoundComm bind(Tape& t, const CommModel& m) {
    return BoundComm{{t.input(m.w1), t.input(m.b1), t.input(m.w2), t.input(m.b2)}};
}

inline Tape::NodeId comm_forward(Tape& t, const BoundComm& m, Tape::NodeId x) {
    if (t.value(x).shape[1] != t.value(m.p[0]).shape[0])
        throw DimensionError("comm_forward: input width " + t.value(x).shape_str() +
                             " does not match encoder " + t.value(m.p[0]).shape_str());
    Tape::NodeId h = t.relu(t.add_bias(t.matmul(x, m.p[0]), m.p[1]));
    return t.relu(t.add_bias(t.matmul(h, m.p[2]), m.p[3]));
}

// ---------------------------------------------------------------------------
// Prediction head emitted by the hypernet: 5 reals = weight[4] + bias.
// ---------------------------------------------------------------------------

struct HeadParams {
    Tensor theta;  // flat [5]

    Tensor weight() const { return reshape(slice_flat(theta, 0, kLatentDim), {kLatentDim, 1}); }
    double bias() const { return theta.at(kLatentDim); }
};

/// sigmoid(latent . weight + bias) per row; output is a [b] vector in (0,1).
inline Tensor predict_latent(const Tensor& latents, const HeadParams& head) {
    require_matrix(latents, "predict_latent");
    if (latents.shape[1] != kLatentDim)
        throw DimensionError("predict_latent: latents " + latents.shape_str() +
                             " must have width 4");
    Tensor logits = matmul(latents, head.weight());
    Tensor out = Tensor::zeros({latents.shape[0]});
    for (std::size_t i = 0; i < out.numel(); ++i)
        out.at(i) = sigmoid_scalar(logits.at(i, 0) + head.bias());
    return out;
}

// ---------------------------------------------------------------------------
// Hypernet: preference vector -> head parameters.
// ---------------------------------------------------------------------------

struct HyperNet {
    Tensor w1, b1, w2, b2, w3, b3;

    static HyperNet init(std::mt19937_64& rng) {
        HyperNet h;
        h.w1 = detail::init_linear(2, kHiddenDim, rng);
        h.b1 = detail::init_bias(2, kHiddenDim, rng);
        h.w2 = detail::init_linear(kHiddenDim, kHiddenDim, rng);
        h.b2 = detail::init_bias(kHiddenDim, kHiddenDim, rng);
        h.w3 = detail::init_linear(kHiddenDim, kHeadParamCount, rng);
        h.b3 = detail::init_bias(kHiddenDim, kHeadParamCount, rng);
        return h;
    }

    static HyperNet zeros() {
        HyperNet h;
        h.w1 = Tensor::zeros({2, kHiddenDim});
        h.b1 = Tensor::zeros({kHiddenDim});
        h.w2 = Tensor::zeros({kHiddenDim, kHiddenDim});
        h.b2 = Tensor::zeros({kHiddenDim});
        h.w3 = Tensor::zeros({kHiddenDim, kHeadParamCount});
        h.b3 = Tensor::zeros({kHeadParamCount});
        return h;
    }

    std::vector<Tensor*> params() { return {&w1, &b1, &w2, &b2, &w3, &b3}; }
    std::vector<const Tensor*> params() const { return {&w1, &b1, &w2, &b2, &w3, &b3}; }
    static std::vector<std::string> param_names() {
        return {"hyper.w1", "hyper.b1", "hyper.w2", "hyper.b2", "hyper.w3", "hyper.b3"};
    }

    /// Canonical flattening order: w1, b1, w2, b2, w3, b3.
    Tensor flatten() const {
        std::vector<double> flat;
        for (const Tensor* p : params()) flat.insert(flat.end(), p->data.begin(), p->data.end());
        return Tensor::vec(std::move(flat));
    }

    static HyperNet from_flat(const Tensor& flat) {
        HyperNet h = HyperNet::zeros();
        std::size_t off = 0;
        for (Tensor* p : h.params()) {
            if (off + p->numel() > flat.numel())
                throw DimensionError("hypernet unflatten: flat vector too short");
            std::copy(flat.data.begin() + static_cast<std::ptrdiff_t>(off),
                      flat.data.begin() + static_cast<std::ptrdiff_t>(off + p->numel()),
                      p->data.begin());
            off += p->numel();
        }
        if (off != flat.numel())
            throw DimensionError("hypernet unflatten: flat vector has " +
                                 std::to_string(flat.numel()) + " entries, expected " +
                                 std::to_string(off));
        return h;
    }
};

inline HeadParams hyper_forward(const HyperNet& h, const PreferenceVector& lam) {
    detail::check_lambda_input(lam, "hyper_forward");
    Tensor x = detail::lambda_row(lam);
    Tensor a = relu(add_bias(matmul(x, h.w1), h.b1));
    Tensor b = relu(add_bias(matmul(a, h.w2), h.b2));
    Tensor theta = add_bias(matmul(b, h.w3), h.b3);
    return HeadParams{reshape(theta, {kHeadParamCount})};
}

struct BoundHyper {
    std::array<Tape::NodeId, 6> p;  // w1, b1, w2, b2, w3, b3
};

inline BoundHyper bind(Tape& t, const HyperNet& h) {
    return BoundHyper{{t.input(h.w1), t.input(h.b1), t.input(h.w2), t.input(h.b2), t.input(h.w3),
                       t.input(h.b3)}};
}

/// Rebind a flat hypernet parameter node (e.g. a fused global hypernet) into
/// per-layer views. Shares the canonical flattening order.
inline BoundHyper bind_flat_hyper(Tape& t, Tape::NodeId flat) {
    HyperNet proto = HyperNet::zeros();
    BoundHyper out{};
    std::size_t off = 0, i = 0;
    for (Tensor* p : proto.params()) {
        out.p[i++] = t.reshape(t.slice(flat, off, p->numel()), p->shape);
        off += p->numel();
    }
    if (t.value(flat).numel() != off)
        throw DimensionError("bind_flat_hyper: flat vector has " +
                             std::to_string(t.value(flat).numel()) + " entries, expected " +
                             std::to_string(off));
    return out;
}

/// Head parameters as a [5] tape node, differentiable w.r.t. the hypernet.
inline Tape::NodeId hyper_forward(Tape& t, const BoundHyper& h, const PreferenceVector& lam) {
    detail::check_lambda_input(lam, "hyper_forward");
    Tape::NodeId x = t.input(detail::lambda_row(lam));
    Tape::NodeId a = t.relu(t.add_bias(t.matmul(x, h.p[0]), h.p[1]));
    Tape::NodeId b = t.relu(t.add_bias(t.matmul(a, h.p[2]), h.p[3]));
    Tape::NodeId theta = t.add_bias(t.matmul(b, h.p[4]), h.p[5]);
    return t.reshape(theta, {kHeadParamCount});
}

/// sigmoid(latent . theta_w + theta_b) with latents given as a tape node.
inline Tape::NodeId predict_latent(Tape& t, Tape::NodeId latents, Tape::NodeId theta) {
    std::size_t b = t.value(latents).shape[0];
    Tape::NodeId w = t.reshape(t.slice(theta, 0, kLatentDim), {kLatentDim, 1});
    Tape::NodeId bias = t.slice(theta, kLatentDim, 1);
    Tape::NodeId logits = t.add(t.reshape(t.matmul(latents, w), {b}), t.spread(bias, b));
    return t.sigmoid(logits);
}

// ---------------------------------------------------------------------------
// Full preference-specific classifier: encoder + hypernet-emitted head.
// ---------------------------------------------------------------------------

inline Tensor predict(const CommModel& psi, const HyperNet& beta, const PreferenceVector& lam,
                      const Tensor& x) {
    return predict_latent(comm_forward(psi, x), hyper_forward(beta, lam));
}

inline Tape::NodeId predict(Tape& t, const BoundComm& psi, const BoundHyper& beta,
                            const PreferenceVector& lam, Tape::NodeId x) {
    Tape::NodeId latents = comm_forward(t, psi, x);
    return predict_latent(t, latents, hyper_forward(t, beta, lam));
}

// ---------------------------------------------------------------------------
// FusionNet: preference vector -> positive per-client fusion weights.
// ---------------------------------------------------------------------------

struct FusionNet {
    Tensor w1, b1, w2, b2, w3, b3;

    static FusionNet init(std::size_t clients, std::mt19937_64& rng) {
        FusionNet f;
        f.w1 = detail::init_linear(2, kHiddenDim, rng);
        f.b1 = detail::init_bias(2, kHiddenDim, rng);
        f.w2 = detail::init_linear(kHiddenDim, kHiddenDim, rng);
        f.b2 = detail::init_bias(kHiddenDim, kHiddenDim, rng);
        f.w3 = detail::init_linear(kHiddenDim, clients, rng);
        f.b3 = detail::init_bias(kHiddenDim, clients, rng);
        return f;
    }

    static FusionNet zeros(std::size_t clients) {
        FusionNet f;
        f.w1 = Tensor::zeros({2, kHiddenDim});
        f.b1 = Tensor::zeros({kHiddenDim});
        f.w2 = Tensor::zeros({kHiddenDim, kHiddenDim});
        f.b2 = Tensor::zeros({kHiddenDim});
        f.w3 = Tensor::zeros({kHiddenDim, clients});
        f.b3 = Tensor::zeros({clients});
        return f;
    }

    std::size_t client_count() const { return w3.shape[1]; }

    std::vector<Tensor*> params() { return {&w1, &b1, &w2, &b2, &w3, &b3}; }
    std::vector<const Tensor*> params() const { return {&w1, &b1, &w2, &b2, &w3, &b3}; }
    static std::vector<std::string> param_names() {
        return {"fusion.w1", "fusion.b1", "fusion.w2", "fusion.b2", "fusion.w3", "fusion.b3"};
    }
};

/// Softmax over the K logits: strictly positive weights summing to 1.
inline std::vector<double> fusion_weights(const FusionNet& f, const PreferenceVector& lam) {
    detail::check_lambda_input(lam, "fusion_weights");
    Tensor x = detail::lambda_row(lam);
    Tensor a = relu(add_bias(matmul(x, f.w1), f.b1));
    Tensor b = relu(add_bias(matmul(a, f.w2), f.b2));
    Tensor logits = reshape(add_bias(matmul(b, f.w3), f.b3), {f.client_count()});
    return softmax(logits).data;
}

struct BoundFusion {
    std::array<Tape::NodeId, 6> p;
};

inline BoundFusion bind(Tape& t, const FusionNet& f) {
    return BoundFusion{{t.input(f.w1), t.input(f.b1), t.input(f.w2), t.input(f.b2),
                        t.input(f.w3), t.input(f.b3)}};
}

inline Tape::NodeId fusion_weights(Tape& t, const BoundFusion& f, const PreferenceVector& lam) {
    detail::check_lambda_input(lam, "fusion_weights");
    std::size_t clients = t.value(f.p[4]).shape[1];
    Tape::NodeId x = t.input(detail::lambda_row(lam));
    Tape::NodeId a = t.relu(t.add_bias(t.matmul(x, f.p[0]), f.p[1]));
    Tape::NodeId b = t.relu(t.add_bias(t.matmul(a, f.p[2]), f.p[3]));
    Tape::NodeId logits = t.reshape(t.add_bias(t.matmul(b, f.p[4]), f.p[5]), {clients});
    return t.softmax(logits);
}

// ---------------------------------------------------------------------------
// Hypernet fusion: parameter-wise convex combination of client hypernets.
// ---------------------------------------------------------------------------

namespace detail {

inline void check_fuse_args(std::size_t weights, std::size_t nets) {
    if (weights != nets || nets == 0)
        throw DimensionError("fuse: " + std::to_string(weights) + " weights for " +
                             std::to_string(nets) + " hypernets");
}

}  // namespace detail

inline HyperNet fuse(std::span<const double> omega, std::span<const HyperNet> hypernets) {
    detail::check_fuse_args(omega.size(), hypernets.size());
    std::vector<Tensor> flats;
    flats.reserve(hypernets.size());
    for (const HyperNet& h : hypernets) flats.push_back(h.flatten());
    for (const Tensor& f : flats) require_same_shape(flats.front(), f, "fuse");
    Tensor fused = Tensor::zeros(flats.front().shape);
    for (std::size_t k = 0; k < flats.size(); ++k)
        for (std::size_t i = 0; i < fused.numel(); ++i)
            fused.data[i] += omega[k] * flats[k].data[i];
    return HyperNet::from_flat(fused);
}

/// Fused flat hypernet node, differentiable w.r.t. the fusion weights only;
/// the client hypernets are frozen constants.
inline Tape::NodeId fuse(Tape& t, Tape::NodeId omega, std::span<const HyperNet> hypernets) {
    detail::check_fuse_args(t.value(omega).numel(), hypernets.size());
    std::vector<Tensor> flats;
    flats.reserve(hypernets.size());
    for (const HyperNet& h : hypernets) flats.push_back(h.flatten());
    for (const Tensor& f : flats) require_same_shape(flats.front(), f, "fuse");
    return t.weighted_sum(omega, std::move(flats));
}

}  // namespace hetpfl
