#pragma once

#include <chrono>
#include <cstring>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "hetpfl/fed.hpp"
#include "hetpfl/nets.hpp"
#include "hetpfl/objectives.hpp"

namespace hetpfl {

/// Outcome of one finite-difference (or estimator) check.
struct CheckResult {
    std::string name;
    double max_rel_err = 0.0;
    bool pass = false;
    int instances = 0;
};

/// A differentiable scenario: given parameter tensors, build a scalar root
/// on the tape and return (root, leaf ids). The leaves must correspond to
/// the leading parameter tensors, in order; trailing parameters (inputs,
/// latents) are held fixed. The harness compares the tape gradients against
/// central finite differences of the same forward pass.
struct GradScenario {
    std::string name;
    std::function<std::vector<Tensor>(std::mt19937_64&)> make_params;
    std::function<std::pair<Tape::NodeId, std::vector<Tape::NodeId>>(Tape&,
                                                                     const std::vector<Tensor>&)>
        build;
};

namespace gradcheck_detail {

inline constexpr double kStep = 1e-5;
inline constexpr double kTolerance = 1e-4;

inline double scenario_value(const GradScenario& sc, const std::vector<Tensor>& params) {
    Tape t;
    auto [root, leaves] = sc.build(t, params);
    return t.value(root).at(0);
}

}  // namespace gradcheck_detail

/// Run one scenario over `instances` random draws; the reported error is the
/// worst |tape - fd| / max(1, |fd|) over every parameter entry.
inline CheckResult run_gradient_check(const GradScenario& sc, int instances,
                                      std::uint64_t seed) {
    using namespace gradcheck_detail;
    CheckResult res;
    res.name = sc.name;
    res.instances = instances;
    std::mt19937_64 rng(mix_seed(seed, std::hash<std::string>{}(sc.name)));
    for (int inst = 0; inst < instances; ++inst) {
        std::vector<Tensor> params = sc.make_params(rng);
        Tape t;
        auto [root, leaves] = sc.build(t, params);
        std::vector<Tensor> got = t.backward(root, leaves);

        std::vector<Tensor> probe = params;
        for (std::size_t p = 0; p < leaves.size(); ++p) {
            for (std::size_t i = 0; i < probe[p].numel(); ++i) {
                double orig = probe[p].data[i];
                probe[p].data[i] = orig + kStep;
                double up = scenario_value(sc, probe);
                probe[p].data[i] = orig - kStep;
                double down = scenario_value(sc, probe);
                probe[p].data[i] = orig;
                double fd = (up - down) / (2.0 * kStep);
                double err = std::fabs(got[p].data[i] - fd) / std::max(1.0, std::fabs(fd));
                res.max_rel_err = std::max(res.max_rel_err, err);
            }
        }
    }
    res.pass = res.max_rel_err <= kTolerance;
    return res;
}

namespace gradcheck_detail {

inline Tensor uniform_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng, double lo,
                             double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = u(rng);
    return t;
}

inline Tensor off_kink(Tensor t, double margin = 5e-3) {
    for (double& v : t.data)
        if (std::fabs(v) < margin) v = v < 0.0 ? -margin : margin;
    return t;
}

/// Fixed target patterns: build() is re-run for every finite-difference
/// probe, so anything besides the leading parameter tensors must be a pure
/// function of the batch size.
inline std::vector<int> pattern_bits(std::size_t n, int stride) {
    std::vector<int> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<int>((i / stride) % 2);
    return out;
}

}  // namespace gradcheck_detail

/// The named checks behind the diagnostics command: every differentiable
/// operation, the three losses, the preference-conditioned prediction path,
/// and the server-side fusion chain.
inline std::vector<GradScenario> gradient_scenarios() {
    using namespace gradcheck_detail;
    std::vector<GradScenario> out;

    out.push_back(
        {"matmul",
         [](std::mt19937_64& rng) {
             return std::vector<Tensor>{uniform_tensor({3, 4}, rng, -2, 2),
                                        uniform_tensor({4, 2}, rng, -2, 2)};
         },
         [](Tape& t, const std::vector<Tensor>& ps) {
             auto a = t.input(ps[0]), b = t.input(ps[1]);
             return std::pair{t.sum(t.matmul(a, b)), std::vector<Tape::NodeId>{a, b}};
         }});

    out.push_back({"relu",
                   [](std::mt19937_64& rng) {
                       return std::vector<Tensor>{off_kink(uniform_tensor({8}, rng, -2, 2))};
                   },
                   [](Tape& t, const std::vector<Tensor>& ps) {
                       auto x = t.input(ps[0]);
                       return std::pair{t.sum(t.relu(x)), std::vector<Tape::NodeId>{x}};
                   }});

    out.push_back({"sigmoid",
                   [](std::mt19937_64& rng) {
                       return std::vector<Tensor>{uniform_tensor({8}, rng, -2, 2)};
                   },
                   [](Tape& t, const std::vector<Tensor>& ps) {
                       auto x = t.input(ps[0]);
                       return std::pair{t.mean(t.sigmoid(x)), std::vector<Tape::NodeId>{x}};
                   }});

    out.push_back({"log",
                   [](std::mt19937_64& rng) {
                       return std::vector<Tensor>{uniform_tensor({8}, rng, 0.05, 2)};
                   },
                   [](Tape& t, const std::vector<Tensor>& ps) {
                       auto x = t.input(ps[0]);
                       return std::pair{t.sum(t.log_floored(x)), std::vector<Tape::NodeId>{x}};
                   }});

    out.push_back({"abs",
                   [](std::mt19937_64& rng) {
                       return std::vector<Tensor>{off_kink(uniform_tensor({8}, rng, -2, 2))};
                   },
                   [](Tape& t, const std::vector<Tensor>& ps) {
                       auto x = t.input(ps[0]);
                       return std::pair{t.sum(t.abs(x)), std::vector<Tape::NodeId>{x}};
                   }});

    out.push_back({"softmax",
                   [](std::mt19937_64& rng) {
                       return std::vector<Tensor>{uniform_tensor({5}, rng, -2, 2),
                                                  uniform_tensor({5}, rng, -1, 1)};
                   },
                   [](Tape& t, const std::vector<Tensor>& ps) {
                       auto x = t.input(ps[0]);
                       return std::pair{t.sum(t.mul_const(t.softmax(x), ps[1])),
                                        std::vector<Tape::NodeId>{x}};
                   }});

    out.push_back(
        {"encoder",
         [](std::mt19937_64& rng) {
             auto make_rng = rng();
             std::mt19937_64 r2(make_rng);
             CommModel m = CommModel::init(3, r2);
             std::vector<Tensor> ps;
             for (const Tensor* p : std::as_const(m).params()) ps.push_back(*p);
             ps.push_back(uniform_tensor({4, 3}, rng, -2, 2));
             return ps;
         },
         [](Tape& t, const std::vector<Tensor>& ps) {
             BoundComm m{{t.input(ps[0]), t.input(ps[1]), t.input(ps[2]), t.input(ps[3])}};
             auto root = t.mean(comm_forward(t, m, t.input(ps[4])));
             return std::pair{root, std::vector<Tape::NodeId>(m.p.begin(), m.p.end())};
         }});

    out.push_back(
        {"hypernet",
         [](std::mt19937_64& rng) {
             std::mt19937_64 r2(rng());
             HyperNet h = HyperNet::init(r2);
             std::vector<Tensor> ps;
             for (const Tensor* p : std::as_const(h).params()) ps.push_back(*p);
             return ps;
         },
         [](Tape& t, const std::vector<Tensor>& ps) {
             BoundHyper h{{t.input(ps[0]), t.input(ps[1]), t.input(ps[2]), t.input(ps[3]),
                           t.input(ps[4]), t.input(ps[5])}};
             auto root = t.sum(hyper_forward(t, h, PreferenceVector{0.3, 0.7}));
             return std::pair{root, std::vector<Tape::NodeId>(h.p.begin(), h.p.end())};
         }});

    out.push_back(
        {"prediction-ce",
         [](std::mt19937_64& rng) {
             std::mt19937_64 r2(rng());
             CommModel psi = CommModel::init(2, r2);
             HyperNet beta = HyperNet::init(r2);
             std::vector<Tensor> ps;
             for (const Tensor* p : std::as_const(psi).params()) ps.push_back(*p);
             for (const Tensor* p : std::as_const(beta).params()) ps.push_back(*p);
             ps.push_back(uniform_tensor({6, 2}, rng, -2, 2));
             return ps;
         },
         [](Tape& t, const std::vector<Tensor>& ps) {
             BoundComm psi{{t.input(ps[0]), t.input(ps[1]), t.input(ps[2]), t.input(ps[3])}};
             BoundHyper beta{{t.input(ps[4]), t.input(ps[5]), t.input(ps[6]), t.input(ps[7]),
                              t.input(ps[8]), t.input(ps[9])}};
             std::vector<int> labels = gradcheck_detail::pattern_bits(6, 1);
             auto preds = predict(t, psi, beta, PreferenceVector{0.6, 0.4}, t.input(ps[10]));
             auto root = ce_loss_node(t, preds, labels);
             std::vector<Tape::NodeId> leaves(psi.p.begin(), psi.p.end());
             leaves.insert(leaves.end(), beta.p.begin(), beta.p.end());
             return std::pair{root, leaves};
         }});

    out.push_back(
        {"scalarized-losses",
         [](std::mt19937_64& rng) {
             return std::vector<Tensor>{uniform_tensor({8}, rng, 0.1, 0.9)};
         },
         [](Tape& t, const std::vector<Tensor>& ps) {
             std::vector<int> labels = gradcheck_detail::pattern_bits(8, 1);
             std::vector<int> groups = gradcheck_detail::pattern_bits(8, 2);
             PreferenceVector lam{0.35, 0.65};
             auto p = t.input(ps[0]);
             auto root = tch_loss_node(t, ce_loss_node(t, p, labels),
                                       fair_loss_node_or_zero(t, p, groups), lam);
             return std::pair{root, std::vector<Tape::NodeId>{p}};
         }});

    out.push_back(
        {"hypernet-step-loss",
         [](std::mt19937_64& rng) {
             std::mt19937_64 r2(rng());
             HyperNet beta = HyperNet::init(r2);
             std::vector<Tensor> ps;
             for (const Tensor* p : std::as_const(beta).params()) ps.push_back(*p);
             ps.push_back(uniform_tensor({8, 4}, rng, -1.5, 1.5));  // latents
             return ps;
         },
         [](Tape& t, const std::vector<Tensor>& ps) {
             BoundHyper beta{{t.input(ps[0]), t.input(ps[1]), t.input(ps[2]), t.input(ps[3]),
                              t.input(ps[4]), t.input(ps[5])}};
             std::vector<int> labels = gradcheck_detail::pattern_bits(8, 1);
             std::vector<int> groups = gradcheck_detail::pattern_bits(8, 2);
             auto latents = t.input(ps[6]);
             std::vector<PreferenceVector> lambdas = {
                 {0.2, 0.8}, {0.45, 0.55}, {0.7, 0.3}, {0.9, 0.1}};
             Tape::NodeId total = 0;
             bool first = true;
             for (const PreferenceVector& lam : lambdas) {
                 auto preds = predict_latent(t, latents, hyper_forward(t, beta, lam));
                 auto tch = tch_loss_node(t, ce_loss_node(t, preds, labels),
                                          fair_loss_node_or_zero(t, preds, groups), lam);
                 total = first ? tch : t.add(total, tch);
                 first = false;
             }
             auto root = t.scale(total, 1.0 / static_cast<double>(lambdas.size()));
             return std::pair{root, std::vector<Tape::NodeId>(beta.p.begin(), beta.p.end())};
         }});

    out.push_back(
        {"fusion-chain",
         [](std::mt19937_64& rng) {
             std::mt19937_64 r2(rng());
             FusionNet f = FusionNet::init(3, r2);
             std::vector<Tensor> ps;
             for (const Tensor* p : std::as_const(f).params()) ps.push_back(*p);
             ps.push_back(uniform_tensor({6, 4}, rng, -1.5, 1.5));  // shared latents
             return ps;
         },
         [](Tape& t, const std::vector<Tensor>& ps) {
             BoundFusion f{{t.input(ps[0]), t.input(ps[1]), t.input(ps[2]), t.input(ps[3]),
                            t.input(ps[4]), t.input(ps[5])}};
             std::vector<HyperNet> hypernets;
             for (int k = 0; k < 3; ++k) {
                 std::mt19937_64 r2(9000 + static_cast<std::uint64_t>(k));
                 hypernets.push_back(HyperNet::init(r2));
             }
             std::vector<int> labels = gradcheck_detail::pattern_bits(6, 1);
             std::vector<int> groups = gradcheck_detail::pattern_bits(6, 2);
             PreferenceVector lam{0.55, 0.45};
             auto omega = fusion_weights(t, f, lam);
             auto theta = hyper_forward(t, bind_flat_hyper(t, fuse(t, omega, hypernets)), lam);
             auto preds = predict_latent(t, t.input(ps[6]), theta);
             auto root = tch_loss_node(t, ce_loss_node(t, preds, labels),
                                       fair_loss_node_or_zero(t, preds, groups), lam);
             return std::pair{root, std::vector<Tape::NodeId>(f.p.begin(), f.p.end())};
         }});

    return out;
}

inline std::string format_alpha(const DirichletParams& a) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g,%g", a.a1, a.a2);
    return buf;
}

/// NES sanity: with the hypervolume contribution replaced by f(lambda) =
/// lambda1, the Monte Carlo mean of the estimator must match the analytic
/// gradient of E[lambda1] under Dirichlet(alpha) within 3 standard errors,
/// and the expected log-density gradient must vanish. The reported error is
/// the worst deviation in units of its 3-standard-error budget.
inline std::vector<CheckResult> nes_estimator_checks(std::uint64_t seed, int batches = 60000) {
    std::vector<CheckResult> out;
    for (DirichletParams a : {DirichletParams{1, 1}, DirichletParams{2, 5}}) {
        auto rng = make_stream(seed, Stream::eval, static_cast<std::uint64_t>(a.a1 * 8),
                               static_cast<std::uint64_t>(a.a2 * 8));
        std::gamma_distribution<double> g1(a.a1, 1.0), g2(a.a2, 1.0);
        const std::size_t N = 4;
        double m1 = 0, m2 = 0, q1 = 0, q2 = 0, id1 = 0, id2 = 0, iq1 = 0, iq2 = 0;
        for (int b = 0; b < batches; ++b) {
            std::vector<PreferenceVector> lambdas(N);
            std::vector<double> scores(N);
            for (std::size_t v = 0; v < N; ++v) {
                double x1 = g1(rng), x2 = g2(rng);
                double l1 = x1 / (x1 + x2);
                lambdas[v] = PreferenceVector{l1, 1.0 - l1};
                scores[v] = l1;
                auto [d1, d2] = log_density_grad(a, lambdas[v]);
                id1 += d1;
                id2 += d2;
                iq1 += d1 * d1;
                iq2 += d2 * d2;
            }
            auto [e1, e2] = nes_gradient_from_scores(a, lambdas, scores);
            m1 += e1;
            m2 += e2;
            q1 += e1 * e1;
            q2 += e2 * e2;
        }
        double nb = batches, nd = batches * static_cast<double>(N);
        m1 /= nb;
        m2 /= nb;
        id1 /= nd;
        id2 /= nd;
        double se1 = std::sqrt((q1 / nb - m1 * m1) / nb);
        double se2 = std::sqrt((q2 / nb - m2 * m2) / nb);
        double ise1 = std::sqrt((iq1 / nd - id1 * id1) / nd);
        double ise2 = std::sqrt((iq2 / nd - id2 * id2) / nd);
        double s = a.a1 + a.a2;
        double want1 = a.a2 / (s * s), want2 = -a.a1 / (s * s);

        CheckResult grad;
        grad.name = "nes-toy-gradient(alpha=" + format_alpha(a) + ")";
        grad.instances = batches;
        grad.max_rel_err = std::max(std::fabs(m1 - want1) / (3 * se1),
                                    std::fabs(m2 - want2) / (3 * se2));
        grad.pass = grad.max_rel_err <= 1.0;
        out.push_back(grad);

        CheckResult ident;
        ident.name = "score-identity(alpha=" + format_alpha(a) + ")";
        ident.instances = batches;
        ident.max_rel_err = std::max(std::fabs(id1) / (3 * ise1), std::fabs(id2) / (3 * ise2));
        ident.pass = ident.max_rel_err <= 1.0;
        out.push_back(ident);
    }
    return out;
}

/// Full diagnostic battery. `instances` is the per-scenario sample count.
inline std::vector<CheckResult> run_all_checks(int instances, std::uint64_t seed) {
    std::vector<CheckResult> results;
    for (const GradScenario& sc : gradient_scenarios())
        results.push_back(run_gradient_check(sc, instances, seed));
    for (CheckResult r : nes_estimator_checks(seed)) results.push_back(r);
    return results;
}

}  // namespace hetpfl
