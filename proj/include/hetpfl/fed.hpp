#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hetpfl/data.hpp"
#include "hetpfl/eval.hpp"
#include "hetpfl/nets.hpp"
#include "hetpfl/objectives.hpp"
#include "hetpfl/optim.hpp"
#include "hetpfl/preference.hpp"
#include "hetpfl/rng.hpp"

namespace hetpfl {

/// Ablation switches: `psa` adapts the per-client sampling distribution,
/// `phf` trains the preference-aware fusion net. Disabling both reproduces
/// the uniform-sampling + average-fusion baseline.
enum class Mode { hetpfl, ablate_psa, ablate_phf, ablate_both };

inline bool psa_enabled(Mode m) { return m == Mode::hetpfl || m == Mode::ablate_phf; }
inline bool phf_enabled(Mode m) { return m == Mode::hetpfl || m == Mode::ablate_psa; }

inline std::string mode_name(Mode m) {
    switch (m) {
        case Mode::hetpfl: return "hetpfl";
        case Mode::ablate_psa: return "ablate-psa";
        case Mode::ablate_phf: return "ablate-phf";
        case Mode::ablate_both: return "ablate-both";
    }
    return "hetpfl";
}

inline Mode parse_mode(const std::string& s) {
    if (s == "hetpfl") return Mode::hetpfl;
    if (s == "ablate-psa") return Mode::ablate_psa;
    if (s == "ablate-phf") return Mode::ablate_phf;
    if (s == "ablate-both") return Mode::ablate_both;
    throw ConfigError("unknown mode '" + s + "' (expected hetpfl, ablate-psa, ablate-phf, "
                      "ablate-both)");
}

struct RoundConfig {
    int rounds = 15;          // communication rounds T
    int tau_c = 15;           // encoder epochs per round
    int tau_p = 15;           // hypernet/alpha steps per round
    int pref_batch = 4;       // sampled preferences per step, N
    int fusion_epochs = 200;  // server-side epochs, U
    double lr = 0.01;         // Adam rate for psi, beta, phi
    double alpha_lr = 0.05;   // rate for the preconditioned alpha step
    int alpha_warmup_rounds = 0;  // rounds with kappa_t = 0 before adapting
    std::size_t batch_size = 128;
    PreferenceVector lambda_tilde{0.5, 0.5};
    bool hvc_eval_full = false;  // evaluate preference batches on the whole train set
    std::size_t eval_models = 1000;
    std::uint64_t seed = 0;
};

/// Adam preconditioning for the two concentration parameters. The raw NES
/// gradient spans orders of magnitude (hypervolume contributions shrink as
/// batches cluster), and a plain step either freezes or overshoots; the
/// moment-normalized direction keeps the update scale at the learning rate.
struct AlphaAdam {
    double m1 = 0, m2 = 0, v1 = 0, v2 = 0;
    long step = 0;
    // heavy momentum: the per-step NES estimate at N=4 has signal-to-noise
    // well below one, so the direction must be averaged over ~100 steps
    double beta1 = 0.99, beta2 = 0.999, eps = 1e-8;

    std::pair<double, double> precondition(std::pair<double, double> grad) {
        step += 1;
        m1 = beta1 * m1 + (1.0 - beta1) * grad.first;
        m2 = beta1 * m2 + (1.0 - beta1) * grad.second;
        v1 = beta2 * v1 + (1.0 - beta2) * grad.first * grad.first;
        v2 = beta2 * v2 + (1.0 - beta2) * grad.second * grad.second;
        double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        return {(m1 / bc1) / (std::sqrt(v1 / bc2) + eps),
                (m2 / bc1) / (std::sqrt(v2 / bc2) + eps)};
    }
};

struct ClientState {
    std::size_t id = 0;
    CommModel psi;
    HyperNet beta;
    DirichletParams alpha;
    AdamState psi_opt, beta_opt;
    AlphaAdam alpha_opt;
    Dataset train, validation, test;
};

struct ServerState {
    CommModel psi;
    std::vector<HyperNet> hypernets;
    std::vector<LatentDataset> latent;
    FusionNet fusion;
    AdamState fusion_opt;
    bool collected = false;
    bool fusion_trained = false;
};

struct RoundTelemetry {
    int round = 0;
    std::size_t client = 0;
    double comm_ce = 0.0;    // mean CE over the final encoder epoch
    double hyper_tch = 0.0;  // mean scalarized loss over the final hypernet step
    double val_error = 0.0;
    double val_dp = 0.0;
    double val_ce = 0.0;
    double val_fair = 0.0;
    double val_tch_tilde = 0.0;  // at lambda-tilde
    double val_tch_grid = 0.0;   // mean over the fixed interior grid below
    DirichletParams alpha;
};

/// Fixed interior preferences for validation telemetry.
inline const std::vector<PreferenceVector>& validation_grid() {
    static const std::vector<PreferenceVector> grid = [] {
        std::vector<PreferenceVector> g;
        for (int i = 1; i <= 9; ++i) g.push_back(PreferenceVector::clamped(0.1 * i));
        return g;
    }();
    return grid;
}

namespace detail {

inline std::vector<int> gather_ints(const std::vector<int>& v,
                                    const std::vector<std::size_t>& idx) {
    std::vector<int> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(v[i]);
    return out;
}

/// Shuffled mini-batches covering every index once; a trailing 1-sample
/// batch is merged into its predecessor so per-batch statistics stay
/// defined.
inline std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch,
                                                           std::mt19937_64& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t at = 0; at < n; at += batch) {
        std::size_t end = std::min(n, at + batch);
        out.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(at),
                         idx.begin() + static_cast<std::ptrdiff_t>(end));
    }
    if (out.size() >= 2 && out.back().size() < 2) {
        out[out.size() - 2].push_back(out.back().front());
        out.pop_back();
    }
    return out;
}

inline void check_loss_finite(double v, int round, std::size_t client, std::size_t batch) {
    if (!std::isfinite(v))
        throw NumericError("non-finite loss at round " + std::to_string(round) + ", client " +
                           std::to_string(client) + ", batch " + std::to_string(batch));
}

}  // namespace detail

/**
 * Encoder step: tau_c epochs of mini-batch Adam on psi only, minimizing the
 * cross-entropy of the lambda-tilde model; the hypernet is frozen, so its
 * emitted head enters the tape as a constant. Returns the mean CE of the
 * final epoch (plain evaluation when tau_c is 0).
 */
inline double local_comm_update(ClientState& c, const RoundConfig& cfg, std::mt19937_64& rng,
                                int round) {
    HeadParams head = hyper_forward(c.beta, cfg.lambda_tilde);
    if (cfg.tau_c <= 0) {
        Tensor preds = predict_latent(comm_forward(c.psi, c.train.features), head);
        return ce_loss(preds, c.train.labels);
    }
    double epoch_mean = 0.0;
    auto names = CommModel::param_names();
    for (int epoch = 0; epoch < cfg.tau_c; ++epoch) {
        auto batches = detail::epoch_batches(c.train.size(), cfg.batch_size, rng);
        double acc = 0.0;
        for (std::size_t b = 0; b < batches.size(); ++b) {
            Tape t;
            BoundComm psi = bind(t, c.psi);
            auto x = t.input(gather_rows(c.train.features, batches[b]));
            auto preds = predict_latent(t, comm_forward(t, psi, x), t.input(head.theta));
            auto root = ce_loss_node(t, preds, detail::gather_ints(c.train.labels, batches[b]));
            detail::check_loss_finite(t.value(root).at(0), round, c.id, b);
            acc += t.value(root).at(0);
            std::vector<Tape::NodeId> leaves(psi.p.begin(), psi.p.end());
            adam_step(c.psi.params(), t.backward(root, leaves), c.psi_opt, cfg.lr, &names);
        }
        epoch_mean = acc / static_cast<double>(batches.size());
    }
    return epoch_mean;
}

struct HyperStepResult {
    PrefBatch batch;
    double mean_tch = 0.0;
};

/**
 * One hypernet step over given preferences: one epoch of mini-batch Adam on
 * beta minimizing the mean scalarized loss over the preferences (psi frozen,
 * latents precomputed). Each preference's loss vector is also evaluated on
 * the fixed evaluation batch, against `scoring_beta` — the hypernet as it
 * stood at round start. Scoring against the continually-updated hypernet
 * would reward whichever regions the round's own draws just trained,
 * a feedback that drags the sampling distribution into degenerate corners.
 */
inline HyperStepResult hyper_step(ClientState& c, const RoundConfig& cfg, const Tensor& latents,
                                  const std::vector<std::size_t>& eval_idx,
                                  const HyperNet& scoring_beta,
                                  std::vector<PreferenceVector> lambdas, std::mt19937_64& rng,
                                  int round) {
    if (lambdas.empty()) throw ContractError("hyper_step: no preferences");
    HyperStepResult res;
    res.batch.alpha = c.alpha;
    res.batch.lambdas = std::move(lambdas);
    auto names = HyperNet::param_names();

    Tensor eval_latents = gather_rows(latents, eval_idx);
    std::vector<int> eval_labels = detail::gather_ints(c.train.labels, eval_idx);
    std::vector<int> eval_sens = detail::gather_ints(c.train.sensitive, eval_idx);
    for (const PreferenceVector& lam : res.batch.lambdas) {
        Tensor preds = predict_latent(eval_latents, hyper_forward(scoring_beta, lam));
        LossVector l{ce_loss(preds, eval_labels), fair_loss_or_zero(preds, eval_sens)};
        if (!std::isfinite(l.ce) || !std::isfinite(l.fair))
            throw NumericError("non-finite preference-batch loss at round " +
                               std::to_string(round) + ", client " + std::to_string(c.id));
        res.batch.losses.push_back(l.as_point());
    }

    auto batches = detail::epoch_batches(c.train.size(), cfg.batch_size, rng);
    double acc = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
        Tape t;
        BoundHyper beta = bind(t, c.beta);
        auto lat = t.input(gather_rows(latents, batches[b]));
        std::vector<int> labels = detail::gather_ints(c.train.labels, batches[b]);
        std::vector<int> sens = detail::gather_ints(c.train.sensitive, batches[b]);
        std::optional<Tape::NodeId> total;
        for (const PreferenceVector& lam : res.batch.lambdas) {
            auto preds = predict_latent(t, lat, hyper_forward(t, beta, lam));
            auto tch = tch_loss_node(t, ce_loss_node(t, preds, labels),
                                     fair_loss_node_or_zero(t, preds, sens), lam);
            total = total ? t.add(*total, tch) : tch;
        }
        auto root = t.scale(*total, 1.0 / static_cast<double>(res.batch.lambdas.size()));
        detail::check_loss_finite(t.value(root).at(0), round, c.id, b);
        acc += t.value(root).at(0);
        std::vector<Tape::NodeId> leaves(beta.p.begin(), beta.p.end());
        adam_step(c.beta.params(), t.backward(root, leaves), c.beta_opt, cfg.lr, &names);
    }
    res.mean_tch = acc / static_cast<double>(batches.size());
    return res;
}

/// Spec-shaped hypernet update: tau_p steps, returning the final step's
/// preference batch (empty when tau_p is 0 — rejected by the alpha update).
inline PrefBatch local_hyper_update(ClientState& c, const RoundConfig& cfg, int tau_p,
                                    std::mt19937_64& rng, int round = 0) {
    Tensor latents = comm_forward(c.psi, c.train.features);
    std::vector<std::size_t> eval_idx = [&] {
        std::vector<std::size_t> idx(c.train.size());
        std::iota(idx.begin(), idx.end(), 0);
        if (!cfg.hvc_eval_full && idx.size() > cfg.batch_size) {
            std::shuffle(idx.begin(), idx.end(), rng);
            idx.resize(cfg.batch_size);
        }
        return idx;
    }();
    PrefBatch last;
    last.alpha = c.alpha;
    HyperNet scoring_beta = c.beta;
    for (int s = 0; s < tau_p; ++s) {
        auto lambdas = sample_dirichlet(c.alpha, static_cast<std::size_t>(cfg.pref_batch), rng);
        last = hyper_step(c, cfg, latents, eval_idx, scoring_beta, std::move(lambdas), rng, round)
                   .batch;
    }
    return last;
}

/// Alpha step: NES gradient of the negative hypervolume contribution over
/// the collected batch, Adam-preconditioned, then the clamped gradient
/// update.
inline void local_alpha_update(ClientState& c, const PrefBatch& batch, double alpha_lr,
                               RefPoint r = {}) {
    c.alpha = update_alpha(c.alpha, c.alpha_opt.precondition(nes_gradient(batch, r)), alpha_lr);
}

/// Unweighted parameter-wise mean of the client encoders.
inline CommModel server_aggregate_psi(std::span<const ClientState> clients) {
    if (clients.empty()) throw ContractError("aggregate: no clients");
    CommModel agg = clients.front().psi;
    auto acc = agg.params();
    for (std::size_t k = 1; k < clients.size(); ++k) {
        auto theirs = clients[k].psi.params();
        for (std::size_t p = 0; p < acc.size(); ++p) {
            require_same_shape(*acc[p], *theirs[p], "server_aggregate_psi");
            for (std::size_t i = 0; i < acc[p]->numel(); ++i)
                acc[p]->data[i] += theirs[p]->data[i];
        }
    }
    double inv = 1.0 / static_cast<double>(clients.size());
    for (Tensor* p : acc)
        for (double& v : p->data) v *= inv;
    return agg;
}

namespace detail {

inline RoundTelemetry validation_telemetry(const ClientState& c, const RoundConfig& cfg,
                                           int round, double comm_ce, double hyper_tch) {
    RoundTelemetry tel;
    tel.round = round;
    tel.client = c.id;
    tel.comm_ce = comm_ce;
    tel.hyper_tch = hyper_tch;
    tel.alpha = c.alpha;
    Tensor latents = comm_forward(c.psi, c.validation.features);
    Tensor preds = predict_latent(latents, hyper_forward(c.beta, cfg.lambda_tilde));
    tel.val_ce = ce_loss(preds, c.validation.labels);
    tel.val_fair = fair_loss_or_zero(preds, c.validation.sensitive);
    tel.val_error = error_rate(preds, c.validation.labels);
    tel.val_dp = dp_disparity(preds, c.validation.sensitive);
    tel.val_tch_tilde = tch_loss({tel.val_ce, tel.val_fair}, cfg.lambda_tilde);
    double acc = 0.0;
    for (const PreferenceVector& lam : validation_grid()) {
        Tensor p = predict_latent(latents, hyper_forward(c.beta, lam));
        acc += tch_loss({ce_loss(p, c.validation.labels),
                         fair_loss_or_zero(p, c.validation.sensitive)},
                        lam);
    }
    tel.val_tch_grid = acc / static_cast<double>(validation_grid().size());
    return tel;
}

}  // namespace detail

/**
 * One Phase I round: broadcast the global encoder, run every client's
 * encoder epochs and interleaved hypernet/alpha steps, then aggregate the
 * encoders. Clients consume only their own (seed, client, round) stream, so
 * results do not depend on client execution order.
 */
inline std::vector<RoundTelemetry> phase1_round(std::vector<ClientState>& clients,
                                                CommModel& global_psi, const RoundConfig& cfg,
                                                Mode mode, int round) {
    std::vector<RoundTelemetry> telemetry;
    for (ClientState& c : clients) {
        c.psi = global_psi;  // broadcast
        auto rng = make_stream(cfg.seed, Stream::client_round, c.id,
                               static_cast<std::uint64_t>(round));
        double comm_ce = local_comm_update(c, cfg, rng, round);

        Tensor latents = comm_forward(c.psi, c.train.features);
        std::vector<std::size_t> eval_idx(c.train.size());
        std::iota(eval_idx.begin(), eval_idx.end(), 0);
        if (!cfg.hvc_eval_full && eval_idx.size() > cfg.batch_size) {
            std::shuffle(eval_idx.begin(), eval_idx.end(), rng);
            eval_idx.resize(cfg.batch_size);
        }

        double hyper_tch = 0.0;
        HyperNet scoring_beta = c.beta;
        for (int s = 0; s < cfg.tau_p; ++s) {
            auto lambdas =
                sample_dirichlet(c.alpha, static_cast<std::size_t>(cfg.pref_batch), rng);
            HyperStepResult res =
                hyper_step(c, cfg, latents, eval_idx, scoring_beta, std::move(lambdas), rng, round);
            hyper_tch = res.mean_tch;
            if (psa_enabled(mode) && round > cfg.alpha_warmup_rounds)
                local_alpha_update(c, res.batch, cfg.alpha_lr);
        }
        telemetry.push_back(detail::validation_telemetry(c, cfg, round, comm_ce, hyper_tch));
    }
    global_psi = server_aggregate_psi(clients);
    return telemetry;
}

/// Collect frozen hypernets and latent training features (plus labels and
/// sensitive attributes, which the scalarized server loss needs) under the
/// final global encoder.
inline ServerState phase2_collect(const std::vector<ClientState>& clients,
                                  const CommModel& global_psi) {
    if (clients.empty()) throw ContractError("collect: no clients");
    ServerState server;
    server.psi = global_psi;
    for (const ClientState& c : clients) {
        server.hypernets.push_back(c.beta);
        LatentDataset q;
        q.latents = comm_forward(global_psi, c.train.features);
        q.labels = c.train.labels;
        q.sensitive = c.train.sensitive;
        server.latent.push_back(std::move(q));
    }
    server.collected = true;
    return server;
}

struct FusionTrainResult {
    double first_epoch_loss = 0.0;
    double last_epoch_loss = 0.0;
    // deterministic probe (fixed lambda grid, full latent sets) before the
    // first and after the last epoch; epoch losses above depend on the
    // sampled lambdas, so they are not comparable across epochs
    double probe_before = 0.0;
    double probe_after = 0.0;
};

/// Mean scalarized loss of the fused hypernet over the fixed interior
/// lambda grid and the full latent datasets.
inline double fusion_probe_loss(const ServerState& server, const FusionNet& fusion) {
    double acc = 0.0;
    for (const PreferenceVector& lam : validation_grid()) {
        std::vector<double> omega = fusion_weights(fusion, lam);
        HyperNet fused = fuse(omega, server.hypernets);
        HeadParams head = hyper_forward(fused, lam);
        double inner = 0.0;
        for (const LatentDataset& q : server.latent) {
            Tensor preds = predict_latent(q.latents, head);
            inner += tch_loss({ce_loss(preds, q.labels), fair_loss_or_zero(preds, q.sensitive)},
                              lam);
        }
        acc += inner / static_cast<double>(server.latent.size());
    }
    return acc / static_cast<double>(validation_grid().size());
}

/**
 * Phase II: train the fusion net on the collected latent datasets. Each step
 * samples N preferences from the uniform simplex distribution, fuses the
 * frozen client hypernets with the preference-dependent softmax weights, and
 * takes an Adam step on the fusion parameters against the mean scalarized
 * loss over clients and preferences.
 */
inline FusionTrainResult phase2_train_fusion(ServerState& server, const RoundConfig& cfg) {
    if (!server.collected) throw ContractError("fusion: collection incomplete");
    std::size_t clients = server.hypernets.size();
    auto rng = make_stream(cfg.seed, Stream::fusion_train);
    {
        auto init_rng = make_stream(cfg.seed, Stream::fusion_init);
        server.fusion = FusionNet::init(clients, init_rng);
    }
    server.fusion_opt = AdamState::for_params(server.fusion.params());
    auto names = FusionNet::param_names();
    DirichletParams uniform{1.0, 1.0};

    std::size_t steps = 1;
    for (const LatentDataset& q : server.latent)
        steps = std::max(steps, (q.size() + cfg.batch_size - 1) / cfg.batch_size);

    FusionTrainResult result;
    result.probe_before = fusion_probe_loss(server, server.fusion);
    for (int epoch = 0; epoch < cfg.fusion_epochs; ++epoch) {
        std::vector<std::vector<std::vector<std::size_t>>> batches;
        for (const LatentDataset& q : server.latent)
            batches.push_back(detail::epoch_batches(q.size(), cfg.batch_size, rng));
        double acc = 0.0;
        for (std::size_t step = 0; step < steps; ++step) {
            auto lambdas =
                sample_dirichlet(uniform, static_cast<std::size_t>(cfg.pref_batch), rng);
            Tape t;
            BoundFusion phi = bind(t, server.fusion);
            std::optional<Tape::NodeId> total;
            for (const PreferenceVector& lam : lambdas) {
                auto omega = fusion_weights(t, phi, lam);
                auto theta = hyper_forward(t, bind_flat_hyper(t, fuse(t, omega, server.hypernets)),
                                           lam);
                for (std::size_t k = 0; k < clients; ++k) {
                    const auto& idx = batches[k][step % batches[k].size()];
                    auto lat = t.input(gather_rows(server.latent[k].latents, idx));
                    auto preds = predict_latent(t, lat, theta);
                    auto tch = tch_loss_node(
                        t, ce_loss_node(t, preds, detail::gather_ints(server.latent[k].labels, idx)),
                        fair_loss_node_or_zero(
                            t, preds, detail::gather_ints(server.latent[k].sensitive, idx)),
                        lam);
                    total = total ? t.add(*total, tch) : tch;
                }
            }
            auto root = t.scale(*total, 1.0 / static_cast<double>(lambdas.size() * clients));
            detail::check_loss_finite(t.value(root).at(0), -1, 0, step);
            acc += t.value(root).at(0);
            std::vector<Tape::NodeId> leaves(phi.p.begin(), phi.p.end());
            adam_step(server.fusion.params(), t.backward(root, leaves), server.fusion_opt,
                      cfg.lr, &names);
        }
        double epoch_loss = acc / static_cast<double>(steps);
        if (epoch == 0) result.first_epoch_loss = epoch_loss;
        result.last_epoch_loss = epoch_loss;
    }
    result.probe_after = fusion_probe_loss(server, server.fusion);
    server.fusion_trained = cfg.fusion_epochs > 0;
    return result;
}

// ---------------------------------------------------------------------------
// Whole-experiment driver.
// ---------------------------------------------------------------------------

struct DataConfig {
    bool synthetic = true;
    std::size_t n = 5000;
    std::size_t clients = 3;
    double heterogeneity = 0.5;
    std::string csv_path;
    std::string schema_path;
    SplitSpec split;  // seed field is ignored; per-client seeds are derived
};

/// Materialize per-client train/validation/test splits for a run seed.
inline std::vector<Split> prepare_client_data(const DataConfig& dc, std::uint64_t seed) {
    std::vector<Dataset> parts;
    if (dc.synthetic) {
        parts = generate_synthetic(dc.n, dc.clients, dc.heterogeneity, mix_seed(seed, 0xda7aULL));
    } else {
        Dataset full = load_csv(dc.csv_path, CsvSchema::load(dc.schema_path));
        parts = partition_dirichlet(full, dc.clients, dc.heterogeneity, mix_seed(seed, 0xda7aULL));
    }
    std::vector<Split> splits;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        SplitSpec spec = dc.split;
        spec.seed = mix_seed(seed, 0x5e7ULL, k);
        splits.push_back(split(parts[k], spec));
    }
    return splits;
}

struct RunResult {
    std::vector<RoundTelemetry> telemetry;
    CommModel final_psi;
    std::vector<ClientState> clients;
    ServerState server;
    FusionTrainResult fusion_loss;
    std::vector<FrontReport> local_reports;
    FrontReport global_report;
    double mean_local_hv = 0.0;
    double global_hv = 0.0;
};

/// Full pipeline: Phase I rounds, Phase II collection and fusion training,
/// then local and global front reports at the configured grid resolution.
inline RunResult run_experiment(const DataConfig& dc, const RoundConfig& cfg, Mode mode) {
    RunResult out;
    std::vector<Split> splits = prepare_client_data(dc, cfg.seed);
    std::size_t d_in = splits.front().train.feature_dim();

    auto server_rng = make_stream(cfg.seed, Stream::server_init);
    CommModel global_psi = CommModel::init(d_in, server_rng);

    std::vector<ClientState> clients;
    for (std::size_t k = 0; k < splits.size(); ++k) {
        ClientState c;
        c.id = k;
        c.psi = global_psi;
        auto rng = make_stream(cfg.seed, Stream::client_init, k);
        c.beta = HyperNet::init(rng);
        c.alpha = DirichletParams{1.0, 1.0};
        c.psi_opt = AdamState::for_params(c.psi.params());
        c.beta_opt = AdamState::for_params(c.beta.params());
        c.train = std::move(splits[k].train);
        c.validation = std::move(splits[k].validation);
        c.test = std::move(splits[k].test);
        clients.push_back(std::move(c));
    }

    for (int round = 1; round <= cfg.rounds; ++round) {
        auto tel = phase1_round(clients, global_psi, cfg, mode, round);
        out.telemetry.insert(out.telemetry.end(), tel.begin(), tel.end());
    }

    out.server = phase2_collect(clients, global_psi);
    if (phf_enabled(mode)) out.fusion_loss = phase2_train_fusion(out.server, cfg);

    std::vector<Dataset> tests;
    for (const ClientState& c : clients) tests.push_back(c.test);
    Dataset union_test = concat_datasets(tests);

    double local_acc = 0.0;
    for (const ClientState& c : clients) {
        FrontReport rep = local_hv_report(global_psi, c.beta, c.test, c.id, cfg.eval_models);
        local_acc += rep.hv;
        out.local_reports.push_back(std::move(rep));
    }
    out.mean_local_hv = local_acc / static_cast<double>(clients.size());

    const FusionNet* fusion = phf_enabled(mode) ? &out.server.fusion : nullptr;
    out.global_report = global_hv_report(global_psi, out.server.hypernets, fusion, union_test,
                                         cfg.eval_models);
    out.global_hv = out.global_report.hv;

    out.final_psi = global_psi;
    out.clients = std::move(clients);
    return out;
}

}  // namespace hetpfl
