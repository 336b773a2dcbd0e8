#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hetpfl/fed.hpp"

using namespace hetpfl;

namespace {

ClientState make_client(std::size_t id, std::size_t n, std::uint64_t seed) {
    Dataset pool = generate_synthetic_pool(n, seed);
    Split s = split(pool, SplitSpec{0.30, 9, 1, seed});
    ClientState c;
    c.id = id;
    auto rng = make_stream(seed, Stream::client_init, id);
    c.psi = CommModel::init(2, rng);
    c.beta = HyperNet::init(rng);
    c.alpha = DirichletParams{1.0, 1.0};
    c.psi_opt = AdamState::for_params(c.psi.params());
    c.beta_opt = AdamState::for_params(c.beta.params());
    c.train = std::move(s.train);
    c.validation = std::move(s.validation);
    c.test = std::move(s.test);
    return c;
}

RoundConfig small_config() {
    RoundConfig cfg;
    cfg.rounds = 3;
    cfg.tau_c = 3;
    cfg.tau_p = 3;
    cfg.fusion_epochs = 20;
    cfg.batch_size = 64;
    cfg.eval_models = 101;
    return cfg;
}

std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
}

bool same_params(const std::vector<const Tensor*>& a, const std::vector<const Tensor*>& b) {
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i]->data != b[i]->data) return false;
    return true;
}

}  // namespace

TEST_CASE("encoder update") {
    SUBCASE("zero epochs leave the encoder unchanged") {
        ClientState c = make_client(0, 400, 1);
        RoundConfig cfg = small_config();
        cfg.tau_c = 0;
        Tensor before = c.psi.w1;
        auto rng = make_stream(cfg.seed, Stream::client_round, 0, 1);
        local_comm_update(c, cfg, rng, 1);
        CHECK(c.psi.w1.data == before.data);
    }
    SUBCASE("cross-entropy falls on separable data after 30 steps") {
        ClientState c = make_client(0, 600, 2);
        RoundConfig cfg = small_config();
        cfg.tau_c = 30;
        HeadParams head = hyper_forward(c.beta, cfg.lambda_tilde);
        double before =
            ce_loss(predict_latent(comm_forward(c.psi, c.train.features), head), c.train.labels);
        auto rng = make_stream(cfg.seed, Stream::client_round, 0, 1);
        local_comm_update(c, cfg, rng, 1);
        head = hyper_forward(c.beta, cfg.lambda_tilde);
        double after =
            ce_loss(predict_latent(comm_forward(c.psi, c.train.features), head), c.train.labels);
        CHECK(after < before);
    }
    SUBCASE("bit-identical under a repeated stream") {
        auto run = [] {
            ClientState c = make_client(0, 400, 3);
            RoundConfig cfg = small_config();
            auto rng = make_stream(cfg.seed, Stream::client_round, 0, 1);
            local_comm_update(c, cfg, rng, 1);
            return c.psi.w1.data;
        };
        CHECK(run() == run());
    }
}

TEST_CASE("hypernet update") {
    SUBCASE("a single fixed preference reduces to plain scalarized training") {
        ClientState c = make_client(0, 600, 4);
        RoundConfig cfg = small_config();
        Tensor latents = comm_forward(c.psi, c.train.features);
        PreferenceVector lam{0.5, 0.5};
        auto value = [&] {
            Tensor p = predict_latent(latents, hyper_forward(c.beta, lam));
            return tch_loss({ce_loss(p, c.train.labels),
                             fair_loss_or_zero(p, c.train.sensitive)},
                            lam);
        };
        double before = value();
        auto rng = make_stream(cfg.seed, Stream::client_round, 0, 1);
        HyperNet scoring = c.beta;
        for (int s = 0; s < 5; ++s)
            hyper_step(c, cfg, latents, all_indices(c.train.size()), scoring, {lam}, rng, 1);
        CHECK(value() < before);
    }
    SUBCASE("zero steps change nothing and the empty batch is rejected downstream") {
        ClientState c = make_client(0, 400, 5);
        RoundConfig cfg = small_config();
        Tensor before = c.beta.flatten();
        auto rng = make_stream(cfg.seed, Stream::client_round, 0, 1);
        PrefBatch batch = local_hyper_update(c, cfg, 0, rng, 1);
        CHECK(c.beta.flatten().data == before.data);
        CHECK(batch.size() == 0);
        CHECK_THROWS_AS(local_alpha_update(c, batch, cfg.alpha_lr), ContractError);
    }
    SUBCASE("the returned preference batch has N finite loss vectors") {
        ClientState c = make_client(0, 400, 6);
        RoundConfig cfg = small_config();
        auto rng = make_stream(cfg.seed, Stream::client_round, 0, 1);
        PrefBatch batch = local_hyper_update(c, cfg, 2, rng, 1);
        REQUIRE(batch.size() == static_cast<std::size_t>(cfg.pref_batch));
        REQUIRE(batch.losses.size() == batch.size());
        for (const Point2& l : batch.losses) {
            CHECK(std::isfinite(l.x));
            CHECK(std::isfinite(l.y));
        }
    }
}

TEST_CASE("alpha update within a client") {
    SUBCASE("all-equal contributions leave alpha unchanged") {
        ClientState c = make_client(0, 400, 7);
        PrefBatch batch;
        batch.alpha = c.alpha;
        auto rng = make_stream(1, Stream::client_round);
        batch.lambdas = sample_dirichlet(c.alpha, 4, rng);
        batch.losses.assign(4, Point2{0.4, 0.4});
        local_alpha_update(c, batch, 0.05);
        CHECK(c.alpha.a1 == 1.0);
        CHECK(c.alpha.a2 == 1.0);
    }
    SUBCASE("contributions concentrated near one objective shift the mean") {
        // hand-built scores: only preferences near (0.9, 0.1) earn a
        // contribution, so E[lambda1] = a1/(a1+a2) must grow
        ClientState c = make_client(0, 400, 8);
        auto rng = make_stream(2, Stream::client_round);
        for (int update = 0; update < 50; ++update) {
            PrefBatch batch;
            batch.alpha = c.alpha;
            batch.lambdas = sample_dirichlet(c.alpha, 8, rng);
            for (const PreferenceVector& lam : batch.lambdas) {
                bool good = lam.l1 > 0.8;
                // distinct non-dominated points for good lambdas, one shared
                // dominated point otherwise
                batch.losses.push_back(good ? Point2{0.5 - 0.3 * lam.l1, 0.5 + 0.3 * lam.l1 - 0.2}
                                            : Point2{0.9, 0.9});
            }
            local_alpha_update(c, batch, 0.1);
        }
        double mean_l1 = c.alpha.a1 / (c.alpha.a1 + c.alpha.a2);
        CHECK(mean_l1 > 0.5);
    }
}

TEST_CASE("server aggregation") {
    ClientState a = make_client(0, 400, 9);
    ClientState b = make_client(1, 400, 10);

    SUBCASE("identical encoders aggregate to themselves") {
        b.psi = a.psi;
        std::vector<ClientState> clients;
        clients.push_back(std::move(a));
        clients.push_back(std::move(b));
        CommModel agg = server_aggregate_psi(clients);
        CHECK(agg.w1.data == clients[0].psi.w1.data);
    }
    SUBCASE("opposite parameters cancel") {
        auto flip = a.psi;
        for (Tensor* p : flip.params())
            for (double& v : p->data) v = -v;
        b.psi = flip;
        std::vector<ClientState> clients;
        clients.push_back(std::move(a));
        clients.push_back(std::move(b));
        CommModel agg = server_aggregate_psi(clients);
        for (double v : agg.w1.data) CHECK(v == 0.0);
    }
    SUBCASE("mean of two values") {
        a.psi.b1 = Tensor::vec({1, 2, 1, 2});
        b.psi.b1 = Tensor::vec({3, 4, 3, 4});
        std::vector<ClientState> clients;
        clients.push_back(std::move(a));
        clients.push_back(std::move(b));
        CommModel agg = server_aggregate_psi(clients);
        CHECK(agg.b1.data == std::vector<double>{2, 3, 2, 3});
    }
    SUBCASE("shape mismatch is a dimension error") {
        ClientState wide = make_client(1, 400, 11);
        wide.psi = CommModel::zeros(5);
        std::vector<ClientState> clients;
        clients.push_back(std::move(a));
        clients.push_back(std::move(wide));
        CHECK_THROWS_AS(server_aggregate_psi(clients), DimensionError);
    }
}

TEST_CASE("phase one rounds") {
    SUBCASE("broadcast overwrites client encoders") {
        std::vector<ClientState> clients = {make_client(0, 400, 12), make_client(1, 400, 13)};
        clients[1].psi = CommModel::zeros(2);  // desynchronized on purpose
        RoundConfig cfg = small_config();
        cfg.tau_c = 0;
        cfg.tau_p = 0;
        CommModel global_psi = clients[0].psi;
        phase1_round(clients, global_psi, cfg, Mode::hetpfl, 1);
        CHECK(same_params(std::as_const(clients[0]).psi.params(),
                          std::as_const(clients[1]).psi.params()));
        CHECK(same_params(std::as_const(global_psi).params(),
                          std::as_const(clients[0]).psi.params()));
    }
    SUBCASE("a single client degenerates to centralized training") {
        std::vector<ClientState> clients = {make_client(0, 500, 14)};
        RoundConfig cfg = small_config();
        CommModel global_psi = clients[0].psi;
        phase1_round(clients, global_psi, cfg, Mode::hetpfl, 1);
        CHECK(same_params(std::as_const(global_psi).params(),
                          std::as_const(clients[0]).psi.params()));
    }
    SUBCASE("validation scalarized loss improves over the rounds") {
        DataConfig dc;
        dc.n = 900;
        dc.clients = 3;
        dc.heterogeneity = 5.0;
        RoundConfig cfg = small_config();
        cfg.rounds = 6;
        cfg.seed = 5;
        RunResult res = run_experiment(dc, cfg, Mode::hetpfl);
        double first = 0.0, last = 0.0;
        int nf = 0, nl = 0;
        for (const RoundTelemetry& tel : res.telemetry) {
            if (tel.round == 1) {
                first += tel.val_tch_tilde;
                ++nf;
            }
            if (tel.round == cfg.rounds) {
                last += tel.val_tch_tilde;
                ++nl;
            }
        }
        CHECK(last / nl < first / nf);
    }
}

TEST_CASE("phase two collection") {
    std::vector<ClientState> clients = {make_client(0, 400, 15), make_client(1, 400, 16)};
    SUBCASE("zero encoder collects zero latents") {
        ServerState server = phase2_collect(clients, CommModel::zeros(2));
        for (const LatentDataset& q : server.latent)
            for (double v : q.latents.data) CHECK(v == 0.0);
    }
    SUBCASE("latent sizes match the training sets and hypernets are value copies") {
        ServerState server = phase2_collect(clients, clients[0].psi);
        REQUIRE(server.latent.size() == 2);
        for (std::size_t k = 0; k < 2; ++k) {
            CHECK(server.latent[k].size() == clients[k].train.size());
            CHECK(server.hypernets[k].flatten().data == clients[k].beta.flatten().data);
        }
        CHECK(server.collected);
    }
}

TEST_CASE("fusion training") {
    SUBCASE("a single client pins the fusion weight to one") {
        std::vector<ClientState> clients = {make_client(0, 400, 17)};
        ServerState server = phase2_collect(clients, clients[0].psi);
        RoundConfig cfg = small_config();
        cfg.fusion_epochs = 3;
        phase2_train_fusion(server, cfg);
        for (double l1 : {0.1, 0.5, 0.9}) {
            auto w = fusion_weights(server.fusion, PreferenceVector::clamped(l1));
            REQUIRE(w.size() == 1);
            CHECK(w[0] == 1.0);
        }
        // fused hypernet equals the single client's hypernet
        std::vector<double> omega = {1.0};
        HyperNet fused = fuse(omega, server.hypernets);
        CHECK(fused.flatten().data == clients[0].beta.flatten().data);
    }
    SUBCASE("fusion learns to prefer the strictly better hypernet") {
        // train one decent hypernet, then give the server that net plus a
        // copy with the emitted head negated (same fairness, worse accuracy
        // everywhere)
        ClientState c = make_client(0, 900, 18);
        RoundConfig cfg = small_config();
        cfg.tau_c = 10;
        cfg.tau_p = 10;
        auto rng = make_stream(cfg.seed, Stream::client_round, 0, 1);
        local_comm_update(c, cfg, rng, 1);
        local_hyper_update(c, cfg, 10, rng, 1);

        HyperNet bad = c.beta;
        for (double& v : bad.w3.data) v = -v;
        for (double& v : bad.b3.data) v = -v;

        std::vector<ClientState> one;
        one.push_back(std::move(c));
        ServerState server = phase2_collect(one, one[0].psi);
        server.hypernets = {one[0].beta, bad};
        server.latent.push_back(server.latent[0]);

        cfg.fusion_epochs = 200;
        FusionTrainResult fl = phase2_train_fusion(server, cfg);
        CHECK(fl.probe_after <= fl.probe_before);
        auto w = fusion_weights(server.fusion, PreferenceVector{0.5, 0.5});
        CHECK(w[0] >= 0.9);
    }
}

TEST_CASE("whole runs") {
    DataConfig dc;
    dc.n = 600;
    dc.clients = 3;
    dc.heterogeneity = 1.0;
    RoundConfig cfg = small_config();
    cfg.rounds = 2;
    cfg.tau_c = 2;
    cfg.tau_p = 2;
    cfg.fusion_epochs = 5;
    cfg.eval_models = 51;
    cfg.seed = 21;

    SUBCASE("all four modes complete") {
        for (Mode m : {Mode::hetpfl, Mode::ablate_psa, Mode::ablate_phf, Mode::ablate_both}) {
            RunResult res = run_experiment(dc, cfg, m);
            CHECK(res.local_reports.size() == 3);
            CHECK(res.mean_local_hv >= 0.0);
            CHECK(res.mean_local_hv <= 1.0);
            CHECK(res.global_hv >= 0.0);
            CHECK(res.global_hv <= 1.0);
        }
    }
    SUBCASE("identical seeds give identical artifacts") {
        RunResult a = run_experiment(dc, cfg, Mode::hetpfl);
        RunResult b = run_experiment(dc, cfg, Mode::hetpfl);
        CHECK(a.mean_local_hv == b.mean_local_hv);
        CHECK(a.global_hv == b.global_hv);
        REQUIRE(a.telemetry.size() == b.telemetry.size());
        for (std::size_t i = 0; i < a.telemetry.size(); ++i) {
            CHECK(a.telemetry[i].val_tch_grid == b.telemetry[i].val_tch_grid);
            CHECK(a.telemetry[i].alpha.a1 == b.telemetry[i].alpha.a1);
        }
        CHECK(a.final_psi.w1.data == b.final_psi.w1.data);
    }
    SUBCASE("disabling adaptation freezes alpha at the uniform start") {
        RunResult res = run_experiment(dc, cfg, Mode::ablate_psa);
        for (const RoundTelemetry& tel : res.telemetry) {
            CHECK(tel.alpha.a1 == 1.0);
            CHECK(tel.alpha.a2 == 1.0);
        }
        // and the adaptive mode does move alpha
        RunResult adaptive = run_experiment(dc, cfg, Mode::hetpfl);
        bool moved = false;
        for (const RoundTelemetry& tel : adaptive.telemetry)
            moved = moved || tel.alpha.a1 != 1.0 || tel.alpha.a2 != 1.0;
        CHECK(moved);
    }
}
