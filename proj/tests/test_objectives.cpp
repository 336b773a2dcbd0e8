#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "hetpfl/objectives.hpp"
#include "hetpfl/optim.hpp"
#include "testutil.hpp"

using namespace hetpfl;
using testutil::finite_diff;
using testutil::max_rel_err;
using testutil::random_tensor;

TEST_CASE("cross-entropy values") {
    CHECK(ce_loss(Tensor::vec({0.5}), {1}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(ce_loss(Tensor::vec({1.0 - 1e-12, 1e-12}), {1, 0}) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(ce_loss(Tensor::vec({0.9, 0.1}), {1, 0}) ==
          doctest::Approx(-std::log(0.9)).epsilon(1e-12));
    CHECK_THROWS_AS(ce_loss(Tensor::vec({}), {}), ContractError);
}

TEST_CASE("fairness loss values") {
    CHECK(fair_loss(Tensor::vec({0.3, 0.3, 0.3}), {0, 1, 0}) == 0.0);
    CHECK(fair_loss(Tensor::vec({0.0, 1.0}), {0, 1}) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(fair_loss(Tensor::vec({1.0, 0.0}), {0, 1}) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK_THROWS_AS(fair_loss(Tensor::vec({0.2, 0.8}), {1, 1}), ContractError);
}

TEST_CASE("fairness loss is symmetric under group relabeling") {
    std::mt19937_64 rng(3);
    for (int inst = 0; inst < 25; ++inst) {
        std::size_t n = 2 + static_cast<std::size_t>(rng() % 30);
        Tensor p = random_tensor({n}, rng, 0.01, 0.99);
        std::vector<int> a(n);
        for (auto& v : a) v = static_cast<int>(rng() % 2);
        if (std::all_of(a.begin(), a.end(), [&](int x) { return x == a[0]; })) a[0] = 1 - a[0];
        std::vector<int> flipped(n);
        for (std::size_t i = 0; i < n; ++i) flipped[i] = 1 - a[i];
        CHECK(fair_loss(p, a) == doctest::Approx(fair_loss(p, flipped)).epsilon(1e-12));
    }
}

TEST_CASE("losses are permutation invariant") {
    std::mt19937_64 rng(5);
    Tensor p = random_tensor({12}, rng, 0.01, 0.99);
    std::vector<int> y(12), a(12);
    for (std::size_t i = 0; i < 12; ++i) {
        y[i] = static_cast<int>(rng() % 2);
        a[i] = static_cast<int>(i % 2);
    }
    std::vector<std::size_t> perm(12);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor p2 = Tensor::zeros({12});
    std::vector<int> y2(12), a2(12);
    for (std::size_t i = 0; i < 12; ++i) {
        p2.at(i) = p.at(perm[i]);
        y2[i] = y[perm[i]];
        a2[i] = a[perm[i]];
    }
    CHECK(ce_loss(p, y) == doctest::Approx(ce_loss(p2, y2)).epsilon(1e-12));
    CHECK(fair_loss(p, a) == doctest::Approx(fair_loss(p2, a2)).epsilon(1e-12));
}

TEST_CASE("tchebycheff values and tie rule") {
    CHECK(tch_loss({0.3, 0.6}, PreferenceVector{0.5, 0.5}) == doctest::Approx(1.2));
    CHECK(tch_loss({0.2, 0.2}, PreferenceVector{0.8, 0.2}) == doctest::Approx(1.0));
    CHECK(tch_loss({0.4, 0.4}, PreferenceVector{0.5, 0.5}) == doctest::Approx(0.8));

    // on a tie the gradient goes to the cross-entropy branch
    Tape t;
    auto ce = t.input(Tensor::scalar(0.4));
    auto fair = t.input(Tensor::scalar(0.4));
    auto root = tch_loss_node(t, ce, fair, PreferenceVector{0.5, 0.5});
    CHECK(t.value(root).at(0) == doctest::Approx(0.8));
    std::vector<Tape::NodeId> leaves = {ce, fair};
    auto grads = t.backward(root, leaves);
    CHECK(grads[0].at(0) == 2.0);
    CHECK(grads[1].at(0) == 0.0);

    CHECK_THROWS_AS(tch_loss({0.1, 0.1}, PreferenceVector{2e-4, 1.0 - 2e-4}), ContractError);
}

TEST_CASE("tchebycheff dominates each weighted objective with equality somewhere") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    std::uniform_real_distribution<double> ul(0.05, 0.95);
    for (int inst = 0; inst < 100; ++inst) {
        LossVector l{u(rng), u(rng)};
        PreferenceVector lam = PreferenceVector::clamped(ul(rng));
        double v = tch_loss(l, lam);
        CHECK(v >= l.ce / lam.l1 - 1e-15);
        CHECK(v >= l.fair / lam.l2 - 1e-15);
        bool attained = v == l.ce / lam.l1 || v == l.fair / lam.l2;
        CHECK(attained);
    }
}

TEST_CASE("loss gradients match finite differences") {
    std::mt19937_64 rng(21);
    int checked = 0;
    for (int inst = 0; inst < 40 && checked < 20; ++inst) {
        std::size_t n = 6;
        Tensor p0 = random_tensor({n}, rng, 0.05, 0.95);
        std::vector<int> y(n), a(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = static_cast<int>(rng() % 2);
            a[i] = static_cast<int>(i % 2);
        }
        PreferenceVector lam = PreferenceVector::clamped(0.3 + 0.4 * (inst / 40.0));

        // keep away from the max tie set and the |cov| kink, where finite
        // differences are meaningless
        LossVector at{ce_loss(p0, y), fair_loss(p0, a)};
        if (std::fabs(at.ce / lam.l1 - at.fair / lam.l2) < 1e-3) continue;
        if (at.fair < 1e-3) continue;
        ++checked;

        auto loss = [&](const std::vector<Tensor>& ps) {
            LossVector l{ce_loss(ps[0], y), fair_loss(ps[0], a)};
            return tch_loss(l, lam);
        };
        std::vector<Tensor> fd = finite_diff(loss, {p0});
        Tape t;
        auto p = t.input(p0);
        auto root = tch_loss_node(t, ce_loss_node(t, p, y), fair_loss_node(t, p, a), lam);
        Tensor g = t.gradient(root, p);
        CHECK(max_rel_err({g}, fd) <= 1e-4);
    }
    CHECK(checked >= 10);
}

TEST_CASE("single-group batches contribute a zero fairness term") {
    Tape t;
    auto p = t.input(Tensor::vec({0.2, 0.9, 0.4}));
    auto node = fair_loss_node_or_zero(t, p, {1, 1, 1});
    CHECK(t.value(node).at(0) == 0.0);
    Tensor g = t.gradient(node, p);
    CHECK(g.data == std::vector<double>{0, 0, 0});
    CHECK_THROWS_AS(fair_loss_node(t, p, {1, 1, 1}), ContractError);
}

// Convex two-objective toy with an analytic front: l1(w) = |w - c1|^2 and
// l2(w) = |w - c2|^2 over w in R^2. Minimizing the scalarized loss for an
// interior preference must land on the front with the loss vector aligned to
// the preference direction.
TEST_CASE("preference alignment on the convex analytic toy") {
    auto train_for = [](const PreferenceVector& lam, std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        Tensor w = random_tensor({2}, rng, -0.5, 0.5);
        std::vector<Tensor*> params = {&w};
        AdamState st = AdamState::for_params(params);
        Tensor c1 = Tensor::vec({1.0, 0.0});
        Tensor c2 = Tensor::vec({0.0, 1.0});
        for (int step = 0; step < 4000; ++step) {
            Tape t;
            auto wn = t.input(w);
            auto d1 = t.sub(wn, t.input(c1));
            auto d2 = t.sub(wn, t.input(c2));
            auto l1 = t.sum(t.mul(d1, d1));
            auto l2 = t.sum(t.mul(d2, d2));
            auto root = t.max2(t.scale(l1, 1.0 / lam.l1), t.scale(l2, 1.0 / lam.l2));
            adam_step(params, {t.gradient(root, wn)}, st, 0.005);
        }
        double l1 = (w.at(0) - 1.0) * (w.at(0) - 1.0) + w.at(1) * w.at(1);
        double l2 = w.at(0) * w.at(0) + (w.at(1) - 1.0) * (w.at(1) - 1.0);
        double dot = l1 * lam.l1 + l2 * lam.l2;
        double na = std::sqrt(l1 * l1 + l2 * l2);
        double nb = std::sqrt(lam.l1 * lam.l1 + lam.l2 * lam.l2);
        return std::acos(std::clamp(dot / (na * nb), -1.0, 1.0)) * 180.0 / 3.14159265358979;
    };
    CHECK(train_for(PreferenceVector{0.3, 0.7}, 42) <= 5.0);
    CHECK(train_for(PreferenceVector{0.5, 0.5}, 43) <= 5.0);
}
