#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "hetpfl/hypervolume.hpp"
#include "hetpfl/preference.hpp"
#include "hetpfl/rng.hpp"
#include "testutil.hpp"

using namespace hetpfl;

// ---------------------------------------------------------------------------
// Monte Carlo hypervolume oracle: integrate box membership directly. Kept
// deliberately independent of the sweep implementation — per sample it asks
// "is this point dominated by any batch point?" via a prefix-min over the
// x-sorted list.
// ---------------------------------------------------------------------------
namespace {

struct McEstimate {
    double value;
    double ci99;  // half-width of the 99% confidence interval
};

McEstimate mc_hypervolume(const std::vector<Point2>& pts, RefPoint r, std::size_t samples,
                          std::uint64_t seed) {
    std::vector<Point2> clipped;
    for (Point2 p : pts) {
        p.x = std::max(p.x, 0.0);
        p.y = std::max(p.y, 0.0);
        clipped.push_back(p);
    }
    std::sort(clipped.begin(), clipped.end(),
              [](const Point2& a, const Point2& b) { return a.x < b.x; });
    std::vector<double> xs, prefix_min_y;
    double best = std::numeric_limits<double>::infinity();
    for (const Point2& p : clipped) {
        best = std::min(best, p.y);
        xs.push_back(p.x);
        prefix_min_y.push_back(best);
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(0.0, r.x), uy(0.0, r.y);
    std::size_t hits = 0;
    for (std::size_t s = 0; s < samples; ++s) {
        double x = ux(rng), y = uy(rng);
        // dominated iff some point has px <= x and py <= y
        auto it = std::upper_bound(xs.begin(), xs.end(), x);
        if (it != xs.begin()) {
            std::size_t i = static_cast<std::size_t>(it - xs.begin()) - 1;
            if (prefix_min_y[i] <= y) ++hits;
        }
    }
    double area_box = r.x * r.y;
    double p = static_cast<double>(hits) / static_cast<double>(samples);
    double se = std::sqrt(p * (1.0 - p) / static_cast<double>(samples)) * area_box;
    return {p * area_box, 2.576 * se};
}

std::vector<Point2> random_point_set(std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> usize(1, 100);
    std::uniform_real_distribution<double> uc(-0.2, 1.3);
    std::vector<Point2> pts(usize(rng));
    for (Point2& p : pts) p = {uc(rng), uc(rng)};
    return pts;
}

}  // namespace

TEST_CASE("hypervolume worked values") {
    CHECK(hv_2d({{0.5, 0.5}}) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(hv_2d({{0.2, 0.4}, {0.4, 0.2}}) == doctest::Approx(0.60).epsilon(1e-15));
    CHECK(hv_2d({{1.2, 0.3}}) == 0.0);
    CHECK(hv_2d({}) == 0.0);
    // negative coordinates clip to 0
    CHECK(hv_2d({{-0.5, -0.5}}) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("hypervolume contribution worked values") {
    std::vector<Point2> two = {{0.2, 0.4}, {0.4, 0.2}};
    CHECK(hvc(0, two) == doctest::Approx(0.12).epsilon(1e-12));
    CHECK(hvc(1, two) == doctest::Approx(0.12).epsilon(1e-12));

    std::vector<Point2> dom = {{0.2, 0.2}, {0.5, 0.5}};
    CHECK(hvc(1, dom) == 0.0);

    CHECK(hvc(0, {{0.5, 0.5}}) == doctest::Approx(0.25).epsilon(1e-15));

    std::vector<Point2> dup = {{0.3, 0.3}, {0.3, 0.3}};
    CHECK(hvc(0, dup) == 0.0);
    CHECK(hvc(1, dup) == 0.0);
}

TEST_CASE("hypervolume properties on random sets") {
    std::mt19937_64 rng(101);
    for (int inst = 0; inst < 50; ++inst) {
        std::vector<Point2> pts = random_point_set(rng);
        double hv = hv_2d(pts);
        CHECK(hv >= 0.0);
        CHECK(hv <= 1.0 + 1e-15);

        // filtering to the non-dominated subset changes nothing, bit-exactly
        std::vector<Point2> front = pareto_filter(pts);
        CHECK(hv_2d(front) == hv);

        // adding a point never decreases the value
        std::uniform_real_distribution<double> uc(0.0, 1.0);
        std::vector<Point2> more = pts;
        more.push_back({uc(rng), uc(rng)});
        CHECK(hv_2d(more) >= hv);

        // contributions are nonnegative, bounded, and sum below the total
        double sum = 0.0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            double c = hvc(i, pts);
            CHECK(c >= 0.0);
            CHECK(c <= hv + 1e-15);
            sum += c;
        }
        CHECK(sum <= hv + 1e-12);
    }
}

TEST_CASE("hypervolume agrees with the Monte Carlo integration oracle") {
    std::mt19937_64 rng(202);
    for (int inst = 0; inst < 20; ++inst) {
        std::vector<Point2> pts = random_point_set(rng);
        double exact = hv_2d(pts);
        McEstimate mc = mc_hypervolume(pts, {}, 200000, 777 + inst);
        CHECK(std::fabs(exact - mc.value) <= std::max(mc.ci99, 1e-9));
    }
}

TEST_CASE("pareto filter") {
    std::vector<Point2> all = {{0.1, 0.9}, {0.9, 0.1}, {0.5, 0.5}};
    CHECK(pareto_filter(all).size() == 3);
    std::vector<Point2> pair = {{0.2, 0.2}, {0.3, 0.3}};
    auto f = pareto_filter(pair);
    REQUIRE(f.size() == 1);
    CHECK(f[0] == Point2{0.2, 0.2});
    CHECK(pareto_filter({{0.4, 0.4}}).size() == 1);
}

TEST_CASE("digamma reference values and recurrence") {
    CHECK(digamma(1.0) == doctest::Approx(-0.57721566490153286).epsilon(1e-12));
    CHECK(digamma(0.5) == doctest::Approx(-1.96351002602142347).epsilon(1e-12));
    CHECK(digamma(2.0) - digamma(1.0) == doctest::Approx(1.0).epsilon(1e-12));
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.1, 99.0);
    for (int i = 0; i < 200; ++i) {
        double x = u(rng);
        CHECK(digamma(x + 1.0) - digamma(x) == doctest::Approx(1.0 / x).epsilon(1e-10));
    }
    CHECK_THROWS_AS(digamma(0.0), std::domain_error);
    CHECK_THROWS_AS(digamma(-1.0), std::domain_error);
}

TEST_CASE("dirichlet sampling") {
    SUBCASE("uniform concentration gives mean one half") {
        auto rng = make_stream(1, Stream::client_round);
        DirichletParams a{1.0, 1.0};
        double acc = 0.0;
        const int n = 100000;
        for (const PreferenceVector& lam : sample_dirichlet(a, n, rng)) acc += lam.l1;
        CHECK(acc / n == doctest::Approx(0.5).epsilon(0.02));
    }
    SUBCASE("lopsided concentration pushes the mean to the heavy side") {
        auto rng = make_stream(2, Stream::client_round);
        DirichletParams a{50.0, 0.1};
        double acc = 0.0;
        const int n = 20000;
        for (const PreferenceVector& lam : sample_dirichlet(a, n, rng)) acc += lam.l1;
        CHECK(acc / n >= 0.95);
    }
    SUBCASE("every draw satisfies the simplex invariants") {
        auto rng = make_stream(3, Stream::client_round);
        for (DirichletParams a : {DirichletParams{0.1, 0.1}, DirichletParams{50, 50},
                                  DirichletParams{0.1, 50}}) {
            for (const PreferenceVector& lam : sample_dirichlet(a, 2000, rng)) {
                CHECK(lam.l1 + lam.l2 == doctest::Approx(1.0).epsilon(1e-12));
                CHECK(lam.l1 >= kEpsilonLambda);
                CHECK(lam.l2 >= kEpsilonLambda);
            }
        }
    }
    SUBCASE("deterministic under a fixed stream") {
        auto r1 = make_stream(9, Stream::client_round, 4, 2);
        auto r2 = make_stream(9, Stream::client_round, 4, 2);
        auto s1 = sample_dirichlet({2.0, 3.0}, 50, r1);
        auto s2 = sample_dirichlet({2.0, 3.0}, 50, r2);
        for (std::size_t i = 0; i < s1.size(); ++i) {
            CHECK(s1[i].l1 == s2[i].l1);
        }
    }
}

TEST_CASE("dirichlet log-density gradient") {
    auto [g1, g2] = log_density_grad({1.0, 1.0}, {0.5, 0.5});
    // psi(2) - psi(1) = 1, so each component is ln(1/2) + 1
    CHECK(g1 == doctest::Approx(std::log(0.5) + 1.0).epsilon(1e-10));
    CHECK(g2 == doctest::Approx(std::log(0.5) + 1.0).epsilon(1e-10));

    auto [s1, s2] = log_density_grad({2.0, 2.0}, {0.5, 0.5});
    CHECK(s1 == doctest::Approx(s2).epsilon(1e-12));
}

TEST_CASE("score identity: expected log-density gradient is zero") {
    // stated against the true Dirichlet, so draw without the training-time
    // epsilon clamp
    for (DirichletParams a : {DirichletParams{1, 1}, DirichletParams{2, 5},
                              DirichletParams{0.5, 0.5}}) {
        auto rng = make_stream(11, Stream::client_round,
                               static_cast<std::uint64_t>(a.a1 * 10),
                               static_cast<std::uint64_t>(a.a2 * 10));
        const int n = 100000;
        double m1 = 0.0, m2 = 0.0, q1 = 0.0, q2 = 0.0;
        for (int i = 0; i < n; ++i) {
            auto [L1, L2] = testutil::raw_dirichlet2(a.a1, a.a2, rng);
            auto [g1, g2] = log_density_grad(a, PreferenceVector{L1, L2});
            m1 += g1;
            m2 += g2;
            q1 += g1 * g1;
            q2 += g2 * g2;
        }
        m1 /= n;
        m2 /= n;
        double se1 = std::sqrt((q1 / n - m1 * m1) / n);
        double se2 = std::sqrt((q2 / n - m2 * m2) / n);
        CHECK(std::fabs(m1) <= 3.0 * se1);
        CHECK(std::fabs(m2) <= 3.0 * se2);
    }
}

TEST_CASE("nes gradient estimator") {
    SUBCASE("equal contributions cancel exactly") {
        auto rng = make_stream(21, Stream::client_round);
        PrefBatch batch;
        batch.alpha = {1.5, 2.5};
        batch.lambdas = sample_dirichlet(batch.alpha, 4, rng);
        batch.losses = {{0.3, 0.3}, {0.3, 0.3}, {0.3, 0.3}, {0.3, 0.3}};
        auto [g1, g2] = nes_gradient(batch);
        CHECK(g1 == 0.0);
        CHECK(g2 == 0.0);
    }
    SUBCASE("invariant to constant shifts of the scores") {
        auto rng = make_stream(22, Stream::client_round);
        DirichletParams a{2.0, 1.0};
        auto lambdas = sample_dirichlet(a, 6, rng);
        std::vector<double> scores = {0.1, 0.4, 0.2, 0.9, 0.3, 0.5};
        auto base = nes_gradient_from_scores(a, lambdas, scores);
        for (double& s : scores) s += 17.0;
        auto shifted = nes_gradient_from_scores(a, lambdas, scores);
        CHECK(base.first == doctest::Approx(shifted.first).epsilon(1e-9));
        CHECK(base.second == doctest::Approx(shifted.second).epsilon(1e-9));
    }
    SUBCASE("matches the analytic gradient of E[lambda1] on the toy objective") {
        // E[lambda1] = a1/(a1+a2); d/da1 = a2/(a1+a2)^2, d/da2 = -a1/(a1+a2)^2;
        // true Dirichlet draws, since the analytic value is over Dirichlet(a)
        for (DirichletParams a : {DirichletParams{1, 1}, DirichletParams{2, 5}}) {
            auto rng = make_stream(23, Stream::client_round,
                                   static_cast<std::uint64_t>(a.a1),
                                   static_cast<std::uint64_t>(a.a2));
            const int batches = 100000;
            const std::size_t N = 4;
            double m1 = 0.0, m2 = 0.0, q1 = 0.0, q2 = 0.0;
            for (int b = 0; b < batches; ++b) {
                std::vector<PreferenceVector> lambdas(N);
                std::vector<double> scores(N);
                for (std::size_t v = 0; v < N; ++v) {
                    auto [L1, L2] = testutil::raw_dirichlet2(a.a1, a.a2, rng);
                    lambdas[v] = PreferenceVector{L1, L2};
                    scores[v] = L1;
                }
                auto [g1, g2] = nes_gradient_from_scores(a, lambdas, scores);
                m1 += g1;
                m2 += g2;
                q1 += g1 * g1;
                q2 += g2 * g2;
            }
            m1 /= batches;
            m2 /= batches;
            double se1 = std::sqrt((q1 / batches - m1 * m1) / batches);
            double se2 = std::sqrt((q2 / batches - m2 * m2) / batches);
            double s = a.a1 + a.a2;
            double want1 = a.a2 / (s * s);
            double want2 = -a.a1 / (s * s);
            CHECK(std::fabs(m1 - want1) <= 3.0 * se1);
            CHECK(std::fabs(m2 - want2) <= 3.0 * se2);
        }
    }
}

TEST_CASE("alpha updates") {
    DirichletParams a{1.0, 1.0};
    DirichletParams same = update_alpha(a, {0.0, 0.0}, 0.1);
    CHECK(same.a1 == 1.0);
    CHECK(same.a2 == 1.0);

    DirichletParams clamped = update_alpha({0.15, 1.0}, {10.0, 0.0}, 0.1);
    CHECK(clamped.a1 == kAlphaMin);
    CHECK(clamped.a2 == 1.0);

    DirichletParams moved = update_alpha({1.0, 1.0}, {-1.0, 1.0}, 0.1);
    CHECK(moved.a1 == doctest::Approx(1.1).epsilon(1e-12));
    CHECK(moved.a2 == doctest::Approx(0.9).epsilon(1e-12));

    CHECK_THROWS_AS(update_alpha(a, {std::nan(""), 0.0}, 0.1), NumericError);
}

TEST_CASE("preference grid is interior and nested under (m-1) | (m'-1)") {
    auto g10 = preference_grid(10);
    auto g1000 = preference_grid(1000);
    CHECK(g10.front().l1 == kEpsilonLambda);
    CHECK(g10.back().l1 == doctest::Approx(1.0 - kEpsilonLambda).epsilon(1e-15));
    // every coarse point appears in the fine grid: 9 | 999
    for (const PreferenceVector& c : g10) {
        bool found = false;
        for (const PreferenceVector& f : g1000)
            if (std::fabs(f.l1 - c.l1) < 1e-12) found = true;
        CHECK(found);
    }
}
