#include <doctest.h>

#include <cmath>

#include "solidify/interlacements.hpp"
#include "solidify/rng.hpp"

using namespace solidify;

namespace {

CompactSetSpec unit_ball()
{
    CompactSetSpec A;
    A.d = 3;
    A.add_ball(Point{}, 1);
    return A;
}

} // namespace

TEST_CASE("random walk steps")
{
    Stream rng = derive_stream(1, "steps", 0);
    StepSource s(rng);
    std::array<double, 6> n{};
    const int total = 1000000;
    for (int k = 0; k < total; ++k) n[s.next()] += 1;
    double chi2 = 0;
    for (double v : n) chi2 += (v - total / 6.0) * (v - total / 6.0) / (total / 6.0);
    CHECK(chi2 < 20.5); // 5 dof, p = 0.001

    std::vector<Site> p = sample_srw({1, 2, 3}, 100, 4);
    CHECK(p.size() == 101u);
    for (std::size_t i = 0; i + 1 < p.size(); ++i) {
        long d = 0;
        for (int k = 0; k < 3; ++k) d += std::labs(p[i + 1][k] - p[i][k]);
        CHECK(d == 1);
    }
    CHECK(sample_srw({1, 2, 3}, 100, 4) == p);
    LatticeBox b = LatticeBox::cube({-5, -5, -5}, 11);
    std::vector<Site> q = sample_srw({0, 0, 0}, 0, 4, &b);
    CHECK(!b.contains(q.back()));
    CHECK(b.contains(q[q.size() - 2]));
}

TEST_CASE("escape probability and range growth")
{
    // no return before leaving B(0, 16), times the far-field chance of
    // never coming back afterwards
    const double g0 = lattice_green({0, 0, 0});
    const int n = 20000;
    double s = 0, s2 = 0;
    for (int k = 0; k < n; ++k) {
        Stream rng = derive_stream(2, "escape", k);
        StepSource st(rng);
        Site x{0, 0, 0};
        double w = 0;
        for (;;) {
            apply_step(x, st.next());
            if (x == Site{0, 0, 0}) break;
            if (x[0] * x[0] + x[1] * x[1] + x[2] * x[2] > 256) {
                w = 1 - LatticeGreen::far_field(x) / g0;
                break;
            }
        }
        s += w;
        s2 += w * w;
    }
    double m = s / n, se = std::sqrt((s2 / n - m * m) / n);
    CHECK(std::fabs(m - 1 / g0) <= 4 * se);

    // |range of n steps| / n -> 1 / g~(0)
    double r = 0;
    const std::size_t steps = 400000;
    for (int k = 0; k < 4; ++k) {
        std::vector<Site> p = sample_srw({0, 0, 0}, steps, 100 + k);
        std::sort(p.begin(), p.end());
        r += double(std::unique(p.begin(), p.end()) - p.begin()) / double(steps);
    }
    CHECK(r / 4 == doctest::Approx(1 / g0).epsilon(0.03));
}

TEST_CASE("interlacement sample: vacancy law and thinning")
{
    LatticeBox W = LatticeBox::cube({0, 0, 0}, 6);
    CHECK_THROWS(sample_interlacement(1, W, 5, 1));
    CHECK_THROWS(sample_interlacement(1, LatticeBox{{0, 0, 0}, {2, 3, 4}}, 0, 1));
    const double g0 = lattice_green({0, 0, 0});
    const int n = 3000;
    std::vector<Site> pts = {{2, 2, 2}, {3, 3, 3}, {1, 2, 3}, {0, 0, 0}, {5, 1, 4}};
    std::vector<double> us = {0.5, 1, 2};
    std::vector<std::vector<double>> vac(us.size(), std::vector<double>(pts.size()));
    double traj = 0;
    for (int k = 0; k < n; ++k) {
        InterlacementSample s = sample_interlacement(2, W, 0, derive_stream(7, "vacancy", k)());
        traj += double(s.trajectories.size());
        for (std::size_t a = 0; a < us.size(); ++a)
            for (std::size_t b = 0; b < pts.size(); ++b) vac[a][b] += s.vacant(pts[b], us[a]);
        // thinning: level sets are nested
        for (std::size_t i = 0; i < W.size(); ++i)
            for (std::size_t a = 0; a + 1 < us.size(); ++a)
                if (s.occupied(W.site(i), us[a])) CHECK(s.occupied(W.site(i), us[a + 1]));
        CHECK(s.count(0.5) <= s.count(1));
        CHECK(s.count(2) == s.trajectories.size());
    }
    InterlacementSample one = sample_interlacement(2, W, 0, 1);
    CHECK(traj / n == doctest::Approx(2 * one.cap_window).epsilon(0.02));
    CHECK(one.return_bound > 0);
    CHECK(one.return_bound < 0.5);
    CHECK(one.returns > 0);
    for (std::size_t a = 0; a < us.size(); ++a)
        for (std::size_t b = 0; b < pts.size(); ++b) {
            double p = vac[a][b] / n, want = std::exp(-us[a] / g0);
            CHECK(std::fabs(p - want) <= 3 * std::sqrt(want * (1 - want) / n));
        }
    InterlacementSample tiny = sample_interlacement(1e-6, W, 0, 3);
    CHECK(tiny.trajectories.empty());
}

TEST_CASE("disconnect_detect")
{
    auto all = [](const Site&) { return true; };
    CHECK(disconnect_detect(all, {}, 6));
    CHECK(!disconnect_detect(all, {{0, 0, 0}}, 6));
    auto shell = [](const Site& x) { return std::max({std::labs(x[0]), std::labs(x[1]), std::labs(x[2])}) != 3; };
    CHECK(disconnect_detect(shell, {{0, 0, 0}, {1, 0, 0}}, 6));
    auto holed = [&](const Site& x) { return shell(x) || x == Site{3, 0, 0}; };
    CHECK(!disconnect_detect(holed, {{0, 0, 0}}, 6));
    // A on the outside of the shell
    CHECK(!disconnect_detect(shell, {{4, 0, 0}}, 6));

    CompactSetSpec A = unit_ball();
    CHECK(blow_up(A, 4).size() == 257u);
    CHECK(sphere_radius(2, 4) == 8);
    CHECK_THROWS(disconnection_mc(A, 1.1, 4, 1, 1, 1));
}

TEST_CASE("excursions")
{
    BoxTriple t{{0, 0, 0}, 2, 5};
    CHECK(t.D().lo == Site{-6, -6, -6});
    CHECK(t.D().side[0] == 14);
    CHECK(t.U().lo == Site{-9, -9, -9});
    CHECK(t.U().side[0] == 18);
    CHECK(t.U().contains(t.D()));

    auto line = [](long a, long b) {
        std::vector<Site> p;
        for (long x = a; a <= b ? x <= b : x >= b; x += a <= b ? 1 : -1) p.push_back({x, 20, 0});
        return p;
    };
    CHECK(path_excursions(line(-30, 30), t).empty());
    std::vector<Site> p;
    for (auto seg : {line(-12, 0), line(0, 9), line(9, 0), line(0, -10)}) p.insert(p.end(), seg.begin(), seg.end());
    for (Site& x : p) x[1] = 0;
    auto e = path_excursions(p, t);
    REQUIRE(e.size() == 2u);
    CHECK(p[e[0].first] == Site{-6, 0, 0});
    CHECK(p[e[0].second] == Site{9, 0, 0});
    CHECK(p[e[1].second] == Site{-10, 0, 0});

    // concatenation adds counts
    std::vector<Site> q = p;
    q.insert(q.end(), p.begin(), p.end());
    CHECK(path_excursions(q, t).size() == 4u);

    // mean count grows linearly in u
    LatticeBox W = LatticeBox::cube({-6, -6, -6}, 14);
    std::vector<double> us = {0.25, 0.5, 0.75, 1.0}, mean(4, 0);
    const int n = 40;
    for (int k = 0; k < n; ++k) {
        InterlacementSample s = sample_interlacement(1, W, 0, derive_stream(3, "linear", k)());
        for (std::size_t j = 0; j < us.size(); ++j) mean[j] += double(excursion_count(s, t, us[j])) / n;
    }
    double mx = 0.625, my = 0, sxx = 0, sxy = 0, syy = 0;
    for (double y : mean) my += y / 4;
    for (std::size_t j = 0; j < 4; ++j) {
        sxx += (us[j] - mx) * (us[j] - mx);
        sxy += (us[j] - mx) * (mean[j] - my);
        syy += (mean[j] - my) * (mean[j] - my);
    }
    CHECK(sxy * sxy / (sxx * syy) > 0.99);
    InterlacementSample s = sample_interlacement(1, W, 0, 5);
    CHECK_THROWS(excursions(s, BoxTriple{{0, 0, 0}, 4, 5}));
}

TEST_CASE("good boxes and the connectivity check")
{
    const long L = 6;
    GoodParams p{1.2, 1.0, 0.1, 0.1};
    BoxTriple t0{{0, 0, 0}, L, 5}, t1{{L, 0, 0}, L, 5};
    LatticeBox W = LatticeBox::cube({-3 * L, -3 * L, -3 * L}, 8 * L);

    // nothing there: the cluster is all of B, no local time
    InterlacementSample empty = sample_interlacement(1e-9, W, 0, 1);
    BoxClassification e = classify_box(empty, t0, p);
    CHECK(e.cluster);
    CHECK(e.cluster_diameter == L - 1);
    CHECK(!e.local_time);
    CHECK(!e.good);
    CHECK(connectivity_check(empty, {t0, t1}, p, 1e-9) == ChainResult::Skipped);

    // saturated: B is covered
    InterlacementSample full = sample_interlacement(12, W, 0, 2);
    GoodParams deep{30, 20, 0.1, 0.1};
    CHECK(classify_box(full, t0, deep).determined);
    CHECK(!classify_box(full, t0, deep).cluster);
    CHECK(!classify_box(full, t0, deep).good);
    CHECK_THROWS(classify_box(full, t0, GoodParams{1, 1, 0.5, 0.1}));

    int found = 0, failed = 0;
    for (int k = 0; k < 12; ++k) {
        InterlacementSample s = sample_interlacement(1, W, 0, derive_stream(4, "chain", k)());
        BoxClassification c = classify_box(s, t0, p);
        ChainResult r = connectivity_check(s, {t0, t1}, p, 0.2);
        found += r == ChainResult::Found;
        failed += r == ChainResult::Failed;
        CHECK(connectivity_check(s, {t0}, p, 0.2) != ChainResult::Failed);

        // only the first floor(alpha cap) excursions matter: drop the
        // trajectories past the last of them
        std::vector<Excursion> ex = excursions(s, t0);
        if (ex.size() <= c.n_alpha) continue;
        double cut = ex[c.n_alpha - 1].label;
        InterlacementSample t = s;
        t.trajectories.erase(std::remove_if(t.trajectories.begin(), t.trajectories.end(),
                                            [&](const Trajectory& tr) { return tr.label > cut; }),
                             t.trajectories.end());
        BoxClassification d = classify_box(t, t0, p);
        CHECK(d.cluster == c.cluster);
        CHECK(d.connected == c.connected);
        CHECK(d.local_time == c.local_time);
        CHECK(d.boundary_time == c.boundary_time);
    }
    CHECK(failed == 0);
    CHECK(found > 0);
    CHECK_THROWS(connectivity_check(empty, {t0, BoxTriple{{2 * L, 0, 0}, L, 5}}, p, 0.1));
}

TEST_CASE("exponential bound")
{
    CHECK(exponential_bound_rhs(10, 1, 1, 0.3, 2) == doctest::Approx(1));
    CHECK(exponential_bound_rhs(10, 1, 2, 0, 3) == doctest::Approx(std::exp(-std::pow(std::sqrt(2) - 1, 2) * 10)));
    CHECK(exponential_bound_rhs(20, 1, 2, 0.1, 3) < exponential_bound_rhs(10, 1, 2, 0.1, 3));
    CHECK_THROWS(exponential_bound_rhs(10, 0.01, 2, 0.5, 3)); // eps (sqrt(ubar/u) - 1) >= 1
    CHECK_THROWS(exponential_bound_rhs({{0, 0, 0}, {20, 0, 0}}, 2, 5, 1, 2, 0.1, 3));
    double two = exponential_bound_rhs({{0, 0, 0}, {26, 0, 0}}, 2, 5, 1, 2, 0.1, 3);
    double one = exponential_bound_rhs({{0, 0, 0}}, 2, 5, 1, 2, 0.1, 3);
    CHECK(two < one);
}

TEST_CASE("disconnection")
{
    CompactSetSpec A = unit_ball();
    CHECK(disconnection_mc(A, 2, 4, 1e-6, 10, 1).p == 0);
    CHECK(disconnection_mc(A, 2, 4, 40, 10, 1).p == 1);
    auto flags = disconnection_levels(A, 2, 4, {1, 2, 3, 4, 6}, 30, 2);
    for (auto& f : flags)
        for (std::size_t j = 0; j + 1 < f.size(); ++j)
            if (f[j]) CHECK(f[j + 1]);
    DisconnectionEstimate a = disconnection_mc(A, 2, 4, 3.5, 60, 11), b = disconnection_mc(A, 2, 4, 3.5, 60, 12);
    CHECK(std::fabs(a.p - b.p) <= 3 * std::hypot(a.se, b.se) + 1e-12);
    DisconnectionEstimate w = disconnection_srw(A, 2, 4, 20, 1);
    CHECK(w.p >= 0);
    CHECK(w.R == 8);
}
