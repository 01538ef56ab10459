#include <doctest.h>

#include <cmath>

#include "solidify/density.hpp"
#include "solidify/resonance.hpp"
#include "solidify/rng.hpp"

using namespace solidify;

namespace {

std::vector<int> entry_order(const DyadicIndicator& u, const std::vector<int>& levels, double sign,
                             double length)
{
    double alpha = std::pow(4.0, -3) / 3.0;
    PathSample line = polyline(3, {Point{}, make_point({sign * length, 0, 0})});
    std::vector<std::pair<double, int>> t;
    for (int l : levels) {
        auto f = [&](const Point& y) { return sigma_tilde(u, y, l); };
        t.push_back({first_entry(line, 0, f, std::ldexp(1.0, l - 2), alpha, 1 - alpha, 1e-9), l});
    }
    std::sort(t.begin(), t.end());
    std::vector<int> out;
    for (auto& p : t) out.push_back(p.second);
    return out;
}

} // namespace

TEST_CASE("ladder arithmetic")
{
    CHECK(min_separation(3, 1) == 12);
    auto s = ladder(3, 7, 1, 2, 12);
    CHECK(s.ell0 == 24);
    CHECK(s.a_star == std::vector<int>{24, 36, 48, 60});
    CHECK(s.a == std::vector<int>{24, 48});
    CHECK(s.alpha_tilde == doctest::Approx(1.0 / 192));
    CHECK_THROWS(ladder(3, 7, 1, 2, 11));
    auto t = ladder(3, 0, 2, 3);
    CHECK(t.a_star.size() == 9u);
    CHECK(t.a.size() == 3u);
    CHECK(all_labels(t, t.a) == t.a_star);
    for (int l : intermediate_labels(t, t.a)) CHECK(std::find(t.a.begin(), t.a.end(), l) == t.a.end());
}

TEST_CASE("recursion bound")
{
    for (int I : {1, 2, 10, 1000}) CHECK(recursion_bound(1, I, 0.3) == 0.0);
    CHECK(recursion_bound(3, 0, 0.3) == 1.0);
    CHECK(recursion_bound(2, -4, 0.3) == 1.0);
    CHECK(recursion_bound(2, 100, 0.5) == doctest::Approx(std::pow(0.5, 9)));
    CHECK(recursion_bound(3, 10000, 0.5) <= recursion_bound(3, 100, 0.5));
    CHECK(recursion_bound(2, 400, 0.7) <= recursion_bound(2, 400, 0.5));
}

TEST_CASE("resonance membership")
{
    auto sl = slab(3, 4, 200);
    auto s = ladder(3, 0, 1, 3);
    auto r = resonance_membership(Point{}, sl, s);
    CHECK(r.count == 6);
    CHECK(r.in_res);
    auto deep = resonance_membership(make_point({-8, 0, 0}), sl, s);
    CHECK(deep.count == 0);
    CHECK_FALSE(deep.in_res);
}

TEST_CASE("cactus: at most one resonant level on the axis")
{
    const int J = 3, L = 5;
    auto u = cactus_pile(3, J, L, 0);
    auto info = cactus_info(J, L, 0);
    double alpha = std::pow(4.0, -3) / 3.0;
    for (int i = 0; i <= 4000; ++i) {
        double t = info.x.back() * 1.2 * i / 4000.0;
        int count = 0;
        for (int l : info.levels) {
            double v = sigma_tilde(u, make_point({t, 0, 0}), l);
            count += (v >= alpha && v <= 1 - alpha);
        }
        CHECK(count <= 1);
    }
}

TEST_CASE("crossing order fixture")
{
    auto u = crossing_order(3, 5, 0);
    auto info = cactus_info(2, 5, 0);
    CHECK(entry_order(u, info.levels, 1, 2 * info.x[2]) == std::vector<int>{0, 5, 10});
    CHECK(entry_order(u, info.levels, -1, 2 * info.x[2]) == std::vector<int>{0, 10, 5});

    // the greedy I-family on the same lines
    std::vector<int> labels{0, 5, 10};
    auto plus = track_ifamily(polyline(3, {Point{}, make_point({2 * info.x[2], 0, 0})}), u, labels);
    auto minus = track_ifamily(polyline(3, {Point{}, make_point({-2 * info.x[2], 0, 0})}), u, labels);
    CHECK(plus.complete);
    CHECK(minus.complete);
    CHECK(plus.lhat == std::vector<int>{0, 5, 10});
    CHECK(minus.lhat == std::vector<int>{0, 10, 5});
    for (std::size_t i = 1; i < plus.S.size(); ++i) CHECK(plus.S[i - 1] <= plus.S[i]);
}

TEST_CASE("I-family on a slab crossing")
{
    auto sl = slab(3, 4, 40);
    PathSample p = polyline(3, {make_point({-3, 0.1, 0}), make_point({3, 0.2, 0})});
    auto rec = track_ifamily(p, sl, {0});
    CHECK(rec.complete);
    CHECK(rec.S[1] == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(rec.lhat[0] == 0);
}

TEST_CASE("gamma chain on the slab")
{
    auto sl = slab(3, 4, 60);
    std::vector<int> scales{0, 12};
    Stream rng = derive_stream(1, "gamma-test", 0);
    int ok = 0;
    for (int i = 0; i < 50; ++i) {
        auto g = gamma_chain_wos(Point{}, sl, scales, rng);
        if (g.event_c) {
            ++ok;
            CHECK(g.displacement_ok);
            CHECK(g.endpoint_ok);
        }
    }
    CHECK(ok > 0);
    CHECK_THROWS(gamma_chain_wos(make_point({-1, 0, 0}), sl, scales, rng));
    CHECK_THROWS(gamma_chain_wos(Point{}, sl, {0, 5}, rng));
}

TEST_CASE("avoidance: translation invariance and a separating shell")
{
    auto sl = slab(3, 4, 200);
    auto s = ladder(3, 0, 1, 2);
    AvoidanceOptions opt;
    opt.n_paths = 200;
    opt.R_out = 6; // the fence cuts the resonant band
    Point x = make_point({-8, 0, 0});
    auto a = avoidance_experiment({x}, sl, s, opt);
    auto b = avoidance_experiment({Point{}}, sl.translated(make_point({8, 0, 0})), s, opt);
    CHECK(a[0].p_avoid == b[0].p_avoid);
    CHECK(a[0].mean_steps == b[0].mean_steps);
    CHECK(a[0].p_avoid > 0.0);
    CHECK(a[0].p_avoid < 1.0);

    // from inside a cube every exit crosses the resonant band at its surface
    auto cube = cube_domain(3, 8.0, 4);
    opt.R_out = 0;
    auto c = avoidance_experiment({Point{}}, cube, ladder(3, 0, 1, 1), opt);
    CHECK(c[0].p_avoid == 0.0);
    CHECK(c[0].remainder < 1.0);
}
