#include <doctest.h>

#include <cmath>

#include "solidify/brownian.hpp"
#include "solidify/potential.hpp"
#include "solidify/rng.hpp"

using namespace solidify;

namespace {

ObstacleSet ball(const Point& c, double r)
{
    CompactSetSpec s;
    s.d = 3;
    s.add_ball(c, r);
    return ObstacleSet(s);
}

Box box3(std::initializer_list<double> lo, std::initializer_list<double> hi)
{
    Box b;
    b.d = 3;
    b.lo = make_point(lo);
    b.hi = make_point(hi);
    return b;
}

} // namespace

TEST_CASE("sample_path: determinism and moments")
{
    PathSample a = sample_path(3, make_point({1, 2, 3}), 0.01, 50, 7);
    PathSample b = sample_path(3, make_point({1, 2, 3}), 0.01, 50, 7);
    CHECK(a.positions == b.positions);
    const int n = 20000;
    double s[3] = {0, 0, 0}, s2 = 0;
    for (int k = 0; k < n; ++k) {
        PathSample p = sample_path(3, Point{}, 0.5, 4, derive_stream(3, "moments", k)());
        for (int i = 0; i < 3; ++i) s[i] += p.positions.back()[i];
        for (int i = 0; i < 3; ++i) s2 += p.positions.back()[i] * p.positions.back()[i];
    }
    for (int i = 0; i < 3; ++i) CHECK(std::fabs(s[i] / n) <= 4 * std::sqrt(2.0 / n));
    CHECK(s2 / n == doctest::Approx(6.0).epsilon(0.05));
}

TEST_CASE("stop_tau")
{
    PathSample still = polyline(3, {Point{}, Point{}, Point{}});
    CHECK(stop_tau(still, 0.1) == kNever);
    std::vector<Point> ramp;
    for (int i = 0; i <= 8; ++i) ramp.push_back(make_point({0.25 * i, 0, 0}));
    CHECK(stop_tau(polyline(3, ramp), 1.0) == doctest::Approx(4.0).epsilon(1e-3));
    CHECK_THROWS(stop_tau(still, 0));

    // X -> 2X, t -> 4t on the same seeds
    double t1 = 0, t2 = 0;
    int n = 400;
    for (int k = 0; k < n; ++k) {
        std::uint64_t seed = derive_stream(5, "tau", k)();
        PathSample p = sample_path(3, Point{}, 1e-3, 4000, seed);
        PathSample q = sample_path(3, Point{}, 4e-3, 4000, seed);
        double a = stop_tau(p, 0.5), b = stop_tau(q, 1.0);
        REQUIRE(std::isfinite(a));
        CHECK(b == doctest::Approx(4 * a).epsilon(1e-9));
        t1 += a;
        t2 += b;
    }
    CHECK(t2 / t1 == doctest::Approx(4.0).epsilon(0.02));
}

TEST_CASE("ObstacleSet distance and bucketing")
{
    CompactSetSpec s = perforated_cube_shell(1, 0.25, 0.125, 1.0 / 16);
    ObstacleSet fast(s), slow;
    CHECK(fast.bucket() > 0);
    Stream rng = derive_stream(1, "obstacle", 0);
    for (int k = 0; k < 2000; ++k) {
        Point x = make_point({3 * rng.uniform() - 1.5, 3 * rng.uniform() - 1.5, 3 * rng.uniform() - 1.5});
        double brute = INFINITY;
        for (const Primitive& p : s.parts) {
            double e2 = 0;
            for (int i = 0; i < 3; ++i) {
                double e = std::max({p.lo[i] - x[i], 0.0, x[i] - p.hi[i]});
                e2 += e * e;
            }
            brute = std::min(brute, std::sqrt(e2));
        }
        double d = fast.distance(x);
        CHECK(d <= brute + 1e-12);
        if (brute < fast.bucket()) CHECK(d == doctest::Approx(brute).epsilon(1e-12));
    }
    // middle of a hole, half way through the wall
    Point h = make_point({1 - 1.0 / 32, -1 + 0.125, -1 + 0.375});
    CHECK(!fast.contains(h));
    CHECK(fast.distance(h) == doctest::Approx(1.0 / 16));
    CHECK_THROWS(perforated_cube_shell(1, 0.3, 0.1, 0.05));
}

TEST_CASE("hit_before: balls")
{
    ObstacleSet b = ball(Point{}, 0.5);
    HitOptions o;
    o.n_paths = 20000;
    SUBCASE("start inside")
    {
        CHECK(hit_before(make_point({0.1, 0, 0}), b, Fence::none(), o).p == 1.0);
        o.method = HitOptions::Method::Euler;
        CHECK(hit_before(make_point({0.1, 0, 0}), b, Fence::sup_ball(Point{}, 2), o).p == 1.0);
    }
    SUBCASE("no fence: rho / R")
    {
        HitEstimate e = hit_before(make_point({0.8, 0, 0}), b, Fence::none(), o);
        CHECK(std::fabs(e.p - 0.625) <= 4 * e.se + 1e-3);
        e = hit_before(make_point({0, 3, 0}), b, Fence::none(), o);
        CHECK(std::fabs(e.p - 0.5 / 3) <= 4 * e.se + 1e-3);
        CHECK(e.remainder == 0);
    }
    SUBCASE("Euclidean fence, WoS against Euler")
    {
        // (1/|x| - 1/R) / (1/rho - 1/R) with |x| = 1.5, R = 3
        Fence f = Fence::euclid_ball(Point{}, 3);
        HitEstimate w = hit_before(make_point({1.5, 0, 0}), b, f, o);
        CHECK(std::fabs(w.p - 0.2) <= 4 * w.se + 1e-3);
        o.method = HitOptions::Method::Euler;
        o.n_paths = 4000;
        o.dt = 1e-3;
        HitEstimate e = hit_before(make_point({1.5, 0, 0}), b, f, o);
        CHECK(std::fabs(e.p - 0.2) <= 4 * e.se + 0.01);
    }
}

TEST_CASE("hit_before: face symmetry and polar targets")
{
    CompactSetSpec face;
    face.d = 3;
    face.add_box(box3({1, -1, -1}, {1.5, 1, 1}));
    HitOptions o;
    o.n_paths = 30000;
    HitEstimate e = hit_before(Point{}, ObstacleSet(face), Fence::sup_ball(Point{}, 1), o);
    CHECK(std::fabs(e.p - 1.0 / 6) <= 4 * e.se);

    CompactSetSpec seg;
    seg.d = 3;
    seg.add_box(box3({0, 0, 0}, {1, 0, 0}));
    seg.add_ball(make_point({3, 0, 0}), 0);
    CHECK_THROWS_WITH(hit_before(make_point({2, 2, 2}), ObstacleSet(seg), Fence::none(), o),
                      doctest::Contains("polar target"));
}

TEST_CASE("hit_before matches the equilibrium potential of a cube")
{
    CompactSetSpec c;
    c.d = 3;
    c.add_box(box3({0, 0, 0}, {1, 1, 1}));
    Box unit = box3({0, 0, 0}, {1, 1, 1});
    EquilibriumSolution eq = continuum_capacity({unit}, 0.0625);
    HitOptions o;
    o.n_paths = 20000;
    for (Point x : {make_point({2, 0.5, 0.5}), make_point({-1, -1, 2})}) {
        HitEstimate e = hit_before(x, ObstacleSet(c), Fence::none(), o);
        double h = harmonic_potential(eq, x);
        CHECK(std::fabs(e.p - h) <= std::max(3 * e.se, 0.02 * h + e.remainder));
    }
}

TEST_CASE("sphere_reentry lands on the sphere")
{
    Stream rng = derive_stream(2, "reentry", 0);
    Point c = make_point({1, 1, 1});
    double mx = 0;
    for (int k = 0; k < 2000; ++k) {
        Point y = sphere_reentry(make_point({5, 1, 1}), c, 0.5, rng);
        double r = std::hypot(y[0] - 1, y[1] - 1, y[2] - 1);
        CHECK(r == doctest::Approx(0.5).epsilon(1e-12));
        mx += y[0] - 1;
    }
    // harmonic measure from outside leans toward the start
    CHECK(mx / 2000 > 0);
}

TEST_CASE("certify_interface")
{
    DyadicIndicator u0 = cube_domain(3, 1, 4);
    const double eps = 0.25;
    SUBCASE("solid shell around the boundary")
    {
        CompactSetSpec s;
        s.d = 3;
        s.add_box(box3({-1.125, -1.125, -1.125}, {1.125, 1.125, 1.125}));
        PorousInterfaceSpec c = certify_interface(ObstacleSet(s), u0, eps, 0.99, 200, 1, 64);
        CHECK(c.certified);
        CHECK(c.min_estimate == 1.0);
        CHECK(c.cloud_size >= 6u * 32 * 32);
        CHECK(c.tested == 64u);
    }
    SUBCASE("empty")
    {
        CompactSetSpec s;
        s.d = 3;
        CHECK(certify_interface(ObstacleSet(s), u0, eps, 0.0, 50, 1, 16).certified);
        PorousInterfaceSpec c = certify_interface(ObstacleSet(s), u0, eps, 0.01, 50, 1, 16);
        CHECK(!c.certified);
        CHECK(c.failing.size() == 16u);
    }
    SUBCASE("perforated shells weaken as the spacing grows")
    {
        double prev = 1;
        for (double spacing : {0.125, 0.25, 0.5}) {
            ObstacleSet s(perforated_cube_shell(1, spacing, spacing / 2, 1.0 / 32));
            PorousInterfaceSpec c = certify_interface(s, u0, eps, 0.05, 400, 3, 24);
            CHECK(c.min_estimate <= prev + 3 * c.min_se);
            prev = c.min_estimate;
        }
    }
}

TEST_CASE("solidification: scaling and exclusions")
{
    CompactSetSpec A;
    A.d = 3;
    A.add_ball(Point{}, 0.1);
    std::vector<Point> starts = {Point{}, make_point({0.1, 0, 0})};
    SolidificationOptions opt;
    opt.n_paths = 2000;
    opt.cert_paths = 100;
    opt.cert_points = 8;
    SolidificationMember m{"shell", cube_domain(3, 1, 5), perforated_cube_shell(1, 0.125, 0.0625, 1.0 / 32),
                           0.125, 1};
    SolidificationMember scaled{"scaled", m.u0.scaled_pow2(1), {}, 0.25, 0};
    scaled.sigma = perforated_cube_shell(2, 0.25, 0.125, 1.0 / 16);
    CompactSetSpec A2;
    A2.d = 3;
    A2.add_ball(Point{}, 0.2);
    auto r1 = solidification_experiment(A, starts, {m}, opt);
    auto r2 = solidification_experiment(A2, {Point{}, make_point({0.2, 0, 0})}, {scaled}, opt);
    REQUIRE(r1[0].included);
    REQUIRE(r2[0].included);
    CHECK(r1[0].p_escape == r2[0].p_escape);
    CHECK(r1[0].per_point == r2[0].per_point);
    CHECK(r1[0].eta_hat == r2[0].eta_hat);
    CHECK(r1[0].p_escape < 0.5);

    // full shell: nothing escapes
    SolidificationMember full{"full", cube_domain(3, 1, 5), perforated_cube_shell(1, 0.125, 0, 1.0 / 32),
                              0.125, 1};
    CHECK(solidification_experiment(A, starts, {full}, opt)[0].p_escape == 0.0);

    // A reaches U1: not in the class
    CompactSetSpec far;
    far.d = 3;
    far.add_ball(make_point({1.2, 0, 0}), 0.01);
    auto r3 = solidification_experiment(far, {make_point({1.2, 0, 0})}, {m}, opt);
    CHECK(!r3[0].included);
}

TEST_CASE("feynman_kac")
{
    FkOptions o;
    o.n_paths = 500;
    CHECK(feynman_kac(Point{}, SoftObstacle::constant(0), Horizon::fixed(1), o).value == 1.0);
    FkEstimate e = feynman_kac(Point{}, SoftObstacle::constant(0.7), Horizon::fixed(2), o);
    CHECK(std::fabs(e.value - std::exp(-1.4)) <= std::max(3 * e.se, 1e-12));
    CHECK_THROWS(SoftObstacle::constant(-1));

    // layer around the boundary of [-1,1]^3: started inside, the sup-exit at
    // radius 2 has to cross it
    DyadicIndicator u0 = cube_domain(3, 1, 3);
    double prev = 2, prev_se = 0;
    for (double eps : {0.2, 0.1}) {
        FkEstimate f = feynman_kac(Point{}, SoftObstacle::boundary_layer(u0, eps, 1), Horizon::sup_exit(2), o);
        CHECK(f.value < 1);
        CHECK(f.value < prev + 3 * std::hypot(f.se, prev_se));
        prev = f.value;
        prev_se = f.se;
    }
}
