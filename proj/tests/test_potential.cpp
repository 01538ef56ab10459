#include <doctest.h>

#include <cmath>

#include "solidify/potential.hpp"
#include "solidify/rng.hpp"

using namespace solidify;

namespace {

Box box3(std::initializer_list<double> lo, std::initializer_list<double> hi)
{
    Box b;
    b.d = 3;
    b.lo = make_point(lo);
    b.hi = make_point(hi);
    return b;
}

std::vector<Site> lattice_box(long L, Site base)
{
    std::vector<Site> F;
    for (long x = 0; x < L; ++x)
        for (long y = 0; y < L; ++y)
            for (long z = 0; z < L; ++z) F.push_back({base[0] + x, base[1] + y, base[2] + z});
    return F;
}

} // namespace

TEST_CASE("lattice Green function")
{
    const LatticeGreen& g = LatticeGreen::instance();
    CHECK(g(0, 0, 0) == doctest::Approx(1.516386059).epsilon(1e-9));
    CHECK(g(1, 0, 0) == g(-1, 0, 0));
    CHECK(g(3, -1, 2) == g(-2, 1, 3));
    CHECK(g(0, 0, 0) > g(1, 0, 0));
    CHECK(g(1, 0, 0) == doctest::Approx(g(0, 0, 0) - 1).epsilon(1e-10)); // harmonic at 0
    for (Site x : {Site{0, 0, 0}, Site{1, 0, 0}, Site{2, 3, 1}, Site{10, 0, 5}, Site{40, 20, 1}}) {
        double avg = 0;
        for (int i = 0; i < 3; ++i)
            for (int s : {-1, 1}) {
                Site y = x;
                y[i] += s;
                avg += g(y) / 6;
            }
        CHECK(std::fabs(avg - (g(x) - (x == Site{0, 0, 0}))) < 1e-8);
    }
    CHECK(LatticeGreen::quadrature({3, 1, 2}) == doctest::Approx(g(3, 1, 2)).epsilon(1e-8));
    // far field
    double r50 = g(50, 0, 0) / (3 * green_continuum(3, 50));
    CHECK(r50 >= 0.99);
    CHECK(r50 <= 1.01);
    CHECK(LatticeGreen::quadrature({70, 0, 0}) == doctest::Approx(g(70, 0, 0)).epsilon(1e-6));
    CHECK(green_continuum(3, 2) == doctest::Approx(1 / (4 * M_PI)));
}

TEST_CASE("g~(0) against random walk visit counts")
{
    GreenMc m = srw_green_mc(200000, 8, 11);
    CHECK(std::fabs(m.value - lattice_green({0, 0, 0})) <= 4 * m.se);
}

TEST_CASE("discrete capacity")
{
    double g0 = lattice_green({0, 0, 0});
    CHECK(discrete_capacity({{0, 0, 0}}).capacity == doctest::Approx(1 / g0).epsilon(1e-10));
    CHECK(discrete_capacity({{0, 0, 0}}).capacity == doctest::Approx(0.65946).epsilon(1e-5));
    Site x{3, 1, 0};
    CHECK(discrete_capacity({{0, 0, 0}, x}).capacity ==
          doctest::Approx(2 / (g0 + lattice_green(x))).epsilon(1e-10));

    // lattice ball: only points next to the outside carry mass
    std::vector<Site> ball;
    const long L = 5;
    for (long a = -L; a <= L; ++a)
        for (long b = -L; b <= L; ++b)
            for (long c = -L; c <= L; ++c)
                if (a * a + b * b + c * c <= L * L) ball.push_back({a, b, c});
    EquilibriumSolution e = discrete_capacity(ball);
    CHECK(e.residual < 1e-6);
    for (Eigen::Index k = 0; k < e.weights.size(); ++k) CHECK(e.weights[k] >= -1e-10 * e.capacity);
    std::size_t interior = 0;
    for (std::size_t k = 0; k < e.sites.size(); ++k) {
        const Site& s = e.sites[k];
        bool inner = true;
        for (int i = 0; i < 3; ++i)
            for (int d : {-1, 1}) {
                Site y = s;
                y[i] += d;
                inner = inner && y[0] * y[0] + y[1] * y[1] + y[2] * y[2] <= L * L;
            }
        if (!inner) continue;
        ++interior;
        CHECK(std::fabs(e.weights[Eigen::Index(k)]) <= 1e-8 * e.capacity);
        CHECK(harmonic_potential_discrete(e, s) == doctest::Approx(1).epsilon(1e-8));
    }
    CHECK(interior > 0);

    // symmetric box solve against the dense one
    EquilibriumSolution dense = discrete_capacity(lattice_box(4, {2, -1, 0}));
    EquilibriumSolution sym = discrete_box_capacity(4, {2, -1, 0});
    CHECK(sym.capacity == doctest::Approx(dense.capacity).epsilon(1e-10));
    CHECK(harmonic_potential_discrete(sym, {3, 0, 1}) == doctest::Approx(1).epsilon(1e-8));

    // block Jacobi against the dense union
    std::vector<Site> bases = {{0, 0, 0}, {9, 0, 0}, {0, 12, 9}};
    std::vector<Site> F;
    for (const Site& b : bases)
        for (const Site& s : lattice_box(3, b)) F.push_back(s);
    BoxSetSolution set = discrete_box_set_capacity(3, bases);
    CHECK(set.eq.capacity == doctest::Approx(discrete_capacity(F).capacity).epsilon(1e-9));
    double m = 0;
    for (double v : set.box_mass) m += v;
    CHECK(m == doctest::Approx(set.eq.capacity).epsilon(1e-12));
    CHECK_THROWS(discrete_box_set_capacity(3, {{0, 0, 0}, {2, 0, 0}}));
}

TEST_CASE("continuum capacity")
{
    EquilibriumSolution ball = ball_capacity(make_point({1, 2, 3}), 1.5);
    CHECK(std::fabs(ball.capacity / (2 * M_PI * 1.5) - 1) < 0.01);
    CHECK(harmonic_potential(ball, make_point({1, 2, 6})) == doctest::Approx(0.5).epsilon(0.01));
    CHECK(harmonic_potential(ball, make_point({1, 2 + 4.5, 3})) == doctest::Approx(1.0 / 3).epsilon(0.01));
    CHECK(harmonic_potential(ball, ball.surface.centroids[7]) == doctest::Approx(1).epsilon(0.02));

    CubeCapacity cube = cube_capacity(1, 16, 3);
    auto& lv = cube.level_capacity;
    REQUIRE(lv.size() == 3u);
    CHECK(std::fabs(lv[2] / lv[1] - 1) < 0.005);
    CHECK(cube.capacity / (2 * M_PI) == doctest::Approx(0.66068).epsilon(1e-4));
    CHECK(cube.error_estimate < 1e-3 * cube.capacity);

    // box meshes agree with the graded symmetric solve
    EquilibriumSolution unit = continuum_capacity({box3({0, 0, 0}, {1, 1, 1})}, 0.125);
    CHECK(unit.capacity == doctest::Approx(cube.capacity).epsilon(0.01));
    CHECK(cube_capacity(4, 8, 2).capacity == doctest::Approx(4 * cube_capacity(1, 8, 2).capacity).epsilon(1e-12));

    // monotone and subadditive
    BemOptions o;
    o.levels = 1;
    Box a = box3({0, 0, 0}, {1, 1, 1}), b = box3({0, 0, 0}, {1, 1, 2}), c = box3({3, 0, 0}, {4, 1, 1});
    double ca = continuum_capacity({a}, 0.25, o).capacity;
    double cb = continuum_capacity({b}, 0.25, o).capacity;
    double cac = continuum_capacity({a, c}, 0.25, o).capacity;
    CHECK(ca < cb);
    CHECK(cac <= 2 * ca);
    CHECK(cac > ca);

    // hollow box: only the outer surface is meshed
    std::vector<Box> frame;
    for (const Box& q : box_difference(box3({0, 0, 0}, {2, 2, 2}), box3({0.5, 0.5, 0.5}, {1.5, 1.5, 1.5})))
        frame.push_back(q);
    CHECK(box_union_surface(frame, 0.5).size() == box_union_surface({box3({0, 0, 0}, {2, 2, 2})}, 0.5).size());
}

TEST_CASE("cube sets")
{
    CubeSetCapacity one = cube_set_capacity(1, {Point{}});
    // extrapolated with the order measured on three single-cube levels
    CHECK(one.capacity == doctest::Approx(cube_capacity(1, 8, 3).capacity).epsilon(1e-9));
    CubeSetCapacity two = cube_set_capacity(1, {Point{}, make_point({6, 0, 0})});
    CHECK(two.capacity < 2 * one.capacity);
    CHECK(two.capacity > 1.8 * one.capacity);
    CubeSetCapacity far = cube_set_capacity(1, {Point{}, make_point({600, 0, 0})});
    CHECK(far.capacity == doctest::Approx(2 * one.capacity).epsilon(2e-3));
}

TEST_CASE("capacity lower bound from hitting")
{
    BemOptions o;
    o.levels = 1;
    EquilibriumSolution A = continuum_capacity({box3({0, 0, 0}, {1, 1, 1})}, 0.25, o);
    CapacityBound same = capacity_hitting_lower_bound(A, A);
    CHECK(same.ratio == doctest::Approx(1));
    CHECK(same.bound == doctest::Approx(1).epsilon(0.02));
    CHECK(same.holds());

    EquilibriumSolution shell = continuum_capacity({box3({-1, -1, -1}, {2, 2, 2})}, 0.25, o);
    CapacityBound enclosing = capacity_hitting_lower_bound(A, shell);
    CHECK(enclosing.bound > 0.97);
    CHECK(enclosing.holds());

    EquilibriumSolution far = continuum_capacity({box3({10, 0, 0}, {11, 1, 1})}, 0.25, o);
    CapacityBound apart = capacity_hitting_lower_bound(A, far);
    CHECK(apart.bound < 0.1);
    CHECK(apart.holds());
}

TEST_CASE("discrete versus continuum")
{
    double a4 = a_L(4), a8 = a_L(8), a16 = a_L(16);
    CHECK(std::fabs(a8 - 1) < std::fabs(a4 - 1));
    CHECK(std::fabs(a16 - 1) < std::fabs(a8 - 1));

    double prev = INFINITY;
    for (long K : {10, 16, 32}) {
        EtaProbe e = eta_probe(K, 8, 500, 3);
        CHECK(e.eta >= 1);
        CHECK(e.eta <= prev);
        prev = e.eta;
    }
    CHECK(eta_probe(100, 8, 500, 3).eta - 1 < eta_probe(10, 8, 500, 3).eta - 1);

    // far apart boxes: the ratio is a_L
    RatioRow far = ratio_row(40, 4, {{0, 0, 0}, {160, 0, 0}}, 0, 1);
    CHECK(far.ratio == doctest::Approx(far.a_L).epsilon(0.01));
    CHECK(far.in_sandwich);
    CHECK_THROWS(ratio_row(10, 4, {{0, 0, 0}, {20, 0, 0}}, 0, 1));

    auto cfg = random_box_configs(4, 8, 3, 2, 9);
    REQUIRE(cfg.size() == 2u);
    for (auto& c : cfg)
        for (std::size_t i = 0; i < c.size(); ++i)
            for (std::size_t j = i + 1; j < c.size(); ++j) {
                long sep = 0;
                for (int k = 0; k < 3; ++k) sep = std::max(sep, std::labs(c[i][k] - c[j][k]));
                CHECK(sep >= 32);
            }
}
