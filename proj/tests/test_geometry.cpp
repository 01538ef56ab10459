#include <doctest.h>

#include <cmath>

#include "solidify/geometry.hpp"
#include "solidify/rng.hpp"

using namespace solidify;
using Side = DyadicIndicator::Side;

namespace {

Box unit_cube()
{
    Box b{3, {}, {}};
    for (int i = 0; i < 3; ++i) b.hi[i] = 1.0;
    return b;
}

// brute force: enumerate every cell of side 2^-ell_max in the unit cube
double brute_u1(const DyadicIndicator& u, const Box& q)
{
    int m = 1 << u.ell_max();
    double h = 1.0 / m, inside = 0;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
            for (int k = 0; k < m; ++k) {
                Box c{3, make_point({i * h, j * h, k * h}), make_point({(i + 1) * h, (j + 1) * h, (k + 1) * h})};
                Point mid = make_point({(i + 0.5) * h, (j + 0.5) * h, (k + 0.5) * h});
                if (u.in_u0(mid)) inside += overlap_volume(c, q);
            }
    return q.volume() - inside;
}

} // namespace

TEST_CASE("clip volume of the unit cube")
{
    Box b = unit_cube();
    auto u = DyadicIndicator::from_csg(3, 4, b, {b});
    CHECK(u.clip_volume(make_point({0.5, 0.5, 0.5}), 0.25, Side::U1) == 0.0);
    CHECK(u.clip_volume(make_point({0, 0.5, 0.5}), 0.25, Side::U1) == doctest::Approx(0.0625));
    CHECK(u.u0_volume() == 1.0);
}

TEST_CASE("clip volume matches cell enumeration on random domains")
{
    Stream rng = derive_stream(11, "geometry-test", 0);
    for (int rep = 0; rep < 6; ++rep) {
        auto u = random_domain(3, 5, rng);
        for (int t = 0; t < 30; ++t) {
            Point x = make_point({rng.uniform() * 1.4 - 0.2, rng.uniform() * 1.4 - 0.2, rng.uniform() * 1.4 - 0.2});
            double r = 0.02 + 0.5 * rng.uniform();
            Box q = Box::cube(3, x, r);
            double a = u.clip_volume(q, Side::U1), b = brute_u1(u, q);
            CHECK(std::abs(a - b) <= 1e-12 * q.volume());
            double s = a + u.clip_volume(q, Side::U0);
            CHECK(std::abs(s - q.volume()) <= 1e-12 * q.volume());
        }
    }
}

TEST_CASE("json round trip keeps the tree")
{
    Stream rng = derive_stream(3, "geometry-json", 0);
    auto u = random_domain(3, 4, rng);
    auto v = domain_from_json(domain_to_json(u));
    CHECK(v.codes() == u.codes());
    CHECK(v.u0_volume() == u.u0_volume());
    CHECK_THROWS_AS(domain_from_json(nlohmann::json{{"d", 3}}), SchemaError);
}

TEST_CASE("dilate")
{
    CompactSetSpec a{3, {}};
    a.add_ball(Point{}, 0.0);
    auto b = dilate(a, 1.0);
    CHECK(b.contains(make_point({1, 1, 1})));
    CHECK(b.contains(make_point({-1, 1, -1})));
    CHECK_FALSE(b.contains(make_point({1.01, 0, 0})));

    CompactSetSpec two{3, {}};
    two.add_box(Box{3, make_point({0, 0, 0}), make_point({1, 1, 1})});
    two.add_box(Box{3, make_point({4, 0, 0}), make_point({5, 1, 1})});
    CHECK_FALSE(two.contains(make_point({2.5, 0.5, 0.5})));
    CHECK(dilate(two, 2.0).contains(make_point({2.5, 0.5, 0.5})));
    auto same = dilate(two, 0.0);
    CHECK(same.parts[0].lo == two.parts[0].lo);
}

TEST_CASE("flood fill of the complement")
{
    std::array<int, kMaxDim> n{9, 9, 9};
    Raster r(3, n, Point{}, 1.0);
    for (std::size_t i = 0; i < r.size(); ++i) {
        auto c = r.coords(i);
        int m = std::max({std::abs(c[0] - 4), std::abs(c[1] - 4), std::abs(c[2] - 4)});
        r.cells[i] = (m == 3);
    }
    std::size_t centre = r.index({4, 4, 4});
    auto out = unbounded_complement_component(r);
    CHECK(out.cells[centre] == 0);
    CHECK(out.cells[0] == 1);

    r.cells[r.index({1, 4, 4})] = 0;
    out = unbounded_complement_component(r);
    CHECK(out.cells[centre] == 1);

    Raster empty(3, n, Point{}, 1.0);
    out = unbounded_complement_component(empty);
    CHECK(std::count(out.cells.begin(), out.cells.end(), 1) == static_cast<long>(out.size()));

    Raster full(3, n, Point{}, 1.0);
    std::fill(full.cells.begin(), full.cells.end(), 1);
    CHECK_THROWS(unbounded_complement_component(full));
}

TEST_CASE("flood fill is monotone and idempotent")
{
    Stream rng = derive_stream(5, "flood", 0);
    std::array<int, kMaxDim> n{8, 8, 8};
    for (int rep = 0; rep < 20; ++rep) {
        Raster a(3, n, Point{}, 1.0);
        for (auto& c : a.cells) c = rng.uniform() < 0.3;
        a.cells[0] = 0;
        Raster b = a;
        for (auto& c : b.cells)
            if (rng.uniform() < 0.1) c = 1;
        b.cells[0] = 0;
        auto ua = unbounded_complement_component(a), ub = unbounded_complement_component(b);
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(ub.cells[i] <= ua.cells[i]);
        Raster blocked2 = ua;
        for (auto& c : blocked2.cells) c = !c;
        CHECK(unbounded_complement_component(blocked2).cells == ua.cells);
    }
}

TEST_CASE("fixtures")
{
    auto cactus = cactus_pile(3, 2, 5, 0);
    CHECK(cactus.sup_distance_to_u1(Point{}, 100.0, 1e-9) == doctest::Approx(4.0));

    auto sh = shell(3, 1.0, 0.25, 3);
    // the origin sits in a bounded complement component: every ray leaves through U0
    for (int axis = 0; axis < 3; ++axis) {
        Point p{};
        p[axis] = 0.875;
        CHECK(sh.in_u0(p));
    }
    CHECK_FALSE(sh.in_u0(Point{}));

    auto ps = perforated_shell(3, 1.0, 0.25, 0.125, 5);
    CHECK(ps.u0_volume() < sh.u0_volume());
    CHECK_FALSE(ps.in_u0(make_point({0.875, -0.875, -0.875})));

    CHECK_THROWS(DyadicIndicator::from_csg(3, 2, unit_cube(), {Box{3, Point{}, make_point({0.3, 1, 1})}}));
}

TEST_CASE("boundary faces of a cube")
{
    Box b{3, make_point({-1, -1, -1}), make_point({1, 1, 1})};
    auto u = DyadicIndicator::from_csg(3, 2, b, {b});
    double area = 0;
    for (const auto& f : u.boundary_faces()) {
        double a = 1;
        for (int i = 0; i < 3; ++i)
            if (f.hi[i] > f.lo[i]) a *= f.hi[i] - f.lo[i];
        area += a;
    }
    CHECK(area == doctest::Approx(24.0));

    // an L-shaped union: the shared face is interior
    Box big{3, make_point({0, 0, 0}), make_point({2, 1, 1})};
    Box a1{3, make_point({0, 0, 0}), make_point({1, 1, 1})};
    Box a2{3, make_point({1, 0, 0}), make_point({2, 1, 1})};
    auto two = DyadicIndicator::from_csg(3, 1, big, {a1, a2});
    area = 0;
    for (const auto& f : two.boundary_faces()) {
        double a = 1;
        for (int i = 0; i < 3; ++i)
            if (f.hi[i] > f.lo[i]) a *= f.hi[i] - f.lo[i];
        area += a;
    }
    CHECK(area == doctest::Approx(10.0));
}
