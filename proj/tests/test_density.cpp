#include <doctest.h>

#include <cmath>

#include "solidify/density.hpp"
#include "solidify/rng.hpp"

using namespace solidify;

namespace {

Point random_point(Stream& rng, double lo, double hi)
{
    Point p{};
    for (int i = 0; i < 3; ++i) p[i] = lo + (hi - lo) * rng.uniform();
    return p;
}

} // namespace

TEST_CASE("sigma_hat on simple domains")
{
    auto cube = cube_domain(3, 1.0, 2);
    CHECK(sigma_hat(cube, Point{}, 0) == 0.0);
    auto sl = slab(3, 4, 8);
    CHECK(sigma_hat(sl, Point{}, 0) == 0.5);
    CHECK(sigma_hat(sl, Point{}, 5) == 0.5);
    CHECK(sigma_tilde(cube, Point{}, 4) == sigma_hat(cube, Point{}, 2));
}

TEST_CASE("sigma_hat equals a brute-force cell sum")
{
    Stream rng = derive_stream(21, "density-test", 0);
    for (int rep = 0; rep < 5; ++rep) {
        auto u = random_domain(3, 5, rng);
        for (int t = 0; t < 20; ++t) {
            Point x = random_point(rng, 0, 1);
            int ell = 1 + static_cast<int>(rng.uniform() * 4);
            double r = std::ldexp(1.0, -ell), h = 1.0 / 32, u1 = 0;
            Box q = Box::cube(3, x, r);
            u1 = q.volume();
            for (int i = 0; i < 32; ++i)
                for (int j = 0; j < 32; ++j)
                    for (int k = 0; k < 32; ++k) {
                        Point mid = make_point({(i + .5) * h, (j + .5) * h, (k + .5) * h});
                        if (u.in_u0(mid))
                            u1 -= overlap_volume(q, Box::cube(3, mid, h / 2));
                    }
            CHECK(sigma_hat(u, x, ell) == doctest::Approx(u1 / q.volume()).epsilon(1e-12));
        }
    }
}

TEST_CASE("Lipschitz and averaging bounds")
{
    Stream rng = derive_stream(22, "density-lip", 0);
    for (int rep = 0; rep < 200; ++rep) {
        auto u = random_domain(3, 5, rng);
        Point x = random_point(rng, -0.2, 1.2), y = random_point(rng, -0.05, 0.05);
        Point xy{};
        for (int i = 0; i < 3; ++i) xy[i] = x[i] + y[i];
        int ell = static_cast<int>(rng.uniform() * 6);
        double l1 = l1_norm(3, y);
        CHECK(std::abs(sigma_hat(u, xy, ell) - sigma_hat(u, x, ell)) <= std::ldexp(l1, ell));
        CHECK(std::abs(sigma_tilde(u, xy, ell) - sigma_tilde(u, x, ell)) <= std::ldexp(l1, ell - 2));
        int lp = ell + 1 + static_cast<int>(rng.uniform() * 4);
        CHECK(std::abs(sigma_hat(u, x, ell) - box_average(u, x, ell, lp)) <=
              averaging_constant(3) * std::ldexp(1.0, ell - lp));
    }
}

TEST_CASE("box average: slab symmetry and Monte Carlo oracle")
{
    auto sl = slab(3, 4, 10);
    CHECK(box_average(sl, Point{}, 1, 4) == doctest::Approx(0.5).epsilon(1e-14));

    Stream rng = derive_stream(23, "density-avg", 0);
    auto u = random_domain(3, 5, rng);
    Point x = make_point({0.4, 0.55, 0.45});
    const int n = 100000;
    double s = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
        Point y = x;
        for (int k = 0; k < 3; ++k) y[k] += 0.25 * (2 * rng.uniform() - 1);
        double v = sigma_hat(u, y, 4);
        s += v;
        s2 += v * v;
    }
    double mean = s / n, se = std::sqrt((s2 / n - mean * mean) / n);
    CHECK(std::abs(box_average(u, x, 2, 4) - mean) <= 3 * se + 1e-12);
}

TEST_CASE("two-sided density alternative")
{
    // sigma constant: every cell is middle
    auto cube = cube_domain(3, 4.0, 0);
    auto rep = density_alternative(cube, Point{}, 1, 3, 0.0);
    CHECK(rep.beta == 0.0);
    CHECK(rep.branch_ii);
    CHECK(rep.middle == doctest::Approx(1.0));

    // slab, values spread around 1/2
    auto sl = slab(3, 4, 10);
    rep = density_alternative(sl, Point{}, 0, 3, 0.1);
    CHECK(rep.holds());

    Stream rng = derive_stream(24, "density-alt", 0);
    for (int t = 0; t < 20; ++t) {
        auto u = random_domain(3, 4, rng);
        Point x = random_point(rng, 0.1, 0.9);
        int ell = 1 + static_cast<int>(rng.uniform() * 2);
        int lp = ell + 1 + static_cast<int>(rng.uniform() * 2);
        double beta = box_average(u, x, ell, lp);
        double delta = rng.uniform() * std::min(beta, 1 - beta);
        auto r = density_alternative(u, x, ell, lp, delta);
        CHECK(r.holds());
        CHECK(r.upper_tail + r.lower_tail + r.middle + r.undecided == doctest::Approx(1.0));
    }
    CHECK_THROWS(density_alternative(cube, Point{}, 1, 3, 0.5));
}

TEST_CASE("class membership")
{
    CompactSetSpec origin{3, {}};
    origin.add_ball(Point{}, 0.0);
    auto cube = cube_domain(3, 1.0, 4);
    CHECK(class_membership(origin, 0, cube).member());

    Box far{3, make_point({2, 2, 2}), make_point({3, 3, 3})};
    auto away = DyadicIndicator::from_csg(3, 4, far, {far});
    CHECK(class_membership(origin, 0, away).result == Membership::NotMember);

    auto cactus = cactus_pile(3, 2, 5, 3);
    CHECK(class_membership(origin, 3, cactus).member());
}
