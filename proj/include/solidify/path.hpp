#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "solidify/geometry.hpp"

namespace solidify {

// Discrete path: positions at increasing times, linear in between.
struct PathSample {
    int d = 3;
    double dt = 0;           // 0 for hand-built paths
    std::uint64_t seed = 0;  // stream key the increments came from
    std::vector<double> times;
    std::vector<Point> positions;

    std::size_t size() const { return positions.size(); }
    Point at(double t) const;
    // Brownian-bridge subdivision of step i into 2^k pieces, reproducible
    // from (seed, i).
    std::vector<Point> refine_step(std::size_t i, int k) const;
};

// n_steps Gaussian increments of variance dt per coordinate.
PathSample sample_path(int d, const Point& x0, double dt, std::size_t n_steps, std::uint64_t seed);

// Hand-built path through the given points, at times 0,1,2,...
PathSample polyline(int d, const std::vector<Point>& pts, std::vector<double> times = {});

inline constexpr double kNever = std::numeric_limits<double>::infinity();

// First time t >= from at which f(X_t) lies in [lo, hi] (within tol), for
// f Lipschitz with constant lip in the l1 norm.  Segments are subdivided
// until the Lipschitz bound excludes an entry or the entry is located.
double first_entry(const PathSample& p, double from, const std::function<double(const Point&)>& f,
                   double lip, double lo, double hi, double tol);

// First time t >= from with |X_t - X_from|_inf >= r.
double first_exit(const PathSample& p, double from, double r, double tol);

} // namespace solidify
