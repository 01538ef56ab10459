#include "solidify/path.hpp"

#include <algorithm>
#include <cmath>

#include "solidify/rng.hpp"

namespace solidify {

Point PathSample::at(double t) const
{
    if (positions.empty()) throw std::logic_error("empty path");
    if (t <= times.front()) return positions.front();
    if (t >= times.back()) return positions.back();
    auto it = std::upper_bound(times.begin(), times.end(), t);
    std::size_t k = static_cast<std::size_t>(it - times.begin()) - 1;
    double w = (t - times[k]) / (times[k + 1] - times[k]);
    Point p{};
    for (int i = 0; i < d; ++i) p[i] = positions[k][i] + w * (positions[k + 1][i] - positions[k][i]);
    return p;
}

std::vector<Point> PathSample::refine_step(std::size_t i, int k) const
{
    if (i + 1 >= positions.size()) throw std::out_of_range("refine_step: no such step");
    std::size_t n = std::size_t(1) << k;
    std::vector<Point> pts(n + 1);
    pts[0] = positions[i];
    pts[n] = positions[i + 1];
    Stream rng = Stream(mix64(seed ^ 0x5851f42d4c957f2dull)).split(i);
    double span = times[i + 1] - times[i];
    // midpoint displacement: the bridge midpoint has variance span/4
    for (std::size_t stride = n; stride > 1; stride /= 2) {
        double sd = std::sqrt(span * static_cast<double>(stride) / static_cast<double>(n) / 4.0);
        for (std::size_t a = 0; a < n; a += stride) {
            std::size_t m = a + stride / 2;
            for (int c = 0; c < d; ++c)
                pts[m][c] = 0.5 * (pts[a][c] + pts[a + stride][c]) + sd * rng.normal();
        }
    }
    return pts;
}

PathSample sample_path(int d, const Point& x0, double dt, std::size_t n_steps, std::uint64_t seed)
{
    if (!(dt > 0)) throw std::invalid_argument("sample_path: dt must be positive");
    PathSample p;
    p.d = d;
    p.dt = dt;
    p.seed = seed;
    p.times.resize(n_steps + 1);
    p.positions.resize(n_steps + 1);
    p.positions[0] = x0;
    p.times[0] = 0;
    Stream rng(seed);
    double sd = std::sqrt(dt);
    for (std::size_t k = 1; k <= n_steps; ++k) {
        p.times[k] = static_cast<double>(k) * dt;
        Point x = p.positions[k - 1];
        for (int i = 0; i < d; ++i) x[i] += sd * rng.normal();
        p.positions[k] = x;
    }
    return p;
}

PathSample polyline(int d, const std::vector<Point>& pts, std::vector<double> times)
{
    PathSample p;
    p.d = d;
    p.positions = pts;
    if (times.empty())
        for (std::size_t k = 0; k < pts.size(); ++k) times.push_back(static_cast<double>(k));
    if (times.size() != pts.size()) throw std::invalid_argument("polyline: size mismatch");
    p.times = std::move(times);
    return p;
}

namespace {

double dist_to(double v, double lo, double hi)
{
    if (v < lo) return lo - v;
    if (v > hi) return v - hi;
    return 0.0;
}

} // namespace

double first_entry(const PathSample& p, double from, const std::function<double(const Point&)>& f,
                   double lip, double lo, double hi, double tol)
{
    const int d = p.d;
    std::function<double(double, const Point&, double, double, const Point&, double, int)> rec =
        [&](double ta, const Point& a, double da, double tb, const Point& b, double db,
            int depth) -> double {
        if (da <= tol) return ta;
        Point diff{};
        for (int i = 0; i < d; ++i) diff[i] = b[i] - a[i];
        double len = l1_norm(d, diff);
        if (da + db > lip * len * (1 + 1e-12) || depth > 80) return kNever;
        double tm = 0.5 * (ta + tb);
        Point m{};
        for (int i = 0; i < d; ++i) m[i] = 0.5 * (a[i] + b[i]);
        double dm = dist_to(f(m), lo, hi);
        double left = rec(ta, a, da, tm, m, dm, depth + 1);
        if (left < kNever) return left;
        return rec(tm, m, dm, tb, b, db, depth + 1);
    };
    if (p.positions.empty()) return kNever;
    auto it = std::upper_bound(p.times.begin(), p.times.end(), from);
    std::size_t k = it == p.times.begin() ? 0 : static_cast<std::size_t>(it - p.times.begin()) - 1;
    double ta = std::max(from, p.times.front());
    Point a = p.at(ta);
    double da = dist_to(f(a), lo, hi);
    if (da <= tol) return ta;
    for (; k + 1 < p.size(); ++k) {
        double tb = p.times[k + 1];
        if (tb <= ta) continue;
        const Point& b = p.positions[k + 1];
        double db = dist_to(f(b), lo, hi);
        double t = rec(ta, a, da, tb, b, db, 0);
        if (t < kNever) return t;
        ta = tb;
        a = b;
        da = db;
    }
    return kNever;
}

double first_exit(const PathSample& p, double from, double r, double tol)
{
    Point c = p.at(from);
    int d = p.d;
    auto f = [&](const Point& y) {
        double m = 0;
        for (int i = 0; i < d; ++i) m = std::max(m, std::abs(y[i] - c[i]));
        return m;
    };
    return first_entry(p, from, f, 1.0, r, INFINITY, tol);
}

} // namespace solidify
