#include "solidify/brownian.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "solidify/density.hpp"
#include "solidify/parallel.hpp"
#include "solidify/rng.hpp"

namespace solidify {

// ---------------------------------------------------------------- stop_tau

double stop_tau(const PathSample& path, double r)
{
    if (!(r > 0)) throw std::invalid_argument("stop_tau: r > 0");
    if (path.dt == 0) return first_exit(path, 0.0, r, r * 1e-3);
    const int d = path.d;
    const Point& x0 = path.positions.front();
    auto gap = [&](const Point& y) {
        double m = 0;
        for (int i = 0; i < d; ++i) m = std::max(m, std::fabs(y[i] - x0[i]));
        return r - m;
    };
    const double thr = 4 * std::sqrt(d * path.dt);
    // bridge points down to spacing ~ r 1e-3
    int k = 0;
    while (k < 12 && std::sqrt(d * path.dt / std::ldexp(1.0, k)) > r * 1e-3) ++k;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        double fa = gap(path.positions[i]), fb = gap(path.positions[i + 1]);
        if (fb > 0 && std::min(fa, fb) >= thr) continue;
        std::vector<Point> pts = path.refine_step(i, k);
        double span = path.times[i + 1] - path.times[i];
        double h = span / double(pts.size() - 1);
        for (std::size_t j = 0; j + 1 < pts.size(); ++j) {
            double ga = gap(pts[j]), gb = gap(pts[j + 1]);
            if (gb > 0) continue;
            // linear crossing inside the refined step, by bisection
            double lo = 0, hi = 1;
            for (int it = 0; it < 60; ++it) {
                double mid = 0.5 * (lo + hi);
                Point m{};
                for (int c = 0; c < d; ++c) m[c] = pts[j][c] + mid * (pts[j + 1][c] - pts[j][c]);
                (gap(m) > 0 ? lo : hi) = mid;
            }
            (void)ga;
            return path.times[i] + (double(j) + hi) * h;
        }
    }
    return kNever;
}

// ------------------------------------------------------------- ObstacleSet

namespace {

double box_distance(const Primitive& p, const Point& x)
{
    double s = 0;
    for (int i = 0; i < 3; ++i) {
        double e = std::max({p.lo[i] - x[i], 0.0, x[i] - p.hi[i]});
        s += e * e;
    }
    return std::sqrt(s) - p.rho;
}

} // namespace

ObstacleSet::ObstacleSet(const CompactSetSpec& s, double bucket) : spec_(s)
{
    if (s.d != 3) throw std::invalid_argument("ObstacleSet: d = 3 only");
    if (s.parts.empty()) return;
    bounds_.d = 3;
    double thin = INFINITY;
    for (int i = 0; i < 3; ++i) {
        bounds_.lo[i] = INFINITY;
        bounds_.hi[i] = -INFINITY;
    }
    for (const Primitive& p : s.parts) {
        for (int i = 0; i < 3; ++i) {
            bounds_.lo[i] = std::min(bounds_.lo[i], p.lo[i] - p.rho);
            bounds_.hi[i] = std::max(bounds_.hi[i], p.hi[i] + p.rho);
            double side = p.hi[i] - p.lo[i] + 2 * p.rho;
            if (side > 0) thin = std::min(thin, side);
        }
    }
    double r2 = 0;
    for (int i = 0; i < 3; ++i) {
        center_[i] = 0.5 * (bounds_.lo[i] + bounds_.hi[i]);
        r2 += 0.25 * (bounds_.hi[i] - bounds_.lo[i]) * (bounds_.hi[i] - bounds_.lo[i]);
    }
    radius_ = std::sqrt(r2);
    if (s.parts.size() <= 16) return; // brute force
    if (bucket <= 0) bucket = std::ldexp(1.0, int(std::ceil(std::log2(4 * (std::isfinite(thin) ? thin : radius_)))));
    auto count = [&](double b) {
        double c = 1;
        for (int i = 0; i < 3; ++i) c *= std::ceil((bounds_.hi[i] - bounds_.lo[i]) / b) + 2;
        return c;
    };
    while (count(bucket) > double(1 << 22)) bucket *= 2;
    bucket_ = bucket;
    for (int i = 0; i < 3; ++i) n_[i] = int(std::ceil((bounds_.hi[i] - bounds_.lo[i]) / bucket)) + 2;
    std::size_t total = std::size_t(n_[0]) * n_[1] * n_[2];
    std::vector<std::uint32_t> counts(total + 1, 0);
    auto range = [&](const Primitive& p, int i, int* a, int* b) {
        double o = bounds_.lo[i] - bucket;
        *a = std::max(0, int(std::floor((p.lo[i] - p.rho - bucket - o) / bucket)));
        *b = std::min(n_[i] - 1, int(std::floor((p.hi[i] + p.rho + bucket - o) / bucket)));
    };
    auto visit = [&](const Primitive& p, const std::function<void(std::size_t)>& f) {
        int a[3], b[3];
        for (int i = 0; i < 3; ++i) range(p, i, &a[i], &b[i]);
        for (int x = a[0]; x <= b[0]; ++x)
            for (int y = a[1]; y <= b[1]; ++y)
                for (int z = a[2]; z <= b[2]; ++z) f((std::size_t(x) * n_[1] + y) * n_[2] + z);
    };
    for (const Primitive& p : s.parts) visit(p, [&](std::size_t c) { ++counts[c + 1]; });
    for (std::size_t c = 0; c < total; ++c) counts[c + 1] += counts[c];
    start_ = counts;
    items_.resize(counts[total]);
    std::vector<std::uint32_t> fill(counts.begin(), counts.end() - 1);
    for (std::uint32_t k = 0; k < s.parts.size(); ++k)
        visit(s.parts[k], [&](std::size_t c) { items_[fill[c]++] = k; });
}

double ObstacleSet::exact(std::size_t k, const Point& x) const { return box_distance(spec_.parts[k], x); }

double ObstacleSet::distance(const Point& x) const
{
    if (spec_.parts.empty()) return INFINITY;
    if (bucket_ == 0) {
        double m = INFINITY;
        for (std::size_t k = 0; k < spec_.parts.size(); ++k) m = std::min(m, exact(k, x));
        return m;
    }
    int idx[3];
    bool outside = false;
    for (int i = 0; i < 3; ++i) {
        idx[i] = int(std::floor((x[i] - (bounds_.lo[i] - bucket_)) / bucket_));
        outside = outside || idx[i] < 0 || idx[i] >= n_[i];
    }
    if (outside) {
        double s = 0;
        for (int i = 0; i < 3; ++i) {
            double e = std::max({bounds_.lo[i] - x[i], 0.0, x[i] - bounds_.hi[i]});
            s += e * e;
        }
        return std::sqrt(s);
    }
    std::size_t c = (std::size_t(idx[0]) * n_[1] + idx[1]) * n_[2] + idx[2];
    double m = bucket_;
    for (std::uint32_t j = start_[c]; j < start_[c + 1]; ++j) m = std::min(m, exact(items_[j], x));
    return m;
}

bool ObstacleSet::polar() const
{
    if (spec_.parts.empty()) return false;
    for (const Primitive& p : spec_.parts) {
        if (p.rho > 0) return false;
        int dims = 0;
        for (int i = 0; i < 3; ++i) dims += p.hi[i] > p.lo[i];
        if (dims >= 2) return false;
    }
    return true;
}

double Fence::inside_distance(const Point& x) const
{
    switch (kind) {
    case Kind::None:
        return INFINITY;
    case Kind::SupBall: {
        double m = 0;
        for (int i = 0; i < 3; ++i) m = std::max(m, std::fabs(x[i] - center[i]));
        return radius - m;
    }
    case Kind::EuclidBall: {
        double s = 0;
        for (int i = 0; i < 3; ++i) s += (x[i] - center[i]) * (x[i] - center[i]);
        return radius - std::sqrt(s);
    }
    }
    return INFINITY;
}

// ------------------------------------------------------------------ walks

namespace {

Point unit_direction(Stream& rng)
{
    Point u{};
    double n2 = 0;
    do {
        n2 = 0;
        for (int i = 0; i < 3; ++i) {
            u[i] = rng.normal();
            n2 += u[i] * u[i];
        }
    } while (n2 == 0);
    double n = std::sqrt(n2);
    for (int i = 0; i < 3; ++i) u[i] /= n;
    return u;
}

double dist3(const Point& a, const Point& b)
{
    double s = 0;
    for (int i = 0; i < 3; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

enum class Reentry { Returned, Escaped, Cut };

// far from the target: return to its enclosing ball or escape for good
Reentry far_field(Point& x, const ObstacleSet& target, Stream& rng, int max_reentries, int* count)
{
    double r = dist3(x, target.center());
    if (rng.uniform() >= target.radius() / r) return Reentry::Escaped;
    if (++*count > max_reentries) return Reentry::Cut;
    x = sphere_reentry(x, target.center(), target.radius(), rng);
    return Reentry::Returned;
}

} // namespace

Point sphere_reentry(const Point& x, const Point& c, double a, Stream& rng)
{
    double r = dist3(x, c);
    double q = a / r;
    double u = rng.uniform();
    double w = 2 * q * u / (1 - q * q) + 1 / (1 + q);
    double mu = std::clamp((1 + q * q - 1 / (w * w)) / (2 * q), -1.0, 1.0);
    double phi = 2 * M_PI * rng.uniform();
    double e[3], e1[3], e2[3];
    for (int i = 0; i < 3; ++i) e[i] = (x[i] - c[i]) / r;
    // any unit vector orthogonal to e
    int k = std::fabs(e[0]) < 0.9 ? 0 : 1;
    double t[3] = {0, 0, 0};
    t[k] = 1;
    double dot = t[0] * e[0] + t[1] * e[1] + t[2] * e[2];
    double n = 0;
    for (int i = 0; i < 3; ++i) {
        e1[i] = t[i] - dot * e[i];
        n += e1[i] * e1[i];
    }
    n = std::sqrt(n);
    for (int i = 0; i < 3; ++i) e1[i] /= n;
    e2[0] = e[1] * e1[2] - e[2] * e1[1];
    e2[1] = e[2] * e1[0] - e[0] * e1[2];
    e2[2] = e[0] * e1[1] - e[1] * e1[0];
    double s = std::sqrt(std::max(0.0, 1 - mu * mu));
    Point y{};
    for (int i = 0; i < 3; ++i)
        y[i] = c[i] + a * (mu * e[i] + s * (std::cos(phi) * e1[i] + std::sin(phi) * e2[i]));
    return y;
}

bool wos_walk(Point x, const ObstacleSet& target, const Fence& fence, Stream& rng, double abs_eps,
              int max_reentries, long* steps, bool* cut)
{
    *cut = false;
    int reentries = 0;
    const bool far_ok = fence.kind == Fence::Kind::None && !target.empty();
    for (long n = 0;; ++n) {
        *steps = n;
        if (n > 100'000'000) {
            *cut = true;
            return false;
        }
        double dt = target.distance(x);
        if (dt <= abs_eps) return true;
        double df = fence.inside_distance(x);
        if (df <= abs_eps) return false;
        if (far_ok && dist3(x, target.center()) >= 2 * target.radius()) {
            Reentry r = far_field(x, target, rng, max_reentries, &reentries);
            if (r == Reentry::Escaped) return false;
            if (r == Reentry::Cut) {
                *cut = true;
                return false;
            }
            continue;
        }
        if (!std::isfinite(dt) && !std::isfinite(df)) return false;
        double step = std::min(dt, df);
        Point u = unit_direction(rng);
        for (int i = 0; i < 3; ++i) x[i] += step * u[i];
    }
}

namespace {

enum class Seg { None, Hit, Exit };

Seg euler_segment(const Point& a, const Point& b, double dt, const ObstacleSet& target,
                  const Fence& fence, Stream& rng, int depth)
{
    double da = target.distance(a), db = target.distance(b);
    double fa = fence.inside_distance(a), fb = fence.inside_distance(b);
    const double thr = 4 * std::sqrt(3 * dt);
    if (depth < 4 && (std::min(da, db) < thr || std::min(fa, fb) < thr)) {
        Point m{};
        double sd = std::sqrt(dt / 4);
        for (int i = 0; i < 3; ++i) m[i] = 0.5 * (a[i] + b[i]) + sd * rng.normal();
        Seg s = euler_segment(a, m, dt / 2, target, fence, rng, depth + 1);
        if (s != Seg::None) return s;
        return euler_segment(m, b, dt / 2, target, fence, rng, depth + 1);
    }
    if (db <= 0) return Seg::Hit;
    if (fb <= 0) return Seg::Exit;
    // bridge crossing of a locally flat boundary
    if (da < thr && db < thr && rng.uniform() < std::exp(-2 * da * db / dt)) return Seg::Hit;
    if (fa < thr && fb < thr && rng.uniform() < std::exp(-2 * fa * fb / dt)) return Seg::Exit;
    return Seg::None;
}

} // namespace

bool euler_walk(Point x, const ObstacleSet& target, const Fence& fence, Stream& rng, double dt,
                int max_reentries, std::size_t max_steps, long* steps, bool* cut)
{
    *cut = false;
    int reentries = 0;
    const bool far_ok = fence.kind == Fence::Kind::None && !target.empty();
    const double sd = std::sqrt(dt);
    if (target.distance(x) <= 0) {
        *steps = 0;
        return true;
    }
    if (fence.inside_distance(x) <= 0) {
        *steps = 0;
        return false;
    }
    for (std::size_t n = 0;; ++n) {
        *steps = long(n);
        if (n >= max_steps) {
            *cut = true;
            return false;
        }
        if (far_ok && dist3(x, target.center()) >= 2 * target.radius()) {
            Reentry r = far_field(x, target, rng, max_reentries, &reentries);
            if (r == Reentry::Escaped) return false;
            if (r == Reentry::Cut) {
                *cut = true;
                return false;
            }
            continue;
        }
        Point y = x;
        for (int i = 0; i < 3; ++i) y[i] += sd * rng.normal();
        Seg s = euler_segment(x, y, dt, target, fence, rng, 0);
        if (s == Seg::Hit) return true;
        if (s == Seg::Exit) return false;
        x = y;
    }
}

HitEstimate hit_before(const Point& x0, const ObstacleSet& target, const Fence& fence,
                       const HitOptions& opt)
{
    if (target.polar()) throw std::invalid_argument("hit_before: polar target");
    if (target.empty() && fence.kind == Fence::Kind::None) return {0, 0, 0, opt.n_paths, 0};
    double scale = target.empty() ? fence.radius : target.diameter();
    double eps = opt.abs_eps > 0 ? opt.abs_eps : 1e-4 * scale;
    double dt = opt.dt > 0 ? opt.dt : std::pow(scale / 200, 2);
    std::vector<std::uint8_t> hit(opt.n_paths), cut(opt.n_paths);
    std::vector<long> steps(opt.n_paths);
    parallel_for(opt.n_paths, [&](std::size_t i) {
        Stream rng = derive_stream(opt.seed, opt.kind, i);
        bool c = false;
        bool h = opt.method == HitOptions::Method::WalkOnSpheres
                     ? wos_walk(x0, target, fence, rng, eps, opt.max_reentries, &steps[i], &c)
                     : euler_walk(x0, target, fence, rng, dt, opt.max_reentries, opt.max_steps,
                                  &steps[i], &c);
        hit[i] = h;
        cut[i] = c;
    });
    HitEstimate e;
    e.n = opt.n_paths;
    double s = 0, nc = 0, st = 0;
    for (std::size_t i = 0; i < e.n; ++i) {
        s += hit[i];
        nc += cut[i];
        st += double(steps[i]);
    }
    e.p = s / double(e.n);
    e.se = e.n > 1 ? std::sqrt(e.p * (1 - e.p) / double(e.n - 1)) : 0;
    e.remainder = nc / double(e.n);
    e.mean_steps = st / double(e.n);
    return e;
}

// ------------------------------------------------------------ certification

std::vector<Point> boundary_cloud(const DyadicIndicator& u0, double h)
{
    std::vector<Point> out;
    for (const Box& f : u0.boundary_faces()) {
        int axis = -1;
        for (int i = 0; i < 3; ++i)
            if (f.hi[i] == f.lo[i]) axis = i;
        int u = (axis + 1) % 3, v = (axis + 2) % 3;
        int nu = std::max(1, int(std::ceil((f.hi[u] - f.lo[u]) / h)));
        int nv = std::max(1, int(std::ceil((f.hi[v] - f.lo[v]) / h)));
        for (int a = 0; a < nu; ++a)
            for (int b = 0; b < nv; ++b) {
                Point p = f.lo;
                p[u] = f.lo[u] + (a + 0.5) * (f.hi[u] - f.lo[u]) / nu;
                p[v] = f.lo[v] + (b + 0.5) * (f.hi[v] - f.lo[v]) / nv;
                out.push_back(p);
            }
    }
    return out;
}

PorousInterfaceSpec certify_interface(const ObstacleSet& sigma, const DyadicIndicator& u0,
                                      double eps, double eta, std::size_t n_paths,
                                      std::uint64_t seed, std::size_t max_points)
{
    PorousInterfaceSpec spec;
    spec.eps = eps;
    spec.eta = eta;
    std::vector<Point> cloud = boundary_cloud(u0, eps / 4);
    spec.cloud_size = cloud.size();
    if (cloud.size() > max_points) {
        Stream rng = derive_stream(seed, "certify-points", 0);
        for (std::size_t i = 0; i < max_points; ++i) {
            std::size_t j = i + std::size_t(rng.uniform() * double(cloud.size() - i));
            std::swap(cloud[i], cloud[j]);
        }
        cloud.resize(max_points);
    }
    spec.tested = cloud.size();
    std::vector<HitEstimate> est(cloud.size());
    for (std::size_t k = 0; k < cloud.size(); ++k) {
        HitOptions o;
        o.n_paths = n_paths;
        o.seed = seed;
        o.kind = "certify-" + std::to_string(k);
        o.abs_eps = 1e-4 * eps;
        est[k] = sigma.empty() ? HitEstimate{0, 0, 0, n_paths, 0}
                               : hit_before(cloud[k], sigma, Fence::sup_ball(cloud[k], eps), o);
    }
    spec.certified = true;
    for (std::size_t k = 0; k < cloud.size(); ++k) {
        if (est[k].p < spec.min_estimate) {
            spec.min_estimate = est[k].p;
            spec.min_se = est[k].se;
            spec.worst = cloud[k];
        }
        if (est[k].p < eta - 3 * est[k].se) {
            spec.certified = false;
            spec.failing.push_back(cloud[k]);
        }
    }
    return spec;
}

CompactSetSpec perforated_cube_shell(double R, double spacing, double hole, double thickness)
{
    double cells = 2 * R / spacing;
    if (cells != std::floor(cells) || !(hole >= 0 && hole < spacing) || !(thickness > 0 && thickness < R))
        throw std::invalid_argument("perforated_cube_shell: need 2R/spacing integral, hole < spacing");
    const int m = int(cells);
    const double hs = hole / 2;
    CompactSetSpec s;
    s.d = 3;
    auto centre = [&](int j) { return -R + (j + 0.5) * spacing; };
    for (int axis = 0; axis < 3; ++axis)
        for (int side = 0; side < 2; ++side) {
            int u = (axis + 1) % 3, v = (axis + 2) % 3;
            auto add = [&](double u0, double u1, double v0, double v1) {
                if (u1 <= u0 || v1 <= v0) return;
                Box b;
                b.d = 3;
                b.lo[axis] = side ? R - thickness : -R;
                b.hi[axis] = side ? R : -R + thickness;
                b.lo[u] = u0;
                b.hi[u] = u1;
                b.lo[v] = v0;
                b.hi[v] = v1;
                s.add_box(b);
            };
            if (hole == 0) {
                add(-R, R, -R, R);
                continue;
            }
            // solid bands between hole rows span the whole face
            add(-R, R, -R, centre(0) - hs);
            for (int j = 0; j + 1 < m; ++j) add(-R, R, centre(j) + hs, centre(j + 1) - hs);
            add(-R, R, centre(m - 1) + hs, R);
            // pieces between the holes of each row
            for (int j = 0; j < m; ++j) {
                double v0 = centre(j) - hs, v1 = centre(j) + hs;
                add(-R, centre(0) - hs, v0, v1);
                for (int i = 0; i + 1 < m; ++i) add(centre(i) + hs, centre(i + 1) - hs, v0, v1);
                add(centre(m - 1) + hs, R, v0, v1);
            }
        }
    return s;
}

// ----------------------------------------------------------- solidification

std::vector<SolidificationRow> solidification_experiment(const CompactSetSpec& A,
                                                         const std::vector<Point>& starts,
                                                         const std::vector<SolidificationMember>& family,
                                                         const SolidificationOptions& opt)
{
    std::vector<SolidificationRow> rows;
    for (const SolidificationMember& m : family) {
        SolidificationRow row;
        row.name = m.name;
        row.eps = m.eps;
        row.ell_star = m.ell_star;
        row.u = std::ldexp(m.eps, m.ell_star);
        MembershipReport mem = class_membership(A, m.ell_star, m.u0);
        if (!mem.member()) {
            row.included = false;
            row.reason = "U0 not in U_{l*,A}: " + mem.note;
            rows.push_back(row);
            continue;
        }
        ObstacleSet sigma(m.sigma);
        if (opt.certify) {
            PorousInterfaceSpec cert =
                certify_interface(sigma, m.u0, m.eps, opt.eta, opt.cert_paths, opt.seed, opt.cert_points);
            row.eta_hat = cert.min_estimate;
            if (!cert.certified) {
                row.included = false;
                row.reason = "Sigma not certified at eta";
                rows.push_back(row);
                continue;
            }
        }
        row.p_escape = -1;
        for (std::size_t k = 0; k < starts.size(); ++k) {
            HitOptions o;
            o.n_paths = opt.n_paths;
            o.seed = opt.seed;
            o.kind = "solidify-" + std::to_string(k);
            HitEstimate e = hit_before(starts[k], sigma, Fence::none(), o);
            double p = 1 - e.p;
            row.per_point.push_back(p);
            row.remainder = std::max(row.remainder, e.remainder);
            if (p > row.p_escape) {
                row.p_escape = p;
                row.se = e.se;
                row.argmax = starts[k];
            }
        }
        rows.push_back(row);
    }
    return rows;
}

// ------------------------------------------------------------ Feynman-Kac

SoftObstacle SoftObstacle::constant(double lambda)
{
    if (lambda < 0) throw std::invalid_argument("SoftObstacle: V >= 0");
    SoftObstacle v;
    v.V = [lambda](const Point&) { return lambda; };
    v.vmax = lambda;
    return v;
}

SoftObstacle SoftObstacle::boundary_layer(const DyadicIndicator& u0, double eps, double a)
{
    if (!(eps > 0) || a < 0) throw std::invalid_argument("boundary_layer: eps > 0, a >= 0");
    CompactSetSpec faces;
    faces.d = 3;
    for (const Box& f : u0.boundary_faces()) faces.add_box(f);
    auto s = std::make_shared<ObstacleSet>(faces, std::ldexp(1.0, int(std::ceil(std::log2(2 * eps)))));
    SoftObstacle v;
    double level = a / (eps * eps);
    v.V = [s, eps, level](const Point& x) { return s->distance(x) <= eps ? level : 0.0; };
    v.support_distance = [s, eps](const Point& x) { return std::max(0.0, s->distance(x) - eps); };
    v.center = s->center();
    v.support_radius = s->radius() + eps;
    v.vmax = level;
    v.length_scale = eps;
    return v;
}

FkEstimate feynman_kac(const Point& x0, const SoftObstacle& v, const Horizon& h,
                       const FkOptions& opt)
{
    if (h.kind == Horizon::Kind::Infinite && !(v.support_radius > 0 && v.support_distance))
        throw std::invalid_argument("feynman_kac: infinite horizon needs a bounded support");
    double dt = opt.dt;
    if (dt <= 0) dt = v.length_scale > 0 ? std::pow(v.length_scale / 20, 2)
                                        : (h.kind == Horizon::Kind::Fixed ? h.T * 1e-3 : 1e-4);
    std::size_t fixed_steps = 0;
    if (h.kind == Horizon::Kind::Fixed) {
        fixed_steps = std::size_t(std::ceil(h.T / dt));
        dt = h.T / double(fixed_steps);
    }
    const double sd = std::sqrt(dt);
    const double margin = 4 * std::sqrt(3 * dt);
    const bool jumps = h.kind != Horizon::Kind::Fixed && bool(v.support_distance);
    Fence fence = h.kind == Horizon::Kind::SupExit ? Fence::sup_ball(x0, h.radius) : Fence::none();
    std::vector<double> val(opt.n_paths);
    std::vector<std::uint8_t> cut(opt.n_paths);
    parallel_for(opt.n_paths, [&](std::size_t p) {
        Stream rng = derive_stream(opt.seed, "feynman-kac", p);
        Point x = x0;
        double I = 0, vx = v.V(x);
        for (std::size_t n = 0;; ++n) {
            if (n >= opt.max_steps) {
                cut[p] = 1;
                break;
            }
            if (h.kind == Horizon::Kind::Fixed && n >= fixed_steps) break;
            if (I > opt.cutoff) break;
            double df = fence.inside_distance(x);
            if (df <= 0) break;
            if (jumps) {
                double sdist = v.support_distance(x);
                if (sdist > margin) {
                    if (h.kind == Horizon::Kind::Infinite && dist3(x, v.center) >= 2 * v.support_radius) {
                        if (rng.uniform() >= v.support_radius / dist3(x, v.center)) break;
                        x = sphere_reentry(x, v.center, v.support_radius, rng);
                        vx = v.V(x);
                        continue;
                    }
                    double step = std::min(sdist, df);
                    if (df <= 1e-4 * margin) break;
                    Point u = unit_direction(rng);
                    for (int i = 0; i < 3; ++i) x[i] += step * u[i];
                    vx = v.V(x);
                    continue;
                }
            }
            Point y = x;
            for (int i = 0; i < 3; ++i) y[i] += sd * rng.normal();
            double vy = v.V(y);
            I += 0.5 * dt * (vx + vy);
            x = y;
            vx = vy;
        }
        val[p] = std::exp(-I);
    });
    FkEstimate e;
    e.n = opt.n_paths;
    double s = 0, s2 = 0, nc = 0;
    for (std::size_t p = 0; p < e.n; ++p) {
        s += val[p];
        s2 += val[p] * val[p];
        nc += cut[p];
    }
    e.value = s / double(e.n);
    double var = e.n > 1 ? std::max(0.0, (s2 - double(e.n) * e.value * e.value) / double(e.n - 1)) : 0;
    e.se = std::sqrt(var / double(e.n));
    e.remainder = std::exp(-opt.cutoff) + nc / double(e.n);
    return e;
}

} // namespace solidify
