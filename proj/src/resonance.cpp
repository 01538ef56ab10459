#include "solidify/resonance.hpp"

#include <algorithm>
#include <cmath>

#include "solidify/density.hpp"
#include "solidify/parallel.hpp"
#include "solidify/rng.hpp"

namespace solidify {

int min_separation(int d, int J)
{
    if (J < 1) throw std::invalid_argument("J must be >= 1");
    double c0 = averaging_constant(d);
    int L = 5;
    while (c0 * std::ldexp(1.0, -L) > 1.0 / (200.0 * J)) ++L;
    return L;
}

std::pair<double, double> ScaleLadder::interval(int j) const
{
    double w = static_cast<double>(j) / (100.0 * J);
    return {0.5 - w, 0.5 + w};
}

ScaleLadder ladder(int d, int ell_star, int J, int I, std::optional<int> L)
{
    if (J < 1 || I < 1) throw std::invalid_argument("ladder: need J >= 1 and I >= 1");
    if (ell_star < 0) throw std::invalid_argument("ladder: l* must be >= 0");
    ScaleLadder s;
    s.d = d;
    s.ell_star = ell_star;
    s.J = J;
    s.I = I;
    s.L_J = min_separation(d, J);
    s.L = L.value_or(s.L_J);
    if (s.L < s.L_J)
        throw std::invalid_argument("ladder: L = " + std::to_string(s.L) + " is below L(J) = " +
                                    std::to_string(s.L_J));
    int step = (J + 1) * s.L;
    s.ell0 = ((ell_star + step - 1) / step) * step;
    for (int k = 0; k < I * (J + 1); ++k) s.a_star.push_back(s.ell0 + k * s.L);
    for (int k = 0; k < I; ++k) s.a.push_back(s.ell0 + k * step);
    s.alpha_tilde = std::pow(4.0, -d) / 3.0;
    return s;
}

std::vector<int> intermediate_labels(const ScaleLadder& s, const std::vector<int>& labels)
{
    std::vector<int> out;
    for (int l : labels)
        for (int j = 1; j <= s.J; ++j) out.push_back(l + j * s.L);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<int> all_labels(const ScaleLadder& s, const std::vector<int>& labels)
{
    std::vector<int> out = intermediate_labels(s, labels);
    out.insert(out.end(), labels.begin(), labels.end());
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

ResonanceCount resonance_membership(const Point& x, const DyadicIndicator& u,
                                    const std::vector<int>& levels, int k, double alpha_tilde)
{
    ResonanceCount r;
    for (int l : levels) {
        double v = sigma_tilde(u, x, l);
        if (v >= alpha_tilde && v <= 1.0 - alpha_tilde) ++r.count;
    }
    r.in_res = r.count >= k;
    return r;
}

ResonanceCount resonance_membership(const Point& x, const DyadicIndicator& u, const ScaleLadder& s)
{
    if (s.a_star.back() - 2 > u.ell_max() + 8)
        throw std::invalid_argument("resonance: ladder not resolvable by the domain");
    return resonance_membership(x, u, s.a_star, s.J, s.alpha_tilde);
}

double safe_distance(const DyadicIndicator& u, const Point& y, double r, double lo, double hi,
                     double cap)
{
    using Side = DyadicIndicator::Side;
    const int d = u.dimension();
    double norm = std::ldexp(1.0, d) * std::pow(r, d);
    double v = u.clip_volume(Box::cube(d, y, r), Side::U1) / norm;
    if (v >= lo && v <= hi) return 0.0;
    bool below = v < lo;
    double budget = below ? lo * norm : (1.0 - hi) * norm;
    auto ok = [&](double t) {
        Box q = Box::cube(d, y, r + t);
        return u.clip_volume(q, below ? Side::U1 : Side::U0) < budget;
    };
    double dist = below ? lo - v : v - hi;
    double good = std::min(cap, dist * r / d); // Lipschitz in l1, with |.|_1 <= d |.|_inf
    if (good >= cap) return cap;
    if (ok(cap)) return cap;
    double bad = cap;
    double t = std::max(2 * good, r * 1e-3);
    while (t < bad) {
        if (ok(t)) {
            good = t;
            t *= 2;
        } else {
            bad = t;
            break;
        }
    }
    for (int it = 0; it < 12 && bad - good > 1e-3 * good; ++it) {
        double mid = 0.5 * (good + bad);
        if (ok(mid))
            good = mid;
        else
            bad = mid;
    }
    return good;
}

namespace {

double res_safe_radius(const DyadicIndicator& u, const Point& y, const std::vector<int>& levels,
                       int k, double alpha, double cap, std::vector<double>& scratch)
{
    scratch.clear();
    for (int l : levels)
        scratch.push_back(safe_distance(u, y, std::ldexp(4.0, -l), alpha, 1.0 - alpha, cap));
    std::nth_element(scratch.begin(), scratch.begin() + (k - 1), scratch.end());
    return scratch[k - 1];
}

void sphere_jump(Point& y, int d, double radius, Stream& rng)
{
    double g[kMaxDim];
    double n2 = 0;
    for (int i = 0; i < d; ++i) {
        g[i] = rng.normal();
        n2 += g[i] * g[i];
    }
    double f = radius / std::sqrt(n2);
    for (int i = 0; i < d; ++i) y[i] += g[i] * f;
}

double sup_dist(int d, const Point& a, const Point& b)
{
    double m = 0;
    for (int i = 0; i < d; ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace

IFamilyRecord track_ifamily(const PathSample& path, const DyadicIndicator& u,
                            const std::vector<int>& labels, double tol)
{
    IFamilyRecord rec;
    rec.labels = labels;
    rec.S.push_back(0.0);
    std::vector<int> left = labels;
    std::sort(left.begin(), left.end());
    double prev = 0.0;
    const int I = static_cast<int>(labels.size());
    for (int i = 1; i <= I; ++i) {
        double best = kNever;
        for (int l : left) {
            auto f = [&](const Point& y) { return sigma_hat(u, y, l); };
            double t = first_entry(path, prev, f, std::ldexp(1.0, l), 0.5, 0.5, tol);
            best = std::min(best, t);
        }
        int pick = left.back();
        if (best < kNever) {
            Point xs = path.at(best);
            for (auto it = left.rbegin(); it != left.rend(); ++it)
                if (std::abs(sigma_hat(u, xs, *it) - 0.5) <= tol) {
                    pick = *it;
                    break;
                }
        }
        rec.S.push_back(best);
        rec.lhat.push_back(pick);
        rec.T.push_back(best < kNever ? first_exit(path, best, std::ldexp(2.0, -pick),
                                                   std::ldexp(2e-3, -pick))
                                      : kNever);
        left.erase(std::find(left.begin(), left.end(), pick));
        prev = best;
        if (best == kNever) {
            // the remaining labels are forced; their times stay infinite
            while (!left.empty()) {
                rec.S.push_back(kNever);
                rec.lhat.push_back(left.back());
                rec.T.push_back(kNever);
                left.pop_back();
            }
            break;
        }
    }
    rec.complete = rec.S.back() < kNever;
    return rec;
}

namespace {

void check_chain(const DyadicIndicator& u, const std::vector<int>& scales, const Point& x0)
{
    if (scales.size() < 2) throw std::invalid_argument("gamma chain: need l_0 < ... < l_J, J >= 1");
    int J = static_cast<int>(scales.size()) - 1;
    int LJ = min_separation(u.dimension(), J);
    for (int j = 0; j < J; ++j)
        if (scales[j + 1] < scales[j] + LJ)
            throw std::invalid_argument("gamma chain: scales closer than L(J)");
    if (sigma_hat(u, x0, scales[0]) != 0.5)
        throw std::invalid_argument("gamma chain: sigma_hat_{l_0}(X_0) must equal 1/2");
}

void check_endpoint(const DyadicIndicator& u, const std::vector<int>& scales, GammaChain& g)
{
    double alpha = std::pow(4.0, -u.dimension()) / 3.0;
    g.endpoint_tilde.clear();
    g.endpoint_ok = true;
    for (int l : scales) {
        double v = sigma_tilde(u, g.points.back(), l);
        g.endpoint_tilde.push_back(v);
        if (v < alpha || v > 1 - alpha) g.endpoint_ok = false;
    }
}

} // namespace

GammaChain gamma_stopping_chain(const PathSample& path, const DyadicIndicator& u,
                                const std::vector<int>& scales, double tol)
{
    check_chain(u, scales, path.positions.front());
    const int d = u.dimension();
    const int J = static_cast<int>(scales.size()) - 1;
    ScaleLadder s;
    s.J = J;
    GammaChain g;
    g.gamma.push_back(0.0);
    g.points.push_back(path.positions.front());
    g.event_c = true;
    for (int j = 0; j < J; ++j) {
        double r = std::ldexp(1.0, -scales[j]);
        double tau = first_exit(path, g.gamma[j], r, r * 1e-3);
        int l = scales[j + 1];
        auto f = [&](const Point& y) { return sigma_hat(u, y, l); };
        auto [lo, hi] = s.interval(j + 1);
        double t = first_entry(path, g.gamma[j], f, std::ldexp(1.0, l), lo, hi, tol);
        g.gamma.push_back(t);
        if (!(t < tau)) {
            g.event_c = false;
            break;
        }
        g.points.push_back(path.at(t));
    }
    if (!g.event_c) return g;
    // sup displacement on [gamma_j, gamma_J]; the path is linear between samples
    double tJ = g.gamma.back();
    for (int j = 0; j < J; ++j) {
        double m = sup_dist(d, path.at(tJ), g.points[j]);
        for (std::size_t k = 0; k < path.size(); ++k)
            if (path.times[k] >= g.gamma[j] && path.times[k] <= tJ)
                m = std::max(m, sup_dist(d, path.positions[k], g.points[j]));
        double ratio = m / std::ldexp(1.0, -scales[j]);
        g.max_ratio = std::max(g.max_ratio, ratio);
        if (ratio > 1.5) g.displacement_ok = false;
    }
    check_endpoint(u, scales, g);
    return g;
}

GammaChain gamma_chain_wos(const Point& x0, const DyadicIndicator& u, const std::vector<int>& scales,
                           Stream& rng, double abs_eps)
{
    check_chain(u, scales, x0);
    const int d = u.dimension();
    const int J = static_cast<int>(scales.size()) - 1;
    ScaleLadder s;
    s.J = J;
    GammaChain g;
    g.gamma.push_back(0.0);
    g.points.push_back(x0);
    g.event_c = true;
    std::vector<double> reach(J + 1, 0.0); // max over the ball hull of |X - X_{gamma_j}|_inf
    for (int j = 0; j < J; ++j) {
        const Point c = g.points[j];
        double R = std::ldexp(1.0, -scales[j]);
        double r = std::ldexp(1.0, -scales[j + 1]);
        double eps = abs_eps * r;
        auto [lo, hi] = s.interval(j + 1);
        Point y = c;
        bool hit = false;
        for (long step = 0; step < 1000000; ++step) {
            double rf = R - sup_dist(d, y, c);
            if (rf <= eps) break;
            double t = safe_distance(u, y, r, lo, hi, rf);
            if (t <= eps) {
                hit = true;
                break;
            }
            double rho = std::min(t, rf);
            for (int k = 0; k <= j; ++k)
                reach[k] = std::max(reach[k], sup_dist(d, y, g.points[k]) + rho);
            sphere_jump(y, d, rho, rng);
        }
        if (!hit) {
            g.event_c = false;
            g.gamma.push_back(kNever);
            return g;
        }
        g.gamma.push_back(std::nan(""));
        g.points.push_back(y);
    }
    for (int j = 0; j < J; ++j) {
        double ratio = reach[j] / std::ldexp(1.0, -scales[j]);
        g.max_ratio = std::max(g.max_ratio, ratio);
        if (ratio > 1.5) g.displacement_ok = false;
    }
    check_endpoint(u, scales, g);
    return g;
}

double recursion_bound(int J, int I, double c2)
{
    if (J < 1) throw std::invalid_argument("recursion_bound: J >= 1");
    if (!(c2 > 0 && c2 < 1)) throw std::invalid_argument("recursion_bound: c2 in (0,1)");
    std::function<double(int, long)> G = [&](int k, long n) -> double {
        if (n <= 0) return 1.0;
        if (k == 1) return 0.0;
        // k = (k-1) + 1 in the recursion
        int km = k - 1;
        long delta = static_cast<long>(std::floor(std::sqrt(static_cast<double>(n))));
        double v = std::pow(1.0 - c2, std::sqrt(static_cast<double>(n)) - 1.0) +
                   std::pow(static_cast<double>(n), 1.0 + (km - 1) / 2.0) * G(km, delta - km + 1);
        return std::clamp(v, 0.0, 1.0);
    };
    return G(J, I);
}

std::vector<AvoidanceResult> avoidance_experiment(const std::vector<Point>& xs,
                                                  const DyadicIndicator& u, const ScaleLadder& s,
                                                  const AvoidanceOptions& opt)
{
    const int d = u.dimension();
    std::vector<AvoidanceResult> out;
    for (const Point& x : xs) {
        Point shift{};
        for (int i = 0; i < d; ++i) shift[i] = -x[i];
        DyadicIndicator v = u.translated(shift);
        for (int i = 0; i < d; ++i)
            if (v.support().lo[i] + x[i] != u.support().lo[i])
                throw std::invalid_argument("avoidance: translation by x is not exact");
        if (opt.require_class) {
            CompactSetSpec origin{d, {}};
            origin.add_ball(Point{}, 0.0);
            auto m = class_membership(origin, s.ell_star, v);
            if (!m.member())
                throw std::invalid_argument("avoidance: domain not certified in U_{l*,{x}}: " + m.note);
        }
        Box sup = v.support();
        double R = opt.R_out;
        if (R <= 0) {
            double diam = 0;
            for (int i = 0; i < d; ++i)
                diam = std::max(diam, std::max(sup.hi[i], 0.0) - std::min(sup.lo[i], 0.0));
            R = 8 * diam;
        }
        double eps = opt.abs_eps * std::ldexp(1.0, -s.ell0);
        std::vector<std::uint8_t> escaped(opt.n_paths, 0);
        std::vector<long> steps(opt.n_paths, 0);
        parallel_for(opt.n_paths, [&](std::size_t p) {
            Stream rng = derive_stream(opt.seed, "avoidance", p);
            std::vector<double> scratch;
            Point y{};
            long n = 0;
            for (; n < 10000000; ++n) {
                double rf = R - sup_norm(d, y);
                if (rf <= eps) {
                    escaped[p] = 1;
                    break;
                }
                double t = res_safe_radius(v, y, s.a_star, s.J, s.alpha_tilde, rf, scratch);
                if (t <= eps) break;
                sphere_jump(y, d, std::min(t, rf), rng);
            }
            steps[p] = n;
        });
        AvoidanceResult r;
        r.x = x;
        for (std::size_t p = 0; p < opt.n_paths; ++p) {
            r.escapes += escaped[p];
            r.mean_steps += static_cast<double>(steps[p]);
        }
        r.hits = static_cast<long>(opt.n_paths) - r.escapes;
        double n = static_cast<double>(opt.n_paths);
        r.p_avoid = r.escapes / n;
        r.se = std::sqrt(std::max(r.p_avoid * (1 - r.p_avoid), 0.0) / n);
        r.mean_steps /= n;
        // Res lies within the support dilated by 4 * 2^-l0
        Box hull = sup.dilated(std::ldexp(4.0, -s.ell0));
        Point c{};
        double rho2 = 0;
        for (int i = 0; i < d; ++i) {
            c[i] = 0.5 * (hull.lo[i] + hull.hi[i]);
            rho2 += std::pow(0.5 * (hull.hi[i] - hull.lo[i]), 2);
        }
        double gap = R - sup_norm(d, c), rho = std::sqrt(rho2);
        r.remainder = gap > rho ? std::pow(rho / gap, d - 2) : 1.0;
        out.push_back(r);
    }
    return out;
}

} // namespace solidify
