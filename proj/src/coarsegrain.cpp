#include "solidify/coarsegrain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "solidify/brownian.hpp"
#include "solidify/density.hpp"
#include "solidify/parallel.hpp"
#include "solidify/potential.hpp"
#include "solidify/rng.hpp"

namespace solidify {

namespace {

long fdiv(long a, long b)
{
    long q = a / b;
    return (a % b != 0 && (a < 0) != (b < 0)) ? q - 1 : q;
}

long sup(const Site& x) { return std::max({std::labs(x[0]), std::labs(x[1]), std::labs(x[2])}); }

// boxes meeting [c - R, c + R] along one axis: (first, last, weight) runs
struct Run {
    long a, b, w;
};
int runs(long c, long R, long L, Run out[3])
{
    long lo = c - R, hi = c + R;
    long ja = fdiv(lo, L), jb = fdiv(hi, L);
    if (ja == jb) {
        out[0] = {ja, ja, hi - lo + 1};
        return 1;
    }
    int k = 0;
    out[k++] = {ja, ja, ja * L + L - lo};
    if (jb > ja + 1) out[k++] = {ja + 1, jb - 1, L};
    out[k++] = {jb, jb, hi - jb * L + 1};
    return k;
}

std::string fmt_num(double v)
{
    std::ostringstream o;
    o.precision(6);
    o << v;
    return o.str();
}

// Sliding-window "all ones" along axis `ax` over offsets [-r_lo, r_hi].
void window_all(Grid3& g, int ax, long r_lo, long r_hi)
{
    const long n = g.n;
    std::vector<std::uint8_t> line(static_cast<std::size_t>(n)), out(static_cast<std::size_t>(n));
    std::size_t st[3] = {std::size_t(n * n), std::size_t(n), 1};
    int o1 = (ax + 1) % 3, o2 = (ax + 2) % 3;
    for (long a = 0; a < n; ++a)
        for (long b = 0; b < n; ++b) {
            std::size_t base = std::size_t(a) * st[o1] + std::size_t(b) * st[o2];
            for (long t = 0; t < n; ++t) line[std::size_t(t)] = g.v[base + std::size_t(t) * st[ax]];
            // zeros in the window; positions outside count as zero
            std::vector<long> pre(std::size_t(n) + 1, 0);
            for (long t = 0; t < n; ++t) pre[std::size_t(t) + 1] = pre[std::size_t(t)] + (line[std::size_t(t)] == 0);
            for (long t = 0; t < n; ++t) {
                long lo = t - r_lo, hi = t + r_hi;
                bool ok = lo >= 0 && hi < n && pre[std::size_t(hi) + 1] - pre[std::size_t(lo)] == 0;
                out[std::size_t(t)] = ok;
            }
            for (long t = 0; t < n; ++t) g.v[base + std::size_t(t) * st[ax]] = out[std::size_t(t)];
        }
}

// Sliding-window "any one" along axis `ax`: out(t) = max over [t - r_lo, t + r_hi].
void window_any(Grid3& g, int ax, long r_lo, long r_hi)
{
    const long n = g.n;
    std::vector<long> pre(std::size_t(n) + 1);
    std::vector<std::uint8_t> out(static_cast<std::size_t>(n));
    std::size_t st[3] = {std::size_t(n * n), std::size_t(n), 1};
    int o1 = (ax + 1) % 3, o2 = (ax + 2) % 3;
    for (long a = 0; a < n; ++a)
        for (long b = 0; b < n; ++b) {
            std::size_t base = std::size_t(a) * st[o1] + std::size_t(b) * st[o2];
            pre[0] = 0;
            for (long t = 0; t < n; ++t)
                pre[std::size_t(t) + 1] = pre[std::size_t(t)] + (g.v[base + std::size_t(t) * st[ax]] != 0);
            for (long t = 0; t < n; ++t) {
                long lo = std::max(0L, t - r_lo), hi = std::min(n - 1, t + r_hi);
                out[std::size_t(t)] = lo <= hi && pre[std::size_t(hi) + 1] - pre[std::size_t(lo)] > 0;
            }
            for (long t = 0; t < n; ++t) g.v[base + std::size_t(t) * st[ax]] = out[std::size_t(t)];
        }
}

// A_N = (N A) cap Z^3 on a cube holding it, with a margin of one site.
Grid3 lattice_blowup(const CompactSetSpec& A, long N)
{
    Box bb = A.bounding_box();
    long lo = LONG_MAX, hi = LONG_MIN;
    for (int i = 0; i < 3; ++i) {
        lo = std::min(lo, long(std::floor(bb.lo[i] * double(N))) - 1);
        hi = std::max(hi, long(std::ceil(bb.hi[i] * double(N))) + 1);
    }
    Grid3 g({lo, lo, lo}, hi - lo + 1);
    for (std::size_t k = 0; k < g.v.size(); ++k) {
        Site y = g.site(k);
        g.v[k] = A.contains(make_point({double(y[0]) / double(N), double(y[1]) / double(N),
                                        double(y[2]) / double(N)}));
    }
    return g;
}

int log2_exact(long N)
{
    int k = 0;
    while ((1L << k) < N) ++k;
    if ((1L << k) != N) throw std::invalid_argument("N must be a power of two");
    return k;
}

} // namespace

// ---------------------------------------------------------------- scales

double GammaRule::operator()(double N) const
{
    double ll = N > std::exp(1.0) ? std::log(std::log(N)) : 0.0;
    return std::min(1.0, scale / std::max(floor, ll));
}

double ScaleConfig::gamma_N() const { return rule(double(N)); }

long ScaleConfig::l0() const
{
    if (L0 > 0) return L0;
    double n = double(N);
    return long(std::floor(std::pow(n * std::log(n) / gamma_N(), 1.0 / (d - 1))));
}

long ScaleConfig::lhat0() const
{
    if (Lhat0 > 0) return Lhat0;
    return 100 * d * long(std::floor(std::sqrt(gamma_N()) * double(N)));
}

long ScaleConfig::hat_spacing() const
{
    if (spacing > 0) return spacing;
    return std::max(1L, lhat0() / (100 * d));
}

long ScaleConfig::delta_radius() const
{
    long r = (lhat0() + 50 * d - 1) / (50 * d);
    return std::max(r, hat_spacing() + 1);
}

long ScaleConfig::target() const
{
    double t = std::pow(c_prime / double(K) * double(lhat0()) / double(l0()), d - 1);
    return long(std::floor(t + 1e-12));
}

long ScaleConfig::eval_radius() const
{
    return long(std::ceil((M + 1) * double(N))) + lhat0() + l0();
}

double ScaleConfig::N_L(double L) { return L * L / std::log(L); }

void ScaleConfig::validate() const
{
    auto fail = [](const std::string& m) { throw SchemaError(m); };
    if (d != 3) fail("d must be 3");
    if (N < 2) fail("N must be at least 2");
    if (!(M > 0)) fail("M must be positive");
    if (!(u > 0 && u < gamma && gamma < beta && beta < alpha))
        fail("need 0 < u < gamma < beta < alpha (got u=" + fmt_num(u) + ", gamma=" + fmt_num(gamma) +
             ", beta=" + fmt_num(beta) + ", alpha=" + fmt_num(alpha) + ")");
    if (!(eps_tilde > 0 && eps_tilde < 1)) fail("eps_tilde must lie in (0,1)");
    if (u_bar > 0) {
        if (!(alpha < u_bar)) fail("need alpha < u_bar");
        if (!(eps_tilde * (std::sqrt(u_bar / u) - 1) < 1)) fail("need eps_tilde (sqrt(u_bar/u) - 1) < 1");
    }
    if (K < 1) fail("K must be at least 1");
    if (!(c_prime > 0)) fail("c_prime must be positive");
    if (!(rule.scale > 0)) fail("gamma rule scale must be positive");
    long l = l0(), lh = lhat0();
    if (l < 1) fail("L0 must be at least 1");
    if (!(l < lh)) fail("need L0 < Lhat0 (L0=" + std::to_string(l) + ", Lhat0=" + std::to_string(lh) + ")");
    if (hat_spacing() < 1) fail("spacing must be at least 1");
    // slack used by the insulation argument at finite scale
    if (!(4 * d * (delta_radius() + 1) < lh))
        fail("Lhat0 too small for the Delta radius: need 4d(r+1) < Lhat0");
    if (N < lh + l) fail("need N >= Lhat0 + L0");
    if (target() < 1) fail("selection target (c'/K Lhat0/L0)^(d-1) is below 1");
}

nlohmann::json ScaleConfig::to_json() const
{
    return {{"d", d},         {"N", N},       {"M", M},         {"u", u},
            {"alpha", alpha}, {"beta", beta}, {"gamma", gamma}, {"eps_tilde", eps_tilde},
            {"u_bar", u_bar}, {"K", K},       {"gamma_rule", {{"scale", rule.scale}, {"floor", rule.floor}}},
            {"L0", L0},       {"Lhat0", Lhat0}, {"spacing", spacing}, {"c_prime", c_prime}};
}

ScaleConfig ScaleConfig::from_json(const nlohmann::json& j)
{
    static const std::set<std::string> known = {"d", "N", "M", "u", "alpha", "beta", "gamma", "eps_tilde",
                                                "u_bar", "K", "gamma_rule", "L0", "Lhat0", "spacing", "c_prime"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key())) throw SchemaError("/" + it.key() + ": unknown field");
    ScaleConfig c;
    auto num = [&](const char* k, auto& dst) {
        if (!j.contains(k)) return;
        if (!j[k].is_number()) throw SchemaError(std::string("/") + k + ": expected a number");
        dst = j[k].get<std::decay_t<decltype(dst)>>();
    };
    num("d", c.d);
    num("N", c.N);
    num("M", c.M);
    num("u", c.u);
    num("alpha", c.alpha);
    num("beta", c.beta);
    num("gamma", c.gamma);
    num("eps_tilde", c.eps_tilde);
    num("u_bar", c.u_bar);
    num("K", c.K);
    num("L0", c.L0);
    num("Lhat0", c.Lhat0);
    num("spacing", c.spacing);
    num("c_prime", c.c_prime);
    if (j.contains("gamma_rule")) {
        const auto& g = j["gamma_rule"];
        if (!g.is_object()) throw SchemaError("/gamma_rule: expected an object");
        if (g.contains("scale")) c.rule.scale = g["scale"].get<double>();
        if (g.contains("floor")) c.rule.floor = g["floor"].get<double>();
    }
    return c;
}

// ---------------------------------------------------------------- fields

BoxField shell_field(const ScaleConfig& c, const ShellFixture& f)
{
    const long L = c.l0();
    const double N = double(c.N);
    return [=](const Site& j) {
        double r = 0;
        for (int i = 0; i < 3; ++i) r = std::max(r, std::fabs(double(j[i] * L) + 0.5 * double(L - 1)));
        r /= N;
        std::uint64_t h = mix64(f.seed ^ mix64(std::uint64_t(j[0]) * 0x9E3779B97F4A7C15ULL ^
                                              mix64(std::uint64_t(j[1]) + 0x632BE59BD9B4E019ULL) ^
                                              mix64(std::uint64_t(j[2]) * 0xD1B54A32D192ED03ULL + 7)));
        double x = double(h >> 11) * 0x1.0p-53;
        BoxStatus s;
        if (r >= f.r_in && r <= f.r_out) {
            s.high = true;
            s.good = x >= f.p_bad;
        } else {
            s.good = x >= f.p_noise;
        }
        return s;
    };
}

BoxField interlacement_field(const InterlacementSample& s, const ScaleConfig& c, const GoodParams& p)
{
    const long L = c.l0();
    return [&s, L, K = c.K, p, u = c.u, beta = c.beta](const Site& j) {
        BoxTriple t{{j[0] * L, j[1] * L, j[2] * L}, L, K};
        BoxClassification b = classify_box(s, t, p);
        BoxStatus st;
        st.good = b.good;
        st.high = double(excursion_count(s, t, u)) >= beta * b.cap_D;
        return st;
    };
}

Grid3::Grid3(const Site& lo_, long n_, std::uint8_t fill) : lo(lo_), n(n_), v(std::size_t(n_ * n_ * n_), fill) {}

Site Grid3::site(std::size_t k) const
{
    long a = long(k) / (n * n), b = (long(k) / n) % n, c = long(k) % n;
    return {lo[0] + a, lo[1] + b, lo[2] + c};
}

bool BlockingField::in_u1_site(const Site& x) const
{
    Site j{fdiv(x[0], L0), fdiv(x[1], L0), fdiv(x[2], L0)};
    if (!boxes.inside(j)) return true; // beyond the grid everything is outside B(0,(M+1)N)
    return boxes.at(j) != 0;
}

std::size_t BlockingField::u1_count() const
{
    return std::size_t(std::count(boxes.v.begin(), boxes.v.end(), 1));
}

BlockingField blocking_field(const BoxField& f, const ScaleConfig& c)
{
    BlockingField b;
    b.L0 = c.l0();
    const double R = (c.M + 1) * double(c.N);
    b.r_outer = long(std::floor(R));
    const long Rb = c.eval_radius() + c.lhat0();
    const long jlo = fdiv(-Rb, b.L0), jhi = fdiv(Rb, b.L0);
    const long n = jhi - jlo + 1;
    b.boxes = Grid3({jlo, jlo, jlo}, n, 0);
    b.status = Grid3({jlo, jlo, jlo}, n, 0);
    parallel_for(std::size_t(n), [&](std::size_t a) {
        for (long q = 0; q < n; ++q)
            for (long r = 0; r < n; ++r) {
                Site j{jlo + long(a), jlo + q, jlo + r};
                BoxStatus s = f(j);
                b.status.v[b.status.index(j)] = std::uint8_t((s.good ? 1 : 0) | (s.high ? 2 : 0));
            }
    });
    auto outside = [&](const Site& j) {
        for (int i = 0; i < 3; ++i) {
            double lo = double(j[i] * b.L0), hi = lo + double(b.L0 - 1);
            if (lo > R || hi < -R) return true;
        }
        return false;
    };
    std::vector<std::size_t> queue;
    for (std::size_t k = 0; k < b.boxes.v.size(); ++k)
        if (outside(b.boxes.site(k))) {
            b.boxes.v[k] = 1;
            queue.push_back(k);
        }
    for (std::size_t head = 0; head < queue.size(); ++head) {
        std::size_t k = queue[head];
        if (b.status.v[k] != 1) continue; // only good and low boxes pass the path on
        Site j = b.boxes.site(k);
        for (int i = 0; i < 3; ++i)
            for (int sgn : {-1, 1}) {
                Site y = j;
                y[i] += sgn;
                if (!b.boxes.inside(y)) continue;
                std::size_t m = b.boxes.index(y);
                if (b.boxes.v[m]) continue;
                b.boxes.v[m] = 1;
                queue.push_back(m);
            }
    }
    return b;
}

// ---------------------------------------------------------------- density

DensityCounter::DensityCounter(const BlockingField& b, long Lhat0) : b_(b), R_(Lhat0)
{
    vol_ = (2 * R_ + 1) * (2 * R_ + 1) * (2 * R_ + 1);
    const long n = b.boxes.n;
    p0_.assign(std::size_t((n + 1) * n * n), 0);
    for (long a = 0; a < n; ++a)
        for (long q = 0; q < n * n; ++q)
            p0_[std::size_t((a + 1) * n * n + q)] = p0_[std::size_t(a * n * n + q)] + b.boxes.v[std::size_t(a * n * n + q)];
}

long long DensityCounter::p0_range(long j0a, long j0b, long j1, long j2) const
{
    const long n = b_.boxes.n;
    const Site& lo = b_.boxes.lo;
    long a = j0a - lo[0], bb = j0b - lo[0], q = (j1 - lo[1]) * n + (j2 - lo[2]);
    return p0_[std::size_t((bb + 1) * n * n + q)] - p0_[std::size_t(a * n * n + q)];
}

long long DensityCounter::count(const Site& x) const
{
    Run r0[3], r1[3], r2[3];
    int k0 = runs(x[0], R_, b_.L0, r0), k1 = runs(x[1], R_, b_.L0, r1), k2 = runs(x[2], R_, b_.L0, r2);
    long long total = 0;
    for (int a = 0; a < k1; ++a)
        for (long j1 = r1[a].a; j1 <= r1[a].b; ++j1)
            for (int b = 0; b < k2; ++b)
                for (long j2 = r2[b].a; j2 <= r2[b].b; ++j2) {
                    long long col = 0;
                    for (int c = 0; c < k0; ++c) col += r0[c].w * p0_range(r0[c].a, r0[c].b, j1, j2);
                    total += col * r1[a].w * r2[b].w;
                }
    return total;
}

void DensityCounter::slice(long x0, long lo1, long lo2, long n, long s, std::vector<long long>& out) const
{
    const long nb = b_.boxes.n;
    const Site& blo = b_.boxes.lo;
    Run r0[3];
    int k0 = runs(x0, R_, b_.L0, r0);
    // T1[j1][j2] = sum over j0 of u * w0
    std::vector<long long> t1(std::size_t(nb * nb), 0);
    for (long q = 0; q < nb * nb; ++q) {
        long long v = 0;
        for (int c = 0; c < k0; ++c)
            v += r0[c].w * (p0_[std::size_t((r0[c].b - blo[0] + 1) * nb * nb + q)] -
                            p0_[std::size_t((r0[c].a - blo[0]) * nb * nb + q)]);
        t1[std::size_t(q)] = v;
    }
    // prefix along j1
    std::vector<long long> p1(std::size_t((nb + 1) * nb), 0);
    for (long a = 0; a < nb; ++a)
        for (long c = 0; c < nb; ++c)
            p1[std::size_t((a + 1) * nb + c)] = p1[std::size_t(a * nb + c)] + t1[std::size_t(a * nb + c)];
    std::vector<long long> t2(static_cast<std::size_t>(nb)), p2(static_cast<std::size_t>(nb) + 1);
    out.assign(std::size_t(n * n), 0);
    for (long a = 0; a < n; ++a) {
        Run r1[3];
        int k1 = runs(lo1 + a * s, R_, b_.L0, r1);
        for (long c = 0; c < nb; ++c) {
            long long v = 0;
            for (int e = 0; e < k1; ++e)
                v += r1[e].w * (p1[std::size_t((r1[e].b - blo[1] + 1) * nb + c)] - p1[std::size_t((r1[e].a - blo[1]) * nb + c)]);
            t2[std::size_t(c)] = v;
        }
        p2[0] = 0;
        for (long c = 0; c < nb; ++c) p2[std::size_t(c) + 1] = p2[std::size_t(c)] + t2[std::size_t(c)];
        for (long b = 0; b < n; ++b) {
            Run r2[3];
            int k2 = runs(lo2 + b * s, R_, b_.L0, r2);
            long long v = 0;
            for (int e = 0; e < k2; ++e)
                v += r2[e].w * (p2[std::size_t(r2[e].b - blo[2] + 1)] - p2[std::size_t(r2[e].a - blo[2])]);
            out[std::size_t(a * n + b)] = v;
        }
    }
}

// ---------------------------------------------------------------- segmentation

bool Segmentation::site_in_delta(const Site& y) const
{
    for (int m = 0; m < 8; ++m) {
        Site k{y[0] - (m & 1), y[1] - ((m >> 1) & 1), y[2] - ((m >> 2) & 1)};
        if (blocked.inside(k) && blocked.at(k)) return true;
    }
    return false;
}

bool Segmentation::site_in_u1(const Site& y) const
{
    if (site_in_delta(y)) return false;
    if (!u1.inside(y)) return true;
    return u1.at(y) != 0; // the eight cells around y are one component
}

bool Segmentation::site_bounded(const Site& y) const { return !site_in_delta(y) && !site_in_u1(y); }

DyadicIndicator Segmentation::u0_domain(long N) const
{
    const int ell = log2_exact(N);
    long lo = LONG_MAX, hi = LONG_MIN;
    for (std::size_t k = 0; k < u1.v.size(); ++k)
        if (!u1.v[k]) {
            Site c = u1.site(k);
            for (int i = 0; i < 3; ++i) {
                lo = std::min(lo, c[i]);
                hi = std::max(hi, c[i]);
            }
        }
    if (lo > hi) throw std::runtime_error("U0 is empty");
    long P = 1;
    while (P < hi - lo + 1) P *= 2;
    auto full = [&](const Site& c) { return u1.inside(c) && !u1.at(c); };
    std::vector<std::uint8_t> codes;
    // child bit i selects the upper half along axis i
    std::function<void(const Site&, long)> emit = [&](const Site& c0, long size) {
        if (size == 1) {
            codes.push_back(full(c0) ? 1 : 0);
            return;
        }
        std::size_t start = codes.size();
        codes.push_back(2);
        long h = size / 2;
        bool uniform = true;
        int first = -1;
        for (int ch = 0; ch < 8; ++ch) {
            Site c{c0[0] + ((ch & 1) ? h : 0), c0[1] + ((ch >> 1) & 1 ? h : 0), c0[2] + ((ch >> 2) & 1 ? h : 0)};
            std::size_t at = codes.size();
            emit(c, h);
            bool leaf = codes.size() == at + 1 && codes[at] != 2;
            if (!leaf) uniform = false;
            else if (first < 0) first = codes[at];
            else if (codes[at] != first) uniform = false;
        }
        if (uniform) {
            codes.resize(start);
            codes.push_back(std::uint8_t(first));
        }
    };
    emit({lo, lo, lo}, P);
    const double s = 1.0 / double(N);
    Box support;
    support.d = 3;
    for (int i = 0; i < 3; ++i) {
        support.lo[i] = double(lo) * s;
        support.hi[i] = double(lo + P) * s;
    }
    return DyadicIndicator::from_codes(3, ell, support, codes, "coarse-grained U0");
}

Segmentation segmentation(const BlockingField& b, const ScaleConfig& c, const CompactSetSpec& A)
{
    Segmentation g;
    g.s = c.hat_spacing();
    g.r_delta = c.delta_radius();
    const long Lh = c.lhat0(), L = c.l0();
    const long s = g.s;
    g.R = (c.eval_radius() / s) * s;
    const long R = g.R;
    g.shat = Grid3({-R, -R, -R}, 2 * R + 1, 0);

    // core of A_N
    Grid3 an = lattice_blowup(A, c.N);
    g.core = an;
    for (int ax = 0; ax < 3; ++ax) window_all(g.core, ax, Lh + L, Lh + L);

    DensityCounter dc(b, Lh);
    const long long vol = dc.volume();
    const long m = 2 * (R / s) + 1;
    const double outer = (c.M + 1) * double(c.N);
    const long e = Lh + L;
    std::vector<long long> prev, cur;
    for (long a = 0; a < m; ++a) {
        long x0 = -R + a * s;
        dc.slice(x0, -R, -R, m, s, cur);
        for (long p = 0; p < m; ++p)
            for (long q = 0; q < m; ++q) {
                long long v = cur[std::size_t(p * m + q)];
                Site x{x0, -R + p * s, -R + q * s};
                if (a > 0) g.max_step = std::max(g.max_step, std::llabs(v - prev[std::size_t(p * m + q)]));
                if (p > 0) g.max_step = std::max(g.max_step, std::llabs(v - cur[std::size_t((p - 1) * m + q)]));
                if (q > 0) g.max_step = std::max(g.max_step, std::llabs(v - cur[std::size_t(p * m + q - 1)]));
                if (4 * v >= vol && 4 * v <= 3 * vol) {
                    g.shat.v[g.shat.index(x)] = 1;
                    ++g.shat_count;
                    g.shat_radius = std::max(g.shat_radius, sup(x));
                }
                bool far = false;
                for (int i = 0; i < 3; ++i) far = far || double(x[i] - e) > outer || double(x[i] + e) < -outer;
                if (far && v != vol) ++g.one_outside;
                if (g.core.inside(x) && g.core.at(x) && v != 0) ++g.zero_inside;
            }
        std::swap(prev, cur);
    }

    // cells [k, k+1)^3 inside some closed ball B(x, r), x in S^
    const long r = g.r_delta;
    const long clo = -R - r - 2;
    g.blocked = Grid3({clo, clo, clo}, 2 * (R + r + 2), 0);
    for (std::size_t k = 0; k < g.shat.v.size(); ++k)
        if (g.shat.v[k]) g.blocked.v[g.blocked.index(g.shat.site(k))] = 1;
    // blocked(k) = max of S^ over [k - r + 1, k + r]
    for (int ax = 0; ax < 3; ++ax) window_any(g.blocked, ax, r - 1, r);

    Raster ras(3, {int(g.blocked.n), int(g.blocked.n), int(g.blocked.n)}, Point{}, 1.0);
    ras.cells = g.blocked.v; // axis order is irrelevant for connectivity
    Raster comp = unbounded_complement_component(ras);
    g.u1 = g.blocked;
    g.u1.v = comp.cells;
    return g;
}

std::vector<Site> separated_selection(const Segmentation& g, long Lhat0)
{
    std::vector<Site> sel;
    for (std::size_t k = 0; k < g.shat.v.size(); ++k) {
        if (!g.shat.v[k]) continue;
        Site x = g.shat.site(k);
        bool free = true;
        for (const Site& y : sel)
            if (sup({x[0] - y[0], x[1] - y[1], x[2] - y[2]}) <= 4 * Lhat0) {
                free = false;
                break;
            }
        if (free) sel.push_back(x);
    }
    return sel;
}

bool selection_maximal(const Segmentation& g, const std::vector<Site>& sel, long Lhat0)
{
    for (std::size_t i = 0; i < sel.size(); ++i) {
        if (!g.shat.inside(sel[i]) || !g.shat.at(sel[i])) return false;
        for (std::size_t j = i + 1; j < sel.size(); ++j)
            if (sup({sel[i][0] - sel[j][0], sel[i][1] - sel[j][1], sel[i][2] - sel[j][2]}) <= 4 * Lhat0) return false;
    }
    for (std::size_t k = 0; k < g.shat.v.size(); ++k) {
        if (!g.shat.v[k]) continue;
        Site x = g.shat.site(k);
        bool covered = false;
        for (const Site& y : sel)
            if (sup({x[0] - y[0], x[1] - y[1], x[2] - y[2]}) <= 4 * Lhat0) {
                covered = true;
                break;
            }
        if (!covered) return false;
    }
    return true;
}

// ---------------------------------------------------------------- selection

BoxSelection select_blocking_boxes(const Site& x, const BlockingField& b, const ScaleConfig& c)
{
    BoxSelection out;
    out.x = x;
    const long R = c.lhat0(), L = b.L0, w = 2 * R + 1;
    std::vector<std::uint8_t> img[3];
    for (auto& m : img) m.assign(std::size_t(w * w), 0);
    std::set<Site> boundary;
    for (long a = -R; a <= R; ++a)
        for (long p = -R; p <= R; ++p)
            for (long q = -R; q <= R; ++q) {
                Site y{x[0] + a, x[1] + p, x[2] + q};
                if (b.in_u1_site(y)) continue;
                Site off{a, p, q};
                bool edge = false;
                for (int i = 0; i < 3 && !edge; ++i)
                    for (int sgn : {-1, 1}) {
                        if (std::labs(off[i] + sgn) > R) continue;
                        Site z = y;
                        z[i] += sgn;
                        if (b.in_u1_site(z)) {
                            edge = true;
                            break;
                        }
                    }
                if (!edge) continue;
                for (int i = 0; i < 3; ++i) {
                    long u = off[(i + 1) % 3] + R, v = off[(i + 2) % 3] + R;
                    img[i][std::size_t(u * w + v)] = 1;
                }
                boundary.insert({fdiv(y[0], L), fdiv(y[1], L), fdiv(y[2], L)});
            }
    for (int i = 0; i < 3; ++i) out.image[i] = std::size_t(std::count(img[i].begin(), img[i].end(), 1));
    out.axis = int(std::max_element(out.image, out.image + 3) - out.image);
    out.boundary_boxes = boundary.size();
    out.boxes_near = 1;
    for (int i = 0; i < 3; ++i) out.boxes_near *= std::size_t(fdiv(x[i] + R, L) - fdiv(x[i] - R, L) + 1);

    const long T = c.target(), kb = c.kbar();
    const int a1 = (out.axis + 1) % 3, a2 = (out.axis + 2) % 3;
    for (const Site& j : boundary) {
        if (!b.status.inside(j)) continue;
        BoxStatus st{(b.status.at(j) & 1) != 0, (b.status.at(j) & 2) != 0};
        if (!st.selectable()) continue;
        ++out.candidates;
        if (long(out.boxes.size()) >= T) continue;
        bool far = true;
        for (const Site& k : out.boxes)
            if (std::max(std::labs(j[a1] - k[a1]), std::labs(j[a2] - k[a2])) < kb) {
                far = false;
                break;
            }
        if (far) out.boxes.push_back(j);
    }
    out.ok = long(out.boxes.size()) >= T;
    if (!out.ok) {
        out.failure = out.candidates < std::size_t(T) ? "too few good boxes with many excursions on the boundary"
                                                      : "projections too crowded for the target count";
    }
    return out;
}

// ---------------------------------------------------------------- complexity

namespace {
double log2_binom(double n, double k)
{
    if (k <= 0 || k >= n) return 0;
    return (std::lgamma(n + 1) - std::lgamma(k + 1) - std::lgamma(n - k + 1)) / std::log(2.0);
}
double lattice_points(const ScaleConfig& c)
{
    long Rc = std::max(c.eval_radius(), long(std::floor((c.M + 2) * double(c.N))));
    double per = double(2 * (Rc / c.hat_spacing()) + 1);
    return per * per * per;
}
} // namespace

double complexity_bound(const ScaleConfig& c)
{
    const double Lh = double(c.lhat0()), L = double(c.l0());
    long Rc = std::max(c.eval_radius(), long(std::floor((c.M + 2) * double(c.N))));
    double pack = std::floor(std::pow((2.0 * double(Rc) + 1 + 4 * Lh) / (4 * Lh + 1), 3));
    double nmax = std::pow(std::floor(2 * Lh / L) + 2, 3);
    return 2 * lattice_points(c) + pack * (std::log2(3.0) + double(c.target()) * std::log2(nmax));
}

// ---------------------------------------------------------------- assembly

nlohmann::json CoarseGrainOutput::summary() const
{
    nlohmann::json sel = nlohmann::json::array();
    for (const BoxSelection& b : blocks) {
        nlohmann::json boxes = nlohmann::json::array();
        for (const Site& j : b.boxes) boxes.push_back({j[0], j[1], j[2]});
        sel.push_back({{"x", {b.x[0], b.x[1], b.x[2]}},
                       {"axis", b.axis},
                       {"image", {b.image[0], b.image[1], b.image[2]}},
                       {"candidates", b.candidates},
                       {"boundary_boxes", b.boundary_boxes},
                       {"boxes", boxes},
                       {"ok", b.ok},
                       {"failure", b.failure}});
    }
    return {{"stage", stage},
            {"disconnected", disconnected},
            {"L0", L0},
            {"Lhat0", Lhat0},
            {"spacing", s},
            {"delta_radius", r_delta},
            {"u1_boxes", u1_boxes},
            {"shat_count", shat_count},
            {"shat_radius", shat_radius},
            {"max_step", max_step},
            {"slow_variation", slow_variation},
            {"selected", selected.size()},
            {"maximal", maximal},
            {"failed_blocks", failed_blocks},
            {"boxes", C.size()},
            {"core_sites", core_sites},
            {"core_exposed", core_exposed},
            {"insulated", insulated},
            {"complexity_bits", tally.total()},
            {"complexity_bound", tally.bound},
            {"selections", sel}};
}

CoarseGrainOutput assemble_kappa(const BoxField& f, const ScaleConfig& c, const CompactSetSpec& A)
{
    c.validate();
    CoarseGrainOutput k;
    k.L0 = c.l0();
    k.Lhat0 = c.lhat0();
    k.s = c.hat_spacing();
    k.r_delta = c.delta_radius();
    BlockingField b = blocking_field(f, c);
    k.u1_boxes = b.u1_count();

    // disconnection as seen by the boxes: no box of U^1 inside A_N
    Grid3 an = lattice_blowup(A, c.N);
    const long L = k.L0;
    k.disconnected = true;
    for (long j0 = fdiv(an.lo[0], L); j0 <= fdiv(an.lo[0] + an.n - 1, L) && k.disconnected; ++j0)
        for (long j1 = fdiv(an.lo[1], L); j1 <= fdiv(an.lo[1] + an.n - 1, L) && k.disconnected; ++j1)
            for (long j2 = fdiv(an.lo[2], L); j2 <= fdiv(an.lo[2] + an.n - 1, L); ++j2) {
                Site j{j0, j1, j2};
                if (!b.boxes.inside(j) || !b.boxes.at(j)) continue;
                bool inside = true;
                for (long a = 0; a < L && inside; ++a)
                    for (long p = 0; p < L && inside; ++p)
                        for (long q = 0; q < L; ++q) {
                            Site y{j0 * L + a, j1 * L + p, j2 * L + q};
                            if (!an.inside(y) || !an.at(y)) {
                                inside = false;
                                break;
                            }
                        }
                if (inside) {
                    k.disconnected = false;
                    break;
                }
            }
    if (!k.disconnected) {
        k.stage = "no interface";
        return k;
    }

    k.seg = segmentation(b, c, A);
    k.shat_count = k.seg.shat_count;
    k.shat_radius = k.seg.shat_radius;
    k.max_step = k.seg.max_step;
    const long w = 2 * k.Lhat0 + 1;
    k.slow_variation = k.max_step <= k.s * w * w;
    k.selected = separated_selection(k.seg, k.Lhat0);
    k.maximal = selection_maximal(k.seg, k.selected, k.Lhat0);

    k.blocks.resize(k.selected.size());
    parallel_for(k.selected.size(), [&](std::size_t i) { k.blocks[i] = select_blocking_boxes(k.selected[i], b, c); });
    const double N = double(c.N);
    k.tally.bits_segmentation = 2 * lattice_points(c);
    for (const BoxSelection& s : k.blocks) {
        if (!s.ok) ++k.failed_blocks;
        k.tally.bits_boxes += std::log2(3.0) + log2_binom(double(s.boxes_near), double(c.target()));
        for (const Site& j : s.boxes) {
            Site z{j[0] * L, j[1] * L, j[2] * L};
            k.C.push_back(z);
            Box q;
            q.d = 3;
            for (int i = 0; i < 3; ++i) {
                q.lo[i] = double(z[i]) / N;
                q.hi[i] = double(z[i] + L) / N;
            }
            k.sigma.push_back(q);
        }
    }
    k.tally.bound = complexity_bound(c);

    for (std::size_t i = 0; i < k.seg.core.v.size(); ++i) {
        if (!k.seg.core.v[i]) continue;
        ++k.core_sites;
        Site y = k.seg.core.site(i);
        if (!k.seg.site_bounded(y)) ++k.core_exposed;
    }
    k.insulated = k.core_sites > 0 && k.core_exposed == 0;

    if (k.selected.empty()) k.stage = "segmentation";
    else if (k.failed_blocks > 0) k.stage = "selection";
    else if (!k.insulated) k.stage = "insulation";
    return k;
}

// ---------------------------------------------------------------- audits

PathAudit path_meets_interface(const CoarseGrainOutput& k, const ScaleConfig& c, const CompactSetSpec&,
                               std::size_t n_paths, std::uint64_t seed)
{
    PathAudit a;
    std::vector<Site> core;
    for (std::size_t i = 0; i < k.seg.core.v.size(); ++i)
        if (k.seg.core.v[i]) core.push_back(k.seg.core.site(i));
    if (core.empty()) return a;
    const long far = long(std::ceil((c.M + 2) * double(c.N)));
    std::vector<std::uint8_t> missed(n_paths, 0);
    parallel_for(n_paths, [&](std::size_t p) {
        Stream rng = derive_stream(seed, "interface-path", p);
        Site y = core[std::size_t(rng() % core.size())];
        // random direction with an outward drift
        double dir[3];
        for (double& v : dir) v = rng.normal();
        bool met = false;
        while (sup(y) < far) {
            if (k.seg.site_in_delta(y)) {
                met = true;
                break;
            }
            int i = int(rng() % 3);
            double push = dir[i] / (std::fabs(dir[0]) + std::fabs(dir[1]) + std::fabs(dir[2]));
            y[i] += rng.uniform() < 0.5 + 0.45 * push ? 1 : -1;
        }
        missed[p] = !met;
    });
    a.paths = n_paths;
    a.missed = std::size_t(std::count(missed.begin(), missed.end(), 1));
    return a;
}

CompactSetSpec eroded(const CompactSetSpec& A, double r)
{
    if (!A.all_boxes()) throw std::invalid_argument("eroded: boxes only");
    CompactSetSpec out;
    out.d = A.d;
    for (const Primitive& p : A.parts) {
        Primitive q = p;
        bool empty = false;
        for (int i = 0; i < A.d; ++i) {
            q.lo[i] += r;
            q.hi[i] -= r;
            empty = empty || q.lo[i] > q.hi[i];
        }
        if (!empty) out.parts.push_back(q);
    }
    return out;
}

PorosityAudit porosity(const CoarseGrainOutput& k, const ScaleConfig& c, std::size_t n_points,
                       std::size_t n_paths, std::uint64_t seed)
{
    PorosityAudit out;
    if (k.sigma.empty()) return out;
    // faces between U_1 cells and the rest
    std::vector<std::pair<Site, int>> faces;
    const Grid3& u = k.seg.u1;
    for (std::size_t i = 0; i < u.v.size(); ++i) {
        if (u.v[i]) continue;
        Site cell = u.site(i);
        for (int ax = 0; ax < 3; ++ax)
            for (int sgn : {-1, 1}) {
                Site nb = cell;
                nb[ax] += sgn;
                if (u.inside(nb) && u.at(nb)) faces.push_back({cell, ax * 2 + (sgn > 0)});
            }
    }
    if (faces.empty()) return out;
    CompactSetSpec s;
    s.d = 3;
    for (const Box& b : k.sigma) s.add_box(b);
    ObstacleSet target(s);
    const double N = double(c.N), r = 10.0 * double(k.Lhat0) / N;
    Stream pick = derive_stream(seed, "porosity-points", 0);
    out.points = std::min(n_points, faces.size());
    for (std::size_t m = 0; m < out.points; ++m) {
        auto [cell, code] = faces[std::size_t(pick() % faces.size())];
        int ax = code / 2;
        Point x = make_point({(double(cell[0]) + 0.5) / N, (double(cell[1]) + 0.5) / N, (double(cell[2]) + 0.5) / N});
        x[ax] += (code & 1 ? 0.5 : -0.5) / N;
        HitOptions opt;
        opt.n_paths = n_paths;
        opt.seed = seed;
        opt.kind = "porosity-" + std::to_string(m);
        HitEstimate h = hit_before(x, target, Fence::sup_ball(x, r), opt);
        if (h.p < out.min_p) {
            out.min_p = h.p;
            out.se = h.se;
        }
    }
    return out;
}

nlohmann::json BoundAssembly::to_json() const
{
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    return {{"factor", num(factor)},           {"cap_C", num(cap_C)},
            {"cap_sigma", num(cap_sigma)},     {"cap_A_prime", num(cap_a)},
            {"per_kappa", num(per_kappa)},     {"sigma_form", num(sigma_form)},
            {"limit_form", num(limit_form)},   {"cap_ratio", num(cap_ratio)},
            {"hitting_bound", num(hitting_bound)}, {"empirical", num(empirical)},
            {"vacuous", vacuous}};
}

BoundAssembly bound_assembly(const CoarseGrainOutput& k, const ScaleConfig& c, const CompactSetSpec& A_prime,
                             double p_hat)
{
    BoundAssembly b;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const double su = std::sqrt(c.u), sg = std::sqrt(c.gamma), N = double(c.N);
    const double d = double(c.d);
    if (c.u_bar > 0) {
        double den = 1 - c.eps_tilde * (std::sqrt(c.u_bar / c.u) - 1);
        b.factor = (sg - su / den) * (sg - su);
        b.limit_form = -std::pow(std::sqrt(c.u_bar) - su, 2);
    } else {
        b.factor = nan;
        b.limit_form = nan;
    }
    b.vacuous = !(b.factor > 0);
    b.empirical = p_hat > 0 ? -std::log(p_hat) / std::pow(N, d - 2) : nan;
    if (k.C.empty()) {
        b.cap_C = b.cap_sigma = b.per_kappa = b.sigma_form = b.cap_ratio = b.hitting_bound = nan;
        b.cap_a = nan;
        return b;
    }
    b.cap_C = discrete_box_set_capacity(k.L0, k.C).eq.capacity;
    // one panel per box face on the coarse level: Sigma is sparse and wide
    EquilibriumSolution sig = continuum_capacity(k.sigma, double(k.L0) / N);
    b.cap_sigma = sig.capacity;
    // A' rounded inward to a dyadic grid at a quarter of its smallest side,
    // so the mesh stays small; a subset only lowers cap(A')
    double smallest = INFINITY;
    for (const Primitive& p : A_prime.parts)
        for (int i = 0; i < 3; ++i) smallest = std::min(smallest, p.hi[i] - p.lo[i]);
    const double h = std::ldexp(1.0, int(std::floor(std::log2(smallest / 4))));
    std::vector<Box> ab;
    for (const Primitive& p : A_prime.parts) {
        Box q;
        q.d = 3;
        bool empty = false;
        for (int i = 0; i < 3; ++i) {
            q.lo[i] = std::ceil(p.lo[i] / h - 1e-9) * h;
            q.hi[i] = std::floor(p.hi[i] / h + 1e-9) * h;
            empty = empty || q.hi[i] <= q.lo[i];
        }
        if (!empty) ab.push_back(q);
    }
    if (ab.empty()) throw std::invalid_argument("bound_assembly: A' too thin");
    EquilibriumSolution ea = continuum_capacity(ab);
    b.cap_a = ea.capacity;
    b.limit_form *= b.cap_a / d;
    const double scaled = std::pow(N, d - 2) * b.cap_sigma;
    b.per_kappa = b.factor * std::min(b.cap_C, scaled / d);
    b.sigma_form = -b.factor * b.cap_sigma / d;
    b.cap_ratio = d * b.cap_C / scaled;
    b.hitting_bound = capacity_hitting_lower_bound(ea, sig).bound;
    return b;
}

// ---------------------------------------------------------------- scale audit

std::vector<AuditLine> scale_audit(const ScaleConfig& c0, const std::vector<double>& Ns,
                                   const std::function<double(double)>& rho)
{
    std::vector<AuditLine> out;
    if (Ns.empty()) return out;
    const double d = double(c0.d);
    struct Row {
        double N, g, L0, Lh, NL, iii, ii, r421, r424, cx;
    };
    std::vector<Row> rows;
    for (double Nd : Ns) {
        ScaleConfig c = c0;
        c.N = long(Nd);
        c.L0 = c.Lhat0 = c.spacing = 0;
        Row r{};
        r.N = Nd;
        r.g = c.gamma_N();
        r.L0 = double(c.l0());
        r.Lh = double(c.lhat0());
        r.NL = ScaleConfig::N_L(r.L0);
        r.iii = std::pow(r.g, (d + 1) / 2) / (std::log(Nd) * std::pow(Nd, -(d - 2)));
        double rs = rho ? rho(std::pow(Nd * std::log(Nd), 1 / (d - 1))) : 1.0;
        r.ii = std::pow(r.g, 2 * d) / rs;
        double rl = rho ? rho(r.L0) : 1.0;
        r.r421 = rl * std::pow(r.NL / r.L0, d - 1) / std::pow(r.Lh / r.L0, d - 1);
        r.r424 = std::pow(r.Lh / r.L0, d - 1);
        r.cx = complexity_bound(c) / std::pow(Nd, d - 2);
        rows.push_back(r);
    }
    auto trend = [&](auto get, bool increasing, bool strict) {
        for (std::size_t i = 1; i < rows.size(); ++i) {
            double a = get(rows[i - 1]), b = get(rows[i]);
            if (increasing ? (strict ? !(b > a) : !(b >= a)) : (strict ? !(b < a) : !(b <= a))) return false;
        }
        return true;
    };
    auto list = [&](auto get) {
        std::string s;
        for (const Row& r : rows) s += (s.empty() ? "" : " ") + fmt_num(get(r));
        return s;
    };
    auto G = [](const Row& r) { return r.g; };
    bool le1 = true;
    for (const Row& r : rows) le1 = le1 && r.g <= 1;
    out.push_back({"gamma_N <= 1", le1, "gamma_N: " + list(G)});
    out.push_back({"gamma_N^(2d) / rho_*((N log N)^(1/(d-1))) grows",
                   rho ? trend([](const Row& r) { return r.ii; }, true, true) : false,
                   rho ? list([](const Row& r) { return r.ii; }) : "no rho stub; gamma_N^(2d): " + list([](const Row& r) { return r.ii; })});
    out.push_back({"gamma_N^((d+1)/2) N^(d-2) / log N grows", trend([](const Row& r) { return r.iii; }, true, true),
                   list([](const Row& r) { return r.iii; })});
    out.push_back({"gamma_N decreases", trend(G, false, false) && rows.back().g < rows.front().g, list(G)});
    bool order = true;
    for (const Row& r : rows) order = order && r.L0 < r.Lh;
    out.push_back({"L0 < Lhat0", order, "L0: " + list([](const Row& r) { return r.L0; }) +
                                            "; Lhat0: " + list([](const Row& r) { return r.Lh; })});
    bool nl = true;
    for (const Row& r : rows) nl = nl && r.NL >= 10 * (c0.M + 1) * r.N;
    out.push_back({"N_L0 >= 10 (M+1) N", nl,
                   "N_L0 / (10 (M+1) N): " + list([&](const Row& r) { return r.NL / (10 * (c0.M + 1) * r.N); })});
    out.push_back({"rho(L0) (N_L0/L0)^(d-1) / (Lhat0/L0)^(d-1) decreases",
                   rho ? trend([](const Row& r) { return r.r421; }, false, true) : false,
                   std::string(rho ? "" : "rho factored out: ") + list([](const Row& r) { return r.r421; })});
    out.push_back({"(Lhat0/L0)^(d-1) grows", trend([](const Row& r) { return r.r424; }, true, true),
                   list([](const Row& r) { return r.r424; })});
    out.push_back({"complexity bound / N^(d-2) decreases", trend([](const Row& r) { return r.cx; }, false, true),
                   list([](const Row& r) { return r.cx; })});
    return out;
}

} // namespace solidify
