#include "solidify/potential.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>

#include "solidify/parallel.hpp"
#include "solidify/rng.hpp"

namespace solidify {

namespace {

double unit_cube_capacity()
{
    static const double cap = cube_capacity(1.0, 16, 3).capacity;
    return cap;
}

const EquilibriumSolution& cached_box(long L)
{
    static std::mutex m;
    static std::map<long, EquilibriumSolution> cache;
    std::lock_guard<std::mutex> lock(m);
    auto it = cache.find(L);
    if (it == cache.end()) it = cache.emplace(L, discrete_box_capacity(L)).first;
    return it->second;
}

double dg(const Point& a, const Point& b)
{
    double r2 = 0;
    for (int i = 0; i < 3; ++i) r2 += (a[i] - b[i]) * (a[i] - b[i]);
    return 3 * green_continuum(3, std::sqrt(r2));
}

} // namespace

GreenMc srw_green_mc(std::size_t walks, long R, std::uint64_t seed)
{
    std::vector<double> v(walks);
    parallel_for(walks, [&](std::size_t k) {
        Stream rng = derive_stream(seed, "srw-green", k);
        Site x{0, 0, 0};
        double visits = 1;
        while (x[0] * x[0] + x[1] * x[1] + x[2] * x[2] <= R * R) {
            int m = int(rng.uniform() * 6);
            x[m >> 1] += (m & 1) ? 1 : -1;
            visits += x[0] == 0 && x[1] == 0 && x[2] == 0;
        }
        v[k] = visits + LatticeGreen::far_field(x);
    });
    GreenMc out;
    out.walks = walks;
    double s = 0, s2 = 0;
    for (double a : v) {
        s += a;
        s2 += a * a;
    }
    out.value = s / double(walks);
    out.se = std::sqrt(std::max(0.0, s2 / double(walks) - out.value * out.value) / double(walks));
    return out;
}

double a_L(long L)
{
    return 3.0 * cached_box(L).capacity / (double(L) * unit_cube_capacity());
}

EtaProbe eta_probe(long K, long L, std::size_t n_pairs, std::uint64_t seed)
{
    if (K < 1 || L < 1) throw std::invalid_argument("eta_probe: K, L >= 1");
    const LatticeGreen& g = LatticeGreen::instance();
    EtaProbe best;
    auto consider = [&](const Site& x1, const Site& x2, const Point& y1, const Point& y2) {
        double gt = g(x2[0] - x1[0], x2[1] - x1[1], x2[2] - x1[2]);
        double gc = dg(y1, y2);
        double e = std::max(gt / gc, gc / gt);
        if (e > best.eta) best = {e, x1, x2, y1, y2};
    };
    // z1 = 0, z2 = L m with |m|_inf >= K
    std::vector<Site> dirs = {{K, 0, 0}, {K, K, 0}, {K, K, K}, {K, K / 2, 0}};
    for (const Site& m : dirs) {
        Site z2{m[0] * L, m[1] * L, m[2] * L};
        for (int c1 = 0; c1 < 8; ++c1)
            for (int c2 = 0; c2 < 8; ++c2) {
                Site x1, x2;
                Point y1{}, y2{};
                for (int i = 0; i < 3; ++i) {
                    x1[i] = ((c1 >> i) & 1) * (L - 1);
                    x2[i] = z2[i] + ((c2 >> i) & 1) * (L - 1);
                }
                // continuum points at corners too, on either side
                for (int e1 = 0; e1 < 8; ++e1)
                    for (int e2 = 0; e2 < 8; ++e2) {
                        for (int i = 0; i < 3; ++i) {
                            y1[i] = double(((e1 >> i) & 1) * L);
                            y2[i] = double(z2[i] + ((e2 >> i) & 1) * L);
                        }
                        consider(x1, x2, y1, y2);
                    }
            }
    }
    Stream rng = derive_stream(seed, "eta-probe", std::uint64_t(K * 1000003 + L));
    for (std::size_t k = 0; k < n_pairs; ++k) {
        Site m{};
        int axis = int(rng.uniform() * 3);
        for (int i = 0; i < 3; ++i)
            m[i] = i == axis ? K + long(rng.uniform() * 3)
                             : long(std::floor((2 * rng.uniform() - 1) * (K + 1)));
        Site x1, x2;
        Point y1{}, y2{};
        for (int i = 0; i < 3; ++i) {
            long z2 = m[i] * L;
            x1[i] = long(rng.uniform() * L);
            x2[i] = z2 + long(rng.uniform() * L);
            y1[i] = rng.uniform() * L;
            y2[i] = double(z2) + rng.uniform() * L;
        }
        consider(x1, x2, y1, y2);
    }
    return best;
}

std::vector<std::vector<Site>> random_box_configs(long K, long L, std::size_t n_boxes,
                                                  std::size_t n_configs, std::uint64_t seed)
{
    std::vector<std::vector<Site>> out;
    const long span = 3 * K;
    for (std::size_t c = 0; c < n_configs; ++c) {
        Stream rng = derive_stream(seed, "box-config", c);
        std::vector<Site> m;
        for (int tries = 0; m.size() < n_boxes; ++tries) {
            if (tries > 100000) throw std::runtime_error("random_box_configs: cannot place boxes");
            Site cand;
            for (int i = 0; i < 3; ++i) cand[i] = long(rng.uniform() * (span + 1));
            bool ok = true;
            for (const Site& o : m) {
                long sep = 0;
                for (int i = 0; i < 3; ++i) sep = std::max(sep, std::labs(o[i] - cand[i]));
                ok = ok && sep >= K;
            }
            if (ok) m.push_back(cand);
        }
        for (Site& s : m)
            for (long& v : s) v *= L;
        out.push_back(m);
    }
    return out;
}

RatioRow ratio_row(long K, long L, const std::vector<Site>& bases, std::size_t config,
                   std::uint64_t seed)
{
    for (std::size_t i = 0; i < bases.size(); ++i)
        for (std::size_t j = i + 1; j < bases.size(); ++j) {
            long sep = 0;
            for (int k = 0; k < 3; ++k) sep = std::max(sep, std::labs(bases[i][k] - bases[j][k]));
            if (sep < K * L) throw std::invalid_argument("ratio_row: separation |z-z'| >= KL violated");
        }
    RatioRow row;
    row.K = K;
    row.L = L;
    row.config = config;
    row.boxes = bases.size();
    BoxSetSolution disc = discrete_box_set_capacity(L, bases);
    row.cap_discrete = disc.eq.capacity;
    std::vector<Point> corners;
    for (const Site& b : bases) corners.push_back(make_point({double(b[0]), double(b[1]), double(b[2])}));
    row.cap_continuum = cube_set_capacity(double(L), corners).capacity;
    row.ratio = 3.0 * row.cap_discrete / row.cap_continuum;
    row.a_L = a_L(L);
    row.eta = eta_probe(K, L, 2000, seed).eta;
    // mu~(y) = sum_B e~_C(B) e~_B(y) / cap~(B)
    const EquilibriumSolution& single = cached_box(L);
    const std::size_t n = single.sites.size();
    for (std::size_t b = 0; b < bases.size(); ++b)
        for (std::size_t k = 0; k < n; ++k) {
            double mu = disc.box_mass[b] * single.weights[k] / single.capacity;
            double e = disc.eq.weights[disc.offset[b] + k];
            if (mu > 0) row.delta = std::max(row.delta, std::fabs(e / mu - 1));
        }
    row.lower = std::min(row.a_L, 1 / row.eta) / (1 + row.delta);
    row.upper = std::max(row.a_L, row.eta) / (1 - row.delta);
    row.in_sandwich = row.lower <= row.ratio && row.ratio <= row.upper;
    return row;
}

std::vector<RatioRow> ratio_harness(const std::vector<long>& Ks, const std::vector<long>& Ls,
                                    std::size_t n_boxes, std::size_t n_configs, std::uint64_t seed)
{
    std::vector<RatioRow> rows;
    for (long K : Ks)
        for (long L : Ls) {
            auto configs = random_box_configs(K, L, n_boxes, n_configs, seed);
            for (std::size_t c = 0; c < configs.size(); ++c)
                rows.push_back(ratio_row(K, L, configs[c], c, seed));
        }
    return rows;
}

} // namespace solidify
