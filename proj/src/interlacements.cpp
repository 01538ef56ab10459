#include "solidify/interlacements.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <deque>
#include <map>
#include <mutex>
#include <random>

#include "solidify/parallel.hpp"
#include "solidify/rng.hpp"

namespace solidify {

bool LatticeBox::contains(const LatticeBox& b) const
{
    for (int i = 0; i < 3; ++i)
        if (b.lo[i] < lo[i] || b.lo[i] + b.side[i] > lo[i] + side[i]) return false;
    return true;
}

Site LatticeBox::site(std::size_t k) const
{
    Site x;
    x[2] = lo[2] + long(k % std::size_t(side[2]));
    k /= std::size_t(side[2]);
    x[1] = lo[1] + long(k % std::size_t(side[1]));
    x[0] = lo[0] + long(k / std::size_t(side[1]));
    return x;
}

long LatticeBox::diameter() const { return std::max({side[0], side[1], side[2]}) - 1; }

LatticeBox LatticeBox::dilated(long r) const
{
    LatticeBox b = *this;
    for (int i = 0; i < 3; ++i) {
        b.lo[i] -= r;
        b.side[i] += 2 * r;
    }
    return b;
}

std::uint8_t StepSource::next()
{
    for (;;) {
        if (left_ == 0) {
            bits_ = rng_();
            left_ = 21;
        }
        auto c = std::uint8_t(bits_ & 7);
        bits_ >>= 3;
        --left_;
        if (c < 6) return c;
    }
}

std::vector<Site> sample_srw(const Site& x0, std::size_t n_steps, std::uint64_t seed, const LatticeBox* box)
{
    if (n_steps == 0 && !box) throw std::invalid_argument("sample_srw: need n_steps or a box");
    Stream rng = derive_stream(seed, "srw", 0);
    StepSource steps(rng);
    std::vector<Site> path{x0};
    Site x = x0;
    for (std::size_t n = 0; n_steps == 0 || n < n_steps; ++n) {
        if (box && !box->contains(x)) break;
        apply_step(x, steps.next());
        path.push_back(x);
    }
    return path;
}

namespace {

// equilibrium measure of the cube [0, L)^3, as a dense array
struct CubeMeasure {
    double capacity = 0;
    std::vector<double> weight;
};

const CubeMeasure& cube_measure(long L)
{
    static std::mutex m;
    static std::map<long, CubeMeasure> cache;
    std::lock_guard<std::mutex> lock(m);
    auto it = cache.find(L);
    if (it != cache.end()) return it->second;
    EquilibriumSolution eq = discrete_box_capacity(L);
    CubeMeasure c;
    c.capacity = eq.capacity;
    LatticeBox b = LatticeBox::cube({0, 0, 0}, L);
    c.weight.assign(b.size(), 0.0);
    for (std::size_t k = 0; k < eq.sites.size(); ++k)
        c.weight[b.index(eq.sites[k])] = std::max(0.0, eq.weights[Eigen::Index(k)]);
    return cache.emplace(L, std::move(c)).first->second;
}

bool is_cube(const LatticeBox& b) { return b.side[0] == b.side[1] && b.side[1] == b.side[2]; }

long sup_abs(const Site& x) { return std::max({std::labs(x[0]), std::labs(x[1]), std::labs(x[2])}); }

} // namespace

std::size_t InterlacementSample::count(double u) const
{
    auto it = std::upper_bound(trajectories.begin(), trajectories.end(), u,
                               [](double v, const Trajectory& t) { return v < t.label; });
    return std::size_t(it - trajectories.begin());
}

void InterlacementSample::walk(std::size_t k, const std::function<bool(const Site&)>& f) const
{
    for (const Segment& g : trajectories[k].segments) {
        Site x = g.start;
        if (!f(x)) return;
        for (std::uint8_t c : g.steps) {
            apply_step(x, c);
            if (!f(x)) return;
        }
    }
}

InterlacementSample sample_interlacement(double u_max, const LatticeBox& window, long halo,
                                         std::uint64_t seed)
{
    if (!(u_max > 0)) throw std::invalid_argument("sample_interlacement: u > 0");
    if (!is_cube(window)) throw std::invalid_argument("sample_interlacement: window must be a cube");
    const long diam = window.diameter();
    if (halo == 0) halo = std::max(4 * diam, 4L);
    if (halo < 2 * diam) throw std::invalid_argument("sample_interlacement: halo < 2 diam(W)");
    const CubeMeasure& cm = cube_measure(window.side[0]);

    InterlacementSample s;
    s.u_max = u_max;
    s.window = window;
    s.halo = halo;
    s.halo_box = window.dilated(halo);
    s.cap_window = cm.capacity;
    s.seed = seed;

    std::vector<double> cdf(cm.weight.size());
    double acc = 0;
    for (std::size_t k = 0; k < cm.weight.size(); ++k) cdf[k] = acc += cm.weight[k];
    std::vector<std::size_t> support;
    for (std::size_t k = 0; k < cm.weight.size(); ++k)
        if (cm.weight[k] > 0) support.push_back(k);
    const LatticeGreen& green = LatticeGreen::instance();
    auto kernel = [&](const Site& y, std::size_t k) {
        Site z = window.site(k);
        return green(y[0] - z[0], y[1] - z[1], y[2] - z[2]) * cm.weight[k];
    };
    {
        Site y = window.lo;
        y[0] -= halo + 1;
        double h = 0;
        for (std::size_t k : support) h += kernel(y, k);
        s.return_bound = h;
    }

    Stream count_rng = derive_stream(seed, "interlacement-count", 0);
    std::poisson_distribution<long> poisson(u_max * cm.capacity);
    const auto n = std::size_t(poisson(count_rng));
    s.trajectories.resize(n);
    parallel_for(n, [&](std::size_t i) {
        Stream rng = derive_stream(seed, "interlacement", i);
        Trajectory& t = s.trajectories[i];
        t.label = u_max * rng.uniform();
        std::size_t k = std::size_t(std::lower_bound(cdf.begin(), cdf.end(), rng.uniform() * acc) - cdf.begin());
        k = std::min(k, cdf.size() - 1);
        Site x = window.site(k);
        StepSource steps(rng);
        std::vector<double> w(support.size());
        for (int seg = 0;; ++seg) {
            t.segments.push_back({x, {}});
            std::vector<std::uint8_t>& st = t.segments.back().steps;
            while (s.halo_box.contains(x)) {
                std::uint8_t c = steps.next();
                apply_step(x, c);
                st.push_back(c);
            }
            if (seg >= 1000) {
                t.cut = true;
                break;
            }
            double h = 0;
            for (std::size_t j = 0; j < support.size(); ++j) w[j] = h += kernel(x, support[j]);
            double r = rng.uniform();
            if (r >= h) break;
            std::size_t j = std::size_t(std::upper_bound(w.begin(), w.end(), r) - w.begin());
            x = window.site(support[std::min(j, support.size() - 1)]);
        }
    });
    for (const Trajectory& t : s.trajectories) s.returns += t.segments.size() - 1;
    std::sort(s.trajectories.begin(), s.trajectories.end(),
              [](const Trajectory& a, const Trajectory& b) { return a.label < b.label; });
    s.first_label.assign(window.size(), std::numeric_limits<double>::infinity());
    // trajectories are label-sorted: the first visit wins
    for (std::size_t k = 0; k < n; ++k) {
        double lab = s.trajectories[k].label;
        s.walk(k, [&](const Site& x) {
            if (window.contains(x)) {
                double& f = s.first_label[window.index(x)];
                f = std::min(f, lab);
            }
            return true;
        });
    }
    return s;
}

bool disconnect_detect(const std::function<bool(const Site&)>& vacant, const std::vector<Site>& A, long R)
{
    if (A.empty()) return true;
    LatticeBox box = LatticeBox::cube({-R, -R, -R}, 2 * R + 1);
    std::vector<std::uint8_t> seen(box.size(), 0);
    std::deque<Site> queue;
    for (const Site& a : A) {
        if (!box.contains(a) || !vacant(a) || seen[box.index(a)]) continue;
        if (sup_abs(a) == R) return false;
        seen[box.index(a)] = 1;
        queue.push_back(a);
    }
    while (!queue.empty()) {
        Site x = queue.front();
        queue.pop_front();
        for (std::uint8_t c = 0; c < 6; ++c) {
            Site y = x;
            apply_step(y, c);
            if (!box.contains(y) || seen[box.index(y)] || !vacant(y)) continue;
            if (sup_abs(y) == R) return false;
            seen[box.index(y)] = 1;
            queue.push_back(y);
        }
    }
    return true;
}

long sphere_radius(double M, double N) { return long(std::floor(M * N)); }

std::vector<Site> blow_up(const CompactSetSpec& A, double N)
{
    if (A.d != 3) throw std::invalid_argument("blow_up: d = 3");
    std::vector<Site> out;
    if (A.parts.empty()) return out;
    Site lo, hi;
    for (int i = 0; i < 3; ++i) {
        double a = INFINITY, b = -INFINITY;
        for (const Primitive& p : A.parts) {
            a = std::min(a, p.lo[i] - p.rho);
            b = std::max(b, p.hi[i] + p.rho);
        }
        lo[i] = long(std::floor(a * N));
        hi[i] = long(std::ceil(b * N));
    }
    for (long x = lo[0]; x <= hi[0]; ++x)
        for (long y = lo[1]; y <= hi[1]; ++y)
            for (long z = lo[2]; z <= hi[2]; ++z)
                if (A.contains(make_point({x / N, y / N, z / N}))) out.push_back({x, y, z});
    return out;
}

namespace {

std::vector<Site> checked_blow_up(const CompactSetSpec& A, double M, double N, long* R)
{
    *R = sphere_radius(M, N);
    std::vector<Site> a = blow_up(A, N);
    for (const Site& x : a)
        if (sup_abs(x) >= *R) throw std::invalid_argument("disconnection: A_N meets S_N, N below N0(A,M)");
    return a;
}

} // namespace

std::vector<std::pair<std::size_t, std::size_t>> path_excursions(const std::vector<Site>& path,
                                                                 const BoxTriple& t)
{
    std::vector<std::pair<std::size_t, std::size_t>> out;
    LatticeBox D = t.D(), U = t.U();
    bool in = false;
    std::size_t begin = 0;
    for (std::size_t j = 0; j < path.size(); ++j) {
        if (!in && D.contains(path[j])) {
            in = true;
            begin = j;
        } else if (in && !U.contains(path[j])) {
            in = false;
            out.push_back({begin, j});
        }
    }
    return out;
}

std::vector<Excursion> excursions(const InterlacementSample& s, const BoxTriple& t)
{
    LatticeBox D = t.D(), U = t.U();
    if (!U.contains(D)) throw std::invalid_argument("excursions: need K >= 5 so that D_z lies in U_z");
    if (!s.window.contains(D)) throw std::invalid_argument("excursions: D_z outside the window");
    if (!s.halo_box.contains(U.dilated(1))) throw std::invalid_argument("excursions: halo smaller than U_z");
    std::vector<Excursion> out;
    for (std::size_t k = 0; k < s.trajectories.size(); ++k) {
        bool in = false;
        std::size_t j = 0, begin = 0;
        s.walk(k, [&](const Site& x) {
            if (!in && D.contains(x)) {
                in = true;
                begin = j;
            } else if (in && !U.contains(x)) {
                in = false;
                out.push_back({k, s.trajectories[k].label, begin, j});
            }
            ++j;
            return true;
        });
    }
    return out;
}

std::size_t excursion_count(const InterlacementSample& s, const BoxTriple& t, double u)
{
    std::size_t n = 0;
    for (const Excursion& e : excursions(s, t)) n += e.label <= u;
    return n;
}

namespace {

// visits the sites of one excursion
void excursion_sites(const InterlacementSample& s, const Excursion& e, const std::function<void(const Site&)>& f)
{
    std::size_t j = 0;
    s.walk(e.traj, [&](const Site& x) {
        if (j >= e.begin) f(x);
        return ++j <= e.end;
    });
}

// Components of {x in box : free(x)}; returns labels (0 = not free) and count.
std::vector<int> components(const LatticeBox& box, const std::function<bool(const Site&)>& free, int* count)
{
    std::vector<int> lab(box.size(), 0);
    int n = 0;
    std::vector<Site> stack;
    for (std::size_t k = 0; k < box.size(); ++k) {
        if (lab[k]) continue;
        Site x = box.site(k);
        if (!free(x)) continue;
        lab[k] = ++n;
        stack.push_back(x);
        while (!stack.empty()) {
            Site y = stack.back();
            stack.pop_back();
            for (std::uint8_t c = 0; c < 6; ++c) {
                Site z = y;
                apply_step(z, c);
                if (!box.contains(z)) continue;
                std::size_t i = box.index(z);
                if (lab[i] || !free(z)) continue;
                lab[i] = n;
                stack.push_back(z);
            }
        }
    }
    *count = n;
    return lab;
}

// large clusters of box \ E: one representative site each
std::vector<Site> large_clusters(const LatticeBox& box, const std::function<bool(const Site&)>& free,
                                 long min_diam, long* max_diam)
{
    int n = 0;
    std::vector<int> lab = components(box, free, &n);
    std::vector<Site> lo(std::size_t(n) + 1, Site{LONG_MAX, LONG_MAX, LONG_MAX});
    std::vector<Site> hi(std::size_t(n) + 1, Site{LONG_MIN, LONG_MIN, LONG_MIN});
    std::vector<Site> rep(std::size_t(n) + 1);
    for (std::size_t k = 0; k < lab.size(); ++k) {
        if (!lab[k]) continue;
        Site x = box.site(k);
        auto c = std::size_t(lab[k]);
        rep[c] = x;
        for (int i = 0; i < 3; ++i) {
            lo[c][i] = std::min(lo[c][i], x[i]);
            hi[c][i] = std::max(hi[c][i], x[i]);
        }
    }
    std::vector<Site> out;
    *max_diam = -1;
    for (std::size_t c = 1; c <= std::size_t(n); ++c) {
        long d = std::max({hi[c][0] - lo[c][0], hi[c][1] - lo[c][1], hi[c][2] - lo[c][2]});
        *max_diam = std::max(*max_diam, d);
        if (d >= min_diam) out.push_back(rep[c]);
    }
    return out;
}

} // namespace

std::string BoxClassification::flags() const
{
    std::string f;
    f += cluster ? 'i' : '-';
    f += connected ? 'c' : '-';
    f += local_time ? 't' : '-';
    f += determined ? 'd' : '-';
    return f;
}

BoxClassification classify_box(const InterlacementSample& s, const BoxTriple& t, const GoodParams& p)
{
    if (!(p.alpha > p.beta && p.beta > p.gamma && p.gamma > 0))
        throw std::invalid_argument("classify_box: need alpha > beta > gamma > 0");
    const CubeMeasure& cm = cube_measure(7 * t.L);
    BoxClassification r;
    r.cap_D = cm.capacity;
    r.n_alpha = std::size_t(std::floor(p.alpha * cm.capacity));
    r.n_beta = std::size_t(std::floor(p.beta * cm.capacity));
    std::vector<Excursion> ex = excursions(s, t);
    r.recorded = ex.size();
    r.determined = r.recorded >= r.n_alpha;

    LatticeBox D = t.D();
    std::vector<std::uint8_t> Ea(D.size(), 0), Eb(D.size(), 0);
    const std::size_t na = std::min(r.n_alpha, ex.size()), nb = std::min(r.n_beta, ex.size());
    for (std::size_t k = 0; k < na; ++k)
        excursion_sites(s, ex[k], [&](const Site& x) {
            if (!D.contains(x)) return;
            std::size_t i = D.index(x);
            Ea[i] = 1;
            if (k < nb) {
                Eb[i] = 1;
                r.boundary_time += cm.weight[i];
            }
        });
    r.local_time = r.boundary_time >= p.gamma * cm.capacity;

    auto free_a = [&](const Site& x) { return !Ea[D.index(x)]; };
    auto free_b = [&](const Site& x) { return !Eb[D.index(x)]; };
    const long min_diam = long(std::ceil(p.min_diameter_frac * double(t.L)));
    std::vector<Site> own = large_clusters(t.B(), free_a, min_diam, &r.cluster_diameter);
    r.cluster = !own.empty();

    // (ii): every large cluster of B and of its neighbours in one component
    // of D minus the first beta excursions
    int nc = 0;
    std::vector<int> comp = components(D, free_b, &nc);
    bool ok = r.cluster;
    int target = ok ? comp[D.index(own.front())] : 0;
    for (const Site& x : own) ok = ok && comp[D.index(x)] == target;
    for (int axis = 0; axis < 3 && ok; ++axis)
        for (long sgn : {-1L, 1L}) {
            BoxTriple nb_t = t;
            nb_t.z[axis] += sgn * t.L;
            long md = 0;
            std::vector<Site> cl = large_clusters(nb_t.B(), free_a, min_diam, &md);
            ok = ok && !cl.empty();
            for (const Site& x : cl) ok = ok && comp[D.index(x)] == target;
        }
    r.connected = ok;
    r.good = r.determined && r.cluster && r.connected && r.local_time;
    return r;
}

ChainResult connectivity_check(const InterlacementSample& s, const std::vector<BoxTriple>& chain,
                               const GoodParams& p, double u)
{
    if (chain.empty()) throw std::invalid_argument("connectivity_check: empty chain");
    for (std::size_t i = 0; i + 1 < chain.size(); ++i) {
        long diff = 0;
        for (int k = 0; k < 3; ++k) diff += std::labs(chain[i + 1].z[k] - chain[i].z[k]);
        if (diff != chain[i].L || chain[i].L != chain[i + 1].L)
            throw std::invalid_argument("connectivity_check: not a nearest-neighbour chain");
    }
    for (const BoxTriple& t : chain) {
        BoxClassification c = classify_box(s, t, p);
        if (!c.good) return ChainResult::Skipped;
        if (double(excursion_count(s, t, u)) >= p.beta * c.cap_D) return ChainResult::Skipped;
    }
    auto in_union = [&](const Site& x) {
        for (const BoxTriple& t : chain)
            if (t.D().contains(x)) return true;
        return false;
    };
    LatticeBox W = s.window;
    std::vector<std::uint8_t> seen(W.size(), 0);
    std::deque<Site> q;
    LatticeBox B0 = chain.front().B(), Bn = chain.back().B();
    for (std::size_t k = 0; k < B0.size(); ++k) {
        Site x = B0.site(k);
        if (!s.vacant(x, u)) continue;
        if (Bn.contains(x)) return ChainResult::Found;
        seen[W.index(x)] = 1;
        q.push_back(x);
    }
    while (!q.empty()) {
        Site x = q.front();
        q.pop_front();
        for (std::uint8_t c = 0; c < 6; ++c) {
            Site y = x;
            apply_step(y, c);
            if (!in_union(y) || seen[W.index(y)] || !s.vacant(y, u)) continue;
            if (Bn.contains(y)) return ChainResult::Found;
            seen[W.index(y)] = 1;
            q.push_back(y);
        }
    }
    return ChainResult::Failed;
}

double exponential_bound_rhs(double cap_C, double u, double gamma, double eps_tilde, double ubar)
{
    if (!(u > 0) || !(gamma >= u) || !(ubar >= gamma) || !(eps_tilde >= 0 && eps_tilde < 1))
        throw std::invalid_argument("exponential_bound_rhs: need 0 < u <= gamma <= ubar, eps in [0,1)");
    double q = eps_tilde * (std::sqrt(ubar / u) - 1);
    if (!(q < 1)) throw std::invalid_argument("exponential_bound_rhs: eps (sqrt(ubar/u) - 1) < 1 violated");
    double a = std::sqrt(gamma) - std::sqrt(u) / (1 - q);
    double b = std::sqrt(gamma) - std::sqrt(u);
    return std::exp(-a * b * cap_C);
}

double exponential_bound_rhs(const std::vector<Site>& bases, long L, long K, double u, double gamma,
                             double eps_tilde, double ubar)
{
    const long kbar = 2 * K + 3;
    for (std::size_t i = 0; i < bases.size(); ++i)
        for (std::size_t j = i + 1; j < bases.size(); ++j) {
            long d = 0;
            for (int k = 0; k < 3; ++k) d = std::max(d, std::labs(bases[i][k] - bases[j][k]));
            if (d < kbar * L) throw std::invalid_argument("exponential_bound_rhs: boxes closer than (2K+3)L");
        }
    double cap = discrete_box_set_capacity(L, bases).eq.capacity;
    return exponential_bound_rhs(cap, u, gamma, eps_tilde, ubar);
}

std::vector<std::vector<bool>> disconnection_levels(const CompactSetSpec& A, double M, double N,
                                                    const std::vector<double>& levels,
                                                    std::size_t n_samples, std::uint64_t seed, long halo)
{
    if (levels.empty() || !std::is_sorted(levels.begin(), levels.end()))
        throw std::invalid_argument("disconnection_levels: levels ascending");
    long R = 0;
    std::vector<Site> a = checked_blow_up(A, M, N, &R);
    LatticeBox W = LatticeBox::cube({-R, -R, -R}, 2 * R + 1);
    std::vector<std::vector<bool>> out(n_samples, std::vector<bool>(levels.size()));
    for (std::size_t k = 0; k < n_samples; ++k) {
        InterlacementSample s =
            sample_interlacement(levels.back(), W, halo, derive_stream(seed, "disconnection", k)());
        for (std::size_t j = 0; j < levels.size(); ++j)
            out[k][j] = disconnect_detect([&](const Site& x) { return s.vacant(x, levels[j]); }, a, R);
    }
    return out;
}

DisconnectionEstimate disconnection_mc(const CompactSetSpec& A, double M, double N, double u,
                                       std::size_t n_samples, std::uint64_t seed, long halo)
{
    auto flags = disconnection_levels(A, M, N, {u}, n_samples, seed, halo);
    DisconnectionEstimate e;
    e.n = n_samples;
    e.R = sphere_radius(M, N);
    e.a_sites = blow_up(A, N).size();
    double s = 0;
    for (auto& f : flags) s += f[0];
    e.p = s / double(n_samples);
    e.se = n_samples > 1 ? std::sqrt(e.p * (1 - e.p) / double(n_samples - 1)) : 0;
    long h = halo ? halo : std::max(4 * 2 * e.R, 4L);
    e.return_bound = std::min(1.0, cube_measure(2 * e.R + 1).capacity * lattice_green({h, 0, 0}));
    return e;
}

DisconnectionEstimate disconnection_srw(const CompactSetSpec& A, double M, double N, std::size_t n_samples,
                                        std::uint64_t seed, const Site& x, double horizon_factor)
{
    long R = 0;
    std::vector<Site> a = checked_blow_up(A, M, N, &R);
    const long H = long(std::floor(horizon_factor * M * N));
    LatticeBox horizon = LatticeBox::cube({-H, -H, -H}, 2 * H + 1);
    LatticeBox W = LatticeBox::cube({-R, -R, -R}, 2 * R + 1);
    std::vector<std::uint8_t> hit(n_samples);
    parallel_for(n_samples, [&](std::size_t k) {
        Stream rng = derive_stream(seed, "srw-disconnection", k);
        StepSource steps(rng);
        std::vector<std::uint8_t> visited(W.size(), 0);
        Site y = x;
        while (horizon.contains(y)) {
            if (W.contains(y)) visited[W.index(y)] = 1;
            apply_step(y, steps.next());
        }
        hit[k] = disconnect_detect([&](const Site& z) { return !visited[W.index(z)]; }, a, R);
    });
    DisconnectionEstimate e;
    e.n = n_samples;
    e.R = R;
    e.a_sites = a.size();
    double s = 0;
    for (auto h : hit) s += h;
    e.p = s / double(n_samples);
    e.se = n_samples > 1 ? std::sqrt(e.p * (1 - e.p) / double(n_samples - 1)) : 0;
    // chance that the walk comes back to W after the horizon
    e.return_bound = std::min(1.0, cube_measure(2 * R + 1).capacity * lattice_green({H - R, 0, 0}));
    return e;
}

} // namespace solidify
