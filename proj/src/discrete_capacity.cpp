#include "solidify/potential.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <set>

#include "solidify/parallel.hpp"

namespace solidify {

namespace {

const Site kNeighbours[6] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};

Site add(const Site& a, const Site& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }

double kernel(const Site& a, const Site& b)
{
    return LatticeGreen::instance()(a[0] - b[0], a[1] - b[1], a[2] - b[2]);
}

// plain CG for the SPD kernel matrix, applied without storing it
Eigen::VectorXd kernel_cg(const std::vector<Site>& s, double tol, double* residual)
{
    const std::size_t n = s.size();
    auto apply = [&](const Eigen::VectorXd& v) {
        Eigen::VectorXd out(n);
        parallel_for(n, [&](std::size_t i) {
            double acc = 0;
            for (std::size_t j = 0; j < n; ++j) acc += kernel(s[i], s[j]) * v[j];
            out[i] = acc;
        });
        return out;
    };
    Eigen::VectorXd b = Eigen::VectorXd::Ones(n);
    Eigen::VectorXd x = Eigen::VectorXd::Constant(n, 1.0 / (kernel(s[0], s[0]) * n));
    Eigen::VectorXd r = b - apply(x), p = r;
    double rr = r.squaredNorm();
    for (int it = 0; it < 2000 && std::sqrt(rr) > tol * std::sqrt(double(n)); ++it) {
        Eigen::VectorXd q = apply(p);
        double alpha = rr / p.dot(q);
        x += alpha * p;
        r -= alpha * q;
        double rr_new = r.squaredNorm();
        p = r + (rr_new / rr) * p;
        rr = rr_new;
    }
    *residual = (b - apply(x)).cwiseAbs().maxCoeff();
    if (*residual > 1e-6)
        throw std::runtime_error("discrete_capacity: CG did not converge, residual " +
                                 std::to_string(*residual));
    return x;
}

} // namespace

EquilibriumSolution discrete_capacity(const std::vector<Site>& F)
{
    if (F.empty()) return {};
    std::set<Site> in(F.begin(), F.end());
    std::vector<Site> support;
    for (const Site& x : in) {
        bool edge = false;
        for (const Site& e : kNeighbours) edge = edge || !in.count(add(x, e));
        if (edge) support.push_back(x);
    }
    EquilibriumSolution sol;
    const std::size_t n = support.size();
    Eigen::VectorXd w;
    if (n <= 4000) {
        Eigen::MatrixXd G(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j <= i; ++j) G(i, j) = G(j, i) = kernel(support[i], support[j]);
        Eigen::LLT<Eigen::MatrixXd> llt(G);
        if (llt.info() != Eigen::Success)
            throw std::runtime_error("discrete_capacity: kernel matrix not positive definite");
        w = llt.solve(Eigen::VectorXd::Ones(n));
    } else {
        double res;
        w = kernel_cg(support, 1e-12, &res);
    }
    sol.sites.assign(in.begin(), in.end());
    sol.weights = Eigen::VectorXd::Zero(sol.sites.size());
    std::map<Site, double> mass;
    for (std::size_t i = 0; i < n; ++i) mass[support[i]] = w[i];
    for (std::size_t i = 0; i < sol.sites.size(); ++i) {
        auto it = mass.find(sol.sites[i]);
        if (it != mass.end()) sol.weights[i] = it->second;
    }
    sol.capacity = w.sum();
    // residual over all of F, interior points included
    std::vector<double> res(sol.sites.size());
    parallel_for(sol.sites.size(), [&](std::size_t i) {
        double acc = 0;
        for (std::size_t j = 0; j < n; ++j) acc += kernel(sol.sites[i], support[j]) * w[j];
        res[i] = std::fabs(acc - 1.0);
    });
    sol.residual = *std::max_element(res.begin(), res.end());
    return sol;
}

namespace {

// boundary points of {0..L-1}^3
std::vector<Site> box_boundary(long L)
{
    std::vector<Site> out;
    for (long x = 0; x < L; ++x)
        for (long y = 0; y < L; ++y)
            for (long z = 0; z < L; ++z)
                if (x == 0 || y == 0 || z == 0 || x == L - 1 || y == L - 1 || z == L - 1)
                    out.push_back({x, y, z});
    return out;
}

Site canonical(const Site& x, long L)
{
    Site c;
    for (int i = 0; i < 3; ++i) c[i] = std::min(x[i], L - 1 - x[i]);
    std::sort(c.begin(), c.end());
    return c;
}

struct BoxSolve {
    std::vector<Site> points;
    Eigen::VectorXd w;
    double cap = 0;
    double residual = 0;
};

BoxSolve symmetric_box_solve(long L)
{
    BoxSolve out;
    out.points = box_boundary(L);
    if (L == 1) {
        out.w = Eigen::VectorXd::Constant(1, 1.0 / kernel({0, 0, 0}, {0, 0, 0}));
        out.cap = out.w[0];
        return out;
    }
    std::map<Site, std::size_t> orbit_id;
    std::vector<std::size_t> orbit_of(out.points.size());
    std::vector<Site> reps;
    for (std::size_t i = 0; i < out.points.size(); ++i) {
        Site c = canonical(out.points[i], L);
        auto [it, fresh] = orbit_id.emplace(c, reps.size());
        if (fresh) reps.push_back(out.points[i]);
        orbit_of[i] = it->second;
    }
    const std::size_t m = reps.size();
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, m);
    parallel_for(m, [&](std::size_t i) {
        for (std::size_t k = 0; k < out.points.size(); ++k)
            A(i, orbit_of[k]) += kernel(reps[i], out.points[k]);
    });
    Eigen::VectorXd v = A.partialPivLu().solve(Eigen::VectorXd::Ones(m));
    out.w.resize(out.points.size());
    for (std::size_t k = 0; k < out.points.size(); ++k) out.w[k] = v[orbit_of[k]];
    out.cap = out.w.sum();
    out.residual = (A * v - Eigen::VectorXd::Ones(m)).cwiseAbs().maxCoeff();
    return out;
}

} // namespace

EquilibriumSolution discrete_box_capacity(long L, const Site& base)
{
    if (L < 1) throw std::invalid_argument("discrete_box_capacity: L >= 1");
    BoxSolve b = symmetric_box_solve(L);
    EquilibriumSolution sol;
    sol.sites.reserve(b.points.size());
    for (const Site& p : b.points) sol.sites.push_back(add(p, base));
    sol.weights = b.w;
    sol.capacity = b.cap;
    sol.residual = b.residual;
    return sol;
}

BoxSetSolution discrete_box_set_capacity(long L, const std::vector<Site>& bases, double tol,
                                         int max_iter)
{
    if (bases.empty()) throw std::invalid_argument("discrete_box_set_capacity: no boxes");
    for (std::size_t i = 0; i < bases.size(); ++i)
        for (std::size_t j = i + 1; j < bases.size(); ++j) {
            long sep = 0;
            for (int k = 0; k < 3; ++k) sep = std::max(sep, std::labs(bases[i][k] - bases[j][k]));
            if (sep < L) throw std::invalid_argument("discrete_box_set_capacity: boxes overlap");
        }
    // the single-box factor is shared by every config with the same L
    static std::mutex cache_mutex;
    static std::map<long, std::shared_ptr<const Eigen::LLT<Eigen::MatrixXd>>> cache;
    std::shared_ptr<const Eigen::LLT<Eigen::MatrixXd>> factor;
    std::vector<Site> pts = box_boundary(L);
    const std::size_t n = pts.size(), nb = bases.size();
    {
        std::lock_guard<std::mutex> lock(cache_mutex);
        auto it = cache.find(L);
        if (it == cache.end()) {
            Eigen::MatrixXd S(n, n);
            parallel_for(n, [&](std::size_t i) {
                for (std::size_t j = 0; j < n; ++j) S(i, j) = kernel(pts[i], pts[j]);
            });
            auto f = std::make_shared<Eigen::LLT<Eigen::MatrixXd>>(S);
            if (f->info() != Eigen::Success)
                throw std::runtime_error("discrete_box_set_capacity: single-box matrix not SPD");
            if (cache.size() > 2) cache.clear();
            it = cache.emplace(L, f).first;
        }
        factor = it->second;
    }
    const Eigen::LLT<Eigen::MatrixXd>& llt = *factor;
    auto self = [&](const Eigen::VectorXd& w) {
        Eigen::VectorXd out(n);
        parallel_for(n, [&](std::size_t i) {
            double acc = 0;
            for (std::size_t j = 0; j < n; ++j) acc += kernel(pts[i], pts[j]) * w[j];
            out[i] = acc;
        });
        return out;
    };

    std::vector<double> px(n), py(n), pz(n);
    for (std::size_t k = 0; k < n; ++k) {
        px[k] = double(pts[k][0]);
        py[k] = double(pts[k][1]);
        pz[k] = double(pts[k][2]);
    }
    auto cross = [&](std::size_t i, std::size_t j, const Eigen::VectorXd& wj, Eigen::VectorXd& acc) {
        Site shift{bases[i][0] - bases[j][0], bases[i][1] - bases[j][1], bases[i][2] - bases[j][2]};
        long sep = std::max({std::labs(shift[0]), std::labs(shift[1]), std::labs(shift[2])});
        const LatticeGreen& g = LatticeGreen::instance();
        if (sep - L > LatticeGreen::kTable) {
            // every pair is past the table: far-field formula inline
            const double sx = double(shift[0]), sy = double(shift[1]), sz = double(shift[2]);
            parallel_for(n, [&](std::size_t a) {
                double s = 0;
                const double ax = px[a] + sx, ay = py[a] + sy, az = pz[a] + sz;
                for (std::size_t b = 0; b < n; ++b) {
                    double x = ax - px[b], y = ay - py[b], z = az - pz[b];
                    double x2 = x * x, y2 = y * y, z2 = z * z;
                    double r2 = x2 + y2 + z2;
                    double s4 = x2 * x2 + y2 * y2 + z2 * z2;
                    double r = std::sqrt(r2);
                    s += wj[b] * (1.0 + (5.0 * s4 / (r2 * r2) - 3.0) / (8.0 * r2)) / r;
                }
                acc[a] += s * 3.0 / (2 * M_PI);
            });
            return;
        }
        parallel_for(n, [&](std::size_t a) {
            double s = 0;
            for (std::size_t b = 0; b < n; ++b)
                s += g(pts[a][0] - pts[b][0] + shift[0], pts[a][1] - pts[b][1] + shift[1],
                       pts[a][2] - pts[b][2] + shift[2]) *
                     wj[b];
            acc[a] += s;
        });
    };

    // conjugate gradients on the full SPD system, single-box solves as
    // preconditioner (block Jacobi alone diverges once boxes crowd)
    using Blocks = std::vector<Eigen::VectorXd>;
    auto apply = [&](const Blocks& x) {
        Blocks y(nb);
        for (std::size_t i = 0; i < nb; ++i) {
            y[i] = self(x[i]);
            for (std::size_t j = 0; j < nb; ++j)
                if (j != i) cross(i, j, x[j], y[i]);
        }
        return y;
    };
    auto dot = [&](const Blocks& x, const Blocks& y) {
        double s = 0;
        for (std::size_t i = 0; i < nb; ++i) s += x[i].dot(y[i]);
        return s;
    };
    Eigen::VectorXd single = llt.solve(Eigen::VectorXd::Ones(n));
    Blocks w(nb, single), r(nb), z(nb), p;
    {
        Blocks gw = apply(w);
        for (std::size_t i = 0; i < nb; ++i) r[i] = Eigen::VectorXd::Ones(n) - gw[i];
    }
    for (std::size_t i = 0; i < nb; ++i) z[i] = llt.solve(r[i]);
    p = z;
    double rz = dot(r, z);
    BoxSetSolution out;
    for (out.iterations = 0; out.iterations < max_iter; ++out.iterations) {
        double rmax = 0;
        for (const auto& ri : r) rmax = std::max(rmax, ri.cwiseAbs().maxCoeff());
        if (rmax < tol) break;
        Blocks q = apply(p);
        double a = rz / dot(p, q);
        for (std::size_t i = 0; i < nb; ++i) {
            w[i] += a * p[i];
            r[i] -= a * q[i];
            z[i] = llt.solve(r[i]);
        }
        double rz1 = dot(r, z);
        for (std::size_t i = 0; i < nb; ++i) p[i] = z[i] + (rz1 / rz) * p[i];
        rz = rz1;
    }
    // residual of the full system
    double residual = 0;
    for (std::size_t i = 0; i < nb; ++i) {
        Eigen::VectorXd field = self(w[i]);
        for (std::size_t j = 0; j < nb; ++j)
            if (j != i) cross(i, j, w[j], field);
        residual = std::max(residual, (field - Eigen::VectorXd::Ones(n)).cwiseAbs().maxCoeff());
    }
    if (residual > 1e-6)
        throw std::runtime_error("discrete_box_set_capacity: no convergence, residual " +
                                 std::to_string(residual));
    out.eq.weights.resize(n * nb);
    for (std::size_t i = 0; i < nb; ++i) {
        out.offset.push_back(i * n);
        out.box_mass.push_back(w[i].sum());
        for (std::size_t k = 0; k < n; ++k) {
            out.eq.sites.push_back(add(pts[k], bases[i]));
            out.eq.weights[i * n + k] = w[i][k];
        }
    }
    out.eq.capacity = out.eq.weights.sum();
    out.eq.residual = residual;
    return out;
}

double harmonic_potential_discrete(const EquilibriumSolution& eq, const Site& x)
{
    double h = 0;
    for (std::size_t i = 0; i < eq.sites.size(); ++i)
        if (eq.weights[i] != 0.0) h += kernel(x, eq.sites[i]) * eq.weights[i];
    return h;
}

} // namespace solidify
