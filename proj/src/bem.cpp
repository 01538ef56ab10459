#include "solidify/potential.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "solidify/parallel.hpp"

namespace solidify {

namespace {

using V3 = Eigen::Vector3d;

V3 v3(const Point& p) { return {p[0], p[1], p[2]}; }
Point pt(const V3& v) { return make_point({v[0], v[1], v[2]}); }

constexpr double kFourPi = 4 * M_PI; // 1/(2 pi r) = 2 / (4 pi r)

// g = 1/(2 pi r) in d = 3
double panel_green(const Surface& s, std::size_t j, const Point& x)
{
    const V3 c = v3(s.centroids[j]);
    const V3 p = v3(x);
    double r = (p - c).norm();
    double diam2 = 0;
    for (const Point& v : s.panels[j]) diam2 = std::max(diam2, (v3(v) - c).squaredNorm());
    // far panels as point masses; the quadrupole error is below (diam/r)^2 / 100
    if (r * r > 400 * 4 * diam2) return s.areas[j] / (2 * M_PI * r);
    return polygon_potential(x, s.panels[j]) / (2 * M_PI);
}

} // namespace

double polygon_potential(const Point& x, const std::vector<Point>& verts)
{
    const std::size_t m = verts.size();
    V3 a0 = v3(verts[0]);
    V3 n = (v3(verts[1]) - a0).cross(v3(verts[2]) - a0).normalized();
    V3 p = v3(x);
    double h = (p - a0).dot(n);
    double ah = std::fabs(h);
    V3 rho = p - h * n;
    double sum = 0;
    for (std::size_t i = 0; i < m; ++i) {
        V3 a = v3(verts[i]), b = v3(verts[(i + 1) % m]);
        V3 l = (b - a).normalized();
        V3 u = l.cross(n);
        double p0 = (a - rho).dot(u);
        double lp = (b - rho).dot(l), lm = (a - rho).dot(l);
        double r0sq = p0 * p0 + h * h;
        if (r0sq < 1e-300) continue;
        double r0 = std::sqrt(r0sq);
        double rp = std::sqrt(r0sq + lp * lp), rm = std::sqrt(r0sq + lm * lm);
        sum += p0 * (std::asinh(lp / r0) - std::asinh(lm / r0));
        if (ah > 0)
            sum -= ah * (std::atan(p0 * lp / (r0sq + ah * rp)) - std::atan(p0 * lm / (r0sq + ah * rm)));
    }
    return sum;
}

void Surface::add(std::vector<Point> verts)
{
    V3 a0 = v3(verts[0]);
    V3 c = V3::Zero(), area_vec = V3::Zero();
    double area = 0;
    for (std::size_t i = 1; i + 1 < verts.size(); ++i) {
        V3 a = v3(verts[i]), b = v3(verts[i + 1]);
        V3 cr = (a - a0).cross(b - a0);
        double t = 0.5 * cr.norm();
        area += t;
        c += t * (a0 + a + b) / 3;
        area_vec += cr;
    }
    centroids.push_back(pt(c / area));
    areas.push_back(area);
    panels.push_back(std::move(verts));
}

Surface box_union_surface(const std::vector<Box>& boxes, double h)
{
    if (boxes.empty()) throw std::invalid_argument("box_union_surface: no boxes");
    Box bb = boxes[0];
    for (const Box& b : boxes)
        for (int i = 0; i < 3; ++i) {
            bb.lo[i] = std::min(bb.lo[i], b.lo[i]);
            bb.hi[i] = std::max(bb.hi[i], b.hi[i]);
        }
    for (const Box& b : boxes)
        for (int i = 0; i < 3; ++i)
            for (double c : {b.lo[i], b.hi[i]})
                if (std::fabs(c / h - std::round(c / h)) > 1e-9)
                    throw std::invalid_argument("box_union_surface: corners not on the h-grid");
    std::array<int, kMaxDim> n{};
    Point origin{};
    for (int i = 0; i < 3; ++i) {
        origin[i] = bb.lo[i] - h;
        n[i] = int(std::lround((bb.hi[i] - bb.lo[i]) / h)) + 2;
    }
    Raster solid(3, n, origin, h);
    if (solid.size() > 40'000'000) throw std::runtime_error("box_union_surface: panel budget exceeded");
    for (const Box& b : boxes) {
        std::array<int, 3> lo, hi;
        for (int i = 0; i < 3; ++i) {
            lo[i] = int(std::lround((b.lo[i] - origin[i]) / h));
            hi[i] = int(std::lround((b.hi[i] - origin[i]) / h));
        }
        for (int x = lo[0]; x < hi[0]; ++x)
            for (int y = lo[1]; y < hi[1]; ++y)
                for (int z = lo[2]; z < hi[2]; ++z) solid.cells[solid.index({x, y, z})] = 1;
    }
    Raster outside = unbounded_complement_component(solid);
    Surface s;
    for (std::size_t idx = 0; idx < solid.size(); ++idx) {
        if (!solid.cells[idx]) continue;
        auto c = solid.coords(idx);
        for (int axis = 0; axis < 3; ++axis)
            for (int dir : {-1, 1}) {
                auto nb = c;
                nb[axis] += dir;
                if (!outside.cells[solid.index(nb)]) continue;
                // face of the cell at side dir of axis, normal = dir * e_axis
                int u = (axis + 1) % 3, v = (axis + 2) % 3;
                Point base = origin;
                for (int i = 0; i < 3; ++i) base[i] += c[i] * h;
                if (dir > 0) base[axis] += h;
                auto corner = [&](int du, int dv) {
                    Point q = base;
                    q[u] += du * h;
                    q[v] += dv * h;
                    return q;
                };
                // (u, v, axis) is right-handed, so this order is ccw about +e_axis
                if (dir > 0)
                    s.add({corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)});
                else
                    s.add({corner(0, 0), corner(0, 1), corner(1, 1), corner(1, 0)});
            }
    }
    return s;
}

Surface icosphere(const Point& c, double r, int level)
{
    const double t = (1 + std::sqrt(5.0)) / 2;
    std::vector<V3> v = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                         {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    for (V3& p : v) p.normalize();
    std::vector<std::array<int, 3>> f = {
        {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
        {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
        {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
    for (int k = 0; k < level; ++k) {
        std::map<std::pair<int, int>, int> mid;
        auto midpoint = [&](int a, int b) {
            auto key = std::minmax(a, b);
            auto it = mid.find(key);
            if (it != mid.end()) return it->second;
            v.push_back((v[a] + v[b]).normalized());
            return mid[key] = int(v.size()) - 1;
        };
        std::vector<std::array<int, 3>> g;
        for (auto [a, b, cc] : f) {
            int ab = midpoint(a, b), bc = midpoint(b, cc), ca = midpoint(cc, a);
            g.push_back({a, ab, ca});
            g.push_back({b, bc, ab});
            g.push_back({cc, ca, bc});
            g.push_back({ab, bc, ca});
        }
        f = std::move(g);
    }
    Surface s;
    V3 cc = v3(c);
    for (auto [a, b, k] : f) s.add({pt(cc + r * v[a]), pt(cc + r * v[b]), pt(cc + r * v[k])});
    return s;
}

EquilibriumSolution bem_solve(const Surface& s)
{
    const std::size_t n = s.size();
    Eigen::MatrixXd A(n, n);
    parallel_for(n, [&](std::size_t i) {
        for (std::size_t j = 0; j < n; ++j) A(i, j) = panel_green(s, j, s.centroids[i]) / s.areas[j];
    });
    Eigen::VectorXd q = A.partialPivLu().solve(Eigen::VectorXd::Ones(n));
    EquilibriumSolution sol;
    sol.surface = s;
    sol.weights = q;
    sol.capacity = q.sum();
    sol.residual = (A * q - Eigen::VectorXd::Ones(n)).cwiseAbs().maxCoeff();
    return sol;
}

namespace {

double richardson(const std::vector<double>& c, double order, double* err)
{
    std::size_t m = c.size();
    if (m == 1) {
        *err = INFINITY;
        return c[0];
    }
    double p = order;
    if (m >= 3) {
        double r = (c[m - 2] - c[m - 3]) / (c[m - 1] - c[m - 2]);
        if (r > 1.05) p = std::log2(r);
    }
    double corr = (c[m - 1] - c[m - 2]) / (std::pow(2.0, p) - 1);
    *err = std::fabs(corr);
    return c[m - 1] + corr;
}

} // namespace

EquilibriumSolution continuum_capacity(const std::vector<Box>& boxes, double h0,
                                       const BemOptions& opt)
{
    if (h0 <= 0) {
        double smallest = INFINITY;
        for (const Box& b : boxes)
            for (int i = 0; i < 3; ++i) smallest = std::min(smallest, b.hi[i] - b.lo[i]);
        h0 = std::ldexp(1.0, int(std::floor(std::log2(smallest / 4))));
        // corners must sit on the grid
        auto on_grid = [&](double h) {
            for (const Box& b : boxes)
                for (int i = 0; i < 3; ++i)
                    for (double c : {b.lo[i], b.hi[i]})
                        if (std::fabs(c / h - std::round(c / h)) > 1e-9) return false;
            return true;
        };
        while (!on_grid(h0)) h0 /= 2;
    }
    std::vector<double> caps;
    EquilibriumSolution last;
    double h = h0;
    for (int k = 0; k < opt.levels; ++k, h /= 2) {
        Surface s = box_union_surface(boxes, h);
        if (s.size() > opt.max_panels)
            throw std::runtime_error("continuum_capacity: panel budget exceeded (" +
                                     std::to_string(s.size()) + " panels)");
        last = bem_solve(s);
        caps.push_back(last.capacity);
    }
    last.level_capacity = caps;
    last.capacity = richardson(caps, opt.order, &last.error_estimate);
    return last;
}

EquilibriumSolution ball_capacity(const Point& c, double r, const BemOptions& opt)
{
    std::vector<double> caps;
    EquilibriumSolution last;
    for (int k = 0; k < opt.levels; ++k) {
        last = bem_solve(icosphere(c, r, 2 + k));
        caps.push_back(last.capacity);
    }
    last.level_capacity = caps;
    last.capacity = richardson(caps, 2.0, &last.error_estimate);
    return last;
}

namespace {

// graded nodes on [0,1], denser toward both ends
std::vector<double> graded(int n)
{
    std::vector<double> s(n + 1);
    for (int k = 0; k <= n; ++k) s[k] = 0.5 * (1 - std::cos(M_PI * k / n));
    return s;
}

Surface cube_surface(double L, int n, const Point& corner = {})
{
    std::vector<double> g = graded(n);
    Surface s;
    for (int axis = 0; axis < 3; ++axis)
        for (int side = 0; side < 2; ++side) {
            int u = (axis + 1) % 3, v = (axis + 2) % 3;
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b) {
                    auto q = [&](int du, int dv) {
                        Point p = corner;
                        p[axis] += side * L;
                        p[u] += L * g[a + du];
                        p[v] += L * g[b + dv];
                        return p;
                    };
                    if (side)
                        s.add({q(0, 0), q(1, 0), q(1, 1), q(0, 1)});
                    else
                        s.add({q(0, 0), q(0, 1), q(1, 1), q(1, 0)});
                }
        }
    return s;
}

double cube_level(double L, int n)
{
    Surface s = cube_surface(L, n);
    // orbits under the 48 symmetries of the cube
    std::map<std::array<long, 3>, std::size_t> id;
    std::vector<std::size_t> orbit(s.size());
    std::vector<std::size_t> rep;
    for (std::size_t j = 0; j < s.size(); ++j) {
        std::array<long, 3> k;
        for (int i = 0; i < 3; ++i) {
            double c = s.centroids[j][i];
            k[i] = std::lround(std::min(c, L - c) / L * 1e9);
        }
        std::sort(k.begin(), k.end());
        auto [it, fresh] = id.emplace(k, rep.size());
        if (fresh) rep.push_back(j);
        orbit[j] = it->second;
    }
    const std::size_t m = rep.size();
    // unknown: density per orbit
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, m);
    parallel_for(m, [&](std::size_t i) {
        for (std::size_t j = 0; j < s.size(); ++j)
            A(i, orbit[j]) += panel_green(s, j, s.centroids[rep[i]]);
    });
    Eigen::VectorXd dens = A.partialPivLu().solve(Eigen::VectorXd::Ones(m));
    double cap = 0;
    for (std::size_t j = 0; j < s.size(); ++j) cap += dens[orbit[j]] * s.areas[j];
    return cap;
}

} // namespace

CubeCapacity cube_capacity(double L, int n0, int levels)
{
    CubeCapacity out;
    for (int k = 0, n = n0; k < levels; ++k, n *= 2) out.level_capacity.push_back(cube_level(L, n));
    out.capacity = richardson(out.level_capacity, 1.0, &out.error_estimate);
    return out;
}

CubeSetCapacity cube_set_capacity(double L, const std::vector<Point>& corners, int n0, int levels)
{
    if (corners.empty()) throw std::invalid_argument("cube_set_capacity: no cubes");
    const std::size_t nc = corners.size();
    for (std::size_t i = 0; i < nc; ++i)
        for (std::size_t j = i + 1; j < nc; ++j) {
            double sep = 0;
            for (int k = 0; k < 3; ++k) sep = std::max(sep, std::fabs(corners[i][k] - corners[j][k]));
            if (sep < 2 * L) throw std::invalid_argument("cube_set_capacity: cubes not separated");
        }
    CubeSetCapacity out;
    for (int k = 0, n = n0; k < levels; ++k, n *= 2) {
        Surface s = cube_surface(L, n);
        const std::size_t m = s.size();
        Eigen::MatrixXd A(m, m);
        parallel_for(m, [&](std::size_t i) {
            for (std::size_t j = 0; j < m; ++j) A(i, j) = panel_green(s, j, s.centroids[i]) / s.areas[j];
        });
        Eigen::PartialPivLU<Eigen::MatrixXd> lu = A.partialPivLu();
        Eigen::VectorXd single = lu.solve(Eigen::VectorXd::Ones(m));
        std::vector<Eigen::VectorXd> q(nc, single);
        // other cubes seen as point masses at panel centroids
        auto field = [&](std::size_t i) {
            Eigen::VectorXd f = Eigen::VectorXd::Zero(m);
            for (std::size_t j = 0; j < nc; ++j) {
                if (j == i) continue;
                V3 shift = v3(corners[j]) - v3(corners[i]);
                parallel_for(m, [&](std::size_t a) {
                    V3 x = v3(s.centroids[a]);
                    double acc = 0;
                    for (std::size_t b = 0; b < m; ++b)
                        acc += q[j][b] / (x - v3(s.centroids[b]) - shift).norm();
                    f[a] += acc / (2 * M_PI);
                });
            }
            return f;
        };
        for (int it = 0; it < 200; ++it) {
            std::vector<Eigen::VectorXd> next(nc);
            double change = 0;
            for (std::size_t i = 0; i < nc; ++i) {
                next[i] = lu.solve(Eigen::VectorXd::Ones(m) - field(i));
                change = std::max(change, (next[i] - q[i]).cwiseAbs().maxCoeff() / single.maxCoeff());
            }
            q = std::move(next);
            if (change < 1e-11) break;
        }
        double cap = 0;
        out.cube_mass.assign(nc, 0.0);
        for (std::size_t i = 0; i < nc; ++i) {
            out.cube_mass[i] = q[i].sum();
            cap += out.cube_mass[i];
        }
        out.level_capacity.push_back(cap);
    }
    // order from the single cube at the same levels
    std::vector<double> single;
    for (int k = 0, n = n0; k < std::max(levels, 3); ++k, n *= 2) single.push_back(cube_level(L, n));
    double p = 1.0;
    if (single.size() >= 3) {
        double r = (single[1] - single[0]) / (single[2] - single[1]);
        if (r > 1.05) p = std::log2(r);
    }
    out.capacity = richardson(out.level_capacity, p, &out.error_estimate);
    return out;
}

double harmonic_potential(const EquilibriumSolution& eq, const Point& x)
{
    const Surface& s = eq.surface;
    double h = 0;
    for (std::size_t j = 0; j < s.size(); ++j) h += eq.weights[j] / s.areas[j] * panel_green(s, j, x);
    return h;
}

CapacityBound capacity_hitting_lower_bound(const EquilibriumSolution& a,
                                           const EquilibriumSolution& sigma)
{
    CapacityBound out;
    out.cap_a = a.capacity;
    out.cap_sigma = sigma.capacity;
    out.ratio = sigma.capacity / a.capacity;
    out.bound = INFINITY;
    std::vector<double> h(a.surface.size(), INFINITY);
    parallel_for(a.surface.size(), [&](std::size_t j) {
        if (a.weights[j] > 0) h[j] = harmonic_potential(sigma, a.surface.centroids[j]);
    });
    for (double v : h) out.bound = std::min(out.bound, v);
    return out;
}

} // namespace solidify
