#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "solidify/geometry.hpp"

namespace solidify {

using Site = std::array<long, 3>;

// Brownian Green function with generator Delta/2:
// g(x) = Gamma(d/2 - 1) / (2 pi^(d/2)) |x|^(2-d)
double green_continuum(int d, double r);

// Green function of simple random walk on Z^3 (expected visits).  Values
// with |x|_inf <= R_table come from a cached quadrature table, the rest from
// the far-field expansion.
class LatticeGreen {
  public:
    static constexpr int kTable = 64;

    static const LatticeGreen& instance();

    double operator()(long x, long y, long z) const;
    double operator()(const Site& s) const { return (*this)(s[0], s[1], s[2]); }

    // Direct quadrature of int_0^inf prod_i e^{-t/3} I_{x_i}(t/3) dt, any x.
    static double quadrature(const Site& x);
    // 3/(2 pi r) [1 + (5 sum x_i^4 / r^4 - 3) / (8 r^2)]
    static double far_field(const Site& x);

  private:
    LatticeGreen();
    std::vector<double> table_; // indexed by sorted |coords|
    static std::size_t key(long a, long b, long c);
};

inline double lattice_green(const Site& x) { return LatticeGreen::instance()(x); }

// g~(0) from simple random walk visit counts: visits to 0 before leaving
// B(0,R), plus the far-field value at the exit point.
struct GreenMc {
    double value = 0;
    double se = 0;
    std::size_t walks = 0;
};
GreenMc srw_green_mc(std::size_t walks, long R, std::uint64_t seed);

// Flat-panel potential int_P 1/|x-y| dA(y), exact, for a convex planar
// polygon with vertices counter-clockwise seen from the side the normal
// points to.
double polygon_potential(const Point& x, const std::vector<Point>& verts);

// Continuum surfaces for collocation.
struct Surface {
    std::vector<std::vector<Point>> panels;
    std::vector<Point> centroids;
    std::vector<double> areas;
    void add(std::vector<Point> verts);
    std::size_t size() const { return panels.size(); }
};

struct EquilibriumSolution {
    std::vector<Site> sites;     // discrete support
    Surface surface;             // continuum support
    Eigen::VectorXd weights;     // mass per site or panel
    double capacity = 0;
    double residual = 0;         // max |potential - 1| on the support
    double error_estimate = 0;   // continuum: Richardson error
    std::vector<double> level_capacity; // continuum: per refinement level
};

// Dense solve of sum_y g~(x-y) w(y) = 1 on F.  Only points of F with a
// neighbour outside F can carry mass, so the system is posed on those.
EquilibriumSolution discrete_capacity(const std::vector<Site>& F);

// Lattice box {0..L-1}^3 + base, by 48-fold symmetry.
EquilibriumSolution discrete_box_capacity(long L, const Site& base = {0, 0, 0});

// Union of L-boxes z + [0,L)^3, z in bases, pairwise |z-z'|_inf >= L.
// Conjugate gradients preconditioned by the single-box solve.
struct BoxSetSolution {
    EquilibriumSolution eq;
    std::vector<double> box_mass;     // e~_C(B)
    std::vector<std::size_t> offset;  // first site of each box in eq.sites
    int iterations = 0;
};
BoxSetSolution discrete_box_set_capacity(long L, const std::vector<Site>& bases,
                                         double tol = 1e-10, int max_iter = 200);

// Outer boundary of a union of boxes (faces between the union and the
// unbounded component of its complement), panels of side <= h.  Box corners
// must be multiples of h.
Surface box_union_surface(const std::vector<Box>& boxes, double h);
// Icosphere with `level` subdivisions, vertices on the sphere.
Surface icosphere(const Point& c, double r, int level);

struct BemOptions {
    int levels = 2;          // refinements used for extrapolation
    double order = 1.25;     // assumed convergence order in h (uniform box meshes)
    std::size_t max_panels = 12000;
};

// Collocation solve of int g(x,y) e(dy) = 1 on one surface.
EquilibriumSolution bem_solve(const Surface& s);

// cap of a union of boxes: BEM at panel sides h0, h0/2, ... with Richardson.
// h0 defaults to the largest power of two dividing every corner, but at
// most a quarter of the smallest side.
EquilibriumSolution continuum_capacity(const std::vector<Box>& boxes, double h0 = 0,
                                       const BemOptions& opt = {});
EquilibriumSolution ball_capacity(const Point& c, double r, const BemOptions& opt = {});

// cap of the cube [0,L]^3 by 48-fold symmetric BEM, n x n panels per face,
// geometric grading toward the edges.  Richardson over n, 2n, 4n.
struct CubeCapacity {
    double capacity = 0;
    double error_estimate = 0;
    std::vector<double> level_capacity;
};
CubeCapacity cube_capacity(double L, int n0 = 16, int levels = 3);

// Separated unions of cubes z + [0,L]^3 by block Jacobi around the single-cube
// solve (n x n panels per face), Richardson over n, 2n.
struct CubeSetCapacity {
    double capacity = 0;
    double error_estimate = 0;
    std::vector<double> level_capacity;
    std::vector<double> cube_mass;
};
CubeSetCapacity cube_set_capacity(double L, const std::vector<Point>& corners, int n0 = 8,
                                  int levels = 2);

// h_C(x) = int g(x,y) e_C(dy) from a continuum solution.
double harmonic_potential(const EquilibriumSolution& eq, const Point& x);
// Discrete: sum_y g~(x-y) e(y).
double harmonic_potential_discrete(const EquilibriumSolution& eq, const Site& x);

struct CapacityBound {
    double bound = 0;      // inf of h_Sigma over the support of e_A
    double ratio = 0;      // cap(Sigma) / cap(A)
    double cap_a = 0;
    double cap_sigma = 0;
    bool holds(double margin = 1e-3) const { return ratio - bound >= -margin; }
};
CapacityBound capacity_hitting_lower_bound(const EquilibriumSolution& a,
                                           const EquilibriumSolution& sigma);

struct EtaProbe {
    double eta = 1;
    Site x1{}, x2{};
    Point y1{}, y2{};
};
// Sampled lower bound for eta_K at box side L.  Box corners are always
// among the samples.
EtaProbe eta_probe(long K, long L, std::size_t n_pairs, std::uint64_t seed);

struct RatioRow {
    long K = 0, L = 0;
    std::size_t config = 0;
    std::size_t boxes = 0;
    double cap_discrete = 0;
    double cap_continuum = 0;
    double ratio = 0;          // d cap~(C) / cap(Gamma)
    double a_L = 0;
    double eta = 1;
    double delta = 0;          // measured max |e~_C / mu~ - 1|
    double lower = 0, upper = 0;
    bool in_sandwich = false;
};

// a_L = d cap~(B) / cap(B^) for a single L-box.
double a_L(long L);

// Random admissible configs: n_boxes L-boxes with pairwise |z-z'|_inf >= KL.
std::vector<std::vector<Site>> random_box_configs(long K, long L, std::size_t n_boxes,
                                                  std::size_t n_configs, std::uint64_t seed);

RatioRow ratio_row(long K, long L, const std::vector<Site>& bases, std::size_t config,
                   std::uint64_t seed);

std::vector<RatioRow> ratio_harness(const std::vector<long>& Ks, const std::vector<long>& Ls,
                                    std::size_t n_boxes, std::size_t n_configs,
                                    std::uint64_t seed);

} // namespace solidify
