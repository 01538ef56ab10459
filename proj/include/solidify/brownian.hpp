#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "solidify/geometry.hpp"
#include "solidify/path.hpp"

namespace solidify {

class Stream;

// First time |X_t - X_0|_inf >= r, with Brownian-bridge refinement of the
// steps that come close to the boundary.  kNever if the sample never exits.
double stop_tau(const PathSample& path, double r);

// Union of boxes and balls with a bucketed distance function.
class ObstacleSet {
  public:
    ObstacleSet() = default;
    // bucket = 0 picks a side from the smallest primitive
    explicit ObstacleSet(const CompactSetSpec& s, double bucket = 0);

    // Lower bound on the Euclidean distance; exact when below bucket().
    double distance(const Point& x) const;
    bool contains(const Point& x) const { return distance(x) <= 0.0; }
    bool empty() const { return spec_.parts.empty(); }
    // Zero volume and no 2-dimensional face: hit with probability 0.
    bool polar() const;
    const CompactSetSpec& spec() const { return spec_; }
    double bucket() const { return bucket_; }
    Point center() const { return center_; }
    double radius() const { return radius_; } // Euclidean, about center()
    double diameter() const { return 2 * radius_; }

  private:
    double exact(std::size_t k, const Point& x) const;

    CompactSetSpec spec_;
    Box bounds_{};
    Point center_{};
    double radius_ = 0;
    double bucket_ = 0;
    std::array<int, 3> n_{};
    std::vector<std::uint32_t> start_;  // CSR over buckets
    std::vector<std::uint32_t> items_;
};

// Where a walk is stopped without hitting.
struct Fence {
    enum class Kind { None, SupBall, EuclidBall } kind = Kind::None;
    Point center{};
    double radius = 0;

    static Fence none() { return {}; }
    static Fence sup_ball(const Point& c, double r) { return {Kind::SupBall, c, r}; }
    static Fence euclid_ball(const Point& c, double r) { return {Kind::EuclidBall, c, r}; }
    // distance from x to the fence boundary, negative outside
    double inside_distance(const Point& x) const;
};

struct HitEstimate {
    double p = 0;
    double se = 0;
    double remainder = 0;   // mass of walks cut off by the step or re-entry cap
    std::size_t n = 0;
    double mean_steps = 0;
};

struct HitOptions {
    enum class Method { WalkOnSpheres, Euler } method = Method::WalkOnSpheres;
    std::size_t n_paths = 10000;
    std::uint64_t seed = 1;
    std::string kind = "hit";   // stream name
    double abs_eps = 0;         // WoS absorption; 0: 1e-4 * diameter of the target
    double dt = 0;              // Euler; 0: (diameter / 200)^2
    int max_reentries = 10000;
    std::size_t max_steps = 50'000'000;
};

// P_x0[H_target < fence exit].  With no fence the walk runs to infinity: once
// it is at distance 2r from the target's enclosing ball (radius r), it returns
// with probability r/|x - c| at a point drawn from harmonic measure.  Stream
// for path i: (seed, kind, i).
HitEstimate hit_before(const Point& x0, const ObstacleSet& target, const Fence& fence,
                       const HitOptions& opt);

// One walk; true if the target is hit.
bool wos_walk(Point x, const ObstacleSet& target, const Fence& fence, Stream& rng, double abs_eps,
              int max_reentries, long* steps, bool* cut);
bool euler_walk(Point x, const ObstacleSet& target, const Fence& fence, Stream& rng, double dt,
                int max_reentries, std::size_t max_steps, long* steps, bool* cut);

// Point of the sphere |y - c| = a hit from x (|x - c| > a), given that it is hit.
Point sphere_reentry(const Point& x, const Point& c, double a, Stream& rng);

struct PorousInterfaceSpec {
    double eps = 0;
    double eta = 0;
    std::size_t cloud_size = 0;   // boundary points at spacing <= eps/4
    std::size_t tested = 0;       // points actually estimated
    double min_estimate = 1;
    double min_se = 0;
    Point worst{};
    bool certified = false;
    std::vector<Point> failing;
};

// P_x[H_Sigma < tau_eps] on a point cloud of the boundary of U0 of spacing
// <= eps/4, subsampled to max_points.  Certified when every estimate is at
// least eta - 3 SE.
PorousInterfaceSpec certify_interface(const ObstacleSet& sigma, const DyadicIndicator& u0,
                                      double eps, double eta, std::size_t n_paths,
                                      std::uint64_t seed, std::size_t max_points = 256);

// Boundary point cloud of U0 at spacing <= h.
std::vector<Point> boundary_cloud(const DyadicIndicator& u0, double h);

// Shell [-R,R]^3 \ (-R+t, R-t)^3 with square holes of side `hole` through it
// on a grid of pitch `spacing` on every face.  2R/spacing must be integral.
CompactSetSpec perforated_cube_shell(double R, double spacing, double hole, double thickness);

struct SolidificationMember {
    std::string name;
    DyadicIndicator u0;
    CompactSetSpec sigma;
    double eps = 0;
    int ell_star = 0;
};

struct SolidificationOptions {
    std::size_t n_paths = 20000;
    std::size_t cert_paths = 400;
    std::size_t cert_points = 64;
    bool certify = true;
    double eta = 0.05;
    std::uint64_t seed = 1;
};

struct SolidificationRow {
    std::string name;
    double eps = 0;
    int ell_star = 0;
    double u = 0;             // eps 2^ell_star
    bool included = true;
    std::string reason;       // why excluded
    double eta_hat = 0;       // certification minimum
    double p_escape = 0;      // sup over the start points of P_x[H_Sigma = inf]
    double se = 0;
    double remainder = 0;
    Point argmax{};
    std::vector<double> per_point;
};

// One row per member: start points are `starts` (points of A).  Members with
// U0 not in the class U_{l*,A} or Sigma not certified are excluded.
std::vector<SolidificationRow> solidification_experiment(const CompactSetSpec& A,
                                                         const std::vector<Point>& starts,
                                                         const std::vector<SolidificationMember>& family,
                                                         const SolidificationOptions& opt);

// Soft obstacle V >= 0.
struct SoftObstacle {
    std::function<double(const Point&)> V;
    // lower bound on the distance to {V > 0}; unset when unknown
    std::function<double(const Point&)> support_distance;
    Point center{};
    double support_radius = 0;   // {V > 0} inside B(center, support_radius); 0 = unbounded
    double vmax = 0;
    double length_scale = 0;     // sets the default time step

    static SoftObstacle constant(double lambda);
    // (a / eps^2) 1{d(x, S) <= eps}, S the boundary of U0
    static SoftObstacle boundary_layer(const DyadicIndicator& u0, double eps, double a);
};

struct Horizon {
    enum class Kind { Fixed, SupExit, Infinite } kind = Kind::Fixed;
    double T = 1;        // Fixed
    double radius = 1;   // SupExit, about the start

    static Horizon fixed(double T) { return {Kind::Fixed, T, 0}; }
    static Horizon sup_exit(double r) { return {Kind::SupExit, 0, r}; }
    static Horizon infinite() { return {Kind::Infinite, 0, 0}; }
};

struct FkOptions {
    std::size_t n_paths = 10000;
    std::uint64_t seed = 1;
    double dt = 0;          // 0: (eps/20)^2 from the obstacle scale, else 1e-3 T
    std::size_t max_steps = 100'000'000;
    double cutoff = 50;     // stop once int V > cutoff
};

struct FkEstimate {
    double value = 0;
    double se = 0;
    double remainder = 0;   // e^-cutoff bound plus cut walks
    std::size_t n = 0;
};

// E_x[exp(-int_0^H V(X_s) ds)], trapezoidal accumulation on Euler steps.
// Where the obstacle's support distance is known, the walk jumps by walk on
// spheres outside {V > 0}, which does not change the functional.
FkEstimate feynman_kac(const Point& x0, const SoftObstacle& v, const Horizon& h,
                       const FkOptions& opt);

} // namespace solidify
