#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "solidify/geometry.hpp"
#include "solidify/potential.hpp"

namespace solidify {

class Stream;

// Lattice box lo + [0, side)^3.
struct LatticeBox {
    Site lo{};
    Site side{1, 1, 1};

    static LatticeBox cube(const Site& lo, long side) { return {lo, {side, side, side}}; }
    bool contains(const Site& x) const
    {
        for (int i = 0; i < 3; ++i)
            if (x[i] < lo[i] || x[i] >= lo[i] + side[i]) return false;
        return true;
    }
    bool contains(const LatticeBox& b) const;
    std::size_t size() const { return std::size_t(side[0] * side[1] * side[2]); }
    std::size_t index(const Site& x) const
    {
        return std::size_t(((x[0] - lo[0]) * side[1] + (x[1] - lo[1])) * side[2] + (x[2] - lo[2]));
    }
    Site site(std::size_t k) const;
    long diameter() const; // sup-norm
    LatticeBox dilated(long r) const;
};

// Neighbour offsets; step code c moves along axis c/2, sign + when c is odd.
inline void apply_step(Site& x, std::uint8_t c) { x[c >> 1] += (c & 1) ? 1 : -1; }

// Six-valued steps drawn three bits at a time with rejection.
class StepSource {
  public:
    explicit StepSource(Stream& rng) : rng_(rng) {}
    std::uint8_t next();

  private:
    Stream& rng_;
    std::uint64_t bits_ = 0;
    int left_ = 0;
};

// n_steps steps, or until the walk leaves `box` when n_steps = 0.
std::vector<Site> sample_srw(const Site& x0, std::size_t n_steps, std::uint64_t seed,
                             const LatticeBox* box = nullptr);

// Walk from `start` until it leaves the halo box.
struct Segment {
    Site start{};
    std::vector<std::uint8_t> steps;
};

// Forward part of one trajectory: the first segment starts at the entrance
// point in the window; each later one at a return to the window from
// outside the halo box.
struct Trajectory {
    double label = 0;       // thinning label, uniform on [0, u_max]
    std::vector<Segment> segments;
    bool cut = false;       // return cap reached
};

// Interlacements at level u_max seen from the cube window W.  Trajectories
// with label <= u form the level-u sample.  Outside the halo box a walk at y
// comes back with probability h_W(y) = sum_z g~(y - z) e_W(z), entering at z
// with weight g~(y - z) e_W(z) (exact as |y| -> infinity).
struct InterlacementSample {
    double u_max = 0;
    LatticeBox window;
    long halo = 0;
    LatticeBox halo_box;
    double cap_window = 0;
    double return_bound = 0;   // max of h_W on the halo boundary
    std::size_t returns = 0;   // segments beyond the first, all trajectories
    std::uint64_t seed = 0;
    std::vector<Trajectory> trajectories;   // sorted by label
    std::vector<double> first_label;        // per window site; inf when never visited

    std::size_t count(double u) const;       // trajectories at level u
    bool occupied(const Site& x, double u) const { return first_label[window.index(x)] <= u; }
    bool vacant(const Site& x, double u) const { return !occupied(x, u); }
    // visits every site of trajectory k in order (segments back to back),
    // stops when f returns false
    void walk(std::size_t k, const std::function<bool(const Site&)>& f) const;
};

// halo = 0 picks 4 diam(W); halo < 2 diam(W) is an error.
InterlacementSample sample_interlacement(double u_max, const LatticeBox& window, long halo,
                                         std::uint64_t seed);

// No nearest-neighbour path of vacant sites from A to {|x|_inf = R} inside
// {|x|_inf <= R}.  True when A is empty.
bool disconnect_detect(const std::function<bool(const Site&)>& vacant, const std::vector<Site>& A,
                       long R);

// (NA) cap Z^3 and [MN]; throws unless A_N avoids {|x|_inf >= [MN]}.
std::vector<Site> blow_up(const CompactSetSpec& A, double N);
long sphere_radius(double M, double N);

struct BoxTriple {
    Site z{};
    long L = 1;
    long K = 5;
    LatticeBox B() const { return LatticeBox::cube(z, L); }
    LatticeBox D() const { return LatticeBox::cube({z[0] - 3 * L, z[1] - 3 * L, z[2] - 3 * L}, 7 * L); }
    LatticeBox U() const
    {
        long a = -K * L + 1;
        return LatticeBox::cube({z[0] + a, z[1] + a, z[2] + a}, 2 * K * L - 2);
    }
};

// One excursion: trajectory index and the step range [begin, end] from the
// entrance into D to the first visit of the outer boundary of U.
struct Excursion {
    std::size_t traj = 0;
    double label = 0;
    std::size_t begin = 0, end = 0;
};

// Excursions of a single path (site sequence).
std::vector<std::pair<std::size_t, std::size_t>> path_excursions(const std::vector<Site>& path,
                                                                 const BoxTriple& t);
// All excursions of the sample, ordered by (label, time).
std::vector<Excursion> excursions(const InterlacementSample& s, const BoxTriple& t);
// N_u(D_z).
std::size_t excursion_count(const InterlacementSample& s, const BoxTriple& t, double u);

struct GoodParams {
    double alpha = 1.2, beta = 1.0, gamma = 0.8;
    double min_diameter_frac = 0.1;   // cluster diameter >= frac * L
};

struct BoxClassification {
    bool good = false;
    bool determined = false;   // at least floor(alpha cap(D)) excursions recorded
    bool cluster = false;      // (i)
    bool connected = false;    // (ii)
    bool local_time = false;   // (iii)
    double cap_D = 0;
    std::size_t n_alpha = 0, n_beta = 0, recorded = 0;
    long cluster_diameter = 0;
    double boundary_time = 0;  // e_D-weighted visits to the inner boundary of D
    std::string flags() const;
};

BoxClassification classify_box(const InterlacementSample& s, const BoxTriple& t, const GoodParams& p);

enum class ChainResult { Found, Failed, Skipped };
// chain of triples with nearest-neighbour bases in L Z^3
ChainResult connectivity_check(const InterlacementSample& s, const std::vector<BoxTriple>& chain,
                               const GoodParams& p, double u);

// exp{-(sqrt g - sqrt u / (1 - et (sqrt(ubar/u) - 1))) (sqrt g - sqrt u) cap}
double exponential_bound_rhs(double cap_C, double u, double gamma, double eps_tilde, double ubar);
// same with cap~(C) from the boxes B_z, z in bases, after checking the
// 2K+3 separation
double exponential_bound_rhs(const std::vector<Site>& bases, long L, long K, double u, double gamma,
                             double eps_tilde, double ubar);

struct DisconnectionEstimate {
    double p = 0;
    double se = 0;
    std::size_t n = 0;
    std::size_t a_sites = 0;
    long R = 0;
    double return_bound = 0;
};
// Interlacement disconnection of A_N from S_N at level u, window [-R, R]^3.
DisconnectionEstimate disconnection_mc(const CompactSetSpec& A, double M, double N, double u,
                                       std::size_t n_samples, std::uint64_t seed, long halo = 0);
// One flag per sample and level (levels ascending), from a single sample at
// the top level.
std::vector<std::vector<bool>> disconnection_levels(const CompactSetSpec& A, double M, double N,
                                                    const std::vector<double>& levels,
                                                    std::size_t n_samples, std::uint64_t seed,
                                                    long halo = 0);
// Random walk from x until it leaves B(0, horizon_factor M N).
DisconnectionEstimate disconnection_srw(const CompactSetSpec& A, double M, double N,
                                        std::size_t n_samples, std::uint64_t seed,
                                        const Site& x = {0, 0, 0}, double horizon_factor = 8);

} // namespace solidify
