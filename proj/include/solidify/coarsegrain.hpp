#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "solidify/geometry.hpp"
#include "solidify/interlacements.hpp"

namespace solidify {

// gamma_N = scale / max(floor, log log N), capped at 1
struct GammaRule {
    double scale = 1;
    double floor = 3;
    double operator()(double N) const;
};

// Scales and thresholds of the pipeline, in lattice units.  L0, Lhat0 and
// spacing follow N through the gamma rule unless set (> 0).
struct ScaleConfig {
    int d = 3;
    long N = 64;
    double M = 1.5;
    double u = 0.1;
    double alpha = 0.4, beta = 0.3, gamma = 0.2;
    double eps_tilde = 0.1;
    double u_bar = 0;          // 0: unset
    long K = 5;
    GammaRule rule;
    long L0 = 0;
    long Lhat0 = 0;
    long spacing = 0;          // of the Lhat0 lattice
    double c_prime = 0.25;     // selection target constant

    double gamma_N() const;
    long l0() const;
    long lhat0() const;
    long hat_spacing() const;
    long delta_radius() const; // sup radius of the balls forming Delta, integer
    long kbar() const { return 2 * K + 3; }
    long target() const;       // boxes per selected point
    long eval_radius() const;  // sigma_hat = 1 beyond (M+1)N + Lhat0 + L0
    // throws SchemaError naming the violated condition
    void validate() const;

    static double N_L(double L);   // L^(d-1) / log L
    nlohmann::json to_json() const;
    static ScaleConfig from_json(const nlohmann::json& j);
};

// Status of the L0-box with index j (z = L0 j).  high: N_u(D_z) >= beta cap(D_z).
struct BoxStatus {
    bool good = true;
    bool high = false;
    bool passable() const { return good && !high; }
    bool selectable() const { return good && high; }
};
using BoxField = std::function<BoxStatus(const Site& j)>;

// Synthetic field: boxes whose centre has sup-norm in [r_in N, r_out N] block
// (selectable, bad with probability p_bad); elsewhere passable, bad with
// probability p_noise.
struct ShellFixture {
    double r_in = 1.2, r_out = 1.3;
    double p_bad = 0.0;
    double p_noise = 0.0;
    std::uint64_t seed = 1;
};
BoxField shell_field(const ScaleConfig& c, const ShellFixture& f);

// Field read off an interlacement sample; the window must hold U_z of every
// box asked for.
BoxField interlacement_field(const InterlacementSample& s, const ScaleConfig& c, const GoodParams& p);

// Cubic block of bytes indexed by sites in [lo, lo + n)^3.
struct Grid3 {
    Site lo{};
    long n = 0;
    std::vector<std::uint8_t> v;

    Grid3() = default;
    Grid3(const Site& lo, long n, std::uint8_t fill = 0);
    bool inside(const Site& x) const
    {
        for (int i = 0; i < 3; ++i)
            if (x[i] < lo[i] || x[i] >= lo[i] + n) return false;
        return true;
    }
    std::size_t index(const Site& x) const
    {
        return std::size_t(((x[0] - lo[0]) * n + (x[1] - lo[1])) * n + (x[2] - lo[2]));
    }
    Site site(std::size_t k) const;
    std::uint8_t at(const Site& x) const { return v[index(x)]; }
};

// U^1 over L0-boxes: BFS from the boxes contained in the complement of
// B(0,(M+1)N) through passable boxes; the last box of a path may be any box.
struct BlockingField {
    long L0 = 1;
    Grid3 boxes;               // 1 where the box is in U^1
    Grid3 status;              // bit 0 good, bit 1 high
    long r_outer = 0;          // (M+1)N
    bool in_u1_site(const Site& x) const;
    std::size_t u1_count() const;
};
BlockingField blocking_field(const BoxField& f, const ScaleConfig& c);

// |U^1 cap B(x, Lhat0)|, exact box counting; B(x, Lhat0) must lie in the
// box grid of b (|x|_inf <= eval_radius).
class DensityCounter {
  public:
    DensityCounter(const BlockingField& b, long Lhat0);
    long long count(const Site& x) const;
    long long volume() const { return vol_; }
    // counts at (x0, lo1 + a s, lo2 + b s), a, b < n; out is n x n
    void slice(long x0, long lo1, long lo2, long n, long s, std::vector<long long>& out) const;

  private:
    const BlockingField& b_;
    long R_;
    long long vol_;
    std::vector<std::int32_t> p0_;   // prefix sums along axis 0 of the box grid
    long long p0_range(long j0a, long j0b, long j1, long j2) const; // boxes j0a..j0b
};

// Sites of the Lhat0 lattice with 1/4 <= sigma_hat <= 3/4, their
// Delta-dilation and the unbounded component of its complement.  Cells are
// unit cubes [k, k+1)^3.
struct Segmentation {
    long s = 1;                 // lattice spacing
    long r_delta = 1;
    long R = 0;                 // sigma_hat evaluated on [-R, R]^3
    Grid3 shat;                 // per site of [-R, R]^3: 1 on S^_N
    Grid3 core;                 // sites y with B(y, Lhat0 + L0) inside A_N
    std::size_t shat_count = 0;
    long shat_radius = 0;       // max |x|_inf over S^_N
    Grid3 blocked;              // cells meeting Delta
    Grid3 u1;                   // cells of U_1
    long long max_step = 0;     // max |count(x+e) - count(x)| over neighbour pairs
    std::size_t zero_inside = 0, one_outside = 0; // sigma_hat = 0 deep in A, = 1 far out
    bool site_in_delta(const Site& y) const;
    bool site_in_u1(const Site& y) const;   // not in Delta and next to a U_1 cell
    bool site_bounded(const Site& y) const; // not in Delta and in a bounded component
    // U_0 = complement of U_1, scaled by 1/N (N a power of two)
    DyadicIndicator u0_domain(long N) const;
};
Segmentation segmentation(const BlockingField& b, const ScaleConfig& c, const CompactSetSpec& A);

// Greedy maximal subset of S^_N with pairwise disjoint B(x, 2 Lhat0), in
// lexicographic order.
std::vector<Site> separated_selection(const Segmentation& g, long Lhat0);
bool selection_maximal(const Segmentation& g, const std::vector<Site>& sel, long Lhat0);

struct BoxSelection {
    Site x{};
    int axis = 0;                   // the projection drops this coordinate
    std::size_t image[3] = {0, 0, 0};
    std::size_t candidates = 0;     // boundary boxes that are selectable
    std::size_t boundary_boxes = 0;
    std::size_t boxes_near = 0;     // L0-boxes meeting B(x, Lhat0)
    std::vector<Site> boxes;        // box indices
    bool ok = false;
    std::string failure;
};
BoxSelection select_blocking_boxes(const Site& x, const BlockingField& b, const ScaleConfig& c);

struct ComplexityTally {
    double bits_segmentation = 0;   // 2 |Lhat lattice cap B(0,(M+2)N)|
    double bits_boxes = 0;          // sum over x of log2 d + log2 C(n_x, T)
    double bound = 0;               // closed form
    double total() const { return bits_segmentation + bits_boxes; }
};
double complexity_bound(const ScaleConfig& c);

struct CoarseGrainOutput {
    std::string stage = "done";    // first failing stage, or "done" / "no interface"
    bool disconnected = false;      // no U^1 box inside A_N
    long L0 = 0, Lhat0 = 0, s = 0, r_delta = 0;
    std::size_t u1_boxes = 0;
    std::size_t shat_count = 0;
    long shat_radius = 0;
    long long max_step = 0;
    bool slow_variation = false;
    std::vector<Site> selected;     // S~_N
    bool maximal = false;
    std::vector<BoxSelection> blocks;
    std::size_t failed_blocks = 0;
    std::vector<Site> C;            // box corners z = L0 j of the chosen boxes
    std::vector<Box> sigma;         // scaled filling
    ComplexityTally tally;
    // insulation: eroded core sites in bounded components, none in Delta
    std::size_t core_sites = 0, core_exposed = 0;
    bool insulated = false;
    Segmentation seg;
    nlohmann::json summary() const;
};
CoarseGrainOutput assemble_kappa(const BoxField& f, const ScaleConfig& c, const CompactSetSpec& A);

// Random nearest-neighbour paths from the eroded core of A_N to
// |x|_inf >= (M+2)N; counts the ones that stay outside Delta.
struct PathAudit {
    std::size_t paths = 0;
    std::size_t missed = 0;
};
PathAudit path_meets_interface(const CoarseGrainOutput& k, const ScaleConfig& c,
                               const CompactSetSpec& A, std::size_t n_paths, std::uint64_t seed);

// A' = {z in A : d_inf(z, complement) >= (Lhat0 + L0 + 1)/N} for a union
// of boxes (no balls).
CompactSetSpec eroded(const CompactSetSpec& A, double r);

struct PorosityAudit {
    std::size_t points = 0;
    double min_p = 1;
    double se = 0;        // of the minimising estimate
};
PorosityAudit porosity(const CoarseGrainOutput& k, const ScaleConfig& c, std::size_t n_points,
                       std::size_t n_paths, std::uint64_t seed);

struct BoundAssembly {
    double factor = 0;           // (sqrt g - sqrt u / (1 - et (sqrt(ubar/u) - 1))) (sqrt g - sqrt u)
    double cap_C = 0;            // discrete
    double cap_sigma = 0;
    double cap_a = 0;            // A'
    double per_kappa = 0;        // factor * min(cap~(C), N^(d-2) cap(Sigma) / d)
    double sigma_form = 0;       // -factor cap(Sigma) / d
    double limit_form = 0;       // -(sqrt ubar - sqrt u)^2 cap(A') / d
    double cap_ratio = 0;          // d cap~(C) / (N^(d-2) cap(Sigma))
    double hitting_bound = 0;    // inf over A' of h_Sigma
    double empirical = 0;        // -log p / N^(d-2), NaN when absent
    bool vacuous = false;
    nlohmann::json to_json() const;
};
BoundAssembly bound_assembly(const CoarseGrainOutput& k, const ScaleConfig& c, const CompactSetSpec& A_prime,
                             double p_hat = -1);

struct AuditLine {
    std::string name;
    bool pass = false;
    std::string detail;
};
// Finite-N evaluation over the sweep Ns.  rho is the user stub (may be empty).
std::vector<AuditLine> scale_audit(const ScaleConfig& c, const std::vector<double>& Ns,
                                   const std::function<double(double)>& rho = {});

} // namespace solidify
