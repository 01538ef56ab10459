#pragma once

#include <optional>
#include <string>
#include <vector>

#include "solidify/geometry.hpp"
#include "solidify/path.hpp"

namespace solidify {

class Stream;

// smallest L >= 5 with c0 2^-L <= 1/(200 J)
int min_separation(int d, int J);

struct ScaleLadder {
    int d = 3;
    int ell_star = 0;
    int J = 1;
    int L = 0;
    int I = 1;
    int L_J = 0;               // min_separation(d, J)
    int ell0 = 0;
    std::vector<int> a_star;   // I(J+1) levels, step L
    std::vector<int> a;        // I levels, step (J+1)L
    double alpha_tilde = 0;    // 4^-d / 3

    // [1/2 - j/(100J), 1/2 + j/(100J)]
    std::pair<double, double> interval(int j) const;
};

// L defaults to L(J).  Throws if L < L(J).
ScaleLadder ladder(int d, int ell_star, int J, int I, std::optional<int> L = std::nullopt);

// l + jL for l in labels, 1 <= j <= J
std::vector<int> intermediate_labels(const ScaleLadder& s, const std::vector<int>& labels);
std::vector<int> all_labels(const ScaleLadder& s, const std::vector<int>& labels);

struct ResonanceCount {
    int count = 0;
    bool in_res = false;
};

ResonanceCount resonance_membership(const Point& x, const DyadicIndicator& u,
                                    const ScaleLadder& s);
ResonanceCount resonance_membership(const Point& x, const DyadicIndicator& u,
                                    const std::vector<int>& levels, int k, double alpha_tilde);

// Lower bound on the sup-distance from y to {sigma_hat at radius r in [lo,hi]},
// capped at cap.  0 when y is already in the set.
double safe_distance(const DyadicIndicator& u, const Point& y, double r, double lo, double hi,
                     double cap);

struct IFamilyRecord {
    std::vector<double> S;      // S_0 = 0, S_1..S_I
    std::vector<int> labels;    // label set
    std::vector<int> lhat;      // lhat_1..lhat_I
    std::vector<double> T;      // T_1..T_I
    bool complete = false;
};

// The greedy family: S_i is the first time some unused label crosses
// sigma_hat = 1/2; lhat_i the largest label at 1/2 there.
IFamilyRecord track_ifamily(const PathSample& path, const DyadicIndicator& u,
                            const std::vector<int>& labels, double tol = 1e-6);

struct GammaChain {
    std::vector<double> gamma;     // path version: times; +inf if not reached
    std::vector<Point> points;     // X at gamma_j
    bool event_c = false;
    bool displacement_ok = true;   // (3/2) 2^-l_j bound, checked on success
    bool endpoint_ok = true;       // sigma_tilde in [alpha, 1-alpha] at X_{gamma_J}
    std::vector<double> endpoint_tilde;
    double max_ratio = 0;          // max_j sup displacement / 2^-l_j
};

// On a discrete path.  Requires sigma_hat_{l_0}(X_0) = 1/2 and l_{j+1} >= l_j + L(J).
GammaChain gamma_stopping_chain(const PathSample& path, const DyadicIndicator& u,
                                const std::vector<int>& scales, double tol = 1e-6);

// Same chain for exact Brownian motion, sampled by walk on spheres.
// `abs_eps` is the absorption width relative to 2^-l of the stage.
GammaChain gamma_chain_wos(const Point& x0, const DyadicIndicator& u, const std::vector<int>& scales,
                           Stream& rng, double abs_eps = 1e-4);

// Bound on Gamma~_J(I) from the recursion, clipped to [0,1].
double recursion_bound(int J, int I, double c2);

struct AvoidanceResult {
    Point x{};
    double p_avoid = 0;
    double se = 0;
    double remainder = 1;   // bound on P[tau_R < H_Res < inf]
    long hits = 0;
    long escapes = 0;
    double mean_steps = 0;
};

struct AvoidanceOptions {
    double R_out = 0;          // 0: 8 * diameter of support and x
    double abs_eps = 1e-6;     // absorption width, relative to 2^-l0
    bool require_class = true; // certify U0 in U_{l*,{x}}
    std::uint64_t seed = 1;
    std::size_t n_paths = 1000;
};

// P_x[H_Res > tau_R] by walk on spheres, for each x.  Each run translates the
// domain by -x and starts at the origin.  Paths for replica i use stream
// (seed, "avoidance", i) regardless of x.
std::vector<AvoidanceResult> avoidance_experiment(const std::vector<Point>& xs,
                                                  const DyadicIndicator& u, const ScaleLadder& s,
                                                  const AvoidanceOptions& opt);

} // namespace solidify
