#include "solidify/density.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace solidify {

namespace {

void check_level(const DyadicIndicator& u, int ell)
{
    if (ell > u.ell_max() + 8)
        throw std::invalid_argument("density: level " + std::to_string(ell) +
                                    " is finer than the domain resolution");
    if (ell < u.root_level() - 64) throw std::invalid_argument("density: level too coarse");
}

double ball_volume(int d, double r) { return std::ldexp(1.0, d) * std::pow(r, d); }

// integral over [a,b] of t -> |[x-r,x+r] ∩ [t-s,t+s]|, piecewise linear in t
double overlap_integral(double x, double r, double s, double a, double b)
{
    if (b <= a) return 0.0;
    auto f = [&](double t) {
        return std::max(0.0, std::min(x + r, t + s) - std::max(x - r, t - s));
    };
    double knots[6] = {a, b, x - r - s, x - r + s, x + r - s, x + r + s};
    std::sort(knots, knots + 6);
    double sum = 0;
    for (int i = 0; i + 1 < 6; ++i) {
        double p = std::max(knots[i], a), q = std::min(knots[i + 1], b);
        if (q <= p) continue;
        sum += 0.5 * (f(p) + f(q)) * (q - p);
    }
    return sum;
}

} // namespace

double sigma_hat(const DyadicIndicator& u, const Point& x, int ell)
{
    check_level(u, ell);
    double r = std::ldexp(1.0, -ell);
    double v = u.clip_volume(Box::cube(u.dimension(), x, r), DyadicIndicator::Side::U1);
    return std::clamp(v / ball_volume(u.dimension(), r), 0.0, 1.0);
}

double sigma_tilde(const DyadicIndicator& u, const Point& x, int ell)
{
    return sigma_hat(u, x, ell - 2);
}

double averaging_constant(int d) { return d * std::ldexp(1.0, d - 1); }

double box_average(const DyadicIndicator& u, const Point& x, int ell, int ell_prime)
{
    if (ell_prime <= ell) throw std::invalid_argument("box_average: need l' > l");
    check_level(u, ell_prime);
    const int d = u.dimension();
    double r = std::ldexp(1.0, -ell), s = std::ldexp(1.0, -ell_prime);
    Box reach = Box::cube(d, x, r + s);
    double in_u0 = 0;
    u.visit_full_leaves(reach, [&](const Box& leaf) {
        double p = 1.0;
        for (int i = 0; i < d && p > 0; ++i)
            p *= overlap_integral(x[i], r, s, leaf.lo[i], leaf.hi[i]);
        in_u0 += p;
    });
    double beta = 1.0 - in_u0 / (ball_volume(d, r) * ball_volume(d, s));
    return std::clamp(beta, 0.0, 1.0);
}

std::string AlternativeReport::branch() const
{
    if (branch_i && branch_ii) return "both";
    if (branch_i) return "i";
    if (branch_ii) return "ii";
    return "none";
}

AlternativeReport density_alternative(const DyadicIndicator& u, const Point& x, int ell,
                                      int ell_prime, double delta, std::size_t max_cells)
{
    AlternativeReport rep;
    rep.beta = box_average(u, x, ell, ell_prime);
    rep.delta = delta;
    if (!(delta >= 0) || delta > std::min(rep.beta, 1.0 - rep.beta))
        throw std::invalid_argument("density_alternative: need 0 <= delta <= beta ^ (1-beta)");

    const int d = u.dimension();
    const double s = std::ldexp(1.0, -ell_prime);
    const double norm = ball_volume(d, s);
    const double lip = std::ldexp(1.0, ell_prime) * d;
    const double hi_cut = rep.beta + delta, lo_cut = rep.beta - delta;
    const double total = ball_volume(d, std::ldexp(1.0, -ell));
    using Side = DyadicIndicator::Side;

    struct Cell {
        Point c;
        double h;
    };
    std::deque<Cell> queue{{x, std::ldexp(1.0, -ell)}};
    rep.undecided = 1.0;
    auto decided = [&] {
        rep.branch_i = rep.upper_tail >= delta / 2 && rep.lower_tail >= delta / 2;
        rep.branch_ii = rep.middle >= 0.25 - delta / 2;
        return rep.branch_i || rep.branch_ii;
    };
    // once one branch is certified, refine a little longer to try the other
    std::size_t budget = max_cells;
    while (!queue.empty() && rep.cells < budget) {
        if (decided()) {
            if (rep.branch_i && rep.branch_ii) break;
            budget = std::min(budget, rep.cells + 2048);
        }
        Cell cell = queue.front();
        queue.pop_front();
        ++rep.cells;
        double h = cell.h;
        double centre = u.clip_volume(Box::cube(d, cell.c, s), Side::U1) / norm;
        Box outer = Box::cube(d, cell.c, s + h);
        double lo = std::max(centre - lip * h, 1.0 - u.clip_volume(outer, Side::U0) / norm);
        double hi = std::min(centre + lip * h, u.clip_volume(outer, Side::U1) / norm);
        if (h < s) {
            Box inner = Box::cube(d, cell.c, s - h);
            lo = std::max(lo, u.clip_volume(inner, Side::U1) / norm);
            hi = std::min(hi, 1.0 - u.clip_volume(inner, Side::U0) / norm);
        }
        lo = std::max(lo, 0.0);
        hi = std::min(hi, 1.0);
        double mass = std::pow(2 * h, d) / total;
        if (lo > hi_cut) {
            rep.upper_tail += mass;
        } else if (hi < lo_cut) {
            rep.lower_tail += mass;
        } else if (lo >= lo_cut && hi <= hi_cut) {
            rep.middle += mass;
        } else {
            for (int k = 0; k < (1 << d); ++k) {
                Cell child{cell.c, h / 2};
                for (int i = 0; i < d; ++i) child.c[i] += ((k >> i) & 1) ? h / 2 : -h / 2;
                queue.push_back(child);
            }
            continue;
        }
        rep.undecided -= mass;
    }
    decided();
    rep.undecided = std::max(0.0, rep.undecided);
    return rep;
}

namespace {

// point of A closest (Euclidean) to c
Point nearest_in(const CompactSetSpec& a, const Point& c)
{
    Point best{};
    double best_d = INFINITY;
    for (const auto& p : a.parts) {
        Point q{};
        double dist2 = 0;
        for (int i = 0; i < a.d; ++i) {
            q[i] = std::clamp(c[i], p.lo[i], p.hi[i]);
            dist2 += (c[i] - q[i]) * (c[i] - q[i]);
        }
        double dist = std::sqrt(dist2);
        if (p.rho > 0) {
            if (dist <= p.rho) {
                q = c;
                dist = 0;
            } else {
                for (int i = 0; i < a.d; ++i) q[i] += (c[i] - q[i]) * (p.rho / dist);
                dist -= p.rho;
            }
        }
        if (dist < best_d) {
            best_d = dist;
            best = q;
        }
    }
    return best;
}

bool meets(const CompactSetSpec& a, const Box& cell)
{
    Point c{};
    for (int i = 0; i < a.d; ++i) c[i] = 0.5 * (cell.lo[i] + cell.hi[i]);
    Point q = nearest_in(a, c);
    // nearest_in is exact for one primitive; a cell can still meet A elsewhere,
    // so fall back on the distance test
    if (cell.contains(q)) return true;
    double half_diag = 0;
    for (int i = 0; i < a.d; ++i) half_diag += std::pow(0.5 * (cell.hi[i] - cell.lo[i]), 2);
    return a.euclid_distance(c) <= std::sqrt(half_diag);
}

enum class CellVerdict { Pass, Fail, Unknown };

// Adaptive cover of A by cells; `test` decides each cell or asks to split.
CellVerdict cover(const CompactSetSpec& a, int max_depth,
                  const std::function<CellVerdict(const Box&, Point*)>& test, Point* witness)
{
    struct Item {
        Box b;
        int depth;
    };
    std::vector<Item> stack{{a.bounding_box(), 0}};
    bool unknown = false;
    while (!stack.empty()) {
        Item it = stack.back();
        stack.pop_back();
        if (!meets(a, it.b)) continue;
        CellVerdict v = test(it.b, witness);
        if (v == CellVerdict::Pass) continue;
        if (v == CellVerdict::Fail) return v;
        if (it.depth >= max_depth) {
            unknown = true;
            for (int i = 0; i < a.d; ++i) (*witness)[i] = 0.5 * (it.b.lo[i] + it.b.hi[i]);
            continue;
        }
        double wmax = 0;
        for (int i = 0; i < a.d; ++i) wmax = std::max(wmax, it.b.hi[i] - it.b.lo[i]);
        std::vector<int> axes;
        for (int i = 0; i < a.d; ++i)
            if (it.b.hi[i] - it.b.lo[i] > 0.5 * wmax) axes.push_back(i);
        int n = 1 << axes.size();
        for (int k = 0; k < n; ++k) {
            Box child = it.b;
            for (std::size_t j = 0; j < axes.size(); ++j) {
                int i = axes[j];
                double mid = 0.5 * (it.b.lo[i] + it.b.hi[i]);
                if ((k >> j) & 1)
                    child.lo[i] = mid;
                else
                    child.hi[i] = mid;
            }
            stack.push_back({child, it.depth + 1});
        }
    }
    return unknown ? CellVerdict::Unknown : CellVerdict::Pass;
}

} // namespace

MembershipReport class_membership(const CompactSetSpec& a, int ell_star,
                                  const DyadicIndicator& u, int max_depth)
{
    MembershipReport rep;
    if (a.parts.empty()) {
        rep.result = Membership::Member;
        rep.note = "A is empty";
        return rep;
    }
    const int d = u.dimension();
    using Side = DyadicIndicator::Side;
    const int top = std::max(ell_star, u.ell_max() + 3);
    Box bb = a.bounding_box();
    for (int ell = ell_star; ell <= top; ++ell) {
        double r = std::ldexp(1.0, -ell);
        // whole neighbourhood inside U0: this level and all finer ones pass
        if (u.clip_volume(bb.dilated(r), Side::U1) == 0.0) {
            rep.result = Membership::Member;
            rep.note = "A at sup-distance >= 2^-" + std::to_string(ell) + " from U1";
            return rep;
        }
        double norm = ball_volume(d, r);
        auto test = [&](const Box& cell, Point* witness) {
            if (u.clip_volume(cell.dilated(r), Side::U1) / norm <= 0.5) return CellVerdict::Pass;
            Point c{};
            for (int i = 0; i < d; ++i) c[i] = 0.5 * (cell.lo[i] + cell.hi[i]);
            Point q = nearest_in(a, c);
            if (cell.contains(q) && sigma_hat(u, q, ell) > 0.5) {
                *witness = q;
                return CellVerdict::Fail;
            }
            return CellVerdict::Unknown;
        };
        CellVerdict v = cover(a, max_depth, test, &rep.witness);
        if (v == CellVerdict::Fail) {
            rep.result = Membership::NotMember;
            rep.level = ell;
            rep.note = "sigma_hat > 1/2 at a point of A";
            return rep;
        }
        if (v == CellVerdict::Unknown) {
            rep.result = Membership::Undetermined;
            rep.level = ell;
            rep.note = "cell refinement budget exhausted";
            return rep;
        }
    }
    // levels above `top`: need A at sup-distance 2^-top from U1
    double r = std::ldexp(1.0, -top);
    auto test = [&](const Box& cell, Point*) {
        return u.clip_volume(cell.dilated(r), Side::U1) == 0.0 ? CellVerdict::Pass
                                                               : CellVerdict::Unknown;
    };
    CellVerdict v = cover(a, max_depth, test, &rep.witness);
    if (v == CellVerdict::Pass) {
        rep.result = Membership::Member;
        rep.note = "levels above " + std::to_string(top) + " implied by sup-distance";
    } else {
        rep.result = Membership::Undetermined;
        rep.level = top + 1;
        rep.note = "undetermined above ell_max";
    }
    return rep;
}

} // namespace solidify
