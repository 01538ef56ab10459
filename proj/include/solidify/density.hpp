#pragma once

#include <string>
#include <vector>

#include "solidify/geometry.hpp"

namespace solidify {

// |B(x,2^-l) ∩ U1| / (2 * 2^-l)^d
double sigma_hat(const DyadicIndicator& u, const Point& x, int ell);
// |B(x,4*2^-l) ∩ U1| / (8 * 2^-l)^d, i.e. sigma_hat at level l-2
double sigma_tilde(const DyadicIndicator& u, const Point& x, int ell);

// d * 2^(d-1)
double averaging_constant(int d);

// Average of sigma_hat_{l'} over B(x,2^-l), in closed form.
double box_average(const DyadicIndicator& u, const Point& x, int ell, int ell_prime);

struct AlternativeReport {
    double beta = 0;    // box average
    double delta = 0;
    // certified lower bounds and the mass left undecided
    double upper_tail = 0; // {sigma > beta + delta}
    double lower_tail = 0; // {sigma < beta - delta}
    double middle = 0;     // {|sigma - beta| <= delta}
    double undecided = 0;
    bool branch_i = false;
    bool branch_ii = false;
    std::size_t cells = 0;
    bool holds() const { return branch_i || branch_ii; }
    std::string branch() const;
};

// Certified masses of mu_{x,l} for the three level sets of sigma_hat_{l'}.
// Cells are refined until one branch is certified or max_cells is reached.
AlternativeReport density_alternative(const DyadicIndicator& u, const Point& x, int ell,
                                      int ell_prime, double delta,
                                      std::size_t max_cells = 400000);

enum class Membership { Member, NotMember, Undetermined };

struct MembershipReport {
    Membership result = Membership::Undetermined;
    int level = 0;       // offending level, if any
    Point witness{};     // a point of A where sigma_hat > 1/2, or an undecided cell center
    std::string note;
    bool member() const { return result == Membership::Member; }
};

// Is sigma_hat_l <= 1/2 on A for every l >= ell_star?  Levels up to
// ell_max are certified cell by cell; higher levels follow when A keeps
// sup-distance 2^-(ell_max+1) from U1.
MembershipReport class_membership(const CompactSetSpec& a, int ell_star,
                                  const DyadicIndicator& u, int max_depth = 24);

} // namespace solidify
