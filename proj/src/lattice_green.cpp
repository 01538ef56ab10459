#include "solidify/potential.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_integration.h>
#include <gsl/gsl_sf_bessel.h>
#include <gsl/gsl_sf_gamma.h>

namespace solidify {

double green_continuum(int d, double r)
{
    if (d < 3) throw std::invalid_argument("green_continuum: d >= 3");
    return gsl_sf_gamma(0.5 * d - 1.0) / (2.0 * std::pow(M_PI, 0.5 * d)) * std::pow(r, 2.0 - d);
}

namespace {

constexpr int kGauss = 32;

// nodes on [0,1] then [2^j, 2^{j+1}] up to T; the rest by the Bessel tail
struct Rule {
    std::vector<double> t, w;
    double T = 0;
};

Rule make_rule(double T)
{
    Rule r;
    r.T = T;
    gsl_integration_glfixed_table* tab = gsl_integration_glfixed_table_alloc(kGauss);
    auto panel = [&](double a, double b) {
        for (int i = 0; i < kGauss; ++i) {
            double xi, wi;
            gsl_integration_glfixed_point(a, b, i, &xi, &wi, tab);
            r.t.push_back(xi);
            r.w.push_back(wi);
        }
    };
    panel(0.0, 1.0);
    for (double a = 1.0; a < T; a *= 2) panel(a, 2 * a);
    gsl_integration_glfixed_table_free(tab);
    return r;
}

// int_T^inf prod_i e^{-z} I_{n_i}(z), z = t/3, from the large-z expansion
double tail(const Site& n, double T)
{
    double mu[3], a1 = 0, a2 = 0;
    for (int i = 0; i < 3; ++i) {
        mu[i] = 4.0 * double(n[i]) * double(n[i]);
        a1 -= (mu[i] - 1) / 8;
        a2 += (mu[i] - 1) * (mu[i] - 9) / 128;
    }
    for (int i = 0; i < 3; ++i)
        for (int j = i + 1; j < 3; ++j) a2 += (mu[i] - 1) * (mu[j] - 1) / 64;
    // (2 pi t / 3)^{-3/2} (1 + 3 a1 / t + 9 a2 / t^2)
    double c = std::pow(2 * M_PI / 3, -1.5);
    return c * (2 / std::sqrt(T) + 3 * a1 * (2.0 / 3) * std::pow(T, -1.5) +
                9 * a2 * 0.4 * std::pow(T, -2.5));
}

double rule_cutoff(long nmax)
{
    double T = std::ldexp(1.0, 24);
    while (T < 200.0 * double(nmax) * double(nmax)) T *= 2;
    return T;
}

// e^{-z} I_n(z) for n = 0..nmax; orders that underflow are 0
void bessel_scaled(long nmax, double z, double* out)
{
    gsl_error_handler_t* old = gsl_set_error_handler_off();
    if (gsl_sf_bessel_In_scaled_array(0, int(nmax), z, out) != GSL_SUCCESS) {
        for (long n = 0; n <= nmax; ++n) {
            gsl_sf_result r;
            out[n] = gsl_sf_bessel_In_scaled_e(int(n), z, &r) == GSL_SUCCESS ? r.val : 0.0;
        }
    }
    gsl_set_error_handler(old);
}

} // namespace

double LatticeGreen::quadrature(const Site& x)
{
    Site n{std::labs(x[0]), std::labs(x[1]), std::labs(x[2])};
    long nmax = std::max({n[0], n[1], n[2]});
    Rule rule = make_rule(rule_cutoff(nmax));
    std::vector<double> bessel(nmax + 1);
    double sum = 0;
    for (std::size_t k = 0; k < rule.t.size(); ++k) {
        bessel_scaled(nmax, rule.t[k] / 3, bessel.data());
        sum += rule.w[k] * bessel[n[0]] * bessel[n[1]] * bessel[n[2]];
    }
    return sum + tail(n, rule.T);
}

double LatticeGreen::far_field(const Site& x)
{
    double r2 = 0, s4 = 0;
    for (long v : x) {
        double f = double(v);
        r2 += f * f;
        s4 += f * f * f * f;
    }
    double r = std::sqrt(r2);
    return 3.0 / (2 * M_PI * r) * (1.0 + (5.0 * s4 / (r2 * r2) - 3.0) / (8.0 * r2));
}

std::size_t LatticeGreen::key(long a, long b, long c)
{
    // a <= b <= c <= kTable
    constexpr std::size_t n = kTable + 1;
    return (std::size_t(c) * n + std::size_t(b)) * n + std::size_t(a);
}

LatticeGreen::LatticeGreen()
{
    constexpr int n = kTable + 1;
    table_.assign(std::size_t(n) * n * n, 0.0);
    Rule rule = make_rule(rule_cutoff(kTable));
    std::vector<double> bessel(n);
    // all entries share the nodes; accumulate node by node
    for (std::size_t k = 0; k < rule.t.size(); ++k) {
        bessel_scaled(kTable, rule.t[k] / 3, bessel.data());
        double w = rule.w[k];
        for (int c = 0; c < n; ++c)
            for (int b = 0; b <= c; ++b) {
                double wbc = w * bessel[b] * bessel[c];
                for (int a = 0; a <= b; ++a) table_[key(a, b, c)] += wbc * bessel[a];
            }
    }
    for (int c = 0; c < n; ++c)
        for (int b = 0; b <= c; ++b)
            for (int a = 0; a <= b; ++a) table_[key(a, b, c)] += tail({a, b, c}, rule.T);
}

const LatticeGreen& LatticeGreen::instance()
{
    static const LatticeGreen g;
    return g;
}

double LatticeGreen::operator()(long x, long y, long z) const
{
    long a = std::labs(x), b = std::labs(y), c = std::labs(z);
    if (a > b) std::swap(a, b);
    if (b > c) std::swap(b, c);
    if (a > b) std::swap(a, b);
    if (c <= kTable) return table_[key(a, b, c)];
    return far_field({a, b, c});
}

} // namespace solidify
