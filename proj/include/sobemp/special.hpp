#pragma once

// Small special-function toolkit: normal CDF, regularized incomplete gamma,
// unit-ball volume / sphere area, and numerically careful helpers shared by
// the kernel integrals and the measure models.

#include <cmath>
#include <limits>
#include <stdexcept>

namespace sobemp::special {

inline constexpr double pi = 3.14159265358979323846264338327950288;

/// Standard normal CDF via erfc (accurate in both tails).
inline double normal_cdf(double z) {
    return 0.5 * std::erfc(-z * 0.70710678118654752440084436210485);
}

/// Standard normal density.
inline double normal_pdf(double z) {
    return 0.39894228040143267793994605993438 * std::exp(-0.5 * z * z);
}

/// Isotropic Gaussian density in d dimensions with variance var per axis,
/// evaluated at squared radius r2.
inline double gaussian_density(double r2, double var, int d) {
    return std::exp(-0.5 * r2 / var - 0.5 * d * std::log(2.0 * pi * var));
}

/// Volume of the unit ball in R^d: pi^{d/2} / Gamma(d/2 + 1).
inline double unit_ball_volume(int d) {
    if (d < 1) throw std::domain_error("unit_ball_volume: d must be >= 1");
    return std::exp(0.5 * d * std::log(pi) - std::lgamma(0.5 * d + 1.0));
}

/// Surface area of the unit sphere S^{d-1}: d * V_d.
inline double sphere_area(int d) {
    return d * unit_ball_volume(d);
}

namespace detail {

// Lower regularized incomplete gamma P(a, x) by series (x < a + 1).
inline double gamma_p_series(double a, double x) {
    double term = 1.0 / a;
    double sum = term;
    for (int n = 1; n < 500; ++n) {
        term *= x / (a + n);
        sum += term;
        if (std::abs(term) < std::abs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Upper regularized incomplete gamma Q(a, x) by Lentz continued fraction
// (x >= a + 1).
inline double gamma_q_cf(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 500; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < 1e-16) break;
    }
    return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

} // namespace detail

/// Lower regularized incomplete gamma P(a, x) = gamma(a, x) / Gamma(a),
/// a > 0, x >= 0. P(d/2, r^2/2) is the chi-square_d CDF at r^2.
inline double gamma_p(double a, double x) {
    if (a <= 0.0 || x < 0.0) throw std::domain_error("gamma_p: need a > 0, x >= 0");
    if (x == 0.0) return 0.0;
    if (x < a + 1.0) return detail::gamma_p_series(a, x);
    return 1.0 - detail::gamma_q_cf(a, x);
}

/// Chi-square CDF with k degrees of freedom.
inline double chi2_cdf(double x, double k) {
    if (x <= 0.0) return 0.0;
    return gamma_p(0.5 * k, 0.5 * x);
}

/// log(1 + x) guarded composition helpers are in <cmath>; nothing extra here.

} // namespace sobemp::special
