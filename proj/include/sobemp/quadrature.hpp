#pragma once

// Quadrature toolkit:
//  * adaptive Gauss-Kronrod (G7,K15) integration with relative/absolute
//    tolerances and bisection,
//  * helpers that remove power-law endpoint singularities by substitution,
//  * a composite "power-law panel" rule for integrands sampled on a fixed
//    log-spaced grid (exact on each panel for y = c*t^gamma, which is the
//    local behavior of every t-integrand in this library), including the
//    analytic completion of the [0, t_first] sliver from the measured
//    exponent,
//  * deterministic pairwise (tree) summation used wherever a reduction order
//    must be bit-stable.

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace sobemp::quad {

namespace detail {

// G7-K15 nodes and weights on [-1,1]: {abscissa, Gauss weight, Kronrod weight}.
// Row 0 is the center node; rows 1-3 are Gauss nodes; rows 4-7 Kronrod-only.
inline constexpr double gk15[8][3] = {
    {0.000000000000000, 0.417959183673469, 0.209482141084728},
    {0.405845151377397, 0.381830050505119, 0.190350578064785},
    {0.741531185599394, 0.279705391489277, 0.140653259715525},
    {0.949107912342759, 0.129484966168870, 0.063092092629979},
    {0.207784955007898, 0.0, 0.204432940075298},
    {0.586087235467691, 0.0, 0.169004726639267},
    {0.864864423359769, 0.0, 0.104790010322250},
    {0.991455371120813, 0.0, 0.022935322010529},
};

template <class F>
inline double gk15_panel(const F& f, double a, double b, double& err, double* l1 = nullptr) {
    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    const double f0 = f(mid);
    double g7 = gk15[0][1] * f0;
    double k15 = gk15[0][2] * f0;
    double a15 = gk15[0][2] * std::abs(f0);
    for (int i = 1; i < 8; ++i) {
        const double dx = half * gk15[i][0];
        const double fp = f(mid + dx);
        const double fm = f(mid - dx);
        const double fi = fp + fm;
        g7 += gk15[i][1] * fi;
        k15 += gk15[i][2] * fi;
        a15 += gk15[i][2] * (std::abs(fp) + std::abs(fm));
    }
    g7 *= half;
    k15 *= half;
    err = std::abs(k15 - g7);
    if (l1) *l1 = a15 * half;
    return k15;
}

template <class F>
inline double adaptive_rec(const F& f, double a, double b, double tol_abs,
                           int depth, double& err_accum, long& budget) {
    double err = 0.0;
    double l1 = 0.0;
    const double whole = gk15_panel(f, a, b, err, &l1);
    --budget;
    // Terminate on the allocated tolerance or on the rounding-noise floor:
    // below ~50 ulp of the local L1 mass the K15-G7 difference is pure
    // floating-point noise that scales exactly like the halving tolerance,
    // so without this floor the recursion would never bottom out.
    if (err <= std::max(tol_abs, 1e-13 * l1) || depth >= 52 || b - a < 1e-300 || budget <= 0) {
        err_accum += err;
        return whole;
    }
    const double mid = 0.5 * (a + b);
    return adaptive_rec(f, a, mid, 0.5 * tol_abs, depth + 1, err_accum, budget) +
           adaptive_rec(f, mid, b, 0.5 * tol_abs, depth + 1, err_accum, budget);
}

} // namespace detail

/// Adaptive G7-K15 integral of f over [a, b]. The tolerance is
/// max(abs_tol, rel_tol * L1), where L1 estimates the integral of |f| --
/// scaling by L1 rather than the signed estimate keeps oscillatory
/// integrands with heavy cancellation from demanding sub-machine tolerances.
/// A panel budget (500k panels) bounds the worst case.
template <class F>
inline double integrate(const F& f, double a, double b, double rel_tol = 1e-9,
                        double abs_tol = 0.0) {
    if (!(b >= a)) throw std::domain_error("integrate: need b >= a");
    if (a == b) return 0.0;
    double err0 = 0.0;
    double l1 = 0.0;
    const double rough = detail::gk15_panel(f, a, b, err0, &l1);
    const double tol = std::max(abs_tol, rel_tol * std::max(std::abs(rough), l1));
    double err_accum = 0.0;
    long budget = 500000;
    return detail::adaptive_rec(f, a, b, tol > 0 ? tol : 1e-300, 0, err_accum, budget);
}

/// Integral over [0, upper] of t^{a-1} * g(t) with a > 0, g smooth, computed
/// by the substitution t = v^{1/a} which removes the endpoint singularity:
/// = (1/a) * upper^a * \int_0^1 g((u*upper^a)^{1/a}) du (after rescaling).
template <class G>
inline double integrate_power_endpoint(const G& g, double a, double upper,
                                       double rel_tol = 1e-9) {
    if (a <= 0.0) throw std::domain_error("integrate_power_endpoint: a > 0 required");
    if (upper <= 0.0) return 0.0;
    const double ua = std::pow(upper, a);
    const double inv_a = 1.0 / a;
    auto h = [&](double v) { return g(std::pow(v * ua, inv_a)); };
    return inv_a * ua * integrate(h, 0.0, 1.0, rel_tol);
}

/// Integral of f over [lo, hi] (0 < lo < hi) through the log substitution
/// t = e^v; robust when hi/lo spans many decades.
template <class F>
inline double integrate_log_axis(const F& f, double lo, double hi,
                                 double rel_tol = 1e-9) {
    if (!(lo > 0.0) || !(hi >= lo)) throw std::domain_error("integrate_log_axis: need 0 < lo <= hi");
    if (hi == lo) return 0.0;
    auto h = [&](double v) {
        const double t = std::exp(v);
        return t * f(t);
    };
    return integrate(h, std::log(lo), std::log(hi), rel_tol);
}

/// Deterministic pairwise (tree) summation.
inline double pairwise_sum(std::span<const double> x) {
    const std::size_t n = x.size();
    if (n <= 16) {
        double s = 0.0;
        for (double v : x) s += v;
        return s;
    }
    const std::size_t half = n / 2;
    return pairwise_sum(x.first(half)) + pairwise_sum(x.subspan(half));
}

struct PanelIntegral {
    double value = 0.0;    ///< total including the sliver
    double sliver = 0.0;   ///< contribution of [0, t_first] by power completion
    double exponent = 0.0; ///< measured exponent used for the sliver
};

/// Exact integral of the power law through (t1,y1)-(t2,y2) over [t1,t2].
inline double powerlaw_panel(double t1, double y1, double t2, double y2) {
    if (y1 <= 0.0 || y2 <= 0.0) return 0.5 * (y1 + y2) * (t2 - t1); // trapezoid fallback
    const double L = std::log(t2 / t1);
    const double gamma = std::log(y2 / y1) / L;
    const double g1 = gamma + 1.0;
    if (std::abs(g1) < 1e-12) return y1 * t1 * L;
    return y1 * t1 * std::expm1(g1 * L) / g1;
}

/// Composite integral of samples y_i = y(t_i) >= 0 on an increasing positive
/// grid, each panel integrated as the exact power law through its endpoints,
/// plus the analytic [0, t_first] sliver using the exponent measured from the
/// first two samples (clamped to keep the completed integral finite).
inline PanelIntegral powerlaw_panels_integrate(std::span<const double> t,
                                               std::span<const double> y,
                                               double clamp_lo = -0.9,
                                               double clamp_hi = 8.0) {
    if (t.size() != y.size() || t.size() < 2)
        throw std::invalid_argument("powerlaw_panels_integrate: need >= 2 samples");
    PanelIntegral out;
    std::vector<double> pieces;
    pieces.reserve(t.size() - 1);
    for (std::size_t i = 0; i + 1 < t.size(); ++i)
        pieces.push_back(powerlaw_panel(t[i], y[i], t[i + 1], y[i + 1]));
    double gamma = 0.0;
    if (y[0] > 0.0 && y[1] > 0.0)
        gamma = std::log(y[1] / y[0]) / std::log(t[1] / t[0]);
    gamma = std::min(clamp_hi, std::max(clamp_lo, gamma));
    out.exponent = gamma;
    out.sliver = y[0] > 0.0 ? y[0] * t[0] / (gamma + 1.0) : 0.0;
    out.value = pairwise_sum(pieces) + out.sliver;
    return out;
}

} // namespace sobemp::quad
