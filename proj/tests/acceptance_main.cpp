// Acceptance gate: ten end-to-end criteria, one PASS/FAIL line each.
// Every tolerance and parameter set is pinned in this file; the process
// exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <string>
#include <vector>

#include "sobemp/concentration.hpp"
#include "sobemp/experiments.hpp"
#include "sobemp/kernels.hpp"
#include "sobemp/measures.hpp"
#include "sobemp/norms.hpp"
#include "sobemp/philox.hpp"

namespace {

using sobemp::kernels::NormParams;
using sobemp::measures::MeasureModel;
namespace experiments = sobemp::experiments;
namespace kernels = sobemp::kernels;
namespace concentration = sobemp::concentration;
namespace measures = sobemp::measures;
namespace norms = sobemp::norms;
namespace rng = sobemp::rng;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* format, ...) {
    char buf[512];
    va_list args;
    va_start(args, format);
    std::vsnprintf(buf, sizeof(buf), format, args);
    va_end(args);
    return buf;
}

norms::QuadratureSpec make_quad(int t_points, int points_per_axis) {
    norms::QuadratureSpec q;
    q.t_points = t_points;
    q.x_rule.points_per_axis = points_per_axis;
    return q;
}

// ---------------------------------------------------------------------------
// Criterion 1: exact second-moment identity.
// d=1, alpha=1, eps=0, mu=N(0,1), N=50, R=2000: the Monte Carlo mean of the
// squared H^{-1} norm lies within 3 standard errors of the closed form
// (1/N)(2(8 pi)^{-1/2} - (sqrt 3 - 1)/(2 sqrt pi)) = 0.1924345603/N.
// ---------------------------------------------------------------------------

constexpr double kC1ExactTimesN = 0.1924345603;
constexpr double kC1OracleAbsTol = 1e-7;

experiments::IdentityReport run_identity(int t_points, int k_points) {
    auto cfg = experiments::ExperimentConfig::defaults(experiments::ExperimentKind::IdentityCheck);
    cfg.quad = make_quad(t_points, k_points);
    return experiments::identity_check(cfg);
}

Outcome criterion_identity(const experiments::IdentityReport& report) {
    const auto& row = report.per_n[0];
    const double diff = std::abs(row.mc_mean - row.exact);
    const double window = 3.0 * row.mc_stderr;
    const double oracle_diff = std::abs(row.exact * 50.0 - kC1ExactTimesN);
    Outcome out;
    out.pass = diff <= window && oracle_diff <= kC1OracleAbsTol;
    out.detail = fmt("|mc - exact| = %.3g vs 3*stderr = %.3g; closed form x N = %.10f (frozen %.10f)",
                     diff, window, row.exact * 50.0, kC1ExactTimesN);
    return out;
}

// ---------------------------------------------------------------------------
// Criterion 2: N^{-1/2} convergence rate.
// (d, alpha, p) in {(1, 1.5, 2), (1, 1.25, 3), (2, 2.5, 2)}, eps = 0,
// N in {32, ..., 2048}, R = 200: fitted log-log slope -0.50 +/- 0.05 with
// r^2 > 0.98.
// ---------------------------------------------------------------------------

struct RateCase {
    int d;
    double alpha;
    double p;
    int k_points;
};

const std::vector<RateCase> kRateCases = {
    {1, 1.5, 2.0, 4096},
    {1, 1.25, 3.0, 4096},
    {2, 2.5, 2.0, 384},
};
constexpr double kSlopeTarget = -0.5;
constexpr double kSlopeTol = 0.05;
constexpr double kR2Floor = 0.98;

std::vector<experiments::RateSweepResult> run_rates(int t_points, int k_scale) {
    std::vector<experiments::RateSweepResult> results;
    for (const RateCase& rc : kRateCases) {
        auto cfg = experiments::ExperimentConfig::defaults(experiments::ExperimentKind::RateSweep);
        cfg.params = NormParams(rc.alpha, rc.p, rc.d, 0.0);
        cfg.model = MeasureModel::standard_gaussian(rc.d);
        cfg.quad = make_quad(t_points, rc.k_points * k_scale);
        results.push_back(experiments::rate_sweep(cfg));
    }
    return results;
}

Outcome criterion_rates(const std::vector<experiments::RateSweepResult>& results) {
    Outcome out;
    out.pass = true;
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& fit = results[i].fit;
        const bool ok =
            std::abs(fit.slope - kSlopeTarget) <= kSlopeTol && fit.r_squared > kR2Floor;
        out.pass = out.pass && ok;
        out.detail += fmt("%s(%d,%.3g,%.3g): slope %.4f r2 %.4f", i ? "; " : "", kRateCases[i].d,
                          kRateCases[i].alpha, kRateCases[i].p, fit.slope, fit.r_squared);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Criterion 3: supercritical eps -> 0 scaling of the scaled heat-content
// integral: eps^{(alpha - d/q) p / 2} B0(eps) at eps = 1e-6 within 1% of
// 2/(alpha p - d(p - 1)) for three supercritical triples.
// ---------------------------------------------------------------------------

struct B0Case {
    double alpha;
    double p;
    int d;
};

const std::vector<B0Case> kB0Cases = {{1.0, 2.0, 1}, {1.5, 2.0, 1}, {2.0, 2.0, 2}};
constexpr double kB0Eps = 1e-6;
constexpr double kB0RelTol = 0.01;

double b0_scaled(const B0Case& bc, double eps, double rel_tol) {
    const NormParams prm(bc.alpha, bc.p, bc.d, eps);
    return std::pow(eps, (prm.alpha - prm.dim / prm.q()) * prm.p * 0.5) *
           kernels::b0_cal(prm, rel_tol);
}

Outcome criterion_supercritical(std::vector<double>& values_out) {
    Outcome out;
    out.pass = true;
    for (const B0Case& bc : kB0Cases) {
        const double limit = 2.0 / (bc.alpha * bc.p - bc.d * (bc.p - 1.0));
        const double scaled = b0_scaled(bc, kB0Eps, 1e-8);
        values_out.push_back(scaled);
        const double rel = std::abs(scaled - limit) / limit;
        out.pass = out.pass && rel <= kB0RelTol;
        out.detail += fmt("%s(%.3g,%.3g,%d): %.6f vs %.6f (rel %.2g)", out.detail.empty() ? "" : "; ",
                          bc.alpha, bc.p, bc.d, scaled, limit, rel);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Criterion 4: critical-regime log divergence: B0(eps)/|ln eps| in
// [0.95, 1.05] at eps = 1e-6 for (alpha, p, d) = (1, 2, 2).
// ---------------------------------------------------------------------------

Outcome criterion_critical(std::vector<double>& values_out) {
    const NormParams prm(1.0, 2.0, 2, kB0Eps);
    const double ratio = kernels::b0_cal(prm) / std::abs(std::log(kB0Eps));
    values_out.push_back(ratio);
    Outcome out;
    out.pass = ratio >= 0.95 && ratio <= 1.05;
    out.detail = fmt("B0/|ln eps| = %.9f", ratio);
    return out;
}

// ---------------------------------------------------------------------------
// Criterion 5: p = 2 coincidence of the CAL and SCR quadrature routes on
// the smoothed Dirac field, within 1e-4 relative over the
// alpha x eps grid {0.5, 1, 1.5} x {0.05, 0.1, 0.2} (d = 1).
// ---------------------------------------------------------------------------

constexpr double kC5RelTol = 1e-4;

std::vector<double> run_coincidence(int t_points, int k_points, double* max_rel) {
    std::vector<double> values;
    if (max_rel) *max_rel = 0.0;
    for (double alpha : {0.5, 1.0, 1.5}) {
        for (double eps : {0.05, 0.1, 0.2}) {
            const NormParams prm(alpha, 2.0, 1, eps);
            const norms::FieldEvaluator u = norms::phi_field(eps, 1);
            const norms::QuadratureSpec q = make_quad(t_points, k_points);
            const double cal = norms::norm_calW(u, prm, q).value;
            const double scr = norms::norm_scrW(u, prm, q).value;
            values.push_back(cal);
            values.push_back(scr);
            if (max_rel) *max_rel = std::max(*max_rel, std::abs(cal - scr) / scr);
        }
    }
    return values;
}

// ---------------------------------------------------------------------------
// Criterion 6: quadrature norms of the smoothed Dirac match the closed
// forms within 0.5% (CAL) / 1% (SCR) across the test grid.
// ---------------------------------------------------------------------------

struct ClosedFormCase {
    double alpha;
    double p;
    int d;
    double eps;
    int k_points;
};

const std::vector<ClosedFormCase> kClosedFormCases = {
    {1.0, 2.0, 1, 0.1, 4096},  {0.7, 2.0, 1, 0.1, 4096}, {1.5, 2.0, 1, 0.05, 4096},
    {1.0, 2.0, 1, 0.2, 4096},  {0.8, 3.0, 1, 0.2, 4096}, {1.5, 2.0, 2, 0.1, 384},
};
constexpr double kCalRelTol = 0.005;
constexpr double kScrRelTol = 0.01;

std::vector<double> run_closed_forms(int t_points, int k_scale, Outcome* out) {
    std::vector<double> values;
    if (out) out->pass = true;
    for (const ClosedFormCase& cc : kClosedFormCases) {
        const NormParams prm(cc.alpha, cc.p, cc.d, cc.eps);
        const norms::FieldEvaluator u = norms::phi_field(cc.eps, cc.d);
        const norms::QuadratureSpec q = make_quad(t_points, cc.k_points * k_scale);
        const double cal = norms::norm_calW(u, prm, q).value;
        const double cal_rel = std::abs(cal - kernels::phi_norm(prm, kernels::NormSpace::CAL)) /
                               kernels::phi_norm(prm, kernels::NormSpace::CAL);
        values.push_back(cal);
        bool ok = cal_rel <= kCalRelTol;
        double scr_rel = 0.0;
        if (cc.p == 2.0) {
            const double scr = norms::norm_scrW(u, prm, q).value;
            scr_rel = std::abs(scr - kernels::phi_norm(prm, kernels::NormSpace::SCR)) /
                      kernels::phi_norm(prm, kernels::NormSpace::SCR);
            values.push_back(scr);
            ok = ok && scr_rel <= kScrRelTol;
        }
        if (out) {
            out->pass = out->pass && ok;
            out->detail += fmt("%s(%.3g,%.3g,%d,%.3g): cal %.2g scr %.2g",
                               out->detail.empty() ? "" : "; ", cc.alpha, cc.p, cc.d, cc.eps,
                               cal_rel, scr_rel);
        }
    }
    return values;
}

// ---------------------------------------------------------------------------
// Criterion 7: the two-sided I_eps sandwich holds at every point of the
// (r, eps, (alpha, d)) grid within quadrature tolerance.
// ---------------------------------------------------------------------------

Outcome criterion_sandwich() {
    const std::vector<std::pair<double, int>> ad = {{0.5, 1}, {1.0, 2}, {2.0, 1}, {2.5, 3}};
    const std::vector<double> epses = {1.0, 0.3, 0.1, 0.03, 0.01};
    const std::vector<double> rs = {0.25, 0.5, 1.0, 2.0, 8.0};
    constexpr double kSlack = 3e-7;  // adaptive-quadrature tolerance
    Outcome out;
    out.pass = true;
    int points = 0;
    double worst_margin = 1e300;
    for (const auto& [alpha, d] : ad) {
        for (double eps : epses) {
            for (double r : rs) {
                const NormParams prm(alpha, 2.0, d, eps);
                const double v = kernels::i_eps(r, prm);
                const auto sw = kernels::i_eps_sandwich(r, prm);
                const bool ok = sw.lower <= v * (1.0 + kSlack) + 1e-300 &&
                                v <= sw.upper * (1.0 + kSlack) + 1e-300 &&
                                std::abs(sw.exact_form - v) <= 1e-6 * v + 1e-300;
                if (!ok && out.pass) {
                    out.detail = fmt("violated at alpha=%.3g d=%d eps=%.3g r=%.3g "
                                     "(lower %.6g, value %.6g, upper %.6g)",
                                     alpha, d, eps, r, sw.lower, v, sw.upper);
                }
                out.pass = out.pass && ok;
                if (v > 0.0)
                    worst_margin = std::min(worst_margin,
                                            std::min(v - sw.lower, sw.upper - v) / v);
                ++points;
            }
        }
    }
    if (out.pass)
        out.detail = fmt("%d grid points, min two-sided relative margin %.3g", points,
                         worst_margin);
    return out;
}

// ---------------------------------------------------------------------------
// Criterion 8: Gaussian tail domination. (alpha, p, d) = (1.5, 2, 1),
// eps = 0, N in {32, 128, 512}, R = 2000: the fitted dominating curve stays
// above every beyond-median exceedance frequency, and the fitted constant is
// stable within +/-50% across N.
// ---------------------------------------------------------------------------

Outcome criterion_tail() {
    const auto cfg = experiments::ExperimentConfig::defaults(experiments::ExperimentKind::TailSweep);
    const auto report = experiments::tail_sweep(cfg);
    Outcome out;
    out.pass = report.pass;
    out.detail = fmt("c_dom = {");
    for (std::size_t i = 0; i < report.per_n.size(); ++i)
        out.detail += fmt("%s%.4f", i ? ", " : "", report.per_n[i].c_dom);
    out.detail += fmt("}, domination %s, stability %s", report.pass ? "holds" : "violated",
                      report.c_stable ? "within +/-50%" : "outside +/-50%");
    return out;
}

// ---------------------------------------------------------------------------
// Criterion 9: the subgaussian norm of the centered smoothed average
// S_N(0, 0.1) decays with fitted exponent -0.5 +/- 0.1 over
// N in {100, 1000, 10000}.
// ---------------------------------------------------------------------------

Outcome criterion_hoeffding() {
    const MeasureModel g1 = MeasureModel::standard_gaussian(1);
    const double x = 0.0;
    const double t = 0.1;
    const double mu_t = measures::smoothed_density_eval(g1, t, &x);
    const std::vector<std::size_t> ns = {100, 1000, 10000};
    const std::size_t replicas = 1200;

    std::vector<double> n_vals, psi_vals;
    std::size_t seed_block = 0;
    for (std::size_t n : ns) {
        std::vector<double> draws(replicas);
        for (std::size_t r = 0; r < replicas; ++r) {
            rng::PhiloxStream stream(rng::replica_seed(555, seed_block + r));
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double dx = x - stream.next_normal();
                acc += kernels::heat_kernel(dx * dx, t, 1);
            }
            draws[r] = acc / static_cast<double>(n) - mu_t;
        }
        n_vals.push_back(static_cast<double>(n));
        psi_vals.push_back(concentration::psi2_estimate(draws).value);
        seed_block += 4096;
    }
    const auto fit = experiments::fit_log_slope(n_vals, psi_vals);
    Outcome out;
    out.pass = fit.slope >= -0.6 && fit.slope <= -0.4;
    out.detail = fmt("fitted exponent %.4f (target -0.5 +/- 0.1)", fit.slope);
    return out;
}

// ---------------------------------------------------------------------------
// Criterion 10: quadrature refinement. Doubling the t-resolution and the
// spatial resolution (and tightening the adaptive tolerances) changes every
// norm reported by criteria 1-6 by less than 0.5%.
// ---------------------------------------------------------------------------

constexpr double kRefineRelTol = 0.005;

void collect_rel(const std::vector<double>& base, const std::vector<double>& fine,
                 const char* label, double* worst, std::string* worst_label) {
    for (std::size_t i = 0; i < base.size(); ++i) {
        const double denom = std::max(std::abs(base[i]), 1e-300);
        const double rel = std::abs(fine[i] - base[i]) / denom;
        if (rel > *worst) {
            *worst = rel;
            *worst_label = fmt("%s[%zu]", label, i);
        }
    }
}

}  // namespace

int main() {
    using Clock = std::chrono::steady_clock;
    int failures = 0;
    const auto report = [&failures](int index, const char* name, const Outcome& out,
                                    double seconds) {
        std::printf("[%s] %2d. %s: %s (%.1fs)\n", out.pass ? "PASS" : "FAIL", index, name,
                    out.detail.c_str(), seconds);
        std::fflush(stdout);
        if (!out.pass) ++failures;
    };
    const auto timed = [](auto&& fn) {
        const auto start = Clock::now();
        Outcome out = fn();
        const double seconds = std::chrono::duration<double>(Clock::now() - start).count();
        return std::pair<Outcome, double>(std::move(out), seconds);
    };

    // Criteria 1-6 keep their base-resolution values for the refinement check.
    auto start = Clock::now();
    const auto identity_base = run_identity(96, 4096);
    auto outcome = criterion_identity(identity_base);
    report(1, "exact second-moment identity (d=1, alpha=1, N=50)", outcome,
           std::chrono::duration<double>(Clock::now() - start).count());

    start = Clock::now();
    const auto rates_base = run_rates(96, 1);
    outcome = criterion_rates(rates_base);
    report(2, "N^{-1/2} convergence rate over three parameter triples", outcome,
           std::chrono::duration<double>(Clock::now() - start).count());

    std::vector<double> b0_base;
    {
        const auto [out, secs] = timed([&] { return criterion_supercritical(b0_base); });
        report(3, "supercritical eps->0 scaling of B0 at eps=1e-6", out, secs);
    }

    {
        const auto [out, secs] = timed([&] { return criterion_critical(b0_base); });
        report(4, "critical-regime log divergence of B0 at eps=1e-6", out, secs);
    }

    start = Clock::now();
    double c5_max_rel = 0.0;
    const std::vector<double> coincidence_base = run_coincidence(384, 4096, &c5_max_rel);
    outcome.pass = c5_max_rel <= kC5RelTol;
    outcome.detail = fmt("max |cal - scr|/scr = %.3g over the 3x3 grid", c5_max_rel);
    report(5, "p=2 coincidence of the CAL and SCR quadrature routes", outcome,
           std::chrono::duration<double>(Clock::now() - start).count());

    start = Clock::now();
    Outcome closed_out;
    const std::vector<double> closed_base = run_closed_forms(96, 1, &closed_out);
    report(6, "quadrature norms match the closed Gaussian forms", closed_out,
           std::chrono::duration<double>(Clock::now() - start).count());

    {
        const auto [out, secs] = timed([] { return criterion_sandwich(); });
        report(7, "two-sided I_eps sandwich on the (r, eps, alpha, d) grid", out, secs);
    }

    {
        const auto [out, secs] = timed([] { return criterion_tail(); });
        report(8, "Gaussian tail domination with stable fitted constant", out, secs);
    }

    {
        const auto [out, secs] = timed([] { return criterion_hoeffding(); });
        report(9, "subgaussian norm of S_N(0, 0.1) decays like N^{-1/2}", out, secs);
    }

    // Criterion 10: recompute criteria 1-6 quantities at doubled resolution.
    start = Clock::now();
    double worst = 0.0;
    std::string worst_label = "none";
    {
        const auto identity_fine = run_identity(192, 8192);
        collect_rel({identity_base.per_n[0].mc_mean}, {identity_fine.per_n[0].mc_mean},
                    "identity mc_mean", &worst, &worst_label);

        const auto rates_fine = run_rates(192, 2);
        for (std::size_t c = 0; c < rates_base.size(); ++c) {
            std::vector<double> base_vals, fine_vals;
            for (const auto& row : rates_base[c].per_n) base_vals.push_back(row.value);
            for (const auto& row : rates_fine[c].per_n) fine_vals.push_back(row.value);
            collect_rel(base_vals, fine_vals, fmt("rate case %zu", c).c_str(), &worst,
                        &worst_label);
        }

        std::vector<double> b0_fine;
        for (const B0Case& bc : kB0Cases) b0_fine.push_back(b0_scaled(bc, kB0Eps, 1e-10));
        b0_fine.push_back(kernels::b0_cal(NormParams(1.0, 2.0, 2, kB0Eps), 1e-10) /
                          std::abs(std::log(kB0Eps)));
        collect_rel(b0_base, b0_fine, "B0", &worst, &worst_label);

        const auto coincidence_fine = run_coincidence(768, 8192, nullptr);
        collect_rel(coincidence_base, coincidence_fine, "coincidence", &worst, &worst_label);

        const auto closed_fine = run_closed_forms(192, 2, nullptr);
        collect_rel(closed_base, closed_fine, "closed form", &worst, &worst_label);
    }
    outcome.pass = worst < kRefineRelTol;
    outcome.detail = fmt("max relative change %.3g at %s (tolerance %.3g)", worst,
                         worst_label.c_str(), kRefineRelTol);
    report(10, "quadrature refinement changes no reported norm by 0.5%", outcome,
           std::chrono::duration<double>(Clock::now() - start).count());

    if (failures > 0) {
        std::printf("acceptance: %d criterion(s) FAILED\n", failures);
        return 1;
    }
    std::printf("acceptance: all 10 criteria PASS\n");
    return 0;
}
