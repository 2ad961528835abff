#include "doctest.h"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "sobemp/kernels.hpp"
#include "sobemp/measures.hpp"
#include "sobemp/norms.hpp"
#include "sobemp/quadrature.hpp"
#include "sobemp/special.hpp"

using namespace sobemp;
using doctest::Approx;
using kernels::NormParams;
using measures::MeasureModel;

namespace {

norms::QuadratureSpec make_spec(int t_points, int k, double radius = 0.0) {
    norms::QuadratureSpec q;
    q.t_points = t_points;
    q.x_rule.points_per_axis = k;
    q.x_rule.radius = radius;
    return q;
}

}  // namespace

TEST_CASE("QuadratureSpec: grid shape and validation") {
    norms::QuadratureSpec q;
    const std::vector<double> t = q.t_grid();
    CHECK(t.size() == 96);
    CHECK(t.front() == Approx(1e-8).epsilon(1e-12));
    CHECK(t.back() == 1.0);
    for (std::size_t i = 1; i < t.size(); ++i) CHECK(t[i] > t[i - 1]);

    norms::QuadratureSpec bad = q;
    bad.t_min = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = q;
    bad.t_points = 3;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = q;
    bad.x_rule.points_per_axis = 2;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = q;
    bad.tail_tol = 0.5;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("s_n_field: point-mass model gives the zero field") {
    const MeasureModel delta = MeasureModel::point_mass({0.0});
    const measures::EmpiricalSample s = measures::sample(delta, 20, 7);
    const norms::FieldEvaluator u = norms::s_n_field(s, delta, 0.2);
    for (double x : {-1.0, 0.0, 0.4, 2.0}) {
        for (double t : {0.01, 0.3, 1.0}) {
            CHECK(std::abs(u.eval(&x, t)) < 1e-14);
        }
    }
    // Direct evaluation sees the exact cancellation; the binned spectral
    // route has an O((xi h)^4) spreading floor, far below any signal scale.
    const norms::QuadratureSpec q = make_spec(24, 128);
    norms::FieldEvaluator u_direct = u;
    u_direct.sn.reset();
    CHECK(norms::norm_calW(u_direct, NormParams(0.7, 2.0, 1, 0.0), q).value < 1e-10);
    CHECK(norms::norm_scrW(u_direct, NormParams(1.0, 2.0, 1, 0.0), q).value < 1e-10);
    CHECK(norms::norm_calW(u, NormParams(0.7, 2.0, 1, 0.0), q).value < 1e-4);
    CHECK(norms::norm_scrW(u, NormParams(1.0, 2.0, 1, 0.0), q).value < 1e-4);
}

TEST_CASE("s_n_field: N=1 two-term oracle and mass cancellation") {
    const MeasureModel g1 = MeasureModel::standard_gaussian(1);
    const measures::EmpiricalSample s = measures::sample(g1, 1, 42);
    const double a = s.coords[0];
    const double eps = 0.15;
    const norms::FieldEvaluator u = norms::s_n_field(s, g1, eps);
    for (double x : {-0.7, 0.1, 1.3}) {
        for (double t : {0.05, 0.4}) {
            const double sm = t + eps;
            const double expect = kernels::heat_kernel((x - a) * (x - a), sm, 1) -
                                  measures::smoothed_density_eval(g1, sm, &x);
            CHECK(u.eval(&x, t) == Approx(expect).epsilon(1e-13));
        }
    }

    // Both terms carry unit mass, so the field integrates to zero.
    const measures::EmpiricalSample s32 = measures::sample(g1, 32, 9);
    const norms::FieldEvaluator u32 = norms::s_n_field(s32, g1, 0.1);
    const double t_probe = 0.3;
    const double total = quad::integrate(
        [&](double x) { return u32.eval(&x, t_probe); }, -14.0, 14.0, 1e-9, 1e-12);
    CHECK(std::abs(total) < 1e-6);
}

TEST_CASE("norm_calW and norm_scrW match the closed forms on Phi_eps") {
    // (d, alpha, p, eps) = (1, 1, 2, 0.1).
    const NormParams prm(1.0, 2.0, 1, 0.1);
    const norms::FieldEvaluator u = norms::phi_field(0.1, 1);
    const norms::QuadratureSpec q = make_spec(96, 512);

    const double cal_exact = kernels::phi_norm(prm, kernels::NormSpace::CAL);
    const double scr_exact = kernels::phi_norm(prm, kernels::NormSpace::SCR);
    const norms::NormResult cal = norms::norm_calW(u, prm, q);
    const norms::NormResult scr = norms::norm_scrW(u, prm, q);
    CHECK(cal.value == Approx(cal_exact).epsilon(0.005));
    CHECK(scr.value == Approx(scr_exact).epsilon(0.01));
    // The two quadrature routes coincide at p = 2; the residual is the
    // power-law panel discretization (fit-then-aggregate vs
    // aggregate-then-fit), which shrinks ~ (t-spacing)^2.
    CHECK(cal.value == Approx(scr.value).epsilon(1e-3));
    CHECK(cal.t_nodes_dropped == 0);
    const norms::QuadratureSpec q_fine = make_spec(288, 512);
    const double cal_f = norms::norm_calW(u, prm, q_fine).value;
    const double scr_f = norms::norm_scrW(u, prm, q_fine).value;
    CHECK(cal_f == Approx(scr_f).epsilon(1.5e-4));
    CHECK(std::abs(cal_f - scr_f) < 0.3 * std::abs(cal.value - scr.value));

    // A noninteger-alpha, p != 2 point of the same oracle pair.
    const NormParams prm3(0.8, 3.0, 1, 0.2);
    const norms::FieldEvaluator u2 = norms::phi_field(0.2, 1);
    CHECK(norms::norm_calW(u2, prm3, q).value ==
          Approx(kernels::phi_norm(prm3, kernels::NormSpace::CAL)).epsilon(0.005));
}

TEST_CASE("norm homogeneity, zero field, dispatch, errors") {
    const norms::QuadratureSpec q = make_spec(24, 128);
    const norms::FieldEvaluator u = norms::phi_field(0.2, 1);
    const NormParams prm(0.9, 2.0, 1, 0.2);
    const double base = norms::norm_calW(u, prm, q).value;
    CHECK(norms::norm_calW(norms::field_scale(u, 2.5), prm, q).value ==
          Approx(2.5 * base).epsilon(1e-12));

    norms::FieldEvaluator zero = u;
    zero.sn.reset();
    zero.eval = [](const double*, double) { return 0.0; };
    CHECK(norms::norm_calW(zero, prm, q).value == 0.0);
    CHECK(norms::norm_scrW(zero, prm, q).value == 0.0);

    // Dispatch: integer alpha -> scr-W, otherwise cal-W.
    const NormParams int_a(1.0, 2.0, 1, 0.2);
    CHECK(norms::norm_W(u, int_a, q).value == norms::norm_scrW(u, int_a, q).value);
    const NormParams frac_a(0.5, 2.0, 1, 0.2);
    CHECK(norms::norm_W(u, frac_a, q).value == norms::norm_calW(u, frac_a, q).value);

    // Dimension mismatch and oversize grids are rejected.
    CHECK_THROWS_AS(norms::norm_calW(u, NormParams(1.0, 2.0, 2, 0.2), q), std::invalid_argument);
    CHECK_THROWS_AS(norms::norm_calW(norms::phi_field(0.1, 4), NormParams(1.0, 2.0, 4, 0.1), q),
                    std::invalid_argument);

    // Non-finite field values surface as quadrature overflow.
    norms::FieldEvaluator huge = zero;
    huge.eval = [](const double*, double) { return 1e308; };
    CHECK_THROWS_AS(norms::norm_calW(huge, NormParams(1.0, 4.0, 1, 0.2), q), std::overflow_error);
}

TEST_CASE("triangle inequality for fields from independent samples") {
    const MeasureModel g1 = MeasureModel::standard_gaussian(1);
    const norms::QuadratureSpec q = make_spec(16, 128);
    const NormParams prm(1.2, 2.0, 1, 0.0);
    const norms::FieldEvaluator a = norms::s_n_field(measures::sample(g1, 16, 100), g1, 0.5);
    const norms::FieldEvaluator b = norms::s_n_field(measures::sample(g1, 16, 101), g1, 0.5);
    const norms::NormResult ra = norms::norm_calW(a, prm, q);
    const norms::NormResult rb = norms::norm_calW(b, prm, q);
    const norms::NormResult rab = norms::norm_calW(norms::field_sum(a, b), prm, q);
    const double slack =
        2.0 * (ra.refinement_error + rb.refinement_error + rab.refinement_error) + 1e-9;
    CHECK(rab.value <= ra.value + rb.value + slack);
}

TEST_CASE("spectral path agrees with the direct path") {
    const MeasureModel g1 = MeasureModel::standard_gaussian(1);
    const measures::EmpiricalSample s = measures::sample(g1, 64, 31);
    const norms::FieldEvaluator u = norms::s_n_field(s, g1, 0.3);
    norms::FieldEvaluator u_direct = u;
    u_direct.sn.reset();  // forces pointwise evaluation on the same grid

    const norms::QuadratureSpec q = make_spec(24, 256);
    for (const NormParams& prm :
         {NormParams(0.8, 2.0, 1, 0.3), NormParams(1.1, 3.0, 1, 0.3)}) {
        const double fast = norms::norm_calW(u, prm, q).value;
        const double slow = norms::norm_calW(u_direct, prm, q).value;
        CHECK(fast == Approx(slow).epsilon(1e-4));
    }
    const NormParams scr_p(1.0, 2.0, 1, 0.3);
    CHECK(norms::norm_scrW(u, scr_p, q).value ==
          Approx(norms::norm_scrW(u_direct, scr_p, q).value).epsilon(1e-4));

    // d = 2 (explicit radius keeps the coarse grid resolvable).
    const MeasureModel g2 = MeasureModel::standard_gaussian(2);
    const measures::EmpiricalSample s2 = measures::sample(g2, 16, 77);
    const norms::FieldEvaluator v = norms::s_n_field(s2, g2, 0.5);
    norms::FieldEvaluator v_direct = v;
    v_direct.sn.reset();
    const norms::QuadratureSpec q2 = make_spec(16, 96, 8.0);
    const NormParams prm2(1.3, 2.0, 2, 0.5);
    CHECK(norms::norm_calW(v, prm2, q2).value ==
          Approx(norms::norm_calW(v_direct, prm2, q2).value).epsilon(2e-4));
}

TEST_CASE("eps = 0 spectral pipeline: dropped slices and sliver completion") {
    const MeasureModel g1 = MeasureModel::standard_gaussian(1);
    const measures::EmpiricalSample s = measures::sample(g1, 8, 5);
    const norms::FieldEvaluator u = norms::s_n_field(s, g1, 0.0);
    const norms::QuadratureSpec q = make_spec(96, 1024);
    const norms::NormResult r = norms::norm_scrW(u, NormParams(1.0, 2.0, 1, 0.0), q);
    CHECK(r.value > 0.0);
    CHECK(std::isfinite(r.value));
    CHECK(r.t_nodes_dropped > 0);
    CHECK(r.t_nodes_used + r.t_nodes_dropped == 96);
    CHECK(r.sliver_fraction > 0.0);
    CHECK(r.sliver_fraction < 0.2);

    // Bit-for-bit determinism of the full pipeline.
    const norms::NormResult r2 = norms::norm_scrW(u, NormParams(1.0, 2.0, 1, 0.0), q);
    CHECK(r.value == r2.value);
}

TEST_CASE("refinement: doubling both resolutions moves the norm < 0.5%") {
    const norms::FieldEvaluator u = norms::phi_field(0.1, 1);
    const NormParams prm(1.0, 2.0, 1, 0.1);
    const norms::NormResult coarse = norms::norm_calW(u, prm, make_spec(48, 256));
    const norms::NormResult fine = norms::norm_calW(u, prm, make_spec(96, 512));
    CHECK(std::abs(coarse.value - fine.value) / fine.value < 0.005);

    // The same holds for an empirical field through the spectral path.
    const MeasureModel g1 = MeasureModel::standard_gaussian(1);
    const measures::EmpiricalSample s = measures::sample(g1, 128, 12);
    const norms::FieldEvaluator w = norms::s_n_field(s, g1, 0.0);
    const NormParams prm_w(1.5, 2.0, 1, 0.0);
    const double v1 = norms::norm_calW(w, prm_w, make_spec(48, 2048)).value;
    const double v2 = norms::norm_calW(w, prm_w, make_spec(96, 4096)).value;
    CHECK(std::abs(v1 - v2) / v2 < 0.005);
}

TEST_CASE("subcritical monotonicity: ||Phi_eps|| nonincreasing in eps") {
    const norms::QuadratureSpec q = make_spec(48, 192);
    double prev = std::numeric_limits<double>::infinity();
    for (double eps : {0.05, 0.1, 0.2, 0.4}) {
        const NormParams prm(0.5, 2.0, 2, eps);
        const double v = norms::norm_calW(norms::phi_field(eps, 2), prm, q).value;
        CHECK(v < prev * (1.0 + 1e-9));
        prev = v;
    }
}

TEST_CASE("Monte Carlo x-rule agrees with tensor grids and closed forms") {
    // d = 1 cross-check against the tensor path.
    norms::QuadratureSpec mc;
    mc.t_points = 48;
    mc.x_rule.kind = norms::XRule::Kind::MonteCarlo;
    mc.x_rule.n_nodes = 20000;
    const NormParams prm(1.0, 2.0, 1, 0.2);
    const norms::FieldEvaluator u = norms::phi_field(0.2, 1);
    const double tensor_v = norms::norm_calW(u, prm, make_spec(48, 512)).value;
    const double mc_v = norms::norm_calW(u, prm, mc).value;
    CHECK(mc_v == Approx(tensor_v).epsilon(0.03));

    // d = 4 (tensor grids are rejected there) against the closed form.
    const NormParams prm4(2.5, 2.0, 4, 0.3);
    const norms::FieldEvaluator u4 = norms::phi_field(0.3, 4);
    const double exact4 = kernels::phi_norm(prm4, kernels::NormSpace::CAL);
    const double mc4 = norms::norm_calW(u4, prm4, mc).value;
    CHECK(mc4 == Approx(exact4).epsilon(0.05));

    // Seeded node draws are reproducible.
    CHECK(norms::norm_calW(u4, prm4, mc).value == mc4);
}

TEST_CASE("h_second_moment_exact: closed-form oracle and gates") {
    const MeasureModel g1 = MeasureModel::standard_gaussian(1);
    // d=1, alpha=1, eps=0: (2 (8 pi)^{-1/2} - (sqrt(3)-1)/(2 sqrt(pi))) / N.
    const double phi2 = 2.0 / std::sqrt(8.0 * special::pi);
    const double mu2 = (std::sqrt(3.0) - 1.0) / (2.0 * std::sqrt(special::pi));
    const double expect = (phi2 - mu2) / 50.0;
    CHECK(norms::h_second_moment_exact(g1, 1.0, 0.0, 50) == Approx(expect).epsilon(1e-6));

    // Explicit 1/N scaling.
    CHECK(norms::h_second_moment_exact(g1, 1.0, 0.0, 100) ==
          Approx(0.5 * norms::h_second_moment_exact(g1, 1.0, 0.0, 50)).epsilon(1e-12));

    // Point mass: both sides coincide for eps > 0.
    const MeasureModel delta = MeasureModel::point_mass({0.0});
    CHECK(std::abs(norms::h_second_moment_exact(delta, 1.0, 0.25, 10)) < 1e-12);

    // eps > 0 admits subcritical alpha.
    const double sub = norms::h_second_moment_exact(g1, 0.4, 0.25, 10);
    CHECK(sub > 0.0);
    CHECK(std::isfinite(sub));

    // Regime gates at eps = 0.
    CHECK_THROWS_AS(norms::h_second_moment_exact(g1, 0.5, 0.0, 10), std::domain_error);
    CHECK_THROWS_AS(norms::h_second_moment_exact(delta, 1.0, 0.0, 10), std::domain_error);
    CHECK_THROWS_AS(norms::h_second_moment_exact(g1, 1.0, 0.0, 0), std::invalid_argument);
}

TEST_CASE("mu_smoothed_l2_sq: quadrature oracles per model family") {
    const double s = 0.07;
    // Gaussian mixture vs direct L2 quadrature of the smoothed density.
    const MeasureModel mix = MeasureModel::gaussian_mixture(
        1, {0.3, 0.7}, {{-0.5}, {1.0}}, {0.6, 1.8});
    const double direct_mix = quad::integrate(
        [&](double x) {
            const double f = measures::smoothed_density_eval(mix, s, &x);
            return f * f;
        },
        -20.0, 20.0, 1e-10, 0.0);
    CHECK(norms::mu_smoothed_l2_sq(mix, s) == Approx(direct_mix).epsilon(1e-8));

    // Uniform box.
    const MeasureModel box = MeasureModel::uniform_box({-0.3}, {1.1});
    const double direct_box = quad::integrate(
        [&](double x) {
            const double f = measures::smoothed_density_eval(box, s, &x);
            return f * f;
        },
        -10.0, 11.0, 1e-10, 0.0);
    CHECK(norms::mu_smoothed_l2_sq(box, s) == Approx(direct_box).epsilon(1e-8));
    // s -> 0 recovers 1/length.
    CHECK(norms::mu_smoothed_l2_sq(box, 0.0) == Approx(1.0 / 1.4).epsilon(1e-12));

    // Atoms.
    const MeasureModel atoms = MeasureModel::discrete(1, {0.5, 0.5}, {{0.0}, {0.8}});
    const double direct_atoms = quad::integrate(
        [&](double x) {
            const double f = measures::smoothed_density_eval(atoms, s, &x);
            return f * f;
        },
        -10.0, 11.0, 1e-10, 0.0);
    CHECK(norms::mu_smoothed_l2_sq(atoms, s) == Approx(direct_atoms).epsilon(1e-8));
    CHECK_THROWS_AS(norms::mu_smoothed_l2_sq(atoms, 0.0), std::domain_error);
}
