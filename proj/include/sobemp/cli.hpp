#pragma once

// Command-line front end: every library operation as a subcommand with
// config files, flat key=value overrides, seeds, and CSV/JSON artifacts.
//
// Exit codes: 0 on success/PASS, 1 on an assertion failure during the
// computation (the failing quantity is printed), 2 on a usage or config
// error (the offending flag, key, or path is named in the message).
//
// Plot emission is data-only: CSV ready for any plotting tool.

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "sobemp/concentration.hpp"
#include "sobemp/experiments.hpp"
#include "sobemp/kernels.hpp"
#include "sobemp/measures.hpp"
#include "sobemp/norms.hpp"
#include "sobemp/philox.hpp"

namespace sobemp::cli {

namespace detail {

/// Thrown for malformed invocations and configs; mapped to exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("--set " + key + ": expected a number, got \"" + value + "\"");
    }
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const unsigned long long v = std::stoull(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing characters");
        return static_cast<std::uint64_t>(v);
    } catch (const std::exception&) {
        throw ConfigError("--set " + key + ": expected a nonnegative integer, got \"" + value +
                          "\"");
    }
}

inline int parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const long v = std::stol(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing characters");
        return static_cast<int>(v);
    } catch (const std::exception&) {
        throw ConfigError("--set " + key + ": expected an integer, got \"" + value + "\"");
    }
}

inline std::vector<double> parse_double_list(const std::string& key, const std::string& value) {
    std::vector<double> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_double(key, item));
    if (out.empty()) throw ConfigError("--set " + key + ": expected a comma-separated list");
    return out;
}

inline std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& value) {
    std::vector<std::size_t> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_u64(key, item));
    if (out.empty()) throw ConfigError("--set " + key + ": expected a comma-separated list");
    return out;
}

/// One subcommand's accepted override keys: key -> setter over the shared
/// mutable state. Unknown keys are rejected, not ignored.
using OverrideTable = std::map<std::string, std::function<void(const std::string&)>>;

inline void apply_overrides(const std::vector<std::string>& sets, const OverrideTable& table) {
    for (const std::string& kv : sets) {
        const std::size_t eq = kv.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ConfigError("--set expects key=value, got \"" + kv + "\"");
        const std::string key = kv.substr(0, eq);
        const std::string value = kv.substr(eq + 1);
        const auto it = table.find(key);
        if (it == table.end()) {
            std::string known;
            for (const auto& [k, fn] : table) {
                (void)fn;
                known += known.empty() ? k : ", " + k;
            }
            throw ConfigError("--set " + key + ": unknown key (accepted: " + known + ")");
        }
        it->second(value);
    }
}

/// Options shared by every subcommand.
struct Common {
    std::string config_path;
    std::vector<std::string> sets;
    std::string output_dir = ".";
    std::optional<std::uint64_t> seed;
    int threads = 0;  // 0 = unset; fall back to SOBEMP_THREADS, then 1
    bool dry_run = false;
};

inline void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config_path, "JSON config file (versioned schema)");
    sub->add_option("--set", c.sets, "Override a config key, key=value; repeatable");
    sub->add_option("--output-dir", c.output_dir, "Directory for CSV/JSON artifacts");
    sub->add_option("--seed", c.seed, "Base seed for the replica seed sequence");
    sub->add_option("--threads", c.threads, "Worker threads (env SOBEMP_THREADS as fallback)");
    sub->add_flag("--dry-run", c.dry_run, "Validate config, print the resolved plan, exit");
}

inline int resolve_threads(const Common& c) {
    int t = c.threads;
    if (t == 0) {
        if (const char* env = std::getenv("SOBEMP_THREADS")) {
            try {
                t = parse_int("SOBEMP_THREADS", env);
            } catch (const ConfigError&) {
                throw ConfigError("SOBEMP_THREADS: expected an integer, got \"" +
                                  std::string(env) + "\"");
            }
        }
    }
    if (t == 0) t = 1;
    if (t < 1) throw ConfigError("--threads must be >= 1, got " + std::to_string(t));
    return t;
}

/// Load the experiment config: file if given, else the subcommand's
/// defaults; then apply --set overrides and the --seed flag.
inline experiments::ExperimentConfig resolve_config(const Common& c,
                                                    experiments::ExperimentKind kind,
                                                    const OverrideTable& extra = {}) {
    experiments::ExperimentConfig cfg = experiments::ExperimentConfig::defaults(kind);
    if (!c.config_path.empty()) {
        std::ifstream in(c.config_path);
        if (!in) throw ConfigError("--config: cannot open file: " + c.config_path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const std::exception& e) {
            throw ConfigError("--config " + c.config_path + ": invalid JSON: " + e.what());
        }
        try {
            cfg = experiments::config_from_json(j);
        } catch (const std::exception& e) {
            throw ConfigError("--config " + c.config_path + ": " + e.what());
        }
        if (cfg.experiment != kind)
            throw ConfigError("--config " + c.config_path + ": experiment kind \"" +
                              experiments::kind_to_string(cfg.experiment) +
                              "\" does not match this subcommand (expected \"" +
                              experiments::kind_to_string(kind) + "\")");
    }

    OverrideTable table = {
        {"alpha", [&cfg](const std::string& v) { cfg.params.alpha = parse_double("alpha", v); }},
        {"p", [&cfg](const std::string& v) { cfg.params.p = parse_double("p", v); }},
        {"dim",
         [&cfg](const std::string& v) {
             cfg.params.dim = parse_int("dim", v);
             if (cfg.params.dim < 1) throw ConfigError("--set dim: must be >= 1");
             // The flat override keeps model and params coherent; custom
             // models come in through --config.
             cfg.model = measures::MeasureModel::standard_gaussian(cfg.params.dim);
         }},
        {"eps", [&cfg](const std::string& v) { cfg.params.eps = parse_double("eps", v); }},
        {"model",
         [&cfg](const std::string& v) {
             if (v == "gaussian")
                 cfg.model = measures::MeasureModel::standard_gaussian(cfg.params.dim);
             else if (v == "point_mass")
                 cfg.model = measures::MeasureModel::point_mass(
                     std::vector<double>(static_cast<std::size_t>(cfg.params.dim), 0.0));
             else
                 throw ConfigError(
                     "--set model: expected \"gaussian\" or \"point_mass\" (custom models go "
                     "through --config), got \"" +
                     v + "\"");
         }},
        {"n_grid",
         [&cfg](const std::string& v) { cfg.n_grid = parse_size_list("n_grid", v); }},
        {"replicas",
         [&cfg](const std::string& v) {
             cfg.replicas = static_cast<std::size_t>(parse_u64("replicas", v));
         }},
        {"base_seed", [&cfg](const std::string& v) { cfg.base_seed = parse_u64("base_seed", v); }},
        {"points",
         [&cfg](const std::string& v) {
             cfg.quad.x_rule.points_per_axis = parse_int("points", v);
         }},
        {"t_points", [&cfg](const std::string& v) { cfg.quad.t_points = parse_int("t_points", v); }},
        {"t_min", [&cfg](const std::string& v) { cfg.quad.t_min = parse_double("t_min", v); }},
        {"radius",
         [&cfg](const std::string& v) { cfg.quad.x_rule.radius = parse_double("radius", v); }},
        {"sigma_multiplier",
         [&cfg](const std::string& v) {
             cfg.thresholds.sigma_multiplier = parse_double("sigma_multiplier", v);
         }},
        {"quadrature_budget_rel",
         [&cfg](const std::string& v) {
             cfg.thresholds.quadrature_budget_rel = parse_double("quadrature_budget_rel", v);
         }},
        {"quadrature_budget_abs",
         [&cfg](const std::string& v) {
             cfg.thresholds.quadrature_budget_abs = parse_double("quadrature_budget_abs", v);
         }},
        {"degenerate_tol",
         [&cfg](const std::string& v) {
             cfg.thresholds.degenerate_tol = parse_double("degenerate_tol", v);
         }},
        {"min_tail_ccdf",
         [&cfg](const std::string& v) {
             cfg.thresholds.min_tail_ccdf = parse_double("min_tail_ccdf", v);
         }},
    };
    for (const auto& [k, fn] : extra) table[k] = fn;

    apply_overrides(c.sets, table);
    if (c.seed) cfg.base_seed = *c.seed;
    cfg.experiment = kind;
    try {
        cfg.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config validation failed: ") + e.what());
    }
    return cfg;
}

inline void print_plan(std::ostream& out, const std::string& subcommand,
                       const experiments::ExperimentConfig& cfg, const Common& c, int threads) {
    out << "subcommand: " << subcommand << "\n";
    out << "output_dir: " << c.output_dir << "\n";
    out << "threads: " << threads << "\n";
    out << "config:\n" << experiments::to_json(cfg).dump(2) << "\n";
    out << "dry-run: no computation performed\n";
}

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::ofstream open_artifact(const std::filesystem::path& dir, const std::string& name) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ConfigError("--output-dir: cannot create " + dir.string() + ": " + ec.message());
    const fs::path path = dir / name;
    std::ofstream out(path);
    if (!out) throw ConfigError("--output-dir: cannot write " + path.string());
    return out;
}

// -------------------------------------------------------------------------
// Subcommand bodies. Each returns the process exit code; ConfigError
// escapes to the caller and becomes exit 2.
// -------------------------------------------------------------------------

inline int run_norm(const Common& c, std::ostream& out, std::ostream& err) {
    std::size_t n = 256;
    OverrideTable extra = {
        {"n", [&n](const std::string& v) { n = parse_u64("n", v); }},
    };
    experiments::ExperimentConfig cfg =
        resolve_config(c, experiments::ExperimentKind::RateSweep, extra);
    if (n < 1) throw ConfigError("--set n: must be >= 1");
    if (cfg.params.eps == 0.0 && cfg.params.regime() != kernels::Regime::Supercritical)
        throw ConfigError("norm: eps = 0 requires the supercritical regime (alpha > d/q)");
    const int threads = resolve_threads(c);
    if (c.dry_run) {
        print_plan(out, "norm", cfg, c, threads);
        return 0;
    }

    try {
        const auto sample = measures::sample(cfg.model, n, cfg.base_seed);
        const auto field = norms::s_n_field(sample, cfg.model, cfg.params.eps);
        const auto res = norms::norm_W(field, cfg.params, cfg.quad);
        out << "n = " << n << "\n";
        out << "seed = " << cfg.base_seed << "\n";
        out << "alpha = " << cfg.params.alpha << "  p = " << cfg.params.p
            << "  dim = " << cfg.params.dim << "  eps = " << cfg.params.eps << "\n";
        out << "regime = " << kernels::regime_name(cfg.params.regime()) << "\n";
        out << "norm = " << fmt(res.value) << "\n";
        out << "refinement_error = " << fmt(res.refinement_error) << "\n";
        if (!std::isfinite(res.value)) {
            err << "norm: non-finite value " << fmt(res.value) << "\n";
            return 1;
        }
        return 0;
    } catch (const std::exception& e) {
        err << "norm: " << e.what() << "\n";
        return 1;
    }
}

inline int run_b0(const Common& c, std::ostream& out, std::ostream& err) {
    experiments::ExperimentConfig cfg = resolve_config(c, experiments::ExperimentKind::RateSweep);
    if (cfg.params.eps == 0.0 && cfg.params.regime() != kernels::Regime::Supercritical)
        throw ConfigError("b0: eps = 0 requires the supercritical regime (alpha > d/q)");
    const int threads = resolve_threads(c);
    if (c.dry_run) {
        print_plan(out, "b0", cfg, c, threads);
        return 0;
    }
    try {
        const double cal = kernels::b0_cal(cfg.params);
        const double scr = kernels::b0_scr(cfg.params);
        out << "alpha = " << cfg.params.alpha << "  p = " << cfg.params.p
            << "  dim = " << cfg.params.dim << "  eps = " << cfg.params.eps << "\n";
        out << "regime = " << kernels::regime_name(cfg.params.regime()) << "\n";
        out << "b0_cal = " << fmt(cal) << "\n";
        out << "b0_scr = " << fmt(scr) << "\n";
        if (!std::isfinite(cal) || !std::isfinite(scr)) {
            err << "b0: non-finite value (b0_cal = " << fmt(cal) << ", b0_scr = " << fmt(scr)
                << ")\n";
            return 1;
        }
        return 0;
    } catch (const std::exception& e) {
        err << "b0: " << e.what() << "\n";
        return 1;
    }
}

/// eps-grid sweep of the Gaussian-norm quantities. The scaled_b0 column is
/// normalized by regime so its eps -> 0 limit is finite and nonzero:
/// supercritical eps^{(alpha - d/q) p / 2} * b0_cal, critical b0_cal/|ln eps|,
/// subcritical b0_cal itself.
inline int run_gaussian_norm(const Common& c, std::ostream& out, std::ostream& err) {
    std::vector<double> eps_grid = {1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6};
    OverrideTable extra = {
        {"eps_grid",
         [&eps_grid](const std::string& v) { eps_grid = parse_double_list("eps_grid", v); }},
    };
    experiments::ExperimentConfig cfg =
        resolve_config(c, experiments::ExperimentKind::RateSweep, extra);
    const int threads = resolve_threads(c);
    if (c.dry_run) {
        print_plan(out, "gaussian-norm", cfg, c, threads);
        return 0;
    }

    try {
        std::ostringstream csv;
        csv << "eps,b0_cal,b0_scr,phi_cal,phi_scr,scaled_b0,regime\n";
        for (double eps : eps_grid) {
            if (!(eps > 0.0))
                throw ConfigError("--set eps_grid: entries must be positive, got " + fmt(eps));
            kernels::NormParams prm = cfg.params;
            prm.eps = eps;
            const double cal = kernels::b0_cal(prm);
            const double scr = kernels::b0_scr(prm);
            const double phi_cal = kernels::phi_norm(prm, kernels::NormSpace::CAL);
            const double phi_scr = kernels::phi_norm(prm, kernels::NormSpace::SCR);
            const kernels::Regime regime = prm.regime();
            double scaled = cal;
            if (regime == kernels::Regime::Supercritical)
                scaled = std::pow(eps, (prm.alpha - prm.dim / prm.q()) * prm.p * 0.5) * cal;
            else if (regime == kernels::Regime::Critical)
                scaled = cal / std::abs(std::log(eps));
            csv << fmt(eps) << "," << fmt(cal) << "," << fmt(scr) << "," << fmt(phi_cal) << ","
                << fmt(phi_scr) << "," << fmt(scaled) << "," << kernels::regime_name(regime)
                << "\n";
        }
        auto file = open_artifact(c.output_dir, "gaussian_norm.csv");
        file << csv.str();
        out << csv.str();
        out << "csv: " << (std::filesystem::path(c.output_dir) / "gaussian_norm.csv").string()
            << "\n";
        return 0;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        err << "gaussian-norm: " << e.what() << "\n";
        return 1;
    }
}

/// psi_2 of Phi_t(x - X) against the C-free maximal-function bound shape on
/// an (x, t) grid, plus the sigma-integral inequality for the shape itself.
inline int run_sigma_check(const Common& c, std::ostream& out, std::ostream& err) {
    std::vector<double> x_grid = {0.0, 1.0, 2.0, 3.0};
    std::vector<double> t_grid = {0.05, 0.1, 0.5};
    std::size_t n_draws = 4000;
    OverrideTable extra = {
        {"x_grid", [&x_grid](const std::string& v) { x_grid = parse_double_list("x_grid", v); }},
        {"t_grid", [&t_grid](const std::string& v) { t_grid = parse_double_list("t_grid", v); }},
        {"n_draws", [&n_draws](const std::string& v) { n_draws = parse_u64("n_draws", v); }},
    };
    experiments::ExperimentConfig cfg =
        resolve_config(c, experiments::ExperimentKind::RateSweep, extra);
    if (cfg.params.dim != 1)
        throw ConfigError("sigma-check: the (x, t) grid sweep supports dim = 1 only");
    if (cfg.params.eps == 0.0 && cfg.params.regime() != kernels::Regime::Supercritical)
        throw ConfigError("sigma-check: eps = 0 requires the supercritical regime (alpha > d/q)");
    const int threads = resolve_threads(c);
    if (c.dry_run) {
        print_plan(out, "sigma-check", cfg, c, threads);
        return 0;
    }

    try {
        const auto sample = measures::sample(cfg.model, n_draws, cfg.base_seed);
        std::ostringstream csv;
        csv << "x,t,psi2,bound_shape,ratio\n";
        bool ok = true;
        std::string failing;
        std::vector<double> draws(n_draws);
        for (double x : x_grid) {
            for (double t : t_grid) {
                for (std::size_t i = 0; i < n_draws; ++i) {
                    const double dx = x - sample.coords[i];
                    draws[i] = kernels::heat_kernel(dx * dx, t, 1);
                }
                const double psi2 = concentration::psi2_estimate(draws).value;
                const double bound = concentration::sigma_bound_rhs(cfg.model, cfg.params, &x, t);
                const double ratio = psi2 / bound;
                csv << fmt(x) << "," << fmt(t) << "," << fmt(psi2) << "," << fmt(bound) << ","
                    << fmt(ratio) << "\n";
                if (!(std::isfinite(ratio) && ratio > 0.0) && ok) {
                    ok = false;
                    failing = "ratio = " + fmt(ratio) + " at (x = " + fmt(x) + ", t = " + fmt(t) +
                              ")";
                }
            }
        }
        auto file = open_artifact(c.output_dir, "sigma_check.csv");
        file << csv.str();
        out << csv.str();

        const auto report = concentration::sigma_integral_check(cfg.model, cfg.params, cfg.quad);
        out << "sigma_integral lhs = " << fmt(report.lhs) << "\n";
        out << "sigma_integral rhs = " << fmt(report.rhs) << "\n";
        out << "sigma_integral ratio = " << fmt(report.ratio) << "\n";
        out << "csv: " << (std::filesystem::path(c.output_dir) / "sigma_check.csv").string()
            << "\n";
        if (!(std::isfinite(report.ratio) && report.ratio > 0.0) && ok) {
            ok = false;
            failing = "sigma_integral ratio = " + fmt(report.ratio);
        }
        if (!ok) {
            err << "sigma-check: FAIL: " << failing << "\n";
            return 1;
        }
        out << "sigma-check: PASS\n";
        return 0;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        err << "sigma-check: " << e.what() << "\n";
        return 1;
    }
}

inline int run_rate_sweep(const Common& c, std::ostream& out, std::ostream& err) {
    experiments::ExperimentConfig cfg = resolve_config(c, experiments::ExperimentKind::RateSweep);
    if (cfg.n_grid.size() < 3)
        throw ConfigError("rate-sweep: need at least 3 n_grid points for a rate fit");
    if (cfg.params.eps == 0.0 && cfg.params.regime() != kernels::Regime::Supercritical)
        throw ConfigError("rate-sweep: eps = 0 requires the supercritical regime (alpha > d/q)");
    const int threads = resolve_threads(c);
    if (c.dry_run) {
        print_plan(out, "rate-sweep", cfg, c, threads);
        return 0;
    }

    constexpr double kSlopeTarget = -0.5;
    constexpr double kSlopeTol = 0.05;
    try {
        const auto result = experiments::rate_sweep(cfg, threads);
        const auto paths = experiments::report_write(result, c.output_dir);
        for (const auto& row : result.per_n) {
            out << "n = " << row.n << "  value = " << fmt(row.value);
            if (row.has_exact) out << "  exact_pow_p = " << fmt(row.exact_pow_p);
            out << "\n";
        }
        out << "slope = " << fmt(result.fit.slope) << "  stderr = " << fmt(result.fit.std_err)
            << "  r2 = " << fmt(result.fit.r_squared) << "\n";
        out << "replicas csv: " << paths.csv_path.string() << "\n";
        out << "summary json: " << paths.json_path.string() << "\n";
        if (std::abs(result.fit.slope - kSlopeTarget) > kSlopeTol) {
            err << "rate-sweep: FAIL: slope = " << fmt(result.fit.slope) << " outside "
                << kSlopeTarget << " +/- " << kSlopeTol << "\n";
            return 1;
        }
        out << "rate-sweep: PASS (slope within " << kSlopeTarget << " +/- " << kSlopeTol << ")\n";
        return 0;
    } catch (const std::exception& e) {
        err << "rate-sweep: " << e.what() << "\n";
        return 1;
    }
}

inline int run_identity_check(const Common& c, std::ostream& out, std::ostream& err) {
    experiments::ExperimentConfig cfg =
        resolve_config(c, experiments::ExperimentKind::IdentityCheck);
    if (cfg.params.p != 2.0)
        throw ConfigError("identity-check: the exact identity requires p = 2");
    const int threads = resolve_threads(c);
    if (c.dry_run) {
        print_plan(out, "identity-check", cfg, c, threads);
        return 0;
    }

    try {
        const auto report = experiments::identity_check(cfg, threads);
        const auto paths = experiments::report_write(report, c.output_dir);
        for (const auto& row : report.per_n) {
            out << "n = " << row.n << "  mc_mean = " << fmt(row.mc_mean)
                << "  exact = " << fmt(row.exact) << "  tolerance = " << fmt(row.tolerance)
                << "  " << (row.pass ? "PASS" : "FAIL") << "\n";
        }
        out << "replicas csv: " << paths.csv_path.string() << "\n";
        out << "summary json: " << paths.json_path.string() << "\n";
        if (!report.pass) {
            for (const auto& row : report.per_n) {
                if (!row.pass)
                    err << "identity-check: FAIL: |mc_mean - exact| = "
                        << fmt(std::abs(row.mc_mean - row.exact)) << " > tolerance "
                        << fmt(row.tolerance) << " at n = " << row.n << "\n";
            }
            return 1;
        }
        out << "identity-check: PASS\n";
        return 0;
    } catch (const std::exception& e) {
        err << "identity-check: " << e.what() << "\n";
        return 1;
    }
}

inline int run_tail_sweep(const Common& c, std::ostream& out, std::ostream& err) {
    experiments::ExperimentConfig cfg = resolve_config(c, experiments::ExperimentKind::TailSweep);
    if (cfg.params.eps == 0.0 && cfg.params.regime() != kernels::Regime::Supercritical)
        throw ConfigError("tail-sweep: eps = 0 requires the supercritical regime (alpha > d/q)");
    if (cfg.replicas < 500)
        throw ConfigError("tail-sweep: replicas must be >= 500 for tail resolution");
    const int threads = resolve_threads(c);
    if (c.dry_run) {
        print_plan(out, "tail-sweep", cfg, c, threads);
        return 0;
    }

    try {
        const auto report = experiments::tail_sweep(cfg, threads);
        const auto paths = experiments::report_write(report, c.output_dir);
        auto curve_file = open_artifact(c.output_dir, "tail_sweep_curve.csv");
        curve_file << "n,lambda,empirical_ccdf,bound_ccdf,c_dom,c_fit\n";
        for (const auto& row : report.per_n) {
            for (const auto& pt : row.curve) {
                curve_file << row.n << "," << fmt(pt.lambda) << "," << fmt(pt.empirical_ccdf)
                           << "," << fmt(pt.bound_ccdf) << "," << fmt(row.c_dom) << ","
                           << fmt(row.c_fit) << "\n";
            }
            out << "n = " << row.n << "  median = " << fmt(row.median)
                << "  c_dom = " << fmt(row.c_dom) << "  c_fit = " << fmt(row.c_fit)
                << "  domination = " << (row.domination ? "yes" : "no") << "\n";
        }
        out << "c_dom range = [" << fmt(report.c_dom_lo) << ", " << fmt(report.c_dom_hi)
            << "]  stable = " << (report.c_stable ? "yes" : "no") << "\n";
        out << "replicas csv: " << paths.csv_path.string() << "\n";
        out << "summary json: " << paths.json_path.string() << "\n";
        out << "curve csv: "
            << (std::filesystem::path(c.output_dir) / "tail_sweep_curve.csv").string() << "\n";
        if (!report.pass) {
            for (const auto& row : report.per_n) {
                if (!row.domination)
                    err << "tail-sweep: FAIL: empirical tail exceeds the dominating curve at n = "
                        << row.n << " (c_dom = " << fmt(row.c_dom) << ")\n";
            }
            if (!report.c_stable)
                err << "tail-sweep: FAIL: c_dom range [" << fmt(report.c_dom_lo) << ", "
                    << fmt(report.c_dom_hi) << "] is not within +/-50% of its center\n";
            return 1;
        }
        out << "tail-sweep: PASS\n";
        return 0;
    } catch (const std::exception& e) {
        err << "tail-sweep: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace detail

/// Entry point, testable with string streams. Returns the process exit code.
inline int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{
        "sobemp: negative-Sobolev norms of smoothed empirical measures, with "
        "Monte Carlo experiment drivers"};
    app.require_subcommand(1);

    detail::Common copts[7];
    CLI::App* norm = app.add_subcommand("norm", "Norm of one sampled fluctuation field");
    CLI::App* gaussian =
        app.add_subcommand("gaussian-norm", "eps-grid sweep of Gaussian-norm closed quantities");
    CLI::App* b0 = app.add_subcommand("b0", "Scaled heat-content integrals B0 (CAL and SCR)");
    CLI::App* rate = app.add_subcommand("rate-sweep", "Convergence-rate Monte Carlo sweep");
    CLI::App* identity =
        app.add_subcommand("identity-check", "Exact second-moment identity check (p = 2)");
    CLI::App* tail = app.add_subcommand("tail-sweep", "Gaussian tail domination sweep");
    CLI::App* sigma =
        app.add_subcommand("sigma-check", "Subgaussian-norm bound shape over an (x, t) grid");
    detail::add_common(norm, copts[0]);
    detail::add_common(gaussian, copts[1]);
    detail::add_common(b0, copts[2]);
    detail::add_common(rate, copts[3]);
    detail::add_common(identity, copts[4]);
    detail::add_common(tail, copts[5]);
    detail::add_common(sigma, copts[6]);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (norm->parsed()) return detail::run_norm(copts[0], out, err);
        if (gaussian->parsed()) return detail::run_gaussian_norm(copts[1], out, err);
        if (b0->parsed()) return detail::run_b0(copts[2], out, err);
        if (rate->parsed()) return detail::run_rate_sweep(copts[3], out, err);
        if (identity->parsed()) return detail::run_identity_check(copts[4], out, err);
        if (tail->parsed()) return detail::run_tail_sweep(copts[5], out, err);
        if (sigma->parsed()) return detail::run_sigma_check(copts[6], out, err);
        err << "error: no subcommand selected\n";
        return 2;
    } catch (const detail::ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace sobemp::cli
