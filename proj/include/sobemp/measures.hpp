#pragma once
// Analytic measure models on R^d: sampling, closed-form heat-smoothed
// densities, ball masses, and the Hardy-Littlewood maximal function.
//
// Heat-kernel variance convention used throughout the library:
//   Phi_s = N(0, 2s * I)  (bandwidth s in heat-time units, covariance 2s*I).
// Every bandwidth that enters a Gaussian variance does so as sigma^2 + 2s.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "sobemp/philox.hpp"
#include "sobemp/quadrature.hpp"
#include "sobemp/special.hpp"

#include "json.hpp"

namespace sobemp::measures {

enum class MeasureType { GaussianMixture, UniformBox, DiscreteAtoms };

/// Analytic measure model. Gaussian components are isotropic (sigma^2 * I)
/// so that heat smoothing stays closed-form; `points` holds the flattened
/// component means (Gaussian mixture) or atom locations (discrete atoms),
/// one point per weight, stride `dim`.
struct MeasureModel {
    MeasureType type = MeasureType::DiscreteAtoms;
    int dim = 1;
    std::vector<double> weights;    // gaussian_mixture, discrete
    std::vector<double> points;     // flattened means / atom locations
    std::vector<double> variances;  // gaussian_mixture: per-component sigma^2
    std::vector<double> lower;      // uniform_box
    std::vector<double> upper;      // uniform_box

    std::size_t components() const { return weights.size(); }
    const double* point(std::size_t k) const { return points.data() + k * static_cast<std::size_t>(dim); }

    void validate() const {
        if (dim < 1) throw std::invalid_argument("MeasureModel: dim must be >= 1");
        const auto d = static_cast<std::size_t>(dim);
        switch (type) {
        case MeasureType::GaussianMixture:
        case MeasureType::DiscreteAtoms: {
            if (weights.empty()) throw std::invalid_argument("MeasureModel: needs at least one component");
            if (points.size() != weights.size() * d)
                throw std::invalid_argument("MeasureModel: point list size does not match weights x dim");
            double sum = 0.0;
            for (double w : weights) {
                if (!(w >= 0.0)) throw std::invalid_argument("MeasureModel: weights must be nonnegative");
                sum += w;
            }
            if (std::abs(sum - 1.0) > 1e-12)
                throw std::invalid_argument("MeasureModel: weights must sum to 1 within 1e-12");
            if (type == MeasureType::GaussianMixture) {
                if (variances.size() != weights.size())
                    throw std::invalid_argument("MeasureModel: one variance per component required");
                for (double v : variances)
                    if (!(v > 0.0)) throw std::invalid_argument("MeasureModel: variances must be positive");
            }
            break;
        }
        case MeasureType::UniformBox: {
            if (lower.size() != d || upper.size() != d)
                throw std::invalid_argument("MeasureModel: box bounds must have length dim");
            for (std::size_t j = 0; j < d; ++j)
                if (!(lower[j] < upper[j]))
                    throw std::invalid_argument("MeasureModel: box requires lower < upper coordinatewise");
            break;
        }
        }
    }

    static MeasureModel gaussian_mixture(int dim, std::vector<double> weights,
                                         const std::vector<std::vector<double>>& means,
                                         std::vector<double> variances) {
        MeasureModel m;
        m.type = MeasureType::GaussianMixture;
        m.dim = dim;
        m.weights = std::move(weights);
        m.variances = std::move(variances);
        for (const auto& p : means) {
            if (static_cast<int>(p.size()) != dim)
                throw std::invalid_argument("MeasureModel: mean dimension mismatch");
            m.points.insert(m.points.end(), p.begin(), p.end());
        }
        m.validate();
        return m;
    }

    static MeasureModel uniform_box(std::vector<double> lower, std::vector<double> upper) {
        MeasureModel m;
        m.type = MeasureType::UniformBox;
        m.dim = static_cast<int>(lower.size());
        m.lower = std::move(lower);
        m.upper = std::move(upper);
        m.validate();
        return m;
    }

    static MeasureModel discrete(int dim, std::vector<double> weights,
                                 const std::vector<std::vector<double>>& locations) {
        MeasureModel m;
        m.type = MeasureType::DiscreteAtoms;
        m.dim = dim;
        m.weights = std::move(weights);
        for (const auto& p : locations) {
            if (static_cast<int>(p.size()) != dim)
                throw std::invalid_argument("MeasureModel: location dimension mismatch");
            m.points.insert(m.points.end(), p.begin(), p.end());
        }
        m.validate();
        return m;
    }

    /// N(0, I) in d dimensions.
    static MeasureModel standard_gaussian(int dim) {
        return gaussian_mixture(dim, {1.0}, {std::vector<double>(static_cast<std::size_t>(dim), 0.0)}, {1.0});
    }

    /// A single unit atom.
    static MeasureModel point_mass(const std::vector<double>& location) {
        return discrete(static_cast<int>(location.size()), {1.0}, {location});
    }

    double box_volume() const {
        double v = 1.0;
        for (std::size_t j = 0; j < lower.size(); ++j) v *= upper[j] - lower[j];
        return v;
    }
};

/// N i.i.d. draws from a MeasureModel; `coords` is flattened, stride dim.
/// Regenerating with the same seed reproduces the coordinates bit-for-bit.
struct EmpiricalSample {
    MeasureModel source;
    std::uint64_t seed = 0;
    std::vector<double> coords;

    int dim() const { return source.dim; }
    std::size_t size() const { return coords.size() / static_cast<std::size_t>(source.dim); }
    const double* point(std::size_t i) const { return coords.data() + i * static_cast<std::size_t>(source.dim); }
};

namespace detail {

inline std::size_t pick_component(const std::vector<double>& weights, double u) {
    double acc = 0.0;
    for (std::size_t k = 0; k + 1 < weights.size(); ++k) {
        acc += weights[k];
        if (u < acc) return k;
    }
    return weights.size() - 1;
}

inline double sqdist(const double* a, const double* b, int d) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) {
        const double diff = a[j] - b[j];
        s += diff * diff;
    }
    return s;
}

}  // namespace detail

inline EmpiricalSample sample(const MeasureModel& model, std::size_t n, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("sample: n must be >= 1");
    model.validate();
    EmpiricalSample out;
    out.source = model;
    out.seed = seed;
    const auto d = static_cast<std::size_t>(model.dim);
    out.coords.resize(n * d);
    rng::PhiloxStream stream(seed);
    for (std::size_t i = 0; i < n; ++i) {
        double* x = out.coords.data() + i * d;
        switch (model.type) {
        case MeasureType::GaussianMixture: {
            const std::size_t k = detail::pick_component(model.weights, stream.next_double());
            const double sigma = std::sqrt(model.variances[k]);
            const double* m = model.point(k);
            for (std::size_t j = 0; j < d; ++j) x[j] = m[j] + sigma * stream.next_normal();
            break;
        }
        case MeasureType::UniformBox:
            for (std::size_t j = 0; j < d; ++j)
                x[j] = model.lower[j] + (model.upper[j] - model.lower[j]) * stream.next_double();
            break;
        case MeasureType::DiscreteAtoms: {
            const std::size_t k = detail::pick_component(model.weights, stream.next_double());
            const double* m = model.point(k);
            for (std::size_t j = 0; j < d; ++j) x[j] = m[j];
            break;
        }
        }
    }
    return out;
}

/// Closed-form density of mu * Phi_s at x (Phi_s = N(0, 2s I)).
/// s = 0 returns the plain density for absolutely continuous variants and
/// throws for discrete atoms.
inline double smoothed_density_eval(const MeasureModel& model, double s, const double* x) {
    if (!(s >= 0.0)) throw std::invalid_argument("smoothed_density_eval: s must be >= 0");
    const int d = model.dim;
    switch (model.type) {
    case MeasureType::GaussianMixture: {
        double acc = 0.0;
        for (std::size_t k = 0; k < model.components(); ++k) {
            const double var = model.variances[k] + 2.0 * s;
            acc += model.weights[k] * special::gaussian_density(detail::sqdist(x, model.point(k), d), var, d);
        }
        return acc;
    }
    case MeasureType::UniformBox: {
        double prod = 1.0;
        if (s == 0.0) {
            for (int j = 0; j < d; ++j) {
                if (x[j] < model.lower[j] || x[j] > model.upper[j]) return 0.0;
                prod /= model.upper[j] - model.lower[j];
            }
            return prod;
        }
        const double sd = std::sqrt(2.0 * s);
        for (int j = 0; j < d; ++j) {
            const double a = (x[j] - model.lower[j]) / sd;
            const double b = (x[j] - model.upper[j]) / sd;
            prod *= (special::normal_cdf(a) - special::normal_cdf(b)) / (model.upper[j] - model.lower[j]);
        }
        return prod;
    }
    case MeasureType::DiscreteAtoms: {
        if (s == 0.0) throw std::domain_error("smoothed_density_eval: density undefined for atoms at s = 0");
        double acc = 0.0;
        for (std::size_t k = 0; k < model.components(); ++k)
            acc += model.weights[k] * special::gaussian_density(detail::sqdist(x, model.point(k), d), 2.0 * s, d);
        return acc;
    }
    }
    return 0.0;
}

inline double smoothed_density_eval(const MeasureModel& model, double s, const std::vector<double>& x) {
    if (static_cast<int>(x.size()) != model.dim)
        throw std::invalid_argument("smoothed_density_eval: point dimension mismatch");
    return smoothed_density_eval(model, s, x.data());
}

namespace detail {

/// Mass of the closed ball B(c, r) under N(m, var * I) in d >= 2 dimensions.
/// One-dimensional slicing along the center offset: with delta = |c-m|/sigma
/// and rr = r/sigma,
///   P = Int_{-rr}^{rr} phi(y + delta) * Chi2CDF_{d-1}(rr^2 - y^2) dy.
inline double gaussian_ball_mass_nd(double delta, double rr, int d) {
    if (rr <= 0.0) return 0.0;
    const double df = static_cast<double>(d - 1);
    auto integrand = [&](double y) {
        const double rem = rr * rr - y * y;
        if (rem <= 0.0) return 0.0;
        return special::normal_pdf(y + delta) * special::chi2_cdf(rem, df);
    };
    // The factor phi(y + delta) confines the integrand to y in -delta +/- 40;
    // clipping keeps the adaptive quadrature away from huge dead intervals.
    const double a = std::max(-rr, -delta - 40.0);
    const double b = std::min(rr, -delta + 40.0);
    if (a >= b) return 0.0;  // ball misses the component by > 40 sigma
    return std::clamp(quad::integrate(integrand, a, b, 1e-10, 1e-300), 0.0, 1.0);
}

/// Volume of the intersection of the closed ball B(c, r) with the box
/// [lower, upper] in dimensions j..d-1, by recursive slicing.
inline double ball_box_volume(const double* c, double r, const std::vector<double>& lower,
                              const std::vector<double>& upper, int j, int d, double rel_tol) {
    if (r <= 0.0) return 0.0;
    const double a = std::max(lower[static_cast<std::size_t>(j)], c[j] - r);
    const double b = std::min(upper[static_cast<std::size_t>(j)], c[j] + r);
    if (a >= b) return 0.0;
    if (j == d - 1) return b - a;
    auto slice = [&](double x) {
        const double rem = r * r - (x - c[j]) * (x - c[j]);
        if (rem <= 0.0) return 0.0;
        return ball_box_volume(c, std::sqrt(rem), lower, upper, j + 1, d, rel_tol * 0.5);
    };
    return quad::integrate(slice, a, b, rel_tol, 1e-300);
}

}  // namespace detail

/// mu(B(center, r)) for the closed ball of radius r. Exact in d = 1 via CDF
/// differences; d >= 2 Gaussian mixtures use a noncentral-chi^2 slicing
/// quadrature (rel tol 1e-10) and boxes use recursive slicing (rel tol 1e-8).
inline double ball_mass(const MeasureModel& model, const double* center, double r) {
    if (!(r >= 0.0)) throw std::invalid_argument("ball_mass: r must be >= 0");
    const int d = model.dim;
    switch (model.type) {
    case MeasureType::GaussianMixture: {
        double acc = 0.0;
        for (std::size_t k = 0; k < model.components(); ++k) {
            const double sigma = std::sqrt(model.variances[k]);
            if (d == 1) {
                const double m = model.point(k)[0];
                acc += model.weights[k] * (special::normal_cdf((center[0] + r - m) / sigma) -
                                           special::normal_cdf((center[0] - r - m) / sigma));
            } else {
                const double delta = std::sqrt(detail::sqdist(center, model.point(k), d)) / sigma;
                acc += model.weights[k] * detail::gaussian_ball_mass_nd(delta, r / sigma, d);
            }
        }
        return acc;
    }
    case MeasureType::UniformBox: {
        if (d == 1) {
            const double a = std::max(model.lower[0], center[0] - r);
            const double b = std::min(model.upper[0], center[0] + r);
            return b > a ? (b - a) / (model.upper[0] - model.lower[0]) : 0.0;
        }
        return detail::ball_box_volume(center, r, model.lower, model.upper, 0, d, 1e-8) / model.box_volume();
    }
    case MeasureType::DiscreteAtoms: {
        double acc = 0.0;
        const double r2 = r * r;
        for (std::size_t k = 0; k < model.components(); ++k)
            if (detail::sqdist(center, model.point(k), d) <= r2) acc += model.weights[k];
        return acc;
    }
    }
    return 0.0;
}

inline double ball_mass(const MeasureModel& model, const std::vector<double>& center, double r) {
    if (static_cast<int>(center.size()) != model.dim)
        throw std::invalid_argument("ball_mass: point dimension mismatch");
    return ball_mass(model, center.data(), r);
}

/// Default radius grid for the maximal function: 400 log-spaced points
/// spanning [1e-6, 1e3].
inline std::vector<double> default_radius_grid(std::size_t n = 400, double lo = 1e-6, double hi = 1e3) {
    std::vector<double> grid(n);
    const double step = std::log(hi / lo) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) grid[i] = lo * std::exp(step * static_cast<double>(i));
    grid.back() = hi;
    return grid;
}

namespace detail {

/// Model-aware candidate radii at which mu(B(x,r)) / (V_d r^d) may peak:
/// exact atom distances for discrete atoms, box wall distances, and a
/// ternary-search optimum for a single Gaussian component. Candidates depend
/// only on (model, x), never on the grid, so sups over nested grids stay
/// monotone.
inline std::vector<double> maximal_candidates(const MeasureModel& model, const double* x) {
    std::vector<double> cand;
    const int d = model.dim;
    switch (model.type) {
    case MeasureType::DiscreteAtoms:
        for (std::size_t k = 0; k < model.components(); ++k)
            cand.push_back(std::sqrt(sqdist(x, model.point(k), d)));
        break;
    case MeasureType::UniformBox:
        for (int j = 0; j < d; ++j) {
            cand.push_back(std::abs(x[j] - model.lower[static_cast<std::size_t>(j)]));
            cand.push_back(std::abs(x[j] - model.upper[static_cast<std::size_t>(j)]));
        }
        break;
    case MeasureType::GaussianMixture:
        if (model.components() == 1 && d == 1) {
            // Maximize [Phi((delta+r)/sigma) - Phi((delta-r)/sigma)] / (2r)
            // by golden-section search on log r.
            const double sigma = std::sqrt(model.variances[0]);
            const double delta = std::abs(x[0] - model.point(0)[0]);
            auto ratio = [&](double lr) {
                const double r = std::exp(lr);
                return (special::normal_cdf((delta + r) / sigma) - special::normal_cdf((delta - r) / sigma)) /
                       (2.0 * r);
            };
            double lo = std::log(1e-8), hi = std::log(1e4);
            const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
            double m1 = hi - gr * (hi - lo), m2 = lo + gr * (hi - lo);
            double f1 = ratio(m1), f2 = ratio(m2);
            for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
                if (f1 < f2) {
                    lo = m1; m1 = m2; f1 = f2;
                    m2 = lo + gr * (hi - lo); f2 = ratio(m2);
                } else {
                    hi = m2; m2 = m1; f2 = f1;
                    m1 = hi - gr * (hi - lo); f1 = ratio(m1);
                }
            }
            cand.push_back(std::exp(0.5 * (lo + hi)));
        }
        break;
    }
    std::erase_if(cand, [](double r) { return !(r > 0.0); });
    return cand;
}

}  // namespace detail

/// Lower bound of the Hardy-Littlewood maximal function
///   M mu(x) = sup_{r>0} mu(B(x,r)) / (V_d r^d),
/// as a sup over the given radius grid plus model-aware exact candidates.
/// Returns +infinity when x sits exactly on a discrete atom.
inline double maximal_function(const MeasureModel& model, const double* x, const std::vector<double>& radius_grid) {
    if (radius_grid.empty()) throw std::invalid_argument("maximal_function: radius grid must be nonempty");
    if (!std::is_sorted(radius_grid.begin(), radius_grid.end()))
        throw std::invalid_argument("maximal_function: radius grid must be sorted");
    if (!(radius_grid.front() > 0.0)) throw std::invalid_argument("maximal_function: radii must be positive");
    const int d = model.dim;
    if (model.type == MeasureType::DiscreteAtoms) {
        for (std::size_t k = 0; k < model.components(); ++k)
            if (model.weights[k] > 0.0 && detail::sqdist(x, model.point(k), d) == 0.0)
                return std::numeric_limits<double>::infinity();
    }
    const double vd = special::unit_ball_volume(d);
    double best = 0.0;
    auto consider = [&](double r) {
        const double ratio = ball_mass(model, x, r) / (vd * std::pow(r, d));
        best = std::max(best, ratio);
    };
    for (double r : radius_grid) consider(r);
    for (double r : detail::maximal_candidates(model, x)) consider(r);
    return best;
}

inline double maximal_function(const MeasureModel& model, const std::vector<double>& x,
                               const std::vector<double>& radius_grid) {
    if (static_cast<int>(x.size()) != model.dim)
        throw std::invalid_argument("maximal_function: point dimension mismatch");
    return maximal_function(model, x.data(), radius_grid);
}

inline double maximal_function(const MeasureModel& model, const std::vector<double>& x) {
    return maximal_function(model, x, default_radius_grid());
}

/// Characteristic function mu_hat(xi) = E[e^{i xi . X}], closed form for all
/// three variants. Used by the spectral field evaluator.
inline std::complex<double> characteristic_function(const MeasureModel& model, const double* xi) {
    const int d = model.dim;
    switch (model.type) {
    case MeasureType::GaussianMixture: {
        std::complex<double> acc = 0.0;
        double xi2 = 0.0;
        for (int j = 0; j < d; ++j) xi2 += xi[j] * xi[j];
        for (std::size_t k = 0; k < model.components(); ++k) {
            const double* m = model.point(k);
            double phase = 0.0;
            for (int j = 0; j < d; ++j) phase += m[j] * xi[j];
            acc += model.weights[k] * std::exp(-0.5 * model.variances[k] * xi2) *
                   std::exp(std::complex<double>(0.0, phase));
        }
        return acc;
    }
    case MeasureType::UniformBox: {
        std::complex<double> prod = 1.0;
        for (int j = 0; j < d; ++j) {
            const double l = model.lower[static_cast<std::size_t>(j)];
            const double u = model.upper[static_cast<std::size_t>(j)];
            const double w = xi[j];
            if (std::abs(w) * (u - l) < 1e-8) {
                // sinc limit with second-order phase about the midpoint
                const double mid = 0.5 * (l + u);
                prod *= std::exp(std::complex<double>(0.0, w * mid)) *
                        (1.0 - w * w * (u - l) * (u - l) / 24.0);
            } else {
                const std::complex<double> iw(0.0, w);
                prod *= (std::exp(iw * u) - std::exp(iw * l)) / (iw * (u - l));
            }
        }
        return prod;
    }
    case MeasureType::DiscreteAtoms: {
        std::complex<double> acc = 0.0;
        for (std::size_t k = 0; k < model.components(); ++k) {
            const double* m = model.point(k);
            double phase = 0.0;
            for (int j = 0; j < d; ++j) phase += m[j] * xi[j];
            acc += model.weights[k] * std::exp(std::complex<double>(0.0, phase));
        }
        return acc;
    }
    }
    return 0.0;
}

/// Per-axis interval [lo_j, hi_j] containing essentially all of the model's
/// mass; Gaussian components extend z standard deviations beyond their means.
inline void axis_bounds(const MeasureModel& model, double z, std::vector<double>& lo, std::vector<double>& hi) {
    const int d = model.dim;
    lo.assign(static_cast<std::size_t>(d), std::numeric_limits<double>::infinity());
    hi.assign(static_cast<std::size_t>(d), -std::numeric_limits<double>::infinity());
    switch (model.type) {
    case MeasureType::UniformBox:
        lo = model.lower;
        hi = model.upper;
        return;
    case MeasureType::GaussianMixture:
        for (std::size_t k = 0; k < model.components(); ++k) {
            const double spread = z * std::sqrt(model.variances[k]);
            for (int j = 0; j < d; ++j) {
                lo[static_cast<std::size_t>(j)] = std::min(lo[static_cast<std::size_t>(j)], model.point(k)[j] - spread);
                hi[static_cast<std::size_t>(j)] = std::max(hi[static_cast<std::size_t>(j)], model.point(k)[j] + spread);
            }
        }
        return;
    case MeasureType::DiscreteAtoms:
        for (std::size_t k = 0; k < model.components(); ++k)
            for (int j = 0; j < d; ++j) {
                lo[static_cast<std::size_t>(j)] = std::min(lo[static_cast<std::size_t>(j)], model.point(k)[j]);
                hi[static_cast<std::size_t>(j)] = std::max(hi[static_cast<std::size_t>(j)], model.point(k)[j]);
            }
        return;
    }
}

// ---------------------------------------------------------------------------
// JSON serialization. Schema: schemas/measure_model.schema.json.
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const MeasureModel& model) {
    nlohmann::json j;
    j["dim"] = model.dim;
    auto points_array = [&](const std::vector<double>& flat) {
        nlohmann::json arr = nlohmann::json::array();
        const auto d = static_cast<std::size_t>(model.dim);
        for (std::size_t k = 0; k * d < flat.size(); ++k) {
            nlohmann::json p = nlohmann::json::array();
            for (std::size_t jx = 0; jx < d; ++jx) p.push_back(flat[k * d + jx]);
            arr.push_back(std::move(p));
        }
        return arr;
    };
    switch (model.type) {
    case MeasureType::GaussianMixture:
        j["type"] = "gaussian_mixture";
        j["weights"] = model.weights;
        j["means"] = points_array(model.points);
        j["variances"] = model.variances;
        break;
    case MeasureType::UniformBox:
        j["type"] = "uniform_box";
        j["lower"] = model.lower;
        j["upper"] = model.upper;
        break;
    case MeasureType::DiscreteAtoms:
        j["type"] = "discrete";
        j["weights"] = model.weights;
        j["locations"] = points_array(model.points);
        break;
    }
    return j;
}

inline MeasureModel model_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("type") || !j.contains("dim"))
        throw std::invalid_argument("MeasureModel JSON: requires \"type\" and \"dim\"");
    const std::string type = j.at("type").get<std::string>();
    const int dim = j.at("dim").get<int>();
    auto read_points = [&](const char* key) {
        std::vector<std::vector<double>> pts;
        for (const auto& p : j.at(key)) pts.push_back(p.get<std::vector<double>>());
        return pts;
    };
    if (type == "gaussian_mixture")
        return MeasureModel::gaussian_mixture(dim, j.at("weights").get<std::vector<double>>(),
                                              read_points("means"),
                                              j.at("variances").get<std::vector<double>>());
    if (type == "uniform_box") {
        auto m = MeasureModel::uniform_box(j.at("lower").get<std::vector<double>>(),
                                           j.at("upper").get<std::vector<double>>());
        if (m.dim != dim) throw std::invalid_argument("MeasureModel JSON: dim does not match box bounds");
        return m;
    }
    if (type == "discrete")
        return MeasureModel::discrete(dim, j.at("weights").get<std::vector<double>>(), read_points("locations"));
    throw std::invalid_argument("MeasureModel JSON: unknown type \"" + type + "\"");
}

}  // namespace sobemp::measures
