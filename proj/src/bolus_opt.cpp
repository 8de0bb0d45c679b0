#include "apsim/bolus_opt.hpp"

#include "apsim/error.hpp"
#include "apsim/ode.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <optional>
#include <thread>
#include <utility>

namespace apsim {

namespace {

constexpr double kFluxKnee = 4.5;
const double kInvPhi = (std::sqrt(5.0) - 1.0) / 2.0;

using Augmented = std::array<double, kStateSize + 1>;

}  // namespace

int ObjectiveSpec::intervals() const { return static_cast<int>(std::llround(horizon_min / interval_min)); }

void ObjectiveSpec::validate() const {
    if (!(horizon_min > 0.0)) throw ConfigError("objective horizon must be > 0");
    if (!(interval_min > 0.0) || !(max_substep_min > 0.0)) throw ConfigError("objective intervals must be > 0");
    if (!(kappa >= 0.0)) throw ConfigError("kappa must be >= 0");
    if (!(soft_lower < setpoint)) throw ConfigError("soft lower bound must be below the setpoint");
}

double penalty(double z, const ObjectiveSpec& spec) {
    const double dev = z - spec.setpoint;
    const double low = std::max(0.0, spec.soft_lower - z);
    return 0.5 * dev * dev + spec.kappa * 0.5 * low * low;
}

BolusObjective::BolusObjective(BolusProblem problem) : problem_(std::move(problem)) {
    problem_.spec.validate();
    if (!(problem_.meal_rate >= 0.0)) throw ConfigError("meal rate must be >= 0");
    auto ss = steady_state(problem_.theta, problem_.spec.setpoint);
    x0_ = ss.state;
    basal_ = ss.basal;
}

ObjectiveValue BolusObjective::evaluate(double bolus) const {
    if (!(bolus >= 0.0) || !std::isfinite(bolus)) throw ConfigError("bolus must be finite and >= 0");
    const auto& spec = problem_.spec;
    const auto& theta = problem_.theta;
    const int n = spec.intervals();
    const int sub = static_cast<int>(std::ceil(spec.interval_min / spec.max_substep_min - 1e-12));
    const double h = spec.interval_min / sub;

    Augmented y{};
    std::copy(x0_.x.begin(), x0_.x.end(), y.begin());
    ObjectiveValue out;
    out.min_glucose = y[kGsc];

    for (int k = 0; k < n; ++k) {
        const InsulinInput u{basal_, k == 0 ? bolus : 0.0};
        const DisturbanceInput d{k == 0 ? problem_.meal_rate : 0.0, 0.0};
        auto rhs = [&](const Augmented& a) {
            StateVector x;
            std::copy(a.begin(), a.begin() + kStateSize, x.begin());
            const auto dx = derivatives(x, u, d, theta);
            Augmented da;
            std::copy(dx.begin(), dx.end(), da.begin());
            da[kStateSize] = penalty(a[kGsc], spec);
            return da;
        };
        for (int s = 0; s < sub; ++s) {
            rk4_step(y, h, rhs);
            for (std::size_t i = 0; i < kStateSize; ++i) {
                if (!std::isfinite(y[i])) throw DivergenceError("objective simulation diverged");
                y[i] = std::max(0.0, y[i]);
            }
            out.min_glucose = std::min(out.min_glucose, y[kGsc]);
        }
    }
    out.cost = y[kStateSize];
    return out;
}

double objective(const BolusProblem& problem, double bolus) { return BolusObjective(problem)(bolus); }

double optimal_bolus(const BolusProblem& problem, const OptimizerOptions& options) {
    return optimal_bolus(BolusObjective(problem), options);
}

double optimal_bolus(const BolusObjective& phi, const OptimizerOptions& opt) {
    const double f0 = phi(0.0);
    double a = 0.0;
    double c = opt.initial_step;
    double fc = phi(c);
    if (fc < f0) {
        double prev = 0.0;
        double cur = c;
        double fcur = fc;
        for (;;) {
            const double nxt = 2.0 * cur;
            if (nxt > opt.bolus_cap) {
                throw BracketFailure("objective still decreasing at the bolus cap " + format_double(opt.bolus_cap));
            }
            const double fn = phi(nxt);
            if (fn >= fcur) {
                a = prev;
                c = nxt;
                break;
            }
            prev = cur;
            cur = nxt;
            fcur = fn;
        }
    }

    auto golden = [&](double lo, double hi) {
        const double width = hi - lo;
        double x1 = hi - kInvPhi * (hi - lo);
        double x2 = lo + kInvPhi * (hi - lo);
        double f1 = phi(x1);
        double f2 = phi(x2);
        while (hi - lo > opt.relative_tolerance * width) {
            if (f1 < f2) {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - kInvPhi * (hi - lo);
                f1 = phi(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + kInvPhi * (hi - lo);
                f2 = phi(x2);
            }
        }
        return f1 < f2 ? std::pair{x1, f1} : std::pair{x2, f2};
    };

    // The landscape can hold a second basin next to the hypoglycemia cliff,
    // sometimes nearly tied with the first. Every local minimum of a coarse
    // scan is refined and the best one wins.
    // The lower bound stays active when nothing interior beats it.
    std::pair<double, double> best{0.0, f0};
    if (opt.scan_points >= 3) {
        const std::size_t n = opt.scan_points;
        const double step = (c - a) / static_cast<double>(n - 1);
        std::vector<double> f(n);
        for (std::size_t k = 0; k < n; ++k) f[k] = phi(a + step * static_cast<double>(k));
        for (std::size_t k = 0; k < n; ++k) {
            if ((k > 0 && f[k] > f[k - 1]) || (k + 1 < n && f[k] > f[k + 1])) continue;
            const double lo = a + step * static_cast<double>(k == 0 ? 0 : k - 1);
            const double hi = a + step * static_cast<double>(std::min(k + 1, n - 1));
            const auto cand = golden(lo, hi);
            if (cand.second < best.second) best = cand;
        }
    } else {
        const auto cand = golden(a, c);
        if (cand.second < best.second) best = cand;
    }
    return best.first;
}

PiecewiseFit fit_piecewise(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 3) throw Error("fit_piecewise: need at least three paired points");
    PiecewiseFit fit;
    double syy = 0.0;
    double sxx = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        syy += y[i] * y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const double m = static_cast<double>(x.size());
    const double rms_y = std::sqrt(syy / m);
    fit.linear_slope = sxx > 0.0 ? sxy / sxx : 0.0;
    {
        double sse = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double r = y[i] - fit.linear_slope * x[i];
            sse += r * r;
        }
        fit.linear_relative_rms = rms_y > 0.0 ? std::sqrt(sse / m) / rms_y : 0.0;
    }

    const auto [xmin_it, xmax_it] = std::minmax_element(x.begin(), x.end());
    const double xmin = *xmin_it;
    const double xmax = *xmax_it;
    constexpr int kCandidates = 400;
    double best_sse = std::numeric_limits<double>::infinity();
    fit.slope_low = fit.slope_high = fit.linear_slope;
    fit.breakpoint = xmax;
    for (int j = 1; j < kCandidates; ++j) {
        const double c = xmin + (xmax - xmin) * j / kCandidates;
        // Basis: x and max(0, x - c).
        double a11 = 0.0;
        double a12 = 0.0;
        double a22 = 0.0;
        double b1 = 0.0;
        double b2 = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double h = std::max(0.0, x[i] - c);
            a11 += x[i] * x[i];
            a12 += x[i] * h;
            a22 += h * h;
            b1 += x[i] * y[i];
            b2 += h * y[i];
        }
        const double det = a11 * a22 - a12 * a12;
        if (!(std::abs(det) > 1e-12 * a11 * a22)) continue;
        const double s = (b1 * a22 - b2 * a12) / det;
        const double t = (a11 * b2 - a12 * b1) / det;
        double sse = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double r = y[i] - s * x[i] - t * std::max(0.0, x[i] - c);
            sse += r * r;
        }
        if (sse < best_sse) {
            best_sse = sse;
            fit.slope_low = s;
            fit.slope_high = s + t;
            fit.breakpoint = c;
        }
    }
    if (std::isfinite(best_sse)) {
        fit.relative_rms = rms_y > 0.0 ? std::sqrt(best_sse / m) / rms_y : 0.0;
    } else {
        fit.relative_rms = fit.linear_relative_rms;
    }
    return fit;
}

double detect_kink(std::span<const double> x, std::span<const double> y, double threshold) {
    if (x.size() != y.size() || x.size() < 3) return -1.0;
    std::optional<double> previous;
    for (std::size_t i = 1; i < x.size(); ++i) {
        const double dx = x[i] - x[i - 1];
        if (!(dx > 0.0)) continue;
        const double slope = (y[i] - y[i - 1]) / dx;
        if (previous && *previous > 0.0 && slope > (1.0 + threshold) * *previous) return x[i - 1];
        previous = slope;
    }
    return -1.0;
}

SweepResult curve_sweep(const PatientParams& theta, std::span<const double> meal_grams,
                        std::span<const double> bolus_grid, const ObjectiveSpec& spec, unsigned workers,
                        const OptimizerOptions& options) {
    spec.validate();
    SweepResult r;
    r.meal_grams.assign(meal_grams.begin(), meal_grams.end());
    r.bolus_grid.assign(bolus_grid.begin(), bolus_grid.end());
    const std::size_t n = meal_grams.size();
    r.optimal_bolus.assign(n, 0.0);
    r.min_glucose.assign(n, 0.0);
    r.optimal_cost.assign(n, 0.0);
    r.landscape.assign(n, std::vector<double>(bolus_grid.size(), 0.0));
    std::vector<std::string> errors(n);

    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                if (!(meal_grams[i] >= 0.0)) throw ConfigError("meal sizes must be >= 0");
                BolusObjective phi(BolusProblem{theta, meal_grams[i] / spec.interval_min, spec});
                r.optimal_bolus[i] = optimal_bolus(phi, options);
                const auto at = phi.evaluate(r.optimal_bolus[i]);
                r.min_glucose[i] = at.min_glucose;
                r.optimal_cost[i] = at.cost;
                for (std::size_t j = 0; j < bolus_grid.size(); ++j) r.landscape[i][j] = phi(bolus_grid[j]);
            } catch (const Error& e) {
                errors[i] = e.what();
            }
        }
    };
    workers = std::max(1u, std::min<unsigned>(workers == 0 ? std::thread::hardware_concurrency() : workers,
                                              static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    if (workers == 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!errors[i].empty()) {
            throw Error("bolus sweep failed at meal " + format_double(meal_grams[i]) + " g: " + errors[i]);
        }
    }

    if (!bolus_grid.empty()) {
        double cell = 0.0;
        for (std::size_t j = 1; j < bolus_grid.size(); ++j) cell = std::max(cell, bolus_grid[j] - bolus_grid[j - 1]);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& col = r.landscape[i];
            const auto jmin = static_cast<std::size_t>(std::min_element(col.begin(), col.end()) - col.begin());
            // A landscape minimum in another basin is fine when the optimum beats it.
            if (std::abs(bolus_grid[jmin] - r.optimal_bolus[i]) > cell && r.optimal_cost[i] > col[jmin]) {
                r.consistent = false;
            }
        }
    }
    if (n >= 3) {
        r.fit = fit_piecewise(r.meal_grams, r.optimal_bolus);
        r.kink_meal = detect_kink(r.meal_grams, r.optimal_bolus);
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (r.min_glucose[i] < kFluxKnee) {
            r.crossing_meal = r.meal_grams[i];
            break;
        }
    }
    return r;
}

}  // namespace apsim
