#pragma once

// Optimal meal bolus by single shooting.
//
// For one subject at the 6 mmol/L steady state, a meal d0 and a bolus are
// given in the first 5-min interval and the noise-free model is simulated for
// 12 h with the steady basal rate. The cost is the time integral of
//   rho(z) = 1/2 (z - setpoint)^2 + kappa * 1/2 max(0, soft_lower - z)^2
// over the sensor glucose z. The integral is carried as an extra ODE state so
// it shares the RK4 substeps of the model.

#include "apsim/patient_model.hpp"

#include <span>
#include <vector>

namespace apsim {

struct ObjectiveSpec {
    double horizon_min = 720.0;
    double setpoint = 6.0;       ///< [mmol/L]
    double soft_lower = 3.9;     ///< [mmol/L]
    double kappa = 1e6;
    double interval_min = 5.0;   ///< T_s; the horizon holds horizon/T_s intervals
    double max_substep_min = 0.5;

    [[nodiscard]] int intervals() const;
    void validate() const;
};

struct BolusProblem {
    PatientParams theta;
    double meal_rate = 0.0;  ///< d0 [g CHO/min] over the first interval
    ObjectiveSpec spec;
};

[[nodiscard]] double penalty(double z, const ObjectiveSpec& spec);

struct ObjectiveValue {
    double cost = 0.0;
    double min_glucose = 0.0;  ///< lowest sensor glucose at the substep nodes
};

/// Objective with the steady state computed once.
class BolusObjective {
public:
    explicit BolusObjective(BolusProblem problem);

    [[nodiscard]] ObjectiveValue evaluate(double bolus) const;
    [[nodiscard]] double operator()(double bolus) const { return evaluate(bolus).cost; }

    [[nodiscard]] const BolusProblem& problem() const noexcept { return problem_; }
    [[nodiscard]] double steady_basal() const noexcept { return basal_; }

private:
    BolusProblem problem_;
    PatientState x0_;
    double basal_ = 0.0;
};

/// phi(bolus) for a bolus flow rate [mU/min] in the first interval.
[[nodiscard]] double objective(const BolusProblem& problem, double bolus);

struct OptimizerOptions {
    double initial_step = 10.0;   ///< [mU/min]
    double bolus_cap = 20000.0;   ///< [mU/min]; no bracket below this is a BracketFailure
    double relative_tolerance = 1e-4;  ///< final interval relative to the refined cell
    std::size_t scan_points = 64;       ///< coarse scan of the bracket; below 3 disables it
};

/// Bracketing by doubling, a coarse scan of the bracket, then golden-section
/// search around every local minimum of the scan.
[[nodiscard]] double optimal_bolus(const BolusProblem& problem, const OptimizerOptions& options = {});
[[nodiscard]] double optimal_bolus(const BolusObjective& objective, const OptimizerOptions& options = {});

/// Continuous two-piece linear fit through the origin,
/// y = s1 x + (s2 - s1) max(0, x - c), next to the one-piece fit y = s x.
struct PiecewiseFit {
    double slope_low = 0.0;
    double slope_high = 0.0;
    double breakpoint = 0.0;
    double relative_rms = 0.0;  ///< rms(residual) / rms(y)
    double linear_slope = 0.0;
    double linear_relative_rms = 0.0;
};

[[nodiscard]] PiecewiseFit fit_piecewise(std::span<const double> x, std::span<const double> y);

struct SweepResult {
    std::vector<double> meal_grams;
    std::vector<double> optimal_bolus;      ///< [mU/min]
    std::vector<double> min_glucose;        ///< at the optimum [mmol/L]
    std::vector<double> optimal_cost;       ///< phi at the optimum
    std::vector<double> bolus_grid;         ///< [mU/min]
    std::vector<std::vector<double>> landscape;  ///< [meal][bolus]
    PiecewiseFit fit;
    double kink_meal = -1.0;       ///< first upward slope change of the optimal curve; -1 if none
    double crossing_meal = -1.0;   ///< first meal whose optimum dips below 4.5 mmol/L; -1 if none
    /// Each landscape column minimum lies within one cell of the curve, or the
    /// curve's cost is below it (the grid missed a narrow basin).
    bool consistent = true;
};

/// Optimal curve and objective landscape. `meal_grams` are absolute carbohydrate
/// contents eaten in the first interval.
[[nodiscard]] SweepResult curve_sweep(const PatientParams& theta, std::span<const double> meal_grams,
                                      std::span<const double> bolus_grid, const ObjectiveSpec& spec = {},
                                      unsigned workers = 1, const OptimizerOptions& options = {});

/// Start of the first segment whose slope exceeds the previous one by more than
/// `threshold` (relative); -1 if none. The optimal curve is concave apart from
/// such upward kinks.
[[nodiscard]] double detect_kink(std::span<const double> x, std::span<const double> y, double threshold = 0.1);

}  // namespace apsim
