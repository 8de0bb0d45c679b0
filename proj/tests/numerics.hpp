#pragma once

// Numerical checks on the patient model shared by the unit tests and the
// acceptance run.

#include "apsim/patient_model.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace numerics {

inline apsim::PatientParams noise_free(apsim::PatientParams theta) {
    theta.cgm.noise_sd = 0.0;
    return theta;
}

/// Max-norm of the derivative at the 6 mmol/L steady state.
inline double steady_residual(const apsim::PatientParams& theta) {
    const auto ss = apsim::steady_state(theta, 6.0);
    const auto f = apsim::derivatives(ss.state.x, {ss.basal, 0.0}, {}, theta);
    double worst = 0.0;
    for (double v : f) worst = std::max(worst, std::abs(v));
    return worst;
}

/// Largest componentwise relative drift after `hours` at steady inputs.
inline double equilibrium_drift(const apsim::PatientParams& theta_in, double hours) {
    const auto theta = noise_free(theta_in);
    const auto ss = apsim::steady_state(theta, 6.0);
    apsim::CounterStream noise(1, 1);
    auto x = ss.state;
    const int n = static_cast<int>(std::lround(hours * 12.0));
    for (int k = 0; k < n; ++k) x = apsim::advance(x, {ss.basal, 0.0}, {}, theta, 5.0, noise).state;
    double worst = 0.0;
    for (std::size_t i = 0; i < apsim::kStateSize; ++i) {
        const double d = std::abs(x.x[i] - ss.state.x[i]);
        if (d == 0.0) continue;
        worst = std::max(worst, d / std::abs(ss.state.x[i]));
    }
    return worst;
}

/// Sensor glucose every 5 min for `hours` from the 6 mmol/L steady state,
/// with `meal_g` eaten and `bolus_mu` [mU] given in the first interval.
inline std::vector<double> response(const apsim::PatientParams& theta_in, double meal_g, double bolus_mu,
                                    double hours, double substep, double basal_scale = 1.0) {
    const auto theta = noise_free(theta_in);
    const auto ss = apsim::steady_state(theta, 6.0);
    apsim::CounterStream noise(1, 1);
    apsim::AdvanceOptions opt;
    opt.max_substep_min = substep;
    auto x = ss.state;
    std::vector<double> z{apsim::output(x, theta)};
    const int n = static_cast<int>(std::lround(hours * 12.0));
    for (int k = 0; k < n; ++k) {
        const apsim::InsulinInput u{ss.basal * basal_scale, k == 0 ? bolus_mu / 5.0 : 0.0};
        const apsim::DisturbanceInput d{k == 0 ? meal_g / 5.0 : 0.0, 0.0};
        x = apsim::advance(x, u, d, theta, 5.0, noise, opt).state;
        z.push_back(apsim::output(x, theta));
    }
    return z;
}

/// Largest change of the 12 h meal-and-bolus response when the substep is halved.
inline double halving_change(const apsim::PatientParams& theta, double substep = 0.5) {
    const auto a = response(theta, 60.0, 4000.0, 12.0, substep);
    const auto b = response(theta, 60.0, 4000.0, 12.0, substep / 2.0);
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

/// Endpoint error ratio e(h) / e(h/2) against a fine reference on a smooth
/// no-meal response (reduced basal, glucose drifts up inside (4.5, 9)).
inline double convergence_ratio(const apsim::PatientParams& theta, double h = 5.0) {
    auto endpoint = [&](double s) { return response(theta, 0.0, 0.0, 12.0, s, 0.9).back(); };
    const double ref = endpoint(h / 64.0);
    return std::abs(endpoint(h) - ref) / std::abs(endpoint(h / 2.0) - ref);
}

}  // namespace numerics
