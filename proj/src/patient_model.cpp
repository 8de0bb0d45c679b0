#include "apsim/patient_model.hpp"

#include "apsim/error.hpp"
#include "apsim/ode.hpp"
#include "apsim/units.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace apsim {

namespace {

constexpr double kFluxKneeGlucose = 4.5;     // F01 decreases below this [mmol/L]
constexpr double kRenalThreshold = 9.0;      // [mmol/L]
constexpr double kRenalClearance = 0.003;    // [1/min]
constexpr double kNoiseReferenceInterval = 5.0;  // noise_ar is defined per this many minutes

double non_insulin_flux(double g, double f01_total) {
    return g >= kFluxKneeGlucose ? f01_total : f01_total * g / kFluxKneeGlucose;
}

double renal_clearance(double g, double vg_total) {
    return g >= kRenalThreshold ? kRenalClearance * (g - kRenalThreshold) * vg_total : 0.0;
}

}  // namespace

ExerciseEffect default_exercise_effect(double intensity, const ExerciseParams& params) {
    return {1.0 + params.uptake_gain * intensity, 1.0 + params.sensitivity_gain * intensity};
}

void PatientParams::validate() const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string("patient.") + name + " must be > 0");
    };
    const auto& h = hovorka;
    positive(bodyweight, "bodyweight");
    positive(h.ka1, "ka1");
    positive(h.ka2, "ka2");
    positive(h.ka3, "ka3");
    positive(h.s_it, "s_it");
    positive(h.s_id, "s_id");
    positive(h.s_ie, "s_ie");
    positive(h.ke, "ke");
    positive(h.vi, "vi");
    positive(h.vg, "vg");
    positive(h.k12, "k12");
    positive(h.f01, "f01");
    positive(h.egp0, "egp0");
    positive(h.tmax_i, "tmax_i");
    positive(h.tmax_g, "tmax_g");
    positive(h.ag, "ag");
    positive(cgm.tau, "cgm.tau");
    if (!(cgm.noise_sd >= 0.0)) throw ConfigError("patient.cgm.noise_sd must be >= 0");
    if (!(cgm.noise_ar >= 0.0 && cgm.noise_ar < 1.0)) throw ConfigError("patient.cgm.noise_ar must be in [0, 1)");
    if (!(exercise.uptake_gain >= 0.0) || !(exercise.sensitivity_gain >= 0.0)) {
        throw ConfigError("patient.exercise gains must be >= 0");
    }
}

std::vector<std::pair<std::string_view, double>> PatientParams::time_constants() const {
    const auto& h = hovorka;
    return {{"1/ka1", 1.0 / h.ka1}, {"1/ka2", 1.0 / h.ka2}, {"1/ka3", 1.0 / h.ka3},
            {"tmax_i", h.tmax_i},   {"tmax_g", h.tmax_g},   {"1/k12", 1.0 / h.k12},
            {"1/ke", 1.0 / h.ke},   {"cgm.tau", cgm.tau}};
}

PatientParams PatientParams::from_config(const KeyValueConfig& cfg) {
    PatientParams p;
    auto& h = p.hovorka;
    p.bodyweight = cfg.get_double("bodyweight", p.bodyweight);
    h.ka1 = cfg.get_double("ka1", h.ka1);
    h.ka2 = cfg.get_double("ka2", h.ka2);
    h.ka3 = cfg.get_double("ka3", h.ka3);
    h.s_it = cfg.get_double("s_it", h.s_it);
    h.s_id = cfg.get_double("s_id", h.s_id);
    h.s_ie = cfg.get_double("s_ie", h.s_ie);
    h.ke = cfg.get_double("ke", h.ke);
    h.vi = cfg.get_double("vi", h.vi);
    h.vg = cfg.get_double("vg", h.vg);
    h.k12 = cfg.get_double("k12", h.k12);
    h.f01 = cfg.get_double("f01", h.f01);
    h.egp0 = cfg.get_double("egp0", h.egp0);
    h.tmax_i = cfg.get_double("tmax_i", h.tmax_i);
    h.tmax_g = cfg.get_double("tmax_g", h.tmax_g);
    h.ag = cfg.get_double("ag", h.ag);
    p.cgm.tau = cfg.get_double("cgm.tau", p.cgm.tau);
    p.cgm.noise_sd = cfg.get_double("cgm.noise_sd", p.cgm.noise_sd);
    p.cgm.noise_ar = cfg.get_double("cgm.noise_ar", p.cgm.noise_ar);
    p.exercise.uptake_gain = cfg.get_double("exercise.uptake_gain", p.exercise.uptake_gain);
    p.exercise.sensitivity_gain = cfg.get_double("exercise.sensitivity_gain", p.exercise.sensitivity_gain);
    p.rng_seed = cfg.get_uint("rng_seed", p.rng_seed);
    cfg.require_all_consumed();
    p.validate();
    return p;
}

KeyValueConfig PatientParams::to_config() const {
    KeyValueConfig cfg;
    const auto& h = hovorka;
    cfg.set("bodyweight", bodyweight);
    cfg.set("ka1", h.ka1);
    cfg.set("ka2", h.ka2);
    cfg.set("ka3", h.ka3);
    cfg.set("s_it", h.s_it);
    cfg.set("s_id", h.s_id);
    cfg.set("s_ie", h.s_ie);
    cfg.set("ke", h.ke);
    cfg.set("vi", h.vi);
    cfg.set("vg", h.vg);
    cfg.set("k12", h.k12);
    cfg.set("f01", h.f01);
    cfg.set("egp0", h.egp0);
    cfg.set("tmax_i", h.tmax_i);
    cfg.set("tmax_g", h.tmax_g);
    cfg.set("ag", h.ag);
    cfg.set("cgm.tau", cgm.tau);
    cfg.set("cgm.noise_sd", cgm.noise_sd);
    cfg.set("cgm.noise_ar", cgm.noise_ar);
    cfg.set("exercise.uptake_gain", exercise.uptake_gain);
    cfg.set("exercise.sensitivity_gain", exercise.sensitivity_gain);
    cfg.set("rng_seed", std::to_string(rng_seed));
    return cfg;
}

double plasma_glucose(const StateVector& x, const PatientParams& theta) {
    return x[kQ1] / (theta.hovorka.vg * theta.bodyweight);
}

StateVector derivatives(const StateVector& x, const InsulinInput& u, const DisturbanceInput& d,
                        const PatientParams& theta, ExerciseHook hook) {
    const auto& h = theta.hovorka;
    const double bw = theta.bodyweight;
    const double vg_total = h.vg * bw;
    const double g = x[kQ1] / vg_total;

    const ExerciseEffect ex = hook(d.exercise_intensity, theta.exercise);
    const double f01c = non_insulin_flux(g, h.f01 * bw * ex.uptake_factor);
    const double fr = renal_clearance(g, vg_total);
    const double x1 = ex.sensitivity_factor * x[kX1];
    const double x2 = ex.sensitivity_factor * x[kX2];
    const double egp = h.egp0 * bw * std::max(0.0, 1.0 - x[kX3]);
    const double ug = x[kD2] / h.tmax_g;
    const double meal_mmol = units::carb_grams_to_mmol(d.carb_rate);

    StateVector dx{};
    dx[kQ1] = -f01c - fr - x1 * x[kQ1] + h.k12 * x[kQ2] + ug + egp;
    dx[kQ2] = x1 * x[kQ1] - (h.k12 + x2) * x[kQ2];
    dx[kS1] = u.total() - x[kS1] / h.tmax_i;
    dx[kS2] = (x[kS1] - x[kS2]) / h.tmax_i;
    dx[kI] = x[kS2] / (h.tmax_i * h.vi * bw) - h.ke * x[kI];
    dx[kX1] = h.ka1 * (h.s_it * x[kI] - x[kX1]);
    dx[kX2] = h.ka2 * (h.s_id * x[kI] - x[kX2]);
    dx[kX3] = h.ka3 * (h.s_ie * x[kI] - x[kX3]);
    dx[kD1] = h.ag * meal_mmol - x[kD1] / h.tmax_g;
    dx[kD2] = (x[kD1] - x[kD2]) / h.tmax_g;
    dx[kGsc] = (g - x[kGsc]) / theta.cgm.tau;
    return dx;
}

double output(const PatientState& x, const PatientParams&) {
    return std::clamp(x.x[kGsc] + x.noise, kCgmFloor, kCgmCeiling);
}

SteadyState steady_state(const PatientParams& theta, double target_bg) {
    if (!(target_bg > 3.0 && target_bg < 15.0)) {
        throw NoSteadyState("steady-state target must lie in (3, 15) mmol/L, got " + format_double(target_bg));
    }
    const auto& h = theta.hovorka;
    const double bw = theta.bodyweight;
    const double q1 = target_bg * h.vg * bw;
    const double f01c = non_insulin_flux(target_bg, h.f01 * bw);
    const double fr = renal_clearance(target_bg, h.vg * bw);

    // Net glucose balance as a function of plasma insulin; strictly decreasing.
    auto balance = [&](double ins) {
        const double x1 = h.s_it * ins;
        const double x2 = h.s_id * ins;
        return h.egp0 * bw * std::max(0.0, 1.0 - h.s_ie * ins) - f01c - fr - x1 * q1 * x2 / (h.k12 + x2);
    };

    if (!(balance(0.0) > 0.0)) {
        throw NoSteadyState("glucose stays below " + format_double(target_bg) + " mmol/L without insulin");
    }
    double lo = 0.0;
    double hi = 1.0;
    int guard = 0;
    while (balance(hi) > 0.0) {
        lo = hi;
        hi *= 2.0;
        if (++guard > 200) throw NoSteadyState("no insulin level balances glucose");
    }
    for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        (balance(mid) > 0.0 ? lo : hi) = mid;
    }
    const double ins = std::abs(balance(lo)) < std::abs(balance(hi)) ? lo : hi;

    SteadyState ss;
    ss.basal = ins * h.ke * h.vi * bw;
    auto& x = ss.state.x;
    x[kQ1] = q1;
    const double x2 = h.s_id * ins;
    x[kX1] = h.s_it * ins;
    x[kX2] = x2;
    x[kX3] = h.s_ie * ins;
    x[kQ2] = x[kX1] * q1 / (h.k12 + x2);
    x[kS1] = ss.basal * h.tmax_i;
    x[kS2] = x[kS1];
    x[kI] = ins;
    x[kGsc] = target_bg;

    const auto f = derivatives(x, {ss.basal, 0.0}, {}, theta);
    double worst = 0.0;
    for (double v : f) worst = std::max(worst, std::abs(v));
    if (!(worst < 1e-10 * std::max(1.0, q1)) || !(ss.basal > 0.0)) {
        throw NoSteadyState("steady-state residual " + format_double(worst) + " exceeds tolerance");
    }
    return ss;
}

PatientState insulin_free_steady_state(const PatientParams& theta) {
    const auto& h = theta.hovorka;
    const double bw = theta.bodyweight;
    const double egp = h.egp0 * bw;
    const double f01 = h.f01 * bw;
    double g = 0.0;
    if (egp > f01) {
        g = kRenalThreshold + (egp - f01) / (kRenalClearance * h.vg * bw);
    } else if (egp < f01) {
        g = kFluxKneeGlucose * egp / f01;
    } else {
        g = kFluxKneeGlucose;
    }
    PatientState s;
    s.x[kQ1] = g * h.vg * bw;
    s.x[kGsc] = g;
    return s;
}

AdvanceResult advance(const PatientState& start, const InsulinInput& u, const DisturbanceInput& d,
                      const PatientParams& theta, double dt, CounterStream& noise, const AdvanceOptions& options) {
    if (!(dt > 0.0) || !(options.max_substep_min > 0.0)) throw Error("advance: dt and substep must be > 0");
    const int n = static_cast<int>(std::ceil(dt / options.max_substep_min - 1e-12));
    const double h = dt / n;

    AdvanceResult r{start, 0u};
    auto rhs = [&](const StateVector& x) { return derivatives(x, u, d, theta, options.hook); };
    for (int s = 0; s < n; ++s) {
        rk4_step(r.state.x, h, rhs);
        for (std::size_t i = 0; i < kStateSize; ++i) {
            if (!std::isfinite(r.state.x[i])) {
                throw DivergenceError("non-finite state component " + std::to_string(i));
            }
            if (r.state.x[i] < 0.0) {
                r.state.x[i] = 0.0;
                r.clamp_mask |= 1u << i;
            }
        }
    }

    const double phi = std::pow(theta.cgm.noise_ar, dt / kNoiseReferenceInterval);
    const double eps = noise.next_normal();
    r.state.noise = phi * start.noise + theta.cgm.noise_sd * std::sqrt(1.0 - phi * phi) * eps;
    return r;
}

}  // namespace apsim
