#pragma once

// Virtual subject: Hovorka glucose-insulin model with a first-order CGM
// sensor, AR(1) additive sensor noise and a pluggable exercise effect.
//
// State (units):
//   Q1, Q2   glucose mass, accessible / non-accessible compartment  [mmol]
//   S1, S2   subcutaneous insulin depots                            [mU]
//   I        plasma insulin concentration                           [mU/L]
//   X1..X3   insulin action on transport, disposal, EGP             [1/min, 1/min, -]
//   D1, D2   gut glucose compartments                               [mmol]
//   Gsc      interstitial (sensor) glucose                          [mmol/L]
// plus the sensor-noise state (additive, mmol/L), kept outside the ODE.
//
// Nominal constants (per kg where marked):
//   ka1 0.006, ka2 0.06, ka3 0.03 1/min     S_IT 51.2e-4, S_ID 8.2e-4 1/min per mU/L
//   S_IE 520e-4 per mU/L                     ke 0.138 1/min, V_I 0.12 L/kg, V_G 0.16 L/kg
//   k12 0.066 1/min                          F01 0.0097, EGP0 0.0161 mmol/(kg min)
//   tmax_I 55 min, tmax_G 40 min, A_G 0.8    sensor lag 10 min

#include "apsim/kv_config.hpp"
#include "apsim/rng.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace apsim {

struct HovorkaParams {
    double ka1 = 0.006;      ///< [1/min]
    double ka2 = 0.06;       ///< [1/min]
    double ka3 = 0.03;       ///< [1/min]
    double s_it = 51.2e-4;   ///< insulin sensitivity, transport [1/min per mU/L]
    double s_id = 8.2e-4;    ///< insulin sensitivity, disposal [1/min per mU/L]
    double s_ie = 520e-4;    ///< insulin sensitivity, EGP [per mU/L]
    double ke = 0.138;       ///< insulin elimination [1/min]
    double vi = 0.12;        ///< insulin distribution volume [L/kg]
    double vg = 0.16;        ///< glucose distribution volume [L/kg]
    double k12 = 0.066;      ///< [1/min]
    double f01 = 0.0097;     ///< non-insulin-dependent glucose flux [mmol/(kg min)]
    double egp0 = 0.0161;    ///< EGP at zero insulin [mmol/(kg min)]
    double tmax_i = 55.0;    ///< [min]
    double tmax_g = 40.0;    ///< [min]
    double ag = 0.8;         ///< carbohydrate bioavailability [-]
};

struct CgmParams {
    double tau = 10.0;        ///< interstitial lag [min]
    double noise_sd = 0.2;    ///< stationary SD of the additive noise [mmol/L]
    double noise_ar = 0.8;    ///< AR(1) coefficient per control interval [-]
};

/// Constants of the default exercise hook.
struct ExerciseParams {
    double uptake_gain = 1.0;       ///< F01 multiplier is 1 + gain * intensity
    double sensitivity_gain = 0.5;  ///< insulin-action multiplier is 1 + gain * intensity
};

struct PatientParams {
    double bodyweight = 70.0;  ///< [kg]
    HovorkaParams hovorka;
    CgmParams cgm;
    ExerciseParams exercise;
    std::uint64_t rng_seed = 0;

    void validate() const;

    /// Named time constants [min]: 1/ka1, 1/ka2, 1/ka3, tmax_I, tmax_G, 1/k12, 1/ke, sensor lag.
    [[nodiscard]] std::vector<std::pair<std::string_view, double>> time_constants() const;

    static PatientParams from_config(const KeyValueConfig& cfg);
    [[nodiscard]] KeyValueConfig to_config() const;
};

inline constexpr std::size_t kStateSize = 11;
using StateVector = std::array<double, kStateSize>;

enum StateIndex : std::size_t { kQ1 = 0, kQ2, kS1, kS2, kI, kX1, kX2, kX3, kD1, kD2, kGsc };

struct PatientState {
    StateVector x{};
    double noise = 0.0;  ///< additive sensor noise [mmol/L]

    friend bool operator==(const PatientState&, const PatientState&) = default;
};

struct InsulinInput {
    double basal = 0.0;  ///< [mU/min]
    double bolus = 0.0;  ///< [mU/min]
    [[nodiscard]] double total() const noexcept { return basal + bolus; }
};

struct DisturbanceInput {
    double carb_rate = 0.0;           ///< [g CHO/min]
    double exercise_intensity = 0.0;  ///< [0, 1]
};

struct ExerciseEffect {
    double uptake_factor = 1.0;
    double sensitivity_factor = 1.0;
};

using ExerciseHook = ExerciseEffect (*)(double intensity, const ExerciseParams& params);

ExerciseEffect default_exercise_effect(double intensity, const ExerciseParams& params);

/// Plasma glucose G = Q1 / V_G [mmol/L].
[[nodiscard]] double plasma_glucose(const StateVector& x, const PatientParams& theta);

[[nodiscard]] StateVector derivatives(const StateVector& x, const InsulinInput& u, const DisturbanceInput& d,
                                      const PatientParams& theta, ExerciseHook hook = default_exercise_effect);

/// Lowest and highest reading the sensor reports [mmol/L].
inline constexpr double kCgmFloor = 0.1;
inline constexpr double kCgmCeiling = 50.0;

/// CGM reading: interstitial glucose plus noise, limited to the sensor range.
[[nodiscard]] double output(const PatientState& x, const PatientParams& theta);

struct SteadyState {
    PatientState state;
    double basal = 0.0;  ///< [mU/min]
};

/// Steady state with constant basal insulin and no meals at plasma glucose `target_bg`.
/// Throws NoSteadyState if no non-negative basal rate achieves it.
[[nodiscard]] SteadyState steady_state(const PatientParams& theta, double target_bg);

/// Fixed point with zero insulin infusion and no meals.
[[nodiscard]] PatientState insulin_free_steady_state(const PatientParams& theta);

struct AdvanceOptions {
    double max_substep_min = 0.5;
    ExerciseHook hook = default_exercise_effect;
};

struct AdvanceResult {
    PatientState state;
    unsigned clamp_mask = 0;  ///< bit i set if component i was clamped to zero
};

/// Integrates one zero-order-hold interval of length `dt` [min] with RK4 and
/// then advances the AR(1) sensor noise by one draw from `noise`.
/// Throws DivergenceError on a non-finite state.
[[nodiscard]] AdvanceResult advance(const PatientState& x, const InsulinInput& u, const DisturbanceInput& d,
                                    const PatientParams& theta, double dt, CounterStream& noise,
                                    const AdvanceOptions& options = {});

}  // namespace apsim
