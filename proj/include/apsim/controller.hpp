#pragma once

// One-size-fits-all insulin dosing law.
//
// Every 5 min the controller receives a CGM sample (and possibly a meal
// announcement) and returns a basal and a bolus insulin flow rate. The basal
// rate is an integral estimate of the nominal basal need plus a PD
// microadjustment; the bolus is a piecewise linear function of the
// bodyweight-normalised carbohydrate flow, scaled by an integral estimate of
// the meal bolus factor. Both integrators are projected onto [0, inf).

#include "apsim/kv_config.hpp"

#include <optional>
#include <string>
#include <string_view>

namespace apsim {

struct Deadband {
    double lower = 0.0;  ///< mmol/L
    double upper = 0.0;  ///< mmol/L
};

struct ControllerParams {
    double sample_interval_min = 5.0;     ///< T_s [min]
    double u_max_basal = 55.0;            ///< [mU/min]
    double u_max_bolus = 8000.0;          ///< [mU/min]
    double target = 6.0;                  ///< [mmol/L]
    double safety_threshold = 3.0;        ///< [mmol/L]
    double meal_window_h = 9.5;           ///< [h]
    double k_i_basal = 4e-4;              ///< [mU L/(mmol min^2)]
    Deadband basal_deadband{3.9, 8.0};
    double hypo_amplification = 100.0;    ///< unitless
    double k_p_ma = 0.3;                  ///< [mU L/(mmol min)]
    double k_d_ma = 10.0;                 ///< [mU L/mmol]
    double carb_threshold = 0.1;          ///< [g CHO/(kg min)]
    double beta = 2.0;                    ///< unitless
    double k_i_bolus = 0.05;              ///< [mU kg L/(g CHO mmol min)]
    Deadband bolus_deadband{3.9, 10.0};
    double bolus_clip_threshold = 13.9;   ///< [mmol/L]

    [[nodiscard]] double meal_window_min() const noexcept { return meal_window_h * 60.0; }

    /// Throws ConfigError if any invariant is violated.
    void validate() const;

    /// Reads `key = value` entries (keys as in to_config()); unknown keys are errors.
    static ControllerParams from_config(const KeyValueConfig& cfg);
    [[nodiscard]] KeyValueConfig to_config() const;
};

struct ControllerState {
    double i_basal = 0.0;  ///< I_ba [mU/min], nominal basal estimate
    double i_bolus = 0.0;  ///< I_bo [mU kg/(g CHO)], meal bolus factor
    std::optional<double> prev_cgm;          ///< [mmol/L]
    std::optional<double> last_meal_time;    ///< [min]
    std::optional<double> last_sample_time;  ///< [min]

    /// Versioned single-line snapshot. Field order:
    /// `apsim-controller-state v1 <i_basal> <i_bolus> <prev_cgm> <last_meal_time> <last_sample_time>`
    /// with `-` for absent values and doubles written as exact hex floats.
    [[nodiscard]] std::string serialize() const;
    static ControllerState deserialize(std::string_view text);

    friend bool operator==(const ControllerState&, const ControllerState&) = default;
};

struct DoseDiagnostics {
    int w_ba = 0;
    int w_ma = 0;
    int w_bo = 0;
    double e_ba = 0.0;
    double e_bo = 0.0;
    double p_ma = 0.0;
    double d_ma = 0.0;
    double nominal_basal = 0.0;  ///< ū_ba after this step's update
};

struct DoseCommand {
    double basal_rate = 0.0;  ///< [mU/min]
    double bolus_rate = 0.0;  ///< [mU/min]
    DoseDiagnostics diagnostics;
};

struct ControllerStep {
    DoseCommand dose;
    ControllerState state;
};

/// Basal-estimator error with deadband and hypoglycemia amplification.
[[nodiscard]] double basal_error(double y, const ControllerParams& p);

/// Bolus-factor error; saturates above `bolus_clip_threshold`.
[[nodiscard]] double bolus_error(double y, const ControllerParams& p);

/// Meal bolus flow rate for bolus factor `alpha` and normalised carb flow `d_hat`.
[[nodiscard]] double bolus_curve(double alpha, double d_hat, const ControllerParams& p);

/// One control step. Pure: the input state is never modified, and on error no
/// new state is produced.
[[nodiscard]] ControllerStep step(const ControllerState& state, const ControllerParams& params, double t_min,
                                  double cgm, double announced_carbs_g, double bodyweight_kg);

/// Stateful convenience wrapper around step().
class Controller {
public:
    explicit Controller(ControllerParams params, ControllerState state = {});

    DoseCommand update(double t_min, double cgm, double announced_carbs_g, double bodyweight_kg);

    [[nodiscard]] const ControllerParams& params() const noexcept { return params_; }
    [[nodiscard]] const ControllerState& state() const noexcept { return state_; }

private:
    ControllerParams params_;
    ControllerState state_;
};

}  // namespace apsim
