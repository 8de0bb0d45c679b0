#pragma once

// Closed-loop engine and Monte Carlo trial harness.
//
// Every subject runs on its own thread-agnostic random streams keyed by the
// subject id, so results do not depend on the worker count or schedule.

#include "apsim/controller.hpp"
#include "apsim/metrics.hpp"
#include "apsim/patient_model.hpp"
#include "apsim/protocol.hpp"

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace apsim {

struct TrajectoryStep {
    double t_min = 0.0;
    double cgm = 0.0;              ///< [mmol/L]
    double basal_rate = 0.0;       ///< [mU/min]
    double bolus_rate = 0.0;       ///< [mU/min]
    double carb_rate = 0.0;        ///< [g CHO/min]
    double exercise = 0.0;         ///< intensity
    double announced_carbs = 0.0;  ///< [g CHO]
    double bolus_factor = 0.0;     ///< I_bo after the step
    DoseDiagnostics diagnostics;
};

struct SimEvent {
    enum class Kind { Clamp };
    Kind kind = Kind::Clamp;
    std::size_t step = 0;
    unsigned mask = 0;  ///< clamped state components
};

struct Trajectory {
    std::uint64_t subject_id = 0;
    double interval_min = 5.0;
    std::vector<TrajectoryStep> steps;
    std::vector<SimEvent> events;
};

using StepSink = std::function<void(const TrajectoryStep&)>;

struct ClosedLoopOptions {
    AdvanceOptions advance;
};

/// Runs `steps` control intervals from the insulin-free steady state with a
/// fresh controller. Each step is handed to `sink`; clamp events are returned.
/// Divergence is rethrown with subject id and step index.
std::vector<SimEvent> run_closed_loop(const PatientParams& patient, const ZohSeries& inputs,
                                      const ControllerParams& controller, std::size_t steps,
                                      std::uint64_t subject_id, const StepSink& sink,
                                      const ClosedLoopOptions& options = {});

/// Convenience overload keeping the whole trajectory in memory.
[[nodiscard]] Trajectory run_closed_loop(const PatientParams& patient, const Scenario& scenario,
                                         const ControllerParams& controller, double duration_min,
                                         std::uint64_t subject_id = 0, const ClosedLoopOptions& options = {});

/// Coefficients of variation for the log-normal population sampler. Each
/// parameter is nominal * exp(sigma z - sigma^2 / 2), sigma^2 = ln(1 + cv^2),
/// so the population mean equals the nominal value.
struct PopulationDispersion {
    double bodyweight = 0.15;
    double ka1 = 0.2;
    double ka2 = 0.2;
    double ka3 = 0.2;
    double s_it = 0.3;
    double s_id = 0.3;
    double s_ie = 0.3;
    double ke = 0.15;
    double vi = 0.1;
    double vg = 0.1;
    double k12 = 0.2;
    double f01 = 0.15;
    double egp0 = 0.15;
    double tmax_i = 0.15;
    double tmax_g = 0.15;
    double ag = 0.05;
    double cgm_tau = 0.2;

    static PopulationDispersion zero();
    static PopulationDispersion from_config(const KeyValueConfig& cfg);
    [[nodiscard]] KeyValueConfig to_config() const;
};

struct SamplingSpec {
    PopulationDispersion dispersion;
    double time_constant_factor = 10.0;  ///< reject if any time constant is off the nominal by more than this
    double max_rejection_ratio = 10.0;   ///< abort when rejections exceed this many per subject
    double viability_target = 6.0;      ///< must admit a positive-basal steady state at this glucose
};

struct Rejection {
    std::uint64_t subject = 0;
    std::uint64_t attempt = 0;
    std::string reason;
};

struct Population {
    std::vector<PatientParams> subjects;
    std::uint64_t seed = 0;
    std::vector<Rejection> rejections;
};

/// Empty when `candidate` passes; otherwise the name of the offending time constant.
[[nodiscard]] std::string time_constant_violation(const PatientParams& candidate, const PatientParams& nominal,
                                                  double factor = 10.0);

[[nodiscard]] Population sample_population(const PatientParams& nominal, std::size_t n, std::uint64_t seed,
                                           const SamplingSpec& spec = {});

struct TrialConfig {
    std::uint64_t scenario_seed = 1;
    std::chrono::year_month_day start_date{std::chrono::year{2021}, std::chrono::January, std::chrono::day{1}};
    int weeks = 52;
    int warmup_weeks = 4;
    unsigned workers = 1;  ///< 0 = hardware concurrency
    ControllerParams controller;
    ProtocolConfig protocol = ProtocolConfig::defaults();
    /// When set, each subject's full trajectory is streamed to `<dir>/subject_<id>.csv`.
    std::optional<std::filesystem::path> trajectory_dir;
};

struct SubjectResult {
    std::uint64_t id = 0;
    bool ok = false;
    std::string error;
    GlycemicReport report;       ///< over the evaluation window
    double min_cgm_all = 0.0;    ///< over the whole run, warm-up included
    std::vector<double> cdf;     ///< evaluation window, on cdf_grid()
    std::size_t clamp_events = 0;
    double max_basal = 0.0;
    double max_bolus = 0.0;
    bool doses_within_bounds = true;
};

struct TrialResult {
    std::vector<SubjectResult> subjects;  ///< in population order
    [[nodiscard]] std::size_t failures() const;
};

[[nodiscard]] std::uint64_t subject_scenario_seed(std::uint64_t scenario_seed, std::uint64_t subject_id);

/// Runs one subject; never throws on simulation failure (reported in the result).
[[nodiscard]] SubjectResult run_subject(const PatientParams& patient, std::uint64_t subject_id,
                                        const TrialConfig& config);

[[nodiscard]] TrialResult run_trial(const Population& population, const TrialConfig& config);

struct TrialAggregate {
    std::size_t subjects = 0;
    std::size_t failed = 0;
    RangePercentages mean_ranges;
    double mean_glucose_mgdl = 0.0;
    double mean_gmi = 0.0;
    double mean_gv = 0.0;
    double mean_tdd_basal = 0.0;
    double mean_tdd_bolus = 0.0;
    /// Percent of successful subjects meeting each target, in table order:
    /// mean glucose, GMI, GV, TAR2, TAR1+2, TIR, TBR1+2, TBR2, all ranges, all except GV, all.
    std::array<double, 11> percent_satisfying{};
    std::uint64_t worst_case_id = 0;
    double worst_case_min_cgm = 0.0;
    std::array<BoxStats, 5> box;  ///< TAR2, TAR1, TIR, TBR1, TBR2
    CdfSummary cdf;
};

[[nodiscard]] TrialAggregate aggregate(const TrialResult& result);

[[nodiscard]] std::array<bool, 11> target_row(const TargetFlags& t);
[[nodiscard]] const std::array<std::string_view, 11>& target_row_names();

}  // namespace apsim
