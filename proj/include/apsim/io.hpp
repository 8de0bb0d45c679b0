#pragma once

// File formats. All CSV files have a single header row, comma separators,
// and numbers written in shortest round-trip form.
//
// Trajectory (one file per subject), columns in order:
//   datetime, t_min, cgm_mmol_L, basal_mU_min, bolus_mU_min, carb_g_min,
//   exercise, announced_carbs_g, w_ba, w_ma, w_bo, e_ba, e_bo, p_ma, d_ma,
//   nominal_basal_mU_min, bolus_factor
//
// Subject summary (trial), one row per subject in population order:
//   id, status, tar2, tar1, tir, tbr1, tbr2, mean_mmol_L, mean_mg_dL, gmi, gv,
//   tdd_basal_U_day, tdd_bolus_U_day, min_cgm_window, min_cgm_all,
//   clamp_events, max_basal_mU_min, max_bolus_mU_min, doses_within_bounds,
//   then the 11 target flags (0/1) in table order, then error.

#include "apsim/bolus_opt.hpp"
#include "apsim/simulator.hpp"

#include <chrono>
#include <iosfwd>
#include <string>
#include <vector>

namespace apsim {

[[nodiscard]] std::string format_datetime(std::chrono::year_month_day start, double t_min);

void write_trajectory_header(std::ostream& out);
void write_trajectory_row(std::ostream& out, const TrajectoryStep& step,
                          std::chrono::year_month_day start = std::chrono::year_month_day{
                              std::chrono::year{2021}, std::chrono::January, std::chrono::day{1}});

/// Columns needed to recompute a report from a trajectory file.
struct TrajectoryColumns {
    std::vector<double> t_min;
    std::vector<double> cgm;
    std::vector<double> basal;
    std::vector<double> bolus;
};
[[nodiscard]] TrajectoryColumns read_trajectory(std::istream& in);

/// Population: header `id,<patient keys...>`, one subject per row.
void write_population(std::ostream& out, const Population& population);
[[nodiscard]] Population read_population(std::istream& in);

void write_subject_summary(std::ostream& out, const TrialResult& result);

/// Targets table rows in table order: `target,percent_satisfying`.
void write_targets_table(std::ostream& out, const TrialAggregate& agg);
void write_cdf(std::ostream& out, const CdfSummary& cdf);
void write_box_stats(std::ostream& out, const TrialAggregate& agg);
/// Histogram of per-subject TDDs with 1 U/day bins: `bin_low,bin_high,basal_count,bolus_count`.
void write_tdd_histogram(std::ostream& out, const TrialResult& result);
/// Aggregate block as JSON.
void write_aggregate_json(std::ostream& out, const TrialAggregate& agg);
void write_report_json(std::ostream& out, const GlycemicReport& report);

/// `meal_g,bolus_mU_min,bolus_U,phi`
void write_landscape(std::ostream& out, const SweepResult& sweep, double interval_min);
/// `meal_g,optimal_bolus_mU_min,optimal_bolus_U,min_glucose_mmol_L`
void write_curve(std::ostream& out, const SweepResult& sweep, double interval_min);

}  // namespace apsim
