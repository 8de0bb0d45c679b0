#pragma once

// Glycemic outcome measures over CGM series.
//
// Ranges [mmol/L]:  level 2 hyper (13.9, inf)   level 1 hyper (10.0, 13.9]
//                   normo [3.9, 10.0]          level 1 hypo [3.0, 3.9)
//                   level 2 hypo [0, 3.0)
// GV is the coefficient of variation (population SD / mean, in percent).
// GMI [%] = 3.31 + 0.02392 * mean glucose [mg/dL].

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace apsim {

enum class GlycemicRange { Hyper2 = 0, Hyper1, Normo, Hypo1, Hypo2 };

inline constexpr double kHyper2Above = 13.9;
inline constexpr double kHyper1Above = 10.0;
inline constexpr double kNormoFrom = 3.9;
inline constexpr double kHypo1From = 3.0;

[[nodiscard]] GlycemicRange classify(double cgm_mmol);

/// Percent of samples per range.
struct RangePercentages {
    double tar2 = 0.0;
    double tar1 = 0.0;
    double tir = 0.0;
    double tbr1 = 0.0;
    double tbr2 = 0.0;

    [[nodiscard]] double sum() const { return tar2 + tar1 + tir + tbr1 + tbr2; }
};

[[nodiscard]] RangePercentages time_in_ranges(std::span<const double> cgm);
[[nodiscard]] RangePercentages percentages_from_counts(const std::array<std::uint64_t, 5>& counts);

[[nodiscard]] double gmi(double mean_glucose_mgdl);

/// Coefficient of variation [%].
[[nodiscard]] double glycemic_variability(std::span<const double> cgm);

struct TargetFlags {
    bool mean_glucose = false;  // < 154 mg/dL
    bool gmi = false;           // < 7 %
    bool gv = false;            // <= 36 %
    bool tar2 = false;          // < 5 %
    bool tar12 = false;         // < 25 %
    bool tir = false;           // > 70 %
    bool tbr12 = false;         // < 4 %
    bool tbr2 = false;          // < 1 %
    bool all_ranges = false;    // all TAR, TIR and TBR targets
    bool all_except_gv = false;
    bool all = false;
};

struct GlycemicReport {
    RangePercentages ranges;
    double mean_glucose_mmol = 0.0;
    double mean_glucose_mgdl = 0.0;
    double gmi = 0.0;
    double gv = 0.0;
    double tdd_basal = 0.0;  ///< [U/day]
    double tdd_bolus = 0.0;  ///< [U/day]
    double min_cgm = 0.0;    ///< [mmol/L]
    std::uint64_t samples = 0;
    TargetFlags targets;
};

[[nodiscard]] TargetFlags targets(const GlycemicReport& report);

/// Fixed glucose grid for cumulative distributions: 0, 0.1, ..., 30 mmol/L.
[[nodiscard]] const std::vector<double>& cdf_grid();

/// Fraction of samples <= each grid point.
[[nodiscard]] std::vector<double> empirical_cdf(std::span<const double> cgm, std::span<const double> grid);

/// Streaming accumulation of one subject's CGM and dose series.
class GlycemicAccumulator {
public:
    GlycemicAccumulator();

    void add(double cgm, double basal_rate, double bolus_rate, double interval_min);
    void merge(const GlycemicAccumulator& other);

    [[nodiscard]] std::uint64_t samples() const noexcept { return n_; }
    /// Throws EmptyInput when nothing was accumulated.
    [[nodiscard]] GlycemicReport report() const;
    [[nodiscard]] std::vector<double> cdf() const;

private:
    std::array<std::uint64_t, 5> counts_{};
    std::uint64_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
    double min_ = 0.0;
    double basal_mu_ = 0.0;
    double bolus_mu_ = 0.0;
    double minutes_ = 0.0;
    std::vector<std::uint64_t> grid_counts_;  // samples whose first grid point >= sample is i
};

/// Report from full series (basal and bolus in mU/min, one entry per interval).
[[nodiscard]] GlycemicReport make_report(std::span<const double> cgm, std::span<const double> basal,
                                         std::span<const double> bolus, double interval_min);

struct CdfSummary {
    std::vector<double> grid;
    std::vector<double> mean;
    std::vector<double> lower;  ///< pointwise minimum over subjects
    std::vector<double> upper;  ///< pointwise maximum over subjects
    std::vector<double> p025;
    std::vector<double> p975;
    std::size_t worst_case = 0;  ///< subject with the lowest CGM sample
};

/// Aggregates per-subject CDFs (on cdf_grid()) and per-subject minimum CGM values.
[[nodiscard]] CdfSummary cumulative_distribution(const std::vector<std::vector<double>>& per_subject_cdf,
                                                 std::span<const double> per_subject_min_cgm);
/// Same, from raw per-subject series.
[[nodiscard]] CdfSummary cumulative_distribution(const std::vector<std::vector<double>>& per_subject_series);

/// Linear-interpolation quantile (q in [0, 1]) of unsorted values.
[[nodiscard]] double quantile(std::vector<double> values, double q);

/// Box plot with whiskers at median +- 1.5 IQR, pulled in to the extreme values when closer.
struct BoxStats {
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
    double whisker_low = 0.0;
    double whisker_high = 0.0;
    std::size_t outliers = 0;
};

[[nodiscard]] BoxStats box_stats(std::span<const double> values);

}  // namespace apsim
