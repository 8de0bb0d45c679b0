#include "apsim/metrics.hpp"

#include "apsim/error.hpp"
#include "apsim/units.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace apsim {

namespace {

constexpr double kGmiIntercept = 3.31;
constexpr double kGmiSlope = 0.02392;  // per mg/dL

std::size_t grid_slot(double value, std::span<const double> grid) {
    return static_cast<std::size_t>(std::lower_bound(grid.begin(), grid.end(), value) - grid.begin());
}

}  // namespace

GlycemicRange classify(double y) {
    if (y > kHyper2Above) return GlycemicRange::Hyper2;
    if (y > kHyper1Above) return GlycemicRange::Hyper1;
    if (y >= kNormoFrom) return GlycemicRange::Normo;
    if (y >= kHypo1From) return GlycemicRange::Hypo1;
    return GlycemicRange::Hypo2;
}

RangePercentages percentages_from_counts(const std::array<std::uint64_t, 5>& c) {
    std::uint64_t n = 0;
    for (auto v : c) n += v;
    if (n == 0) throw EmptyInput("time in ranges of an empty series");
    const double scale = 100.0 / static_cast<double>(n);
    RangePercentages r;
    r.tar2 = static_cast<double>(c[0]) * scale;
    r.tar1 = static_cast<double>(c[1]) * scale;
    r.tir = static_cast<double>(c[2]) * scale;
    r.tbr1 = static_cast<double>(c[3]) * scale;
    r.tbr2 = static_cast<double>(c[4]) * scale;
    return r;
}

RangePercentages time_in_ranges(std::span<const double> cgm) {
    std::array<std::uint64_t, 5> counts{};
    for (double y : cgm) ++counts[static_cast<int>(classify(y))];
    return percentages_from_counts(counts);
}

double gmi(double mean_glucose_mgdl) { return kGmiIntercept + kGmiSlope * mean_glucose_mgdl; }

double glycemic_variability(std::span<const double> cgm) {
    GlycemicAccumulator acc;
    for (double y : cgm) acc.add(y, 0.0, 0.0, 0.0);
    return acc.report().gv;
}

TargetFlags targets(const GlycemicReport& r) {
    TargetFlags t;
    t.mean_glucose = r.mean_glucose_mgdl < 154.0;
    t.gmi = r.gmi < 7.0;
    t.gv = r.gv <= 36.0;
    t.tar2 = r.ranges.tar2 < 5.0;
    t.tar12 = r.ranges.tar1 + r.ranges.tar2 < 25.0;
    t.tir = r.ranges.tir > 70.0;
    t.tbr12 = r.ranges.tbr1 + r.ranges.tbr2 < 4.0;
    t.tbr2 = r.ranges.tbr2 < 1.0;
    t.all_ranges = t.tar2 && t.tar12 && t.tir && t.tbr12 && t.tbr2;
    t.all_except_gv = t.all_ranges && t.mean_glucose && t.gmi;
    t.all = t.all_except_gv && t.gv;
    return t;
}

const std::vector<double>& cdf_grid() {
    static const std::vector<double> grid = [] {
        std::vector<double> g(301);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = static_cast<double>(i) / 10.0;
        return g;
    }();
    return grid;
}

std::vector<double> empirical_cdf(std::span<const double> cgm, std::span<const double> grid) {
    if (cgm.empty()) throw EmptyInput("cdf of an empty series");
    std::vector<std::uint64_t> slot(grid.size() + 1, 0);
    for (double y : cgm) ++slot[grid_slot(y, grid)];
    std::vector<double> out(grid.size());
    std::uint64_t run = 0;
    for (std::size_t j = 0; j < grid.size(); ++j) {
        run += slot[j];
        out[j] = static_cast<double>(run) / static_cast<double>(cgm.size());
    }
    return out;
}

GlycemicAccumulator::GlycemicAccumulator() : grid_counts_(cdf_grid().size() + 1, 0) {}

void GlycemicAccumulator::add(double cgm, double basal_rate, double bolus_rate, double interval_min) {
    ++counts_[static_cast<int>(classify(cgm))];
    ++n_;
    const double delta = cgm - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta * (cgm - mean_);
    min_ = n_ == 1 ? cgm : std::min(min_, cgm);
    basal_mu_ += basal_rate * interval_min;
    bolus_mu_ += bolus_rate * interval_min;
    minutes_ += interval_min;
    ++grid_counts_[grid_slot(cgm, cdf_grid())];
}

void GlycemicAccumulator::merge(const GlycemicAccumulator& o) {
    if (o.n_ == 0) return;
    if (n_ == 0) {
        *this = o;
        return;
    }
    const double na = static_cast<double>(n_);
    const double nb = static_cast<double>(o.n_);
    const double delta = o.mean_ - mean_;
    const double n = na + nb;
    mean_ += delta * nb / n;
    m2_ += o.m2_ + delta * delta * na * nb / n;
    n_ += o.n_;
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += o.counts_[i];
    for (std::size_t i = 0; i < grid_counts_.size(); ++i) grid_counts_[i] += o.grid_counts_[i];
    min_ = std::min(min_, o.min_);
    basal_mu_ += o.basal_mu_;
    bolus_mu_ += o.bolus_mu_;
    minutes_ += o.minutes_;
}

GlycemicReport GlycemicAccumulator::report() const {
    if (n_ == 0) throw EmptyInput("glycemic report of an empty series");
    GlycemicReport r;
    r.samples = n_;
    r.ranges = percentages_from_counts(counts_);
    r.mean_glucose_mmol = mean_;
    r.mean_glucose_mgdl = units::mmol_to_mgdl(mean_);
    r.gmi = gmi(r.mean_glucose_mgdl);
    r.gv = 100.0 * std::sqrt(m2_ / static_cast<double>(n_)) / mean_;
    r.min_cgm = min_;
    if (minutes_ > 0.0) {
        const double days = minutes_ / units::kMinutesPerDay;
        r.tdd_basal = basal_mu_ / units::kMilliUnitsPerUnit / days;
        r.tdd_bolus = bolus_mu_ / units::kMilliUnitsPerUnit / days;
    }
    r.targets = targets(r);
    return r;
}

std::vector<double> GlycemicAccumulator::cdf() const {
    if (n_ == 0) throw EmptyInput("cdf of an empty series");
    std::vector<double> out(cdf_grid().size());
    std::uint64_t run = 0;
    for (std::size_t j = 0; j < out.size(); ++j) {
        run += grid_counts_[j];
        out[j] = static_cast<double>(run) / static_cast<double>(n_);
    }
    return out;
}

GlycemicReport make_report(std::span<const double> cgm, std::span<const double> basal, std::span<const double> bolus,
                           double interval_min) {
    if (basal.size() != cgm.size() || bolus.size() != cgm.size()) {
        throw Error("make_report: cgm, basal and bolus series differ in length");
    }
    GlycemicAccumulator acc;
    for (std::size_t i = 0; i < cgm.size(); ++i) acc.add(cgm[i], basal[i], bolus[i], interval_min);
    return acc.report();
}

double quantile(std::vector<double> v, double q) {
    if (v.empty()) throw EmptyInput("quantile of an empty set");
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return v[lo] + frac * (v[hi] - v[lo]);
}

CdfSummary cumulative_distribution(const std::vector<std::vector<double>>& cdfs, std::span<const double> min_cgm) {
    if (cdfs.empty()) throw EmptyInput("cumulative distribution of zero subjects");
    if (min_cgm.size() != cdfs.size()) throw Error("cumulative_distribution: one minimum per subject required");
    const auto& grid = cdf_grid();
    CdfSummary s;
    s.grid = grid;
    const std::size_t m = grid.size();
    s.mean.assign(m, 0.0);
    s.lower.assign(m, std::numeric_limits<double>::infinity());
    s.upper.assign(m, -std::numeric_limits<double>::infinity());
    s.p025.assign(m, 0.0);
    s.p975.assign(m, 0.0);
    std::vector<double> column(cdfs.size());
    for (std::size_t j = 0; j < m; ++j) {
        double sum = 0.0;
        for (std::size_t i = 0; i < cdfs.size(); ++i) {
            if (cdfs[i].size() != m) throw Error("cumulative_distribution: CDF not on the standard grid");
            column[i] = cdfs[i][j];
            sum += column[i];
            s.lower[j] = std::min(s.lower[j], column[i]);
            s.upper[j] = std::max(s.upper[j], column[i]);
        }
        s.mean[j] = sum / static_cast<double>(cdfs.size());
        s.p025[j] = quantile(column, 0.025);
        s.p975[j] = quantile(column, 0.975);
    }
    s.worst_case = static_cast<std::size_t>(std::min_element(min_cgm.begin(), min_cgm.end()) - min_cgm.begin());
    return s;
}

CdfSummary cumulative_distribution(const std::vector<std::vector<double>>& series) {
    if (series.empty()) throw EmptyInput("cumulative distribution of zero subjects");
    std::vector<std::vector<double>> cdfs;
    std::vector<double> mins;
    cdfs.reserve(series.size());
    for (const auto& s : series) {
        cdfs.push_back(empirical_cdf(s, cdf_grid()));
        mins.push_back(*std::min_element(s.begin(), s.end()));
    }
    return cumulative_distribution(cdfs, mins);
}

BoxStats box_stats(std::span<const double> values) {
    if (values.empty()) throw EmptyInput("box plot of an empty set");
    std::vector<double> v(values.begin(), values.end());
    BoxStats b;
    b.median = quantile(v, 0.5);
    b.q1 = quantile(v, 0.25);
    b.q3 = quantile(v, 0.75);
    const double reach = 1.5 * (b.q3 - b.q1);
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    b.whisker_low = std::max(*lo, b.median - reach);
    b.whisker_high = std::min(*hi, b.median + reach);
    for (double x : v) {
        if (x < b.whisker_low || x > b.whisker_high) ++b.outliers;
    }
    return b;
}

}  // namespace apsim
