#include "apsim/io.hpp"

#include "apsim/error.hpp"
#include "apsim/units.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

namespace apsim {

namespace {

using namespace std::chrono;

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::string fd(double v) { return format_double(v); }

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c == '\n' ? ' ' : c;
    }
    out += '"';
    return out;
}

std::size_t column(const std::vector<std::string>& header, std::string_view name) {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return i;
    }
    throw ConfigError("missing column `" + std::string(name) + "`");
}

}  // namespace

std::string format_datetime(year_month_day start, double t_min) {
    const auto total = static_cast<long long>(std::floor(t_min));
    const long long day_offset = total / 1440;
    const long long minute = total % 1440;
    const year_month_day d{sys_days{start} + days{day_offset}};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02lld:%02lld", static_cast<int>(d.year()),
                  static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()), minute / 60, minute % 60);
    return buf;
}

void write_trajectory_header(std::ostream& out) {
    out << "datetime,t_min,cgm_mmol_L,basal_mU_min,bolus_mU_min,carb_g_min,exercise,announced_carbs_g,"
           "w_ba,w_ma,w_bo,e_ba,e_bo,p_ma,d_ma,nominal_basal_mU_min,bolus_factor\n";
}

void write_trajectory_row(std::ostream& out, const TrajectoryStep& s, year_month_day start) {
    const auto& d = s.diagnostics;
    out << format_datetime(start, s.t_min) << ',' << fd(s.t_min) << ',' << fd(s.cgm) << ',' << fd(s.basal_rate) << ','
        << fd(s.bolus_rate) << ',' << fd(s.carb_rate) << ',' << fd(s.exercise) << ',' << fd(s.announced_carbs) << ','
        << d.w_ba << ',' << d.w_ma << ',' << d.w_bo << ',' << fd(d.e_ba) << ',' << fd(d.e_bo) << ',' << fd(d.p_ma)
        << ',' << fd(d.d_ma) << ',' << fd(d.nominal_basal) << ',' << fd(s.bolus_factor) << '\n';
}

TrajectoryColumns read_trajectory(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw EmptyInput("empty trajectory file");
    const auto header = split_csv(line);
    const auto ct = column(header, "t_min");
    const auto cc = column(header, "cgm_mmol_L");
    const auto cb = column(header, "basal_mU_min");
    const auto co = column(header, "bolus_mU_min");
    TrajectoryColumns cols;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv(line);
        if (cells.size() != header.size()) throw ConfigError("trajectory row has the wrong number of columns");
        cols.t_min.push_back(parse_double(cells[ct], "t_min"));
        cols.cgm.push_back(parse_double(cells[cc], "cgm_mmol_L"));
        cols.basal.push_back(parse_double(cells[cb], "basal_mU_min"));
        cols.bolus.push_back(parse_double(cells[co], "bolus_mU_min"));
    }
    return cols;
}

void write_population(std::ostream& out, const Population& pop) {
    const PatientParams reference;
    const auto keys = reference.to_config().entries();
    out << "id";
    for (const auto& [k, v] : keys) out << ',' << k;
    out << '\n';
    for (std::size_t i = 0; i < pop.subjects.size(); ++i) {
        out << i;
        const auto cfg = pop.subjects[i].to_config();
        for (const auto& [k, v] : cfg.entries()) out << ',' << v;
        out << '\n';
    }
}

Population read_population(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw EmptyInput("empty population file");
    const auto header = split_csv(line);
    if (header.empty() || header[0] != "id") throw ConfigError("population file must start with an `id` column");
    Population pop;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv(line);
        if (cells.size() != header.size()) throw ConfigError("population row has the wrong number of columns");
        if (parse_uint(cells[0], "id") != row) throw ConfigError("population ids must be 0, 1, 2, ... in order");
        KeyValueConfig cfg;
        for (std::size_t c = 1; c < cells.size(); ++c) cfg.set(header[c], cells[c]);
        pop.subjects.push_back(PatientParams::from_config(cfg));
        ++row;
    }
    if (pop.subjects.empty()) throw EmptyInput("population file has no subjects");
    return pop;
}

void write_subject_summary(std::ostream& out, const TrialResult& result) {
    out << "id,status,tar2,tar1,tir,tbr1,tbr2,mean_mmol_L,mean_mg_dL,gmi,gv,tdd_basal_U_day,tdd_bolus_U_day,"
           "min_cgm_window,min_cgm_all,clamp_events,max_basal_mU_min,max_bolus_mU_min,doses_within_bounds,"
           "target_mean_glucose,target_gmi,target_gv,target_tar2,target_tar12,target_tir,target_tbr12,target_tbr2,"
           "all_ranges,all_except_gv,all_targets,error\n";
    for (const auto& s : result.subjects) {
        out << s.id << ',' << (s.ok ? "ok" : "failed");
        if (s.ok) {
            const auto& r = s.report;
            out << ',' << fd(r.ranges.tar2) << ',' << fd(r.ranges.tar1) << ',' << fd(r.ranges.tir) << ','
                << fd(r.ranges.tbr1) << ',' << fd(r.ranges.tbr2) << ',' << fd(r.mean_glucose_mmol) << ','
                << fd(r.mean_glucose_mgdl) << ',' << fd(r.gmi) << ',' << fd(r.gv) << ',' << fd(r.tdd_basal) << ','
                << fd(r.tdd_bolus) << ',' << fd(r.min_cgm) << ',' << fd(s.min_cgm_all) << ',' << s.clamp_events << ','
                << fd(s.max_basal) << ',' << fd(s.max_bolus) << ',' << (s.doses_within_bounds ? 1 : 0);
            for (bool b : target_row(r.targets)) out << ',' << (b ? 1 : 0);
        } else {
            for (int i = 0; i < 28; ++i) out << ',';
        }
        out << ',' << csv_escape(s.error) << '\n';
    }
}

void write_targets_table(std::ostream& out, const TrialAggregate& agg) {
    out << "target,percent_satisfying\n";
    const auto& names = target_row_names();
    for (std::size_t i = 0; i < names.size(); ++i) {
        out << csv_escape(std::string(names[i])) << ',' << fd(agg.percent_satisfying[i]) << '\n';
    }
}

void write_cdf(std::ostream& out, const CdfSummary& c) {
    out << "glucose_mmol_L,mean,min,max,p2.5,p97.5\n";
    for (std::size_t j = 0; j < c.grid.size(); ++j) {
        out << fd(c.grid[j]) << ',' << fd(c.mean[j]) << ',' << fd(c.lower[j]) << ',' << fd(c.upper[j]) << ','
            << fd(c.p025[j]) << ',' << fd(c.p975[j]) << '\n';
    }
}

void write_box_stats(std::ostream& out, const TrialAggregate& agg) {
    static const std::array<std::string_view, 5> names{"tar2", "tar1", "tir", "tbr1", "tbr2"};
    out << "range,median,q1,q3,whisker_low,whisker_high,outliers\n";
    for (std::size_t r = 0; r < 5; ++r) {
        const auto& b = agg.box[r];
        out << names[r] << ',' << fd(b.median) << ',' << fd(b.q1) << ',' << fd(b.q3) << ',' << fd(b.whisker_low)
            << ',' << fd(b.whisker_high) << ',' << b.outliers << '\n';
    }
}

void write_tdd_histogram(std::ostream& out, const TrialResult& result) {
    std::vector<std::size_t> basal;
    std::vector<std::size_t> bolus;
    auto bump = [](std::vector<std::size_t>& h, double v) {
        const auto b = static_cast<std::size_t>(std::max(0.0, std::floor(v)));
        if (h.size() <= b) h.resize(b + 1, 0);
        ++h[b];
    };
    for (const auto& s : result.subjects) {
        if (!s.ok) continue;
        bump(basal, s.report.tdd_basal);
        bump(bolus, s.report.tdd_bolus);
    }
    const std::size_t bins = std::max(basal.size(), bolus.size());
    basal.resize(bins, 0);
    bolus.resize(bins, 0);
    out << "bin_low_U_day,bin_high_U_day,basal_count,bolus_count\n";
    for (std::size_t b = 0; b < bins; ++b) out << b << ',' << b + 1 << ',' << basal[b] << ',' << bolus[b] << '\n';
}

void write_aggregate_json(std::ostream& out, const TrialAggregate& a) {
    nlohmann::ordered_json j;
    j["subjects"] = a.subjects;
    j["failed"] = a.failed;
    j["mean_tar2"] = a.mean_ranges.tar2;
    j["mean_tar1"] = a.mean_ranges.tar1;
    j["mean_tir"] = a.mean_ranges.tir;
    j["mean_tbr1"] = a.mean_ranges.tbr1;
    j["mean_tbr2"] = a.mean_ranges.tbr2;
    j["mean_glucose_mg_dL"] = a.mean_glucose_mgdl;
    j["mean_gmi"] = a.mean_gmi;
    j["mean_gv"] = a.mean_gv;
    j["mean_tdd_basal_U_day"] = a.mean_tdd_basal;
    j["mean_tdd_bolus_U_day"] = a.mean_tdd_bolus;
    j["worst_case_id"] = a.worst_case_id;
    j["worst_case_min_cgm"] = a.worst_case_min_cgm;
    auto rows = nlohmann::ordered_json::array();
    const auto& names = target_row_names();
    for (std::size_t i = 0; i < names.size(); ++i) {
        rows.push_back({{"target", names[i]}, {"percent_satisfying", a.percent_satisfying[i]}});
    }
    j["targets"] = rows;
    out << j.dump(2) << '\n';
}

void write_report_json(std::ostream& out, const GlycemicReport& r) {
    nlohmann::ordered_json j;
    j["samples"] = r.samples;
    j["tar2"] = r.ranges.tar2;
    j["tar1"] = r.ranges.tar1;
    j["tir"] = r.ranges.tir;
    j["tbr1"] = r.ranges.tbr1;
    j["tbr2"] = r.ranges.tbr2;
    j["mean_glucose_mmol_L"] = r.mean_glucose_mmol;
    j["mean_glucose_mg_dL"] = r.mean_glucose_mgdl;
    j["gmi"] = r.gmi;
    j["gv"] = r.gv;
    j["tdd_basal_U_day"] = r.tdd_basal;
    j["tdd_bolus_U_day"] = r.tdd_bolus;
    j["min_cgm"] = r.min_cgm;
    auto rows = nlohmann::ordered_json::array();
    const auto flags = target_row(r.targets);
    const auto& names = target_row_names();
    for (std::size_t i = 0; i < names.size(); ++i) rows.push_back({{"target", names[i]}, {"satisfied", flags[i]}});
    j["targets"] = rows;
    out << j.dump(2) << '\n';
}

void write_landscape(std::ostream& out, const SweepResult& s, double interval_min) {
    out << "meal_g,bolus_mU_min,bolus_U,phi\n";
    for (std::size_t i = 0; i < s.meal_grams.size(); ++i) {
        for (std::size_t j = 0; j < s.bolus_grid.size(); ++j) {
            out << fd(s.meal_grams[i]) << ',' << fd(s.bolus_grid[j]) << ','
                << fd(s.bolus_grid[j] * interval_min / units::kMilliUnitsPerUnit) << ',' << fd(s.landscape[i][j])
                << '\n';
        }
    }
}

void write_curve(std::ostream& out, const SweepResult& s, double interval_min) {
    out << "meal_g,optimal_bolus_mU_min,optimal_bolus_U,min_glucose_mmol_L\n";
    for (std::size_t i = 0; i < s.meal_grams.size(); ++i) {
        out << fd(s.meal_grams[i]) << ',' << fd(s.optimal_bolus[i]) << ','
            << fd(s.optimal_bolus[i] * interval_min / units::kMilliUnitsPerUnit) << ',' << fd(s.min_glucose[i])
            << '\n';
    }
}

}  // namespace apsim
