// apsim: command-line front end.
//
//   apsim simulate    [--config F] [--set k=v]... [--out DIR]   one subject over a date window
//   apsim trial       [--config F] [--set k=v]... [--out DIR]   Monte Carlo trial with tables
//   apsim bolus-curve [--config F] [--set k=v]... [--out DIR]   optimal bolus curves
//   apsim report      TRAJECTORY.csv... [--out DIR]            reports from trajectory files
//
// Configuration is layered: built-in defaults, then --config, then the flag
// shortcuts, then --set. The fully resolved configuration is written to
// <out>/resolved_config.cfg and reproduces the run when passed back via --config.
//
// Exit codes: 0 ok, 1 other error, 2 config error, 3 divergence, 4 some trial subjects failed.

#include "apsim/bolus_opt.hpp"
#include "apsim/error.hpp"
#include "apsim/io.hpp"
#include "apsim/kv_config.hpp"
#include "apsim/simulator.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

using namespace apsim;
using namespace std::chrono;
namespace fs = std::filesystem;

namespace {

enum Exit : int { kOk = 0, kOther = 1, kConfig = 2, kDivergence = 3, kPartial = 4 };

struct Inputs {
    std::optional<std::string> config_file;
    std::vector<std::string> overrides;   // from flag shortcuts
    std::vector<std::string> sets;        // --set, applied last
    std::string out = "out";
};

KeyValueConfig prefixed(const std::string& prefix, const KeyValueConfig& cfg) {
    KeyValueConfig out;
    for (const auto& [k, v] : cfg.entries()) out.set(prefix + "." + k, v);
    return out;
}

KeyValueConfig defaults() {
    KeyValueConfig cfg;
    cfg.merge(prefixed("patient", PatientParams{}.to_config()));
    cfg.merge(prefixed("controller", ControllerParams{}.to_config()));
    cfg.merge(prefixed("protocol", ProtocolConfig::defaults().to_config()));
    cfg.merge(prefixed("dispersion", PopulationDispersion{}.to_config()));
    const SamplingSpec sampling;
    cfg.set("sampling.time_constant_factor", sampling.time_constant_factor);
    cfg.set("sampling.max_rejection_ratio", sampling.max_rejection_ratio);
    cfg.set("sampling.viability_target", sampling.viability_target);
    cfg.set("population.file", "");
    cfg.set("population.size", "200");
    cfg.set("population.seed", "2021");
    cfg.set("scenario.seed", "1");
    cfg.set("scenario.start_date", "2021-01-01");
    cfg.set("trial.weeks", "12");
    cfg.set("trial.warmup_weeks", "4");
    cfg.set("trial.workers", "0");
    cfg.set("trial.trajectories", "false");
    cfg.set("simulate.subject", "0");
    cfg.set("simulate.nominal", "false");
    cfg.set("simulate.window_start", "2021-12-11T06:00");
    cfg.set("simulate.window_days", "4");
    const ObjectiveSpec obj;
    cfg.set("bolus.subjects", "0,1,2,3,4,5");
    cfg.set("bolus.meal_max_g", "150");
    cfg.set("bolus.meal_step_g", "5");
    cfg.set("bolus.grid_max", "3000");
    cfg.set("bolus.grid_step", "20");
    cfg.set("bolus.horizon_min", obj.horizon_min);
    cfg.set("bolus.setpoint", obj.setpoint);
    cfg.set("bolus.soft_lower", obj.soft_lower);
    cfg.set("bolus.kappa", obj.kappa);
    cfg.set("bolus.max_substep_min", obj.max_substep_min);
    cfg.set("bolus.workers", "0");
    return cfg;
}

KeyValueConfig layered(const Inputs& in) {
    auto cfg = defaults();
    if (in.config_file) cfg.merge(KeyValueConfig::load(*in.config_file));
    for (const auto& s : in.overrides) cfg.apply_override(s);
    for (const auto& s : in.sets) cfg.apply_override(s);
    return cfg;
}

year_month_day parse_date(const std::string& text, const std::string& key) {
    int y = 0;
    unsigned m = 0, d = 0;
    char tail = 0;
    if (std::sscanf(text.c_str(), "%d-%u-%u%c", &y, &m, &d, &tail) != 3) {
        throw ConfigError("key `" + key + "`: expected YYYY-MM-DD, got `" + text + "`");
    }
    const year_month_day date{year{y}, month{m}, day{d}};
    if (!date.ok()) throw ConfigError("key `" + key + "`: invalid date `" + text + "`");
    return date;
}

// Minutes of `text` (YYYY-MM-DDTHH:MM) after midnight of `start`.
double parse_offset(const std::string& text, year_month_day start, const std::string& key) {
    int y = 0;
    unsigned m = 0, d = 0, hh = 0, mm = 0;
    char tail = 0;
    if (std::sscanf(text.c_str(), "%d-%u-%uT%u:%u%c", &y, &m, &d, &hh, &mm, &tail) != 5 || hh > 23 || mm > 59) {
        throw ConfigError("key `" + key + "`: expected YYYY-MM-DDTHH:MM, got `" + text + "`");
    }
    const year_month_day date{year{y}, month{m}, day{d}};
    if (!date.ok()) throw ConfigError("key `" + key + "`: invalid date `" + text + "`");
    const auto days = (sys_days{date} - sys_days{start}).count();
    return static_cast<double>(days) * 1440.0 + hh * 60.0 + mm;
}

std::vector<std::uint64_t> parse_ids(const std::string& text, const std::string& key) {
    std::vector<std::uint64_t> ids;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');) ids.push_back(parse_uint(item, key));
    if (ids.empty()) throw ConfigError("key `" + key + "`: no subject ids");
    return ids;
}

// Everything the subcommands read, parsed and validated up front.
struct Resolved {
    PatientParams nominal;
    ControllerParams controller;
    ProtocolConfig protocol;
    SamplingSpec sampling;
    std::string population_file;
    std::uint64_t population_size = 0;
    std::uint64_t population_seed = 0;
    std::uint64_t scenario_seed = 0;
    year_month_day start_date;
    int weeks = 0;
    int warmup_weeks = 0;
    unsigned trial_workers = 0;
    bool trajectories = false;
    std::uint64_t subject = 0;
    bool nominal_subject = false;
    double window_start_min = 0.0;
    double window_days = 0.0;
    std::vector<std::uint64_t> bolus_subjects;
    std::vector<double> meal_grid;
    std::vector<double> bolus_grid;
    ObjectiveSpec objective;
    unsigned bolus_workers = 0;
};

template <class T>
T section(const KeyValueConfig& cfg, const std::string& name, T (*from)(const KeyValueConfig&)) {
    try {
        return from(cfg.subtree(name));
    } catch (const ConfigError& e) {
        throw ConfigError("section `" + name + "`: " + e.what());
    }
}

std::vector<double> grid(double max, double step, const std::string& key) {
    if (!(step > 0.0) || !(max >= 0.0)) throw ConfigError("key `" + key + "`: grid needs step > 0 and max >= 0");
    std::vector<double> g;
    const auto n = static_cast<long>(std::floor(max / step + 1e-9));
    for (long i = 0; i <= n; ++i) g.push_back(step * static_cast<double>(i));
    return g;
}

Resolved resolve(const KeyValueConfig& cfg) {
    Resolved r;
    r.nominal = section(cfg, "patient", &PatientParams::from_config);
    r.controller = section(cfg, "controller", &ControllerParams::from_config);
    r.protocol = section(cfg, "protocol", &ProtocolConfig::from_config);
    r.sampling.dispersion = section(cfg, "dispersion", &PopulationDispersion::from_config);
    r.sampling.time_constant_factor = cfg.get_double("sampling.time_constant_factor", 0.0);
    r.sampling.max_rejection_ratio = cfg.get_double("sampling.max_rejection_ratio", 0.0);
    r.sampling.viability_target = cfg.get_double("sampling.viability_target", 0.0);
    r.population_file = cfg.get_string("population.file", "");
    r.population_size = cfg.get_uint("population.size", 0);
    r.population_seed = cfg.get_uint("population.seed", 0);
    r.scenario_seed = cfg.get_uint("scenario.seed", 0);
    r.start_date = parse_date(cfg.get_string("scenario.start_date", ""), "scenario.start_date");
    r.weeks = static_cast<int>(cfg.get_int("trial.weeks", 0));
    r.warmup_weeks = static_cast<int>(cfg.get_int("trial.warmup_weeks", 0));
    r.trial_workers = static_cast<unsigned>(cfg.get_uint("trial.workers", 0));
    r.trajectories = cfg.get_bool("trial.trajectories", false);
    r.subject = cfg.get_uint("simulate.subject", 0);
    r.nominal_subject = cfg.get_bool("simulate.nominal", false);
    r.window_start_min =
        parse_offset(cfg.get_string("simulate.window_start", ""), r.start_date, "simulate.window_start");
    r.window_days = cfg.get_double("simulate.window_days", 0.0);
    r.bolus_subjects = parse_ids(cfg.get_string("bolus.subjects", ""), "bolus.subjects");
    r.meal_grid = grid(cfg.get_double("bolus.meal_max_g", 0.0), cfg.get_double("bolus.meal_step_g", 0.0), "bolus.meal_step_g");
    r.bolus_grid = grid(cfg.get_double("bolus.grid_max", 0.0), cfg.get_double("bolus.grid_step", 0.0), "bolus.grid_step");
    r.objective.horizon_min = cfg.get_double("bolus.horizon_min", 0.0);
    r.objective.setpoint = cfg.get_double("bolus.setpoint", 0.0);
    r.objective.soft_lower = cfg.get_double("bolus.soft_lower", 0.0);
    r.objective.kappa = cfg.get_double("bolus.kappa", 0.0);
    r.objective.max_substep_min = cfg.get_double("bolus.max_substep_min", 0.0);
    r.objective.interval_min = r.controller.sample_interval_min;
    r.bolus_workers = static_cast<unsigned>(cfg.get_uint("bolus.workers", 0));
    cfg.require_all_consumed();

    r.nominal.validate();
    r.controller.validate();
    r.objective.validate();
    if (r.weeks < 1 || r.warmup_weeks < 0 || r.warmup_weeks >= r.weeks) {
        throw ConfigError("trial.weeks must be >= 1 and trial.warmup_weeks in [0, trial.weeks)");
    }
    if (r.population_size < 1) throw ConfigError("population.size must be >= 1");
    if (r.window_start_min < 0.0) throw ConfigError("simulate.window_start is before scenario.start_date");
    if (!(r.window_days > 0.0)) throw ConfigError("simulate.window_days must be > 0");
    return r;
}

// Population of at least `n` subjects, from file or sampled. Sampled
// subjects do not depend on the population size, so a prefix is enough.
Population population(const Resolved& r, std::size_t n) {
    if (!r.population_file.empty()) {
        std::ifstream in(r.population_file);
        if (!in) throw ConfigError("cannot open population file `" + r.population_file + "`");
        auto pop = read_population(in);
        if (pop.subjects.size() < n) {
            throw ConfigError("population file has " + std::to_string(pop.subjects.size()) + " subjects, need " +
                              std::to_string(n));
        }
        return pop;
    }
    return sample_population(r.nominal, n, r.population_seed, r.sampling);
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write `" + path.string() + "`");
    out << text;
    if (!out) throw Error("write failed for `" + path.string() + "`");
}

template <class F>
void write_with(const fs::path& path, F&& f) {
    std::ostringstream s;
    f(s);
    write_file(path, s.str());
}

fs::path prepare(const Inputs& in, const KeyValueConfig& cfg) {
    const fs::path out = in.out;
    fs::create_directories(out);
    write_file(out / "resolved_config.cfg", cfg.render());
    return out;
}

int cmd_simulate(const Inputs& in) {
    const auto cfg = layered(in);
    const auto r = resolve(cfg);
    const auto out = prepare(in, cfg);

    const PatientParams theta = r.nominal_subject ? r.nominal : population(r, r.subject + 1).subjects.at(r.subject);
    const double ts = r.controller.sample_interval_min;
    const double window_end = r.window_start_min + r.window_days * 1440.0;
    const int weeks = static_cast<int>(std::ceil(window_end / (7.0 * 1440.0)));
    const Scenario sc =
        generate(subject_scenario_seed(r.scenario_seed, r.subject), r.start_date, weeks, theta.bodyweight, r.protocol);
    const auto steps = static_cast<std::size_t>(std::llround(window_end / ts));

    std::ostringstream traj;
    write_trajectory_header(traj);
    std::vector<double> cgm, basal, bolus;
    auto sink = [&](const TrajectoryStep& s) {
        if (s.t_min < r.window_start_min) return;
        write_trajectory_row(traj, s, r.start_date);
        cgm.push_back(s.cgm);
        basal.push_back(s.basal_rate);
        bolus.push_back(s.bolus_rate);
    };
    const auto events = run_closed_loop(theta, to_zoh_series(sc, ts), r.controller, steps, r.subject, sink);
    if (cgm.empty()) throw ConfigError("simulation window holds no control interval");

    write_file(out / "trajectory.csv", traj.str());
    write_with(out / "report.json", [&](std::ostream& s) { write_report_json(s, make_report(cgm, basal, bolus, ts)); });
    write_with(out / "scenario.txt", [&](std::ostream& s) { write_scenario(s, sc); });
    write_file(out / "subject.cfg", theta.to_config().render());
    std::cout << "simulated subject " << r.subject << ": " << cgm.size() << " intervals in the window, "
              << events.size() << " clamp events, outputs in " << out.string() << '\n';
    return kOk;
}

int cmd_trial(const Inputs& in) {
    const auto cfg = layered(in);
    const auto r = resolve(cfg);
    const auto out = prepare(in, cfg);

    const auto pop = population(r, r.population_size);
    Population used = pop;
    used.subjects.resize(r.population_size);
    TrialConfig tc;
    tc.scenario_seed = r.scenario_seed;
    tc.start_date = r.start_date;
    tc.weeks = r.weeks;
    tc.warmup_weeks = r.warmup_weeks;
    tc.workers = r.trial_workers;
    tc.controller = r.controller;
    tc.protocol = r.protocol;
    if (r.trajectories) {
        tc.trajectory_dir = out / "trajectories";
        fs::create_directories(*tc.trajectory_dir);
    }
    const auto result = run_trial(used, tc);
    const auto agg = aggregate(result);

    write_with(out / "population.csv", [&](std::ostream& s) { write_population(s, used); });
    write_with(out / "subjects.csv", [&](std::ostream& s) { write_subject_summary(s, result); });
    write_with(out / "targets.csv", [&](std::ostream& s) { write_targets_table(s, agg); });
    write_with(out / "cdf.csv", [&](std::ostream& s) { write_cdf(s, agg.cdf); });
    write_with(out / "box.csv", [&](std::ostream& s) { write_box_stats(s, agg); });
    write_with(out / "tdd.csv", [&](std::ostream& s) { write_tdd_histogram(s, result); });
    write_with(out / "aggregate.json", [&](std::ostream& s) { write_aggregate_json(s, agg); });

    std::printf("%zu subjects, %zu failed, mean TIR %.2f%%, all targets met by %.2f%%\n", agg.subjects, agg.failed,
                agg.mean_ranges.tir, agg.percent_satisfying[10]);
    for (const auto& s : result.subjects) {
        if (!s.ok) std::fprintf(stderr, "subject %llu failed: %s\n", static_cast<unsigned long long>(s.id), s.error.c_str());
    }
    return agg.failed == 0 ? kOk : kPartial;
}

int cmd_bolus_curve(const Inputs& in) {
    const auto cfg = layered(in);
    const auto r = resolve(cfg);
    const auto out = prepare(in, cfg);

    const auto max_id = *std::max_element(r.bolus_subjects.begin(), r.bolus_subjects.end());
    const auto pop = population(r, max_id + 1);
    std::ostringstream fits;
    fits << "id,slope_low_mU_min_per_g,slope_high_mU_min_per_g,breakpoint_g,relative_rms,linear_slope,"
            "linear_relative_rms,kink_g,crossing_g,consistent\n";
    bool consistent = true;
    for (auto id : r.bolus_subjects) {
        const auto sweep = curve_sweep(pop.subjects.at(id), r.meal_grid, r.bolus_grid, r.objective, r.bolus_workers);
        const auto tag = "subject_" + std::to_string(id) + ".csv";
        const double ts = r.objective.interval_min;
        write_with(out / ("curve_" + tag), [&](std::ostream& s) { write_curve(s, sweep, ts); });
        write_with(out / ("landscape_" + tag), [&](std::ostream& s) { write_landscape(s, sweep, ts); });
        const auto& f = sweep.fit;
        fits << id << ',' << format_double(f.slope_low) << ',' << format_double(f.slope_high) << ','
             << format_double(f.breakpoint) << ',' << format_double(f.relative_rms) << ','
             << format_double(f.linear_slope) << ',' << format_double(f.linear_relative_rms) << ','
             << format_double(sweep.kink_meal) << ',' << format_double(sweep.crossing_meal) << ','
             << (sweep.consistent ? 1 : 0) << '\n';
        consistent = consistent && sweep.consistent;
        std::printf("subject %llu: fit rel. RMS %.2f%%, consistent %s\n", static_cast<unsigned long long>(id),
                    100.0 * f.relative_rms, sweep.consistent ? "yes" : "no");
    }
    write_file(out / "fits.csv", fits.str());
    if (!consistent) std::fprintf(stderr, "warning: a landscape minimum disagrees with the optimal curve\n");
    return kOk;
}

int cmd_report(const std::vector<std::string>& files, const std::optional<std::string>& out, double skip_days) {
    if (out) fs::create_directories(*out);
    for (const auto& f : files) {
        std::ifstream in(f);
        if (!in) throw ConfigError("cannot open trajectory `" + f + "`");
        const auto cols = read_trajectory(in);
        std::vector<double> cgm, basal, bolus;
        for (std::size_t i = 0; i < cols.cgm.size(); ++i) {
            if (cols.t_min[i] < skip_days * 1440.0) continue;
            cgm.push_back(cols.cgm[i]);
            basal.push_back(cols.basal[i]);
            bolus.push_back(cols.bolus[i]);
        }
        const double ts = cols.t_min.size() > 1 ? cols.t_min[1] - cols.t_min[0] : 5.0;
        const auto rep = make_report(cgm, basal, bolus, ts);
        if (out) {
            write_with(fs::path(*out) / (fs::path(f).stem().string() + "_report.json"),
                       [&](std::ostream& s) { write_report_json(s, rep); });
        } else {
            std::cout << f << '\n';
            write_report_json(std::cout, rep);
        }
    }
    return kOk;
}

void add_common(CLI::App* sub, Inputs& in) {
    sub->add_option("--config", in.config_file, "key = value file layered over the defaults");
    sub->add_option("--set", in.sets, "key=value override, repeatable");
    sub->add_option("--out", in.out, "output directory")->capture_default_str();
}

// Flag shortcut for a config key.
void add_shortcut(CLI::App* sub, Inputs& in, const std::string& flag, const std::string& key, const std::string& help) {
    sub->add_option_function<std::string>(
        flag, [&in, key](const std::string& v) { in.overrides.push_back(key + "=" + v); }, help + " (" + key + ")");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Closed-loop insulin dosing simulator"};
    app.require_subcommand(1);

    Inputs sim_in, trial_in, bolus_in;
    auto* sim = app.add_subcommand("simulate", "simulate one subject over a date window");
    add_common(sim, sim_in);
    add_shortcut(sim, sim_in, "--subject", "simulate.subject", "subject id");
    add_shortcut(sim, sim_in, "--scenario-seed", "scenario.seed", "scenario seed");
    add_shortcut(sim, sim_in, "--population-seed", "population.seed", "population seed");
    add_shortcut(sim, sim_in, "--window-start", "simulate.window_start", "window start YYYY-MM-DDTHH:MM");
    add_shortcut(sim, sim_in, "--days", "simulate.window_days", "window length in days");

    auto* trial = app.add_subcommand("trial", "run a Monte Carlo trial");
    add_common(trial, trial_in);
    add_shortcut(trial, trial_in, "--subjects", "population.size", "number of subjects");
    add_shortcut(trial, trial_in, "--weeks", "trial.weeks", "simulated weeks");
    add_shortcut(trial, trial_in, "--warmup", "trial.warmup_weeks", "warm-up weeks excluded from reports");
    add_shortcut(trial, trial_in, "--workers", "trial.workers", "worker threads, 0 = all cores");
    add_shortcut(trial, trial_in, "--scenario-seed", "scenario.seed", "scenario seed");
    add_shortcut(trial, trial_in, "--population-seed", "population.seed", "population seed");

    auto* bolus = app.add_subcommand("bolus-curve", "optimal bolus curves and objective landscapes");
    add_common(bolus, bolus_in);
    add_shortcut(bolus, bolus_in, "--subjects", "bolus.subjects", "comma-separated subject ids");
    add_shortcut(bolus, bolus_in, "--workers", "bolus.workers", "worker threads, 0 = all cores");
    add_shortcut(bolus, bolus_in, "--population-seed", "population.seed", "population seed");

    std::vector<std::string> report_files;
    std::optional<std::string> report_out;
    double skip_days = 0.0;
    auto* report = app.add_subcommand("report", "glycemic report from trajectory files");
    report->add_option("files", report_files, "trajectory CSV files")->required();
    report->add_option("--out", report_out, "write <name>_report.json here instead of stdout");
    report->add_option("--skip-days", skip_days, "ignore the first days of each file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfig;
    }

    try {
        if (*sim) return cmd_simulate(sim_in);
        if (*trial) return cmd_trial(trial_in);
        if (*bolus) return cmd_bolus_curve(bolus_in);
        if (*report) return cmd_report(report_files, report_out, skip_days);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kConfig;
    } catch (const DivergenceError& e) {
        std::fprintf(stderr, "divergence: %s\n", e.what());
        return kDivergence;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kOther;
    }
    return kOther;
}
