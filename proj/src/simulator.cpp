#include "apsim/simulator.hpp"

#include "apsim/error.hpp"
#include "apsim/io.hpp"
#include "apsim/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <thread>

namespace apsim {

namespace {

constexpr std::uint64_t kNoiseStream = 0xC6A1'0000'0000'0001ULL;
constexpr std::uint64_t kSamplingStream = 0x9090'0000'0000'0000ULL;
constexpr std::uint64_t kSubjectSeedStream = 0x5EED'0000'0000'0000ULL;
constexpr std::uint64_t kScenarioStream = 0x5CE4'0000'0000'0000ULL;

double lognormal_factor(double cv, CounterStream& rng) {
    const double z = rng.next_normal();
    if (cv <= 0.0) return 1.0;
    const double s2 = std::log1p(cv * cv);
    return std::exp(std::sqrt(s2) * z - 0.5 * s2);
}

PatientParams perturb(const PatientParams& nominal, const PopulationDispersion& cv, CounterStream& rng) {
    PatientParams p = nominal;
    auto& h = p.hovorka;
    // Fixed draw order; every parameter consumes one normal even at zero spread.
    p.bodyweight *= lognormal_factor(cv.bodyweight, rng);
    h.ka1 *= lognormal_factor(cv.ka1, rng);
    h.ka2 *= lognormal_factor(cv.ka2, rng);
    h.ka3 *= lognormal_factor(cv.ka3, rng);
    h.s_it *= lognormal_factor(cv.s_it, rng);
    h.s_id *= lognormal_factor(cv.s_id, rng);
    h.s_ie *= lognormal_factor(cv.s_ie, rng);
    h.ke *= lognormal_factor(cv.ke, rng);
    h.vi *= lognormal_factor(cv.vi, rng);
    h.vg *= lognormal_factor(cv.vg, rng);
    h.k12 *= lognormal_factor(cv.k12, rng);
    h.f01 *= lognormal_factor(cv.f01, rng);
    h.egp0 *= lognormal_factor(cv.egp0, rng);
    h.tmax_i *= lognormal_factor(cv.tmax_i, rng);
    h.tmax_g *= lognormal_factor(cv.tmax_g, rng);
    h.ag *= lognormal_factor(cv.ag, rng);
    p.cgm.tau *= lognormal_factor(cv.cgm_tau, rng);
    return p;
}

}  // namespace

std::vector<SimEvent> run_closed_loop(const PatientParams& patient, const ZohSeries& inputs,
                                      const ControllerParams& controller, std::size_t steps, std::uint64_t subject_id,
                                      const StepSink& sink, const ClosedLoopOptions& options) {
    patient.validate();
    controller.validate();
    if (steps > inputs.size()) throw ConfigError("scenario is shorter than the requested duration");
    if (std::abs(inputs.interval_min - controller.sample_interval_min) > 1e-12) {
        throw ConfigError("scenario grid differs from the control interval");
    }
    const double ts = controller.sample_interval_min;
    PatientState x = insulin_free_steady_state(patient);
    ControllerState cs;
    CounterStream noise(patient.rng_seed, kNoiseStream);
    std::vector<SimEvent> events;

    for (std::size_t k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) * ts;
        TrajectoryStep rec;
        rec.t_min = t;
        rec.cgm = output(x, patient);
        rec.carb_rate = inputs.carb_rate[k];
        rec.exercise = inputs.exercise[k];
        rec.announced_carbs = inputs.announced_carbs[k];

        auto r = step(cs, controller, t, rec.cgm, rec.announced_carbs, patient.bodyweight);
        cs = r.state;
        rec.basal_rate = r.dose.basal_rate;
        rec.bolus_rate = r.dose.bolus_rate;
        rec.diagnostics = r.dose.diagnostics;
        rec.bolus_factor = cs.i_bolus;
        sink(rec);

        try {
            auto adv = advance(x, {rec.basal_rate, rec.bolus_rate}, {rec.carb_rate, rec.exercise}, patient, ts, noise,
                               options.advance);
            x = adv.state;
            if (adv.clamp_mask != 0) events.push_back({SimEvent::Kind::Clamp, k, adv.clamp_mask});
        } catch (const DivergenceError& e) {
            throw DivergenceError("subject " + std::to_string(subject_id) + ", step " + std::to_string(k) + ": " +
                                  e.what());
        }
    }
    return events;
}

Trajectory run_closed_loop(const PatientParams& patient, const Scenario& scenario, const ControllerParams& controller,
                           double duration_min, std::uint64_t subject_id, const ClosedLoopOptions& options) {
    const auto inputs = to_zoh_series(scenario, controller.sample_interval_min);
    const auto steps = static_cast<std::size_t>(std::llround(duration_min / controller.sample_interval_min));
    Trajectory tr;
    tr.subject_id = subject_id;
    tr.interval_min = controller.sample_interval_min;
    tr.steps.reserve(steps);
    tr.events = run_closed_loop(
        patient, inputs, controller, steps, subject_id, [&](const TrajectoryStep& s) { tr.steps.push_back(s); },
        options);
    return tr;
}

PopulationDispersion PopulationDispersion::zero() {
    PopulationDispersion d;
    d.bodyweight = d.ka1 = d.ka2 = d.ka3 = d.s_it = d.s_id = d.s_ie = d.ke = d.vi = d.vg = d.k12 = d.f01 = d.egp0 =
        d.tmax_i = d.tmax_g = d.ag = d.cgm_tau = 0.0;
    return d;
}

PopulationDispersion PopulationDispersion::from_config(const KeyValueConfig& cfg) {
    PopulationDispersion d;
    auto get = [&](const char* key, double& field) {
        field = cfg.get_double(key, field);
        if (!(field >= 0.0)) throw ConfigError(std::string("population.cv.") + key + " must be >= 0");
    };
    get("bodyweight", d.bodyweight);
    get("ka1", d.ka1);
    get("ka2", d.ka2);
    get("ka3", d.ka3);
    get("s_it", d.s_it);
    get("s_id", d.s_id);
    get("s_ie", d.s_ie);
    get("ke", d.ke);
    get("vi", d.vi);
    get("vg", d.vg);
    get("k12", d.k12);
    get("f01", d.f01);
    get("egp0", d.egp0);
    get("tmax_i", d.tmax_i);
    get("tmax_g", d.tmax_g);
    get("ag", d.ag);
    get("cgm_tau", d.cgm_tau);
    cfg.require_all_consumed();
    return d;
}

KeyValueConfig PopulationDispersion::to_config() const {
    KeyValueConfig c;
    c.set("bodyweight", bodyweight);
    c.set("ka1", ka1);
    c.set("ka2", ka2);
    c.set("ka3", ka3);
    c.set("s_it", s_it);
    c.set("s_id", s_id);
    c.set("s_ie", s_ie);
    c.set("ke", ke);
    c.set("vi", vi);
    c.set("vg", vg);
    c.set("k12", k12);
    c.set("f01", f01);
    c.set("egp0", egp0);
    c.set("tmax_i", tmax_i);
    c.set("tmax_g", tmax_g);
    c.set("ag", ag);
    c.set("cgm_tau", cgm_tau);
    return c;
}

std::string time_constant_violation(const PatientParams& candidate, const PatientParams& nominal, double factor) {
    const auto mine = candidate.time_constants();
    const auto ref = nominal.time_constants();
    for (std::size_t i = 0; i < mine.size(); ++i) {
        const double ratio = mine[i].second / ref[i].second;
        if (ratio > factor || ratio < 1.0 / factor) return std::string(mine[i].first);
    }
    return {};
}

Population sample_population(const PatientParams& nominal, std::size_t n, std::uint64_t seed,
                             const SamplingSpec& spec) {
    if (n < 1) throw ConfigError("population size must be >= 1");
    nominal.validate();
    Population pop;
    pop.seed = seed;
    pop.subjects.reserve(n);
    const auto cap = static_cast<std::size_t>(spec.max_rejection_ratio * static_cast<double>(n));

    for (std::size_t i = 0; i < n; ++i) {
        for (std::uint64_t attempt = 0;; ++attempt) {
            CounterStream rng(seed, hash_combine(kSamplingStream + i, attempt));
            PatientParams p = perturb(nominal, spec.dispersion, rng);
            p.rng_seed = hash_combine(seed ^ kSubjectSeedStream, i);

            std::string reason;
            if (auto tc = time_constant_violation(p, nominal, spec.time_constant_factor); !tc.empty()) {
                reason = "time constant " + tc;
            } else {
                try {
                    p.validate();
                    (void)steady_state(p, spec.viability_target);
                } catch (const Error& e) {
                    reason = std::string("no steady state: ") + e.what();
                }
            }
            if (reason.empty()) {
                pop.subjects.push_back(p);
                break;
            }
            pop.rejections.push_back({i, attempt, reason});
            if (pop.rejections.size() > cap) {
                throw SamplingExhausted("population sampling rejected " + std::to_string(pop.rejections.size()) +
                                        " candidates for " + std::to_string(n) + " subjects");
            }
        }
    }
    return pop;
}

std::size_t TrialResult::failures() const {
    return static_cast<std::size_t>(std::count_if(subjects.begin(), subjects.end(), [](const auto& s) { return !s.ok; }));
}

std::uint64_t subject_scenario_seed(std::uint64_t scenario_seed, std::uint64_t subject_id) {
    return hash_combine(scenario_seed ^ kScenarioStream, subject_id);
}

SubjectResult run_subject(const PatientParams& patient, std::uint64_t id, const TrialConfig& cfg) {
    SubjectResult res;
    res.id = id;
    const auto& cp = cfg.controller;
    const double ts = cp.sample_interval_min;
    const auto per_week = static_cast<std::size_t>(std::llround(7.0 * 1440.0 / ts));
    const std::size_t steps = per_week * static_cast<std::size_t>(cfg.weeks);
    const std::size_t warmup = per_week * static_cast<std::size_t>(cfg.warmup_weeks);

    try {
        const Scenario sc =
            generate(subject_scenario_seed(cfg.scenario_seed, id), cfg.start_date, cfg.weeks, patient.bodyweight,
                     cfg.protocol);
        const ZohSeries inputs = to_zoh_series(sc, ts);

        std::ofstream file;
        if (cfg.trajectory_dir) {
            file.open(*cfg.trajectory_dir / ("subject_" + std::to_string(id) + ".csv"));
            if (!file) throw Error("cannot open trajectory file for subject " + std::to_string(id));
            write_trajectory_header(file);
        }

        GlycemicAccumulator acc;
        std::size_t k = 0;
        double min_all = kCgmCeiling;
        auto sink = [&](const TrajectoryStep& s) {
            if (s.basal_rate < 0.0 || s.basal_rate > cp.u_max_basal || s.bolus_rate < 0.0 ||
                s.bolus_rate > cp.u_max_bolus) {
                res.doses_within_bounds = false;
            }
            res.max_basal = std::max(res.max_basal, s.basal_rate);
            res.max_bolus = std::max(res.max_bolus, s.bolus_rate);
            min_all = std::min(min_all, s.cgm);
            if (k >= warmup) acc.add(s.cgm, s.basal_rate, s.bolus_rate, ts);
            if (file.is_open()) write_trajectory_row(file, s, cfg.start_date);
            ++k;
        };
        const auto events = run_closed_loop(patient, inputs, cp, steps, id, sink);
        res.clamp_events = events.size();
        res.report = acc.report();
        res.cdf = acc.cdf();
        res.min_cgm_all = min_all;
        res.ok = true;
    } catch (const Error& e) {
        res.ok = false;
        res.error = e.what();
    }
    return res;
}

TrialResult run_trial(const Population& population, const TrialConfig& cfg) {
    if (population.subjects.empty()) throw ConfigError("trial population is empty");
    if (cfg.weeks < 1) throw ConfigError("trial needs at least one week");
    if (cfg.warmup_weeks < 0 || cfg.warmup_weeks >= cfg.weeks) {
        throw ConfigError("warm-up must be shorter than the trial");
    }
    cfg.controller.validate();
    if (cfg.trajectory_dir) std::filesystem::create_directories(*cfg.trajectory_dir);

    const std::size_t n = population.subjects.size();
    TrialResult out;
    out.subjects.resize(n);

    unsigned workers = cfg.workers == 0 ? std::max(1u, std::thread::hardware_concurrency()) : cfg.workers;
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));

    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            out.subjects[i] = run_subject(population.subjects[i], i, cfg);
        }
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    }
    return out;
}

const std::array<std::string_view, 11>& target_row_names() {
    static const std::array<std::string_view, 11> names{
        "Average glucose < 154 mg/dL",
        "GMI < 7%",
        "GV <= 36%",
        "TAR (level 2 hyperglycemia) < 5%",
        "TAR (level 1 and 2 hyperglycemia) < 25%",
        "TIR (normoglycemia) > 70%",
        "TBR (level 1 and 2 hypoglycemia) < 4%",
        "TBR (level 2 hypoglycemia) < 1%",
        "All TAR, TIR, and TBR targets",
        "All targets except the GV target",
        "All targets",
    };
    return names;
}

std::array<bool, 11> target_row(const TargetFlags& t) {
    return {t.mean_glucose, t.gmi, t.gv, t.tar2, t.tar12, t.tir, t.tbr12, t.tbr2, t.all_ranges, t.all_except_gv, t.all};
}

TrialAggregate aggregate(const TrialResult& result) {
    TrialAggregate a;
    a.subjects = result.subjects.size();
    std::vector<std::vector<double>> cdfs;
    std::vector<double> mins;
    std::array<std::vector<double>, 5> per_range;
    std::array<std::size_t, 11> satisfied{};
    for (const auto& s : result.subjects) {
        if (!s.ok) {
            ++a.failed;
            continue;
        }
        const auto& r = s.report;
        a.mean_ranges.tar2 += r.ranges.tar2;
        a.mean_ranges.tar1 += r.ranges.tar1;
        a.mean_ranges.tir += r.ranges.tir;
        a.mean_ranges.tbr1 += r.ranges.tbr1;
        a.mean_ranges.tbr2 += r.ranges.tbr2;
        a.mean_glucose_mgdl += r.mean_glucose_mgdl;
        a.mean_gmi += r.gmi;
        a.mean_gv += r.gv;
        a.mean_tdd_basal += r.tdd_basal;
        a.mean_tdd_bolus += r.tdd_bolus;
        const auto row = target_row(r.targets);
        for (std::size_t i = 0; i < row.size(); ++i) satisfied[i] += row[i] ? 1 : 0;
        per_range[0].push_back(r.ranges.tar2);
        per_range[1].push_back(r.ranges.tar1);
        per_range[2].push_back(r.ranges.tir);
        per_range[3].push_back(r.ranges.tbr1);
        per_range[4].push_back(r.ranges.tbr2);
        cdfs.push_back(s.cdf);
        mins.push_back(s.min_cgm_all);
    }
    const std::size_t ok = a.subjects - a.failed;
    if (ok == 0) return a;
    const double inv = 1.0 / static_cast<double>(ok);
    a.mean_ranges.tar2 *= inv;
    a.mean_ranges.tar1 *= inv;
    a.mean_ranges.tir *= inv;
    a.mean_ranges.tbr1 *= inv;
    a.mean_ranges.tbr2 *= inv;
    a.mean_glucose_mgdl *= inv;
    a.mean_gmi *= inv;
    a.mean_gv *= inv;
    a.mean_tdd_basal *= inv;
    a.mean_tdd_bolus *= inv;
    for (std::size_t i = 0; i < satisfied.size(); ++i) {
        a.percent_satisfying[i] = 100.0 * static_cast<double>(satisfied[i]) * inv;
    }
    for (std::size_t r = 0; r < 5; ++r) a.box[r] = box_stats(per_range[r]);
    a.cdf = cumulative_distribution(cdfs, mins);

    // Map the index among successful subjects back to the subject id.
    std::size_t seen = 0;
    for (const auto& s : result.subjects) {
        if (!s.ok) continue;
        if (seen++ == a.cdf.worst_case) {
            a.worst_case_id = s.id;
            a.worst_case_min_cgm = s.min_cgm_all;
            break;
        }
    }
    return a;
}

}  // namespace apsim
