#include "apsim/error.hpp"
#include "apsim/io.hpp"
#include "apsim/simulator.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace apsim;

namespace {

std::string summary_text(const TrialResult& r) {
    std::ostringstream out;
    write_subject_summary(out, r);
    write_aggregate_json(out, aggregate(r));
    return out.str();
}

}  // namespace

TEST_CASE("zero dispersion returns the nominal subject") {
    SamplingSpec spec;
    spec.dispersion = PopulationDispersion::zero();
    const PatientParams nominal;
    const auto pop = sample_population(nominal, 1, 5, spec);
    REQUIRE(pop.subjects.size() == 1);
    auto got = pop.subjects[0];
    CHECK(got.bodyweight == nominal.bodyweight);
    CHECK(got.hovorka.s_it == nominal.hovorka.s_it);
    CHECK(got.hovorka.tmax_g == nominal.hovorka.tmax_g);
    CHECK(got.cgm.tau == nominal.cgm.tau);
    got.rng_seed = nominal.rng_seed;
    CHECK(got.to_config().render() == nominal.to_config().render());
    CHECK(pop.rejections.empty());
}

TEST_CASE("population screen and determinism") {
    const PatientParams nominal;
    SamplingSpec wide;
    wide.dispersion.ka1 = 1.5;
    wide.dispersion.tmax_g = 1.5;
    wide.dispersion.k12 = 1.5;
    const auto pop = sample_population(nominal, 300, 17, wide);
    CHECK(pop.subjects.size() == 300);
    CHECK_FALSE(pop.rejections.empty());
    for (const auto& s : pop.subjects) CHECK(time_constant_violation(s, nominal).empty());

    const auto again = sample_population(nominal, 300, 17, wide);
    std::ostringstream a, b;
    write_population(a, pop);
    write_population(b, again);
    CHECK(a.str() == b.str());

    // subjects keep their draws when the population grows
    const auto more = sample_population(nominal, 310, 17, wide);
    CHECK(more.subjects[299].hovorka.ka1 == pop.subjects[299].hovorka.ka1);
}

TEST_CASE("screen rejects order-of-magnitude outliers") {
    const PatientParams nominal;
    auto p = nominal;
    p.hovorka.ka2 = nominal.hovorka.ka2 / 10.5;
    CHECK(time_constant_violation(p, nominal) == "1/ka2");
    p = nominal;
    p.hovorka.tmax_i = nominal.hovorka.tmax_i / 10.01;
    CHECK(time_constant_violation(p, nominal) == "tmax_i");
    p = nominal;
    p.hovorka.tmax_i = nominal.hovorka.tmax_i * 10.0;
    CHECK(time_constant_violation(p, nominal).empty());
}

TEST_CASE("sampling gives up past the rejection cap") {
    SamplingSpec spec;
    spec.dispersion.tmax_g = 50.0;
    spec.time_constant_factor = 1.01;
    spec.max_rejection_ratio = 2.0;
    CHECK_THROWS_AS(sample_population(PatientParams{}, 5, 1, spec), SamplingExhausted);
}

TEST_CASE("closed loop without meals stays in the sensor range") {
    PatientParams p;
    p.cgm.noise_sd = 0.0;
    Scenario sc;
    sc.weeks = 1;
    const auto tr = run_closed_loop(p, sc, ControllerParams{}, 7 * 1440.0);
    REQUIRE(tr.steps.size() == 7 * 288);
    for (std::size_t k = 0; k < tr.steps.size(); ++k) {
        const auto& s = tr.steps[k];
        CHECK(s.t_min == 5.0 * static_cast<double>(k));
        CHECK(std::isfinite(s.basal_rate));
        CHECK((s.cgm > 0.0 && s.cgm < 50.0));
        CHECK((s.basal_rate >= 0.0 && s.basal_rate <= 55.0));
        CHECK(s.bolus_rate == 0.0);
    }
    // starts hyperglycemic and the basal estimate brings it down
    CHECK(tr.steps.front().cgm > 20.0);
    CHECK(tr.steps.back().cgm < 10.0);
}

TEST_CASE("closed loop with a scenario is reproducible") {
    const auto pop = sample_population(PatientParams{}, 3, 8);
    const auto sc = generate(4, std::chrono::year{2021} / std::chrono::January / 1, 2, pop.subjects[2].bodyweight);
    const auto a = run_closed_loop(pop.subjects[2], sc, ControllerParams{}, sc.duration_min(), 2);
    const auto b = run_closed_loop(pop.subjects[2], sc, ControllerParams{}, sc.duration_min(), 2);
    REQUIRE(a.steps.size() == b.steps.size());
    std::ostringstream ta, tb;
    for (const auto& s : a.steps) write_trajectory_row(ta, s);
    for (const auto& s : b.steps) write_trajectory_row(tb, s);
    CHECK(ta.str() == tb.str());
    bool bolused = false;
    for (const auto& s : a.steps) {
        CHECK((s.bolus_rate >= 0.0 && s.bolus_rate <= 8000.0));
        CHECK(s.diagnostics.w_ba + s.diagnostics.w_bo == 1);
        bolused = bolused || s.bolus_rate > 0.0;
    }
    CHECK(bolused);
}

TEST_CASE("trial is independent of the worker count") {
    const auto pop = sample_population(PatientParams{}, 12, 3);
    TrialConfig cfg;
    cfg.weeks = 6;
    cfg.warmup_weeks = 4;
    cfg.workers = 1;
    const auto one = run_trial(pop, cfg);
    cfg.workers = 5;
    const auto five = run_trial(pop, cfg);
    CHECK(summary_text(one) == summary_text(five));
    for (const auto& s : one.subjects) {
        CHECK(s.ok);
        CHECK(s.report.samples == 2 * 7 * 288);
        CHECK(s.min_cgm_all <= s.report.min_cgm);
    }
}

TEST_CASE("trial smoke run with sampled subjects") {
    const auto pop = sample_population(PatientParams{}, 100, 2024);
    TrialConfig cfg;
    cfg.weeks = 3;
    cfg.warmup_weeks = 1;
    cfg.workers = 0;
    const auto r = run_trial(pop, cfg);
    CHECK(r.failures() == 0);
    for (const auto& s : r.subjects) {
        CHECK(s.doses_within_bounds);
        CHECK(s.max_basal <= 55.0);
        CHECK(s.max_bolus <= 8000.0);
    }
    const auto agg = aggregate(r);
    CHECK(agg.subjects == 100);
    CHECK(agg.failed == 0);
    std::size_t argmin = 0;
    for (std::size_t i = 0; i < r.subjects.size(); ++i) {
        if (r.subjects[i].min_cgm_all < r.subjects[argmin].min_cgm_all) argmin = i;
    }
    CHECK(agg.worst_case_id == r.subjects[argmin].id);
    CHECK(std::abs(agg.mean_ranges.sum() - 100.0) < 1e-9);
}

TEST_CASE("failing subjects are reported without stopping the trial") {
    auto pop = sample_population(PatientParams{}, 4, 3);
    pop.subjects[1].hovorka.vg = -1.0;
    TrialConfig cfg;
    cfg.weeks = 1;
    cfg.warmup_weeks = 0;
    cfg.workers = 2;
    const auto r = run_trial(pop, cfg);
    CHECK(r.failures() == 1);
    CHECK_FALSE(r.subjects[1].ok);
    CHECK_FALSE(r.subjects[1].error.empty());
    CHECK(r.subjects[0].ok);
    CHECK(r.subjects[3].ok);
    CHECK(aggregate(r).failed == 1);
}

TEST_CASE("trajectories stream to files") {
    const auto dir = std::filesystem::temp_directory_path() / "apsim_test_traj";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    const auto pop = sample_population(PatientParams{}, 2, 3);
    TrialConfig cfg;
    cfg.weeks = 1;
    cfg.warmup_weeks = 0;
    cfg.trajectory_dir = dir;
    const auto r = run_trial(pop, cfg);
    for (std::uint64_t id : {0, 1}) {
        std::ifstream in(dir / ("subject_" + std::to_string(id) + ".csv"));
        REQUIRE(in);
        const auto cols = read_trajectory(in);
        CHECK(cols.cgm.size() == 7 * 288);
        const auto rep = make_report(cols.cgm, cols.basal, cols.bolus, 5.0);
        CHECK(rep.ranges.tir == r.subjects[id].report.ranges.tir);
        CHECK(rep.tdd_basal == Catch::Approx(r.subjects[id].report.tdd_basal).epsilon(1e-12));
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("dispersion config round trip") {
    PopulationDispersion d;
    d.s_it = 0.45;
    const auto e = PopulationDispersion::from_config(d.to_config());
    CHECK(e.s_it == 0.45);
    CHECK(e.ka1 == d.ka1);
}
