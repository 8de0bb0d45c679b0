#include "apsim/error.hpp"
#include "apsim/io.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <json.hpp>

#include <sstream>

using namespace apsim;
using namespace std::chrono;

TEST_CASE("timestamps") {
    const year_month_day start{year{2021}, January, day{1}};
    CHECK(format_datetime(start, 0.0) == "2021-01-01T00:00");
    CHECK(format_datetime(start, 1440.0 * 31 + 65.0) == "2021-02-01T01:05");
    CHECK(format_datetime(start, 1440.0 * 365) == "2022-01-01T00:00");
}

TEST_CASE("trajectory columns round trip") {
    std::ostringstream out;
    write_trajectory_header(out);
    TrajectoryStep s;
    for (int k = 0; k < 3; ++k) {
        s.t_min = 5.0 * k;
        s.cgm = 6.0 + 0.1 * k;
        s.basal_rate = 11.0 / 3.0;
        s.bolus_rate = k == 1 ? 250.0 : 0.0;
        write_trajectory_row(out, s);
    }
    const std::string text = out.str();
    CHECK(text.rfind("datetime,t_min,cgm_mmol_L,basal_mU_min,bolus_mU_min,", 0) == 0);
    std::istringstream in(text);
    const auto cols = read_trajectory(in);
    REQUIRE(cols.cgm.size() == 3);
    CHECK(cols.t_min[2] == 10.0);
    CHECK(cols.cgm[1] == 6.0 + 0.1);
    CHECK(cols.basal[0] == 11.0 / 3.0);
    CHECK(cols.bolus[1] == 250.0);
}

TEST_CASE("population round trip") {
    const auto pop = sample_population(PatientParams{}, 5, 99);
    std::stringstream buf;
    write_population(buf, pop);
    const auto back = read_population(buf);
    REQUIRE(back.subjects.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(back.subjects[i].to_config().render() == pop.subjects[i].to_config().render());
    }
    std::istringstream bad("name,bodyweight\n0,70\n");
    CHECK_THROWS_AS(read_population(bad), ConfigError);
}

TEST_CASE("trial tables") {
    const auto pop = sample_population(PatientParams{}, 3, 1);
    TrialConfig cfg;
    cfg.weeks = 2;
    cfg.warmup_weeks = 1;
    const auto r = run_trial(pop, cfg);
    const auto agg = aggregate(r);

    std::ostringstream summary;
    write_subject_summary(summary, r);
    std::istringstream lines(summary.str());
    std::string header;
    std::getline(lines, header);
    CHECK(header.rfind("id,status,tar2,tar1,tir,tbr1,tbr2,", 0) == 0);
    CHECK(std::count(header.begin(), header.end(), ',') == 30);
    int rows = 0;
    for (std::string line; std::getline(lines, line);) ++rows;
    CHECK(rows == 3);

    std::ostringstream targets;
    write_targets_table(targets, agg);
    std::istringstream t(targets.str());
    std::vector<std::string> tl;
    for (std::string line; std::getline(t, line);) tl.push_back(line);
    REQUIRE(tl.size() == 12);
    CHECK(tl[1].rfind("Average glucose", 0) == 0);
    CHECK(tl[6].rfind("TIR", 0) == 0);
    CHECK(tl[11].rfind("All targets,", 0) == 0);

    std::ostringstream json;
    write_aggregate_json(json, agg);
    const auto j = nlohmann::json::parse(json.str());
    CHECK(j["subjects"] == 3);
    CHECK(j["targets"].size() == 11);
    CHECK(j["mean_tir"].get<double>() == agg.mean_ranges.tir);

    std::ostringstream cdf, box, tdd;
    write_cdf(cdf, agg.cdf);
    write_box_stats(box, agg);
    write_tdd_histogram(tdd, r);
    const auto cdf_text = cdf.str(), box_text = box.str();
    CHECK(std::count(cdf_text.begin(), cdf_text.end(), '\n') == 302);
    CHECK(std::count(box_text.begin(), box_text.end(), '\n') == 6);
    CHECK(tdd.str().rfind("bin_low_U_day,bin_high_U_day,basal_count,bolus_count\n", 0) == 0);
}
