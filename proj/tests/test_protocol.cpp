#include "apsim/error.hpp"
#include "apsim/protocol.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <set>
#include <sstream>

using namespace apsim;
using namespace std::chrono;

namespace {

constexpr year_month_day kJan1{year{2021}, January, day{1}};

double total_event_grams(const Scenario& sc) {
    double g = 0.0;
    for (const auto& e : sc.events) {
        if (const auto* m = std::get_if<MealEvent>(&e)) g += m->grams_per_kg * sc.bodyweight;
    }
    return g;
}

double total_series_grams(const ZohSeries& z) {
    double g = 0.0;
    for (double r : z.carb_rate) g += r * z.interval_min;
    return g;
}

}  // namespace

TEST_CASE("meal sizes scale with bodyweight") {
    CHECK(grams_per_kg(MealSize::Large) * 70.0 == Catch::Approx(90.3).epsilon(1e-12));
    CHECK(grams_per_kg(MealSize::Medium) == 0.86);
    CHECK(grams_per_kg(MealSize::Small) == 0.57);
    CHECK(grams_per_kg(MealSize::Snack) == 0.29);
}

TEST_CASE("composition tables") {
    CHECK(season_composition(Season::Winter) == std::array{6, 4, 3});
    CHECK(season_composition(Season::Spring) == std::array{6, 6, 1});
    CHECK(season_composition(Season::Summer) == std::array{7, 3, 3});
    CHECK(season_composition(Season::Autumn) == std::array{9, 3, 1});
    CHECK(week_composition(WeekType::Standard) == std::array{4, 1, 1, 1});
    for (auto s : {Season::Winter, Season::Spring, Season::Summer, Season::Autumn}) {
        const auto c = season_composition(s);
        CHECK(c[0] + c[1] + c[2] == 13);
    }
    for (auto w : {WeekType::Standard, WeekType::Active, WeekType::Vacation}) {
        const auto c = week_composition(w);
        CHECK(c[0] + c[1] + c[2] + c[3] == 7);
    }
    CHECK(week_composition(WeekType::Vacation)[3] == 2);
}

TEST_CASE("season of a start date") {
    CHECK(season_of(kJan1) == Season::Winter);
    CHECK(season_of(year{2021} / December / 31) == Season::Winter);
    CHECK(season_of(year{2021} / March / 1) == Season::Spring);
    CHECK(season_of(year{2021} / August / 31) == Season::Summer);
    CHECK(season_of(year{2021} / November / 30) == Season::Autumn);
}

TEST_CASE("a year of weeks follows the tables for every seed") {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const auto sc = generate(seed, kJan1, 52, 70.0);
        REQUIRE(sc.week_labels.size() == 52);
        REQUIRE(sc.day_labels.size() == 364);
        for (int b = 0; b < 4; ++b) {
            std::array<int, 3> weeks{};
            for (int i = 0; i < 13; ++i) {
                CHECK(sc.season_labels[b * 13 + i] == static_cast<Season>(b));
                ++weeks[static_cast<int>(sc.week_labels[b * 13 + i])];
            }
            CHECK(weeks == season_composition(static_cast<Season>(b)));
        }
        for (int w = 0; w < 52; ++w) {
            std::array<int, 4> days{};
            for (int d = 0; d < 7; ++d) ++days[static_cast<int>(sc.day_labels[w * 7 + d])];
            CHECK(days == week_composition(sc.week_labels[w]));
        }
        for (std::size_t i = 1; i < sc.events.size(); ++i) {
            CHECK(event_time(sc.events[i - 1]) < event_time(sc.events[i]));
        }
    }
}

TEST_CASE("orderings are shuffled") {
    std::set<std::vector<WeekType>> orders;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto sc = generate(seed, kJan1, 13, 70.0);
        orders.insert(sc.week_labels);
    }
    CHECK(orders.size() > 10);
}

TEST_CASE("generation is deterministic") {
    CHECK(generate(77, kJan1, 52, 81.0) == generate(77, kJan1, 52, 81.0));
    CHECK_FALSE(generate(77, kJan1, 52, 81.0) == generate(78, kJan1, 52, 81.0));
}

TEST_CASE("meal sizes come only from the four canonical sizes") {
    const auto sc = generate(3, kJan1, 52, 64.0);
    for (const auto& e : sc.events) {
        if (const auto* m = std::get_if<MealEvent>(&e)) {
            CHECK(m->grams_per_kg == grams_per_kg(m->size));
            CHECK(m->announced);
        }
    }
}

TEST_CASE("warm seasons use a medium dinner and a morning snack") {
    const auto cfg = ProtocolConfig::defaults();
    const auto& warm = cfg.day(DayType::Standard, Season::Summer);
    const auto& cold = cfg.day(DayType::Standard, Season::Winter);
    auto size_at = [](const DayTemplate& t, int minute) {
        for (const auto& i : t.items) {
            if (i.kind == TemplateItem::Kind::Meal && i.minute_of_day == minute) return i.size;
        }
        FAIL("no meal at " << minute);
        return MealSize::Snack;
    };
    CHECK(size_at(cold, 18 * 60) == MealSize::Large);
    CHECK(size_at(warm, 18 * 60) == MealSize::Medium);
    CHECK(size_at(cold, 15 * 60) == MealSize::Snack);
    CHECK(size_at(warm, 10 * 60) == MealSize::Snack);
}

TEST_CASE("day template text") {
    const auto t = DayTemplate::parse("07:00 meal small; 16:30 exercise 60 0.5; 23:00 meal large");
    REQUIRE(t.items.size() == 3);
    CHECK(t.items[1].kind == TemplateItem::Kind::Exercise);
    CHECK(t.items[1].minute_of_day == 990);
    CHECK(t.items[1].intensity == 0.5);
    CHECK(DayTemplate::parse(t.render()) == t);
    CHECK_THROWS_AS(DayTemplate::parse("25:00 meal small"), ConfigError);
    CHECK_THROWS_AS(DayTemplate::parse("07:00 meal huge"), ConfigError);
}

TEST_CASE("templates can be overridden from config") {
    auto cfg = KeyValueConfig::parse("day.standard.cold = 08:00 meal large\nconsumption_min = 15\n");
    const auto pc = ProtocolConfig::from_config(cfg);
    CHECK(pc.consumption_min == 15.0);
    CHECK(pc.day(DayType::Standard, Season::Winter).items.size() == 1);
    CHECK(pc.day(DayType::Standard, Season::Summer) == ProtocolConfig::defaults().day(DayType::Standard, Season::Summer));
    const auto again = ProtocolConfig::from_config(pc.to_config());
    CHECK(again.day(DayType::Standard, Season::Winter) == pc.day(DayType::Standard, Season::Winter));
}

TEST_CASE("zero-order-hold series") {
    Scenario sc;
    sc.weeks = 1;
    sc.bodyweight = 60.0 / grams_per_kg(MealSize::Medium);
    sc.events.emplace_back(MealEvent{720.0, MealSize::Medium, grams_per_kg(MealSize::Medium), true});
    const auto z = to_zoh_series(sc, 5.0);
    REQUIRE(z.size() == 7 * 288);
    for (std::size_t k = 0; k < z.size(); ++k) {
        if (k == 144) {
            CHECK(z.carb_rate[k] == Catch::Approx(12.0).epsilon(1e-14));
            CHECK(z.announced_carbs[k] == Catch::Approx(60.0).epsilon(1e-14));
        } else {
            CHECK(z.carb_rate[k] == 0.0);
        }
    }

    Scenario empty;
    empty.weeks = 1;
    const auto e = to_zoh_series(empty, 5.0);
    CHECK(std::all_of(e.carb_rate.begin(), e.carb_rate.end(), [](double v) { return v == 0.0; }));
    CHECK(std::all_of(e.exercise.begin(), e.exercise.end(), [](double v) { return v == 0.0; }));
}

TEST_CASE("off-grid events snap to the containing interval") {
    Scenario sc;
    sc.weeks = 1;
    sc.events.emplace_back(MealEvent{723.0, MealSize::Snack, 0.29, true});
    sc.events.emplace_back(ExerciseEvent{1001.0, 30.0, 0.4});
    const auto z = to_zoh_series(sc, 5.0);
    CHECK(z.carb_rate[144] > 0.0);
    CHECK(z.exercise[199] == 0.0);
    CHECK(z.exercise[200] == 0.4);
    CHECK(z.exercise[205] == 0.4);
    CHECK(z.exercise[206] == 0.0);
}

TEST_CASE("carbohydrate mass is conserved") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> bw(40.0, 130.0);
    for (int i = 0; i < 200; ++i) {
        auto cfg = ProtocolConfig::defaults();
        cfg.consumption_min = 5.0 * static_cast<double>(1 + i % 4);
        const auto sc = generate(rng(), kJan1, 4, bw(rng), cfg);
        const auto z = to_zoh_series(sc, 5.0);
        const double want = total_event_grams(sc);
        CHECK(total_series_grams(z) == Catch::Approx(want).epsilon(1e-12));
        double announced = 0.0;
        for (double a : z.announced_carbs) announced += a;
        CHECK(announced == Catch::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("scenario text round trip") {
    const auto sc = generate(12, year{2022} / June / 15, 20, 73.25);
    CHECK(sc.season_labels.front() == Season::Summer);
    std::stringstream buf;
    write_scenario(buf, sc);
    CHECK(read_scenario(buf) == sc);
}
