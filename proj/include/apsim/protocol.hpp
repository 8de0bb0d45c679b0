#pragma once

// Seeded lifestyle scenarios: 13-week seasons made of standard, active and
// vacation weeks; weeks made of standard, active, movie-night and late-night
// days; meals in four bodyweight-scaled sizes.

#include "apsim/kv_config.hpp"

#include <array>
#include <chrono>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace apsim {

enum class Season { Winter = 0, Spring, Summer, Autumn };
enum class WeekType { Standard = 0, Active, Vacation };
enum class DayType { Standard = 0, Active, MovieNight, LateNight };
enum class MealSize { Large = 0, Medium, Small, Snack };

[[nodiscard]] std::string_view to_string(Season s);
[[nodiscard]] std::string_view to_string(WeekType w);
[[nodiscard]] std::string_view to_string(DayType d);
[[nodiscard]] std::string_view to_string(MealSize m);
[[nodiscard]] MealSize meal_size_from_string(std::string_view s);

/// Carbohydrate content [g CHO/kg bodyweight].
[[nodiscard]] double grams_per_kg(MealSize size);

inline constexpr int kWeeksPerSeason = 13;
inline constexpr int kDaysPerWeek = 7;

/// Number of standard, active and vacation weeks in a season.
[[nodiscard]] std::array<int, 3> season_composition(Season s);
/// Number of standard, active, movie-night and late-night days in a week.
[[nodiscard]] std::array<int, 4> week_composition(WeekType w);

/// Season a trial starting on `date` begins in (Dec-Feb winter, Mar-May spring, ...).
[[nodiscard]] Season season_of(std::chrono::year_month_day date);

/// Spring and summer use the warm-season day templates.
[[nodiscard]] constexpr bool is_warm(Season s) { return s == Season::Spring || s == Season::Summer; }

struct MealEvent {
    double time_min = 0.0;  ///< minutes since scenario start
    MealSize size = MealSize::Medium;
    double grams_per_kg = 0.0;
    bool announced = true;

    friend bool operator==(const MealEvent&, const MealEvent&) = default;
};

struct ExerciseEvent {
    double start_min = 0.0;
    double duration_min = 0.0;
    double intensity = 0.0;  ///< [0, 1]

    friend bool operator==(const ExerciseEvent&, const ExerciseEvent&) = default;
};

using ScenarioEvent = std::variant<MealEvent, ExerciseEvent>;

[[nodiscard]] double event_time(const ScenarioEvent& e);

struct TemplateItem {
    enum class Kind { Meal, Exercise };
    Kind kind = Kind::Meal;
    int minute_of_day = 0;
    MealSize size = MealSize::Medium;
    double duration_min = 0.0;
    double intensity = 0.0;

    friend bool operator==(const TemplateItem&, const TemplateItem&) = default;
};

/// Time-ordered day plan, e.g. "07:00 meal small; 17:00 exercise 60 0.5".
struct DayTemplate {
    std::vector<TemplateItem> items;

    static DayTemplate parse(std::string_view text);
    [[nodiscard]] std::string render() const;

    friend bool operator==(const DayTemplate&, const DayTemplate&) = default;
};

struct ProtocolConfig {
    /// templates[day type][0 = autumn/winter, 1 = spring/summer]
    std::array<std::array<DayTemplate, 2>, 4> templates;
    double consumption_min = 5.0;  ///< meal consumption duration
    bool announce_meals = true;

    static ProtocolConfig defaults();
    /// Keys: `day.<standard|active|movie-night|late-night>.<cold|warm>`, `consumption_min`, `announce_meals`.
    static ProtocolConfig from_config(const KeyValueConfig& cfg);
    [[nodiscard]] KeyValueConfig to_config() const;

    [[nodiscard]] const DayTemplate& day(DayType d, Season s) const {
        return templates[static_cast<int>(d)][is_warm(s) ? 1 : 0];
    }
};

struct Scenario {
    std::chrono::year_month_day start_date{std::chrono::year{2021}, std::chrono::January, std::chrono::day{1}};
    int weeks = 0;
    double bodyweight = 70.0;
    double consumption_min = 5.0;
    std::vector<ScenarioEvent> events;
    std::vector<Season> season_labels;  ///< per week
    std::vector<WeekType> week_labels;  ///< per week
    std::vector<DayType> day_labels;    ///< per day

    [[nodiscard]] double duration_min() const { return weeks * kDaysPerWeek * 1440.0; }

    friend bool operator==(const Scenario&, const Scenario&) = default;
};

[[nodiscard]] Scenario generate(std::uint64_t seed, std::chrono::year_month_day start_date, int weeks,
                                double bodyweight, const ProtocolConfig& config = ProtocolConfig::defaults());

/// Zero-order-hold inputs on the control grid.
struct ZohSeries {
    double interval_min = 5.0;
    std::vector<double> carb_rate;        ///< [g CHO/min]
    std::vector<double> exercise;         ///< intensity
    std::vector<double> announced_carbs;  ///< [g CHO] announced at the meal's first interval

    [[nodiscard]] std::size_t size() const { return carb_rate.size(); }
};

/// Events off the grid snap to the interval containing them. A meal is spread
/// evenly over round(consumption_min / ts) intervals (at least one).
[[nodiscard]] ZohSeries to_zoh_series(const Scenario& scenario, double ts_min);

/// Line-oriented export:
///   apsim-scenario v1
///   start_date YYYY-MM-DD | weeks N | bodyweight KG | consumption_min M
///   week <index> <season> <week type>
///   day <index> <day type>
///   meal <t_min> <size> <g_per_kg> <announced 0|1>
///   exercise <t_min> <duration_min> <intensity>
void write_scenario(std::ostream& out, const Scenario& scenario);
[[nodiscard]] Scenario read_scenario(std::istream& in);

}  // namespace apsim
