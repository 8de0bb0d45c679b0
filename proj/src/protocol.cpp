#include "apsim/protocol.hpp"

#include "apsim/error.hpp"
#include "apsim/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

namespace apsim {

namespace {

using namespace std::chrono;

constexpr std::array<std::string_view, 4> kSeasonNames{"winter", "spring", "summer", "autumn"};
constexpr std::array<std::string_view, 3> kWeekNames{"standard", "active", "vacation"};
constexpr std::array<std::string_view, 4> kDayNames{"standard", "active", "movie-night", "late-night"};
constexpr std::array<std::string_view, 4> kMealNames{"large", "medium", "small", "snack"};

template <class Enum, std::size_t N>
Enum parse_enum(std::string_view s, const std::array<std::string_view, N>& names, const char* what) {
    for (std::size_t i = 0; i < N; ++i) {
        if (names[i] == s) return static_cast<Enum>(i);
    }
    throw ConfigError(std::string("unknown ") + what + " `" + std::string(s) + "`");
}

// Stream ids keep the week-type and day-type shuffles independent.
constexpr std::uint64_t kSeasonStream = 0x5EA5'0000'0000'0000ULL;
constexpr std::uint64_t kWeekStream = 0x3EE4'0000'0000'0000ULL;

template <class T>
void shuffle(std::vector<T>& v, CounterStream& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.next_below(i));
        std::swap(v[i - 1], v[j]);
    }
}

int parse_clock(std::string_view s) {
    int h = 0;
    int m = 0;
    char colon = 0;
    std::istringstream in{std::string(s)};
    if (!(in >> h >> colon >> m) || colon != ':' || h < 0 || h > 23 || m < 0 || m > 59) {
        throw ConfigError("bad clock time `" + std::string(s) + "` (expected HH:MM)");
    }
    return h * 60 + m;
}

std::string render_clock(int minute) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%02d:%02d", minute / 60, minute % 60);
    return buf;
}

std::string render_date(year_month_day d) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()), static_cast<unsigned>(d.month()),
                  static_cast<unsigned>(d.day()));
    return buf;
}

}  // namespace

std::string_view to_string(Season s) { return kSeasonNames[static_cast<int>(s)]; }
std::string_view to_string(WeekType w) { return kWeekNames[static_cast<int>(w)]; }
std::string_view to_string(DayType d) { return kDayNames[static_cast<int>(d)]; }
std::string_view to_string(MealSize m) { return kMealNames[static_cast<int>(m)]; }

MealSize meal_size_from_string(std::string_view s) { return parse_enum<MealSize>(s, kMealNames, "meal size"); }

double grams_per_kg(MealSize size) {
    switch (size) {
        case MealSize::Large: return 1.29;
        case MealSize::Medium: return 0.86;
        case MealSize::Small: return 0.57;
        case MealSize::Snack: return 0.29;
    }
    return 0.0;
}

std::array<int, 3> season_composition(Season s) {
    switch (s) {
        case Season::Winter: return {6, 4, 3};
        case Season::Spring: return {6, 6, 1};
        case Season::Summer: return {7, 3, 3};
        case Season::Autumn: return {9, 3, 1};
    }
    return {};
}

std::array<int, 4> week_composition(WeekType w) {
    switch (w) {
        case WeekType::Standard: return {4, 1, 1, 1};
        case WeekType::Active: return {3, 3, 1, 0};
        case WeekType::Vacation: return {5, 0, 0, 2};
    }
    return {};
}

Season season_of(year_month_day date) {
    const unsigned m = static_cast<unsigned>(date.month());
    if (m == 12 || m <= 2) return Season::Winter;
    if (m <= 5) return Season::Spring;
    if (m <= 8) return Season::Summer;
    return Season::Autumn;
}

double event_time(const ScenarioEvent& e) {
    return std::visit(
        [](const auto& ev) {
            if constexpr (std::is_same_v<std::decay_t<decltype(ev)>, MealEvent>) {
                return ev.time_min;
            } else {
                return ev.start_min;
            }
        },
        e);
}

DayTemplate DayTemplate::parse(std::string_view text) {
    DayTemplate t;
    std::string s(text);
    std::size_t pos = 0;
    while (pos <= s.size()) {
        const auto semi = s.find(';', pos);
        const std::string part = s.substr(pos, semi == std::string::npos ? std::string::npos : semi - pos);
        pos = semi == std::string::npos ? s.size() + 1 : semi + 1;
        std::istringstream in(part);
        std::string clock;
        std::string kind;
        if (!(in >> clock)) continue;
        if (!(in >> kind)) throw ConfigError("day template item `" + part + "` lacks a kind");
        TemplateItem item;
        item.minute_of_day = parse_clock(clock);
        if (kind == "meal") {
            std::string size;
            if (!(in >> size)) throw ConfigError("meal item `" + part + "` lacks a size");
            item.kind = TemplateItem::Kind::Meal;
            item.size = meal_size_from_string(size);
        } else if (kind == "exercise") {
            item.kind = TemplateItem::Kind::Exercise;
            if (!(in >> item.duration_min >> item.intensity) || item.duration_min <= 0.0 || item.intensity < 0.0 ||
                item.intensity > 1.0) {
                throw ConfigError("exercise item `" + part + "` needs <duration_min> <intensity in [0,1]>");
            }
        } else {
            throw ConfigError("unknown day template item kind `" + kind + "`");
        }
        std::string extra;
        if (in >> extra) throw ConfigError("trailing text in day template item `" + part + "`");
        t.items.push_back(item);
    }
    for (std::size_t i = 1; i < t.items.size(); ++i) {
        if (t.items[i].minute_of_day <= t.items[i - 1].minute_of_day) {
            throw ConfigError("day template items must be strictly time-ordered: `" + std::string(text) + "`");
        }
    }
    return t;
}

std::string DayTemplate::render() const {
    std::string out;
    for (const auto& it : items) {
        if (!out.empty()) out += "; ";
        out += render_clock(it.minute_of_day);
        if (it.kind == TemplateItem::Kind::Meal) {
            out += " meal ";
            out += to_string(it.size);
        } else {
            out += " exercise " + format_double(it.duration_min) + " " + format_double(it.intensity);
        }
    }
    return out;
}

ProtocolConfig ProtocolConfig::defaults() {
    // Breakfast small, lunch medium, dinner large (medium in spring/summer),
    // afternoon snack (mid-morning in spring/summer).
    const std::string cold = "07:00 meal small; 12:00 meal medium; 15:00 meal snack";
    const std::string warm = "07:00 meal small; 10:00 meal snack; 12:00 meal medium";
    const std::string cold_dinner = "18:00 meal large";
    const std::string warm_dinner = "18:00 meal medium";
    const std::string exercise = "16:30 exercise 60 0.5";

    ProtocolConfig c;
    auto set = [&](DayType d, const std::string& cold_plan, const std::string& warm_plan) {
        c.templates[static_cast<int>(d)][0] = DayTemplate::parse(cold_plan);
        c.templates[static_cast<int>(d)][1] = DayTemplate::parse(warm_plan);
    };
    set(DayType::Standard, cold + "; " + cold_dinner, warm + "; " + warm_dinner);
    set(DayType::Active, cold + "; " + exercise + "; " + cold_dinner, warm + "; " + exercise + "; " + warm_dinner);
    set(DayType::MovieNight, cold + "; " + cold_dinner + "; 21:00 meal snack",
        warm + "; " + warm_dinner + "; 21:00 meal snack");
    set(DayType::LateNight, cold + "; " + cold_dinner + "; 23:00 meal small",
        warm + "; " + warm_dinner + "; 23:00 meal small");
    return c;
}

ProtocolConfig ProtocolConfig::from_config(const KeyValueConfig& cfg) {
    ProtocolConfig c = defaults();
    for (int d = 0; d < 4; ++d) {
        for (int w = 0; w < 2; ++w) {
            const std::string key = "day." + std::string(kDayNames[d]) + (w == 0 ? ".cold" : ".warm");
            const std::string text = cfg.get_string(key, "");
            if (!text.empty()) c.templates[d][w] = DayTemplate::parse(text);
        }
    }
    c.consumption_min = cfg.get_double("consumption_min", c.consumption_min);
    c.announce_meals = cfg.get_bool("announce_meals", c.announce_meals);
    if (!(c.consumption_min > 0.0)) throw ConfigError("scenario.consumption_min must be > 0");
    cfg.require_all_consumed();
    return c;
}

KeyValueConfig ProtocolConfig::to_config() const {
    KeyValueConfig cfg;
    for (int d = 0; d < 4; ++d) {
        cfg.set("day." + std::string(kDayNames[d]) + ".cold", templates[d][0].render());
        cfg.set("day." + std::string(kDayNames[d]) + ".warm", templates[d][1].render());
    }
    cfg.set("consumption_min", consumption_min);
    cfg.set("announce_meals", std::string(announce_meals ? "1" : "0"));
    return cfg;
}

Scenario generate(std::uint64_t seed, year_month_day start_date, int weeks, double bodyweight,
                  const ProtocolConfig& config) {
    if (weeks < 1) throw ConfigError("scenario needs at least one week");
    if (!(bodyweight > 0.0)) throw ConfigError("scenario bodyweight must be > 0");
    if (!start_date.ok()) throw ConfigError("invalid scenario start date");

    Scenario sc;
    sc.start_date = start_date;
    sc.weeks = weeks;
    sc.bodyweight = bodyweight;
    sc.consumption_min = config.consumption_min;

    const int first_season = static_cast<int>(season_of(start_date));
    const int blocks = (weeks + kWeeksPerSeason - 1) / kWeeksPerSeason;
    for (int b = 0; b < blocks; ++b) {
        const auto season = static_cast<Season>((first_season + b) % 4);
        std::vector<WeekType> order;
        const auto comp = season_composition(season);
        for (int t = 0; t < 3; ++t) order.insert(order.end(), comp[t], static_cast<WeekType>(t));
        CounterStream rng(seed, kSeasonStream + static_cast<std::uint64_t>(b));
        shuffle(order, rng);
        for (int i = 0; i < kWeeksPerSeason && b * kWeeksPerSeason + i < weeks; ++i) {
            sc.season_labels.push_back(season);
            sc.week_labels.push_back(order[i]);
        }
    }

    for (int w = 0; w < weeks; ++w) {
        std::vector<DayType> days;
        const auto comp = week_composition(sc.week_labels[w]);
        for (int t = 0; t < 4; ++t) days.insert(days.end(), comp[t], static_cast<DayType>(t));
        CounterStream rng(seed, kWeekStream + static_cast<std::uint64_t>(w));
        shuffle(days, rng);

        for (int d = 0; d < kDaysPerWeek; ++d) {
            const int day_index = w * kDaysPerWeek + d;
            sc.day_labels.push_back(days[d]);
            const double day_start = day_index * 1440.0;
            for (const auto& item : config.day(days[d], sc.season_labels[w]).items) {
                const double t = day_start + item.minute_of_day;
                if (item.kind == TemplateItem::Kind::Meal) {
                    sc.events.emplace_back(MealEvent{t, item.size, grams_per_kg(item.size), config.announce_meals});
                } else {
                    sc.events.emplace_back(ExerciseEvent{t, item.duration_min, item.intensity});
                }
            }
        }
    }
    return sc;
}

ZohSeries to_zoh_series(const Scenario& scenario, double ts) {
    if (!(ts > 0.0)) throw ConfigError("zoh interval must be > 0");
    ZohSeries z;
    z.interval_min = ts;
    const auto n = static_cast<std::size_t>(std::llround(scenario.duration_min() / ts));
    z.carb_rate.assign(n, 0.0);
    z.exercise.assign(n, 0.0);
    z.announced_carbs.assign(n, 0.0);
    const auto spread = static_cast<std::size_t>(std::max<long long>(1, std::llround(scenario.consumption_min / ts)));

    for (const auto& ev : scenario.events) {
        if (const auto* meal = std::get_if<MealEvent>(&ev)) {
            const auto k0 = static_cast<std::size_t>(std::floor(meal->time_min / ts));
            if (meal->time_min < 0.0 || k0 >= n) continue;
            const double grams = meal->grams_per_kg * scenario.bodyweight;
            const double rate = grams / (static_cast<double>(spread) * ts);
            for (std::size_t k = k0; k < std::min(n, k0 + spread); ++k) z.carb_rate[k] += rate;
            if (meal->announced) z.announced_carbs[k0] += grams;
        } else {
            const auto& ex = std::get<ExerciseEvent>(ev);
            if (ex.start_min < 0.0) continue;
            const auto k0 = static_cast<std::size_t>(std::floor(ex.start_min / ts));
            const auto len = static_cast<std::size_t>(std::max<long long>(1, std::llround(ex.duration_min / ts)));
            for (std::size_t k = k0; k < std::min(n, k0 + len); ++k) {
                z.exercise[k] = std::max(z.exercise[k], ex.intensity);
            }
        }
    }
    return z;
}

void write_scenario(std::ostream& out, const Scenario& sc) {
    out << "apsim-scenario v1\n";
    out << "start_date " << render_date(sc.start_date) << '\n';
    out << "weeks " << sc.weeks << '\n';
    out << "bodyweight " << format_double(sc.bodyweight) << '\n';
    out << "consumption_min " << format_double(sc.consumption_min) << '\n';
    for (std::size_t w = 0; w < sc.week_labels.size(); ++w) {
        out << "week " << w << ' ' << to_string(sc.season_labels[w]) << ' ' << to_string(sc.week_labels[w]) << '\n';
    }
    for (std::size_t d = 0; d < sc.day_labels.size(); ++d) {
        out << "day " << d << ' ' << to_string(sc.day_labels[d]) << '\n';
    }
    for (const auto& ev : sc.events) {
        if (const auto* m = std::get_if<MealEvent>(&ev)) {
            out << "meal " << format_double(m->time_min) << ' ' << to_string(m->size) << ' '
                << format_double(m->grams_per_kg) << ' ' << (m->announced ? 1 : 0) << '\n';
        } else {
            const auto& e = std::get<ExerciseEvent>(ev);
            out << "exercise " << format_double(e.start_min) << ' ' << format_double(e.duration_min) << ' '
                << format_double(e.intensity) << '\n';
        }
    }
}

Scenario read_scenario(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "apsim-scenario v1") throw ConfigError("not an apsim-scenario v1 file");
    Scenario sc;
    sc.events.clear();
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag)) continue;
        auto fail = [&] { throw ConfigError("scenario line " + std::to_string(line_no) + ": malformed `" + line + "`"); };
        if (tag == "start_date") {
            int y = 0;
            unsigned m = 0;
            unsigned d = 0;
            char c1 = 0;
            char c2 = 0;
            if (!(ls >> y >> c1 >> m >> c2 >> d) || c1 != '-' || c2 != '-') fail();
            sc.start_date = year_month_day{year{y}, month{m}, day{d}};
            if (!sc.start_date.ok()) fail();
        } else if (tag == "weeks") {
            if (!(ls >> sc.weeks)) fail();
        } else if (tag == "bodyweight") {
            std::string v;
            if (!(ls >> v)) fail();
            sc.bodyweight = parse_double(v, "bodyweight");
        } else if (tag == "consumption_min") {
            std::string v;
            if (!(ls >> v)) fail();
            sc.consumption_min = parse_double(v, "consumption_min");
        } else if (tag == "week") {
            std::size_t idx = 0;
            std::string season;
            std::string type;
            if (!(ls >> idx >> season >> type) || idx != sc.week_labels.size()) fail();
            sc.season_labels.push_back(parse_enum<Season>(season, kSeasonNames, "season"));
            sc.week_labels.push_back(parse_enum<WeekType>(type, kWeekNames, "week type"));
        } else if (tag == "day") {
            std::size_t idx = 0;
            std::string type;
            if (!(ls >> idx >> type) || idx != sc.day_labels.size()) fail();
            sc.day_labels.push_back(parse_enum<DayType>(type, kDayNames, "day type"));
        } else if (tag == "meal") {
            std::string t;
            std::string size;
            std::string g;
            int announced = 0;
            if (!(ls >> t >> size >> g >> announced)) fail();
            sc.events.emplace_back(MealEvent{parse_double(t, "meal time"), meal_size_from_string(size),
                                             parse_double(g, "meal grams_per_kg"), announced != 0});
        } else if (tag == "exercise") {
            std::string t;
            std::string dur;
            std::string inten;
            if (!(ls >> t >> dur >> inten)) fail();
            sc.events.emplace_back(ExerciseEvent{parse_double(t, "exercise start"), parse_double(dur, "duration"),
                                                 parse_double(inten, "intensity")});
        } else {
            fail();
        }
    }
    for (std::size_t i = 1; i < sc.events.size(); ++i) {
        if (!(event_time(sc.events[i]) > event_time(sc.events[i - 1]))) {
            throw ConfigError("scenario events must be strictly time-ordered");
        }
    }
    return sc;
}

}  // namespace apsim
