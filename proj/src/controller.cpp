#include "apsim/controller.hpp"

#include "apsim/error.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <sstream>
#include <vector>

namespace apsim {

namespace {

constexpr double kMaxPlausibleCgm = 50.0;
constexpr std::string_view kStateTag = "apsim-controller-state";
constexpr std::string_view kStateVersion = "v1";

void check_measurement(double y) {
    if (!std::isfinite(y) || y <= 0.0 || y > kMaxPlausibleCgm) {
        throw InvalidMeasurement("CGM value out of range (0, 50] mmol/L: " + format_double(y));
    }
}

double clip(double v, double hi) { return std::max(0.0, std::min(hi, v)); }

struct Weights {
    int w_ba;
    int w_bo;
};

Weights meal_weights(const std::optional<double>& last_meal, double t, const ControllerParams& p) {
    // No meal yet counts as "longer ago than the window".
    const bool basal_active = !last_meal || (t - *last_meal) > p.meal_window_min();
    return basal_active ? Weights{1, 0} : Weights{0, 1};
}

// Integrators are updated from the current sample and the updated values are
// used for the current dose.
void update_estimates(ControllerState& s, const Weights& w, double e_ba, double e_bo, const ControllerParams& p) {
    const double ts = p.sample_interval_min;
    s.i_basal = std::max(0.0, s.i_basal + w.w_ba * p.k_i_basal * e_ba * ts);
    s.i_bolus = std::max(0.0, s.i_bolus + w.w_bo * p.k_i_bolus * e_bo * ts);
}

std::string hex_or_dash(const std::optional<double>& v) {
    if (!v) return "-";
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), *v, std::chars_format::hex);
    (void)ec;
    return std::string(buf.data(), ptr);
}

std::optional<double> parse_hex(std::string_view tok) {
    if (tok == "-") return std::nullopt;
    bool neg = false;
    if (!tok.empty() && tok.front() == '-') {
        neg = true;
        tok.remove_prefix(1);
    }
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v, std::chars_format::hex);
    if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
        throw ConfigError("controller state: bad value `" + std::string(tok) + "`");
    }
    return neg ? -v : v;
}

}  // namespace

void ControllerParams::validate() const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string("controller.") + name + " must be > 0");
    };
    positive(sample_interval_min, "sample_interval_min");
    positive(u_max_basal, "u_max_basal");
    positive(u_max_bolus, "u_max_bolus");
    positive(target, "target");
    positive(safety_threshold, "safety_threshold");
    positive(meal_window_h, "meal_window_h");
    positive(k_i_basal, "k_i_basal");
    positive(hypo_amplification, "hypo_amplification");
    positive(k_p_ma, "k_p_ma");
    positive(k_d_ma, "k_d_ma");
    positive(carb_threshold, "carb_threshold");
    positive(beta, "beta");
    positive(k_i_bolus, "k_i_bolus");
    positive(basal_deadband.lower, "basal_deadband_lower");
    positive(bolus_deadband.lower, "bolus_deadband_lower");
    if (!(basal_deadband.lower < basal_deadband.upper)) throw ConfigError("controller: basal deadband lower must be < upper");
    if (!(bolus_deadband.lower < bolus_deadband.upper)) throw ConfigError("controller: bolus deadband lower must be < upper");
    if (!(bolus_clip_threshold > bolus_deadband.upper)) {
        throw ConfigError("controller.bolus_clip_threshold must exceed the bolus deadband upper bound");
    }
    if (!(safety_threshold < target)) throw ConfigError("controller.safety_threshold must be < target");
}

ControllerParams ControllerParams::from_config(const KeyValueConfig& cfg) {
    ControllerParams p;
    p.sample_interval_min = cfg.get_double("sample_interval_min", p.sample_interval_min);
    p.u_max_basal = cfg.get_double("u_max_basal", p.u_max_basal);
    p.u_max_bolus = cfg.get_double("u_max_bolus", p.u_max_bolus);
    p.target = cfg.get_double("target", p.target);
    p.safety_threshold = cfg.get_double("safety_threshold", p.safety_threshold);
    p.meal_window_h = cfg.get_double("meal_window_h", p.meal_window_h);
    p.k_i_basal = cfg.get_double("k_i_basal", p.k_i_basal);
    p.basal_deadband.lower = cfg.get_double("basal_deadband_lower", p.basal_deadband.lower);
    p.basal_deadband.upper = cfg.get_double("basal_deadband_upper", p.basal_deadband.upper);
    p.hypo_amplification = cfg.get_double("hypo_amplification", p.hypo_amplification);
    p.k_p_ma = cfg.get_double("k_p_ma", p.k_p_ma);
    p.k_d_ma = cfg.get_double("k_d_ma", p.k_d_ma);
    p.carb_threshold = cfg.get_double("carb_threshold", p.carb_threshold);
    p.beta = cfg.get_double("beta", p.beta);
    p.k_i_bolus = cfg.get_double("k_i_bolus", p.k_i_bolus);
    p.bolus_deadband.lower = cfg.get_double("bolus_deadband_lower", p.bolus_deadband.lower);
    p.bolus_deadband.upper = cfg.get_double("bolus_deadband_upper", p.bolus_deadband.upper);
    p.bolus_clip_threshold = cfg.get_double("bolus_clip_threshold", p.bolus_clip_threshold);
    cfg.require_all_consumed();
    p.validate();
    return p;
}

KeyValueConfig ControllerParams::to_config() const {
    KeyValueConfig cfg;
    cfg.set("sample_interval_min", sample_interval_min);
    cfg.set("u_max_basal", u_max_basal);
    cfg.set("u_max_bolus", u_max_bolus);
    cfg.set("target", target);
    cfg.set("safety_threshold", safety_threshold);
    cfg.set("meal_window_h", meal_window_h);
    cfg.set("k_i_basal", k_i_basal);
    cfg.set("basal_deadband_lower", basal_deadband.lower);
    cfg.set("basal_deadband_upper", basal_deadband.upper);
    cfg.set("hypo_amplification", hypo_amplification);
    cfg.set("k_p_ma", k_p_ma);
    cfg.set("k_d_ma", k_d_ma);
    cfg.set("carb_threshold", carb_threshold);
    cfg.set("beta", beta);
    cfg.set("k_i_bolus", k_i_bolus);
    cfg.set("bolus_deadband_lower", bolus_deadband.lower);
    cfg.set("bolus_deadband_upper", bolus_deadband.upper);
    cfg.set("bolus_clip_threshold", bolus_clip_threshold);
    return cfg;
}

std::string ControllerState::serialize() const {
    std::string out(kStateTag);
    out += ' ';
    out += kStateVersion;
    for (const auto& v : {std::optional<double>(i_basal), std::optional<double>(i_bolus), prev_cgm, last_meal_time,
                          last_sample_time}) {
        out += ' ';
        out += hex_or_dash(v);
    }
    return out;
}

ControllerState ControllerState::deserialize(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::vector<std::string> tok;
    for (std::string t; in >> t;) tok.push_back(std::move(t));
    if (tok.size() != 7 || tok[0] != kStateTag) throw ConfigError("controller state: malformed snapshot");
    if (tok[1] != kStateVersion) throw ConfigError("controller state: unsupported version `" + tok[1] + "`");
    ControllerState s;
    auto ib = parse_hex(tok[2]);
    auto io = parse_hex(tok[3]);
    if (!ib || !io || *ib < 0.0 || *io < 0.0) throw ConfigError("controller state: integrators must be present and >= 0");
    s.i_basal = *ib;
    s.i_bolus = *io;
    s.prev_cgm = parse_hex(tok[4]);
    s.last_meal_time = parse_hex(tok[5]);
    s.last_sample_time = parse_hex(tok[6]);
    return s;
}

double basal_error(double y, const ControllerParams& p) {
    check_measurement(y);
    if (y > p.basal_deadband.upper) return y - p.basal_deadband.upper;
    if (y < p.basal_deadband.lower) return p.hypo_amplification * (y - p.basal_deadband.lower);
    return 0.0;
}

double bolus_error(double y, const ControllerParams& p) {
    check_measurement(y);
    if (y > p.bolus_clip_threshold) return p.bolus_clip_threshold - p.bolus_deadband.upper;
    if (y >= p.bolus_deadband.upper) return y - p.bolus_deadband.upper;
    if (y < p.bolus_deadband.lower) return p.hypo_amplification * (y - p.bolus_deadband.lower);
    return 0.0;
}

double bolus_curve(double alpha, double d_hat, const ControllerParams& p) {
    if (!std::isfinite(d_hat) || d_hat < 0.0) {
        throw InvalidAnnouncement("normalised carb flow must be finite and >= 0, got " + format_double(d_hat));
    }
    if (!std::isfinite(alpha) || alpha < 0.0) {
        throw InvalidAnnouncement("bolus factor must be finite and >= 0, got " + format_double(alpha));
    }
    if (d_hat > p.carb_threshold) {
        return alpha * p.carb_threshold + alpha / p.beta * (d_hat - p.carb_threshold);
    }
    return alpha * d_hat;
}

ControllerStep step(const ControllerState& state, const ControllerParams& p, double t, double y, double carbs,
                    double bodyweight) {
    check_measurement(y);
    if (!std::isfinite(carbs) || carbs < 0.0) {
        throw InvalidAnnouncement("announced carbohydrates must be finite and >= 0, got " + format_double(carbs));
    }
    if (!(bodyweight > 0.0) || !std::isfinite(bodyweight)) {
        throw InvalidAnnouncement("bodyweight must be > 0, got " + format_double(bodyweight));
    }
    if (!std::isfinite(t)) throw SequencingError("non-finite timestamp");
    const double ts = p.sample_interval_min;
    if (state.last_sample_time) {
        const double gap = t - *state.last_sample_time;
        if (!(gap > 0.0)) {
            throw SequencingError("timestamps must increase: " + format_double(*state.last_sample_time) + " -> " +
                                  format_double(t));
        }
        if (std::abs(gap - ts) > 1e-9 * ts) {
            throw SequencingError("sample spacing " + format_double(gap) + " min differs from the control interval");
        }
    }

    ControllerState next = state;
    if (carbs > 0.0) next.last_meal_time = t;

    const Weights w = meal_weights(next.last_meal_time, t, p);
    const double e_ba = basal_error(y, p);
    const double e_bo = bolus_error(y, p);
    update_estimates(next, w, e_ba, e_bo, p);

    const int w_ma = (y < p.target || w.w_ba == 1) ? 1 : 0;
    const double p_ma = w_ma * p.k_p_ma * (y - p.target);
    const double d_ma = state.prev_cgm ? w_ma * p.k_d_ma * (y - *state.prev_cgm) / ts : 0.0;
    const double u_nominal = next.i_basal;
    const double u_ma = p_ma + d_ma;

    double basal = 0.0;
    if (y >= p.target) {
        basal = u_nominal + u_ma;
    } else if (y > p.safety_threshold) {
        basal = u_nominal + std::min(0.0, u_ma);
    }

    const double d_hat = carbs / (bodyweight * ts);
    const double bolus = bolus_curve(next.i_bolus, d_hat, p);

    next.prev_cgm = y;
    next.last_sample_time = t;

    ControllerStep out;
    out.dose.basal_rate = clip(basal, p.u_max_basal);
    out.dose.bolus_rate = clip(bolus, p.u_max_bolus);
    out.dose.diagnostics = {w.w_ba, w_ma, w.w_bo, e_ba, e_bo, p_ma, d_ma, u_nominal};
    out.state = next;
    return out;
}

Controller::Controller(ControllerParams params, ControllerState state)
    : params_(std::move(params)), state_(std::move(state)) {
    params_.validate();
}

DoseCommand Controller::update(double t_min, double cgm, double announced_carbs_g, double bodyweight_kg) {
    auto r = step(state_, params_, t_min, cgm, announced_carbs_g, bodyweight_kg);
    state_ = r.state;
    return r.dose;
}

}  // namespace apsim
