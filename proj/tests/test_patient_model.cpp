#include "apsim/error.hpp"
#include "apsim/patient_model.hpp"
#include "apsim/simulator.hpp"
#include "numerics.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace apsim;

namespace {

const Population& sampled() {
    static const Population pop = sample_population(PatientParams{}, 100, 42);
    return pop;
}

}  // namespace

TEST_CASE("steady state is a fixed point") {
    const PatientParams theta;
    const auto ss = steady_state(theta, 6.0);
    CHECK(ss.basal > 0.0);
    CHECK(numerics::steady_residual(theta) < 1e-8);
    CHECK(output(ss.state, theta) == 6.0);
    CHECK(plasma_glucose(ss.state.x, theta) == Catch::Approx(6.0).epsilon(1e-14));
    for (double g : {4.0, 6.0, 9.5, 14.0}) {
        const auto s = steady_state(theta, g);
        CHECK(plasma_glucose(s.state.x, theta) == Catch::Approx(g).epsilon(1e-14));
    }
    CHECK_THROWS_AS(steady_state(theta, 2.0), NoSteadyState);
    CHECK_THROWS_AS(steady_state(theta, 25.0), NoSteadyState);
}

TEST_CASE("input channels") {
    const PatientParams theta;
    const auto ss = steady_state(theta, 6.0);
    const auto base = derivatives(ss.state.x, {ss.basal, 0.0}, {}, theta);

    const auto fed = derivatives(ss.state.x, {ss.basal, 0.0}, {10.0, 0.0}, theta);
    CHECK(fed[kD1] > 0.0);
    CHECK(base[kD1] == 0.0);

    const auto b1 = derivatives(ss.state.x, {ss.basal, 100.0}, {}, theta);
    const auto b2 = derivatives(ss.state.x, {ss.basal, 200.0}, {}, theta);
    CHECK(b2[kS1] - b1[kS1] == Catch::Approx(100.0).margin(1e-12));
    for (std::size_t i = 0; i < kStateSize; ++i) {
        if (i != kS1) CHECK(b2[i] == b1[i]);
    }
}

TEST_CASE("sensor output") {
    const PatientParams theta;
    auto s = steady_state(theta, 6.0).state;
    s.noise = 0.5;
    CHECK(output(s, theta) == 6.5);
    s.noise = -100.0;
    CHECK(output(s, theta) == kCgmFloor);
    s.noise = 100.0;
    CHECK(output(s, theta) == kCgmCeiling);
}

TEST_CASE("sensor reading rises with accessible glucose") {
    const auto theta = numerics::noise_free(PatientParams{});
    const auto ss = steady_state(theta, 6.0);
    double prev = -1.0;
    for (int i = 0; i <= 40; ++i) {
        auto s = ss.state;
        s.x[kQ1] *= 0.6 + 0.02 * i;
        CounterStream noise(0, 0);
        const double z = output(advance(s, {ss.basal, 0.0}, {}, theta, 5.0, noise).state, theta);
        CHECK(z > prev);
        prev = z;
    }
}

TEST_CASE("insulin-free fixed point") {
    const PatientParams theta;
    const auto x = insulin_free_steady_state(theta);
    const double g = 9.0 + (0.0161 - 0.0097) / (0.003 * 0.16);
    CHECK(plasma_glucose(x.x, theta) == Catch::Approx(g).epsilon(1e-12));
    CHECK(output(x, theta) > 6.0);
    const auto f = derivatives(x.x, {0.0, 0.0}, {}, theta);
    for (double v : f) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("equilibrium and step halving") {
    const PatientParams theta;
    CHECK(numerics::equilibrium_drift(theta, 24.0) < 1e-6);
    CHECK(numerics::halving_change(theta) < 1e-4);
    CHECK(numerics::convergence_ratio(theta) >= 8.0);
}

TEST_CASE("glucose rises without insulin") {
    const auto z = numerics::response(PatientParams{}, 0.0, 0.0, 2.0, 0.5, 0.0);
    for (std::size_t k = 1; k < z.size(); ++k) CHECK(z[k] > z[k - 1]);
}

TEST_CASE("response signs across sampled subjects") {
    for (const auto& theta : sampled().subjects) {
        CHECK(numerics::steady_residual(theta) < 1e-8);
        const auto dosed = numerics::response(theta, 0.0, 1000.0, 3.0, 0.5);
        const auto idle = numerics::response(theta, 0.0, 0.0, 3.0, 0.5);
        CHECK(dosed.back() < idle.back());
        const auto meal = numerics::response(theta, 50.0, 0.0, 12.0, 0.5);
        const auto none = numerics::response(theta, 0.0, 0.0, 12.0, 0.5);
        CHECK(*std::max_element(meal.begin(), meal.end()) > *std::max_element(none.begin(), none.end()));
    }
}

TEST_CASE("steady basal positive for sampled subjects") {
    const auto pop = sample_population(PatientParams{}, 1000, 9);
    for (const auto& theta : pop.subjects) CHECK(steady_state(theta, 6.0).basal > 0.0);
    // the viability screen should rarely be the reason for a redraw
    std::size_t nonviable = 0;
    for (const auto& r : pop.rejections) nonviable += r.reason.starts_with("no steady state");
    CHECK(nonviable < 30);
}

TEST_CASE("negative components are clamped and flagged") {
    const PatientParams theta;
    auto s = steady_state(theta, 6.0).state;
    s.x[kD1] = -1.0;
    CounterStream noise(0, 0);
    const auto r = advance(s, {}, {}, theta, 5.0, noise);
    CHECK(r.clamp_mask & (1u << kD1));
    for (double v : r.state.x) CHECK(v >= 0.0);
}

TEST_CASE("non-finite state diverges") {
    const PatientParams theta;
    auto s = steady_state(theta, 6.0).state;
    s.x[kQ1] = std::numeric_limits<double>::infinity();
    CounterStream noise(0, 0);
    CHECK_THROWS_AS(advance(s, {}, {}, theta, 5.0, noise), DivergenceError);
}

TEST_CASE("sensor noise") {
    PatientParams theta;
    const auto ss = steady_state(theta, 6.0);

    SECTION("reproducible from the stream position") {
        CounterStream a(17, 3), b(17, 3);
        auto xa = ss.state, xb = ss.state;
        for (int k = 0; k < 50; ++k) {
            xa = advance(xa, {ss.basal, 0.0}, {}, theta, 5.0, a).state;
            xb = advance(xb, {ss.basal, 0.0}, {}, theta, 5.0, b).state;
        }
        CHECK(xa == xb);
    }
    SECTION("stationary spread and lag-one correlation") {
        CounterStream rng(5, 0);
        auto x = ss.state;
        double s1 = 0.0, s2 = 0.0, lag = 0.0, prev = 0.0;
        const int n = 100000;
        for (int k = 0; k < n; ++k) {
            x = advance(x, {ss.basal, 0.0}, {}, theta, 5.0, rng).state;
            s1 += x.noise;
            s2 += x.noise * x.noise;
            lag += x.noise * prev;
            prev = x.noise;
        }
        const double var = s2 / n - (s1 / n) * (s1 / n);
        CHECK(std::sqrt(var) == Catch::Approx(0.2).epsilon(0.03));
        CHECK(lag / n / var == Catch::Approx(0.8).margin(0.02));
    }
    SECTION("zero spread is exactly noise-free") {
        theta.cgm.noise_sd = 0.0;
        CounterStream rng(5, 0);
        auto x = ss.state;
        for (int k = 0; k < 20; ++k) x = advance(x, {ss.basal, 0.0}, {}, theta, 5.0, rng).state;
        CHECK(x.noise == 0.0);
        CHECK(output(x, theta) == 6.0);
    }
}

TEST_CASE("exercise hook") {
    const auto theta = numerics::noise_free(PatientParams{});
    const auto ss = steady_state(theta, 6.0);
    auto run = [&](double intensity, ExerciseHook hook) {
        CounterStream rng(0, 0);
        AdvanceOptions opt;
        opt.hook = hook;
        auto x = ss.state;
        for (int k = 0; k < 12; ++k) x = advance(x, {ss.basal, 0.0}, {0.0, intensity}, theta, 5.0, rng, opt).state;
        return plasma_glucose(x.x, theta);
    };
    CHECK(run(0.5, default_exercise_effect) < run(0.0, default_exercise_effect));
    const ExerciseHook neutral = [](double, const ExerciseParams&) { return ExerciseEffect{}; };
    CHECK(run(0.5, neutral) == run(0.0, default_exercise_effect));
    const auto e = default_exercise_effect(0.5, theta.exercise);
    CHECK(e.uptake_factor == 1.5);
    CHECK(e.sensitivity_factor == 1.25);
}

TEST_CASE("parameter config round trip") {
    PatientParams p;
    p.bodyweight = 81.5;
    p.hovorka.s_it = 3.3e-3;
    p.cgm.noise_ar = 0.5;
    p.rng_seed = 123456789012345ULL;
    const auto q = PatientParams::from_config(p.to_config());
    CHECK(q.bodyweight == 81.5);
    CHECK(q.hovorka.s_it == 3.3e-3);
    CHECK(q.cgm.noise_ar == 0.5);
    CHECK(q.rng_seed == p.rng_seed);

    PatientParams bad;
    bad.hovorka.tmax_g = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}
