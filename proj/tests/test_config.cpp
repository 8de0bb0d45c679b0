#include "apsim/error.hpp"
#include "apsim/kv_config.hpp"
#include "apsim/units.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <bit>
#include <random>

using namespace apsim;

TEST_CASE("parse, comments and layering") {
    auto cfg = KeyValueConfig::parse("# header\n a = 1\nb.c=2.5   # trailing\n\na = 3\n");
    CHECK(*cfg.find("a") == "3");
    CHECK(cfg.get_double("b.c", 0.0) == 2.5);
    cfg.apply_override("b.c=7");
    CHECK(cfg.get_double("b.c", 0.0) == 7.0);
    CHECK(cfg.get_int("missing", 4) == 4);

    KeyValueConfig top;
    top.set("a", "9");
    cfg.merge(top);
    CHECK(cfg.get_int("a", 0) == 9);
}

TEST_CASE("malformed input") {
    CHECK_THROWS_AS(KeyValueConfig::parse("novalue\n"), ConfigError);
    CHECK_THROWS_AS(KeyValueConfig::parse("= 3\n"), ConfigError);
    KeyValueConfig cfg;
    CHECK_THROWS_AS(cfg.apply_override("oops"), ConfigError);
    cfg.set("x", "abc");
    CHECK_THROWS_AS(cfg.get_double("x", 0.0), ConfigError);
    cfg.set("n", "-3");
    CHECK_THROWS_AS(cfg.get_uint("n", 0), ConfigError);
    cfg.set("b", "maybe");
    CHECK_THROWS_AS(cfg.get_bool("b", false), ConfigError);
}

TEST_CASE("unconsumed keys are named") {
    auto cfg = KeyValueConfig::parse("known = 1\nunknown_key = 2\n");
    (void)cfg.get_int("known", 0);
    try {
        cfg.require_all_consumed();
        FAIL("expected an error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("unknown_key") != std::string::npos);
    }
}

TEST_CASE("subtree strips the prefix") {
    auto cfg = KeyValueConfig::parse("controller.k_p_ma = 0.4\ncontroller.target = 6\npatient.vg = 0.2\n");
    const auto sub = cfg.subtree("controller");
    CHECK(sub.entries().size() == 2);
    CHECK(sub.get_double("k_p_ma", 0.0) == 0.4);
}

TEST_CASE("render parses back to the same entries") {
    KeyValueConfig cfg;
    cfg.set("z", 0.1);
    cfg.set("a.b", "text");
    cfg.set("m", 1e-300);
    const auto again = KeyValueConfig::parse(cfg.render());
    CHECK(again.entries() == cfg.entries());
}

TEST_CASE("doubles round trip through text") {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 10000; ++i) {
        const double v = std::bit_cast<double>(rng() & 0x7FEFFFFFFFFFFFFFULL);
        CHECK(parse_double(format_double(v), "v") == v);
    }
}

TEST_CASE("unit conversion") {
    using namespace apsim::units;
    CHECK(mmol_to_mgdl(1.0) == 18.016);
    CHECK(mgdl_to_mmol(mmol_to_mgdl(7.3)) == Catch::Approx(7.3).epsilon(1e-15));
}
