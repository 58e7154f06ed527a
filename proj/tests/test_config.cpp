#include "doctest.h"

#include "selforg/config_io.hpp"
#include "selforg/errors.hpp"

using namespace selforg;
using nlohmann::json;

namespace {

std::string error_field(const json& j) {
  try {
    parse_run_config(j);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "";
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("units convert at the boundary") {
  CHECK(parse_quantity(json("30 MHz"), Quantity::kFrequency, "f") ==
        doctest::Approx(two_pi * 30e6));
  CHECK(parse_quantity(json("93 kHz"), Quantity::kFrequency, "f") ==
        doctest::Approx(two_pi * 93e3));
  CHECK(parse_quantity(json("5 us"), Quantity::kTime, "t") == doctest::Approx(5e-6));
  CHECK(parse_quantity(json("35 uK"), Quantity::kTemperature, "T") == doctest::Approx(35e-6));
  CHECK(parse_quantity(json("0.01 lambda"), Quantity::kLength, "z", 780e-9) ==
        doctest::Approx(7.8e-9));
  CHECK(parse_quantity(json(2.5), Quantity::kTime, "t") == 2.5);
  CHECK_THROWS_AS(parse_quantity(json("3 furlongs"), Quantity::kLength, "z"), ConfigError);
}

TEST_CASE("a run config survives serialization") {
  RunConfig rc;
  rc.experiment.n_atoms = 14;
  rc.experiment.rabi_peak = two_pi * 27.3e6;
  rc.experiment.tweezer_bias = 0.005 * rc.experiment.wavelength;
  rc.dynamics.heating = false;
  rc.heterodyne.shot_noise_density = 1e-3;
  rc.heterodyne.lo_drift.rate = 100.0;
  rc.analysis.averaging_time = 50e-6;
  rc.shots = 12;
  rc.seed = 99;
  const RunConfig back = parse_run_config(to_json(rc));
  CHECK(back == rc);
  CHECK(config_digest(back) == config_digest(rc));
  rc.seed = 100;
  CHECK(config_digest(back) != config_digest(rc));
}

TEST_CASE("unknown keys are errors naming their path") {
  CHECK(error_field(json{{"experiment", {{"n_atom", 3}}}}) == "experiment.n_atom");
  CHECK(error_field(json{{"analysis", {{"window", 3}}}}) == "analysis.window");
  CHECK(error_field(json{{"extra", 1}}) == "extra");
}

TEST_CASE("constraint violations name the field") {
  CHECK(error_field(json{{"experiment", {{"n_atoms", 0}}}}) == "n_atoms");
  CHECK(error_field(json{{"analysis", {{"averaging_time", "2 us"}}}}) ==
        "analysis.averaging_time");
  CHECK(error_field(json{{"experiment", {{"n_atoms", "many"}}}}) == "experiment.n_atoms");
}

TEST_CASE("sweep grid enumerates the last axis fastest") {
  const json j = {{"shots", 4},
                  {"axes", {{"n_atoms", {10, 14}}, {"rabi_peak", {"20 MHz", "25 MHz", "30 MHz"}}}}};
  const SweepSpec s = parse_sweep_spec(j);
  REQUIRE(s.size() == 6);
  CHECK(s.coordinates(1) == std::vector<std::size_t>{0, 1});
  CHECK(s.point(4).experiment.n_atoms == 14);
  CHECK(s.point(4).experiment.rabi_peak == doctest::Approx(two_pi * 25e6));
  const SweepSpec back = parse_sweep_spec(to_json(s));
  CHECK(back.size() == s.size());
  CHECK(back.point(5) == s.point(5));
}

TEST_CASE("sweep budget and axis names are enforced") {
  json j = {{"budget", 2}, {"axes", {{"n_atoms", {10, 12, 14}}}}};
  CHECK_THROWS_AS(parse_sweep_spec(j), ConfigError);
  json k = {{"axes", {{"kappa", {1, 2}}}}};
  CHECK_THROWS_AS(parse_sweep_spec(k), ConfigError);
}

}  // TEST_SUITE
