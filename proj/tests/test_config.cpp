#include <doctest.h>

#include <cmath>

#include "motionhint/config.hpp"

using namespace motionhint;
using nlohmann::json;

TEST_CASE("config keys override defaults") {
  RunConfig c;
  apply_config(c, json{{"window", 12}, {"lambda", 0.0}, {"align", "se3"}, {"no_motion", true}});
  CHECK(c.window == 12);
  CHECK(c.lambda == 0.0);
  CHECK(c.align == AlignMode::kSE3);
  CHECK(c.no_motion);
  CHECK(c.gamma == 0.1);
  CHECK_NOTHROW(c.validate());
  CHECK_FALSE(c.refine_config(1.0).use_motion);
}

TEST_CASE("unknown keys and bad values are rejected") {
  RunConfig c;
  CHECK_THROWS_AS(apply_config(c, json{{"windw", 12}}), InvalidArgumentError);
  CHECK_THROWS_AS(apply_config(c, json{{"window", "twelve"}}), InvalidArgumentError);
  CHECK_THROWS_AS(apply_config(c, json{{"window", -3}}), InvalidArgumentError);
  CHECK_THROWS_AS(apply_config(c, json{{"align", "affine"}}), InvalidArgumentError);
  CHECK_THROWS_AS(apply_config(c, json{{"schema_version", 7}}), InvalidArgumentError);
  CHECK_THROWS_AS(apply_config(c, json::array()), InvalidArgumentError);
  RunConfig bad;
  bad.gamma = 1.0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgumentError);
}

TEST_CASE("run config survives a JSON round trip") {
  RunConfig c;
  c.seed = (std::uint64_t{1} << 63) + 5;
  c.tau = 0.25;
  c.scale_max = 2.0;
  RunConfig d;
  apply_config(d, to_json(c));
  CHECK(d.seed == c.seed);
  CHECK(d.tau == 0.25);
  CHECK(d.scale_max == 2.0);
  // An unset threshold is written as null and read back as unset.
  RunConfig e, f;
  const json j = to_json(e);
  CHECK(j["tau"].is_null());
  json without = j;
  without.erase("tau");
  apply_config(f, without);
  CHECK(std::isnan(f.tau));
}

TEST_CASE("fixture suites round trip exactly") {
  const auto suite = standard_suite();
  const auto back = suite_from_json(json::parse(suite_to_json(suite).dump()));
  REQUIRE(back.size() == suite.size());
  for (std::size_t i = 0; i < suite.size(); ++i) {
    const Fixture a = build_fixture(suite[i]), b = build_fixture(back[i]);
    REQUIRE(a.noisy.size() == b.noisy.size());
    for (std::size_t k = 0; k < a.noisy.size(); ++k) CHECK(a.noisy[k] == b.noisy[k]);
  }
  json broken = suite_to_json(suite);
  broken["fixtures"][0]["noise"]["sigma"] = 1.0;
  CHECK_THROWS_AS(suite_from_json(broken), InvalidArgumentError);
  json negative = suite_to_json(suite);
  negative["fixtures"][0]["profile"]["segments"][0][1] = -1.0;
  CHECK_THROWS_AS(suite_from_json(negative), InvalidArgumentError);
}
