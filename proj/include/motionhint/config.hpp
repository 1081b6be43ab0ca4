#pragma once

// Run configuration shared by every subcommand, plus JSON (de)serialization of fixture suites.
// Config files are JSON objects whose keys mirror the long flag names with '_' for '-';
// unknown keys are rejected.

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "motionhint/metrics.hpp"
#include "motionhint/synth_vo.hpp"

namespace motionhint {

inline constexpr int kSchemaVersion = 1;

struct RunConfig {
  std::uint64_t seed = 1;

  // PPnet
  std::size_t window = 20;
  double gamma = 0.1;
  double k = 0.5;
  double scale_min = 0.02;
  double scale_max = 1.5;
  std::size_t epochs = 200;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  double validation_fraction = 0.1;
  bool centralize = true;
  bool scale_augment = true;
  double train_sigma_t = 0.0;  // step noise injected into training trajectories
  double train_sigma_r = 0.0;

  // Supervision
  double lambda = 1.0;
  std::size_t mlra_period = 1250;
  std::size_t mlra_max_updates = 1;
  double tau_percentile = 90.0;
  double tau = std::numeric_limits<double>::quiet_NaN();  // NaN: take it from the model metadata
  double alpha = 1.0;
  bool no_motion = false;
  bool no_uncertainty = false;

  // Refinement
  std::size_t iterations = 200;
  std::size_t segment_length = 25;
  double refine_learning_rate = 1e-3;
  double origin_floor = 1e-4;

  AlignMode align = AlignMode::kSim3;

  void validate() const;
  TrainConfig train_config() const;
  RefineConfig refine_config(double tau_value) const;
};

/// Overwrites the fields named in `j`. Throws InvalidArgumentError on unknown keys or values of
/// the wrong type.
void apply_config(RunConfig& cfg, const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);
nlohmann::json to_json(const RunConfig& cfg);

nlohmann::json fixture_to_json(const FixtureSpec& spec);
FixtureSpec fixture_from_json(const nlohmann::json& j);
nlohmann::json suite_to_json(const std::vector<FixtureSpec>& suite);
std::vector<FixtureSpec> suite_from_json(const nlohmann::json& j);
std::vector<FixtureSpec> load_suite_file(const std::string& path);

/// Reads a JSON document from disk; ParseError on malformed input.
nlohmann::json read_json_file(const std::string& path);

}  // namespace motionhint
