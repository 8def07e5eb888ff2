// Copyright 2026 The ccmppi Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Scenario configuration: flat "key = value" text with dotted section
// names. See docs/config.md for the schema.

#ifndef CCMPPI_CONFIG_HPP_
#define CCMPPI_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ccmppi/ccmppi.hpp"
#include "ccmppi/dynamics.hpp"
#include "ccmppi/environment.hpp"

namespace ccmppi {

enum class ControllerKind { kMppi, kCcMppi };

std::string to_string(ControllerKind kind);
ControllerKind parse_controller_kind(const std::string& name);

struct ScenarioConfig {
  std::string name = "scenario";
  int laps = 20;
  std::uint64_t seed = 1;
  double max_time = 0.0;  // s; 0 means 30 s per lap
  double stop_speed = 1e-3;
  double stop_duration = 1.0;
  double max_deviation = 1.0;

  BicycleParams vehicle;
  double v0 = 1.0;

  Track track;
  double finish_distance = 0.0;  // open tracks; 0 means the full length
  std::vector<Obstacle> obstacles;
  // Hidden until the vehicle's CoM comes within appear_distance of them.
  std::vector<Obstacle> sudden_obstacles;
  double appear_distance = 1.0;

  ControllerKind controller = ControllerKind::kCcMppi;
  CcMppiParams params;  // params.mppi holds the shared MPPI settings
  CostWeights cost;
  double v_max = 4.0;

  // Every key after defaults were applied, as canonical text.
  std::map<std::string, std::string> values;

  double lap_length() const;
  double time_limit() const { return max_time > 0.0 ? max_time : 30.0 * laps; }
};

// Throws ConfigError on unknown keys, malformed values or failed checks.
ScenarioConfig parse_config(const std::string& text);
ScenarioConfig load_config(const std::filesystem::path& path);

// Re-parses `base.values` with `overrides` applied.
ScenarioConfig with_overrides(const ScenarioConfig& base,
                              const std::map<std::string, std::string>& overrides);

std::string canonical_text(const ScenarioConfig& config);
std::uint64_t config_hash(const ScenarioConfig& config);  // FNV-1a of canonical_text

// "[a, b; c, d]", "diag(a, b)", "eye(n)", "zeros(n)", optionally "k*<form>".
Eigen::MatrixXd parse_matrix(const std::string& text);

// Shortest text that parses back to the same double.
std::string format_double(double value);

}  // namespace ccmppi

#endif  // CCMPPI_CONFIG_HPP_
