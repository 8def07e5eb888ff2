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

#ifndef CCMPPI_HARNESS_HPP_
#define CCMPPI_HARNESS_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ccmppi/config.hpp"

namespace ccmppi {

struct LapRecord {
  int index = 0;  // 1-based
  double time_s = 0.0;
  int collisions = 0;
};

struct RunMetrics {
  std::vector<LapRecord> laps;
  int total_collisions = 0;
  double sim_time_s = 0.0;
  int steps = 0;
  bool success = false;
  std::string failure_reason;  // empty iff success
  int soft_fallbacks = 0;      // iterations where the hard gain solve failed

  int laps_completed() const { return static_cast<int>(laps.size()); }
  // NaN when no lap completed.
  double avg_lap_time_s() const;
  double collisions_per_lap() const;
};

struct StepRecord {
  int step = 0;
  double time_s = 0.0;
  Eigen::Vector4d state = Eigen::Vector4d::Zero();  // after the step
  Eigen::Vector2d command = Eigen::Vector2d::Zero();
  int visible_obstacles = 0;
  int total_collisions = 0;
};

using StepObserver = std::function<void(const StepRecord&)>;

RunMetrics run_scenario(const ScenarioConfig& config, const StepObserver& observer = {});

struct RunRow {
  ControllerKind controller = ControllerKind::kCcMppi;
  double c1 = 0.0;
  double c2 = 0.0;
  std::uint64_t seed = 0;
  int laps_completed = 0;
  double avg_lap_time_s = 0.0;      // NaN when laps_completed == 0
  double collisions_per_lap = 0.0;  // NaN when laps_completed == 0
  bool success = false;
  std::string failure_reason;

  bool operator==(const RunRow& other) const;
};

RunRow make_row(const ScenarioConfig& config, const RunMetrics& metrics);

struct GridSpec {
  std::vector<double> c1;
  std::vector<double> c2;
  std::vector<ControllerKind> controllers{ControllerKind::kMppi, ControllerKind::kCcMppi};
  std::vector<std::uint64_t> seeds;  // empty: the config seed only
  int workers = 0;                   // 0: SIM_WORKERS, else hardware threads
};

// "MIN:MAX:STEP", both ends inclusive. A bare number is a one-point range.
std::vector<double> parse_range(const std::string& text);

// Rows come back sorted by (controller, c1, c2, seed).
std::vector<RunRow> run_grid_search(const ScenarioConfig& base, const GridSpec& grid);

// SIM_WORKERS if set, else the number of hardware threads.
int workers_from_env();

struct ControllerSummary {
  ControllerKind controller = ControllerKind::kCcMppi;
  int runs = 0;
  int successes = 0;
  int laps_completed = 0;
  double success_rate = 0.0;
  double mean_lap_time_s = 0.0;      // lap-weighted over completed laps; NaN if none
  double collisions_per_lap = 0.0;   // lap-weighted; NaN if none
};

struct Summary {
  std::vector<ControllerSummary> controllers;  // sorted by controller
};

// Throws ValidationError on empty input.
Summary compute_aggregates(const std::vector<RunRow>& rows);

struct Manifest {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds;
  std::string scenario;
  std::string version;
  std::string generated_at;  // the only field that changes between identical runs
};

Manifest make_manifest(const ScenarioConfig& config, const std::vector<std::uint64_t>& seeds);

inline constexpr const char* kRunsCsvHeader =
    "controller,c1,c2,seed,laps_completed,avg_lap_time_s,collisions_per_lap,success,"
    "failure_reason";

std::string rows_to_csv(const std::vector<RunRow>& rows);
std::vector<RunRow> rows_from_csv(const std::string& text);
std::vector<RunRow> read_rows_csv(const std::filesystem::path& path);

std::string summary_to_json(const Summary& summary);
std::string scatter_to_csv(const std::vector<RunRow>& rows);
std::string manifest_to_json(const Manifest& manifest);

// Writes runs.csv, summary.json, scatter.csv and manifest.json into out_dir
// (created if missing). Throws std::runtime_error naming the failing path.
void emit_results(const std::vector<RunRow>& rows, const Summary& summary,
                  const std::filesystem::path& out_dir, const Manifest& manifest);

}  // namespace ccmppi

#endif  // CCMPPI_HARNESS_HPP_
