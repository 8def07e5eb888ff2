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

// ccmppi_sim: batch simulator for the racing scenarios.
//
//   ccmppi_sim run      --config FILE [--seed S] [--controller mppi|ccmppi] [--out DIR] [--trace]
//                       [--set key=value ...]
//   ccmppi_sim grid     --config FILE --c1 MIN:MAX:STEP --c2 MIN:MAX:STEP
//                       [--controllers mppi,ccmppi] [--seeds COUNT] [--out DIR] [--set key=value ...]
//   ccmppi_sim validate --config FILE
//
// Exit codes: 0 success, 1 run failure, 2 configuration error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ccmppi/config.hpp"
#include "ccmppi/errors.hpp"
#include "ccmppi/harness.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRunFailure = 1;
constexpr int kExitConfig = 2;

std::map<std::string, std::string> parse_sets(const std::vector<std::string>& sets) {
  std::map<std::string, std::string> out;
  for (const auto& item : sets) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ccmppi::ConfigError("--set expects key=value, got '" + item + "'");
    out[item.substr(0, eq)] = item.substr(eq + 1);
  }
  return out;
}

ccmppi::ScenarioConfig load(const std::string& path, const std::vector<std::string>& sets) {
  ccmppi::ScenarioConfig config = ccmppi::load_config(path);
  if (!sets.empty()) config = ccmppi::with_overrides(config, parse_sets(sets));
  return config;
}

void print_summary(const ccmppi::Summary& summary) {
  for (const auto& s : summary.controllers) {
    std::cout << ccmppi::to_string(s.controller) << ": runs=" << s.runs
              << " success_rate=" << s.success_rate << " mean_lap_time_s=" << s.mean_lap_time_s
              << " collisions_per_lap=" << s.collisions_per_lap << "\n";
  }
}

int run_command(const std::string& config_path, const std::vector<std::string>& sets,
                const std::string& seed, const std::string& controller, const std::string& out,
                bool trace) {
  ccmppi::ScenarioConfig config = load(config_path, sets);
  std::map<std::string, std::string> overrides;
  if (!seed.empty()) overrides["scenario.seed"] = seed;
  if (!controller.empty()) overrides["controller.type"] = controller;
  if (!overrides.empty()) config = ccmppi::with_overrides(config, overrides);

  std::ofstream trace_file;
  ccmppi::StepObserver observer;
  if (trace) {
    std::filesystem::create_directories(out);
    const auto path = std::filesystem::path(out) / "trajectory.csv";
    trace_file.open(path);
    if (!trace_file) throw std::runtime_error("cannot write '" + path.string() + "'");
    trace_file << "step,time_s,x,y,phi,v,throttle,steer,visible_obstacles,collisions\n";
    observer = [&](const ccmppi::StepRecord& r) {
      trace_file << r.step << ',' << ccmppi::format_double(r.time_s);
      for (int i = 0; i < 4; ++i) trace_file << ',' << ccmppi::format_double(r.state(i));
      trace_file << ',' << ccmppi::format_double(r.command(0)) << ','
                 << ccmppi::format_double(r.command(1)) << ',' << r.visible_obstacles << ','
                 << r.total_collisions << '\n';
    };
  }

  const ccmppi::RunMetrics metrics = ccmppi::run_scenario(config, observer);
  const std::vector<ccmppi::RunRow> rows{ccmppi::make_row(config, metrics)};
  const ccmppi::Summary summary = ccmppi::compute_aggregates(rows);
  ccmppi::emit_results(rows, summary, out, ccmppi::make_manifest(config, {config.seed}));

  for (const auto& lap : metrics.laps) {
    std::cout << "lap " << lap.index << ": " << lap.time_s << " s, " << lap.collisions
              << " collisions\n";
  }
  if (metrics.success) {
    std::cout << "success after " << metrics.sim_time_s << " s\n";
    return kExitOk;
  }
  std::cout << "failure: " << metrics.failure_reason << " at " << metrics.sim_time_s << " s\n";
  return kExitRunFailure;
}

int grid_command(const std::string& config_path, const std::vector<std::string>& sets,
                 const std::string& c1, const std::string& c2,
                 const std::vector<std::string>& controllers, int seed_count,
                 const std::string& out) {
  const ccmppi::ScenarioConfig config = load(config_path, sets);
  ccmppi::GridSpec grid;
  grid.c1 = ccmppi::parse_range(c1);
  grid.c2 = ccmppi::parse_range(c2);
  if (!controllers.empty()) {
    grid.controllers.clear();
    for (const auto& name : controllers) {
      grid.controllers.push_back(ccmppi::parse_controller_kind(name));
    }
  }
  if (seed_count < 1) throw ccmppi::ConfigError("--seeds must be at least 1");
  for (int i = 0; i < seed_count; ++i) grid.seeds.push_back(config.seed + static_cast<std::uint64_t>(i));

  const auto rows = ccmppi::run_grid_search(config, grid);
  const ccmppi::Summary summary = ccmppi::compute_aggregates(rows);
  ccmppi::emit_results(rows, summary, out, ccmppi::make_manifest(config, grid.seeds));
  print_summary(summary);
  std::cout << rows.size() << " runs written to " << out << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Batch simulator for MPPI and CC-MPPI racing experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out = "results";
  std::vector<std::string> sets;

  auto* run = app.add_subcommand("run", "Simulate one scenario");
  std::string seed;
  std::string controller;
  bool trace = false;
  run->add_option("--config", config_path, "Scenario file")->required();
  run->add_option("--seed", seed, "Override scenario.seed");
  run->add_option("--controller", controller, "Override controller.type (mppi or ccmppi)");
  run->add_option("--out", out, "Output directory");
  run->add_flag("--trace", trace, "Also write trajectory.csv");
  run->add_option("--set", sets, "Override a config key (key=value), repeatable");

  auto* grid = app.add_subcommand("grid", "Sweep (c1, c2) for each controller");
  std::string c1;
  std::string c2;
  std::vector<std::string> controllers;
  int seed_count = 1;
  grid->add_option("--config", config_path, "Scenario file")->required();
  grid->add_option("--c1", c1, "Obstacle weight range MIN:MAX:STEP")->required();
  grid->add_option("--c2", c2, "Progress weight range MIN:MAX:STEP")->required();
  grid->add_option("--controllers", controllers, "Comma-separated controller list")
      ->delimiter(',');
  grid->add_option("--seeds", seed_count, "Seeds per cell, counting up from scenario.seed");
  grid->add_option("--out", out, "Output directory");
  grid->add_option("--set", sets, "Override a config key (key=value), repeatable");

  auto* validate = app.add_subcommand("validate", "Check a scenario file and exit");
  validate->add_option("--config", config_path, "Scenario file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) return run_command(config_path, sets, seed, controller, out, trace);
    if (*grid) return grid_command(config_path, sets, c1, c2, controllers, seed_count, out);
    const auto config = ccmppi::load_config(config_path);
    std::cout << config_path << ": ok (hash " << std::hex << ccmppi::config_hash(config)
              << ")\n";
    return kExitOk;
  } catch (const ccmppi::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRunFailure;
  }
}
