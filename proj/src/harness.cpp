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

#include "ccmppi/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <tuple>

#include <nlohmann/json.hpp>

#include "ccmppi/ccmppi.hpp"
#include "ccmppi/errors.hpp"
#include "ccmppi/mppi.hpp"
#include "ccmppi/parallel.hpp"
#include "ccmppi/version.hpp"

namespace ccmppi {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool same_double(double a, double b) {
  return (std::isnan(a) && std::isnan(b)) || a == b;
}

// Keeps the CSV single-line and comma-free.
std::string sanitize(std::string text) {
  for (char& c : text) {
    if (c == ',') c = ';';
    if (c == '\n' || c == '\r' || c == '"') c = ' ';
  }
  return text;
}

struct ObstacleSlot {
  Obstacle obstacle;
  bool sudden = false;
  bool visible = false;
  bool inside = false;
};

}  // namespace

double RunMetrics::avg_lap_time_s() const {
  if (laps.empty()) return kNaN;
  double total = 0.0;
  for (const auto& lap : laps) total += lap.time_s;
  return total / static_cast<double>(laps.size());
}

double RunMetrics::collisions_per_lap() const {
  if (laps.empty()) return kNaN;
  return static_cast<double>(total_collisions) / static_cast<double>(laps.size());
}

RunMetrics run_scenario(const ScenarioConfig& config, const StepObserver& observer) {
  const BicycleModel plant(config.vehicle);
  const Track& track = config.track;
  const double dt = config.vehicle.dt;
  const double lap_length = config.lap_length();
  const int N = config.params.mppi.N;

  std::vector<ObstacleSlot> slots;
  for (const auto& o : config.obstacles) slots.push_back({o, false, true, false});
  for (const auto& o : config.sudden_obstacles) slots.push_back({o, true, false, false});

  const Eigen::Vector2d start = track.point_at(0.0);
  Eigen::Vector4d x(start.x(), start.y(), track.heading_at(0.0), config.v0);
  ControlSequence mean = ControlSequence::Zero(2, N);
  CcMppiParams cc_params = config.params;

  RunMetrics metrics;
  double s_prev = progress(track, x.head<2>());
  double travelled = 0.0;
  double lap_start_time = 0.0;
  int lap_collisions = 0;
  double slow_time = 0.0;

  const auto fail = [&](std::string reason) {
    metrics.success = false;
    metrics.failure_reason = std::move(reason);
  };

  for (int step = 0;; ++step) {
    const double time = step * dt;
    if (metrics.laps_completed() >= config.laps) {
      metrics.success = true;
      break;
    }
    if (time >= config.time_limit() - 1e-9) {
      fail("timeout");
      break;
    }

    const Eigen::Vector2d pos = x.head<2>();
    std::vector<Obstacle> visible;
    for (auto& slot : slots) {
      if (slot.sudden && !slot.visible &&
          (slot.obstacle.center - pos).norm() <= config.appear_distance) {
        slot.visible = true;
      }
      if (slot.visible) visible.push_back(slot.obstacle);
    }
    const int visible_count = static_cast<int>(visible.size());

    Eigen::Vector2d command;
    try {
      const CostModel cost = make_race_cost(track, std::move(visible), config.cost, pos);
      const std::uint64_t iteration = static_cast<std::uint64_t>(step);
      if (config.controller == ControllerKind::kMppi) {
        auto result = mppi_iteration(x, mean, config.params.mppi, cost, plant, config.seed,
                                     iteration);
        mean = std::move(result.mean);
      } else {
        auto result = ccmppi_iteration(x, mean, cc_params, cost, plant, config.seed, iteration);
        const auto& diag = result.diagnostics;
        if (diag.fell_back_to_soft) ++metrics.soft_fallbacks;
        cc_params.solver.mu_hint = diag.fell_back_to_soft ? 0.0 : diag.penalty_mu;
        mean = std::move(result.mean);
      }
      command = mean.col(0);
    } catch (const std::exception& e) {
      fail(std::string("controller_error: ") + e.what());
      break;
    }

    try {
      Eigen::Vector4d next;
      plant.step(x, command, next);
      x = next;
    } catch (const std::exception& e) {
      fail(std::string("plant_error: ") + e.what());
      break;
    }
    mean = receding_horizon_shift(mean);
    ++metrics.steps;
    const double now = (step + 1) * dt;
    metrics.sim_time_s = now;

    for (auto& slot : slots) {
      if (!slot.visible) continue;
      const bool inside = (x.head<2>() - slot.obstacle.center).norm() <= slot.obstacle.radius;
      if (inside && !slot.inside) {
        ++metrics.total_collisions;
        ++lap_collisions;
      }
      slot.inside = inside;
    }

    const double s = progress(track, x.head<2>());
    travelled += track.progress_delta(s_prev, s);
    s_prev = s;
    while (metrics.laps_completed() < config.laps &&
           travelled >= lap_length * (metrics.laps_completed() + 1)) {
      metrics.laps.push_back({metrics.laps_completed() + 1, now - lap_start_time, lap_collisions});
      lap_start_time = now;
      lap_collisions = 0;
    }

    if (observer) {
      observer({step, now, x, command, visible_count, metrics.total_collisions});
    }

    if (metrics.laps_completed() >= config.laps) continue;
    if (lateral_deviation(track, x.head<2>()) > config.max_deviation) {
      fail("off_track");
      break;
    }
    slow_time = std::abs(x(3)) < config.stop_speed ? slow_time + dt : 0.0;
    if (slow_time >= config.stop_duration - 1e-9) {
      fail("stopped");
      break;
    }
  }
  return metrics;
}

bool RunRow::operator==(const RunRow& o) const {
  return controller == o.controller && same_double(c1, o.c1) && same_double(c2, o.c2) &&
         seed == o.seed && laps_completed == o.laps_completed &&
         same_double(avg_lap_time_s, o.avg_lap_time_s) &&
         same_double(collisions_per_lap, o.collisions_per_lap) && success == o.success &&
         failure_reason == o.failure_reason;
}

RunRow make_row(const ScenarioConfig& config, const RunMetrics& metrics) {
  RunRow row;
  row.controller = config.controller;
  row.c1 = config.cost.c1;
  row.c2 = config.cost.c2;
  row.seed = config.seed;
  row.laps_completed = metrics.laps_completed();
  row.avg_lap_time_s = metrics.avg_lap_time_s();
  row.collisions_per_lap = metrics.collisions_per_lap();
  row.success = metrics.success;
  row.failure_reason = sanitize(metrics.failure_reason);
  return row;
}

std::vector<double> parse_range(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream in(text);
  std::string part;
  while (std::getline(in, part, ':')) parts.push_back(part);
  const auto number = [&](const std::string& t) {
    try {
      return parse_matrix(t)(0, 0);
    } catch (const std::exception&) {
      throw ConfigError("bad range '" + text + "' (expected MIN:MAX:STEP)");
    }
  };
  if (parts.size() == 1) return {number(parts[0])};
  if (parts.size() != 3) throw ConfigError("bad range '" + text + "' (expected MIN:MAX:STEP)");
  const double lo = number(parts[0]);
  const double hi = number(parts[1]);
  const double step = number(parts[2]);
  if (!(step > 0.0) || !(hi >= lo) || !std::isfinite(hi) || !std::isfinite(lo)) {
    throw ConfigError("bad range '" + text + "' (need MIN <= MAX and STEP > 0)");
  }
  const double span = (hi - lo) / step;
  const long count = static_cast<long>(std::floor(span + 1e-9)) + 1;
  if (count > 100000) throw ConfigError("range '" + text + "' has too many points");
  std::vector<double> values;
  for (long i = 0; i < count; ++i) {
    // Snap to 12 significant digits so 1.65 + 2 * 0.33 prints as 2.31.
    const double v = lo + static_cast<double>(i) * step;
    std::ostringstream os;
    os << std::setprecision(12) << v;
    values.push_back(std::stod(os.str()));
  }
  return values;
}

int workers_from_env() {
  const char* env = std::getenv("SIM_WORKERS");
  if (env == nullptr || *env == '\0') return hardware_workers();
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1 || v > 4096) {
    throw ConfigError(std::string("SIM_WORKERS must be a positive integer, got '") + env + "'");
  }
  return static_cast<int>(v);
}

std::vector<RunRow> run_grid_search(const ScenarioConfig& base, const GridSpec& grid) {
  if (grid.c1.empty() || grid.c2.empty() || grid.controllers.empty()) {
    throw ValidationError("grid ranges and controller list must be non-empty");
  }
  std::vector<std::uint64_t> seeds = grid.seeds.empty()
                                         ? std::vector<std::uint64_t>{base.seed}
                                         : grid.seeds;
  std::vector<ControllerKind> controllers = grid.controllers;
  std::vector<double> c1 = grid.c1;
  std::vector<double> c2 = grid.c2;
  const auto dedupe = [](auto& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  dedupe(seeds);
  dedupe(controllers);
  dedupe(c1);
  dedupe(c2);

  std::vector<ScenarioConfig> jobs;
  for (const auto kind : controllers) {
    for (const double a : c1) {
      for (const double b : c2) {
        for (const auto seed : seeds) {
          jobs.push_back(with_overrides(base, {{"controller.type", to_string(kind)},
                                               {"cost.c1", format_double(a)},
                                               {"cost.c2", format_double(b)},
                                               {"scenario.seed", std::to_string(seed)}}));
        }
      }
    }
  }

  std::vector<RunRow> rows(jobs.size());
  const int workers = grid.workers > 0 ? grid.workers : workers_from_env();
  parallel_for(static_cast<int>(jobs.size()), workers, [&](int i) {
    rows[static_cast<std::size_t>(i)] = make_row(jobs[static_cast<std::size_t>(i)],
                                                 run_scenario(jobs[static_cast<std::size_t>(i)]));
  });
  std::sort(rows.begin(), rows.end(), [](const RunRow& a, const RunRow& b) {
    return std::tie(a.controller, a.c1, a.c2, a.seed) < std::tie(b.controller, b.c1, b.c2, b.seed);
  });
  return rows;
}

Summary compute_aggregates(const std::vector<RunRow>& rows) {
  if (rows.empty()) throw ValidationError("compute_aggregates needs at least one row");
  struct Acc {
    int runs = 0, successes = 0, laps = 0;
    double lap_time = 0.0, collisions = 0.0;
  };
  std::map<ControllerKind, Acc> acc;
  for (const auto& r : rows) {
    Acc& a = acc[r.controller];
    ++a.runs;
    if (r.success) ++a.successes;
    if (r.laps_completed > 0) {
      a.laps += r.laps_completed;
      a.lap_time += r.avg_lap_time_s * r.laps_completed;
      a.collisions += r.collisions_per_lap * r.laps_completed;
    }
  }
  Summary summary;
  for (const auto& [kind, a] : acc) {
    ControllerSummary s;
    s.controller = kind;
    s.runs = a.runs;
    s.successes = a.successes;
    s.laps_completed = a.laps;
    s.success_rate = static_cast<double>(a.successes) / a.runs;
    s.mean_lap_time_s = a.laps > 0 ? a.lap_time / a.laps : kNaN;
    s.collisions_per_lap = a.laps > 0 ? a.collisions / a.laps : kNaN;
    summary.controllers.push_back(s);
  }
  return summary;
}

Manifest make_manifest(const ScenarioConfig& config, const std::vector<std::uint64_t>& seeds) {
  Manifest m;
  m.config_hash = config_hash(config);
  m.seed = config.seed;
  m.seeds = seeds.empty() ? std::vector<std::uint64_t>{config.seed} : seeds;
  m.scenario = config.name;
  m.version = kVersion;
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&now, &utc);
  std::ostringstream os;
  os << std::put_time(&utc, "%Y-%m-%dT%H:%M:%SZ");
  m.generated_at = os.str();
  return m;
}

std::string rows_to_csv(const std::vector<RunRow>& rows) {
  const auto num = [](double v) { return std::isnan(v) ? std::string() : format_double(v); };
  std::string out = std::string(kRunsCsvHeader) + "\n";
  for (const auto& r : rows) {
    out += to_string(r.controller) + "," + format_double(r.c1) + "," + format_double(r.c2) + "," +
           std::to_string(r.seed) + "," + std::to_string(r.laps_completed) + "," +
           num(r.avg_lap_time_s) + "," + num(r.collisions_per_lap) + "," +
           (r.success ? "true" : "false") + "," + sanitize(r.failure_reason) + "\n";
  }
  return out;
}

std::vector<RunRow> rows_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kRunsCsvHeader) {
    throw ValidationError("runs CSV: missing or unexpected header");
  }
  const auto num = [](const std::string& t) {
    return t.empty() ? kNaN : parse_matrix(t)(0, 0);
  };
  std::vector<RunRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string field;
    while (std::getline(ls, field, ',')) f.push_back(field);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 9) {
      throw ValidationError("runs CSV line " + std::to_string(line_no) + ": expected 9 fields");
    }
    try {
      RunRow r;
      r.controller = parse_controller_kind(f[0]);
      r.c1 = num(f[1]);
      r.c2 = num(f[2]);
      r.seed = std::stoull(f[3]);
      r.laps_completed = std::stoi(f[4]);
      r.avg_lap_time_s = num(f[5]);
      r.collisions_per_lap = num(f[6]);
      if (f[7] != "true" && f[7] != "false") throw ValidationError("bad success flag");
      r.success = f[7] == "true";
      r.failure_reason = f[8];
      rows.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw ValidationError("runs CSV line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rows;
}

std::vector<RunRow> read_rows_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return rows_from_csv(buffer.str());
}

std::string summary_to_json(const Summary& summary) {
  nlohmann::ordered_json doc;
  doc["controllers"] = nlohmann::ordered_json::array();
  const auto num = [](double v) { return std::isnan(v) ? nlohmann::ordered_json() : nlohmann::ordered_json(v); };
  for (const auto& s : summary.controllers) {
    nlohmann::ordered_json c;
    c["controller"] = to_string(s.controller);
    c["runs"] = s.runs;
    c["successes"] = s.successes;
    c["success_rate"] = s.success_rate;
    c["laps_completed"] = s.laps_completed;
    c["mean_lap_time_s"] = num(s.mean_lap_time_s);
    c["collisions_per_lap"] = num(s.collisions_per_lap);
    doc["controllers"].push_back(std::move(c));
  }
  return doc.dump(2) + "\n";
}

std::string scatter_to_csv(const std::vector<RunRow>& rows) {
  std::string out = "controller,c1,c2,seed,lap_time_s,collisions_per_lap\n";
  for (const auto& r : rows) {
    if (r.laps_completed == 0) continue;
    out += to_string(r.controller) + "," + format_double(r.c1) + "," + format_double(r.c2) + "," +
           std::to_string(r.seed) + "," + format_double(r.avg_lap_time_s) + "," +
           format_double(r.collisions_per_lap) + "\n";
  }
  return out;
}

std::string manifest_to_json(const Manifest& m) {
  std::ostringstream hash;
  hash << std::hex << std::setw(16) << std::setfill('0') << m.config_hash;
  nlohmann::ordered_json doc;
  doc["scenario"] = m.scenario;
  doc["config_hash"] = hash.str();
  doc["seed"] = m.seed;
  doc["seeds"] = m.seeds;
  doc["library_version"] = m.version;
  doc["generated_at"] = m.generated_at;
  return doc.dump(2) + "\n";
}

void emit_results(const std::vector<RunRow>& rows, const Summary& summary,
                  const std::filesystem::path& out_dir, const Manifest& manifest) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) {
    throw std::runtime_error("cannot create '" + out_dir.string() + "': " + ec.message());
  }
  const auto write = [&](const char* name, const std::string& content) {
    const auto path = out_dir / name;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  };
  write("runs.csv", rows_to_csv(rows));
  write("summary.json", summary_to_json(summary));
  write("scatter.csv", scatter_to_csv(rows));
  write("manifest.json", manifest_to_json(manifest));
}

}  // namespace ccmppi
