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

#include "ccmppi/config.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string_view>

#include "ccmppi/errors.hpp"

namespace ccmppi {
namespace {

constexpr std::string_view kNone = "none";

// Every accepted key with its default text. Empty default means required.
const std::map<std::string, std::string>& schema() {
  static const std::map<std::string, std::string> table = {
      {"scenario.name", "scenario"},
      {"scenario.laps", "20"},
      {"scenario.seed", "1"},
      {"scenario.max_time", "0"},
      {"scenario.stop_speed", "0.001"},
      {"scenario.stop_duration", "1"},
      {"scenario.max_deviation", "1"},
      {"vehicle.l_f", "0.15"},
      {"vehicle.l_r", "0.15"},
      {"vehicle.dt", "0.02"},
      {"vehicle.v0", "1"},
      {"vehicle.v_min", "-inf"},
      {"vehicle.u_min", "[-10, -1.2]"},
      {"vehicle.u_max", "[10, 1.2]"},
      {"track.segments", ""},
      {"track.width", "0.6"},
      {"track.closed", "true"},
      {"track.start", "[0, 0]"},
      {"track.heading_deg", "0"},
      {"track.finish", "0"},
      {"obstacles.static", "none"},
      {"obstacles.sudden", "none"},
      {"obstacles.appear_distance", "1"},
      {"controller.type", "ccmppi"},
      {"controller.N", "15"},
      {"controller.M", "4096"},
      {"controller.lambda", "1"},
      {"controller.alpha", "0.2"},
      {"controller.nu", "inf"},
      {"controller.R", "0.01*eye(2)"},
      {"controller.workers", "1"},
      {"noise.sigma_eps", "diag(0.49, 0.12)"},
      {"ccmppi.sigma_f", "none"},
      {"ccmppi.sigma_f_scale", "0.5"},
      {"ccmppi.Q", "zeros(4)"},
      {"ccmppi.Q_f", "eye(4)"},
      {"ccmppi.R", "none"},
      {"ccmppi.gain_mode", "hard"},
      {"ccmppi.feasibility_tol", "1e-6"},
      {"ccmppi.bisection_steps", "40"},
      {"ccmppi.polish_iterations", "20"},
      {"ccmppi.mu_rel_tol", "0.001"},
      {"cost.c1", "712.5"},
      {"cost.c2", "3.3"},
      {"cost.obstacle_mode", "continuous"},
      {"cost.progress_mode", "normalized"},
      {"cost.v_max", "4"},
  };
  return table;
}

std::string trim(std::string_view s) {
  const auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return std::string(s);
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t begin = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.push_back(trim(s.substr(begin, i - begin)));
      begin = i + 1;
    }
  }
  return out;
}

double parse_number(std::string_view text) {
  const std::string t = trim(text);
  std::string_view body = t;
  if (!body.empty() && body.front() == '+') body.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), value);
  if (body.empty() || ec != std::errc() || ptr != body.data() + body.size()) {
    throw ConfigError("not a number: '" + t + "'");
  }
  return value;
}

int parse_count(std::string_view text) {
  const double v = parse_number(text);
  if (v != std::floor(v) || std::abs(v) > std::numeric_limits<int>::max()) {
    throw ConfigError("not an integer: '" + std::string(text) + "'");
  }
  return static_cast<int>(v);
}

class Reader {
 public:
  explicit Reader(const std::map<std::string, std::string>& values) : values_(values) {}

  const std::string& text(const std::string& key) const { return values_.at(key); }

  template <typename Fn>
  auto with_key(const std::string& key, Fn&& fn) const {
    try {
      return fn(text(key));
    } catch (const ConfigError& e) {
      throw ConfigError(key + ": " + e.what());
    } catch (const std::exception& e) {
      throw ConfigError(key + ": " + e.what());
    }
  }

  double number(const std::string& key) const {
    return with_key(key, [](const std::string& t) { return parse_number(t); });
  }
  int integer(const std::string& key) const {
    return with_key(key, [](const std::string& t) { return parse_count(t); });
  }
  bool boolean(const std::string& key) const {
    return with_key(key, [](const std::string& t) {
      if (t == "true" || t == "1" || t == "yes") return true;
      if (t == "false" || t == "0" || t == "no") return false;
      throw ConfigError("expected true or false, got '" + t + "'");
    });
  }
  // Runs a validation that spans several keys under `label`.
  template <typename Fn>
  void check(const std::string& label, Fn&& fn) const {
    try {
      fn();
    } catch (const std::exception& e) {
      throw ConfigError(label + ": " + e.what());
    }
  }

  bool is_none(const std::string& key) const { return text(key) == kNone; }
  Eigen::MatrixXd matrix(const std::string& key) const {
    return with_key(key, [](const std::string& t) { return parse_matrix(t); });
  }
  Eigen::VectorXd vector(const std::string& key, int size) const {
    return with_key(key, [size](const std::string& t) {
      const Eigen::MatrixXd m = parse_matrix(t);
      if (m.size() != size || (m.rows() != 1 && m.cols() != 1)) {
        throw ConfigError("expected a vector of length " + std::to_string(size));
      }
      return Eigen::VectorXd(m.reshaped());
    });
  }
  std::vector<Obstacle> obstacles(const std::string& key) const {
    if (is_none(key)) return {};
    return with_key(key, [](const std::string& t) {
      const Eigen::MatrixXd m = parse_matrix(t);
      if (m.cols() != 3) throw ConfigError("obstacle rows are 'x y r'");
      std::vector<Obstacle> out;
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        if (!(m(i, 2) > 0.0)) throw ConfigError("obstacle radius must be positive");
        out.push_back({Eigen::Vector2d(m(i, 0), m(i, 1)), m(i, 2)});
      }
      return out;
    });
  }

 private:
  const std::map<std::string, std::string>& values_;
};

void require(bool ok, const std::string& key, const std::string& message) {
  if (!ok) throw ConfigError(key + ": " + message);
}

ScenarioConfig build(std::map<std::string, std::string> values) {
  for (const auto& [key, def] : schema()) {
    auto it = values.find(key);
    if (it == values.end()) {
      if (def.empty()) throw ConfigError(key + ": required key is missing");
      values.emplace(key, def);
    }
  }
  const Reader r(values);
  ScenarioConfig c;

  c.name = r.text("scenario.name");
  c.laps = r.integer("scenario.laps");
  require(c.laps >= 1, "scenario.laps", "must be at least 1");
  c.seed = r.with_key("scenario.seed", [](const std::string& t) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
      throw ConfigError("expected an unsigned 64-bit integer, got '" + t + "'");
    }
    return v;
  });
  c.max_time = r.number("scenario.max_time");
  require(c.max_time >= 0.0, "scenario.max_time", "must be non-negative");
  c.stop_speed = r.number("scenario.stop_speed");
  c.stop_duration = r.number("scenario.stop_duration");
  require(c.stop_duration > 0.0, "scenario.stop_duration", "must be positive");
  c.max_deviation = r.number("scenario.max_deviation");
  require(c.max_deviation > 0.0, "scenario.max_deviation", "must be positive");

  c.vehicle.l_f = r.number("vehicle.l_f");
  c.vehicle.l_r = r.number("vehicle.l_r");
  c.vehicle.dt = r.number("vehicle.dt");
  c.vehicle.v_min = r.number("vehicle.v_min");
  r.check("vehicle", [&] { c.vehicle.validate(); });
  c.v0 = r.number("vehicle.v0");
  require(std::isfinite(c.v0), "vehicle.v0", "must be finite");

  auto& mp = c.params.mppi;
  if (!r.is_none("vehicle.u_min")) mp.u_min = r.vector("vehicle.u_min", 2);
  if (!r.is_none("vehicle.u_max")) mp.u_max = r.vector("vehicle.u_max", 2);
  require(mp.u_min.size() == mp.u_max.size(), "vehicle.u_max",
          "u_min and u_max must both be set or both be none");

  const auto pieces = r.with_key("track.segments", [](const std::string& t) {
    return Track::parse_pieces(t);
  });
  const double width = r.number("track.width");
  require(width > 0.0, "track.width", "must be positive");
  const bool closed = r.boolean("track.closed");
  const Eigen::Vector2d start = r.vector("track.start", 2);
  const double heading = r.number("track.heading_deg") * M_PI / 180.0;
  c.track = r.with_key("track.segments", [&](const std::string&) {
    return Track::build(start, heading, pieces, width, closed);
  });
  c.finish_distance = r.number("track.finish");
  require(c.finish_distance >= 0.0 && c.finish_distance <= c.track.total_length(),
          "track.finish", "must lie in [0, track length]");

  c.obstacles = r.obstacles("obstacles.static");
  c.sudden_obstacles = r.obstacles("obstacles.sudden");
  c.appear_distance = r.number("obstacles.appear_distance");
  require(c.appear_distance >= 0.0, "obstacles.appear_distance", "must be non-negative");

  c.controller = r.with_key("controller.type", [](const std::string& t) {
    return parse_controller_kind(t);
  });
  mp.N = r.integer("controller.N");
  mp.M = r.integer("controller.M");
  mp.lambda = r.number("controller.lambda");
  mp.alpha = r.number("controller.alpha");
  mp.nu = r.number("controller.nu");
  mp.R = r.matrix("controller.R");
  mp.workers = r.integer("controller.workers");
  mp.sigma_eps = r.matrix("noise.sigma_eps");
  r.check("controller", [&] { mp.validate(2); });

  c.params.sigma_f_scale = 0.0;
  if (r.is_none("ccmppi.sigma_f")) {
    c.params.sigma_f_scale = r.number("ccmppi.sigma_f_scale");
    require(c.params.sigma_f_scale > 0.0, "ccmppi.sigma_f_scale",
            "must be positive when ccmppi.sigma_f is none");
  } else {
    c.params.sigma_f = r.matrix("ccmppi.sigma_f");
  }
  c.params.weights.Q = r.matrix("ccmppi.Q");
  c.params.weights.Q_f = r.matrix("ccmppi.Q_f");
  c.params.weights.R = r.is_none("ccmppi.R") ? mp.R : r.matrix("ccmppi.R");
  c.params.mode = r.with_key("ccmppi.gain_mode", [](const std::string& t) {
    if (t == "hard") return GainMode::kHard;
    if (t == "soft") return GainMode::kSoft;
    throw ConfigError("expected hard or soft, got '" + t + "'");
  });
  c.params.solver.feasibility_tol = r.number("ccmppi.feasibility_tol");
  c.params.solver.bisection_steps = r.integer("ccmppi.bisection_steps");
  c.params.solver.polish_iterations = r.integer("ccmppi.polish_iterations");
  c.params.solver.mu_rel_tol = r.number("ccmppi.mu_rel_tol");
  require(c.params.solver.mu_rel_tol > 0.0, "ccmppi.mu_rel_tol", "must be positive");
  require(c.params.solver.bisection_steps >= 0 && c.params.solver.polish_iterations >= 0,
          "ccmppi", "solver iteration counts must be non-negative");
  r.check("ccmppi", [&] { c.params.validate(4, 2); });

  c.cost.c1 = r.number("cost.c1");
  c.cost.c2 = r.number("cost.c2");
  require(c.cost.c1 >= 0.0 && c.cost.c2 >= 0.0, "cost", "c1 and c2 must be non-negative");
  c.cost.obstacle_mode = r.with_key("cost.obstacle_mode", [](const std::string& t) {
    if (t == "continuous") return ObstacleCostMode::kContinuous;
    if (t == "discontinuous") return ObstacleCostMode::kDiscontinuous;
    throw ConfigError("expected continuous or discontinuous, got '" + t + "'");
  });
  c.cost.progress_mode = r.with_key("cost.progress_mode", [](const std::string& t) {
    if (t == "normalized") return ProgressMode::kNormalized;
    if (t == "raw") return ProgressMode::kRaw;
    throw ConfigError("expected normalized or raw, got '" + t + "'");
  });
  c.v_max = r.number("cost.v_max");
  require(c.v_max > 0.0, "cost.v_max", "must be positive");
  c.cost.progress_window = c.v_max * mp.N * c.vehicle.dt;

  c.values = std::move(values);
  return c;
}

std::map<std::string, std::string> parse_pairs(const std::string& text) {
  std::map<std::string, std::string> values;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const std::string where = "line " + std::to_string(line_no);
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    std::string key = trim(std::string_view(body).substr(0, eq));
    std::string value = trim(std::string_view(body).substr(eq + 1));
    if (!schema().contains(key)) throw ConfigError(where + ": unknown key '" + key + "'");
    if (value.empty()) throw ConfigError(where + ": empty value for '" + key + "'");
    if (!values.emplace(key, value).second) {
      throw ConfigError(where + ": duplicate key '" + key + "'");
    }
  }
  return values;
}

Eigen::MatrixXd parse_matrix_body(const std::string& t) {
  const auto call_args = [&](std::string_view name) -> std::vector<std::string> {
    const std::string inner = t.substr(name.size() + 1, t.size() - name.size() - 2);
    return split(inner, ',');
  };
  const auto is_call = [&](std::string_view name) {
    return t.size() > name.size() + 1 && t.compare(0, name.size(), name) == 0 &&
           t[name.size()] == '(' && t.back() == ')';
  };

  if (is_call("diag")) {
    const auto args = call_args("diag");
    Eigen::VectorXd d(static_cast<Eigen::Index>(args.size()));
    for (std::size_t i = 0; i < args.size(); ++i) d(static_cast<Eigen::Index>(i)) = parse_number(args[i]);
    return d.asDiagonal();
  }
  if (is_call("eye") || is_call("zeros")) {
    const bool eye = is_call("eye");
    const auto args = call_args(eye ? "eye" : "zeros");
    if (args.empty() || args.size() > 2) throw ConfigError("expected one or two sizes in '" + t + "'");
    const int rows = parse_count(args[0]);
    const int cols = args.size() == 2 ? parse_count(args[1]) : rows;
    if (rows < 1 || cols < 1) throw ConfigError("sizes must be positive in '" + t + "'");
    if (eye) return Eigen::MatrixXd::Identity(rows, cols);
    return Eigen::MatrixXd::Zero(rows, cols);
  }
  if (t.size() >= 2 && t.front() == '[' && t.back() == ']') {
    std::vector<std::vector<double>> rows;
    for (const auto& row_text : split(std::string_view(t).substr(1, t.size() - 2), ';')) {
      std::string spaced = row_text;
      std::replace(spaced.begin(), spaced.end(), ',', ' ');
      std::istringstream row_in(spaced);
      std::vector<double> row;
      std::string token;
      while (row_in >> token) row.push_back(parse_number(token));
      if (row.empty()) throw ConfigError("empty row in '" + t + "'");
      rows.push_back(std::move(row));
    }
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != rows.front().size()) {
        throw ConfigError("ragged matrix literal '" + t + "'");
      }
      for (std::size_t j = 0; j < rows[i].size(); ++j) {
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
      }
    }
    return m;
  }
  return Eigen::MatrixXd::Constant(1, 1, parse_number(t));
}

}  // namespace

std::string to_string(ControllerKind kind) {
  return kind == ControllerKind::kMppi ? "mppi" : "ccmppi";
}

ControllerKind parse_controller_kind(const std::string& name) {
  if (name == "mppi") return ControllerKind::kMppi;
  if (name == "ccmppi") return ControllerKind::kCcMppi;
  throw ConfigError("unknown controller '" + name + "' (expected mppi or ccmppi)");
}

double ScenarioConfig::lap_length() const {
  if (!track.closed() && finish_distance > 0.0) return finish_distance;
  return track.total_length();
}

Eigen::MatrixXd parse_matrix(const std::string& text) {
  const std::string t = trim(text);
  const auto star = t.find('*');
  const auto open = t.find_first_of("[(");
  if (star != std::string::npos && (open == std::string::npos || star < open)) {
    const double scale = parse_number(std::string_view(t).substr(0, star));
    return scale * parse_matrix_body(trim(std::string_view(t).substr(star + 1)));
  }
  return parse_matrix_body(t);
}

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  (void)ec;
  return std::string(buf.data(), ptr);
}

ScenarioConfig parse_config(const std::string& text) { return build(parse_pairs(text)); }

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_config(buffer.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

ScenarioConfig with_overrides(const ScenarioConfig& base,
                              const std::map<std::string, std::string>& overrides) {
  auto values = base.values;
  for (const auto& [key, value] : overrides) {
    if (!schema().contains(key)) throw ConfigError("unknown key '" + key + "'");
    values[key] = value;
  }
  return build(std::move(values));
}

std::string canonical_text(const ScenarioConfig& config) {
  std::string out;
  for (const auto& [key, value] : config.values) out += key + " = " + value + "\n";
  return out;
}

std::uint64_t config_hash(const ScenarioConfig& config) {
  std::uint64_t h = 14695981039346656037ULL;
  for (const unsigned char c : canonical_text(config)) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace ccmppi
