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

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "ccmppi/ccmppi.hpp"
#include "ccmppi/config.hpp"
#include "ccmppi/covsteer.hpp"
#include "ccmppi/dynamics.hpp"
#include "ccmppi/environment.hpp"
#include "ccmppi/errors.hpp"
#include "ccmppi/harness.hpp"
#include "ccmppi/mppi.hpp"
#include "ccmppi/version.hpp"

namespace py = pybind11;
using namespace pybind11::literals;

namespace ccmppi {
namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

LtvModel ltv_from_lists(const std::vector<Mat>& As, const std::vector<Mat>& Bs) {
  if (As.empty() || As.size() != Bs.size()) {
    throw ValidationError("A and B lists must be non-empty and equally long");
  }
  LtvModel ltv;
  ltv.n_x = static_cast<int>(As.front().rows());
  ltv.n_u = static_cast<int>(Bs.front().cols());
  for (std::size_t k = 0; k < As.size(); ++k) {
    if (As[k].rows() != ltv.n_x || As[k].cols() != ltv.n_x || Bs[k].rows() != ltv.n_x ||
        Bs[k].cols() != ltv.n_u) {
      throw ValidationError("inconsistent A/B shapes at step " + std::to_string(k));
    }
    ltv.steps.push_back({As[k], Bs[k], Vec::Zero(ltv.n_x)});
  }
  return ltv;
}

FeedbackGain gain_from_list(const std::vector<Mat>& blocks) { return {blocks}; }

GainMode parse_mode(const std::string& mode) {
  if (mode == "hard") return GainMode::kHard;
  if (mode == "soft") return GainMode::kSoft;
  throw ValidationError("mode must be 'hard' or 'soft', got '" + mode + "'");
}

py::dict metrics_dict(const RunMetrics& m) {
  py::list laps;
  for (const auto& lap : m.laps) {
    laps.append(py::dict("index"_a = lap.index, "time_s"_a = lap.time_s,
                         "collisions"_a = lap.collisions));
  }
  return py::dict("laps"_a = laps, "laps_completed"_a = m.laps_completed(),
                  "avg_lap_time_s"_a = m.avg_lap_time_s(),
                  "collisions_per_lap"_a = m.collisions_per_lap(),
                  "total_collisions"_a = m.total_collisions, "sim_time_s"_a = m.sim_time_s,
                  "steps"_a = m.steps, "success"_a = m.success,
                  "failure_reason"_a = m.failure_reason, "soft_fallbacks"_a = m.soft_fallbacks);
}

}  // namespace
}  // namespace ccmppi

PYBIND11_MODULE(_ccmppi, m) {
  using namespace ccmppi;
  m.doc() = "Covariance-controlled MPPI: dynamics, gain synthesis, controllers and harness";
  m.attr("__version__") = kVersion;

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ArithmeticError);
  py::register_exception<InfeasibleError>(m, "InfeasibleError", PyExc_RuntimeError);

  // Dynamics.
  py::class_<BicycleParams>(m, "BicycleParams")
      .def(py::init([](double l_f, double l_r, double dt, double v_min) {
             BicycleParams p{l_f, l_r, dt, v_min};
             p.validate();
             return p;
           }),
           "l_f"_a = 0.15, "l_r"_a = 0.15, "dt"_a = 0.02,
           "v_min"_a = -std::numeric_limits<double>::infinity())
      .def_readonly("l_f", &BicycleParams::l_f)
      .def_readonly("l_r", &BicycleParams::l_r)
      .def_readonly("dt", &BicycleParams::dt)
      .def_readonly("v_min", &BicycleParams::v_min);

  m.def(
      "step",
      [](const Eigen::Vector4d& x, const Eigen::Vector2d& u, const BicycleParams& p) {
        Eigen::Vector4d next;
        BicycleModel(p).step(x, u, next);
        return next;
      },
      "x"_a, "u"_a, "params"_a = BicycleParams{}, "One Euler step of the bicycle model.");
  m.def(
      "jacobians",
      [](const Eigen::Vector4d& x, const Eigen::Vector2d& u, const BicycleParams& p) {
        Mat A(4, 4), B(4, 2);
        BicycleModel(p).jacobians(x, u, A, B);
        return py::make_tuple(A, B);
      },
      "x"_a, "u"_a, "params"_a = BicycleParams{}, "Analytic (A, B) of the discrete step.");
  m.def(
      "rollout",
      [](const Eigen::Vector4d& x0, const Mat& controls, const BicycleParams& p) {
        return Mat(rollout(BicycleModel(p), x0, controls));
      },
      "x0"_a, "controls"_a, "params"_a = BicycleParams{},
      "States 4 x (N+1) for a 2 x N control sequence.");
  m.def(
      "linearize",
      [](const Mat& states, const Mat& controls, const BicycleParams& p) {
        const LtvModel ltv = linearize(BicycleModel(p), states, controls);
        py::list out;
        for (const auto& s : ltv.steps) out.append(py::make_tuple(s.A, s.B, s.d));
        return out;
      },
      "states"_a, "controls"_a, "params"_a = BicycleParams{},
      "List of (A_k, B_k, d_k) along a reference trajectory.");

  // Covariance steering on an LTV model given as lists of A_k, B_k.
  m.def(
      "open_loop_terminal_covariance",
      [](const std::vector<Mat>& As, const std::vector<Mat>& Bs, const Mat& sigma_eps) {
        return Mat(open_loop_terminal_covariance(build_augmented(ltv_from_lists(As, Bs)),
                                                 sigma_eps));
      },
      "A"_a, "B"_a, "sigma_eps"_a);
  m.def(
      "terminal_covariance",
      [](const std::vector<Mat>& As, const std::vector<Mat>& Bs, const std::vector<Mat>& K,
         const Mat& sigma_eps) {
        const auto aug = build_augmented(ltv_from_lists(As, Bs));
        const Mat sigma_f = Mat::Zero(aug.n_x, aug.n_x);
        return Mat(terminal_covariance(aug, gain_from_list(K), {sigma_eps, sigma_f}));
      },
      "A"_a, "B"_a, "K"_a, "sigma_eps"_a);
  m.def(
      "solve_gain",
      [](const std::vector<Mat>& As, const std::vector<Mat>& Bs, const Mat& sigma_eps,
         const Mat& sigma_f, std::optional<Mat> Q, std::optional<Mat> Q_f, std::optional<Mat> R,
         const std::string& mode) {
        const auto aug = build_augmented(ltv_from_lists(As, Bs));
        CovCostWeights w = CovCostWeights::defaults(aug.n_x, aug.n_u);
        if (Q) w.Q = *Q;
        if (Q_f) w.Q_f = *Q_f;
        if (R) w.R = *R;
        const CovarianceSpec spec{sigma_eps, sigma_f};
        const GainSolution sol = solve_gain(aug, spec, w, parse_mode(mode));
        return py::dict("K"_a = sol.gain.blocks, "cost"_a = sol.cost,
                        "terminal_covariance"_a = sol.terminal_covariance,
                        "violation"_a = sol.violation,
                        "constraint_active"_a = sol.constraint_active);
      },
      "A"_a, "B"_a, "sigma_eps"_a, "sigma_f"_a, "Q"_a = py::none(), "Q_f"_a = py::none(),
      "R"_a = py::none(), "mode"_a = "hard",
      "Block-diagonal feedback gain bounding the terminal covariance by sigma_f.");

  // MPPI algebra.
  m.def("compute_weights", &compute_weights, "costs"_a, "lam"_a,
        "exp(-(S - min S) / lambda).");
  m.def("effective_sample_size", &effective_sample_size, "weights"_a);
  m.def(
      "weighted_mean",
      [](const std::vector<Mat>& controls, const Vec& weights) {
        if (controls.empty() || static_cast<Eigen::Index>(controls.size()) != weights.size()) {
          throw ValidationError("need one control sequence per weight");
        }
        const auto rows = controls.front().rows(), cols = controls.front().cols();
        SampleBatch batch(static_cast<int>(controls.size()), static_cast<int>(cols), 1,
                          static_cast<int>(rows));
        for (std::size_t i = 0; i < controls.size(); ++i) {
          if (controls[i].rows() != rows || controls[i].cols() != cols) {
            throw ValidationError("control sequences must share a shape");
          }
          batch.control(static_cast<int>(i)) = controls[i];
        }
        return Mat(update_mean(batch, weights));
      },
      "controls"_a, "weights"_a, "Weighted average of n_u x N control sequences.");
  m.def(
      "receding_horizon_shift",
      [](const Mat& mean) { return Mat(receding_horizon_shift(mean)); }, "mean"_a);

  // Track geometry.
  py::class_<Track>(m, "Track")
      .def(py::init([](const std::string& segments, double width, bool closed,
                       const Eigen::Vector2d& start, double heading_deg) {
             const auto pieces = Track::parse_pieces(segments);
             return Track::build(start, heading_deg * std::numbers::pi / 180.0, pieces, width, closed);
           }),
           "segments"_a, "width"_a = 0.6, "closed"_a = true,
           "start"_a = Eigen::Vector2d::Zero(), "heading_deg"_a = 0.0)
      .def_property_readonly("total_length", &Track::total_length)
      .def_property_readonly("width", &Track::width)
      .def_property_readonly("closed", &Track::closed)
      .def("point_at", [](const Track& t, double s) { return Eigen::Vector2d(t.point_at(s)); })
      .def("heading_at", &Track::heading_at)
      .def("project", [](const Track& t, const Eigen::Vector2d& p) {
        const TrackProjection pr = t.project(p);
        return py::dict("s"_a = pr.s, "distance"_a = pr.distance,
                        "point"_a = Eigen::Vector2d(pr.point), "segment"_a = pr.segment);
      });

  // Scenarios and harness.
  py::class_<ScenarioConfig>(m, "ScenarioConfig")
      .def_readonly("name", &ScenarioConfig::name)
      .def_readonly("laps", &ScenarioConfig::laps)
      .def_readonly("seed", &ScenarioConfig::seed)
      .def_property_readonly("controller",
                             [](const ScenarioConfig& c) { return to_string(c.controller); })
      .def_readonly("values", &ScenarioConfig::values)
      .def_property_readonly("time_limit", &ScenarioConfig::time_limit)
      .def_property_readonly("track", [](const ScenarioConfig& c) { return c.track; })
      .def("with_overrides", &with_overrides, "overrides"_a)
      .def("canonical_text", &canonical_text)
      .def("hash", &config_hash);

  m.def("parse_config", &parse_config, "text"_a);
  m.def("load_config", &load_config, "path"_a);

  m.def(
      "run_scenario",
      [](const ScenarioConfig& c) {
        RunMetrics metrics;
        {
          py::gil_scoped_release release;
          metrics = run_scenario(c);
        }
        return metrics_dict(metrics);
      },
      "config"_a, "Closed-loop run; returns lap times, collisions and the outcome.");

  py::class_<RunRow>(m, "RunRow")
      .def_property_readonly("controller", [](const RunRow& r) { return to_string(r.controller); })
      .def_readonly("c1", &RunRow::c1)
      .def_readonly("c2", &RunRow::c2)
      .def_readonly("seed", &RunRow::seed)
      .def_readonly("laps_completed", &RunRow::laps_completed)
      .def_readonly("avg_lap_time_s", &RunRow::avg_lap_time_s)
      .def_readonly("collisions_per_lap", &RunRow::collisions_per_lap)
      .def_readonly("success", &RunRow::success)
      .def_readonly("failure_reason", &RunRow::failure_reason)
      .def("__eq__", &RunRow::operator==)
      .def("__repr__", [](const RunRow& r) {
        return "RunRow(" + to_string(r.controller) + ", c1=" + format_double(r.c1) +
               ", c2=" + format_double(r.c2) + ", seed=" + std::to_string(r.seed) + ")";
      });

  m.def(
      "run_grid",
      [](const ScenarioConfig& base, std::vector<double> c1, std::vector<double> c2,
         const std::vector<std::string>& controllers, std::vector<std::uint64_t> seeds,
         int workers) {
        GridSpec grid;
        grid.c1 = std::move(c1);
        grid.c2 = std::move(c2);
        grid.controllers.clear();
        for (const auto& name : controllers) grid.controllers.push_back(parse_controller_kind(name));
        grid.seeds = std::move(seeds);
        grid.workers = workers;
        py::gil_scoped_release release;
        return run_grid_search(base, grid);
      },
      "config"_a, "c1"_a, "c2"_a, "controllers"_a = std::vector<std::string>{"mppi", "ccmppi"},
      "seeds"_a = std::vector<std::uint64_t>{}, "workers"_a = 0,
      "Runs every (controller, c1, c2, seed); rows sorted in that order.");
  m.def("parse_range", &parse_range, "text"_a);
  m.def("rows_to_csv", &rows_to_csv, "rows"_a);
  m.def("rows_from_csv", &rows_from_csv, "text"_a);
  m.def(
      "summarize",
      [](const std::vector<RunRow>& rows) {
        py::list out;
        for (const auto& s : compute_aggregates(rows).controllers) {
          out.append(py::dict("controller"_a = to_string(s.controller), "runs"_a = s.runs,
                              "successes"_a = s.successes, "success_rate"_a = s.success_rate,
                              "laps_completed"_a = s.laps_completed,
                              "mean_lap_time_s"_a = s.mean_lap_time_s,
                              "collisions_per_lap"_a = s.collisions_per_lap));
        }
        return out;
      },
      "rows"_a, "Per-controller aggregates, lap-weighted.");
}
