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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any selected criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "CLI11.hpp"
#include "ccmppi/ccmppi.hpp"
#include "ccmppi/config.hpp"
#include "ccmppi/covsteer.hpp"
#include "ccmppi/dynamics.hpp"
#include "ccmppi/environment.hpp"
#include "ccmppi/harness.hpp"
#include "ccmppi/mppi.hpp"

namespace fs = std::filesystem;
using namespace ccmppi;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double limit_s;
  std::function<Outcome()> run;
};

fs::path g_work_dir;

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

ScenarioConfig scenario(const std::string& file, std::map<std::string, std::string> overrides = {}) {
  return with_overrides(load_config(fs::path(CCMPPI_SCENARIO_DIR) / file), overrides);
}

bool bit_equal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// ---------------------------------------------------------------------------
// Independent oracles.

// Continuous kinematic bicycle, one explicit Euler step, no speed floor.
Eigen::Vector4d reference_step(const Eigen::Vector4d& x, const Eigen::Vector2d& u,
                               const BicycleParams& p) {
  const double beta = std::atan(p.l_r / (p.l_f + p.l_r) * std::tan(u[1]));
  Eigen::Vector4d f;
  f << x[3] * std::cos(x[2] + beta), x[3] * std::sin(x[2] + beta), x[3] / p.l_r * std::sin(beta),
      u[0];
  return x + f * p.dt;
}

LtvModel random_ltv(std::mt19937_64& rng, int nx, int nu, int N) {
  std::normal_distribution<double> n(0.0, 1.0);
  LtvModel ltv;
  ltv.n_x = nx;
  ltv.n_u = nu;
  for (int k = 0; k < N; ++k) {
    LtvStep s;
    s.A = Eigen::MatrixXd::Identity(nx, nx) +
          0.2 * Eigen::MatrixXd::NullaryExpr(nx, nx, [&] { return n(rng); });
    s.B = 0.5 * Eigen::MatrixXd::NullaryExpr(nx, nu, [&] { return n(rng); });
    s.d = 0.1 * Eigen::VectorXd::NullaryExpr(nx, [&] { return n(rng); });
    ltv.steps.push_back(s);
  }
  return ltv;
}

FeedbackGain random_gain(std::mt19937_64& rng, int N, int nu, int nx, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  FeedbackGain K = FeedbackGain::zeros(N, nu, nx);
  for (auto& b : K.blocks) b = Eigen::MatrixXd::NullaryExpr(nu, nx, [&] { return n(rng); });
  return K;
}

const Eigen::Matrix2d kSigmaEps = Eigen::Vector2d(0.49, 0.12).asDiagonal();

// Bicycle linearization along a gently accelerating left turn, N = 15.
LtvModel bicycle_ltv() {
  std::vector<ControlInput> w(15, ControlInput{0.5, 0.1});
  const auto xs = rollout({0.0, 0.0, 0.0, 2.0}, w, BicycleParams{});
  return linearize(xs, w, BicycleParams{});
}

// One-sided exact Wilcoxon signed-rank test for H1: median(d) < 0.
// Zeros are dropped; ties get mid-ranks (doubled to stay integral) and the
// null distribution is enumerated conditionally on the observed ranks.
double wilcoxon_less_p(const std::vector<double>& d_in) {
  std::vector<double> d;
  for (double v : d_in) {
    if (v != 0.0) d.push_back(v);
  }
  const int n = static_cast<int>(d.size());
  if (n == 0) return 1.0;
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return std::abs(d[a]) < std::abs(d[b]); });
  std::vector<int> rank2(n);
  for (int i = 0; i < n;) {
    int j = i;
    while (j + 1 < n && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    for (int k = i; k <= j; ++k) rank2[order[k]] = i + j + 2;  // 2 * mean(i+1 .. j+1)
    i = j + 1;
  }
  int w_plus = 0, total = 0;
  for (int i = 0; i < n; ++i) {
    total += rank2[i];
    if (d[i] > 0) w_plus += rank2[i];
  }
  std::vector<double> dist(static_cast<std::size_t>(total) + 1, 0.0);
  dist[0] = 1.0;
  int reach = 0;
  for (int i = 0; i < n; ++i) {
    reach += rank2[i];
    for (int s = reach; s >= rank2[i]; --s) dist[s] = 0.5 * dist[s] + 0.5 * dist[s - rank2[i]];
    for (int s = rank2[i] - 1; s >= 0; --s) dist[s] *= 0.5;
  }
  double p = 0.0;
  for (int s = 0; s <= w_plus; ++s) p += dist[s];
  return std::min(1.0, p);
}

// One-sided exact McNemar: P(X >= b) with X ~ Binomial(b + c, 1/2).
double mcnemar_greater_p(int b, int c) {
  const int n = b + c;
  if (n == 0) return 1.0;
  double p = 0.0;
  for (int k = b; k <= n; ++k) {
    p += std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) -
                  n * std::log(2.0));
  }
  return std::min(1.0, p);
}

// ---------------------------------------------------------------------------

Outcome linearization() {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> pos(-3, 3), ang(-3, 3), vel(0.1, 4), thr(-5, 5),
      steer(-1.0, 1.0);
  const BicycleParams p;
  const BicycleModel model(p);
  double worst_jac = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Eigen::Vector4d x(pos(rng), pos(rng), ang(rng), vel(rng));
    const Eigen::Vector2d u(thr(rng), steer(rng));
    Eigen::MatrixXd A(4, 4), B(4, 2), Afd(4, 4), Bfd(4, 2);
    model.jacobians(x, u, A, B);
    const double h = 1e-6;
    for (int j = 0; j < 4; ++j) {
      Eigen::Vector4d xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      Afd.col(j) = (reference_step(xp, u, p) - reference_step(xm, u, p)) / (2 * h);
    }
    for (int j = 0; j < 2; ++j) {
      Eigen::Vector2d up = u, um = u;
      up[j] += h;
      um[j] -= h;
      Bfd.col(j) = (reference_step(x, up, p) - reference_step(x, um, p)) / (2 * h);
    }
    worst_jac = std::max(worst_jac, (A - Afd).norm() / std::max(1.0, Afd.norm()));
    worst_jac = std::max(worst_jac, (B - Bfd).norm() / std::max(1.0, Bfd.norm()));
  }

  // Residual identity along random reference trajectories, in ulps of the
  // largest term involved.
  std::normal_distribution<double> n(0.0, 1.0);
  double worst_residual_ulps = 0.0;
  for (int t = 0; t < 10; ++t) {
    std::vector<ControlInput> w;
    for (int k = 0; k < 15; ++k) w.push_back({n(rng), 0.4 * n(rng)});
    const auto xs = rollout({pos(rng), pos(rng), ang(rng), vel(rng)}, w, p);
    const LtvModel ltv = linearize(xs, w, p);
    for (int k = 0; k < 15; ++k) {
      const auto& s = ltv.steps[k];
      const Eigen::Vector4d Ax = s.A * xs[k].vec(), Bu = s.B * w[k].vec();
      const Eigen::Vector4d lin = Ax + Bu + s.d;
      const double scale = std::max({Ax.cwiseAbs().maxCoeff(), Bu.cwiseAbs().maxCoeff(),
                                     s.d.cwiseAbs().maxCoeff(), 1.0});
      const double err = (lin - xs[k + 1].vec()).cwiseAbs().maxCoeff();
      worst_residual_ulps =
          std::max(worst_residual_ulps, err / (scale * std::numeric_limits<double>::epsilon()));
    }
  }
  return {worst_jac <= 1e-6 && worst_residual_ulps <= 16.0,
          fmt("max relative Jacobian error %.2e (<= 1e-6), residual identity within %.1f ulp",
              worst_jac, worst_residual_ulps)};
}

Outcome compact_form() {
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<int> nx_d(1, 4), nu_d(1, 2), N_d(1, 10);
  std::normal_distribution<double> n(0.0, 1.0);
  double worst_x = 0.0, worst_y = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int nx = nx_d(rng), nu = nu_d(rng), N = N_d(rng);
    const LtvModel ltv = random_ltv(rng, nx, nu, N);
    const AugmentedSystem aug = build_augmented(ltv);
    const FeedbackGain K = random_gain(rng, N, nu, nx, 0.3);
    const Eigen::VectorXd x0 = Eigen::VectorXd::NullaryExpr(nx, [&] { return n(rng); });
    const Eigen::MatrixXd w = Eigen::MatrixXd::NullaryExpr(nu, N, [&] { return n(rng); });
    const Eigen::MatrixXd eps = Eigen::MatrixXd::NullaryExpr(nu, N, [&] { return n(rng); });

    Eigen::VectorXd xs(nx * (N + 1)), ys(nx * (N + 1)), d(nx * N);
    Eigen::VectorXd x = x0, y = Eigen::VectorXd::Zero(nx);
    xs.head(nx) = x;
    ys.head(nx) = y;
    for (int k = 0; k < N; ++k) {
      const auto& s = ltv.steps[k];
      const Eigen::VectorXd u = w.col(k) + K.blocks[k] * y + eps.col(k);
      x = s.A * x + s.B * u + s.d;
      y = s.A * y + s.B * eps.col(k);
      xs.segment((k + 1) * nx, nx) = x;
      ys.segment((k + 1) * nx, nx) = y;
      d.segment(k * nx, nx) = s.d;
    }
    const Eigen::VectorXd e_stack = eps.reshaped();
    const Eigen::VectorXd stacked = aug.calA * x0 +
                                    aug.calB * (w.reshaped() + K.stacked(nx) * ys + e_stack) +
                                    aug.calC * d;
    worst_x = std::max(worst_x, (stacked - xs).cwiseAbs().maxCoeff());
    worst_y = std::max(worst_y, (aug.calB * e_stack - ys).cwiseAbs().maxCoeff());
  }
  return {worst_x <= 1e-9 && worst_y <= 1e-10,
          fmt("50 systems: stacked vs recursion %.2e (<= 1e-9), y vs B*eps %.2e (<= 1e-10)",
              worst_x, worst_y)};
}

Outcome covariance_oracle() {
  const LtvModel ltv = bicycle_ltv();
  const int N = ltv.horizon();
  const AugmentedSystem aug = build_augmented(ltv);
  const Eigen::MatrixXd open = open_loop_terminal_covariance(aug, kSigmaEps);
  const CovarianceSpec spec{kSigmaEps, 0.5 * open};
  const FeedbackGain solved =
      solve_gain(aug, spec, CovCostWeights::defaults(4, 2), GainMode::kHard).gain;
  const Eigen::Matrix2d L = kSigmaEps.llt().matrixL();

  std::vector<double> gaps;
  for (const FeedbackGain& K : {FeedbackGain::zeros(N, 2, 4), solved}) {
    const Eigen::MatrixXd analytic = terminal_covariance(aug, K, spec);
    std::mt19937_64 rng(303);
    std::normal_distribution<double> n(0.0, 1.0);
    const int samples = 100000;
    Eigen::Vector4d sum = Eigen::Vector4d::Zero();
    Eigen::Matrix4d sum_sq = Eigen::Matrix4d::Zero();
    for (int m = 0; m < samples; ++m) {
      Eigen::Vector4d x = Eigen::Vector4d::Zero(), y = Eigen::Vector4d::Zero();
      for (int k = 0; k < N; ++k) {
        const Eigen::Vector2d e = L * Eigen::Vector2d(n(rng), n(rng));
        x = ltv.steps[k].A * x + ltv.steps[k].B * (K.blocks[k] * y + e);
        y = ltv.steps[k].A * y + ltv.steps[k].B * e;
      }
      sum += x;
      sum_sq += x * x.transpose();
    }
    const Eigen::Vector4d mean = sum / samples;
    const Eigen::Matrix4d empirical =
        (sum_sq - samples * mean * mean.transpose()) / (samples - 1);
    gaps.push_back((empirical - analytic).norm() / analytic.norm());
  }
  return {gaps[0] <= 0.05 && gaps[1] <= 0.05,
          fmt("relative Frobenius gap K=0 %.4f, solved K %.4f (<= 0.05, 1e5 rollouts)", gaps[0],
              gaps[1])};
}

Outcome gain_synthesis() {
  // (a) Bicycle, half the open-loop terminal covariance.
  const AugmentedSystem bike = build_augmented(bicycle_ltv());
  const Eigen::MatrixXd open = open_loop_terminal_covariance(bike, kSigmaEps);
  const CovarianceSpec bike_spec{kSigmaEps, 0.5 * open};
  const GainSolution bike_sol =
      solve_gain(bike, bike_spec, CovCostWeights::defaults(4, 2), GainMode::kHard);
  const double violation =
      constraint_violation(terminal_covariance(bike, bike_sol.gain, bike_spec), bike_spec.sigma_f);

  // (b) Two-step double integrator. With y_0 = 0 only K_1 b enters, so the
  // cost is a function of the scalar s = K_1 b; grid it.
  Eigen::Matrix2d A;
  A << 1, 1, 0, 1;
  const Eigen::Vector2d b(0.5, 1.0);
  LtvModel di;
  di.n_x = 2;
  di.n_u = 1;
  for (int k = 0; k < 2; ++k) di.steps.push_back({A, b, Eigen::VectorXd::Zero(2)});
  const AugmentedSystem di_aug = build_augmented(di);
  const Eigen::Matrix2d room = Eigen::Vector2d(0.9, 0.5).asDiagonal();
  const CovarianceSpec di_spec{Eigen::MatrixXd::Ones(1, 1), b * b.transpose() + room};
  const double R = 0.01;
  const CovCostWeights di_w{Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Identity(2, 2),
                            R * Eigen::MatrixXd::Identity(1, 1)};
  double brute = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 400000; ++i) {
    const double s = -3.0 + i * 1e-5;
    const Eigen::Vector2d v = A * b + b * s;
    const Eigen::Matrix2d slack = room - v * v.transpose();
    if (Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(slack).eigenvalues().minCoeff() >= 0.0) {
      brute = std::min(brute, v.squaredNorm() + b.squaredNorm() + R * s * s);
    }
  }
  const GainSolution di_sol = solve_gain(di_aug, di_spec, di_w, GainMode::kHard);
  const double di_gap = std::abs(di_sol.cost - brute);

  // (c) Gradient against central differences, on the bicycle and on random LTVs.
  double worst_grad = 0.0;
  std::mt19937_64 rng(404);
  const auto check_grad = [&](const AugmentedSystem& aug, const CovarianceSpec& spec,
                              const CovCostWeights& w, const FeedbackGain& K) {
    const int N = aug.N, nu = aug.n_u, nx = aug.n_x;
    const Eigen::VectorXd g = covariance_cost_gradient(aug, K, spec, w).flatten();
    const Eigen::VectorXd z = K.flatten();
    Eigen::VectorXd fd(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      const double h = 1e-6;
      Eigen::VectorXd zp = z, zm = z;
      zp[i] += h;
      zm[i] -= h;
      fd[i] = (covariance_cost(aug, FeedbackGain::unflatten(zp, N, nu, nx), spec, w) -
               covariance_cost(aug, FeedbackGain::unflatten(zm, N, nu, nx), spec, w)) /
              (2 * h);
    }
    worst_grad = std::max(worst_grad, (g - fd).norm() / std::max(1.0, fd.norm()));
  };
  check_grad(bike, bike_spec, CovCostWeights::defaults(4, 2), random_gain(rng, 15, 2, 4, 0.2));
  for (int t = 0; t < 5; ++t) {
    const AugmentedSystem aug = build_augmented(random_ltv(rng, 3, 2, 6));
    const CovCostWeights w{0.3 * Eigen::MatrixXd::Identity(3, 3), Eigen::MatrixXd::Identity(3, 3),
                           0.05 * Eigen::MatrixXd::Identity(2, 2)};
    check_grad(aug, {kSigmaEps, Eigen::MatrixXd::Identity(3, 3)}, w,
               random_gain(rng, 6, 2, 3, 0.2));
  }

  const bool pass = bike_sol.violation <= 1e-6 && violation <= 1e-6 && di_gap <= 1e-3 &&
                    worst_grad <= 1e-6;
  return {pass, fmt("bicycle violation %.2e (<= 1e-6); double integrator J %.6f vs brute force "
                    "%.6f (gap %.1e <= 1e-3); gradient relative error %.2e (<= 1e-6)",
                    std::max(bike_sol.violation, violation), di_sol.cost, brute, di_gap,
                    worst_grad)};
}

SampleBatch random_batch(int M, int N, std::uint64_t seed) {
  SampleBatch batch(M, N, 4, 2);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  batch.controls = Eigen::MatrixXd::NullaryExpr(2, M * N, [&] { return n(rng); });
  return batch;
}

Outcome mppi_algebra() {
  std::vector<std::string> failed;
  std::mt19937_64 rng(505);

  // Shift invariance. Costs on a 2^-10 grid so that shifted costs are exact.
  {
    const SampleBatch batch = random_batch(512, 15, 1);
    std::uniform_int_distribution<int> q(0, 64 * 1024 - 1);
    const Eigen::VectorXd costs = Eigen::VectorXd::NullaryExpr(512, [&] { return q(rng) / 1024.0; });
    const ControlSequence base = update_mean(batch, compute_weights(costs, 1.0));
    for (double shift : {1024.0, 4096.0, -2048.0, 1048576.0}) {
      const ControlSequence m =
          update_mean(batch, compute_weights((costs.array() + shift).matrix(), 1.0));
      if (!bit_equal(m, base)) failed.push_back(fmt("shift %g", shift));
    }
  }
  // Vanishing temperature.
  double min_gap = 0.0;
  {
    const SampleBatch batch = random_batch(256, 15, 2);
    std::uniform_real_distribution<double> u(0.0, 100.0);
    const Eigen::VectorXd costs = Eigen::VectorXd::NullaryExpr(256, [&] { return u(rng); });
    Eigen::Index best = 0;
    costs.minCoeff(&best);
    const ControlSequence m = update_mean(batch, compute_weights(costs, 1e-9));
    min_gap = (m - batch.control(static_cast<int>(best))).cwiseAbs().maxCoeff();
    if (min_gap > 1e-6) failed.push_back("lambda -> 0");
  }
  // Convex hull, per coordinate.
  {
    const SampleBatch batch = random_batch(128, 15, 3);
    std::uniform_real_distribution<double> u(0.0, 5.0);
    const Eigen::VectorXd costs = Eigen::VectorXd::NullaryExpr(128, [&] { return u(rng); });
    const ControlSequence m = update_mean(batch, compute_weights(costs, 0.7));
    ControlSequence lo = batch.control(0), hi = batch.control(0);
    for (int i = 1; i < 128; ++i) {
      lo = lo.cwiseMin(batch.control(i));
      hi = hi.cwiseMax(batch.control(i));
    }
    if (!((m.array() >= lo.array()).all() && (m.array() <= hi.array()).all())) {
      failed.push_back("convex hull");
    }
  }
  // Equal costs.
  {
    const Eigen::VectorXd w = compute_weights(Eigen::VectorXd::Constant(64, 3.25), 2.0);
    if (!(w.array() == w[0]).all()) failed.push_back("uniform weights");
  }
  std::string which;
  for (const auto& f : failed) which += " " + f;
  return {failed.empty(),
          failed.empty()
              ? fmt("shift-invariant bit-identical mean, lambda=1e-9 gap %.1e (<= 1e-6), convex "
                    "hull and uniform weights hold", min_gap)
              : "failed:" + which};
}

struct TrackContext {
  ScenarioConfig config;
  BicycleModel plant;
  Eigen::Vector4d x0;

  explicit TrackContext(ScenarioConfig c) : config(std::move(c)), plant(config.vehicle) {
    const Eigen::Vector2d start = config.track.point_at(0.0);
    x0 << start.x(), start.y(), config.track.heading_at(0.0), config.v0;
  }
  CostModel cost(const Eigen::Vector4d& x) const {
    return make_race_cost(config.track, config.obstacles, config.cost, x.head<2>());
  }
};

Outcome reduction() {
  const TrackContext ctx(scenario("cluttered_track.cfg", {{"controller.M", "512"}}));
  const CcMppiParams& params = ctx.config.params;
  const int N = params.mppi.N;
  const FeedbackGain zero = FeedbackGain::zeros(N, 2, 4);
  ControlSequence mean_cc = ControlSequence::Zero(2, N), mean_mppi = mean_cc;
  Eigen::Vector4d x_cc = ctx.x0, x_mppi = ctx.x0;
  const std::uint64_t seed = ctx.config.seed;
  for (int it = 0; it < 10; ++it) {
    const auto cc = ccmppi_iteration(x_cc, mean_cc, params, ctx.cost(x_cc), ctx.plant, seed, it,
                                     &zero);
    const auto base = mppi_iteration(x_mppi, mean_mppi, params.mppi, ctx.cost(x_mppi), ctx.plant,
                                     seed, it);
    const bool same = bit_equal(cc.batch.controls, base.batch.controls) &&
                      bit_equal(cc.batch.states, base.batch.states) &&
                      bit_equal(cc.batch.costs, base.batch.costs) &&
                      bit_equal(cc.weights, base.weights) && bit_equal(cc.mean, base.mean);
    if (!same) return {false, fmt("first difference at iteration %d", it)};
    Eigen::Vector4d next;
    ctx.plant.step(x_cc, cc.mean.col(0), next);
    x_cc = next;
    ctx.plant.step(x_mppi, base.mean.col(0), next);
    x_mppi = next;
    mean_cc = receding_horizon_shift(cc.mean);
    mean_mppi = receding_horizon_shift(base.mean);
  }
  return {true, "samples, costs, weights and means bit-identical over 10 closed-loop iterations "
                "(M=512)"};
}

Outcome dispersion() {
  const TrackContext ctx(scenario("cluttered_track.cfg", {{"controller.M", "512"},
                                                          {"ccmppi.sigma_f_scale", "0.25"},
                                                          {"ccmppi.gain_mode", "hard"}}));
  CcMppiParams params = ctx.config.params;
  const int N = params.mppi.N;
  const FeedbackGain zero = FeedbackGain::zeros(N, 2, 4);
  ControlSequence mean = ControlSequence::Zero(2, N);
  Eigen::Vector4d x = ctx.x0;
  int smaller = 0;
  double ratio_sum = 0.0;
  const int iterations = 100;
  for (int it = 0; it < iterations; ++it) {
    const CostModel cost = ctx.cost(x);
    const auto cc = ccmppi_iteration(x, mean, params, cost, ctx.plant, ctx.config.seed, it);
    const auto open = ccmppi_iteration(x, mean, params, cost, ctx.plant, ctx.config.seed, it, &zero);
    const int n = cc.batch.controlled;
    const double t_cc = empirical_terminal_covariance(cc.batch, n).trace();
    const double t_open = empirical_terminal_covariance(open.batch, n).trace();
    if (t_cc < t_open) ++smaller;
    ratio_sum += t_cc / t_open;
    params.solver.mu_hint = cc.diagnostics.fell_back_to_soft ? 0.0 : cc.diagnostics.penalty_mu;
    Eigen::Vector4d next;
    ctx.plant.step(x, cc.mean.col(0), next);
    x = next;
    mean = receding_horizon_shift(cc.mean);
  }
  const double frac = static_cast<double>(smaller) / iterations;
  return {frac >= 0.95, fmt("controlled trace smaller in %d/%d iterations (>= 95%%), mean trace "
                            "ratio %.3f", smaller, iterations, ratio_sum / iterations)};
}

std::vector<std::uint64_t> seed_range(std::uint64_t n) {
  std::vector<std::uint64_t> s(n);
  std::iota(s.begin(), s.end(), 1);
  return s;
}

Outcome experiment_trends() {
  const ScenarioConfig base =
      scenario("cluttered_track.cfg", {{"controller.M", "512"}, {"scenario.laps", "5"}});
  GridSpec grid;
  grid.c1 = {75.0, 262.5, 450.0};
  grid.c2 = {1.65, 2.31, 2.97};
  grid.seeds = seed_range(10);
  const auto rows = run_grid_search(base, grid);
  const Summary summary = compute_aggregates(rows);
  emit_results(rows, summary, g_work_dir / "criterion_8", make_manifest(base, grid.seeds));

  using Key = std::tuple<double, double, std::uint64_t>;
  std::map<Key, const RunRow*> mppi, cc;
  for (const auto& r : rows) {
    (r.controller == ControllerKind::kMppi ? mppi : cc)[{r.c1, r.c2, r.seed}] = &r;
  }
  std::vector<double> lap_diffs;
  int cc_only = 0, mppi_only = 0;
  for (const auto& [key, m] : mppi) {
    const RunRow* c = cc.at(key);
    if (m->laps_completed > 0 && c->laps_completed > 0) {
      lap_diffs.push_back(c->avg_lap_time_s - m->avg_lap_time_s);
    }
    if (c->success && !m->success) ++cc_only;
    if (m->success && !c->success) ++mppi_only;
  }
  const auto& sm = summary.controllers[0];
  const auto& sc = summary.controllers[1];
  const double p_lap = wilcoxon_less_p(lap_diffs);
  const double p_success = mcnemar_greater_p(cc_only, mppi_only);
  const bool lap_ok = sc.mean_lap_time_s < sm.mean_lap_time_s && p_lap < 0.05;
  const bool success_ok = sc.success_rate > sm.success_rate && p_success < 0.05;
  return {lap_ok && success_ok,
          fmt("mean lap time CC %.3f s vs MPPI %.3f s (Wilcoxon p=%.2e over %zu pairs); success "
              "CC %.1f%% vs MPPI %.1f%% (McNemar p=%.2e, %d vs %d discordant)",
              sc.mean_lap_time_s, sm.mean_lap_time_s, p_lap, lap_diffs.size(),
              100.0 * sc.success_rate, 100.0 * sm.success_rate, p_success, cc_only, mppi_only)};
}

Outcome emergency_trend() {
  const ScenarioConfig base = scenario("emergency.cfg");
  std::vector<RunRow> rows;
  int collided[2] = {0, 0}, finished[2] = {0, 0};
  for (const auto kind : {ControllerKind::kMppi, ControllerKind::kCcMppi}) {
    for (const auto seed : seed_range(20)) {
      const ScenarioConfig c = with_overrides(
          base, {{"controller.type", to_string(kind)}, {"scenario.seed", std::to_string(seed)}});
      const RunMetrics m = run_scenario(c);
      const int i = kind == ControllerKind::kCcMppi ? 1 : 0;
      if (m.total_collisions > 0) ++collided[i];
      if (m.success) ++finished[i];
      rows.push_back(make_row(c, m));
    }
  }
  emit_results(rows, compute_aggregates(rows), g_work_dir / "criterion_9",
               make_manifest(base, seed_range(20)));
  return {collided[1] < collided[0],
          fmt("runs with a collision: CC-MPPI %d/20, MPPI %d/20 (finished: %d and %d)",
              collided[1], collided[0], finished[1], finished[0])};
}

Outcome reproducibility() {
  const ScenarioConfig base = scenario("cluttered_track.cfg", {{"controller.M", "512"},
                                                               {"scenario.laps", "1"},
                                                               {"scenario.max_time", "8"}});
  GridSpec grid;
  grid.c1 = {75.0, 450.0};
  grid.c2 = {2.31};
  grid.seeds = {3};
  grid.workers = 0;
  const char* saved = std::getenv("SIM_WORKERS");
  const std::string saved_value = saved ? saved : "";
  std::vector<fs::path> dirs;
  for (const char* workers : {"1", "1", "2"}) {
    setenv("SIM_WORKERS", workers, 1);
    const auto rows = run_grid_search(base, grid);
    const fs::path dir =
        g_work_dir / "criterion_10" / ("run" + std::to_string(dirs.size()) + "_w" + workers);
    emit_results(rows, compute_aggregates(rows), dir, make_manifest(base, grid.seeds));
    dirs.push_back(dir);
  }
  if (saved) {
    setenv("SIM_WORKERS", saved_value.c_str(), 1);
  } else {
    unsetenv("SIM_WORKERS");
  }
  const auto strip_timestamp = [](std::string s) {
    std::istringstream in(s);
    std::string line, out;
    while (std::getline(in, line)) {
      if (line.find("\"generated_at\"") == std::string::npos) out += line + "\n";
    }
    return out;
  };
  for (const char* file : {"runs.csv", "scatter.csv", "summary.json", "manifest.json"}) {
    for (std::size_t i = 1; i < dirs.size(); ++i) {
      std::string a = slurp(dirs[0] / file), b = slurp(dirs[i] / file);
      if (std::string(file) == "manifest.json") {
        a = strip_timestamp(a);
        b = strip_timestamp(b);
      }
      if (a.empty() || a != b) {
        return {false, fmt("%s differs between %s and %s", file, dirs[0].filename().c_str(),
                           dirs[i].filename().c_str())};
      }
    }
  }
  return {true, "runs.csv, scatter.csv, summary.json and manifest (minus timestamp) "
                "byte-identical across 2 repeats and SIM_WORKERS=1/2"};
}

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all{
      {1, "linearization", 1.0, linearization},
      {2, "compact form", 5.0, compact_form},
      {3, "covariance oracle", 30.0, covariance_oracle},
      {4, "gain synthesis", 60.0, gain_synthesis},
      {5, "MPPI algebra", 5.0, mppi_algebra},
      {6, "reduction", 10.0, reduction},
      {7, "dispersion control", 120.0, dispersion},
      {8, "experiment trends", 1800.0, experiment_trends},
      {9, "emergency trend", 600.0, emergency_trend},
      {10, "reproducibility", 120.0, reproducibility},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<int> selected;
  std::string work_dir = (fs::temp_directory_path() / "ccmppi_acceptance").string();
  app.add_option("--criterion", selected, "Criterion ids (default: all)")->check(CLI::Range(1, 10));
  app.add_option("--work-dir", work_dir, "Directory for emitted artifacts");
  CLI11_PARSE(app, argc, argv);
  g_work_dir = work_dir;
  fs::create_directories(g_work_dir);

  int failures = 0;
  for (const auto& c : criteria()) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) {
      continue;
    }
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.limit_s) {
      o.pass = false;
      o.detail += fmt("; over the %.0f s budget", c.limit_s);
    }
    std::printf("%s criterion %d (%s): %s [%.2f s]\n", o.pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
