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

// Baseline MPPI: sample M perturbed control sequences around the mean,
// roll them out through the dynamics, score them and average with
// exponential weights.

#ifndef CCMPPI_MPPI_HPP_
#define CCMPPI_MPPI_HPP_

#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Core>

#include "ccmppi/dynamics.hpp"

namespace ccmppi {

using StateCostFn = std::function<double(const ConstVecRef&)>;

struct CostModel {
  StateCostFn state_cost;     // q(x), charged at x_0 ... x_{N-1}
  StateCostFn terminal_cost;  // phi(x_N)
};

struct MppiParams {
  int N = 15;
  int M = 4096;
  double lambda = 1.0;
  // Injected-to-model noise ratio; infinity means nu^-1 = 0.
  double nu = std::numeric_limits<double>::infinity();
  double alpha = 0.2;
  Eigen::MatrixXd R = 0.01 * Eigen::MatrixXd::Identity(2, 2);
  Eigen::MatrixXd sigma_eps = Eigen::Vector2d(0.49, 0.12).asDiagonal();
  // Optional actuator box applied to every sampled control; empty = none.
  Eigen::VectorXd u_min;
  Eigen::VectorXd u_max;
  int workers = 1;

  void validate(int n_u) const;
  // ceil(alpha M) samples run with v = 0; they are the last indices.
  int uncontrolled_count() const;
  int controlled_count() const { return M - uncontrolled_count(); }
};

// Counter-based generator: each (seed, iteration, sample) triple gets its
// own stream, so evaluation order cannot change the draws.
class NoiseStream {
 public:
  using result_type = std::uint64_t;

  NoiseStream(std::uint64_t seed, std::uint64_t iteration, std::uint64_t sample);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()();

 private:
  std::uint64_t state_;
};

// Samples are stored side by side: sample m owns columns [m N, (m+1) N) of
// the control-space arrays and [m (N+1), (m+1)(N+1)) of `states`.
struct SampleBatch {
  int M = 0;
  int N = 0;
  int controlled = 0;            // samples [0, controlled) use the mean
  Eigen::MatrixXd noises;        // eps_k actually applied (u - v)
  Eigen::MatrixXd mean_parts;    // v_k
  Eigen::MatrixXd controls;      // u_k = v_k + eps_k
  Eigen::MatrixXd states;        // x_0 ... x_N
  Eigen::VectorXd costs;         // S_m

  SampleBatch() = default;
  SampleBatch(int M, int N, int n_x, int n_u);

  auto noise(int m) { return noises.middleCols(m * N, N); }
  auto noise(int m) const { return noises.middleCols(m * N, N); }
  auto mean_part(int m) { return mean_parts.middleCols(m * N, N); }
  auto mean_part(int m) const { return mean_parts.middleCols(m * N, N); }
  auto control(int m) { return controls.middleCols(m * N, N); }
  auto control(int m) const { return controls.middleCols(m * N, N); }
  auto state(int m) { return states.middleCols(m * (N + 1), N + 1); }
  auto state(int m) const { return states.middleCols(m * (N + 1), N + 1); }
};

struct IterationDiagnostics {
  double min_cost = 0.0;
  double mean_cost = 0.0;
  double effective_sample_size = 0.0;  // (sum w)^2 / sum w^2
};

struct MppiIterationResult {
  ControlSequence mean;
  SampleBatch batch;
  Eigen::VectorXd weights;
  IterationDiagnostics diagnostics;
};

// Cholesky-shaped Gaussian draws, n_u x N, for one sample.
Eigen::MatrixXd sample_noise_sequence(const Eigen::MatrixXd& sigma_chol, int N,
                                      std::uint64_t seed, std::uint64_t iteration,
                                      std::uint64_t sample);
// All M sequences side by side (n_u x N M).
Eigen::MatrixXd sample_noise(const MppiParams& params, std::uint64_t seed,
                             std::uint64_t iteration);
Eigen::MatrixXd noise_cholesky(const Eigen::MatrixXd& sigma_eps);

// q(x) + (1 - 1/nu)/2 eps'R eps + v'R eps + 1/2 v'R v.
double running_cost(double state_cost, const ConstVecRef& v, const ConstVecRef& eps,
                    const Eigen::MatrixXd& R, double nu);
double running_cost(const ConstVecRef& x, const ConstVecRef& v, const ConstVecRef& eps,
                    const MppiParams& params, const StateCostFn& state_cost);

// phi(x_N) + sum_k running_cost(x_k, v_k, eps_k).
double trajectory_cost(const Eigen::Ref<const Eigen::MatrixXd>& states,
                       const Eigen::Ref<const Eigen::MatrixXd>& v_seq,
                       const Eigen::Ref<const Eigen::MatrixXd>& eps_seq,
                       const MppiParams& params, const CostModel& cost);

// exp(-(S_m - min S) / lambda).
Eigen::VectorXd compute_weights(const Eigen::VectorXd& costs, double lambda);

// sum_m w_m u^(m) / sum_m w_m, folded in sample order.
ControlSequence update_mean(const SampleBatch& batch, const Eigen::VectorXd& weights);

ControlSequence receding_horizon_shift(const ControlSequence& mean);

double effective_sample_size(const Eigen::VectorXd& weights);

// Sample covariance (divide by n-1) of x_N over samples [0, count).
Eigen::MatrixXd empirical_terminal_covariance(const SampleBatch& batch, int count);

MppiIterationResult mppi_iteration(const ConstVecRef& x0, const ControlSequence& mean,
                                   const MppiParams& params, const CostModel& cost,
                                   const Dynamics& dynamics, std::uint64_t seed,
                                   std::uint64_t iteration);

}  // namespace ccmppi

#endif  // CCMPPI_MPPI_HPP_
