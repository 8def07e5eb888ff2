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

// Covariance steering for sampled rollouts.
//
// Given the linearization of the dynamics along the reference trajectory,
// the stacked trajectory of a sample driven by
//
//   u_k = w_k + eps_k + K_k y_k,   y_{k+1} = A_k y_k + B_k eps_k,  y_0 = 0
//
// is  x = calA x0 + calB (w + K y) + calC d + calB eps,  with y = calB eps.
// Its deviation from the mean is (I + calB K) calB eps, so K shapes the
// spread of the samples without moving their mean. The gain is chosen by
// minimizing
//
//   J(K) = tr(((I + calB K)^T Qbar (I + calB K) + K^T Rbar K) calB Sbar calB^T)
//
// optionally subject to the terminal bound  Sigma_N(K) <= Sigma_f.

#ifndef CCMPPI_COVSTEER_HPP_
#define CCMPPI_COVSTEER_HPP_

#include <vector>

#include <Eigen/Core>

#include "ccmppi/dynamics.hpp"

namespace ccmppi {

struct AugmentedSystem {
  Eigen::MatrixXd calA;     // n_x(N+1) x n_x
  Eigen::MatrixXd calB;     // n_x(N+1) x n_u N
  Eigen::MatrixXd calC;     // n_x(N+1) x n_x N
  Eigen::VectorXd d_stack;  // n_x N
  int N = 0;
  int n_x = 0;
  int n_u = 0;

  // Rows of the stack belonging to x_N.
  auto terminal_rows(const Eigen::MatrixXd& m) const { return m.middleRows(N * n_x, n_x); }
};

// One n_u x n_x block per step; the stacked gain is block diagonal with a
// zero block column for y_N.
struct FeedbackGain {
  std::vector<Eigen::MatrixXd> blocks;

  static FeedbackGain zeros(int N, int n_u, int n_x);
  int horizon() const { return static_cast<int>(blocks.size()); }
  bool all_finite() const;
  Eigen::MatrixXd stacked(int n_x) const;
  Eigen::VectorXd flatten() const;
  static FeedbackGain unflatten(const Eigen::VectorXd& z, int N, int n_u, int n_x);
};

struct CovarianceSpec {
  Eigen::MatrixXd sigma_eps;  // n_u x n_u, SPD
  Eigen::MatrixXd sigma_f;    // n_x x n_x, PSD

  void validate(int n_x, int n_u) const;
};

struct CovCostWeights {
  Eigen::MatrixXd Q;    // running state weight, PSD
  Eigen::MatrixXd Q_f;  // terminal state weight, PSD
  Eigen::MatrixXd R;    // control weight, SPD

  // Q = 0, Q_f = I, R = 0.01 I.
  static CovCostWeights defaults(int n_x, int n_u);
  void validate(int n_x, int n_u) const;
};

enum class GainMode { kHard, kSoft };

struct GainSolverOptions {
  double feasibility_tol = 1e-6;   // on lambda_max(Sigma_N - Sigma_f)
  double mu_start = 1.0;
  double mu_factor = 10.0;
  double mu_max = 1e8;
  int reweight_rounds = 20;        // direction updates at mu_max before giving up
  int bisection_steps = 40;
  double mu_rel_tol = 1e-3;        // stop bisecting once mu_hi / mu_lo < 1 + tol
  int polish_iterations = 20;
  // Penalty weight that was sufficient last time; the search brackets
  // around it first. 0 disables the hint.
  double mu_hint = 0.0;
};

struct GainSolution {
  FeedbackGain gain;
  double cost = 0.0;                     // J(K) with the caller's weights
  Eigen::MatrixXd terminal_covariance;   // Sigma_N(K)
  double violation = 0.0;                // lambda_max(Sigma_N - Sigma_f)
  double penalty_mu = 1.0;               // last continuation weight used
  int linear_solves = 0;
  bool constraint_active = false;        // unconstrained optimum was infeasible
};

AugmentedSystem build_augmented(const LtvModel& ltv);

// calA x0 + calB w + calC d. `w` is the stacked control (n_u N) or an
// n_u x N sequence.
Eigen::VectorXd mean_trajectory(const AugmentedSystem& aug, const Eigen::VectorXd& x0,
                                const Eigen::VectorXd& w);
Eigen::VectorXd mean_trajectory(const AugmentedSystem& aug, const Eigen::VectorXd& x0,
                                const ControlSequence& w);

// blkdiag(sigma_eps, ..., sigma_eps), n_u N square.
Eigen::MatrixXd stacked_noise_covariance(const Eigen::MatrixXd& sigma_eps, int N);

// E_N (I + calB K) calB Sbar calB^T (I + calB K)^T E_N^T, symmetrized.
Eigen::MatrixXd terminal_covariance(const AugmentedSystem& aug, const FeedbackGain& K,
                                    const CovarianceSpec& spec);
Eigen::MatrixXd open_loop_terminal_covariance(const AugmentedSystem& aug,
                                              const Eigen::MatrixXd& sigma_eps);

double covariance_cost(const AugmentedSystem& aug, const FeedbackGain& K,
                       const CovarianceSpec& spec, const CovCostWeights& weights);

// dJ/dK restricted to the block-diagonal pattern.
FeedbackGain covariance_cost_gradient(const AugmentedSystem& aug, const FeedbackGain& K,
                                      const CovarianceSpec& spec,
                                      const CovCostWeights& weights);

// lambda_max((Sigma_N + Sigma_N^T)/2 - (Sigma_f + Sigma_f^T)/2).
double constraint_violation(const Eigen::MatrixXd& terminal_cov, const Eigen::MatrixXd& sigma_f);

// Soft mode returns the unconstrained minimizer of J. Hard mode also
// enforces Sigma_N(K) <= Sigma_f: Q_f is raised by mu Sigma_f^{-1} for
// mu = 10, 100, ... (reshaping the direction if mu_max is not enough) until
// the bound holds, then the gain is polished by bisecting on mu and by
// projected ascent on the terminal-block multiplier, keeping the best
// feasible iterate. Throws InfeasibleError if mu_max is still infeasible.
GainSolution solve_gain(const AugmentedSystem& aug, const CovarianceSpec& spec,
                        const CovCostWeights& weights, GainMode mode,
                        const GainSolverOptions& options = {});

}  // namespace ccmppi

#endif  // CCMPPI_COVSTEER_HPP_
