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

// Covariance-controlled MPPI. Each iteration linearizes the dynamics along
// the rollout of the current mean, synthesizes a feedback gain that bounds
// the terminal spread of the samples, and then samples closed-loop
// trajectories u_k = w_k + eps_k + K_k y_k before the usual MPPI update.

#ifndef CCMPPI_CCMPPI_HPP_
#define CCMPPI_CCMPPI_HPP_

#include <cstdint>
#include <string>

#include <Eigen/Core>

#include "ccmppi/covsteer.hpp"
#include "ccmppi/dynamics.hpp"
#include "ccmppi/mppi.hpp"

namespace ccmppi {

struct CcMppiParams {
  MppiParams mppi;  // owns sigma_eps for both the sampler and the gain synthesis
  // Terminal bound. If sigma_f_scale > 0 the bound is recomputed every
  // iteration as sigma_f_scale times the open-loop terminal covariance and
  // `sigma_f` is ignored.
  Eigen::MatrixXd sigma_f;
  double sigma_f_scale = 0.0;
  CovCostWeights weights;
  GainMode mode = GainMode::kHard;
  GainSolverOptions solver;

  void validate(int n_x, int n_u) const;
  CovarianceSpec spec(const Eigen::MatrixXd& resolved_sigma_f) const {
    return {mppi.sigma_eps, resolved_sigma_f};
  }
};

struct CcIterationDiagnostics : IterationDiagnostics {
  double covariance_cost = 0.0;              // J(K)
  Eigen::MatrixXd sigma_f;                   // bound used this iteration
  Eigen::MatrixXd predicted_terminal_cov;    // Sigma_N(K), linearized
  double margin = 0.0;                       // lambda_max(Sigma_N - Sigma_f)
  GainMode mode_used = GainMode::kHard;
  double penalty_mu = 1.0;  // from the hard solve; reusable as solver.mu_hint
  int linear_solves = 0;
  bool fell_back_to_soft = false;
  std::string fallback_reason;
};

struct CcIterationResult {
  ControlSequence mean;
  SampleBatch batch;
  Eigen::VectorXd weights;
  FeedbackGain gain;
  StateTrajectory reference_states;
  LtvModel ltv;
  AugmentedSystem aug;
  CcIterationDiagnostics diagnostics;
};

// One CC-MPPI iteration. If `gain_override` is given it replaces the
// synthesized gain (K = 0 reduces the iteration to plain MPPI).
CcIterationResult ccmppi_iteration(const ConstVecRef& x0, const ControlSequence& mean,
                                   const CcMppiParams& params, const CostModel& cost,
                                   const Dynamics& dynamics, std::uint64_t seed,
                                   std::uint64_t iteration,
                                   const FeedbackGain* gain_override = nullptr);

struct ClosedLoopSample {
  StateTrajectory states;  // n_x x (N+1), nonlinear rollout
  StateTrajectory aux;     // n_x x (N+1), y_0 = 0
  ControlSequence controls;
};

ClosedLoopSample closed_loop_sample(const ConstVecRef& x0, const ControlSequence& w,
                                    const FeedbackGain& K, const ControlSequence& eps,
                                    const LtvModel& ltv, const Dynamics& dynamics);

struct CovarianceReport {
  Eigen::MatrixXd analytic;   // terminal_covariance(aug, K, spec)
  Eigen::MatrixXd empirical;  // sample covariance of x_N, controlled samples
  double relative_gap = 0.0;  // ||empirical - analytic||_F / ||analytic||_F
};

CovarianceReport predicted_vs_empirical_report(const AugmentedSystem& aug, const FeedbackGain& K,
                                               const CovarianceSpec& spec,
                                               const SampleBatch& batch);

}  // namespace ccmppi

#endif  // CCMPPI_CCMPPI_HPP_
