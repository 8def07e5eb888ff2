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

#include "ccmppi/ccmppi.hpp"

#include <string>

#include "ccmppi/errors.hpp"
#include "sampling.hpp"

namespace ccmppi {

void CcMppiParams::validate(int n_x, int n_u) const {
  mppi.validate(n_u);
  weights.validate(n_x, n_u);
  if (sigma_f_scale > 0.0) return;
  CovarianceSpec{mppi.sigma_eps, sigma_f}.validate(n_x, n_u);
}

CcIterationResult ccmppi_iteration(const ConstVecRef& x0, const ControlSequence& mean,
                                   const CcMppiParams& params, const CostModel& cost,
                                   const Dynamics& dynamics, std::uint64_t seed,
                                   std::uint64_t iteration, const FeedbackGain* gain_override) {
  const int nx = dynamics.state_dim(), nu = dynamics.input_dim();
  params.validate(nx, nu);
  const MppiParams& mp = params.mppi;
  if (mean.cols() != mp.N || mean.rows() != nu) {
    throw ValidationError("ccmppi_iteration: mean must be n_u x N");
  }

  CcIterationResult out;
  out.reference_states = rollout(dynamics, x0, mean);
  out.ltv = linearize(dynamics, out.reference_states, mean);
  out.aug = build_augmented(out.ltv);

  auto& diag = out.diagnostics;
  diag.sigma_f = params.sigma_f_scale > 0.0
                     ? Eigen::MatrixXd(params.sigma_f_scale *
                                       open_loop_terminal_covariance(out.aug, mp.sigma_eps))
                     : params.sigma_f;
  const CovarianceSpec spec = params.spec(diag.sigma_f);

  if (gain_override != nullptr) {
    if (gain_override->horizon() != mp.N) throw ValidationError("gain override: horizon mismatch");
    out.gain = *gain_override;
    diag.mode_used = params.mode;
  } else {
    diag.mode_used = params.mode;
    try {
      GainSolution sol = solve_gain(out.aug, spec, params.weights, params.mode, params.solver);
      out.gain = std::move(sol.gain);
      diag.penalty_mu = sol.penalty_mu;
      diag.linear_solves = sol.linear_solves;
    } catch (const InfeasibleError& e) {
      // A controller has to emit a command every period; degrade to the soft
      // terminal penalty and report it.
      out.gain = solve_gain(out.aug, spec, params.weights, GainMode::kSoft, params.solver).gain;
      diag.mode_used = GainMode::kSoft;
      diag.fell_back_to_soft = true;
      diag.fallback_reason = e.what();
    }
  }
  diag.covariance_cost = covariance_cost(out.aug, out.gain, spec, params.weights);
  diag.predicted_terminal_cov = terminal_covariance(out.aug, out.gain, spec);
  diag.margin = constraint_violation(diag.predicted_terminal_cov, diag.sigma_f);

  SampleBatch batch(mp.M, mp.N, nx, nu);
  const detail::SampleFeedback feedback{&out.gain, &out.ltv};
  detail::evaluate_batch(x0, mean, mp, cost, dynamics, seed, iteration, &feedback, batch);
  MppiIterationResult reduced = detail::reduce_batch(std::move(batch), mp);
  out.mean = std::move(reduced.mean);
  out.batch = std::move(reduced.batch);
  out.weights = std::move(reduced.weights);
  static_cast<IterationDiagnostics&>(diag) = reduced.diagnostics;
  return out;
}

ClosedLoopSample closed_loop_sample(const ConstVecRef& x0, const ControlSequence& w,
                                    const FeedbackGain& K, const ControlSequence& eps,
                                    const LtvModel& ltv, const Dynamics& dynamics) {
  const int N = static_cast<int>(w.cols());
  const int nx = dynamics.state_dim();
  if (eps.cols() != N || K.horizon() != N || ltv.horizon() != N || w.rows() != dynamics.input_dim()) {
    throw ValidationError("closed_loop_sample: inconsistent horizons");
  }
  ClosedLoopSample out;
  out.states.resize(nx, N + 1);
  out.aux.resize(nx, N + 1);
  out.controls.resize(w.rows(), N);
  out.states.col(0) = x0;
  out.aux.col(0).setZero();
  for (int k = 0; k < N; ++k) {
    out.controls.col(k) = w.col(k) + K.blocks[k] * out.aux.col(k) + eps.col(k);
    try {
      dynamics.step(out.states.col(k), out.controls.col(k), out.states.col(k + 1));
    } catch (const DomainError& e) {
      throw DomainError("closed-loop sample, step " + std::to_string(k) + ": " + e.what());
    }
    out.aux.col(k + 1) = ltv.steps[k].A * out.aux.col(k) + ltv.steps[k].B * eps.col(k);
  }
  return out;
}

CovarianceReport predicted_vs_empirical_report(const AugmentedSystem& aug, const FeedbackGain& K,
                                               const CovarianceSpec& spec,
                                               const SampleBatch& batch) {
  if (batch.controlled < 2) {
    throw ValidationError("covariance report: need at least 2 controlled samples");
  }
  CovarianceReport r;
  r.analytic = terminal_covariance(aug, K, spec);
  r.empirical = empirical_terminal_covariance(batch, batch.controlled);
  const double denom = r.analytic.norm();
  r.relative_gap = denom > 0.0 ? (r.empirical - r.analytic).norm() / denom
                               : (r.empirical - r.analytic).norm();
  return r;
}

}  // namespace ccmppi
