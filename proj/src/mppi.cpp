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

#include "ccmppi/mppi.hpp"

#include <cmath>
#include <random>
#include <string>

#include <Eigen/Cholesky>

#include "ccmppi/errors.hpp"
#include "ccmppi/parallel.hpp"
#include "sampling.hpp"

namespace ccmppi {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

void MppiParams::validate(int n_u) const {
  if (N < 1 || M < 1) throw ValidationError("MppiParams: N and M must be >= 1");
  if (!(lambda > 0.0)) throw ValidationError("MppiParams: lambda must be > 0");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("MppiParams: alpha must lie in [0, 1]");
  if (!(nu >= 1.0)) throw ValidationError("MppiParams: nu must be >= 1");
  if (R.rows() != n_u || R.cols() != n_u || sigma_eps.rows() != n_u || sigma_eps.cols() != n_u) {
    throw ValidationError("MppiParams: R and sigma_eps must be n_u x n_u");
  }
  if (Eigen::LLT<Eigen::MatrixXd>(R).info() != Eigen::Success) {
    throw ValidationError("MppiParams: R must be positive definite");
  }
  noise_cholesky(sigma_eps);
  if (u_min.size() != u_max.size() || (u_min.size() != 0 && u_min.size() != n_u)) {
    throw ValidationError("MppiParams: control bounds must both be empty or length n_u");
  }
  if (u_min.size() != 0 && (u_min.array() > u_max.array()).any()) {
    throw ValidationError("MppiParams: u_min > u_max");
  }
}

int MppiParams::uncontrolled_count() const {
  return std::min(M, static_cast<int>(std::ceil(alpha * M - 1e-9)));
}

NoiseStream::NoiseStream(std::uint64_t seed, std::uint64_t iteration, std::uint64_t sample)
    : state_(splitmix64(splitmix64(splitmix64(seed) ^ iteration) ^ (sample * 0xd1b54a32d192ed03ULL))) {}

NoiseStream::result_type NoiseStream::operator()() {
  state_ += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

SampleBatch::SampleBatch(int M_, int N_, int n_x, int n_u)
    : M(M_),
      N(N_),
      noises(n_u, static_cast<Eigen::Index>(M_) * N_),
      mean_parts(n_u, static_cast<Eigen::Index>(M_) * N_),
      controls(n_u, static_cast<Eigen::Index>(M_) * N_),
      states(n_x, static_cast<Eigen::Index>(M_) * (N_ + 1)),
      costs(M_) {}

Eigen::MatrixXd noise_cholesky(const Eigen::MatrixXd& sigma_eps) {
  if (sigma_eps.rows() != sigma_eps.cols()) throw ValidationError("sigma_eps must be square");
  Eigen::LLT<Eigen::MatrixXd> llt(sigma_eps);
  if (llt.info() != Eigen::Success || !sigma_eps.isApprox(sigma_eps.transpose())) {
    throw ValidationError("sigma_eps must be symmetric positive definite");
  }
  return llt.matrixL();
}

Eigen::MatrixXd sample_noise_sequence(const Eigen::MatrixXd& sigma_chol, int N,
                                      std::uint64_t seed, std::uint64_t iteration,
                                      std::uint64_t sample) {
  NoiseStream stream(seed, iteration, sample);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::Index nu = sigma_chol.rows();
  Eigen::MatrixXd z(nu, N);
  for (int k = 0; k < N; ++k) {
    for (Eigen::Index i = 0; i < nu; ++i) z(i, k) = normal(stream);
  }
  return sigma_chol.triangularView<Eigen::Lower>() * z;
}

Eigen::MatrixXd sample_noise(const MppiParams& params, std::uint64_t seed,
                             std::uint64_t iteration) {
  const Eigen::MatrixXd L = noise_cholesky(params.sigma_eps);
  Eigen::MatrixXd all(L.rows(), static_cast<Eigen::Index>(params.M) * params.N);
  parallel_for(params.M, params.workers, [&](int m) {
    all.middleCols(static_cast<Eigen::Index>(m) * params.N, params.N) =
        sample_noise_sequence(L, params.N, seed, iteration, static_cast<std::uint64_t>(m));
  });
  return all;
}

double running_cost(double state_cost, const ConstVecRef& v, const ConstVecRef& eps,
                    const Eigen::MatrixXd& R, double nu) {
  const double inv_nu = std::isinf(nu) ? 0.0 : 1.0 / nu;
  // a^T R b without temporaries; this runs M N times per iteration.
  const auto bilinear = [&R](const ConstVecRef& a, const ConstVecRef& b) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < R.cols(); ++j) acc += R.col(j).dot(a) * b[j];
    return acc;
  };
  return state_cost + 0.5 * (1.0 - inv_nu) * bilinear(eps, eps) + bilinear(v, eps) +
         0.5 * bilinear(v, v);
}

double running_cost(const ConstVecRef& x, const ConstVecRef& v, const ConstVecRef& eps,
                    const MppiParams& params, const StateCostFn& state_cost) {
  return running_cost(state_cost(x), v, eps, params.R, params.nu);
}

double trajectory_cost(const Eigen::Ref<const Eigen::MatrixXd>& states,
                       const Eigen::Ref<const Eigen::MatrixXd>& v_seq,
                       const Eigen::Ref<const Eigen::MatrixXd>& eps_seq,
                       const MppiParams& params, const CostModel& cost) {
  const Eigen::Index n = v_seq.cols();
  if (eps_seq.cols() != n || states.cols() != n + 1) {
    throw ValidationError("trajectory_cost: need N+1 states and N controls");
  }
  double s = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    s += running_cost(cost.state_cost(states.col(k)), v_seq.col(k), eps_seq.col(k), params.R,
                      params.nu);
  }
  s += cost.terminal_cost(states.col(n));
  return s;
}

Eigen::VectorXd compute_weights(const Eigen::VectorXd& costs, double lambda) {
  if (costs.size() == 0) throw ValidationError("compute_weights: empty cost vector");
  if (!(lambda > 0.0)) throw ValidationError("compute_weights: lambda must be > 0");
  for (Eigen::Index m = 0; m < costs.size(); ++m) {
    if (!std::isfinite(costs[m])) {
      throw DomainError("compute_weights: non-finite cost at sample " + std::to_string(m));
    }
  }
  const double beta = costs.minCoeff();
  Eigen::VectorXd w(costs.size());
  for (Eigen::Index m = 0; m < costs.size(); ++m) w[m] = std::exp(-(costs[m] - beta) / lambda);
  return w;
}

ControlSequence update_mean(const SampleBatch& batch, const Eigen::VectorXd& weights) {
  if (weights.size() != batch.M) throw ValidationError("update_mean: one weight per sample");
  ControlSequence acc = ControlSequence::Zero(batch.controls.rows(), batch.N);
  double total = 0.0;
  for (int m = 0; m < batch.M; ++m) {
    if (weights[m] == 0.0) continue;
    acc += weights[m] * batch.control(m);
    total += weights[m];
  }
  if (!(total > 0.0)) throw DomainError("update_mean: all weights are zero");
  return acc / total;
}

ControlSequence receding_horizon_shift(const ControlSequence& mean) {
  const Eigen::Index n = mean.cols();
  if (n == 0) return mean;
  ControlSequence out(mean.rows(), n);
  out.leftCols(n - 1) = mean.rightCols(n - 1);
  out.col(n - 1) = mean.col(n - 1);
  return out;
}

double effective_sample_size(const Eigen::VectorXd& weights) {
  const double s = weights.sum();
  const double s2 = weights.squaredNorm();
  return s2 > 0.0 ? s * s / s2 : 0.0;
}

Eigen::MatrixXd empirical_terminal_covariance(const SampleBatch& batch, int count) {
  if (count < 2 || count > batch.M) {
    throw ValidationError("empirical_terminal_covariance: need 2 <= count <= M samples");
  }
  const Eigen::Index nx = batch.states.rows();
  Eigen::MatrixXd xs(nx, count);
  for (int m = 0; m < count; ++m) xs.col(m) = batch.state(m).col(batch.N);
  const Eigen::VectorXd mu = xs.rowwise().mean();
  xs.colwise() -= mu;
  return xs * xs.transpose() / static_cast<double>(count - 1);
}

MppiIterationResult mppi_iteration(const ConstVecRef& x0, const ControlSequence& mean,
                                   const MppiParams& params, const CostModel& cost,
                                   const Dynamics& dynamics, std::uint64_t seed,
                                   std::uint64_t iteration) {
  params.validate(dynamics.input_dim());
  if (mean.cols() != params.N || mean.rows() != dynamics.input_dim()) {
    throw ValidationError("mppi_iteration: mean must be n_u x N");
  }
  SampleBatch batch(params.M, params.N, dynamics.state_dim(), dynamics.input_dim());
  detail::evaluate_batch(x0, mean, params, cost, dynamics, seed, iteration, nullptr, batch);
  return detail::reduce_batch(std::move(batch), params);
}

namespace detail {

void evaluate_batch(const ConstVecRef& x0, const ControlSequence& mean,
                    const MppiParams& params, const CostModel& cost, const Dynamics& dynamics,
                    std::uint64_t seed, std::uint64_t iteration, const SampleFeedback* feedback,
                    SampleBatch& batch) {
  const Eigen::MatrixXd L = noise_cholesky(params.sigma_eps);
  const int N = params.N;
  const int nx = dynamics.state_dim();
  const bool bounded = params.u_min.size() != 0;
  batch.controlled = params.controlled_count();

  parallel_for(params.M, params.workers, [&](int m) {
    const Eigen::MatrixXd raw = sample_noise_sequence(L, N, seed, iteration, static_cast<std::uint64_t>(m));
    const bool controlled = m < batch.controlled;
    auto eps = batch.noise(m);
    auto v = batch.mean_part(m);
    auto u = batch.control(m);
    auto x = batch.state(m);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(nx);
    Eigen::VectorXd y_next(nx);
    x.col(0) = x0;
    double s = 0.0;
    for (int k = 0; k < N; ++k) {
      if (!controlled) {
        v.col(k).setZero();
      } else if (feedback != nullptr) {
        v.col(k) = mean.col(k) + feedback->gain->blocks[k] * y;
      } else {
        v.col(k) = mean.col(k);
      }
      u.col(k) = v.col(k) + raw.col(k);
      if (bounded) u.col(k) = u.col(k).cwiseMax(params.u_min).cwiseMin(params.u_max);
      eps.col(k) = u.col(k) - v.col(k);
      try {
        dynamics.step(x.col(k), u.col(k), x.col(k + 1));
      } catch (const DomainError& e) {
        throw DomainError("sample " + std::to_string(m) + ", step " + std::to_string(k) + ": " + e.what());
      }
      if (feedback != nullptr) {
        const LtvStep& st = feedback->ltv->steps[k];
        y_next.noalias() = st.A * y;
        y_next.noalias() += st.B * raw.col(k);
        y.swap(y_next);
      }
      s += running_cost(cost.state_cost(x.col(k)), v.col(k), eps.col(k), params.R, params.nu);
    }
    s += cost.terminal_cost(x.col(N));
    batch.costs[m] = s;
  });
}

MppiIterationResult reduce_batch(SampleBatch batch, const MppiParams& params) {
  MppiIterationResult out;
  out.weights = compute_weights(batch.costs, params.lambda);
  out.mean = update_mean(batch, out.weights);
  out.diagnostics.min_cost = batch.costs.minCoeff();
  out.diagnostics.mean_cost = batch.costs.mean();
  out.diagnostics.effective_sample_size = effective_sample_size(out.weights);
  out.batch = std::move(batch);
  return out;
}

}  // namespace detail
}  // namespace ccmppi
