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

#include "ccmppi/covsteer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "ccmppi/errors.hpp"

namespace ccmppi {
namespace {

Eigen::MatrixXd sym(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

double min_eigenvalue(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

void require_psd(const Eigen::MatrixXd& m, int n, const char* name, bool strict) {
  if (m.rows() != n || m.cols() != n) {
    throw ValidationError(std::string(name) + ": expected " + std::to_string(n) + "x" +
                          std::to_string(n));
  }
  if (!m.allFinite()) throw ValidationError(std::string(name) + ": non-finite entries");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) {
    throw ValidationError(std::string(name) + ": not symmetric");
  }
  const double lmin = min_eigenvalue(m);
  if (strict ? !(lmin > 0.0) : lmin < -1e-12 * scale) {
    throw ValidationError(std::string(name) + (strict ? ": not positive definite"
                                                      : ": not positive semidefinite"));
  }
}

Eigen::MatrixXd project_psd(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym(m));
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

// Rows of calB belonging to state block j times the stacked gain, without
// forming the dense stacked K: (K calB) block row i = K_i calB_i.
Eigen::MatrixXd gain_times_calB(const AugmentedSystem& aug, const FeedbackGain& K) {
  const int nx = aug.n_x, nu = aug.n_u, N = aug.N;
  Eigen::MatrixXd KB(nu * N, nu * N);
  for (int i = 0; i < N; ++i) {
    KB.middleRows(i * nu, nu).noalias() = K.blocks[i] * aug.calB.middleRows(i * nx, nx);
  }
  return KB;
}

// E_N (I + calB K) calB, an n_x x n_u N matrix.
Eigen::MatrixXd terminal_map(const AugmentedSystem& aug, const FeedbackGain& K) {
  const Eigen::MatrixXd BN = aug.terminal_rows(aug.calB);
  return BN + BN * gain_times_calB(aug, K);
}

void check_gain_shape(const AugmentedSystem& aug, const FeedbackGain& K) {
  if (K.horizon() != aug.N) throw ValidationError("FeedbackGain: horizon mismatch");
  for (const auto& b : K.blocks) {
    if (b.rows() != aug.n_u || b.cols() != aug.n_x) {
      throw ValidationError("FeedbackGain: block must be n_u x n_x");
    }
  }
}

// The soft problem as a quadratic in the flattened gain:
//   J(z) = 0.5 z^T H z + b^T z + const.
// Sigma_y = calB Sbar calB^T is fixed; only the terminal weight changes
// between solves.
class SoftProblem {
 public:
  SoftProblem(const AugmentedSystem& aug, const Eigen::MatrixXd& sigma_eps,
              const CovCostWeights& weights)
      : aug_(aug), weights_(weights) {
    const int nx = aug.n_x, nu = aug.n_u, N = aug.N;
    const Eigen::MatrixXd sbar = stacked_noise_covariance(sigma_eps, N);
    sigma_y_ = aug.calB * sbar * aug.calB.transpose();
    dim_ = N * nu * nx;

    // Running-weight part of calB^T Qbar calB + Rbar and of calB^T Qbar Sigma_y.
    Eigen::MatrixXd QB(aug.calB.rows(), aug.calB.cols());
    QB.setZero();
    for (int j = 0; j < N; ++j) {
      QB.middleRows(j * nx, nx).noalias() = weights.Q * aug.calB.middleRows(j * nx, nx);
    }
    g_run_ = aug.calB.transpose() * QB;
    for (int i = 0; i < N; ++i) g_run_.block(i * nu, i * nu, nu, nu) += weights.R;
    qs_run_ = QB.transpose() * sigma_y_;
    BN_ = aug.terminal_rows(aug.calB);
    sigma_y_terminal_ = sigma_y_.middleRows(N * nx, nx);
  }

  int dim() const { return dim_; }
  const Eigen::MatrixXd& sigma_y() const { return sigma_y_; }

  void set_terminal_weight(const Eigen::MatrixXd& qf) {
    const int nx = aug_.n_x, nu = aug_.n_u, N = aug_.N;
    const Eigen::MatrixXd G = g_run_ + BN_.transpose() * qf * BN_;
    const Eigen::MatrixXd QS = qs_run_ + BN_.transpose() * qf * sigma_y_terminal_;
    const int blk = nu * nx;
    H_.resize(dim_, dim_);
    b_.resize(dim_);
    for (int i = 0; i < N; ++i) {
      const auto qs = QS.block(i * nu, i * nx, nu, nx);
      for (int c = 0; c < nx; ++c) {
        b_.segment(i * blk + c * nu, nu) = 2.0 * qs.col(c);
      }
      for (int k = 0; k < N; ++k) {
        const auto S = sigma_y_.block(i * nx, k * nx, nx, nx);
        const auto Gik = G.block(i * nu, k * nu, nu, nu);
        for (int c1 = 0; c1 < nx; ++c1) {
          for (int c2 = 0; c2 < nx; ++c2) {
            H_.block(i * blk + c1 * nu, k * blk + c2 * nu, nu, nu) = 2.0 * S(c1, c2) * Gik;
          }
        }
      }
    }
    // A ridge far below the working precision of the solve makes the
    // unobserved directions (K_0, part of K_1) resolve to zero and lets the
    // blocked Cholesky run; pivoted LDL^T is the fallback.
    const double ridge = 1e-12 * std::max(H_.diagonal().maxCoeff(), 1e-300);
    Eigen::MatrixXd Hr = H_;
    Hr.diagonal().array() += ridge;
    chol_.compute(Hr);
    use_chol_ = chol_.info() == Eigen::Success;
    if (!use_chol_) ldlt_.compute(H_);
  }

  Eigen::VectorXd gradient(const Eigen::VectorXd& z) const { return H_ * z + b_; }

  // Minimizer of the quadratic. H is only semidefinite: y_0 = 0 and a
  // rank-deficient Sigma_y leave directions of K unobserved.
  Eigen::VectorXd solve() const {
    if (use_chol_) return chol_.solve(-b_);
    return ldlt_.solve(-b_);
  }

 private:
  const AugmentedSystem& aug_;
  const CovCostWeights& weights_;
  Eigen::MatrixXd sigma_y_;
  Eigen::MatrixXd sigma_y_terminal_;
  Eigen::MatrixXd g_run_;
  Eigen::MatrixXd qs_run_;
  Eigen::MatrixXd BN_;
  Eigen::MatrixXd H_;
  Eigen::VectorXd b_;
  Eigen::LLT<Eigen::MatrixXd> chol_;
  Eigen::LDLT<Eigen::MatrixXd> ldlt_;
  bool use_chol_ = false;
  int dim_ = 0;
};

}  // namespace

FeedbackGain FeedbackGain::zeros(int N, int n_u, int n_x) {
  FeedbackGain K;
  K.blocks.assign(static_cast<std::size_t>(N), Eigen::MatrixXd::Zero(n_u, n_x));
  return K;
}

bool FeedbackGain::all_finite() const {
  return std::all_of(blocks.begin(), blocks.end(), [](const auto& b) { return b.allFinite(); });
}

Eigen::MatrixXd FeedbackGain::stacked(int n_x) const {
  const int N = horizon();
  if (N == 0) return {};
  const int nu = static_cast<int>(blocks.front().rows());
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(nu * N, n_x * (N + 1));
  for (int k = 0; k < N; ++k) K.block(k * nu, k * n_x, nu, n_x) = blocks[k];
  return K;
}

Eigen::VectorXd FeedbackGain::flatten() const {
  if (blocks.empty()) return {};
  const Eigen::Index blk = blocks.front().size();
  Eigen::VectorXd z(blk * horizon());
  for (int k = 0; k < horizon(); ++k) {
    z.segment(k * blk, blk) = Eigen::Map<const Eigen::VectorXd>(blocks[k].data(), blk);
  }
  return z;
}

FeedbackGain FeedbackGain::unflatten(const Eigen::VectorXd& z, int N, int n_u, int n_x) {
  const int blk = n_u * n_x;
  if (z.size() != static_cast<Eigen::Index>(blk) * N) {
    throw ValidationError("FeedbackGain::unflatten: size mismatch");
  }
  FeedbackGain K;
  K.blocks.reserve(static_cast<std::size_t>(N));
  for (int k = 0; k < N; ++k) {
    K.blocks.emplace_back(Eigen::Map<const Eigen::MatrixXd>(z.data() + k * blk, n_u, n_x));
  }
  return K;
}

void CovarianceSpec::validate(int n_x, int n_u) const {
  require_psd(sigma_eps, n_u, "sigma_eps", /*strict=*/true);
  require_psd(sigma_f, n_x, "sigma_f", /*strict=*/false);
}

CovCostWeights CovCostWeights::defaults(int n_x, int n_u) {
  return {Eigen::MatrixXd::Zero(n_x, n_x), Eigen::MatrixXd::Identity(n_x, n_x),
          0.01 * Eigen::MatrixXd::Identity(n_u, n_u)};
}

void CovCostWeights::validate(int n_x, int n_u) const {
  require_psd(Q, n_x, "Q", false);
  require_psd(Q_f, n_x, "Q_f", false);
  require_psd(R, n_u, "R", true);
}

AugmentedSystem build_augmented(const LtvModel& ltv) {
  const int N = ltv.horizon();
  const int nx = ltv.n_x, nu = ltv.n_u;
  if (N < 1) throw ValidationError("build_augmented: horizon must be >= 1");
  for (int k = 0; k < N; ++k) {
    const LtvStep& s = ltv.steps[k];
    if (s.A.rows() != nx || s.A.cols() != nx || s.B.rows() != nx || s.B.cols() != nu ||
        s.d.size() != nx) {
      throw ValidationError("build_augmented: dimension mismatch at step " + std::to_string(k));
    }
  }
  AugmentedSystem aug;
  aug.N = N;
  aug.n_x = nx;
  aug.n_u = nu;
  aug.calA = Eigen::MatrixXd::Zero(nx * (N + 1), nx);
  aug.calB = Eigen::MatrixXd::Zero(nx * (N + 1), nu * N);
  aug.calC = Eigen::MatrixXd::Zero(nx * (N + 1), nx * N);
  aug.d_stack.resize(nx * N);
  aug.calA.topRows(nx).setIdentity();
  // Block row k+1 = A_k * (block row k) plus the new input/residual column.
  for (int k = 0; k < N; ++k) {
    const LtvStep& s = ltv.steps[k];
    const auto prev = Eigen::seqN(k * nx, nx);
    const auto next = Eigen::seqN((k + 1) * nx, nx);
    aug.calA(next, Eigen::all) = s.A * aug.calA(prev, Eigen::all);
    aug.calB(next, Eigen::seqN(0, k * nu)) = s.A * aug.calB(prev, Eigen::seqN(0, k * nu));
    aug.calB.block((k + 1) * nx, k * nu, nx, nu) = s.B;
    aug.calC(next, Eigen::seqN(0, k * nx)) = s.A * aug.calC(prev, Eigen::seqN(0, k * nx));
    aug.calC.block((k + 1) * nx, k * nx, nx, nx).setIdentity();
    aug.d_stack.segment(k * nx, nx) = s.d;
  }
  return aug;
}

Eigen::VectorXd mean_trajectory(const AugmentedSystem& aug, const Eigen::VectorXd& x0,
                                const Eigen::VectorXd& w) {
  if (x0.size() != aug.n_x || w.size() != aug.n_u * aug.N) {
    throw ValidationError("mean_trajectory: dimension mismatch");
  }
  return aug.calA * x0 + aug.calB * w + aug.calC * aug.d_stack;
}

Eigen::VectorXd mean_trajectory(const AugmentedSystem& aug, const Eigen::VectorXd& x0,
                                const ControlSequence& w) {
  if (w.rows() != aug.n_u || w.cols() != aug.N) {
    throw ValidationError("mean_trajectory: control sequence must be n_u x N");
  }
  return mean_trajectory(aug, x0, Eigen::VectorXd(w.reshaped()));
}

Eigen::MatrixXd stacked_noise_covariance(const Eigen::MatrixXd& sigma_eps, int N) {
  const Eigen::Index nu = sigma_eps.rows();
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(nu * N, nu * N);
  for (int k = 0; k < N; ++k) s.block(k * nu, k * nu, nu, nu) = sigma_eps;
  return s;
}

Eigen::MatrixXd terminal_covariance(const AugmentedSystem& aug, const FeedbackGain& K,
                                    const CovarianceSpec& spec) {
  check_gain_shape(aug, K);
  if (spec.sigma_eps.rows() != aug.n_u || spec.sigma_eps.cols() != aug.n_u) {
    throw ValidationError("terminal_covariance: sigma_eps must be n_u x n_u");
  }
  const Eigen::MatrixXd T = terminal_map(aug, K);
  const int nu = aug.n_u;
  Eigen::MatrixXd TS(T.rows(), T.cols());
  for (int k = 0; k < aug.N; ++k) {
    TS.middleCols(k * nu, nu).noalias() = T.middleCols(k * nu, nu) * spec.sigma_eps;
  }
  return sym(TS * T.transpose());
}

Eigen::MatrixXd open_loop_terminal_covariance(const AugmentedSystem& aug,
                                              const Eigen::MatrixXd& sigma_eps) {
  return terminal_covariance(aug, FeedbackGain::zeros(aug.N, aug.n_u, aug.n_x),
                             {sigma_eps, Eigen::MatrixXd::Zero(aug.n_x, aug.n_x)});
}

double covariance_cost(const AugmentedSystem& aug, const FeedbackGain& K,
                       const CovarianceSpec& spec, const CovCostWeights& weights) {
  check_gain_shape(aug, K);
  const int nx = aug.n_x, N = aug.N, nu = aug.n_u;
  // With Sbar = L L^T and F = calB L: J = sum_j tr(Q_j X_j X_j^T) + tr(Rbar Y Y^T)
  // where X = (I + calB K) F and Y = K F.
  const Eigen::MatrixXd L = Eigen::LLT<Eigen::MatrixXd>(spec.sigma_eps).matrixL();
  Eigen::MatrixXd F(aug.calB.rows(), aug.calB.cols());
  for (int k = 0; k < N; ++k) F.middleCols(k * nu, nu).noalias() = aug.calB.middleCols(k * nu, nu) * L;
  Eigen::MatrixXd Y(nu * N, F.cols());
  for (int i = 0; i < N; ++i) Y.middleRows(i * nu, nu).noalias() = K.blocks[i] * F.middleRows(i * nx, nx);
  const Eigen::MatrixXd X = F + aug.calB * Y;
  double j = 0.0;
  for (int b = 0; b <= N; ++b) {
    const Eigen::MatrixXd& W = b < N ? weights.Q : weights.Q_f;
    const auto Xb = X.middleRows(b * nx, nx);
    j += (Xb.transpose() * W * Xb).trace();
  }
  for (int i = 0; i < N; ++i) {
    const auto Yi = Y.middleRows(i * nu, nu);
    j += (Yi.transpose() * weights.R * Yi).trace();
  }
  return std::max(j, 0.0);
}

FeedbackGain covariance_cost_gradient(const AugmentedSystem& aug, const FeedbackGain& K,
                                      const CovarianceSpec& spec,
                                      const CovCostWeights& weights) {
  check_gain_shape(aug, K);
  const int nx = aug.n_x, nu = aug.n_u, N = aug.N;
  const Eigen::MatrixXd sbar = stacked_noise_covariance(spec.sigma_eps, N);
  const Eigen::MatrixXd sigma_y = aug.calB * sbar * aug.calB.transpose();
  const Eigen::MatrixXd Ks = K.stacked(nx);
  Eigen::MatrixXd P = aug.calB * Ks;
  P.diagonal().array() += 1.0;
  Eigen::MatrixXd QP(P.rows(), P.cols());
  for (int b = 0; b <= N; ++b) {
    const Eigen::MatrixXd& W = b < N ? weights.Q : weights.Q_f;
    QP.middleRows(b * nx, nx).noalias() = W * P.middleRows(b * nx, nx);
  }
  Eigen::MatrixXd RK(Ks.rows(), Ks.cols());
  for (int i = 0; i < N; ++i) RK.middleRows(i * nu, nu).noalias() = weights.R * Ks.middleRows(i * nu, nu);
  const Eigen::MatrixXd dense = 2.0 * (aug.calB.transpose() * QP + RK) * sigma_y;
  FeedbackGain g;
  g.blocks.reserve(static_cast<std::size_t>(N));
  for (int i = 0; i < N; ++i) g.blocks.emplace_back(dense.block(i * nu, i * nx, nu, nx));
  return g;
}

double constraint_violation(const Eigen::MatrixXd& terminal_cov, const Eigen::MatrixXd& sigma_f) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym(terminal_cov) - sym(sigma_f),
                                                    Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

GainSolution solve_gain(const AugmentedSystem& aug, const CovarianceSpec& spec,
                        const CovCostWeights& weights, GainMode mode,
                        const GainSolverOptions& options) {
  const int nx = aug.n_x, nu = aug.n_u, N = aug.N;
  spec.validate(nx, nu);
  weights.validate(nx, nu);

  SoftProblem problem(aug, spec.sigma_eps, weights);
  GainSolution out;
  auto solve_with = [&](const Eigen::MatrixXd& qf) {
    problem.set_terminal_weight(qf);
    ++out.linear_solves;
    return problem.solve();
  };
  auto unflatten = [&](const Eigen::VectorXd& z) { return FeedbackGain::unflatten(z, N, nu, nx); };
  auto violation_of = [&](const Eigen::VectorXd& z) {
    return constraint_violation(terminal_covariance(aug, unflatten(z), spec), spec.sigma_f);
  };
  auto cost_of = [&](const Eigen::VectorXd& z) {
    return covariance_cost(aug, unflatten(z), spec, weights);
  };
  auto finish = [&](const Eigen::VectorXd& z, double mu) {
    out.gain = unflatten(z);
    if (!out.gain.all_finite()) throw DomainError("solve_gain: non-finite gain");
    out.cost = covariance_cost(aug, out.gain, spec, weights);
    out.terminal_covariance = terminal_covariance(aug, out.gain, spec);
    out.violation = constraint_violation(out.terminal_covariance, spec.sigma_f);
    out.penalty_mu = mu;
    return out;
  };

  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(problem.dim());
  const Eigen::VectorXd z_free = solve_with(weights.Q_f);
  if (mode == GainMode::kSoft) return finish(z_free, 1.0);

  const double tol = options.feasibility_tol;
  if (violation_of(z_free) <= tol) return finish(z_free, 1.0);
  out.constraint_active = true;

  // Penalty continuation on the terminal weight, along Sigma_f^{-1} so that
  // every direction is penalized relative to its own bound.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> bound_eig(sym(spec.sigma_f));
  const Eigen::VectorXd bound_vals =
      bound_eig.eigenvalues().cwiseMax(1e-12 * std::max(bound_eig.eigenvalues().maxCoeff(), 1e-300));
  const Eigen::MatrixXd& bound_vecs = bound_eig.eigenvectors();
  const Eigen::MatrixXd whiten =
      bound_vecs * bound_vals.cwiseInverse().cwiseSqrt().asDiagonal() * bound_vecs.transpose();
  const double weight_scale = std::max(weights.Q_f.cwiseAbs().maxCoeff(), 1.0);
  auto normalized = [&](const Eigen::MatrixXd& m) {
    return Eigen::MatrixXd(sym(m) * (weight_scale / m.cwiseAbs().maxCoeff()));
  };
  Eigen::MatrixXd penalty_dir = normalized(whiten * whiten);
  auto qf_at = [&](double mu) { return Eigen::MatrixXd(weights.Q_f + (mu - 1.0) * penalty_dir); };

  double mu_lo = 1.0, mu_hi = 0.0;
  Eigen::VectorXd z = z_free, z_feas;
  auto try_mu = [&](double mu) {
    z = solve_with(qf_at(mu));
    if (violation_of(z) <= tol) {
      mu_hi = mu;
      z_feas = z;
      return true;
    }
    mu_lo = mu;
    return false;
  };
  double mu_next = std::max(options.mu_start, 1.0) * options.mu_factor;
  if (options.mu_hint > 1.0 && options.mu_hint <= options.mu_max) {
    // Bracket [hint / 4, hint] first; widen downward only if needed.
    if (try_mu(options.mu_hint)) {
      if (options.mu_hint / 4.0 > 1.0 && try_mu(options.mu_hint / 4.0)) mu_lo = 1.0;
    } else {
      mu_next = options.mu_hint * options.mu_factor;
    }
  }
  for (double mu = mu_next; mu_hi == 0.0 && mu <= options.mu_max * (1.0 + 1e-12);
       mu *= options.mu_factor) {
    try_mu(mu);
  }
  // Still infeasible: reshape the direction toward the violated eigenspace
  // of the whitened covariance (exponentiated gradient on the weight).
  for (int round = 0; mu_hi == 0.0 && round < options.reweight_rounds; ++round) {
    const Eigen::MatrixXd white_cov = whiten * terminal_covariance(aug, unflatten(z), spec) * whiten;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym(white_cov));
    const Eigen::VectorXd gain =
        (4.0 * (es.eigenvalues().array() - es.eigenvalues().maxCoeff())).exp().matrix();
    const Eigen::MatrixXd emphasis = es.eigenvectors() * gain.asDiagonal() * es.eigenvectors().transpose();
    const Eigen::MatrixXd current = whiten.inverse() * penalty_dir * whiten.inverse();
    penalty_dir = normalized(whiten * sym(current / current.trace() + emphasis / emphasis.trace()) * whiten);
    mu_lo = 1.0;
    try_mu(options.mu_max);
  }
  if (mu_hi == 0.0) {
    throw InfeasibleError("solve_gain: terminal covariance bound infeasible up to mu = " +
                              std::to_string(options.mu_max) + " (violation " +
                              std::to_string(violation_of(z)) + ")",
                          terminal_covariance(aug, unflatten(z), spec));
  }

  // Smallest feasible mu on the continuation path.
  for (int it = 0; it < options.bisection_steps && mu_hi / mu_lo > 1.0 + options.mu_rel_tol; ++it) {
    const double mu = std::sqrt(mu_lo * mu_hi);
    const Eigen::VectorXd zm = solve_with(qf_at(mu));
    if (violation_of(zm) <= tol) {
      mu_hi = mu;
      z_feas = zm;
    } else {
      mu_lo = mu;
    }
  }

  Eigen::VectorXd best = z_feas;
  double best_cost = cost_of(best);
  // Moves from the incumbent toward `target` as far as the bound allows.
  // Along z(t) = best + t (target - best) the terminal map is affine in t,
  // so Sigma_N(t) = A0 + t A1 + t^2 A2 and J(t) is a scalar quadratic. The
  // feasible set is convex, so the feasible part of the segment is [0, t_max].
  const Eigen::MatrixXd sbar = stacked_noise_covariance(spec.sigma_eps, N);
  auto improve_toward = [&](const Eigen::VectorXd& target) {
    const Eigen::MatrixXd T0 = terminal_map(aug, unflatten(best));
    const Eigen::MatrixXd T1 = terminal_map(aug, unflatten(target)) - T0;
    const Eigen::MatrixXd S0 = sbar * T0.transpose();
    const Eigen::MatrixXd A0 = sym(T0 * S0);
    const Eigen::MatrixXd A1 = sym(T1 * S0) * 2.0;
    const Eigen::MatrixXd A2 = sym(T1 * sbar * T1.transpose());
    auto feasible_at = [&](double t) {
      return constraint_violation(A0 + t * A1 + t * t * A2, spec.sigma_f) <= tol;
    };
    double t_max = 1.0;
    if (!feasible_at(1.0)) {
      double lo = 0.0, hi = 1.0;
      for (int i = 0; i < 50; ++i) {
        const double t = 0.5 * (lo + hi);
        (feasible_at(t) ? lo : hi) = t;
      }
      t_max = lo;
    }
    if (t_max <= 0.0) return;
    const Eigen::VectorXd d = target - best;
    const double j0 = best_cost;
    const double jh = cost_of(best + 0.5 * d);
    const double j1 = cost_of(target);
    const double a = 2.0 * (j1 - 2.0 * jh + j0);
    const double b = 4.0 * jh - 3.0 * j0 - j1;
    double t = t_max;
    if (a > 0.0) t = std::clamp(-b / (2.0 * a), 0.0, t_max);
    if (t <= 0.0) return;
    const Eigen::VectorXd cand = best + t * d;
    const double c = cost_of(cand);
    if (c < best_cost && violation_of(cand) <= tol) {
      best = cand;
      best_cost = c;
    }
  };
  if (violation_of(zero) <= tol && cost_of(zero) < best_cost) {
    best = zero;
    best_cost = cost_of(zero);
  }
  improve_toward(z_free);

  // Projected ascent on the multiplier of the terminal bound. For a fixed
  // multiplier Lambda the Lagrangian is the soft problem with Q_f + Lambda.
  Eigen::MatrixXd lambda = (mu_hi - 1.0) * penalty_dir;
  Eigen::MatrixXd prev_grad;
  double step = 0.0;
  Eigen::VectorXd zl = z_feas;
  for (int it = 0; it < options.polish_iterations; ++it) {
    zl = solve_with(weights.Q_f + lambda);
    const Eigen::MatrixXd grad =
        sym(terminal_covariance(aug, unflatten(zl), spec)) - sym(spec.sigma_f);
    improve_toward(zl);
    const double gnorm = grad.norm();
    if (gnorm == 0.0) break;
    // Complementary slackness and primal feasibility reached.
    if (constraint_violation(grad, Eigen::MatrixXd::Zero(nx, nx)) <= tol &&
        std::abs((lambda * grad).trace()) <= 1e-9 * std::max(1.0, best_cost)) {
      break;
    }
    if (it == 0) {
      step = 0.25 * std::max(lambda.norm(), 1.0) / gnorm;
    } else if ((grad.array() * prev_grad.array()).sum() < 0.0) {
      step *= 0.5;
    } else {
      step *= 1.5;
    }
    prev_grad = grad;
    lambda = project_psd(lambda + step * grad);
  }
  return finish(best, mu_hi);
}

}  // namespace ccmppi
