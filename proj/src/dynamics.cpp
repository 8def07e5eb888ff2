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

#include "ccmppi/dynamics.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "ccmppi/errors.hpp"

namespace ccmppi {
namespace {

constexpr const char* kStateFields[] = {"x", "y", "phi", "v"};

void check_finite_state(const ConstVecRef& s, const char* context) {
  for (int i = 0; i < s.size(); ++i) {
    if (!std::isfinite(s[i])) {
      const std::string field = s.size() == 4 ? kStateFields[i] : "x[" + std::to_string(i) + "]";
      throw DomainError(std::string(context) + ": non-finite state field '" + field + "'");
    }
  }
}

}  // namespace

void BicycleParams::validate() const {
  if (!(l_f > 0.0) || !(l_r > 0.0) || !(dt > 0.0)) {
    throw ValidationError("BicycleParams: l_f, l_r and dt must be positive");
  }
  if (std::isnan(v_min) || v_min == std::numeric_limits<double>::infinity()) {
    throw ValidationError("BicycleParams: v_min must be a number below +inf");
  }
}

Eigen::VectorXd Dynamics::operator()(const ConstVecRef& x, const ConstVecRef& u) const {
  Eigen::VectorXd next(state_dim());
  step(x, u, next);
  return next;
}

void Dynamics::jacobians(const ConstVecRef& x, const ConstVecRef& u, MatRef A,
                         MatRef B) const {
  finite_difference_jacobians(*this, x, u, A, B);
}

void finite_difference_jacobians(const Dynamics& dynamics, const ConstVecRef& x,
                                 const ConstVecRef& u, MatRef A, MatRef B) {
  const int nx = dynamics.state_dim();
  const int nu = dynamics.input_dim();
  Eigen::VectorXd xp = x, up = u;
  Eigen::VectorXd fp(nx), fm(nx);
  for (int i = 0; i < nx; ++i) {
    const double h = 1e-5 * std::max(1.0, std::abs(x[i]));
    xp[i] = x[i] + h;
    dynamics.step(xp, u, fp);
    xp[i] = x[i] - h;
    dynamics.step(xp, u, fm);
    xp[i] = x[i];
    A.col(i) = (fp - fm) / (2.0 * h);
  }
  for (int j = 0; j < nu; ++j) {
    const double h = 1e-5 * std::max(1.0, std::abs(u[j]));
    up[j] = u[j] + h;
    dynamics.step(x, up, fp);
    up[j] = u[j] - h;
    dynamics.step(x, up, fm);
    up[j] = u[j];
    B.col(j) = (fp - fm) / (2.0 * h);
  }
}

BicycleModel::BicycleModel(BicycleParams params) : params_(params) { params_.validate(); }

void BicycleModel::step(const ConstVecRef& x, const ConstVecRef& u, VecRef next) const {
  const double steer = u[1];
  if (!(std::abs(steer) < std::numbers::pi / 2)) {
    throw DomainError("bicycle step: steer " + std::to_string(steer) +
                      " outside (-pi/2, pi/2)");
  }
  const double c = params_.l_r / (params_.l_f + params_.l_r);
  const double beta = std::atan(c * std::tan(steer));
  const double heading = x[2] + beta;
  const double v = x[3];
  const double dt = params_.dt;
  next[0] = x[0] + v * std::cos(heading) * dt;
  next[1] = x[1] + v * std::sin(heading) * dt;
  next[2] = x[2] + v / params_.l_r * std::sin(beta) * dt;
  next[3] = std::max(x[3] + u[0] * dt, params_.v_min);
  check_finite_state(next, "bicycle step");
}

void BicycleModel::jacobians(const ConstVecRef& x, const ConstVecRef& u, MatRef A,
                             MatRef B) const {
  const double steer = u[1];
  if (!(std::abs(steer) < std::numbers::pi / 2)) {
    throw DomainError("bicycle jacobians: steer outside (-pi/2, pi/2)");
  }
  const double c = params_.l_r / (params_.l_f + params_.l_r);
  const double t = std::tan(steer);
  const double beta = std::atan(c * t);
  // d(beta)/d(steer) = c sec^2(steer) / (1 + c^2 tan^2(steer))
  const double dbeta = c * (1.0 + t * t) / (1.0 + c * c * t * t);
  const double heading = x[2] + beta;
  const double ch = std::cos(heading), sh = std::sin(heading);
  const double v = x[3];
  const double dt = params_.dt;

  A.setIdentity();
  A(0, 2) = -v * sh * dt;
  A(0, 3) = ch * dt;
  A(1, 2) = v * ch * dt;
  A(1, 3) = sh * dt;
  A(2, 3) = std::sin(beta) / params_.l_r * dt;

  B.setZero();
  B(0, 1) = -v * sh * dbeta * dt;
  B(1, 1) = v * ch * dbeta * dt;
  B(2, 1) = v / params_.l_r * std::cos(beta) * dbeta * dt;
  B(3, 0) = dt;
  if (x[3] + u[0] * dt < params_.v_min) {
    A(3, 3) = 0.0;
    B(3, 0) = 0.0;
  }
}

AffineDynamics::AffineDynamics(Eigen::MatrixXd A, Eigen::MatrixXd B, Eigen::VectorXd c)
    : A_(std::move(A)), B_(std::move(B)), c_(std::move(c)) {
  if (A_.rows() != A_.cols() || B_.rows() != A_.rows() || c_.size() != A_.rows()) {
    throw ValidationError("AffineDynamics: inconsistent dimensions");
  }
}

AffineDynamics::AffineDynamics(Eigen::MatrixXd A, Eigen::MatrixXd B)
    : AffineDynamics(A, B, Eigen::VectorXd::Zero(A.rows())) {}

void AffineDynamics::step(const ConstVecRef& x, const ConstVecRef& u, VecRef next) const {
  next.noalias() = A_ * x;
  next.noalias() += B_ * u;
  next += c_;
  check_finite_state(next, "affine step");
}

void AffineDynamics::jacobians(const ConstVecRef&, const ConstVecRef&, MatRef A,
                               MatRef B) const {
  A = A_;
  B = B_;
}

VehicleState step(const VehicleState& state, const ControlInput& input,
                  const BicycleParams& params) {
  const BicycleModel model(params);
  Eigen::Vector4d next;
  model.step(state.vec(), input.vec(), next);
  return VehicleState::from(next);
}

std::vector<VehicleState> rollout(const VehicleState& x0,
                                  std::span<const ControlInput> controls,
                                  const BicycleParams& params) {
  ControlSequence u(2, static_cast<Eigen::Index>(controls.size()));
  for (std::size_t k = 0; k < controls.size(); ++k) u.col(k) = controls[k].vec();
  const StateTrajectory xs = rollout(BicycleModel(params), x0.vec(), u);
  std::vector<VehicleState> out;
  out.reserve(xs.cols());
  for (Eigen::Index k = 0; k < xs.cols(); ++k) out.push_back(VehicleState::from(xs.col(k)));
  return out;
}

LtvModel linearize(std::span<const VehicleState> reference_states,
                   std::span<const ControlInput> reference_controls,
                   const BicycleParams& params) {
  StateTrajectory xs(4, static_cast<Eigen::Index>(reference_states.size()));
  for (std::size_t k = 0; k < reference_states.size(); ++k) xs.col(k) = reference_states[k].vec();
  ControlSequence us(2, static_cast<Eigen::Index>(reference_controls.size()));
  for (std::size_t k = 0; k < reference_controls.size(); ++k) us.col(k) = reference_controls[k].vec();
  return linearize(BicycleModel(params), xs, us);
}

void rollout_into(const Dynamics& dynamics, const ConstVecRef& x0,
                  const ControlSequence& controls, StateTrajectory& states) {
  const Eigen::Index n = controls.cols();
  states.col(0) = x0;
  for (Eigen::Index k = 0; k < n; ++k) {
    try {
      dynamics.step(states.col(k), controls.col(k), states.col(k + 1));
    } catch (const DomainError& e) {
      throw DomainError("rollout step " + std::to_string(k) + ": " + e.what());
    }
  }
}

StateTrajectory rollout(const Dynamics& dynamics, const ConstVecRef& x0,
                        const ControlSequence& controls) {
  if (controls.cols() < 1) throw ValidationError("rollout: need at least one control");
  if (controls.rows() != dynamics.input_dim() || x0.size() != dynamics.state_dim()) {
    throw ValidationError("rollout: dimension mismatch");
  }
  StateTrajectory states(dynamics.state_dim(), controls.cols() + 1);
  rollout_into(dynamics, x0, controls, states);
  return states;
}

LtvModel linearize(const Dynamics& dynamics, const StateTrajectory& reference_states,
                   const ControlSequence& reference_controls) {
  const int nx = dynamics.state_dim();
  const int nu = dynamics.input_dim();
  const Eigen::Index n = reference_controls.cols();
  if (n < 1 || reference_states.cols() < n + 1 || reference_states.rows() != nx ||
      reference_controls.rows() != nu) {
    throw ValidationError("linearize: need N+1 states aligned with N controls");
  }
  LtvModel ltv;
  ltv.n_x = nx;
  ltv.n_u = nu;
  ltv.steps.resize(static_cast<std::size_t>(n));
  Eigen::VectorXd next(nx);
  for (Eigen::Index k = 0; k < n; ++k) {
    LtvStep& s = ltv.steps[static_cast<std::size_t>(k)];
    s.A.resize(nx, nx);
    s.B.resize(nx, nu);
    const auto xr = reference_states.col(k);
    const auto wr = reference_controls.col(k);
    dynamics.jacobians(xr, wr, s.A, s.B);
    if (!s.A.allFinite() || !s.B.allFinite()) {
      throw DomainError("linearize: non-finite Jacobian at step " + std::to_string(k));
    }
    dynamics.step(xr, wr, next);
    s.d = next - s.A * xr - s.B * wr;
  }
  return ltv;
}

}  // namespace ccmppi
