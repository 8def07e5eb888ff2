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

#ifndef CCMPPI_DYNAMICS_HPP_
#define CCMPPI_DYNAMICS_HPP_

#include <span>
#include <limits>
#include <vector>

#include <Eigen/Core>

namespace ccmppi {

using VecRef = Eigen::Ref<Eigen::VectorXd>;
using ConstVecRef = Eigen::Ref<const Eigen::VectorXd>;
using MatRef = Eigen::Ref<Eigen::MatrixXd>;

// Columns are time steps: states are n_x x (N+1), controls n_u x N.
using StateTrajectory = Eigen::MatrixXd;
using ControlSequence = Eigen::MatrixXd;

struct VehicleState {
  double x = 0.0;    // m
  double y = 0.0;    // m
  double phi = 0.0;  // rad, unwrapped
  double v = 0.0;    // m/s at the CoM

  Eigen::Vector4d vec() const { return {x, y, phi, v}; }
  static VehicleState from(const ConstVecRef& s) { return {s[0], s[1], s[2], s[3]}; }
};

struct ControlInput {
  double throttle = 0.0;  // m/s^2
  double steer = 0.0;     // rad, |steer| < pi/2

  Eigen::Vector2d vec() const { return {throttle, steer}; }
  static ControlInput from(const ConstVecRef& u) { return {u[0], u[1]}; }
};

struct BicycleParams {
  double l_f = 0.15;  // CoM to front axle, m
  double l_r = 0.15;  // CoM to rear axle, m
  double dt = 0.02;   // Euler step, s
  // Speed floor applied after each step (a drive train that cannot
  // reverse uses 0). -inf leaves the model untouched.
  double v_min = -std::numeric_limits<double>::infinity();

  void validate() const;
};

// Discrete-time map x_{k+1} = F(x_k, u_k). Controllers only see this
// interface, so any model with fixed dimensions can be plugged in.
class Dynamics {
 public:
  virtual ~Dynamics() = default;

  virtual int state_dim() const = 0;
  virtual int input_dim() const = 0;

  virtual void step(const ConstVecRef& x, const ConstVecRef& u, VecRef next) const = 0;

  // dF/dx and dF/du at (x, u). The default uses central differences with
  // step 1e-5 * max(1, |value|) per coordinate.
  virtual void jacobians(const ConstVecRef& x, const ConstVecRef& u, MatRef A,
                         MatRef B) const;

  Eigen::VectorXd operator()(const ConstVecRef& x, const ConstVecRef& u) const;
};

void finite_difference_jacobians(const Dynamics& dynamics, const ConstVecRef& x,
                                 const ConstVecRef& u, MatRef A, MatRef B);

// Kinematic single-track model, Euler-discretized:
//   x' = v cos(phi + beta), y' = v sin(phi + beta),
//   phi' = (v / l_r) sin(beta), v' = throttle,
//   tan(beta) = l_r / (l_f + l_r) * tan(steer).
class BicycleModel final : public Dynamics {
 public:
  explicit BicycleModel(BicycleParams params = {});

  int state_dim() const override { return 4; }
  int input_dim() const override { return 2; }
  const BicycleParams& params() const { return params_; }

  void step(const ConstVecRef& x, const ConstVecRef& u, VecRef next) const override;
  void jacobians(const ConstVecRef& x, const ConstVecRef& u, MatRef A,
                 MatRef B) const override;

 private:
  BicycleParams params_;
};

// x_{k+1} = A x_k + B u_k + c. Handy as an exactly-linear test plant.
class AffineDynamics final : public Dynamics {
 public:
  AffineDynamics(Eigen::MatrixXd A, Eigen::MatrixXd B, Eigen::VectorXd c);
  AffineDynamics(Eigen::MatrixXd A, Eigen::MatrixXd B);

  int state_dim() const override { return static_cast<int>(A_.rows()); }
  int input_dim() const override { return static_cast<int>(B_.cols()); }

  void step(const ConstVecRef& x, const ConstVecRef& u, VecRef next) const override;
  void jacobians(const ConstVecRef& x, const ConstVecRef& u, MatRef A,
                 MatRef B) const override;

 private:
  Eigen::MatrixXd A_;
  Eigen::MatrixXd B_;
  Eigen::VectorXd c_;
};

// Per-step linearization x_{k+1} ~ A_k x_k + B_k u_k + d_k.
struct LtvStep {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::VectorXd d;
};

struct LtvModel {
  std::vector<LtvStep> steps;
  int n_x = 0;
  int n_u = 0;

  int horizon() const { return static_cast<int>(steps.size()); }
};

// Bicycle-specific conveniences.
VehicleState step(const VehicleState& state, const ControlInput& input,
                  const BicycleParams& params);
std::vector<VehicleState> rollout(const VehicleState& x0,
                                  std::span<const ControlInput> controls,
                                  const BicycleParams& params);
LtvModel linearize(std::span<const VehicleState> reference_states,
                   std::span<const ControlInput> reference_controls,
                   const BicycleParams& params);

// Generic versions over any Dynamics.
StateTrajectory rollout(const Dynamics& dynamics, const ConstVecRef& x0,
                        const ControlSequence& controls);
// Writes into a preallocated n_x x (N+1) buffer; no allocation.
void rollout_into(const Dynamics& dynamics, const ConstVecRef& x0,
                  const ControlSequence& controls, StateTrajectory& states);
LtvModel linearize(const Dynamics& dynamics, const StateTrajectory& reference_states,
                   const ControlSequence& reference_controls);

}  // namespace ccmppi

#endif  // CCMPPI_DYNAMICS_HPP_
