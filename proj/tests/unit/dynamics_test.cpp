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
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "ccmppi/errors.hpp"

namespace ccmppi {
namespace {

// Plain re-statement of the continuous model, integrated with one Euler step.
Eigen::Vector4d reference_step(const Eigen::Vector4d& x, const Eigen::Vector2d& u, double l_f,
                               double l_r, double dt) {
  const double beta = std::atan(l_r / (l_f + l_r) * std::tan(u[1]));
  Eigen::Vector4d f;
  f << x[3] * std::cos(x[2] + beta), x[3] * std::sin(x[2] + beta), x[3] / l_r * std::sin(beta),
      u[0];
  return x + f * dt;
}

TEST(BicycleModel, MatchesContinuousModelEulerStep) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> pos(-5, 5), ang(-3, 3), vel(-2, 5), thr(-10, 10),
      steer(-1.2, 1.2);
  const BicycleModel model;
  for (int i = 0; i < 50; ++i) {
    const Eigen::Vector4d x(pos(rng), pos(rng), ang(rng), vel(rng));
    const Eigen::Vector2d u(thr(rng), steer(rng));
    Eigen::Vector4d next;
    model.step(x, u, next);
    EXPECT_TRUE(next.isApprox(reference_step(x, u, 0.15, 0.15, 0.02), 1e-14));
  }
}

TEST(BicycleModel, StraightDriveAdvancesByVdt) {
  const VehicleState s = step({0.0, 0.0, 0.0, 2.0}, {0.0, 0.0}, BicycleParams{});
  EXPECT_DOUBLE_EQ(s.x, 0.04);
  EXPECT_DOUBLE_EQ(s.y, 0.0);
  EXPECT_DOUBLE_EQ(s.phi, 0.0);
  EXPECT_DOUBLE_EQ(s.v, 2.0);
}

TEST(BicycleModel, SteeringTurnsLeftForPositiveAngle) {
  const VehicleState s = step({0.0, 0.0, 0.0, 1.0}, {0.0, 0.3}, BicycleParams{});
  EXPECT_GT(s.y, 0.0);
  EXPECT_GT(s.phi, 0.0);
}

TEST(BicycleModel, JacobiansMatchCentralDifferences) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> pos(-3, 3), ang(-3, 3), vel(0.1, 4), thr(-5, 5),
      steer(-1.0, 1.0);
  const BicycleModel model;
  for (int i = 0; i < 100; ++i) {
    const Eigen::Vector4d x(pos(rng), pos(rng), ang(rng), vel(rng));
    const Eigen::Vector2d u(thr(rng), steer(rng));
    Eigen::MatrixXd A(4, 4), B(4, 2);
    model.jacobians(x, u, A, B);
    Eigen::MatrixXd Afd(4, 4), Bfd(4, 2);
    const double h = 1e-6;
    for (int j = 0; j < 4; ++j) {
      Eigen::Vector4d xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      Afd.col(j) = (reference_step(xp, u, 0.15, 0.15, 0.02) -
                    reference_step(xm, u, 0.15, 0.15, 0.02)) / (2 * h);
    }
    for (int j = 0; j < 2; ++j) {
      Eigen::Vector2d up = u, um = u;
      up[j] += h;
      um[j] -= h;
      Bfd.col(j) = (reference_step(x, up, 0.15, 0.15, 0.02) -
                    reference_step(x, um, 0.15, 0.15, 0.02)) / (2 * h);
    }
    EXPECT_LE((A - Afd).norm(), 1e-6 * std::max(1.0, Afd.norm())) << "sample " << i;
    EXPECT_LE((B - Bfd).norm(), 1e-6 * std::max(1.0, Bfd.norm())) << "sample " << i;
  }
}

TEST(BicycleModel, GenericFiniteDifferenceAgreesWithAnalytic) {
  const BicycleModel model;
  const Eigen::Vector4d x(0.3, -0.2, 0.7, 1.5);
  const Eigen::Vector2d u(0.5, -0.4);
  Eigen::MatrixXd A(4, 4), B(4, 2), Afd(4, 4), Bfd(4, 2);
  model.jacobians(x, u, A, B);
  finite_difference_jacobians(model, x, u, Afd, Bfd);
  EXPECT_LE((A - Afd).norm(), 1e-8);
  EXPECT_LE((B - Bfd).norm(), 1e-8);
}

TEST(BicycleModel, RejectsSteeringAtRightAngle) {
  const BicycleModel model;
  Eigen::Vector4d next;
  EXPECT_THROW(model.step(Eigen::Vector4d(0, 0, 0, 1), Eigen::Vector2d(0, std::numbers::pi / 2),
                          next),
               DomainError);
}

TEST(BicycleModel, RejectsNonFiniteState) {
  const BicycleModel model;
  Eigen::Vector4d next;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(model.step(Eigen::Vector4d(nan, 0, 0, 1), Eigen::Vector2d(0, 0), next),
               DomainError);
}

TEST(BicycleParams, ValidatesGeometry) {
  EXPECT_THROW((BicycleParams{0.0, 0.15, 0.02}.validate()), ValidationError);
  EXPECT_THROW((BicycleParams{0.15, 0.15, -0.02}.validate()), ValidationError);
  BicycleParams p;
  p.v_min = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(p.validate(), ValidationError);
  EXPECT_NO_THROW(BicycleParams{}.validate());
}

TEST(BicycleModel, SpeedFloorClampsAndFreezesVelocityRow) {
  BicycleParams p;
  p.v_min = 0.0;
  const BicycleModel model(p);
  const Eigen::Vector4d x(0, 0, 0, 0.05);
  const Eigen::Vector2d u(-10.0, 0.1);
  Eigen::Vector4d next;
  model.step(x, u, next);
  EXPECT_EQ(next[3], 0.0);

  Eigen::MatrixXd A(4, 4), B(4, 2);
  model.jacobians(x, u, A, B);
  EXPECT_EQ(A(3, 3), 0.0);
  EXPECT_EQ(B(3, 0), 0.0);

  // Above the floor the model is unchanged.
  model.jacobians(x, Eigen::Vector2d(1.0, 0.1), A, B);
  EXPECT_EQ(A(3, 3), 1.0);
  EXPECT_DOUBLE_EQ(B(3, 0), p.dt);
}

TEST(Linearize, ResidualReproducesReferenceStep) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  const BicycleParams p;
  const int N = 15;
  std::vector<ControlInput> w;
  for (int k = 0; k < N; ++k) w.push_back({n(rng), 0.3 * n(rng)});
  const auto xs = rollout({0.1, 0.2, 0.3, 1.5}, w, p);
  ASSERT_EQ(xs.size(), static_cast<std::size_t>(N + 1));
  const LtvModel ltv = linearize(xs, w, p);
  ASSERT_EQ(ltv.horizon(), N);
  for (int k = 0; k < N; ++k) {
    const Eigen::Vector4d lin =
        ltv.steps[k].A * xs[k].vec() + ltv.steps[k].B * w[k].vec() + ltv.steps[k].d;
    EXPECT_LE((lin - xs[k + 1].vec()).cwiseAbs().maxCoeff(), 1e-12) << "step " << k;
  }
}

TEST(Linearize, AffinePlantIsExact) {
  Eigen::Matrix2d A;
  A << 1, 0.1, 0, 1;
  const Eigen::Vector2d B(0.005, 0.1);
  const Eigen::Vector2d c(0.01, -0.02);
  const AffineDynamics plant(A, B, c);
  Eigen::MatrixXd controls(1, 4);
  controls << 1, -1, 0.5, 2;
  const StateTrajectory xs = rollout(plant, Eigen::Vector2d(1, 0), controls);
  const LtvModel ltv = linearize(plant, xs, controls);
  for (const auto& s : ltv.steps) {
    EXPECT_TRUE(s.A.isApprox(A));
    EXPECT_TRUE(s.B.isApprox(Eigen::MatrixXd(B)));
    EXPECT_TRUE(s.d.isApprox(Eigen::VectorXd(c)));
  }
}

TEST(Rollout, IntoBufferMatchesAllocatingVersion) {
  const BicycleModel model;
  Eigen::MatrixXd controls = Eigen::MatrixXd::Random(2, 10) * 0.5;
  StateTrajectory buffer(4, 11);
  rollout_into(model, Eigen::Vector4d(0, 0, 0, 1), controls, buffer);
  EXPECT_EQ(buffer, rollout(model, Eigen::Vector4d(0, 0, 0, 1), controls));
}

}  // namespace
}  // namespace ccmppi
