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

// Race-track geometry and the state/terminal costs used on it.

#ifndef CCMPPI_ENVIRONMENT_HPP_
#define CCMPPI_ENVIRONMENT_HPP_

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ccmppi/dynamics.hpp"
#include "ccmppi/mppi.hpp"

namespace ccmppi {

inline constexpr double kBoundaryPenalty = 2000.0;
inline constexpr double kObstaclePenalty = 10.0;
inline constexpr double kLateralWeight = 500.0;

enum class SegmentKind { kStraight, kArc };

// A straight line or a circular arc of the centerline. `turn` is the signed
// heading change of an arc (left positive).
struct TrackSegment {
  SegmentKind kind = SegmentKind::kStraight;
  Eigen::Vector2d start = Eigen::Vector2d::Zero();
  double heading = 0.0;
  double length = 0.0;
  double radius = 0.0;
  double turn = 0.0;
  double s_start = 0.0;

  Eigen::Vector2d point_at(double t) const;  // t in [0, length]
  double heading_at(double t) const;
  Eigen::Vector2d end() const { return point_at(length); }
  double end_heading() const { return heading_at(length); }
};

struct TrackProjection {
  double s = 0.0;         // arclength of the nearest centerline point
  double distance = 0.0;  // unsigned lateral deviation
  Eigen::Vector2d point = Eigen::Vector2d::Zero();
  int segment = 0;
};

class Track {
 public:
  struct Piece {
    SegmentKind kind = SegmentKind::kStraight;
    double length = 0.0;  // straight only
    double radius = 0.0;  // arc only
    double turn = 0.0;    // arc only, signed radians
  };

  // Chains pieces head to tail starting at (start, heading). Closed tracks
  // must return to the start pose.
  static Track build(const Eigen::Vector2d& start, double heading, std::span<const Piece> pieces,
                     double width, bool closed);

  // "S 3.0; L 0.3 90; R 0.3 45; ..." (straight length, left/right arc radius
  // and degrees).
  static std::vector<Piece> parse_pieces(const std::string& text);

  const std::vector<TrackSegment>& segments() const { return segments_; }
  double width() const { return width_; }
  double total_length() const { return total_length_; }
  bool closed() const { return closed_; }
  // Distance between the start and the end of the chained centerline.
  double closure_gap() const;

  TrackProjection project(const Eigen::Vector2d& p) const;
  // Same as project(p).distance, without locating the nearest point.
  double distance_to_centerline(const Eigen::Vector2d& p) const;
  Eigen::Vector2d point_at(double s) const;
  double heading_at(double s) const;
  // Signed progress difference b - a; wrapped to (-L/2, L/2] on closed tracks.
  double progress_delta(double a, double b) const;

 private:
  // Per-segment constants for projection.
  struct Geometry {
    Eigen::Vector2d dir = Eigen::Vector2d::UnitX();  // straight heading
    Eigen::Vector2d center = Eigen::Vector2d::Zero();
    Eigen::Vector2d r0 = Eigen::Vector2d::Zero();    // center to arc start
    Eigen::Vector2d r1 = Eigen::Vector2d::Zero();    // center to arc end
    double side = 1.0;                               // +1 left turn, -1 right
  };
  // Distance from p to segment i, and the local arclength of the nearest
  // point when `want_t` is set.
  double segment_distance(std::size_t i, const Eigen::Vector2d& p, double* t) const;

  std::vector<TrackSegment> segments_;
  std::vector<Geometry> geometry_;
  double width_ = 0.0;
  double total_length_ = 0.0;
  bool closed_ = false;
};

struct Obstacle {
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double radius = 0.1;
};

enum class ObstacleCostMode { kDiscontinuous, kContinuous };
enum class ProgressMode { kNormalized, kRaw };

struct CostWeights {
  double c1 = 0.0;
  double c2 = 0.0;
  ObstacleCostMode obstacle_mode = ObstacleCostMode::kContinuous;
  ProgressMode progress_mode = ProgressMode::kNormalized;
  // Largest progress reachable in one horizon (v_max N dt), meters.
  double progress_window = 1.2;
};

double progress(const Track& track, const Eigen::Vector2d& position);
double lateral_deviation(const Track& track, const Eigen::Vector2d& position);
double boundary_cost(const Track& track, const Eigen::Vector2d& position);
double obstacle_cost(std::span<const Obstacle> obstacles, const Eigen::Vector2d& position,
                     ObstacleCostMode mode);
double state_cost(const Track& track, std::span<const Obstacle> obstacles,
                  const CostWeights& weights, const VehicleState& state);
// c2 (1 - s_norm) + 500 e^2 with progress measured from s_origin.
double terminal_cost(const Track& track, const CostWeights& weights, const VehicleState& state,
                     double s_origin);

// Binds the costs above to a CostModel for the controllers. The terminal
// cost measures progress from the iteration's start state.
CostModel make_race_cost(const Track& track, std::vector<Obstacle> obstacles,
                         const CostWeights& weights, const Eigen::Vector2d& start_position);

}  // namespace ccmppi

#endif  // CCMPPI_ENVIRONMENT_HPP_
