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

#include "ccmppi/environment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <sstream>

#include "ccmppi/errors.hpp"

namespace ccmppi {
namespace {

double cross(const Eigen::Vector2d& a, const Eigen::Vector2d& b) { return a.x() * b.y() - a.y() * b.x(); }

double sign_of(double turn) { return turn >= 0.0 ? 1.0 : -1.0; }

Eigen::Vector2d arc_center(const TrackSegment& seg) {
  return seg.start + sign_of(seg.turn) * seg.radius *
                         Eigen::Vector2d(-std::sin(seg.heading), std::cos(seg.heading));
}

}  // namespace

Eigen::Vector2d TrackSegment::point_at(double t) const {
  if (kind == SegmentKind::kStraight) {
    return start + t * Eigen::Vector2d(std::cos(heading), std::sin(heading));
  }
  const Eigen::Vector2d c = arc_center(*this);
  const double a = sign_of(turn) * t / radius;
  const Eigen::Vector2d a0 = start - c;
  const double ca = std::cos(a), sa = std::sin(a);
  return c + Eigen::Vector2d(ca * a0.x() - sa * a0.y(), sa * a0.x() + ca * a0.y());
}

double TrackSegment::heading_at(double t) const {
  return kind == SegmentKind::kStraight ? heading : heading + sign_of(turn) * t / radius;
}

Track Track::build(const Eigen::Vector2d& start, double heading, std::span<const Piece> pieces,
                   double width, bool closed) {
  if (!(width > 0.0)) throw ValidationError("Track: width must be positive");
  if (pieces.empty()) throw ValidationError("Track: no segments");
  Track track;
  track.width_ = width;
  track.closed_ = closed;
  Eigen::Vector2d p = start;
  double h = heading;
  double s = 0.0;
  for (const Piece& piece : pieces) {
    TrackSegment seg;
    seg.kind = piece.kind;
    seg.start = p;
    seg.heading = h;
    seg.s_start = s;
    if (piece.kind == SegmentKind::kStraight) {
      if (!(piece.length > 0.0)) throw ValidationError("Track: straight length must be positive");
      seg.length = piece.length;
    } else {
      if (!(piece.radius > 0.0) || piece.turn == 0.0) {
        throw ValidationError("Track: arcs need a positive radius and a nonzero turn");
      }
      seg.radius = piece.radius;
      seg.turn = piece.turn;
      seg.length = piece.radius * std::abs(piece.turn);
    }
    p = seg.end();
    h = seg.end_heading();
    s += seg.length;
    track.segments_.push_back(seg);
  }
  track.total_length_ = s;
  for (const auto& seg : track.segments_) {
    Geometry g;
    g.dir = Eigen::Vector2d(std::cos(seg.heading), std::sin(seg.heading));
    if (seg.kind == SegmentKind::kArc) {
      g.center = arc_center(seg);
      g.r0 = seg.start - g.center;
      g.r1 = seg.end() - g.center;
      g.side = sign_of(seg.turn);
    }
    track.geometry_.push_back(g);
  }
  if (closed) {
    const double gap = track.closure_gap();
    const double dh = std::remainder(h - heading, 2.0 * std::numbers::pi);
    if (gap > 1e-9 || std::abs(dh) > 1e-9) {
      std::ostringstream msg;
      msg << "Track: closed track does not return to its start pose (gap " << gap
          << " m, heading error " << dh << " rad)";
      throw ValidationError(msg.str());
    }
  }
  return track;
}

std::vector<Track::Piece> Track::parse_pieces(const std::string& text) {
  std::vector<Piece> pieces;
  std::stringstream all(text);
  std::string item;
  while (std::getline(all, item, ';')) {
    std::istringstream in(item);
    std::string kind;
    if (!(in >> kind)) continue;
    Piece piece;
    if (kind == "S" || kind == "s") {
      if (!(in >> piece.length)) throw ConfigError("track piece '" + item + "': expected 'S <length>'");
    } else if (kind == "L" || kind == "R" || kind == "l" || kind == "r") {
      double deg = 0.0;
      if (!(in >> piece.radius >> deg)) {
        throw ConfigError("track piece '" + item + "': expected '" + kind + " <radius> <degrees>'");
      }
      piece.kind = SegmentKind::kArc;
      piece.turn = (kind == "L" || kind == "l" ? 1.0 : -1.0) * deg * std::numbers::pi / 180.0;
    } else {
      throw ConfigError("track piece '" + item + "': unknown kind '" + kind + "'");
    }
    std::string extra;
    if (in >> extra) throw ConfigError("track piece '" + item + "': trailing '" + extra + "'");
    pieces.push_back(piece);
  }
  return pieces;
}

double Track::closure_gap() const {
  return (segments_.back().end() - segments_.front().start).norm();
}

double Track::segment_distance(std::size_t i, const Eigen::Vector2d& p, double* t) const {
  const TrackSegment& seg = segments_[i];
  const Geometry& g = geometry_[i];
  if (seg.kind == SegmentKind::kStraight) {
    const double along = std::clamp((p - seg.start).dot(g.dir), 0.0, seg.length);
    if (t != nullptr) *t = along;
    return (p - seg.start - along * g.dir).norm();
  }
  const Eigen::Vector2d q = p - g.center;
  const double rq = q.norm();
  const double sweep = std::abs(seg.turn);
  bool inside = false;
  if (rq > 1e-12) {
    if (sweep <= std::numbers::pi) {
      inside = g.side * cross(g.r0, q) >= 0.0 && g.side * cross(q, g.r1) >= 0.0;
    } else {
      double ang = g.side * std::atan2(cross(g.r0, q), g.r0.dot(q));
      if (ang < 0.0) ang += 2.0 * std::numbers::pi;
      inside = ang <= sweep;
    }
  }
  if (inside) {
    if (t != nullptr) {
      double ang = g.side * std::atan2(cross(g.r0, q), g.r0.dot(q));
      if (ang < 0.0) ang += 2.0 * std::numbers::pi;
      *t = std::min(seg.radius * ang, seg.length);
    }
    return std::abs(rq - seg.radius);
  }
  const double d0 = (q - g.r0).norm();
  const double d1 = (q - g.r1).norm();
  if (t != nullptr) *t = d1 < d0 ? seg.length : 0.0;
  return std::min(d0, d1);
}

double Track::distance_to_centerline(const Eigen::Vector2d& p) const {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < segments_.size(); ++i) best = std::min(best, segment_distance(i, p, nullptr));
  return best;
}

TrackProjection Track::project(const Eigen::Vector2d& p) const {
  TrackProjection best;
  best.distance = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    const double d = segment_distance(i, p, nullptr);
    // Strict comparison keeps the smallest arclength on ties.
    if (d < best.distance) {
      best.distance = d;
      best.segment = static_cast<int>(i);
    }
  }
  double t = 0.0;
  const auto seg = static_cast<std::size_t>(best.segment);
  best.distance = segment_distance(seg, p, &t);
  best.s = segments_[seg].s_start + t;
  best.point = segments_[seg].point_at(t);
  if (closed_ && best.s >= total_length_) best.s -= total_length_;
  return best;
}

Eigen::Vector2d Track::point_at(double s) const {
  if (closed_) {
    s = std::fmod(s, total_length_);
    if (s < 0.0) s += total_length_;
  } else {
    s = std::clamp(s, 0.0, total_length_);
  }
  for (const auto& seg : segments_) {
    if (s <= seg.s_start + seg.length) return seg.point_at(s - seg.s_start);
  }
  return segments_.back().end();
}

double Track::heading_at(double s) const {
  if (closed_) {
    s = std::fmod(s, total_length_);
    if (s < 0.0) s += total_length_;
  } else {
    s = std::clamp(s, 0.0, total_length_);
  }
  for (const auto& seg : segments_) {
    if (s <= seg.s_start + seg.length) return seg.heading_at(s - seg.s_start);
  }
  return segments_.back().end_heading();
}

double Track::progress_delta(double a, double b) const {
  double d = b - a;
  if (closed_) {
    d = std::remainder(d, total_length_);
    if (d <= -0.5 * total_length_) d += total_length_;
  }
  return d;
}

double progress(const Track& track, const Eigen::Vector2d& position) {
  return track.project(position).s;
}

double lateral_deviation(const Track& track, const Eigen::Vector2d& position) {
  return track.distance_to_centerline(position);
}

double boundary_cost(const Track& track, const Eigen::Vector2d& position) {
  return lateral_deviation(track, position) <= 0.5 * track.width() ? 0.0 : kBoundaryPenalty;
}

double obstacle_cost(std::span<const Obstacle> obstacles, const Eigen::Vector2d& position,
                     ObstacleCostMode mode) {
  if (mode == ObstacleCostMode::kDiscontinuous) {
    for (const auto& o : obstacles) {
      if ((position - o.center).norm() <= o.radius) return kObstaclePenalty;
    }
    return 0.0;
  }
  double total = 0.0;
  for (const auto& o : obstacles) total += std::max(o.radius - (position - o.center).norm(), 0.0);
  return total;
}

namespace {

double state_cost_impl(const Track& track, std::span<const Obstacle> obstacles,
                       const CostWeights& weights, const Eigen::Vector2d& p) {
  return boundary_cost(track, p) + weights.c1 * obstacle_cost(obstacles, p, weights.obstacle_mode);
}

double terminal_cost_impl(const Track& track, const CostWeights& weights, const Eigen::Vector2d& p,
                          double s_origin) {
  const TrackProjection proj = track.project(p);
  const double ds = track.progress_delta(s_origin, proj.s);
  double progress_term = ds;
  if (weights.progress_mode == ProgressMode::kNormalized) {
    progress_term = std::clamp(ds / weights.progress_window, 0.0, 1.0);
  }
  return weights.c2 * (1.0 - progress_term) + kLateralWeight * proj.distance * proj.distance;
}

}  // namespace

double state_cost(const Track& track, std::span<const Obstacle> obstacles,
                  const CostWeights& weights, const VehicleState& state) {
  return state_cost_impl(track, obstacles, weights, {state.x, state.y});
}

double terminal_cost(const Track& track, const CostWeights& weights, const VehicleState& state,
                     double s_origin) {
  return terminal_cost_impl(track, weights, {state.x, state.y}, s_origin);
}

CostModel make_race_cost(const Track& track, std::vector<Obstacle> obstacles,
                         const CostWeights& weights, const Eigen::Vector2d& start_position) {
  if (!(weights.progress_window > 0.0)) throw ValidationError("CostWeights: progress_window must be > 0");
  struct Context {
    Track track;
    std::vector<Obstacle> obstacles;
    CostWeights weights;
    double s_origin;
  };
  auto ctx = std::make_shared<const Context>(
      Context{track, std::move(obstacles), weights, progress(track, start_position)});
  CostModel model;
  model.state_cost = [ctx](const ConstVecRef& x) {
    return state_cost_impl(ctx->track, ctx->obstacles, ctx->weights, {x[0], x[1]});
  };
  model.terminal_cost = [ctx](const ConstVecRef& x) {
    return terminal_cost_impl(ctx->track, ctx->weights, {x[0], x[1]}, ctx->s_origin);
  };
  return model;
}

}  // namespace ccmppi
