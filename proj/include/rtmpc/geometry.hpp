#pragma once

#include <vector>

#include "rtmpc/common.hpp"

namespace rtmpc {

struct Circle {
  Vec2 center;  // [m]
  double radius = 0.0;
};

struct Scene {
  std::vector<Circle> obstacles;
  Vec2 workspace_lo{-2.1, -2.1};  // [m], axis-aligned workspace box
  Vec2 workspace_hi{2.1, 2.1};

  void validate() const;
  double workspace_diagonal() const { return (workspace_hi - workspace_lo).norm(); }
};

/// Geometric description of the arm body: each link is a capsule of the given
/// half-width around the segment between consecutive joints.
struct ArmGeometry {
  Vec link_lengths;  // [m]
  Vec link_radii;    // [m]
  Vec2 base_position{0.0, 0.0};

  int dof() const { return static_cast<int>(link_lengths.size()); }
  void validate() const;
};

/// Configuration-space ball certified collision-free: every q with
/// ||q - center||_2 <= radius avoids all obstacles.
struct Ball {
  Vec center;  // [rad]
  double radius = 0.0;
};

/// Positions of the base and each joint tip (dof+1 points) for cumulative
/// joint angles. Plain planar FK, independent of the dynamics code.
std::vector<Vec2> joint_positions(const ArmGeometry& geom, const Vec& q);

/// Exact capsule-vs-circle clearance: the minimum over links and obstacles of
/// segment-to-center distance minus the two radii. Negative iff the arm body
/// overlaps an obstacle. With no obstacles, returns the workspace diagonal
/// as a finite stand-in for "unbounded".
double workspace_clearance(const ArmGeometry& geom, const Scene& scene, const Vec& q);

/// Global Lipschitz constant of workspace_clearance w.r.t. ||dq||_2.
/// A rotation of joint j moves any body point by at most
/// D_j = sum of link lengths from joint j outward (the whole distal chain
/// fits within that radius of joint j); summing over joints bounds the total
/// point motion by (sum_j D_j) * ||dq||, and the segment-to-center distance
/// moves at most as much as the worst body point.
double fk_lipschitz(const ArmGeometry& geom);

/// Sound signed configuration-space distance lower bound:
/// scdf(q) = workspace_clearance(q) / fk_lipschitz(). Positive values certify
/// that every q' with ||q' - q|| <= scdf(q) is collision-free; negative sign
/// matches the workspace collision sign.
double scdf(const ArmGeometry& geom, const Scene& scene, const Vec& q);

/// Ball(center, scdf(center)); throws std::invalid_argument when the center
/// is not collision-free.
Ball make_ball(const ArmGeometry& geom, const Scene& scene, const Vec& center);

}  // namespace rtmpc
