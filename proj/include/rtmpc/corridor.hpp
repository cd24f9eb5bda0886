#pragma once

#include <vector>

#include "rtmpc/arm.hpp"
#include "rtmpc/common.hpp"
#include "rtmpc/geometry.hpp"
#include "rtmpc/rng.hpp"

namespace rtmpc {

struct PlannerParams {
  double step = 0.05;             // [rad] tree extension step
  double edge_resolution = 0.01;  // [rad] clearance-check spacing along edges
  long node_budget = 50000;       // total nodes across both trees
  int shortcut_rounds = 200;      // random shortcut attempts after a solve
  Vec sample_halfwidth;           // configuration sampling box; empty = pi box

  void validate(int dof) const;
};

/// Bidirectional RRT (extend/connect) over the configuration box, accepting
/// only nodes and edge samples with scdf >= clearance, followed by shortcut
/// smoothing (a deterministic endpoint pass, then random pair collapses).
/// Returns a piecewise-linear path with exact endpoints; every returned edge
/// has scdf >= clearance at edge_resolution spacing.
/// Throws std::invalid_argument when an endpoint violates the clearance and
/// PlanningFailed when the node budget is exhausted.
std::vector<Vec> plan_path(const ArmGeometry& geom, const Scene& scene,
                           const Vec& q_start, const Vec& q_goal,
                           double clearance, Rng& rng,
                           const PlannerParams& params = {});

/// Collision-free tube of configuration-space balls along a path.
struct Corridor {
  std::vector<Vec> centers;  // equidistant along the path, endpoints included
  Vec radii;                 // scdf at each center
  double step_size = 0.0;    // [rad] discretization step used

  int size() const { return static_cast<int>(centers.size()); }
  Ball ball(int i) const { return Ball{centers[i], radii[i]}; }
};

/// Discretizes the path at equal arc-length spacing <= step_size (both
/// endpoints are centers) and takes each ball radius from the sound signed
/// configuration distance. Throws PlanningFailed if any center is not
/// strictly collision-free.
Corridor build_corridor(const ArmGeometry& geom, const Scene& scene,
                        const std::vector<Vec>& path, double step_size);

/// One corridor ball per predicted step, chosen by largest margin.
struct BallAssignment {
  std::vector<int> indices;  // corridor index per step
  std::vector<Ball> balls;   // the same balls, materialized
  Vec margins;               // radius - distance at assignment time
};

/// For each state picks argmax_j (radius_j - ||q(x_i) - center_j||), ties to
/// the smallest index. Throws TrajectoryLeftCorridor when some state is
/// outside every ball (negative best margin).
BallAssignment assign_balls(const Corridor& corridor,
                            const std::vector<State>& X_bar);

/// Largest corridor index whose center lies in the tightened last ball,
/// i.e. ||c_i - center|| <= radius - tighten for the ball at last_ball_index.
/// Falls back to last_ball_index itself when no center qualifies (stall).
int select_virtual_goal(const Corridor& corridor, int last_ball_index,
                        double tighten);

}  // namespace rtmpc
