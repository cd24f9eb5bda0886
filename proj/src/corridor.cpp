#include "rtmpc/corridor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace rtmpc {

namespace {

// One search tree: flat node storage with parent links.
struct Tree {
  std::vector<Vec> nodes;
  std::vector<int> parent;

  int add(const Vec& q, int par) {
    nodes.push_back(q);
    parent.push_back(par);
    return static_cast<int>(nodes.size()) - 1;
  }

  int nearest(const Vec& q) const {
    int best = 0;
    double best_d2 = (nodes[0] - q).squaredNorm();
    for (int i = 1; i < static_cast<int>(nodes.size()); ++i) {
      const double d2 = (nodes[i] - q).squaredNorm();
      if (d2 < best_d2) {
        best_d2 = d2;
        best = i;
      }
    }
    return best;
  }
};

enum class ExtendResult { trapped, advanced, reached };

bool point_clear(const ArmGeometry& geom, const Scene& scene, const Vec& q,
                 double clearance) {
  return scdf(geom, scene, q) >= clearance;
}

// Checks interior samples of the segment (a, b] at <= resolution spacing.
// The caller is responsible for the validity of a.
bool segment_clear(const ArmGeometry& geom, const Scene& scene, const Vec& a,
                   const Vec& b, double clearance, double resolution) {
  const double len = (b - a).norm();
  const int m = std::max(1, static_cast<int>(std::ceil(len / resolution)));
  for (int k = 1; k <= m; ++k) {
    const Vec q = a + (b - a) * (static_cast<double>(k) / m);
    if (!point_clear(geom, scene, q, clearance)) return false;
  }
  return true;
}

struct ExtendContext {
  const ArmGeometry& geom;
  const Scene& scene;
  double clearance;
  const PlannerParams& params;
  long nodes_used = 0;
};

// Grows `tree` one step (<= params.step) from its nearest node toward
// `target`. Returns the new node index through `out_idx` on success.
ExtendResult extend(ExtendContext& ctx, Tree& tree, const Vec& target,
                    int* out_idx) {
  const int near = tree.nearest(target);
  const Vec& q_near = tree.nodes[near];
  const double dist = (target - q_near).norm();
  if (dist < 1e-12) {
    *out_idx = near;
    return ExtendResult::reached;
  }
  const bool reaches = dist <= ctx.params.step;
  const Vec q_new =
      reaches ? target : Vec(q_near + (target - q_near) * (ctx.params.step / dist));
  if (!segment_clear(ctx.geom, ctx.scene, q_near, q_new, ctx.clearance,
                     ctx.params.edge_resolution)) {
    return ExtendResult::trapped;
  }
  *out_idx = tree.add(q_new, near);
  ++ctx.nodes_used;
  return reaches ? ExtendResult::reached : ExtendResult::advanced;
}

// Repeatedly extends `tree` toward `target` until it connects or is blocked.
ExtendResult connect(ExtendContext& ctx, Tree& tree, const Vec& target,
                     int* out_idx) {
  ExtendResult r = ExtendResult::advanced;
  while (r == ExtendResult::advanced) {
    if (ctx.nodes_used >= ctx.params.node_budget) return ExtendResult::trapped;
    r = extend(ctx, tree, target, out_idx);
  }
  return r;
}

std::vector<Vec> trace_to_root(const Tree& tree, int idx) {
  std::vector<Vec> out;
  for (int i = idx; i >= 0; i = tree.parent[i]) out.push_back(tree.nodes[i]);
  return out;  // node -> root order
}

void drop_duplicate_waypoints(std::vector<Vec>& path) {
  std::vector<Vec> out;
  out.reserve(path.size());
  for (const Vec& q : path) {
    if (out.empty() || (q - out.back()).norm() > 1e-12) out.push_back(q);
  }
  path = std::move(out);
}

void shortcut(const ArmGeometry& geom, const Scene& scene,
              std::vector<Vec>& path, double clearance, double resolution,
              int rounds, Rng& rng) {
  if (path.size() > 2 &&
      segment_clear(geom, scene, path.front(), path.back(), clearance,
                    resolution)) {
    path = {path.front(), path.back()};
    return;
  }
  for (int r = 0; r < rounds && path.size() > 2; ++r) {
    const std::size_t i = rng.uniform_index(path.size());
    const std::size_t j = rng.uniform_index(path.size());
    const std::size_t lo = std::min(i, j);
    const std::size_t hi = std::max(i, j);
    if (hi <= lo + 1) continue;
    if (segment_clear(geom, scene, path[lo], path[hi], clearance, resolution)) {
      path.erase(path.begin() + static_cast<long>(lo) + 1,
                 path.begin() + static_cast<long>(hi));
    }
  }
}

double path_length(const std::vector<Vec>& path) {
  double len = 0.0;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    len += (path[i + 1] - path[i]).norm();
  }
  return len;
}

// Point at arc length s along the polyline (s clamped to [0, length]).
Vec point_at_arclength(const std::vector<Vec>& path, double s) {
  if (s <= 0.0) return path.front();
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    const double seg = (path[i + 1] - path[i]).norm();
    if (s <= seg || i + 2 == path.size()) {
      if (seg < 1e-300) return path[i];
      const double t = std::min(1.0, s / seg);
      return path[i] + (path[i + 1] - path[i]) * t;
    }
    s -= seg;
  }
  return path.back();
}

}  // namespace

void PlannerParams::validate(int dof) const {
  if (step <= 0.0 || edge_resolution <= 0.0) {
    throw std::invalid_argument("planner step sizes must be positive");
  }
  if (node_budget < 2) {
    throw std::invalid_argument("planner node budget must allow the roots");
  }
  if (shortcut_rounds < 0) {
    throw std::invalid_argument("shortcut rounds must be non-negative");
  }
  if (sample_halfwidth.size() != 0) {
    if (sample_halfwidth.size() != dof) {
      throw std::invalid_argument("sampling box dimension mismatch");
    }
    if ((sample_halfwidth.array() <= 0.0).any()) {
      throw std::invalid_argument("sampling box halfwidths must be positive");
    }
  }
}

std::vector<Vec> plan_path(const ArmGeometry& geom, const Scene& scene,
                           const Vec& q_start, const Vec& q_goal,
                           double clearance, Rng& rng,
                           const PlannerParams& params) {
  const int dof = geom.dof();
  if (q_start.size() != dof || q_goal.size() != dof) {
    throw std::invalid_argument("endpoint dimension does not match the arm");
  }
  if (clearance <= 0.0) {
    throw std::invalid_argument("planning clearance must be positive");
  }
  params.validate(dof);
  if (!point_clear(geom, scene, q_start, clearance)) {
    throw std::invalid_argument("start configuration violates the clearance");
  }
  if (!point_clear(geom, scene, q_goal, clearance)) {
    throw std::invalid_argument("goal configuration violates the clearance");
  }

  Vec halfwidth = params.sample_halfwidth;
  if (halfwidth.size() == 0) {
    halfwidth = Vec::Constant(dof, std::numbers::pi);
  }

  Tree start_tree;
  start_tree.add(q_start, -1);
  Tree goal_tree;
  goal_tree.add(q_goal, -1);
  ExtendContext ctx{geom, scene, clearance, params};
  ctx.nodes_used = 2;

  Tree* grow = &start_tree;
  Tree* other = &goal_tree;
  bool grow_is_start = true;

  std::vector<Vec> path;
  while (path.empty()) {
    if (ctx.nodes_used >= params.node_budget) {
      std::ostringstream msg;
      msg << "path planning exhausted its node budget (" << params.node_budget
          << " nodes)";
      throw PlanningFailed(msg.str());
    }
    Vec q_rand(dof);
    for (int k = 0; k < dof; ++k) {
      q_rand[k] = rng.uniform(-halfwidth[k], halfwidth[k]);
    }
    int new_idx = -1;
    if (extend(ctx, *grow, q_rand, &new_idx) != ExtendResult::trapped) {
      int link_idx = -1;
      if (connect(ctx, *other, grow->nodes[new_idx], &link_idx) ==
          ExtendResult::reached) {
        // grow/other hold the two halves; orient them start -> goal.
        std::vector<Vec> a = trace_to_root(*grow, new_idx);
        std::reverse(a.begin(), a.end());  // root(grow) -> meeting point
        std::vector<Vec> b = trace_to_root(*other, link_idx);
        // b: meeting point -> root(other); skip the duplicated meeting point.
        a.insert(a.end(), b.begin() + 1, b.end());
        if (!grow_is_start) std::reverse(a.begin(), a.end());
        path = std::move(a);
      }
    }
    std::swap(grow, other);
    grow_is_start = !grow_is_start;
  }

  drop_duplicate_waypoints(path);
  shortcut(geom, scene, path, clearance, params.edge_resolution,
           params.shortcut_rounds, rng);
  drop_duplicate_waypoints(path);
  return path;
}

Corridor build_corridor(const ArmGeometry& geom, const Scene& scene,
                        const std::vector<Vec>& path, double step_size) {
  if (path.empty()) throw std::invalid_argument("cannot cover an empty path");
  if (step_size <= 0.0) {
    throw std::invalid_argument("corridor step size must be positive");
  }
  const double len = path_length(path);
  const int n_seg =
      std::max(1, static_cast<int>(std::ceil(len / step_size - 1e-12)));

  Corridor corridor;
  corridor.step_size = step_size;
  corridor.centers.reserve(static_cast<std::size_t>(n_seg) + 1);
  corridor.radii.resize(n_seg + 1);
  for (int k = 0; k <= n_seg; ++k) {
    const double s = len * (static_cast<double>(k) / n_seg);
    Vec center = point_at_arclength(path, s);
    const double radius = scdf(geom, scene, center);
    if (radius <= 0.0) {
      std::ostringstream msg;
      msg << "corridor center " << k << " is not collision-free (distance "
          << radius << ")";
      throw PlanningFailed(msg.str());
    }
    corridor.centers.push_back(std::move(center));
    corridor.radii[k] = radius;
  }
  return corridor;
}

BallAssignment assign_balls(const Corridor& corridor,
                            const std::vector<State>& X_bar) {
  if (corridor.size() == 0) {
    throw std::invalid_argument("cannot assign balls from an empty corridor");
  }
  if (X_bar.empty()) {
    throw std::invalid_argument("cannot assign balls to an empty plan");
  }
  BallAssignment out;
  out.indices.reserve(X_bar.size());
  out.balls.reserve(X_bar.size());
  out.margins.resize(static_cast<int>(X_bar.size()));
  for (std::size_t i = 0; i < X_bar.size(); ++i) {
    const Vec& q = X_bar[i].q;
    int best = 0;
    double best_margin = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < corridor.size(); ++j) {
      const double margin = corridor.radii[j] - (q - corridor.centers[j]).norm();
      if (margin > best_margin) {
        best_margin = margin;
        best = j;
      }
    }
    if (best_margin < 0.0) {
      std::ostringstream msg;
      msg << "plan step " << i << " lies outside every corridor ball (margin "
          << best_margin << ")";
      throw TrajectoryLeftCorridor(msg.str());
    }
    out.indices.push_back(best);
    out.balls.push_back(corridor.ball(best));
    out.margins[static_cast<int>(i)] = best_margin;
  }
  return out;
}

int select_virtual_goal(const Corridor& corridor, int last_ball_index,
                        double tighten) {
  if (last_ball_index < 0 || last_ball_index >= corridor.size()) {
    throw std::invalid_argument("last ball index outside the corridor");
  }
  const Vec& center = corridor.centers[last_ball_index];
  const double reach = corridor.radii[last_ball_index] - tighten;
  for (int i = corridor.size() - 1; i >= 0; --i) {
    if ((corridor.centers[i] - center).norm() <= reach) return i;
  }
  return last_ball_index;
}

}  // namespace rtmpc
