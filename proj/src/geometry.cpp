#include "rtmpc/geometry.hpp"

#include <cmath>

namespace rtmpc {

namespace {

double segment_point_distance(const Vec2& a, const Vec2& b, const Vec2& p) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 == 0.0) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (a + t * ab - p).norm();
}

}  // namespace

void Scene::validate() const {
  for (const auto& o : obstacles) {
    if (!(o.radius > 0.0) || !o.center.allFinite())
      throw std::invalid_argument("Scene: obstacle radii must be positive and finite");
  }
  if ((workspace_hi - workspace_lo).minCoeff() <= 0.0)
    throw std::invalid_argument("Scene: empty workspace box");
}

void ArmGeometry::validate() const {
  if (link_radii.size() != link_lengths.size())
    throw std::invalid_argument("ArmGeometry: field length mismatch");
  if (dof() < 1 || link_lengths.minCoeff() <= 0.0 || link_radii.minCoeff() <= 0.0)
    throw std::invalid_argument("ArmGeometry: lengths and radii must be positive");
}

std::vector<Vec2> joint_positions(const ArmGeometry& geom, const Vec& q) {
  if (q.size() != geom.dof() || !q.allFinite())
    throw std::invalid_argument("joint_positions: bad configuration");
  std::vector<Vec2> pts;
  pts.reserve(geom.dof() + 1);
  pts.push_back(geom.base_position);
  double angle = 0.0;
  for (int i = 0; i < geom.dof(); ++i) {
    angle += q[i];
    pts.push_back(pts.back() +
                  geom.link_lengths[i] * Vec2(std::cos(angle), std::sin(angle)));
  }
  return pts;
}

double workspace_clearance(const ArmGeometry& geom, const Scene& scene, const Vec& q) {
  if (scene.obstacles.empty()) return scene.workspace_diagonal();
  const auto pts = joint_positions(geom, q);
  double clearance = INFINITY;
  for (int k = 0; k < geom.dof(); ++k) {
    for (const auto& o : scene.obstacles) {
      const double d = segment_point_distance(pts[k], pts[k + 1], o.center) -
                       geom.link_radii[k] - o.radius;
      clearance = std::min(clearance, d);
    }
  }
  return clearance;
}

double fk_lipschitz(const ArmGeometry& geom) {
  // D_j = l_j + l_{j+1} + ... ; L = sum_j D_j. See header for the derivation.
  double L = 0.0;
  double distal = 0.0;
  for (int j = geom.dof() - 1; j >= 0; --j) {
    distal += geom.link_lengths[j];
    L += distal;
  }
  return L;
}

double scdf(const ArmGeometry& geom, const Scene& scene, const Vec& q) {
  return workspace_clearance(geom, scene, q) / fk_lipschitz(geom);
}

Ball make_ball(const ArmGeometry& geom, const Scene& scene, const Vec& center) {
  const double r = scdf(geom, scene, center);
  if (r <= 0.0) throw std::invalid_argument("make_ball: center not collision-free");
  return Ball{center, r};
}

}  // namespace rtmpc
