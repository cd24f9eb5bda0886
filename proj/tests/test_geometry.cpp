#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "rtmpc/geometry.hpp"
#include "rtmpc/rng.hpp"

using namespace rtmpc;

namespace {

ArmGeometry geom2() {
  ArmGeometry g;
  g.link_lengths = Vec{{0.8, 0.6}};
  g.link_radii = Vec{{0.05, 0.05}};
  return g;
}

Scene random_scene(Rng& rng, int n_obstacles) {
  Scene s;
  for (int i = 0; i < n_obstacles; ++i) {
    const double ang = rng.uniform(0, 2 * M_PI);
    const double dist = rng.uniform(0.3, 1.6);
    Circle c;
    c.center = dist * Vec2(std::cos(ang), std::sin(ang));
    c.radius = rng.uniform(0.05, 0.3);
    s.obstacles.push_back(c);
  }
  return s;
}

Vec random_q(Rng& rng, int n) {
  Vec q(n);
  for (int i = 0; i < n; ++i) q[i] = rng.uniform(-M_PI, M_PI);
  return q;
}

// Independent judge: sample the link segments densely and test point-vs-circle
// overlap. No shared code with workspace_clearance.
bool point_cloud_collides(const ArmGeometry& g, const Scene& scene, const Vec& q,
                          int points_per_link) {
  double angle = 0.0;
  Vec2 joint = g.base_position;
  for (int k = 0; k < g.dof(); ++k) {
    angle += q[k];
    const Vec2 tip = joint + g.link_lengths[k] * Vec2(std::cos(angle), std::sin(angle));
    for (int i = 0; i < points_per_link; ++i) {
      const double t = static_cast<double>(i) / (points_per_link - 1);
      const Vec2 p = joint + t * (tip - joint);
      for (const auto& o : scene.obstacles) {
        if ((p - o.center).norm() < o.radius + g.link_radii[k]) return true;
      }
    }
    joint = tip;
  }
  return false;
}

}  // namespace

TEST_CASE("clearance trivia: empty scene, obstacle on segment, formula value") {
  const ArmGeometry g = geom2();
  const Scene empty;
  const Vec q0 = Vec::Zero(2);
  CHECK(workspace_clearance(g, empty, q0) == doctest::Approx(empty.workspace_diagonal()));

  // Obstacle dead on the first link: clearance = -(r_link + r_obs).
  Scene hit;
  hit.obstacles.push_back({Vec2(0.4, 0.0), 0.1});
  CHECK(workspace_clearance(g, hit, q0) == doctest::Approx(-0.15).epsilon(1e-12));

  // Straight arm along +x, obstacle 0.65 m above the first link midpoint:
  // clearance 0.5 m, Lipschitz constant (0.8+0.6) + 0.6 = 2.0, scdf 0.25 rad.
  Scene above;
  above.obstacles.push_back({Vec2(0.4, 0.65), 0.1});
  CHECK(fk_lipschitz(g) == doctest::Approx(2.0));
  CHECK(workspace_clearance(g, above, q0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(scdf(g, above, q0) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("clearance sign agrees with a dense point-cloud oracle") {
  const ArmGeometry g = geom2();
  Rng rng(311);
  int checked = 0;
  Scene scene = random_scene(rng, 5);
  for (int trial = 0; trial < 10000; ++trial) {
    if (trial % 100 == 0) scene = random_scene(rng, 5);
    const Vec q = random_q(rng, 2);
    const double cl = workspace_clearance(g, scene, q);
    // Near-zero clearances are ambiguous for a sampled judge; skip the sliver.
    if (std::abs(cl) < 1e-3) continue;
    CHECK((cl < 0.0) == point_cloud_collides(g, scene, q, 1000));
    ++checked;
  }
  CHECK(checked > 9500);
}

TEST_CASE("scdf soundness: any step within scdf stays collision-free") {
  const ArmGeometry g = geom2();
  Rng rng(313);
  int tested = 0;
  Scene scene = random_scene(rng, 5);
  while (tested < 10000) {
    const Vec q = random_q(rng, 2);
    const double r = scdf(g, scene, q);
    if (r <= 0.0) {
      scene = random_scene(rng, 5);
      continue;
    }
    Vec dir(2);
    dir << rng.normal(), rng.normal();
    dir.normalize();
    const double step = r * (rng.uniform() < 0.5 ? rng.uniform() : rng.uniform(0.9, 1.0));
    CHECK(workspace_clearance(g, scene, q + step * dir) >= 0.0);
    ++tested;
  }
}

TEST_CASE("scdf lower-bounds the true configuration-space distance (ray bisection)") {
  const ArmGeometry g = geom2();
  Rng rng(317);
  int tested = 0;
  while (tested < 100) {
    const Scene scene = random_scene(rng, 5);
    const Vec q = random_q(rng, 2);
    const double r = scdf(g, scene, q);
    if (r <= 0.0) continue;
    for (int ray = 0; ray < 10; ++ray) {
      Vec dir(2);
      dir << rng.normal(), rng.normal();
      dir.normalize();
      // March to the first colliding step, then bisect the boundary.
      const double t_max = 4.0;
      double lo = 0.0, hi = t_max;
      bool found = false;
      for (double t = 0.01; t <= t_max; t += 0.01) {
        if (workspace_clearance(g, scene, q + t * dir) < 0.0) {
          hi = t;
          lo = t - 0.01;
          found = true;
          break;
        }
      }
      if (found) {
        for (int it = 0; it < 60; ++it) {
          const double mid = 0.5 * (lo + hi);
          (workspace_clearance(g, scene, q + mid * dir) < 0.0 ? hi : lo) = mid;
        }
      }
      const double first_hit = found ? lo : t_max;
      CHECK(r <= first_hit + 1e-9);
    }
    ++tested;
  }
}

TEST_CASE("scdf is compatible with its own Lipschitz bound") {
  const ArmGeometry g = geom2();
  Rng rng(331);
  for (int trial = 0; trial < 2000; ++trial) {
    const Scene scene = random_scene(rng, 4);
    const Vec q = random_q(rng, 2);
    Vec dq(2);
    dq << rng.normal(), rng.normal();
    dq *= rng.uniform(0.0, 0.5);
    CHECK(scdf(g, scene, q + dq) >= scdf(g, scene, q) - dq.norm() - 1e-9);
  }
}

TEST_CASE("make_ball: radius, soundness, rejection of colliding centers") {
  const ArmGeometry g = geom2();
  Rng rng(337);

  Scene hit;
  hit.obstacles.push_back({Vec2(0.4, 0.0), 0.1});
  CHECK_THROWS_AS(make_ball(g, hit, Vec::Zero(2)), std::invalid_argument);

  int sampled = 0;
  Scene scene = random_scene(rng, 5);
  while (sampled < 10000) {
    const Vec c = random_q(rng, 2);
    if (scdf(g, scene, c) <= 0.0) {
      scene = random_scene(rng, 5);
      continue;
    }
    const Ball ball = make_ball(g, scene, c);
    CHECK(ball.radius == doctest::Approx(scdf(g, scene, c)));
    // Sample the ball interior with a bias to the boundary shell.
    Vec dir(2);
    dir << rng.normal(), rng.normal();
    dir.normalize();
    const double rad =
        ball.radius * (rng.uniform() < 0.5 ? std::sqrt(rng.uniform()) : rng.uniform(0.95, 1.0));
    CHECK(workspace_clearance(g, scene, ball.center + rad * dir) >= 0.0);
    ++sampled;
  }
}

TEST_CASE("validation errors") {
  ArmGeometry g = geom2();
  g.link_radii[0] = -0.01;
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);

  Scene s;
  s.obstacles.push_back({Vec2(0, 0), 0.0});
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);

  CHECK_THROWS_AS(joint_positions(geom2(), Vec::Zero(3)), std::invalid_argument);
}
