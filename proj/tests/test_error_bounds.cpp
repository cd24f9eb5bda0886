#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "rtmpc/error_bounds.hpp"

using namespace rtmpc;

namespace {

ArmParams arm2(double gravity = 0.0) {
  ArmParams p;
  p.link_masses = Vec{{1.5, 1.0}};
  p.link_lengths = Vec{{0.8, 0.6}};
  p.com_offsets = Vec{{0.4, 0.3}};
  p.link_inertias = Vec{{0.08, 0.03}};
  p.damping_diag = Vec{{0.2, 0.2}};
  p.gravity_accel = gravity;
  return p;
}

UncertaintySet five_percent(int dof, double scale = 1.0) {
  UncertaintySet u;
  u.relative_bounds = Vec::Constant(2 * dof, 0.05);
  u.scale = scale;
  return u;
}

StateBox default_box(int dof) {
  return StateBox{Vec::Constant(dof, M_PI), Vec::Constant(dof, 2.0)};
}

}  // namespace

TEST_CASE("eval_delta trivial cases") {
  const ArmModel zero(arm2(), Vec::Zero(4));
  const State s{Vec{{0.4, -1.1}}, Vec{{0.5, 0.2}}};
  CHECK(eval_delta(zero, s, Vec{{3.0, -2.0}}).cwiseAbs().maxCoeff() == 0.0);

  // With a = 0, qd = 0 and no gravity only the gravity-error term could
  // survive, and it is identically zero for a horizontal arm.
  Vec theta(4);
  theta << 0.05, -0.03, 0.008, -0.006;
  const ArmModel m(arm2(), theta);
  const State rest{Vec{{1.0, -0.4}}, Vec::Zero(2)};
  CHECK(eval_delta(m, rest, Vec::Zero(2)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("closed-form delta equals simulation-form oracle and true plant") {
  Rng rng(101);
  const ArmParams nominal = arm2(9.81);
  const UncertaintySet fam = five_percent(2);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec theta = fam.sample(nominal, rng);
    const ArmModel m(nominal, theta);
    const State s{Vec{{rng.uniform(-M_PI, M_PI), rng.uniform(-M_PI, M_PI)}},
                  Vec{{rng.uniform(-2, 2), rng.uniform(-2, 2)}}};
    const Vec a{{rng.uniform(-20, 20), rng.uniform(-20, 20)}};

    // Independent oracle: invert the true dynamics under the nominal torque.
    const Mat M0 = mass_matrix(m.nominal(), s.q);
    Mat C0 = coriolis_matrix(m.nominal(), s.q, s.qd);
    C0 += m.nominal().damping_diag.asDiagonal();
    const Vec g0 = gravity_torque(m.nominal(), s.q);
    const Mat Mt = mass_matrix(m.perturbed(), s.q);
    Mat Ct = coriolis_matrix(m.perturbed(), s.q, s.qd);
    Ct += m.perturbed().damping_diag.asDiagonal();
    const Vec gt = gravity_torque(m.perturbed(), s.q);
    const Vec delta_oracle =
        Mt.ldlt().solve(M0 * a + C0 * s.qd + g0 - Ct * s.qd - gt) - a;

    const Vec delta = eval_delta(m, s, a);
    CHECK((delta - delta_oracle).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((delta - (true_acceleration(m, s, a) - a)).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("estimated constants: trivial cases") {
  const ArmParams p = arm2();
  const StateBox X = default_box(2);

  const auto zero = estimate_constants(p, five_percent(2, 0.0), X, 10000, 1.1, 7);
  CHECK(zero.a == 0.0);
  CHECK(zero.b == 0.0);
  CHECK(zero.c == 0.0);

  // Horizontal arm: the gravity term vanishes identically, so c = 0.
  const auto consts = estimate_constants(p, five_percent(2), X, 10000, 1.1, 7);
  CHECK(consts.c == 0.0);
  CHECK(consts.a > 0.0);
  CHECK(consts.b > 0.0);

  // Vertical arm: mass error now leaks into the gravity torque.
  const auto vert = estimate_constants(arm2(9.81), five_percent(2), X, 10000, 1.1, 7);
  CHECK(vert.c > 0.0);
}

TEST_CASE("estimated 'a' matches a dense grid oracle within 5%") {
  const ArmParams p = arm2();
  const UncertaintySet fam = five_percent(2);
  const StateBox X = default_box(2);

  // Brute force: all uncertainty-box vertices crossed with a 50x50 grid on q.
  double grid_max = 0.0;
  const State probe{Vec::Zero(2), Vec::Zero(2)};
  for (const Vec& v : fam.vertices(p)) {
    const ArmModel m(p, v);
    for (int i = 0; i < 50; ++i) {
      for (int j = 0; j < 50; ++j) {
        Vec q(2);
        q << -M_PI + 2 * M_PI * (i + 0.5) / 50, -M_PI + 2 * M_PI * (j + 0.5) / 50;
        const DeltaTerms d = delta_terms(m, State{q, Vec::Zero(2)});
        grid_max = std::max(grid_max, spectral_norm(d.M_tilde));
      }
    }
  }

  const auto consts = estimate_constants(p, fam, X, 40000, 1.0, 21);
  CHECK(consts.a == doctest::Approx(grid_max).epsilon(0.05));
}

TEST_CASE("constants are deterministic in the seed and monotone in scale") {
  const ArmParams p = arm2();
  const StateBox X = default_box(2);
  const auto c1 = estimate_constants(p, five_percent(2), X, 15000, 1.1, 33);
  const auto c2 = estimate_constants(p, five_percent(2), X, 15000, 1.1, 33);
  CHECK(c1.a == c2.a);
  CHECK(c1.b == c2.b);
  CHECK(c1.c == c2.c);

  const auto wide = estimate_constants(p, five_percent(2, 2.0), X, 15000, 1.1, 33);
  CHECK(wide.a >= c1.a);
  CHECK(wide.b >= c1.b);
  CHECK(wide.c >= c1.c);
}

TEST_CASE("frozen default-arm constants (seed 42, 2e4 samples, margin 1.1)") {
  const auto c = estimate_constants(arm2(), five_percent(2), default_box(2), 20000, 1.1, 42);
  // Frozen from the first verified run; guards the sampling stream layout
  // against accidental changes (any RNG or ordering change shows up here).
  CHECK(c.a == doctest::Approx(0.16245971895549161).epsilon(1e-12));
  CHECK(c.b == doctest::Approx(0.52790289811333702).epsilon(1e-12));
  CHECK(c.c == 0.0);
  CHECK(c.samples_used == 20000);
}

TEST_CASE("beta bound certified on fresh samples; degenerate bounds fail") {
  const ArmParams p = arm2();
  const UncertaintySet fam = five_percent(2);
  const StateBox X = default_box(2);
  const AccelSet A{Vec::Constant(2, 20.0), 0};

  const auto consts = estimate_constants(p, fam, X, 20000, 1.1, 55);
  const auto rep = certify_beta(consts, p, fam, X, A, 20000, 56);
  CHECK(rep.pass);
  CHECK(rep.violations == 0);
  CHECK(rep.max_ratio <= 1.0);
  CHECK(rep.max_ratio > 0.5);  // the bound should not be vacuously loose

  ErrorBoundConstants zero;
  const auto bad = certify_beta(zero, p, fam, X, A, 2000, 57);
  CHECK_FALSE(bad.pass);
  CHECK(bad.max_ratio > 1.0);
}

TEST_CASE("beta is affine in the acceleration norm") {
  ErrorBoundConstants c;
  c.a = 0.3;
  c.b = 0.1;
  c.c = 0.05;
  const State s{Vec::Zero(2), Vec::Zero(2)};
  const Vec a{{1.0, -2.0}};
  const double base = c.beta(s, Vec::Zero(2));
  CHECK(base == doctest::Approx(0.05));
  for (double lam : {0.5, 1.0, 2.0, 7.0}) {
    CHECK(c.beta(s, lam * a) - base == doctest::Approx(lam * (c.beta(s, a) - base)));
  }
}

TEST_CASE("acceleration set convexification") {
  const ArmParams p = arm2();
  const StateBox X = default_box(2);
  ConvexifyParams params;
  params.n_samples = 4000;
  params.n_validation = 300000;

  // Unbounded-in-practice torque: the initial box is already feasible.
  const auto huge = convexify_accel_set(p, TorqueSet{Vec::Constant(2, 1e6)}, X, params, 5);
  CHECK(huge.box_halfwidth.isApprox(Vec::Constant(2, 20.0)));
  CHECK(huge.shrink_iterations == 0);

  // Zero limits violate the torque-set invariant.
  CHECK_THROWS_AS(convexify_accel_set(p, TorqueSet{Vec::Zero(2)}, X, params, 5),
                  std::invalid_argument);

  // Unreachably tight limits exhaust the shrink budget.
  CHECK_THROWS_AS(
      convexify_accel_set(p, TorqueSet{Vec::Constant(2, 1e-6)}, X, params, 5),
      SynthesisFailed);

  // Realistic limits that actually bind: shrink, then verify by brute-force
  // rejection sampling.
  const TorqueSet U{Vec{{25.0, 9.0}}};
  const auto box = convexify_accel_set(p, U, X, params, 5);
  CHECK(box.shrink_iterations > 0);
  CHECK((box.box_halfwidth.array() < 20.0).all());
  CHECK(box.box_halfwidth.minCoeff() > 8.0);  // a useful amount survives

  const ArmModel m(p, Vec::Zero(4));
  Rng rng(99);
  long violations = 0;
  const long n = 1000000;
  const auto verts = box.vertices();
  for (long k = 0; k < n; ++k) {
    const State s = X.sample(rng);
    const DynTerms t = eval_dynamics(m, false, s);
    const Vec bias = t.C * s.qd + t.g;
    for (const auto& v : verts) {
      const Vec u = t.M * v + bias;
      if ((u.cwiseAbs().array() > U.torque_limits.array()).any()) ++violations;
    }
  }
  CHECK(violations == 0);
}
