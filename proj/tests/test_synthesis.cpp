#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "rtmpc/rng.hpp"
#include "rtmpc/sdp.hpp"
#include "rtmpc/synthesis.hpp"

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

// Constants for arm2(0.0) with the 5% family over |q| <= pi, |qd| <= 2
// (seed 42, 2e4 samples, margin 1.1), frozen in the error-bound tests.
ErrorBoundConstants frozen_consts() {
  ErrorBoundConstants c;
  c.a = 0.16245971895549161;
  c.b = 0.52790289811333702;
  c.c = 0.0;
  return c;
}

StateBox box2() {
  StateBox X;
  X.q_halfwidth = Vec::Constant(2, M_PI);
  X.qd_halfwidth = Vec::Constant(2, 2.0);
  return X;
}

AccelSet accel2() {
  AccelSet A;
  A.box_halfwidth = Vec::Constant(2, 12.0);
  return A;
}

DiscreteDynamics dyn2() { return DiscreteDynamics::make(2, 0.01); }

SynthesisConfig config2(const ErrorBoundConstants& consts, const Vec& rho_grid) {
  return make_synthesis_config(box2(), accel2(), dyn2(), consts, rho_grid);
}

double min_eig(const Mat& S) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (S + S.transpose()),
                                        Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

Vec ball_sample(Rng& rng, int dim) {
  Vec y(dim);
  for (int i = 0; i < dim; ++i) y[i] = rng.normal();
  const double u = rng.uniform();
  return y * (std::pow(u, 1.0 / dim) / y.norm());
}

}  // namespace

TEST_CASE("box constraints stack plus and minus identity rows") {
  const ConstraintSet cs = box_constraints(Vec{{1.5, 2.5}});
  REQUIRE(cs.rows() == 4);
  CHECK((cs.A.topRows(2) - Mat::Identity(2, 2)).norm() == 0.0);
  CHECK((cs.A.bottomRows(2) + Mat::Identity(2, 2)).norm() == 0.0);
  CHECK(cs.b[0] == 1.5);
  CHECK(cs.b[1] == 2.5);
  CHECK(cs.b[2] == 1.5);
  CHECK(cs.b[3] == 2.5);
  cs.validate(2);
  CHECK_THROWS_AS(box_constraints(Vec{{1.0, 0.0}}).validate(2),
                  std::invalid_argument);
}

TEST_CASE("disturbance box scales row norms of B by the worst-case bound") {
  const DiscreteDynamics dyn = dyn2();
  const ErrorBoundConstants consts = frozen_consts();
  const Vec h = disturbance_halfwidth(dyn, consts, box2(), accel2());
  const double beta_max = consts.a * Vec::Constant(2, 12.0).norm() +
                          consts.b * Vec::Constant(2, 2.0).norm();
  REQUIRE(h.size() == 4);
  for (int i = 0; i < 4; ++i)
    CHECK(h[i] == doctest::Approx(beta_max * dyn.B.row(i).norm()).epsilon(1e-12));
  // ZOH rows: dt^2/2 for configuration, dt for velocity.
  CHECK(h[0] == doctest::Approx(beta_max * 0.5 * 0.01 * 0.01).epsilon(1e-12));
  CHECK(h[2] == doctest::Approx(beta_max * 0.01).epsilon(1e-12));
}

TEST_CASE("synthesized LMIs hold: contraction block and polished rows") {
  const SynthesisConfig cfg = config2(frozen_consts(), Vec::Constant(1, 0.9));
  const DiscreteDynamics dyn = dyn2();
  const SynthesisResult res = synthesize(cfg, dyn, 0.9);
  CHECK(res.converged);
  REQUIRE(res.E.rows() == 4);
  REQUIRE(res.K.rows() == 2);

  // E and P positive definite, mutually inverse.
  CHECK(min_eig(res.E) > 0.0);
  CHECK(min_eig(res.P) > 0.0);
  CHECK((res.E * res.P - Mat::Identity(4, 4)).norm() < 1e-8);

  // Contraction LMI, evaluated from scratch.
  const Mat AEBY = dyn.A * res.E + dyn.B * res.Y;
  Mat contraction(8, 8);
  contraction << 0.81 * res.E, AEBY.transpose(), AEBY, res.E;
  CHECK(min_eig(contraction) >= -1e-8);

  // Equivalent K-form: rho^2 P - (A+BK)' P (A+BK) >= 0.
  const Mat Acl = dyn.A + dyn.B * res.K;
  CHECK(min_eig(0.81 * res.P - Acl.transpose() * res.P * Acl) >= -1e-8);

  // Polished scalars equal their closed forms exactly.
  const Mat Ax = cfg.state_normalizer.cwiseInverse().asDiagonal() *
                 cfg.state_constraints.A;
  for (int i = 0; i < Ax.rows(); ++i) {
    const Vec a = Ax.row(i).transpose();
    CHECK(res.c_x2[i] == doctest::Approx(a.dot(res.E * a)).epsilon(1e-12));
  }
  const Mat Au = cfg.input_normalizer.cwiseInverse().asDiagonal() *
                 cfg.input_constraints.A;
  const Mat KEK = res.K * res.E * res.K.transpose();
  for (int j = 0; j < Au.rows(); ++j) {
    const Vec g = Au.row(j).transpose();
    CHECK(res.c_u2[j] == doctest::Approx(g.dot(KEK * g)).epsilon(1e-12));
  }
  double wmax = 0.0;
  Rng rng(7);
  for (int t = 0; t < 2000; ++t) {  // random vertices of the box
    Vec w(4);
    for (int i = 0; i < 4; ++i)
      w[i] = (rng.uniform() < 0.5 ? -1.0 : 1.0) * cfg.disturbance_halfwidth[i];
    wmax = std::max(wmax, w.dot(res.P * w));
  }
  CHECK(res.w_bar2 >= wmax - 1e-14);
}

TEST_CASE("synthesis optimum is a local minimum (random feasible perturbations)") {
  const SynthesisConfig cfg = config2(frozen_consts(), Vec::Constant(1, 0.9));
  const DiscreteDynamics dyn = dyn2();
  const SynthesisResult res = synthesize(cfg, dyn, 0.9);
  REQUIRE(res.converged);

  const Mat Ax = cfg.state_normalizer.cwiseInverse().asDiagonal() *
                 cfg.state_constraints.A;
  const Mat Au = cfg.input_normalizer.cwiseInverse().asDiagonal() *
                 cfg.input_constraints.A;
  const auto objective_of = [&](const Mat& E, const Mat& Y) {
    const Mat P = E.ldlt().solve(Mat::Identity(4, 4));
    const Mat K = Y * P;
    double obj = 0.0;
    for (int i = 0; i < Ax.rows(); ++i) {
      const Vec a = Ax.row(i).transpose();
      obj += a.dot(E * a);
    }
    const Mat KEK = K * E * K.transpose();
    for (int j = 0; j < Au.rows(); ++j) {
      const Vec g = Au.row(j).transpose();
      obj += g.dot(KEK * g);
    }
    double wmax = 0.0;
    for (uint64_t mask = 0; mask < 16; ++mask) {
      Vec w(4);
      for (int i = 0; i < 4; ++i)
        w[i] = ((mask >> i) & 1 ? 1.0 : -1.0) * cfg.disturbance_halfwidth[i];
      wmax = std::max(wmax, w.dot(P * w));
    }
    obj += (Ax.rows() + Au.rows()) * wmax;
    return obj / (2.0 * (1.0 - 0.9));
  };
  const double base = objective_of(res.E, res.Y);
  CHECK(base == doctest::Approx(res.objective).epsilon(1e-9));

  Rng rng(11);
  const double slack = std::max(1e-6 * std::max(1.0, base), 2.0 * res.gap_bound);
  const auto feasible = [&](const Mat& E, const Mat& Y) {
    if (min_eig(E) <= 0.0) return false;
    const Mat AEBY = dyn.A * E + dyn.B * Y;
    Mat contraction(8, 8);
    contraction << 0.81 * E, AEBY.transpose(), AEBY, E;
    return min_eig(contraction) > 0.0;
  };
  int tried = 0;
  for (int t = 0; t < 50; ++t) {
    Mat dE = Mat::Zero(4, 4);
    for (int r = 0; r < 4; ++r)
      for (int s = r; s < 4; ++s) dE(r, s) = dE(s, r) = rng.normal();
    dE *= 1e-4 * res.E.norm() / dE.norm();
    Mat dY(2, 4);
    for (int u = 0; u < 2; ++u)
      for (int v = 0; v < 4; ++v) dY(u, v) = rng.normal();
    dY *= 1e-4 * std::max(res.Y.norm(), 1.0) / dY.norm();
    // The optimum sits near the LMI boundary, so back the step off until the
    // perturbed point is strictly feasible again.
    double scale = 1.0;
    bool ok = false;
    for (int k = 0; k < 40; ++k, scale *= 0.25) {
      if (feasible(res.E + scale * dE, res.Y + scale * dY)) {
        ok = true;
        break;
      }
    }
    if (!ok) continue;
    ++tried;
    CHECK(objective_of(res.E + scale * dE, res.Y + scale * dY) >= base - slack);
  }
  CHECK(tried >= 20);
}

TEST_CASE("zero disturbance box gives exactly zero w_bar") {
  SynthesisConfig cfg = config2(frozen_consts(), Vec::Constant(1, 0.9));
  cfg.disturbance_halfwidth = Vec::Zero(4);
  const SynthesisResult res = synthesize(cfg, dyn2(), 0.9);
  CHECK(res.w_bar2 == 0.0);
}

TEST_CASE("tightenings equal the support function of the unit tube ellipsoid") {
  const SynthesisConfig cfg = config2(frozen_consts(), Vec::Constant(1, 0.9));
  const SynthesisResult res = synthesize(cfg, dyn2(), 0.9);
  const TubeController ctrl =
      derive_constants(res.P, res.K, 0.9, std::sqrt(res.w_bar2), cfg, dyn2(),
                       frozen_consts());

  // Analytic maximizer of a'z over ||z||_P <= 1 is z* = E a / sqrt(a'E a);
  // check it is on the ellipsoid boundary and attains the tightening.
  const Mat E = res.E;
  for (int i = 0; i < cfg.state_constraints.rows(); ++i) {
    const Vec a = cfg.state_constraints.A.row(i).transpose();
    const Vec z = E * a / std::sqrt(a.dot(E * a));
    CHECK(ctrl.p_norm(z) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(a.dot(z) == doctest::Approx(ctrl.tightening_x[i]).epsilon(1e-9));
  }
  // No sampled point in the unit ellipsoid exceeds the tightening, and the
  // input tightening bounds K z the same way.
  Rng rng(3);
  const Mat P_sqrt_inv = ctrl.P_sqrt.ldlt().solve(Mat::Identity(4, 4));
  double best_u = 0.0;
  for (int t = 0; t < 20000; ++t) {
    const Vec z = P_sqrt_inv * ball_sample(rng, 4);
    for (int i = 0; i < cfg.state_constraints.rows(); ++i)
      CHECK(cfg.state_constraints.A.row(i).dot(z) <=
            ctrl.tightening_x[i] + 1e-12);
    const Vec u = ctrl.K * z;
    for (int j = 0; j < cfg.input_constraints.rows(); ++j) {
      const double v = cfg.input_constraints.A.row(j).dot(u);
      CHECK(v <= ctrl.tightening_u[j] + 1e-12);
      best_u = std::max(best_u, v / ctrl.tightening_u[j]);
    }
  }
  CHECK(best_u > 0.5);  // the bound is near-attained, not vacuous
}

TEST_CASE("derived constants: trivial and closed-form cases") {
  const SynthesisConfig cfg = config2(frozen_consts(), Vec::Constant(1, 0.9));
  const DiscreteDynamics dyn = dyn2();

  SUBCASE("zero beta constants freeze the tube recursion gains") {
    const SynthesisResult res = synthesize(cfg, dyn, 0.9);
    ErrorBoundConstants zero;
    const TubeController ctrl =
        derive_constants(res.P, res.K, 0.9, 0.5, cfg, dyn, zero);
    CHECK(ctrl.L_beta == 0.0);
    CHECK(ctrl.rho_tilde == 0.9);
    CHECK(ctrl.delta_f == 0.0);
    CHECK(ctrl.contractive);
    CHECK(ctrl.w_bar == 0.5);
    CHECK(ctrl.delta_bar == doctest::Approx(5.0).epsilon(1e-12));
  }

  SUBCASE("identity P: d is the spectral norm of B, r_p is 1") {
    const Mat P = Mat::Identity(4, 4);
    const Mat K = Mat::Zero(2, 4);
    const TubeController ctrl =
        derive_constants(P, K, 0.9, 0.0, cfg, dyn, frozen_consts());
    CHECK(ctrl.d == doctest::Approx(spectral_norm(dyn.B)).epsilon(1e-12));
    CHECK(ctrl.r_p == doctest::Approx(1.0).epsilon(1e-12));
    // V P^{-1/2} = [0 I] has unit norm, K term vanishes.
    CHECK(ctrl.L_beta == doctest::Approx(frozen_consts().b).epsilon(1e-12));
  }

  SUBCASE("block-diagonal P projects to its configuration block") {
    Mat P = Mat::Identity(4, 4);
    P(0, 0) = 4.0;
    P(1, 1) = 9.0;
    P(2, 2) = 2.0;
    P(3, 3) = 7.0;
    const TubeController ctrl = derive_constants(
        P, Mat::Zero(2, 4), 0.9, 0.0, cfg, dyn, frozen_consts());
    CHECK(ctrl.r_p == doctest::Approx(0.5).epsilon(1e-12));  // 1/sqrt(4)
  }

  SUBCASE("rejects an indefinite P") {
    Mat P = Mat::Identity(4, 4);
    P(3, 3) = -1.0;
    CHECK_THROWS_AS(
        derive_constants(P, Mat::Zero(2, 4), 0.9, 0.0, cfg, dyn, frozen_consts()),
        std::invalid_argument);
  }
}

TEST_CASE("configuration projection: every tube state stays in the r_p ball") {
  const SynthesisConfig cfg = config2(frozen_consts(), Vec::Constant(1, 0.9));
  const SynthesisResult res = synthesize(cfg, dyn2(), 0.9);
  const TubeController ctrl = derive_constants(
      res.P, res.K, 0.9, std::sqrt(res.w_bar2), cfg, dyn2(), frozen_consts());
  const Mat P_sqrt_inv = ctrl.P_sqrt.ldlt().solve(Mat::Identity(4, 4));
  Rng rng(5);
  double best = 0.0;
  for (int t = 0; t < 10000; ++t) {
    const double delta = rng.uniform(0.0, 2.0);
    const Vec e = P_sqrt_inv * (delta * ball_sample(rng, 4));
    const double q_dist = e.head(2).norm();
    CHECK(q_dist <= ctrl.r_p * delta + 1e-12);
    if (delta > 0.0) best = std::max(best, q_dist / (ctrl.r_p * delta));
  }
  CHECK(best > 0.9);  // r_p is tight up to sampling resolution
}

TEST_CASE("tube recursion: fixed point and monotone decay") {
  const SynthesisConfig cfg = config2(frozen_consts(), Vec::Constant(1, 0.9));
  const DiscreteDynamics dyn = dyn2();
  const SynthesisResult res = synthesize(cfg, dyn, 0.9);
  ErrorBoundConstants consts = frozen_consts();
  consts.c = 0.02;  // a nonzero resting term exercises the fixed point
  const TubeController ctrl = derive_constants(
      res.P, res.K, 0.9, std::sqrt(res.w_bar2), cfg, dyn, consts);
  REQUIRE(ctrl.contractive);
  CHECK(ctrl.delta_f ==
        doctest::Approx(ctrl.d * consts.c / (1.0 - ctrl.rho_tilde)).epsilon(1e-15));

  State rest;
  rest.q = Vec::Zero(2);
  rest.qd = Vec::Zero(2);
  const Vec a0 = Vec::Zero(2);

  // The fixed point maps to itself to machine precision.
  CHECK(tube_step(ctrl, ctrl.delta_f, rest, a0, consts) ==
        doctest::Approx(ctrl.delta_f).epsilon(1e-12));

  // From above: strictly decreasing until floating-point convergence.
  double delta = 10.0 * ctrl.delta_f + 1.0;
  for (int k = 0; k < 2000; ++k) {
    const double next = tube_step(ctrl, delta, rest, a0, consts);
    CHECK(next >= ctrl.delta_f - 1e-15);
    if (next == delta) break;  // the map is monotone, so no cycles
    CHECK(next < delta);
    delta = next;
  }
  CHECK(delta == doctest::Approx(ctrl.delta_f).epsilon(1e-9));

  // From below: strictly increasing toward delta_f.
  delta = 0.0;
  for (int k = 0; k < 2000; ++k) {
    const double next = tube_step(ctrl, delta, rest, a0, consts);
    CHECK(next <= ctrl.delta_f + 1e-15);
    if (next == delta) break;
    CHECK(next > delta);
    delta = next;
  }
  CHECK(delta == doctest::Approx(ctrl.delta_f).epsilon(1e-9));

  // With c = 0 the resting recursion is pure geometric decay.
  const ErrorBoundConstants lean = frozen_consts();
  const TubeController ctrl0 = derive_constants(
      res.P, res.K, 0.9, std::sqrt(res.w_bar2), cfg, dyn, lean);
  CHECK(ctrl0.delta_f == 0.0);
  CHECK(tube_step(ctrl0, 0.37, rest, a0, lean) ==
        doctest::Approx(ctrl0.rho_tilde * 0.37).epsilon(1e-15));
  CHECK_THROWS_AS(tube_step(ctrl, -0.1, rest, a0, consts), std::invalid_argument);
}

TEST_CASE("tube step dominates the true one-step error growth") {
  const ArmParams nominal = arm2(0.0);
  const UncertaintySet family = five_percent(2);
  const ErrorBoundConstants consts = frozen_consts();
  const StateBox X = box2();
  const DiscreteDynamics dyn = dyn2();
  const SynthesisConfig cfg = config2(consts, Vec::Constant(1, 0.9));
  const SynthesisResult res = synthesize(cfg, dyn, 0.9);
  const TubeController ctrl = derive_constants(
      res.P, res.K, 0.9, std::sqrt(res.w_bar2), cfg, dyn, consts);
  REQUIRE(ctrl.contractive);

  const Mat P_sqrt_inv = ctrl.P_sqrt.ldlt().solve(Mat::Identity(4, 4));
  // Largest delta for which the shrunk state and input boxes stay nonempty.
  Vec hw(4);
  hw << X.q_halfwidth, X.qd_halfwidth;
  double delta_max = INFINITY;
  for (int i = 0; i < 4; ++i)
    delta_max = std::min(delta_max, hw[i] / ctrl.tightening_x[i]);
  for (int j = 0; j < 2; ++j)
    delta_max = std::min(delta_max, 12.0 / ctrl.tightening_u[j]);
  REQUIRE(delta_max > 0.0);

  Rng rng(2024);
  double worst_margin = INFINITY;
  for (int t = 0; t < 2000; ++t) {
    const double delta = rng.uniform(0.0, 0.9 * delta_max);
    // Reference state/input inside the tightened sets.
    State xb;
    xb.q = Vec(2);
    xb.qd = Vec(2);
    Vec ab(2);
    for (int i = 0; i < 2; ++i) {
      const double h = hw[i] - ctrl.tightening_x[i] * delta;
      xb.q[i] = rng.uniform(-h, h);
    }
    for (int i = 0; i < 2; ++i) {
      const double h = hw[2 + i] - ctrl.tightening_x[2 + i] * delta;
      xb.qd[i] = rng.uniform(-h, h);
    }
    for (int j = 0; j < 2; ++j) {
      const double h = 12.0 - ctrl.tightening_u[j] * delta;
      ab[j] = rng.uniform(-h, h);
    }
    // True state anywhere in the tube, input from the auxiliary law.
    const Vec e = P_sqrt_inv * (delta * ball_sample(rng, 4));
    const Vec x = xb.to_x() + e;
    const State s = State::from_x(x);
    REQUIRE(X.contains(s, 1e-9));
    const Vec a = ab + ctrl.K * e;

    const ArmModel model(nominal, family.sample(nominal, rng));
    const State s_next = step_true(model, dyn, s, a);
    const Vec xb_next = dyn.A * xb.to_x() + dyn.B * ab;
    const double err_next = ctrl.p_norm(s_next.to_x() - xb_next);
    const double bound = tube_step(ctrl, delta, xb, ab, consts);
    CHECK(err_next <= bound + 1e-9);
    if (bound > 1e-12) worst_margin = std::min(worst_margin, bound - err_next);
  }
  CHECK(worst_margin < 1.0);  // the bound is doing real work, not vacuous
}

TEST_CASE("candidate selection over the rho grid") {
  const ErrorBoundConstants consts = frozen_consts();
  const DiscreteDynamics dyn = dyn2();

  SUBCASE("single-entry grid returns that rho") {
    const SynthesisConfig cfg = config2(consts, Vec::Constant(1, 0.92));
    const TubeController ctrl = select_candidate(cfg, dyn, consts, false);
    CHECK(ctrl.rho == 0.92);
    CHECK(ctrl.contractive);
  }

  SUBCASE("selection is deterministic and picks the best metric on the grid") {
    Vec grid(3);
    grid << 0.85, 0.9, 0.95;
    const SynthesisConfig cfg = config2(consts, grid);
    const TubeController c1 = select_candidate(cfg, dyn, consts, false);
    const TubeController c2 = select_candidate(cfg, dyn, consts, false);
    CHECK((c1.P - c2.P).norm() == 0.0);
    CHECK(c1.rho == c2.rho);
    // The winner minimizes the realized tightening (constant times the
    // steady-state tube size) among per-rho synthesis results.
    double winner_metric = INFINITY;
    for (int i = 0; i < 3; ++i) {
      const SynthesisResult r = synthesize(cfg, dyn, grid[i]);
      const TubeController cand = derive_constants(
          r.P, r.K, grid[i], std::sqrt(std::max(r.w_bar2, 0.0)), cfg, dyn,
          consts);
      const double m =
          std::sqrt(std::max(r.c_x2.maxCoeff(), r.c_u2.maxCoeff())) *
          cand.delta_bar;
      winner_metric = std::min(winner_metric, m);
      if (grid[i] == c1.rho)
        CHECK(m == doctest::Approx(winner_metric).epsilon(1e-12));
    }
  }

  SUBCASE("doubled uncertainty weakly increases the selected rho_tilde") {
    Vec grid(3);
    grid << 0.85, 0.9, 0.95;
    ErrorBoundConstants doubled = consts;
    doubled.a *= 2.0;
    doubled.b *= 2.0;
    // The disturbance box scales with the constants as well.
    const SynthesisConfig cfg1 = config2(consts, grid);
    const SynthesisConfig cfg2x = config2(doubled, grid);
    const TubeController c1 = select_candidate(cfg1, dyn, consts, false);
    const TubeController c2 = select_candidate(cfg2x, dyn, doubled, false);
    CHECK(c2.rho_tilde >= c1.rho_tilde);
  }

  SUBCASE("huge uncertainty: flexible rejects all, rigid still returns") {
    ErrorBoundConstants huge = consts;
    huge.a = 1000.0;  // forces rho_tilde = rho + d L_beta >= 1 at any rho
    Vec grid(2);
    grid << 0.85, 0.95;
    const SynthesisConfig cfg = config2(huge, grid);
    CHECK_THROWS_AS(select_candidate(cfg, dyn, huge, false), SynthesisFailed);
    const TubeController rigid = select_candidate(cfg, dyn, huge, true);
    CHECK_FALSE(rigid.contractive);
    CHECK(rigid.delta_bar > 0.0);
    CHECK(std::isinf(rigid.delta_f));
  }
}

TEST_CASE("synthesis config assembly and validation") {
  const SynthesisConfig cfg = config2(frozen_consts(), Vec::Constant(1, 0.9));
  cfg.validate(4, 2);
  CHECK(cfg.state_constraints.rows() == 8);
  CHECK(cfg.input_constraints.rows() == 4);
  // Normalizer pattern: q rows 0.1, velocity rows 2.0, inputs 20.
  CHECK(cfg.state_normalizer[0] == 0.1);
  CHECK(cfg.state_normalizer[2] == 2.0);
  CHECK(cfg.state_normalizer[4] == 0.1);
  CHECK(cfg.state_normalizer[7] == 2.0);
  CHECK(cfg.input_normalizer.minCoeff() == 20.0);

  SynthesisConfig bad = cfg;
  bad.rho_grid = Vec::Constant(1, 1.0);
  CHECK_THROWS_AS(bad.validate(4, 2), std::invalid_argument);
  bad = cfg;
  bad.state_normalizer[0] = 0.0;
  CHECK_THROWS_AS(bad.validate(4, 2), std::invalid_argument);
  CHECK_THROWS_AS(synthesize(cfg, dyn2(), 1.5), std::invalid_argument);
}
