#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <map>
#include <tuple>

#include "doctest.h"
#include "rtmpc/mpc.hpp"
#include "rtmpc/rng.hpp"

using namespace rtmpc;

namespace {

ArmParams arm2() {
  ArmParams p;
  p.link_masses = Vec2(1.5, 1.0);
  p.link_lengths = Vec2(0.8, 0.6);
  p.com_offsets = Vec2(0.4, 0.3);
  p.link_inertias = Vec2(0.08, 0.03);
  p.damping_diag = Vec2(0.2, 0.2);
  p.gravity_accel = 0.0;
  return p;
}

StateBox box2() {
  StateBox b;
  b.q_halfwidth = Vec2(M_PI, M_PI);
  b.qd_halfwidth = Vec2(2.0, 2.0);
  return b;
}

AccelSet accel2() {
  AccelSet a;
  a.box_halfwidth = Vec2(12.0, 12.0);
  return a;
}

/// Synthesizes (and caches) a tube controller for hand-picked error-bound
/// constants; the MPC tests do not depend on the sampling-based estimates.
MpcModel make_model(double a_const, double b_const, double c_const) {
  static std::map<std::tuple<double, double, double>, MpcModel> cache;
  const auto key = std::make_tuple(a_const, b_const, c_const);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;

  MpcModel m;
  m.dyn = DiscreteDynamics::make(2, 0.01);
  m.consts.a = a_const;
  m.consts.b = b_const;
  m.consts.c = c_const;
  m.state_box = box2();
  m.accel_set = accel2();
  Vec grid(3);
  grid << 0.85, 0.9, 0.95;
  const SynthesisConfig scfg =
      make_synthesis_config(m.state_box, m.accel_set, m.dyn, m.consts, grid);
  m.ctrl = select_candidate(scfg, m.dyn, m.consts, /*rigid=*/false);
  cache.emplace(key, m);
  return m;
}

MpcConfig make_cfg(int H, MpcMode mode) {
  MpcConfig c;
  c.horizon = H;
  Vec qdiag(4);
  qdiag << 10.0, 10.0, 0.01, 0.01;
  c.Q = Mat(qdiag.asDiagonal());
  c.Q_e = 1e4 * Mat::Identity(4, 4);
  c.R = 1e-3 * Mat::Identity(2, 2);
  c.epsilon = 1e-3;
  c.mode = mode;
  return c;
}

State st(double q1, double q2, double v1 = 0.0, double v2 = 0.0) {
  State s;
  s.q = Vec2(q1, q2);
  s.qd = Vec2(v1, v2);
  return s;
}

std::vector<Ball> balls_at(int count, const Vec& center, double radius) {
  return std::vector<Ball>(static_cast<size_t>(count), Ball{center, radius});
}

std::vector<Ball> big_balls(int count) {
  return balls_at(count, Vec(Vec2(0.0, 0.0)), 50.0);
}

double max_abs_diff(const State& a, const State& b) {
  return (a.to_x() - b.to_x()).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("assembled program is structurally conic with the documented layout") {
  const MpcModel m = make_model(0.15, 0.5, 0.02);
  const int H = 6, nx = 4, nu = 2, n = 2;
  const MpcProblemInputs inp{st(0.2, 0.1), st(0.5, -0.3), big_balls(H + 1)};
  const MpcProgram prog = assemble(make_cfg(H, MpcMode::flexible), m, inp);
  const MpcLayout& L = prog.layout;

  CHECK(L.n_vars == (H + 1) * nx + H * nu + (H + 1) + H + H + H + 1);
  CHECK(prog.problem.n_eq() == H * nx + n);
  CHECK(prog.problem.cones.nonneg ==
        (H + 1) + (H + 1) * 2 * nx + H * 2 * nu);
  CHECK(static_cast<int>(prog.problem.cones.soc.size()) ==
        1 + (H + 1) + H + H + H + 1);
  CHECK_NOTHROW(prog.problem.validate());
  CHECK(prog.problem.c[L.delta_idx(0)] == 1.0);
  CHECK(prog.problem.c[L.delta_idx(H)] ==
        doctest::Approx(1.0 / (1.0 - m.ctrl.rho_tilde)).epsilon(1e-12));
  CHECK(prog.problem.c[L.s_idx(0)] == 1.0);
  CHECK(prog.problem.c[L.x_idx(0, 0)] == 0.0);

  const MpcProgram rigid = assemble(make_cfg(H, MpcMode::rigid), m, inp);
  CHECK(rigid.layout.off_delta == -1);
  CHECK(static_cast<int>(rigid.problem.cones.soc.size()) == 1 + (H + 1) + H + 1);
  CHECK(rigid.problem.cones.nonneg == (H + 1) * 2 * nx + H * 2 * nu);

  const MpcProgram nom = assemble(make_cfg(H, MpcMode::nominal), m, inp);
  CHECK(nom.problem.n_eq() == H * nx + n + nx);
  CHECK(static_cast<int>(nom.problem.cones.soc.size()) == (H + 1) + H + 1);
}

TEST_CASE("a steady state with no constant error term is a zero-cost fixed point") {
  const MpcModel m = make_model(0.15, 0.5, 0.0);
  const MpcConfig cfg = make_cfg(8, MpcMode::flexible);
  const State xs = st(0.3, -0.4);
  const MpcProblemInputs inp{xs, xs, balls_at(9, xs.q, 50.0)};
  const MpcSolution sol = build_and_solve(cfg, m, inp);
  REQUIRE(sol.status == MpcStatus::optimal);
  for (const State& s : sol.X_bar) CHECK(max_abs_diff(s, xs) <= 1e-5);
  for (const Vec& a : sol.A_bar) CHECK(a.cwiseAbs().maxCoeff() <= 1e-5);
  CHECK(sol.deltas.maxCoeff() <= 1e-6);
  CHECK(sol.deltas.sum() <= 1e-6);
  CHECK(sol.cost <= 1e-6);
  const MpcAudit audit = audit_solution(cfg, m, inp, sol);
  CHECK(audit.ok);
  for (const auto& f : audit.failures) { INFO(f); CHECK(false); }
}

TEST_CASE("a terminal ball smaller than the resting tube projection is infeasible") {
  const MpcModel m = make_model(0.15, 0.5, 0.02);
  REQUIRE(m.ctrl.delta_f > 0.0);
  const MpcConfig cfg = make_cfg(6, MpcMode::flexible);
  std::vector<Ball> bl = big_balls(7);
  bl[6] = Ball{Vec(Vec2(0.0, 0.0)),
               0.9 * m.ctrl.r_p * (m.ctrl.delta_f + cfg.epsilon)};
  const MpcProblemInputs inp{st(0.0, 0.0), st(0.0, 0.0), bl};
  const MpcSolution sol = build_and_solve(cfg, m, inp);
  CHECK(sol.status == MpcStatus::infeasible);
}

TEST_CASE("nominal mode pins the start state and carries no tube") {
  const MpcModel m = make_model(0.15, 0.5, 0.02);
  const MpcConfig cfg = make_cfg(8, MpcMode::nominal);
  const MpcProblemInputs inp{st(0.2, -0.3, 0.1, -0.2), st(0.5, 0.1),
                             big_balls(9)};
  const MpcSolution sol = build_and_solve(cfg, m, inp);
  REQUIRE(sol.status == MpcStatus::optimal);
  CHECK(max_abs_diff(sol.X_bar[0], inp.x_now) <= 1e-7);
  CHECK(sol.deltas.cwiseAbs().maxCoeff() == 0.0);
  const MpcAudit audit = audit_solution(cfg, m, inp, sol);
  CHECK(audit.ok);
  for (const auto& f : audit.failures) { INFO(f); CHECK(false); }
}

TEST_CASE("rigid mode freezes the tube at its worst case and tightens accordingly") {
  const MpcModel m = make_model(0.03, 0.1, 0.005);
  const TubeController& ctrl = m.ctrl;
  CHECK(ctrl.delta_bar >= ctrl.delta_f);

  const MpcConfig cfgF = make_cfg(6, MpcMode::flexible);
  const MpcConfig cfgR = make_cfg(6, MpcMode::rigid);
  const State xs = st(0.3, -0.4);

  // A big ball admits both modes; rigid reports the frozen tube size.
  const MpcProblemInputs roomy{xs, xs, balls_at(7, xs.q, 50.0)};
  const MpcSolution sR = build_and_solve(cfgR, m, roomy);
  REQUIRE(sR.status == MpcStatus::optimal);
  CHECK(sR.deltas.minCoeff() == sR.deltas.maxCoeff());
  CHECK(sR.deltas[0] == ctrl.delta_bar);
  const MpcAudit audit = audit_solution(cfgR, m, roomy, sR);
  CHECK(audit.ok);
  for (const auto& f : audit.failures) { INFO(f); CHECK(false); }

  // A ball sized between the two tube projections separates the modes.
  const double r = 0.95 * ctrl.r_p * (ctrl.delta_bar + cfgR.epsilon);
  REQUIRE(r > ctrl.r_p * (ctrl.delta_f + cfgF.epsilon) * 1.05);
  const MpcProblemInputs snug{xs, xs, balls_at(7, xs.q, r)};
  CHECK(build_and_solve(cfgF, m, snug).status == MpcStatus::optimal);
  CHECK(build_and_solve(cfgR, m, snug).status == MpcStatus::infeasible);
}

TEST_CASE("random reachable instances solve and pass the independent audit") {
  const MpcModel m = make_model(0.15, 0.5, 0.02);
  const MpcConfig cfg = make_cfg(10, MpcMode::flexible);
  Rng rng(61415926);
  for (int trial = 0; trial < 10; ++trial) {
    const State x0 = st(rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6),
                        rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3));
    const State xg = st(rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6));
    const MpcProblemInputs inp{x0, xg, big_balls(11)};
    const MpcSolution sol = build_and_solve(cfg, m, inp);
    REQUIRE(sol.status == MpcStatus::optimal);
    const MpcAudit audit = audit_solution(cfg, m, inp, sol);
    CHECK(audit.max_violation <= 1e-6);
    CHECK(audit.objective_error <= 1e-8 * (1.0 + std::abs(sol.cost)));
    CHECK(audit.ok);
    for (const auto& f : audit.failures) { INFO(f); CHECK(false); }

    if (trial == 0) {
      // The conic epigraph objective agrees with the printed objective.
      const MpcProgram prog = assemble(cfg, m, inp);
      const socp::Solution raw = socp::solve(prog.problem);
      REQUIRE(raw.status == socp::Status::optimal);
      CHECK(std::abs(raw.objective - sol.cost) <=
            1e-5 * (1.0 + std::abs(sol.cost)));
    }
  }
}

TEST_CASE("the shifted plan drops the applied prefix and pads with the endpoint") {
  const MpcModel m = make_model(0.15, 0.5, 0.02);
  const MpcConfig cfg = make_cfg(6, MpcMode::flexible);
  const MpcProblemInputs inp{st(0.4, -0.2), st(-0.3, 0.5), big_balls(7)};
  const MpcSolution sol = build_and_solve(cfg, m, inp);
  REQUIRE(sol.status == MpcStatus::optimal);
  const int H = 6;

  const ShiftedPlan shifted = shift_warm_start(sol, 2);
  REQUIRE(static_cast<int>(shifted.X_bar.size()) == H + 1);
  REQUIRE(static_cast<int>(shifted.A_bar.size()) == H);
  for (int i = 0; i <= H; ++i)
    CHECK(max_abs_diff(shifted.X_bar[i], sol.X_bar[std::min(i + 2, H)]) == 0.0);
  for (int i = 0; i < H; ++i) {
    if (i + 2 < H)
      CHECK((shifted.A_bar[i] - sol.A_bar[i + 2]).cwiseAbs().maxCoeff() == 0.0);
    else
      CHECK(shifted.A_bar[i].cwiseAbs().maxCoeff() == 0.0);
  }

  const ShiftedPlan all = shift_warm_start(sol, H);
  for (int i = 0; i <= H; ++i)
    CHECK(max_abs_diff(all.X_bar[i], sol.X_bar[H]) == 0.0);
  for (int i = 0; i < H; ++i)
    CHECK(all.A_bar[i].cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(shift_warm_start(sol, 0), std::invalid_argument);
  CHECK_THROWS_AS(shift_warm_start(sol, H + 1), std::invalid_argument);
  MpcSolution bad = sol;
  bad.status = MpcStatus::infeasible;
  CHECK_THROWS_AS(shift_warm_start(bad, 1), std::invalid_argument);
}

TEST_CASE("auxiliary control returns the plan input on the plan and tracks exactly without model error") {
  const MpcModel m = make_model(0.15, 0.5, 0.02);
  const TubeController& ctrl = m.ctrl;

  const State xb = st(0.1, 0.2, -0.3, 0.4);
  const Vec ab = Vec2(1.0, -2.0);
  CHECK((aux_control(ctrl, xb, xb, ab) - ab).cwiseAbs().maxCoeff() == 0.0);

  State x1 = xb, x2 = xb;
  x1.q += Vec2(0.01, -0.02);
  x1.qd += Vec2(0.03, 0.01);
  x2.q += 2.0 * Vec2(0.01, -0.02);
  x2.qd += 2.0 * Vec2(0.03, 0.01);
  const Vec corr1 = aux_control(ctrl, x1, xb, ab) - ab;
  const Vec corr2 = aux_control(ctrl, x2, xb, ab) - ab;
  CHECK((corr2 - 2.0 * corr1).cwiseAbs().maxCoeff() <= 1e-13);

  // With the true parameters equal to the nominal ones, the auxiliary
  // controller reproduces the optimized prediction step for step.
  const MpcConfig cfg = make_cfg(8, MpcMode::flexible);
  const MpcProblemInputs inp{st(0.4, -0.2), st(-0.3, 0.5), big_balls(9)};
  const MpcSolution sol = build_and_solve(cfg, m, inp);
  REQUIRE(sol.status == MpcStatus::optimal);
  REQUIRE(!sol.inaccurate);
  const ArmModel plant(arm2(), Vec::Zero(4));
  State x = sol.X_bar[0];
  for (int i = 0; i < 8; ++i) {
    const Vec a = aux_control(ctrl, x, sol.X_bar[i], sol.A_bar[i]);
    x = step_true(plant, m.dyn, x, a);
    CHECK(max_abs_diff(x, sol.X_bar[i + 1]) <= 1e-9);
  }
}

TEST_CASE("closed loop under a worst-case parameter draw keeps containment, feasibility, and decreasing cost") {
  const ArmParams nominal = arm2();
  UncertaintySet family;
  family.relative_bounds = Vec::Constant(4, 0.05);
  family.scale = 1.0;
  const StateBox X = box2();
  const AccelSet A = accel2();
  const ErrorBoundConstants consts =
      estimate_constants(nominal, family, X, 20000, 1.1, 77001);

  MpcModel m;
  m.dyn = DiscreteDynamics::make(2, 0.01);
  m.consts = consts;
  m.state_box = X;
  m.accel_set = A;
  Vec grid(3);
  grid << 0.85, 0.9, 0.95;
  m.ctrl = select_candidate(make_synthesis_config(X, A, m.dyn, consts, grid),
                            m.dyn, consts, /*rigid=*/false);
  REQUIRE(m.ctrl.contractive);

  const ArmModel plant(nominal, family.vertices(nominal)[0]);
  const MpcConfig cfg = make_cfg(10, MpcMode::flexible);
  const State x0 = st(0.5, -0.6);
  const State goal = st(-0.1, 0.2);
  const std::vector<Ball> bl = big_balls(11);
  const int n_a = 2;

  State x = x0;
  double prev_cost = INFINITY;
  for (int k = 0; k < 40; ++k) {
    const MpcProblemInputs inp{x, goal, bl};
    const MpcSolution sol = build_and_solve(cfg, m, inp);
    REQUIRE(sol.status == MpcStatus::optimal);  // recursive feasibility
    CHECK(m.ctrl.p_norm(x.to_x() - sol.X_bar[0].to_x()) <=
          sol.deltas[0] + 1e-6);
    // Monotone cost at a fixed goal, up to solver tolerance (scaled: the
    // cost carries the 1e4 goal weight).
    CHECK(sol.cost <= prev_cost + 1e-5 * (1.0 + prev_cost));
    prev_cost = sol.cost;
    for (int j = 0; j < n_a; ++j) {
      const Vec a = aux_control(m.ctrl, x, sol.X_bar[j], sol.A_bar[j]);
      x = step_true(plant, m.dyn, x, a);
      CHECK(m.ctrl.p_norm(x.to_x() - sol.X_bar[j + 1].to_x()) <=
            sol.deltas[j + 1] + 1e-6);  // tube containment between solves
    }
  }
  CHECK((x.q - goal.q).norm() < 0.5 * (x0.q - goal.q).norm());
}

TEST_CASE("invalid inputs are rejected") {
  const MpcModel m = make_model(0.15, 0.5, 0.02);
  const MpcConfig cfg = make_cfg(6, MpcMode::flexible);
  const MpcProblemInputs good{st(0.1, 0.1), st(0.2, 0.2), big_balls(7)};
  CHECK_NOTHROW(assemble(cfg, m, good));

  MpcProblemInputs inp = good;
  inp.balls.pop_back();
  CHECK_THROWS_AS(assemble(cfg, m, inp), std::invalid_argument);

  inp = good;
  inp.x_goal.qd[0] = 0.1;
  CHECK_THROWS_AS(assemble(cfg, m, inp), std::invalid_argument);

  inp = good;
  inp.balls[3].radius = -0.5;
  CHECK_THROWS_AS(assemble(cfg, m, inp), std::invalid_argument);

  MpcConfig bad_cfg = cfg;
  bad_cfg.horizon = 1;
  CHECK_THROWS_AS(assemble(bad_cfg, m, good), std::invalid_argument);

  bad_cfg = cfg;
  bad_cfg.Q(0, 0) = -1.0;
  CHECK_THROWS_AS(assemble(bad_cfg, m, good), std::invalid_argument);

  MpcModel loose = m;
  loose.ctrl.contractive = false;
  CHECK_THROWS_AS(assemble(cfg, loose, good), std::invalid_argument);
  CHECK_NOTHROW(assemble(make_cfg(6, MpcMode::rigid), loose, good));
}
