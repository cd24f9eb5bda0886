#include "rtmpc/mpc.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace rtmpc {
namespace {

// Pinned tolerances: solver targets, independent-audit thresholds, and the
// dynamics-consistency requirement on returned plans.
constexpr double kStrictTol = 1e-8;
constexpr double kRelaxedTol = 1e-6;
constexpr double kAuditTol = 1e-6;
constexpr double kDynamicsTol = 1e-7;
constexpr double kObjectiveTol = 1e-8;

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument("mpc: " + msg);
}

void require_weight(const Mat& W, int dim, const std::string& name) {
  require(W.rows() == dim && W.cols() == dim, name + " has the wrong size");
  const double scale = 1.0 + W.cwiseAbs().maxCoeff();
  require((W - W.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale,
          name + " is not symmetric");
  Eigen::LLT<Mat> llt(W);
  require(llt.info() == Eigen::Success, name + " is not positive definite");
}

Vec stacked_state_halfwidth(const StateBox& box) {
  Vec hw(box.q_halfwidth.size() + box.qd_halfwidth.size());
  hw << box.q_halfwidth, box.qd_halfwidth;
  return hw;
}

}  // namespace

void MpcConfig::validate(int nx, int nu) const {
  require(horizon >= 2, "horizon must be at least 2");
  require(epsilon > 0.0, "epsilon must be positive");
  require_weight(Q, nx, "Q");
  require_weight(Q_e, nx, "Q_e");
  require_weight(R, nu, "R");
}

MpcProgram assemble(const MpcConfig& cfg, const MpcModel& model,
                    const MpcProblemInputs& inp) {
  const int n = static_cast<int>(model.dyn.B.cols());
  const int nx = 2 * n;
  const int nu = n;
  require(model.dyn.A.rows() == nx && model.dyn.A.cols() == nx &&
              model.dyn.B.rows() == nx,
          "dynamics dimension mismatch");
  cfg.validate(nx, nu);
  const int H = cfg.horizon;
  const TubeController& ctrl = model.ctrl;
  const ErrorBoundConstants& consts = model.consts;

  require(model.state_box.q_halfwidth.size() == n &&
              model.state_box.qd_halfwidth.size() == n,
          "state box dimension mismatch");
  require(model.accel_set.box_halfwidth.size() == n,
          "acceleration set dimension mismatch");
  require(ctrl.P.rows() == nx && ctrl.P_sqrt.rows() == nx &&
              ctrl.K.rows() == nu && ctrl.K.cols() == nx,
          "controller dimension mismatch");
  require(inp.x_now.q.size() == n && inp.x_now.qd.size() == n,
          "x_now dimension mismatch");
  require(inp.x_goal.q.size() == n && inp.x_goal.qd.size() == n,
          "x_goal dimension mismatch");
  require(inp.x_goal.qd.cwiseAbs().maxCoeff() == 0.0,
          "x_goal must have zero velocity");
  require(static_cast<int>(inp.balls.size()) == H + 1,
          "need exactly horizon+1 balls");
  for (const Ball& ball : inp.balls) {
    require(ball.center.size() == n, "ball center dimension mismatch");
    require(ball.radius > 0.0, "ball radius must be positive");
  }

  const bool flexible = cfg.mode == MpcMode::flexible;
  const bool rigid = cfg.mode == MpcMode::rigid;
  const bool nominal = cfg.mode == MpcMode::nominal;
  if (flexible)
    require(ctrl.contractive,
            "flexible mode needs a contractive tube controller");

  const ConstraintSet Xc = box_constraints(stacked_state_halfwidth(model.state_box));
  const ConstraintSet Uc = box_constraints(model.accel_set.box_halfwidth);
  require(ctrl.tightening_x.size() == Xc.rows() &&
              ctrl.tightening_u.size() == Uc.rows(),
          "tightening vector does not match the box faces");

  MpcLayout L;
  L.n = n;
  L.nx = nx;
  L.nu = nu;
  L.H = H;
  int off = 0;
  L.off_x = off;
  off += (H + 1) * nx;
  L.off_a = off;
  off += H * nu;
  const bool has_ta = flexible && consts.a > 0.0;
  const bool has_tv = flexible && consts.b > 0.0;
  if (flexible) {
    L.off_delta = off;
    off += H + 1;
  }
  if (has_ta) {
    L.off_ta = off;
    off += H;
  }
  if (has_tv) {
    L.off_tv = off;
    off += H;
  }
  L.off_s = off;
  off += H;
  L.off_se = off;
  off += 1;
  L.n_vars = off;

  socp::Problem p;
  p.c = Vec::Zero(L.n_vars);
  for (int i = 0; i < H; ++i) p.c[L.s_idx(i)] = 1.0;
  p.c[L.off_se] = 1.0;
  if (flexible) {
    for (int i = 0; i < H; ++i) p.c[L.delta_idx(i)] = 1.0;
    p.c[L.delta_idx(H)] = 1.0 / (1.0 - ctrl.rho_tilde);
  }

  // --- equalities: dynamics, endpoint at rest, pinned start in nominal mode
  const int n_eq = H * nx + n + (nominal ? nx : 0);
  std::vector<Triplet> At;
  At.reserve(static_cast<size_t>(n_eq) * (nx + 2));
  Vec b = Vec::Zero(n_eq);
  int er = 0;
  for (int i = 0; i < H; ++i) {
    for (int row = 0; row < nx; ++row) {
      At.emplace_back(er + row, L.x_idx(i + 1, row), 1.0);
      for (int k = 0; k < nx; ++k)
        if (model.dyn.A(row, k) != 0.0)
          At.emplace_back(er + row, L.x_idx(i, k), -model.dyn.A(row, k));
      for (int k = 0; k < nu; ++k)
        if (model.dyn.B(row, k) != 0.0)
          At.emplace_back(er + row, L.a_idx(i, k), -model.dyn.B(row, k));
    }
    er += nx;
  }
  for (int k = 0; k < n; ++k) At.emplace_back(er + k, L.x_idx(H, n + k), 1.0);
  er += n;
  if (nominal) {
    for (int k = 0; k < nx; ++k) At.emplace_back(er + k, L.x_idx(0, k), 1.0);
    b.segment(er, nx) = inp.x_now.to_x();
    er += nx;
  }

  // --- cone rows: orthant block first, then the second-order cones
  socp::Cones cones;
  cones.nonneg = (flexible ? H + 1 : 0) + (H + 1) * Xc.rows() + H * Uc.rows();
  if (!nominal) cones.soc.push_back(nx + 1);          // start tube
  for (int i = 0; i <= H; ++i) cones.soc.push_back(n + 1);  // collision balls
  if (has_ta)
    for (int i = 0; i < H; ++i) cones.soc.push_back(nu + 1);
  if (has_tv)
    for (int i = 0; i < H; ++i) cones.soc.push_back(n + 1);
  for (int i = 0; i < H; ++i) cones.soc.push_back(nx + nu + 2);  // stage cost
  cones.soc.push_back(nx + 2);                                   // endpoint cost

  int n_rows = cones.nonneg;
  for (int dim : cones.soc) n_rows += dim;
  std::vector<Triplet> Gt;
  Gt.reserve(static_cast<size_t>(n_rows) * 4);
  Vec h = Vec::Zero(n_rows);
  int r = 0;

  // Tube recursion delta_{i+1} >= rho_tilde delta_i + d(a t_a + b t_v + c)
  // and the endpoint floor delta_H >= delta_f.
  if (flexible) {
    for (int i = 0; i < H; ++i) {
      Gt.emplace_back(r, L.delta_idx(i + 1), -1.0);
      Gt.emplace_back(r, L.delta_idx(i), ctrl.rho_tilde);
      if (has_ta) Gt.emplace_back(r, L.ta_idx(i), ctrl.d * consts.a);
      if (has_tv) Gt.emplace_back(r, L.tv_idx(i), ctrl.d * consts.b);
      h[r] = -ctrl.d * consts.c;
      ++r;
    }
    Gt.emplace_back(r, L.delta_idx(H), -1.0);
    h[r] = -ctrl.delta_f;
    ++r;
  }

  // State boxes, per-face tightening c_x delta (endpoint adds epsilon).
  for (int i = 0; i <= H; ++i) {
    const bool end = (i == H);
    for (int j = 0; j < Xc.rows(); ++j) {
      for (int k = 0; k < nx; ++k)
        if (Xc.A(j, k) != 0.0) Gt.emplace_back(r, L.x_idx(i, k), Xc.A(j, k));
      const double cx = ctrl.tightening_x[j];
      double rhs = Xc.b[j];
      if (flexible) {
        Gt.emplace_back(r, L.delta_idx(i), cx);
        if (end) rhs -= cx * cfg.epsilon;
      } else if (rigid) {
        rhs -= cx * (ctrl.delta_bar + (end ? cfg.epsilon : 0.0));
      } else if (end) {
        rhs -= cx * cfg.epsilon;
      }
      h[r] = rhs;
      ++r;
    }
  }

  // Input boxes with c_u delta tightening.
  for (int i = 0; i < H; ++i) {
    for (int j = 0; j < Uc.rows(); ++j) {
      for (int k = 0; k < nu; ++k)
        if (Uc.A(j, k) != 0.0) Gt.emplace_back(r, L.a_idx(i, k), Uc.A(j, k));
      const double cu = ctrl.tightening_u[j];
      double rhs = Uc.b[j];
      if (flexible) {
        Gt.emplace_back(r, L.delta_idx(i), cu);
      } else if (rigid) {
        rhs -= cu * ctrl.delta_bar;
      }
      h[r] = rhs;
      ++r;
    }
  }

  // Start tube ||P^(1/2)(x_0 - x_now)|| <= delta_0 (rigid: <= delta_bar).
  if (!nominal) {
    if (flexible) Gt.emplace_back(r, L.delta_idx(0), -1.0);
    h[r] = flexible ? 0.0 : ctrl.delta_bar;
    ++r;
    const Vec px = ctrl.P_sqrt * inp.x_now.to_x();
    for (int j = 0; j < nx; ++j) {
      for (int k = 0; k < nx; ++k)
        if (ctrl.P_sqrt(j, k) != 0.0)
          Gt.emplace_back(r, L.x_idx(0, k), -ctrl.P_sqrt(j, k));
      h[r] = -px[j];
      ++r;
    }
  }

  // Collision balls ||q(x_i) - center|| <= radius - r_p delta (endpoint adds
  // epsilon inside the tube term).
  for (int i = 0; i <= H; ++i) {
    const Ball& ball = inp.balls[i];
    const bool end = (i == H);
    double rhs = ball.radius;
    if (flexible) {
      Gt.emplace_back(r, L.delta_idx(i), ctrl.r_p);
      if (end) rhs -= ctrl.r_p * cfg.epsilon;
    } else if (rigid) {
      rhs -= ctrl.r_p * (ctrl.delta_bar + (end ? cfg.epsilon : 0.0));
    } else if (end) {
      rhs -= ctrl.r_p * cfg.epsilon;
    }
    h[r] = rhs;
    ++r;
    for (int k = 0; k < n; ++k) {
      Gt.emplace_back(r, L.x_idx(i, k), -1.0);
      h[r] = -ball.center[k];
      ++r;
    }
  }

  // Norm epigraphs feeding the tube recursion.
  if (has_ta) {
    for (int i = 0; i < H; ++i) {
      Gt.emplace_back(r, L.ta_idx(i), -1.0);
      ++r;
      for (int k = 0; k < nu; ++k) {
        Gt.emplace_back(r, L.a_idx(i, k), -1.0);
        ++r;
      }
    }
  }
  if (has_tv) {
    for (int i = 0; i < H; ++i) {
      Gt.emplace_back(r, L.tv_idx(i), -1.0);
      ++r;
      for (int k = 0; k < n; ++k) {
        Gt.emplace_back(r, L.x_idx(i, n + k), -1.0);
        ++r;
      }
    }
  }

  // Quadratic costs through rotated cones: s >= ||v||^2 written as
  // ||(2v, s-1)|| <= s+1.
  const Mat sq_Q = 2.0 * sqrt_psd(cfg.Q);
  const Mat sq_R = 2.0 * sqrt_psd(cfg.R);
  const Mat sq_Qe = 2.0 * sqrt_psd(cfg.Q_e);
  for (int i = 0; i < H; ++i) {
    Gt.emplace_back(r, L.s_idx(i), -1.0);
    h[r] = 1.0;
    ++r;
    for (int j = 0; j < nx; ++j) {
      for (int k = 0; k < nx; ++k) {
        if (sq_Q(j, k) == 0.0) continue;
        Gt.emplace_back(r, L.x_idx(i, k), -sq_Q(j, k));
        Gt.emplace_back(r, L.x_idx(H, k), sq_Q(j, k));
      }
      ++r;
    }
    for (int j = 0; j < nu; ++j) {
      for (int k = 0; k < nu; ++k)
        if (sq_R(j, k) != 0.0) Gt.emplace_back(r, L.a_idx(i, k), -sq_R(j, k));
      ++r;
    }
    Gt.emplace_back(r, L.s_idx(i), -1.0);
    h[r] = -1.0;
    ++r;
  }
  {
    Gt.emplace_back(r, L.off_se, -1.0);
    h[r] = 1.0;
    ++r;
    const Vec pg = sq_Qe * inp.x_goal.to_x();
    for (int j = 0; j < nx; ++j) {
      for (int k = 0; k < nx; ++k)
        if (sq_Qe(j, k) != 0.0)
          Gt.emplace_back(r, L.x_idx(H, k), -sq_Qe(j, k));
      h[r] = -pg[j];
      ++r;
    }
    Gt.emplace_back(r, L.off_se, -1.0);
    h[r] = -1.0;
    ++r;
  }

  p.A.resize(n_eq, L.n_vars);
  p.A.setFromTriplets(At.begin(), At.end());
  p.b = std::move(b);
  p.G.resize(n_rows, L.n_vars);
  p.G.setFromTriplets(Gt.begin(), Gt.end());
  p.h = std::move(h);
  p.cones = std::move(cones);
  p.validate();  // structural audit: only linear rows and second-order cones
  return {std::move(p), L};
}

MpcSolution build_and_solve(const MpcConfig& cfg, const MpcModel& model,
                            const MpcProblemInputs& inp) {
  const MpcProgram prog = assemble(cfg, model, inp);

  socp::Settings strict;
  strict.eps_feas = strict.eps_gap = kStrictTol;
  socp::Solution s = socp::solve(prog.problem, strict);
  bool retried = false;
  if (s.status != socp::Status::optimal &&
      s.status != socp::Status::primal_infeasible) {
    socp::Settings relaxed;
    relaxed.eps_feas = relaxed.eps_gap = relaxed.eps_relaxed = kRelaxedTol;
    relaxed.max_iters = 200;
    s = socp::solve(prog.problem, relaxed);
    retried = true;
  }

  MpcSolution out;
  if (s.status == socp::Status::primal_infeasible) {
    out.status = MpcStatus::infeasible;
    return out;
  }
  if (s.status != socp::Status::optimal) {
    out.status = MpcStatus::solver_error;
    return out;
  }
  out.status = MpcStatus::optimal;
  out.inaccurate = s.inaccurate || retried;

  const MpcLayout& L = prog.layout;
  const int H = L.H;
  out.X_bar.resize(H + 1);
  out.A_bar.resize(H);
  for (int i = 0; i <= H; ++i) {
    Vec xi(L.nx);
    for (int k = 0; k < L.nx; ++k) xi[k] = s.x[L.x_idx(i, k)];
    out.X_bar[i] = State::from_x(xi);
  }
  for (int i = 0; i < H; ++i) {
    Vec ai(L.nu);
    for (int k = 0; k < L.nu; ++k) ai[k] = s.x[L.a_idx(i, k)];
    out.A_bar[i] = std::move(ai);
  }
  out.deltas = Vec::Zero(H + 1);
  if (cfg.mode == MpcMode::flexible) {
    // A tube size whose optimum is exactly zero comes back from the interior
    // point at roughly -eps_feas; tube sizes are nonnegative by definition.
    for (int i = 0; i <= H; ++i)
      out.deltas[i] = std::max(s.x[L.delta_idx(i)], 0.0);
  } else if (cfg.mode == MpcMode::rigid) {
    out.deltas.setConstant(model.ctrl.delta_bar);
  }

  // Report the printed objective at the returned variables, not the conic
  // epigraph value, so the number is exact for the plan actually handed out.
  double cost = 0.0;
  const Vec xH = out.X_bar[H].to_x();
  for (int i = 0; i < H; ++i) {
    const Vec dx = out.X_bar[i].to_x() - xH;
    cost += dx.dot(cfg.Q * dx) + out.A_bar[i].dot(cfg.R * out.A_bar[i]);
  }
  const Vec dg = xH - inp.x_goal.to_x();
  cost += dg.dot(cfg.Q_e * dg);
  if (cfg.mode == MpcMode::flexible) {
    for (int i = 0; i < H; ++i) cost += out.deltas[i];
    cost += out.deltas[H] / (1.0 - model.ctrl.rho_tilde);
  }
  out.cost = cost;
  return out;
}

MpcAudit audit_solution(const MpcConfig& cfg, const MpcModel& model,
                        const MpcProblemInputs& inp, const MpcSolution& sol) {
  MpcAudit audit;
  const int H = cfg.horizon;
  if (sol.status != MpcStatus::optimal) {
    audit.failures.push_back("solution is not optimal");
    return audit;
  }
  if (static_cast<int>(sol.X_bar.size()) != H + 1 ||
      static_cast<int>(sol.A_bar.size()) != H || sol.deltas.size() != H + 1) {
    audit.failures.push_back("solution arrays have the wrong length");
    return audit;
  }

  const TubeController& ctrl = model.ctrl;
  const bool flexible = cfg.mode == MpcMode::flexible;
  const bool nominal = cfg.mode == MpcMode::nominal;
  auto check = [&audit](double violation, double tol, const std::string& what) {
    audit.max_violation = std::max(audit.max_violation, violation);
    if (violation > tol) audit.failures.push_back(what);
  };

  // Dynamics and endpoint-at-rest consistency.
  for (int i = 0; i < H; ++i) {
    const Vec gap = sol.X_bar[i + 1].to_x() - model.dyn.A * sol.X_bar[i].to_x() -
                    model.dyn.B * sol.A_bar[i];
    check(gap.cwiseAbs().maxCoeff(), kDynamicsTol,
          "dynamics mismatch at step " + std::to_string(i));
  }
  check(sol.X_bar[H].qd.cwiseAbs().maxCoeff(), kAuditTol,
        "endpoint velocity is not zero");

  // Start condition.
  if (nominal) {
    check((sol.X_bar[0].to_x() - inp.x_now.to_x()).cwiseAbs().maxCoeff(),
          kDynamicsTol, "start state is not pinned to the measurement");
  } else {
    check(ctrl.p_norm(sol.X_bar[0].to_x() - inp.x_now.to_x()) - sol.deltas[0],
          kAuditTol, "start state escapes the initial tube");
  }

  // Tube values and recursion (with exact norms, not epigraph surrogates).
  for (int i = 0; i <= H; ++i)
    check(-sol.deltas[i], 1e-9, "negative tube size at step " + std::to_string(i));
  if (flexible) {
    for (int i = 0; i < H; ++i) {
      const double needed =
          ctrl.rho_tilde * sol.deltas[i] +
          ctrl.d * model.consts.beta(sol.A_bar[i].norm(), sol.X_bar[i].qd.norm());
      check(needed - sol.deltas[i + 1], kDynamicsTol,
            "tube recursion violated at step " + std::to_string(i));
    }
    check(ctrl.delta_f - sol.deltas[H], kAuditTol,
          "endpoint tube below its resting size");
  }

  // Tightened boxes. deltas[] already reflects the mode; the endpoint adds
  // the epsilon margin in every mode.
  const ConstraintSet Xc = box_constraints(stacked_state_halfwidth(model.state_box));
  const ConstraintSet Uc = box_constraints(model.accel_set.box_halfwidth);
  for (int i = 0; i <= H; ++i) {
    const double eff = sol.deltas[i] + (i == H ? cfg.epsilon : 0.0);
    const Vec xi = sol.X_bar[i].to_x();
    for (int j = 0; j < Xc.rows(); ++j)
      check(Xc.A.row(j).dot(xi) - (Xc.b[j] - ctrl.tightening_x[j] * eff),
            kAuditTol, "state box face " + std::to_string(j) + " at step " +
                           std::to_string(i));
  }
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < Uc.rows(); ++j)
      check(Uc.A.row(j).dot(sol.A_bar[i]) -
                (Uc.b[j] - ctrl.tightening_u[j] * sol.deltas[i]),
            kAuditTol, "input box face " + std::to_string(j) + " at step " +
                           std::to_string(i));

  // Collision balls.
  if (static_cast<int>(inp.balls.size()) == H + 1) {
    for (int i = 0; i <= H; ++i) {
      const double eff = sol.deltas[i] + (i == H ? cfg.epsilon : 0.0);
      check((sol.X_bar[i].q - inp.balls[i].center).norm() -
                (inp.balls[i].radius - ctrl.r_p * eff),
            kAuditTol, "ball constraint at step " + std::to_string(i));
    }
  } else {
    audit.failures.push_back("ball list has the wrong length");
  }

  // Objective recomputation through the weighted norms.
  const Mat sqQ = sqrt_psd(cfg.Q);
  const Mat sqR = sqrt_psd(cfg.R);
  const Mat sqQe = sqrt_psd(cfg.Q_e);
  double j_val = (sqQe * (sol.X_bar[H].to_x() - inp.x_goal.to_x())).squaredNorm();
  for (int i = 0; i < H; ++i) {
    j_val += (sqQ * (sol.X_bar[i].to_x() - sol.X_bar[H].to_x())).squaredNorm();
    j_val += (sqR * sol.A_bar[i]).squaredNorm();
  }
  if (flexible) {
    for (int i = 0; i < H; ++i) j_val += sol.deltas[i];
    j_val += sol.deltas[H] / (1.0 - ctrl.rho_tilde);
  }
  audit.objective_error = std::abs(j_val - sol.cost);
  if (audit.objective_error > kObjectiveTol * (1.0 + std::abs(j_val)))
    audit.failures.push_back("objective does not match its recomputation");

  audit.ok = audit.failures.empty();
  return audit;
}

ShiftedPlan shift_warm_start(const MpcSolution& sol, int n_a) {
  if (sol.status != MpcStatus::optimal)
    throw std::invalid_argument("mpc: shift requires an optimal solution");
  const int H = static_cast<int>(sol.A_bar.size());
  if (n_a < 1 || n_a > H)
    throw std::invalid_argument("mpc: n_a must lie in [1, horizon]");
  ShiftedPlan out;
  out.X_bar.resize(H + 1);
  out.A_bar.resize(H);
  const int nu = static_cast<int>(sol.A_bar[0].size());
  for (int i = 0; i <= H; ++i) out.X_bar[i] = sol.X_bar[std::min(i + n_a, H)];
  for (int i = 0; i < H; ++i)
    out.A_bar[i] = (i + n_a < H) ? sol.A_bar[i + n_a] : Vec(Vec::Zero(nu));
  return out;
}

Vec aux_control(const TubeController& ctrl, const State& x, const State& x_bar,
                const Vec& a_bar) {
  return a_bar + ctrl.K * (x.to_x() - x_bar.to_x());
}

}  // namespace rtmpc
