#pragma once

#include <string>
#include <vector>

#include "rtmpc/arm.hpp"
#include "rtmpc/common.hpp"
#include "rtmpc/error_bounds.hpp"
#include "rtmpc/geometry.hpp"
#include "rtmpc/socp.hpp"
#include "rtmpc/synthesis.hpp"

namespace rtmpc {

/// flexible: tube size is optimized per step through the beta recursion.
/// rigid:    tube size is frozen at the worst-case delta_bar everywhere.
/// nominal:  no tube at all; the plan starts exactly at the measured state.
enum class MpcMode { flexible, rigid, nominal };

struct MpcConfig {
  int horizon = 20;  // >= 2
  Mat Q;             // stage state weight, measured against the plan endpoint
  Mat Q_e;           // endpoint-to-goal weight
  Mat R;             // stage input weight
  double epsilon = 1e-3;  // extra endpoint tube margin, in the P-norm
  MpcMode mode = MpcMode::flexible;

  void validate(int nx, int nu) const;  // throws std::invalid_argument
};

/// Plant and controller data fixed across all solves of an episode.
struct MpcModel {
  DiscreteDynamics dyn;
  TubeController ctrl;
  ErrorBoundConstants consts;
  StateBox state_box;
  AccelSet accel_set;
};

/// Per-solve inputs: measured state, virtual goal (zero velocity), and the
/// collision ball allocated to each predicted step (horizon+1 entries).
struct MpcProblemInputs {
  State x_now;
  State x_goal;
  std::vector<Ball> balls;
};

enum class MpcStatus { optimal, infeasible, solver_error };

struct MpcSolution {
  std::vector<State> X_bar;  // horizon+1 nominal states
  std::vector<Vec> A_bar;    // horizon nominal accelerations
  Vec deltas;                // horizon+1 tube scalings (constant/zero in rigid/nominal)
  double cost = 0.0;         // objective evaluated at the returned variables
  MpcStatus status = MpcStatus::solver_error;
  bool inaccurate = false;   // solver met only the relaxed tolerance
};

/// Column layout of the assembled cone program. Offsets of -1 mark variable
/// groups absent in the current mode.
struct MpcLayout {
  int n = 0;   // joints
  int nx = 0;  // state dimension (2n)
  int nu = 0;  // input dimension (n)
  int H = 0;
  int off_x = 0;
  int off_a = 0;
  int off_delta = -1;  // flexible only
  int off_ta = -1;     // ||a_bar_i|| epigraphs, flexible with a-term only
  int off_tv = -1;     // ||qd(x_bar_i)|| epigraphs, flexible with b-term only
  int off_s = 0;       // stage-cost epigraphs
  int off_se = 0;      // endpoint-cost epigraph
  int n_vars = 0;

  int x_idx(int i, int k) const { return off_x + i * nx + k; }
  int a_idx(int i, int k) const { return off_a + i * nu + k; }
  int delta_idx(int i) const { return off_delta + i; }
  int ta_idx(int i) const { return off_ta + i; }
  int tv_idx(int i) const { return off_tv + i; }
  int s_idx(int i) const { return off_s + i; }
};

struct MpcProgram {
  socp::Problem problem;
  MpcLayout layout;
};

/// Assembles the tube MPC as a second-order cone program:
///   min sum_i [ ||x_i - x_H||_Q^2 + ||a_i||_R^2 + delta_i ]
///       + ||x_H - x_goal||_Qe^2 + delta_H / (1 - rho_tilde)
///   s.t. ||x_0 - x_now||_P <= delta_0,
///        x_{i+1} = A x_i + B a_i,  qd(x_H) = 0,  delta_H >= delta_f,
///        delta_{i+1} >= rho_tilde delta_i + d (a t_a,i + b t_v,i + c),
///        t_a,i >= ||a_i||,  t_v,i >= ||qd(x_i)||,
///        per-face box tightening by c_x delta_i / c_u delta_i
///        (endpoint additionally by epsilon),
///        ||q(x_i) - ball_i.center|| <= ball_i.radius - r_p delta_i
///        (endpoint: radius - r_p (delta_H + epsilon)).
/// rigid mode freezes delta at delta_bar and drops the recursion; nominal
/// mode sets delta to zero and pins x_0 = x_now, keeping only the epsilon
/// part of the endpoint tightening. Quadratic costs enter through rotated
/// second-order cones, so the program is structurally conic by construction.
MpcProgram assemble(const MpcConfig& cfg, const MpcModel& model,
                    const MpcProblemInputs& inp);

/// Assembles and solves. Solver tolerance 1e-8 with one retry at 1e-6 before
/// declaring solver_error; primal infeasibility maps to MpcStatus::infeasible.
MpcSolution build_and_solve(const MpcConfig& cfg, const MpcModel& model,
                            const MpcProblemInputs& inp);

struct MpcAudit {
  bool ok = false;
  double max_violation = 0.0;    // worst constraint violation found
  double objective_error = 0.0;  // |recomputed cost - reported cost|
  std::vector<std::string> failures;
};

/// Independent re-check of a returned solution against the original inputs:
/// every constraint family at tolerance 1e-6 (dynamics consistency at 1e-7)
/// and the objective against a recomputation at 1e-8 (scaled). The tube
/// recursion is checked with exact norms rather than the epigraph values.
MpcAudit audit_solution(const MpcConfig& cfg, const MpcModel& model,
                        const MpcProblemInputs& inp, const MpcSolution& sol);

/// The shifted plan that stays feasible after applying n_a inputs: drops the
/// first n_a states, appends the endpoint n_a times, pads inputs with zero.
struct ShiftedPlan {
  std::vector<State> X_bar;  // horizon+1 entries
  std::vector<Vec> A_bar;    // horizon entries
};

ShiftedPlan shift_warm_start(const MpcSolution& sol, int n_a);

/// Tube-tracking acceleration a = a_bar + K (x - x_bar).
Vec aux_control(const TubeController& ctrl, const State& x, const State& x_bar,
                const Vec& a_bar);

}  // namespace rtmpc
