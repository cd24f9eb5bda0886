#pragma once

#include <vector>

#include "rtmpc/arm.hpp"
#include "rtmpc/common.hpp"
#include "rtmpc/error_bounds.hpp"

namespace rtmpc {

/// Half-plane constraint set {z : A z <= b} with unit-norm rows.
struct ConstraintSet {
  Mat A;
  Vec b;

  int rows() const { return static_cast<int>(A.rows()); }
  void validate(int dim) const;
};

/// Box |z_i| <= halfwidth_i as stacked +/- identity rows.
ConstraintSet box_constraints(const Vec& halfwidth);

struct SynthesisConfig {
  Vec rho_grid;                    // contraction-rate candidates, each in (0,1)
  ConstraintSet state_constraints; // on x = (q, qd)
  ConstraintSet input_constraints; // on the commanded acceleration
  Vec disturbance_halfwidth;       // symmetric box W in state space
  Vec state_normalizer;            // per state row, divides the row in the SDP loss
  Vec input_normalizer;            // per input row

  void validate(int nx, int nu) const;
};

/// Controller candidate with every derived tube constant. Immutable once
/// built; safe to share across threads.
struct TubeController {
  Mat P;       // Lyapunov weight, positive definite
  Mat K;       // feedback gain, a = a_ref + K (x - x_ref)
  Mat P_sqrt;  // cached symmetric square root of P
  double rho = 0.0;        // certified contraction rate of A + B K in ||.||_P
  double d = 0.0;          // ||P^(1/2) B||
  double L_beta = 0.0;     // Lipschitz constant of beta along the tube
  double rho_tilde = 0.0;  // rho + d L_beta, effective tube contraction
  double delta_f = 0.0;    // fixed point of the resting tube recursion
  Vec tightening_x;        // c_x per state-constraint row (unnormalized)
  Vec tightening_u;        // c_u per input-constraint row (unnormalized)
  double r_p = 0.0;        // configuration-projection radius per unit tube size
  double w_bar = 0.0;      // max ||w||_P over the disturbance box vertices
  double delta_bar = 0.0;  // rigid tube size w_bar / (1 - rho)
  bool contractive = false;  // rho_tilde < 1

  double p_norm(const Vec& dx) const { return (P_sqrt * dx).norm(); }
};

struct SynthesisResult {
  Mat E;  // = P^-1, the SDP decision matrix
  Mat Y;  // = K E
  Vec c_x2;       // squared normalized state tightenings
  Vec c_u2;       // squared normalized input tightenings
  double w_bar2 = 0.0;
  Mat P;
  Mat K;
  double objective = 0.0;
  double gap_bound = 0.0;
  bool converged = false;
};

/// Solves the tube-synthesis SDP at a fixed contraction rate:
///   min (1/(2(1-rho))) ((m+n) w_bar^2 + sum c_x,i^2 + sum c_u,j^2)
/// over E > 0, Y, subject to
///   [[rho^2 E, (AE+BY)'], [AE+BY, E]] >= 0            (contraction)
///   [[c_x,i^2, (a_i' E)'], [E a_i, E]] >= 0           (state rows a_i)
///   [[c_u,j^2, (g_j' Y)'], [Y' g_j, E]] >= 0          (input rows g_j)
///   [[w_bar^2, w'], [w, E]] >= 0  for each box vertex (disturbance)
/// with constraint rows divided by their normalizers. After the barrier
/// solve, the scalar variables are reset to their closed forms from the
/// recovered P = E^-1 (feasible and objective-decreasing), so the returned
/// tightenings match the closed-form expressions exactly.
/// Throws SynthesisFailed when no strictly feasible start exists at rho.
SynthesisResult synthesize(const SynthesisConfig& cfg, const DiscreteDynamics& dyn,
                           double rho);

/// Derives every tube constant from (P, K):
///   d = ||P^(1/2) B||, L_beta = a ||K P^(-1/2)|| + b ||V P^(-1/2)||,
///   rho_tilde = rho + d L_beta, delta_f = d c / (1 - rho_tilde),
///   c_x,i = sqrt(a_i' E a_i), c_u,j = sqrt((g_j K) E (g_j K)'),
///   r_p = 1 / sqrt(lambda_min(P_qq - P_qv P_vv^-1 P_vq)),
///   delta_bar = w_bar / (1 - rho), with V = [0 I] the velocity selector.
TubeController derive_constants(const Mat& P, const Mat& K, double rho, double w_bar,
                                const SynthesisConfig& cfg, const DiscreteDynamics& dyn,
                                const ErrorBoundConstants& consts);

/// One step of the tube-size recursion: rho_tilde * delta + d * beta(x_bar, a_bar).
double tube_step(const TubeController& ctrl, double delta, const State& x_bar,
                 const Vec& a_bar, const ErrorBoundConstants& consts);

/// Synthesizes a controller at every rho in the grid and picks the candidate
/// with the smallest maximum normalized steady-state tightening, i.e. the
/// largest tightening constant scaled by delta_bar. Candidates with
/// rho_tilde >= 1 are dropped unless `rigid` is set (the rigid tube does not
/// use the recursion, so non-contractive-in-beta candidates stay eligible).
/// Ties break toward the smallest rho. Throws SynthesisFailed when every
/// candidate is rejected.
TubeController select_candidate(const SynthesisConfig& cfg, const DiscreteDynamics& dyn,
                                const ErrorBoundConstants& consts, bool rigid);

/// Disturbance box W: per-component halfwidth beta_max * ||row_i(B)||, where
/// beta_max bounds ||Delta|| over the whole X x A domain. Every reachable
/// one-step disturbance B Delta lies inside this box.
Vec disturbance_halfwidth(const DiscreteDynamics& dyn, const ErrorBoundConstants& consts,
                          const StateBox& X, const AccelSet& accel);

/// Assembles the full synthesis configuration for box-shaped X, A with the
/// standard normalizers (q_norm for configuration rows, qd_norm for velocity
/// rows, a_norm for acceleration rows).
SynthesisConfig make_synthesis_config(const StateBox& X, const AccelSet& accel,
                                      const DiscreteDynamics& dyn,
                                      const ErrorBoundConstants& consts,
                                      const Vec& rho_grid, double q_norm = 0.1,
                                      double qd_norm = 2.0, double a_norm = 20.0);

}  // namespace rtmpc
