#pragma once

#include <vector>

#include "rtmpc/arm.hpp"
#include "rtmpc/common.hpp"
#include "rtmpc/rng.hpp"

namespace rtmpc {

/// Symmetric state box X = {|q_i| <= q_halfwidth_i, |qd_i| <= qd_halfwidth_i}.
struct StateBox {
  Vec q_halfwidth;   // [rad]
  Vec qd_halfwidth;  // [rad/s]

  void validate(int dof) const;
  bool contains(const State& s, double tol = 0.0) const;
  State sample(Rng& rng) const;
};

/// Symmetric torque box U = {|u_i| <= torque_limits_i}.
struct TorqueSet {
  Vec torque_limits;  // [N m]
  void validate(int dof) const;
};

/// Symmetric acceleration box around zero, the convex inner approximation of
/// the torque-feasible accelerations. Vertex-representable by construction.
struct AccelSet {
  Vec box_halfwidth;  // [rad/s^2]
  int shrink_iterations = 0;

  void validate(int dof) const;
  bool contains(const Vec& accel, double tol = 0.0) const;
  Vec sample(Rng& rng) const;
  std::vector<Vec> vertices() const;  // 2^dof corners
};

/// Error decomposition of the linearized plant: the acceleration the true arm
/// produces under the nominal feedback-linearizing torque is a + Delta with
///   Delta = M_tilde a + C_tilde qd + g_tilde,
/// M_tilde = -M^-1 M_err, C_tilde = -M^-1 C_err, g_tilde = -M^-1 g_err,
/// where M is the *true* mass matrix and the _err terms are true-minus-nominal.
struct DeltaTerms {
  Mat M_tilde;
  Mat C_tilde;
  Vec g_tilde;
};

DeltaTerms delta_terms(const ArmModel& model, const State& s);

/// Delta(q, qd, a) via the closed forms above.
Vec eval_delta(const ArmModel& model, const State& s, const Vec& accel);

/// Constants of the norm bound beta(x, a) = a_coef ||a|| + b_coef ||qd|| + c_coef,
/// certified to upper-bound ||Delta|| over the sampled parameter family.
struct ErrorBoundConstants {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  long samples_used = 0;
  double margin = 1.0;

  double beta(double accel_norm, double qd_norm) const {
    return a * accel_norm + b * qd_norm + c;
  }
  double beta(const State& s, const Vec& accel) const {
    return beta(accel.norm(), s.qd.norm());
  }
};

/// Sampling-based estimation of (a, b, c): maxima of the spectral norms of
/// M_tilde, C_tilde and of ||g_tilde|| over uniform draws of (theta, q, qd),
/// with every vertex of the uncertainty box included in the sample set,
/// inflated by `margin`. Pure max-reduction over a pre-generated sample list,
/// so a fixed seed gives identical constants regardless of evaluation order.
ErrorBoundConstants estimate_constants(const ArmParams& nominal,
                                       const UncertaintySet& family,
                                       const StateBox& X, long n_samples,
                                       double margin, uint64_t seed);

struct ValidationReport {
  long n_samples = 0;
  double max_ratio = 0.0;  // max ||Delta|| / beta observed
  long violations = 0;     // samples with ||Delta|| > beta
  bool pass = false;
};

/// Monte-Carlo check of the bound on fresh draws of (theta, x, a): passes iff
/// ||Delta|| <= beta everywhere. Use a seed disjoint from estimation.
ValidationReport certify_beta(const ErrorBoundConstants& consts,
                              const ArmParams& nominal,
                              const UncertaintySet& family, const StateBox& X,
                              const AccelSet& accel, long n_validation,
                              uint64_t seed);

struct ConvexifyParams {
  double initial_halfwidth = 20.0;  // [rad/s^2]
  double shrink_factor = 0.99;
  long n_samples = 20000;       // per shrink round
  long n_validation = 1000000;  // final fresh-sample check
  double floor = 1e-3;          // giving up below this halfwidth
};

/// Shrinks a symmetric acceleration box until the nominal linearizing torque
/// stays inside U for every sampled state in X and every box vertex; the
/// torque is affine in the commanded acceleration, so vertices suffice per
/// state. If any shrinking was needed, one extra shrink is applied after the
/// validation pass: the sampled maximum sits near the torque boundary, and
/// the 1% headroom keeps fresh sample sets (of any size) clear of it.
/// Feasibility is monotone in the box, so the extra shrink cannot invalidate
/// anything the validation established.
/// Throws SynthesisFailed when the box collapses below params.floor.
AccelSet convexify_accel_set(const ArmParams& nominal, const TorqueSet& U,
                             const StateBox& X, const ConvexifyParams& params,
                             uint64_t seed);

}  // namespace rtmpc
