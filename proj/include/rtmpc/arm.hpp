#pragma once

#include <vector>

#include "rtmpc/common.hpp"
#include "rtmpc/rng.hpp"

namespace rtmpc {

/// Physical parameters of a planar n-link serial arm. Link i is a rigid body
/// of mass link_masses[i] whose center of mass sits com_offsets[i] along the
/// link; link_inertias[i] is the rotational inertia about that center.
/// Gravity acts along -y in the arm plane (0 for a horizontal table arm).
struct ArmParams {
  Vec link_masses;    // [kg]
  Vec link_lengths;   // [m]
  Vec com_offsets;    // [m], distance of COM from the parent joint
  Vec link_inertias;  // [kg m^2], about each link COM
  Vec damping_diag;   // [N m s / rad], viscous joint damping
  double gravity_accel = 0.0;  // [m/s^2]

  int dof() const { return static_cast<int>(link_masses.size()); }
  void validate() const;  // throws std::invalid_argument
};

/// Box of parameter offsets the true arm may differ from the nominal one by:
/// |theta_i| <= relative_bounds[i] * nominal_value_i * scale. The first dof()
/// entries act on link masses, the next dof() on damping. Gravity is assumed
/// perfectly identified, so it carries no uncertain parameter at all.
struct UncertaintySet {
  Vec relative_bounds;  // length 2*dof: mass fractions, then damping fractions
  double scale = 1.0;

  int n_params() const { return static_cast<int>(relative_bounds.size()); }
  void validate(int dof) const;

  /// Absolute halfwidths [dm_1..dm_n, dd_1..dd_n] for the given nominal arm.
  Vec halfwidths(const ArmParams& nominal) const;
  /// Uniform draw from the box.
  Vec sample(const ArmParams& nominal, Rng& rng) const;
  /// All 2^(2 dof) corners of the box (dof <= 3 here, so at most 64).
  std::vector<Vec> vertices(const ArmParams& nominal) const;
};

/// A nominal arm together with one concrete draw of the parameter offsets.
/// theta = [mass offsets; damping offsets]; the perturbed parameters are
/// cached so nominal and true dynamics share one code path.
class ArmModel {
 public:
  ArmModel(ArmParams nominal, Vec theta);

  const ArmParams& nominal() const { return nominal_; }
  const ArmParams& perturbed() const { return perturbed_; }
  const Vec& theta() const { return theta_; }
  int dof() const { return nominal_.dof(); }

 private:
  ArmParams nominal_;
  Vec theta_;
  ArmParams perturbed_;
};

struct State {
  Vec q;   // [rad]
  Vec qd;  // [rad/s]

  Vec to_x() const;
  static State from_x(const Vec& x);
};

/// Mass matrix M(q), assembled from COM Jacobians:
/// M = sum_i m_i Jv_i' Jv_i + I_i Jw_i' Jw_i.
Mat mass_matrix(const ArmParams& p, const Vec& q);

/// Partial derivatives dM/dq_k, analytic (no finite differences).
std::vector<Mat> mass_matrix_gradient(const ArmParams& p, const Vec& q);

/// Coriolis/centrifugal matrix from Christoffel symbols of mass_matrix.
/// Excludes damping; guarantees dM/dt - 2C skew-symmetric.
Mat coriolis_matrix(const ArmParams& p, const Vec& q, const Vec& qd);

/// Gravity torque vector g(q) = d/dq of the potential energy.
Vec gravity_torque(const ArmParams& p, const Vec& q);

struct DynTerms {
  Mat M;  // mass matrix
  Mat C;  // Coriolis + diag(damping)
  Vec g;  // gravity torque
};

/// Full dynamics terms of u = M qdd + C qd + g, with use_true selecting the
/// perturbed (nominal + theta) parameters instead of the nominal ones.
DynTerms eval_dynamics(const ArmModel& model, bool use_true, const State& s);

/// Feedback-linearizing torque u = M0(q) a + C0(q,qd) qd + g0(q), nominal
/// parameters only. Applied to the true arm this yields qdd = a + Delta(x,a).
Vec feedback_linearize(const ArmModel& model, const State& s, const Vec& accel);

/// Acceleration the true arm actually produces under the feedback-linearizing
/// torque for commanded accel a; equals a + Delta(x, a).
Vec true_acceleration(const ArmModel& model, const State& s, const Vec& accel);

struct DiscreteDynamics {
  Mat A;  // 2n x 2n
  Mat B;  // 2n x n
  double dt = 0.0;

  enum class Variant { zero_order_hold, forward_euler };

  /// A = [[I, dt I],[0, I]]; B = [[dt^2/2 I],[dt I]] (zero_order_hold, exact
  /// for the linearized double integrator) or [[0],[dt I]] (forward_euler).
  static DiscreteDynamics make(int dof, double dt,
                               Variant variant = Variant::zero_order_hold);
};

/// One step of the uncertain closed-loop plant: x+ = A x + B (a + Delta),
/// with Delta evaluated exactly at (q, qd, a).
State step_true(const ArmModel& model, const DiscreteDynamics& dyn,
                const State& s, const Vec& accel);

}  // namespace rtmpc
