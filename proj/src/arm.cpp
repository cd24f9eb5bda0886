#include "rtmpc/arm.hpp"

#include <cmath>

namespace rtmpc {

namespace {

void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

void require_finite(const Vec& v, const char* msg) {
  require(v.allFinite(), msg);
}

// Cumulative joint angles theta_i = q_0 + ... + q_i.
Vec cumulative_angles(const Vec& q) {
  Vec th(q.size());
  double acc = 0.0;
  for (int i = 0; i < q.size(); ++i) {
    acc += q[i];
    th[i] = acc;
  }
  return th;
}

// COM translational Jacobian of link i (2 x n). Column k:
//   sum_{j=k}^{i-1} l_j u'(th_j) + [k <= i] r_i u'(th_i),  u' = (-sin, cos).
Mat com_jacobian(const ArmParams& p, const Vec& th, int link) {
  const int n = p.dof();
  Mat J = Mat::Zero(2, n);
  for (int k = 0; k <= link; ++k) {
    double jx = 0.0, jy = 0.0;
    for (int j = std::max(k, 0); j < link; ++j) {
      jx += -p.link_lengths[j] * std::sin(th[j]);
      jy += p.link_lengths[j] * std::cos(th[j]);
    }
    jx += -p.com_offsets[link] * std::sin(th[link]);
    jy += p.com_offsets[link] * std::cos(th[link]);
    J(0, k) = jx;
    J(1, k) = jy;
  }
  return J;
}

// d/dq_m of com_jacobian(link). Column k:
//   sum_{j=max(k,m)}^{i-1} l_j u''(th_j) + [k,m <= i] r_i u''(th_i),  u'' = -u.
Mat com_jacobian_partial(const ArmParams& p, const Vec& th, int link, int m) {
  const int n = p.dof();
  Mat D = Mat::Zero(2, n);
  if (m > link) return D;
  for (int k = 0; k <= link; ++k) {
    double dx = 0.0, dy = 0.0;
    for (int j = std::max(k, m); j < link; ++j) {
      dx += -p.link_lengths[j] * std::cos(th[j]);
      dy += -p.link_lengths[j] * std::sin(th[j]);
    }
    dx += -p.com_offsets[link] * std::cos(th[link]);
    dy += -p.com_offsets[link] * std::sin(th[link]);
    D(0, k) = dx;
    D(1, k) = dy;
  }
  return D;
}

}  // namespace

void ArmParams::validate() const {
  const int n = dof();
  require(n >= 1, "ArmParams: at least one link required");
  require(link_lengths.size() == n && com_offsets.size() == n &&
              link_inertias.size() == n && damping_diag.size() == n,
          "ArmParams: field length mismatch");
  require_finite(link_masses, "ArmParams: non-finite mass");
  require_finite(link_lengths, "ArmParams: non-finite length");
  require_finite(com_offsets, "ArmParams: non-finite com offset");
  require_finite(link_inertias, "ArmParams: non-finite inertia");
  require_finite(damping_diag, "ArmParams: non-finite damping");
  require(std::isfinite(gravity_accel), "ArmParams: non-finite gravity");
  for (int i = 0; i < n; ++i) {
    require(link_masses[i] > 0.0, "ArmParams: mass must be positive");
    require(link_lengths[i] > 0.0, "ArmParams: length must be positive");
    require(link_inertias[i] > 0.0, "ArmParams: inertia must be positive");
    require(com_offsets[i] > 0.0 && com_offsets[i] <= link_lengths[i],
            "ArmParams: com offset must lie in (0, length]");
    require(damping_diag[i] >= 0.0, "ArmParams: damping must be non-negative");
  }
}

void UncertaintySet::validate(int dof) const {
  require(n_params() == 2 * dof,
          "UncertaintySet: need one bound per link mass and per damping entry");
  require_finite(relative_bounds, "UncertaintySet: non-finite bound");
  require(relative_bounds.minCoeff() >= 0.0, "UncertaintySet: negative bound");
  require(std::isfinite(scale) && scale >= 0.0, "UncertaintySet: bad scale");
}

Vec UncertaintySet::halfwidths(const ArmParams& nominal) const {
  const int n = nominal.dof();
  validate(n);
  Vec h(2 * n);
  for (int i = 0; i < n; ++i) {
    h[i] = relative_bounds[i] * nominal.link_masses[i] * scale;
    h[n + i] = relative_bounds[n + i] * nominal.damping_diag[i] * scale;
  }
  return h;
}

Vec UncertaintySet::sample(const ArmParams& nominal, Rng& rng) const {
  const Vec h = halfwidths(nominal);
  Vec theta(h.size());
  for (int i = 0; i < h.size(); ++i) theta[i] = rng.uniform(-h[i], h[i]);
  return theta;
}

std::vector<Vec> UncertaintySet::vertices(const ArmParams& nominal) const {
  const Vec h = halfwidths(nominal);
  const int d = static_cast<int>(h.size());
  std::vector<Vec> out;
  out.reserve(size_t{1} << d);
  for (uint64_t mask = 0; mask < (uint64_t{1} << d); ++mask) {
    Vec v(d);
    for (int i = 0; i < d; ++i) v[i] = (mask >> i) & 1 ? h[i] : -h[i];
    out.push_back(std::move(v));
  }
  return out;
}

ArmModel::ArmModel(ArmParams nominal, Vec theta)
    : nominal_(std::move(nominal)), theta_(std::move(theta)) {
  nominal_.validate();
  const int n = nominal_.dof();
  require(theta_.size() == 2 * n, "ArmModel: theta must hold one mass and one damping offset per link");
  require_finite(theta_, "ArmModel: non-finite theta");
  perturbed_ = nominal_;
  perturbed_.link_masses += theta_.head(n);
  perturbed_.damping_diag += theta_.tail(n);
  perturbed_.validate();  // rejects offsets that drive a mass non-positive
}

Vec State::to_x() const {
  Vec x(q.size() + qd.size());
  x << q, qd;
  return x;
}

State State::from_x(const Vec& x) {
  const int n = static_cast<int>(x.size()) / 2;
  require(x.size() == 2 * n && n > 0, "State: x must have even positive length");
  return State{x.head(n), x.tail(n)};
}

Mat mass_matrix(const ArmParams& p, const Vec& q) {
  const int n = p.dof();
  const Vec th = cumulative_angles(q);
  Mat M = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    const Mat J = com_jacobian(p, th, i);
    M += p.link_masses[i] * (J.transpose() * J);
    // Angular velocity of link i is sum_{k<=i} qd_k: Jw row is an indicator.
    for (int r = 0; r <= i; ++r)
      for (int c = 0; c <= i; ++c) M(r, c) += p.link_inertias[i];
  }
  return 0.5 * (M + M.transpose());
}

std::vector<Mat> mass_matrix_gradient(const ArmParams& p, const Vec& q) {
  const int n = p.dof();
  const Vec th = cumulative_angles(q);
  std::vector<Mat> dM(n, Mat::Zero(n, n));
  for (int i = 0; i < n; ++i) {
    const Mat J = com_jacobian(p, th, i);
    for (int m = 0; m <= i; ++m) {
      const Mat D = com_jacobian_partial(p, th, i, m);
      const Mat term = p.link_masses[i] * (D.transpose() * J + J.transpose() * D);
      dM[m] += 0.5 * (term + term.transpose());
    }
  }
  return dM;
}

Mat coriolis_matrix(const ArmParams& p, const Vec& q, const Vec& qd) {
  const int n = p.dof();
  const auto dM = mass_matrix_gradient(p, q);
  Mat C = Mat::Zero(n, n);
  // Christoffel symbols of the first kind:
  //   C_ij = sum_k 0.5 (dM_ij/dq_k + dM_ik/dq_j - dM_jk/dq_i) qd_k.
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        C(i, j) += 0.5 * (dM[k](i, j) + dM[j](i, k) - dM[i](j, k)) * qd[k];
  return C;
}

Vec gravity_torque(const ArmParams& p, const Vec& q) {
  const int n = p.dof();
  if (p.gravity_accel == 0.0) return Vec::Zero(n);
  const Vec th = cumulative_angles(q);
  Vec g = Vec::Zero(n);
  // Potential U = g_a * sum_i m_i p_i,y  =>  g = dU/dq = g_a sum_i m_i Jv_i,y'.
  for (int i = 0; i < n; ++i) {
    const Mat J = com_jacobian(p, th, i);
    g += p.gravity_accel * p.link_masses[i] * J.row(1).transpose();
  }
  return g;
}

DynTerms eval_dynamics(const ArmModel& model, bool use_true, const State& s) {
  require_finite(s.q, "eval_dynamics: non-finite q");
  require_finite(s.qd, "eval_dynamics: non-finite qd");
  require(s.q.size() == model.dof() && s.qd.size() == model.dof(),
          "eval_dynamics: state dimension mismatch");
  const ArmParams& p = use_true ? model.perturbed() : model.nominal();
  DynTerms t;
  t.M = mass_matrix(p, s.q);
  t.C = coriolis_matrix(p, s.q, s.qd);
  t.C += p.damping_diag.asDiagonal();
  t.g = gravity_torque(p, s.q);
  return t;
}

Vec feedback_linearize(const ArmModel& model, const State& s, const Vec& accel) {
  require(accel.size() == model.dof(), "feedback_linearize: accel dimension mismatch");
  require_finite(accel, "feedback_linearize: non-finite accel");
  const DynTerms t = eval_dynamics(model, /*use_true=*/false, s);
  return t.M * accel + t.C * s.qd + t.g;
}

Vec true_acceleration(const ArmModel& model, const State& s, const Vec& accel) {
  const Vec u = feedback_linearize(model, s, accel);
  const DynTerms t = eval_dynamics(model, /*use_true=*/true, s);
  return t.M.ldlt().solve(u - t.C * s.qd - t.g);
}

DiscreteDynamics DiscreteDynamics::make(int dof, double dt, Variant variant) {
  require(dof >= 1 && dt > 0.0 && std::isfinite(dt), "DiscreteDynamics: bad dof/dt");
  DiscreteDynamics d;
  d.dt = dt;
  const Mat I = Mat::Identity(dof, dof);
  d.A = Mat::Identity(2 * dof, 2 * dof);
  d.A.topRightCorner(dof, dof) = dt * I;
  d.B = Mat::Zero(2 * dof, dof);
  if (variant == Variant::zero_order_hold) d.B.topRows(dof) = 0.5 * dt * dt * I;
  d.B.bottomRows(dof) = dt * I;
  return d;
}

State step_true(const ArmModel& model, const DiscreteDynamics& dyn,
                const State& s, const Vec& accel) {
  const Vec qdd = true_acceleration(model, s, accel);  // = accel + Delta
  const Vec x_next = dyn.A * s.to_x() + dyn.B * qdd;
  return State::from_x(x_next);
}

}  // namespace rtmpc
