#include "rtmpc/error_bounds.hpp"

#include <cmath>

namespace rtmpc {

namespace {

void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

void StateBox::validate(int dof) const {
  require(q_halfwidth.size() == dof && qd_halfwidth.size() == dof,
          "StateBox: dimension mismatch");
  require(q_halfwidth.allFinite() && qd_halfwidth.allFinite(), "StateBox: non-finite bound");
  require(q_halfwidth.minCoeff() > 0.0 && qd_halfwidth.minCoeff() > 0.0,
          "StateBox: halfwidths must be positive");
}

bool StateBox::contains(const State& s, double tol) const {
  return (s.q.cwiseAbs().array() <= q_halfwidth.array() + tol).all() &&
         (s.qd.cwiseAbs().array() <= qd_halfwidth.array() + tol).all();
}

State StateBox::sample(Rng& rng) const {
  const int n = static_cast<int>(q_halfwidth.size());
  State s{Vec(n), Vec(n)};
  for (int i = 0; i < n; ++i) s.q[i] = rng.uniform(-q_halfwidth[i], q_halfwidth[i]);
  for (int i = 0; i < n; ++i) s.qd[i] = rng.uniform(-qd_halfwidth[i], qd_halfwidth[i]);
  return s;
}

void TorqueSet::validate(int dof) const {
  require(torque_limits.size() == dof, "TorqueSet: dimension mismatch");
  require(torque_limits.allFinite(), "TorqueSet: non-finite limit");
  require(torque_limits.minCoeff() > 0.0, "TorqueSet: limits must be strictly positive");
}

void AccelSet::validate(int dof) const {
  require(box_halfwidth.size() == dof, "AccelSet: dimension mismatch");
  require(box_halfwidth.allFinite(), "AccelSet: non-finite halfwidth");
  require(box_halfwidth.minCoeff() > 0.0, "AccelSet: halfwidths must be positive");
}

bool AccelSet::contains(const Vec& accel, double tol) const {
  return (accel.cwiseAbs().array() <= box_halfwidth.array() + tol).all();
}

Vec AccelSet::sample(Rng& rng) const {
  Vec a(box_halfwidth.size());
  for (int i = 0; i < a.size(); ++i) a[i] = rng.uniform(-box_halfwidth[i], box_halfwidth[i]);
  return a;
}

std::vector<Vec> AccelSet::vertices() const {
  const int n = static_cast<int>(box_halfwidth.size());
  std::vector<Vec> out;
  out.reserve(size_t{1} << n);
  for (uint64_t mask = 0; mask < (uint64_t{1} << n); ++mask) {
    Vec v(n);
    for (int i = 0; i < n; ++i) v[i] = (mask >> i) & 1 ? box_halfwidth[i] : -box_halfwidth[i];
    out.push_back(std::move(v));
  }
  return out;
}

DeltaTerms delta_terms(const ArmModel& model, const State& s) {
  const DynTerms nom = eval_dynamics(model, /*use_true=*/false, s);
  const DynTerms tru = eval_dynamics(model, /*use_true=*/true, s);
  const auto solver = tru.M.ldlt();
  DeltaTerms d;
  d.M_tilde = -solver.solve(tru.M - nom.M);
  d.C_tilde = -solver.solve(tru.C - nom.C);
  d.g_tilde = -solver.solve(tru.g - nom.g);
  return d;
}

Vec eval_delta(const ArmModel& model, const State& s, const Vec& accel) {
  require(accel.size() == model.dof(), "eval_delta: accel dimension mismatch");
  require(accel.allFinite(), "eval_delta: non-finite accel");
  const DeltaTerms d = delta_terms(model, s);
  return d.M_tilde * accel + d.C_tilde * s.qd + d.g_tilde;
}

ErrorBoundConstants estimate_constants(const ArmParams& nominal,
                                       const UncertaintySet& family,
                                       const StateBox& X, long n_samples,
                                       double margin, uint64_t seed) {
  nominal.validate();
  family.validate(nominal.dof());
  X.validate(nominal.dof());
  require(n_samples >= 10000, "estimate_constants: need at least 1e4 samples");
  require(margin >= 1.0, "estimate_constants: margin must be >= 1");

  ErrorBoundConstants out;
  out.margin = margin;
  if (family.scale == 0.0 || family.relative_bounds.maxCoeff() == 0.0) {
    out.samples_used = 0;
    return out;  // no uncertainty: Delta vanishes identically
  }

  // Pre-generate the full (theta, state) list so the result is independent of
  // evaluation order. Every vertex of the uncertainty box is visited with a
  // spread of states; the remainder draws theta uniformly.
  Rng rng(seed);
  std::vector<std::pair<Vec, State>> samples;
  samples.reserve(static_cast<size_t>(n_samples));
  const auto verts = family.vertices(nominal);
  const long per_vertex =
      std::max<long>(1, n_samples / (4 * static_cast<long>(verts.size())));
  for (const auto& v : verts)
    for (long k = 0; k < per_vertex; ++k) samples.emplace_back(v, X.sample(rng));
  while (static_cast<long>(samples.size()) < n_samples)
    samples.emplace_back(family.sample(nominal, rng), X.sample(rng));

  double max_a = 0.0, max_b = 0.0, max_c = 0.0;
  for (const auto& [theta, s] : samples) {
    const ArmModel model(nominal, theta);
    const DeltaTerms d = delta_terms(model, s);
    max_a = std::max(max_a, spectral_norm(d.M_tilde));
    max_b = std::max(max_b, spectral_norm(d.C_tilde));
    max_c = std::max(max_c, d.g_tilde.norm());
  }
  out.a = margin * max_a;
  out.b = margin * max_b;
  out.c = margin * max_c;
  out.samples_used = static_cast<long>(samples.size());
  return out;
}

ValidationReport certify_beta(const ErrorBoundConstants& consts,
                              const ArmParams& nominal,
                              const UncertaintySet& family, const StateBox& X,
                              const AccelSet& accel, long n_validation,
                              uint64_t seed) {
  nominal.validate();
  family.validate(nominal.dof());
  X.validate(nominal.dof());
  accel.validate(nominal.dof());

  Rng rng(seed);
  ValidationReport rep;
  rep.n_samples = n_validation;
  for (long k = 0; k < n_validation; ++k) {
    const Vec theta = family.sample(nominal, rng);
    const State s = X.sample(rng);
    const Vec a = accel.sample(rng);
    const ArmModel model(nominal, theta);
    const double err = eval_delta(model, s, a).norm();
    const double bound = consts.beta(s, a);
    const double ratio = bound > 0.0 ? err / bound : (err > 0.0 ? INFINITY : 0.0);
    rep.max_ratio = std::max(rep.max_ratio, ratio);
    if (err > bound) ++rep.violations;
  }
  rep.pass = rep.violations == 0;
  return rep;
}

AccelSet convexify_accel_set(const ArmParams& nominal, const TorqueSet& U,
                             const StateBox& X, const ConvexifyParams& params,
                             uint64_t seed) {
  nominal.validate();
  U.validate(nominal.dof());
  X.validate(nominal.dof());
  require(params.shrink_factor > 0.0 && params.shrink_factor < 1.0,
          "convexify_accel_set: shrink factor must lie in (0,1)");
  require(params.initial_halfwidth > 0.0, "convexify_accel_set: bad initial halfwidth");

  const ArmModel model(nominal, Vec::Zero(2 * nominal.dof()));
  AccelSet box;
  box.box_halfwidth = Vec::Constant(nominal.dof(), params.initial_halfwidth);
  box.shrink_iterations = 0;

  Rng rng(seed);
  // The linearizing torque is affine in the commanded acceleration, so for a
  // fixed state the max torque over the box is attained at a vertex.
  const auto round_clean = [&](long n) {
    const auto verts = box.vertices();
    for (long k = 0; k < n; ++k) {
      const State s = X.sample(rng);
      // Evaluate the dynamics terms once per state; the torque for each
      // vertex is then a single mat-vec.
      const DynTerms t = eval_dynamics(model, /*use_true=*/false, s);
      const Vec bias = t.C * s.qd + t.g;
      for (const auto& v : verts) {
        const Vec u = t.M * v + bias;
        if ((u.cwiseAbs().array() > U.torque_limits.array()).any()) return false;
      }
    }
    return true;
  };

  for (;;) {
    if (box.box_halfwidth.maxCoeff() < params.floor)
      throw SynthesisFailed("convexify_accel_set: torque limits infeasible");
    if (round_clean(params.n_samples)) {
      // Candidate box passed a sampling round; confirm on a fresh, larger set.
      if (round_clean(params.n_validation)) break;
    }
    box.box_halfwidth *= params.shrink_factor;
    ++box.shrink_iterations;
  }
  if (box.shrink_iterations > 0) {
    // The box boundary sits at the sampled torque maximum; back off once more
    // so independent sample sets cannot land on the sliver beyond it.
    box.box_halfwidth *= params.shrink_factor;
    ++box.shrink_iterations;
  }
  return box;
}

}  // namespace rtmpc
