#pragma once

#include <vector>

#include "rtmpc/common.hpp"

namespace rtmpc::socp {

/// Cone layout of the inequality rows: the first `nonneg` rows are
/// componentwise nonnegative, followed by one second-order cone per entry of
/// `soc` (each cone (t, u) with t >= ||u|| occupying soc[k] consecutive rows).
struct Cones {
  int nonneg = 0;
  std::vector<int> soc;

  int total_rows() const;
  int degree() const { return nonneg + static_cast<int>(soc.size()); }
  void validate(int m) const;
};

/// Conic program in standard form:
///   minimize    c'x
///   subject to  A x = b,  G x + s = h,  s in K.
/// A may have zero rows (no equalities); G must have at least one row.
struct Problem {
  Vec c;
  SpMat A;
  Vec b;
  SpMat G;
  Vec h;
  Cones cones;

  int n_vars() const { return static_cast<int>(c.size()); }
  int n_eq() const { return static_cast<int>(A.rows()); }
  int n_cone() const { return static_cast<int>(G.rows()); }
  void validate() const;
};

enum class Status {
  optimal,
  primal_infeasible,  // y, z hold a Farkas certificate: A'y+G'z=0, b'y+h'z=-1
  dual_infeasible,    // x holds an unboundedness certificate: c'x=-1
  max_iters,
  numerical_error,
};

struct Settings {
  int max_iters = 100;
  double eps_feas = 1e-8;     // relative primal/dual residual target
  double eps_gap = 1e-8;      // relative duality-gap target
  double eps_relaxed = 1e-6;  // fallback acceptance when the target stalls
  double reg = 1e-9;          // static quasidefinite regularization
  int refine_rounds = 3;      // iterative-refinement steps per KKT solve
  double step_fraction = 0.99;
  bool equilibrate = true;  // Ruiz-scale [A; G] before solving (SOC blocks
                            // share one factor); solution is mapped back
};

struct Solution {
  Status status = Status::numerical_error;
  Vec x, y, z, s;
  double objective = 0.0;  // c'x at the returned primal point
  double pres = INFINITY;  // achieved relative primal residual
  double dres = INFINITY;  // achieved relative dual residual
  double relgap = INFINITY;
  int iters = 0;
  bool inaccurate = false;  // met only eps_relaxed, not the strict target
};

/// Smallest cone margin of a stacked vector: min over nonnegative entries and
/// per-cone (t - ||u||). Nonnegative iff s is in the cone; used by audits.
double min_cone_margin(const Cones& cones, const Vec& s);

/// Homogeneous self-dual interior-point method with Nesterov-Todd scaling and
/// a Mehrotra predictor-corrector step. The KKT system is factored once per
/// iteration with a sparse LDL' under static regularization and solved with
/// iterative refinement; the tau variable is eliminated with a second
/// right-hand side. Detects primal and dual infeasibility via Farkas
/// certificates. Deterministic: no randomization anywhere.
Solution solve(const Problem& p, const Settings& settings = {});

}  // namespace rtmpc::socp
