#pragma once

#include <vector>

#include "rtmpc/common.hpp"

namespace rtmpc::sdp {

/// One symmetric coefficient matrix of a linear matrix function.
struct Term {
  int var = 0;  // index into the variable vector
  Mat coeff;    // symmetric, same dimension as the block
};

/// A PSD block constraint F(x) = F0 + sum_k x[terms[k].var] * terms[k].coeff >= 0.
struct Block {
  Mat F0;
  std::vector<Term> terms;

  Mat eval(const Vec& x) const;
};

/// min c'x subject to every block being PSD.
struct Problem {
  int n_vars = 0;
  Vec c;
  std::vector<Block> blocks;

  double barrier_parameter() const;  // sum of block dimensions
};

struct Settings {
  double gap_tol = 1e-8;       // duality-gap bound, relative to max(1, |objective|)
  double mu = 10.0;            // barrier parameter growth per outer stage
  double t0 = 1.0;             // initial barrier weight
  int max_newton = 200;        // Newton steps per centering
  int max_outer = 40;
  double newton_tol = 1e-10;   // squared Newton decrement threshold
};

struct Result {
  Vec x;              // strictly feasible iterate (best found)
  double objective = 0.0;
  double gap_bound = 0.0;  // nu / t at the returned iterate
  bool converged = false;  // gap_bound met; false => stalled early, x still feasible
  int newton_iters = 0;
};

/// True iff every block of F(x) has minimum eigenvalue > min_eig.
bool is_strictly_feasible(const Problem& p, const Vec& x, double min_eig = 0.0);

/// Log-det barrier path following with exact Newton steps, starting from a
/// caller-supplied strictly feasible point. Every iterate stays strictly
/// feasible, so even a stalled result is usable; `converged` reports whether
/// the gap target was certified. Suited to the small dense problems this
/// project generates (tens of variables, blocks up to ~12x12).
Result solve(const Problem& p, const Vec& x0, const Settings& settings = {});

}  // namespace rtmpc::sdp
