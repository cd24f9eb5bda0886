#include "rtmpc/sdp.hpp"

#include <cmath>

namespace rtmpc::sdp {

Mat Block::eval(const Vec& x) const {
  Mat F = F0;
  for (const auto& t : terms) F += x[t.var] * t.coeff;
  return F;
}

double Problem::barrier_parameter() const {
  double nu = 0.0;
  for (const auto& b : blocks) nu += static_cast<double>(b.F0.rows());
  return nu;
}

bool is_strictly_feasible(const Problem& p, const Vec& x, double min_eig) {
  for (const auto& b : p.blocks) {
    Eigen::SelfAdjointEigenSolver<Mat> es(b.eval(x), Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() <= min_eig) return false;
  }
  return true;
}

namespace {

// Barrier value phi(x) = -sum_b logdet F_b(x); +inf when any block leaves the
// cone. Uses LLT as the definiteness certificate.
double barrier(const Problem& p, const Vec& x) {
  double phi = 0.0;
  for (const auto& b : p.blocks) {
    const Mat F = b.eval(x);
    Eigen::LLT<Mat> llt(F);
    if (llt.info() != Eigen::Success) return INFINITY;
    const Mat& L = llt.matrixLLT();
    double logdet = 0.0;
    for (int i = 0; i < L.rows(); ++i) {
      if (!(L(i, i) > 0.0)) return INFINITY;
      logdet += std::log(L(i, i));
    }
    phi -= 2.0 * logdet;
  }
  return phi;
}

}  // namespace

Result solve(const Problem& p, const Vec& x0, const Settings& settings) {
  if (x0.size() != p.n_vars) throw std::invalid_argument("sdp::solve: x0 dimension mismatch");
  if (!is_strictly_feasible(p, x0))
    throw std::invalid_argument("sdp::solve: x0 is not strictly feasible");

  const double nu = p.barrier_parameter();
  Result res;
  res.x = x0;

  Vec x = x0;
  double t = settings.t0;
  Vec grad(p.n_vars);
  Mat hess(p.n_vars, p.n_vars);

  for (int outer = 0; outer < settings.max_outer; ++outer) {
    // Center at the current t.
    for (int it = 0; it < settings.max_newton; ++it) {
      grad = t * p.c;
      hess.setZero();
      for (const auto& b : p.blocks) {
        const Mat F = b.eval(x);
        Eigen::LLT<Mat> llt(F);
        if (llt.info() != Eigen::Success)
          throw std::runtime_error("sdp::solve: iterate left the cone");
        const Mat S = llt.solve(Mat::Identity(F.rows(), F.cols()));  // F^-1
        // grad_i -= tr(F^-1 F_i); hess_ij += tr(F^-1 F_i F^-1 F_j).
        std::vector<Mat> G(b.terms.size());
        for (size_t k = 0; k < b.terms.size(); ++k) {
          G[k] = S * b.terms[k].coeff;
          grad[b.terms[k].var] -= G[k].trace();
        }
        for (size_t k = 0; k < b.terms.size(); ++k) {
          for (size_t l = k; l < b.terms.size(); ++l) {
            const double h = G[k].cwiseProduct(G[l].transpose()).sum();
            const int i = b.terms[k].var, j = b.terms[l].var;
            hess(i, j) += h;
            if (i != j || k != l) hess(j, i) += h;
          }
        }
      }
      // Duplicate same-variable term pairs above double-count the diagonal
      // contribution when k != l but var_k == var_l; the symmetric add is
      // correct for that case too since both orderings appear exactly once.

      Eigen::LDLT<Mat> ldlt(hess);
      Vec step = -ldlt.solve(grad);
      if (!step.allFinite() || ldlt.info() != Eigen::Success) {
        // Regularize and retry once; the Hessian can lose definiteness to
        // roundoff at very large t.
        const double ridge = 1e-12 * std::max(1.0, hess.diagonal().maxCoeff());
        ldlt.compute(hess + ridge * Mat::Identity(p.n_vars, p.n_vars));
        step = -ldlt.solve(grad);
        if (!step.allFinite()) break;
      }

      const double decrement2 = -grad.dot(step);  // lambda^2 = g' H^-1 g
      if (decrement2 < settings.newton_tol) break;

      // Backtracking line search on the merit t c'x + phi(x); the barrier
      // itself rejects any step that leaves the cone.
      const double merit0 = t * p.c.dot(x) + barrier(p, x);
      double alpha = 1.0;
      bool accepted = false;
      for (int ls = 0; ls < 60; ++ls) {
        const Vec cand = x + alpha * step;
        const double merit = t * p.c.dot(cand) + barrier(p, cand);
        if (merit < merit0 - 1e-4 * alpha * decrement2) {
          x = cand;
          accepted = true;
          break;
        }
        alpha *= 0.5;
      }
      ++res.newton_iters;
      if (!accepted) break;  // stalled at this t
    }

    res.x = x;
    res.objective = p.c.dot(x);
    res.gap_bound = nu / t;
    if (res.gap_bound <= settings.gap_tol * std::max(1.0, std::abs(res.objective))) {
      res.converged = true;
      return res;
    }
    t *= settings.mu;
  }
  return res;  // gap target not reached; x is the last strictly feasible iterate
}

}  // namespace rtmpc::sdp
