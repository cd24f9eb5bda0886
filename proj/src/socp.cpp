#include "rtmpc/socp.hpp"

#include <algorithm>
#include <cmath>

namespace rtmpc::socp {

namespace {

void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

struct ConeView {
  int offset = 0;
  int dim = 0;
  bool second_order = false;
};

std::vector<ConeView> make_views(const Cones& cones) {
  std::vector<ConeView> v;
  for (int i = 0; i < cones.nonneg; ++i) v.push_back({i, 1, false});
  int off = cones.nonneg;
  for (int q : cones.soc) {
    v.push_back({off, q, true});
    off += q;
  }
  return v;
}

Vec cone_identity(const std::vector<ConeView>& views, int m) {
  Vec e = Vec::Zero(m);
  for (const auto& cv : views) e[cv.offset] = 1.0;
  return e;
}

double margin_of(const ConeView& cv, const Vec& u) {
  if (!cv.second_order) return u[cv.offset];
  return u[cv.offset] - u.segment(cv.offset + 1, cv.dim - 1).norm();
}

/// Largest alpha >= 0 with u + alpha du in the cone (u strictly inside).
double max_step_cone(const std::vector<ConeView>& views, const Vec& u,
                     const Vec& du) {
  double alpha = INFINITY;
  for (const auto& cv : views) {
    if (!cv.second_order) {
      const double d = du[cv.offset];
      if (d < 0.0) alpha = std::min(alpha, -u[cv.offset] / d);
      continue;
    }
    const double u0 = u[cv.offset], d0 = du[cv.offset];
    const auto u1 = u.segment(cv.offset + 1, cv.dim - 1);
    const auto d1 = du.segment(cv.offset + 1, cv.dim - 1);
    // J(u + alpha du) = a alpha^2 + b alpha + c with c = J(u) > 0; the first
    // positive root is where the path exits the cone.
    const double a = d0 * d0 - d1.squaredNorm();
    const double b = 2.0 * (u0 * d0 - u1.dot(d1));
    const double c = u0 * u0 - u1.squaredNorm();
    double root = INFINITY;
    if (a == 0.0) {
      if (b < 0.0) root = -c / b;
    } else {
      const double disc = b * b - 4.0 * a * c;
      if (disc >= 0.0) {
        const double sq = std::sqrt(disc);
        const double q = -0.5 * (b + (b >= 0.0 ? sq : -sq));
        for (double r : {q / a, (q != 0.0 ? c / q : INFINITY)})
          if (r > 0.0) root = std::min(root, r);
      }
    }
    if (d0 < 0.0) root = std::min(root, -u0 / d0);
    alpha = std::min(alpha, root);
  }
  return alpha;
}

/// Jordan product u o v per cone (elementwise on the orthant part).
Vec jordan_mul(const std::vector<ConeView>& views, const Vec& u, const Vec& v) {
  Vec out(u.size());
  for (const auto& cv : views) {
    if (!cv.second_order) {
      out[cv.offset] = u[cv.offset] * v[cv.offset];
      continue;
    }
    const auto u1 = u.segment(cv.offset + 1, cv.dim - 1);
    const auto v1 = v.segment(cv.offset + 1, cv.dim - 1);
    out[cv.offset] = u[cv.offset] * v[cv.offset] + u1.dot(v1);
    out.segment(cv.offset + 1, cv.dim - 1) =
        u[cv.offset] * v1 + v[cv.offset] * u1;
  }
  return out;
}

/// Jordan division: the u with lambda o u = v (arrow-matrix solve per cone).
Vec jordan_div(const std::vector<ConeView>& views, const Vec& lam, const Vec& v) {
  Vec out(v.size());
  for (const auto& cv : views) {
    if (!cv.second_order) {
      out[cv.offset] = v[cv.offset] / lam[cv.offset];
      continue;
    }
    const double l0 = lam[cv.offset];
    const auto l1 = lam.segment(cv.offset + 1, cv.dim - 1);
    const double v0 = v[cv.offset];
    const auto v1 = v.segment(cv.offset + 1, cv.dim - 1);
    const double det = l0 * l0 - l1.squaredNorm();
    out[cv.offset] = (l0 * v0 - l1.dot(v1)) / det;
    out.segment(cv.offset + 1, cv.dim - 1) =
        (-v0 * l1 + (det / l0) * v1 + (l1.dot(v1) / l0) * l1) / det;
  }
  return out;
}

/// Nesterov-Todd scaling point: symmetric W with W z = W^{-1} s = lambda.
struct Scaling {
  std::vector<ConeView> views;
  Vec w_orth;  // sqrt(s_i / z_i) on the orthant rows
  struct SocScale {
    double eta = 1.0;
    Vec wbar;  // J(wbar) = 1
  };
  std::vector<SocScale> socs;
  Vec lambda;

  // W v (symmetric hyperbolic Householder per second-order cone).
  Vec apply(const Vec& v) const { return apply_impl(v, false); }
  // W^{-1} v.
  Vec apply_inv(const Vec& v) const { return apply_impl(v, true); }

  Vec apply_impl(const Vec& v, bool inverse) const {
    Vec out(v.size());
    int soc_idx = 0;
    for (const auto& cv : views) {
      if (!cv.second_order) {
        const double w = w_orth[cv.offset];
        out[cv.offset] = inverse ? v[cv.offset] / w : v[cv.offset] * w;
        continue;
      }
      const auto& sc = socs[soc_idx++];
      const double sgn = inverse ? -1.0 : 1.0;  // H(w)^-1 = H(reflected w)
      const double scale = inverse ? 1.0 / sc.eta : sc.eta;
      const double w0 = sc.wbar[0];
      const auto w1 = sc.wbar.tail(cv.dim - 1);
      const double v0 = v[cv.offset];
      const auto v1 = v.segment(cv.offset + 1, cv.dim - 1);
      // H((w0, sgn*w1)) v: the rank-one tail term is sign-invariant because
      // the reflection enters both factors of the outer product.
      const double w1v1 = w1.dot(v1);
      out[cv.offset] = scale * (w0 * v0 + sgn * w1v1);
      out.segment(cv.offset + 1, cv.dim - 1) =
          scale * (v1 + (sgn * v0 + w1v1 / (1.0 + w0)) * w1);
    }
    return out;
  }
};

bool compute_nt(const std::vector<ConeView>& views, const Vec& s, const Vec& z,
                Scaling& W) {
  W.views = views;
  W.w_orth = Vec::Zero(s.size());
  W.socs.clear();
  for (const auto& cv : views) {
    if (!cv.second_order) {
      const double si = s[cv.offset], zi = z[cv.offset];
      if (si <= 0.0 || zi <= 0.0) return false;
      W.w_orth[cv.offset] = std::sqrt(si / zi);
      continue;
    }
    const Vec sv = s.segment(cv.offset, cv.dim);
    const Vec zv = z.segment(cv.offset, cv.dim);
    const double js = sv[0] * sv[0] - sv.tail(cv.dim - 1).squaredNorm();
    const double jz = zv[0] * zv[0] - zv.tail(cv.dim - 1).squaredNorm();
    if (js <= 0.0 || jz <= 0.0 || sv[0] <= 0.0 || zv[0] <= 0.0) return false;
    const double a = std::sqrt(js), b = std::sqrt(jz);
    const Vec st = sv / a, zt = zv / b;
    const double gamma = std::sqrt(0.5 * (1.0 + st.dot(zt)));
    Scaling::SocScale sc;
    sc.eta = std::sqrt(a / b);
    sc.wbar = Vec(cv.dim);
    sc.wbar[0] = (st[0] + zt[0]) / (2.0 * gamma);
    sc.wbar.tail(cv.dim - 1) =
        (st.tail(cv.dim - 1) - zt.tail(cv.dim - 1)) / (2.0 * gamma);
    W.socs.push_back(std::move(sc));
  }
  W.lambda = W.apply(z);
  return W.lambda.allFinite();
}

Scaling identity_scaling(const std::vector<ConeView>& views, int m) {
  Scaling W;
  W.views = views;
  W.w_orth = Vec::Ones(m);
  for (const auto& cv : views) {
    if (!cv.second_order) continue;
    Scaling::SocScale sc;
    sc.eta = 1.0;
    sc.wbar = Vec::Zero(cv.dim);
    sc.wbar[0] = 1.0;
    W.socs.push_back(std::move(sc));
  }
  W.lambda = Vec::Zero(m);
  return W;
}

/// Sparse symmetric KKT system
///   [ 0   A'   G'  ]
///   [ A   0    0   ]
///   [ G   0  -W'W  ]
/// factored with static +/- reg regularization; solves refined against the
/// unregularized matrix.
struct KktSolver {
  int n = 0, p = 0, m = 0;
  SpMat K_plain, K_reg;
  Eigen::SimplicialLDLT<SpMat> ldlt;
  bool analyzed = false;
  std::vector<Eigen::Triplet<double>> trips;

  bool build(const Problem& prob, const Scaling& W, double reg) {
    n = prob.n_vars();
    p = prob.n_eq();
    m = prob.n_cone();
    const int N = n + p + m;
    trips.clear();
    for (int k = 0; k < prob.A.outerSize(); ++k)
      for (SpMat::InnerIterator it(prob.A, k); it; ++it) {
        trips.emplace_back(n + it.row(), it.col(), it.value());
        trips.emplace_back(it.col(), n + it.row(), it.value());
      }
    for (int k = 0; k < prob.G.outerSize(); ++k)
      for (SpMat::InnerIterator it(prob.G, k); it; ++it) {
        trips.emplace_back(n + p + it.row(), it.col(), it.value());
        trips.emplace_back(it.col(), n + p + it.row(), it.value());
      }
    // -W'W blocks: diagonal on orthant rows, dense within each cone. The
    // pattern must not depend on numeric values, so zeros are stored too.
    int soc_idx = 0;
    for (const auto& cv : W.views) {
      const int base = n + p + cv.offset;
      if (!cv.second_order) {
        const double w = W.w_orth[cv.offset];
        trips.emplace_back(base, base, -w * w);
        continue;
      }
      const auto& sc = W.socs[soc_idx++];
      // W^2 = eta^2 (2 wbar wbar' - R) with R = diag(1, -I).
      const double e2 = sc.eta * sc.eta;
      for (int r = 0; r < cv.dim; ++r)
        for (int col = 0; col < cv.dim; ++col) {
          double val = 2.0 * sc.wbar[r] * sc.wbar[col];
          if (r == col) val -= (r == 0 ? 1.0 : -1.0);
          trips.emplace_back(base + r, base + col, -e2 * val);
        }
    }
    K_plain.resize(N, N);
    K_plain.setFromTriplets(trips.begin(), trips.end());
    for (int i = 0; i < n; ++i) trips.emplace_back(i, i, reg);
    for (int i = n; i < N; ++i) trips.emplace_back(i, i, -reg);
    K_reg.resize(N, N);
    K_reg.setFromTriplets(trips.begin(), trips.end());
    if (!analyzed) {
      ldlt.analyzePattern(K_reg);
      analyzed = true;
    }
    ldlt.factorize(K_reg);
    return ldlt.info() == Eigen::Success;
  }

  Vec solve(const Vec& rhs, int refine_rounds) const {
    Vec u = ldlt.solve(rhs);
    for (int k = 0; k < refine_rounds; ++k) {
      const Vec res = rhs - K_plain * u;
      if (res.lpNorm<Eigen::Infinity>() <=
          1e-14 * (1.0 + rhs.lpNorm<Eigen::Infinity>()))
        break;
      u += ldlt.solve(res);
    }
    return u;
  }
};

struct Iterate {
  Vec x, y, z, s;
  double tau = 1.0, kappa = 1.0;
};

struct Metrics {
  double pres = INFINITY, dres = INFINITY, relgap = INFINITY, gap = INFINITY;
  double pcost = 0.0;
  double score() const { return std::max({pres, dres, relgap}); }
};

}  // namespace

int Cones::total_rows() const {
  int t = nonneg;
  for (int q : soc) t += q;
  return t;
}

void Cones::validate(int m) const {
  require(nonneg >= 0, "Cones: negative orthant size");
  for (int q : soc) require(q >= 1, "Cones: cone dimension must be >= 1");
  require(total_rows() == m, "Cones: sizes do not cover the inequality rows");
  require(m >= 1, "Cones: at least one conic row required");
}

void Problem::validate() const {
  const int n = n_vars();
  require(n >= 1, "Problem: no variables");
  require(c.allFinite(), "Problem: non-finite objective");
  require(A.cols() == n || n_eq() == 0, "Problem: A has wrong column count");
  require(b.size() == n_eq(), "Problem: b size mismatch");
  require(G.cols() == n, "Problem: G has wrong column count");
  require(h.size() == n_cone(), "Problem: h size mismatch");
  require(b.allFinite() && h.allFinite(), "Problem: non-finite constraint data");
  cones.validate(n_cone());
}

double min_cone_margin(const Cones& cones, const Vec& s) {
  require(s.size() == cones.total_rows(), "min_cone_margin: size mismatch");
  double m = INFINITY;
  for (const auto& cv : make_views(cones)) m = std::min(m, margin_of(cv, s));
  return m;
}

namespace {

/// Diagonal scalings produced by Ruiz equilibration of the stacked [A; G]
/// matrix. Rows belonging to one second-order cone share a single factor so
/// the scaled slack stays in the same cone.
struct Equilibration {
  Vec col;       // per-variable scaling D
  Vec row_eq;    // per-equality-row scaling E
  Vec row_cone;  // per-cone-row scaling F (uniform inside each SOC block)
};

Equilibration compute_equilibration(const Problem& prob,
                                    const std::vector<ConeView>& views) {
  const int n = prob.n_vars(), p = prob.n_eq(), m = prob.n_cone();
  Equilibration eq;
  eq.col = Vec::Ones(n);
  eq.row_eq = Vec::Ones(p);
  eq.row_cone = Vec::Ones(m);
  for (int pass = 0; pass < 10; ++pass) {
    Vec rn_eq = Vec::Zero(p), rn_cone = Vec::Zero(m), cn = Vec::Zero(n);
    for (int k = 0; k < prob.A.outerSize(); ++k) {
      for (SpMat::InnerIterator it(prob.A, k); it; ++it) {
        const double v =
            std::abs(eq.row_eq[it.row()] * it.value() * eq.col[it.col()]);
        rn_eq[it.row()] = std::max(rn_eq[it.row()], v);
        cn[it.col()] = std::max(cn[it.col()], v);
      }
    }
    for (int k = 0; k < prob.G.outerSize(); ++k) {
      for (SpMat::InnerIterator it(prob.G, k); it; ++it) {
        const double v =
            std::abs(eq.row_cone[it.row()] * it.value() * eq.col[it.col()]);
        rn_cone[it.row()] = std::max(rn_cone[it.row()], v);
        cn[it.col()] = std::max(cn[it.col()], v);
      }
    }
    for (const auto& cv : views) {
      if (!cv.second_order) continue;
      const double block =
          rn_cone.segment(cv.offset, cv.dim).maxCoeff();
      rn_cone.segment(cv.offset, cv.dim).setConstant(block);
    }
    for (int i = 0; i < p; ++i) {
      if (rn_eq[i] > 0.0) eq.row_eq[i] /= std::sqrt(rn_eq[i]);
    }
    for (int i = 0; i < m; ++i) {
      if (rn_cone[i] > 0.0) eq.row_cone[i] /= std::sqrt(rn_cone[i]);
    }
    for (int j = 0; j < n; ++j) {
      if (cn[j] > 0.0) eq.col[j] /= std::sqrt(cn[j]);
    }
  }
  return eq;
}

Problem apply_equilibration(const Problem& prob, const Equilibration& eq) {
  Problem s = prob;
  s.c = eq.col.cwiseProduct(prob.c);
  s.b = eq.row_eq.cwiseProduct(prob.b);
  s.h = eq.row_cone.cwiseProduct(prob.h);
  s.A = eq.row_eq.asDiagonal() * prob.A * eq.col.asDiagonal();
  s.G = eq.row_cone.asDiagonal() * prob.G * eq.col.asDiagonal();
  return s;
}

}  // namespace

static Solution solve_core(const Problem& prob, const Settings& st) {
  prob.validate();
  const int n = prob.n_vars(), p = prob.n_eq(), m = prob.n_cone();
  const auto views = make_views(prob.cones);
  const Vec e = cone_identity(views, m);
  const double nu = prob.cones.degree();
  const double norm_b = 1.0 + prob.b.norm();
  const double norm_h = 1.0 + prob.h.norm();
  const double norm_c = 1.0 + prob.c.norm();

  Solution sol;
  sol.status = Status::numerical_error;

  const auto pack = [&](const Vec& vx, const Vec& vy, const Vec& vz) {
    Vec r(n + p + m);
    r.head(n) = vx;
    r.segment(n, p) = vy;
    r.tail(m) = vz;
    return r;
  };

  KktSolver kkt;
  if (!kkt.build(prob, identity_scaling(views, m), st.reg)) return sol;

  // Initial point: least-norm primal/dual solves, shifted into the cone.
  Iterate it;
  {
    const Vec u1 = kkt.solve(pack(Vec::Zero(n), prob.b, prob.h), st.refine_rounds);
    it.x = u1.head(n);
    it.s = -u1.tail(m);
    const Vec u2 = kkt.solve(pack(-prob.c, Vec::Zero(p), Vec::Zero(m)),
                             st.refine_rounds);
    it.y = u2.segment(n, p);
    it.z = u2.tail(m);
    if (!it.x.allFinite() || !it.y.allFinite() || !it.z.allFinite() ||
        !it.s.allFinite())
      return sol;
    const double ms = min_cone_margin(prob.cones, it.s);
    if (ms <= 0.0) it.s += (1.0 - ms) * e;
    const double mz = min_cone_margin(prob.cones, it.z);
    if (mz <= 0.0) it.z += (1.0 - mz) * e;
    it.tau = 1.0;
    it.kappa = 1.0;
  }

  Iterate best = it;
  Metrics best_metrics;
  int iters_done = 0;

  const auto eval_metrics = [&](const Iterate& cur) {
    Metrics mt;
    const Vec rx = prob.A.transpose() * cur.y + prob.G.transpose() * cur.z +
                   prob.c * cur.tau;
    const Vec ry = -prob.A * cur.x + prob.b * cur.tau;
    const Vec rz = -prob.G * cur.x + prob.h * cur.tau - cur.s;
    mt.pcost = prob.c.dot(cur.x) / cur.tau;
    const double dcost = -(prob.b.dot(cur.y) + prob.h.dot(cur.z)) / cur.tau;
    mt.gap = cur.s.dot(cur.z) / (cur.tau * cur.tau);
    mt.relgap =
        mt.gap / std::max({1.0, std::abs(mt.pcost), std::abs(dcost)});
    mt.pres = std::max(ry.norm() / norm_b, rz.norm() / norm_h) / cur.tau;
    mt.dres = rx.norm() / (norm_c * cur.tau);
    return mt;
  };

  // Farkas-certificate tests; on success the certificate is normalized and
  // stored in the solution.
  const auto check_primal_infeasible = [&](const Iterate& cur, double eps) {
    const double iota = prob.b.dot(cur.y) + prob.h.dot(cur.z);
    if (iota >= 0.0) return false;
    const Vec cert = prob.A.transpose() * cur.y + prob.G.transpose() * cur.z;
    if (cert.norm() > eps * (-iota)) return false;
    sol.status = Status::primal_infeasible;
    sol.y = cur.y / -iota;
    sol.z = cur.z / -iota;
    sol.x = Vec::Zero(n);
    sol.s = Vec::Zero(m);
    return true;
  };
  const auto check_dual_infeasible = [&](const Iterate& cur, double eps) {
    const double omega = prob.c.dot(cur.x);
    if (omega >= 0.0) return false;
    const double r_eq = p > 0 ? (prob.A * cur.x).norm() : 0.0;
    const double r_cone = (prob.G * cur.x + cur.s).norm();
    if (std::max(r_eq, r_cone) > eps * (-omega)) return false;
    sol.status = Status::dual_infeasible;
    sol.x = cur.x / -omega;
    sol.s = cur.s / -omega;
    sol.y = Vec::Zero(p);
    sol.z = Vec::Zero(m);
    return true;
  };
  const auto accept_optimal = [&](const Iterate& cur, const Metrics& mt,
                                  bool inaccurate) {
    sol.status = Status::optimal;
    sol.x = cur.x / cur.tau;
    sol.y = cur.y / cur.tau;
    sol.z = cur.z / cur.tau;
    sol.s = cur.s / cur.tau;
    sol.objective = mt.pcost;
    sol.pres = mt.pres;
    sol.dres = mt.dres;
    sol.relgap = mt.relgap;
    sol.inaccurate = inaccurate;
  };

  Scaling W;
  bool numerical_trouble = false;
  for (int iter = 0; iter <= st.max_iters; ++iter) {
    iters_done = iter;
    const Metrics mt = eval_metrics(it);
    if (mt.score() < best_metrics.score()) {
      best = it;
      best_metrics = mt;
    }
    if (mt.pres <= st.eps_feas && mt.dres <= st.eps_feas &&
        mt.relgap <= st.eps_gap) {
      accept_optimal(it, mt, false);
      sol.iters = iter;
      return sol;
    }
    if (check_primal_infeasible(it, st.eps_feas) ||
        check_dual_infeasible(it, st.eps_feas)) {
      sol.iters = iter;
      return sol;
    }
    if (iter == st.max_iters) break;

    // Residuals drive the Newton right-hand sides.
    const Vec rx = prob.A.transpose() * it.y + prob.G.transpose() * it.z +
                   prob.c * it.tau;
    const Vec ry = -prob.A * it.x + prob.b * it.tau;
    const Vec rz = -prob.G * it.x + prob.h * it.tau - it.s;
    const double rt = -prob.c.dot(it.x) - prob.b.dot(it.y) -
                      prob.h.dot(it.z) - it.kappa;

    if (!compute_nt(views, it.s, it.z, W) ||
        !kkt.build(prob, W, st.reg)) {
      numerical_trouble = true;
      break;
    }
    const Vec lam = W.lambda;
    const Vec lam_sq = jordan_mul(views, lam, lam);
    const double mu = (it.s.dot(it.z) + it.tau * it.kappa) / (nu + 1.0);

    const Vec w_dir =
        kkt.solve(pack(-prob.c, prob.b, prob.h), st.refine_rounds);
    const double xi_w = prob.c.dot(w_dir.head(n)) +
                        prob.b.dot(w_dir.segment(n, p)) +
                        prob.h.dot(w_dir.tail(m));
    const double denom_tau = it.kappa / it.tau - xi_w;

    struct Direction {
      Vec dx, dy, dz, ds;
      double dtau = 0.0, dkappa = 0.0;
    };
    const auto newton = [&](const Vec& d_x, const Vec& d_y, const Vec& d_z,
                            double d_tau, const Vec& d_stilde,
                            double d_kappa) {
      Direction dir;
      const Vec wd = W.apply(jordan_div(views, lam, d_stilde));
      const Vec v =
          kkt.solve(pack(d_x, -d_y, -(d_z + wd)), st.refine_rounds);
      const double xi_v = prob.c.dot(v.head(n)) +
                          prob.b.dot(v.segment(n, p)) + prob.h.dot(v.tail(m));
      dir.dtau = (d_tau + d_kappa / it.tau + xi_v) / denom_tau;
      dir.dx = v.head(n) + dir.dtau * w_dir.head(n);
      dir.dy = v.segment(n, p) + dir.dtau * w_dir.segment(n, p);
      dir.dz = v.tail(m) + dir.dtau * w_dir.tail(m);
      dir.ds = W.apply(jordan_div(views, lam, d_stilde) - W.apply(dir.dz));
      dir.dkappa = (d_kappa - it.kappa * dir.dtau) / it.tau;
      return dir;
    };

    // Predictor (affine scaling) direction.
    const Direction aff = newton(-rx, -ry, -rz, -rt, -lam_sq,
                                 -it.tau * it.kappa);
    if (!aff.dx.allFinite() || !std::isfinite(aff.dtau)) {
      numerical_trouble = true;
      break;
    }
    double alpha_aff = max_step_cone(views, it.s, aff.ds);
    alpha_aff = std::min(alpha_aff, max_step_cone(views, it.z, aff.dz));
    if (aff.dtau < 0.0) alpha_aff = std::min(alpha_aff, -it.tau / aff.dtau);
    if (aff.dkappa < 0.0)
      alpha_aff = std::min(alpha_aff, -it.kappa / aff.dkappa);
    alpha_aff = std::min(alpha_aff, 1.0);
    const double sigma =
        std::pow(std::clamp(1.0 - alpha_aff, 0.0, 1.0), 3.0);

    // Corrector: recenter toward sigma*mu and subtract the Mehrotra
    // second-order term, both in the scaled space.
    const double fac = 1.0 - sigma;
    const Vec corr =
        jordan_mul(views, W.apply_inv(aff.ds), W.apply(aff.dz));
    const Vec d_stilde = -lam_sq - corr + sigma * mu * e;
    const double d_kappa =
        -it.tau * it.kappa - aff.dtau * aff.dkappa + sigma * mu;
    const Direction dir =
        newton(-fac * rx, -fac * ry, -fac * rz, -fac * rt, d_stilde, d_kappa);
    if (!dir.dx.allFinite() || !std::isfinite(dir.dtau)) {
      numerical_trouble = true;
      break;
    }

    double alpha = max_step_cone(views, it.s, dir.ds);
    alpha = std::min(alpha, max_step_cone(views, it.z, dir.dz));
    if (dir.dtau < 0.0) alpha = std::min(alpha, -it.tau / dir.dtau);
    if (dir.dkappa < 0.0) alpha = std::min(alpha, -it.kappa / dir.dkappa);
    alpha = std::min(1.0, st.step_fraction * alpha);
    if (!(alpha > 0.0)) {
      numerical_trouble = true;
      break;
    }

    it.x += alpha * dir.dx;
    it.y += alpha * dir.dy;
    it.z += alpha * dir.dz;
    it.s += alpha * dir.ds;
    it.tau += alpha * dir.dtau;
    it.kappa += alpha * dir.dkappa;
    if (it.tau <= 0.0 || it.kappa <= 0.0 || !it.x.allFinite()) {
      numerical_trouble = true;
      break;
    }
  }

  // Strict target missed: fall back to the best iterate at the relaxed
  // tolerance before giving up.
  const Metrics mt = best_metrics;
  if (mt.pres <= st.eps_relaxed && mt.dres <= st.eps_relaxed &&
      mt.relgap <= st.eps_relaxed) {
    accept_optimal(best, mt, true);
    sol.iters = iters_done;
    return sol;
  }
  if (check_primal_infeasible(best, st.eps_relaxed) ||
      check_dual_infeasible(best, st.eps_relaxed)) {
    sol.inaccurate = true;
    sol.iters = iters_done;
    return sol;
  }
  sol.status = numerical_trouble ? Status::numerical_error : Status::max_iters;
  sol.x = best.x / best.tau;
  sol.y = best.y / best.tau;
  sol.z = best.z / best.tau;
  sol.s = best.s / best.tau;
  sol.objective = mt.pcost;
  sol.pres = mt.pres;
  sol.dres = mt.dres;
  sol.relgap = mt.relgap;
  sol.iters = iters_done;
  return sol;
}

Solution solve(const Problem& prob, const Settings& st) {
  if (!st.equilibrate) return solve_core(prob, st);
  prob.validate();
  const Equilibration eq = compute_equilibration(prob, make_views(prob.cones));
  Solution sol = solve_core(apply_equilibration(prob, eq), st);
  // Map the point back to the original variables. Residuals stay as achieved
  // on the equilibrated problem (what the convergence test decided on);
  // certificates keep their defining identities under this scaling.
  if (sol.x.size() == eq.col.size()) {
    sol.x = eq.col.cwiseProduct(sol.x);
    sol.objective = prob.c.dot(sol.x);
  }
  if (sol.y.size() == eq.row_eq.size()) {
    sol.y = eq.row_eq.cwiseProduct(sol.y);
  }
  if (sol.z.size() == eq.row_cone.size()) {
    sol.z = eq.row_cone.cwiseProduct(sol.z);
  }
  if (sol.s.size() == eq.row_cone.size()) {
    sol.s = sol.s.cwiseQuotient(eq.row_cone);
  }
  return sol;
}

}  // namespace rtmpc::socp
