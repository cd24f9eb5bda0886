#include "rtmpc/synthesis.hpp"

#include <cmath>

#include "rtmpc/sdp.hpp"

namespace rtmpc {

namespace {

void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

// Variable layout of the synthesis SDP: vech(E), vec(Y), c_x^2, c_u^2, w_bar^2.
struct VarMap {
  int nx = 0, nu = 0, m = 0, nin = 0;
  int nE = 0, off_Y = 0, off_cx = 0, off_cu = 0, off_w = 0, N = 0;

  VarMap(int nx_, int nu_, int m_, int nin_) : nx(nx_), nu(nu_), m(m_), nin(nin_) {
    nE = nx * (nx + 1) / 2;
    off_Y = nE;
    off_cx = off_Y + nu * nx;
    off_cu = off_cx + m;
    off_w = off_cu + nin;
    N = off_w + 1;
  }
  int e_idx(int r, int s) const {  // r <= s, packed row-major upper triangle
    return r * nx - r * (r - 1) / 2 + (s - r);
  }
  int y_idx(int u, int v) const { return off_Y + u * nx + v; }
};

// Symmetric basis matrix for the (r,s) entry of E.
Mat sym_basis(int n, int r, int s) {
  Mat S = Mat::Zero(n, n);
  S(r, s) += 1.0;
  S(s, r) += 1.0;
  if (r == s) S(r, s) -= 1.0;
  return S;
}

Mat unpack_E(const VarMap& vm, const Vec& x) {
  Mat E(vm.nx, vm.nx);
  for (int r = 0; r < vm.nx; ++r)
    for (int s = r; s < vm.nx; ++s) E(r, s) = E(s, r) = x[vm.e_idx(r, s)];
  return E;
}

Mat unpack_Y(const VarMap& vm, const Vec& x) {
  Mat Y(vm.nu, vm.nx);
  for (int u = 0; u < vm.nu; ++u)
    for (int v = 0; v < vm.nx; ++v) Y(u, v) = x[vm.y_idx(u, v)];
  return Y;
}

std::vector<Vec> box_vertices(const Vec& halfwidth) {
  const int n = static_cast<int>(halfwidth.size());
  std::vector<Vec> out;
  out.reserve(size_t{1} << n);
  for (uint64_t mask = 0; mask < (uint64_t{1} << n); ++mask) {
    Vec v(n);
    for (int i = 0; i < n; ++i) v[i] = (mask >> i) & 1 ? halfwidth[i] : -halfwidth[i];
    out.push_back(std::move(v));
  }
  return out;
}

sdp::Problem build_problem(const SynthesisConfig& cfg, const DiscreteDynamics& dyn,
                           double rho, const Mat& Ax, const Mat& Au, const VarMap& vm) {
  sdp::Problem p;
  p.n_vars = vm.N;
  p.c = Vec::Zero(vm.N);
  const double scale = 1.0 / (2.0 * (1.0 - rho));
  for (int i = 0; i < vm.m; ++i) p.c[vm.off_cx + i] = scale;
  for (int j = 0; j < vm.nin; ++j) p.c[vm.off_cu + j] = scale;
  p.c[vm.off_w] = scale * (vm.m + vm.nin);

  const int nx = vm.nx, nu = vm.nu;

  // Contraction block: [[rho^2 E, (AE+BY)'], [AE+BY, E]].
  {
    sdp::Block blk;
    blk.F0 = Mat::Zero(2 * nx, 2 * nx);
    for (int r = 0; r < nx; ++r) {
      for (int s = r; s < nx; ++s) {
        const Mat S = sym_basis(nx, r, s);
        Mat C = Mat::Zero(2 * nx, 2 * nx);
        C.topLeftCorner(nx, nx) = rho * rho * S;
        C.bottomLeftCorner(nx, nx) = dyn.A * S;
        C.topRightCorner(nx, nx) = (dyn.A * S).transpose();
        C.bottomRightCorner(nx, nx) = S;
        blk.terms.push_back({vm.e_idx(r, s), std::move(C)});
      }
    }
    for (int u = 0; u < nu; ++u) {
      for (int v = 0; v < nx; ++v) {
        Mat BY = Mat::Zero(nx, nx);  // B * e_u e_v'
        BY.col(v) = dyn.B.col(u);
        Mat C = Mat::Zero(2 * nx, 2 * nx);
        C.bottomLeftCorner(nx, nx) = BY;
        C.topRightCorner(nx, nx) = BY.transpose();
        blk.terms.push_back({vm.y_idx(u, v), std::move(C)});
      }
    }
    p.blocks.push_back(std::move(blk));
  }

  // State rows: [[c_x,i^2, (E a_i)'], [E a_i, E]].
  for (int i = 0; i < vm.m; ++i) {
    const Vec a = Ax.row(i).transpose();
    sdp::Block blk;
    blk.F0 = Mat::Zero(nx + 1, nx + 1);
    for (int r = 0; r < nx; ++r) {
      for (int s = r; s < nx; ++s) {
        const Mat S = sym_basis(nx, r, s);
        Mat C = Mat::Zero(nx + 1, nx + 1);
        C.block(1, 0, nx, 1) = S * a;
        C.block(0, 1, 1, nx) = (S * a).transpose();
        C.bottomRightCorner(nx, nx) = S;
        blk.terms.push_back({vm.e_idx(r, s), std::move(C)});
      }
    }
    Mat Cc = Mat::Zero(nx + 1, nx + 1);
    Cc(0, 0) = 1.0;
    blk.terms.push_back({vm.off_cx + i, std::move(Cc)});
    p.blocks.push_back(std::move(blk));
  }

  // Input rows: [[c_u,j^2, (Y' g_j)'], [Y' g_j, E]].
  for (int j = 0; j < vm.nin; ++j) {
    const Vec g = Au.row(j).transpose();
    sdp::Block blk;
    blk.F0 = Mat::Zero(nx + 1, nx + 1);
    for (int r = 0; r < nx; ++r) {
      for (int s = r; s < nx; ++s) {
        Mat C = Mat::Zero(nx + 1, nx + 1);
        C.bottomRightCorner(nx, nx) = sym_basis(nx, r, s);
        blk.terms.push_back({vm.e_idx(r, s), std::move(C)});
      }
    }
    for (int u = 0; u < nu; ++u) {
      if (g[u] == 0.0) continue;
      for (int v = 0; v < nx; ++v) {
        Mat C = Mat::Zero(nx + 1, nx + 1);
        C(1 + v, 0) = g[u];
        C(0, 1 + v) = g[u];
        blk.terms.push_back({vm.y_idx(u, v), std::move(C)});
      }
    }
    Mat Cc = Mat::Zero(nx + 1, nx + 1);
    Cc(0, 0) = 1.0;
    blk.terms.push_back({vm.off_cu + j, std::move(Cc)});
    p.blocks.push_back(std::move(blk));
  }

  // Disturbance vertices: [[w_bar^2, w'], [w, E]].
  for (const Vec& w : box_vertices(cfg.disturbance_halfwidth)) {
    sdp::Block blk;
    blk.F0 = Mat::Zero(nx + 1, nx + 1);
    blk.F0.block(1, 0, nx, 1) = w;
    blk.F0.block(0, 1, 1, nx) = w.transpose();
    for (int r = 0; r < nx; ++r) {
      for (int s = r; s < nx; ++s) {
        Mat C = Mat::Zero(nx + 1, nx + 1);
        C.bottomRightCorner(nx, nx) = sym_basis(nx, r, s);
        blk.terms.push_back({vm.e_idx(r, s), std::move(C)});
      }
    }
    Mat Cc = Mat::Zero(nx + 1, nx + 1);
    Cc(0, 0) = 1.0;
    blk.terms.push_back({vm.off_w, std::move(Cc)});
    p.blocks.push_back(std::move(blk));
  }

  return p;
}

// Strictly feasible start: per-joint pole placement at p = 1 - 1.5 (1 - rho)
// (inside the rho-disc), then the rho-scaled discrete Lyapunov equation
// A_cl' X A_cl = rho^2 (X - I), which makes the contraction block PSD with
// margin rho^2 I. Scalars get twice their closed-form values.
Vec initial_point(const SynthesisConfig& cfg, const DiscreteDynamics& dyn, double rho,
                  const Mat& Ax, const Mat& Au, const VarMap& vm) {
  const int nx = vm.nx, nu = vm.nu;
  const double dt = dyn.dt;
  const double pole = 1.0 - 1.5 * (1.0 - rho);
  const double b1 = dyn.B(0, 0);        // configuration-row input coefficient
  const double b2 = dyn.B(nu, 0);       // velocity-row input coefficient
  const double k1 = -(1.0 - pole) * (1.0 - pole) / (b2 * dt);
  const double k2 = (2.0 * (pole - 1.0) - b1 * k1) / b2;

  Mat K0 = Mat::Zero(nu, nx);
  Mat P0 = Mat::Zero(nx, nx);
  Mat Aj(2, 2), Bj(2, 1);
  Aj << 1.0, dt, 0.0, 1.0;
  Bj << b1, b2;
  Mat Kj(1, 2);
  Kj << k1, k2;
  const Mat Acl = Aj + Bj * Kj;
  const Mat At = Acl / rho;
  // Solve At' X At - X = -I via the 4x4 Kronecker system.
  Mat lhs = Mat::Identity(4, 4);
  Eigen::Matrix4d kron;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) kron.block<2, 2>(2 * i, 2 * j) = At(j, i) * At.transpose();
  lhs -= kron;
  Eigen::Vector4d rhs;
  rhs << 1, 0, 0, 1;
  Eigen::Vector4d vecX = lhs.colPivHouseholderQr().solve(rhs);
  Mat Xj(2, 2);
  Xj << vecX[0], 0.5 * (vecX[1] + vecX[2]), 0.5 * (vecX[1] + vecX[2]), vecX[3];

  for (int j = 0; j < nu; ++j) {
    K0(j, j) = k1;
    K0(j, nu + j) = k2;
    P0(j, j) = Xj(0, 0);
    P0(j, nu + j) = P0(nu + j, j) = Xj(0, 1);
    P0(nu + j, nu + j) = Xj(1, 1);
  }

  const Mat E0 = P0.inverse();
  const Mat Y0 = K0 * E0;

  Vec x = Vec::Zero(vm.N);
  for (int r = 0; r < nx; ++r)
    for (int s = r; s < nx; ++s) x[vm.e_idx(r, s)] = E0(r, s);
  for (int u = 0; u < nu; ++u)
    for (int v = 0; v < nx; ++v) x[vm.y_idx(u, v)] = Y0(u, v);
  for (int i = 0; i < vm.m; ++i) {
    const Vec a = Ax.row(i).transpose();
    x[vm.off_cx + i] = std::max(2.0 * a.dot(E0 * a), 1e-9);
  }
  const Mat KEK = K0 * E0 * K0.transpose();
  for (int j = 0; j < vm.nin; ++j) {
    const Vec g = Au.row(j).transpose();
    x[vm.off_cu + j] = std::max(2.0 * g.dot(KEK * g), 1e-9);
  }
  double wmax = 0.0;
  for (const Vec& w : box_vertices(cfg.disturbance_halfwidth))
    wmax = std::max(wmax, w.dot(P0 * w));
  x[vm.off_w] = 2.0 * wmax + 1e-9;
  return x;
}

Mat symmetric_inverse(const Mat& S) {
  const Mat inv = S.ldlt().solve(Mat::Identity(S.rows(), S.cols()));
  return 0.5 * (inv + inv.transpose());
}

}  // namespace

void ConstraintSet::validate(int dim) const {
  require(A.cols() == dim && A.rows() == b.size() && A.rows() > 0,
          "ConstraintSet: shape mismatch");
  require(A.allFinite() && b.allFinite(), "ConstraintSet: non-finite entries");
  for (int i = 0; i < rows(); ++i) {
    require(A.row(i).norm() > 0.0, "ConstraintSet: zero row");
    require(b[i] > 0.0, "ConstraintSet: the origin must be strictly feasible");
  }
}

ConstraintSet box_constraints(const Vec& halfwidth) {
  const int n = static_cast<int>(halfwidth.size());
  ConstraintSet cs;
  cs.A = Mat::Zero(2 * n, n);
  cs.A.topRows(n) = Mat::Identity(n, n);
  cs.A.bottomRows(n) = -Mat::Identity(n, n);
  cs.b = Vec(2 * n);
  cs.b << halfwidth, halfwidth;
  return cs;
}

void SynthesisConfig::validate(int nx, int nu) const {
  require(rho_grid.size() > 0, "SynthesisConfig: empty rho grid");
  for (int i = 0; i < rho_grid.size(); ++i)
    require(rho_grid[i] > 0.0 && rho_grid[i] < 1.0, "SynthesisConfig: rho must lie in (0,1)");
  state_constraints.validate(nx);
  input_constraints.validate(nu);
  require(disturbance_halfwidth.size() == nx && disturbance_halfwidth.minCoeff() >= 0.0,
          "SynthesisConfig: bad disturbance box");
  require(state_normalizer.size() == state_constraints.rows() &&
              state_normalizer.minCoeff() > 0.0,
          "SynthesisConfig: bad state normalizers");
  require(input_normalizer.size() == input_constraints.rows() &&
              input_normalizer.minCoeff() > 0.0,
          "SynthesisConfig: bad input normalizers");
}

SynthesisResult synthesize(const SynthesisConfig& cfg, const DiscreteDynamics& dyn,
                           double rho) {
  const int nx = static_cast<int>(dyn.A.rows());
  const int nu = static_cast<int>(dyn.B.cols());
  cfg.validate(nx, nu);
  require(rho > 0.0 && rho < 1.0, "synthesize: rho must lie in (0,1)");

  const Mat Ax = cfg.state_normalizer.cwiseInverse().asDiagonal() * cfg.state_constraints.A;
  const Mat Au = cfg.input_normalizer.cwiseInverse().asDiagonal() * cfg.input_constraints.A;
  const VarMap vm(nx, nu, static_cast<int>(Ax.rows()), static_cast<int>(Au.rows()));

  const sdp::Problem problem = build_problem(cfg, dyn, rho, Ax, Au, vm);
  Vec x0 = initial_point(cfg, dyn, rho, Ax, Au, vm);
  if (!sdp::is_strictly_feasible(problem, x0))
    throw SynthesisFailed("synthesize: no strictly feasible start at this rho");

  const sdp::Result sol = sdp::solve(problem, x0);

  SynthesisResult out;
  out.E = unpack_E(vm, sol.x);
  out.Y = unpack_Y(vm, sol.x);
  out.P = symmetric_inverse(out.E);
  if (!out.P.allFinite())
    throw SynthesisFailed("synthesize: recovered E is numerically singular");
  out.K = out.Y * out.P;
  out.gap_bound = sol.gap_bound;
  out.converged = sol.converged;

  // Polish: the barrier keeps scalar variables strictly above their Schur
  // floors; reset them to the floors (their closed forms given E, Y).
  out.c_x2 = Vec(vm.m);
  for (int i = 0; i < vm.m; ++i) {
    const Vec a = Ax.row(i).transpose();
    out.c_x2[i] = a.dot(out.E * a);
  }
  out.c_u2 = Vec(vm.nin);
  const Mat KEK = out.K * out.E * out.K.transpose();
  for (int j = 0; j < vm.nin; ++j) {
    const Vec g = Au.row(j).transpose();
    out.c_u2[j] = g.dot(KEK * g);
  }
  out.w_bar2 = 0.0;
  for (const Vec& w : box_vertices(cfg.disturbance_halfwidth))
    out.w_bar2 = std::max(out.w_bar2, w.dot(out.P * w));
  out.objective = ((vm.m + vm.nin) * out.w_bar2 + out.c_x2.sum() + out.c_u2.sum()) /
                  (2.0 * (1.0 - rho));
  return out;
}

TubeController derive_constants(const Mat& P, const Mat& K, double rho, double w_bar,
                                const SynthesisConfig& cfg, const DiscreteDynamics& dyn,
                                const ErrorBoundConstants& consts) {
  const int nx = static_cast<int>(P.rows());
  const int nu = static_cast<int>(K.rows());
  require(K.cols() == nx && dyn.A.rows() == nx && dyn.B.cols() == nu,
          "derive_constants: shape mismatch");
  Eigen::LLT<Mat> llt(P);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("derive_constants: P must be positive definite");

  TubeController ctrl;
  ctrl.P = P;
  ctrl.K = K;
  ctrl.rho = rho;
  ctrl.P_sqrt = sqrt_psd(P);
  const Mat P_sqrt_inv = symmetric_inverse(ctrl.P_sqrt);

  ctrl.d = spectral_norm(ctrl.P_sqrt * dyn.B);
  Mat V = Mat::Zero(nu, nx);
  V.rightCols(nu) = Mat::Identity(nu, nu);
  ctrl.L_beta = consts.a * spectral_norm(K * P_sqrt_inv) +
                consts.b * spectral_norm(V * P_sqrt_inv);
  ctrl.rho_tilde = rho + ctrl.d * ctrl.L_beta;
  ctrl.contractive = ctrl.rho_tilde < 1.0;
  ctrl.delta_f = ctrl.contractive ? ctrl.d * consts.c / (1.0 - ctrl.rho_tilde) : INFINITY;

  const Mat E = symmetric_inverse(P);
  ctrl.tightening_x = Vec(cfg.state_constraints.rows());
  for (int i = 0; i < cfg.state_constraints.rows(); ++i) {
    const Vec a = cfg.state_constraints.A.row(i).transpose();
    ctrl.tightening_x[i] = std::sqrt(std::max(a.dot(E * a), 0.0));
  }
  ctrl.tightening_u = Vec(cfg.input_constraints.rows());
  const Mat KEK = K * E * K.transpose();
  for (int j = 0; j < cfg.input_constraints.rows(); ++j) {
    const Vec g = cfg.input_constraints.A.row(j).transpose();
    ctrl.tightening_u[j] = std::sqrt(std::max(g.dot(KEK * g), 0.0));
  }

  // Projection of the tube ellipsoid onto the configuration block: the
  // projected ellipsoid's shape matrix is the Schur complement of the
  // velocity block, and its circumscribed radius is 1/sqrt(lambda_min).
  const Mat Pqq = P.topLeftCorner(nu, nu);
  const Mat Pqv = P.topRightCorner(nu, nu);
  const Mat Pvv = P.bottomRightCorner(nu, nu);
  const Mat Pq = Pqq - Pqv * Pvv.ldlt().solve(Pqv.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (Pq + Pq.transpose()), Eigen::EigenvaluesOnly);
  require(es.eigenvalues().minCoeff() > 0.0, "derive_constants: degenerate projection");
  ctrl.r_p = 1.0 / std::sqrt(es.eigenvalues().minCoeff());

  ctrl.w_bar = w_bar;
  ctrl.delta_bar = w_bar / (1.0 - rho);
  return ctrl;
}

double tube_step(const TubeController& ctrl, double delta, const State& x_bar,
                 const Vec& a_bar, const ErrorBoundConstants& consts) {
  require(delta >= 0.0, "tube_step: delta must be non-negative");
  return ctrl.rho_tilde * delta + ctrl.d * consts.beta(x_bar, a_bar);
}

TubeController select_candidate(const SynthesisConfig& cfg, const DiscreteDynamics& dyn,
                                const ErrorBoundConstants& consts, bool rigid) {
  bool have_best = false;
  TubeController best;
  double best_metric = INFINITY;
  for (int i = 0; i < cfg.rho_grid.size(); ++i) {
    const double rho = cfg.rho_grid[i];
    SynthesisResult res;
    try {
      res = synthesize(cfg, dyn, rho);
    } catch (const SynthesisFailed&) {
      continue;
    }
    const TubeController cand = derive_constants(
        res.P, res.K, rho, std::sqrt(std::max(res.w_bar2, 0.0)), cfg, dyn, consts);
    if (!rigid && !cand.contractive) continue;
    // Realized worst-case tightening: the per-unit-delta constant times the
    // steady-state tube size. Comparing the constants alone would always
    // favor the largest rho (gentler gains shrink them monotonically) while
    // delta_bar = w_bar/(1-rho) blows up, producing controllers whose tube
    // penalty paralyzes the MPC.
    const double metric =
        std::sqrt(std::max(res.c_x2.maxCoeff(), res.c_u2.maxCoeff())) *
        cand.delta_bar;
    if (metric < best_metric) {  // strict: ties keep the smaller rho
      best_metric = metric;
      best = cand;
      have_best = true;
    }
  }
  if (!have_best)
    throw SynthesisFailed("select_candidate: no valid controller; reduce uncertainty");
  return best;
}

Vec disturbance_halfwidth(const DiscreteDynamics& dyn, const ErrorBoundConstants& consts,
                          const StateBox& X, const AccelSet& accel) {
  const double beta_max =
      consts.beta(accel.box_halfwidth.norm(), X.qd_halfwidth.norm());
  Vec h(dyn.B.rows());
  for (int i = 0; i < dyn.B.rows(); ++i) h[i] = beta_max * dyn.B.row(i).norm();
  return h;
}

SynthesisConfig make_synthesis_config(const StateBox& X, const AccelSet& accel,
                                      const DiscreteDynamics& dyn,
                                      const ErrorBoundConstants& consts,
                                      const Vec& rho_grid, double q_norm,
                                      double qd_norm, double a_norm) {
  const int n = static_cast<int>(X.q_halfwidth.size());
  SynthesisConfig cfg;
  cfg.rho_grid = rho_grid;
  Vec x_halfwidth(2 * n);
  x_halfwidth << X.q_halfwidth, X.qd_halfwidth;
  cfg.state_constraints = box_constraints(x_halfwidth);
  cfg.input_constraints = box_constraints(accel.box_halfwidth);
  cfg.disturbance_halfwidth = disturbance_halfwidth(dyn, consts, X, accel);
  Vec half_norm(2 * n);
  half_norm << Vec::Constant(n, q_norm), Vec::Constant(n, qd_norm);
  cfg.state_normalizer = Vec(4 * n);
  cfg.state_normalizer << half_norm, half_norm;
  cfg.input_normalizer = Vec::Constant(2 * n, a_norm);
  return cfg;
}

}  // namespace rtmpc
