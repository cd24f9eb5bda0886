#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <stdexcept>
#include <string>

namespace rtmpc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Vec2 = Eigen::Vector2d;
using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// Thrown when a geometric planning query cannot be completed
/// (start/goal in collision, node budget exhausted, ...).
struct PlanningFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Thrown when offline synthesis cannot produce a usable controller
/// (no contractive candidate, infeasible torque box, ...).
struct SynthesisFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Thrown when a closed-loop trajectory escapes its planned corridor,
/// i.e. some plan point lies in no corridor ball.
struct TrajectoryLeftCorridor : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Symmetric PSD square root via eigendecomposition. Negative eigenvalues
/// below -tol throw; tiny negatives from roundoff are clamped to zero.
Mat sqrt_psd(const Mat& S, double tol = 1e-9);

/// Spectral norm (largest singular value), exact via SVD. The matrices this
/// is used on are small (n x n or n x 2n), so cost is irrelevant.
double spectral_norm(const Mat& A);

}  // namespace rtmpc
