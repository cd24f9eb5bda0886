#include "rtmpc/common.hpp"

#include <Eigen/SVD>

namespace rtmpc {

Mat sqrt_psd(const Mat& S, double tol) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (S + S.transpose()));
  if (es.info() != Eigen::Success) throw std::runtime_error("sqrt_psd: eigendecomposition failed");
  Vec lam = es.eigenvalues();
  for (int i = 0; i < lam.size(); ++i) {
    if (lam[i] < -tol) throw std::invalid_argument("sqrt_psd: matrix is not PSD");
    lam[i] = std::sqrt(std::max(lam[i], 0.0));
  }
  return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

double spectral_norm(const Mat& A) {
  if (A.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(A);
  return svd.singularValues()(0);
}

}  // namespace rtmpc
