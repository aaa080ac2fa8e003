#include "varda/gaussian.hpp"

#include <cmath>

namespace varda {
namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

Matrix cholesky_or_throw(const Matrix& a, const char* what) {
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) {
    throw std::invalid_argument(std::string(what) + ": matrix is not positive definite");
  }
  return llt.matrixL();
}

}  // namespace

Gaussian::Gaussian(Vector mean, Matrix cov) : mean_(std::move(mean)) {
  require(cov.rows() == cov.cols(), "Gaussian: covariance must be square");
  require(cov.rows() == mean_.size(), "Gaussian: mean/covariance dimension mismatch");
  cov_ = symmetrized(cov);
  chol_ = cholesky_or_throw(cov_, "Gaussian");
  log_det_ = 2.0 * chol_.diagonal().array().log().sum();
}

double Gaussian::log_pdf(const Vector& x) const {
  require(x.size() == mean_.size(), "log_pdf: dimension mismatch");
  const Vector z = chol_.triangularView<Eigen::Lower>().solve(x - mean_);
  return -0.5 * (dim() * kLog2Pi + log_det_ + z.squaredNorm());
}

Matrix Gaussian::sample(RandomSeed seed, int count) const {
  require(count > 0, "sample: count must be positive");
  Rng rng(seed);
  Matrix out(count, dim());
  Vector z(dim());
  for (int i = 0; i < count; ++i) {
    for (int j = 0; j < dim(); ++j) z[j] = rng.normal();
    out.row(i) = (mean_ + chol_ * z).transpose();
  }
  return out;
}

double kl_gaussian(const Gaussian& q, const Gaussian& p) {
  require(q.dim() == p.dim(), "kl_gaussian: dimension mismatch");
  const auto& Lp = p.chol_lower();
  // tr(Pp^{-1} Pq) = ||Lp^{-1} Lq||_F^2
  const Matrix a = Lp.triangularView<Eigen::Lower>().solve(q.chol_lower());
  const Vector d = Lp.triangularView<Eigen::Lower>().solve(q.mean() - p.mean());
  return 0.5 * (a.squaredNorm() + d.squaredNorm() - q.dim() +
                p.log_det_cov() - q.log_det_cov());
}

Matrix woodbury_posterior_cov(const Matrix& Pf, const Matrix& H, const Matrix& R) {
  require(Pf.rows() == Pf.cols() && R.rows() == R.cols(), "woodbury: square inputs required");
  require(H.rows() == R.rows() && H.cols() == Pf.rows(), "woodbury: shape mismatch");
  Eigen::LLT<Matrix> pf_llt(symmetrized(Pf));
  require(pf_llt.info() == Eigen::Success, "woodbury: Pf not positive definite");
  const Matrix S = symmetrized(H * Pf * H.transpose() + R);
  Eigen::LLT<Matrix> s_llt(S);
  require(s_llt.info() == Eigen::Success, "woodbury: innovation covariance not positive definite");
  const Matrix PfHt = Pf * H.transpose();
  return symmetrized(Pf - PfHt * s_llt.solve(PfHt.transpose()));
}

Matrix joseph_form_cov(const Matrix& Pf, const Matrix& H, const Matrix& R,
                       const Matrix& K) {
  require(K.rows() == Pf.rows() && K.cols() == H.rows(), "joseph: gain shape mismatch");
  require(H.cols() == Pf.rows() && R.rows() == H.rows() && R.rows() == R.cols(),
          "joseph: shape mismatch");
  const Matrix ImKH = Matrix::Identity(Pf.rows(), Pf.cols()) - K * H;
  return symmetrized(ImKH * Pf * ImKH.transpose() + K * R * K.transpose());
}

}  // namespace varda
