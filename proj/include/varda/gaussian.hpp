#pragma once

#include "varda/linalg.hpp"
#include "varda/rng.hpp"

namespace varda {

/// Dense nondegenerate Gaussian. The covariance is symmetrized on
/// construction and certified positive definite by a Cholesky factorization;
/// construction throws otherwise. Values are immutable and thread-safe.
class Gaussian {
 public:
  Gaussian(Vector mean, Matrix cov);

  int dim() const { return static_cast<int>(mean_.size()); }
  const Vector& mean() const { return mean_; }
  const Matrix& cov() const { return cov_; }
  const Matrix& chol_lower() const { return chol_; }
  double log_det_cov() const { return log_det_; }

  double log_pdf(const Vector& x) const;

  /// count i.i.d. draws, one per row. Deterministic per seed.
  Matrix sample(RandomSeed seed, int count) const;

 private:
  Vector mean_;
  Matrix cov_;
  Matrix chol_;  // lower factor, cov = chol * chol^T
  double log_det_;
};

/// KL(q || p) in nats, closed form.
double kl_gaussian(const Gaussian& q, const Gaussian& p);

/// Pf - Pf H^T (H Pf H^T + R)^{-1} H Pf; equals the information-form
/// posterior covariance (Pf^{-1} + H^T R^{-1} H)^{-1}.
Matrix woodbury_posterior_cov(const Matrix& Pf, const Matrix& H, const Matrix& R);

/// (I - K H) Pf (I - K H)^T + K R K^T; PSD for any gain K.
Matrix joseph_form_cov(const Matrix& Pf, const Matrix& H, const Matrix& R,
                       const Matrix& K);

}  // namespace varda
