#pragma once

#include <utility>
#include <vector>

#include "varda/exact_inference.hpp"
#include "varda/optimize.hpp"

namespace varda {

/// Two sides of an exact identity and their difference. pass iff
/// |residual| <= tolerance.
struct IdentityReport {
  double lhs = 0.0;
  double rhs = 0.0;
  double residual = 0.0;
  double evidence = 0.0;          // the log-normalizer term of the identity
  double kl_to_posterior = 0.0;   // the KL term of the identity
  double tolerance = 0.0;
  bool pass = false;

  static IdentityReport make(double lhs, double rhs, double evidence,
                             double kl_to_posterior, double tolerance);
};

/// Strictly positive density sampled on a uniform 1D grid.
struct GridDensity {
  Vector points;   // ascending, uniform spacing
  Vector density;  // > 0

  double spacing() const;
  void validate() const;
  /// Rescale so that spacing * sum(density) = 1.
  GridDensity normalized() const;
};

/// One-step functional J_t(q) = E_q[-loglik] + KL(q || forecast) on a finite
/// state set, with 0 ln 0 = 0. Throws on absolute-continuity or
/// admissibility violations.
double eval_Jt_discrete(const DiscreteDistribution& q,
                        const DiscreteDistribution& forecast, const Vector& loglik);

/// Checks J_t(q) = KL(q || p^a) - log Z_t with (p^a, Z_t) from the exact
/// analysis step.
IdentityReport check_one_step_identity(const DiscreteDistribution& q,
                                       const DiscreteDistribution& forecast,
                                       const Vector& loglik, double tolerance = 1e-12);

/// Path-space functional J_path(q) = E_q[-sum_t loglik_t] + KL(q || prior),
/// by enumeration.
double eval_Jpath_discrete(const PathLaw& q, const DiscreteHMM& model);

/// Checks J_path(q) = KL(q || posterior) - log Z_{0:T} against the
/// enumerated smoothing posterior.
IdentityReport check_path_identity(const PathLaw& q, const DiscreteHMM& model,
                                   double tolerance = 1e-12);

/// Per-level results for the admissible-truncation scheme: the posterior nu
/// conditioned on A_n = { e^{-n} <= f <= e^n, g <= n } with f the total
/// likelihood and g the total absolute log-likelihood.
struct TruncationLevel {
  int level = 0;
  bool empty = false;            // nu(A_n) = 0, level skipped
  double posterior_mass = 0.0;   // nu(A_n)
  double kl_to_posterior = 0.0;  // KL(nu_n || nu)
  double kl_residual = 0.0;      // KL(nu_n || nu) + log nu(A_n)
  double functional_value = 0.0; // J_path(nu_n)
  double identity_residual = 0.0;
};

std::vector<TruncationLevel> truncation_sequence_check(const DiscreteHMM& model,
                                                       const std::vector<int>& levels);

/// Closed-form J_t over Gaussian candidates, including the full Gaussian
/// negative expected log-likelihood constant so the identity holds with the
/// true evidence.
double eval_Jt_gaussian(const Gaussian& q, const Gaussian& forecast, const Matrix& H,
                        const Matrix& R, const Vector& y);

/// Numerically minimizes eval_Jt_gaussian over (m, P) with P parameterized
/// by its Cholesky factor (log-diagonal). Throws on non-convergence; the
/// returned optimum satisfies the information-form stationarity conditions.
Gaussian minimize_Jt_gaussian(const Gaussian& forecast, const Matrix& H,
                              const Matrix& R, const Vector& y);

/// Reverse-KL projection of a gridded 1D density onto the Gaussian family:
/// argmin over (m, sigma^2) of KL(N(m, sigma^2) || target) by quadrature.
Gaussian reverse_kl_gaussian_projection(const GridDensity& target);

/// Scans expected squared loss over a candidate grid and returns
/// (continuous argmin from the local quadratic fit, posterior mean). The two
/// agree within grid resolution for any finite-support posterior.
std::pair<double, double> quadratic_loss_minimizer_check(const Vector& values,
                                                         const Vector& probs);

/// Smoothed-log-density maximizers F_eps(x) = E[log target(x + sqrt(eps) Xi)]
/// by Gauss-Hermite quadrature, one argmax per epsilon. As eps -> 0 the
/// argmax converges to the grid MAP.
std::vector<double> map_zero_variance_limit(const GridDensity& target,
                                            const std::vector<double>& epsilons);

/// Gauss-Hermite rule for integrals against exp(-x^2), by Golub-Welsch.
struct GaussHermite {
  Vector nodes;
  Vector weights;
  static GaussHermite order(int n);
};

}  // namespace varda
