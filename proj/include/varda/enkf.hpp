#pragma once

#include <utility>
#include <vector>

#include "varda/exact_inference.hpp"

namespace varda {

/// Ensemble of N state vectors, one per row. N >= 2 so the 1/(N-1) sample
/// covariance is defined.
struct Ensemble {
  Matrix members;  // N x n

  int size() const { return static_cast<int>(members.rows()); }
  int dim() const { return static_cast<int>(members.cols()); }
};

/// Sample mean and 1/(N-1) covariance.
std::pair<Vector, Matrix> ensemble_moments(const Ensemble& e);

/// K = P H^T (H P H^T + R)^{-1}; defined for singular sample covariances as
/// long as R is positive definite.
Matrix surrogate_gain(const Matrix& Pf_hat, const Matrix& H, const Matrix& R);

/// Perturbed-observation update with the gain estimated from the input
/// ensemble's own sample covariance.
Ensemble perturbed_obs_step(const Ensemble& e, const Matrix& H, const Matrix& R,
                            const Vector& y, RandomSeed seed);

/// Same update with an externally supplied (e.g. exact) gain.
Ensemble perturbed_obs_step_with_gain(const Ensemble& e, const Matrix& K,
                                      const Matrix& H, const Matrix& R,
                                      const Vector& y, RandomSeed seed);

/// Deterministic square-root update: the analysis mean is the surrogate mean
/// update and the anomalies are transformed by the symmetric ensemble-space
/// square root, so the output sample covariance equals (I - K H) P_hat
/// exactly.
Ensemble square_root_step(const Ensemble& e, const Matrix& H, const Matrix& R,
                          const Vector& y);

struct ConvergenceRow {
  int ensemble_size = 0;
  int seed_count = 0;
  int time = 0;  // window index; 0 for single-step experiments
  double mean_error = 0.0;
  double cov_error = 0.0;
};

struct ConvergenceTable {
  std::vector<ConvergenceRow> rows;
  double mean_error_slope = 0.0;  // log-log fit vs ensemble size
  double cov_error_slope = 0.0;
};

/// Prop-7.1 configuration: i.i.d. exact forecast draws pushed through the
/// exact-gain transport; seed-averaged moment errors against the exact
/// analysis, per ensemble size.
ConvergenceTable exact_transport_experiment(const Gaussian& forecast, const Matrix& H,
                                            const Matrix& R, const Vector& y,
                                            const std::vector<int>& ensemble_sizes,
                                            int seed_count, RandomSeed base);

/// Full-window perturbed-observation EnKF with the sample gain, versus the
/// exact Kalman analyses. Slopes are fit on time-averaged errors.
ConvergenceTable enkf_convergence_experiment(const LinearGaussianSSM& model,
                                             const ObservationRecord& obs,
                                             const std::vector<int>& ensemble_sizes,
                                             int seed_count, RandomSeed base);

/// Runs the square-root filter across the window and returns the largest
/// deviation of the per-step analysis sample moments from the surrogate
/// update applied to the input sample moments.
double square_root_window_moment_error(const LinearGaussianSSM& model,
                                       const ObservationRecord& obs, int ensemble_size,
                                       RandomSeed seed);

}  // namespace varda
