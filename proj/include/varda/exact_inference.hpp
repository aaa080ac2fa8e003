#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "varda/models.hpp"

namespace varda {

/// Probability vector over a finite state set.
struct DiscreteDistribution {
  Vector probs;

  DiscreteDistribution() = default;
  explicit DiscreteDistribution(Vector p);
  int size() const { return static_cast<int>(probs.size()); }
};

/// KL(q || p) with the 0 ln 0 = 0 convention; throws if q places mass where
/// p has none.
double discrete_kl(const DiscreteDistribution& q, const DiscreteDistribution& p);

/// log(sum_i exp(v_i)), max-stabilized; -inf for an all -inf input.
double log_sum_exp(const Vector& v);

/// Mixed-radix index over state trajectories x_0..x_T, time 0 least
/// significant.
struct PathSpace {
  int num_states = 0;
  int horizon = 0;

  std::size_t size() const;
  int state(std::size_t path, int t) const;
};

/// Law over full trajectories, indexed by PathSpace.
struct PathLaw {
  PathSpace space;
  Vector probs;
};

double path_kl(const PathLaw& q, const PathLaw& p);

struct HmmFilterOutput {
  std::vector<DiscreteDistribution> forecasts;  // p_t^f
  std::vector<DiscreteDistribution> analyses;   // p_t^a
  std::vector<double> log_evidence_increments;  // log Z_t
  double total_log_evidence = 0.0;              // log Z_{0:T}
};

struct KalmanFilterOutput {
  std::vector<Gaussian> forecasts;
  std::vector<Gaussian> analyses;
  std::vector<double> log_evidence_increments;
  double total_log_evidence = 0.0;
};

/// One Bayes step: analysis ∝ forecast ⊙ exp(loglik), with the log
/// normalizer log Z_t. Throws if the reweighting annihilates all mass.
std::pair<DiscreteDistribution, double> discrete_analysis(
    const DiscreteDistribution& forecast, const Vector& loglik);

/// Forecast-analysis recursion over the whole window.
HmmFilterOutput hmm_forward(const DiscreteHMM& model);

/// Prior law over trajectories (no conditioning).
PathLaw hmm_prior_path_law(const DiscreteHMM& model);

/// Brute-force smoothing posterior over S^{T+1} paths with exact log
/// evidence; the enumeration oracle for the identity checks. Guarded at
/// 1e6 paths.
std::pair<PathLaw, double> hmm_path_posterior_enumerate(const DiscreteHMM& model);

enum class KalmanForm { information, gain };

/// Gaussian analysis step in either algebraic form, plus the one-step log
/// evidence log N(y; H m^f, H P^f H^T + R).
std::pair<Gaussian, double> kalman_analysis(const Gaussian& forecast,
                                            const Matrix& H, const Matrix& R,
                                            const Vector& y, KalmanForm form);

/// The explicit gain K = P^f H^T (H P^f H^T + R)^{-1}.
Matrix kalman_gain(const Matrix& Pf, const Matrix& H, const Matrix& R);

KalmanFilterOutput kalman_filter_run(const LinearGaussianSSM& model,
                                     const ObservationRecord& obs,
                                     KalmanForm form = KalmanForm::gain);

/// Joint Gaussian over the stacked trajectory (x_0..x_T), assembled from the
/// block-tridiagonal precision of the weak-constraint quadratic form. Its
/// mean is simultaneously the posterior mean, the MAP trajectory, and the
/// smoother mean. Guarded at n(T+1) <= 200.
Gaussian joint_gaussian_trajectory_posterior(const LinearGaussianSSM& model,
                                             const ObservationRecord& obs);

/// Posterior of x_0 given y_0..y_T under perfect (deterministic) dynamics,
/// by conditioning the joint Gaussian law of (x_0, y_{0:T}).
Gaussian strong_constraint_x0_posterior(const LinearGaussianSSM& model,
                                        const ObservationRecord& obs);

}  // namespace varda
