#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "varda/gaussian.hpp"

namespace varda {

/// Linear-Gaussian state-space model on the window t = 0..T.
/// x_0 ~ N(init_mean, init_cov), x_{t+1} = A_t x_t + xi_t with xi_t ~ N(0, Q_t),
/// y_t = H_t x_t + eta_t with eta_t ~ N(0, R_t).
struct LinearGaussianSSM {
  Vector init_mean;                   // x_b
  Matrix init_cov;                    // B
  std::vector<Matrix> transitions;    // A_t, t = 0..T-1
  std::vector<Matrix> model_noise;    // Q_t, t = 0..T-1
  std::vector<Matrix> obs_operators;  // H_t, t = 0..T
  std::vector<Matrix> obs_noise;      // R_t, t = 0..T

  int horizon() const { return static_cast<int>(transitions.size()); }
  int state_dim() const { return static_cast<int>(init_mean.size()); }
  int obs_dim() const { return obs_operators.empty() ? 0 : static_cast<int>(obs_operators[0].rows()); }
  void validate() const;
};

/// Finite hidden Markov chain conditioned on a realized observation sequence.
/// Emissions are stored as per-time log-likelihood vectors log p(y_t | x_t = s),
/// which is all the window identities ever use; -inf entries model zero
/// likelihood atoms.
struct DiscreteHMM {
  Vector initial;                      // p(x_0), length S
  std::vector<Matrix> transitions;     // p(x_{t+1} | x_t), T row-stochastic S x S
  std::vector<Vector> log_likelihoods; // log p(y_t | x_t = s), t = 0..T

  int horizon() const { return static_cast<int>(transitions.size()); }
  int num_states() const { return static_cast<int>(initial.size()); }
  void validate() const;
};

struct Lorenz63Params {
  double sigma = 10.0;
  double rho = 28.0;
  double beta = 8.0 / 3.0;
};

/// Nonlinear Gaussian SSM whose deterministic flow is Lorenz-63 integrated by
/// RK4 with fixed step dt (substeps RK4 steps per window transition). Empty
/// model_noise means a perfect model (strong-constraint use only).
struct NonlinearSSM {
  int horizon = 0;
  double dt = 0.01;
  int substeps = 1;
  Lorenz63Params params;
  Vector init_mean;                   // x_b
  Matrix init_cov;                    // B
  std::vector<Matrix> model_noise;    // Q_t (may be empty: perfect model)
  std::vector<Matrix> obs_operators;  // H_t, t = 0..T
  std::vector<Matrix> obs_noise;      // R_t, t = 0..T

  int state_dim() const { return 3; }
  void validate() const;

  Vector step(const Vector& x) const;           // one window transition
  Matrix step_jacobian(const Vector& x) const;  // exact Jacobian of step()
};

/// Realized observation sequence y_0..y_T with the seed that produced it.
struct ObservationRecord {
  std::vector<Vector> observations;
  RandomSeed provenance;
};

/// One RK4 step of the Lorenz-63 vector field. dt must be positive.
Eigen::Vector3d lorenz63_step(const Eigen::Vector3d& x, double dt,
                              const Lorenz63Params& p = {});

/// Exact Jacobian of lorenz63_step, by forward linearization of the stages.
Eigen::Matrix3d lorenz63_step_jacobian(const Eigen::Vector3d& x, double dt,
                                       const Lorenz63Params& p = {});

/// Draws (truth trajectory, observations) from the prior path and emission
/// laws. Trajectory rows are states at t = 0..T.
std::pair<Matrix, ObservationRecord> simulate(const LinearGaussianSSM& model,
                                              RandomSeed seed);
std::pair<Matrix, ObservationRecord> simulate(const NonlinearSSM& model,
                                              RandomSeed seed);

/// Discrete chains carry emissions only as realized log-likelihoods, so
/// simulation returns the prior state path.
std::vector<int> simulate(const DiscreteHMM& model, RandomSeed seed);

double emission_loglik(const DiscreteHMM& model, int t, int state);
double emission_loglik(const LinearGaussianSSM& model, const ObservationRecord& obs,
                       int t, const Vector& state);
double emission_loglik(const NonlinearSSM& model, const ObservationRecord& obs,
                       int t, const Vector& state);

}  // namespace varda
