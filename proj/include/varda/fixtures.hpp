#pragma once

#include "varda/kl_control.hpp"

namespace varda::fixtures {

/// Well-conditioned random SPD matrix.
Matrix random_pd(int n, Rng& rng, double scale = 1.0);

/// Two-state single-step chain: uniform forecast, likelihoods (0.8, 0.2).
DiscreteHMM one_step_hmm();

/// Random chain with strictly positive kernels; optionally injects one zero
/// and one e^{-10} likelihood atom for the truncation tests.
DiscreteHMM random_hmm(int num_states, int horizon, RandomSeed seed,
                       bool extreme_atoms = false);

/// S = 3, T = 2 chain with a zero atom and an e^{-10} atom; all finite paths
/// enter the truncation sets by level 12.
DiscreteHMM truncation_hmm();

LinearGaussianSSM random_lgssm(int state_dim, int obs_dim, int horizon, RandomSeed seed);

/// n = m = 1, T = 0, B = H = R = 1, background 0.
LinearGaussianSSM scalar_lgssm();

/// Fully observed Lorenz-63 assimilation window (strong-constraint use).
NonlinearSSM lorenz_window(int horizon = 20);

FiniteMDP random_mdp(int num_states, int num_actions, int horizon, RandomSeed seed);

/// MDP with deterministic transitions (Jensen equality case).
FiniteMDP deterministic_mdp(int num_states, int horizon, RandomSeed seed);

/// Random candidate law supported where the forecast has mass and the
/// log-likelihood is finite.
DiscreteDistribution random_admissible(const DiscreteDistribution& forecast,
                                       const Vector& loglik, Rng& rng);

/// Random path law absolutely continuous w.r.t. the prior with finite total
/// log-likelihood on its support.
PathLaw random_path_law(const DiscreteHMM& model, Rng& rng);

/// Random state-action law absolutely continuous w.r.t. the passive law.
SAPathLaw random_sa_law(const FiniteMDP& mdp, Rng& rng);

/// Random policy absolutely continuous w.r.t. the passive kernels.
Policy random_policy(const FiniteMDP& mdp, RandomSeed seed);

/// Multiplicative perturbation of a policy, renormalized, support preserved.
Policy perturbed_policy(const FiniteMDP& mdp, const Policy& base, Rng& rng,
                        double scale = 0.3);

/// Asymmetric two-mode density on a wide grid: a broad heavy mode at -2 and
/// a tall narrow mode (the MAP) at +2.
GridDensity map_limit_grid();

/// Symmetric sharp two-mode mixture for the reverse-KL projection test.
GridDensity bimodal_grid();

/// One-step grid problem with a skewed (Gumbel) likelihood, an RMSE-style
/// penalty, and the matching Gaussian/Mahalanobis pair.
struct RewardGridFixture {
  Vector points;
  DiscreteDistribution forecast;
  Vector skewed_loglik;
  Vector rmse_penalty;
  Vector gaussian_loglik;
  Vector mahalanobis_penalty;
};
RewardGridFixture reward_grid();

}  // namespace varda::fixtures
