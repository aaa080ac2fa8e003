#pragma once

#include <utility>
#include <vector>

#include "varda/variational.hpp"

namespace varda {

/// Finite-horizon state-action model with passive action kernels mu_t(a|x),
/// controlled transitions P_t(x'|x,a), and stage costs on states.
struct FiniteMDP {
  int horizon = 0;
  int num_states = 0;
  int num_actions = 0;
  Vector initial;                               // rho_0, length S
  std::vector<Matrix> passive;                  // [t]: S x A, mu_t(a|x)
  std::vector<std::vector<Matrix>> transitions; // [t][x]: A x S, P_t(x'|x,a)
  std::vector<Vector> stage_costs;              // [t]: length S, t = 0..T

  void validate() const;
};

/// Markov policy; rows must vanish wherever the passive kernel vanishes.
struct Policy {
  std::vector<Matrix> action_probs;  // [t]: S x A
};

struct ValueFunction {
  std::vector<Vector> values;  // [t]: length S, t = 0..T
};

/// Mixed-radix index over state-action paths (x_0, a_0, .., a_{T-1}, x_T).
struct SAPathSpace {
  int num_states = 0;
  int num_actions = 0;
  int horizon = 0;

  std::size_t size() const;
  int state(std::size_t path, int t) const;   // t = 0..T
  int action(std::size_t path, int t) const;  // t = 0..T-1
};

struct SAPathLaw {
  SAPathSpace space;
  Vector probs;
};

double sa_path_kl(const SAPathLaw& q, const SAPathLaw& p);

/// Backward recursion V_t(x) = l_t(x) - log sum_a mu_t(a|x) exp(-G_t(x,a))
/// with G_t(x,a) = sum_x' P_t(x'|x,a) V_{t+1}(x'), log-sum-exp stabilized,
/// and the optimal policy pi*_t(a|x) proportional to mu_t(a|x) exp(-G_t(x,a)).
std::pair<ValueFunction, Policy> soft_bellman(const FiniteMDP& mdp);

struct InducedLaw {
  SAPathLaw state_action;
  PathLaw state_marginal;
};

/// Explicit policy-induced state-action path law plus its state marginal.
/// Guarded at 1e6 paths.
InducedLaw induced_path_law(const FiniteMDP& mdp, const Policy& policy);

/// E_q[sum_t l_t(X_t)] + E_q[sum_t log(pi/mu)] by exact path summation.
double policy_objective_exact(const FiniteMDP& mdp, const Policy& policy);

/// Checks KL(q_pi || p_0) = sum_t E[KL(pi_t(.|X_t) || mu_t(.|X_t))].
IdentityReport kl_decomposition_check(const FiniteMDP& mdp, const Policy& policy,
                                      double tolerance = 1e-12);

/// Gibbs law q* proportional to p_0 exp(-sum_t l_t(x_t)) over state-action
/// paths, with exact log normalizer.
std::pair<SAPathLaw, double> state_action_gibbs_law(const FiniteMDP& mdp);

/// Checks J_l(q) = KL(q || q*) - log Z_l for an admissible candidate q.
IdentityReport check_gibbs_identity(const FiniteMDP& mdp, const SAPathLaw& q,
                                    double tolerance = 1e-12);

/// Gibbs law at inverse temperature beta/alpha.
std::pair<SAPathLaw, double> tempered_gibbs(const FiniteMDP& mdp, double alpha,
                                            double beta);

/// Companion MDP whose actions pick the next chain state, with a root state
/// so the action at time 0 also picks x_0. Every Markov chain law absolutely
/// continuous w.r.t. the prior chain is policy-reachable, which is the
/// representability hypothesis made constructive.
FiniteMDP representable_companion_mdp(const DiscreteHMM& hmm);

struct PosteriorRecoveryReport {
  IdentityReport representable;       // residual = max-abs gap to the posterior
  double representable_kl_gap = 0.0;  // KL(q_pi*^X || posterior)
  double non_representable_kl_gap = 0.0;
};

/// Runs the representable construction against the enumerated smoothing
/// posterior, and a single-action stochastic instance whose reachable family
/// cannot contain it.
PosteriorRecoveryReport posterior_recovery_check(const DiscreteHMM& hmm);

struct DesirabilityReport {
  ValueFunction correct;
  ValueFunction swapped;  // exp(-E[V]) replaced by E[exp(-V)]
  double max_gap = 0.0;   // max over (t, x) of correct - swapped (>= 0 by Jensen)
};

/// Compares the action-KL recursion with the (generally wrong) desirability
/// style swap; identical under deterministic transitions.
DesirabilityReport desirability_mismatch_check(const FiniteMDP& mdp);

/// One-step generic-penalty Gibbs law q proportional to
/// forecast * exp(-lambda r), with log normalizer.
std::pair<DiscreteDistribution, double> reward_gibbs_law(
    const DiscreteDistribution& forecast, const Vector& penalty, double lambda);

/// Verifies sup_q R_t(q) = log Z_t with maximizer p^a: evaluates the reward
/// at p^a and at seeded random admissible candidates.
IdentityReport rl_one_step_check(const DiscreteDistribution& forecast,
                                 const Vector& loglik, RandomSeed seed,
                                 int num_candidates = 200);

}  // namespace varda
