#include <doctest.h>

#include <cmath>

#include "varda/fixtures.hpp"
#include "varda/json_io.hpp"
#include "varda/kl_control.hpp"

using namespace varda;

namespace {

// Single-step two-state MDP: uniform initial, costs (0, ln 3).
FiniteMDP gibbs_example() {
  FiniteMDP mdp;
  mdp.horizon = 0;
  mdp.num_states = 2;
  mdp.num_actions = 1;
  mdp.initial = Vector::Constant(2, 0.5);
  Vector c(2);
  c << 0.0, std::log(3.0);
  mdp.stage_costs = {c};
  return mdp;
}

}  // namespace

TEST_CASE("soft_bellman degenerate cases") {
  // Zero costs: V = 0 and the optimal policy is the passive kernel.
  FiniteMDP mdp = fixtures::random_mdp(3, 2, 3, {90, 0});
  for (auto& c : mdp.stage_costs) c.setZero();
  const auto [vf, policy] = soft_bellman(mdp);
  for (const auto& v : vf.values) CHECK(v.cwiseAbs().maxCoeff() < 1e-13);
  for (int t = 0; t < mdp.horizon; ++t) {
    CHECK((policy.action_probs[t] - mdp.passive[t]).cwiseAbs().maxCoeff() < 1e-13);
  }

  // A single action reduces to the plain expectation recursion.
  FiniteMDP one = fixtures::random_mdp(3, 1, 2, {91, 0});
  const auto [vf1, pol1] = soft_bellman(one);
  Vector expected = one.stage_costs[2];
  for (int t = 1; t >= 0; --t) {
    Vector next(3);
    for (int x = 0; x < 3; ++x) next[x] = one.stage_costs[t][x] + one.transitions[t][x].row(0).dot(expected);
    expected = next;
    CHECK((vf1.values[t] - expected).cwiseAbs().maxCoeff() < 1e-12);
  }

  // All passive mass removed at one state names the failing (t, x).
  FiniteMDP broken = fixtures::random_mdp(2, 2, 1, {92, 0});
  broken.passive[0].row(1).setZero();
  try {
    soft_bellman(broken);
    FAIL("expected error");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("t = 0") != std::string::npos);
    CHECK(msg.find("x = 1") != std::string::npos);
  }
}

TEST_CASE("bellman value equals the exact policy objective and is optimal") {
  const FiniteMDP mdp = fixtures::random_mdp(3, 2, 2, {93, 0});
  const auto [vf, pistar] = soft_bellman(mdp);
  const double value = mdp.initial.dot(vf.values[0]);
  const double objective = policy_objective_exact(mdp, pistar);
  CHECK(value == doctest::Approx(objective).epsilon(1e-13));

  Rng rng({94, 0});
  for (int k = 0; k < 50; ++k) {
    const Policy alt = fixtures::perturbed_policy(mdp, pistar, rng);
    CHECK(policy_objective_exact(mdp, alt) >= objective - 1e-12);
  }

  // Passive policy: objective equals the passive expected cost.
  Policy passive;
  passive.action_probs = mdp.passive;
  const InducedLaw passive_law = induced_path_law(mdp, passive);
  double expected_cost = 0.0;
  for (Eigen::Index i = 0; i < passive_law.state_action.probs.size(); ++i) {
    double c = 0.0;
    for (int t = 0; t <= mdp.horizon; ++t) {
      c += mdp.stage_costs[t][passive_law.state_action.space.state(i, t)];
    }
    expected_cost += passive_law.state_action.probs[i] * c;
  }
  CHECK(policy_objective_exact(mdp, passive) == doctest::Approx(expected_cost).epsilon(1e-12));

  // A policy off the passive support is rejected.
  FiniteMDP gapped = mdp;
  gapped.passive[0](0, 1) = 0.0;
  gapped.passive[0].row(0) /= gapped.passive[0].row(0).sum();
  Policy bad;
  bad.action_probs = mdp.passive;  // still puts mass on the zeroed action
  CHECK_THROWS_AS(policy_objective_exact(gapped, bad), std::invalid_argument);
}

TEST_CASE("induced law degenerate cases") {
  // T = 0: just the initial law.
  const FiniteMDP mdp0 = gibbs_example();
  Policy empty;
  const InducedLaw law0 = induced_path_law(mdp0, empty);
  CHECK((law0.state_marginal.probs - mdp0.initial).cwiseAbs().maxCoeff() < 1e-15);

  // Deterministic policy and transitions put unit mass on one path.
  FiniteMDP det = fixtures::deterministic_mdp(3, 2, {95, 0});
  det.initial.setZero();
  det.initial[1] = 1.0;
  Policy pol;
  for (int t = 0; t < det.horizon; ++t) {
    Matrix p = Matrix::Zero(3, 3);
    p.col(2).setOnes();  // always choose action 2 -> state 2
    pol.action_probs.push_back(p);
  }
  const InducedLaw law = induced_path_law(det, pol);
  int support = 0;
  for (Eigen::Index i = 0; i < law.state_action.probs.size(); ++i) {
    if (law.state_action.probs[i] > 0.0) ++support;
  }
  CHECK(support == 1);
}

TEST_CASE("path-space KL decomposition") {
  const FiniteMDP mdp = fixtures::random_mdp(3, 2, 3, {96, 0});
  // pi = mu: both sides vanish.
  Policy passive;
  passive.action_probs = mdp.passive;
  const IdentityReport zero = kl_decomposition_check(mdp, passive);
  CHECK(std::abs(zero.lhs) < 1e-14);
  CHECK(std::abs(zero.rhs) < 1e-14);

  Rng rng({97, 0});
  for (int k = 0; k < 20; ++k) {
    const Policy pol = fixtures::random_policy(mdp, {98, static_cast<std::uint64_t>(k)});
    const IdentityReport r = kl_decomposition_check(mdp, pol);
    CHECK(std::abs(r.residual) < 1e-12);
  }

  // Deterministic policy against uniform passive kernels: the path KL is
  // T log A.
  FiniteMDP uni = fixtures::random_mdp(2, 2, 3, {99, 0});
  for (auto& mu : uni.passive) mu = Matrix::Constant(2, 2, 0.5);
  Policy det;
  for (int t = 0; t < 3; ++t) {
    Matrix p = Matrix::Zero(2, 2);
    p.col(0).setOnes();
    det.action_probs.push_back(p);
  }
  const IdentityReport r = kl_decomposition_check(uni, det);
  CHECK(r.lhs == doctest::Approx(3.0 * std::log(2.0)).epsilon(1e-13));
}

TEST_CASE("state-action Gibbs law hand values and identity") {
  const auto [law, log_z] = state_action_gibbs_law(gibbs_example());
  CHECK(law.probs[0] == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(law.probs[1] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(-log_z == doctest::Approx(std::log(1.5)).epsilon(1e-14));

  // Zero costs: the Gibbs law is the passive law with log Z = 0.
  FiniteMDP flat = fixtures::random_mdp(3, 2, 2, {100, 0});
  for (auto& c : flat.stage_costs) c.setZero();
  Policy passive;
  passive.action_probs = flat.passive;
  const auto [flat_law, flat_z] = state_action_gibbs_law(flat);
  CHECK(std::abs(flat_z) < 1e-13);
  CHECK((flat_law.probs - induced_path_law(flat, passive).state_action.probs)
            .cwiseAbs()
            .maxCoeff() < 1e-13);

  // Gibbs identity for random candidates; the Gibbs law attains -log Z.
  const FiniteMDP mdp = fixtures::random_mdp(3, 2, 2, {101, 0});
  Rng rng({102, 0});
  for (int k = 0; k < 30; ++k) {
    const IdentityReport r = check_gibbs_identity(mdp, fixtures::random_sa_law(mdp, rng));
    CHECK(std::abs(r.residual) < 1e-12);
  }
  const auto [gibbs, lz] = state_action_gibbs_law(mdp);
  const IdentityReport at_opt = check_gibbs_identity(mdp, gibbs);
  CHECK(at_opt.lhs == doctest::Approx(-lz).epsilon(1e-12));
  CHECK(at_opt.kl_to_posterior < 1e-13);
}

TEST_CASE("tempered Gibbs laws") {
  const FiniteMDP mdp = gibbs_example();
  // alpha = beta matches the untempered law.
  const auto [unit, z_unit] = tempered_gibbs(mdp, 2.0, 2.0);
  const auto [plain, z_plain] = state_action_gibbs_law(mdp);
  CHECK((unit.probs - plain.probs).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(z_unit == doctest::Approx(z_plain).epsilon(1e-14));

  // beta/alpha = 2: exp(-2 ln 3) = 1/9 gives (9/10, 1/10).
  const auto [hot, z_hot] = tempered_gibbs(mdp, 1.0, 2.0);
  CHECK(hot.probs[0] == doctest::Approx(0.9).epsilon(1e-14));
  CHECK(hot.probs[1] == doctest::Approx(0.1).epsilon(1e-14));

  // beta/alpha -> 0 recovers the passive law.
  const auto [cold, z_cold] = tempered_gibbs(mdp, 1.0, 1e-8);
  CHECK((cold.probs - mdp.initial).cwiseAbs().maxCoeff() < 1e-6);

  CHECK_THROWS_AS(tempered_gibbs(mdp, 0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(tempered_gibbs(mdp, 1.0, -1.0), std::invalid_argument);
}

TEST_CASE("posterior recovery through the representable companion") {
  const DiscreteHMM hmm = fixtures::random_hmm(3, 3, {103, 0});
  const PosteriorRecoveryReport rep = posterior_recovery_check(hmm);
  CHECK(std::abs(rep.representable.lhs) < 1e-12);
  CHECK(std::abs(rep.representable_kl_gap) < 1e-12);
  CHECK(rep.non_representable_kl_gap > 0.0);

  // Uniform likelihoods: the recovered law is the prior chain itself.
  DiscreteHMM flat = hmm;
  for (auto& ll : flat.log_likelihoods) ll.setZero();
  const FiniteMDP companion = representable_companion_mdp(flat);
  const auto [vf, policy] = soft_bellman(companion);
  const PathLaw prior = hmm_prior_path_law(flat);
  for (std::size_t i = 0; i < prior.space.size(); ++i) {
    double w = policy.action_probs[0](3, prior.space.state(i, 0));  // root row
    for (int t = 1; t <= flat.horizon(); ++t) {
      w *= policy.action_probs[t](prior.space.state(i, t - 1), prior.space.state(i, t));
    }
    CHECK(w == doctest::Approx(prior.probs[static_cast<Eigen::Index>(i)]).epsilon(1e-12));
  }

  // Zero-likelihood atoms cannot be encoded as finite costs.
  const DiscreteHMM atom = fixtures::random_hmm(3, 2, {104, 0}, true);
  CHECK_THROWS_AS(representable_companion_mdp(atom), std::invalid_argument);
}

TEST_CASE("desirability recursion caveat") {
  // Deterministic transitions: the swap is harmless.
  const FiniteMDP det = fixtures::deterministic_mdp(3, 3, {105, 0});
  CHECK(desirability_mismatch_check(det).max_gap < 1e-12);

  // Constant stage costs make the downstream value constant: also harmless.
  FiniteMDP flat = fixtures::random_mdp(3, 2, 3, {106, 0});
  for (auto& c : flat.stage_costs) c.setConstant(0.4);
  CHECK(desirability_mismatch_check(flat).max_gap < 1e-12);

  // Stochastic transitions with spread values: the swapped recursion is
  // strictly optimistic somewhere.
  const FiniteMDP stoch = fixtures::random_mdp(2, 2, 2, {107, 0});
  const DesirabilityReport rep = desirability_mismatch_check(stoch);
  CHECK(rep.max_gap > 1e-6);
  // And the swapped values never exceed the correct ones.
  for (int t = 0; t <= stoch.horizon; ++t) {
    CHECK((rep.correct.values[t] - rep.swapped.values[t]).minCoeff() > -1e-12);
  }
}

TEST_CASE("reward Gibbs law cases") {
  const fixtures::RewardGridFixture grid = fixtures::reward_grid();

  // Negative log-likelihood penalty at lambda = 1 is exact Bayes.
  const auto [analysis, log_z] = discrete_analysis(grid.forecast, grid.skewed_loglik);
  const auto [recovered, lz] =
      reward_gibbs_law(grid.forecast, Vector(-grid.skewed_loglik), 1.0);
  CHECK(discrete_kl(recovered, analysis) < 1e-13);
  CHECK(lz == doctest::Approx(log_z).epsilon(1e-13));

  // RMSE penalty lands on a different Gibbs law.
  const auto [rmse, lz2] = reward_gibbs_law(grid.forecast, grid.rmse_penalty, 1.0);
  CHECK(discrete_kl(rmse, analysis) > 1e-4);

  // Mahalanobis penalty with the matching Gaussian likelihood is exact.
  const auto [gauss_analysis, lzg] = discrete_analysis(grid.forecast, grid.gaussian_loglik);
  const auto [mahal, lz3] = reward_gibbs_law(grid.forecast, grid.mahalanobis_penalty, 1.0);
  CHECK(discrete_kl(mahal, gauss_analysis) < 1e-10);

  CHECK_THROWS_AS(reward_gibbs_law(grid.forecast, grid.rmse_penalty, 0.0),
                  std::invalid_argument);
}

TEST_CASE("one-step RL reward check") {
  const DiscreteHMM hmm = fixtures::one_step_hmm();
  const DiscreteDistribution forecast(hmm.initial);
  const IdentityReport r = rl_one_step_check(forecast, hmm.log_likelihoods[0], {108, 0});
  CHECK(r.pass);
  CHECK(r.lhs == doctest::Approx(std::log(0.5)).epsilon(1e-13));  // sup = log Z = -ln 2

  // Flat likelihood: the reward is maximized by the forecast itself.
  const Vector flat = Vector::Constant(2, -0.2);
  const double at_forecast = -eval_Jt_discrete(forecast, forecast, flat);
  const auto [a2, lz2] = discrete_analysis(forecast, flat);
  CHECK(at_forecast == doctest::Approx(lz2).epsilon(1e-14));

  // Restricted exponential-tilt family: the reward argmax coincides with the
  // KL-to-posterior argmin over the same family.
  Vector base(4), ll(4), score(4);
  base << 0.4, 0.3, 0.2, 0.1;
  ll << -0.2, -1.0, -0.4, -2.0;
  score << 1.0, -0.5, 0.25, -1.5;
  const DiscreteDistribution f4(base);
  const auto [post, lzp] = discrete_analysis(f4, ll);
  double best_reward = -1e300, best_kl = 1e300;
  double argmax_reward = 0.0, argmin_kl = 0.0;
  for (double theta = -3.0; theta <= 3.0; theta += 0.01) {
    Vector w = (base.array().log() + theta * score.array()).exp();
    const DiscreteDistribution q(Vector(w / w.sum()));
    const double reward = -eval_Jt_discrete(q, f4, ll);
    const double kl = discrete_kl(q, post);
    if (reward > best_reward) {
      best_reward = reward;
      argmax_reward = theta;
    }
    if (kl < best_kl) {
      best_kl = kl;
      argmin_kl = theta;
    }
  }
  CHECK(argmax_reward == doctest::Approx(argmin_kl).epsilon(1e-12));
}

TEST_CASE("FiniteMDP validation and JSON round trip") {
  FiniteMDP mdp = fixtures::random_mdp(3, 2, 2, {109, 0});
  const FiniteMDP back = mdp_from_json(mdp_to_json(mdp));
  CHECK(back.horizon == mdp.horizon);
  CHECK((back.initial - mdp.initial).norm() == 0.0);
  CHECK((back.passive[1] - mdp.passive[1]).norm() == 0.0);
  CHECK((back.transitions[1][2] - mdp.transitions[1][2]).norm() == 0.0);
  CHECK((back.stage_costs[2] - mdp.stage_costs[2]).norm() == 0.0);

  mdp.passive[0](0, 0) += 0.2;
  CHECK_THROWS_AS(mdp.validate(), std::invalid_argument);
}
