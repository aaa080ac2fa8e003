#include "varda/kl_control.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace varda {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void require_rows_stochastic(const Matrix& m, const std::string& what) {
  require((m.array() >= 0.0).all(), what + ": negative entry");
  for (int i = 0; i < m.rows(); ++i) {
    require(std::abs(m.row(i).sum() - 1.0) <= 1e-12, what + ": row does not sum to 1");
  }
}

// State-time marginals of the policy-induced chain, by forward recursion.
std::vector<Vector> state_marginals(const FiniteMDP& mdp, const Policy& policy) {
  std::vector<Vector> marg(mdp.horizon + 1);
  marg[0] = mdp.initial;
  for (int t = 0; t < mdp.horizon; ++t) {
    Vector next = Vector::Zero(mdp.num_states);
    for (int x = 0; x < mdp.num_states; ++x) {
      if (marg[t][x] == 0.0) continue;
      for (int a = 0; a < mdp.num_actions; ++a) {
        const double pa = policy.action_probs[t](x, a);
        if (pa == 0.0) continue;
        next += marg[t][x] * pa * mdp.transitions[t][x].row(a).transpose();
      }
    }
    marg[t + 1] = next;
  }
  return marg;
}

}  // namespace

void FiniteMDP::validate() const {
  require(num_states > 0 && num_actions > 0 && horizon >= 0, "mdp: empty dimensions");
  require(initial.size() == num_states, "mdp: initial length");
  require((initial.array() >= 0.0).all(), "mdp: negative initial mass");
  require(std::abs(initial.sum() - 1.0) <= 1e-12, "mdp: initial does not sum to 1");
  require(static_cast<int>(passive.size()) == horizon, "mdp: need T passive kernels");
  require(static_cast<int>(transitions.size()) == horizon, "mdp: need T transition arrays");
  require(static_cast<int>(stage_costs.size()) == horizon + 1, "mdp: need T+1 stage costs");
  for (int t = 0; t < horizon; ++t) {
    require(passive[t].rows() == num_states && passive[t].cols() == num_actions,
            "mdp: passive kernel shape");
    require_rows_stochastic(passive[t], "mdp passive kernel");
    require(static_cast<int>(transitions[t].size()) == num_states, "mdp: transition array size");
    for (int x = 0; x < num_states; ++x) {
      require(transitions[t][x].rows() == num_actions && transitions[t][x].cols() == num_states,
              "mdp: transition shape");
      require_rows_stochastic(transitions[t][x], "mdp transition");
    }
  }
  for (const auto& c : stage_costs) {
    require(c.size() == num_states, "mdp: stage cost length");
    require(c.allFinite(), "mdp: stage costs must be finite");
  }
}

std::size_t SAPathSpace::size() const {
  std::size_t n = static_cast<std::size_t>(num_states);
  for (int t = 0; t < horizon; ++t) {
    n *= static_cast<std::size_t>(num_states) * static_cast<std::size_t>(num_actions);
  }
  return n;
}

int SAPathSpace::state(std::size_t path, int t) const {
  const auto block = static_cast<std::size_t>(num_states) * static_cast<std::size_t>(num_actions);
  for (int k = 0; k < t; ++k) path /= block;
  return static_cast<int>(path % static_cast<std::size_t>(num_states));
}

int SAPathSpace::action(std::size_t path, int t) const {
  const auto block = static_cast<std::size_t>(num_states) * static_cast<std::size_t>(num_actions);
  for (int k = 0; k < t; ++k) path /= block;
  return static_cast<int>((path / static_cast<std::size_t>(num_states)) %
                          static_cast<std::size_t>(num_actions));
}

double sa_path_kl(const SAPathLaw& q, const SAPathLaw& p) {
  require(q.probs.size() == p.probs.size(), "sa_path_kl: size mismatch");
  StableSum acc;
  for (Eigen::Index i = 0; i < q.probs.size(); ++i) {
    if (q.probs[i] == 0.0) continue;
    require(p.probs[i] > 0.0, "sa_path_kl: q is not absolutely continuous w.r.t. p");
    acc.add(q.probs[i] * std::log(q.probs[i] / p.probs[i]));
  }
  return acc.value();
}

std::pair<ValueFunction, Policy> soft_bellman(const FiniteMDP& mdp) {
  const int T = mdp.horizon;
  const int S = mdp.num_states;
  const int A = mdp.num_actions;
  ValueFunction vf;
  vf.values.assign(T + 1, Vector::Zero(S));
  Policy policy;
  policy.action_probs.assign(T, Matrix::Zero(S, A));

  vf.values[T] = mdp.stage_costs[T];
  for (int t = T - 1; t >= 0; --t) {
    for (int x = 0; x < S; ++x) {
      Vector logw(A);
      for (int a = 0; a < A; ++a) {
        const double mu = mdp.passive[t](x, a);
        const double G = mdp.transitions[t][x].row(a).dot(vf.values[t + 1]);
        logw[a] = mu > 0.0 ? std::log(mu) - G : kNegInf;
      }
      const double lse = log_sum_exp(logw);
      if (!std::isfinite(lse)) {
        throw std::runtime_error("soft_bellman: zero action normalizer at (t = " +
                                 std::to_string(t) + ", x = " + std::to_string(x) + ")");
      }
      vf.values[t][x] = mdp.stage_costs[t][x] - lse;
      Vector row = (logw.array() - lse).exp();
      for (int a = 0; a < A; ++a) {
        if (mdp.passive[t](x, a) == 0.0) row[a] = 0.0;
      }
      policy.action_probs[t].row(x) = (row / row.sum()).transpose();
    }
  }
  return {vf, policy};
}

InducedLaw induced_path_law(const FiniteMDP& mdp, const Policy& policy) {
  require(static_cast<int>(policy.action_probs.size()) == mdp.horizon,
          "induced_path_law: policy horizon mismatch");
  SAPathSpace space{mdp.num_states, mdp.num_actions, mdp.horizon};
  require(space.size() <= 1000000, "induced_path_law: path space exceeds guard");

  SAPathLaw law{space, Vector(static_cast<Eigen::Index>(space.size()))};
  PathSpace xspace{mdp.num_states, mdp.horizon};
  PathLaw marginal{xspace, Vector::Zero(static_cast<Eigen::Index>(xspace.size()))};

  for (std::size_t i = 0; i < space.size(); ++i) {
    double w = mdp.initial[space.state(i, 0)];
    std::size_t xindex = 0;
    std::size_t radix = 1;
    for (int t = 0; t <= mdp.horizon && w > 0.0; ++t) {
      const int x = space.state(i, t);
      xindex += static_cast<std::size_t>(x) * radix;
      radix *= static_cast<std::size_t>(mdp.num_states);
      if (t < mdp.horizon) {
        const int a = space.action(i, t);
        w *= policy.action_probs[t](x, a) * mdp.transitions[t][x](a, space.state(i, t + 1));
      }
    }
    law.probs[static_cast<Eigen::Index>(i)] = w;
    if (w > 0.0) marginal.probs[static_cast<Eigen::Index>(xindex)] += w;
  }
  return {law, marginal};
}

double policy_objective_exact(const FiniteMDP& mdp, const Policy& policy) {
  for (int t = 0; t < mdp.horizon; ++t) {
    for (int x = 0; x < mdp.num_states; ++x) {
      for (int a = 0; a < mdp.num_actions; ++a) {
        require(!(policy.action_probs[t](x, a) > 0.0 && mdp.passive[t](x, a) == 0.0),
                "policy_objective_exact: policy not absolutely continuous w.r.t. passive kernel");
      }
    }
  }
  const InducedLaw q = induced_path_law(mdp, policy);
  StableSum acc;
  for (Eigen::Index i = 0; i < q.state_action.probs.size(); ++i) {
    const double w = q.state_action.probs[i];
    if (w == 0.0) continue;
    double term = 0.0;
    for (int t = 0; t <= mdp.horizon; ++t) {
      term += mdp.stage_costs[t][q.state_action.space.state(i, t)];
    }
    for (int t = 0; t < mdp.horizon; ++t) {
      const int x = q.state_action.space.state(i, t);
      const int a = q.state_action.space.action(i, t);
      term += std::log(policy.action_probs[t](x, a) / mdp.passive[t](x, a));
    }
    acc.add(w * term);
  }
  return acc.value();
}

IdentityReport kl_decomposition_check(const FiniteMDP& mdp, const Policy& policy,
                                      double tolerance) {
  Policy passive_policy;
  passive_policy.action_probs = mdp.passive;
  const SAPathLaw q = induced_path_law(mdp, policy).state_action;
  const SAPathLaw p0 = induced_path_law(mdp, passive_policy).state_action;
  const double lhs = sa_path_kl(q, p0);

  const std::vector<Vector> marg = state_marginals(mdp, policy);
  StableSum rhs;
  for (int t = 0; t < mdp.horizon; ++t) {
    for (int x = 0; x < mdp.num_states; ++x) {
      if (marg[t][x] == 0.0) continue;
      double kl = 0.0;
      for (int a = 0; a < mdp.num_actions; ++a) {
        const double pa = policy.action_probs[t](x, a);
        if (pa == 0.0) continue;
        kl += pa * std::log(pa / mdp.passive[t](x, a));
      }
      rhs.add(marg[t][x] * kl);
    }
  }
  return IdentityReport::make(lhs, rhs.value(), 0.0, lhs, tolerance);
}

std::pair<SAPathLaw, double> state_action_gibbs_law(const FiniteMDP& mdp) {
  Policy passive_policy;
  passive_policy.action_probs = mdp.passive;
  SAPathLaw law = induced_path_law(mdp, passive_policy).state_action;
  StableSum z;
  for (Eigen::Index i = 0; i < law.probs.size(); ++i) {
    double cost = 0.0;
    for (int t = 0; t <= mdp.horizon; ++t) {
      cost += mdp.stage_costs[t][law.space.state(i, t)];
    }
    law.probs[i] *= std::exp(-cost);
    z.add(law.probs[i]);
  }
  const double Z = z.value();
  require(Z > 0.0, "state_action_gibbs_law: zero normalizer");
  law.probs /= Z;
  return {law, std::log(Z)};
}

IdentityReport check_gibbs_identity(const FiniteMDP& mdp, const SAPathLaw& q,
                                    double tolerance) {
  Policy passive_policy;
  passive_policy.action_probs = mdp.passive;
  const SAPathLaw p0 = induced_path_law(mdp, passive_policy).state_action;
  const auto [gibbs, log_z] = state_action_gibbs_law(mdp);

  StableSum cost_term;
  for (Eigen::Index i = 0; i < q.probs.size(); ++i) {
    if (q.probs[i] == 0.0) continue;
    double cost = 0.0;
    for (int t = 0; t <= mdp.horizon; ++t) {
      cost += mdp.stage_costs[t][q.space.state(i, t)];
    }
    cost_term.add(q.probs[i] * cost);
  }
  const double lhs = cost_term.value() + sa_path_kl(q, p0);
  const double kl = sa_path_kl(q, gibbs);
  return IdentityReport::make(lhs, kl - log_z, log_z, kl, tolerance);
}

std::pair<SAPathLaw, double> tempered_gibbs(const FiniteMDP& mdp, double alpha,
                                            double beta) {
  require(alpha > 0.0 && beta > 0.0, "tempered_gibbs: temperatures must be positive");
  FiniteMDP scaled = mdp;
  for (auto& c : scaled.stage_costs) c *= beta / alpha;
  return state_action_gibbs_law(scaled);
}

FiniteMDP representable_companion_mdp(const DiscreteHMM& hmm) {
  hmm.validate();
  for (const auto& ll : hmm.log_likelihoods) {
    require(ll.allFinite(),
            "representable_companion_mdp: zero-likelihood atoms are not representable as finite costs");
  }
  const int S = hmm.num_states();
  const int T = hmm.horizon();
  const int root = S;  // extra start state; the action at time 0 picks x_0

  FiniteMDP mdp;
  mdp.horizon = T + 1;
  mdp.num_states = S + 1;
  mdp.num_actions = S;
  mdp.initial = Vector::Zero(S + 1);
  mdp.initial[root] = 1.0;

  mdp.passive.assign(T + 1, Matrix::Constant(S + 1, S, 1.0 / S));
  mdp.passive[0].row(root) = hmm.initial.transpose();
  for (int t = 1; t <= T; ++t) {
    mdp.passive[t].topRows(S) = hmm.transitions[t - 1];
  }

  // Deterministic: action a lands in chain state a.
  std::vector<Matrix> det(S + 1, Matrix::Zero(S, S + 1));
  for (int x = 0; x <= S; ++x) {
    for (int a = 0; a < S; ++a) det[x](a, a) = 1.0;
  }
  mdp.transitions.assign(T + 1, det);

  mdp.stage_costs.assign(T + 2, Vector::Zero(S + 1));
  for (int t = 0; t <= T; ++t) {
    mdp.stage_costs[t + 1].head(S) = -hmm.log_likelihoods[t];
  }
  return mdp;
}

PosteriorRecoveryReport posterior_recovery_check(const DiscreteHMM& hmm) {
  const FiniteMDP companion = representable_companion_mdp(hmm);
  companion.validate();
  const auto [vf, policy] = soft_bellman(companion);

  // Chain law selected by the optimal policy: the action at companion time t
  // picks the chain state x_t.
  const int S = hmm.num_states();
  const int T = hmm.horizon();
  const int root = S;
  PathSpace space{S, T};
  PathLaw recovered{space, Vector(static_cast<Eigen::Index>(space.size()))};
  for (std::size_t i = 0; i < space.size(); ++i) {
    double w = policy.action_probs[0](root, space.state(i, 0));
    for (int t = 1; t <= T; ++t) {
      w *= policy.action_probs[t](space.state(i, t - 1), space.state(i, t));
    }
    recovered.probs[static_cast<Eigen::Index>(i)] = w;
  }

  const auto [posterior, log_z] = hmm_path_posterior_enumerate(hmm);
  PosteriorRecoveryReport report;
  const double max_abs_gap = (recovered.probs - posterior.probs).cwiseAbs().maxCoeff();
  report.representable = IdentityReport::make(max_abs_gap, 0.0, log_z, 0.0, 1e-12);
  report.representable_kl_gap = path_kl(recovered, posterior);

  // Non-representable companion: one action, stochastic kernels. The only
  // reachable law is the prior chain itself.
  FiniteMDP narrow;
  narrow.horizon = T;
  narrow.num_states = S;
  narrow.num_actions = 1;
  narrow.initial = hmm.initial;
  narrow.passive.assign(T, Matrix::Ones(S, 1));
  narrow.transitions.resize(T);
  for (int t = 0; t < T; ++t) {
    narrow.transitions[t].resize(S);
    for (int x = 0; x < S; ++x) {
      narrow.transitions[t][x] = hmm.transitions[t].row(x);
    }
  }
  narrow.stage_costs.resize(T + 1);
  for (int t = 0; t <= T; ++t) narrow.stage_costs[t] = -hmm.log_likelihoods[t];
  narrow.validate();

  const auto [nvf, npolicy] = soft_bellman(narrow);
  const PathLaw reachable = induced_path_law(narrow, npolicy).state_marginal;
  report.non_representable_kl_gap = path_kl(reachable, posterior);
  return report;
}

DesirabilityReport desirability_mismatch_check(const FiniteMDP& mdp) {
  const int T = mdp.horizon;
  const int S = mdp.num_states;
  const int A = mdp.num_actions;
  DesirabilityReport report;
  report.correct.values.assign(T + 1, Vector::Zero(S));
  report.swapped.values.assign(T + 1, Vector::Zero(S));
  report.correct.values[T] = mdp.stage_costs[T];
  report.swapped.values[T] = mdp.stage_costs[T];

  for (int t = T - 1; t >= 0; --t) {
    for (int x = 0; x < S; ++x) {
      double sum_correct = 0.0;
      double sum_swapped = 0.0;
      for (int a = 0; a < A; ++a) {
        const double mu = mdp.passive[t](x, a);
        if (mu == 0.0) continue;
        const double G = mdp.transitions[t][x].row(a).dot(report.correct.values[t + 1]);
        sum_correct += mu * std::exp(-G);
        double inner = 0.0;
        for (int xp = 0; xp < S; ++xp) {
          inner += mdp.transitions[t][x](a, xp) * std::exp(-report.swapped.values[t + 1][xp]);
        }
        sum_swapped += mu * inner;
      }
      report.correct.values[t][x] = mdp.stage_costs[t][x] - std::log(sum_correct);
      report.swapped.values[t][x] = mdp.stage_costs[t][x] - std::log(sum_swapped);
    }
  }

  double gap = 0.0;
  for (int t = 0; t <= T; ++t) {
    gap = std::max(gap, (report.correct.values[t] - report.swapped.values[t]).maxCoeff());
  }
  report.max_gap = gap;
  return report;
}

std::pair<DiscreteDistribution, double> reward_gibbs_law(
    const DiscreteDistribution& forecast, const Vector& penalty, double lambda) {
  require(penalty.size() == forecast.size(), "reward_gibbs_law: size mismatch");
  require(penalty.allFinite(), "reward_gibbs_law: penalties must be finite");
  require(lambda > 0.0, "reward_gibbs_law: lambda must be positive");
  return discrete_analysis(forecast, Vector(-lambda * penalty));
}

IdentityReport rl_one_step_check(const DiscreteDistribution& forecast,
                                 const Vector& loglik, RandomSeed seed,
                                 int num_candidates) {
  const auto [analysis, log_z] = discrete_analysis(forecast, loglik);
  const double reward_at_posterior = -eval_Jt_discrete(analysis, forecast, loglik);

  Rng rng(seed);
  double max_candidate = kNegInf;
  for (int k = 0; k < num_candidates; ++k) {
    Vector w = Vector::Zero(forecast.size());
    for (int s = 0; s < forecast.size(); ++s) {
      if (forecast.probs[s] > 0.0 && std::isfinite(loglik[s])) {
        w[s] = -std::log(1.0 - rng.uniform());
      }
    }
    w /= w.sum();
    max_candidate = std::max(max_candidate,
                             -eval_Jt_discrete(DiscreteDistribution(w), forecast, loglik));
  }

  IdentityReport r = IdentityReport::make(reward_at_posterior, log_z, log_z,
                                          max_candidate - log_z, 1e-12);
  r.pass = r.pass && max_candidate <= log_z + 1e-12;
  return r;
}

}  // namespace varda
