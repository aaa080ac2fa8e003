#include "varda/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace varda::fixtures {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Vector random_stochastic_row(int n, Rng& rng) {
  Vector w(n);
  for (int i = 0; i < n; ++i) w[i] = 0.2 + rng.uniform();
  return w / w.sum();
}

}  // namespace

Matrix random_pd(int n, Rng& rng, double scale) {
  Matrix w(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) w(i, j) = rng.normal();
  }
  return scale * symmetrized(w * w.transpose() + 0.3 * static_cast<double>(n) *
                                                     Matrix::Identity(n, n));
}

DiscreteHMM one_step_hmm() {
  DiscreteHMM hmm;
  hmm.initial = Vector::Constant(2, 0.5);
  Vector ll(2);
  ll << std::log(0.8), std::log(0.2);
  hmm.log_likelihoods = {ll};
  return hmm;
}

DiscreteHMM random_hmm(int num_states, int horizon, RandomSeed seed, bool extreme_atoms) {
  Rng rng(seed);
  DiscreteHMM hmm;
  hmm.initial = random_stochastic_row(num_states, rng);
  for (int t = 0; t < horizon; ++t) {
    Matrix m(num_states, num_states);
    for (int x = 0; x < num_states; ++x) m.row(x) = random_stochastic_row(num_states, rng).transpose();
    hmm.transitions.push_back(m);
  }
  for (int t = 0; t <= horizon; ++t) {
    Vector ll(num_states);
    for (int s = 0; s < num_states; ++s) ll[s] = -0.6 + 1.5 * rng.uniform();
    hmm.log_likelihoods.push_back(ll);
  }
  if (extreme_atoms && horizon >= 1 && num_states >= 2) {
    hmm.log_likelihoods[0][0] = kNegInf;  // zero-likelihood atom
    hmm.log_likelihoods[1][num_states - 1] = -10.0;
  }
  return hmm;
}

DiscreteHMM truncation_hmm() {
  // Finite-likelihood paths have total |log lik| at most ~11.8 < 12, so the
  // truncation sets are full from level 12 on; the e^{-10} atom leaves them
  // below level ~8 and the zero atom never enters.
  DiscreteHMM hmm = random_hmm(3, 2, {911, 7}, false);
  for (auto& ll : hmm.log_likelihoods) {
    for (int s = 0; s < 3; ++s) ll[s] = std::clamp(ll[s], -0.9, 0.9);
  }
  hmm.log_likelihoods[0][0] = kNegInf;
  hmm.log_likelihoods[1][2] = -10.0;
  return hmm;
}

LinearGaussianSSM random_lgssm(int state_dim, int obs_dim, int horizon, RandomSeed seed) {
  Rng rng(seed);
  LinearGaussianSSM m;
  m.init_mean = Vector(state_dim);
  for (int i = 0; i < state_dim; ++i) m.init_mean[i] = rng.normal();
  m.init_cov = random_pd(state_dim, rng);
  for (int t = 0; t < horizon; ++t) {
    Matrix a(state_dim, state_dim);
    for (int i = 0; i < state_dim; ++i) {
      for (int j = 0; j < state_dim; ++j) a(i, j) = 0.6 * (2.0 * rng.uniform() - 1.0);
    }
    a += 0.4 * Matrix::Identity(state_dim, state_dim);
    m.transitions.push_back(a);
    m.model_noise.push_back(random_pd(state_dim, rng, 0.4));
  }
  for (int t = 0; t <= horizon; ++t) {
    Matrix h(obs_dim, state_dim);
    for (int i = 0; i < obs_dim; ++i) {
      for (int j = 0; j < state_dim; ++j) h(i, j) = 2.0 * rng.uniform() - 1.0;
    }
    m.obs_operators.push_back(h);
    m.obs_noise.push_back(random_pd(obs_dim, rng, 0.5));
  }
  return m;
}

LinearGaussianSSM scalar_lgssm() {
  LinearGaussianSSM m;
  m.init_mean = Vector::Zero(1);
  m.init_cov = Matrix::Identity(1, 1);
  m.obs_operators = {Matrix::Identity(1, 1)};
  m.obs_noise = {Matrix::Identity(1, 1)};
  return m;
}

NonlinearSSM lorenz_window(int horizon) {
  NonlinearSSM m;
  m.horizon = horizon;
  m.dt = 0.01;
  m.substeps = 2;
  m.init_mean = Vector(3);
  m.init_mean << -5.9, -5.5, 24.0;
  m.init_cov = 4.0 * Matrix::Identity(3, 3);
  for (int t = 0; t <= horizon; ++t) {
    m.obs_operators.push_back(Matrix::Identity(3, 3));
    m.obs_noise.push_back(2.0 * Matrix::Identity(3, 3));
  }
  return m;
}

FiniteMDP random_mdp(int num_states, int num_actions, int horizon, RandomSeed seed) {
  Rng rng(seed);
  FiniteMDP mdp;
  mdp.horizon = horizon;
  mdp.num_states = num_states;
  mdp.num_actions = num_actions;
  mdp.initial = random_stochastic_row(num_states, rng);
  for (int t = 0; t < horizon; ++t) {
    Matrix mu(num_states, num_actions);
    for (int x = 0; x < num_states; ++x) mu.row(x) = random_stochastic_row(num_actions, rng).transpose();
    mdp.passive.push_back(mu);
    std::vector<Matrix> per_state(num_states);
    for (int x = 0; x < num_states; ++x) {
      Matrix p(num_actions, num_states);
      for (int a = 0; a < num_actions; ++a) p.row(a) = random_stochastic_row(num_states, rng).transpose();
      per_state[x] = p;
    }
    mdp.transitions.push_back(per_state);
  }
  for (int t = 0; t <= horizon; ++t) {
    Vector c(num_states);
    for (int s = 0; s < num_states; ++s) c[s] = rng.normal();
    mdp.stage_costs.push_back(c);
  }
  return mdp;
}

FiniteMDP deterministic_mdp(int num_states, int horizon, RandomSeed seed) {
  FiniteMDP mdp = random_mdp(num_states, num_states, horizon, seed);
  for (int t = 0; t < horizon; ++t) {
    for (int x = 0; x < num_states; ++x) {
      mdp.transitions[t][x].setZero();
      for (int a = 0; a < num_states; ++a) mdp.transitions[t][x](a, a) = 1.0;
    }
  }
  return mdp;
}

DiscreteDistribution random_admissible(const DiscreteDistribution& forecast,
                                       const Vector& loglik, Rng& rng) {
  Vector w = Vector::Zero(forecast.size());
  for (int s = 0; s < forecast.size(); ++s) {
    if (forecast.probs[s] > 0.0 && std::isfinite(loglik[s])) {
      w[s] = -std::log(1.0 - rng.uniform());
    }
  }
  require(w.sum() > 0.0, "random_admissible: empty admissible support");
  return DiscreteDistribution(w / w.sum());
}

PathLaw random_path_law(const DiscreteHMM& model, Rng& rng) {
  const PathLaw prior = hmm_prior_path_law(model);
  Vector w = Vector::Zero(prior.probs.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (prior.probs[i] <= 0.0) continue;
    double total_ll = 0.0;
    for (int t = 0; t <= model.horizon(); ++t) {
      total_ll += model.log_likelihoods[t][prior.space.state(i, t)];
    }
    if (std::isfinite(total_ll)) w[i] = -std::log(1.0 - rng.uniform());
  }
  require(w.sum() > 0.0, "random_path_law: empty admissible support");
  return PathLaw{prior.space, w / w.sum()};
}

SAPathLaw random_sa_law(const FiniteMDP& mdp, Rng& rng) {
  Policy passive_policy;
  passive_policy.action_probs = mdp.passive;
  const SAPathLaw p0 = induced_path_law(mdp, passive_policy).state_action;
  Vector w = Vector::Zero(p0.probs.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (p0.probs[i] > 0.0) w[i] = -std::log(1.0 - rng.uniform());
  }
  return SAPathLaw{p0.space, w / w.sum()};
}

Policy random_policy(const FiniteMDP& mdp, RandomSeed seed) {
  Rng rng(seed);
  Policy pol;
  for (int t = 0; t < mdp.horizon; ++t) {
    Matrix p = Matrix::Zero(mdp.num_states, mdp.num_actions);
    for (int x = 0; x < mdp.num_states; ++x) {
      for (int a = 0; a < mdp.num_actions; ++a) {
        if (mdp.passive[t](x, a) > 0.0) p(x, a) = 0.1 + rng.uniform();
      }
      p.row(x) /= p.row(x).sum();
    }
    pol.action_probs.push_back(p);
  }
  return pol;
}

Policy perturbed_policy(const FiniteMDP& mdp, const Policy& base, Rng& rng, double scale) {
  Policy pol = base;
  for (int t = 0; t < mdp.horizon; ++t) {
    for (int x = 0; x < mdp.num_states; ++x) {
      for (int a = 0; a < mdp.num_actions; ++a) {
        if (pol.action_probs[t](x, a) > 0.0) {
          pol.action_probs[t](x, a) *= std::exp(scale * rng.normal());
        }
      }
      pol.action_probs[t].row(x) /= pol.action_probs[t].row(x).sum();
    }
  }
  return pol;
}

GridDensity map_limit_grid() {
  const int n = 2001;
  GridDensity g;
  g.points = Vector::LinSpaced(n, -25.0, 25.0);
  g.density = Vector(n);
  const double w1 = 0.7, m1 = -2.0, s1 = 1.0;   // broad basin
  const double w2 = 0.3, m2 = 2.0, s2 = 0.1;    // tall narrow MAP mode
  for (int i = 0; i < n; ++i) {
    const double x = g.points[i];
    const double d1 = w1 / (s1 * std::sqrt(2.0 * M_PI)) *
                      std::exp(-0.5 * (x - m1) * (x - m1) / (s1 * s1));
    const double d2 = w2 / (s2 * std::sqrt(2.0 * M_PI)) *
                      std::exp(-0.5 * (x - m2) * (x - m2) / (s2 * s2));
    g.density[i] = d1 + d2 + 1e-300;
  }
  return g.normalized();
}

GridDensity bimodal_grid() {
  const int n = 2401;
  const double a = 2.0, s = 0.25;
  GridDensity g;
  g.points = Vector::LinSpaced(n, -6.0, 6.0);
  g.density = Vector(n);
  for (int i = 0; i < n; ++i) {
    const double x = g.points[i];
    g.density[i] = 0.5 / (s * std::sqrt(2.0 * M_PI)) *
                       (std::exp(-0.5 * (x + a) * (x + a) / (s * s)) +
                        std::exp(-0.5 * (x - a) * (x - a) / (s * s))) +
                   1e-300;
  }
  return g.normalized();
}

RewardGridFixture reward_grid() {
  const int n = 161;
  const double y = 1.0;
  const double obs_var = 0.5;
  RewardGridFixture f;
  f.points = Vector::LinSpaced(n, -4.0, 6.0);
  Vector forecast(n);
  f.skewed_loglik = Vector(n);
  f.rmse_penalty = Vector(n);
  f.gaussian_loglik = Vector(n);
  f.mahalanobis_penalty = Vector(n);
  for (int i = 0; i < n; ++i) {
    const double x = f.points[i];
    forecast[i] = std::exp(-0.5 * x * x / 2.25);
    const double r = y - x;
    f.skewed_loglik[i] = -r - std::exp(-r);  // Gumbel residual law
    f.rmse_penalty[i] = std::abs(r);
    f.mahalanobis_penalty[i] = 0.5 * r * r / obs_var;
    f.gaussian_loglik[i] =
        -0.5 * std::log(2.0 * M_PI * obs_var) - 0.5 * r * r / obs_var;
  }
  f.forecast = DiscreteDistribution(forecast / forecast.sum());
  return f;
}

}  // namespace varda::fixtures
