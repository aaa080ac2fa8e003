#include "varda/models.hpp"

#include <cmath>

namespace varda {
namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

void require_pd(const Matrix& a, const char* what) {
  require(a.rows() == a.cols(), std::string(what) + ": square matrix required");
  Eigen::LLT<Matrix> llt(symmetrized(a));
  require(llt.info() == Eigen::Success, std::string(what) + ": not positive definite");
}

void require_row_stochastic(const Matrix& m, const char* what) {
  require((m.array() >= 0.0).all(), std::string(what) + ": negative entry");
  for (int i = 0; i < m.rows(); ++i) {
    require(std::abs(m.row(i).sum() - 1.0) <= 1e-12,
            std::string(what) + ": row does not sum to 1");
  }
}

Vector gaussian_noise(const Matrix& chol_lower, Rng& rng) {
  Vector z(chol_lower.rows());
  for (int i = 0; i < z.size(); ++i) z[i] = rng.normal();
  return chol_lower * z;
}

double gaussian_obs_loglik(const Matrix& H, const Matrix& R, const Vector& y,
                           const Vector& state) {
  Eigen::LLT<Matrix> llt(symmetrized(R));
  require(llt.info() == Eigen::Success, "emission_loglik: R not positive definite");
  const Matrix L = llt.matrixL();
  const Vector z = L.triangularView<Eigen::Lower>().solve(y - H * state);
  const double log_det = 2.0 * L.diagonal().array().log().sum();
  return -0.5 * (y.size() * kLog2Pi + log_det + z.squaredNorm());
}

}  // namespace

void LinearGaussianSSM::validate() const {
  const int n = state_dim();
  const int T = horizon();
  require(n > 0, "lgssm: empty state");
  require(init_cov.rows() == n && init_cov.cols() == n, "lgssm: init_cov shape");
  require_pd(init_cov, "lgssm init_cov");
  require(static_cast<int>(model_noise.size()) == T, "lgssm: need T model noise covs");
  require(static_cast<int>(obs_operators.size()) == T + 1, "lgssm: need T+1 obs operators");
  require(static_cast<int>(obs_noise.size()) == T + 1, "lgssm: need T+1 obs noise covs");
  for (int t = 0; t < T; ++t) {
    require(transitions[t].rows() == n && transitions[t].cols() == n, "lgssm: A_t shape");
    require(model_noise[t].rows() == n, "lgssm: Q_t shape");
    require_pd(model_noise[t], "lgssm Q_t");
  }
  const int m = obs_dim();
  for (int t = 0; t <= T; ++t) {
    require(obs_operators[t].rows() == m && obs_operators[t].cols() == n, "lgssm: H_t shape");
    require(obs_noise[t].rows() == m, "lgssm: R_t shape");
    require_pd(obs_noise[t], "lgssm R_t");
  }
}

void DiscreteHMM::validate() const {
  const int S = num_states();
  const int T = horizon();
  require(S > 0, "hmm: empty state set");
  require((initial.array() >= 0.0).all(), "hmm: negative initial mass");
  require(std::abs(initial.sum() - 1.0) <= 1e-12, "hmm: initial does not sum to 1");
  require(static_cast<int>(log_likelihoods.size()) == T + 1, "hmm: need T+1 log-likelihood vectors");
  for (const auto& m : transitions) {
    require(m.rows() == S && m.cols() == S, "hmm: transition shape");
    require_row_stochastic(m, "hmm transition");
  }
  for (const auto& v : log_likelihoods) {
    require(static_cast<int>(v.size()) == S, "hmm: log-likelihood length");
    // -inf atoms are allowed (zero likelihood); +inf and NaN are not.
    for (int s = 0; s < S; ++s) {
      require(!(v[s] > 0 && std::isinf(v[s])) && !std::isnan(v[s]),
              "hmm: log-likelihood must be finite or -inf");
    }
  }
}

void NonlinearSSM::validate() const {
  require(dt > 0.0, "nlssm: dt must be positive");
  require(substeps >= 1, "nlssm: substeps must be >= 1");
  require(init_mean.size() == 3, "nlssm: lorenz63 state is 3-dimensional");
  require_pd(init_cov, "nlssm init_cov");
  require(model_noise.empty() || static_cast<int>(model_noise.size()) == horizon,
          "nlssm: model_noise must be empty or length T");
  for (const auto& q : model_noise) require_pd(q, "nlssm Q_t");
  require(static_cast<int>(obs_operators.size()) == horizon + 1, "nlssm: need T+1 obs operators");
  require(static_cast<int>(obs_noise.size()) == horizon + 1, "nlssm: need T+1 obs noise covs");
  for (const auto& r : obs_noise) require_pd(r, "nlssm R_t");
}

Eigen::Vector3d lorenz63_step(const Eigen::Vector3d& x, double dt,
                              const Lorenz63Params& p) {
  require(dt > 0.0, "lorenz63_step: dt must be positive");
  const auto f = [&p](const Eigen::Vector3d& v) -> Eigen::Vector3d {
    return {p.sigma * (v[1] - v[0]),
            v[0] * (p.rho - v[2]) - v[1],
            v[0] * v[1] - p.beta * v[2]};
  };
  const Eigen::Vector3d k1 = f(x);
  const Eigen::Vector3d k2 = f(x + 0.5 * dt * k1);
  const Eigen::Vector3d k3 = f(x + 0.5 * dt * k2);
  const Eigen::Vector3d k4 = f(x + dt * k3);
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Eigen::Matrix3d lorenz63_step_jacobian(const Eigen::Vector3d& x, double dt,
                                       const Lorenz63Params& p) {
  require(dt > 0.0, "lorenz63_step_jacobian: dt must be positive");
  const auto f = [&p](const Eigen::Vector3d& v) -> Eigen::Vector3d {
    return {p.sigma * (v[1] - v[0]),
            v[0] * (p.rho - v[2]) - v[1],
            v[0] * v[1] - p.beta * v[2]};
  };
  const auto jac = [&p](const Eigen::Vector3d& v) -> Eigen::Matrix3d {
    Eigen::Matrix3d j;
    j << -p.sigma, p.sigma, 0.0,
         p.rho - v[2], -1.0, -v[0],
         v[1], v[0], -p.beta;
    return j;
  };
  const Eigen::Matrix3d I = Eigen::Matrix3d::Identity();
  const Eigen::Vector3d k1 = f(x);
  const Eigen::Vector3d x2 = x + 0.5 * dt * k1;
  const Eigen::Vector3d k2 = f(x2);
  const Eigen::Vector3d x3 = x + 0.5 * dt * k2;
  const Eigen::Vector3d k3 = f(x3);
  const Eigen::Vector3d x4 = x + dt * k3;

  const Eigen::Matrix3d d1 = jac(x);
  const Eigen::Matrix3d d2 = jac(x2) * (I + 0.5 * dt * d1);
  const Eigen::Matrix3d d3 = jac(x3) * (I + 0.5 * dt * d2);
  const Eigen::Matrix3d d4 = jac(x4) * (I + dt * d3);
  return I + (dt / 6.0) * (d1 + 2.0 * d2 + 2.0 * d3 + d4);
}

Vector NonlinearSSM::step(const Vector& x) const {
  Eigen::Vector3d v = x;
  for (int k = 0; k < substeps; ++k) v = lorenz63_step(v, dt, params);
  return v;
}

Matrix NonlinearSSM::step_jacobian(const Vector& x) const {
  Eigen::Vector3d v = x;
  Eigen::Matrix3d j = Eigen::Matrix3d::Identity();
  for (int k = 0; k < substeps; ++k) {
    j = lorenz63_step_jacobian(v, dt, params) * j;
    v = lorenz63_step(v, dt, params);
  }
  return j;
}

std::pair<Matrix, ObservationRecord> simulate(const LinearGaussianSSM& model,
                                              RandomSeed seed) {
  model.validate();
  Rng rng(seed);
  const int T = model.horizon();
  const int n = model.state_dim();
  Matrix truth(T + 1, n);
  ObservationRecord obs;
  obs.provenance = seed;
  obs.observations.reserve(T + 1);

  const Matrix B_chol = Eigen::LLT<Matrix>(symmetrized(model.init_cov)).matrixL();
  Vector x = model.init_mean + gaussian_noise(B_chol, rng);
  for (int t = 0; t <= T; ++t) {
    truth.row(t) = x.transpose();
    const Matrix R_chol = Eigen::LLT<Matrix>(symmetrized(model.obs_noise[t])).matrixL();
    obs.observations.push_back(model.obs_operators[t] * x + gaussian_noise(R_chol, rng));
    if (t < T) {
      const Matrix Q_chol = Eigen::LLT<Matrix>(symmetrized(model.model_noise[t])).matrixL();
      x = model.transitions[t] * x + gaussian_noise(Q_chol, rng);
    }
  }
  return {truth, obs};
}

std::pair<Matrix, ObservationRecord> simulate(const NonlinearSSM& model,
                                              RandomSeed seed) {
  model.validate();
  Rng rng(seed);
  const int T = model.horizon;
  Matrix truth(T + 1, 3);
  ObservationRecord obs;
  obs.provenance = seed;
  obs.observations.reserve(T + 1);

  const Matrix B_chol = Eigen::LLT<Matrix>(symmetrized(model.init_cov)).matrixL();
  Vector x = model.init_mean + gaussian_noise(B_chol, rng);
  for (int t = 0; t <= T; ++t) {
    truth.row(t) = x.transpose();
    const Matrix R_chol = Eigen::LLT<Matrix>(symmetrized(model.obs_noise[t])).matrixL();
    obs.observations.push_back(model.obs_operators[t] * x + gaussian_noise(R_chol, rng));
    if (t < T) {
      x = model.step(x);
      if (!model.model_noise.empty()) {
        const Matrix Q_chol = Eigen::LLT<Matrix>(symmetrized(model.model_noise[t])).matrixL();
        x += gaussian_noise(Q_chol, rng);
      }
    }
  }
  return {truth, obs};
}

std::vector<int> simulate(const DiscreteHMM& model, RandomSeed seed) {
  model.validate();
  Rng rng(seed);
  std::vector<int> path(model.horizon() + 1);
  path[0] = rng.categorical(model.initial);
  for (int t = 0; t < model.horizon(); ++t) {
    path[t + 1] = rng.categorical(model.transitions[t].row(path[t]).transpose());
  }
  return path;
}

double emission_loglik(const DiscreteHMM& model, int t, int state) {
  require(t >= 0 && t <= model.horizon(), "emission_loglik: time out of range");
  require(state >= 0 && state < model.num_states(), "emission_loglik: state out of range");
  return model.log_likelihoods[t][state];
}

double emission_loglik(const LinearGaussianSSM& model, const ObservationRecord& obs,
                       int t, const Vector& state) {
  require(t >= 0 && t <= model.horizon(), "emission_loglik: time out of range");
  return gaussian_obs_loglik(model.obs_operators[t], model.obs_noise[t],
                             obs.observations.at(t), state);
}

double emission_loglik(const NonlinearSSM& model, const ObservationRecord& obs,
                       int t, const Vector& state) {
  require(t >= 0 && t <= model.horizon, "emission_loglik: time out of range");
  return gaussian_obs_loglik(model.obs_operators[t], model.obs_noise[t],
                             obs.observations.at(t), state);
}

}  // namespace varda
