#include "varda/exact_inference.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace varda {
namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double gaussian_log_pdf(const Vector& x, const Vector& mean, const Matrix& cov) {
  Eigen::LLT<Matrix> llt(symmetrized(cov));
  require(llt.info() == Eigen::Success, "log evidence: covariance not positive definite");
  const Matrix L = llt.matrixL();
  const Vector z = L.triangularView<Eigen::Lower>().solve(x - mean);
  return -0.5 * (x.size() * kLog2Pi + 2.0 * L.diagonal().array().log().sum() +
                 z.squaredNorm());
}

}  // namespace

DiscreteDistribution::DiscreteDistribution(Vector p) : probs(std::move(p)) {
  require(probs.size() > 0, "DiscreteDistribution: empty");
  require((probs.array() >= 0.0).all(), "DiscreteDistribution: negative entry");
  require(std::abs(probs.sum() - 1.0) <= 1e-12,
          "DiscreteDistribution: probabilities must sum to 1");
}

double discrete_kl(const DiscreteDistribution& q, const DiscreteDistribution& p) {
  require(q.size() == p.size(), "discrete_kl: size mismatch");
  StableSum acc;
  for (int s = 0; s < q.size(); ++s) {
    if (q.probs[s] == 0.0) continue;
    require(p.probs[s] > 0.0, "discrete_kl: q is not absolutely continuous w.r.t. p");
    acc.add(q.probs[s] * std::log(q.probs[s] / p.probs[s]));
  }
  return acc.value();
}

double log_sum_exp(const Vector& v) {
  const double m = v.maxCoeff();
  if (std::isinf(m) && m < 0) return kNegInf;
  double s = 0.0;
  for (int i = 0; i < v.size(); ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

std::size_t PathSpace::size() const {
  std::size_t n = 1;
  for (int t = 0; t <= horizon; ++t) n *= static_cast<std::size_t>(num_states);
  return n;
}

int PathSpace::state(std::size_t path, int t) const {
  for (int k = 0; k < t; ++k) path /= static_cast<std::size_t>(num_states);
  return static_cast<int>(path % static_cast<std::size_t>(num_states));
}

double path_kl(const PathLaw& q, const PathLaw& p) {
  require(q.probs.size() == p.probs.size(), "path_kl: size mismatch");
  StableSum acc;
  for (Eigen::Index i = 0; i < q.probs.size(); ++i) {
    if (q.probs[i] == 0.0) continue;
    require(p.probs[i] > 0.0, "path_kl: q is not absolutely continuous w.r.t. p");
    acc.add(q.probs[i] * std::log(q.probs[i] / p.probs[i]));
  }
  return acc.value();
}

std::pair<DiscreteDistribution, double> discrete_analysis(
    const DiscreteDistribution& forecast, const Vector& loglik) {
  require(forecast.size() == loglik.size(), "discrete_analysis: size mismatch");
  Vector logw(forecast.size());
  for (int s = 0; s < forecast.size(); ++s) {
    logw[s] = forecast.probs[s] > 0.0 ? std::log(forecast.probs[s]) + loglik[s] : kNegInf;
  }
  const double log_z = log_sum_exp(logw);
  if (std::isinf(log_z) && log_z < 0) {
    throw std::runtime_error("discrete_analysis: observation annihilated all mass (Z = 0)");
  }
  Vector post = (logw.array() - log_z).exp();
  for (int s = 0; s < post.size(); ++s) {
    if (forecast.probs[s] == 0.0 || std::isinf(loglik[s])) post[s] = 0.0;
  }
  post /= post.sum();
  return {DiscreteDistribution(post), log_z};
}

HmmFilterOutput hmm_forward(const DiscreteHMM& model) {
  model.validate();
  HmmFilterOutput out;
  DiscreteDistribution forecast(model.initial);
  StableSum total;
  for (int t = 0; t <= model.horizon(); ++t) {
    out.forecasts.push_back(forecast);
    std::pair<DiscreteDistribution, double> analysis;
    try {
      analysis = discrete_analysis(forecast, model.log_likelihoods[t]);
    } catch (const std::runtime_error&) {
      throw std::runtime_error("hmm_forward: Z_t = 0 at t = " + std::to_string(t));
    }
    out.analyses.push_back(analysis.first);
    out.log_evidence_increments.push_back(analysis.second);
    total.add(analysis.second);
    if (t < model.horizon()) {
      forecast = DiscreteDistribution(
          model.transitions[t].transpose() * analysis.first.probs);
    }
  }
  out.total_log_evidence = total.value();
  return out;
}

PathLaw hmm_prior_path_law(const DiscreteHMM& model) {
  model.validate();
  PathSpace space{model.num_states(), model.horizon()};
  require(space.size() <= 1000000, "hmm_prior_path_law: path space exceeds guard");
  Vector probs(static_cast<Eigen::Index>(space.size()));
  for (std::size_t i = 0; i < space.size(); ++i) {
    double w = model.initial[space.state(i, 0)];
    for (int t = 0; t < model.horizon(); ++t) {
      w *= model.transitions[t](space.state(i, t), space.state(i, t + 1));
    }
    probs[static_cast<Eigen::Index>(i)] = w;
  }
  return {space, probs};
}

std::pair<PathLaw, double> hmm_path_posterior_enumerate(const DiscreteHMM& model) {
  PathLaw prior = hmm_prior_path_law(model);
  Vector weights(prior.probs.size());
  StableSum z;
  for (Eigen::Index i = 0; i < prior.probs.size(); ++i) {
    double lik = 1.0;
    for (int t = 0; t <= model.horizon(); ++t) {
      const double ll = model.log_likelihoods[t][prior.space.state(i, t)];
      lik *= std::isinf(ll) ? 0.0 : std::exp(ll);
    }
    weights[i] = prior.probs[i] * lik;
    z.add(weights[i]);
  }
  const double Z = z.value();
  require(Z > 0.0, "hmm_path_posterior_enumerate: zero path evidence");
  return {PathLaw{prior.space, weights / Z}, std::log(Z)};
}

Matrix kalman_gain(const Matrix& Pf, const Matrix& H, const Matrix& R) {
  const Matrix S = symmetrized(H * Pf * H.transpose() + R);
  Eigen::LLT<Matrix> llt(S);
  require(llt.info() == Eigen::Success,
          "kalman_gain: innovation covariance not positive definite");
  return llt.solve(H * Pf).transpose();
}

std::pair<Gaussian, double> kalman_analysis(const Gaussian& forecast,
                                            const Matrix& H, const Matrix& R,
                                            const Vector& y, KalmanForm form) {
  require(H.cols() == forecast.dim(), "kalman_analysis: H shape mismatch");
  require(H.rows() == R.rows() && R.rows() == R.cols(), "kalman_analysis: R shape mismatch");
  require(y.size() == H.rows(), "kalman_analysis: observation dimension mismatch");

  const Matrix& Pf = forecast.cov();
  const Vector& mf = forecast.mean();
  const Matrix S = symmetrized(H * Pf * H.transpose() + R);
  const double log_z = gaussian_log_pdf(y, H * mf, S);

  if (form == KalmanForm::gain) {
    const Matrix K = kalman_gain(Pf, H, R);
    const Vector ma = mf + K * (y - H * mf);
    const Matrix Pa = symmetrized((Matrix::Identity(Pf.rows(), Pf.cols()) - K * H) * Pf);
    return {Gaussian(ma, Pa), log_z};
  }

  // Information form, Pa = (Pf^{-1} + H^T R^{-1} H)^{-1}.
  Eigen::LLT<Matrix> pf_llt(Pf);
  require(pf_llt.info() == Eigen::Success, "kalman_analysis: Pf not positive definite");
  Eigen::LLT<Matrix> r_llt(symmetrized(R));
  require(r_llt.info() == Eigen::Success, "kalman_analysis: R not positive definite");
  const Matrix precision =
      symmetrized(pf_llt.solve(Matrix::Identity(Pf.rows(), Pf.cols())) +
                  H.transpose() * r_llt.solve(H));
  Eigen::LLT<Matrix> prec_llt(precision);
  require(prec_llt.info() == Eigen::Success, "kalman_analysis: posterior precision not PD");
  const Matrix Pa = symmetrized(prec_llt.solve(Matrix::Identity(Pf.rows(), Pf.cols())));
  const Vector ma = prec_llt.solve(pf_llt.solve(mf) + H.transpose() * r_llt.solve(y));
  return {Gaussian(ma, Pa), log_z};
}

KalmanFilterOutput kalman_filter_run(const LinearGaussianSSM& model,
                                     const ObservationRecord& obs,
                                     KalmanForm form) {
  model.validate();
  require(static_cast<int>(obs.observations.size()) == model.horizon() + 1,
          "kalman_filter_run: need one observation per time");
  KalmanFilterOutput out;
  Gaussian forecast(model.init_mean, model.init_cov);
  StableSum total;
  for (int t = 0; t <= model.horizon(); ++t) {
    out.forecasts.push_back(forecast);
    auto [analysis, log_z] = kalman_analysis(forecast, model.obs_operators[t],
                                             model.obs_noise[t], obs.observations[t], form);
    out.analyses.push_back(analysis);
    out.log_evidence_increments.push_back(log_z);
    total.add(log_z);
    if (t < model.horizon()) {
      const Matrix& A = model.transitions[t];
      forecast = Gaussian(A * analysis.mean(),
                          A * analysis.cov() * A.transpose() + model.model_noise[t]);
    }
  }
  out.total_log_evidence = total.value();
  return out;
}

Gaussian joint_gaussian_trajectory_posterior(const LinearGaussianSSM& model,
                                             const ObservationRecord& obs) {
  model.validate();
  const int n = model.state_dim();
  const int T = model.horizon();
  const int N = n * (T + 1);
  require(N <= 200, "joint_gaussian_trajectory_posterior: n(T+1) exceeds guard");
  require(static_cast<int>(obs.observations.size()) == T + 1,
          "joint_gaussian_trajectory_posterior: need one observation per time");

  Matrix precision = Matrix::Zero(N, N);
  Vector eta = Vector::Zero(N);

  const auto block = [n](int t) { return t * n; };
  const Matrix B_inv = Eigen::LLT<Matrix>(symmetrized(model.init_cov))
                           .solve(Matrix::Identity(n, n));
  precision.block(0, 0, n, n) += B_inv;
  eta.segment(0, n) += B_inv * model.init_mean;

  for (int t = 0; t < T; ++t) {
    const Matrix Q_inv = Eigen::LLT<Matrix>(symmetrized(model.model_noise[t]))
                             .solve(Matrix::Identity(n, n));
    const Matrix& A = model.transitions[t];
    precision.block(block(t), block(t), n, n) += A.transpose() * Q_inv * A;
    precision.block(block(t + 1), block(t + 1), n, n) += Q_inv;
    precision.block(block(t), block(t + 1), n, n) -= A.transpose() * Q_inv;
    precision.block(block(t + 1), block(t), n, n) -= Q_inv * A;
  }

  for (int t = 0; t <= T; ++t) {
    const Matrix& H = model.obs_operators[t];
    const Matrix R_inv = Eigen::LLT<Matrix>(symmetrized(model.obs_noise[t]))
                             .solve(Matrix::Identity(H.rows(), H.rows()));
    precision.block(block(t), block(t), n, n) += H.transpose() * R_inv * H;
    eta.segment(block(t), n) += H.transpose() * R_inv * obs.observations[t];
  }

  precision = symmetrized(precision);
  Eigen::LLT<Matrix> llt(precision);
  require(llt.info() == Eigen::Success,
          "joint_gaussian_trajectory_posterior: singular precision");
  const Vector mean = llt.solve(eta);
  const Matrix cov = symmetrized(llt.solve(Matrix::Identity(N, N)));
  return Gaussian(mean, cov);
}

Gaussian strong_constraint_x0_posterior(const LinearGaussianSSM& model,
                                        const ObservationRecord& obs) {
  model.validate();
  const int n = model.state_dim();
  const int m = model.obs_dim();
  const int T = model.horizon();
  require(static_cast<int>(obs.observations.size()) == T + 1,
          "strong_constraint_x0_posterior: need one observation per time");

  // Stack y_t = H_t Phi_t x_0 + eta_t with Phi_t = A_{t-1}...A_0.
  Matrix G(m * (T + 1), n);
  Vector y(m * (T + 1));
  Matrix Rblk = Matrix::Zero(m * (T + 1), m * (T + 1));
  Matrix Phi = Matrix::Identity(n, n);
  for (int t = 0; t <= T; ++t) {
    G.block(t * m, 0, m, n) = model.obs_operators[t] * Phi;
    y.segment(t * m, m) = obs.observations[t];
    Rblk.block(t * m, t * m, m, m) = model.obs_noise[t];
    if (t < T) Phi = model.transitions[t] * Phi;
  }

  const Matrix& B = model.init_cov;
  const Matrix S = symmetrized(G * B * G.transpose() + Rblk);
  Eigen::LLT<Matrix> llt(S);
  require(llt.info() == Eigen::Success, "strong_constraint_x0_posterior: singular S");
  const Matrix BGt = B * G.transpose();
  const Vector mean = model.init_mean + BGt * llt.solve(y - G * model.init_mean);
  const Matrix cov = symmetrized(B - BGt * llt.solve(BGt.transpose()));
  return Gaussian(mean, cov);
}

}  // namespace varda
