#include "varda/enkf.hpp"

#include <cmath>

namespace varda {
namespace {

Matrix chol_lower_pd(const Matrix& a, const char* what) {
  Eigen::LLT<Matrix> llt(symmetrized(a));
  require(llt.info() == Eigen::Success, std::string(what) + ": not positive definite");
  return llt.matrixL();
}

Matrix observation_perturbations(int count, const Matrix& R, RandomSeed seed) {
  Rng rng(seed);
  const Matrix L = chol_lower_pd(R, "perturbed_obs_step R");
  Matrix eps(count, R.rows());
  Vector z(R.rows());
  for (int i = 0; i < count; ++i) {
    for (int j = 0; j < R.rows(); ++j) z[j] = rng.normal();
    eps.row(i) = (L * z).transpose();
  }
  return eps;
}

Ensemble transport(const Ensemble& e, const Matrix& K, const Matrix& H,
                   const Matrix& R, const Vector& y, RandomSeed seed) {
  const Matrix eps = observation_perturbations(e.size(), R, seed);
  Ensemble out;
  out.members = e.members;
  for (int i = 0; i < e.size(); ++i) {
    const Vector innovation =
        y + eps.row(i).transpose() - H * e.members.row(i).transpose();
    out.members.row(i) += (K * innovation).transpose();
  }
  return out;
}

// Least-squares slope of log(err) vs log(N), one point per ensemble size.
double loglog_slope(const std::vector<int>& sizes, const std::vector<double>& errs) {
  const int k = static_cast<int>(sizes.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < k; ++i) {
    const double x = std::log(static_cast<double>(sizes[i]));
    const double y = std::log(errs[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (k * sxy - sx * sy) / (k * sxx - sx * sx);
}

}  // namespace

std::pair<Vector, Matrix> ensemble_moments(const Ensemble& e) {
  require(e.size() >= 2, "ensemble_moments: need at least two members");
  const Vector mean = e.members.colwise().mean();
  const Matrix anomalies = e.members.rowwise() - mean.transpose();
  const Matrix cov = anomalies.transpose() * anomalies / (e.size() - 1);
  return {mean, symmetrized(cov)};
}

Matrix surrogate_gain(const Matrix& Pf_hat, const Matrix& H, const Matrix& R) {
  require(H.cols() == Pf_hat.rows() && H.rows() == R.rows() && R.rows() == R.cols(),
          "surrogate_gain: shape mismatch");
  require(Eigen::LLT<Matrix>(symmetrized(R)).info() == Eigen::Success,
          "surrogate_gain: R must be positive definite");
  const Matrix S = symmetrized(H * Pf_hat * H.transpose() + R);
  Eigen::LLT<Matrix> llt(S);
  require(llt.info() == Eigen::Success, "surrogate_gain: innovation covariance not PD");
  return llt.solve(H * Pf_hat).transpose();
}

Ensemble perturbed_obs_step(const Ensemble& e, const Matrix& H, const Matrix& R,
                            const Vector& y, RandomSeed seed) {
  const auto [mean, cov] = ensemble_moments(e);
  (void)mean;
  return transport(e, surrogate_gain(cov, H, R), H, R, y, seed);
}

Ensemble perturbed_obs_step_with_gain(const Ensemble& e, const Matrix& K,
                                      const Matrix& H, const Matrix& R,
                                      const Vector& y, RandomSeed seed) {
  require(e.size() >= 1, "perturbed_obs_step_with_gain: empty ensemble");
  return transport(e, K, H, R, y, seed);
}

Ensemble square_root_step(const Ensemble& e, const Matrix& H, const Matrix& R,
                          const Vector& y) {
  const auto [mf, Pf] = ensemble_moments(e);
  const int N = e.size();
  const Matrix K = surrogate_gain(Pf, H, R);
  const Vector ma = mf + K * (y - H * mf);

  // Anomaly transform T = I - Z f(Z^T Z) Z^T with Z = A H^T S^{-1/2}/sqrt(N-1),
  // the symmetric square root of I - Z Z^T; output covariance is (I - K H) Pf
  // exactly and zero-sum anomalies are preserved.
  const Matrix A = e.members.rowwise() - mf.transpose();
  const Matrix S = symmetrized(H * Pf * H.transpose() + R);
  const Matrix Ls = chol_lower_pd(S, "square_root_step innovation");
  // Z = A H^T Ls^{-T} / sqrt(N-1)  (N x m)
  const Matrix Z = Ls.triangularView<Eigen::Lower>()
                       .solve((A * H.transpose()).transpose())
                       .transpose() /
                   std::sqrt(static_cast<double>(N - 1));
  const Matrix G = symmetrized(Z.transpose() * Z);  // m x m, eigenvalues in [0, 1)
  Eigen::SelfAdjointEigenSolver<Matrix> es(G);
  require(es.info() == Eigen::Success, "square_root_step: transform eigensolve failed");
  Vector f(es.eigenvalues().size());
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    const double lam = es.eigenvalues()[i];
    require(lam < 1.0 + 1e-12, "square_root_step: transform eigenvalue out of range");
    const double clamped = std::min(std::max(lam, 0.0), 1.0);
    f[i] = clamped > 1e-14 ? (1.0 - std::sqrt(1.0 - clamped)) / clamped : 0.5;
  }
  const Matrix Fm = es.eigenvectors() * f.asDiagonal() * es.eigenvectors().transpose();
  const Matrix A_new = A - Z * (Fm * (Z.transpose() * A));

  Ensemble out;
  out.members = A_new.rowwise() + ma.transpose();
  return out;
}

ConvergenceTable exact_transport_experiment(const Gaussian& forecast, const Matrix& H,
                                            const Matrix& R, const Vector& y,
                                            const std::vector<int>& ensemble_sizes,
                                            int seed_count, RandomSeed base) {
  const auto [analysis, log_z] = kalman_analysis(forecast, H, R, y, KalmanForm::gain);
  (void)log_z;
  const Matrix K = kalman_gain(forecast.cov(), H, R);

  ConvergenceTable table;
  std::vector<double> mean_errs, cov_errs;
  for (std::size_t ni = 0; ni < ensemble_sizes.size(); ++ni) {
    const int N = ensemble_sizes[ni];
    double mean_err = 0.0, cov_err = 0.0;
    for (int s = 0; s < seed_count; ++s) {
      const RandomSeed cell = base.child(ni * 1000003ULL + static_cast<std::uint64_t>(s));
      Ensemble forecast_members{forecast.sample(cell.child(1), N)};
      const Ensemble analysis_members =
          perturbed_obs_step_with_gain(forecast_members, K, H, R, y, cell.child(2));
      const auto [m_hat, p_hat] = ensemble_moments(analysis_members);
      mean_err += (m_hat - analysis.mean()).norm();
      cov_err += (p_hat - analysis.cov()).norm();
    }
    mean_err /= seed_count;
    cov_err /= seed_count;
    table.rows.push_back({N, seed_count, 0, mean_err, cov_err});
    mean_errs.push_back(mean_err);
    cov_errs.push_back(cov_err);
  }
  table.mean_error_slope = loglog_slope(ensemble_sizes, mean_errs);
  table.cov_error_slope = loglog_slope(ensemble_sizes, cov_errs);
  return table;
}

ConvergenceTable enkf_convergence_experiment(const LinearGaussianSSM& model,
                                             const ObservationRecord& obs,
                                             const std::vector<int>& ensemble_sizes,
                                             int seed_count, RandomSeed base) {
  const KalmanFilterOutput exact = kalman_filter_run(model, obs);
  const int T = model.horizon();

  ConvergenceTable table;
  std::vector<double> mean_avgs, cov_avgs;
  for (std::size_t ni = 0; ni < ensemble_sizes.size(); ++ni) {
    const int N = ensemble_sizes[ni];
    std::vector<double> mean_err(T + 1, 0.0), cov_err(T + 1, 0.0);
    for (int s = 0; s < seed_count; ++s) {
      const RandomSeed cell = base.child(ni * 1000003ULL + static_cast<std::uint64_t>(s));
      Ensemble ens{Gaussian(model.init_mean, model.init_cov).sample(cell.child(0), N)};
      for (int t = 0; t <= T; ++t) {
        ens = perturbed_obs_step(ens, model.obs_operators[t], model.obs_noise[t],
                                 obs.observations[t], cell.child(100 + t));
        const auto [m_hat, p_hat] = ensemble_moments(ens);
        mean_err[t] += (m_hat - exact.analyses[t].mean()).norm();
        cov_err[t] += (p_hat - exact.analyses[t].cov()).norm();
        if (t < T) {
          // Propagate members with seeded model noise.
          Rng rng(cell.child(200 + t));
          const Matrix Lq = Eigen::LLT<Matrix>(symmetrized(model.model_noise[t])).matrixL();
          Matrix next(N, model.state_dim());
          Vector z(model.state_dim());
          for (int i = 0; i < N; ++i) {
            for (int j = 0; j < model.state_dim(); ++j) z[j] = rng.normal();
            next.row(i) =
                (model.transitions[t] * ens.members.row(i).transpose() + Lq * z).transpose();
          }
          ens.members = next;
        }
      }
    }
    double mean_avg = 0.0, cov_avg = 0.0;
    for (int t = 0; t <= T; ++t) {
      mean_err[t] /= seed_count;
      cov_err[t] /= seed_count;
      table.rows.push_back({N, seed_count, t, mean_err[t], cov_err[t]});
      mean_avg += mean_err[t];
      cov_avg += cov_err[t];
    }
    mean_avgs.push_back(mean_avg / (T + 1));
    cov_avgs.push_back(cov_avg / (T + 1));
  }
  table.mean_error_slope = loglog_slope(ensemble_sizes, mean_avgs);
  table.cov_error_slope = loglog_slope(ensemble_sizes, cov_avgs);
  return table;
}

double square_root_window_moment_error(const LinearGaussianSSM& model,
                                       const ObservationRecord& obs, int ensemble_size,
                                       RandomSeed seed) {
  const int T = model.horizon();
  Ensemble ens{Gaussian(model.init_mean, model.init_cov).sample(seed.child(0), ensemble_size)};
  double worst = 0.0;
  for (int t = 0; t <= T; ++t) {
    const auto [mf, Pf] = ensemble_moments(ens);
    const Matrix K = surrogate_gain(Pf, model.obs_operators[t], model.obs_noise[t]);
    const Vector ma_target = mf + K * (obs.observations[t] - model.obs_operators[t] * mf);
    const Matrix Pa_target = symmetrized(
        (Matrix::Identity(Pf.rows(), Pf.cols()) - K * model.obs_operators[t]) * Pf);

    ens = square_root_step(ens, model.obs_operators[t], model.obs_noise[t],
                           obs.observations[t]);
    const auto [ma, Pa] = ensemble_moments(ens);
    worst = std::max(worst, (ma - ma_target).cwiseAbs().maxCoeff());
    worst = std::max(worst, (Pa - Pa_target).cwiseAbs().maxCoeff());

    if (t < T) {
      Rng rng(seed.child(100 + t));
      const Matrix Lq = Eigen::LLT<Matrix>(symmetrized(model.model_noise[t])).matrixL();
      Matrix next(ensemble_size, model.state_dim());
      Vector z(model.state_dim());
      for (int i = 0; i < ensemble_size; ++i) {
        for (int j = 0; j < model.state_dim(); ++j) z[j] = rng.normal();
        next.row(i) =
            (model.transitions[t] * ens.members.row(i).transpose() + Lq * z).transpose();
      }
      ens.members = next;
    }
  }
  return worst;
}

}  // namespace varda
