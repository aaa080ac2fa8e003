#include "varda/variational.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace varda {
namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// Lower-triangular Cholesky parameter packing for minimize_Jt_gaussian:
// theta = [m; vech(L)] with the diagonal stored as log L_ii.
struct CholParam {
  int n;
  int size() const { return n + n * (n + 1) / 2; }

  Matrix unpack_L(const Vector& theta) const {
    Matrix L = Matrix::Zero(n, n);
    int k = n;
    for (int j = 0; j < n; ++j) {
      for (int i = j; i < n; ++i) {
        L(i, j) = (i == j) ? std::exp(theta[k]) : theta[k];
        ++k;
      }
    }
    return L;
  }

  Vector pack(const Vector& m, const Matrix& L) const {
    Vector theta(size());
    theta.head(n) = m;
    int k = n;
    for (int j = 0; j < n; ++j) {
      for (int i = j; i < n; ++i) {
        theta[k] = (i == j) ? std::log(L(i, j)) : L(i, j);
        ++k;
      }
    }
    return theta;
  }

  // Maps the symmetric gradient dF/dP and the mean gradient into theta space.
  Vector pack_grad(const Vector& gm, const Matrix& gP, const Matrix& L) const {
    const Matrix gL = 2.0 * gP * L;  // dF/dL for symmetric gP
    Vector g(size());
    g.head(n) = gm;
    int k = n;
    for (int j = 0; j < n; ++j) {
      for (int i = j; i < n; ++i) {
        g[k] = (i == j) ? gL(i, j) * L(i, j) : gL(i, j);
        ++k;
      }
    }
    return g;
  }
};

}  // namespace

IdentityReport IdentityReport::make(double lhs, double rhs, double evidence,
                                    double kl_to_posterior, double tolerance) {
  IdentityReport r;
  r.lhs = lhs;
  r.rhs = rhs;
  r.residual = lhs - rhs;
  r.evidence = evidence;
  r.kl_to_posterior = kl_to_posterior;
  r.tolerance = tolerance;
  r.pass = std::abs(r.residual) <= tolerance;
  return r;
}

double GridDensity::spacing() const {
  require(points.size() >= 2, "GridDensity: need at least two points");
  return points[1] - points[0];
}

void GridDensity::validate() const {
  require(points.size() == density.size(), "GridDensity: size mismatch");
  require(points.size() >= 2, "GridDensity: need at least two points");
  const double h = spacing();
  require(h > 0.0, "GridDensity: points must ascend");
  for (Eigen::Index i = 1; i < points.size(); ++i) {
    require(std::abs((points[i] - points[i - 1]) - h) <= 1e-9 * std::max(1.0, std::abs(h)),
            "GridDensity: spacing must be uniform");
  }
  require((density.array() > 0.0).all(), "GridDensity: density must be strictly positive");
}

GridDensity GridDensity::normalized() const {
  validate();
  GridDensity out = *this;
  out.density /= spacing() * density.sum();
  return out;
}

double eval_Jt_discrete(const DiscreteDistribution& q,
                        const DiscreteDistribution& forecast, const Vector& loglik) {
  require(q.size() == forecast.size() && q.size() == loglik.size(),
          "eval_Jt_discrete: size mismatch");
  StableSum acc;
  for (int s = 0; s < q.size(); ++s) {
    if (q.probs[s] == 0.0) continue;
    require(forecast.probs[s] > 0.0,
            "eval_Jt_discrete: q is not absolutely continuous w.r.t. the forecast");
    require(std::isfinite(loglik[s]),
            "eval_Jt_discrete: infinite log-likelihood on the support of q");
    acc.add(q.probs[s] * (-loglik[s] + std::log(q.probs[s] / forecast.probs[s])));
  }
  return acc.value();
}

IdentityReport check_one_step_identity(const DiscreteDistribution& q,
                                       const DiscreteDistribution& forecast,
                                       const Vector& loglik, double tolerance) {
  const double lhs = eval_Jt_discrete(q, forecast, loglik);
  const auto [analysis, log_z] = discrete_analysis(forecast, loglik);
  const double kl = discrete_kl(q, analysis);
  return IdentityReport::make(lhs, kl - log_z, log_z, kl, tolerance);
}

double eval_Jpath_discrete(const PathLaw& q, const DiscreteHMM& model) {
  const PathLaw prior = hmm_prior_path_law(model);
  require(q.probs.size() == prior.probs.size(), "eval_Jpath_discrete: path space mismatch");
  StableSum acc;
  for (Eigen::Index i = 0; i < q.probs.size(); ++i) {
    if (q.probs[i] == 0.0) continue;
    require(prior.probs[i] > 0.0,
            "eval_Jpath_discrete: q is not absolutely continuous w.r.t. the prior");
    double total_ll = 0.0;
    for (int t = 0; t <= model.horizon(); ++t) {
      total_ll += model.log_likelihoods[t][q.space.state(i, t)];
    }
    require(std::isfinite(total_ll),
            "eval_Jpath_discrete: infinite log-likelihood on the support of q");
    acc.add(q.probs[i] * (-total_ll + std::log(q.probs[i] / prior.probs[i])));
  }
  return acc.value();
}

IdentityReport check_path_identity(const PathLaw& q, const DiscreteHMM& model,
                                   double tolerance) {
  const double lhs = eval_Jpath_discrete(q, model);
  const auto [posterior, log_z] = hmm_path_posterior_enumerate(model);
  const double kl = path_kl(q, posterior);
  return IdentityReport::make(lhs, kl - log_z, log_z, kl, tolerance);
}

std::vector<TruncationLevel> truncation_sequence_check(const DiscreteHMM& model,
                                                       const std::vector<int>& levels) {
  const auto [posterior, log_z] = hmm_path_posterior_enumerate(model);
  const Eigen::Index npaths = posterior.probs.size();

  // log f and g per path; f is the total likelihood, g its absolute log.
  Vector log_f(npaths), g(npaths);
  for (Eigen::Index i = 0; i < npaths; ++i) {
    double lf = 0.0, ga = 0.0;
    for (int t = 0; t <= model.horizon(); ++t) {
      const double ll = model.log_likelihoods[t][posterior.space.state(i, t)];
      lf += ll;
      ga += std::abs(ll);
    }
    log_f[i] = lf;
    g[i] = ga;
  }

  std::vector<TruncationLevel> out;
  for (int n : levels) {
    TruncationLevel lvl;
    lvl.level = n;
    StableSum mass;
    for (Eigen::Index i = 0; i < npaths; ++i) {
      const bool in_set = std::isfinite(log_f[i]) && std::abs(log_f[i]) <= n && g[i] <= n;
      if (in_set) mass.add(posterior.probs[i]);
    }
    lvl.posterior_mass = mass.value();
    if (lvl.posterior_mass <= 0.0) {
      lvl.empty = true;
      out.push_back(lvl);
      continue;
    }

    PathLaw nu_n{posterior.space, Vector::Zero(npaths)};
    for (Eigen::Index i = 0; i < npaths; ++i) {
      const bool in_set = std::isfinite(log_f[i]) && std::abs(log_f[i]) <= n && g[i] <= n;
      if (in_set) nu_n.probs[i] = posterior.probs[i] / lvl.posterior_mass;
    }

    lvl.kl_to_posterior = path_kl(nu_n, posterior);
    lvl.kl_residual = lvl.kl_to_posterior + std::log(lvl.posterior_mass);
    lvl.functional_value = eval_Jpath_discrete(nu_n, model);
    lvl.identity_residual =
        lvl.functional_value - (-std::log(lvl.posterior_mass) - log_z);
    out.push_back(lvl);
  }
  return out;
}

double eval_Jt_gaussian(const Gaussian& q, const Gaussian& forecast, const Matrix& H,
                        const Matrix& R, const Vector& y) {
  require(H.cols() == q.dim() && H.rows() == y.size(), "eval_Jt_gaussian: H shape mismatch");
  Eigen::LLT<Matrix> r_llt(symmetrized(R));
  require(r_llt.info() == Eigen::Success, "eval_Jt_gaussian: R not positive definite");
  const Matrix Lr = r_llt.matrixL();

  // E_q[-log N(y; Hx, R)] = 1/2 (Hm-y)' R^{-1} (Hm-y) + 1/2 tr(H'R^{-1}H P)
  //                         + 1/2 log det(2 pi R)
  const Vector resid = Lr.triangularView<Eigen::Lower>().solve(H * q.mean() - y);
  const Matrix HP = Lr.triangularView<Eigen::Lower>().solve(H * q.cov());
  const Matrix Ht = Lr.triangularView<Eigen::Lower>().solve(H);
  const double trace_term = (HP.array() * Ht.array()).sum();
  const double log_det_2piR =
      y.size() * kLog2Pi + 2.0 * Lr.diagonal().array().log().sum();

  return 0.5 * (resid.squaredNorm() + trace_term + log_det_2piR) +
         kl_gaussian(q, forecast);
}

Gaussian minimize_Jt_gaussian(const Gaussian& forecast, const Matrix& H,
                              const Matrix& R, const Vector& y) {
  const int n = forecast.dim();
  const CholParam par{n};

  Eigen::LLT<Matrix> r_llt(symmetrized(R));
  require(r_llt.info() == Eigen::Success, "minimize_Jt_gaussian: R not positive definite");
  Eigen::LLT<Matrix> pf_llt(forecast.cov());
  const Matrix I = Matrix::Identity(n, n);
  const Matrix Pf_inv = pf_llt.solve(I);
  const Matrix HtRinvH = H.transpose() * r_llt.solve(H);
  const Vector HtRinvy = H.transpose() * r_llt.solve(y);

  // Cost evaluated straight from the factor so infeasible line-search probes
  // yield +inf rather than a constructor failure.
  const Matrix Lr = r_llt.matrixL();
  const Matrix Lpf = forecast.chol_lower();
  const double log_det_2piR =
      y.size() * kLog2Pi + 2.0 * Lr.diagonal().array().log().sum();
  const CostFn cost = [&, Lr, Lpf, log_det_2piR](const Vector& theta) {
    const Vector m = theta.head(n);
    const Matrix L = par.unpack_L(theta);
    const Vector resid = Lr.triangularView<Eigen::Lower>().solve(H * m - y);
    const Matrix HL = Lr.triangularView<Eigen::Lower>().solve(H * L);
    const Matrix W = Lpf.triangularView<Eigen::Lower>().solve(L);
    const Vector d = Lpf.triangularView<Eigen::Lower>().solve(m - forecast.mean());
    const double log_det_P = 2.0 * L.diagonal().array().log().sum();
    const double value =
        0.5 * (resid.squaredNorm() + HL.squaredNorm() + log_det_2piR) +
        0.5 * (W.squaredNorm() + d.squaredNorm() - n + forecast.log_det_cov() - log_det_P);
    return std::isfinite(value) ? value : std::numeric_limits<double>::infinity();
  };
  const GradFn grad = [&](const Vector& theta) {
    const Vector m = theta.head(n);
    const Matrix L = par.unpack_L(theta);
    const Matrix P = L * L.transpose();
    Eigen::LLT<Matrix> p_llt(symmetrized(P));
    const Matrix P_inv = p_llt.solve(I);
    const Vector gm = HtRinvH * m - HtRinvy + Pf_inv * (m - forecast.mean());
    const Matrix gP = 0.5 * (HtRinvH + Pf_inv - P_inv);
    return par.pack_grad(gm, gP, L);
  };

  OptimSettings settings;
  settings.max_iterations = 500;
  settings.gradient_tolerance = 1e-10;
  const Vector init = par.pack(forecast.mean(), forecast.chol_lower());
  OptimResult res = minimize(cost, grad, init, settings);
  Vector argmin = res.argmin;
  double gnorm = res.gradient_norm;
  if (!res.converged) {
    // The quasi-Newton loop can stall at the cost's floating-point floor;
    // Newton steps on the analytic gradient finish the job.
    argmin = newton_polish(grad, argmin);
    gnorm = grad(argmin).norm();
  }
  if (gnorm > 1e-9) {
    throw std::runtime_error("minimize_Jt_gaussian: optimizer did not converge (" +
                             res.message + ", iterations = " + std::to_string(res.iterations) +
                             ", gradient norm = " + std::to_string(gnorm) + ")");
  }
  const Matrix L = par.unpack_L(argmin);
  return Gaussian(argmin.head(n), L * L.transpose());
}

Gaussian reverse_kl_gaussian_projection(const GridDensity& target) {
  const GridDensity t = target.normalized();
  const double h = t.spacing();
  const Vector log_target = t.density.array().log();

  // KL(N(m, s^2) || target) = -1/2 log(2 pi e s^2) - sum_i h q(x_i) log t_i
  const CostFn cost = [&](const Vector& theta) {
    const double m = theta[0];
    const double sigma = std::exp(theta[1]);
    double cross = 0.0;
    for (Eigen::Index i = 0; i < t.points.size(); ++i) {
      const double z = (t.points[i] - m) / sigma;
      const double qi = std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * M_PI));
      cross += h * qi * log_target[i];
    }
    return -0.5 * std::log(2.0 * M_PI * M_E * sigma * sigma) - cross;
  };
  const GradFn grad = [&](const Vector& theta) { return grad_fd(cost, theta, 1e-6); };

  // Mode-seeking start: grid argmax, width from the local log-curvature.
  Eigen::Index imax = 0;
  log_target.maxCoeff(&imax);
  double sigma0 = 0.05 * (t.points[t.points.size() - 1] - t.points[0]);
  if (imax > 0 && imax + 1 < t.points.size()) {
    const double d2 = (log_target[imax - 1] - 2.0 * log_target[imax] + log_target[imax + 1]) / (h * h);
    if (d2 < 0.0) sigma0 = std::min(sigma0, 1.0 / std::sqrt(-d2));
  }
  Vector init(2);
  init << t.points[imax], std::log(std::max(sigma0, 2.0 * h));

  OptimSettings settings;
  settings.max_iterations = 500;
  settings.gradient_tolerance = 1e-9;
  OptimResult res = minimize(cost, grad, init, settings);
  if (!res.converged && res.gradient_norm > 1e-6) {
    throw std::runtime_error("reverse_kl_gaussian_projection: optimizer did not converge ("
                             + res.message + ")");
  }
  Vector mean(1);
  mean << res.argmin[0];
  Matrix cov(1, 1);
  cov << std::exp(2.0 * res.argmin[1]);
  return Gaussian(mean, cov);
}

std::pair<double, double> quadratic_loss_minimizer_check(const Vector& values,
                                                         const Vector& probs) {
  require(values.size() == probs.size(), "quadratic_loss_minimizer_check: size mismatch");
  require((probs.array() >= 0.0).all() && std::abs(probs.sum() - 1.0) <= 1e-12,
          "quadratic_loss_minimizer_check: probs must be a distribution");
  const double mean = values.dot(probs);

  // Scan a candidate grid, then take the vertex of the parabola through the
  // three points around the discrete argmin.
  const double lo = values.minCoeff();
  const double hi = values.maxCoeff();
  const int ncand = 101;
  const double step = (hi > lo) ? (hi - lo) / (ncand - 1) : 1.0;
  const auto loss = [&](double a) {
    double l = 0.0;
    for (Eigen::Index i = 0; i < values.size(); ++i) {
      l += probs[i] * (values[i] - a) * (values[i] - a);
    }
    return l;
  };
  int best = 0;
  double best_loss = std::numeric_limits<double>::infinity();
  for (int i = 0; i < ncand; ++i) {
    const double l = loss(lo + i * step);
    if (l < best_loss) {
      best_loss = l;
      best = i;
    }
  }
  const int c = std::clamp(best, 1, ncand - 2);
  const double f0 = loss(lo + (c - 1) * step);
  const double f1 = loss(lo + c * step);
  const double f2 = loss(lo + (c + 1) * step);
  const double denom = f0 - 2.0 * f1 + f2;
  double argmin = lo + c * step;
  if (denom > 0.0) argmin += 0.5 * step * (f0 - f2) / denom;
  return {argmin, mean};
}

std::vector<double> map_zero_variance_limit(const GridDensity& target,
                                            const std::vector<double>& epsilons) {
  const GridDensity t = target.normalized();
  const Vector log_target = t.density.array().log();
  const double h = t.spacing();
  const GaussHermite gh = GaussHermite::order(40);
  const double inv_sqrt_pi = 1.0 / std::sqrt(M_PI);

  // Piecewise-linear interpolation of log target, clamped at the window ends.
  const auto log_t_at = [&](double x) {
    if (x <= t.points[0]) return log_target[0];
    const Eigen::Index last = t.points.size() - 1;
    if (x >= t.points[last]) return log_target[last];
    const double u = (x - t.points[0]) / h;
    const auto i = static_cast<Eigen::Index>(u);
    const double w = u - static_cast<double>(i);
    return (1.0 - w) * log_target[i] + w * log_target[i + 1];
  };

  std::vector<double> argmaxes;
  argmaxes.reserve(epsilons.size());
  for (double eps : epsilons) {
    require(eps > 0.0, "map_zero_variance_limit: epsilon must be positive");
    const double scale = std::sqrt(2.0 * eps);
    double best_x = t.points[0];
    double best_val = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < t.points.size(); ++i) {
      double val = 0.0;
      for (Eigen::Index k = 0; k < gh.nodes.size(); ++k) {
        val += gh.weights[k] * log_t_at(t.points[i] + scale * gh.nodes[k]);
      }
      val *= inv_sqrt_pi;
      if (val > best_val) {
        best_val = val;
        best_x = t.points[i];
      }
    }
    argmaxes.push_back(best_x);
  }
  return argmaxes;
}

GaussHermite GaussHermite::order(int n) {
  require(n >= 1, "GaussHermite: order must be positive");
  // Golub-Welsch on the symmetric Jacobi matrix of the Hermite recurrence.
  Matrix J = Matrix::Zero(n, n);
  for (int k = 0; k < n - 1; ++k) {
    const double b = std::sqrt(0.5 * (k + 1));
    J(k, k + 1) = b;
    J(k + 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(J);
  GaussHermite out;
  out.nodes = es.eigenvalues();
  out.weights = Vector(n);
  const double sqrt_pi = std::sqrt(M_PI);
  for (int k = 0; k < n; ++k) {
    const double v0 = es.eigenvectors()(0, k);
    out.weights[k] = sqrt_pi * v0 * v0;
  }
  return out;
}

}  // namespace varda
