#include "varda/optimize.hpp"

#include <algorithm>
#include <cmath>

namespace varda {
namespace {

constexpr double kArmijoC1 = 1e-4;

struct LineSearchResult {
  double alpha = 0.0;
  double cost = 0.0;
  bool ok = false;
};

// Unit step first; if it already satisfies sufficient decrease, the
// quadratic-interpolation step (exact line minimum for quadratic costs) is
// tried as an improvement. Otherwise backtracks with safeguarded
// interpolation, keeping each trial within [0.1, 0.5] of the previous one so
// steps can never collapse prematurely.
LineSearchResult line_search(const CostFn& cost, const Vector& x, const Vector& dir,
                             double f0, double slope0) {
  const auto phi = [&](double a) { return cost(x + a * dir); };
  const auto armijo = [&](double a, double fa) { return fa <= f0 + kArmijoC1 * a * slope0; };

  const double f1 = phi(1.0);
  if (std::isfinite(f1) && armijo(1.0, f1)) {
    const double denom = f1 - f0 - slope0;
    if (denom > 0.0) {
      const double aq = -slope0 / (2.0 * denom);
      if (aq > 0.0 && aq < 10.0 && std::isfinite(aq)) {
        const double fq = phi(aq);
        if (std::isfinite(fq) && fq < f1 && armijo(aq, fq)) return {aq, fq, true};
      }
    }
    return {1.0, f1, true};
  }

  double alpha = 1.0;
  double falpha = f1;
  for (int k = 0; k < 60; ++k) {
    double cand = 0.5 * alpha;
    const double denom = falpha - f0 - slope0 * alpha;
    if (std::isfinite(falpha) && denom > 0.0) {
      const double aq = -slope0 * alpha * alpha / (2.0 * denom);
      cand = std::clamp(aq, 0.1 * alpha, 0.5 * alpha);
    }
    alpha = cand;
    falpha = phi(alpha);
    if (std::isfinite(falpha) && armijo(alpha, falpha)) return {alpha, falpha, true};
  }
  return {};
}

}  // namespace

Vector grad_fd(const CostFn& cost, const Vector& point, double h) {
  require(h > 0.0, "grad_fd: h must be positive");
  Vector g(point.size());
  Vector p = point;
  for (Eigen::Index i = 0; i < point.size(); ++i) {
    const double xi = point[i];
    p[i] = xi + h;
    const double fp = cost(p);
    p[i] = xi - h;
    const double fm = cost(p);
    p[i] = xi;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

OptimResult minimize(const CostFn& cost, const GradFn& grad, const Vector& init,
                     const OptimSettings& settings) {
  const Eigen::Index n = init.size();
  OptimResult res;
  res.argmin = init;
  res.cost = cost(init);
  require(std::isfinite(res.cost), "minimize: cost not finite at init");

  res.cost_trace.push_back(res.cost);
  Vector g = grad(init);
  res.gradient_norm = g.norm();
  if (res.gradient_norm <= settings.gradient_tolerance) {
    res.converged = true;
    res.message = "gradient tolerance met at init";
    return res;
  }

  Matrix H = Matrix::Identity(n, n);
  bool scaled = false;
  Vector x = init;
  double f = res.cost;
  int stagnant = 0;

  for (int iter = 1; iter <= settings.max_iterations; ++iter) {
    Vector dir = -(H * g);
    double slope = g.dot(dir);
    if (slope >= 0.0) {  // curvature lost; restart from steepest descent
      H = Matrix::Identity(n, n);
      scaled = false;
      dir = -g;
      slope = -g.squaredNorm();
    }

    const LineSearchResult ls = line_search(cost, x, dir, f, slope);
    if (!ls.ok) {
      res.argmin = x;
      res.cost = f;
      res.gradient_norm = g.norm();
      res.iterations = iter;
      res.converged = false;
      res.message = "line search failed";
      return res;
    }

    const Vector x_new = x + ls.alpha * dir;
    const Vector g_new = grad(x_new);
    const Vector s = x_new - x;
    const Vector y = g_new - g;
    const double sy = s.dot(y);

    if (!scaled && sy > 0.0) {
      H *= sy / y.squaredNorm();
      scaled = true;
    }
    if (sy > 1e-12 * s.norm() * y.norm()) {
      const Vector Hy = H * y;
      const double yHy = y.dot(Hy);
      H += ((sy + yHy) / (sy * sy)) * (s * s.transpose()) -
           (Hy * s.transpose() + s * Hy.transpose()) / sy;
    }

    const double decrease = f - ls.cost;
    x = x_new;
    f = ls.cost;
    g = g_new;
    res.cost_trace.push_back(f);

    if (g.norm() <= settings.gradient_tolerance) {
      res.argmin = x;
      res.cost = f;
      res.gradient_norm = g.norm();
      res.iterations = iter;
      res.converged = true;
      res.message = "gradient tolerance met";
      return res;
    }

    // Stop once accepted steps no longer change the cost at double
    // resolution; the gradient cannot be driven further by line searches.
    stagnant = decrease <= 4e-16 * (1.0 + std::abs(f)) ? stagnant + 1 : 0;
    if (stagnant >= 5) {
      res.argmin = x;
      res.cost = f;
      res.gradient_norm = g.norm();
      res.iterations = iter;
      res.converged = false;
      res.message = "progress below floating-point resolution";
      return res;
    }
  }

  res.argmin = x;
  res.cost = f;
  res.gradient_norm = g.norm();
  res.iterations = settings.max_iterations;
  res.converged = false;
  res.message = "iteration cap reached";
  return res;
}

Vector newton_polish(const GradFn& grad, Vector x, int max_steps) {
  const Eigen::Index n = x.size();
  Vector g = grad(x);
  for (int it = 0; it < max_steps; ++it) {
    const double h = 1e-6;
    Matrix H(n, n);
    Vector xp = x;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double xj = x[j];
      xp[j] = xj + h;
      const Vector gp = grad(xp);
      xp[j] = xj - h;
      const Vector gm = grad(xp);
      xp[j] = xj;
      H.col(j) = (gp - gm) / (2.0 * h);
    }
    H = symmetrized(H);
    Eigen::LDLT<Matrix> ldlt(H);
    if (ldlt.info() != Eigen::Success) break;
    const Vector x_new = x + ldlt.solve(Vector(-g));
    const Vector g_new = grad(x_new);
    if (!g_new.allFinite() || g_new.norm() >= g.norm()) break;
    x = x_new;
    g = g_new;
    if (g.norm() < 1e-13) break;
  }
  return x;
}

MultiStartResult minimize_multistart(const CostFn& cost, const GradFn& grad,
                                     const Vector& init, const OptimSettings& settings,
                                     RandomSeed seed) {
  MultiStartResult out;
  const int starts = std::max(1, settings.start_count);
  for (int k = 0; k < starts; ++k) {
    Vector x0 = init;
    if (k > 0) {
      Rng rng(seed.child(static_cast<std::uint64_t>(k)));
      for (Eigen::Index i = 0; i < x0.size(); ++i) {
        x0[i] += settings.start_spread * rng.normal();
      }
    }
    OptimResult r = minimize(cost, grad, x0, settings);
    bool better = k == 0;
    if (!better && r.converged && !out.best.converged) better = true;
    if (!better && r.converged == out.best.converged && r.cost < out.best.cost) better = true;
    if (better) out.best = r;
    // Two runs found the same minimum only when both the cost and the argmin
    // agree; symmetric equal-cost minima are reported separately.
    bool merged = false;
    for (auto& m : out.distinct_minima) {
      const bool same_cost = std::abs(m.cost - r.cost) <= 1e-6 * std::max(1.0, std::abs(m.cost));
      const bool same_point =
          (m.argmin - r.argmin).cwiseAbs().maxCoeff() <=
          1e-6 * std::max(1.0, m.argmin.cwiseAbs().maxCoeff());
      if (same_cost && same_point) {
        merged = true;
        break;
      }
    }
    if (!merged) out.distinct_minima.push_back(r);
  }
  return out;
}

}  // namespace varda
