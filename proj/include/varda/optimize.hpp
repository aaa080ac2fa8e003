#pragma once

#include <functional>
#include <string>
#include <vector>

#include "varda/rng.hpp"

namespace varda {

using CostFn = std::function<double(const Vector&)>;
using GradFn = std::function<Vector(const Vector&)>;

struct OptimSettings {
  int max_iterations = 500;
  double gradient_tolerance = 1e-8;
  int start_count = 1;       // multi-start only
  double start_spread = 1.0; // stddev of start perturbations
};

struct OptimResult {
  Vector argmin;
  double cost = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string message;
  std::vector<double> cost_trace;  // accepted cost per iteration, starting at init
};

struct MultiStartResult {
  OptimResult best;
  // One entry per distinct local minimum found (costs clustered at 1e-6).
  std::vector<OptimResult> distinct_minima;
};

/// Central finite differences, error O(h^2).
Vector grad_fd(const CostFn& cost, const Vector& point, double h);

/// BFGS with a backtracking line search (sufficient decrease, quadratic
/// interpolation candidate). Cost sequence is monotone nonincreasing.
/// Line-search failure or the iteration cap yields converged = false with
/// diagnostics rather than an exception.
OptimResult minimize(const CostFn& cost, const GradFn& grad, const Vector& init,
                     const OptimSettings& settings = {});

/// Repeats minimize from seeded Gaussian perturbations of init and collects
/// the distinct local minima.
MultiStartResult minimize_multistart(const CostFn& cost, const GradFn& grad,
                                     const Vector& init, const OptimSettings& settings,
                                     RandomSeed seed);

/// Newton refinement near a stationary point using a finite-difference
/// Hessian of the gradient; pushes the gradient below the cost function's
/// floating-point floor. Steps are only taken while the gradient norm
/// decreases.
Vector newton_polish(const GradFn& grad, Vector x, int max_steps = 4);

}  // namespace varda
