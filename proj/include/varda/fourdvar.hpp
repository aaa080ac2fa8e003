#pragma once

#include <variant>

#include "varda/optimize.hpp"
#include "varda/variational.hpp"

namespace varda {

/// Strong- or weak-constraint variational cost specification. Strong ignores
/// the model-error covariances (perfect model, optimize x_0); weak requires
/// them PD (optimize the stacked trajectory).
struct VarCostSpec {
  enum class Flavor { strong, weak };

  Flavor flavor = Flavor::strong;
  std::variant<LinearGaussianSSM, NonlinearSSM> model;
  ObservationRecord observations;

  int state_dim() const;
  int horizon() const;
  void validate() const;
};

/// Background plus observation misfit of the deterministic roll-out from x0.
double cost_strong(const Vector& x0, const VarCostSpec& spec);

/// Exact gradient of cost_strong; chains per-step Jacobians.
Vector grad_strong_analytic(const Vector& x0, const VarCostSpec& spec);

/// Background + model-error + observation misfit of a stacked trajectory
/// (x_0..x_T flattened time-major).
double cost_weak(const Vector& traj, const VarCostSpec& spec);

/// Exact termwise gradient of cost_weak.
Vector grad_weak_analytic(const Vector& traj, const VarCostSpec& spec);

/// Minimizes the configured cost and compares the minimizer with the exact
/// Gaussian posterior mean (weak: joint trajectory posterior; strong:
/// conditioned x_0 posterior). residual = max-abs deviation.
IdentityReport verify_map_equivalence(const VarCostSpec& spec,
                                      const OptimSettings& settings = {},
                                      RandomSeed seed = {});

}  // namespace varda
