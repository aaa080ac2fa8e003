// Acceptance suite: one line per criterion, nonzero exit on any failure.
// Each criterion carries the runtime budget it must respect.
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "varda/harness.hpp"

namespace {

using varda::CheckResult;
using varda::ExperimentConfig;

struct Criterion {
  std::string name;
  double budget_seconds;
  std::function<CheckResult(const ExperimentConfig&)> run;
};

CheckResult merge(const CheckResult& a, const CheckResult& b, const std::string& name) {
  CheckResult out;
  out.name = name;
  out.pass = a.pass && b.pass;
  out.elapsed_seconds = a.elapsed_seconds + b.elapsed_seconds;
  out.detail = a.detail + "; " + b.detail;
  return out;
}

}  // namespace

int main() {
  namespace checks = varda::checks;
  const ExperimentConfig cfg;  // pinned defaults: seeds and spec tolerances

  const std::vector<Criterion> criteria = {
      {"one-step-identity", 1.0, checks::one_step_identity},
      {"path-identity", 10.0, checks::path_identity},
      {"truncation-lemma", 1.0, checks::truncation_lemma},
      {"kalman-form-equivalence", 1.0, checks::kalman_form_equivalence},
      {"gaussian-variational-optimum", 30.0, checks::gaussian_variational_optimum},
      {"fourdvar-map-equivalence", 60.0, checks::fourdvar_map_equivalence},
      {"gibbs-identity", 5.0, checks::gibbs_identity},
      {"soft-bellman-optimality", 30.0, checks::soft_bellman_optimality},
      {"posterior-recovery", 5.0, checks::posterior_recovery},
      {"desirability-caveat", 1.0, checks::desirability_caveat},
      {"rl-reward-hierarchy", 5.0,
       [](const ExperimentConfig& c) {
         return merge(checks::rl_one_step(c), checks::rl_reward_hierarchy(c),
                      "rl-reward-hierarchy");
       }},
      {"exact-transport", 60.0, checks::exact_transport},
      {"enkf-convergence", 120.0, checks::enkf_convergence},
      {"map-zero-variance-limit", 5.0, checks::map_zero_variance_limit},
      {"posterior-mean-vs-map", 1.0, checks::posterior_mean_vs_map},
  };

  int failures = 0;
  for (const auto& criterion : criteria) {
    CheckResult result;
    try {
      result = criterion.run(cfg);
    } catch (const std::exception& e) {
      result.name = criterion.name;
      result.pass = false;
      result.detail = std::string("exception: ") + e.what();
    }
    const bool in_budget = result.elapsed_seconds < criterion.budget_seconds;
    const bool pass = result.pass && in_budget;
    if (!pass) ++failures;
    std::printf("%s  %-28s  (%7.3f s / budget %5.0f s)  %s%s\n", pass ? "PASS" : "FAIL",
                criterion.name.c_str(), result.elapsed_seconds, criterion.budget_seconds,
                result.detail.c_str(), in_budget ? "" : "  [OVER BUDGET]");
  }
  if (failures > 0) {
    std::printf("%d criterion failure(s)\n", failures);
    return 1;
  }
  std::printf("all %zu acceptance criteria passed\n", criteria.size());
  return 0;
}
