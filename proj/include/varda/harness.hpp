#pragma once

#include <map>
#include <optional>
#include <string>

#include "varda/fixtures.hpp"
#include "varda/fourdvar.hpp"
#include "varda/json_io.hpp"

namespace varda {

/// Config or usage problems; mapped to exit code 2 by the CLI, distinct from
/// check failures (exit code 1).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Parsed run configuration. Tolerance overrides are per check name and must
/// be strictly positive; defaults are pinned in the check suite.
struct ExperimentConfig {
  std::string experiment;
  std::optional<Json> model;  // inline model document or {"path": ...}
  RandomSeed seed{20250801, 0};
  std::string out_dir;
  std::map<std::string, double> tolerances;
  Json settings = Json::object();
  bool corrupt_kalman_gain = false;  // harness-contract test hook

  static ExperimentConfig from_json(const Json& j);
  Json to_json() const;

  double tolerance(const std::string& check, double fallback) const;
};

struct CheckResult {
  std::string name;
  bool pass = false;
  double elapsed_seconds = 0.0;
  std::string detail;
};

struct RunReport {
  Json config_echo;
  std::vector<CheckResult> checks;
  Json tables = Json::object();
  double wall_clock_seconds = 0.0;
  bool overall_pass = false;

  Json to_json() const;
  std::string checks_csv() const;
};

namespace checks {

CheckResult one_step_identity(const ExperimentConfig& cfg);
CheckResult path_identity(const ExperimentConfig& cfg);
CheckResult truncation_lemma(const ExperimentConfig& cfg);
CheckResult kalman_form_equivalence(const ExperimentConfig& cfg);
CheckResult gaussian_variational_optimum(const ExperimentConfig& cfg);
CheckResult fourdvar_map_equivalence(const ExperimentConfig& cfg);
CheckResult gibbs_identity(const ExperimentConfig& cfg);
CheckResult soft_bellman_optimality(const ExperimentConfig& cfg);
CheckResult posterior_recovery(const ExperimentConfig& cfg);
CheckResult desirability_caveat(const ExperimentConfig& cfg);
CheckResult rl_reward_hierarchy(const ExperimentConfig& cfg);
CheckResult exact_transport(const ExperimentConfig& cfg);
CheckResult enkf_convergence(const ExperimentConfig& cfg);
CheckResult map_zero_variance_limit(const ExperimentConfig& cfg);
CheckResult posterior_mean_vs_map(const ExperimentConfig& cfg);
CheckResult kl_decomposition(const ExperimentConfig& cfg);
CheckResult rl_one_step(const ExperimentConfig& cfg);

/// The fast identity subset run by `verify`.
std::vector<CheckResult> run_verify_suite(const ExperimentConfig& cfg);

}  // namespace checks

/// Runs the verify suite; writes report.json/checks.csv when out_dir is set.
RunReport cmd_verify(const ExperimentConfig& cfg);

/// Runs one named experiment (fourdvar-map, enkf-convergence, exact-transport,
/// kl-posterior-recovery, reward-gibbs, map-limit) and writes JSON + CSV
/// outputs. Unknown names raise UsageError.
RunReport cmd_experiment(const ExperimentConfig& cfg);

}  // namespace varda
