#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "varda/harness.hpp"

namespace {

constexpr int kExitPass = 0;
constexpr int kExitCheckFailure = 1;
constexpr int kExitUsage = 2;

varda::Json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw varda::UsageError("cannot open config file: " + path);
  try {
    return varda::Json::parse(in);
  } catch (const std::exception& e) {
    throw varda::UsageError("config parse error in " + path + ": " + e.what());
  }
}

void print_report(const varda::RunReport& report) {
  for (const auto& c : report.checks) {
    std::cout << (c.pass ? "PASS" : "FAIL") << "  " << c.name << "  ("
              << c.elapsed_seconds << " s)  " << c.detail << "\n";
  }
  std::cout << (report.overall_pass ? "all checks passed" : "CHECK FAILURES PRESENT")
            << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"varda: exact-identity verification harness for Bayesian filtering, "
               "4D-Var, KL control, Kalman, and EnKF"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_given = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file");
    cmd->add_option("--out", out_dir, "output directory for reports");
    cmd->add_option("--seed", seed, "seed override")->each([&](const std::string&) {
      seed_given = true;
    });
  };

  CLI::App* verify = app.add_subcommand("verify", "run the exact-identity check suite");
  add_common(verify);

  std::string experiment_name;
  CLI::App* experiment = app.add_subcommand("experiment", "run a named experiment");
  experiment->add_option("name", experiment_name, "experiment name")->required();
  add_common(experiment);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitPass : kExitUsage;
  }

  try {
    varda::Json config_json = varda::Json::object();
    if (!config_path.empty()) config_json = load_json_file(config_path);
    varda::ExperimentConfig cfg = varda::ExperimentConfig::from_json(config_json);
    if (seed_given) cfg.seed.seed = seed;
    if (!out_dir.empty()) {
      cfg.out_dir = out_dir;
    } else if (cfg.out_dir.empty()) {
      if (const char* env = std::getenv("VARDA_OUT")) cfg.out_dir = env;
    }

    varda::RunReport report;
    if (verify->parsed()) {
      report = varda::cmd_verify(cfg);
    } else {
      cfg.experiment = experiment_name;
      report = varda::cmd_experiment(cfg);
    }
    print_report(report);
    return report.overall_pass ? kExitPass : kExitCheckFailure;
  } catch (const varda::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCheckFailure;
  }
}
