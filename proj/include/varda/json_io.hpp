#pragma once

#include <string>
#include <variant>

#include <json.hpp>

#include "varda/enkf.hpp"
#include "varda/kl_control.hpp"
#include "varda/variational.hpp"

namespace varda {

using Json = nlohmann::json;
using AnyModel = std::variant<LinearGaussianSSM, DiscreteHMM, NonlinearSSM>;

Json vector_to_json(const Vector& v);
Vector vector_from_json(const Json& j);
Json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j);

/// Model documents are tagged with {"kind": "lgssm" | "hmm" | "lorenz63"}.
Json model_to_json(const LinearGaussianSSM& m);
Json model_to_json(const DiscreteHMM& m);
Json model_to_json(const NonlinearSSM& m);
AnyModel model_from_json(const Json& j);

Json observations_to_json(const ObservationRecord& obs);
ObservationRecord observations_from_json(const Json& j);

Json mdp_to_json(const FiniteMDP& m);
FiniteMDP mdp_from_json(const Json& j);

Json to_json(const IdentityReport& r);
Json to_json(const KalmanFilterOutput& out);
Json to_json(const HmmFilterOutput& out);
Json to_json(const ConvergenceTable& t);
Json to_json(const OptimResult& r);

/// One row per report: lhs,rhs,residual,evidence,kl_to_posterior,tolerance,pass.
std::string identity_reports_to_csv(const std::vector<IdentityReport>& reports);

/// Columns: N,seed_count,time,mean_error,cov_error.
std::string convergence_table_to_csv(const ConvergenceTable& t);

/// Shortest round-trip double formatting used by every CSV writer.
std::string format_double(double x);

}  // namespace varda
