#include "varda/json_io.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace varda {
namespace {

std::vector<Matrix> matrices_from_json(const Json& j) {
  std::vector<Matrix> out;
  for (const auto& m : j) out.push_back(matrix_from_json(m));
  return out;
}

Json matrices_to_json(const std::vector<Matrix>& ms) {
  Json j = Json::array();
  for (const auto& m : ms) j.push_back(matrix_to_json(m));
  return j;
}

}  // namespace

Json vector_to_json(const Vector& v) {
  Json j = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

Vector vector_from_json(const Json& j) {
  Vector v(j.size());
  Eigen::Index i = 0;
  for (const auto& x : j) {
    if (x.is_string() && x.get<std::string>() == "-inf") {
      v[i++] = -std::numeric_limits<double>::infinity();
    } else {
      v[i++] = x.get<double>();
    }
  }
  return v;
}

Json matrix_to_json(const Matrix& m) {
  Json j = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    j.push_back(row);
  }
  return j;
}

Matrix matrix_from_json(const Json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  require(rows > 0, "matrix_from_json: empty matrix");
  const auto cols = static_cast<Eigen::Index>(j.front().size());
  Matrix m(rows, cols);
  Eigen::Index r = 0;
  for (const auto& row : j) {
    require(static_cast<Eigen::Index>(row.size()) == cols, "matrix_from_json: ragged rows");
    Eigen::Index c = 0;
    for (const auto& x : row) m(r, c++) = x.get<double>();
    ++r;
  }
  return m;
}

Json model_to_json(const LinearGaussianSSM& m) {
  return Json{{"kind", "lgssm"},
              {"init_mean", vector_to_json(m.init_mean)},
              {"init_cov", matrix_to_json(m.init_cov)},
              {"transitions", matrices_to_json(m.transitions)},
              {"model_noise", matrices_to_json(m.model_noise)},
              {"obs_operators", matrices_to_json(m.obs_operators)},
              {"obs_noise", matrices_to_json(m.obs_noise)}};
}

Json model_to_json(const DiscreteHMM& m) {
  Json lls = Json::array();
  for (const auto& v : m.log_likelihoods) {
    Json row = Json::array();
    for (Eigen::Index s = 0; s < v.size(); ++s) {
      if (std::isinf(v[s]) && v[s] < 0) {
        row.push_back("-inf");
      } else {
        row.push_back(v[s]);
      }
    }
    lls.push_back(row);
  }
  return Json{{"kind", "hmm"},
              {"initial", vector_to_json(m.initial)},
              {"transitions", matrices_to_json(m.transitions)},
              {"log_likelihoods", lls}};
}

Json model_to_json(const NonlinearSSM& m) {
  return Json{{"kind", "lorenz63"},
              {"horizon", m.horizon},
              {"dt", m.dt},
              {"substeps", m.substeps},
              {"sigma", m.params.sigma},
              {"rho", m.params.rho},
              {"beta", m.params.beta},
              {"init_mean", vector_to_json(m.init_mean)},
              {"init_cov", matrix_to_json(m.init_cov)},
              {"model_noise", matrices_to_json(m.model_noise)},
              {"obs_operators", matrices_to_json(m.obs_operators)},
              {"obs_noise", matrices_to_json(m.obs_noise)}};
}

AnyModel model_from_json(const Json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "lgssm") {
    LinearGaussianSSM m;
    m.init_mean = vector_from_json(j.at("init_mean"));
    m.init_cov = matrix_from_json(j.at("init_cov"));
    m.transitions = matrices_from_json(j.at("transitions"));
    m.model_noise = matrices_from_json(j.at("model_noise"));
    m.obs_operators = matrices_from_json(j.at("obs_operators"));
    m.obs_noise = matrices_from_json(j.at("obs_noise"));
    m.validate();
    return m;
  }
  if (kind == "hmm") {
    DiscreteHMM m;
    m.initial = vector_from_json(j.at("initial"));
    m.transitions = matrices_from_json(j.at("transitions"));
    for (const auto& row : j.at("log_likelihoods")) {
      m.log_likelihoods.push_back(vector_from_json(row));
    }
    m.validate();
    return m;
  }
  if (kind == "lorenz63") {
    NonlinearSSM m;
    m.horizon = j.at("horizon").get<int>();
    m.dt = j.at("dt").get<double>();
    m.substeps = j.value("substeps", 1);
    m.params.sigma = j.value("sigma", 10.0);
    m.params.rho = j.value("rho", 28.0);
    m.params.beta = j.value("beta", 8.0 / 3.0);
    m.init_mean = vector_from_json(j.at("init_mean"));
    m.init_cov = matrix_from_json(j.at("init_cov"));
    if (j.contains("model_noise")) m.model_noise = matrices_from_json(j.at("model_noise"));
    m.obs_operators = matrices_from_json(j.at("obs_operators"));
    m.obs_noise = matrices_from_json(j.at("obs_noise"));
    m.validate();
    return m;
  }
  throw std::invalid_argument("model_from_json: unknown kind '" + kind + "'");
}

Json observations_to_json(const ObservationRecord& obs) {
  Json ys = Json::array();
  for (const auto& y : obs.observations) ys.push_back(vector_to_json(y));
  return Json{{"observations", ys},
              {"seed", obs.provenance.seed},
              {"stream", obs.provenance.stream}};
}

ObservationRecord observations_from_json(const Json& j) {
  ObservationRecord obs;
  for (const auto& y : j.at("observations")) obs.observations.push_back(vector_from_json(y));
  obs.provenance.seed = j.value("seed", 0ULL);
  obs.provenance.stream = j.value("stream", 0ULL);
  return obs;
}

Json mdp_to_json(const FiniteMDP& m) {
  Json trans = Json::array();
  for (const auto& per_state : m.transitions) trans.push_back(matrices_to_json(per_state));
  Json costs = Json::array();
  for (const auto& c : m.stage_costs) costs.push_back(vector_to_json(c));
  return Json{{"horizon", m.horizon},
              {"num_states", m.num_states},
              {"num_actions", m.num_actions},
              {"initial", vector_to_json(m.initial)},
              {"passive", matrices_to_json(m.passive)},
              {"transitions", trans},
              {"stage_costs", costs}};
}

FiniteMDP mdp_from_json(const Json& j) {
  FiniteMDP m;
  m.horizon = j.at("horizon").get<int>();
  m.num_states = j.at("num_states").get<int>();
  m.num_actions = j.at("num_actions").get<int>();
  m.initial = vector_from_json(j.at("initial"));
  m.passive = matrices_from_json(j.at("passive"));
  for (const auto& per_state : j.at("transitions")) {
    m.transitions.push_back(matrices_from_json(per_state));
  }
  for (const auto& c : j.at("stage_costs")) m.stage_costs.push_back(vector_from_json(c));
  m.validate();
  return m;
}

Json to_json(const IdentityReport& r) {
  return Json{{"lhs", r.lhs},
              {"rhs", r.rhs},
              {"residual", r.residual},
              {"evidence", r.evidence},
              {"kl_to_posterior", r.kl_to_posterior},
              {"tolerance", r.tolerance},
              {"pass", r.pass}};
}

Json to_json(const KalmanFilterOutput& out) {
  Json fm = Json::array(), fc = Json::array(), am = Json::array(), ac = Json::array();
  for (const auto& g : out.forecasts) {
    fm.push_back(vector_to_json(g.mean()));
    fc.push_back(matrix_to_json(g.cov()));
  }
  for (const auto& g : out.analyses) {
    am.push_back(vector_to_json(g.mean()));
    ac.push_back(matrix_to_json(g.cov()));
  }
  return Json{{"forecast_means", fm},
              {"forecast_covs", fc},
              {"analysis_means", am},
              {"analysis_covs", ac},
              {"log_evidence_increments", vector_to_json(Eigen::Map<const Vector>(
                                              out.log_evidence_increments.data(),
                                              out.log_evidence_increments.size()))},
              {"total_log_evidence", out.total_log_evidence}};
}

Json to_json(const HmmFilterOutput& out) {
  Json f = Json::array(), a = Json::array();
  for (const auto& d : out.forecasts) f.push_back(vector_to_json(d.probs));
  for (const auto& d : out.analyses) a.push_back(vector_to_json(d.probs));
  return Json{{"forecasts", f},
              {"analyses", a},
              {"log_evidence_increments", vector_to_json(Eigen::Map<const Vector>(
                                              out.log_evidence_increments.data(),
                                              out.log_evidence_increments.size()))},
              {"total_log_evidence", out.total_log_evidence}};
}

Json to_json(const ConvergenceTable& t) {
  Json rows = Json::array();
  for (const auto& r : t.rows) {
    rows.push_back(Json{{"N", r.ensemble_size},
                        {"seed_count", r.seed_count},
                        {"time", r.time},
                        {"mean_error", r.mean_error},
                        {"cov_error", r.cov_error}});
  }
  return Json{{"rows", rows},
              {"mean_error_slope", t.mean_error_slope},
              {"cov_error_slope", t.cov_error_slope}};
}

Json to_json(const OptimResult& r) {
  return Json{{"argmin", vector_to_json(r.argmin)},
              {"cost", r.cost},
              {"gradient_norm", r.gradient_norm},
              {"iterations", r.iterations},
              {"converged", r.converged},
              {"message", r.message}};
}

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::string identity_reports_to_csv(const std::vector<IdentityReport>& reports) {
  std::ostringstream os;
  os << "lhs,rhs,residual,evidence,kl_to_posterior,tolerance,pass\n";
  for (const auto& r : reports) {
    os << format_double(r.lhs) << ',' << format_double(r.rhs) << ','
       << format_double(r.residual) << ',' << format_double(r.evidence) << ','
       << format_double(r.kl_to_posterior) << ',' << format_double(r.tolerance) << ','
       << (r.pass ? 1 : 0) << '\n';
  }
  return os.str();
}

std::string convergence_table_to_csv(const ConvergenceTable& t) {
  std::ostringstream os;
  os << "N,seed_count,time,mean_error,cov_error\n";
  for (const auto& r : t.rows) {
    os << r.ensemble_size << ',' << r.seed_count << ',' << r.time << ','
       << format_double(r.mean_error) << ',' << format_double(r.cov_error) << '\n';
  }
  return os.str();
}

}  // namespace varda
