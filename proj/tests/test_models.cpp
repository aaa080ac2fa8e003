#include <doctest.h>

#include <cmath>

#include "varda/fixtures.hpp"
#include "varda/json_io.hpp"
#include "varda/models.hpp"

using namespace varda;

TEST_CASE("lorenz63 equilibria are fixed points") {
  const Eigen::Vector3d origin(0.0, 0.0, 0.0);
  CHECK(lorenz63_step(origin, 0.01).norm() == doctest::Approx(0.0).epsilon(1e-15));

  // C+ = (sqrt(beta (rho-1)), sqrt(beta (rho-1)), rho-1).
  const double c = std::sqrt(72.0);
  const Eigen::Vector3d cplus(c, c, 27.0);
  CHECK((lorenz63_step(cplus, 0.01) - cplus).norm() < 1e-10);  // O(dt^5) per step
}

TEST_CASE("lorenz63 RK4 order check") {
  const Eigen::Vector3d x0(1.0, 1.0, 1.0);
  const auto two_half_vs_full = [&](double dt) {
    const Eigen::Vector3d full = lorenz63_step(x0, dt);
    const Eigen::Vector3d half = lorenz63_step(lorenz63_step(x0, dt / 2.0), dt / 2.0);
    return (full - half).norm();
  };
  const double d1 = two_half_vs_full(0.02);
  const double d2 = two_half_vs_full(0.01);
  CHECK(d1 > 0.0);
  CHECK(d1 / d2 > 16.0);  // local error O(dt^5) => ratio ~ 32
  CHECK(d1 / d2 < 64.0);
  CHECK_THROWS_AS(lorenz63_step(x0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(lorenz63_step(x0, -0.01), std::invalid_argument);
}

TEST_CASE("lorenz63 step jacobian matches finite differences") {
  const Eigen::Vector3d x(2.0, -3.0, 15.0);
  const double dt = 0.01;
  const Eigen::Matrix3d J = lorenz63_step_jacobian(x, dt);
  const double h = 1e-6;
  for (int j = 0; j < 3; ++j) {
    Eigen::Vector3d xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    const Eigen::Vector3d col = (lorenz63_step(xp, dt) - lorenz63_step(xm, dt)) / (2.0 * h);
    CHECK((J.col(j) - col).norm() < 1e-9);
  }
}

TEST_CASE("degenerate chain simulates a constant trajectory") {
  DiscreteHMM hmm;
  hmm.initial = Vector::Zero(4);
  hmm.initial[2] = 1.0;
  hmm.transitions.assign(3, Matrix::Identity(4, 4));
  hmm.log_likelihoods.assign(4, Vector::Zero(4));
  const std::vector<int> path = simulate(hmm, {1, 0});
  for (int s : path) CHECK(s == 2);
}

TEST_CASE("simulate is deterministic per seed") {
  const LinearGaussianSSM model = fixtures::random_lgssm(2, 1, 4, {9, 0});
  const auto [t1, o1] = simulate(model, {77, 1});
  const auto [t2, o2] = simulate(model, {77, 1});
  const auto [t3, o3] = simulate(model, {77, 2});
  CHECK((t1 - t2).norm() == 0.0);
  CHECK((t1 - t3).norm() > 0.0);
  for (std::size_t t = 0; t < o1.observations.size(); ++t) {
    CHECK((o1.observations[t] - o2.observations[t]).norm() == 0.0);
  }
}

TEST_CASE("identity dynamics with small noise have matching increment variance") {
  LinearGaussianSSM model;
  const double eps = 0.01;
  model.init_mean = Vector::Zero(1);
  model.init_cov = Matrix::Identity(1, 1);
  model.transitions.assign(5, Matrix::Identity(1, 1));
  model.model_noise.assign(5, eps * Matrix::Identity(1, 1));
  model.obs_operators.assign(6, Matrix::Identity(1, 1));
  model.obs_noise.assign(6, Matrix::Identity(1, 1));

  double sum_sq = 0.0;
  int count = 0;
  for (int s = 0; s < 2000; ++s) {
    const auto [truth, obs] = simulate(model, {500 + static_cast<std::uint64_t>(s), 0});
    for (int t = 0; t < 5; ++t) {
      const double inc = truth(t + 1, 0) - truth(t, 0);
      sum_sq += inc * inc;
      ++count;
    }
  }
  CHECK(sum_sq / count == doctest::Approx(eps).epsilon(0.1));
}

TEST_CASE("discrete simulation matches transition frequencies") {
  const DiscreteHMM hmm = fixtures::random_hmm(3, 1, {33, 0});
  Vector counts = Vector::Zero(3);
  int from_state = 1;
  int total = 0;
  for (int s = 0; s < 10000; ++s) {
    const std::vector<int> path = simulate(hmm, {900 + static_cast<std::uint64_t>(s), 0});
    if (path[0] == from_state) {
      counts[path[1]] += 1.0;
      ++total;
    }
  }
  const Vector freq = counts / total;
  for (int j = 0; j < 3; ++j) {
    CHECK(freq[j] == doctest::Approx(hmm.transitions[0](from_state, j)).epsilon(0.15));
  }
}

TEST_CASE("emission_loglik values") {
  const DiscreteHMM hmm = fixtures::random_hmm(3, 2, {12, 0});
  CHECK(emission_loglik(hmm, 1, 2) == hmm.log_likelihoods[1][2]);
  CHECK_THROWS_AS(emission_loglik(hmm, 5, 0), std::invalid_argument);

  LinearGaussianSSM model = fixtures::scalar_lgssm();
  ObservationRecord obs;
  Vector y(1);
  y << 2.0;
  obs.observations = {y};
  Vector x(1);
  x << 2.0;
  // Zero innovation: -0.5 log det(2 pi R).
  CHECK(emission_loglik(model, obs, 0, x) ==
        doctest::Approx(-0.5 * std::log(2.0 * M_PI)).epsilon(1e-14));
  x[0] = 0.0;
  CHECK(emission_loglik(model, obs, 0, x) ==
        doctest::Approx(-0.5 * std::log(2.0 * M_PI) - 2.0).epsilon(1e-14));
}

TEST_CASE("model validation rejects malformed inputs") {
  DiscreteHMM hmm = fixtures::random_hmm(3, 2, {1, 1});
  hmm.initial[0] += 0.1;
  CHECK_THROWS_AS(hmm.validate(), std::invalid_argument);

  LinearGaussianSSM lg = fixtures::random_lgssm(2, 1, 2, {2, 2});
  lg.model_noise[0] = -Matrix::Identity(2, 2);
  CHECK_THROWS_AS(lg.validate(), std::invalid_argument);

  NonlinearSSM nl = fixtures::lorenz_window(3);
  nl.dt = 0.0;
  CHECK_THROWS_AS(nl.validate(), std::invalid_argument);
}

TEST_CASE("model JSON round trips") {
  const LinearGaussianSSM lg = fixtures::random_lgssm(2, 1, 3, {4, 4});
  const AnyModel lg2 = model_from_json(model_to_json(lg));
  const auto* lgp = std::get_if<LinearGaussianSSM>(&lg2);
  REQUIRE(lgp != nullptr);
  CHECK((lgp->init_cov - lg.init_cov).norm() == 0.0);
  CHECK((lgp->transitions[2] - lg.transitions[2]).norm() == 0.0);

  const DiscreteHMM hmm = fixtures::random_hmm(3, 2, {5, 5}, true);  // has a -inf atom
  const AnyModel hmm2 = model_from_json(model_to_json(hmm));
  const auto* hp = std::get_if<DiscreteHMM>(&hmm2);
  REQUIRE(hp != nullptr);
  CHECK(std::isinf(hp->log_likelihoods[0][0]));
  CHECK((hp->initial - hmm.initial).norm() == 0.0);

  const NonlinearSSM nl = fixtures::lorenz_window(4);
  const AnyModel nl2 = model_from_json(model_to_json(nl));
  const auto* np = std::get_if<NonlinearSSM>(&nl2);
  REQUIRE(np != nullptr);
  CHECK(np->horizon == 4);
  CHECK(np->dt == nl.dt);
  CHECK(np->substeps == nl.substeps);

  Json bad = model_to_json(lg);
  bad["kind"] = "unknown";
  CHECK_THROWS_AS(model_from_json(bad), std::invalid_argument);

  // Observation record round trip.
  const auto [truth, obs] = simulate(lg, {6, 6});
  const ObservationRecord obs2 = observations_from_json(observations_to_json(obs));
  CHECK(obs2.provenance.seed == obs.provenance.seed);
  for (std::size_t t = 0; t < obs.observations.size(); ++t) {
    CHECK((obs.observations[t] - obs2.observations[t]).norm() == 0.0);
  }
}
