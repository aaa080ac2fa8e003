#include <doctest.h>

#include <cmath>

#include "varda/exact_inference.hpp"
#include "varda/fixtures.hpp"

#include "oracles.hpp"

using namespace varda;

TEST_CASE("discrete_analysis hand values") {
  Vector f(2), ll(2);
  f << 0.5, 0.5;
  ll << std::log(0.8), std::log(0.2);
  const auto [analysis, log_z] = discrete_analysis(DiscreteDistribution(f), ll);
  CHECK(analysis.probs[0] == doctest::Approx(0.8).epsilon(1e-14));
  CHECK(analysis.probs[1] == doctest::Approx(0.2).epsilon(1e-14));
  CHECK(log_z == doctest::Approx(std::log(0.5)).epsilon(1e-14));

  // Flat likelihood: analysis = forecast, log Z = the common value.
  Vector flat = Vector::Constant(2, -0.7);
  const auto [same, lz] = discrete_analysis(DiscreteDistribution(f), flat);
  CHECK((same.probs - f).norm() < 1e-15);
  CHECK(lz == doctest::Approx(-0.7).epsilon(1e-14));
}

TEST_CASE("annihilated analysis mass raises an error naming the step") {
  DiscreteHMM hmm;
  hmm.initial = Vector::Zero(2);
  hmm.initial[0] = 1.0;
  hmm.transitions.assign(1, Matrix::Identity(2, 2));
  Vector bad(2);
  bad << -std::numeric_limits<double>::infinity(), 0.0;
  hmm.log_likelihoods = {Vector::Zero(2), bad};
  try {
    hmm_forward(hmm);
    FAIL("expected error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("t = 1") != std::string::npos);
  }
}

TEST_CASE("hmm_forward matches enumeration marginals") {
  for (int inst = 0; inst < 4; ++inst) {
    const int S = 4 + inst % 2;
    const int T = 3 + inst % 2;
    const DiscreteHMM hmm =
        fixtures::random_hmm(S, T, {100 + static_cast<std::uint64_t>(inst), 0});
    const HmmFilterOutput fwd = hmm_forward(hmm);
    const auto [posterior, log_z] = hmm_path_posterior_enumerate(hmm);

    CHECK(fwd.total_log_evidence == doctest::Approx(log_z).epsilon(1e-13));
    // Marginal at the final time equals the final analysis.
    Vector marginal = Vector::Zero(S);
    for (std::size_t i = 0; i < posterior.space.size(); ++i) {
      marginal[posterior.space.state(i, T)] += posterior.probs[static_cast<Eigen::Index>(i)];
    }
    CHECK((marginal - fwd.analyses[T].probs).cwiseAbs().maxCoeff() < 1e-12);
    // Evidence increments sum to the total.
    double acc = 0.0;
    for (double z : fwd.log_evidence_increments) acc += z;
    CHECK(acc == doctest::Approx(fwd.total_log_evidence).epsilon(1e-13));
  }
}

TEST_CASE("path enumeration degenerate cases") {
  // T = 0 reduces to the single analysis step.
  DiscreteHMM hmm = fixtures::one_step_hmm();
  const auto [law, log_z] = hmm_path_posterior_enumerate(hmm);
  CHECK(law.probs[0] == doctest::Approx(0.8).epsilon(1e-14));
  CHECK(log_z == doctest::Approx(std::log(0.5)).epsilon(1e-14));

  // Deterministic chain holds all mass on the constant path.
  DiscreteHMM det;
  det.initial = Vector::Zero(3);
  det.initial[1] = 1.0;
  det.transitions.assign(2, Matrix::Identity(3, 3));
  det.log_likelihoods.assign(3, Vector::Zero(3));
  const auto [dlaw, dz] = hmm_path_posterior_enumerate(det);
  const std::size_t const_path = 1 + 1 * 3 + 1 * 9;
  for (std::size_t i = 0; i < dlaw.space.size(); ++i) {
    CHECK(dlaw.probs[static_cast<Eigen::Index>(i)] ==
          doctest::Approx(i == const_path ? 1.0 : 0.0));
  }
}

TEST_CASE("kalman_analysis scalar hand values") {
  Matrix one(1, 1);
  one << 1.0;
  const Gaussian forecast(Vector::Zero(1), one);
  Vector y(1);
  y << 2.0;
  for (KalmanForm form : {KalmanForm::information, KalmanForm::gain}) {
    const auto [analysis, log_z] = kalman_analysis(forecast, one, one, y, form);
    CHECK(analysis.mean()[0] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(analysis.cov()(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
    // log N(2; 0, 2)
    CHECK(log_z ==
          doctest::Approx(-0.5 * std::log(2.0 * M_PI * 2.0) - 1.0).epsilon(1e-13));
  }
  CHECK(kalman_gain(one, one, one)(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("kalman_analysis degenerate observations") {
  Rng rng({44, 0});
  const Matrix Pf = fixtures::random_pd(3, rng);
  Vector mf(3);
  for (int i = 0; i < 3; ++i) mf[i] = rng.normal();
  const Gaussian forecast(mf, Pf);
  const Matrix R = fixtures::random_pd(2, rng);
  Matrix H(2, 3);
  for (int i = 0; i < 6; ++i) H(i / 3, i % 3) = rng.normal();

  // Zero innovation: mean unchanged, covariance still contracts.
  const Vector y = H * mf;
  const auto [a, lz] = kalman_analysis(forecast, H, R, y, KalmanForm::gain);
  CHECK((a.mean() - mf).norm() < 1e-12);
  CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(Pf - a.cov()).eigenvalues().minCoeff() > -1e-12);

  // H = 0: analysis equals forecast and the evidence is the pure noise law.
  Vector y0(2);
  y0 << 0.3, -0.4;
  const auto [a0, lz0] = kalman_analysis(forecast, Matrix::Zero(2, 3), R, y0, KalmanForm::gain);
  CHECK((a0.mean() - mf).norm() < 1e-13);
  CHECK(rel_error(a0.cov(), Pf) < 1e-13);
  CHECK(lz0 == doctest::Approx(test_oracles::gaussian_log_pdf(y0, Vector::Zero(2), R))
                   .epsilon(1e-12));
}

TEST_CASE("information and gain forms agree on random instances") {
  Rng rng({45, 0});
  for (int k = 0; k < 40; ++k) {
    const int n = 1 + k % 6;
    const int m = 1 + k % 4;
    const Matrix Pf = fixtures::random_pd(n, rng);
    const Matrix R = fixtures::random_pd(m, rng);
    Matrix H(m, n);
    for (int i = 0; i < m * n; ++i) H(i / n, i % n) = rng.normal();
    Vector mf(n), y(m);
    for (int i = 0; i < n; ++i) mf[i] = rng.normal();
    for (int i = 0; i < m; ++i) y[i] = rng.normal();
    const Gaussian forecast(mf, Pf);
    const auto [ia, iz] = kalman_analysis(forecast, H, R, y, KalmanForm::information);
    const auto [ga, gz] = kalman_analysis(forecast, H, R, y, KalmanForm::gain);
    CHECK(rel_error(ia.mean(), ga.mean()) < 1e-10);
    CHECK(rel_error(ia.cov(), ga.cov()) < 1e-10);
    CHECK(iz == doctest::Approx(gz).epsilon(1e-12));
    // Shared Woodbury identity.
    CHECK(rel_error(woodbury_posterior_cov(Pf, H, R), ga.cov()) < 1e-12);
  }
}

TEST_CASE("kalman_filter_run information accumulation and evidence") {
  // Repeated identical observations with near-perfect dynamics shrink the
  // analysis covariance monotonically in the Loewner order.
  LinearGaussianSSM model;
  model.init_mean = Vector::Zero(2);
  model.init_cov = Matrix::Identity(2, 2);
  model.transitions.assign(5, Matrix::Identity(2, 2));
  model.model_noise.assign(5, 1e-10 * Matrix::Identity(2, 2));
  model.obs_operators.assign(6, Matrix::Identity(2, 2));
  model.obs_noise.assign(6, Matrix::Identity(2, 2));
  ObservationRecord obs;
  Vector y(2);
  y << 1.0, -1.0;
  obs.observations.assign(6, y);

  const KalmanFilterOutput out = kalman_filter_run(model, obs);
  for (int t = 1; t <= 5; ++t) {
    const Matrix diff = out.analyses[t - 1].cov() - out.analyses[t].cov();
    CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(diff).eigenvalues().minCoeff() > -1e-9);
  }

  // Total evidence equals the joint observation law density.
  const LinearGaussianSSM rnd = fixtures::random_lgssm(2, 1, 5, {46, 0});
  const auto [truth, robs] = simulate(rnd, {47, 0});
  const KalmanFilterOutput rout = kalman_filter_run(rnd, robs);
  const auto [ymean, ycov] = test_oracles::joint_observation_law(rnd);
  Vector ystack(robs.observations.size());
  for (std::size_t t = 0; t < robs.observations.size(); ++t) {
    ystack[static_cast<Eigen::Index>(t)] = robs.observations[t][0];
  }
  CHECK(rout.total_log_evidence ==
        doctest::Approx(test_oracles::gaussian_log_pdf(ystack, ymean, ycov)).epsilon(1e-8));

  // T = 0 degenerates to a single analysis step.
  const LinearGaussianSSM single = fixtures::scalar_lgssm();
  ObservationRecord sobs;
  Vector sy(1);
  sy << 2.0;
  sobs.observations = {sy};
  const KalmanFilterOutput sout = kalman_filter_run(single, sobs);
  CHECK(sout.analyses.size() == 1);
  CHECK(sout.analyses[0].mean()[0] == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("joint trajectory posterior") {
  // T = 0 reduces to the analysis step.
  const LinearGaussianSSM single = fixtures::scalar_lgssm();
  ObservationRecord sobs;
  Vector sy(1);
  sy << 2.0;
  sobs.observations = {sy};
  const Gaussian joint0 = joint_gaussian_trajectory_posterior(single, sobs);
  CHECK(joint0.mean()[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(joint0.cov()(0, 0) == doctest::Approx(0.5).epsilon(1e-12));

  // Final-time marginal matches the filter.
  const LinearGaussianSSM model = fixtures::random_lgssm(1, 1, 3, {48, 0});
  const auto [truth, obs] = simulate(model, {49, 0});
  const Gaussian joint = joint_gaussian_trajectory_posterior(model, obs);
  const KalmanFilterOutput filt = kalman_filter_run(model, obs);
  const int T = model.horizon();
  CHECK(joint.mean()[T] == doctest::Approx(filt.analyses[T].mean()[0]).epsilon(1e-8));
  CHECK(joint.cov()(T, T) == doctest::Approx(filt.analyses[T].cov()(0, 0)).epsilon(1e-8));

  // Huge model error decouples the window: the time-t marginal approaches the
  // standalone analysis of y_t against the prior marginal.
  LinearGaussianSSM loose = model;
  for (auto& q : loose.model_noise) q = 1e8 * Matrix::Identity(1, 1);
  const Gaussian ljoint = joint_gaussian_trajectory_posterior(loose, obs);
  // With A ~ O(1) and Q huge, the prior marginal at t >= 1 is ~ N(A..xb, Q);
  // conditioning on one observation dominates. Compare t = 2 against the
  // standalone analysis of y_2 under that wide prior.
  Vector prior_mean(1);
  prior_mean << loose.transitions[1](0, 0) * loose.transitions[0](0, 0) * loose.init_mean[0];
  Matrix prior_cov(1, 1);
  prior_cov << 1e8;  // leading term
  const auto [standalone, lz] =
      kalman_analysis(Gaussian(prior_mean, prior_cov), loose.obs_operators[2],
                      loose.obs_noise[2], obs.observations[2], KalmanForm::gain);
  CHECK(ljoint.mean()[2] == doctest::Approx(standalone.mean()[0]).epsilon(1e-3));

  // Guard on the stacked dimension.
  const LinearGaussianSSM big = fixtures::random_lgssm(3, 1, 80, {50, 0});
  ObservationRecord bobs;
  bobs.observations.assign(81, Vector::Zero(1));
  CHECK_THROWS_AS(joint_gaussian_trajectory_posterior(big, bobs), std::invalid_argument);
}

TEST_CASE("strong-constraint x0 posterior reduces to the analysis at T = 0") {
  const LinearGaussianSSM single = fixtures::scalar_lgssm();
  ObservationRecord sobs;
  Vector sy(1);
  sy << 2.0;
  sobs.observations = {sy};
  const Gaussian post = strong_constraint_x0_posterior(single, sobs);
  CHECK(post.mean()[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(post.cov()(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("zero-likelihood atoms pass through the forward recursion") {
  // The truncation fixture carries a -inf atom; the analysis just excludes
  // it, and the recursion still matches enumeration.
  const DiscreteHMM hmm = fixtures::truncation_hmm();
  const HmmFilterOutput fwd = hmm_forward(hmm);
  CHECK(fwd.analyses[0].probs[0] == 0.0);
  const auto [posterior, log_z] = hmm_path_posterior_enumerate(hmm);
  CHECK(fwd.total_log_evidence == doctest::Approx(log_z).epsilon(1e-12));
  Vector marginal = Vector::Zero(hmm.num_states());
  for (std::size_t i = 0; i < posterior.space.size(); ++i) {
    marginal[posterior.space.state(i, hmm.horizon())] +=
        posterior.probs[static_cast<Eigen::Index>(i)];
  }
  CHECK((marginal - fwd.analyses[hmm.horizon()].probs).cwiseAbs().maxCoeff() < 1e-12);
}
