#include "gkf/analytic_filter.hpp"
#include "gkf/experiment.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using gkf::BeliefState;
using gkf::Mat;
using gkf::Vec;

namespace {

gkf::LinearGaussianModel scalar(double a, double c, double q, double r) {
  return {Mat::Constant(1, 1, a), Mat::Zero(1, 1), Mat::Constant(1, 1, c), Mat::Constant(1, 1, q),
          Mat::Constant(1, 1, r)};
}

Vec s(double x) { return Vec::Constant(1, x); }

gkf::LinearGaussianModel model_of(const oracles::Problem& p) {
  return {p.A, p.B, p.C, Mat::Zero(p.A.rows(), p.A.rows()), p.sigma_z};
}

}  // namespace

TEST(Project, IdentityWithoutNoiseKeepsBelief) {
  const gkf::LinearGaussianModel m(Mat::Identity(2, 2), Mat::Zero(2, 1), Mat::Identity(2, 2),
                                   Mat::Zero(2, 2), Mat::Identity(2, 2));
  oracles::Rng g(1);
  const BeliefState b{g.vector(2), g.spd(2, 0.1)};
  const BeliefState p = gkf::project(m, b, s(3.0));
  EXPECT_EQ(p.mean, b.mean);
  EXPECT_LE(gkf::relative_error(p.covariance, b.covariance), 1e-15);
}

TEST(Project, ScalarCovariance) {
  const BeliefState p = gkf::project(scalar(2, 1, 1, 1), {s(0), Mat::Constant(1, 1, 1)}, s(0));
  EXPECT_DOUBLE_EQ(p.covariance(0, 0), 5.0);
}

TEST(Project, CovarianceMatchesMonteCarlo) {
  oracles::Rng g(2);
  const Mat a = g.matrix(3, 3), b = g.matrix(3, 1);
  const Mat cov = g.spd(3, 0.5), sw = g.spd(3, 0.5);
  const gkf::LinearGaussianModel m(a, b, Mat::Identity(3, 3), sw, Mat::Identity(3, 3));
  const Vec mean = g.vector(3), u = g.vector(1);
  const BeliefState p = gkf::project(m, {mean, cov}, u);

  gkf::GaussianSampler xs(cov, 3, "x"), ws(sw, 3, "w");
  const int n = 100000;
  Mat acc = Mat::Zero(3, 3);
  Vec sum = Vec::Zero(3);
  std::vector<Vec> draws;
  draws.reserve(n);
  for (int i = 0; i < n; ++i) {
    const Vec x = mean + xs.draw();
    draws.push_back(a * x + b * u + ws.draw());
    sum += draws.back();
  }
  const Vec emp_mean = sum / n;
  for (const Vec& d : draws) acc += (d - emp_mean) * (d - emp_mean).transpose();
  acc /= n;
  EXPECT_LE(gkf::relative_error(emp_mean, p.mean), 0.05);
  EXPECT_LE(gkf::relative_error(acc, p.covariance, 0.0), 0.05);
}

TEST(Project, DimensionMismatch) {
  const auto m = scalar(1, 1, 1, 1);
  EXPECT_THROW(gkf::project(m, {Vec::Zero(2), Mat::Identity(1, 1)}, s(0)), gkf::DimensionError);
  EXPECT_THROW(gkf::project(m, {s(0), Mat::Identity(1, 1)}, Vec::Zero(2)), gkf::DimensionError);
}

TEST(KalmanGain, ScalarHandSubstitution) {
  EXPECT_DOUBLE_EQ(gkf::kalman_gain(scalar(1, 1, 1, 1), Mat::Constant(1, 1, 1))(0, 0), 0.5);
}

TEST(KalmanGain, HugeObservationNoiseIgnoresMeasurements) {
  const gkf::LinearGaussianModel m(Mat::Identity(3, 3), Mat::Zero(3, 1), Mat::Identity(3, 3),
                                   Mat::Identity(3, 3), 1e12 * Mat::Identity(3, 3));
  EXPECT_LE(gkf::kalman_gain(m, Mat::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(KalmanGain, CertainPriorGivesZeroGain) {
  const gkf::LinearGaussianModel m(Mat::Identity(3, 3), Mat::Zero(3, 1), Mat::Identity(3, 3),
                                   Mat::Identity(3, 3), Mat::Identity(3, 3));
  EXPECT_EQ(gkf::kalman_gain(m, Mat::Zero(3, 3)), Mat::Zero(3, 3));
}

TEST(KalmanGain, SatisfiesDefiningEquation) {
  oracles::Rng g(3);
  for (int i = 0; i < 50; ++i) {
    const auto p = oracles::random_problem(g);
    const auto m = model_of(p);
    const Mat k = gkf::kalman_gain(m, p.prior_cov);
    const Mat s = p.C * p.prior_cov * p.C.transpose() + p.sigma_z;
    EXPECT_LE((k * s - p.prior_cov * p.C.transpose()).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(KalmanGain, DegenerateObservationNoise) {
  const gkf::LinearGaussianModel m(Mat::Identity(2, 2), Mat::Zero(2, 1), Mat::Identity(2, 2),
                                   Mat::Identity(2, 2), Mat::Zero(2, 2));
  try {
    gkf::kalman_gain(m, Mat::Zero(2, 2));
    FAIL() << "expected NumericalError";
  } catch (const gkf::NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("degenerate observation noise"), std::string::npos);
  }
}

TEST(Correct, ZeroInnovationKeepsMean) {
  oracles::Rng g(4);
  const auto p = oracles::random_problem(g);
  const auto m = model_of(p);
  const Vec mean = g.vector(3);
  EXPECT_LE(gkf::relative_error(gkf::correct(m, {mean, p.prior_cov}, p.C * mean).mean, mean), 1e-14);
}

TEST(Correct, ScalarHandEvaluation) {
  const BeliefState b = gkf::correct(scalar(1, 1, 1, 1), {s(0), Mat::Constant(1, 1, 1)}, s(2));
  EXPECT_DOUBLE_EQ(b.mean[0], 1.0);
  EXPECT_DOUBLE_EQ(b.covariance(0, 0), 0.5);
}

TEST(Correct, PosteriorNeverExceedsPrior) {
  oracles::Rng g(5);
  for (int i = 0; i < 100; ++i) {
    const auto p = oracles::random_problem(g);
    const auto m = model_of(p);
    const BeliefState b = gkf::correct(m, {g.vector(3), p.prior_cov}, p.y);
    EXPECT_TRUE(gkf::is_psd(b.covariance, 1e-8));
    EXPECT_TRUE(gkf::is_psd(p.prior_cov - b.covariance, 1e-8));
    EXPECT_LE(b.covariance.trace(), p.prior_cov.trace());
  }
}

TEST(Correct, CovarianceMatchesEstimatorErrorExpansion) {
  // The posterior error is (I - K C) e_prior - K v, so its covariance is
  // (I - KC) P (I - KC)^T + K R K^T, which equals (I - KC) P for the optimal K.
  oracles::Rng g(6);
  for (int i = 0; i < 100; ++i) {
    const auto p = oracles::random_problem(g);
    const auto m = model_of(p);
    const Mat k = gkf::kalman_gain(m, p.prior_cov);
    const Mat ikc = Mat::Identity(3, 3) - k * p.C;
    const Mat expanded = ikc * p.prior_cov * ikc.transpose() + k * p.sigma_z * k.transpose();
    const BeliefState b = gkf::correct(m, {Vec::Zero(3), p.prior_cov}, p.y);
    EXPECT_LE((b.covariance - expanded).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(FilterTrajectory, NoiselessWithExactInitTracksTruth) {
  const auto truth = gkf::kinematic_model(0.01, 0.0, 0.0, gkf::ObservationMode::identity());
  const auto traj = gkf::simulate(truth, Vec::Zero(3), gkf::control_schedule(10, 0.05, 500), 1);
  const gkf::LinearGaussianModel assumed(truth.A(), truth.B(), truth.C(), 1e-6 * Mat::Identity(3, 3),
                                         1e-6 * Mat::Identity(3, 3));
  const auto beliefs = gkf::filter_trajectory(assumed, {Vec::Zero(3), Mat::Zero(3, 3)}, traj);
  ASSERT_EQ(beliefs.size(), 500u);
  for (std::size_t t = 0; t < beliefs.size(); ++t) {
    EXPECT_LE((beliefs[t].mean - traj.states[t + 1]).cwiseAbs().maxCoeff(), 1e-9) << t;
  }
}

TEST(FilterTrajectory, ScalarCovarianceReachesRiccatiFixedPoint) {
  const double a = 0.95, c = 1.0, q = 0.5, r = 2.0;
  const auto m = scalar(a, c, q, r);
  gkf::Trajectory traj;
  traj.states.assign(301, s(0));
  traj.controls.assign(300, Vec::Zero(1));
  traj.observations.assign(300, s(0));
  const auto beliefs = gkf::filter_trajectory(m, {s(0), Mat::Zero(1, 1)}, traj);
  EXPECT_NEAR(beliefs.back().covariance(0, 0), oracles::riccati_fixed_point(a, c, q, r), 1e-9);
}

TEST(FilterTrajectory, BeatsPseudoInverseOfObservations) {
  gkf::ExperimentConfig cfg;
  cfg.c_mode = gkf::ObservationMode::random();
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    cfg.seed = seed;
    const auto models = gkf::build_models(cfg);
    const auto traj = gkf::simulate_experiment(cfg);
    const auto beliefs = gkf::filter_trajectory(models.assumed, {Vec::Zero(3), models.assumed.sigma_omega()}, traj);
    const Mat pinv = models.assumed.C().completeOrthogonalDecomposition().pseudoInverse();
    std::vector<Vec> kf, raw, truth;
    for (std::size_t t = 0; t < beliefs.size(); ++t) {
      kf.push_back(beliefs[t].mean);
      raw.push_back(pinv * traj.observations[t]);
      truth.push_back(traj.states[t + 1]);
    }
    EXPECT_LT(gkf::rmse_overall(kf, truth), gkf::rmse_overall(raw, truth)) << seed;
  }
}

TEST(FilterTrajectory, CovariancesStayPsdOverLongRun) {
  const auto traj = gkf::simulate_experiment(gkf::ExperimentConfig{});
  const auto models = gkf::build_models(gkf::ExperimentConfig{});
  const auto beliefs = gkf::filter_trajectory(models.assumed, {Vec::Zero(3), models.assumed.sigma_omega()}, traj);
  for (const auto& b : beliefs) ASSERT_TRUE(gkf::is_psd(b.covariance, 1e-8));
}

TEST(FilterTrajectory, LengthMismatch) {
  gkf::Trajectory traj;
  traj.states.assign(3, s(0));
  traj.controls.assign(2, s(0));
  traj.observations.assign(1, s(0));
  EXPECT_THROW(gkf::filter_trajectory(scalar(1, 1, 1, 1), {s(0), Mat::Identity(1, 1)}, traj),
               gkf::DimensionError);
}

TEST(MapSolve, UninformativeObservationReturnsPrior) {
  oracles::Rng g(7);
  const auto p = oracles::random_problem(g);
  const Vec got = gkf::map_solve(p.A, p.B, p.C, p.mu_prev, p.u, p.pi_x, Mat::Zero(3, 3), p.y);
  EXPECT_LE(gkf::relative_error(got, Vec(p.A * p.mu_prev + p.B * p.u)), 1e-12);
}

TEST(MapSolve, UninformativePriorInvertsC) {
  oracles::Rng g(8);
  const auto p = oracles::random_problem(g);
  const Vec got = gkf::map_solve(p.A, p.B, p.C, p.mu_prev, p.u, 1e-12 * Mat::Identity(3, 3), p.pi_z, p.y);
  EXPECT_LE(gkf::relative_error(got, Vec(p.C.inverse() * p.y)), 1e-8);
}

TEST(MapSolve, EquivalentToKalmanCorrection) {
  oracles::Rng g(9);
  for (int i = 0; i < 100; ++i) {
    const auto p = oracles::random_problem(g);
    const auto m = model_of(p);
    const Vec prior = p.A * p.mu_prev + p.B * p.u;
    const Vec kf = gkf::correct(m, {prior, p.prior_cov}, p.y).mean;
    const Vec map = gkf::map_solve(m, p.mu_prev, p.u, p.pi_x, p.pi_z, p.y);
    EXPECT_LE(gkf::relative_error(map, kf), 1e-8);
  }
}

TEST(MapSolve, IndefiniteNormalMatrix) {
  const Mat i3 = Mat::Identity(3, 3);
  EXPECT_THROW(gkf::map_solve(i3, Mat::Zero(3, 1), i3, Vec::Zero(3), Vec::Zero(1), -2.0 * i3, i3, Vec::Zero(3)),
               gkf::NumericalError);
}
