#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "mapdyn/errors.hpp"
#include "mapdyn/estimator.hpp"
#include "mapdyn/simharness.hpp"
#include "support/models.hpp"

namespace mapdyn {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

SyntheticScenario two_dof_scenario(const KinematicTreeModel& m) {
  SyntheticScenario s;
  s.model = &m;
  s.trajectory.joints = {Waveform::sine(0.4, 0.5, 0.1), Waveform::sine(0.3, 1.2, -0.4, 0.2)};
  s.trajectory.duration = 1.0;
  s.trajectory.rate = 50.0;
  s.specs = testing::two_dof_specs(m);
  ExternalForceScript f;
  f.link = "link2";
  f.constant << 1.0, -2.0, 3.0, 0.1, 0.2, -0.3;
  f.amplitude << 0.5, 0.0, 0.0, 0.0, 0.05, 0.0;
  f.frequency = 2.0;
  s.forces = {f};
  s.seed = 17;
  return s;
}

TEST(Waveform, SineDerivatives) {
  const Waveform w = Waveform::sine(0.7, 1.5, 0.3, 0.1);
  for (double t : {0.0, 0.13, 0.77}) {
    const double a = kTwoPi * 1.5 * t + 0.3, om = kTwoPi * 1.5;
    const Eigen::Vector3d v = w.evaluate(t);
    EXPECT_NEAR(v(0), 0.1 + 0.7 * std::sin(a), 1e-14);
    EXPECT_NEAR(v(1), 0.7 * om * std::cos(a), 1e-12);
    EXPECT_NEAR(v(2), -0.7 * om * om * std::sin(a), 1e-11);
  }
  const auto r = w.range(0.0, 1.0);
  EXPECT_NEAR(r.first, 0.1 - 0.7, 1e-3);
  EXPECT_NEAR(r.second, 0.1 + 0.7, 1e-3);
  EXPECT_EQ(Waveform::constant(0.3).evaluate(2.0), Eigen::Vector3d(0.3, 0.0, 0.0));
}

TEST(Waveform, SplineInterpolatesKnotsAndCubics) {
  // Cubic data interpolated by a cubic spline through enough knots.
  std::vector<double> t, v;
  for (int k = 0; k <= 8; ++k) {
    t.push_back(0.125 * k);
    v.push_back(0.2 * std::pow(t.back(), 3) - 0.1 * t.back());
  }
  const Waveform w = Waveform::spline(t, v);
  for (std::size_t k = 0; k < t.size(); ++k) EXPECT_NEAR(w.evaluate(t[k])(0), v[k], 1e-10);
  EXPECT_NEAR(w.evaluate(1.5)(0), v.back(), 1e-12);
  EXPECT_EQ(w.evaluate(1.5)(2), 0.0);
  EXPECT_THROW(Waveform::spline({0.0, 1.0, 0.5}, {0.0, 1.0, 2.0}), InputError);
  EXPECT_THROW(Waveform::spline({0.0}, {0.0}), InputError);
  EXPECT_THROW(Waveform::spline({0.0, 1.0}, {0.0}), InputError);
}

TEST(Trajectory, SampleTimes) {
  TrajectorySpec tr;
  tr.duration = 2.0;
  tr.rate = 240.0;
  EXPECT_EQ(tr.sample_count(), 480u);
  EXPECT_DOUBLE_EQ(tr.time(240), 1.0);
}

TEST(GroundTruth, ConstantTrajectoryHasZeroAcceleration) {
  const KinematicTreeModel m = testing::two_dof_example();
  SyntheticScenario s = two_dof_scenario(m);
  s.trajectory.joints = {Waveform::constant(0.2), Waveform::constant(-0.1)};
  s.forces.clear();
  const auto truth = generate_ground_truth(s);
  ASSERT_EQ(truth.size(), 50u);
  for (const auto& g : truth) {
    EXPECT_TRUE(g.qdd.isZero(0.0));
    EXPECT_TRUE(g.qd.isZero(0.0));
    EXPECT_EQ(g.q, Eigen::Vector2d(0.2, -0.1));
    EXPECT_EQ(g.d.qdd(1), 0.0);
  }
}

TEST(GroundTruth, AnalyticSamplesSatisfyConstraints) {
  const KinematicTreeModel m = testing::two_dof_example();
  const SyntheticScenario s = two_dof_scenario(m);
  const auto truth = generate_ground_truth(s);
  for (const auto& g : truth) {
    const double a = kTwoPi * 0.5 * g.t + 0.1;
    EXPECT_NEAR(g.qdd(0), -0.4 * std::pow(kTwoPi * 0.5, 2) * std::sin(a), 1e-12);
    EXPECT_EQ(g.d.qdd(1), g.qdd(0));
    const ConstraintSystem c = assemble_constraints(m, g.q, g.qd);
    const Eigen::VectorXd r = c.D * g.d.values() + c.b;
    EXPECT_LE(r.cwiseAbs().maxCoeff(), 1e-9 * (1.0 + g.d.values().cwiseAbs().maxCoeff()));
    Vec6 fx = Vec6(1.0, -2.0, 3.0, 0.1, 0.2, -0.3);
    fx(0) += 0.5 * std::sin(kTwoPi * 2.0 * g.t);
    fx(4) += 0.05 * std::sin(kTwoPi * 2.0 * g.t);
    EXPECT_LE((g.d.fx(2) - fx).norm(), 1e-14);
    EXPECT_TRUE(g.d.fx(1).isZero(0.0));
  }
}

TEST(GroundTruth, WorkerCountDoesNotChangeResults) {
  const KinematicTreeModel m = testing::two_dof_example();
  const SyntheticScenario s = two_dof_scenario(m);
  const auto one = generate_ground_truth(s, 1), four = generate_ground_truth(s, 4);
  const auto oa = generate_observations(s, one, 1), ob = generate_observations(s, four, 3);
  ASSERT_EQ(one.size(), four.size());
  for (std::size_t k = 0; k < one.size(); ++k) {
    EXPECT_EQ(one[k].d.values(), four[k].d.values());
    EXPECT_EQ(oa.y[k], ob.y[k]);
  }
}

TEST(Observations, NoiselessReadingsMatchAssembly) {
  const KinematicTreeModel m = testing::two_dof_example();
  SyntheticScenario s = two_dof_scenario(m);
  s.add_noise = false;
  const auto truth = generate_ground_truth(s);
  const ObservationSeries obs = generate_observations(s, truth);
  ASSERT_EQ(obs.channel_names.size(), 23u);
  EXPECT_EQ(obs.channel_names[0], "link2_accelerometer/acc_x");
  for (std::size_t k = 0; k < truth.size(); k += 7) {
    const MeasurementSystem ms = assemble_measurements(m, obs.specs, truth[k].q, truth[k].qd);
    EXPECT_LE((obs.y[k] - (ms.Y * truth[k].d.values() + ms.b)).norm(), 1e-12);
    // Noiseless readings with a loose prior recover the truth up to regularization.
    const GaussianBelief post = map_solve(make_map_problem(assemble_constraints(m, truth[k].q, truth[k].qd), ms, obs.y[k]));
    EXPECT_LE((post.mean() - truth[k].d.values()).cwiseAbs().maxCoeff(), 1e-4);
  }
}

TEST(Observations, SeedDeterminismAndNoiseScaling) {
  const KinematicTreeModel m = testing::two_dof_example();
  SyntheticScenario s = two_dof_scenario(m);
  s.trajectory.duration = 20.0;
  const auto truth = generate_ground_truth(s);
  const ObservationSeries a = generate_observations(s, truth), b = generate_observations(s, truth);
  SyntheticScenario other = s;
  other.seed = 18;
  const ObservationSeries c = generate_observations(other, truth);
  EXPECT_EQ(a.y[5], b.y[5]);
  EXPECT_NE(a.y[5], c.y[5]);

  SyntheticScenario clean = s;
  clean.add_noise = false;
  SyntheticScenario doubled = s;
  doubled.noise_scale = 2.0;
  const ObservationSeries y0 = generate_observations(clean, truth), y2 = generate_observations(doubled, truth);
  double s1 = 0.0, s2 = 0.0;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    s1 += (a.y[k] - y0.y[k]).squaredNorm();
    s2 += (y2.y[k] - y0.y[k]).squaredNorm();
  }
  const double ratio = std::sqrt(s2 / s1);
  EXPECT_NEAR(ratio, 2.0, 0.2);
  // Empirical variance of the first channel matches its declared variance.
  double var = 0.0;
  for (std::size_t k = 0; k < truth.size(); ++k) var += std::pow(a.y[k](0) - y0.y[k](0), 2);
  var /= static_cast<double>(truth.size());
  EXPECT_NEAR(var / a.variance(0), 1.0, 0.15);
}

TEST(Observations, DifferentiatedPositionsReproduceAcceleration) {
  const KinematicTreeModel m = testing::two_dof_example();
  SyntheticScenario s = two_dof_scenario(m);
  s.trajectory.rate = 240.0;
  s.trajectory.duration = 3.0;
  const auto truth = generate_ground_truth(s);
  const auto rows = static_cast<Eigen::Index>(truth.size());
  Eigen::MatrixXd q(rows, 2), qdd(rows, 2);
  for (Eigen::Index k = 0; k < rows; ++k) {
    q.row(k) = truth[static_cast<std::size_t>(k)].q.transpose();
    qdd.row(k) = truth[static_cast<std::size_t>(k)].qdd.transpose();
  }
  const double dt = 1.0 / 240.0;
  const SavitzkyGolayResult sg = savitzky_golay_derivatives(q, dt);
  // Centred cubic fits scale a sine's second derivative by the window response
  // sum_j w_j cos(w x_j) / (-w^2), closed-form weights w_j.
  double s2 = 0.0, s4 = 0.0;
  for (int j = -28; j <= 28; ++j) {
    s2 += std::pow(j * dt, 2);
    s4 += std::pow(j * dt, 4);
  }
  const double w[2] = {kTwoPi * 0.5, kTwoPi * 1.2};
  for (Eigen::Index j = 0; j < 2; ++j) {
    double gain = 0.0;
    for (int i = -28; i <= 28; ++i) {
      const double x = i * dt;
      gain += 2.0 * (x * x - s2 / 57) / (s4 - s2 * s2 / 57) * std::cos(w[j] * x);
    }
    const double response = gain / (-w[j] * w[j]);
    EXPECT_GT(response, 0.9);
    for (Eigen::Index k = 28; k < rows - 28; ++k) {
      EXPECT_NEAR(sg.second(k, j), response * qdd(k, j), 1e-9 * (1.0 + std::abs(qdd(k, j))));
    }
  }
}

TEST(Scenario, Validation) {
  const KinematicTreeModel m = testing::two_dof_example();
  SyntheticScenario s = two_dof_scenario(m);
  EXPECT_NO_THROW(s.validate());
  SyntheticScenario bad = s;
  bad.model = nullptr;
  EXPECT_THROW(bad.validate(), InputError);
  bad = s;
  bad.trajectory.joints.pop_back();
  EXPECT_THROW(bad.validate(), InputError);
  bad = s;
  bad.trajectory.rate = 0.0;
  EXPECT_THROW(bad.validate(), InputError);
  bad = s;
  bad.forces[0].link = "nowhere";
  EXPECT_THROW(bad.validate(), InputError);
  bad = s;
  bad.forces[0].link = "base";
  EXPECT_THROW(bad.validate(), InputError);
  const KinematicTreeModel& t = testing::template48();
  SyntheticScenario limits;
  limits.model = &t;
  limits.specs = testing::case1_specs(t);
  limits.trajectory.joints.assign(48, Waveform::constant(0.0));
  limits.trajectory.joints[0] = Waveform::sine(10.0, 1.0);
  EXPECT_THROW(limits.validate(), InputError);
  EXPECT_THROW(generate_ground_truth(limits), InputError);
}

TEST(Scenario, SampleSeedsDiffer) {
  EXPECT_NE(sample_seed(1, 0), sample_seed(1, 1));
  EXPECT_NE(sample_seed(1, 0), sample_seed(2, 0));
  EXPECT_EQ(sample_seed(3, 4), sample_seed(3, 4));
}

TEST(CalibrationStream, ProperAccelerationMatchesDefinition) {
  CalibrationMotion motion;
  motion.amplitude = Vec3(0.4, 0.3, 0.5);
  motion.frequency = Vec3(0.7, 1.1, 0.4);
  motion.origin = Vec3(0.2, 0.0, 1.0);
  motion.translation_amplitude = Vec3(0.05, 0.02, 0.0);
  motion.translation_frequency = 0.9;
  const HomTransform sensor(Rotation3::from_rpy(0.1, 0.2, -0.3), Vec3(0.03, -0.02, 0.1));
  const auto stream = generate_calibration_stream(motion, sensor, 200, 100.0);
  ASSERT_EQ(stream.size(), 200u);
  // Finite differences of the sensor position give its inertial acceleration.
  const double h = 0.01;
  for (std::size_t k = 1; k + 1 < stream.size(); k += 37) {
    const auto pos = [&](std::size_t j) {
      return Vec3(stream[j].link_pose.translation() + stream[j].link_pose.rotation().matrix() * sensor.translation());
    };
    const Vec3 acc = (pos(k + 1) - 2.0 * pos(k) + pos(k - 1)) / (h * h);
    const Vec3 expected = stream[k].sensor_orientation.matrix().transpose() * (acc - Vec3(gravity_spatial().head<3>()));
    EXPECT_LE((stream[k].proper_acceleration - expected).norm(), 2e-3 * (1.0 + expected.norm()));
    const Mat3 rs = stream[k].link_pose.rotation().matrix() * sensor.rotation().matrix();
    EXPECT_LE((stream[k].sensor_orientation.matrix() - rs).norm(), 1e-12);
  }
  const SensorPoseEstimate est = estimate_sensor_pose(stream);
  EXPECT_LE((est.position - sensor.translation()).norm(), 1e-8);
  EXPECT_LE((Rotation3::from_rpy(est.rpy).matrix() - sensor.rotation().matrix()).norm(), 1e-8);
}

}  // namespace
}  // namespace mapdyn
