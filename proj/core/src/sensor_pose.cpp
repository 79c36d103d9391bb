#include <Eigen/SVD>
#include <cmath>
#include <numbers>

#include "mapdyn/errors.hpp"
#include "mapdyn/sensors.hpp"

namespace mapdyn {

namespace {

double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * std::numbers::pi);
  return a <= -std::numbers::pi ? a + 2.0 * std::numbers::pi : a;
}

}  // namespace

SensorPoseEstimate estimate_sensor_pose(const std::vector<ImuCalibrationSample>& samples) {
  if (samples.size() < 2) throw InputError("estimate_sensor_pose: at least 2 samples are required");
  const auto n = static_cast<Eigen::Index>(samples.size());
  const Vec3 g = gravity_spatial().head<3>();

  Eigen::MatrixXd a(3 * n, 3);
  Eigen::VectorXd b(3 * n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const ImuCalibrationSample& s = samples[static_cast<std::size_t>(k)];
    const Mat3 rb = s.link_pose.rotation().matrix();
    a.block<3, 3>(3 * k, 0) = (skew(s.omega_dot) + skew(s.omega) * skew(s.omega)) * rb;
    b.segment<3>(3 * k) = s.sensor_orientation.matrix() * s.proper_acceleration - (s.link_acceleration - g);
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd sv = svd.singularValues();
  const double scale = std::max(1.0, b.cwiseAbs().maxCoeff());
  if (sv(2) <= 1e-10 * std::max(scale, sv(0))) {
    Eigen::Index rank = 0;
    for (Eigen::Index k = 0; k < 3; ++k) rank += sv(k) > 1e-10 * std::max(scale, sv(0)) ? 1 : 0;
    throw ExcitationError("sensor pose: stacked regressor has rank " + std::to_string(rank) +
                          " of 3; the link needs angular velocity or acceleration about at least two axes");
  }

  SensorPoseEstimate out;
  out.position = svd.solve(b);

  std::vector<Rotation3> relative;
  relative.reserve(samples.size());
  for (const auto& s : samples) relative.push_back(s.link_pose.rotation().inverse() * s.sensor_orientation);

  const Vec3 first = relative.front().rpy();
  Vec3 sum = Vec3::Zero();
  for (const Rotation3& r : relative) {
    const Vec3 rpy = r.rpy();
    for (int c = 0; c < 3; ++c) sum(c) += first(c) + wrap_angle(rpy(c) - first(c));
  }
  Vec3 mean = sum / static_cast<double>(n);
  for (int c = 0; c < 3; ++c) mean(c) = wrap_angle(mean(c));
  out.rpy = mean;

  const Rotation3 mean_r = Rotation3::from_rpy(mean);
  for (const Rotation3& r : relative) {
    out.max_orientation_spread = std::max(out.max_orientation_spread, (mean_r.inverse() * r).log().norm());
  }
  if (out.max_orientation_spread > kOrientationClusterLimit) {
    throw NumericalError("sensor pose: relative orientation samples spread " +
                         std::to_string(out.max_orientation_spread * 180.0 / std::numbers::pi) +
                         " deg from their mean (limit 5 deg); RPY averaging is not valid");
  }
  return out;
}

}  // namespace mapdyn
