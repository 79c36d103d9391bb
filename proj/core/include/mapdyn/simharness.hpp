#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "mapdyn/dynamics.hpp"
#include "mapdyn/model.hpp"
#include "mapdyn/sensors.hpp"

namespace mapdyn {

namespace detail {
struct SplineCurve;
}

// Analytic joint waveform. Sine: offset + amplitude sin(2 pi f t + phase).
// Spline: cubic interpolation through (time, value) knots.
struct Waveform {
  enum class Kind { kConstant, kSine, kSpline };
  Kind kind = Kind::kConstant;
  double offset = 0.0;
  double amplitude = 0.0;
  double frequency = 0.0;  // Hz
  double phase = 0.0;      // rad
  std::vector<double> knot_times;
  std::vector<double> knot_values;
  std::shared_ptr<const detail::SplineCurve> curve;  // built by spline()

  static Waveform constant(double value);
  static Waveform sine(double amplitude, double frequency, double phase = 0.0, double offset = 0.0);
  static Waveform spline(std::vector<double> times, std::vector<double> values);

  // Position, velocity, acceleration at t. Splines hold their end values
  // outside the knot range.
  Eigen::Vector3d evaluate(double t) const;
  // Range covered over [t0, t1] (sampled densely for splines).
  std::pair<double, double> range(double t0, double t1) const;
};

struct TrajectorySpec {
  std::vector<Waveform> joints;  // one per DoF
  double duration = 1.0;         // s
  double rate = 100.0;           // Hz

  std::size_t sample_count() const;
  double time(std::size_t k) const { return static_cast<double>(k) / rate; }
};

// fx_i(t) = constant + amplitude sin(2 pi f t), base coordinates.
struct ExternalForceScript {
  std::string link;
  Vec6 constant = Vec6::Zero();
  Vec6 amplitude = Vec6::Zero();
  double frequency = 0.0;
};

struct SyntheticScenario {
  const KinematicTreeModel* model = nullptr;
  TrajectorySpec trajectory;
  std::vector<ExternalForceScript> forces;
  std::vector<SensorSpec> specs;
  std::uint64_t seed = 0;
  bool add_noise = true;
  double noise_scale = 1.0;

  // Throws InputError: wrong waveform count, rate <= 0, waveform leaving the
  // joint limits, unknown force link.
  void validate() const;
};

struct GroundTruthSample {
  double t = 0.0;
  Eigen::VectorXd q;
  Eigen::VectorXd qd;
  Eigen::VectorXd qdd;
  DynVector d;
};

// Analytic q, qd, qdd and d = rnea(...) per sample; `workers` > 1 splits
// samples across threads.
std::vector<GroundTruthSample> generate_ground_truth(const SyntheticScenario& scenario, unsigned workers = 1);

struct ObservationSeries {
  std::vector<SensorSpec> specs;  // assembly order
  std::vector<std::string> channel_names;
  Eigen::VectorXd variance;
  std::vector<double> t;
  std::vector<Eigen::VectorXd> y;
};

// Per-sample simulated readings; sample k draws noise from a generator
// seeded by (seed, k), so results do not depend on the worker count.
ObservationSeries generate_observations(const SyntheticScenario& scenario,
                                        const std::vector<GroundTruthSample>& truth, unsigned workers = 1);

// Seed of sample k derived from a scenario seed (splitmix64).
std::uint64_t sample_seed(std::uint64_t seed, std::uint64_t k);

// World motion of a link for IMU calibration: R(t) = Rz(a_z(t)) Ry(a_y(t))
// Rx(a_x(t)) with a_c(t) = amplitude_c sin(2 pi f_c t + phase_c), origin
// p(t) = p0 + translation_amplitude sin(2 pi f_p t).
struct CalibrationMotion {
  Vec3 amplitude = Vec3::Zero();
  Vec3 frequency = Vec3::Zero();
  Vec3 phase = Vec3::Zero();
  Rotation3 base_orientation;
  Vec3 origin = Vec3::Zero();
  Vec3 translation_amplitude = Vec3::Zero();
  double translation_frequency = 0.0;
};

// Samples of the calibration stream for a sensor at `sensor_in_link`, with
// i.i.d. Gaussian noise on the proper acceleration.
std::vector<ImuCalibrationSample> generate_calibration_stream(const CalibrationMotion& motion,
                                                              const HomTransform& sensor_in_link,
                                                              std::size_t samples, double rate,
                                                              double accel_noise_std = 0.0, std::uint64_t seed = 0);

}  // namespace mapdyn
