#include "mapdyn/simharness.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <thread>
#include <Eigen/Geometry>
#include <unsupported/Eigen/Splines>

#include "mapdyn/errors.hpp"

namespace mapdyn {

namespace detail {

struct SplineCurve {
  Eigen::Spline<double, 1> spline;
  double t0 = 0.0;
  double span = 1.0;
};

}  // namespace detail

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::shared_ptr<const detail::SplineCurve> build_curve(const std::vector<double>& times,
                                                       const std::vector<double>& values) {
  if (times.size() != values.size()) throw InputError("spline waveform: knot times and values differ in length");
  if (times.size() < 2) throw InputError("spline waveform: at least 2 knots are required");
  for (std::size_t k = 1; k < times.size(); ++k) {
    if (!(times[k] > times[k - 1])) throw InputError("spline waveform: knot times must increase strictly");
  }
  const auto n = static_cast<Eigen::Index>(times.size());
  auto curve = std::make_shared<detail::SplineCurve>();
  curve->t0 = times.front();
  curve->span = times.back() - times.front();
  Eigen::RowVectorXd u(n);
  Eigen::RowVectorXd v(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    u(k) = (times[static_cast<std::size_t>(k)] - curve->t0) / curve->span;
    v(k) = values[static_cast<std::size_t>(k)];
  }
  const Eigen::DenseIndex degree = std::min<Eigen::DenseIndex>(3, n - 1);
  curve->spline = Eigen::SplineFitting<Eigen::Spline<double, 1>>::Interpolate(v, degree, u);
  return curve;
}

template <typename Body>
void parallel_for(std::size_t count, unsigned workers, const Body& body) {
  const std::size_t threads = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(count, 1));
  if (threads <= 1) {
    for (std::size_t k = 0; k < count; ++k) body(k);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t k = w; k < count; k += threads) body(k);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

Waveform Waveform::constant(double value) {
  Waveform w;
  w.kind = Kind::kConstant;
  w.offset = value;
  return w;
}

Waveform Waveform::sine(double amplitude, double frequency, double phase, double offset) {
  Waveform w;
  w.kind = Kind::kSine;
  w.amplitude = amplitude;
  w.frequency = frequency;
  w.phase = phase;
  w.offset = offset;
  return w;
}

Waveform Waveform::spline(std::vector<double> times, std::vector<double> values) {
  Waveform w;
  w.kind = Kind::kSpline;
  w.curve = build_curve(times, values);
  w.knot_times = std::move(times);
  w.knot_values = std::move(values);
  return w;
}

Eigen::Vector3d Waveform::evaluate(double t) const {
  switch (kind) {
    case Kind::kConstant:
      return {offset, 0.0, 0.0};
    case Kind::kSine: {
      const double w = kTwoPi * frequency;
      const double arg = w * t + phase;
      return {offset + amplitude * std::sin(arg), amplitude * w * std::cos(arg),
              -amplitude * w * w * std::sin(arg)};
    }
    case Kind::kSpline: {
      const auto c = curve ? curve : build_curve(knot_times, knot_values);
      const double u = (t - c->t0) / c->span;
      if (u <= 0.0) return {c->spline(0.0)(0), 0.0, 0.0};
      if (u >= 1.0) return {c->spline(1.0)(0), 0.0, 0.0};
      const auto der = c->spline.derivatives(u, 2);
      return {der(0, 0), der(0, 1) / c->span, der(0, 2) / (c->span * c->span)};
    }
  }
  return Eigen::Vector3d::Zero();
}

std::pair<double, double> Waveform::range(double t0, double t1) const {
  switch (kind) {
    case Kind::kConstant:
      return {offset, offset};
    case Kind::kSine: {
      const double a = std::abs(amplitude);
      if (frequency == 0.0) {
        const double v = offset + amplitude * std::sin(phase);
        return {v, v};
      }
      return {offset - a, offset + a};
    }
    case Kind::kSpline: {
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      constexpr int kSteps = 2000;
      for (int k = 0; k <= kSteps; ++k) {
        const double v = evaluate(t0 + (t1 - t0) * k / kSteps)(0);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      return {lo, hi};
    }
  }
  return {0.0, 0.0};
}

std::size_t TrajectorySpec::sample_count() const {
  return static_cast<std::size_t>(std::llround(duration * rate));
}

void SyntheticScenario::validate() const {
  if (model == nullptr) throw InputError("scenario: no model");
  if (trajectory.joints.size() != model->dof_count()) {
    throw InputError("scenario: " + std::to_string(trajectory.joints.size()) + " waveforms for " +
                     std::to_string(model->dof_count()) + " DoFs");
  }
  if (!(trajectory.rate > 0.0)) throw InputError("scenario: sample rate must be positive");
  if (!(trajectory.duration > 0.0)) throw InputError("scenario: duration must be positive");
  if (!(noise_scale >= 0.0)) throw InputError("scenario: noise scale must be non-negative");
  for (std::size_t j = 0; j < trajectory.joints.size(); ++j) {
    const auto [lo, hi] = trajectory.joints[j].range(0.0, trajectory.duration);
    const JointLimits& lim = model->joints()[j].limits;
    if (lo < lim.lower || hi > lim.upper) {
      throw InputError("scenario: waveform of joint '" + model->joints()[j].name + "' spans [" + std::to_string(lo) +
                       ", " + std::to_string(hi) + "] outside its limits [" + std::to_string(lim.lower) + ", " +
                       std::to_string(lim.upper) + "]");
    }
  }
  for (const auto& f : forces) {
    const auto link = model->find_link(f.link);
    if (!link) throw InputError("scenario: unknown force link '" + f.link + "'");
    if (*link == 0) throw InputError("scenario: external force on the base link '" + f.link + "'");
  }
}

std::vector<GroundTruthSample> generate_ground_truth(const SyntheticScenario& scenario, unsigned workers) {
  scenario.validate();
  const KinematicTreeModel& model = *scenario.model;
  const std::size_t n = model.dof_count();
  const std::size_t count = scenario.trajectory.sample_count();

  std::vector<std::pair<Eigen::Index, const ExternalForceScript*>> forces;
  for (const auto& f : scenario.forces) {
    forces.emplace_back(6 * static_cast<Eigen::Index>(model.link_index(f.link) - 1), &f);
  }

  std::vector<GroundTruthSample> out(count);
  parallel_for(count, workers, [&](std::size_t k) {
    GroundTruthSample& s = out[k];
    s.t = scenario.trajectory.time(k);
    s.q.resize(static_cast<Eigen::Index>(n));
    s.qd.resize(static_cast<Eigen::Index>(n));
    s.qdd.resize(static_cast<Eigen::Index>(n));
    for (std::size_t j = 0; j < n; ++j) {
      const Eigen::Vector3d v = scenario.trajectory.joints[j].evaluate(s.t);
      const auto idx = static_cast<Eigen::Index>(j);
      s.q(idx) = v(0);
      s.qd(idx) = v(1);
      s.qdd(idx) = v(2);
    }
    Eigen::VectorXd fx = Eigen::VectorXd::Zero(6 * static_cast<Eigen::Index>(model.moving_link_count()));
    for (const auto& [offset, f] : forces) {
      fx.segment<6>(offset) += f->constant + f->amplitude * std::sin(kTwoPi * f->frequency * s.t);
    }
    s.d = rnea(model, s.q, s.qd, s.qdd, fx);
  });
  return out;
}

std::uint64_t sample_seed(std::uint64_t seed, std::uint64_t k) {
  std::uint64_t z = seed + (k + 1) * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

ObservationSeries generate_observations(const SyntheticScenario& scenario,
                                        const std::vector<GroundTruthSample>& truth, unsigned workers) {
  if (scenario.model == nullptr) throw InputError("scenario: no model");
  const MeasurementAssembler assembler(*scenario.model, scenario.specs);
  ObservationSeries out;
  out.specs = assembler.specs();
  out.channel_names = assembler.channel_names();
  out.variance = assembler.variance();
  out.t.resize(truth.size());
  out.y.resize(truth.size());
  parallel_for(truth.size(), workers, [&](std::size_t k) {
    const GroundTruthSample& s = truth[k];
    out.t[k] = s.t;
    out.y[k] = simulate_readings(assembler, s.q, s.qd, s.d, sample_seed(scenario.seed, k), scenario.add_noise,
                                 scenario.noise_scale);
  });
  return out;
}

std::vector<ImuCalibrationSample> generate_calibration_stream(const CalibrationMotion& motion,
                                                              const HomTransform& sensor_in_link,
                                                              std::size_t samples, double rate,
                                                              double accel_noise_std, std::uint64_t seed) {
  if (!(rate > 0.0)) throw InputError("calibration stream: sample rate must be positive");
  if (!(accel_noise_std >= 0.0)) throw InputError("calibration stream: noise must be non-negative");
  const Vec3 g = gravity_spatial().head<3>();
  const Mat3 r0 = motion.base_orientation.matrix();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  std::vector<ImuCalibrationSample> out;
  out.reserve(samples);
  for (std::size_t k = 0; k < samples; ++k) {
    const double t = static_cast<double>(k) / rate;
    Vec3 ang;
    Vec3 ang_d;
    Vec3 ang_dd;
    for (int c = 0; c < 3; ++c) {
      const double w = kTwoPi * motion.frequency(c);
      const double arg = w * t + motion.phase(c);
      ang(c) = motion.amplitude(c) * std::sin(arg);
      ang_d(c) = motion.amplitude(c) * w * std::cos(arg);
      ang_dd(c) = -motion.amplitude(c) * w * w * std::sin(arg);
    }
    const Rotation3 rz = Rotation3::about_axis(Vec3::UnitZ(), ang(2));
    const Rotation3 ry = Rotation3::about_axis(Vec3::UnitY(), ang(1));
    const Rotation3 rx = Rotation3::about_axis(Vec3::UnitX(), ang(0));
    const Vec3 u1 = Vec3::UnitZ();
    const Vec3 u2 = rz.matrix() * Vec3::UnitY();
    const Vec3 u3 = (rz * ry).matrix() * Vec3::UnitX();
    const Vec3 w_zy = ang_d(2) * u1 + ang_d(1) * u2;
    const Vec3 omega = w_zy + ang_d(0) * u3;
    const Vec3 omega_dot = ang_dd(2) * u1 + ang_dd(1) * u2 + ang_d(1) * (ang_d(2) * u1).cross(u2) +
                           ang_dd(0) * u3 + ang_d(0) * w_zy.cross(u3);

    const double wp = kTwoPi * motion.translation_frequency;
    const Vec3 p = motion.origin + motion.translation_amplitude * std::sin(wp * t);
    const Vec3 p_dd = -motion.translation_amplitude * wp * wp * std::sin(wp * t);

    ImuCalibrationSample s;
    s.link_pose = HomTransform(motion.base_orientation * rz * ry * rx, p);
    s.link_acceleration = p_dd;
    s.omega = r0 * omega;
    s.omega_dot = r0 * omega_dot;
    s.sensor_orientation = s.link_pose.rotation() * sensor_in_link.rotation();
    const Vec3 lever = s.link_pose.rotation().matrix() * sensor_in_link.translation();
    const Vec3 acc = p_dd + s.omega_dot.cross(lever) + s.omega.cross(s.omega.cross(lever));
    s.proper_acceleration = s.sensor_orientation.matrix().transpose() * (acc - g);
    if (accel_noise_std > 0.0) {
      for (int c = 0; c < 3; ++c) s.proper_acceleration(c) += accel_noise_std * noise(rng);
    }
    out.push_back(s);
  }
  return out;
}

}  // namespace mapdyn
