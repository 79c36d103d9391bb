#include "mapdyn/sensors.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <random>
#include <set>

#include "mapdyn/errors.hpp"

namespace mapdyn {

const char* channel_kind_name(ChannelKind kind) {
  switch (kind) {
    case ChannelKind::kImuLinearAcceleration: return "imu_linear_acceleration";
    case ChannelKind::kDofAcceleration: return "dof_acceleration";
    case ChannelKind::kFixedBaseWrench: return "fixed_base_wrench";
    case ChannelKind::kExternalWrench: return "external_wrench";
  }
  return "unknown";
}

Eigen::Index SensorSpec::dimension() const {
  switch (kind) {
    case ChannelKind::kImuLinearAcceleration: return 3;
    case ChannelKind::kDofAcceleration: return 1;
    case ChannelKind::kFixedBaseWrench:
    case ChannelKind::kExternalWrench: return 6;
  }
  return 0;
}

std::vector<SensorSpec> order_specs(std::vector<SensorSpec> specs) {
  std::stable_sort(specs.begin(), specs.end(),
                   [](const SensorSpec& a, const SensorSpec& b) { return a.kind < b.kind; });
  return specs;
}

std::vector<SensorSpec> mandatory_specs(const KinematicTreeModel& model, const MandatorySetOptions& options) {
  std::vector<SensorSpec> specs;
  const auto& v = options.variances;
  for (std::size_t i = 1; i < model.link_count(); ++i) {
    specs.push_back({ChannelKind::kDofAcceleration, model.joint_of(i).name + "/qdd", i, HomTransform(),
                     Eigen::VectorXd::Constant(1, v.dof_acceleration)});
  }
  specs.push_back({ChannelKind::kFixedBaseWrench, model.link(0).name + "/base_wrench", 0, options.force_plate_pose,
                   Eigen::VectorXd::Constant(6, v.fixed_base_wrench)});
  for (std::size_t i = 1; i < model.link_count(); ++i) {
    const auto& name = model.link(i).name;
    const bool foot =
        std::find(options.foot_links.begin(), options.foot_links.end(), name) != options.foot_links.end();
    specs.push_back({ChannelKind::kExternalWrench, name + "/fx", i, HomTransform(),
                     Eigen::VectorXd::Constant(6, foot ? v.foot_wrench : v.other_wrench)});
  }
  return specs;
}

std::vector<SensorSpec> imu_specs(const KinematicTreeModel& model, const std::vector<std::string>& accelerometers,
                                  double variance) {
  std::vector<SensorSpec> specs;
  for (const SensorAttachment& s : model.sensors()) {
    if (s.type != SensorType::kAccelerometer) continue;
    const bool named = std::find(accelerometers.begin(), accelerometers.end(), s.name) != accelerometers.end();
    if (!accelerometers.empty() && !named) continue;
    if (s.link == 0) {
      if (named) throw InputError("accelerometer '" + s.name + "' is attached to the fixed base and cannot be used");
      continue;
    }
    specs.push_back({ChannelKind::kImuLinearAcceleration, s.name, s.link, s.pose,
                     Eigen::VectorXd::Constant(3, variance)});
  }
  for (const auto& name : accelerometers) {
    const bool found = std::any_of(model.sensors().begin(), model.sensors().end(), [&](const SensorAttachment& s) {
      return s.name == name && s.type == SensorType::kAccelerometer;
    });
    if (!found) throw InputError("model has no accelerometer named '" + name + "'");
  }
  return specs;
}

namespace {

template <class Sink>
void for_each_measurement_entry(const KinematicTreeModel& model, const std::vector<SensorSpec>& specs,
                                const std::vector<Eigen::Index>& offsets, const TreeKinematics& kin, Sink&& sink) {
  const DynLayout layout(model);
  for (std::size_t s = 0; s < specs.size(); ++s) {
    const SensorSpec& spec = specs[s];
    const Eigen::Index r0 = offsets[s];
    switch (spec.kind) {
      case ChannelKind::kImuLinearAcceleration: {
        const Mat6 x = adjoint_motion(spec.pose.inverse());
        for (Eigen::Index c = 0; c < 6; ++c)
          for (Eigen::Index r = 0; r < 3; ++r) sink(r0 + r, layout.a(spec.link) + c, x(r, c));
        break;
      }
      case ChannelKind::kDofAcceleration:
        sink(r0, layout.qdd(spec.link), 1.0);
        break;
      case ChannelKind::kFixedBaseWrench: {
        const Mat6 x_fp = adjoint_force(spec.pose.inverse());
        for (std::size_t ch : model.children(0)) {
          const Mat6 block = x_fp * kin.x_base[ch].transpose();
          for (Eigen::Index c = 0; c < 6; ++c)
            for (Eigen::Index r = 0; r < 6; ++r) sink(r0 + r, layout.f(ch) + c, block(r, c));
        }
        break;
      }
      case ChannelKind::kExternalWrench:
        for (Eigen::Index k = 0; k < 6; ++k) sink(r0 + k, layout.fx(spec.link) + k, 1.0);
        break;
    }
  }
}

}  // namespace

MeasurementAssembler::MeasurementAssembler(const KinematicTreeModel& model, std::vector<SensorSpec> specs)
    : model_(&model), specs_(order_specs(std::move(specs))) {
  const std::size_t nl = model.link_count();
  std::vector<int> dof_seen(nl, 0);
  std::vector<int> fx_seen(nl, 0);
  int base_wrench = 0;
  std::set<std::string> names;
  for (const SensorSpec& s : specs_) {
    if (!names.insert(s.name).second) throw InputError("duplicate sensor spec name '" + s.name + "'");
    if (s.variance.size() != s.dimension()) {
      throw InputError("sensor '" + s.name + "' needs " + std::to_string(s.dimension()) + " variance entries");
    }
    if (!(s.variance.array() > 0.0).all() || !s.variance.allFinite()) {
      throw InputError("sensor '" + s.name + "' has a non-positive variance");
    }
    if (s.kind != ChannelKind::kFixedBaseWrench && (s.link == 0 || s.link >= nl)) {
      if (s.kind == ChannelKind::kImuLinearAcceleration && s.link == 0) {
        throw InputError("IMU '" + s.name + "' is attached to the fixed base");
      }
      throw InputError("sensor '" + s.name + "' targets an unknown moving link");
    }
    switch (s.kind) {
      case ChannelKind::kDofAcceleration: ++dof_seen[s.link]; break;
      case ChannelKind::kExternalWrench: ++fx_seen[s.link]; break;
      case ChannelKind::kFixedBaseWrench: ++base_wrench; break;
      case ChannelKind::kImuLinearAcceleration: break;
    }
  }
  for (std::size_t i = 1; i < nl; ++i) {
    if (dof_seen[i] == 0) {
      throw MissingChannelError("missing mandatory channel: acceleration of joint '" + model.joint_of(i).name + "'");
    }
    if (fx_seen[i] == 0) {
      throw MissingChannelError("missing mandatory channel: external wrench on link '" + model.link(i).name + "'");
    }
    if (dof_seen[i] > 1 || fx_seen[i] > 1) {
      throw InputError("duplicate channel for link '" + model.link(i).name + "'");
    }
  }
  if (base_wrench == 0) throw MissingChannelError("missing mandatory channel: fixed-base wrench");
  if (base_wrench > 1) throw InputError("fixed-base wrench must be unique");

  offsets_.reserve(specs_.size());
  for (const SensorSpec& s : specs_) {
    offsets_.push_back(rows_);
    rows_ += s.dimension();
  }
  variance_.resize(rows_);
  for (std::size_t s = 0; s < specs_.size(); ++s) variance_.segment(offsets_[s], specs_[s].dimension()) = specs_[s].variance;

  const auto n = static_cast<Eigen::Index>(model.dof_count());
  const TreeKinematics kin = compute_kinematics(model, Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n));
  pattern_.build(rows_, DynLayout(model).size(),
                 [&](auto&& sink) { for_each_measurement_entry(model, specs_, offsets_, kin, sink); });
}

void MeasurementAssembler::assemble(const TreeKinematics& kin, MeasurementSystem& out) const {
  pattern_.fill(out.Y, [&](auto&& sink) { for_each_measurement_entry(*model_, specs_, offsets_, kin, sink); });
  out.b = Eigen::VectorXd::Zero(rows_);
  for (std::size_t s = 0; s < specs_.size(); ++s) {
    const SensorSpec& spec = specs_[s];
    if (spec.kind == ChannelKind::kImuLinearAcceleration) {
      const Vec6 vs = adjoint_motion(spec.pose.inverse()) * kin.v[spec.link];
      out.b.segment<3>(offsets_[s]) = vs.tail<3>().cross(vs.head<3>());
    } else if (spec.kind == ChannelKind::kFixedBaseWrench) {
      const Vec6 weight = model_->link(0).inertia.matrix() * gravity_spatial();
      out.b.segment<6>(offsets_[s]) = -adjoint_force(spec.pose.inverse()) * weight;
    }
  }
  out.variance = variance_;
  out.offsets = offsets_;
}

MeasurementSystem MeasurementAssembler::assemble(const Eigen::VectorXd& q, const Eigen::VectorXd& qd) const {
  MeasurementSystem out;
  assemble(compute_kinematics(*model_, q, qd), out);
  return out;
}

std::vector<std::string> MeasurementAssembler::channel_names() const {
  static const char* const kXyz[] = {"x", "y", "z"};
  static const char* const kWrench[] = {"fx", "fy", "fz", "mx", "my", "mz"};
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(rows_));
  for (const SensorSpec& s : specs_) {
    switch (s.kind) {
      case ChannelKind::kImuLinearAcceleration:
        for (auto c : kXyz) names.push_back(s.name + "/acc_" + c);
        break;
      case ChannelKind::kDofAcceleration:
        names.push_back(s.name);
        break;
      case ChannelKind::kFixedBaseWrench:
      case ChannelKind::kExternalWrench:
        for (auto c : kWrench) names.push_back(s.name + "_" + c);
        break;
    }
  }
  return names;
}

MeasurementSystem assemble_measurements(const KinematicTreeModel& model, const std::vector<SensorSpec>& specs,
                                        const Eigen::VectorXd& q, const Eigen::VectorXd& qd) {
  return MeasurementAssembler(model, specs).assemble(q, qd);
}

Eigen::VectorXd simulate_readings(const MeasurementAssembler& assembler, const Eigen::VectorXd& q,
                                  const Eigen::VectorXd& qd, const DynVector& d, std::uint64_t seed, bool add_noise,
                                  double noise_scale) {
  const MeasurementSystem sys = assembler.assemble(q, qd);
  if (d.values().size() != sys.Y.cols()) throw InputError("simulate_readings: d has the wrong dimension");
  Eigen::VectorXd y = sys.Y * d.values() + sys.b;
  if (add_noise) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index k = 0; k < y.size(); ++k) y(k) += noise_scale * std::sqrt(sys.variance(k)) * normal(rng);
  }
  return y;
}

Eigen::VectorXd simulate_readings(const KinematicTreeModel& model, const std::vector<SensorSpec>& specs,
                                  const Eigen::VectorXd& q, const Eigen::VectorXd& qd, const DynVector& d,
                                  std::uint64_t seed, bool add_noise) {
  return simulate_readings(MeasurementAssembler(model, specs), q, qd, d, seed, add_noise);
}

}  // namespace mapdyn
