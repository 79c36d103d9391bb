#include "support/models.hpp"

#include "mapdyn/human_template.hpp"

namespace mapdyn::testing {

namespace {

Link solid_link(const std::string& name, double mass, const Vec3& com, const Mat3& inertia) {
  return Link{name, SpatialInertia(mass, com, inertia), std::nullopt, false};
}

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 v(n(rng), n(rng), n(rng));
  return v.normalized();
}

Link random_link(std::mt19937_64& rng, const std::string& name) {
  std::uniform_real_distribution<double> mass(0.5, 5.0);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  Eigen::Matrix3d a = Eigen::Matrix3d::NullaryExpr([&] { return u(rng); });
  const Mat3 inertia = a * a.transpose() + 0.01 * Mat3::Identity();
  return solid_link(name, mass(rng), Vec3(u(rng), u(rng), u(rng)), inertia);
}

KinematicTreeModel random_model(std::mt19937_64& rng, std::size_t links, bool chain) {
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  std::uniform_real_distribution<double> angle(-3.14, 3.14);
  ModelBuilder b(chain ? "random_chain" : "random_tree");
  b.add_link(random_link(rng, "base"));
  for (std::size_t i = 1; i <= links; ++i) {
    const std::string name = "link" + std::to_string(i);
    b.add_link(random_link(rng, name));
    std::size_t parent = i - 1;
    if (!chain) parent = std::uniform_int_distribution<std::size_t>(0, i - 1)(rng);
    const std::string parent_name = parent == 0 ? "base" : "link" + std::to_string(parent);
    b.add_joint({"joint" + std::to_string(i), parent_name, name, random_unit(rng),
                 HomTransform::from_xyz_rpy(Vec3(u(rng), u(rng), u(rng)), Vec3(angle(rng), angle(rng) / 2, angle(rng))),
                 {}});
  }
  return b.build();
}

}  // namespace

KinematicTreeModel two_dof_example() {
  ModelBuilder b("two_dof_example");
  b.add_link(solid_link("base", 2.0, Vec3(0.0, 0.0, 0.05), Vec3(0.02, 0.02, 0.03).asDiagonal()));
  b.add_link(solid_link("link1", 1.5, Vec3(0.0, 0.0, 0.2), Vec3(0.03, 0.03, 0.005).asDiagonal()));
  b.add_link(solid_link("link2", 1.0, Vec3(0.0, 0.0, 0.15), Vec3(0.02, 0.02, 0.004).asDiagonal()));
  b.add_joint({"joint1", "base", "link1", Vec3::UnitY(), HomTransform::from_xyz_rpy(Vec3(0, 0, 0.1), Vec3::Zero()), {}});
  b.add_joint({"joint2", "link1", "link2", Vec3::UnitX(), HomTransform::from_xyz_rpy(Vec3(0, 0, 0.4), Vec3::Zero()), {}});
  b.add_sensor({"link2_accelerometer", SensorType::kAccelerometer, "link2",
                HomTransform::from_xyz_rpy(Vec3(0.02, 0.01, 0.2), Vec3(0.1, -0.2, 0.3))});
  return b.build();
}

std::vector<SensorSpec> two_dof_specs(const KinematicTreeModel& model) {
  MandatorySetOptions opt;
  opt.foot_links = {};
  std::vector<SensorSpec> specs = imu_specs(model);
  for (auto& s : mandatory_specs(model, opt)) specs.push_back(std::move(s));
  return order_specs(std::move(specs));
}

KinematicTreeModel vertical_pendulum() {
  ModelBuilder b("vertical_pendulum");
  b.add_link(solid_link("base", 1.0, Vec3::Zero(), Mat3::Identity() * 0.01));
  b.add_link(solid_link("upper", 2.0, Vec3(0, 0, -0.5), Vec3(0.04, 0.04, 0.001).asDiagonal()));
  b.add_link(solid_link("lower", 1.0, Vec3(0, 0, -0.4), Vec3(0.02, 0.02, 0.001).asDiagonal()));
  b.add_joint({"shoulder", "base", "upper", Vec3::UnitY(), HomTransform(), {}});
  b.add_joint({"elbow", "upper", "lower", Vec3::UnitY(), HomTransform::from_xyz_rpy(Vec3(0, 0, -1.0), Vec3::Zero()), {}});
  return b.build();
}

KinematicTreeModel random_chain(std::mt19937_64& rng, std::size_t links) { return random_model(rng, links, true); }
KinematicTreeModel random_tree(std::mt19937_64& rng, std::size_t links) { return random_model(rng, links, false); }

KinematicTreeModel five_link_chain() {
  std::mt19937_64 rng(5);
  return random_chain(rng, 5);
}

const KinematicTreeModel& template48() {
  static const KinematicTreeModel model = build_human_template(reference_subject());
  return model;
}

std::vector<SensorSpec> case1_specs(const KinematicTreeModel& model) { return mandatory_specs(model); }

std::vector<SensorSpec> case2_specs(const KinematicTreeModel& model) {
  std::vector<SensorSpec> specs = imu_specs(model);
  for (auto& s : mandatory_specs(model)) specs.push_back(std::move(s));
  return order_specs(std::move(specs));
}

Eigen::VectorXd random_vector(std::mt19937_64& rng, Eigen::Index n, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return Eigen::VectorXd::NullaryExpr(n, [&] { return u(rng); });
}

Eigen::VectorXd random_wrenches(std::mt19937_64& rng, std::size_t moving_links, double scale) {
  return random_vector(rng, 6 * static_cast<Eigen::Index>(moving_links), scale);
}

Eigen::MatrixXd random_spd(std::mt19937_64& rng, Eigen::Index n, double floor) {
  const Eigen::MatrixXd a = random_vector(rng, n * n).reshaped(n, n);
  return a * a.transpose() + floor * Eigen::MatrixXd::Identity(n, n);
}

}  // namespace mapdyn::testing
