#include <gtest/gtest.h>

#include <Eigen/Geometry>
#include <algorithm>
#include <numbers>
#include <random>

#include "mapdyn/errors.hpp"
#include "mapdyn/human_template.hpp"
#include "mapdyn/model.hpp"
#include "mapdyn/urdf.hpp"
#include "support/models.hpp"

namespace mapdyn {
namespace {

using testing::random_vector;

constexpr const char* kKneeSnippet = R"(<?xml version="1.0"?>
<robot name="knee">
  <joint name="jRightKnee_rotz" type="revolute">
    <origin xyz="0 0 0" rpy="0 0 0"/>
    <parent link="RightLowerLeg_f1"/>
    <child link="RightLowerLeg"/>
    <axis xyz="0 0 1"/>
    <limit effort="30" velocity="1.0" lower="-0.698132" upper="0.523599"/>
  </joint>
  <link name="RightUpperLeg">
    <inertial>
      <mass value="9.0"/>
      <origin xyz="0 0 -0.2" rpy="0 0 0"/>
      <inertia ixx="0.1" iyy="0.1" izz="0.02" ixy="0" ixz="0" iyz="0"/>
    </inertial>
  </link>
  <link name="RightLowerLeg_f1">
    <inertial>
      <mass value="0.0001"/>
      <origin xyz="0 0 0" rpy="0 0 0"/>
      <inertia ixx="0.0003" iyy="0.0003" izz="0.0003" ixy="0" ixz="0" iyz="0"/>
    </inertial>
  </link>
  <link name="RightLowerLeg">
    <inertial>
      <mass value="3.5"/>
      <origin xyz="0 0 -0.2" rpy="0 0 0"/>
      <inertia ixx="0.05" iyy="0.05" izz="0.005" ixy="0" ixz="0" iyz="0"/>
    </inertial>
    <visual>
      <origin xyz="0 0 -0.2" rpy="0 0 0"/>
      <geometry><cylinder radius="0.05" length="0.4"/></geometry>
    </visual>
  </link>
  <joint name="jRightKnee_roty" type="revolute">
    <origin xyz="0 0 -0.45" rpy="0 0 0"/>
    <parent link="RightUpperLeg"/>
    <child link="RightLowerLeg_f1"/>
    <axis xyz="0 1 0"/>
    <limit effort="30" velocity="1.0" lower="0" upper="2.35619"/>
  </joint>
  <sensor name="RightLowerLeg_accelerometer" type="accelerometer">
    <parent link="RightLowerLeg"/>
    <origin xyz="0.05 0 -0.2" rpy="0 0 0.5"/>
  </sensor>
</robot>
)";

std::string replace(std::string s, const std::string& from, const std::string& to) {
  const auto at = s.find(from);
  if (at != std::string::npos) s.replace(at, from.size(), to);
  return s;
}

TEST(Parser, KneeSnippetWithDummyLink) {
  const KinematicTreeModel m = parse_model(kKneeSnippet);
  EXPECT_EQ(m.link_count(), 3u);
  EXPECT_EQ(m.dof_count(), 2u);
  EXPECT_EQ(m.link(0).name, "RightUpperLeg");
  const std::size_t dummy = m.link_index("RightLowerLeg_f1");
  EXPECT_TRUE(m.link(dummy).is_dummy);
  EXPECT_FALSE(m.link(m.link_index("RightLowerLeg")).is_dummy);
  EXPECT_EQ(std::count_if(m.links().begin(), m.links().end(), [](const Link& l) { return l.is_dummy; }), 1);
  const Joint& knee_y = m.joint_of(dummy);
  EXPECT_EQ(knee_y.name, "jRightKnee_roty");
  EXPECT_DOUBLE_EQ(knee_y.limits.lower, 0.0);
  EXPECT_DOUBLE_EQ(knee_y.limits.upper, 2.35619);
  ASSERT_EQ(m.sensors().size(), 1u);
  EXPECT_EQ(m.sensors()[0].link, m.link_index("RightLowerLeg"));
  EXPECT_NEAR(m.sensors()[0].pose.rotation().rpy().z(), 0.5, 1e-12);
}

TEST(Parser, TopologicalOrderUnderShuffledElements) {
  const KinematicTreeModel m = parse_model(kKneeSnippet);
  for (std::size_t i = 1; i < m.link_count(); ++i) EXPECT_LT(m.parent(i), i);
}

TEST(Parser, BaseOnly) {
  const KinematicTreeModel m = parse_model(R"(<robot name="b"><link name="base"/></robot>)");
  EXPECT_EQ(m.moving_link_count(), 0u);
  EXPECT_EQ(m.dof_count(), 0u);
}

TEST(Parser, Errors) {
  EXPECT_THROW(parse_model(replace(kKneeSnippet, "type=\"revolute\"", "type=\"prismatic\"")), ModelError);
  EXPECT_THROW(parse_model(replace(kKneeSnippet, "<child link=\"RightLowerLeg\"/>", "<child link=\"Nowhere\"/>")),
               ModelError);
  EXPECT_THROW(parse_model(replace(kKneeSnippet, "name=\"RightLowerLeg_f1\">", "name=\"RightUpperLeg\">")), ModelError);
  EXPECT_THROW(parse_model(replace(kKneeSnippet, "mass value=\"9.0\"", "mass value=\"9,0\"")), ModelError);
  EXPECT_THROW(parse_model("<robot><link"), ModelError);
  try {
    parse_model(replace(kKneeSnippet, "mass value=\"3.5\"", "mass value=\"abc\""));
    FAIL();
  } catch (const ModelError& e) {
    EXPECT_NE(std::string(e.what()).find("robot/link[RightLowerLeg]"), std::string::npos) << e.what();
  }
}

TEST(Parser, RoundTrip) {
  const KinematicTreeModel m = parse_model(kKneeSnippet);
  const KinematicTreeModel again = parse_model(emit_model(m));
  EXPECT_TRUE(models_equal(m, again));
  EXPECT_EQ(emit_model(again), emit_model(m));
}

TEST(Parser, RoundTripRandomTree) {
  std::mt19937_64 rng(21);
  const KinematicTreeModel m = testing::random_tree(rng, 8);
  EXPECT_TRUE(models_equal(m, parse_model(emit_model(m))));
}

TEST(FormatDouble, ShortestRoundTrip) {
  std::mt19937_64 rng(22);
  for (int k = 0; k < 200; ++k) {
    const double v = random_vector(rng, 1, 1e3)(0);
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(format_double(0.1), "0.1");
}

TEST(Builder, RejectsInvalid) {
  ModelBuilder b;
  b.add_link({"a", SpatialInertia(), std::nullopt, false});
  b.add_link({"b", SpatialInertia(), std::nullopt, false});
  b.add_joint({"j", "a", "b", Vec3(1, 1, 0), HomTransform(), {}});
  EXPECT_NEAR(b.build().joint_of(1).axis.norm(), 1.0, 1e-12);
  ModelBuilder zero;
  zero.add_link({"a", SpatialInertia(), std::nullopt, false});
  zero.add_link({"b", SpatialInertia(), std::nullopt, false});
  zero.add_joint({"j", "a", "b", Vec3::Zero(), HomTransform(), {}});
  EXPECT_THROW(zero.build(), ModelError);
  ModelBuilder cyc;
  cyc.add_link({"a", SpatialInertia(), std::nullopt, false});
  cyc.add_link({"b", SpatialInertia(), std::nullopt, false});
  cyc.add_joint({"j1", "a", "b", Vec3::UnitZ(), HomTransform(), {}});
  cyc.add_joint({"j2", "b", "a", Vec3::UnitZ(), HomTransform(), {}});
  EXPECT_THROW(cyc.build(), ModelError);
}

TEST(Template, Dimensions) {
  const KinematicTreeModel& m = testing::template48();
  EXPECT_EQ(m.dof_count(), 48u);
  EXPECT_EQ(m.moving_link_count(), 48u);
  EXPECT_EQ(m.link_count(), 49u);
  const auto dummies = std::count_if(m.links().begin(), m.links().end(), [](const Link& l) { return l.is_dummy; });
  EXPECT_EQ(dummies, 26);
  EXPECT_EQ(m.link_count() - static_cast<std::size_t>(dummies), 23u);
  EXPECT_EQ(m.sensors().size(), 34u);
  for (std::size_t i = 1; i < m.link_count(); ++i) EXPECT_LT(m.parent(i), i);
}

TEST(Template, PelvisMassAndKnee) {
  const KinematicTreeModel& m = testing::template48();
  EXPECT_NEAR(m.link(m.link_index("Pelvis")).inertia.mass(), 6.072, 1e-12);
  const Joint& y = m.joints()[m.joint_index("jRightKnee_roty")];
  const Joint& z = m.joints()[m.joint_index("jRightKnee_rotz")];
  EXPECT_DOUBLE_EQ(y.limits.lower, 0.0);
  EXPECT_DOUBLE_EQ(y.limits.upper, 2.35619);
  EXPECT_DOUBLE_EQ(z.limits.lower, -0.698132);
  EXPECT_DOUBLE_EQ(z.limits.upper, 0.523599);
  EXPECT_TRUE(m.link(y.child).is_dummy);
  EXPECT_EQ(m.link(y.child).name, "RightLowerLeg_f1");
  EXPECT_EQ(z.parent, y.child);
}

TEST(Template, MassesFollowFractionsAndDummyValues) {
  const SubjectSpec subject = reference_subject();
  const KinematicTreeModel m = build_human_template(subject);
  for (const TemplateLinkSpec& spec : default_template_mapping().links) {
    EXPECT_DOUBLE_EQ(m.link(m.link_index(spec.name)).inertia.mass(), spec.mass_fraction * subject.total_mass)
        << spec.name;
  }
  for (const Link& l : m.links()) {
    if (!l.is_dummy) continue;
    EXPECT_DOUBLE_EQ(l.inertia.mass(), kDummyMass);
    EXPECT_TRUE(l.inertia.inertia_com().isApprox(Mat3::Identity() * kDummyInertia));
  }
}

TEST(Template, XmlParsesToSameModel) {
  const SubjectSpec subject = reference_subject();
  const KinematicTreeModel parsed = parse_model(generate_human_template(subject));
  EXPECT_TRUE(models_equal(parsed, build_human_template(subject), 1e-12));
  EXPECT_EQ(parsed.sensors().size(), 34u);
}

TEST(Template, MissingLandmarkNamesUser) {
  SubjectSpec subject = reference_subject();
  subject.landmarks.erase("jRightKnee");
  try {
    build_human_template(subject);
    FAIL();
  } catch (const InputError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("jRightKnee"), std::string::npos) << what;
  }
  SubjectSpec none = reference_subject();
  none.total_mass = 0.0;
  EXPECT_THROW(build_human_template(none), InputError);
}

Eigen::Matrix4d joint_matrix(const Joint& j, double q) {
  Eigen::Matrix4d r = Eigen::Matrix4d::Identity();
  r.block<3, 3>(0, 0) = Eigen::AngleAxisd(q, j.axis).toRotationMatrix();
  return j.origin.matrix() * r;
}

TEST(ForwardKinematics, MatchesMatrixChain) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const KinematicTreeModel m = testing::random_tree(rng, 7);
    const Eigen::VectorXd q = random_vector(rng, 7, 3.0);
    const auto poses = forward_kinematics(m, q);
    EXPECT_TRUE(poses[0].matrix().isIdentity(0.0));
    std::vector<Eigen::Matrix4d> oracle(m.link_count(), Eigen::Matrix4d::Identity());
    for (std::size_t i = 1; i < m.link_count(); ++i) {
      oracle[i] = oracle[m.parent(i)] * joint_matrix(m.joint_of(i), q(static_cast<Eigen::Index>(i - 1)));
      EXPECT_LE((poses[i].matrix() - oracle[i]).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(ForwardKinematics, ZeroAndQuarterTurn) {
  ModelBuilder b;
  b.add_link({"base", SpatialInertia(), std::nullopt, false});
  b.add_link({"arm", SpatialInertia(), std::nullopt, false});
  b.add_joint({"j", "base", "arm", Vec3::UnitZ(), HomTransform::from_xyz_rpy(Vec3(1, 0, 0), Vec3::Zero()), {-1, 1}});
  const KinematicTreeModel m = b.build();
  EXPECT_TRUE(forward_kinematics(m, Eigen::VectorXd::Zero(1))[1].translation().isApprox(Vec3(1, 0, 0)));
  const auto quarter = forward_kinematics(m, Eigen::VectorXd::Constant(1, std::numbers::pi / 2));
  EXPECT_LE((quarter[1].rotation() * Vec3::UnitX() - Vec3::UnitY()).norm(), 1e-15);
  std::vector<std::size_t> violations;
  forward_kinematics(m, Eigen::VectorXd::Constant(1, 2.0), &violations);
  EXPECT_EQ(violations, std::vector<std::size_t>{1});
  EXPECT_THROW(forward_kinematics(m, Eigen::VectorXd::Zero(2)), InputError);
}

TEST(ForwardKinematics, RelativePoseDependsOnOwnCoordinate) {
  std::mt19937_64 rng(24);
  const KinematicTreeModel m = testing::random_chain(rng, 4);
  Eigen::VectorXd q = random_vector(rng, 4);
  const auto a = forward_kinematics(m, q);
  q(0) += 0.7;
  q(3) -= 0.2;
  const auto b = forward_kinematics(m, q);
  const HomTransform ra = a[1].inverse() * a[2], rb = b[1].inverse() * b[2];
  EXPECT_LE((ra.matrix() - rb.matrix()).cwiseAbs().maxCoeff(), 1e-12);
}

std::vector<RelativePoseTarget> pair_targets(const KinematicTreeModel& m, const Eigen::VectorXd& q) {
  const auto poses = forward_kinematics(m, q);
  std::vector<RelativePoseTarget> t;
  for (std::size_t i = 1; i < m.link_count(); ++i) t.push_back({m.parent(i), i, poses[m.parent(i)].inverse() * poses[i]});
  return t;
}

TEST(Ik, RecoversKnownPosture) {
  std::mt19937_64 rng(25);
  const KinematicTreeModel m = testing::random_chain(rng, 6);
  const Eigen::VectorXd q_star = random_vector(rng, 6, 1.0);
  const Eigen::VectorXd q0 = q_star + random_vector(rng, 6, 0.3);
  const IkResult r = ik_frame_match(m, pair_targets(m, q_star), q0);
  EXPECT_TRUE(r.converged);
  EXPECT_LE((r.q - q_star).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Ik, RecoversTemplatePostureFromLinkPairs) {
  const KinematicTreeModel& m = testing::template48();
  std::mt19937_64 rng(26);
  Eigen::VectorXd q_star(48);
  for (std::size_t j = 0; j < 48; ++j) {
    const JointLimits& l = m.joints()[j].limits;
    q_star(static_cast<Eigen::Index>(j)) = std::uniform_real_distribution<double>(
        std::max(l.lower, -0.5) + 0.05, std::min(l.upper, 0.5) - 0.05)(rng);
  }
  std::vector<RelativePoseTarget> targets;
  const auto poses = forward_kinematics(m, q_star);
  for (const auto& [parent, child] : coupled_link_pairs(m)) {
    targets.push_back({parent, child, poses[parent].inverse() * poses[child]});
  }
  EXPECT_EQ(targets.size(), 22u);
  Eigen::VectorXd q0 = q_star + random_vector(rng, 48, 0.05);
  for (Eigen::Index j = 0; j < 48; ++j) {
    const JointLimits& l = m.joints()[static_cast<std::size_t>(j)].limits;
    q0(j) = std::clamp(q0(j), l.lower, l.upper);
  }
  const IkResult r = ik_frame_match(m, targets, q0);
  EXPECT_LE((r.q - q_star).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Ik, AtTargetsZeroIterations) {
  std::mt19937_64 rng(27);
  const KinematicTreeModel m = testing::random_chain(rng, 3);
  const Eigen::VectorXd q = random_vector(rng, 3);
  const IkResult r = ik_frame_match(m, pair_targets(m, q), q);
  EXPECT_EQ(r.iterations, 0);
  EXPECT_LE(r.residual, 1e-20);
  EXPECT_TRUE(r.converged);
}

TEST(Ik, ClampsAtLimit) {
  ModelBuilder b;
  b.add_link({"base", SpatialInertia(), std::nullopt, false});
  b.add_link({"arm", SpatialInertia(), std::nullopt, false});
  b.add_joint({"j", "base", "arm", Vec3::UnitZ(), HomTransform(), {-0.5, 0.5}});
  const KinematicTreeModel m = b.build();
  const HomTransform target(Rotation3::about_axis(Vec3::UnitZ(), 1.0), Vec3::Zero());
  const IkResult r = ik_frame_match(m, {{0, 1, target}}, Eigen::VectorXd::Zero(1));
  EXPECT_NEAR(r.q(0), 0.5, 1e-12);
  EXPECT_NEAR(r.residual, 0.25, 1e-9);
}

Vec3 relative_omega_fd(const KinematicTreeModel& m, const Eigen::VectorXd& q, const Eigen::VectorXd& qd, std::size_t i,
                       std::size_t k) {
  const double h = 1e-5;
  auto rel = [&](double t) {
    const auto p = forward_kinematics(m, q + t * qd);
    return Mat3((p[i].rotation().inverse() * p[k].rotation()).matrix());
  };
  const Mat3 rd = (rel(h) - rel(-h)) / (2 * h);
  const Mat3 w = rd * rel(0).transpose();
  return Vec3(w(2, 1) - w(1, 2), w(0, 2) - w(2, 0), w(1, 0) - w(0, 1)) / 2.0;
}

TEST(JointVelocities, RecoversKnownRates) {
  std::mt19937_64 rng(28);
  const KinematicTreeModel m = testing::random_chain(rng, 5);
  const Eigen::VectorXd q = random_vector(rng, 5);
  const Eigen::VectorXd qd = random_vector(rng, 5);
  std::vector<RelativeAngularVelocity> meas;
  const auto poses = forward_kinematics(m, q);
  for (std::size_t k = 1; k <= 5; ++k) {
    // Adjacent pair: omega = R_origin axis qd_k in the parent frame.
    const Joint& j = m.joint_of(k);
    meas.push_back({j.parent, k, j.origin.rotation() * Vec3(j.axis * qd(static_cast<Eigen::Index>(k - 1)))});
  }
  const JointVelocityResult r = joint_velocities_from_angular(m, q, meas);
  EXPECT_FALSE(r.rank_deficient);
  EXPECT_LE((r.qdot - qd).cwiseAbs().maxCoeff(), 1e-8);
  // Adjacent pairs give J^T J = I, so the damped solution is qd / (1 + lambda).
  EXPECT_LE((r.qdot - qd / (1.0 + kJointVelocityDamping)).cwiseAbs().maxCoeff(), 1e-14);
  // Jacobian of a long pair against finite differences.
  const Eigen::MatrixXd jac = relative_angular_jacobian(m, poses, 1, 5);
  EXPECT_LE((jac * qd - relative_omega_fd(m, q, qd, 1, 5)).norm(), 1e-8);
}

TEST(JointVelocities, ZeroAndScalar) {
  std::mt19937_64 rng(29);
  const KinematicTreeModel m = testing::random_chain(rng, 3);
  const Eigen::VectorXd q = random_vector(rng, 3);
  std::vector<RelativeAngularVelocity> zero{{0, 1, Vec3::Zero()}, {1, 2, Vec3::Zero()}, {2, 3, Vec3::Zero()}};
  EXPECT_TRUE(joint_velocities_from_angular(m, q, zero).qdot.isZero(0.0));

  ModelBuilder b;
  b.add_link({"base", SpatialInertia(), std::nullopt, false});
  b.add_link({"arm", SpatialInertia(), std::nullopt, false});
  const Vec3 axis = Vec3(1, 2, 2) / 3.0;
  b.add_joint({"j", "base", "arm", axis, HomTransform(), {}});
  const KinematicTreeModel one = b.build();
  const JointVelocityResult r = joint_velocities_from_angular(one, Eigen::VectorXd::Zero(1), {{0, 1, axis * 1.7}});
  EXPECT_NEAR(r.qdot(0), 1.7 / (1.0 + kJointVelocityDamping), 1e-14);
}

TEST(JointVelocities, RankDeficientFlagged) {
  std::mt19937_64 rng(30);
  const KinematicTreeModel m = testing::random_chain(rng, 3);
  const JointVelocityResult r =
      joint_velocities_from_angular(m, Eigen::VectorXd::Zero(3), {{0, 1, Vec3(0.1, 0.2, 0.3)}});
  EXPECT_TRUE(r.rank_deficient);
  EXPECT_TRUE(r.qdot.allFinite());
}

}  // namespace
}  // namespace mapdyn
