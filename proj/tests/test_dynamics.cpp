#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <random>

#include "mapdyn/dynamics.hpp"
#include "mapdyn/errors.hpp"
#include "support/models.hpp"

namespace mapdyn {
namespace {

using testing::random_vector;
using testing::random_wrenches;

double residual_inf(const ConstraintSystem& sys, const DynVector& d) {
  return (sys.D * d.values() + sys.b).cwiseAbs().maxCoeff();
}

TEST(DynLayout, Offsets) {
  const DynLayout layout(3);
  EXPECT_EQ(layout.size(), 78);
  EXPECT_EQ(layout.a(2), 26);
  EXPECT_EQ(layout.fB(2), 32);
  EXPECT_EQ(layout.f(2), 38);
  EXPECT_EQ(layout.tau(2), 44);
  EXPECT_EQ(layout.fx(2), 45);
  EXPECT_EQ(layout.qdd(2), 51);
  const KinematicTreeModel m = testing::two_dof_example();
  const auto names = DynLayout(m).channel_names(m);
  ASSERT_EQ(names.size(), 52u);
  EXPECT_EQ(names[18], "link1/tau");
  EXPECT_EQ(names[25], "link1/qdd");
}

TEST(DynLayout, TemplateDimension) {
  const KinematicTreeModel& m = testing::template48();
  EXPECT_EQ(DynLayout(m).size(), 1248);
  // 24 N_B + 2 n
  EXPECT_EQ(DynLayout(m).size(), 24 * 48 + 2 * 48);
}

TEST(Rnea, SingleLinkStatics) {
  ModelBuilder b;
  b.add_link({"base", SpatialInertia(), std::nullopt, false});
  const Vec3 c(0.3, 0.1, 0.2);
  const double m = 2.0;
  b.add_link({"arm", SpatialInertia(m, c, Mat3::Identity() * 0.01), std::nullopt, false});
  b.add_joint({"j", "base", "arm", Vec3::UnitY(), HomTransform(), {}});
  const KinematicTreeModel model = b.build();
  const Eigen::VectorXd z = Eigen::VectorXd::Zero(1);
  const DynVector d = rnea(model, z, z, z);
  const Vec3 support(0, 0, m * kGravity);
  EXPECT_NEAR(d.tau(1), Vec3::UnitY().dot(c.cross(support)), 1e-12);
  EXPECT_LE((Vec3(d.f(1).head<3>()) - support).norm(), 1e-12);
  EXPECT_LE((Vec3(d.f(1).tail<3>()) - c.cross(support)).norm(), 1e-12);
  EXPECT_NEAR(d.a(1)(2), kGravity, 1e-15);
}

TEST(Rnea, VerticalPendulumAtRest) {
  const KinematicTreeModel m = testing::vertical_pendulum();
  const Eigen::VectorXd z = Eigen::VectorXd::Zero(2);
  const DynVector d = rnea(m, z, z, z);
  EXPECT_LE(d.torques().cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Rnea, DimensionMismatch) {
  const KinematicTreeModel m = testing::vertical_pendulum();
  EXPECT_THROW(rnea(m, Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2)), InputError);
  EXPECT_THROW(rnea(m, Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2),
                    Eigen::VectorXd::Zero(5)),
               InputError);
}

TEST(Constraints, RneaSatisfiesRandomModels) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t links = 2 + static_cast<std::size_t>(trial % 9);
    const KinematicTreeModel m = trial % 2 ? testing::random_tree(rng, links) : testing::random_chain(rng, links);
    const auto n = static_cast<Eigen::Index>(links);
    const Eigen::VectorXd q = random_vector(rng, n, 3.0), qd = random_vector(rng, n, 2.0),
                          qdd = random_vector(rng, n, 5.0);
    const DynVector d = rnea(m, q, qd, qdd, random_wrenches(rng, links, 10.0));
    const ConstraintSystem sys = assemble_constraints(m, q, qd);
    EXPECT_LE(residual_inf(sys, d), 1e-9 * (1.0 + d.values().cwiseAbs().maxCoeff()));
  }
}

TEST(Constraints, Dimensions) {
  const KinematicTreeModel two = testing::two_dof_example();
  const ConstraintSystem s2 = assemble_constraints(two, Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2));
  EXPECT_EQ(s2.D.rows(), 38);
  EXPECT_EQ(s2.D.cols(), 52);
  const KinematicTreeModel& m = testing::template48();
  const ConstraintSystem s = assemble_constraints(m, Eigen::VectorXd::Zero(48), Eigen::VectorXd::Zero(48));
  EXPECT_EQ(s.D.rows(), 912);
  EXPECT_EQ(s.D.cols(), 1248);
  EXPECT_EQ(s.b.size(), 912);
}

TEST(Constraints, GravityBiasOnlyOnBaseChildren) {
  std::mt19937_64 rng(32);
  const KinematicTreeModel m = testing::random_tree(rng, 7);
  const Eigen::VectorXd q = random_vector(rng, 7), z = Eigen::VectorXd::Zero(7);
  const ConstraintSystem sys = assemble_constraints(m, q, z);
  const DynVector zero(DynLayout{m});
  const Eigen::VectorXd r = sys.D * zero.values() + sys.b;
  for (std::size_t i = 1; i < m.link_count(); ++i) {
    const Eigen::Index row = ConstraintRows::acceleration(i);
    if (m.parent(i) == 0) {
      EXPECT_GT(r.segment<6>(row).norm(), 1.0);
    } else {
      EXPECT_EQ(r.segment<6>(row).norm(), 0.0);
    }
    EXPECT_EQ(r.segment<13>(row + 6).norm(), 0.0);
  }
}

TEST(Constraints, PatternIndependentOfState) {
  std::mt19937_64 rng(33);
  const KinematicTreeModel m = testing::random_tree(rng, 6);
  const ConstraintAssembler assembler(m);
  const ConstraintSystem a = assembler.assemble(random_vector(rng, 6), random_vector(rng, 6));
  const ConstraintSystem b = assembler.assemble(random_vector(rng, 6), random_vector(rng, 6));
  ASSERT_EQ(a.D.nonZeros(), b.D.nonZeros());
  for (Eigen::Index k = 0; k <= a.D.cols(); ++k) EXPECT_EQ(a.D.outerIndexPtr()[k], b.D.outerIndexPtr()[k]);
  for (Eigen::Index k = 0; k < a.D.nonZeros(); ++k) EXPECT_EQ(a.D.innerIndexPtr()[k], b.D.innerIndexPtr()[k]);
  const Eigen::VectorXd q = random_vector(rng, 6), qd = random_vector(rng, 6);
  EXPECT_LE((Eigen::MatrixXd(assembler.assemble(q, qd).D) - Eigen::MatrixXd(assemble_constraints(m, q, qd).D))
                .cwiseAbs()
                .maxCoeff(),
            0.0);
}

TEST(Constraints, EliminationRecoversTorques) {
  // Fix qdd and fx, solve the square remainder of D d + b = 0.
  const KinematicTreeModel m = testing::two_dof_example();
  std::mt19937_64 rng(34);
  const Eigen::VectorXd q = random_vector(rng, 2), qd = random_vector(rng, 2), qdd = random_vector(rng, 2);
  const Eigen::VectorXd fx = random_wrenches(rng, 2, 5.0);
  const DynVector ref = rnea(m, q, qd, qdd, fx);
  const ConstraintSystem sys = assemble_constraints(m, q, qd);
  const DynLayout layout(m);
  std::vector<Eigen::Index> known, unknown;
  for (std::size_t i = 1; i <= 2; ++i) {
    for (Eigen::Index k = 0; k < 26; ++k) {
      const Eigen::Index col = layout.a(i) + k;
      (col >= layout.fx(i) ? known : unknown).push_back(col);
    }
  }
  const Eigen::MatrixXd dense(sys.D);
  Eigen::MatrixXd a(dense.rows(), static_cast<Eigen::Index>(unknown.size()));
  Eigen::VectorXd rhs = -sys.b;
  for (std::size_t k = 0; k < unknown.size(); ++k) a.col(static_cast<Eigen::Index>(k)) = dense.col(unknown[k]);
  for (Eigen::Index col : known) rhs -= dense.col(col) * ref.values()(col);
  ASSERT_EQ(a.rows(), a.cols());
  const Eigen::VectorXd x = a.fullPivLu().solve(rhs);
  for (std::size_t i = 1; i <= 2; ++i) {
    const auto at = std::find(unknown.begin(), unknown.end(), layout.tau(i)) - unknown.begin();
    EXPECT_NEAR(x(at), ref.tau(i), 1e-8);
  }
}

TEST(Lagrangian, SymmetricMassAndIdentity) {
  const KinematicTreeModel m = testing::five_link_chain();
  std::mt19937_64 rng(35);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::VectorXd q = random_vector(rng, 5, 3.0), qd = random_vector(rng, 5, 2.0),
                          qdd = random_vector(rng, 5, 4.0), fx = random_wrenches(rng, 5, 5.0);
    const LagrangianTerms t = extract_lagrangian_terms(m, q, qd);
    EXPECT_LE((t.mass_matrix - t.mass_matrix.transpose()).cwiseAbs().maxCoeff(), 1e-10);
    const Eigen::VectorXd tau = t.mass_matrix * qdd + t.bias + t.gravity - t.jacobian_transpose * fx;
    EXPECT_LE((tau - rnea(m, q, qd, qdd, fx).torques()).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Lagrangian, EnergyOracles) {
  // Kinetic energy from link velocities, gravity torque from the potential
  // gradient and the Jacobian from external power.
  const KinematicTreeModel m = testing::five_link_chain();
  std::mt19937_64 rng(36);
  const Eigen::VectorXd q = random_vector(rng, 5, 2.0), qd = random_vector(rng, 5, 2.0);
  const LagrangianTerms t = extract_lagrangian_terms(m, q, qd);
  const TreeKinematics kin = compute_kinematics(m, q, qd);
  double kinetic = 0.0;
  for (std::size_t i = 1; i < m.link_count(); ++i) kinetic += 0.5 * kin.v[i].dot(m.link(i).inertia.matrix() * kin.v[i]);
  EXPECT_NEAR(0.5 * qd.dot(t.mass_matrix * qd), kinetic, 1e-10 * (1.0 + kinetic));
  EXPECT_GT(Eigen::LLT<Eigen::MatrixXd>(t.mass_matrix).info() == Eigen::Success, 0);

  auto potential = [&](const Eigen::VectorXd& qq) {
    const auto poses = forward_kinematics(m, qq);
    double u = 0.0;
    for (std::size_t i = 1; i < m.link_count(); ++i) {
      u += m.link(i).inertia.mass() * kGravity * poses[i].apply(m.link(i).inertia.com()).z();
    }
    return u;
  };
  for (Eigen::Index j = 0; j < 5; ++j) {
    const double h = 1e-6;
    Eigen::VectorXd qp = q, qm = q;
    qp(j) += h;
    qm(j) -= h;
    EXPECT_NEAR(t.gravity(j), (potential(qp) - potential(qm)) / (2 * h), 1e-6);
  }

  const Eigen::VectorXd fx = random_wrenches(rng, 5, 3.0);
  double power = 0.0;
  for (std::size_t i = 1; i < m.link_count(); ++i) {
    const Vec6 v0 = adjoint_motion(kin.world[i]) * kin.v[i];
    power += v0.dot(fx.segment<6>(6 * static_cast<Eigen::Index>(i - 1)));
  }
  EXPECT_NEAR(qd.dot(t.jacobian_transpose * fx), power, 1e-10);
}

TEST(Lagrangian, PendulumGravityZeroAtRest) {
  const KinematicTreeModel m = testing::vertical_pendulum();
  const LagrangianTerms t = extract_lagrangian_terms(m, Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2));
  EXPECT_LE(t.gravity.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Lagrangian, EnergyDriftShrinksWithStep) {
  // Free motion integrated by explicit midpoint: drift O(dt^2).
  const KinematicTreeModel m = testing::vertical_pendulum();
  auto energy = [&](const Eigen::VectorXd& q, const Eigen::VectorXd& qd) {
    const LagrangianTerms t = extract_lagrangian_terms(m, q, qd);
    const auto poses = forward_kinematics(m, q);
    double u = 0.0;
    for (std::size_t i = 1; i < m.link_count(); ++i) {
      u += m.link(i).inertia.mass() * kGravity * poses[i].apply(m.link(i).inertia.com()).z();
    }
    return 0.5 * qd.dot(t.mass_matrix * qd) + u;
  };
  auto accel = [&](const Eigen::VectorXd& q, const Eigen::VectorXd& qd) {
    const LagrangianTerms t = extract_lagrangian_terms(m, q, qd);
    return Eigen::VectorXd(t.mass_matrix.ldlt().solve(-t.bias - t.gravity));
  };
  auto drift = [&](double dt) {
    Eigen::VectorXd q(2), qd = Eigen::VectorXd::Zero(2);
    q << 0.6, -0.3;
    const double e0 = energy(q, qd);
    const int steps = static_cast<int>(std::lround(1.0 / dt));
    double worst = 0.0;
    for (int k = 0; k < steps; ++k) {
      const Eigen::VectorXd qm = q + 0.5 * dt * qd, qdm = qd + 0.5 * dt * accel(q, qd);
      q += dt * qdm;
      qd += dt * accel(qm, qdm);
      worst = std::max(worst, std::abs(energy(q, qd) - e0));
    }
    return worst;
  };
  const double coarse = drift(4e-3), fine = drift(2e-3);
  EXPECT_LT(fine, coarse);
  EXPECT_LT(fine, 1e-2);
  EXPECT_GT(coarse / fine, 2.5);
}

struct ConsistentCase {
  KinematicTreeModel model;
  Eigen::VectorXd q, qd, qdd, fx;
  Vec6 f_fp;
  HomTransform fp_pose;
};

ConsistentCase consistent_chain(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ConsistentCase c{testing::random_chain(rng, 5), random_vector(rng, 5), random_vector(rng, 5),
                   random_vector(rng, 5), random_wrenches(rng, 5, 4.0), Vec6::Zero(),
                   HomTransform(Rotation3::from_rpy(0.1, 0.2, -0.4), Vec3(0.05, -0.02, -0.1))};
  const DynVector d = rnea(c.model, c.q, c.qd, c.qdd, c.fx);
  c.f_fp = predicted_base_wrench(c.model, compute_kinematics(c.model, c.q, c.qd), d, c.fp_pose);
  return c;
}

TEST(TopDown, ConsistentAndPerturbed) {
  const ConsistentCase c = consistent_chain(37);
  const TopDownReport ok = id_topdown(c.model, c.q, c.qd, c.qdd, c.fx, c.f_fp, c.fp_pose);
  EXPECT_LE(ok.inconsistency.cwiseAbs().maxCoeff(), 1e-9);
  ASSERT_TRUE(ok.first_link_dynamic.has_value());
  EXPECT_LE((*ok.first_link_dynamic - *ok.first_link_boundary).cwiseAbs().maxCoeff(), 1e-9);

  Vec6 perturbed = c.f_fp;
  perturbed(2) += 10.0;
  const TopDownReport bad = id_topdown(c.model, c.q, c.qd, c.qdd, c.fx, perturbed, c.fp_pose);
  EXPECT_NEAR(bad.inconsistency.head<3>().norm(), 10.0, 1e-9);
  const Vec3 expected = -(c.fp_pose.rotation() * Vec3(0, 0, 10.0));
  EXPECT_LE((Vec3(bad.inconsistency.head<3>()) - expected).norm(), 1e-9);
}

TEST(TopDown, StaticSingleLinkWeight) {
  ModelBuilder b;
  b.add_link({"base", SpatialInertia(1.0, Vec3::Zero(), Mat3::Identity() * 0.01), std::nullopt, false});
  b.add_link({"body", SpatialInertia(4.0, Vec3(0, 0, 0.5), Mat3::Identity() * 0.1), std::nullopt, false});
  b.add_joint({"j", "base", "body", Vec3::UnitX(), HomTransform(), {}});
  const KinematicTreeModel m = b.build();
  const Eigen::VectorXd z = Eigen::VectorXd::Zero(1);
  // Plate under the base reads the weight of base and body.
  Vec6 f_fp = Vec6::Zero();
  f_fp(2) = 5.0 * kGravity;
  const TopDownReport r = id_topdown(m, z, z, z, Eigen::VectorXd(), f_fp);
  EXPECT_NEAR(r.boundary_base_wrench(2), 4.0 * kGravity, 1e-12);
  EXPECT_LE((r.boundary_base_wrench - r.dynamic_base_wrench).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(BottomUp, ConsistentPerturbedAndAgreesWithTopDown) {
  const ConsistentCase c = consistent_chain(38);
  const BottomUpReport bu = id_bottomup(c.model, c.q, c.qd, c.qdd, c.fx, c.f_fp, c.fp_pose);
  EXPECT_LE(bu.inconsistency.cwiseAbs().maxCoeff(), 1e-9);
  const TopDownReport td = id_topdown(c.model, c.q, c.qd, c.qdd, c.fx, c.f_fp, c.fp_pose);
  for (std::size_t i = 1; i < c.model.link_count(); ++i) {
    EXPECT_LE((bu.joint_forces[i] - Vec6(td.dynamics.f(i))).cwiseAbs().maxCoeff(), 1e-9);
  }
  Vec6 perturbed = c.f_fp;
  perturbed(2) += 10.0;
  const BottomUpReport bad = id_bottomup(c.model, c.q, c.qd, c.qdd, c.fx, perturbed, c.fp_pose);
  EXPECT_NEAR(bad.inconsistency_base.head<3>().norm(), 10.0, 1e-9);
  EXPECT_NEAR(bad.inconsistency.head<3>().norm(), 10.0, 1e-9);
}

TEST(BottomUp, RejectsBranching) {
  std::mt19937_64 rng(39);
  ModelBuilder b;
  b.add_link({"base", SpatialInertia(), std::nullopt, false});
  for (const char* n : {"a", "b"}) {
    b.add_link({n, SpatialInertia(1.0, Vec3::Zero(), Mat3::Identity()), std::nullopt, false});
    b.add_joint({std::string("j") + n, "base", n, Vec3::UnitZ(), HomTransform(), {}});
  }
  const KinematicTreeModel m = b.build();
  const Eigen::VectorXd z = Eigen::VectorXd::Zero(2);
  EXPECT_THROW(id_bottomup(m, z, z, z, Eigen::VectorXd(), Vec6::Zero()), ModelError);
}

}  // namespace
}  // namespace mapdyn
