#include <string>

#include "mapdyn/dynamics.hpp"
#include "mapdyn/errors.hpp"

namespace mapdyn {

namespace {

void check_size(const Eigen::VectorXd& v, std::size_t expected, const char* what) {
  if (static_cast<std::size_t>(v.size()) != expected) {
    throw InputError(std::string("rnea: ") + what + " has " + std::to_string(v.size()) + " entries, expected " +
                     std::to_string(expected));
  }
}

Vec6 motion_cross(const Vec6& v, const Vec6& u) {
  return cross_motion(SpatialMotionVec(v), SpatialMotionVec(u)).vector();
}

Vec6 force_cross(const Vec6& v, const Vec6& f) {
  return cross_force(SpatialMotionVec(v), SpatialForceVec(f)).vector();
}

}  // namespace

DynVector rnea(const KinematicTreeModel& model, const Eigen::VectorXd& q, const Eigen::VectorXd& qd,
               const Eigen::VectorXd& qdd, const Eigen::VectorXd& fx, const Vec6& base_acceleration) {
  const std::size_t n = model.dof_count();
  const std::size_t nb = model.moving_link_count();
  check_size(q, n, "q");
  check_size(qd, n, "qd");
  check_size(qdd, n, "qdd");
  if (fx.size() != 0) check_size(fx, 6 * nb, "fx");

  const TreeKinematics kin = compute_kinematics(model, q, qd);
  DynVector d{DynLayout(model)};
  std::vector<Vec6> acc(model.link_count(), Vec6::Zero());
  acc[0] = base_acceleration;

  for (std::size_t i = 1; i <= nb; ++i) {
    const auto dof = static_cast<Eigen::Index>(i - 1);
    const Vec6 vj = kin.s[i] * qd(dof);
    acc[i] = kin.x_parent[i] * acc[model.parent(i)] + kin.s[i] * qdd(dof) + motion_cross(kin.v[i], vj);
    const Mat6 inertia = model.link(i).inertia.matrix();
    d.a(i) = acc[i];
    d.fB(i) = inertia * acc[i] + force_cross(kin.v[i], inertia * kin.v[i]);
    d.qdd(i) = qdd(dof);
    if (fx.size() != 0) d.fx(i) = fx.segment<6>(6 * dof);
  }
  for (std::size_t i = nb; i >= 1; --i) {
    // ^iX_0^* = (^0X_i)^T and ^iX_c^* = (^cX_i)^T.
    const Mat6 x_force_base = adjoint_force(kin.world[i].inverse());
    Vec6 f = d.fB(i) - x_force_base * d.fx(i);
    for (std::size_t c : model.children(i)) f += kin.x_parent[c].transpose() * d.f(c);
    d.f(i) = f;
    d.tau(i) = kin.s[i].dot(f);
  }
  return d;
}

LagrangianTerms extract_lagrangian_terms(const KinematicTreeModel& model, const Eigen::VectorXd& q,
                                         const Eigen::VectorXd& qd) {
  const auto n = static_cast<Eigen::Index>(model.dof_count());
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(n);
  const Vec6 no_gravity = Vec6::Zero();
  LagrangianTerms t;
  t.mass_matrix.resize(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    t.mass_matrix.col(j) = rnea(model, q, zero, Eigen::VectorXd::Unit(n, j), {}, no_gravity).torques();
  }
  t.bias = rnea(model, q, qd, zero, {}, no_gravity).torques();
  t.gravity = rnea(model, q, zero, zero).torques();
  t.jacobian_transpose.resize(n, 6 * n);
  for (Eigen::Index k = 0; k < 6 * n; ++k) {
    t.jacobian_transpose.col(k) = -rnea(model, q, zero, zero, Eigen::VectorXd::Unit(6 * n, k), no_gravity).torques();
  }
  return t;
}

Vec6 predicted_base_wrench(const KinematicTreeModel& model, const TreeKinematics& kin, const DynVector& d,
                           const HomTransform& fp_pose) {
  Vec6 sum = Vec6::Zero();
  for (std::size_t c : model.children(0)) sum += kin.x_base[c].transpose() * d.f(c);
  const Vec6 weight = model.link(0).inertia.matrix() * gravity_spatial();
  return adjoint_force(fp_pose.inverse()) * (sum - weight);
}

}  // namespace mapdyn
