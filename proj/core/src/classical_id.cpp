#include "mapdyn/dynamics.hpp"
#include "mapdyn/errors.hpp"

namespace mapdyn {

namespace {

Vec6 boundary_wrench(const KinematicTreeModel& model, const Vec6& f_fp, const HomTransform& fp_pose) {
  return model.link(0).inertia.matrix() * gravity_spatial() + adjoint_force(fp_pose) * f_fp;
}

}  // namespace

TopDownReport id_topdown(const KinematicTreeModel& model, const Eigen::VectorXd& q, const Eigen::VectorXd& qd,
                         const Eigen::VectorXd& qdd, const Eigen::VectorXd& fx, const Vec6& f_fp,
                         const HomTransform& fp_pose) {
  if (model.moving_link_count() == 0) throw ModelError("id_topdown: model has no moving links");
  const TreeKinematics kin = compute_kinematics(model, q, qd);
  TopDownReport r;
  r.dynamics = rnea(model, q, qd, qdd, fx);
  r.dynamic_base_wrench = Vec6::Zero();
  for (std::size_t c : model.children(0)) r.dynamic_base_wrench += kin.x_base[c].transpose() * r.dynamics.f(c);
  r.boundary_base_wrench = boundary_wrench(model, f_fp, fp_pose);
  r.inconsistency = r.dynamic_base_wrench - r.boundary_base_wrench;
  if (model.children(0).size() == 1) {
    const std::size_t c = model.children(0).front();
    r.first_link_dynamic = r.dynamics.f(c);
    r.first_link_boundary = adjoint_force(kin.world[c].inverse()) * r.boundary_base_wrench;
  }
  return r;
}

BottomUpReport id_bottomup(const KinematicTreeModel& model, const Eigen::VectorXd& q, const Eigen::VectorXd& qd,
                           const Eigen::VectorXd& qdd, const Eigen::VectorXd& fx, const Vec6& f_fp,
                           const HomTransform& fp_pose) {
  const std::size_t nl = model.link_count();
  if (nl < 2) throw ModelError("id_bottomup: model has no moving links");
  for (std::size_t i = 0; i < nl; ++i) {
    if (model.children(i).size() > 1) {
      throw ModelError("id_bottomup: link '" + model.link(i).name +
                       "' has several children; the bottom-up recursion needs a chain");
    }
  }
  const TreeKinematics kin = compute_kinematics(model, q, qd);
  const DynVector d = rnea(model, q, qd, qdd, fx);

  BottomUpReport r;
  r.joint_forces.assign(nl, Vec6::Zero());
  std::size_t link = model.children(0).front();
  r.joint_forces[link] = adjoint_force(kin.world[link].inverse()) * boundary_wrench(model, f_fp, fp_pose);
  while (!model.children(link).empty()) {
    const std::size_t next = model.children(link).front();
    const Vec6 rest = r.joint_forces[link] - Vec6(d.fB(link)) +
                      adjoint_force(kin.world[link].inverse()) * Vec6(d.fx(link));
    r.joint_forces[next] = adjoint_force(kin.world[next].inverse() * kin.world[link]) * rest;
    link = next;
  }
  r.top_link = link;
  r.top_propagated = r.joint_forces[link];
  r.top_boundary = Vec6(d.fB(link)) - adjoint_force(kin.world[link].inverse()) * Vec6(d.fx(link));
  r.inconsistency = r.top_propagated - r.top_boundary;
  r.inconsistency_base = kin.x_base[link].transpose() * r.inconsistency;
  return r;
}

}  // namespace mapdyn
