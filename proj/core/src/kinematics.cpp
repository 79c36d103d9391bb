#include <string>

#include "mapdyn/dynamics.hpp"
#include "mapdyn/errors.hpp"

namespace mapdyn {

std::vector<std::string> DynLayout::channel_names(const KinematicTreeModel& model) const {
  static const char* const kMotion[] = {"lin_x", "lin_y", "lin_z", "ang_x", "ang_y", "ang_z"};
  static const char* const kForce[] = {"fx", "fy", "fz", "mx", "my", "mz"};
  if (model.moving_link_count() != links_) throw InputError("layout does not match model");
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(size()));
  for (std::size_t i = 1; i <= links_; ++i) {
    const std::string& l = model.link(i).name;
    for (auto c : kMotion) names.push_back(l + "/a_" + c);
    for (auto c : kForce) names.push_back(l + "/fB_" + c);
    for (auto c : kForce) names.push_back(l + "/f_" + c);
    names.push_back(l + "/tau");
    for (auto c : kForce) names.push_back(l + "/fx_" + c);
    names.push_back(l + "/qdd");
  }
  return names;
}

DynVector::DynVector(const DynLayout& layout, Eigen::VectorXd values) : layout_(layout), values_(std::move(values)) {
  if (values_.size() != layout_.size()) throw InputError("DynVector: value vector has wrong length");
}

Eigen::VectorXd DynVector::torques() const {
  Eigen::VectorXd t(static_cast<Eigen::Index>(layout_.moving_links()));
  for (std::size_t i = 1; i <= layout_.moving_links(); ++i) t(static_cast<Eigen::Index>(i - 1)) = tau(i);
  return t;
}

TreeKinematics compute_kinematics(const KinematicTreeModel& model, const Eigen::VectorXd& q,
                                  const Eigen::VectorXd& qd) {
  const std::size_t nl = model.link_count();
  if (static_cast<std::size_t>(q.size()) != model.dof_count() ||
      static_cast<std::size_t>(qd.size()) != model.dof_count()) {
    throw InputError("compute_kinematics: q and qd must have " + std::to_string(model.dof_count()) + " entries");
  }
  TreeKinematics k;
  k.q = q;
  k.qd = qd;
  k.world.assign(nl, HomTransform::identity());
  k.x_parent.assign(nl, Mat6::Identity());
  k.x_base.assign(nl, Mat6::Identity());
  k.v.assign(nl, Vec6::Zero());
  k.s.assign(nl, Vec6::Zero());
  for (std::size_t i = 1; i < nl; ++i) {
    const Joint& j = model.joint_of(i);
    const auto dof = static_cast<Eigen::Index>(i - 1);
    const HomTransform parent_h_child = joint_transform(j, q(dof));
    k.world[i] = k.world[j.parent] * parent_h_child;
    k.x_parent[i] = adjoint_motion(parent_h_child.inverse());
    k.x_base[i] = adjoint_motion(k.world[i].inverse());
    k.s[i].tail<3>() = j.axis;
    k.v[i] = k.x_parent[i] * k.v[j.parent] + k.s[i] * qd(dof);
  }
  return k;
}

}  // namespace mapdyn
