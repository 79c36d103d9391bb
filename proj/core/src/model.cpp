#include "mapdyn/model.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "mapdyn/errors.hpp"

namespace mapdyn {

std::optional<std::size_t> KinematicTreeModel::find_link(std::string_view name) const {
  for (std::size_t i = 0; i < links_.size(); ++i) {
    if (links_[i].name == name) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> KinematicTreeModel::find_joint(std::string_view name) const {
  for (std::size_t j = 0; j < joints_.size(); ++j) {
    if (joints_[j].name == name) return j;
  }
  return std::nullopt;
}

std::size_t KinematicTreeModel::link_index(std::string_view name) const {
  if (auto i = find_link(name)) return *i;
  throw ModelError("unknown link '" + std::string(name) + "'");
}

std::size_t KinematicTreeModel::joint_index(std::string_view name) const {
  if (auto j = find_joint(name)) return *j;
  throw ModelError("unknown joint '" + std::string(name) + "'");
}

std::vector<std::size_t> KinematicTreeModel::ancestors_and_self(std::size_t link) const {
  std::vector<std::size_t> path;
  for (std::size_t i = link; i != 0; i = parent(i)) path.push_back(i);
  std::reverse(path.begin(), path.end());
  return path;
}

bool KinematicTreeModel::is_ancestor(std::size_t ancestor, std::size_t link) const {
  for (std::size_t i = link; i != 0; i = parent(i)) {
    if (i == ancestor) return true;
  }
  return ancestor == 0;
}

std::size_t KinematicTreeModel::real_parent(std::size_t link) const {
  std::size_t p = parent(link);
  while (p != 0 && links_[p].is_dummy) p = parent(p);
  return p;
}

namespace {

bool near(const Mat3& a, const Mat3& b, double tol) { return (a - b).cwiseAbs().maxCoeff() <= tol; }
bool near(const Vec3& a, const Vec3& b, double tol) { return (a - b).cwiseAbs().maxCoeff() <= tol; }
bool near(const HomTransform& a, const HomTransform& b, double tol) {
  return near(a.rotation().matrix(), b.rotation().matrix(), tol) && near(a.translation(), b.translation(), tol);
}
bool near(double a, double b, double tol) {
  if (std::isinf(a) || std::isinf(b)) return a == b;
  return std::abs(a - b) <= tol;
}

bool shapes_equal(const Shape& a, const Shape& b, double tol) {
  if (a.index() != b.index()) return false;
  if (auto* p = std::get_if<Parallelepiped>(&a)) {
    auto& q = std::get<Parallelepiped>(b);
    return near(p->width, q.width, tol) && near(p->height, q.height, tol) && near(p->depth, q.depth, tol);
  }
  if (auto* c = std::get_if<Cylinder>(&a)) {
    auto& d = std::get<Cylinder>(b);
    return near(c->radius, d.radius, tol) && near(c->length, d.length, tol);
  }
  return near(std::get<Sphere>(a).radius, std::get<Sphere>(b).radius, tol);
}

}  // namespace

bool models_equal(const KinematicTreeModel& a, const KinematicTreeModel& b, double tol) {
  if (a.name() != b.name() || a.link_count() != b.link_count() || a.dof_count() != b.dof_count() ||
      a.sensors().size() != b.sensors().size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.link_count(); ++i) {
    const Link& la = a.link(i);
    const Link& lb = b.link(i);
    if (la.name != lb.name || la.is_dummy != lb.is_dummy) return false;
    if (!near(la.inertia.mass(), lb.inertia.mass(), tol) || !near(la.inertia.com(), lb.inertia.com(), tol) ||
        !near(la.inertia.inertia_com(), lb.inertia.inertia_com(), tol)) {
      return false;
    }
    if (la.visual.has_value() != lb.visual.has_value()) return false;
    if (la.visual && (!shapes_equal(la.visual->geometry, lb.visual->geometry, tol) ||
                      !near(la.visual->origin, lb.visual->origin, tol))) {
      return false;
    }
  }
  for (std::size_t j = 0; j < a.dof_count(); ++j) {
    const Joint& ja = a.joints()[j];
    const Joint& jb = b.joints()[j];
    if (ja.name != jb.name || ja.parent != jb.parent || ja.child != jb.child || !near(ja.axis, jb.axis, tol) ||
        !near(ja.origin, jb.origin, tol) || !near(ja.limits.lower, jb.limits.lower, tol) ||
        !near(ja.limits.upper, jb.limits.upper, tol)) {
      return false;
    }
  }
  for (std::size_t s = 0; s < a.sensors().size(); ++s) {
    const SensorAttachment& sa = a.sensors()[s];
    const SensorAttachment& sb = b.sensors()[s];
    if (sa.name != sb.name || sa.type != sb.type || sa.link != sb.link || !near(sa.pose, sb.pose, tol)) return false;
  }
  return true;
}

ModelBuilder& ModelBuilder::add_link(Link link) {
  links_.push_back(std::move(link));
  return *this;
}

ModelBuilder& ModelBuilder::add_joint(JointSpec joint) {
  joints_.push_back(std::move(joint));
  return *this;
}

ModelBuilder& ModelBuilder::add_sensor(SensorSpec sensor) {
  sensors_.push_back(std::move(sensor));
  return *this;
}

KinematicTreeModel ModelBuilder::build() const {
  if (links_.empty()) throw ModelError("model '" + name_ + "' has no links");

  std::unordered_map<std::string, std::size_t> link_by_name;
  for (std::size_t i = 0; i < links_.size(); ++i) {
    if (!link_by_name.emplace(links_[i].name, i).second) {
      throw ModelError("duplicate link name '" + links_[i].name + "'");
    }
  }

  std::unordered_set<std::string> joint_names;
  std::vector<std::optional<std::size_t>> parent_joint(links_.size());
  std::vector<std::vector<std::size_t>> child_joints(links_.size());
  for (std::size_t j = 0; j < joints_.size(); ++j) {
    const JointSpec& js = joints_[j];
    if (!joint_names.insert(js.name).second) throw ModelError("duplicate joint name '" + js.name + "'");
    auto p = link_by_name.find(js.parent);
    if (p == link_by_name.end()) {
      throw ModelError("joint '" + js.name + "' references unknown parent link '" + js.parent + "'");
    }
    auto c = link_by_name.find(js.child);
    if (c == link_by_name.end()) {
      throw ModelError("joint '" + js.name + "' references unknown child link '" + js.child + "'");
    }
    if (p->second == c->second) throw ModelError("joint '" + js.name + "' connects a link to itself");
    if (parent_joint[c->second]) {
      throw ModelError("link '" + js.child + "' is the child of more than one joint");
    }
    const double n = js.axis.norm();
    if (!(n > 0.0) || !js.axis.allFinite()) throw ModelError("joint '" + js.name + "' has a zero axis");
    if (js.limits.lower > js.limits.upper) throw ModelError("joint '" + js.name + "' has lower limit above upper");
    parent_joint[c->second] = j;
    child_joints[p->second].push_back(j);
  }

  std::vector<std::size_t> roots;
  for (std::size_t i = 0; i < links_.size(); ++i) {
    if (!parent_joint[i]) roots.push_back(i);
  }
  if (roots.size() != 1) {
    std::string names;
    for (auto r : roots) names += (names.empty() ? "" : ", ") + links_[r].name;
    throw ModelError("model must have exactly one root link, found " + std::to_string(roots.size()) +
                     (names.empty() ? std::string(" (cycle)") : " (" + names + ")"));
  }

  // Depth-first preorder keeps chains contiguous.
  std::vector<std::size_t> order;
  std::vector<std::size_t> stack{roots.front()};
  while (!stack.empty()) {
    const std::size_t l = stack.back();
    stack.pop_back();
    order.push_back(l);
    const auto& cj = child_joints[l];
    for (auto it = cj.rbegin(); it != cj.rend(); ++it) {
      stack.push_back(link_by_name.at(joints_[*it].child));
    }
  }
  if (order.size() != links_.size()) throw ModelError("model graph contains a cycle or disconnected links");

  std::vector<std::size_t> new_index(links_.size());
  for (std::size_t k = 0; k < order.size(); ++k) new_index[order[k]] = k;

  KinematicTreeModel m;
  m.name_ = name_;
  m.links_.reserve(links_.size());
  for (std::size_t k = 0; k < order.size(); ++k) m.links_.push_back(links_[order[k]]);
  m.children_.assign(links_.size(), {});
  for (std::size_t k = 1; k < order.size(); ++k) {
    const JointSpec& js = joints_[*parent_joint[order[k]]];
    Joint j;
    j.name = js.name;
    j.parent = new_index[link_by_name.at(js.parent)];
    j.child = k;
    j.axis = js.axis.normalized();
    j.origin = js.origin;
    j.limits = js.limits;
    m.children_[j.parent].push_back(k);
    m.joints_.push_back(std::move(j));
  }

  std::unordered_set<std::string> sensor_names;
  for (const SensorSpec& s : sensors_) {
    if (!sensor_names.insert(s.name).second) throw ModelError("duplicate sensor name '" + s.name + "'");
    auto l = link_by_name.find(s.link);
    if (l == link_by_name.end()) {
      throw ModelError("sensor '" + s.name + "' references unknown link '" + s.link + "'");
    }
    m.sensors_.push_back(SensorAttachment{s.name, s.type, new_index[l->second], s.pose});
  }
  return m;
}

HomTransform joint_transform(const Joint& joint, double q) {
  return joint.origin * HomTransform(Rotation3::about_axis(joint.axis, q), Vec3::Zero());
}

std::vector<HomTransform> forward_kinematics(const KinematicTreeModel& model, const Eigen::VectorXd& q,
                                             std::vector<std::size_t>* limit_violations) {
  if (static_cast<std::size_t>(q.size()) != model.dof_count()) {
    throw InputError("forward_kinematics: q has size " + std::to_string(q.size()) + ", model has " +
                     std::to_string(model.dof_count()) + " DoF");
  }
  std::vector<HomTransform> poses(model.link_count());
  for (std::size_t i = 1; i < model.link_count(); ++i) {
    const Joint& j = model.joint_of(i);
    const double qi = q(static_cast<Eigen::Index>(i - 1));
    if (limit_violations && !j.limits.contains(qi)) limit_violations->push_back(i);
    poses[i] = poses[j.parent] * joint_transform(j, qi);
  }
  return poses;
}

namespace {

Eigen::VectorXd ik_residual(const KinematicTreeModel& model, const std::vector<RelativePoseTarget>& targets,
                            const Eigen::VectorXd& q) {
  const auto poses = forward_kinematics(model, q);
  Eigen::VectorXd r(6 * static_cast<Eigen::Index>(targets.size()));
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const HomTransform rel = poses[targets[t].frame_link].inverse() * poses[targets[t].target_link];
    r.segment<6>(6 * static_cast<Eigen::Index>(t)) = se3_log(targets[t].pose.inverse() * rel);
  }
  return r;
}

Eigen::VectorXd clamp_to_limits(const KinematicTreeModel& model, Eigen::VectorXd q) {
  for (std::size_t j = 0; j < model.dof_count(); ++j) {
    const auto& lim = model.joints()[j].limits;
    q(static_cast<Eigen::Index>(j)) = std::clamp(q(static_cast<Eigen::Index>(j)), lim.lower, lim.upper);
  }
  return q;
}

}  // namespace

IkResult ik_frame_match(const KinematicTreeModel& model, const std::vector<RelativePoseTarget>& targets,
                        const Eigen::VectorXd& q_init, const IkOptions& options) {
  const auto n = static_cast<Eigen::Index>(model.dof_count());
  if (q_init.size() != n) throw InputError("ik_frame_match: q_init has wrong size");
  for (const auto& t : targets) {
    if (t.frame_link >= model.link_count() || t.target_link >= model.link_count()) {
      throw InputError("ik_frame_match: target references an unknown link");
    }
  }

  IkResult result;
  result.q = clamp_to_limits(model, q_init);
  Eigen::VectorXd r = ik_residual(model, targets, result.q);
  double cost = r.squaredNorm();
  double lambda = options.initial_damping;
  constexpr double kFdStep = 1e-7;

  while (result.iterations < options.max_iterations) {
    if (cost <= options.cost_tolerance) {
      result.converged = true;
      break;
    }
    Eigen::MatrixXd jac(r.size(), n);
    for (Eigen::Index j = 0; j < n; ++j) {
      Eigen::VectorXd qp = result.q;
      Eigen::VectorXd qm = result.q;
      qp(j) += kFdStep;
      qm(j) -= kFdStep;
      jac.col(j) = (ik_residual(model, targets, qp) - ik_residual(model, targets, qm)) / (2.0 * kFdStep);
    }
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd g = jac.transpose() * r;
    bool improved = false;
    Eigen::VectorXd step;
    for (int attempt = 0; attempt < 30; ++attempt) {
      Eigen::MatrixXd h = jtj;
      h.diagonal().array() += lambda * (1.0 + jtj.diagonal().array());
      step = -h.ldlt().solve(g);
      const Eigen::VectorXd q_new = clamp_to_limits(model, result.q + step);
      const Eigen::VectorXd r_new = ik_residual(model, targets, q_new);
      const double cost_new = r_new.squaredNorm();
      if (cost_new < cost) {
        step = q_new - result.q;
        result.q = q_new;
        r = r_new;
        cost = cost_new;
        lambda = std::max(lambda * 0.1, 1e-15);
        improved = true;
        break;
      }
      lambda *= 10.0;
    }
    ++result.iterations;
    if (!improved || step.norm() <= options.step_tolerance) {
      // Stationary under the limit projection: best local solution.
      result.converged = true;
      break;
    }
  }
  if (cost <= options.cost_tolerance) result.converged = true;
  result.residual = cost;
  return result;
}

Eigen::MatrixXd relative_angular_jacobian(const KinematicTreeModel& model, const std::vector<HomTransform>& poses,
                                          std::size_t frame_link, std::size_t target_link) {
  const auto n = static_cast<Eigen::Index>(model.dof_count());
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(3, n);
  const Mat3 r_i0 = poses[frame_link].rotation().matrix().transpose();
  auto accumulate = [&](std::size_t link, double sign) {
    for (std::size_t l = link; l != 0; l = model.parent(l)) {
      const Vec3 axis0 = poses[l].rotation() * model.joint_of(l).axis;
      jac.col(static_cast<Eigen::Index>(l - 1)) += sign * (r_i0 * axis0);
    }
  };
  accumulate(target_link, 1.0);
  accumulate(frame_link, -1.0);
  return jac;
}

JointVelocityResult joint_velocities_from_angular(const KinematicTreeModel& model, const Eigen::VectorXd& q,
                                                  const std::vector<RelativeAngularVelocity>& measurements,
                                                  double damping) {
  const auto n = static_cast<Eigen::Index>(model.dof_count());
  const auto poses = forward_kinematics(model, q);
  Eigen::MatrixXd jac(3 * static_cast<Eigen::Index>(measurements.size()), n);
  Eigen::VectorXd w(jac.rows());
  for (std::size_t m = 0; m < measurements.size(); ++m) {
    const auto& meas = measurements[m];
    if (meas.frame_link >= model.link_count() || meas.target_link >= model.link_count()) {
      throw InputError("joint_velocities_from_angular: unknown link index");
    }
    const auto row = 3 * static_cast<Eigen::Index>(m);
    jac.middleRows<3>(row) = relative_angular_jacobian(model, poses, meas.frame_link, meas.target_link);
    w.segment<3>(row) = meas.omega;
  }
  JointVelocityResult result;
  if (n == 0) {
    result.qdot = Eigen::VectorXd::Zero(0);
    return result;
  }
  Eigen::MatrixXd normal = jac.transpose() * jac;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(jac);
  qr.setThreshold(1e-10);
  result.rank_deficient = jac.rows() < n || qr.rank() < n;
  normal.diagonal().array() += damping;
  result.qdot = normal.ldlt().solve(jac.transpose() * w);
  return result;
}

std::vector<std::pair<std::size_t, std::size_t>> coupled_link_pairs(const KinematicTreeModel& model) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 1; i < model.link_count(); ++i) {
    if (!model.link(i).is_dummy) pairs.emplace_back(model.real_parent(i), i);
  }
  return pairs;
}

}  // namespace mapdyn
