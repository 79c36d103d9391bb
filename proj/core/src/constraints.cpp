#include "mapdyn/dynamics.hpp"
#include "mapdyn/errors.hpp"

namespace mapdyn {

namespace {

// Visits every structural entry of D in a fixed order. The entry set depends
// only on the topology; values come from `kin`.
template <class Sink>
void for_each_entry(const KinematicTreeModel& model, const TreeKinematics& kin, Sink&& sink) {
  const DynLayout layout(model);
  auto block = [&](Eigen::Index r0, Eigen::Index c0, const Mat6& m) {
    for (Eigen::Index c = 0; c < 6; ++c)
      for (Eigen::Index r = 0; r < 6; ++r) sink(r0 + r, c0 + c, m(r, c));
  };
  auto diag = [&](Eigen::Index r0, Eigen::Index c0, double value) {
    for (Eigen::Index k = 0; k < 6; ++k) sink(r0 + k, c0 + k, value);
  };
  for (std::size_t i = 1; i <= model.moving_link_count(); ++i) {
    const Eigen::Index ra = ConstraintRows::acceleration(i);
    const Eigen::Index rb = ConstraintRows::body_force(i);
    const Eigen::Index rf = ConstraintRows::joint_force(i);
    const Eigen::Index rt = ConstraintRows::torque(i);
    const std::size_t parent = model.parent(i);

    // -a_i + S qdd_i + ^iX_parent a_parent + b = 0
    diag(ra, layout.a(i), -1.0);
    for (Eigen::Index k = 0; k < 6; ++k) sink(ra + k, layout.qdd(i), kin.s[i](k));
    if (parent != 0) block(ra, layout.a(parent), kin.x_parent[i]);

    // I_i a_i - fB_i + v_i x* I_i v_i = 0
    block(rb, layout.a(i), model.link(i).inertia.matrix());
    diag(rb, layout.fB(i), -1.0);

    // fB_i - f_i - ^iX_0^* fx_i + sum_c ^iX_c^* f_c = 0
    diag(rf, layout.fB(i), 1.0);
    diag(rf, layout.f(i), -1.0);
    block(rf, layout.fx(i), -adjoint_force(kin.world[i].inverse()));
    for (std::size_t c : model.children(i)) block(rf, layout.f(c), kin.x_parent[c].transpose());

    // S^T f_i - tau_i = 0
    for (Eigen::Index k = 0; k < 6; ++k) sink(rt, layout.f(i) + k, kin.s[i](k));
    sink(rt, layout.tau(i), -1.0);
  }
}

Eigen::VectorXd constraint_bias(const KinematicTreeModel& model, const TreeKinematics& kin) {
  const auto nb = model.moving_link_count();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(ConstraintRows::kPerLink * static_cast<Eigen::Index>(nb));
  const Vec6 a0 = -gravity_spatial();
  for (std::size_t i = 1; i <= nb; ++i) {
    const SpatialMotionVec v(kin.v[i]);
    const SpatialMotionVec vj(Vec6(kin.s[i] * kin.qd(static_cast<Eigen::Index>(i - 1))));
    Vec6 ba = cross_motion(v, vj).vector();
    if (model.parent(i) == 0) ba += kin.x_parent[i] * a0;
    b.segment<6>(ConstraintRows::acceleration(i)) = ba;
    const Mat6 inertia = model.link(i).inertia.matrix();
    b.segment<6>(ConstraintRows::body_force(i)) =
        cross_force(v, SpatialForceVec(Vec6(inertia * kin.v[i]))).vector();
  }
  return b;
}

}  // namespace

ConstraintAssembler::ConstraintAssembler(const KinematicTreeModel& model)
    : model_(&model),
      rows_(ConstraintRows::kPerLink * static_cast<Eigen::Index>(model.moving_link_count())),
      cols_(DynLayout(model).size()) {
  const auto n = static_cast<Eigen::Index>(model.dof_count());
  const TreeKinematics kin = compute_kinematics(model, Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n));
  pattern_.build(rows_, cols_, [&](auto&& sink) { for_each_entry(model, kin, sink); });
}

void ConstraintAssembler::assemble(const TreeKinematics& kin, ConstraintSystem& out) const {
  pattern_.fill(out.D, [&](auto&& sink) { for_each_entry(*model_, kin, sink); });
  out.b = constraint_bias(*model_, kin);
  out.q = kin.q;
  out.qd = kin.qd;
}

ConstraintSystem ConstraintAssembler::assemble(const Eigen::VectorXd& q, const Eigen::VectorXd& qd) const {
  ConstraintSystem out;
  assemble(compute_kinematics(*model_, q, qd), out);
  return out;
}

ConstraintSystem assemble_constraints(const KinematicTreeModel& model, const Eigen::VectorXd& q,
                                      const Eigen::VectorXd& qd) {
  return ConstraintAssembler(model).assemble(q, qd);
}

}  // namespace mapdyn
