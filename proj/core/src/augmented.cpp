#include "mapdyn/augmented.hpp"

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <cmath>
#include <unsupported/Eigen/AutoDiff>

#include "mapdyn/errors.hpp"

namespace mapdyn {

namespace {

template <class S>
using Vec3T = Eigen::Matrix<S, 3, 1>;
template <class S>
using Mat3T = Eigen::Matrix<S, 3, 3>;
template <class S>
using Vec6T = Eigen::Matrix<S, 6, 1>;
template <class S>
using VecXT = Eigen::Matrix<S, Eigen::Dynamic, 1>;

// ^parent H_child, or ^0 H_i for world frames.
template <class S>
struct FrameT {
  Mat3T<S> R;
  Vec3T<S> p;
};

template <class S>
FrameT<S> constant_frame(const HomTransform& h) {
  return {h.rotation().matrix().template cast<S>(), h.translation().template cast<S>()};
}

template <class S>
Mat3T<S> axis_rotation(const Vec3& axis, const S& q) {
  using std::cos;
  using std::sin;
  const Mat3T<S> k = skew(axis).template cast<S>();
  return Mat3T<S>::Identity() + k * sin(q) + (k * k) * (S(1.0) - cos(q));
}

// ^child X_parent applied to a motion vector in parent coordinates.
template <class S>
Vec6T<S> motion_to_child(const FrameT<S>& h, const Vec6T<S>& m) {
  const Vec3T<S> v = m.template head<3>();
  const Vec3T<S> w = m.template tail<3>();
  Vec6T<S> out;
  out.template head<3>() = h.R.transpose() * (v - h.p.cross(w));
  out.template tail<3>() = h.R.transpose() * w;
  return out;
}

// ^parent X_child^* applied to a force in child coordinates.
template <class S>
Vec6T<S> force_to_parent(const FrameT<S>& h, const Vec6T<S>& f) {
  const Vec3T<S> force = h.R * f.template head<3>();
  Vec6T<S> out;
  out.template head<3>() = force;
  out.template tail<3>() = h.R * f.template tail<3>() + h.p.cross(force);
  return out;
}

// ^child X_parent^* applied to a force in parent coordinates.
template <class S>
Vec6T<S> force_to_child(const FrameT<S>& h, const Vec6T<S>& f) {
  const Vec3T<S> force = f.template head<3>();
  Vec6T<S> out;
  out.template head<3>() = h.R.transpose() * force;
  out.template tail<3>() = h.R.transpose() * (f.template tail<3>() - h.p.cross(force));
  return out;
}

template <class S>
Vec6T<S> cross_m(const Vec6T<S>& v, const Vec6T<S>& u) {
  const Vec3T<S> vl = v.template head<3>();
  const Vec3T<S> w = v.template tail<3>();
  Vec6T<S> out;
  out.template head<3>() = w.cross(Vec3T<S>(u.template head<3>())) + vl.cross(Vec3T<S>(u.template tail<3>()));
  out.template tail<3>() = w.cross(Vec3T<S>(u.template tail<3>()));
  return out;
}

template <class S>
Vec6T<S> cross_f(const Vec6T<S>& v, const Vec6T<S>& f) {
  const Vec3T<S> vl = v.template head<3>();
  const Vec3T<S> w = v.template tail<3>();
  Vec6T<S> out;
  out.template head<3>() = w.cross(Vec3T<S>(f.template head<3>()));
  out.template tail<3>() = vl.cross(Vec3T<S>(f.template head<3>())) + w.cross(Vec3T<S>(f.template tail<3>()));
  return out;
}

template <class S>
struct KinematicsT {
  std::vector<FrameT<S>> local;
  std::vector<FrameT<S>> world;
  std::vector<Vec6T<S>> v;
  std::vector<Vec6T<S>> s;
};

template <class S>
KinematicsT<S> kinematics_t(const KinematicTreeModel& model, const VecXT<S>& x) {
  const std::size_t nl = model.link_count();
  const auto n = static_cast<Eigen::Index>(model.dof_count());
  KinematicsT<S> k;
  k.local.resize(nl);
  k.world.resize(nl);
  k.v.assign(nl, Vec6T<S>::Zero());
  k.s.assign(nl, Vec6T<S>::Zero());
  k.world[0] = {Mat3T<S>::Identity(), Vec3T<S>::Zero()};
  for (std::size_t i = 1; i < nl; ++i) {
    const Joint& j = model.joint_of(i);
    const auto dof = static_cast<Eigen::Index>(i - 1);
    const FrameT<S> origin = constant_frame<S>(j.origin);
    k.local[i] = {origin.R * axis_rotation<S>(j.axis, x(dof)), origin.p};
    const FrameT<S>& w = k.world[j.parent];
    k.world[i] = {w.R * k.local[i].R, w.p + w.R * k.local[i].p};
    k.s[i].template tail<3>() = j.axis.template cast<S>();
    k.v[i] = motion_to_child(k.local[i], k.v[j.parent]) + k.s[i] * x(n + dof);
  }
  return k;
}

template <class S>
VecXT<S> constraint_residual_t(const KinematicTreeModel& model, const Eigen::VectorXd& d, const VecXT<S>& x) {
  const DynLayout layout(model);
  const KinematicsT<S> k = kinematics_t(model, x);
  const auto n = static_cast<Eigen::Index>(model.dof_count());
  const Vec6T<S> a0 = (-gravity_spatial()).template cast<S>();
  VecXT<S> r(ConstraintRows::kPerLink * static_cast<Eigen::Index>(model.moving_link_count()));
  auto seg = [&](Eigen::Index offset) -> Vec6T<S> { return d.segment<6>(offset).template cast<S>(); };
  for (std::size_t i = 1; i <= model.moving_link_count(); ++i) {
    const std::size_t parent = model.parent(i);
    const auto dof = static_cast<Eigen::Index>(i - 1);
    const Vec6T<S> ai = seg(layout.a(i));
    const Vec6T<S> a_parent = parent == 0 ? a0 : seg(layout.a(parent));
    const Vec6T<S> si = k.s[i];
    r.template segment<6>(ConstraintRows::acceleration(i)) = -ai + si * S(d(layout.qdd(i))) +
                                                              motion_to_child(k.local[i], a_parent) +
                                                              cross_m<S>(k.v[i], Vec6T<S>(si * x(n + dof)));
    const Eigen::Matrix<S, 6, 6> inertia = model.link(i).inertia.matrix().template cast<S>();
    r.template segment<6>(ConstraintRows::body_force(i)) =
        inertia * ai - seg(layout.fB(i)) + cross_f<S>(k.v[i], Vec6T<S>(inertia * k.v[i]));
    Vec6T<S> rf = seg(layout.fB(i)) - seg(layout.f(i)) - force_to_child(k.world[i], seg(layout.fx(i)));
    for (std::size_t c : model.children(i)) rf += force_to_parent(k.local[c], seg(layout.f(c)));
    r.template segment<6>(ConstraintRows::joint_force(i)) = rf;
    r(ConstraintRows::torque(i)) = si.dot(seg(layout.f(i))) - S(d(layout.tau(i)));
  }
  return r;
}

template <class S>
VecXT<S> measurement_residual_t(const MeasurementAssembler& assembler, const Eigen::VectorXd& d, const VecXT<S>& x) {
  const KinematicTreeModel& model = assembler.model();
  const DynLayout layout(model);
  const KinematicsT<S> k = kinematics_t(model, x);
  VecXT<S> r(assembler.rows());
  auto seg = [&](Eigen::Index offset) -> Vec6T<S> { return d.segment<6>(offset).template cast<S>(); };
  for (std::size_t s = 0; s < assembler.specs().size(); ++s) {
    const SensorSpec& spec = assembler.specs()[s];
    const Eigen::Index r0 = assembler.offsets()[s];
    switch (spec.kind) {
      case ChannelKind::kImuLinearAcceleration: {
        const FrameT<S> pose = constant_frame<S>(spec.pose);
        const Vec6T<S> as = motion_to_child(pose, seg(layout.a(spec.link)));
        const Vec6T<S> vs = motion_to_child(pose, k.v[spec.link]);
        const Vec3T<S> w = vs.template tail<3>();
        r.template segment<3>(r0) = as.template head<3>() + w.cross(Vec3T<S>(vs.template head<3>()));
        break;
      }
      case ChannelKind::kDofAcceleration:
        r(r0) = S(d(layout.qdd(spec.link)));
        break;
      case ChannelKind::kFixedBaseWrench: {
        Vec6T<S> sum = (-(model.link(0).inertia.matrix() * gravity_spatial())).template cast<S>();
        for (std::size_t c : model.children(0)) sum += force_to_parent(k.world[c], seg(layout.f(c)));
        r.template segment<6>(r0) = force_to_child(constant_frame<S>(spec.pose), sum);
        break;
      }
      case ChannelKind::kExternalWrench:
        r.template segment<6>(r0) = seg(layout.fx(spec.link));
        break;
    }
  }
  return r;
}

using AD = Eigen::AutoDiffScalar<Eigen::VectorXd>;

VecXT<AD> seed_state(const Eigen::VectorXd& x) {
  VecXT<AD> xa(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) xa(k) = AD(x(k), x.size(), k);
  return xa;
}

Eigen::MatrixXd jacobian_of(const VecXT<AD>& r, Eigen::Index cols) {
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(r.size(), cols);
  for (Eigen::Index row = 0; row < r.size(); ++row) {
    if (r(row).derivatives().size() == cols) j.row(row) = r(row).derivatives().transpose();
  }
  return j;
}

void check_state(const KinematicTreeModel& model, const Eigen::VectorXd& d, const Eigen::VectorXd& x) {
  if (x.size() != 2 * static_cast<Eigen::Index>(model.dof_count())) {
    throw InputError("state vector must hold q and qd (" + std::to_string(2 * model.dof_count()) + " entries)");
  }
  if (d.size() != DynLayout(model).size()) throw InputError("d has the wrong dimension");
}

SparseMatrix hcat(const SparseMatrix& left, const Eigen::MatrixXd& right) {
  std::vector<Eigen::Triplet<double, int>> t;
  t.reserve(static_cast<std::size_t>(left.nonZeros() + right.size()));
  for (int k = 0; k < left.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(left, k); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
  for (Eigen::Index c = 0; c < right.cols(); ++c)
    for (Eigen::Index r = 0; r < right.rows(); ++r)
      if (right(r, c) != 0.0) t.emplace_back(static_cast<int>(r), static_cast<int>(left.cols() + c), right(r, c));
  SparseMatrix m(left.rows(), left.cols() + right.cols());
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

}  // namespace

Eigen::VectorXd stack_state(const Eigen::VectorXd& q, const Eigen::VectorXd& qd) {
  if (q.size() != qd.size()) throw InputError("stack_state: q and qd differ in length");
  Eigen::VectorXd x(2 * q.size());
  x << q, qd;
  return x;
}

Eigen::VectorXd constraint_residual(const ConstraintAssembler& constraints, const Eigen::VectorXd& d,
                                    const Eigen::VectorXd& x) {
  check_state(constraints.model(), d, x);
  const Eigen::Index n = x.size() / 2;
  const ConstraintSystem sys = constraints.assemble(x.head(n), x.tail(n));
  return sys.D * d + sys.b;
}

Eigen::VectorXd measurement_residual(const MeasurementAssembler& measurements, const Eigen::VectorXd& d,
                                     const Eigen::VectorXd& x) {
  check_state(measurements.model(), d, x);
  const Eigen::Index n = x.size() / 2;
  const MeasurementSystem sys = measurements.assemble(x.head(n), x.tail(n));
  return sys.Y * d + sys.b;
}

DynamicsCallbacks make_dynamics_callbacks(const ConstraintAssembler& constraints,
                                          const MeasurementAssembler& measurements) {
  DynamicsCallbacks cb;
  cb.constraint_jacobian = [&constraints](const Eigen::VectorXd& d, const Eigen::VectorXd& x) {
    check_state(constraints.model(), d, x);
    return jacobian_of(constraint_residual_t<AD>(constraints.model(), d, seed_state(x)), x.size());
  };
  cb.measurement_jacobian = [&measurements](const Eigen::VectorXd& d, const Eigen::VectorXd& x) {
    check_state(measurements.model(), d, x);
    return jacobian_of(measurement_residual_t<AD>(measurements, d, seed_state(x)), x.size());
  };
  return cb;
}

DynamicsCallbacks make_finite_difference_callbacks(const ConstraintAssembler& constraints,
                                                   const MeasurementAssembler& measurements, double step) {
  auto central = [step](auto&& residual, const Eigen::VectorXd& x) {
    Eigen::MatrixXd j;
    for (Eigen::Index k = 0; k < x.size(); ++k) {
      Eigen::VectorXd xp = x;
      Eigen::VectorXd xm = x;
      xp(k) += step;
      xm(k) -= step;
      const Eigen::VectorXd col = (residual(xp) - residual(xm)) / (2.0 * step);
      if (k == 0) j.resize(col.size(), x.size());
      j.col(k) = col;
    }
    return j;
  };
  DynamicsCallbacks cb;
  cb.constraint_jacobian = [&constraints, central](const Eigen::VectorXd& d, const Eigen::VectorXd& x) {
    return central([&](const Eigen::VectorXd& xs) { return constraint_residual(constraints, d, xs); }, x);
  };
  cb.measurement_jacobian = [&measurements, central](const Eigen::VectorXd& d, const Eigen::VectorXd& x) {
    return central([&](const Eigen::VectorXd& xs) { return measurement_residual(measurements, d, xs); }, x);
  };
  return cb;
}

GaussianBelief map_solve_augmented(const MapProblem& problem, const Eigen::VectorXd& mu_x,
                                   const Eigen::MatrixXd& sigma_x, const Eigen::VectorXd& d_bar,
                                   const Eigen::VectorXd& x_bar, const DynamicsCallbacks& callbacks,
                                   const MapOptions& options) {
  problem.validate();
  const Eigen::Index nd = problem.dimension();
  const Eigen::Index nx = x_bar.size();
  if (d_bar.size() != nd || mu_x.size() != nx || sigma_x.rows() != nx || sigma_x.cols() != nx) {
    throw InputError("map_solve_augmented: shape mismatch between d, x and their priors");
  }
  if (!callbacks.constraint_jacobian || !callbacks.measurement_jacobian) {
    throw InputError("map_solve_augmented: Jacobian callbacks are required");
  }
  const Eigen::MatrixXd jd = callbacks.constraint_jacobian(d_bar, x_bar);
  const Eigen::MatrixXd jy = callbacks.measurement_jacobian(d_bar, x_bar);
  if (jd.rows() != problem.D.rows() || jd.cols() != nx || jy.rows() != problem.Y.rows() || jy.cols() != nx) {
    throw InputError("map_solve_augmented: callback Jacobians have the wrong shape");
  }

  const SparseMatrix d_aug = hcat(problem.D, jd);
  const SparseMatrix y_aug = hcat(problem.Y, jy);
  const Eigen::VectorXd bd_aug = problem.b_D - jd * x_bar;
  const Eigen::VectorXd by_aug = problem.b_Y - jy * x_bar;

  Eigen::LLT<Eigen::MatrixXd> sx(sigma_x);
  if (sx.info() != Eigen::Success) throw InputError("map_solve_augmented: Sigma_x is not positive definite");
  const Eigen::MatrixXd sx_inv = sx.solve(Eigen::MatrixXd::Identity(nx, nx));
  std::vector<Eigen::Triplet<double, int>> t;
  for (Eigen::Index k = 0; k < nd; ++k) {
    t.emplace_back(static_cast<int>(k), static_cast<int>(k), 1.0 / problem.prior_variance(k));
  }
  for (Eigen::Index c = 0; c < nx; ++c)
    for (Eigen::Index r = 0; r < nx; ++r)
      if (sx_inv(r, c) != 0.0) t.emplace_back(static_cast<int>(nd + r), static_cast<int>(nd + c), sx_inv(r, c));
  SparseMatrix prior_precision(nd + nx, nd + nx);
  prior_precision.setFromTriplets(t.begin(), t.end());
  Eigen::VectorXd prior_mean(nd + nx);
  prior_mean << problem.prior_mean, mu_x;

  if (options.check_rank) {
    std::vector<Eigen::Triplet<double, int>> st;
    for (int k = 0; k < d_aug.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(d_aug, k); it; ++it) st.emplace_back(it.row(), it.col(), it.value());
    for (Eigen::Index k = 0; k < nx; ++k) st.emplace_back(static_cast<int>(d_aug.rows() + k), static_cast<int>(nd + k), 1.0);
    SparseMatrix lower(d_aug.rows() + nx, nd + nx);
    lower.setFromTriplets(st.begin(), st.end());
    check_rank_condition(y_aug, lower);
  }
  MapOptions inner = options;
  inner.check_rank = false;
  inner.equilibrate = true;
  return map_solve_with_prior(d_aug, bd_aug, problem.model_variance, y_aug, by_aug, problem.y,
                              problem.measurement_variance, prior_mean, prior_precision, inner)
      .posterior;
}

}  // namespace mapdyn
