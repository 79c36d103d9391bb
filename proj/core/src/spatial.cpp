#include "mapdyn/spatial.hpp"

#include <Eigen/Geometry>
#include <Eigen/SVD>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <string>

#include "mapdyn/errors.hpp"

namespace mapdyn {

namespace {

constexpr double kReprojectThreshold = 1e-9;
constexpr double kRejectThreshold = 1e-3;

double max_abs_entry(const Mat3& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

Vec6 gravity_spatial() {
  Vec6 g = Vec6::Zero();
  g(2) = -kGravity;
  return g;
}

Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return s;
}

Mat3 nearest_rotation(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) = -u.col(2);
  return u * v.transpose();
}

Rotation3::Rotation3(const Mat3& m) : m_(m) {
  if (!m.allFinite()) throw InputError("rotation matrix has non-finite entries");
  const double err = orthonormality_error();
  if (err > kRejectThreshold || m.determinant() <= 0.0) {
    throw InputError("matrix is not a rotation (orthonormality error " + std::to_string(err) + ")");
  }
  reproject_if_drifted();
}

void Rotation3::reproject_if_drifted() {
  if (orthonormality_error() > kReprojectThreshold) m_ = nearest_rotation(m_);
}

double Rotation3::orthonormality_error() const {
  return max_abs_entry(m_.transpose() * m_ - Mat3::Identity());
}

Rotation3 Rotation3::from_rpy(double roll, double pitch, double yaw) {
  const Mat3 rx = Eigen::AngleAxisd(roll, Vec3::UnitX()).toRotationMatrix();
  const Mat3 ry = Eigen::AngleAxisd(pitch, Vec3::UnitY()).toRotationMatrix();
  const Mat3 rz = Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix();
  Rotation3 r(rz * ry * rx, Unchecked{});
  r.reproject_if_drifted();
  return r;
}

Rotation3 Rotation3::about_axis(const Vec3& axis, double angle) {
  const double n = axis.norm();
  if (!(n > 0.0)) throw InputError("rotation axis has zero norm");
  Rotation3 r(Eigen::AngleAxisd(angle, axis / n).toRotationMatrix(), Unchecked{});
  r.reproject_if_drifted();
  return r;
}

Rotation3 Rotation3::exp(const Vec3& omega) {
  const double theta = omega.norm();
  if (theta == 0.0) return Rotation3();
  return about_axis(omega / theta, theta);
}

Vec3 Rotation3::rpy() const {
  const Mat3& r = m_;
  const double cp = std::hypot(r(0, 0), r(1, 0));
  const double pitch = std::atan2(-r(2, 0), cp);
  double roll = 0.0;
  double yaw = 0.0;
  if (cp > 1e-12) {
    roll = std::atan2(r(2, 1), r(2, 2));
    yaw = std::atan2(r(1, 0), r(0, 0));
  } else {
    // Gimbal lock: only roll - yaw (or roll + yaw) is observable.
    yaw = std::atan2(-r(0, 1), r(1, 1));
  }
  return {roll, pitch, yaw};
}

Vec3 Rotation3::log() const {
  const Eigen::AngleAxisd aa(m_);
  return aa.angle() * aa.axis();
}

Rotation3 Rotation3::inverse() const { return Rotation3(m_.transpose(), Unchecked{}); }

Rotation3 Rotation3::operator*(const Rotation3& other) const {
  Rotation3 r(m_ * other.m_, Unchecked{});
  r.reproject_if_drifted();
  return r;
}

HomTransform HomTransform::inverse() const {
  const Rotation3 rt = rotation_.inverse();
  return HomTransform(rt, -(rt * translation_));
}

HomTransform HomTransform::operator*(const HomTransform& other) const {
  return HomTransform(rotation_ * other.rotation_, rotation_ * other.translation_ + translation_);
}

Eigen::Matrix4d HomTransform::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation_.matrix();
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

Vec6 se3_log(const HomTransform& h) {
  const Vec3 phi = h.rotation().log();
  const double theta = phi.norm();
  const Mat3 phi_hat = skew(phi);
  double c;
  if (theta < 1e-6) {
    c = 1.0 / 12.0 + theta * theta / 720.0;
  } else {
    c = (1.0 - theta * std::sin(theta) / (2.0 * (1.0 - std::cos(theta)))) / (theta * theta);
  }
  const Mat3 v_inv = Mat3::Identity() - 0.5 * phi_hat + c * phi_hat * phi_hat;
  Vec6 out;
  out << v_inv * h.translation(), phi;
  return out;
}

Mat6 cross_motion_matrix(const SpatialMotionVec& v) {
  Mat6 m = Mat6::Zero();
  const Mat3 w = skew(v.angular());
  m.topLeftCorner<3, 3>() = w;
  m.topRightCorner<3, 3>() = skew(v.linear());
  m.bottomRightCorner<3, 3>() = w;
  return m;
}

Mat6 cross_force_matrix(const SpatialMotionVec& v) {
  Mat6 m = Mat6::Zero();
  const Mat3 w = skew(v.angular());
  m.topLeftCorner<3, 3>() = w;
  m.bottomLeftCorner<3, 3>() = skew(v.linear());
  m.bottomRightCorner<3, 3>() = w;
  return m;
}

SpatialMotionVec cross_motion(const SpatialMotionVec& v, const SpatialMotionVec& u) {
  const Vec3 w = v.angular();
  return SpatialMotionVec(w.cross(u.linear()) + v.linear().cross(u.angular()), w.cross(u.angular()));
}

SpatialForceVec cross_force(const SpatialMotionVec& v, const SpatialForceVec& f) {
  const Vec3 w = v.angular();
  return SpatialForceVec(w.cross(f.force()), v.linear().cross(f.force()) + w.cross(f.moment()));
}

Mat6 adjoint_from_hom(const HomTransform& h, AdjointKind kind) {
  const Mat3& r = h.rotation().matrix();
  const Mat3 pr = skew(h.translation()) * r;
  Mat6 x = Mat6::Zero();
  x.topLeftCorner<3, 3>() = r;
  x.bottomRightCorner<3, 3>() = r;
  if (kind == AdjointKind::kMotion) {
    x.topRightCorner<3, 3>() = pr;
  } else {
    x.bottomLeftCorner<3, 3>() = pr;
  }
  return x;
}

SpatialInertia::SpatialInertia(double mass, const Vec3& com, const Mat3& inertia_com)
    : mass_(mass), com_(com), inertia_com_(inertia_com) {
  if (!(mass > 0.0) || !std::isfinite(mass)) {
    throw InputError("spatial inertia requires positive mass, got " + std::to_string(mass));
  }
  if (!com.allFinite() || !inertia_com.allFinite()) throw InputError("spatial inertia has non-finite entries");
  const double scale = std::max(1.0, inertia_com.cwiseAbs().maxCoeff());
  if ((inertia_com - inertia_com.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw InputError("rotational inertia is not symmetric");
  }
  inertia_com_ = 0.5 * (inertia_com + inertia_com.transpose());
  const Eigen::SelfAdjointEigenSolver<Mat3> eig(inertia_com_, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-12 * scale) {
    throw InputError("rotational inertia is not positive semi-definite");
  }
}

Mat3 SpatialInertia::inertia_origin() const {
  const Mat3 c = skew(com_);
  return inertia_com_ - mass_ * c * c;
}

Mat6 SpatialInertia::matrix() const {
  const Mat3 c = skew(com_);
  Mat6 m;
  m.topLeftCorner<3, 3>() = mass_ * Mat3::Identity();
  m.topRightCorner<3, 3>() = -mass_ * c;
  m.bottomLeftCorner<3, 3>() = mass_ * c;
  m.bottomRightCorner<3, 3>() = inertia_com_ - mass_ * c * c;
  return m;
}

SpatialForceVec body_equation_of_motion(const SpatialInertia& inertia, const SpatialMotionVec& v,
                                        const SpatialMotionVec& a) {
  const Mat6 i = inertia.matrix();
  const SpatialForceVec h(Vec6(i * v.vector()));
  return SpatialForceVec(Vec6(i * a.vector())) + cross_force(v, h);
}

namespace {

void require_positive(double value, const char* what) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw InputError(std::string("shape ") + what + " must be positive, got " + std::to_string(value));
  }
}

struct ShapeInertia {
  double mass;
  Mat3 operator()(const Parallelepiped& b) const {
    require_positive(b.width, "width");
    require_positive(b.height, "height");
    require_positive(b.depth, "depth");
    const double a2 = b.width * b.width;
    const double b2 = b.height * b.height;
    const double g2 = b.depth * b.depth;
    return Vec3(mass / 12.0 * (a2 + b2), mass / 12.0 * (b2 + g2), mass / 12.0 * (g2 + a2)).asDiagonal();
  }
  Mat3 operator()(const Cylinder& c) const {
    require_positive(c.radius, "radius");
    require_positive(c.length, "length");
    const double r2 = c.radius * c.radius;
    const double side = mass / 12.0 * (3.0 * r2 + c.length * c.length);
    return Vec3(side, 0.5 * mass * r2, side).asDiagonal();
  }
  Mat3 operator()(const Sphere& s) const {
    require_positive(s.radius, "radius");
    return Mat3::Identity() * (0.4 * mass * s.radius * s.radius);
  }
};

}  // namespace

Mat3 inertia_of_shape(const Shape& shape, double mass) {
  require_positive(mass, "mass");
  return std::visit(ShapeInertia{mass}, shape);
}

Vec3 point_velocity(const Vec3& origin_velocity, const Vec3& omega, const Mat3& rotation,
                    const Vec3& p_body) {
  return origin_velocity + omega.cross(rotation * p_body);
}

Vec3 point_acceleration(const Vec3& origin_acceleration, const Vec3& omega, const Vec3& omega_dot,
                        const Mat3& rotation, const Vec3& p_body) {
  const Vec3 r = rotation * p_body;
  return origin_acceleration + omega_dot.cross(r) + omega.cross(omega.cross(r));
}

}  // namespace mapdyn
