#pragma once

#include <Eigen/Core>
#include <variant>

namespace mapdyn {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

inline constexpr double kGravity = 9.81;

// Spatial gravitational acceleration [0, 0, -9.81, 0, 0, 0] in a z-up frame.
Vec6 gravity_spatial();

// Matrix form of the cross product: skew(v) * u == v.cross(u).
Mat3 skew(const Vec3& v);

// Element of SO(3). Construction and composition keep the matrix within
// 1e-9 of orthonormal by polar re-projection.
class Rotation3 {
 public:
  Rotation3() : m_(Mat3::Identity()) {}
  // Throws InputError when m is far from a rotation (drift > 1e-3 or det < 0).
  explicit Rotation3(const Mat3& m);

  static Rotation3 identity() { return Rotation3(); }
  // Roll about x, pitch about y, yaw about z, applied about fixed axes in
  // that order: R = Rz(yaw) * Ry(pitch) * Rx(roll). Same as URDF rpy.
  static Rotation3 from_rpy(double roll, double pitch, double yaw);
  static Rotation3 from_rpy(const Vec3& rpy) { return from_rpy(rpy.x(), rpy.y(), rpy.z()); }
  // Rotation of `angle` rad about `axis` (normalized internally).
  static Rotation3 about_axis(const Vec3& axis, double angle);
  // Exponential map of a rotation vector.
  static Rotation3 exp(const Vec3& omega);

  // Roll, pitch, yaw with roll and yaw in (-pi, pi], pitch in [-pi/2, pi/2].
  Vec3 rpy() const;
  // Rotation vector with norm in [0, pi].
  Vec3 log() const;

  const Mat3& matrix() const { return m_; }
  Rotation3 inverse() const;
  Rotation3 operator*(const Rotation3& other) const;
  Vec3 operator*(const Vec3& v) const { return m_ * v; }

  // max |R^T R - I| entry.
  double orthonormality_error() const;

 private:
  struct Unchecked {};
  Rotation3(const Mat3& m, Unchecked) : m_(m) {}
  void reproject_if_drifted();

  Mat3 m_;
};

// Project a nearly orthonormal matrix onto SO(3) (polar decomposition).
Mat3 nearest_rotation(const Mat3& m);

// Rigid transform ^A H_B mapping points in B to A.
class HomTransform {
 public:
  HomTransform() : translation_(Vec3::Zero()) {}
  HomTransform(const Rotation3& rotation, const Vec3& translation)
      : rotation_(rotation), translation_(translation) {}

  static HomTransform identity() { return HomTransform(); }
  static HomTransform from_xyz_rpy(const Vec3& xyz, const Vec3& rpy) {
    return HomTransform(Rotation3::from_rpy(rpy), xyz);
  }

  const Rotation3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }

  HomTransform inverse() const;
  HomTransform operator*(const HomTransform& other) const;
  Vec3 apply(const Vec3& point) const { return rotation_ * point + translation_; }
  Eigen::Matrix4d matrix() const;

 private:
  Rotation3 rotation_;
  Vec3 translation_;
};

// SE(3) logarithm as a 6-vector [rho; phi] (linear part first).
Vec6 se3_log(const HomTransform& h);

class SpatialMotionVec {
 public:
  SpatialMotionVec() : v_(Vec6::Zero()) {}
  explicit SpatialMotionVec(const Vec6& v) : v_(v) {}
  SpatialMotionVec(const Vec3& linear, const Vec3& angular) { v_ << linear, angular; }

  Vec3 linear() const { return v_.head<3>(); }
  Vec3 angular() const { return v_.tail<3>(); }
  const Vec6& vector() const { return v_; }

  SpatialMotionVec operator+(const SpatialMotionVec& o) const { return SpatialMotionVec(Vec6(v_ + o.v_)); }
  SpatialMotionVec operator-(const SpatialMotionVec& o) const { return SpatialMotionVec(Vec6(v_ - o.v_)); }
  SpatialMotionVec operator*(double s) const { return SpatialMotionVec(Vec6(v_ * s)); }

 private:
  Vec6 v_;
};

class SpatialForceVec {
 public:
  SpatialForceVec() : f_(Vec6::Zero()) {}
  explicit SpatialForceVec(const Vec6& f) : f_(f) {}
  SpatialForceVec(const Vec3& force, const Vec3& moment) { f_ << force, moment; }

  Vec3 force() const { return f_.head<3>(); }
  Vec3 moment() const { return f_.tail<3>(); }
  const Vec6& vector() const { return f_; }

  SpatialForceVec operator+(const SpatialForceVec& o) const { return SpatialForceVec(Vec6(f_ + o.f_)); }
  SpatialForceVec operator-(const SpatialForceVec& o) const { return SpatialForceVec(Vec6(f_ - o.f_)); }
  SpatialForceVec operator*(double s) const { return SpatialForceVec(Vec6(f_ * s)); }

 private:
  Vec6 f_;
};

// v x  (motion cross product operator).
Mat6 cross_motion_matrix(const SpatialMotionVec& v);
// v x* (force cross product operator) == -cross_motion_matrix(v)^T.
Mat6 cross_force_matrix(const SpatialMotionVec& v);
SpatialMotionVec cross_motion(const SpatialMotionVec& v, const SpatialMotionVec& u);
SpatialForceVec cross_force(const SpatialMotionVec& v, const SpatialForceVec& f);

enum class AdjointKind { kMotion, kForce };

// For H = ^A H_B returns ^A X_B (motion) or ^A X_B^* (force), both mapping
// B coordinates to A coordinates.
Mat6 adjoint_from_hom(const HomTransform& h, AdjointKind kind);
inline Mat6 adjoint_motion(const HomTransform& h) { return adjoint_from_hom(h, AdjointKind::kMotion); }
inline Mat6 adjoint_force(const HomTransform& h) { return adjoint_from_hom(h, AdjointKind::kForce); }

// Mass, centre of mass in the link frame and rotational inertia about the
// centre of mass. The default value is the zero inertia of a link without an
// inertial description.
class SpatialInertia {
 public:
  SpatialInertia() : mass_(0.0), com_(Vec3::Zero()), inertia_com_(Mat3::Zero()) {}
  // Throws InputError unless mass > 0 and the rotational inertia is
  // symmetric positive semi-definite.
  SpatialInertia(double mass, const Vec3& com, const Mat3& inertia_com);

  double mass() const { return mass_; }
  const Vec3& com() const { return com_; }
  const Mat3& inertia_com() const { return inertia_com_; }
  // Rotational inertia about the link frame origin.
  Mat3 inertia_origin() const;

  Mat6 matrix() const;

 private:
  double mass_;
  Vec3 com_;
  Mat3 inertia_com_;
};

// Net spatial force I a + v x* (I v).
SpatialForceVec body_equation_of_motion(const SpatialInertia& inertia, const SpatialMotionVec& v,
                                        const SpatialMotionVec& a);

// Rectangular box; width, height, depth are the extents along y, z and x.
struct Parallelepiped {
  double width;
  double height;
  double depth;
};
// Solid cylinder whose axis is the y axis.
struct Cylinder {
  double radius;
  double length;
};
struct Sphere {
  double radius;
};
using Shape = std::variant<Parallelepiped, Cylinder, Sphere>;

// Principal moments of a uniform-density solid. Throws InputError on
// non-positive dimensions or mass.
Mat3 inertia_of_shape(const Shape& shape, double mass);

// Velocity and acceleration of a point fixed in a moving body. p_body is in
// body coordinates, rotation is ^I R_B, omega and omega_dot in inertial
// coordinates.
Vec3 point_velocity(const Vec3& origin_velocity, const Vec3& omega, const Mat3& rotation,
                    const Vec3& p_body);
Vec3 point_acceleration(const Vec3& origin_acceleration, const Vec3& omega, const Vec3& omega_dot,
                        const Mat3& rotation, const Vec3& p_body);

}  // namespace mapdyn
