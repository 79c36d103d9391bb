#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mapdyn/spatial.hpp"

namespace mapdyn {

inline constexpr double kDummyMass = 1e-4;
inline constexpr double kDummyInertia = 3e-4;

struct VisualShape {
  Shape geometry;
  HomTransform origin;
};

struct Link {
  std::string name;
  SpatialInertia inertia;
  std::optional<VisualShape> visual;
  bool is_dummy = false;
};

struct JointLimits {
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
  bool contains(double q) const { return q >= lower && q <= upper; }
};

// 1-DoF revolute joint. Child pose in the parent frame is
// origin * Rot(axis, q).
struct Joint {
  std::string name;
  std::size_t parent = 0;
  std::size_t child = 0;
  Vec3 axis = Vec3::UnitZ();
  HomTransform origin;
  JointLimits limits;
};

enum class SensorType { kAccelerometer, kGyroscope };

struct SensorAttachment {
  std::string name;
  SensorType type = SensorType::kAccelerometer;
  std::size_t link = 0;
  HomTransform pose;  // sensor pose in the link frame
};

// Fixed-base kinematic tree. Link 0 is the base; link i >= 1 is moved by
// joint i - 1 and generalized coordinate q(i - 1). Parents always carry a
// lower index than their children.
class KinematicTreeModel {
 public:
  KinematicTreeModel() = default;

  const std::string& name() const { return name_; }
  std::size_t link_count() const { return links_.size(); }
  std::size_t moving_link_count() const { return links_.empty() ? 0 : links_.size() - 1; }
  std::size_t dof_count() const { return joints_.size(); }

  const std::vector<Link>& links() const { return links_; }
  const Link& link(std::size_t i) const { return links_.at(i); }
  const std::vector<Joint>& joints() const { return joints_; }
  // Joint whose child is link i (i >= 1).
  const Joint& joint_of(std::size_t link) const { return joints_.at(link - 1); }
  std::size_t parent(std::size_t link) const { return joints_.at(link - 1).parent; }
  const std::vector<std::size_t>& children(std::size_t link) const { return children_.at(link); }
  const std::vector<SensorAttachment>& sensors() const { return sensors_; }

  std::optional<std::size_t> find_link(std::string_view name) const;
  std::optional<std::size_t> find_joint(std::string_view name) const;
  // Throws ModelError when absent.
  std::size_t link_index(std::string_view name) const;
  std::size_t joint_index(std::string_view name) const;

  // Links on the path from the base to `link`, base excluded, root first.
  std::vector<std::size_t> ancestors_and_self(std::size_t link) const;
  bool is_ancestor(std::size_t ancestor, std::size_t link) const;
  // Nearest ancestor that is not a dummy link (the base counts as real).
  std::size_t real_parent(std::size_t link) const;

 private:
  friend class ModelBuilder;
  std::string name_;
  std::vector<Link> links_;
  std::vector<Joint> joints_;
  std::vector<std::vector<std::size_t>> children_;
  std::vector<SensorAttachment> sensors_;
};

// Structural equality with a tolerance on numeric fields.
bool models_equal(const KinematicTreeModel& a, const KinematicTreeModel& b, double tol = 1e-12);

// Collects links, joints and sensors by name in any order and produces a
// topologically numbered model.
class ModelBuilder {
 public:
  struct JointSpec {
    std::string name;
    std::string parent;
    std::string child;
    Vec3 axis = Vec3::UnitZ();
    HomTransform origin;
    JointLimits limits;
  };
  struct SensorSpec {
    std::string name;
    SensorType type = SensorType::kAccelerometer;
    std::string link;
    HomTransform pose;
  };

  explicit ModelBuilder(std::string name = "model") : name_(std::move(name)) {}

  ModelBuilder& add_link(Link link);
  ModelBuilder& add_joint(JointSpec joint);
  ModelBuilder& add_sensor(SensorSpec sensor);

  // Throws ModelError on duplicate names, dangling references, cycles,
  // multiple roots or zero axes; axes are normalized.
  KinematicTreeModel build() const;

 private:
  std::string name_;
  std::vector<Link> links_;
  std::vector<JointSpec> joints_;
  std::vector<SensorSpec> sensors_;
};

// Child pose in the parent frame for joint angle q.
HomTransform joint_transform(const Joint& joint, double q);

// ^0 H_i for every link (index 0 is the identity). Throws InputError on a
// size mismatch. Links whose coordinate lies outside the limits are appended
// to `limit_violations` when given.
std::vector<HomTransform> forward_kinematics(const KinematicTreeModel& model, const Eigen::VectorXd& q,
                                             std::vector<std::size_t>* limit_violations = nullptr);

// Relative pose ^i T_k between two links.
struct RelativePoseTarget {
  std::size_t frame_link = 0;  // i
  std::size_t target_link = 0;  // k
  HomTransform pose;
};

struct IkOptions {
  int max_iterations = 200;
  double cost_tolerance = 1e-26;
  double step_tolerance = 1e-14;
  double initial_damping = 1e-6;
};

struct IkResult {
  Eigen::VectorXd q;
  double residual = 0.0;  // sum of squared SE(3) log errors
  int iterations = 0;
  bool converged = false;
};

// Damped Gauss-Newton on sum ||log(T_target^-1 T(q))||^2 with projection onto
// the joint limits.
IkResult ik_frame_match(const KinematicTreeModel& model, const std::vector<RelativePoseTarget>& targets,
                        const Eigen::VectorXd& q_init, const IkOptions& options = {});

// Angular velocity of link k relative to link i, in frame i.
struct RelativeAngularVelocity {
  std::size_t frame_link = 0;
  std::size_t target_link = 0;
  Vec3 omega = Vec3::Zero();
};

struct JointVelocityResult {
  Eigen::VectorXd qdot;
  bool rank_deficient = false;
};

inline constexpr double kJointVelocityDamping = 1e-8;

// Relative angular Jacobian ^i J_k (q): 3 x n.
Eigen::MatrixXd relative_angular_jacobian(const KinematicTreeModel& model,
                                          const std::vector<HomTransform>& poses, std::size_t frame_link,
                                          std::size_t target_link);

JointVelocityResult joint_velocities_from_angular(const KinematicTreeModel& model, const Eigen::VectorXd& q,
                                                  const std::vector<RelativeAngularVelocity>& measurements,
                                                  double damping = kJointVelocityDamping);

// (real parent, link) for every non-dummy moving link: the pairs of links
// coupled by one anatomical joint.
std::vector<std::pair<std::size_t, std::size_t>> coupled_link_pairs(const KinematicTreeModel& model);

}  // namespace mapdyn
