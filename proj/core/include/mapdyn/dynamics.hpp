#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <optional>
#include <string>
#include <vector>

#include "mapdyn/detail/pattern_cache.hpp"
#include "mapdyn/model.hpp"
#include "mapdyn/spatial.hpp"

namespace mapdyn {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

// Index map of d = [d_1; ...; d_NB] with d_i = [a_i, fB_i, f_i, tau_i, fx_i,
// qdd_i]: 26 entries per moving link (1-DoF joints).
class DynLayout {
 public:
  static constexpr Eigen::Index kPerLink = 26;

  DynLayout() = default;
  explicit DynLayout(std::size_t moving_links) : links_(moving_links) {}
  explicit DynLayout(const KinematicTreeModel& model) : links_(model.moving_link_count()) {}

  std::size_t moving_links() const { return links_; }
  Eigen::Index size() const { return kPerLink * static_cast<Eigen::Index>(links_); }

  // Offsets for moving link i (1-based link index).
  Eigen::Index a(std::size_t i) const { return base(i); }
  Eigen::Index fB(std::size_t i) const { return base(i) + 6; }
  Eigen::Index f(std::size_t i) const { return base(i) + 12; }
  Eigen::Index tau(std::size_t i) const { return base(i) + 18; }
  Eigen::Index fx(std::size_t i) const { return base(i) + 19; }
  Eigen::Index qdd(std::size_t i) const { return base(i) + 25; }

  // Column names "<link>/<slot>[_<component>]", e.g. "RightHand/fx_fz".
  std::vector<std::string> channel_names(const KinematicTreeModel& model) const;

 private:
  Eigen::Index base(std::size_t i) const { return kPerLink * static_cast<Eigen::Index>(i - 1); }
  std::size_t links_ = 0;
};

class DynVector {
 public:
  DynVector() = default;
  explicit DynVector(const DynLayout& layout) : layout_(layout), values_(Eigen::VectorXd::Zero(layout.size())) {}
  DynVector(const DynLayout& layout, Eigen::VectorXd values);

  const DynLayout& layout() const { return layout_; }
  const Eigen::VectorXd& values() const { return values_; }
  Eigen::VectorXd& values() { return values_; }

  auto a(std::size_t i) { return values_.segment<6>(layout_.a(i)); }
  auto a(std::size_t i) const { return values_.segment<6>(layout_.a(i)); }
  auto fB(std::size_t i) { return values_.segment<6>(layout_.fB(i)); }
  auto fB(std::size_t i) const { return values_.segment<6>(layout_.fB(i)); }
  auto f(std::size_t i) { return values_.segment<6>(layout_.f(i)); }
  auto f(std::size_t i) const { return values_.segment<6>(layout_.f(i)); }
  double& tau(std::size_t i) { return values_(layout_.tau(i)); }
  double tau(std::size_t i) const { return values_(layout_.tau(i)); }
  auto fx(std::size_t i) { return values_.segment<6>(layout_.fx(i)); }
  auto fx(std::size_t i) const { return values_.segment<6>(layout_.fx(i)); }
  double& qdd(std::size_t i) { return values_(layout_.qdd(i)); }
  double qdd(std::size_t i) const { return values_(layout_.qdd(i)); }

  // Joint torques ordered by DoF.
  Eigen::VectorXd torques() const;

 private:
  DynLayout layout_;
  Eigen::VectorXd values_;
};

// Velocity-level quantities shared by constraint and measurement assembly.
struct TreeKinematics {
  Eigen::VectorXd q;
  Eigen::VectorXd qd;
  std::vector<HomTransform> world;  // ^0 H_i
  std::vector<Mat6> x_parent;       // ^i X_parent(i), motion
  std::vector<Mat6> x_base;         // ^i X_0, motion
  std::vector<Vec6> v;              // link velocity in link coordinates
  std::vector<Vec6> s;              // motion subspace [0; axis]
};

TreeKinematics compute_kinematics(const KinematicTreeModel& model, const Eigen::VectorXd& q,
                                  const Eigen::VectorXd& qd);

// Recursive Newton-Euler. fx stacks one wrench per moving link (6 N_B,
// base coordinates; empty means zero). Every slot of the result is filled.
DynVector rnea(const KinematicTreeModel& model, const Eigen::VectorXd& q, const Eigen::VectorXd& qd,
               const Eigen::VectorXd& qdd, const Eigen::VectorXd& fx = {},
               const Vec6& base_acceleration = -gravity_spatial());

// D d + b_D = 0 built at (q, qd): (18 N_B + n) x 26 N_B.
struct ConstraintSystem {
  SparseMatrix D;
  Eigen::VectorXd b;
  Eigen::VectorXd q;
  Eigen::VectorXd qd;
};

// Row offsets of constraint block rows for link i.
struct ConstraintRows {
  static constexpr Eigen::Index kPerLink = 19;
  static Eigen::Index acceleration(std::size_t i) { return kPerLink * static_cast<Eigen::Index>(i - 1); }
  static Eigen::Index body_force(std::size_t i) { return acceleration(i) + 6; }
  static Eigen::Index joint_force(std::size_t i) { return acceleration(i) + 12; }
  static Eigen::Index torque(std::size_t i) { return acceleration(i) + 18; }
};

// Caches the sparsity pattern of D for one model; assemble() only rewrites
// the numeric values. Safe to share across threads (assemble is const).
class ConstraintAssembler {
 public:
  explicit ConstraintAssembler(const KinematicTreeModel& model);

  const KinematicTreeModel& model() const { return *model_; }
  Eigen::Index rows() const { return rows_; }
  Eigen::Index cols() const { return cols_; }

  ConstraintSystem assemble(const Eigen::VectorXd& q, const Eigen::VectorXd& qd) const;
  void assemble(const TreeKinematics& kin, ConstraintSystem& out) const;

 private:
  const KinematicTreeModel* model_;
  Eigen::Index rows_;
  Eigen::Index cols_;
  detail::PatternCache pattern_;
};

ConstraintSystem assemble_constraints(const KinematicTreeModel& model, const Eigen::VectorXd& q,
                                      const Eigen::VectorXd& qd);

// Fixed-base Lagrangian form tau = M qdd + C qd + G - J^T fx.
struct LagrangianTerms {
  Eigen::MatrixXd mass_matrix;
  Eigen::VectorXd bias;      // C(q, qd) qd
  Eigen::VectorXd gravity;   // G(q)
  Eigen::MatrixXd jacobian_transpose;  // n x 6 N_B, fx in base coordinates
};

LagrangianTerms extract_lagrangian_terms(const KinematicTreeModel& model, const Eigen::VectorXd& q,
                                         const Eigen::VectorXd& qd);

// Classical inverse dynamics with one extra wrench measurement at the base
// (f_fp acting on the base, expressed in the force-plate frame whose pose in
// the base frame is fp_pose).
struct TopDownReport {
  DynVector dynamics;            // outward/inward recursion from the leaves
  Vec6 dynamic_base_wrench;      // sum_c ^0X_c^* f_c from the recursion
  Vec6 boundary_base_wrench;     // I_0 g + ^0X_FP^* f_FP
  Vec6 inconsistency;            // dynamic - boundary, base coordinates
  // Populated when the base has a single child link 1 (link-1 coordinates).
  std::optional<Vec6> first_link_dynamic;
  std::optional<Vec6> first_link_boundary;
};

struct BottomUpReport {
  std::vector<Vec6> joint_forces;  // f_i propagated from the base, index = link
  std::size_t top_link = 0;
  Vec6 top_propagated;            // f_top from the propagation
  Vec6 top_boundary;              // fB_top - ^topX_0^* fx_top
  Vec6 inconsistency;             // propagated - boundary, top-link coordinates
  Vec6 inconsistency_base;        // same, base coordinates
};

TopDownReport id_topdown(const KinematicTreeModel& model, const Eigen::VectorXd& q, const Eigen::VectorXd& qd,
                         const Eigen::VectorXd& qdd, const Eigen::VectorXd& fx, const Vec6& f_fp,
                         const HomTransform& fp_pose = HomTransform::identity());

// Requires a chain (no branching); throws ModelError otherwise.
BottomUpReport id_bottomup(const KinematicTreeModel& model, const Eigen::VectorXd& q, const Eigen::VectorXd& qd,
                           const Eigen::VectorXd& qdd, const Eigen::VectorXd& fx, const Vec6& f_fp,
                           const HomTransform& fp_pose = HomTransform::identity());

// Wrench the base exchanges with its children, predicted from d: the force
// plate reading model y = ^FP X_0^* (sum_c ^0X_c^* f_c - I_0 g).
Vec6 predicted_base_wrench(const KinematicTreeModel& model, const TreeKinematics& kin, const DynVector& d,
                           const HomTransform& fp_pose);

}  // namespace mapdyn
