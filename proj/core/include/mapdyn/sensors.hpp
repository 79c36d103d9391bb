#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "mapdyn/dynamics.hpp"
#include "mapdyn/model.hpp"

namespace mapdyn {

enum class ChannelKind { kImuLinearAcceleration, kDofAcceleration, kFixedBaseWrench, kExternalWrench };

const char* channel_kind_name(ChannelKind kind);

// One measurement source. `link` is the IMU link, the link moved by the
// measured DoF, or the link receiving the external wrench; it is unused for
// the fixed-base wrench. `pose` is the IMU pose in its link frame, or the
// force-plate frame pose in the base frame.
struct SensorSpec {
  ChannelKind kind = ChannelKind::kDofAcceleration;
  std::string name;
  std::size_t link = 0;
  HomTransform pose;
  Eigen::VectorXd variance;  // one entry per output channel

  Eigen::Index dimension() const;
};

struct VarianceDefaults {
  double imu = 1e-3;
  double dof_acceleration = 1e-3;
  double fixed_base_wrench = 1e-3;
  double foot_wrench = 1e-3;
  double other_wrench = 1e-6;
};

// Ordered as assembled: IMUs, DoF accelerations, fixed-base wrench,
// external wrenches; ties keep insertion order.
std::vector<SensorSpec> order_specs(std::vector<SensorSpec> specs);

struct MandatorySetOptions {
  VarianceDefaults variances;
  std::vector<std::string> foot_links = {"RightFoot", "LeftFoot"};
  HomTransform force_plate_pose;
};

// q-double-dot for every DoF, the fixed-base wrench and fx for every moving
// link.
std::vector<SensorSpec> mandatory_specs(const KinematicTreeModel& model, const MandatorySetOptions& options = {});

// IMU specs from the model's accelerometers on moving links. An empty name
// list selects all of them; a named accelerometer on the base is an error.
std::vector<SensorSpec> imu_specs(const KinematicTreeModel& model, const std::vector<std::string>& accelerometers = {},
                                  double variance = VarianceDefaults{}.imu);

// Y d + b_Y = y at one state.
struct MeasurementSystem {
  SparseMatrix Y;
  Eigen::VectorXd b;
  Eigen::VectorXd variance;
  std::vector<Eigen::Index> offsets;  // first row of each spec
};

// Per-sample readings with the specs they come from.
struct MeasurementSet {
  std::vector<SensorSpec> specs;
  Eigen::VectorXd y;
  Eigen::VectorXd variance;
};

// Caches the sparsity pattern of Y for a fixed spec list. Validation happens
// at construction: unknown targets, IMU on the base, missing or duplicated
// mandatory channels and non-positive variances raise.
class MeasurementAssembler {
 public:
  MeasurementAssembler(const KinematicTreeModel& model, std::vector<SensorSpec> specs);

  const KinematicTreeModel& model() const { return *model_; }
  const std::vector<SensorSpec>& specs() const { return specs_; }
  Eigen::Index rows() const { return rows_; }
  const Eigen::VectorXd& variance() const { return variance_; }
  const std::vector<Eigen::Index>& offsets() const { return offsets_; }

  MeasurementSystem assemble(const Eigen::VectorXd& q, const Eigen::VectorXd& qd) const;
  void assemble(const TreeKinematics& kin, MeasurementSystem& out) const;

  // Row names "<spec>/<component>".
  std::vector<std::string> channel_names() const;

 private:
  const KinematicTreeModel* model_;
  std::vector<SensorSpec> specs_;
  Eigen::Index rows_ = 0;
  Eigen::VectorXd variance_;
  std::vector<Eigen::Index> offsets_;
  detail::PatternCache pattern_;
};

MeasurementSystem assemble_measurements(const KinematicTreeModel& model, const std::vector<SensorSpec>& specs,
                                        const Eigen::VectorXd& q, const Eigen::VectorXd& qd);

// y = Y d + b_Y + e with e ~ N(0, diag(variance)) from a seeded generator;
// noise is skipped when `add_noise` is false.
Eigen::VectorXd simulate_readings(const MeasurementAssembler& assembler, const Eigen::VectorXd& q,
                                  const Eigen::VectorXd& qd, const DynVector& d, std::uint64_t seed,
                                  bool add_noise = true, double noise_scale = 1.0);
Eigen::VectorXd simulate_readings(const KinematicTreeModel& model, const std::vector<SensorSpec>& specs,
                                  const Eigen::VectorXd& q, const Eigen::VectorXd& qd, const DynVector& d,
                                  std::uint64_t seed, bool add_noise = true);

// One calibration sample. Angular rates and link acceleration are in the
// inertial frame; the proper acceleration is in the sensor frame and assumed
// bias-free.
struct ImuCalibrationSample {
  HomTransform link_pose;       // ^I H_B
  Vec3 link_acceleration;       // ^I p-double-dot of the link origin
  Vec3 omega;
  Vec3 omega_dot;
  Rotation3 sensor_orientation;  // ^I R_S
  Vec3 proper_acceleration;      // ^S a
};

struct SensorPoseEstimate {
  Vec3 position;  // in the link frame
  Vec3 rpy;
  double max_orientation_spread = 0.0;  // rad, largest sample deviation from the mean
};

inline constexpr double kOrientationClusterLimit = 5.0 * 3.14159265358979323846 / 180.0;

// Least-squares lever arm and mean relative orientation. Throws
// ExcitationError when the stacked regressor is rank deficient and
// NumericalError when the orientation samples are spread beyond 5 degrees.
SensorPoseEstimate estimate_sensor_pose(const std::vector<ImuCalibrationSample>& samples);

struct SavitzkyGolayResult {
  Eigen::MatrixXd value;
  Eigen::MatrixXd first;
  Eigen::MatrixXd second;
};

// Rows are samples, columns are channels. Polynomial least-squares fits over
// `window` samples, centred where possible and one-sided at the ends.
SavitzkyGolayResult savitzky_golay_derivatives(const Eigen::MatrixXd& samples, double dt, int window = 57,
                                               int order = 3);

}  // namespace mapdyn
