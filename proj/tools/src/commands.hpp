#pragma once

#include <optional>
#include <string>
#include <vector>

#include "config.hpp"
#include "mapdyn/model.hpp"
#include "mapdyn/sensors.hpp"

namespace mapdyn::cli {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitInput = 2, kExitNumerical = 3 };

struct ModelGenOptions {
  std::optional<std::string> write_mapping;  // dump the mapping in use as JSON
  std::optional<std::string> write_subject;  // dump the subject in use as JSON
};

// The template (subject and mapping files, or the built-in reference) or a
// model file.
KinematicTreeModel load_run_model(const RunConfig& config);

// IMU specs of the block followed by the mandatory set, in assembly order.
std::vector<SensorSpec> build_specs(const KinematicTreeModel& model, const SensorBlock& block);

// Default sine per joint with the scenario overrides applied by joint name.
TrajectorySpec build_trajectory(const KinematicTreeModel& model, const ScenarioBlock& scenario);

// Each command writes its outputs and manifest.json into the output
// directory and returns an exit code; errors propagate as exceptions.
int cmd_model_gen(const RunConfig& config, const ModelGenOptions& options);
int cmd_simulate(const RunConfig& config);
int cmd_estimate(const RunConfig& config);
int cmd_fusion(const RunConfig& config);
int cmd_sensor_pose(const RunConfig& config);

}  // namespace mapdyn::cli
