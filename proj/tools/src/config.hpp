#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mapdyn/estimator.hpp"
#include "mapdyn/human_template.hpp"
#include "mapdyn/sensors.hpp"
#include "mapdyn/simharness.hpp"

namespace mapdyn::cli {

using nlohmann::json;

// Values given on the command line; they override the config file.
struct CommandLine {
  std::optional<std::string> config;
  std::optional<std::string> model;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
};

struct SensorBlock {
  bool mandatory = true;
  // Empty: all accelerometers on moving links; "none" in the file clears it.
  std::optional<std::vector<std::string>> imus;
  bool all_imus = true;
  std::vector<std::string> foot_links = {"RightFoot", "LeftFoot"};
  VarianceDefaults variances;
  HomTransform force_plate;
};

struct JointWaveformBlock {
  std::string type = "sine";  // sine | constant | spline
  double amplitude = 0.0;
  double frequency = 0.0;
  double phase = 0.0;
  double offset = 0.0;
  double value = 0.0;
  std::vector<double> times;
  std::vector<double> values;
};

struct ScenarioBlock {
  double duration = 1.0;
  double rate = 100.0;
  // Default sine per joint unless overridden by name.
  double amplitude = 0.2;
  double frequency = 0.5;
  std::map<std::string, JointWaveformBlock> joints;
  std::vector<ExternalForceScript> forces;
  bool noise = true;
  double noise_scale = 1.0;
};

struct InputBlock {
  std::string observations;  // CSV, header = channel names
  std::string states;        // CSV with "<joint>/q" and "<joint>/qd" columns
  std::string link_poses;    // CSV of link poses; IK + Savitzky-Golay when no states
  std::string ground_truth;  // optional, for RMSE reporting
};

struct AugmentedBlock {
  bool enabled = false;
  double state_variance = 1e-6;
  int iterations = 5;
  double tolerance = 1e-8;
};

struct FusionCase {
  std::string name;
  SensorBlock sensors;
};

struct FusionBlock {
  std::vector<FusionCase> cases;
  double time = 0.0;  // scenario time of the analysed state
};

struct CalibrationBlock {
  std::string input;  // stream CSV; synthetic stream when empty
  std::size_t samples = 400;
  double rate = 100.0;
  double noise_std = 0.0;
  std::vector<std::string> static_links;
  bool patch_model = false;
};

struct RunConfig {
  json resolved;  // every setting after defaults and overrides
  std::filesystem::path base_dir;
  std::string model = "template";  // model file, or the built-in template
  std::string subject;             // subject JSON for the template
  std::string mapping;             // mapping JSON for the template
  std::filesystem::path out_dir = "mapdyn_out";
  std::uint64_t seed = 0;
  unsigned workers = 0;  // 0: available cores
  SensorBlock sensors;
  CovarianceDefaults covariance;
  double prior_mean = 0.0;  // mu_d, same value for every entry
  bool equilibrate = false;  // diagonal scaling before each factorization
  ScenarioBlock scenario;
  InputBlock inputs;
  int sg_window = 57;
  int sg_order = 3;
  std::string marginals = "all";  // all | torques | none
  AugmentedBlock augmented;
  FusionBlock fusion;
  CalibrationBlock calibration;

  unsigned worker_count() const;
  std::string path(const std::string& relative) const;  // resolved against base_dir
};

// Reads --config (if any), fills defaults, applies flag overrides and
// validates. Throws InputError.
RunConfig load_config(const CommandLine& cli);
RunConfig parse_config(const json& document, const std::filesystem::path& base_dir, const CommandLine& cli = {});

// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& text);
std::string hex64(std::uint64_t value);

}  // namespace mapdyn::cli
