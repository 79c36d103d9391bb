#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"
#include "json.hpp"
#include "mapdyn/errors.hpp"

namespace {

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("mapdyn");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  const char* level = std::getenv("MAPDYN_LOG");
  spdlog::set_level(level ? spdlog::level::from_str(level) : spdlog::level::warn);
}

}  // namespace

int main(int argc, char** argv) {
  using namespace mapdyn::cli;
  setup_logging();

  CLI::App app{"Probabilistic whole-body inverse dynamics"};
  app.require_subcommand(1);
  app.fallthrough();

  CommandLine cli;
  std::string config, model, out;
  std::uint64_t seed = 0;
  unsigned workers = 0;
  auto* config_opt = app.add_option("--config", config, "JSON run configuration");
  auto* model_opt = app.add_option("--model", model, "model file, or \"template\"");
  auto* out_opt = app.add_option("--out", out, "output directory");
  auto* seed_opt = app.add_option("--seed", seed, "random seed");
  auto* workers_opt = app.add_option("--workers", workers, "worker threads (0: available cores)");

  ModelGenOptions gen;
  std::string write_mapping, write_subject;
  auto* model_gen = app.add_subcommand("model-gen", "generate the human template model");
  auto* mapping_opt = model_gen->add_option("--write-mapping", write_mapping, "also write the mapping as JSON");
  auto* subject_opt = model_gen->add_option("--write-subject", write_subject, "also write the subject as JSON");
  auto* simulate = app.add_subcommand("simulate", "simulate a scenario with ground truth");
  auto* estimate = app.add_subcommand("estimate", "per-sample MAP estimation");
  auto* fusion = app.add_subcommand("fusion", "incremental sensor fusion analysis");
  auto* sensor_pose = app.add_subcommand("sensor-pose", "IMU pose calibration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (*config_opt) cli.config = config;
  if (*model_opt) cli.model = model;
  if (*out_opt) cli.out = out;
  if (*seed_opt) cli.seed = seed;
  if (*workers_opt) cli.workers = workers;
  if (*mapping_opt) gen.write_mapping = write_mapping;
  if (*subject_opt) gen.write_subject = write_subject;

  try {
    const RunConfig run = load_config(cli);
    if (*model_gen) return cmd_model_gen(run, gen);
    if (*simulate) return cmd_simulate(run);
    if (*estimate) return cmd_estimate(run);
    if (*fusion) return cmd_fusion(run);
    if (*sensor_pose) return cmd_sensor_pose(run);
  } catch (const mapdyn::RankDeficiencyError& e) {
    spdlog::error("{} (deficiency {})", e.what(), e.deficiency());
    return kExitNumerical;
  } catch (const mapdyn::NumericalError& e) {
    spdlog::error("{}", e.what());
    return kExitNumerical;
  } catch (const mapdyn::InputError& e) {
    spdlog::error("{}", e.what());
    return kExitInput;
  } catch (const nlohmann::json::exception& e) {
    spdlog::error("{}", e.what());
    return kExitInput;
  } catch (const std::filesystem::filesystem_error& e) {
    spdlog::error("{}", e.what());
    return kExitInput;
  }
  return kExitUsage;
}
