#include "commands.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include "io.hpp"
#include "mapdyn/augmented.hpp"
#include "mapdyn/errors.hpp"
#include "mapdyn/estimator.hpp"
#include "mapdyn/human_template.hpp"
#include "mapdyn/simharness.hpp"
#include "mapdyn/urdf.hpp"

#ifndef MAPDYN_VERSION
#define MAPDYN_VERSION "0.0.0"
#endif

namespace mapdyn::cli {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string out_file(const RunConfig& config, const std::string& name) { return (config.out_dir / name).string(); }

void prepare_out_dir(const RunConfig& config) { fs::create_directories(config.out_dir); }

void write_manifest(const RunConfig& config, const std::string& command, const std::vector<std::string>& outputs,
                    json extra = json::object()) {
  json m;
  m["command"] = command;
  m["version"] = MAPDYN_VERSION;
  m["seed"] = config.seed;
  m["config_hash"] = hex64(fnv1a(config.resolved.dump()));
  m["config"] = config.resolved;
  m["outputs"] = outputs;
  for (auto& [key, value] : extra.items()) m[key] = value;
  write_json(out_file(config, "manifest.json"), m);
}

// Runs body(k) for k in [0, count) on `workers` threads; the first exception
// is rethrown after all threads finish.
template <typename Body>
void parallel_samples(std::size_t count, unsigned workers, Body body) {
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  std::exception_ptr error;
  std::mutex error_mutex;
  const auto run = [&](unsigned w) {
    try {
      for (std::size_t k = w; k < count; k += workers) body(k);
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!error) error = std::current_exception();
    }
  };
  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run, w);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
}

std::vector<std::string> joint_names(const KinematicTreeModel& model, const std::string& suffix) {
  std::vector<std::string> names;
  for (const Joint& j : model.joints()) names.push_back(j.name + suffix);
  return names;
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

Eigen::VectorXd concat(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  Eigen::VectorXd v(a.size() + b.size());
  v << a, b;
  return v;
}

std::vector<std::size_t> real_links(const KinematicTreeModel& model) {
  std::vector<std::size_t> links;
  for (std::size_t i = 0; i < model.link_count(); ++i) {
    if (!model.link(i).is_dummy) links.push_back(i);
  }
  return links;
}

std::vector<std::string> pose_columns(const std::string& prefix) {
  return {prefix + "x", prefix + "y", prefix + "z", prefix + "roll", prefix + "pitch", prefix + "yaw"};
}

Vec6 pose_row(const HomTransform& h) {
  Vec6 v;
  v << h.translation(), h.rotation().rpy();
  return v;
}

HomTransform pose_from(const Eigen::VectorXd& v, Eigen::Index offset) {
  return HomTransform::from_xyz_rpy(v.segment<3>(offset), v.segment<3>(offset + 3));
}

std::vector<Eigen::Index> torque_indices(const KinematicTreeModel& model) {
  const DynLayout layout(model);
  std::vector<Eigen::Index> idx;
  for (std::size_t i = 1; i < model.link_count(); ++i) idx.push_back(layout.tau(i));
  return idx;
}

// First `rows` rows of a measurement system.
MeasurementSystem leading_rows(const MeasurementSystem& system, Eigen::Index rows) {
  if (rows == system.Y.rows()) return system;
  MeasurementSystem out;
  out.Y = system.Y.topRows(rows);
  out.Y.makeCompressed();
  out.b = system.b.head(rows);
  out.variance = system.variance.head(rows);
  return out;
}

Eigen::Index imu_rows(const MeasurementAssembler& assembler) {
  Eigen::Index rows = 0;
  for (const SensorSpec& s : assembler.specs()) {
    if (s.kind == ChannelKind::kImuLinearAcceleration) rows += s.dimension();
  }
  return rows;
}

MapProblem build_problem(const RunConfig& config, const ConstraintSystem& cs, const MeasurementSystem& ms,
                         const Eigen::VectorXd& y) {
  MapProblem p = make_map_problem(cs, ms, y, config.covariance);
  p.prior_mean.setConstant(config.prior_mean);
  return p;
}

SyntheticScenario build_scenario(const RunConfig& config, const KinematicTreeModel& model,
                                 std::vector<SensorSpec> specs) {
  SyntheticScenario s;
  s.model = &model;
  s.trajectory = build_trajectory(model, config.scenario);
  s.forces = config.scenario.forces;
  s.specs = std::move(specs);
  s.seed = config.seed;
  s.add_noise = config.scenario.noise;
  s.noise_scale = config.scenario.noise_scale;
  s.validate();
  return s;
}

std::string status_of(const std::exception_ptr& e) {
  try {
    std::rethrow_exception(e);
  } catch (const ExcitationError&) {
    return "excitation_error";
  } catch (const NumericalError&) {
    return "numerical_error";
  } catch (const InputError&) {
    return "input_error";
  } catch (...) {
    return "error";
  }
}

std::vector<std::string> stream_columns() {
  std::vector<std::string> c = {"t"};
  for (const char* group : {"link_", "acc_", "omega_", "omega_dot_", "sensor_", "proper_"}) {
    const std::string g(group);
    if (g == "link_") {
      for (const auto& n : pose_columns("link_")) c.push_back(n);
    } else if (g == "sensor_") {
      for (const char* a : {"roll", "pitch", "yaw"}) c.push_back(g + a);
    } else {
      for (const char* a : {"x", "y", "z"}) c.push_back(g + a);
    }
  }
  return c;
}

void write_stream(const std::string& path, const std::vector<ImuCalibrationSample>& stream, double rate) {
  CsvWriter w(path, stream_columns());
  for (std::size_t k = 0; k < stream.size(); ++k) {
    const ImuCalibrationSample& s = stream[k];
    Eigen::VectorXd row(21);
    row << pose_row(s.link_pose), s.link_acceleration, s.omega, s.omega_dot, s.sensor_orientation.rpy(),
        s.proper_acceleration;
    w.row(static_cast<double>(k) / rate, row);
  }
}

std::vector<ImuCalibrationSample> read_stream(const std::string& path) {
  const CsvTable t = read_csv(path);
  std::vector<std::size_t> cols;
  for (const auto& name : stream_columns()) cols.push_back(t.column(name));
  std::vector<ImuCalibrationSample> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const Eigen::VectorXd v = t.row_segment(r, cols);
    ImuCalibrationSample s;
    s.link_pose = pose_from(v, 1);
    s.link_acceleration = v.segment<3>(7);
    s.omega = v.segment<3>(10);
    s.omega_dot = v.segment<3>(13);
    s.sensor_orientation = Rotation3::from_rpy(Vec3(v.segment<3>(16)));
    s.proper_acceleration = v.segment<3>(19);
    out.push_back(s);
  }
  return out;
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

// Rotation angle of R_a^T R_b.
double rotation_distance(const Rotation3& a, const Rotation3& b) {
  const Mat3 r = a.matrix().transpose() * b.matrix();
  return std::acos(std::clamp((r.trace() - 1.0) / 2.0, -1.0, 1.0));
}

KinematicTreeModel rebuild_with_sensor_poses(const KinematicTreeModel& model,
                                             const std::map<std::size_t, HomTransform>& poses) {
  ModelBuilder builder(model.name());
  for (const Link& l : model.links()) builder.add_link(l);
  for (const Joint& j : model.joints()) {
    builder.add_joint({j.name, model.link(j.parent).name, model.link(j.child).name, j.axis, j.origin, j.limits});
  }
  for (const SensorAttachment& s : model.sensors()) {
    const auto it = poses.find(s.link);
    builder.add_sensor({s.name, s.type, model.link(s.link).name, it == poses.end() ? s.pose : it->second});
  }
  return builder.build();
}

}  // namespace

KinematicTreeModel load_run_model(const RunConfig& config) {
  if (config.model != "template") return load_model(config.model);
  const SubjectSpec subject = config.subject.empty() ? reference_subject() : subject_from_json(read_json(config.subject));
  if (config.mapping.empty()) return build_human_template(subject);
  return build_human_template(subject, mapping_from_json(read_json(config.mapping)));
}

std::vector<SensorSpec> build_specs(const KinematicTreeModel& model, const SensorBlock& block) {
  std::vector<SensorSpec> specs;
  if (block.imus) {
    if (!block.imus->empty()) specs = imu_specs(model, *block.imus, block.variances.imu);
  } else if (block.all_imus) {
    specs = imu_specs(model, {}, block.variances.imu);
  }
  MandatorySetOptions options;
  options.variances = block.variances;
  options.foot_links = block.foot_links;
  options.force_plate_pose = block.force_plate;
  for (SensorSpec& s : mandatory_specs(model, options)) specs.push_back(std::move(s));
  return order_specs(std::move(specs));
}

TrajectorySpec build_trajectory(const KinematicTreeModel& model, const ScenarioBlock& scenario) {
  TrajectorySpec spec;
  spec.duration = scenario.duration;
  spec.rate = scenario.rate;
  for (std::size_t k = 0; k < model.dof_count(); ++k) {
    const JointLimits& lim = model.joints()[k].limits;
    const double span = lim.upper - lim.lower;
    const double a = std::isfinite(span) ? std::min(scenario.amplitude, 0.4 * span) : scenario.amplitude;
    const double f = scenario.frequency * (1.0 + 0.25 * static_cast<double>(k % 4));
    const double offset = std::clamp(0.0, lim.lower + a, lim.upper - a);
    spec.joints.push_back(Waveform::sine(a, f, 0.5 * static_cast<double>(k), offset));
  }
  for (const auto& [name, w] : scenario.joints) {
    const auto idx = model.find_joint(name);
    if (!idx) throw InputError("config.scenario.joints: unknown joint '" + name + "'");
    if (w.type == "sine") {
      spec.joints[*idx] = Waveform::sine(w.amplitude, w.frequency, w.phase, w.offset);
    } else if (w.type == "constant") {
      spec.joints[*idx] = Waveform::constant(w.value);
    } else {
      spec.joints[*idx] = Waveform::spline(w.times, w.values);
    }
  }
  return spec;
}

int cmd_model_gen(const RunConfig& config, const ModelGenOptions& options) {
  if (config.model != "template") throw InputError("model-gen builds the template; set model to \"template\"");
  const SubjectSpec subject = config.subject.empty() ? reference_subject() : subject_from_json(read_json(config.subject));
  const TemplateMapping mapping =
      config.mapping.empty() ? default_template_mapping() : mapping_from_json(read_json(config.mapping));
  const std::string xml = generate_human_template(subject, mapping);
  const KinematicTreeModel model = parse_model(xml);

  prepare_out_dir(config);
  std::vector<std::string> outputs = {"human_template.urdf"};
  write_text(out_file(config, "human_template.urdf"), xml);
  if (options.write_mapping) write_json(*options.write_mapping, mapping_to_json(mapping));
  if (options.write_subject) write_json(*options.write_subject, subject_to_json(subject));

  std::size_t dummies = 0;
  for (const Link& l : model.links()) dummies += l.is_dummy ? 1 : 0;
  const std::string summary = std::to_string(model.link_count()) + " links (" + std::to_string(dummies) + " dummy), " +
                              std::to_string(model.joints().size()) + " joints, " +
                              std::to_string(model.dof_count()) + " DoF, " + std::to_string(model.sensors().size()) +
                              " sensors";
  std::cout << model.name() << ": " << summary << '\n';
  write_manifest(config, "model-gen", outputs,
                 {{"summary",
                   {{"links", model.link_count()},
                    {"dummy_links", dummies},
                    {"joints", model.joints().size()},
                    {"dof", model.dof_count()},
                    {"sensors", model.sensors().size()}}}});
  return kExitOk;
}

int cmd_simulate(const RunConfig& config) {
  const auto start = Clock::now();
  const KinematicTreeModel model = load_run_model(config);
  const SyntheticScenario scenario = build_scenario(config, model, build_specs(model, config.sensors));
  const unsigned workers = config.worker_count();
  const std::vector<GroundTruthSample> truth = generate_ground_truth(scenario, workers);
  const ObservationSeries obs = generate_observations(scenario, truth, workers);
  spdlog::info("simulate: {} samples, {} channels, {} workers", truth.size(), obs.channel_names.size(), workers);

  prepare_out_dir(config);
  const auto q_names = joint_names(model, "/q");
  const auto qd_names = joint_names(model, "/qd");
  const auto qdd_names = joint_names(model, "/qdd");
  const auto d_names = DynLayout(model).channel_names(model);
  {
    CsvWriter w(out_file(config, "trajectory.csv"), concat(concat(concat({"t"}, q_names), qd_names), qdd_names));
    for (const auto& s : truth) w.row(s.t, concat(concat(s.q, s.qd), s.qdd));
  }
  {
    CsvWriter w(out_file(config, "observations.csv"), concat({"t"}, obs.channel_names));
    for (std::size_t k = 0; k < obs.t.size(); ++k) w.row(obs.t[k], obs.y[k]);
  }
  {
    CsvWriter w(out_file(config, "ground_truth.csv"), concat(concat(concat({"t"}, q_names), qd_names), d_names));
    for (const auto& s : truth) w.row(s.t, concat(concat(s.q, s.qd), s.d.values()));
  }
  const std::vector<std::size_t> links = real_links(model);
  {
    std::vector<std::string> header = {"t"};
    for (std::size_t i : links) header = concat(header, pose_columns(model.link(i).name + "/"));
    CsvWriter w(out_file(config, "link_poses.csv"), header);
    for (const auto& s : truth) {
      const auto world = forward_kinematics(model, s.q);
      Eigen::VectorXd row(6 * static_cast<Eigen::Index>(links.size()));
      for (std::size_t k = 0; k < links.size(); ++k) row.segment<6>(6 * static_cast<Eigen::Index>(k)) = pose_row(world[links[k]]);
      w.row(s.t, row);
    }
  }
  write_manifest(config, "simulate",
                 {"trajectory.csv", "observations.csv", "ground_truth.csv", "link_poses.csv"},
                 {{"samples", truth.size()},
                  {"channels", obs.channel_names.size()},
                  {"dimension", d_names.size()},
                  {"wall_time_s", seconds_since(start)}});
  return kExitOk;
}

namespace {

struct States {
  std::vector<Eigen::VectorXd> q;
  std::vector<Eigen::VectorXd> qd;
};

States states_from_csv(const KinematicTreeModel& model, const std::string& path) {
  const CsvTable t = read_csv(path);
  std::vector<std::size_t> qc, qdc;
  for (const auto& n : joint_names(model, "/q")) qc.push_back(t.column(n));
  for (const auto& n : joint_names(model, "/qd")) qdc.push_back(t.column(n));
  States s;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    s.q.push_back(t.row_segment(r, qc));
    s.qd.push_back(t.row_segment(r, qdc));
  }
  return s;
}

// Frame-matching IK on every coupled link pair, then Savitzky-Golay for the
// joint velocities.
States states_from_poses(const RunConfig& config, const KinematicTreeModel& model, const std::string& path,
                         double& dt) {
  const CsvTable t = read_csv(path);
  if (t.rows.size() < 2) throw InputError(path + ": need at least two samples");
  const auto pairs = coupled_link_pairs(model);
  std::map<std::size_t, std::size_t> first_column;
  for (const auto& [parent, child] : pairs) {
    for (std::size_t link : {parent, child}) {
      if (!first_column.count(link)) first_column[link] = t.column(model.link(link).name + "/x");
    }
  }
  const auto pose_at = [&](std::size_t row, std::size_t link) {
    if (link == 0 && !t.has_column(model.link(0).name + "/x")) return HomTransform();
    const std::size_t c = first_column.at(link);
    std::vector<std::size_t> cols(6);
    for (std::size_t k = 0; k < 6; ++k) cols[k] = c + k;
    return pose_from(t.row_segment(row, cols), 0);
  };
  dt = t.rows[1][t.column("t")] - t.rows[0][t.column("t")];
  if (!(dt > 0.0)) throw InputError(path + ": time column must increase");

  const Eigen::Index n = static_cast<Eigen::Index>(model.dof_count());
  Eigen::VectorXd q = Eigen::VectorXd::Zero(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const JointLimits& lim = model.joints()[static_cast<std::size_t>(k)].limits;
    q(k) = std::clamp(0.0, lim.lower, lim.upper);
  }
  Eigen::MatrixXd qs(static_cast<Eigen::Index>(t.rows.size()), n);
  int unconverged = 0;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    std::vector<RelativePoseTarget> targets;
    for (const auto& [parent, child] : pairs) {
      targets.push_back({parent, child, pose_at(r, parent).inverse() * pose_at(r, child)});
    }
    const IkResult ik = ik_frame_match(model, targets, q);
    if (!ik.converged) ++unconverged;
    q = ik.q;
    qs.row(static_cast<Eigen::Index>(r)) = q.transpose();
  }
  if (unconverged > 0) spdlog::warn("estimate: IK did not converge on {} of {} samples", unconverged, t.rows.size());
  const SavitzkyGolayResult sg = savitzky_golay_derivatives(qs, dt, config.sg_window, config.sg_order);
  States s;
  for (Eigen::Index r = 0; r < qs.rows(); ++r) {
    s.q.push_back(qs.row(r).transpose());
    s.qd.push_back(sg.first.row(r).transpose());
  }
  return s;
}

struct SampleResult {
  Eigen::VectorXd mean;
  Eigen::VectorXd marginal_std;
  Eigen::VectorXd state;
  double seconds = 0.0;
  int relinearizations = 0;
};

}  // namespace

int cmd_estimate(const RunConfig& config) {
  const auto start = Clock::now();
  if (config.inputs.observations.empty()) throw InputError("estimate: inputs.observations is required");
  if (config.inputs.states.empty() && config.inputs.link_poses.empty()) {
    throw InputError("estimate: inputs.states or inputs.link_poses is required");
  }
  const KinematicTreeModel model = load_run_model(config);
  const MeasurementAssembler ma(model, build_specs(model, config.sensors));
  const ConstraintAssembler ca(model);
  const DynLayout layout(model);
  const Eigen::Index observed = config.sensors.mandatory ? ma.rows() : imu_rows(ma);
  if (!config.sensors.mandatory) spdlog::warn("estimate: mandatory channels disabled; using {} IMU rows", observed);

  const CsvTable obs = read_csv(config.inputs.observations);
  const std::size_t samples = obs.rows.size();
  if (samples == 0) throw InputError(config.inputs.observations + ": no samples");
  const std::size_t t_col = obs.column("t");
  const auto channel_names = ma.channel_names();
  std::vector<std::size_t> y_cols;
  for (Eigen::Index r = 0; r < observed; ++r) y_cols.push_back(obs.column(channel_names[static_cast<std::size_t>(r)]));

  double dt = 0.0;
  const States states = config.inputs.states.empty()
                            ? states_from_poses(config, model, config.inputs.link_poses, dt)
                            : states_from_csv(model, config.inputs.states);
  if (states.q.size() != samples) {
    throw InputError("estimate: " + std::to_string(states.q.size()) + " state samples for " + std::to_string(samples) +
                     " observation samples");
  }

  // Rank condition on the first sample; the pattern is shared by all samples.
  MapOptions options;
  options.equilibrate = config.equilibrate;
  const MapSolver solver(
      build_problem(config, ca.assemble(states.q[0], states.qd[0]),
                    leading_rows(ma.assemble(states.q[0], states.qd[0]), observed), obs.row_segment(0, y_cols)),
      options);
  options.check_rank = false;

  const std::vector<Eigen::Index> tau_idx = torque_indices(model);
  DynamicsCallbacks callbacks;
  if (config.augmented.enabled) {
    const DynamicsCallbacks full = make_dynamics_callbacks(ca, ma);
    callbacks.constraint_jacobian = full.constraint_jacobian;
    callbacks.measurement_jacobian = [full, observed](const Eigen::VectorXd& d, const Eigen::VectorXd& x) {
      return Eigen::MatrixXd(full.measurement_jacobian(d, x).topRows(observed));
    };
  }

  std::vector<SampleResult> results(samples);
  parallel_samples(samples, config.worker_count(), [&](std::size_t k) {
    const auto t0 = Clock::now();
    const Eigen::VectorXd y = obs.row_segment(k, y_cols);
    SampleResult& out = results[k];
    const MapProblem problem = build_problem(config, ca.assemble(states.q[k], states.qd[k]),
                                             leading_rows(ma.assemble(states.q[k], states.qd[k]), observed), y);
    const MapResult r = solver.solve(problem);
    out.mean = r.posterior.mean();
    Eigen::VectorXd variance;
    if (config.marginals == "all") variance = r.posterior.marginal_variances();
    if (config.marginals == "torques") variance = r.posterior.marginal_variances(tau_idx);

    if (config.augmented.enabled) {
      const Eigen::Index nd = layout.size();
      const Eigen::Index n = static_cast<Eigen::Index>(model.dof_count());
      const Eigen::VectorXd mu_x = stack_state(states.q[k], states.qd[k]);
      const Eigen::MatrixXd sigma_x = config.augmented.state_variance * Eigen::MatrixXd::Identity(2 * n, 2 * n);
      Eigen::VectorXd current = concat(out.mean, mu_x);
      GaussianBelief belief;
      for (int it = 0; it < config.augmented.iterations; ++it) {
        const Eigen::VectorXd x_bar = current.tail(2 * n);
        const Eigen::VectorXd q = x_bar.head(n), qd = x_bar.tail(n);
        const MapProblem lin = build_problem(config, ca.assemble(q, qd), leading_rows(ma.assemble(q, qd), observed), y);
        belief = map_solve_augmented(lin, mu_x, sigma_x, current.head(nd), x_bar, callbacks, options);
        const double step = (belief.mean() - current).norm() / std::max(1.0, current.norm());
        current = belief.mean();
        ++out.relinearizations;
        if (step < config.augmented.tolerance) break;
      }
      out.mean = current.head(nd);
      out.state = current.tail(2 * n);
      if (config.marginals == "all") {
        std::vector<Eigen::Index> idx(static_cast<std::size_t>(nd));
        for (Eigen::Index i = 0; i < nd; ++i) idx[static_cast<std::size_t>(i)] = i;
        variance = belief.marginal_variances(idx);
      }
      if (config.marginals == "torques") variance = belief.marginal_variances(tau_idx);
    }
    out.marginal_std = variance.cwiseSqrt();
    out.seconds = seconds_since(t0);
  });

  prepare_out_dir(config);
  std::vector<std::string> outputs = {"estimates.csv"};
  const auto d_names = layout.channel_names(model);
  {
    CsvWriter w(out_file(config, "estimates.csv"), concat({"t"}, d_names));
    for (std::size_t k = 0; k < samples; ++k) w.row(obs.rows[k][t_col], results[k].mean);
  }
  if (config.marginals != "none") {
    std::vector<std::string> names = {"t"};
    if (config.marginals == "all") {
      names = concat(names, d_names);
    } else {
      for (Eigen::Index i : tau_idx) names.push_back(d_names[static_cast<std::size_t>(i)]);
    }
    CsvWriter w(out_file(config, "marginal_std.csv"), names);
    for (std::size_t k = 0; k < samples; ++k) w.row(obs.rows[k][t_col], results[k].marginal_std);
    outputs.push_back("marginal_std.csv");
  }
  if (config.augmented.enabled) {
    CsvWriter w(out_file(config, "state_estimates.csv"),
                concat(concat({"t"}, joint_names(model, "/q")), joint_names(model, "/qd")));
    for (std::size_t k = 0; k < samples; ++k) w.row(obs.rows[k][t_col], results[k].state);
    outputs.push_back("state_estimates.csv");
  }

  std::vector<double> times;
  for (const auto& r : results) times.push_back(r.seconds);
  std::sort(times.begin(), times.end());
  double sum = 0.0;
  for (double s : times) sum += s;
  json extra = {{"samples", samples},
                {"dimension", layout.size()},
                {"observed_rows", observed},
                {"workers", config.worker_count()},
                {"state_source", config.inputs.states.empty() ? "link_poses" : "states"},
                {"timing",
                 {{"wall_time_s", seconds_since(start)},
                  {"sample_mean_s", sum / static_cast<double>(samples)},
                  {"sample_median_s", times[samples / 2]},
                  {"sample_max_s", times.back()}}}};
  if (config.augmented.enabled) {
    int total = 0;
    for (const auto& r : results) total += r.relinearizations;
    extra["augmented"] = {{"mean_iterations", static_cast<double>(total) / static_cast<double>(samples)}};
  }

  if (!config.inputs.ground_truth.empty()) {
    const CsvTable gt = read_csv(config.inputs.ground_truth);
    if (gt.rows.size() != samples) throw InputError("estimate: ground truth sample count differs from observations");
    std::vector<std::size_t> cols;
    for (const auto& n : d_names) cols.push_back(gt.column(n));
    Eigen::VectorXd sq = Eigen::VectorXd::Zero(layout.size());
    for (std::size_t k = 0; k < samples; ++k) sq += (results[k].mean - gt.row_segment(k, cols)).array().square().matrix();
    const Eigen::VectorXd rmse = (sq / static_cast<double>(samples)).cwiseSqrt();
    CsvWriter w(out_file(config, "rmse.csv"), d_names);
    w.row(std::vector<double>(rmse.data(), rmse.data() + rmse.size()));
    outputs.push_back("rmse.csv");
    Eigen::Index worst = 0;
    extra["rmse"] = {{"max", rmse.maxCoeff(&worst)}, {"max_channel", d_names[static_cast<std::size_t>(worst)]}};
  }
  spdlog::info("estimate: {} samples in {:.3f} s", samples, seconds_since(start));
  write_manifest(config, "estimate", outputs, extra);
  return kExitOk;
}

int cmd_fusion(const RunConfig& config) {
  const auto start = Clock::now();
  const KinematicTreeModel model = load_run_model(config);
  const auto& cases = config.fusion.cases;
  if (cases.size() < 2) spdlog::warn("fusion: a single case gives no comparison");

  // Union of all case specs; each case adds the specs it has beyond the previous one.
  std::vector<std::vector<SensorSpec>> case_specs;
  std::vector<SensorSpec> all;
  std::set<std::string> known;
  for (const FusionCase& c : cases) {
    case_specs.push_back(build_specs(model, c.sensors));
    for (const SensorSpec& s : case_specs.back()) {
      if (known.insert(s.name).second) all.push_back(s);
    }
  }
  const MeasurementAssembler ma(model, all);
  const ConstraintAssembler ca(model);
  std::map<std::string, std::size_t> spec_index;
  for (std::size_t k = 0; k < ma.specs().size(); ++k) spec_index[ma.specs()[k].name] = k;

  const SyntheticScenario scenario = build_scenario(config, model, ma.specs());
  const auto truth = generate_ground_truth(scenario, config.worker_count());
  const std::size_t sample = std::min<std::size_t>(
      truth.size() - 1, static_cast<std::size_t>(std::max(0.0, std::round(config.fusion.time * config.scenario.rate))));
  const GroundTruthSample& state = truth[sample];
  const MeasurementSystem ms = ma.assemble(state.q, state.qd);
  const Eigen::VectorXd y =
      simulate_readings(ma, state.q, state.qd, state.d, config.seed, config.scenario.noise, config.scenario.noise_scale);

  bool nested = true;
  std::vector<MeasurementGroup> groups;
  json stage_info = json::array();
  std::set<std::string> previous;
  for (std::size_t c = 0; c < cases.size(); ++c) {
    std::set<std::string> current;
    for (const SensorSpec& s : case_specs[c]) current.insert(s.name);
    for (const auto& name : previous) {
      if (!current.count(name)) nested = false;
    }
    std::vector<Eigen::Triplet<double>> rows_y;
    std::vector<Eigen::Index> rows;
    std::vector<std::string> added;
    for (const SensorSpec& s : ma.specs()) {
      if (!current.count(s.name) || previous.count(s.name)) continue;
      added.push_back(s.name);
      const Eigen::Index off = ma.offsets()[spec_index[s.name]];
      for (Eigen::Index r = 0; r < s.dimension(); ++r) rows.push_back(off + r);
    }
    SparseMatrix select(static_cast<Eigen::Index>(rows.size()), ma.rows());
    for (std::size_t r = 0; r < rows.size(); ++r) rows_y.emplace_back(static_cast<Eigen::Index>(r), rows[r], 1.0);
    select.setFromTriplets(rows_y.begin(), rows_y.end());
    MeasurementGroup g;
    g.name = cases[c].name;
    g.Y = select * ms.Y;
    g.Y.makeCompressed();
    g.b = select * ms.b;
    g.y = select * y;
    g.variance = select * ms.variance;
    groups.push_back(std::move(g));
    Eigen::Index case_rows = 0;
    for (const SensorSpec& s : case_specs[c]) case_rows += s.dimension();
    stage_info.push_back(
        {{"name", cases[c].name}, {"case_rows", case_rows}, {"rows_added", rows.size()}, {"specs_added", added}});
    previous = current;
  }
  if (!nested) spdlog::warn("fusion: cases are not nested; each stage only adds sensors, none are removed");

  const DynLayout layout(model);
  const std::vector<Eigen::Index> tau_idx = torque_indices(model);
  MapProblem problem = build_problem(config, ca.assemble(state.q, state.qd), ms, y);
  FusionOptions options;
  options.marginal_indices = tau_idx;
  const std::vector<FusionStage> stages = incremental_fusion(problem, groups, options);

  prepare_out_dir(config);
  std::ofstream out(out_file(config, "fusion.csv"));
  if (!out) throw InputError("cannot write '" + out_file(config, "fusion.csv") + "'");
  out << "joint,link";
  for (const auto& c : cases) out << ',' << c.name << "_std";
  out << ",reduction,monotone\n";
  bool all_monotone = true;
  for (std::size_t j = 0; j < tau_idx.size(); ++j) {
    const std::size_t link = j + 1;
    out << model.joint_of(link).name << ',' << model.link(link).name;
    bool monotone = true;
    for (std::size_t s = 0; s < stages.size(); ++s) {
      const double v = stages[s].marginal_variance(static_cast<Eigen::Index>(j));
      out << ',' << format_double(std::sqrt(v));
      if (s > 0 && v > stages[s - 1].marginal_variance(static_cast<Eigen::Index>(j)) + 1e-12) monotone = false;
    }
    const double first = stages.front().marginal_variance(static_cast<Eigen::Index>(j));
    const double last = stages.back().marginal_variance(static_cast<Eigen::Index>(j));
    out << ',' << format_double(1.0 - last / first) << ',' << (monotone ? 1 : 0) << '\n';
    all_monotone = all_monotone && monotone;
  }
  out.close();

  for (std::size_t s = 0; s < stages.size(); ++s) {
    stage_info[s]["trace"] = stages[s].trace;
    stage_info[s]["mean_torque_variance"] = stages[s].marginal_variance.mean();
  }
  // Mean relative variance reduction over joint groups.
  const auto group_reduction = [&](const std::vector<std::string>& prefixes) {
    double sum = 0.0;
    int count = 0;
    for (std::size_t j = 0; j < tau_idx.size(); ++j) {
      const std::string& name = model.joint_of(j + 1).name;
      if (std::none_of(prefixes.begin(), prefixes.end(), [&](const std::string& p) { return name.rfind(p, 0) == 0; })) {
        continue;
      }
      sum += 1.0 - stages.back().marginal_variance(static_cast<Eigen::Index>(j)) /
                       stages.front().marginal_variance(static_cast<Eigen::Index>(j));
      ++count;
    }
    return count > 0 ? json(sum / count) : json(nullptr);
  };
  spdlog::info("fusion: {} stages at t = {}, monotone = {}", stages.size(), state.t, all_monotone);
  write_manifest(config, "fusion", {"fusion.csv"},
                 {{"time", state.t},
                  {"sample", sample},
                  {"nested", nested},
                  {"monotone", all_monotone},
                  {"stages", stage_info},
                  {"reduction", {{"ankle", group_reduction({"jRightAnkle", "jLeftAnkle"})},
                                 {"torso", group_reduction({"jL5S1", "jL4L3", "jL1T12", "jT9T8"})}}},
                  {"wall_time_s", seconds_since(start)}});
  return kExitOk;
}

int cmd_sensor_pose(const RunConfig& config) {
  const KinematicTreeModel model = load_run_model(config);
  const CalibrationBlock& cal = config.calibration;
  std::set<std::size_t> static_links;
  for (const auto& name : cal.static_links) static_links.insert(model.link_index(name));
  const std::vector<HomTransform> rest = forward_kinematics(model, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.dof_count())));

  prepare_out_dir(config);
  const bool synthetic = cal.input.empty();
  if (synthetic) fs::create_directories(config.out_dir / "streams");

  json entries = json::array();
  std::map<std::size_t, HomTransform> estimated;
  std::size_t ok = 0, total = 0;
  for (const SensorAttachment& sensor : model.sensors()) {
    if (sensor.type != SensorType::kAccelerometer) continue;
    const std::size_t k = total++;
    json e = {{"name", sensor.name}, {"link", model.link(sensor.link).name}};
    try {
      std::vector<ImuCalibrationSample> stream;
      if (synthetic) {
        CalibrationMotion motion;
        if (!static_links.count(sensor.link)) {
          const double s = static_cast<double>(k);
          motion.amplitude = Vec3(0.35 + 0.05 * (k % 3), 0.3 + 0.04 * (k % 4), 0.45 + 0.03 * (k % 5));
          motion.frequency = Vec3(0.6 + 0.07 * s, 0.9 + 0.05 * s, 0.4 + 0.03 * s);
          motion.phase = Vec3(0.3 * s, 0.7 * s, 1.1 * s);
          motion.translation_amplitude = Vec3(0.05, 0.03, 0.02);
          motion.translation_frequency = 0.8;
        }
        motion.base_orientation = rest[sensor.link].rotation();
        motion.origin = rest[sensor.link].translation();
        stream = generate_calibration_stream(motion, sensor.pose, cal.samples, cal.rate, cal.noise_std,
                                             sample_seed(config.seed, k));
        write_stream((config.out_dir / "streams" / (sensor.name + ".csv")).string(), stream, cal.rate);
      } else {
        stream = read_stream((fs::path(cal.input) / (sensor.name + ".csv")).string());
      }
      const SensorPoseEstimate est = estimate_sensor_pose(stream);
      const HomTransform pose(Rotation3::from_rpy(est.rpy), est.position);
      e["status"] = "ok";
      e["position"] = vec_json(est.position);
      e["rpy"] = vec_json(est.rpy);
      e["max_orientation_spread"] = est.max_orientation_spread;
      e["samples"] = stream.size();
      e["model_position_error"] = (est.position - sensor.pose.translation()).norm();
      e["model_orientation_error"] = rotation_distance(sensor.pose.rotation(), pose.rotation());
      estimated[sensor.link] = pose;
      ++ok;
    } catch (...) {
      const std::exception_ptr err = std::current_exception();
      e["status"] = status_of(err);
      try {
        std::rethrow_exception(err);
      } catch (const std::exception& ex) {
        e["message"] = ex.what();
      }
      spdlog::warn("sensor-pose: {}: {}", sensor.name, e["message"].get<std::string>());
    }
    entries.push_back(e);
  }

  std::vector<std::string> outputs = {"calibration.json"};
  write_json(out_file(config, "calibration.json"),
             {{"synthetic", synthetic}, {"succeeded", ok}, {"total", total}, {"sensors", entries}});
  if (synthetic) outputs.push_back("streams/");
  if (cal.patch_model && ok > 0) {
    const std::string xml = emit_model(rebuild_with_sensor_poses(model, estimated));
    parse_model(xml);
    write_text(out_file(config, "model_calibrated.urdf"), xml);
    outputs.push_back("model_calibrated.urdf");
  }
  write_manifest(config, "sensor-pose", outputs, {{"succeeded", ok}, {"total", total}});
  std::cout << ok << " of " << total << " sensors calibrated\n";
  if (total > 0 && ok == 0) throw NumericalError("sensor-pose: no sensor could be calibrated");
  return kExitOk;
}

}  // namespace mapdyn::cli
