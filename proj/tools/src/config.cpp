#include "config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "mapdyn/errors.hpp"

namespace mapdyn::cli {

namespace fs = std::filesystem;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw InputError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw InputError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
T get(const json& j, const std::string& key, const T& fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw InputError(where + "." + key + ": " + e.what());
  }
}

double positive(const json& j, const std::string& key, double fallback, const std::string& where) {
  const double v = get<double>(j, key, fallback, where);
  if (!(v > 0.0)) throw InputError(where + "." + key + " must be > 0");
  return v;
}

template <int N>
Eigen::Matrix<double, N, 1> fixed_vector(const json& j, const std::string& key, const std::string& where) {
  const auto v = get<std::vector<double>>(j, key, std::vector<double>(N, 0.0), where);
  if (v.size() != static_cast<std::size_t>(N)) {
    throw InputError(where + "." + key + ": expected " + std::to_string(N) + " numbers");
  }
  return Eigen::Map<const Eigen::Matrix<double, N, 1>>(v.data());
}

template <typename Derived>
json to_array(const Eigen::MatrixBase<Derived>& v) {
  json a = json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back(v(k));
  return a;
}

SensorBlock parse_sensors(const json& j, const std::string& where) {
  SensorBlock s;
  if (j.is_null()) return s;
  check_keys(j, {"mandatory", "imus", "foot_links", "variances", "force_plate"}, where);
  s.mandatory = get<bool>(j, "mandatory", true, where);
  if (j.contains("imus")) {
    const json& imus = j.at("imus");
    if (imus.is_string()) {
      const std::string v = imus.get<std::string>();
      if (v == "all") {
        s.all_imus = true;
      } else if (v == "none") {
        s.all_imus = false;
      } else {
        throw InputError(where + ".imus: expected \"all\", \"none\" or a list of sensor names");
      }
    } else {
      s.all_imus = false;
      s.imus = get<std::vector<std::string>>(j, "imus", {}, where);
    }
  }
  s.foot_links = get<std::vector<std::string>>(j, "foot_links", s.foot_links, where);
  if (j.contains("variances")) {
    const json& v = j.at("variances");
    const std::string w = where + ".variances";
    check_keys(v, {"imu", "dof_acceleration", "fixed_base_wrench", "foot_wrench", "other_wrench"}, w);
    s.variances.imu = positive(v, "imu", s.variances.imu, w);
    s.variances.dof_acceleration = positive(v, "dof_acceleration", s.variances.dof_acceleration, w);
    s.variances.fixed_base_wrench = positive(v, "fixed_base_wrench", s.variances.fixed_base_wrench, w);
    s.variances.foot_wrench = positive(v, "foot_wrench", s.variances.foot_wrench, w);
    s.variances.other_wrench = positive(v, "other_wrench", s.variances.other_wrench, w);
  }
  if (j.contains("force_plate")) {
    const json& fp = j.at("force_plate");
    const std::string w = where + ".force_plate";
    check_keys(fp, {"xyz", "rpy"}, w);
    s.force_plate = HomTransform::from_xyz_rpy(fixed_vector<3>(fp, "xyz", w), fixed_vector<3>(fp, "rpy", w));
  }
  return s;
}

json sensors_json(const SensorBlock& s) {
  json j;
  j["mandatory"] = s.mandatory;
  if (s.imus) {
    j["imus"] = *s.imus;
  } else {
    j["imus"] = s.all_imus ? "all" : "none";
  }
  j["foot_links"] = s.foot_links;
  j["variances"] = {{"imu", s.variances.imu},
                    {"dof_acceleration", s.variances.dof_acceleration},
                    {"fixed_base_wrench", s.variances.fixed_base_wrench},
                    {"foot_wrench", s.variances.foot_wrench},
                    {"other_wrench", s.variances.other_wrench}};
  j["force_plate"] = {{"xyz", to_array(s.force_plate.translation())}, {"rpy", to_array(s.force_plate.rotation().rpy())}};
  return j;
}

JointWaveformBlock parse_waveform(const json& j, const std::string& where) {
  check_keys(j, {"type", "amplitude", "frequency", "phase", "offset", "value", "times", "values"}, where);
  JointWaveformBlock w;
  w.type = get<std::string>(j, "type", "sine", where);
  if (w.type != "sine" && w.type != "constant" && w.type != "spline") {
    throw InputError(where + ".type: expected sine, constant or spline");
  }
  w.amplitude = get<double>(j, "amplitude", 0.0, where);
  w.frequency = get<double>(j, "frequency", 0.0, where);
  w.phase = get<double>(j, "phase", 0.0, where);
  w.offset = get<double>(j, "offset", 0.0, where);
  w.value = get<double>(j, "value", 0.0, where);
  w.times = get<std::vector<double>>(j, "times", {}, where);
  w.values = get<std::vector<double>>(j, "values", {}, where);
  if (w.type == "spline" && (w.times.size() < 2 || w.times.size() != w.values.size())) {
    throw InputError(where + ": spline needs matching times and values with at least two knots");
  }
  return w;
}

json waveform_json(const JointWaveformBlock& w) {
  json j{{"type", w.type}};
  if (w.type == "sine") {
    j["amplitude"] = w.amplitude;
    j["frequency"] = w.frequency;
    j["phase"] = w.phase;
    j["offset"] = w.offset;
  } else if (w.type == "constant") {
    j["value"] = w.value;
  } else {
    j["times"] = w.times;
    j["values"] = w.values;
  }
  return j;
}

ScenarioBlock parse_scenario(const json& j, const std::string& where) {
  ScenarioBlock s;
  if (j.is_null()) return s;
  check_keys(j, {"duration", "rate", "amplitude", "frequency", "joints", "forces", "noise", "noise_scale"}, where);
  s.duration = positive(j, "duration", s.duration, where);
  s.rate = positive(j, "rate", s.rate, where);
  s.amplitude = get<double>(j, "amplitude", s.amplitude, where);
  s.frequency = get<double>(j, "frequency", s.frequency, where);
  if (s.amplitude < 0.0 || s.frequency < 0.0) throw InputError(where + ": amplitude and frequency must be >= 0");
  if (j.contains("joints") && !j.at("joints").is_object()) throw InputError(where + ".joints: expected an object");
  s.noise = get<bool>(j, "noise", s.noise, where);
  s.noise_scale = positive(j, "noise_scale", s.noise_scale, where);
  if (j.contains("forces")) {
    const json& forces = j.at("forces");
    if (!forces.is_array()) throw InputError(where + ".forces: expected an array");
    for (std::size_t k = 0; k < forces.size(); ++k) {
      const std::string w = where + ".forces[" + std::to_string(k) + "]";
      check_keys(forces[k], {"link", "constant", "amplitude", "frequency"}, w);
      ExternalForceScript f;
      f.link = get<std::string>(forces[k], "link", "", w);
      if (f.link.empty()) throw InputError(w + ".link is required");
      f.constant = fixed_vector<6>(forces[k], "constant", w);
      f.amplitude = fixed_vector<6>(forces[k], "amplitude", w);
      f.frequency = get<double>(forces[k], "frequency", 0.0, w);
      s.forces.push_back(f);
    }
  }
  return s;
}

json scenario_json(const ScenarioBlock& s) {
  json joints = json::object();
  for (const auto& [name, w] : s.joints) joints[name] = waveform_json(w);
  json forces = json::array();
  for (const auto& f : s.forces) {
    forces.push_back({{"link", f.link},
                      {"constant", to_array(f.constant)},
                      {"amplitude", to_array(f.amplitude)},
                      {"frequency", f.frequency}});
  }
  return {{"duration", s.duration},   {"rate", s.rate},   {"amplitude", s.amplitude},
          {"frequency", s.frequency}, {"joints", joints}, {"forces", forces},
          {"noise", s.noise},         {"noise_scale", s.noise_scale}};
}

}  // namespace

unsigned RunConfig::worker_count() const {
  if (workers > 0) return workers;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

std::string RunConfig::path(const std::string& relative) const {
  if (relative.empty()) return relative;
  const fs::path p(relative);
  return (p.is_absolute() ? p : base_dir / p).lexically_normal().string();
}

RunConfig parse_config(const json& document, const fs::path& base_dir, const CommandLine& cli) {
  const std::string where = "config";
  const json doc = document.is_null() ? json::object() : document;
  check_keys(doc, {"model", "subject", "mapping", "out", "seed", "workers", "sensors", "covariance", "solver", "scenario", "inputs",
                   "savitzky_golay", "marginals", "augmented", "fusion", "calibration"},
             where);
  RunConfig c;
  c.base_dir = base_dir;
  const auto resolve_existing = [&](const std::string& key, const std::string& value) {
    if (value.empty()) return value;
    const std::string p = c.path(value);
    if (!fs::exists(p)) throw InputError(where + "." + key + ": file '" + p + "' does not exist");
    return p;
  };

  const std::string model = get<std::string>(doc, "model", "template", where);
  c.model = model == "template" ? model : resolve_existing("model", model);
  if (cli.model) {
    c.model = *cli.model == "template" ? *cli.model : fs::absolute(*cli.model).lexically_normal().string();
    if (c.model != "template" && !fs::exists(c.model)) throw InputError("--model: file '" + c.model + "' does not exist");
  }
  c.subject = resolve_existing("subject", get<std::string>(doc, "subject", "", where));
  c.mapping = resolve_existing("mapping", get<std::string>(doc, "mapping", "", where));
  c.out_dir = cli.out ? fs::absolute(*cli.out).lexically_normal() : fs::path(c.path(get<std::string>(doc, "out", "mapdyn_out", where)));
  c.seed = cli.seed ? *cli.seed : get<std::uint64_t>(doc, "seed", 0, where);
  c.workers = cli.workers ? *cli.workers : get<unsigned>(doc, "workers", 0, where);

  c.sensors = parse_sensors(doc.value("sensors", json()), where + ".sensors");

  if (doc.contains("covariance")) {
    const json& cov = doc.at("covariance");
    const std::string w = where + ".covariance";
    check_keys(cov, {"prior", "model", "prior_mean"}, w);
    c.covariance.prior = positive(cov, "prior", c.covariance.prior, w);
    c.covariance.model = positive(cov, "model", c.covariance.model, w);
    c.prior_mean = get<double>(cov, "prior_mean", c.prior_mean, w);
  }

  if (doc.contains("solver")) {
    const json& sv = doc.at("solver");
    check_keys(sv, {"equilibrate"}, where + ".solver");
    c.equilibrate = get<bool>(sv, "equilibrate", c.equilibrate, where + ".solver");
  }

  c.scenario = parse_scenario(doc.value("scenario", json()), where + ".scenario");
  if (doc.contains("scenario") && doc.at("scenario").contains("joints")) {
    for (const auto& [name, w] : doc.at("scenario").at("joints").items()) {
      c.scenario.joints[name] = parse_waveform(w, where + ".scenario.joints." + name);
    }
  }

  if (doc.contains("inputs")) {
    const json& in = doc.at("inputs");
    const std::string w = where + ".inputs";
    check_keys(in, {"observations", "states", "link_poses", "ground_truth"}, w);
    c.inputs.observations = resolve_existing("inputs.observations", get<std::string>(in, "observations", "", w));
    c.inputs.states = resolve_existing("inputs.states", get<std::string>(in, "states", "", w));
    c.inputs.link_poses = resolve_existing("inputs.link_poses", get<std::string>(in, "link_poses", "", w));
    c.inputs.ground_truth = resolve_existing("inputs.ground_truth", get<std::string>(in, "ground_truth", "", w));
  }

  if (doc.contains("savitzky_golay")) {
    const json& sg = doc.at("savitzky_golay");
    const std::string w = where + ".savitzky_golay";
    check_keys(sg, {"window", "order"}, w);
    c.sg_window = get<int>(sg, "window", c.sg_window, w);
    c.sg_order = get<int>(sg, "order", c.sg_order, w);
    if (c.sg_window <= 0 || c.sg_window % 2 == 0 || c.sg_order < 0 || c.sg_order >= c.sg_window) {
      throw InputError(w + ": window must be odd and exceed the order");
    }
  }

  c.marginals = get<std::string>(doc, "marginals", c.marginals, where);
  if (c.marginals != "all" && c.marginals != "torques" && c.marginals != "none") {
    throw InputError(where + ".marginals: expected all, torques or none");
  }

  if (doc.contains("augmented")) {
    const json& a = doc.at("augmented");
    const std::string w = where + ".augmented";
    check_keys(a, {"enabled", "state_variance", "iterations", "tolerance"}, w);
    c.augmented.enabled = get<bool>(a, "enabled", c.augmented.enabled, w);
    c.augmented.state_variance = positive(a, "state_variance", c.augmented.state_variance, w);
    c.augmented.iterations = get<int>(a, "iterations", c.augmented.iterations, w);
    c.augmented.tolerance = positive(a, "tolerance", c.augmented.tolerance, w);
    if (c.augmented.iterations < 1) throw InputError(w + ".iterations must be >= 1");
  }

  if (doc.contains("fusion")) {
    const json& f = doc.at("fusion");
    const std::string w = where + ".fusion";
    check_keys(f, {"cases", "time"}, w);
    c.fusion.time = get<double>(f, "time", 0.0, w);
    if (f.contains("cases")) {
      if (!f.at("cases").is_array()) throw InputError(w + ".cases: expected an array");
      for (std::size_t k = 0; k < f.at("cases").size(); ++k) {
        const json& cs = f.at("cases")[k];
        const std::string wc = w + ".cases[" + std::to_string(k) + "]";
        check_keys(cs, {"name", "sensors"}, wc);
        c.fusion.cases.push_back({get<std::string>(cs, "name", "CASE" + std::to_string(k + 1), wc),
                                  parse_sensors(cs.value("sensors", json()), wc + ".sensors")});
      }
    }
  }
  if (c.fusion.cases.empty()) {
    FusionCase case1{"CASE1", c.sensors};
    case1.sensors.all_imus = false;
    case1.sensors.imus.reset();
    FusionCase case2{"CASE2", c.sensors};
    case2.sensors.all_imus = true;
    case2.sensors.imus.reset();
    c.fusion.cases = {case1, case2};
  }

  if (doc.contains("calibration")) {
    const json& cal = doc.at("calibration");
    const std::string w = where + ".calibration";
    check_keys(cal, {"input", "samples", "rate", "noise_std", "static_links", "patch_model"}, w);
    c.calibration.input = resolve_existing("calibration.input", get<std::string>(cal, "input", "", w));
    c.calibration.samples = get<std::size_t>(cal, "samples", c.calibration.samples, w);
    c.calibration.rate = positive(cal, "rate", c.calibration.rate, w);
    c.calibration.noise_std = get<double>(cal, "noise_std", 0.0, w);
    if (c.calibration.noise_std < 0.0) throw InputError(w + ".noise_std must be >= 0");
    c.calibration.static_links = get<std::vector<std::string>>(cal, "static_links", {}, w);
    c.calibration.patch_model = get<bool>(cal, "patch_model", false, w);
  }

  json cases = json::array();
  for (const auto& fc : c.fusion.cases) cases.push_back({{"name", fc.name}, {"sensors", sensors_json(fc.sensors)}});
  c.resolved = {
      {"model", c.model},
      {"subject", c.subject},
      {"mapping", c.mapping},
      {"out", c.out_dir.string()},
      {"seed", c.seed},
      {"workers", c.workers},
      {"sensors", sensors_json(c.sensors)},
      {"covariance", {{"prior", c.covariance.prior}, {"model", c.covariance.model}, {"prior_mean", c.prior_mean}}},
      {"solver", {{"equilibrate", c.equilibrate}}},
      {"scenario", scenario_json(c.scenario)},
      {"inputs",
       {{"observations", c.inputs.observations},
        {"states", c.inputs.states},
        {"link_poses", c.inputs.link_poses},
        {"ground_truth", c.inputs.ground_truth}}},
      {"savitzky_golay", {{"window", c.sg_window}, {"order", c.sg_order}}},
      {"marginals", c.marginals},
      {"augmented",
       {{"enabled", c.augmented.enabled},
        {"state_variance", c.augmented.state_variance},
        {"iterations", c.augmented.iterations},
        {"tolerance", c.augmented.tolerance}}},
      {"fusion", {{"cases", cases}, {"time", c.fusion.time}}},
      {"calibration",
       {{"input", c.calibration.input},
        {"samples", c.calibration.samples},
        {"rate", c.calibration.rate},
        {"noise_std", c.calibration.noise_std},
        {"static_links", c.calibration.static_links},
        {"patch_model", c.calibration.patch_model}}},
  };
  return c;
}

RunConfig load_config(const CommandLine& cli) {
  if (!cli.config) return parse_config(json::object(), fs::current_path(), cli);
  const fs::path path = fs::absolute(*cli.config);
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError("config file '" + path.string() + "': " + e.what());
  }
  return parse_config(doc, path.parent_path(), cli);
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  std::ostringstream s;
  s << std::hex;
  s.width(16);
  s.fill('0');
  s << value;
  return s.str();
}

}  // namespace mapdyn::cli
