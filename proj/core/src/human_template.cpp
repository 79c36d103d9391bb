#include "mapdyn/human_template.hpp"

#include <cmath>
#include <deque>
#include <set>

#include "mapdyn/errors.hpp"
#include "mapdyn/urdf.hpp"

namespace mapdyn {

namespace {

JointLimits lim(double lower, double upper) { return JointLimits{lower, upper}; }

// Mirror right-side limits onto the left: rotations about x and z change sign.
TemplateAxisSpec mirror(const TemplateAxisSpec& a) {
  if (a.axis == 'y') return a;
  return TemplateAxisSpec{a.axis, lim(-a.limits.upper, -a.limits.lower)};
}

TemplateMapping make_default_mapping() {
  using S = TemplateShape;
  TemplateMapping m;
  m.root = "LeftFoot";
  m.root_origin = "jLeftAnkle";

  m.links = {
      {"Pelvis", 0.08, S::kBox, "jRightHip", "jLeftHip", {1.2, 0.8}, true},
      {"L5", 0.102, S::kBox, "jL5S1", "jL4L3", {1.8, 2.6}, false},
      {"L3", 0.102, S::kBox, "jL4L3", "jL1T12", {1.8, 2.6}, false},
      {"T12", 0.102, S::kBox, "jL1T12", "jT9T8", {1.5, 2.3}, false},
      {"T8", 0.04, S::kBox, "jT9T8", "jT1C7", {1.1, 1.9}, true},
      {"Neck", 0.012, S::kCylinder, "jT1C7", "jC1Head", {0.5}, false},
      {"Head", 0.036, S::kSphere, "jC1Head", "pHeadTop", {0.5}, true},
  };
  for (const std::string side : {"Right", "Left"}) {
    m.links.push_back({side + "Shoulder", 0.031, S::kCylinder, "j" + side + "C7Shoulder", "j" + side + "Shoulder",
                       {0.25}, true});
    m.links.push_back(
        {side + "UpperArm", 0.030, S::kCylinder, "j" + side + "Shoulder", "j" + side + "Elbow", {0.15}, true});
    m.links.push_back(
        {side + "ForeArm", 0.020, S::kCylinder, "j" + side + "Elbow", "j" + side + "Wrist", {0.14}, true});
    m.links.push_back(
        {side + "Hand", 0.006, S::kBox, "j" + side + "Wrist", "p" + side + "HandTip", {0.5, 0.2}, true});
  }
  for (const std::string side : {"Right", "Left"}) {
    m.links.push_back(
        {side + "UpperLeg", 0.125, S::kCylinder, "j" + side + "Hip", "j" + side + "Knee", {0.17}, true});
    m.links.push_back(
        {side + "LowerLeg", 0.0365, S::kCylinder, "j" + side + "Knee", "j" + side + "Ankle", {0.12}, true});
    m.links.push_back(
        {side + "Foot", 0.013, S::kBox, "p" + side + "Heel", "j" + side + "BallFoot", {0.5, 0.4}, true});
    // Toe fractions are used verbatim, including the left/right asymmetry.
    m.links.push_back({side + "Toe", side == "Right" ? 0.015 : 0.0015, S::kBox, "j" + side + "BallFoot",
                       "p" + side + "ToeTip", {1.3, 0.3}, false});
  }

  const std::vector<TemplateAxisSpec> lumbar = {{'x', lim(-0.610865, 0.610865)}, {'y', lim(-0.523599, 1.308997)}};
  m.joints = {
      {"jL5S1", "Pelvis", "L5", "jL5S1", lumbar},
      {"jL4L3", "L5", "L3", "jL4L3", lumbar},
      {"jL1T12", "L3", "T12", "jL1T12", lumbar},
      {"jT9T8", "T12", "T8", "jT9T8",
       {{'x', lim(-0.610865, 0.610865)}, {'y', lim(-0.523599, 1.308997)}, {'z', lim(-0.785398, 0.785398)}}},
      {"jT1C7", "T8", "Neck", "jT1C7",
       {{'x', lim(-0.610865, 0.610865)}, {'y', lim(-0.872665, 1.221730)}, {'z', lim(-1.221730, 1.221730)}}},
      {"jC1Head", "Neck", "Head", "jC1Head", {{'x', lim(-0.610865, 0.610865)}, {'y', lim(-0.872665, 0.872665)}}},
  };

  struct Side {
    std::string name;
    bool mirrored;
  };
  auto axes = [](const std::vector<TemplateAxisSpec>& right, bool mirrored) {
    if (!mirrored) return right;
    std::vector<TemplateAxisSpec> out;
    for (const auto& a : right) out.push_back(mirror(a));
    return out;
  };
  for (const Side& s : {Side{"Right", false}, Side{"Left", true}}) {
    const std::string& n = s.name;
    m.joints.push_back({"j" + n + "C7Shoulder", "T8", n + "Shoulder", "j" + n + "C7Shoulder",
                        axes({{'x', lim(-0.785398, 0.261799)}}, s.mirrored)});
    m.joints.push_back({"j" + n + "Shoulder", n + "Shoulder", n + "UpperArm", "j" + n + "Shoulder",
                        axes({{'x', lim(-2.356194, 1.570796)},
                              {'y', lim(-1.570796, 3.141593)},
                              {'z', lim(-1.570796, 1.570796)}},
                             s.mirrored)});
    m.joints.push_back({"j" + n + "Elbow", n + "UpperArm", n + "ForeArm", "j" + n + "Elbow",
                        axes({{'y', lim(-1.570796, 1.570796)}, {'z', lim(-2.530727, 0.174533)}}, s.mirrored)});
    m.joints.push_back({"j" + n + "Wrist", n + "ForeArm", n + "Hand", "j" + n + "Wrist",
                        axes({{'x', lim(-1.570796, 1.570796)}, {'z', lim(-1.221730, 1.221730)}}, s.mirrored)});
  }
  for (const Side& s : {Side{"Right", false}, Side{"Left", true}}) {
    const std::string& n = s.name;
    m.joints.push_back({"j" + n + "Hip", "Pelvis", n + "UpperLeg", "j" + n + "Hip",
                        axes({{'x', lim(-0.785398, 0.523599)},
                              {'y', lim(-2.094395, 0.523599)},
                              {'z', lim(-0.785398, 0.785398)}},
                             s.mirrored)});
    m.joints.push_back({"j" + n + "Knee", n + "UpperLeg", n + "LowerLeg", "j" + n + "Knee",
                        axes({{'y', lim(0.0, 2.35619)}, {'z', lim(-0.698132, 0.523599)}}, s.mirrored)});
    m.joints.push_back({"j" + n + "Ankle", n + "LowerLeg", n + "Foot", "j" + n + "Ankle",
                        axes({{'x', lim(-0.610865, 0.610865)},
                              {'y', lim(-0.872665, 0.523599)},
                              {'z', lim(-0.610865, 0.610865)}},
                             s.mirrored)});
    m.joints.push_back({"j" + n + "BallFoot", n + "Foot", n + "Toe", "j" + n + "BallFoot",
                        axes({{'y', lim(-0.785398, 0.785398)}}, s.mirrored)});
  }
  return m;
}

Vec3 axis_vector(char axis) {
  switch (axis) {
    case 'x': return Vec3::UnitX();
    case 'y': return Vec3::UnitY();
    case 'z': return Vec3::UnitZ();
    default: throw InputError(std::string("template axis must be x, y or z, got '") + axis + "'");
  }
}

const Vec3& landmark(const SubjectSpec& subject, const std::string& name, const std::string& user) {
  auto it = subject.landmarks.find(name);
  if (it == subject.landmarks.end()) {
    throw InputError("landmark '" + name + "' required by " + user + " is missing");
  }
  return it->second;
}

Link dummy_link(const std::string& name) {
  return Link{name, SpatialInertia(kDummyMass, Vec3::Zero(), Mat3::Identity() * kDummyInertia), std::nullopt, true};
}

struct RealLink {
  Link link;
  Vec3 sensor_offset;  // IMU position in the link frame
};

RealLink make_real_link(const SubjectSpec& subject, const TemplateLinkSpec& spec, const Vec3& frame_origin) {
  const std::string user = "link '" + spec.name + "'";
  const Vec3& a = landmark(subject, spec.from, user);
  const Vec3& b = landmark(subject, spec.to, user);
  const Vec3 delta = b - a;
  const double length = delta.norm();
  if (!(length > 0.0)) throw InputError("landmarks of " + user + " coincide");
  Eigen::Index dominant = 0;
  delta.cwiseAbs().maxCoeff(&dominant);
  const double mass = spec.mass_fraction * subject.total_mass;
  const Vec3 com = 0.5 * (a + b) - frame_origin;
  auto ratio = [&](std::size_t k) {
    if (spec.ratios.size() <= k) throw InputError(user + " needs " + std::to_string(k + 1) + " shape ratios");
    return spec.ratios[k] * length;
  };

  Mat3 inertia;
  VisualShape visual{Sphere{1.0}, HomTransform(Rotation3(), com)};
  Vec3 offset = com;
  switch (spec.shape) {
    case TemplateShape::kBox: {
      Vec3 extent;
      std::size_t k = 0;
      for (Eigen::Index ax = 0; ax < 3; ++ax) extent(ax) = ax == dominant ? length : ratio(k++);
      const Parallelepiped box{extent.y(), extent.z(), extent.x()};
      inertia = inertia_of_shape(box, mass);
      visual.geometry = box;
      offset.x() += 0.5 * extent.x();
      break;
    }
    case TemplateShape::kCylinder: {
      const Cylinder cyl{ratio(0), length};
      // Table moments have the symmetry axis along y; move it to `dominant`.
      const Vec3 m_y = inertia_of_shape(cyl, mass).diagonal();
      Vec3 moments = Vec3::Constant(m_y.x());
      moments(dominant) = m_y.y();
      inertia = moments.asDiagonal();
      visual.geometry = cyl;
      constexpr double kHalfPi = 1.5707963267948966;
      if (dominant == 0) visual.origin = HomTransform(Rotation3::from_rpy(0, 0, -kHalfPi), com);
      if (dominant == 2) visual.origin = HomTransform(Rotation3::from_rpy(kHalfPi, 0, 0), com);
      if (dominant != 0) offset.x() += cyl.radius;
      break;
    }
    case TemplateShape::kSphere: {
      const Sphere s{ratio(0)};
      inertia = inertia_of_shape(s, mass);
      visual.geometry = s;
      offset.x() += s.radius;
      break;
    }
  }
  return RealLink{Link{spec.name, SpatialInertia(mass, com, inertia), visual, false}, offset};
}

}  // namespace

const TemplateMapping& default_template_mapping() {
  static const TemplateMapping mapping = make_default_mapping();
  return mapping;
}

SubjectSpec reference_subject() {
  SubjectSpec s;
  s.total_mass = 75.9;
  auto& l = s.landmarks;
  l["jL5S1"] = {-0.02, 0.0, 1.00};
  l["jL4L3"] = {-0.02, 0.0, 1.10};
  l["jL1T12"] = {-0.02, 0.0, 1.20};
  l["jT9T8"] = {-0.02, 0.0, 1.32};
  l["jT1C7"] = {-0.03, 0.0, 1.50};
  l["jC1Head"] = {-0.01, 0.0, 1.60};
  l["pHeadTop"] = {0.0, 0.0, 1.78};
  for (const auto& [side, sy] : {std::pair<std::string, double>{"Right", -1.0}, {"Left", 1.0}}) {
    l["j" + side + "C7Shoulder"] = {-0.02, sy * 0.03, 1.46};
    l["j" + side + "Shoulder"] = {-0.02, sy * 0.19, 1.46};
    l["j" + side + "Elbow"] = {-0.02, sy * 0.49, 1.46};
    l["j" + side + "Wrist"] = {-0.02, sy * 0.75, 1.46};
    l["p" + side + "HandTip"] = {-0.02, sy * 0.93, 1.46};
    l["j" + side + "Hip"] = {0.0, sy * 0.09, 0.92};
    l["j" + side + "Knee"] = {0.0, sy * 0.09, 0.50};
    l["j" + side + "Ankle"] = {0.0, sy * 0.09, 0.08};
    l["j" + side + "BallFoot"] = {0.13, sy * 0.09, 0.03};
    l["p" + side + "Heel"] = {-0.06, sy * 0.09, 0.02};
    l["p" + side + "ToeTip"] = {0.20, sy * 0.09, 0.02};
  }
  return s;
}

KinematicTreeModel build_human_template(const SubjectSpec& subject, const TemplateMapping& mapping) {
  if (!(subject.total_mass > 0.0) || !std::isfinite(subject.total_mass)) {
    throw InputError("subject total mass must be positive");
  }
  std::map<std::string, const TemplateLinkSpec*> link_spec;
  for (const auto& l : mapping.links) {
    if (!link_spec.emplace(l.name, &l).second) throw InputError("mapping lists link '" + l.name + "' twice");
  }
  if (!link_spec.count(mapping.root)) throw InputError("mapping root '" + mapping.root + "' is not a listed link");

  // Undirected traversal from the root; joints reached from their distal
  // side are emitted with reversed axis order and negated axes, so that the
  // joint coordinates keep their anatomical meaning.
  std::map<std::string, std::vector<const TemplateJointSpec*>> incident;
  for (const auto& j : mapping.joints) {
    for (const auto* end : {&j.proximal, &j.distal}) {
      if (!link_spec.count(*end)) throw InputError("joint '" + j.name + "' references unknown link '" + *end + "'");
    }
    if (j.axes.empty()) throw InputError("joint '" + j.name + "' has no axes");
    incident[j.proximal].push_back(&j);
    incident[j.distal].push_back(&j);
  }

  ModelBuilder builder(mapping.model_name);
  std::map<std::string, Vec3> frame_origin;
  frame_origin[mapping.root] = landmark(subject, mapping.root_origin, "the root link '" + mapping.root + "'");
  std::set<const TemplateJointSpec*> used;
  std::deque<std::string> queue{mapping.root};
  std::vector<std::string> visit_order;
  while (!queue.empty()) {
    const std::string parent = queue.front();
    queue.pop_front();
    visit_order.push_back(parent);
    for (const TemplateJointSpec* j : incident[parent]) {
      if (!used.insert(j).second) continue;
      const bool forward = j->proximal == parent;
      const std::string child = forward ? j->distal : j->proximal;
      if (frame_origin.count(child)) throw InputError("mapping joints form a cycle at '" + child + "'");
      const Vec3& center = landmark(subject, j->center, "joint '" + j->name + "'");
      frame_origin[child] = center;

      std::vector<TemplateAxisSpec> chain = j->axes;
      const std::size_t k = chain.size();
      // Dummy between axis m and m+1 (forward order) is "<distal>_f<m+1>".
      std::vector<std::string> nodes(k + 1);
      for (std::size_t m = 1; m < k; ++m) nodes[m] = j->distal + "_f" + std::to_string(m);
      nodes[0] = j->proximal;
      nodes[k] = j->distal;
      for (std::size_t m = 1; m < k; ++m) builder.add_link(dummy_link(nodes[m]));
      for (std::size_t m = 0; m < k; ++m) {
        const TemplateAxisSpec& ax = chain[m];
        ModelBuilder::JointSpec js;
        js.name = j->name + "_rot" + ax.axis;
        js.limits = ax.limits;
        if (forward) {
          js.parent = nodes[m];
          js.child = nodes[m + 1];
          js.axis = axis_vector(ax.axis);
        } else {
          js.parent = nodes[m + 1];
          js.child = nodes[m];
          js.axis = -axis_vector(ax.axis);
        }
        const bool first_from_parent = forward ? m == 0 : m + 1 == k;
        const Vec3 offset = first_from_parent ? Vec3(center - frame_origin.at(parent)) : Vec3::Zero();
        js.origin = HomTransform(Rotation3(), offset);
        builder.add_joint(std::move(js));
      }
      queue.push_back(child);
    }
  }
  if (visit_order.size() != mapping.links.size()) {
    for (const auto& l : mapping.links) {
      if (!frame_origin.count(l.name)) throw InputError("link '" + l.name + "' is not connected to the root");
    }
  }

  for (const auto& spec : mapping.links) {
    RealLink rl = make_real_link(subject, spec, frame_origin.at(spec.name));
    builder.add_link(rl.link);
    if (spec.has_imu) {
      const HomTransform pose(Rotation3(), rl.sensor_offset);
      builder.add_sensor({spec.name + "_gyro", SensorType::kGyroscope, spec.name, pose});
      builder.add_sensor({spec.name + "_accelerometer", SensorType::kAccelerometer, spec.name, pose});
    }
  }
  return builder.build();
}

std::string generate_human_template(const SubjectSpec& subject, const TemplateMapping& mapping) {
  return emit_model(build_human_template(subject, mapping));
}

}  // namespace mapdyn
