#include "mapdyn/urdf.hpp"

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <charconv>
#include <cmath>
#include <fstream>
#include <regex>
#include <sstream>

#include "mapdyn/errors.hpp"

namespace mapdyn {

namespace pt = boost::property_tree;

namespace {

struct Element {
  const pt::ptree& tree;
  std::string path;

  std::optional<std::string> attr(const std::string& name) const {
    if (auto a = tree.get_child_optional("<xmlattr>." + name)) return a->data();
    return std::nullopt;
  }

  std::string required_attr(const std::string& name) const {
    if (auto a = attr(name)) return *a;
    throw ModelError(path + ": missing attribute '" + name + "'");
  }

  std::optional<Element> child(const std::string& tag) const {
    if (auto c = tree.get_child_optional(tag)) return Element{*c, path + "/" + tag};
    return std::nullopt;
  }

  Element required_child(const std::string& tag) const {
    if (auto c = child(tag)) return *c;
    throw ModelError(path + ": missing element <" + tag + ">");
  }
};

std::vector<double> parse_numbers(const std::string& text, const std::string& where) {
  std::vector<double> out;
  const char* p = text.data();
  const char* end = p + text.size();
  while (p < end) {
    while (p < end && std::isspace(static_cast<unsigned char>(*p))) ++p;
    if (p == end) break;
    double v = 0.0;
    const char* start = p;
    if (*p == '+') ++p;
    auto [next, ec] = std::from_chars(p, end, v);
    if (ec != std::errc() || (next < end && !std::isspace(static_cast<unsigned char>(*next)))) {
      const char* stop = start;
      while (stop < end && !std::isspace(static_cast<unsigned char>(*stop))) ++stop;
      throw ModelError(where + ": malformed number '" + std::string(start, stop) + "'");
    }
    if (!std::isfinite(v)) throw ModelError(where + ": non-finite number");
    out.push_back(v);
    p = next;
  }
  return out;
}

double parse_scalar(const Element& e, const std::string& name) {
  const std::string where = e.path + "@" + name;
  const auto v = parse_numbers(e.required_attr(name), where);
  if (v.size() != 1) throw ModelError(where + ": expected one number");
  return v.front();
}

std::optional<double> parse_optional_scalar(const Element& e, const std::string& name) {
  if (!e.attr(name)) return std::nullopt;
  return parse_scalar(e, name);
}

Vec3 parse_vec3(const Element& e, const std::string& name, const Vec3& fallback) {
  auto a = e.attr(name);
  if (!a) return fallback;
  const std::string where = e.path + "@" + name;
  const auto v = parse_numbers(*a, where);
  if (v.size() != 3) throw ModelError(where + ": expected three numbers");
  return {v[0], v[1], v[2]};
}

HomTransform parse_origin(const Element& parent) {
  auto o = parent.child("origin");
  if (!o) return HomTransform::identity();
  return HomTransform::from_xyz_rpy(parse_vec3(*o, "xyz", Vec3::Zero()), parse_vec3(*o, "rpy", Vec3::Zero()));
}

bool is_dummy_name(const std::string& name) {
  static const std::regex dummy(".*_f[0-9]+$");
  return std::regex_match(name, dummy);
}

Link parse_link(const Element& e) {
  Link link;
  link.name = e.required_attr("name");
  link.is_dummy = is_dummy_name(link.name);
  if (auto inertial = e.child("inertial")) {
    const double mass = parse_scalar(inertial->required_child("mass"), "value");
    const HomTransform origin = parse_origin(*inertial);
    Mat3 inertia = Mat3::Zero();
    if (auto in = inertial->child("inertia")) {
      auto get = [&](const char* k) { return parse_optional_scalar(*in, k).value_or(0.0); };
      inertia << get("ixx"), get("ixy"), get("ixz"),
                 get("ixy"), get("iyy"), get("iyz"),
                 get("ixz"), get("iyz"), get("izz");
    }
    const Mat3& r = origin.rotation().matrix();
    try {
      link.inertia = SpatialInertia(mass, origin.translation(), r * inertia * r.transpose());
    } catch (const InputError& err) {
      throw ModelError(inertial->path + ": " + err.what());
    }
  }
  if (auto visual = e.child("visual")) {
    const Element geometry = visual->required_child("geometry");
    VisualShape vs{Sphere{1.0}, parse_origin(*visual)};
    if (auto box = geometry.child("box")) {
      const Vec3 size = parse_vec3(*box, "size", Vec3::Zero());
      vs.geometry = Parallelepiped{size.y(), size.z(), size.x()};
    } else if (auto cyl = geometry.child("cylinder")) {
      vs.geometry = Cylinder{parse_scalar(*cyl, "radius"), parse_scalar(*cyl, "length")};
    } else if (auto sph = geometry.child("sphere")) {
      vs.geometry = Sphere{parse_scalar(*sph, "radius")};
    } else {
      throw ModelError(geometry.path + ": expected <box>, <cylinder> or <sphere>");
    }
    link.visual = vs;
  }
  return link;
}

ModelBuilder::JointSpec parse_joint(const Element& e) {
  ModelBuilder::JointSpec j;
  j.name = e.required_attr("name");
  const std::string type = e.required_attr("type");
  if (type != "revolute" && type != "continuous") {
    throw ModelError(e.path + ": unknown joint type '" + type + "' (only revolute and continuous are supported)");
  }
  j.parent = e.required_child("parent").required_attr("link");
  j.child = e.required_child("child").required_attr("link");
  j.origin = parse_origin(e);
  if (auto axis = e.child("axis")) j.axis = parse_vec3(*axis, "xyz", Vec3::UnitX());
  else j.axis = Vec3::UnitX();
  if (type == "revolute") {
    if (auto lim = e.child("limit")) {
      j.limits.lower = parse_optional_scalar(*lim, "lower").value_or(0.0);
      j.limits.upper = parse_optional_scalar(*lim, "upper").value_or(0.0);
    } else {
      throw ModelError(e.path + ": revolute joint requires <limit>");
    }
  }
  return j;
}

ModelBuilder::SensorSpec parse_sensor(const Element& e) {
  ModelBuilder::SensorSpec s;
  s.name = e.required_attr("name");
  const std::string type = e.required_attr("type");
  if (type == "accelerometer") {
    s.type = SensorType::kAccelerometer;
  } else if (type == "gyroscope") {
    s.type = SensorType::kGyroscope;
  } else {
    throw ModelError(e.path + ": unknown sensor type '" + type + "'");
  }
  s.link = e.required_child("parent").required_attr("link");
  s.pose = parse_origin(e);
  return s;
}

}  // namespace

KinematicTreeModel parse_model(std::string_view document) {
  pt::ptree tree;
  try {
    std::istringstream in{std::string(document)};
    pt::read_xml(in, tree, pt::xml_parser::trim_whitespace);
  } catch (const pt::xml_parser_error& err) {
    throw ModelError(std::string("malformed XML: ") + err.what());
  }
  auto robot_tree = tree.get_child_optional("robot");
  if (!robot_tree) throw ModelError("document has no <robot> element");
  const Element robot{*robot_tree, "robot"};

  ModelBuilder builder(robot.attr("name").value_or("model"));
  for (const auto& [tag, child] : robot.tree) {
    if (tag == "link" || tag == "joint" || tag == "sensor") {
      const auto name = child.get_optional<std::string>("<xmlattr>.name");
      const Element e{child, "robot/" + tag + "[" + name.value_or("?") + "]"};
      try {
        if (tag == "link") builder.add_link(parse_link(e));
        else if (tag == "joint") builder.add_joint(parse_joint(e));
        else builder.add_sensor(parse_sensor(e));
      } catch (const InputError& err) {
        const std::string what = err.what();
        if (what.rfind("robot/", 0) == 0) throw;
        throw ModelError(e.path + ": " + what);
      }
    }
  }
  return builder.build();
}

KinematicTreeModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open model file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_model(buffer.str());
}

std::string format_double(double value) {
  if (value == 0.0) return "0";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  (void)ec;
  return std::string(buf, end);
}

namespace {

std::string vec_text(const Vec3& v) {
  return format_double(v.x()) + " " + format_double(v.y()) + " " + format_double(v.z());
}

void write_origin(std::ostringstream& out, const HomTransform& h, const std::string& indent) {
  out << indent << "<origin xyz=\"" << vec_text(h.translation()) << "\" rpy=\""
      << vec_text(h.rotation().rpy()) << "\"/>\n";
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string emit_model(const KinematicTreeModel& model) {
  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<robot name=\"" << xml_escape(model.name()) << "\">\n";
  for (const Link& link : model.links()) {
    out << "  <link name=\"" << xml_escape(link.name) << "\">\n";
    if (link.inertia.mass() > 0.0) {
      const Mat3& i = link.inertia.inertia_com();
      out << "    <inertial>\n";
      out << "      <mass value=\"" << format_double(link.inertia.mass()) << "\"/>\n";
      out << "      <origin xyz=\"" << vec_text(link.inertia.com()) << "\" rpy=\"0 0 0\"/>\n";
      out << "      <inertia ixx=\"" << format_double(i(0, 0)) << "\" iyy=\"" << format_double(i(1, 1))
          << "\" izz=\"" << format_double(i(2, 2)) << "\" ixy=\"" << format_double(i(0, 1)) << "\" ixz=\""
          << format_double(i(0, 2)) << "\" iyz=\"" << format_double(i(1, 2)) << "\"/>\n";
      out << "    </inertial>\n";
    }
    if (link.visual) {
      out << "    <visual>\n";
      write_origin(out, link.visual->origin, "      ");
      out << "      <geometry>\n";
      if (auto* b = std::get_if<Parallelepiped>(&link.visual->geometry)) {
        out << "        <box size=\"" << vec_text(Vec3(b->depth, b->width, b->height)) << "\"/>\n";
      } else if (auto* c = std::get_if<Cylinder>(&link.visual->geometry)) {
        out << "        <cylinder radius=\"" << format_double(c->radius) << "\" length=\""
            << format_double(c->length) << "\"/>\n";
      } else {
        out << "        <sphere radius=\"" << format_double(std::get<Sphere>(link.visual->geometry).radius)
            << "\"/>\n";
      }
      out << "      </geometry>\n";
      out << "    </visual>\n";
    }
    out << "  </link>\n";
  }
  for (const Joint& j : model.joints()) {
    const bool continuous = std::isinf(j.limits.lower) && std::isinf(j.limits.upper);
    out << "  <joint name=\"" << xml_escape(j.name) << "\" type=\"" << (continuous ? "continuous" : "revolute")
        << "\">\n";
    write_origin(out, j.origin, "    ");
    out << "    <parent link=\"" << xml_escape(model.link(j.parent).name) << "\"/>\n";
    out << "    <child link=\"" << xml_escape(model.link(j.child).name) << "\"/>\n";
    out << "    <axis xyz=\"" << vec_text(j.axis) << "\"/>\n";
    if (!continuous) {
      out << "    <limit effort=\"30\" velocity=\"1.0\" lower=\"" << format_double(j.limits.lower)
          << "\" upper=\"" << format_double(j.limits.upper) << "\"/>\n";
    }
    out << "  </joint>\n";
  }
  for (const SensorAttachment& s : model.sensors()) {
    out << "  <sensor name=\"" << xml_escape(s.name) << "\" type=\""
        << (s.type == SensorType::kAccelerometer ? "accelerometer" : "gyroscope") << "\">\n";
    out << "    <parent link=\"" << xml_escape(model.link(s.link).name) << "\"/>\n";
    write_origin(out, s.pose, "    ");
    out << "  </sensor>\n";
  }
  out << "</robot>\n";
  return out.str();
}

}  // namespace mapdyn
