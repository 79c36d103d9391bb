#include "io.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

#include "mapdyn/errors.hpp"
#include "mapdyn/urdf.hpp"

namespace mapdyn::cli {

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_number(const std::string& text, const std::string& where) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  while (first < last && *first == ' ') ++first;
  while (last > first && (last[-1] == ' ' || last[-1] == '\r')) --last;
  if (last - first == 3 && std::string(first, last) == "nan") return std::numeric_limits<double>::quiet_NaN();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) throw InputError(where + ": malformed number '" + text + "'");
  return v;
}

const char* shape_name(TemplateShape s) {
  switch (s) {
    case TemplateShape::kBox:
      return "box";
    case TemplateShape::kCylinder:
      return "cylinder";
    case TemplateShape::kSphere:
      return "sphere";
  }
  return "box";
}

TemplateShape shape_from(const std::string& s) {
  if (s == "box") return TemplateShape::kBox;
  if (s == "cylinder") return TemplateShape::kCylinder;
  if (s == "sphere") return TemplateShape::kSphere;
  throw InputError("template mapping: unknown shape '" + s + "'");
}

json limit_json(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double limit_from(const json& j, double unbounded) { return j.is_null() ? unbounded : j.get<double>(); }

}  // namespace

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t k = 0; k < header.size(); ++k) {
    if (header[k] == name) return k;
  }
  throw MissingChannelError("CSV column '" + name + "' is missing");
}

bool CsvTable::has_column(const std::string& name) const {
  for (const auto& h : header) {
    if (h == name) return true;
  }
  return false;
}

Eigen::VectorXd CsvTable::row_segment(std::size_t row, const std::vector<std::size_t>& columns) const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(columns.size()));
  for (std::size_t k = 0; k < columns.size(); ++k) v(static_cast<Eigen::Index>(k)) = rows.at(row).at(columns[k]);
  return v;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open CSV file '" + path + "'");
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw InputError(path + ": empty CSV file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  t.header = split(line);
  std::size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line);
    const std::string where = path + ":" + std::to_string(number);
    if (cells.size() != t.header.size()) {
      throw InputError(where + ": expected " + std::to_string(t.header.size()) + " values, found " +
                       std::to_string(cells.size()));
    }
    std::vector<double> row(cells.size());
    for (std::size_t k = 0; k < cells.size(); ++k) row[k] = parse_number(cells[k], where);
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header)
    : out_(path), columns_(header.size()), path_(path) {
  if (!out_) throw InputError("cannot write '" + path + "'");
  for (std::size_t k = 0; k < header.size(); ++k) out_ << (k ? "," : "") << header[k];
  out_ << '\n';
}

void CsvWriter::row(double t, const Eigen::VectorXd& values) {
  if (static_cast<std::size_t>(values.size()) + 1 != columns_) {
    throw InputError(path_ + ": row has " + std::to_string(values.size() + 1) + " values for " +
                     std::to_string(columns_) + " columns");
  }
  out_ << format_double(t);
  for (Eigen::Index k = 0; k < values.size(); ++k) out_ << ',' << format_double(values(k));
  out_ << '\n';
}

void CsvWriter::row(const std::vector<double>& values) {
  if (values.size() != columns_) throw InputError(path_ + ": row length does not match the header");
  for (std::size_t k = 0; k < values.size(); ++k) out_ << (k ? "," : "") << format_double(values[k]);
  out_ << '\n';
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << text;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json read_json(const std::string& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw InputError(path + ": " + e.what());
  }
}

void write_json(const std::string& path, const json& document) { write_text(path, document.dump(2) + "\n"); }

json mapping_to_json(const TemplateMapping& mapping) {
  json links = json::array();
  for (const auto& l : mapping.links) {
    links.push_back({{"name", l.name},
                     {"mass_fraction", l.mass_fraction},
                     {"shape", shape_name(l.shape)},
                     {"from", l.from},
                     {"to", l.to},
                     {"ratios", l.ratios},
                     {"has_imu", l.has_imu}});
  }
  json joints = json::array();
  for (const auto& j : mapping.joints) {
    json axes = json::array();
    for (const auto& a : j.axes) {
      axes.push_back({{"axis", std::string(1, a.axis)},
                      {"lower", limit_json(a.limits.lower)},
                      {"upper", limit_json(a.limits.upper)}});
    }
    joints.push_back(
        {{"name", j.name}, {"proximal", j.proximal}, {"distal", j.distal}, {"center", j.center}, {"axes", axes}});
  }
  return {{"model_name", mapping.model_name},
          {"root", mapping.root},
          {"root_origin", mapping.root_origin},
          {"links", links},
          {"joints", joints}};
}

TemplateMapping mapping_from_json(const json& document) {
  try {
    TemplateMapping m;
    m.model_name = document.at("model_name").get<std::string>();
    m.root = document.at("root").get<std::string>();
    m.root_origin = document.at("root_origin").get<std::string>();
    for (const auto& l : document.at("links")) {
      TemplateLinkSpec s;
      s.name = l.at("name").get<std::string>();
      s.mass_fraction = l.at("mass_fraction").get<double>();
      s.shape = shape_from(l.at("shape").get<std::string>());
      s.from = l.at("from").get<std::string>();
      s.to = l.at("to").get<std::string>();
      s.ratios = l.at("ratios").get<std::vector<double>>();
      s.has_imu = l.value("has_imu", false);
      m.links.push_back(std::move(s));
    }
    for (const auto& j : document.at("joints")) {
      TemplateJointSpec s;
      s.name = j.at("name").get<std::string>();
      s.proximal = j.at("proximal").get<std::string>();
      s.distal = j.at("distal").get<std::string>();
      s.center = j.at("center").get<std::string>();
      for (const auto& a : j.at("axes")) {
        const std::string axis = a.at("axis").get<std::string>();
        if (axis != "x" && axis != "y" && axis != "z") throw InputError("template mapping: axis must be x, y or z");
        s.axes.push_back({axis[0],
                          JointLimits{limit_from(a.value("lower", json()), -std::numeric_limits<double>::infinity()),
                                      limit_from(a.value("upper", json()), std::numeric_limits<double>::infinity())}});
      }
      m.joints.push_back(std::move(s));
    }
    return m;
  } catch (const json::exception& e) {
    throw InputError(std::string("template mapping: ") + e.what());
  }
}

json subject_to_json(const SubjectSpec& subject) {
  json landmarks = json::object();
  for (const auto& [name, p] : subject.landmarks) landmarks[name] = {p.x(), p.y(), p.z()};
  return {{"total_mass", subject.total_mass}, {"landmarks", landmarks}};
}

SubjectSpec subject_from_json(const json& document) {
  try {
    SubjectSpec s;
    s.total_mass = document.at("total_mass").get<double>();
    for (const auto& [name, p] : document.at("landmarks").items()) {
      const auto v = p.get<std::vector<double>>();
      if (v.size() != 3) throw InputError("subject: landmark '" + name + "' needs three coordinates");
      s.landmarks[name] = Vec3(v[0], v[1], v[2]);
    }
    return s;
  } catch (const json::exception& e) {
    throw InputError(std::string("subject: ") + e.what());
  }
}

}  // namespace mapdyn::cli
