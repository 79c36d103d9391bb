#pragma once

#include <Eigen/Core>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mapdyn/human_template.hpp"

namespace mapdyn::cli {

using nlohmann::json;

// Numeric CSV with one header row.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const;  // throws MissingChannelError
  bool has_column(const std::string& name) const;
  Eigen::VectorXd row_segment(std::size_t row, const std::vector<std::size_t>& columns) const;
};

CsvTable read_csv(const std::string& path);

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header);
  void row(double t, const Eigen::VectorXd& values);
  void row(const std::vector<double>& values);

 private:
  std::ofstream out_;
  std::size_t columns_;
  std::string path_;
};

void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);
json read_json(const std::string& path);
void write_json(const std::string& path, const json& document);

json mapping_to_json(const TemplateMapping& mapping);
TemplateMapping mapping_from_json(const json& document);
json subject_to_json(const SubjectSpec& subject);
SubjectSpec subject_from_json(const json& document);

}  // namespace mapdyn::cli
