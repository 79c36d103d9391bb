#pragma once

#include <map>
#include <string>
#include <vector>

#include "mapdyn/model.hpp"

namespace mapdyn {

// Anthropometric input: total mass and landmark positions in a T-pose frame
// (x forward, y left, z up, metres). Landmarks are joint centres ("jXXX")
// and extremity points ("pHeadTop", "pRightHandTip", "pRightToeTip",
// "pRightHeel" and their left counterparts).
struct SubjectSpec {
  double total_mass = 0.0;
  std::map<std::string, Vec3> landmarks;
};

enum class TemplateShape { kBox, kCylinder, kSphere };

// One real link of the template. The predominant dimension is the distance
// between `from` and `to`; the centre of mass is their midpoint. `ratios`
// scale the predominant length into the remaining dimensions: box extents
// along the two other axes in x, y, z order; cylinder and sphere radius.
struct TemplateLinkSpec {
  std::string name;
  double mass_fraction = 0.0;
  TemplateShape shape = TemplateShape::kBox;
  std::string from;
  std::string to;
  std::vector<double> ratios;
  bool has_imu = false;
};

struct TemplateAxisSpec {
  char axis = 'x';
  JointLimits limits;
};

// Anatomical joint between a proximal and a distal link, expanded into one
// revolute joint per axis ("<name>_rot<axis>") with dummy links named
// "<distal>_f<k>" between consecutive axes.
struct TemplateJointSpec {
  std::string name;
  std::string proximal;
  std::string distal;
  std::string center;
  std::vector<TemplateAxisSpec> axes;
};

struct TemplateMapping {
  std::string model_name = "XSensStyleModel_template";
  std::string root;
  std::string root_origin;  // landmark placed at the root frame origin
  std::vector<TemplateLinkSpec> links;
  std::vector<TemplateJointSpec> joints;
};

// Built-in mapping: 23 links, 22 anatomical joints, 48 DoF, rooted at the
// left foot. Identical to data/template_mapping.json.
const TemplateMapping& default_template_mapping();

// Reference subject (75.9 kg, about 1.78 m) used by examples and tests.
SubjectSpec reference_subject();

// Throws InputError on non-positive mass and on a missing landmark, naming
// the link or joint that needs it.
KinematicTreeModel build_human_template(const SubjectSpec& subject,
                                        const TemplateMapping& mapping = default_template_mapping());

// XML text of build_human_template.
std::string generate_human_template(const SubjectSpec& subject,
                                    const TemplateMapping& mapping = default_template_mapping());

}  // namespace mapdyn
