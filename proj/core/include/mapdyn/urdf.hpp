#pragma once

#include <string>
#include <string_view>

#include "mapdyn/model.hpp"

namespace mapdyn {

// Parses the URDF subset: <robot>, <link> (inertial, visual box | cylinder |
// sphere), revolute or continuous <joint> and the <sensor> extension
// (accelerometer | gyroscope) with <parent link> and <origin xyz rpy>.
// Element order is free; the root is the link that is nobody's child. Links
// named "<name>_f<k>" are marked as dummy links. Errors are ModelError with
// the offending element path.
KinematicTreeModel parse_model(std::string_view document);
KinematicTreeModel load_model(const std::string& path);

// Writes a document that parse_model reads back to an equal model.
std::string emit_model(const KinematicTreeModel& model);

// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

}  // namespace mapdyn
