#pragma once

// nlohmann::json adapters shared by the library's serializers.

#include <json.hpp>

#include "actmon/network.hpp"

namespace actmon::json_codec {

using nlohmann::json;

json to_json(const Network<double>& net);
Network<double> network_from(const json& j);

json to_json(const Architecture& arch);
Architecture architecture_from(const json& j);

json vector_to_json(const Eigen::Ref<const VectorXd>& v);
VectorXd vector_from(const json& j, const char* what);

/// Parses text, mapping nlohmann errors onto ParseError.
json parse(std::string_view text, const char* what);

}  // namespace actmon::json_codec
