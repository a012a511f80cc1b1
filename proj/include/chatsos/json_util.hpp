#pragma once

#include <string>

#include <nlohmann/json.hpp>

namespace chatsos {

using Json = nlohmann::json;

/// Serializes with invalid UTF-8 replaced instead of throwing.
inline std::string dump_json(const Json& j, int indent = -1) {
  return j.dump(indent, ' ', false, Json::error_handler_t::replace);
}

}  // namespace chatsos
