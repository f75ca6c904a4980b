// SPDX-License-Identifier: Apache-2.0
#ifndef SPKSIM_CONFIG_JSON_HPP
#define SPKSIM_CONFIG_JSON_HPP

#include <initializer_list>
#include <string>
#include <string_view>
#include <type_traits>

#include "json.hpp"

#include "spksim/error.hpp"

namespace spksim::config {

using json = nlohmann::json;

/// Rejects keys outside `allowed` so that typos in config files fail loudly.
inline void check_keys(const json& j, std::string_view section, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) {
    throw Error(ErrorCode::invalid_config, "section '" + std::string(section) + "' must be an object");
  }
  for (const auto& item : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || item.key() == a;
    if (!ok) {
      throw Error(ErrorCode::invalid_config,
                  "unknown key '" + item.key() + "' in section '" + std::string(section) + "'");
    }
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
      if (it->is_number_integer() && it->template get<long long>() < 0) {
        throw Error(ErrorCode::invalid_config, std::string("'") + key + "' must be non-negative");
      }
      if (!it->is_number_integer()) {
        throw Error(ErrorCode::invalid_config, std::string("'") + key + "' must be an integer");
      }
    }
    out = it->template get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::invalid_config, std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace spksim::config

#endif  // SPKSIM_CONFIG_JSON_HPP
