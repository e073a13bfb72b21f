#pragma once

#include <initializer_list>
#include <string>
#include <string_view>
#include <type_traits>

#include <nlohmann/json.hpp>

#include "xem/error.hpp"

namespace xem {

// Rejects keys outside `allowed`; strict config parsing.
inline void require_known_keys(const nlohmann::json& obj,
                               std::initializer_list<std::string_view> allowed,
                               std::string_view context) {
  if (!obj.is_object()) {
    throw Error(ErrorCode::kConfig, std::string(context) + " must be a json object");
  }
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || a == key;
    if (!ok) {
      throw Error(ErrorCode::kConfig,
                  "unknown key \"" + key + "\" in " + std::string(context));
    }
  }
}

template <typename T>
T read_number(const nlohmann::json& obj, std::string_view key, T fallback,
              std::string_view context) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  if (!it->is_number()) {
    throw Error(ErrorCode::kConfig,
                std::string(context) + "." + std::string(key) + " must be a number");
  }
  if constexpr (std::is_integral_v<T>) {
    if (!it->is_number_integer() || (std::is_unsigned_v<T> && it->get<long long>() < 0)) {
      throw Error(ErrorCode::kConfig, std::string(context) + "." + std::string(key) +
                                          " must be a non-negative integer");
    }
  }
  return it->get<T>();
}

}  // namespace xem
