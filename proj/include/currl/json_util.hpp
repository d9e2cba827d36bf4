#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "currl/task.hpp"

namespace currl {

/// Helpers for strict config parsing.  All loaders reject unknown keys and
/// report errors with a JSON-pointer-style path, so a typo in a spec file
/// fails loudly instead of silently falling back to a default.

inline void expect_object(const nlohmann::json& j, const std::string& path) {
    if (!j.is_object()) throw ConfigError(path + ": expected an object");
}

inline void expect_array(const nlohmann::json& j, const std::string& path) {
    if (!j.is_array()) throw ConfigError(path + ": expected an array");
}

/// Rejects keys outside `allowed`.  Call once per object level.
inline void check_keys(const nlohmann::json& j, const std::string& path,
                       std::initializer_list<const char*> allowed) {
    expect_object(j, path);
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                known = true;
                break;
            }
        if (!known) throw ConfigError(path + ": unknown key '" + it.key() + "'");
    }
}

namespace detail {

inline const char* json_type_name(const nlohmann::json& j) {
    if (j.is_string()) return "string";
    if (j.is_boolean()) return "boolean";
    if (j.is_number()) return "number";
    if (j.is_array()) return "array";
    if (j.is_object()) return "object";
    if (j.is_null()) return "null";
    return "value";
}

template <typename T>
T convert(const nlohmann::json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw ConfigError(path + ": expected a number, got " + json_type_name(v));
    } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError(path + ": expected a boolean, got " + json_type_name(v));
    } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError(path + ": expected a string, got " + json_type_name(v));
    } else {
        // integral types, including unsigned seeds
        if (!v.is_number_integer() && !v.is_number_unsigned())
            throw ConfigError(path + ": expected an integer, got " + json_type_name(v));
    }
    return v.get<T>();
}

}  // namespace detail

template <typename T>
T req(const nlohmann::json& j, const std::string& path, const char* key) {
    expect_object(j, path);
    auto it = j.find(key);
    if (it == j.end()) throw ConfigError(path + ": missing required key '" + key + "'");
    return detail::convert<T>(*it, path + "." + key);
}

template <typename T>
T opt(const nlohmann::json& j, const std::string& path, const char* key, T fallback) {
    expect_object(j, path);
    auto it = j.find(key);
    if (it == j.end()) return fallback;
    return detail::convert<T>(*it, path + "." + key);
}

inline bool has_key(const nlohmann::json& j, const char* key) {
    return j.is_object() && j.contains(key);
}

/// Converts a byte offset in `text` (e.g. from a JSON parse error) to a
/// 1-based "line N, column M" string for error messages.
inline std::string line_of_offset(const std::string& text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace currl
