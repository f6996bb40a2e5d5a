#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <variant>

#include <json.hpp>

#include "autotab/error.hpp"

namespace autotab {

using json = nlohmann::json;

/// A hyperparameter value: integer, real or categorical label.
using ParamValue = std::variant<std::int64_t, double, std::string>;
using Params = std::map<std::string, ParamValue>;

inline double get_real(const Params& params, const std::string& name, double fallback) {
    const auto it = params.find(name);
    if (it == params.end()) return fallback;
    if (const auto* v = std::get_if<double>(&it->second)) return *v;
    if (const auto* v = std::get_if<std::int64_t>(&it->second)) return static_cast<double>(*v);
    fail(ErrorKind::config, "hyperparameter '" + name + "' is not numeric");
}

inline std::int64_t get_int(const Params& params, const std::string& name, std::int64_t fallback) {
    const auto it = params.find(name);
    if (it == params.end()) return fallback;
    if (const auto* v = std::get_if<std::int64_t>(&it->second)) return *v;
    if (const auto* v = std::get_if<double>(&it->second)) {
        require(*v == std::floor(*v), ErrorKind::config, "hyperparameter '" + name + "' must be an integer");
        return static_cast<std::int64_t>(*v);
    }
    fail(ErrorKind::config, "hyperparameter '" + name + "' is not numeric");
}

inline std::string get_text(const Params& params, const std::string& name, const std::string& fallback) {
    const auto it = params.find(name);
    if (it == params.end()) return fallback;
    if (const auto* v = std::get_if<std::string>(&it->second)) return *v;
    fail(ErrorKind::config, "hyperparameter '" + name + "' is not categorical");
}

inline json params_to_json(const Params& params) {
    json j = json::object();
    for (const auto& [name, value] : params) {
        std::visit([&](const auto& v) { j[name] = v; }, value);
    }
    return j;
}

inline Params params_from_json(const json& j) {
    Params params;
    for (const auto& [name, value] : j.items()) {
        if (value.is_number_integer()) {
            params[name] = value.get<std::int64_t>();
        } else if (value.is_number()) {
            params[name] = value.get<double>();
        } else if (value.is_string()) {
            params[name] = value.get<std::string>();
        } else {
            fail(ErrorKind::format, "hyperparameter '" + name + "' has an unsupported type");
        }
    }
    return params;
}

}  // namespace autotab
