#pragma once

#include <algorithm>
#include <initializer_list>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace vila::detail {

inline void reject_unknown_keys(const nlohmann::json& j,
                                std::initializer_list<const char*> allowed,
                                const std::string& context) {
    if (!j.is_object()) throw std::invalid_argument(context + ": expected a JSON object");
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (std::find_if(allowed.begin(), allowed.end(),
                         [&](const char* a) { return key == a; }) == allowed.end())
            throw std::invalid_argument(context + ": unknown field '" + key + "'");
    }
}

}  // namespace vila::detail
