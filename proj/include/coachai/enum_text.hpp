#pragma once

#include <array>
#include <string>
#include <string_view>
#include <utility>

#include <json.hpp>

#include "coachai/error.hpp"

namespace coachai {

// Specialize with `static constexpr std::array values{std::pair{E::x, "x"}, ...}`
// to give an enum a wire name.
template <typename E>
struct EnumNames;

template <typename E>
concept NamedEnum = std::is_enum_v<E> && requires { EnumNames<E>::values; };

template <NamedEnum E>
constexpr std::string_view name_of(E value) {
    for (const auto& [v, name] : EnumNames<E>::values)
        if (v == value)
            return name;
    return "?";
}

template <NamedEnum E>
E parse_enum(std::string_view text) {
    for (const auto& [v, name] : EnumNames<E>::values)
        if (name == text)
            return v;
    throw Error(ErrorKind::domain, "unknown value '" + std::string(text) + "'");
}

template <NamedEnum E>
void to_json(nlohmann::json& j, E value) {
    j = std::string(name_of(value));
}

template <NamedEnum E>
void from_json(const nlohmann::json& j, E& value) {
    value = parse_enum<E>(j.get<std::string>());
}

}  // namespace coachai
