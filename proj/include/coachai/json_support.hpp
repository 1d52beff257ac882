#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "coachai/enum_text.hpp"
#include "coachai/time.hpp"

namespace nlohmann {

template <>
struct adl_serializer<coachai::Timestamp> {
    static void to_json(json& j, const coachai::Timestamp& ts) { j = coachai::format_timestamp(ts); }
    static void from_json(const json& j, coachai::Timestamp& ts) {
        ts = coachai::parse_timestamp(j.get<std::string>());
    }
};

template <>
struct adl_serializer<coachai::Date> {
    static void to_json(json& j, const coachai::Date& d) { j = coachai::format_date(d); }
    static void from_json(const json& j, coachai::Date& d) { d = coachai::parse_date(j.get<std::string>()); }
};

}  // namespace nlohmann

namespace coachai {

using Json = nlohmann::json;

inline void to_json(Json& j, const TimeOfDay& tod) { j = format_time_of_day(tod); }
inline void from_json(const Json& j, TimeOfDay& tod) { tod = parse_time_of_day(j.get<std::string>()); }

// Absent keys and nulls both read as nullopt.
template <typename T>
std::optional<T> get_optional(const Json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null())
        return std::nullopt;
    return it->template get<T>();
}

template <typename T>
void put_optional(Json& j, const char* key, const std::optional<T>& value) {
    if (value)
        j[key] = *value;
    else
        j[key] = nullptr;
}

// Reads a required field, turning type/presence failures into domain errors
// that name the field.
template <typename T>
T require_field(const Json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null())
        throw Error(ErrorKind::domain, std::string("missing field '") + key + "'");
    try {
        return it->template get<T>();
    } catch (const nlohmann::json::exception&) {
        throw Error(ErrorKind::domain, std::string("field '") + key + "' has the wrong type");
    }
}

}  // namespace coachai
