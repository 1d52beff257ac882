#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "coachai/json_support.hpp"
#include "coachai/time.hpp"

namespace coachai {

struct OutboundMessage {
    std::string chat_id;
    std::string text;
    std::vector<std::string> keyboard;  // empty = no reply keyboard
    std::string correlation_id;

    friend bool operator==(const OutboundMessage&, const OutboundMessage&) = default;
};

struct InboundMessage {
    std::string chat_id;
    std::string text;
    Timestamp received_at{};
    std::int64_t update_id = 0;

    friend bool operator==(const InboundMessage&, const InboundMessage&) = default;
};

inline void to_json(Json& j, const OutboundMessage& m) {
    j = Json{{"chat_id", m.chat_id}, {"text", m.text}, {"keyboard", m.keyboard}, {"correlation_id", m.correlation_id}};
}

inline void from_json(const Json& j, OutboundMessage& m) {
    m.chat_id = require_field<std::string>(j, "chat_id");
    m.text = require_field<std::string>(j, "text");
    m.keyboard = j.value("keyboard", std::vector<std::string>{});
    m.correlation_id = j.value("correlation_id", "");
}

inline void to_json(Json& j, const InboundMessage& m) {
    j = Json{{"chat_id", m.chat_id}, {"text", m.text}, {"received_at", m.received_at}, {"update_id", m.update_id}};
}

inline void from_json(const Json& j, InboundMessage& m) {
    m.chat_id = require_field<std::string>(j, "chat_id");
    m.text = require_field<std::string>(j, "text");
    m.received_at = require_field<Timestamp>(j, "received_at");
    m.update_id = require_field<std::int64_t>(j, "update_id");
}

}  // namespace coachai
