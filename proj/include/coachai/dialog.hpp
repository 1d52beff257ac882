#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "coachai/json_support.hpp"
#include "coachai/messages.hpp"
#include "coachai/time.hpp"

namespace coachai::dialog {

// Makes the enum wire-name serializers visible to ADL for this namespace.
using coachai::from_json;
using coachai::to_json;

enum class InputKind { none, choice, numeric, scale, free_text };

// A state's answer classes. Choice states map each label to a target;
// numeric/scale/free-text states have a single "any valid answer" target.
struct Transition {
    std::string answer;  // choice label, or empty for "any valid"
    std::string target;

    friend bool operator==(const Transition&, const Transition&) = default;
};

struct StateSpec {
    std::string state_id;
    std::string prompt_template;
    std::optional<std::string> reprompt_text;
    InputKind input = InputKind::none;
    double min = 0.0;  // numeric/scale bounds, inclusive
    double max = 0.0;
    std::optional<std::string> capture;
    std::vector<Transition> transitions;

    std::vector<std::string> labels() const;
    friend bool operator==(const StateSpec&, const StateSpec&) = default;
};

struct DialogDefinition {
    std::string dialog_id;
    std::string entry_state;
    std::vector<StateSpec> states;  // declaration order
    std::set<std::string> terminal_states;
    std::set<std::string> required_captures;

    const StateSpec* find(std::string_view state_id) const;
    bool is_terminal(std::string_view state_id) const { return terminal_states.count(std::string(state_id)) > 0; }

    friend bool operator==(const DialogDefinition&, const DialogDefinition&) = default;
};

// Parses the line-oriented dialog DSL. Throws ParseError with line/column.
DialogDefinition parse_dialog(std::string_view source);

// Canonical text form; parse_dialog(render_dialog(d)) == d.
std::string render_dialog(const DialogDefinition& def);

enum class DefectRule {
    unreachable,
    dead_end,
    terminal_unreachable_from,
    missing_capture,
    terminal_has_transitions,
    unresolved_placeholder,  // warning only
};

enum class Severity { error, warning };

struct Defect {
    DefectRule rule;
    std::string state_id;
    std::string detail;
    Severity severity = Severity::error;

    std::string describe() const;
    friend bool operator==(const Defect&, const Defect&) = default;
};

// Graph and capture checks. Empty iff the definition is runnable.
std::vector<Defect> validate(const DialogDefinition& def);

// Placeholders that name neither a capture of this dialog nor one of the
// context variables the caller will supply. Warnings only.
std::vector<Defect> lint_placeholders(const DialogDefinition& def, const std::set<std::string>& context_vars);

using Value = std::variant<double, std::string>;
using Variables = std::map<std::string, Value>;

std::string value_text(const Value& v);

enum class SessionStatus { active, completed, abandoned };

struct HistoryEntry {
    std::string state;
    std::string inbound;
    Timestamp at{};
    std::string event;  // "input", "invalid", "abandoned", "skipped", "superseded"

    friend bool operator==(const HistoryEntry&, const HistoryEntry&) = default;
};

struct DialogSession {
    std::string session_id;
    std::string user_id;
    std::string chat_id;
    std::string dialog_id;
    std::string current_state;
    Variables variables;                         // captures
    std::map<std::string, std::string> context;  // render-only values (user name, activity title, ...)
    int attempt_count = 0;
    std::vector<HistoryEntry> history;
    SessionStatus status = SessionStatus::active;
    Timestamp last_activity_at{};
    int step = 0;  // outbound counter, feeds correlation ids

    friend bool operator==(const DialogSession&, const DialogSession&) = default;
};

struct CompletionEvent {
    std::string session_id;
    std::string user_id;
    std::string dialog_id;
    Variables variables;
    std::map<std::string, std::string> context;
    Timestamp completed_at{};
};

struct EscalationRecord {
    std::string session_id;
    std::string user_id;
    std::string state_id;
    int attempts = 0;
    Timestamp at{};
};

struct StepResult {
    DialogSession session;
    std::vector<OutboundMessage> messages;
    std::optional<CompletionEvent> completion;
    std::optional<EscalationRecord> escalation;
};

struct SessionStart {
    std::string session_id;
    std::string user_id;
    std::string chat_id;
    std::map<std::string, std::string> context;
};

struct EngineOptions {
    int max_attempts = 3;
    Duration idle_limit = std::chrono::hours{24};
};

// Substitutes {name} placeholders; unknown names are kept literally.
std::string render_template(std::string_view text, const std::map<std::string, std::string>& context,
                            const Variables& variables);

class Engine {
public:
    explicit Engine(EngineOptions options = {}) : options_(options) {}

    const EngineOptions& options() const noexcept { return options_; }

    // Refuses definitions with defects.
    StepResult start_session(const DialogDefinition& def, const SessionStart& start, Timestamp now) const;

    // Throws invalid_state for sessions that are not active.
    StepResult advance(const DialogSession& session, const InboundMessage& inbound, const DialogDefinition& def,
                       Timestamp now) const;

    // Marks idle active sessions abandoned; returns the ones it changed.
    std::vector<DialogSession> expire_sessions(std::span<DialogSession> sessions, Timestamp now,
                                               Duration idle_limit) const;

    // Answers accepted in `state` for input `text` (used by tests and the
    // participant simulator). Empty optional = invalid.
    static std::optional<std::pair<Value, std::string>> interpret(const StateSpec& state, std::string_view text);

private:
    OutboundMessage prompt_for(const StateSpec& state, DialogSession& session, bool reprompt) const;

    EngineOptions options_;
};

void to_json(Json& j, const Value& v);
void from_json(const Json& j, Value& v);
void to_json(Json& j, const DialogSession& s);
void from_json(const Json& j, DialogSession& s);
void to_json(Json& j, const Defect& d);

}  // namespace coachai::dialog

namespace coachai {

template <> struct EnumNames<dialog::SessionStatus> {
    static constexpr std::array values{std::pair{dialog::SessionStatus::active, "active"},
                                       std::pair{dialog::SessionStatus::completed, "completed"},
                                       std::pair{dialog::SessionStatus::abandoned, "abandoned"}};
};

template <> struct EnumNames<dialog::DefectRule> {
    static constexpr std::array values{
        std::pair{dialog::DefectRule::unreachable, "unreachable"},
        std::pair{dialog::DefectRule::dead_end, "dead-end"},
        std::pair{dialog::DefectRule::terminal_unreachable_from, "terminal-unreachable-from"},
        std::pair{dialog::DefectRule::missing_capture, "missing-capture"},
        std::pair{dialog::DefectRule::terminal_has_transitions, "terminal-has-transitions"},
        std::pair{dialog::DefectRule::unresolved_placeholder, "unresolved-placeholder"}};
};

}  // namespace coachai
