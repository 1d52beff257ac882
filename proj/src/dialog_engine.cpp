#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <deque>
#include <map>
#include <regex>

#include "coachai/dialog.hpp"
#include "coachai/error.hpp"

namespace coachai::dialog {

namespace {

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos)
        return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

bool iequals(std::string_view a, std::string_view b) {
    if (a.size() != b.size())
        return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (std::tolower(static_cast<unsigned char>(a[i])) != std::tolower(static_cast<unsigned char>(b[i])))
            return false;
    return true;
}

// Integers and plain decimals only: "12", "-3", "7.5", ".5".
std::optional<double> parse_plain_number(std::string_view text) {
    static const std::regex pattern(R"(^[+-]?(\d+(\.\d*)?|\.\d+)$)");
    const std::string s(text);
    if (!std::regex_match(s, pattern))
        return std::nullopt;
    double v = 0.0;
    const char* first = s.data() + (s[0] == '+' ? 1 : 0);
    auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
    if (ec != std::errc{})
        return std::nullopt;
    return v;
}

std::vector<std::string> placeholders(std::string_view text) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while ((pos = text.find('{', pos)) != std::string_view::npos) {
        const auto close = text.find('}', pos + 1);
        if (close == std::string_view::npos)
            break;
        const auto name = text.substr(pos + 1, close - pos - 1);
        if (!name.empty() && std::all_of(name.begin(), name.end(), [](char c) {
                return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
            }))
            out.emplace_back(name);
        pos = close + 1;
    }
    return out;
}

using Graph = std::map<std::string, std::vector<std::string>>;

Graph successors(const DialogDefinition& def) {
    Graph g;
    for (const auto& s : def.states) {
        auto& out = g[s.state_id];
        for (const auto& t : s.transitions)
            if (std::find(out.begin(), out.end(), t.target) == out.end())
                out.push_back(t.target);
    }
    return g;
}

// BFS from `from`; `blocked(state)` stops expansion out of a state.
template <typename Blocked>
std::set<std::string> reach(const Graph& g, const std::string& from, Blocked blocked) {
    std::set<std::string> seen{from};
    std::deque<std::string> queue{from};
    while (!queue.empty()) {
        auto cur = queue.front();
        queue.pop_front();
        if (blocked(cur))
            continue;
        auto it = g.find(cur);
        if (it == g.end())
            continue;
        for (const auto& next : it->second)
            if (seen.insert(next).second)
                queue.push_back(next);
    }
    return seen;
}

}  // namespace

std::string Defect::describe() const {
    std::string out = std::string(severity == Severity::warning ? "warning: " : "error: ") +
                      std::string(name_of(rule)) + " at state '" + state_id + "'";
    if (!detail.empty())
        out += ": " + detail;
    return out;
}

std::vector<Defect> validate(const DialogDefinition& def) {
    std::vector<Defect> defects;
    const Graph g = successors(def);

    for (const auto& s : def.states) {
        const bool terminal = def.is_terminal(s.state_id);
        if (terminal && !s.transitions.empty())
            defects.push_back({DefectRule::terminal_has_transitions, s.state_id,
                               "terminal states must not declare inputs"});
        if (!terminal && s.transitions.empty())
            defects.push_back({DefectRule::dead_end, s.state_id, "non-terminal state has no transitions"});
    }

    const auto reachable = reach(g, def.entry_state, [](const std::string&) { return false; });
    for (const auto& s : def.states)
        if (!reachable.count(s.state_id))
            defects.push_back({DefectRule::unreachable, s.state_id, "not reachable from '" + def.entry_state + "'"});

    // States that can reach some terminal: reverse BFS from all terminals.
    Graph reverse;
    for (const auto& [from, tos] : g)
        for (const auto& to : tos)
            reverse[to].push_back(from);
    std::set<std::string> can_finish;
    for (const auto& t : def.terminal_states) {
        auto r = reach(reverse, t, [](const std::string&) { return false; });
        can_finish.insert(r.begin(), r.end());
    }
    for (const auto& s : def.states)
        if (!can_finish.count(s.state_id) && !s.transitions.empty())
            defects.push_back({DefectRule::terminal_unreachable_from, s.state_id, "no path to any terminal state"});

    // A required variable is missing if some terminal is reachable without
    // leaving a state that captures it.
    for (const auto& var : def.required_captures) {
        auto captures = [&](const std::string& id) {
            const auto* s = def.find(id);
            return s && s->capture == var && !s->transitions.empty();
        };
        const auto r = reach(g, def.entry_state, captures);
        for (const auto& t : def.terminal_states)
            if (r.count(t))
                defects.push_back({DefectRule::missing_capture, t,
                                   "'" + var + "' can be left uncaptured on a path to this terminal"});
    }
    return defects;
}

std::vector<Defect> lint_placeholders(const DialogDefinition& def, const std::set<std::string>& context_vars) {
    std::set<std::string> known = context_vars;
    for (const auto& s : def.states)
        if (s.capture)
            known.insert(*s.capture);
    std::vector<Defect> out;
    for (const auto& s : def.states) {
        for (const auto* text : {&s.prompt_template, s.reprompt_text ? &*s.reprompt_text : nullptr}) {
            if (!text)
                continue;
            for (const auto& name : placeholders(*text))
                if (!known.count(name))
                    out.push_back({DefectRule::unresolved_placeholder, s.state_id,
                                   "placeholder {" + name + "} has no source", Severity::warning});
        }
    }
    return out;
}

std::string value_text(const Value& v) {
    if (const auto* s = std::get_if<std::string>(&v))
        return *s;
    const double d = std::get<double>(v);
    if (std::isfinite(d) && d == std::floor(d) && std::fabs(d) < 1e15)
        return std::to_string(static_cast<long long>(d));
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, d);
    return std::string(buf, ptr);
}

std::string render_template(std::string_view text, const std::map<std::string, std::string>& context,
                            const Variables& variables) {
    std::string out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const auto open = text.find('{', pos);
        if (open == std::string_view::npos) {
            out.append(text.substr(pos));
            break;
        }
        out.append(text.substr(pos, open - pos));
        const auto close = text.find('}', open + 1);
        if (close == std::string_view::npos) {
            out.append(text.substr(open));
            break;
        }
        const std::string name(text.substr(open + 1, close - open - 1));
        if (auto v = variables.find(name); v != variables.end())
            out += value_text(v->second);
        else if (auto c = context.find(name); c != context.end())
            out += c->second;
        else
            out.append(text.substr(open, close - open + 1));
        pos = close + 1;
    }
    return out;
}

std::optional<std::pair<Value, std::string>> Engine::interpret(const StateSpec& state, std::string_view raw) {
    const std::string text = trim(raw);
    switch (state.input) {
        case InputKind::none:
            return std::nullopt;
        case InputKind::choice:
            for (const auto& t : state.transitions)
                if (iequals(t.answer, text))
                    return std::pair{Value{t.answer}, t.target};
            return std::nullopt;
        case InputKind::numeric: {
            auto v = parse_plain_number(text);
            if (!v || *v < state.min || *v > state.max)
                return std::nullopt;
            return std::pair{Value{*v}, state.transitions.front().target};
        }
        case InputKind::scale: {
            auto v = parse_plain_number(text);
            if (!v || *v != std::floor(*v) || *v < state.min || *v > state.max)
                return std::nullopt;
            return std::pair{Value{*v}, state.transitions.front().target};
        }
        case InputKind::free_text:
            if (text.empty())
                return std::nullopt;
            return std::pair{Value{text}, state.transitions.front().target};
    }
    return std::nullopt;
}

OutboundMessage Engine::prompt_for(const StateSpec& state, DialogSession& session, bool reprompt) const {
    OutboundMessage m;
    m.chat_id = session.chat_id;
    const std::string prompt = render_template(state.prompt_template, session.context, session.variables);
    if (reprompt)
        m.text = state.reprompt_text ? render_template(*state.reprompt_text, session.context, session.variables)
                                     : "Sorry, I didn't get that. " + prompt;
    else
        m.text = prompt;
    if (state.input == InputKind::choice) {
        m.keyboard = state.labels();
    } else if (state.input == InputKind::scale && state.max - state.min <= 10) {
        for (double v = state.min; v <= state.max; v += 1.0)
            m.keyboard.push_back(value_text(v));
    }
    m.correlation_id = session.session_id + ":" + std::to_string(++session.step);
    return m;
}

StepResult Engine::start_session(const DialogDefinition& def, const SessionStart& start, Timestamp now) const {
    if (auto defects = validate(def); !defects.empty())
        throw Error(ErrorKind::precondition,
                    "dialog '" + def.dialog_id + "' has " + std::to_string(defects.size()) +
                        " defect(s); first: " + defects.front().describe());
    StepResult r;
    auto& s = r.session;
    s.session_id = start.session_id;
    s.user_id = start.user_id;
    s.chat_id = start.chat_id;
    s.dialog_id = def.dialog_id;
    s.current_state = def.entry_state;
    s.context = start.context;
    s.last_activity_at = now;
    const StateSpec* entry = def.find(def.entry_state);
    if (!entry->prompt_template.empty())
        r.messages.push_back(prompt_for(*entry, s, false));
    if (def.is_terminal(def.entry_state)) {
        s.status = SessionStatus::completed;
        r.completion = CompletionEvent{s.session_id, s.user_id, s.dialog_id, s.variables, s.context, now};
    }
    return r;
}

StepResult Engine::advance(const DialogSession& session, const InboundMessage& inbound, const DialogDefinition& def,
                           Timestamp now) const {
    if (session.status != SessionStatus::active)
        throw Error(ErrorKind::invalid_state, "session '" + session.session_id + "' is not active");
    if (session.dialog_id != def.dialog_id)
        throw Error(ErrorKind::invalid_state, "session '" + session.session_id + "' belongs to dialog '" +
                                                  session.dialog_id + "'");
    const StateSpec* state = def.find(session.current_state);
    if (!state)
        throw Error(ErrorKind::invalid_state, "session state '" + session.current_state + "' is not declared");

    StepResult r;
    r.session = session;
    auto& s = r.session;
    s.last_activity_at = std::max(s.last_activity_at, now);

    const std::string text = trim(inbound.text);
    if (s.attempt_count >= options_.max_attempts && iequals(text, "skip")) {
        s.history.push_back({s.current_state, inbound.text, now, "skipped"});
        s.status = SessionStatus::abandoned;
        r.messages.push_back({s.chat_id, "Okay, let's skip this for now.", {},
                              s.session_id + ":" + std::to_string(++s.step)});
        return r;
    }

    auto answer = interpret(*state, text);
    if (!answer) {
        s.history.push_back({s.current_state, inbound.text, now, "invalid"});
        ++s.attempt_count;
        r.messages.push_back(prompt_for(*state, s, true));
        if (s.attempt_count == options_.max_attempts) {
            r.messages.push_back({s.chat_id, "If you'd rather not answer, reply \"skip\" and your coach will follow up.",
                                  {"skip"}, s.session_id + ":" + std::to_string(++s.step)});
            r.escalation = EscalationRecord{s.session_id, s.user_id, s.current_state, s.attempt_count, now};
        }
        return r;
    }

    s.history.push_back({s.current_state, inbound.text, now, "input"});
    if (state->capture)
        s.variables[*state->capture] = answer->first;
    s.attempt_count = 0;
    s.current_state = answer->second;
    const StateSpec* next = def.find(s.current_state);
    if (!next->prompt_template.empty())
        r.messages.push_back(prompt_for(*next, s, false));
    if (def.is_terminal(s.current_state)) {
        s.status = SessionStatus::completed;
        r.completion = CompletionEvent{s.session_id, s.user_id, s.dialog_id, s.variables, s.context, now};
    }
    return r;
}

std::vector<DialogSession> Engine::expire_sessions(std::span<DialogSession> sessions, Timestamp now,
                                                   Duration idle_limit) const {
    if (idle_limit <= Duration::zero())
        throw Error(ErrorKind::domain, "idle limit must be positive");
    std::vector<DialogSession> changed;
    for (auto& s : sessions) {
        if (s.status != SessionStatus::active || now - s.last_activity_at <= idle_limit)
            continue;
        s.status = SessionStatus::abandoned;
        s.history.push_back({s.current_state, "", now, "abandoned"});
        changed.push_back(s);
    }
    return changed;
}

// --- serialization ---------------------------------------------------------

void to_json(Json& j, const Value& v) {
    if (const auto* s = std::get_if<std::string>(&v))
        j = *s;
    else
        j = std::get<double>(v);
}

void from_json(const Json& j, Value& v) {
    if (j.is_string())
        v = j.get<std::string>();
    else if (j.is_number())
        v = j.get<double>();
    else
        throw Error(ErrorKind::domain, "dialog variable must be a string or a number");
}

void to_json(Json& j, const DialogSession& s) {
    Json history = Json::array();
    for (const auto& h : s.history)
        history.push_back(Json{{"state", h.state}, {"inbound", h.inbound}, {"at", h.at}, {"event", h.event}});
    Json vars = Json::object();
    for (const auto& [k, v] : s.variables)
        to_json(vars[k], v);
    j = Json{{"session_id", s.session_id},
             {"user_id", s.user_id},
             {"chat_id", s.chat_id},
             {"dialog_id", s.dialog_id},
             {"current_state", s.current_state},
             {"variables", vars},
             {"context", s.context},
             {"attempt_count", s.attempt_count},
             {"history", history},
             {"status", s.status},
             {"last_activity_at", s.last_activity_at},
             {"step", s.step}};
}

void from_json(const Json& j, DialogSession& s) {
    s.session_id = require_field<std::string>(j, "session_id");
    s.user_id = require_field<std::string>(j, "user_id");
    s.chat_id = j.value("chat_id", "");
    s.dialog_id = require_field<std::string>(j, "dialog_id");
    s.current_state = require_field<std::string>(j, "current_state");
    s.variables.clear();
    for (const auto& [k, v] : j.at("variables").items())
        from_json(v, s.variables[k]);
    s.context = j.value("context", std::map<std::string, std::string>{});
    s.attempt_count = j.value("attempt_count", 0);
    s.history.clear();
    for (const auto& h : j.at("history"))
        s.history.push_back({h.at("state").get<std::string>(), h.at("inbound").get<std::string>(),
                             h.at("at").get<Timestamp>(), h.at("event").get<std::string>()});
    s.status = require_field<SessionStatus>(j, "status");
    s.last_activity_at = require_field<Timestamp>(j, "last_activity_at");
    s.step = j.value("step", 0);
}

void to_json(Json& j, const Defect& d) {
    j = Json{{"rule", d.rule},
             {"state", d.state_id},
             {"detail", d.detail},
             {"severity", d.severity == Severity::error ? "error" : "warning"}};
}

}  // namespace coachai::dialog
