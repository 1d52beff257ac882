#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>

#include "coachai/dialog.hpp"
#include "coachai/gateway.hpp"
#include "coachai/service.hpp"
#include "test_support.hpp"

namespace coachai::testing {

// Monday of the first study week.
inline const Timestamp kStart = at(make_date(2024, 1, 1), TimeOfDay::hm(9, 0));

struct Harness {
    explicit Harness(service::ServiceOptions options = {}, Timestamp start = kStart)
        : console(std::make_shared<gateway::ConsoleChannel>()),
          svc(std::make_unique<service::CoachService>(std::move(options), console, Clock::simulated(start))) {}

    std::shared_ptr<gateway::ConsoleChannel> console;
    std::unique_ptr<service::CoachService> svc;

    UserProfile register_user(const std::string& id, int age = 34) {
        service::RegistrationRequest r;
        r.user_id = id;
        r.display_name = "Participant " + id;
        r.age = age;
        return svc->register_user(r);
    }

    std::optional<dialog::DialogSession> active_session(const UserId& user) const {
        for (auto& s : svc->sessions(user))
            if (s.status == dialog::SessionStatus::active)
                return s;
        return std::nullopt;
    }

    void say(const UserId& user, const std::string& text) {
        console->inject(user, text, svc->now());
        svc->process_inbound();
    }

    // Answers every prompt of the user's active sessions: captures named in
    // `answers` get that value, other states the first offered label.
    // Stops when no session is active or after `limit` replies.
    int answer_all(const UserId& user, const std::map<std::string, std::string>& answers, int limit = 200) {
        int replies = 0;
        while (replies < limit) {
            auto s = active_session(user);
            if (!s)
                break;
            const auto& def = svc->dialog_definition(s->dialog_id);
            const auto* state = def.find(s->current_state);
            if (!state)
                break;
            std::string text;
            if (state->capture && answers.count(*state->capture))
                text = answers.at(*state->capture);
            else if (!state->labels().empty())
                text = state->labels().front();
            else
                break;
            say(user, text);
            ++replies;
        }
        return replies;
    }

    // Runs intake plus the intake questionnaire with the fixture answers.
    void complete_intake(const UserId& user) {
        std::map<std::string, std::string> answers;
        const Json fixture = Json::parse(read_fixture("intake_answers.json"));
        for (auto it = fixture.begin(); it != fixture.end(); ++it)
            answers[it.key()] = it.value().dump();
        answer_all(user, answers);
    }

    std::size_t alert_count(service::AlertKind kind, const std::optional<UserId>& user = std::nullopt) const {
        std::size_t n = 0;
        for (const auto& a : svc->alerts())
            if (a.kind == kind && (!user || a.user_id == *user))
                ++n;
        return n;
    }
};

}  // namespace coachai::testing
