#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "coachai/domain.hpp"
#include "coachai/json_support.hpp"
#include "coachai/time.hpp"

namespace coachai::scheduler {

using coachai::from_json;
using coachai::to_json;

enum class JobKind {
    plan_notification,
    feedback_collection,
    plan_expiration,
    questionnaire_dispatch,
    coach_followup_reminder,
    inactivity_check,
};

struct RecurrenceRule {
    Duration every{};
    Timestamp until{};  // no occurrence is due after this instant

    friend bool operator==(const RecurrenceRule&, const RecurrenceRule&) = default;
};

struct JobPayload {
    UserId user_id;
    std::optional<AssignmentId> assignment_id;
    std::optional<PlanId> plan_id;
    std::optional<Date> occurrence_date;
    std::optional<std::string> instrument;  // "TAM", "HAPA", "AttrakDiff"
    std::optional<int> week;                // 1-based protocol week
    bool availability = false;              // the one-off "your plan is ready" notification

    friend bool operator==(const JobPayload&, const JobPayload&) = default;
};

struct ScheduledJob {
    std::string job_id;
    JobKind kind = JobKind::plan_notification;
    Timestamp due_at{};
    std::optional<RecurrenceRule> recurrence;
    JobPayload payload;
    bool fired = false;
    std::optional<Timestamp> fired_at;
    bool late = false;
    bool cancelled = false;

    friend bool operator==(const ScheduledJob&, const ScheduledJob&) = default;
};

struct ProtocolOptions {
    int weeks = 4;
    int first_questionnaire_week = 2;
    std::vector<std::string> instruments{"TAM", "HAPA", "AttrakDiff"};
    TimeOfDay dispatch_time = TimeOfDay::hm(18, 0);
    TimeOfDay followup_time = TimeOfDay::hm(19, 0);
};

// End of a plan's window: the last second of its expiration date.
Timestamp plan_end(const Plan& plan);

class Scheduler {
public:
    // Creates the availability notification, daily plan notifications and
    // feedback collections for [max(start, today), expiration], and the
    // expiration job. Throws precondition for inactive or expired assignments.
    std::vector<ScheduledJob> schedule_assignment(const Assignment& assignment, const Plan& plan, Timestamp now);

    // Questionnaire dispatches at the end of weeks first_questionnaire_week..weeks
    // and one coach follow-up reminder per week. Throws conflict for a user
    // who already has a protocol.
    std::vector<ScheduledJob> schedule_study_protocol(const UserId& user, Date start_date,
                                                      const ProtocolOptions& options = {});

    // Recurring check, first due at `first_due`, repeating every `every`.
    ScheduledJob schedule_inactivity_check(const UserId& user, Timestamp first_due, Duration every,
                                           Timestamp until);

    // Cancels unfired jobs of an assignment; returns how many.
    int cancel_assignment(const AssignmentId& assignment_id);

    // Fires every due job once, ordered by (due_at, job_id). Jobs due before
    // the previous tick are flagged late. A recurring job that fires is
    // followed by one successor at its next occurrence after `now`. Throws a
    // domain error on time regression.
    std::vector<ScheduledJob> tick(Timestamp now);

    const std::vector<ScheduledJob>& jobs() const noexcept { return jobs_; }
    std::optional<Timestamp> last_tick() const noexcept { return last_tick_; }
    bool has_protocol(const UserId& user) const { return protocol_users_.count(user) > 0; }

    // Replaces the whole state, e.g. after loading from the store.
    void restore(std::vector<ScheduledJob> jobs, std::optional<Timestamp> last_tick, std::uint64_t next_id);
    std::uint64_t next_id() const noexcept { return next_id_; }

private:
    ScheduledJob& add(JobKind kind, Timestamp due, JobPayload payload);

    std::vector<ScheduledJob> jobs_;
    std::optional<Timestamp> last_tick_;
    std::uint64_t next_id_ = 1;
    std::set<UserId> protocol_users_;
};

struct InactivityAlert {
    UserId user_id;
    Timestamp reference{};  // last interaction, or registration when there was none
    Duration silent_for{};
    Duration period{};

    friend bool operator==(const InactivityAlert&, const InactivityAlert&) = default;
};

constexpr Duration kDefaultInactivityPeriod = std::chrono::hours{24 * 7};

// Alerts users silent for longer than their period. After an alert the user
// is suppressed until last_interaction_at moves.
class InactivityMonitor {
public:
    std::vector<InactivityAlert> scan(std::span<const UserProfile> users, Timestamp now,
                                      const std::map<UserId, Duration>& periods = {},
                                      Duration default_period = kDefaultInactivityPeriod);

    const std::map<UserId, Timestamp>& suppressed() const noexcept { return alerted_; }
    void restore(std::map<UserId, Timestamp> alerted) { alerted_ = std::move(alerted); }

private:
    std::map<UserId, Timestamp> alerted_;  // user -> reference instant that was alerted
};

void to_json(Json& j, const JobPayload& p);
void from_json(const Json& j, JobPayload& p);
void to_json(Json& j, const ScheduledJob& job);
void from_json(const Json& j, ScheduledJob& job);

}  // namespace coachai::scheduler

namespace coachai {

template <> struct EnumNames<scheduler::JobKind> {
    static constexpr std::array values{
        std::pair{scheduler::JobKind::plan_notification, "plan_notification"},
        std::pair{scheduler::JobKind::feedback_collection, "feedback_collection"},
        std::pair{scheduler::JobKind::plan_expiration, "plan_expiration"},
        std::pair{scheduler::JobKind::questionnaire_dispatch, "questionnaire_dispatch"},
        std::pair{scheduler::JobKind::coach_followup_reminder, "coach_followup_reminder"},
        std::pair{scheduler::JobKind::inactivity_check, "inactivity_check"}};
};

}  // namespace coachai
