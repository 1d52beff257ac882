#include "coachai/scheduler.hpp"

#include <algorithm>
#include <cstdio>

#include "coachai/error.hpp"

namespace coachai::scheduler {

namespace {

std::string job_id_for(std::uint64_t n) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "j%07llu", static_cast<unsigned long long>(n));
    return buf;
}

bool belongs_to_window(JobKind kind) {
    return kind == JobKind::plan_notification || kind == JobKind::feedback_collection;
}

}  // namespace

Timestamp plan_end(const Plan& plan) { return Timestamp{plan.expiration_date + std::chrono::days{1}} - std::chrono::seconds{1}; }

ScheduledJob& Scheduler::add(JobKind kind, Timestamp due, JobPayload payload) {
    ScheduledJob job;
    job.job_id = job_id_for(next_id_++);
    job.kind = kind;
    job.due_at = due;
    job.payload = std::move(payload);
    jobs_.push_back(std::move(job));
    return jobs_.back();
}

std::vector<ScheduledJob> Scheduler::schedule_assignment(const Assignment& assignment, const Plan& plan,
                                                         Timestamp now) {
    if (assignment.status != AssignmentStatus::active)
        throw Error(ErrorKind::precondition, "assignment " + assignment.assignment_id + " is not active");
    if (now > plan_end(plan))
        throw Error(ErrorKind::precondition, "plan " + plan.plan_id + " expired on " +
                                                 format_date(plan.expiration_date));
    JobPayload base;
    base.user_id = assignment.user_id;
    base.assignment_id = assignment.assignment_id;
    base.plan_id = plan.plan_id;

    std::vector<ScheduledJob> created;
    JobPayload ready = base;
    ready.availability = true;
    created.push_back(add(JobKind::plan_notification, now, ready));

    const Date first = std::max(plan.start_date, date_of(now));
    for (Date d = first; d <= plan.expiration_date; d += std::chrono::days{1}) {
        JobPayload p = base;
        p.occurrence_date = d;
        created.push_back(add(JobKind::plan_notification, at(d, plan.trigger_time), p));
    }
    for (Date d = first; d <= plan.expiration_date; d += std::chrono::days{1}) {
        JobPayload p = base;
        p.occurrence_date = d;
        created.push_back(add(JobKind::feedback_collection, at(d, plan.feedback_time), p));
    }
    created.push_back(add(JobKind::plan_expiration, plan_end(plan), base));
    return created;
}

std::vector<ScheduledJob> Scheduler::schedule_study_protocol(const UserId& user, Date start_date,
                                                             const ProtocolOptions& options) {
    if (protocol_users_.count(user))
        throw Error(ErrorKind::conflict, "user " + user + " already has a study protocol");
    protocol_users_.insert(user);
    std::vector<ScheduledJob> created;
    for (int week = 1; week <= options.weeks; ++week) {
        const Date week_end = start_date + std::chrono::days{7 * week - 1};
        if (week >= options.first_questionnaire_week)
            for (const auto& instrument : options.instruments) {
                JobPayload p;
                p.user_id = user;
                p.instrument = instrument;
                p.week = week;
                created.push_back(add(JobKind::questionnaire_dispatch, at(week_end, options.dispatch_time), p));
            }
        JobPayload p;
        p.user_id = user;
        p.week = week;
        created.push_back(add(JobKind::coach_followup_reminder, at(week_end, options.followup_time), p));
    }
    return created;
}

ScheduledJob Scheduler::schedule_inactivity_check(const UserId& user, Timestamp first_due, Duration every,
                                                  Timestamp until) {
    if (every <= Duration::zero())
        throw Error(ErrorKind::precondition, "recurrence interval must be positive");
    JobPayload p;
    p.user_id = user;
    auto& job = add(JobKind::inactivity_check, first_due, p);
    job.recurrence = RecurrenceRule{every, until};
    return job;
}

int Scheduler::cancel_assignment(const AssignmentId& assignment_id) {
    int n = 0;
    for (auto& job : jobs_)
        if (!job.fired && !job.cancelled && job.payload.assignment_id == assignment_id) {
            job.cancelled = true;
            ++n;
        }
    return n;
}

std::vector<ScheduledJob> Scheduler::tick(Timestamp now) {
    if (last_tick_ && now < *last_tick_)
        throw Error(ErrorKind::domain, "tick at " + format_timestamp(now) + " precedes the previous tick at " +
                                           format_timestamp(*last_tick_));
    std::vector<std::size_t> due;
    for (std::size_t i = 0; i < jobs_.size(); ++i)
        if (!jobs_[i].fired && !jobs_[i].cancelled && jobs_[i].due_at <= now)
            due.push_back(i);
    std::sort(due.begin(), due.end(), [&](std::size_t a, std::size_t b) {
        if (jobs_[a].due_at != jobs_[b].due_at)
            return jobs_[a].due_at < jobs_[b].due_at;
        return jobs_[a].job_id < jobs_[b].job_id;
    });

    std::vector<ScheduledJob> fired;
    for (std::size_t i : due) {
        // Indices stay valid: successors are appended after this loop.
        auto& job = jobs_[i];
        if (job.cancelled)
            continue;
        job.fired = true;
        job.fired_at = now;
        job.late = last_tick_ && job.due_at < *last_tick_;
        fired.push_back(job);
        if (job.kind == JobKind::plan_expiration && job.payload.assignment_id)
            for (auto& other : jobs_)
                if (!other.fired && belongs_to_window(other.kind) &&
                    other.payload.assignment_id == job.payload.assignment_id)
                    other.cancelled = true;
    }
    for (const auto& job : fired) {
        if (!job.recurrence)
            continue;
        Timestamp next = job.due_at + job.recurrence->every;
        while (next <= now)
            next += job.recurrence->every;
        if (next > job.recurrence->until)
            continue;
        auto& successor = add(job.kind, next, job.payload);
        successor.recurrence = job.recurrence;
    }
    last_tick_ = now;
    return fired;
}

void Scheduler::restore(std::vector<ScheduledJob> jobs, std::optional<Timestamp> last_tick, std::uint64_t next_id) {
    jobs_ = std::move(jobs);
    last_tick_ = last_tick;
    next_id_ = next_id;
    protocol_users_.clear();
    for (const auto& job : jobs_)
        if (job.kind == JobKind::coach_followup_reminder)
            protocol_users_.insert(job.payload.user_id);
}

std::vector<InactivityAlert> InactivityMonitor::scan(std::span<const UserProfile> users, Timestamp now,
                                                     const std::map<UserId, Duration>& periods,
                                                     Duration default_period) {
    std::vector<InactivityAlert> alerts;
    for (const auto& user : users) {
        auto it = periods.find(user.user_id);
        const Duration period = it == periods.end() ? default_period : it->second;
        if (period <= Duration::zero())
            throw Error(ErrorKind::precondition, "inactivity period for " + user.user_id + " must be positive");
        const Timestamp reference = user.last_interaction_at.value_or(user.registered_at);
        if (now - reference <= period)
            continue;
        auto seen = alerted_.find(user.user_id);
        if (seen != alerted_.end() && seen->second == reference)
            continue;
        alerted_[user.user_id] = reference;
        alerts.push_back({user.user_id, reference, now - reference, period});
    }
    return alerts;
}

void to_json(Json& j, const JobPayload& p) {
    j = Json{{"user_id", p.user_id}, {"availability", p.availability}};
    put_optional(j, "assignment_id", p.assignment_id);
    put_optional(j, "plan_id", p.plan_id);
    put_optional(j, "occurrence_date", p.occurrence_date);
    put_optional(j, "instrument", p.instrument);
    put_optional(j, "week", p.week);
}

void from_json(const Json& j, JobPayload& p) {
    p.user_id = require_field<std::string>(j, "user_id");
    p.availability = j.value("availability", false);
    p.assignment_id = get_optional<std::string>(j, "assignment_id");
    p.plan_id = get_optional<std::string>(j, "plan_id");
    p.occurrence_date = get_optional<Date>(j, "occurrence_date");
    p.instrument = get_optional<std::string>(j, "instrument");
    p.week = get_optional<int>(j, "week");
}

void to_json(Json& j, const ScheduledJob& job) {
    j = Json{{"job_id", job.job_id},
             {"kind", job.kind},
             {"due_at", job.due_at},
             {"payload", job.payload},
             {"fired", job.fired},
             {"late", job.late},
             {"cancelled", job.cancelled}};
    put_optional(j, "fired_at", job.fired_at);
    if (job.recurrence)
        j["recurrence"] = Json{{"every_seconds", job.recurrence->every.count()}, {"until", job.recurrence->until}};
    else
        j["recurrence"] = nullptr;
}

void from_json(const Json& j, ScheduledJob& job) {
    job.job_id = require_field<std::string>(j, "job_id");
    job.kind = require_field<JobKind>(j, "kind");
    job.due_at = require_field<Timestamp>(j, "due_at");
    job.payload = require_field<JobPayload>(j, "payload");
    job.fired = j.value("fired", false);
    job.late = j.value("late", false);
    job.cancelled = j.value("cancelled", false);
    job.fired_at = get_optional<Timestamp>(j, "fired_at");
    job.recurrence.reset();
    if (j.contains("recurrence") && !j.at("recurrence").is_null())
        job.recurrence = RecurrenceRule{Duration{j.at("recurrence").at("every_seconds").get<std::int64_t>()},
                                        j.at("recurrence").at("until").get<Timestamp>()};
}

}  // namespace coachai::scheduler
