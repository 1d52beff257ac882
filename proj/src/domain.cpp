#include "coachai/domain.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "coachai/error.hpp"

namespace coachai {

namespace {

[[noreturn]] void fail(const std::string& what) { throw Error(ErrorKind::domain, what); }

bool matches(Recurrence rule, Date day, Date anchor) {
    const unsigned wd = weekday_index(day);
    switch (rule) {
        case Recurrence::daily: return true;
        case Recurrence::weekly: return wd == weekday_index(anchor);
        case Recurrence::weekdays: return wd >= 1 && wd <= 5;
        case Recurrence::weekends: return wd == 0 || wd == 6;
        case Recurrence::one_shot: return day == anchor;
    }
    return false;
}

}  // namespace

void UserProfile::touch(Timestamp when) {
    if (!last_interaction_at || *last_interaction_at < when)
        last_interaction_at = when;
}

bool Plan::contains(const ActivityId& id) const {
    return std::find(activity_ids.begin(), activity_ids.end(), id) != activity_ids.end();
}

void AdherenceThresholds::check() const {
    if (!(binary > 0.0 && binary < 1.0))
        fail("binary adherence threshold must lie in (0, 1)");
    if (!(ternary_low > 0.0 && ternary_low < ternary_high && ternary_high < 1.0))
        fail("ternary thresholds must satisfy 0 < low < high < 1");
}

void check(const UserProfile& user) {
    if (user.user_id.empty())
        fail("user_id is empty");
    if (user.age < 13 || user.age > 120)
        fail("age must be within [13, 120]");
    if (user.activity_class != ActivityClass::unclassified && !user.intake_complete)
        fail("a classified user must have completed intake");
}

void check(const Activity& activity) {
    if (activity.activity_id.empty())
        fail("activity_id is empty");
    if (activity.title.empty())
        fail("activity title is empty");
    if (activity.effort < 1 || activity.effort > 5)
        fail("activity effort must be within [1, 5]");
}

void check(const Plan& plan) {
    if (plan.plan_id.empty())
        fail("plan_id is empty");
    if (plan.activity_ids.empty())
        fail("plan '" + plan.plan_id + "' has no activities");
    if (plan.expiration_date < plan.start_date)
        fail("plan '" + plan.plan_id + "' expires before it starts");
    if (plan.trigger_time == plan.feedback_time)
        fail("plan '" + plan.plan_id + "' has identical trigger and feedback times");
    for (const auto* tod : {&plan.trigger_time, &plan.feedback_time})
        if (tod->seconds < 0 || tod->seconds >= 86400)
            fail("plan '" + plan.plan_id + "' has a time of day outside [00:00, 24:00)");
}

void check(const TaskBundle& task) {
    if (task.plan_ids.empty())
        fail("task '" + task.task_id + "' has no plans");
    std::set<PlanId> seen;
    for (const auto& id : task.plan_ids)
        if (!seen.insert(id).second)
            fail("task '" + task.task_id + "' lists plan '" + id + "' twice");
}

void check(const FeedbackEntry& entry) {
    if (!(entry.completion >= 0.0 && entry.completion <= 1.0))
        fail("feedback completion must lie in [0, 1]");
}

std::vector<Date> expected_occurrences(const Plan& plan, const Activity& activity) {
    if (!plan.contains(activity.activity_id))
        throw Error(ErrorKind::not_found,
                    "activity '" + activity.activity_id + "' is not part of plan '" + plan.plan_id + "'");
    std::vector<Date> dates;
    for (Date day = plan.start_date; day <= plan.expiration_date; day += std::chrono::days{1})
        if (matches(activity.recurrence, day, plan.start_date))
            dates.push_back(day);
    return dates;
}

TernaryAdherence categorize_ternary(double mean, const AdherenceThresholds& thresholds) {
    if (!(mean >= 0.0 && mean <= 1.0))
        fail("adherence mean must lie in [0, 1]");
    if (mean < thresholds.ternary_low)
        return TernaryAdherence::non_adherent;
    if (mean < thresholds.ternary_high)
        return TernaryAdherence::mild;
    return TernaryAdherence::adherent;
}

BinaryAdherence categorize_binary(double mean, const AdherenceThresholds& thresholds) {
    if (!(mean >= 0.0 && mean <= 1.0))
        fail("adherence mean must lie in [0, 1]");
    return mean >= thresholds.binary ? BinaryAdherence::high : BinaryAdherence::low;
}

AdherenceReport compute_adherence(std::span<const FeedbackEntry> feedback, const Plan& plan,
                                  std::span<const Activity> activities, const AdherenceQuery& query) {
    query.thresholds.check();
    if (activities.empty())
        throw Error(ErrorKind::invalid_plan, "plan '" + plan.plan_id + "' has no activities to measure");

    // Latest recorded entry per (activity, date).
    std::map<std::pair<ActivityId, Date>, const FeedbackEntry*> latest;
    for (const auto& entry : feedback) {
        check(entry);
        if (!plan.contains(entry.activity_id))
            fail("feedback references activity '" + entry.activity_id + "' outside plan '" + plan.plan_id + "'");
        if (entry.occurrence_date < plan.start_date || entry.occurrence_date > plan.expiration_date)
            fail("feedback for " + format_date(entry.occurrence_date) + " lies outside plan '" + plan.plan_id +
                 "'");
        auto& slot = latest[{entry.activity_id, entry.occurrence_date}];
        if (slot == nullptr || slot->recorded_at <= entry.recorded_at)
            slot = &entry;
    }

    AdherenceReport report;
    report.user_id = query.user_id;
    report.assignment_id = query.assignment_id;
    report.computed_at = query.computed_at;

    double pooled = 0.0;
    int count = 0;
    for (const auto& activity : activities) {
        double sum = 0.0;
        int n = 0;
        for (Date day : expected_occurrences(plan, activity)) {
            if (query.as_of && day > *query.as_of)
                break;
            auto it = latest.find({activity.activity_id, day});
            if (it != latest.end())
                sum += it->second->completion;
            ++n;
        }
        if (n > 0)
            report.per_activity_mean[activity.activity_id] = sum / n;
        pooled += sum;
        count += n;
    }
    report.expected_occurrences = count;
    report.overall_mean = count > 0 ? std::clamp(pooled / count, 0.0, 1.0) : 0.0;
    report.binary_category = categorize_binary(report.overall_mean, query.thresholds);
    report.ternary_category = categorize_ternary(report.overall_mean, query.thresholds);
    return report;
}

// --- serialization ---------------------------------------------------------

void to_json(Json& j, const ChannelBinding& v) { j = Json{{"channel", v.channel}, {"chat_id", v.chat_id}}; }
void from_json(const Json& j, ChannelBinding& v) {
    v.channel = require_field<std::string>(j, "channel");
    v.chat_id = require_field<std::string>(j, "chat_id");
}

void to_json(Json& j, const UserProfile& v) {
    j = Json{{"user_id", v.user_id},
             {"display_name", v.display_name},
             {"age", v.age},
             {"gender", v.gender},
             {"locale", v.locale},
             {"registered_at", v.registered_at},
             {"activity_class", v.activity_class},
             {"intake_complete", v.intake_complete}};
    put_optional(j, "phone", v.phone);
    put_optional(j, "channel_binding", v.channel_binding);
    put_optional(j, "last_interaction_at", v.last_interaction_at);
}

void from_json(const Json& j, UserProfile& v) {
    v.user_id = require_field<std::string>(j, "user_id");
    v.display_name = j.value("display_name", "");
    v.phone = get_optional<std::string>(j, "phone");
    v.age = require_field<int>(j, "age");
    v.gender = j.contains("gender") ? j.at("gender").get<Gender>() : Gender::undisclosed;
    v.locale = j.value("locale", "en");
    v.registered_at = require_field<Timestamp>(j, "registered_at");
    v.channel_binding = get_optional<ChannelBinding>(j, "channel_binding");
    v.activity_class = j.contains("activity_class") ? j.at("activity_class").get<ActivityClass>()
                                                    : ActivityClass::unclassified;
    v.intake_complete = j.value("intake_complete", false);
    v.last_interaction_at = get_optional<Timestamp>(j, "last_interaction_at");
}

void to_json(Json& j, const Activity& v) {
    j = Json{{"activity_id", v.activity_id}, {"title", v.title},           {"instructions", v.instructions},
             {"topic", v.topic},             {"recurrence", v.recurrence}, {"effort", v.effort}};
}

void from_json(const Json& j, Activity& v) {
    v.activity_id = require_field<std::string>(j, "activity_id");
    v.title = require_field<std::string>(j, "title");
    v.instructions = j.value("instructions", "");
    v.topic = require_field<Topic>(j, "topic");
    v.recurrence = require_field<Recurrence>(j, "recurrence");
    v.effort = j.value("effort", 1);
}

void to_json(Json& j, const Plan& v) {
    j = Json{{"plan_id", v.plan_id},           {"category", v.category},         {"description", v.description},
             {"activity_ids", v.activity_ids}, {"trigger_time", v.trigger_time}, {"feedback_time", v.feedback_time},
             {"start_date", v.start_date},     {"expiration_date", v.expiration_date}};
}

void from_json(const Json& j, Plan& v) {
    v.plan_id = require_field<std::string>(j, "plan_id");
    v.category = j.value("category", "");
    v.description = j.value("description", "");
    v.activity_ids = require_field<std::vector<std::string>>(j, "activity_ids");
    v.trigger_time = require_field<TimeOfDay>(j, "trigger_time");
    v.feedback_time = require_field<TimeOfDay>(j, "feedback_time");
    v.start_date = require_field<Date>(j, "start_date");
    v.expiration_date = require_field<Date>(j, "expiration_date");
}

void to_json(Json& j, const TaskBundle& v) {
    j = Json{{"task_id", v.task_id}, {"title", v.title}, {"plan_ids", v.plan_ids}};
}

void from_json(const Json& j, TaskBundle& v) {
    v.task_id = require_field<std::string>(j, "task_id");
    v.title = j.value("title", "");
    v.plan_ids = require_field<std::vector<std::string>>(j, "plan_ids");
}

void to_json(Json& j, const Assignment& v) {
    j = Json{{"assignment_id", v.assignment_id},
             {"user_id", v.user_id},
             {"plan_id", v.plan_id},
             {"assigned_at", v.assigned_at},
             {"status", v.status}};
}

void from_json(const Json& j, Assignment& v) {
    v.assignment_id = require_field<std::string>(j, "assignment_id");
    v.user_id = require_field<std::string>(j, "user_id");
    v.plan_id = require_field<std::string>(j, "plan_id");
    v.assigned_at = require_field<Timestamp>(j, "assigned_at");
    v.status = require_field<AssignmentStatus>(j, "status");
}

void to_json(Json& j, const FeedbackEntry& v) {
    j = Json{{"user_id", v.user_id},
             {"assignment_id", v.assignment_id},
             {"activity_id", v.activity_id},
             {"occurrence_date", v.occurrence_date},
             {"completion", v.completion},
             {"recorded_at", v.recorded_at}};
    put_optional(j, "note", v.note);
}

void from_json(const Json& j, FeedbackEntry& v) {
    v.user_id = require_field<std::string>(j, "user_id");
    v.assignment_id = require_field<std::string>(j, "assignment_id");
    v.activity_id = require_field<std::string>(j, "activity_id");
    v.occurrence_date = require_field<Date>(j, "occurrence_date");
    v.completion = require_field<double>(j, "completion");
    v.note = get_optional<std::string>(j, "note");
    v.recorded_at = require_field<Timestamp>(j, "recorded_at");
}

void to_json(Json& j, const AdherenceThresholds& v) {
    j = Json{{"binary", v.binary}, {"ternary_low", v.ternary_low}, {"ternary_high", v.ternary_high}};
}

void from_json(const Json& j, AdherenceThresholds& v) {
    v.binary = j.value("binary", 0.5);
    v.ternary_low = j.value("ternary_low", 1.0 / 3.0);
    v.ternary_high = j.value("ternary_high", 2.0 / 3.0);
}

void to_json(Json& j, const AdherenceReport& v) {
    j = Json{{"user_id", v.user_id},
             {"assignment_id", v.assignment_id},
             {"per_activity_mean", v.per_activity_mean},
             {"overall_mean", v.overall_mean},
             {"binary_category", v.binary_category},
             {"ternary_category", v.ternary_category},
             {"expected_occurrences", v.expected_occurrences},
             {"computed_at", v.computed_at}};
}

void from_json(const Json& j, AdherenceReport& v) {
    v.user_id = j.value("user_id", "");
    v.assignment_id = j.value("assignment_id", "");
    v.per_activity_mean = j.value("per_activity_mean", std::map<std::string, double>{});
    v.overall_mean = require_field<double>(j, "overall_mean");
    v.binary_category = require_field<BinaryAdherence>(j, "binary_category");
    v.ternary_category = require_field<TernaryAdherence>(j, "ternary_category");
    v.expected_occurrences = j.value("expected_occurrences", 0);
    v.computed_at = require_field<Timestamp>(j, "computed_at");
}

}  // namespace coachai
