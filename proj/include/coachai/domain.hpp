#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "coachai/json_support.hpp"
#include "coachai/time.hpp"

namespace coachai {

using UserId = std::string;
using ActivityId = std::string;
using PlanId = std::string;
using TaskId = std::string;
using AssignmentId = std::string;

enum class Gender { male, female, other, undisclosed };
enum class ActivityClass { vigorous, mild, sedentary, unclassified };
enum class Topic { physical_activity, healthy_diet, mental_wellness };
enum class Recurrence { daily, weekly, weekdays, weekends, one_shot };
enum class AssignmentStatus { active, expired, cancelled };
enum class BinaryAdherence { low, high };
// Declared worst to best so that `<` reads as "worse than".
enum class TernaryAdherence { non_adherent, mild, adherent };

template <> struct EnumNames<Gender> {
    static constexpr std::array values{std::pair{Gender::male, "male"}, std::pair{Gender::female, "female"},
                                       std::pair{Gender::other, "other"},
                                       std::pair{Gender::undisclosed, "undisclosed"}};
};
template <> struct EnumNames<ActivityClass> {
    static constexpr std::array values{std::pair{ActivityClass::vigorous, "vigorous"},
                                       std::pair{ActivityClass::mild, "mild"},
                                       std::pair{ActivityClass::sedentary, "sedentary"},
                                       std::pair{ActivityClass::unclassified, "unclassified"}};
};
template <> struct EnumNames<Topic> {
    static constexpr std::array values{std::pair{Topic::physical_activity, "physical_activity"},
                                       std::pair{Topic::healthy_diet, "healthy_diet"},
                                       std::pair{Topic::mental_wellness, "mental_wellness"}};
};
template <> struct EnumNames<Recurrence> {
    static constexpr std::array values{std::pair{Recurrence::daily, "daily"}, std::pair{Recurrence::weekly, "weekly"},
                                       std::pair{Recurrence::weekdays, "weekdays"},
                                       std::pair{Recurrence::weekends, "weekends"},
                                       std::pair{Recurrence::one_shot, "one_shot"}};
};
template <> struct EnumNames<AssignmentStatus> {
    static constexpr std::array values{std::pair{AssignmentStatus::active, "active"},
                                       std::pair{AssignmentStatus::expired, "expired"},
                                       std::pair{AssignmentStatus::cancelled, "cancelled"}};
};
template <> struct EnumNames<BinaryAdherence> {
    static constexpr std::array values{std::pair{BinaryAdherence::low, "low"}, std::pair{BinaryAdherence::high, "high"}};
};
template <> struct EnumNames<TernaryAdherence> {
    static constexpr std::array values{std::pair{TernaryAdherence::non_adherent, "non_adherent"},
                                       std::pair{TernaryAdherence::mild, "mild"},
                                       std::pair{TernaryAdherence::adherent, "adherent"}};
};

struct ChannelBinding {
    std::string channel;  // "console", "telegram"
    std::string chat_id;

    friend bool operator==(const ChannelBinding&, const ChannelBinding&) = default;
};

struct UserProfile {
    UserId user_id;
    std::string display_name;
    std::optional<std::string> phone;
    int age = 0;
    Gender gender = Gender::undisclosed;
    std::string locale = "en";
    Timestamp registered_at{};
    std::optional<ChannelBinding> channel_binding;
    ActivityClass activity_class = ActivityClass::unclassified;
    bool intake_complete = false;
    std::optional<Timestamp> last_interaction_at;

    // Moves last_interaction_at forward; older instants are ignored.
    void touch(Timestamp when);

    friend bool operator==(const UserProfile&, const UserProfile&) = default;
};

struct Activity {
    ActivityId activity_id;
    std::string title;
    std::string instructions;
    Topic topic = Topic::physical_activity;
    Recurrence recurrence = Recurrence::daily;
    int effort = 1;

    friend bool operator==(const Activity&, const Activity&) = default;
};

struct Plan {
    PlanId plan_id;
    std::string category;
    std::string description;
    std::vector<ActivityId> activity_ids;
    TimeOfDay trigger_time = TimeOfDay::hm(8, 0);
    TimeOfDay feedback_time = TimeOfDay::hm(20, 0);
    Date start_date{};
    Date expiration_date{};

    int day_count() const { return static_cast<int>((expiration_date - start_date).count()) + 1; }
    bool contains(const ActivityId& id) const;

    friend bool operator==(const Plan&, const Plan&) = default;
};

struct TaskBundle {
    TaskId task_id;
    std::string title;
    std::vector<PlanId> plan_ids;

    friend bool operator==(const TaskBundle&, const TaskBundle&) = default;
};

struct Assignment {
    AssignmentId assignment_id;
    UserId user_id;
    PlanId plan_id;
    Timestamp assigned_at{};
    AssignmentStatus status = AssignmentStatus::active;

    friend bool operator==(const Assignment&, const Assignment&) = default;
};

struct FeedbackEntry {
    UserId user_id;
    AssignmentId assignment_id;
    ActivityId activity_id;
    Date occurrence_date{};
    double completion = 0.0;
    std::optional<std::string> note;
    Timestamp recorded_at{};

    friend bool operator==(const FeedbackEntry&, const FeedbackEntry&) = default;
};

struct AdherenceThresholds {
    double binary = 0.5;
    double ternary_low = 1.0 / 3.0;
    double ternary_high = 2.0 / 3.0;

    // Throws domain error unless 0 < low < high < 1 and binary in (0, 1).
    void check() const;
};

struct AdherenceReport {
    UserId user_id;
    AssignmentId assignment_id;
    std::map<ActivityId, double> per_activity_mean;
    double overall_mean = 0.0;
    BinaryAdherence binary_category = BinaryAdherence::low;
    TernaryAdherence ternary_category = TernaryAdherence::non_adherent;
    int expected_occurrences = 0;
    Timestamp computed_at{};

    friend bool operator==(const AdherenceReport&, const AdherenceReport&) = default;
};

// Invariant checks; each throws Error(domain) naming the violated rule.
void check(const UserProfile& user);
void check(const Activity& activity);
void check(const Plan& plan);
void check(const TaskBundle& task);
void check(const FeedbackEntry& entry);

// Every date in the plan window matching the activity's recurrence. Weekly
// recurrence anchors on the plan's start weekday.
std::vector<Date> expected_occurrences(const Plan& plan, const Activity& activity);

struct AdherenceQuery {
    AdherenceThresholds thresholds;
    // Count only occurrences on or before this date ("to date" reporting).
    std::optional<Date> as_of;
    UserId user_id;
    AssignmentId assignment_id;
    Timestamp computed_at{};
};

// Missing occurrences count as completion 0. When several entries cover the
// same occurrence the most recently recorded one wins.
AdherenceReport compute_adherence(std::span<const FeedbackEntry> feedback, const Plan& plan,
                                  std::span<const Activity> activities, const AdherenceQuery& query = {});

TernaryAdherence categorize_ternary(double mean, const AdherenceThresholds& thresholds = {});
BinaryAdherence categorize_binary(double mean, const AdherenceThresholds& thresholds = {});

void to_json(Json& j, const ChannelBinding& v);
void from_json(const Json& j, ChannelBinding& v);
void to_json(Json& j, const UserProfile& v);
void from_json(const Json& j, UserProfile& v);
void to_json(Json& j, const Activity& v);
void from_json(const Json& j, Activity& v);
void to_json(Json& j, const Plan& v);
void from_json(const Json& j, Plan& v);
void to_json(Json& j, const TaskBundle& v);
void from_json(const Json& j, TaskBundle& v);
void to_json(Json& j, const Assignment& v);
void from_json(const Json& j, Assignment& v);
void to_json(Json& j, const FeedbackEntry& v);
void from_json(const Json& j, FeedbackEntry& v);
void to_json(Json& j, const AdherenceThresholds& v);
void from_json(const Json& j, AdherenceThresholds& v);
void to_json(Json& j, const AdherenceReport& v);
void from_json(const Json& j, AdherenceReport& v);

}  // namespace coachai
