#pragma once

#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "coachai/classifier.hpp"
#include "coachai/dialog.hpp"
#include "coachai/domain.hpp"
#include "coachai/gateway.hpp"
#include "coachai/instruments.hpp"
#include "coachai/reports.hpp"
#include "coachai/scheduler.hpp"
#include "coachai/store.hpp"

namespace coachai::service {

using coachai::from_json;
using coachai::to_json;

enum class AlertKind { profile_complete, inactivity, deterioration, dialog_escalation, plan_expired, followup_due };

struct CoachAlert {
    std::string alert_id;
    AlertKind kind = AlertKind::profile_complete;
    UserId user_id;
    Timestamp created_at{};
    bool acknowledged = false;
    std::string detail;
    std::string dedup_key;  // (kind, user, triggering instance)

    friend bool operator==(const CoachAlert&, const CoachAlert&) = default;
};

struct PrivateMessage {
    std::string message_id;
    std::string coach_id;
    UserId user_id;
    std::string body;
    Timestamp sent_at{};
    std::optional<int> week_index;

    friend bool operator==(const PrivateMessage&, const PrivateMessage&) = default;
};

// Reports kept per assignment. `closing` covers occurrences up to the day
// before the latest recomputation; `final` covers the whole window and
// exists once the plan has expired.
struct AdherenceState {
    AssignmentId assignment_id;
    UserId user_id;
    std::optional<AdherenceReport> closing;
    std::optional<AdherenceReport> final_report;
    std::optional<TernaryAdherence> last_category;
    double plan_mean = 0.0;  // full-window mean

    friend bool operator==(const AdherenceState&, const AdherenceState&) = default;
};

// A dialog waiting for the user's active session to end.
struct QueuedDialog {
    std::string dialog_id;
    std::map<std::string, std::string> context;

    friend bool operator==(const QueuedDialog&, const QueuedDialog&) = default;
};

// Catalogue plan without dates; instantiated on assignment.
struct PoolPlan {
    PlanId plan_id;
    std::string category;
    std::string description;
    std::vector<ActivityId> activity_ids;
    TimeOfDay trigger_time = TimeOfDay::hm(8, 0);
    TimeOfDay feedback_time = TimeOfDay::hm(20, 0);
    int duration_days = 7;
};

struct ServiceOptions {
    std::optional<std::filesystem::path> data_dir;  // none = in memory
    bool sync = true;
    std::size_t snapshot_every = 5000;
    std::string coach_id = "coach";
    AdherenceThresholds thresholds;
    dialog::EngineOptions engine;
    scheduler::ProtocolOptions protocol;
    Duration inactivity_period = scheduler::kDefaultInactivityPeriod;
    Duration inactivity_check_every = std::chrono::hours{6};
    Duration inactivity_horizon = std::chrono::days{366};
    // Used when the store holds no model; otherwise one is trained on
    // generate_dataset({375, model_seed}).
    std::optional<classifier::SvmModel> model;
    std::uint64_t model_seed = 1;
    gateway::RetryPolicy retry;
};

struct RegistrationRequest {
    std::optional<UserId> user_id;
    std::string display_name;
    std::optional<std::string> phone;
    int age = 0;
    Gender gender = Gender::undisclosed;
    std::string locale = "en";
    std::optional<ChannelBinding> channel_binding;  // default: {channel name, user id}
};

struct AssignmentRequest {
    UserId user_id;
    std::optional<PlanId> plan_id;  // a stored plan or a pool plan id
    std::optional<Plan> plan;       // new plan definition
    std::optional<Date> start_date;  // pool plans only; default today
};

struct AssignmentResult {
    Assignment assignment;
    Plan plan;
    std::vector<scheduler::ScheduledJob> jobs;
};

struct FeedbackResult {
    std::vector<FeedbackEntry> entries;
    AdherenceReport live;
    AdherenceState state;
};

struct UserAdherence {
    Assignment assignment;
    AdherenceReport report;  // to date while active, full window once expired
    AdherenceState state;
};

class CoachService {
public:
    CoachService(ServiceOptions options, std::shared_ptr<gateway::Channel> channel, Clock clock);
    ~CoachService();

    CoachService(const CoachService&) = delete;
    CoachService& operator=(const CoachService&) = delete;

    Timestamp now();
    const ServiceOptions& options() const noexcept { return options_; }
    gateway::Gateway& gateway() { return *gateway_; }

    UserProfile register_user(const RegistrationRequest& request);
    std::vector<UserProfile> users() const;
    UserProfile user(const UserId& id) const;
    void set_inactivity_period(const UserId& id, Duration period);

    Activity create_activity(Activity activity);
    std::vector<Activity> activities() const;
    Plan create_plan(Plan plan);
    std::vector<Plan> plans() const;
    std::vector<PoolPlan> pool_plans() const;
    TaskBundle create_task(TaskBundle task);
    std::vector<TaskBundle> tasks() const;

    AssignmentResult assign_plan(const AssignmentRequest& request);
    std::vector<Assignment> assignments(const std::optional<UserId>& user = std::nullopt) const;

    // Throws domain when the referenced assignment is not active.
    FeedbackResult record_feedback(const UserId& user, std::vector<FeedbackEntry> entries);
    std::vector<FeedbackEntry> feedback(const UserId& user) const;
    std::vector<UserAdherence> adherence(const UserId& user);

    PrivateMessage send_private_message(const UserId& user, const std::string& body, std::optional<int> week);
    std::vector<PrivateMessage> messages(const UserId& user) const;

    std::vector<CoachAlert> alerts(std::optional<bool> acknowledged = std::nullopt) const;
    CoachAlert acknowledge(const std::string& alert_id);

    // Queues the instrument's questionnaire for each user (all users that
    // completed intake when empty). Returns the users reached.
    std::vector<UserId> dispatch_questionnaire(instruments::Instrument instrument, std::vector<UserId> users,
                                               std::optional<int> week);
    std::vector<instruments::QuestionnaireResponse> responses(const std::optional<UserId>& user) const;

    std::vector<dialog::DialogSession> sessions(const UserId& user) const;
    const dialog::DialogDefinition& dialog_definition(const std::string& dialog_id) const;

    // Inbound from the channel, scheduler jobs and session expiry, in that
    // order. In simulated mode the clock is moved to `now` first.
    std::vector<scheduler::ScheduledJob> tick(std::optional<Timestamp> now = std::nullopt);
    // Raw webhook body for a webhook channel; then processes inbound.
    bool ingest_webhook(const std::string& body);
    void process_inbound();

    reports::StudyData study_data();
    const std::vector<store::QuarantineEntry>& quarantine() const;
    std::vector<gateway::DeadLetter> dead_letters() const;
    std::vector<scheduler::ScheduledJob> jobs() const;

    // Canonical JSON of all persisted state, for rebuild-from-log checks.
    Json state_dump() const;
    void snapshot();

private:
    struct Impl;
    ServiceOptions options_;
    std::shared_ptr<gateway::Gateway> gateway_;
    std::unique_ptr<Impl> impl_;
    // Every public operation holds this; mutations apply in one serialized order.
    mutable std::recursive_mutex mutex_;
};

void to_json(Json& j, const CoachAlert& a);
void from_json(const Json& j, CoachAlert& a);
void to_json(Json& j, const PrivateMessage& m);
void from_json(const Json& j, PrivateMessage& m);
void to_json(Json& j, const AdherenceState& s);
void from_json(const Json& j, AdherenceState& s);
void to_json(Json& j, const QueuedDialog& q);
void from_json(const Json& j, QueuedDialog& q);
void to_json(Json& j, const PoolPlan& p);
void from_json(const Json& j, PoolPlan& p);

}  // namespace coachai::service

namespace coachai {

template <> struct EnumNames<service::AlertKind> {
    static constexpr std::array values{std::pair{service::AlertKind::profile_complete, "profile_complete"},
                                       std::pair{service::AlertKind::inactivity, "inactivity"},
                                       std::pair{service::AlertKind::deterioration, "deterioration"},
                                       std::pair{service::AlertKind::dialog_escalation, "dialog_escalation"},
                                       std::pair{service::AlertKind::plan_expired, "plan_expired"},
                                       std::pair{service::AlertKind::followup_due, "followup_due"}};
};

}  // namespace coachai
