#include "coachai/service.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "coachai/error.hpp"
#include "coachai/log.hpp"
#include "coachai/resources.hpp"

namespace coachai::service {

using dialog::DialogDefinition;
using dialog::DialogSession;
using dialog::StepResult;
using instruments::Instrument;
using instruments::QuestionnaireResponse;
using instruments::QuestionnaireTemplate;
using scheduler::JobKind;
using scheduler::ScheduledJob;

namespace {

constexpr const char* kUser = "user";
constexpr const char* kActivity = "activity";
constexpr const char* kPlan = "plan";
constexpr const char* kTask = "task";
constexpr const char* kAssignment = "assignment";
constexpr const char* kFeedback = "feedback";
constexpr const char* kAdherence = "adherence";
constexpr const char* kAlert = "alert";
constexpr const char* kMessage = "message";
constexpr const char* kResponse = "response";
constexpr const char* kSession = "session";
constexpr const char* kQueue = "queue";
constexpr const char* kIntake = "intake";
constexpr const char* kPeriod = "inactivity_period";
constexpr const char* kJob = "job";
constexpr const char* kDeadLetter = "dead_letter";
constexpr const char* kMeta = "meta";

constexpr const char* kFeedbackDialog = "daily_feedback";
constexpr const char* kIntakeDialog = "intake";
constexpr const char* kIntroDialog = "questionnaire_intro";

std::string make_id(const std::string& prefix, std::uint64_t n, int width) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%0*llu", width, static_cast<unsigned long long>(n));
    return prefix + buf;
}

// Numeric suffix of an id carrying `prefix`, 0 otherwise.
std::uint64_t id_number(const std::string& id, const std::string& prefix) {
    if (id.size() <= prefix.size() || id.compare(0, prefix.size(), prefix) != 0)
        return 0;
    std::uint64_t n = 0;
    for (std::size_t i = prefix.size(); i < id.size(); ++i) {
        if (id[i] < '0' || id[i] > '9')
            return 0;
        n = n * 10 + static_cast<std::uint64_t>(id[i] - '0');
    }
    return n;
}

std::string lower(std::string s) {
    for (auto& c : s)
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return "";
    return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

struct Counter {
    std::string prefix;
    int width;
    std::uint64_t next = 1;

    std::string take() { return make_id(prefix, next++, width); }
    void observe(const std::string& id) { next = std::max(next, id_number(id, prefix) + 1); }
};

}  // namespace

struct CoachService::Impl {
    Impl(const ServiceOptions& o, Clock c) : options(o), clock(c), engine(o.engine) {}

    const ServiceOptions& options;
    Clock clock;
    store::Store store;
    gateway::Gateway* gateway = nullptr;
    scheduler::Scheduler scheduler;
    scheduler::InactivityMonitor monitor;
    dialog::Engine engine;
    classifier::SvmModel model;

    std::map<std::string, DialogDefinition> dialogs;
    std::map<std::string, const QuestionnaireTemplate*> template_dialogs;
    std::map<PlanId, PoolPlan> pool;

    std::map<UserId, UserProfile> users;
    std::map<ActivityId, Activity> activities;
    std::map<PlanId, Plan> plans;
    std::map<TaskId, TaskBundle> tasks;
    std::map<AssignmentId, Assignment> assignments;
    std::map<std::string, FeedbackEntry> feedback;
    std::map<AssignmentId, AdherenceState> adherence;
    std::map<std::string, CoachAlert> alerts;
    std::set<std::string> alert_keys;
    std::map<std::string, PrivateMessage> messages;
    std::map<std::string, QuestionnaireResponse> responses;
    std::map<std::string, DialogSession> sessions;
    std::map<UserId, std::string> active_session;
    std::map<UserId, std::deque<QueuedDialog>> queues;
    std::map<UserId, dialog::Variables> intake_answers;
    std::map<UserId, Duration> inactivity_periods;
    std::map<std::string, gateway::DeadLetter> dead_letters;

    std::map<std::string, ScheduledJob> persisted_jobs;
    Json persisted_clock;
    Json persisted_monitor = Json::object();

    Counter user_ids{"u", 4};
    Counter activity_ids{"act", 3};
    Counter plan_ids{"p", 4};
    Counter task_ids{"t", 4};
    Counter assignment_ids{"a", 4};
    Counter feedback_ids{"f", 6};
    Counter alert_ids{"al", 5};
    Counter message_ids{"m", 5};
    Counter response_ids{"r", 5};
    Counter session_ids{"s", 6};
    Counter dead_letter_ids{"d", 4};

    // -- persistence ------------------------------------------------------

    void put(const std::string& type, const std::string& id, Json payload) {
        store.put(type, id, std::move(payload), clock.now());
    }

    Json clock_json() const {
        Json j{{"next_job_id", scheduler.next_id()}};
        put_optional(j, "last_tick", scheduler.last_tick());
        return j;
    }

    void persist_jobs() {
        for (const auto& job : scheduler.jobs()) {
            auto it = persisted_jobs.find(job.job_id);
            if (it != persisted_jobs.end() && it->second == job)
                continue;
            put(kJob, job.job_id, job);
            persisted_jobs[job.job_id] = job;
        }
        Json c = clock_json();
        if (c != persisted_clock) {
            put(kMeta, "clock", c);
            persisted_clock = std::move(c);
        }
    }

    void persist_monitor() {
        Json j = Json::object();
        for (const auto& [user, ts] : monitor.suppressed())
            j[user] = ts;
        if (j != persisted_monitor) {
            put(kMeta, "inactivity", j);
            persisted_monitor = std::move(j);
        }
    }

    void persist_queue(const UserId& user) {
        Json j = Json::array();
        for (const auto& q : queues[user])
            j.push_back(q);
        put(kQueue, user, j);
    }

    void persist_session(const DialogSession& s) { put(kSession, s.session_id, s); }

    // -- loading ----------------------------------------------------------

    template <typename T, typename F>
    void load_records(const std::string& type, F&& apply) {
        for (const auto* rec : store.list(type)) {
            try {
                apply(rec->record_id, rec->payload.get<T>());
            } catch (const std::exception& e) {
                const std::string raw = rec->payload.dump();
                store.add_quarantine({"record " + type + "/" + rec->record_id, 0, e.what(),
                                      raw.size() > 120 ? raw.substr(0, 120) + "..." : raw});
                log::error("record " + type + "/" + rec->record_id + " quarantined: " + e.what());
            }
        }
    }

    void load_builtins() {
        for (const char* name : {"dialogs/intake.dialog", "dialogs/daily_feedback.dialog",
                                 "dialogs/questionnaire_intro.dialog"}) {
            auto def = dialog::parse_dialog(builtin_resource(name));
            dialogs[def.dialog_id] = std::move(def);
        }
        for (const auto& tpl : instruments::builtin_templates()) {
            auto def = instruments::build_dialog(tpl);
            template_dialogs[def.dialog_id] = &tpl;
            dialogs[def.dialog_id] = std::move(def);
        }
        for (const auto& [id, def] : dialogs) {
            const auto defects = dialog::validate(def);
            if (!defects.empty())
                throw Error(ErrorKind::invalid_state,
                            "built-in dialog '" + id + "' has defects: " + defects.front().describe());
        }
        const Json doc = Json::parse(builtin_resource("activity_pool.json"));
        for (const auto& p : doc.at("plans")) {
            auto plan = p.get<PoolPlan>();
            pool[plan.plan_id] = std::move(plan);
        }
    }

    void load() {
        load_records<UserProfile>(kUser, [&](const std::string&, UserProfile u) {
            user_ids.observe(u.user_id);
            users[u.user_id] = std::move(u);
        });
        load_records<Activity>(kActivity, [&](const std::string&, Activity a) {
            activity_ids.observe(a.activity_id);
            activities[a.activity_id] = std::move(a);
        });
        load_records<Plan>(kPlan, [&](const std::string&, Plan p) {
            plan_ids.observe(p.plan_id);
            plans[p.plan_id] = std::move(p);
        });
        load_records<TaskBundle>(kTask, [&](const std::string&, TaskBundle t) {
            task_ids.observe(t.task_id);
            tasks[t.task_id] = std::move(t);
        });
        load_records<Assignment>(kAssignment, [&](const std::string&, Assignment a) {
            assignment_ids.observe(a.assignment_id);
            assignments[a.assignment_id] = std::move(a);
        });
        load_records<FeedbackEntry>(kFeedback, [&](const std::string& id, FeedbackEntry f) {
            feedback_ids.observe(id);
            feedback[id] = std::move(f);
        });
        load_records<AdherenceState>(kAdherence, [&](const std::string&, AdherenceState s) {
            adherence[s.assignment_id] = std::move(s);
        });
        load_records<CoachAlert>(kAlert, [&](const std::string&, CoachAlert a) {
            alert_ids.observe(a.alert_id);
            alert_keys.insert(a.dedup_key);
            alerts[a.alert_id] = std::move(a);
        });
        load_records<PrivateMessage>(kMessage, [&](const std::string&, PrivateMessage m) {
            message_ids.observe(m.message_id);
            messages[m.message_id] = std::move(m);
        });
        load_records<QuestionnaireResponse>(kResponse, [&](const std::string&, QuestionnaireResponse r) {
            response_ids.observe(r.response_id);
            responses[r.response_id] = std::move(r);
        });
        load_records<DialogSession>(kSession, [&](const std::string&, DialogSession s) {
            session_ids.observe(s.session_id);
            if (s.status == dialog::SessionStatus::active)
                active_session[s.user_id] = s.session_id;
            sessions[s.session_id] = std::move(s);
        });
        load_records<std::vector<QueuedDialog>>(kQueue, [&](const std::string& user, std::vector<QueuedDialog> q) {
            queues[user] = std::deque<QueuedDialog>(q.begin(), q.end());
        });
        load_records<Json>(kIntake, [&](const std::string& user, Json vars) {
            dialog::Variables v;
            for (const auto& [k, value] : vars.items())
                dialog::from_json(value, v[k]);
            intake_answers[user] = std::move(v);
        });
        load_records<std::int64_t>(kPeriod, [&](const std::string& user, std::int64_t seconds) {
            inactivity_periods[user] = Duration{seconds};
        });
        load_records<Json>(kDeadLetter, [&](const std::string& id, Json j) {
            dead_letter_ids.observe(id);
            gateway::DeadLetter d;
            d.message = j.at("message").get<OutboundMessage>();
            d.error = j.at("error").get<std::string>();
            d.attempts = j.at("attempts").get<int>();
            d.at = j.at("at").get<Timestamp>();
            dead_letters[id] = std::move(d);
        });

        std::vector<ScheduledJob> jobs;
        std::uint64_t next_job = 1;
        load_records<ScheduledJob>(kJob, [&](const std::string&, ScheduledJob j) {
            next_job = std::max(next_job, id_number(j.job_id, "j") + 1);
            persisted_jobs[j.job_id] = j;
            jobs.push_back(std::move(j));
        });
        std::sort(jobs.begin(), jobs.end(), [](const auto& a, const auto& b) { return a.job_id < b.job_id; });
        std::optional<Timestamp> last_tick;
        if (const auto* rec = store.get(kMeta, "clock")) {
            last_tick = get_optional<Timestamp>(rec->payload, "last_tick");
            next_job = std::max(next_job, rec->payload.value("next_job_id", std::uint64_t{1}));
        }
        scheduler.restore(std::move(jobs), last_tick, next_job);
        persisted_clock = clock_json();
        if (const auto* rec = store.get(kMeta, "inactivity")) {
            std::map<UserId, Timestamp> suppressed;
            for (const auto& [user, ts] : rec->payload.items())
                suppressed[user] = ts.get<Timestamp>();
            monitor.restore(std::move(suppressed));
            persisted_monitor = rec->payload;
        }
    }

    void ensure_pool_activities() {
        const Json doc = Json::parse(builtin_resource("activity_pool.json"));
        for (const auto& a : doc.at("activities")) {
            auto activity = a.get<Activity>();
            if (activities.count(activity.activity_id))
                continue;
            put(kActivity, activity.activity_id, activity);
            activities[activity.activity_id] = std::move(activity);
        }
    }

    void ensure_model() {
        if (const auto* rec = store.get(kMeta, "model")) {
            try {
                model = rec->payload.get<classifier::SvmModel>();
                return;
            } catch (const std::exception& e) {
                store.add_quarantine({"record meta/model", 0, e.what(), ""});
            }
        }
        if (options.model) {
            model = *options.model;
        } else {
            const auto data = classifier::generate_dataset({375, options.model_seed});
            model = classifier::train(data, classifier::Hyperparams(options.model_seed));
        }
        put(kMeta, "model", model);
    }

    // -- lookups ----------------------------------------------------------

    UserProfile& user(const UserId& id) {
        auto it = users.find(id);
        if (it == users.end())
            throw Error(ErrorKind::not_found, "unknown user '" + id + "'");
        return it->second;
    }

    const Plan& plan_of(const Assignment& a) {
        auto it = plans.find(a.plan_id);
        if (it == plans.end())
            throw Error(ErrorKind::not_found, "unknown plan '" + a.plan_id + "'");
        return it->second;
    }

    std::vector<Activity> plan_activities(const Plan& plan) {
        std::vector<Activity> out;
        for (const auto& id : plan.activity_ids) {
            auto it = activities.find(id);
            if (it == activities.end())
                throw Error(ErrorKind::not_found, "unknown activity '" + id + "'");
            out.push_back(it->second);
        }
        return out;
    }

    std::vector<FeedbackEntry> assignment_feedback(const AssignmentId& id) {
        std::vector<FeedbackEntry> out;
        for (const auto& [fid, f] : feedback)
            if (f.assignment_id == id)
                out.push_back(f);
        return out;
    }

    // -- alerts and messaging -------------------------------------------------

    void raise_alert(AlertKind kind, const UserId& user_id, const std::string& key, const std::string& detail) {
        if (!alert_keys.insert(key).second)
            return;
        CoachAlert a{alert_ids.take(), kind, user_id, clock.now(), false, detail, key};
        put(kAlert, a.alert_id, a);
        alerts[a.alert_id] = std::move(a);
    }

    void collect_dead_letters() {
        for (auto& d : gateway->take_dead_letters()) {
            const std::string id = dead_letter_ids.take();
            put(kDeadLetter, id,
                Json{{"message", d.message}, {"error", d.error}, {"attempts", d.attempts}, {"at", d.at}});
            dead_letters[id] = std::move(d);
        }
    }

    void send(OutboundMessage msg) {
        try {
            gateway->send(msg, clock.now());
        } catch (const Error& e) {
            log::warn("delivery to chat " + msg.chat_id + " failed: " + e.what());
        }
        collect_dead_letters();
    }

    void send_text(const UserProfile& u, const std::string& text, const std::string& correlation) {
        if (!u.channel_binding)
            return;
        send(OutboundMessage{u.channel_binding->chat_id, text, {}, correlation});
    }

    // -- sessions ---------------------------------------------------------

    std::map<std::string, std::string> base_context(const UserProfile& u) { return {{"name", u.display_name}}; }

    void start_or_queue(const UserId& user_id, QueuedDialog q, bool front = false) {
        if (active_session.count(user_id)) {
            if (front)
                queues[user_id].push_front(std::move(q));
            else
                queues[user_id].push_back(std::move(q));
            persist_queue(user_id);
            return;
        }
        start_dialog(user_id, q);
    }

    void start_dialog(const UserId& user_id, const QueuedDialog& q) {
        const auto& u = user(user_id);
        auto def = dialogs.find(q.dialog_id);
        if (def == dialogs.end())
            throw Error(ErrorKind::not_found, "unknown dialog '" + q.dialog_id + "'");
        const std::string chat = u.channel_binding ? u.channel_binding->chat_id : u.user_id;
        apply(engine.start_session(def->second, {session_ids.take(), user_id, chat, q.context}, clock.now()));
    }

    void pop_queue(const UserId& user_id) {
        auto& q = queues[user_id];
        while (!active_session.count(user_id) && !q.empty()) {
            QueuedDialog next = std::move(q.front());
            q.pop_front();
            persist_queue(user_id);
            start_dialog(user_id, next);
        }
    }

    void apply(StepResult r) {
        const DialogSession& s = r.session;
        sessions[s.session_id] = s;
        persist_session(s);
        const bool active = s.status == dialog::SessionStatus::active;
        if (active)
            active_session[s.user_id] = s.session_id;
        else if (auto it = active_session.find(s.user_id); it != active_session.end() && it->second == s.session_id)
            active_session.erase(it);
        for (auto& m : r.messages)
            send(std::move(m));
        if (r.escalation)
            raise_alert(AlertKind::dialog_escalation, s.user_id,
                        "dialog_escalation:" + s.session_id + ":" + r.escalation->state_id,
                        "No valid answer after " + std::to_string(r.escalation->attempts) + " attempts in " +
                            s.dialog_id + " (state " + r.escalation->state_id + ")");
        if (r.completion)
            on_complete(*r.completion);
        if (!active)
            pop_queue(s.user_id);
    }

    void end_session(DialogSession& s, const std::string& event) {
        s.status = dialog::SessionStatus::abandoned;
        s.history.push_back({s.current_state, "", clock.now(), event});
        persist_session(s);
        if (auto it = active_session.find(s.user_id); it != active_session.end() && it->second == s.session_id)
            active_session.erase(it);
    }

    // Drops queued and active feedback dialogs of an assignment, optionally
    // only those for occurrences before `before`.
    void drop_feedback_dialogs(const UserId& user_id, const AssignmentId& assignment, std::optional<Date> before,
                               const std::string& event) {
        auto matches = [&](const std::string& dialog_id, const std::map<std::string, std::string>& ctx) {
            if (dialog_id != kFeedbackDialog)
                return false;
            auto a = ctx.find("assignment_id");
            auto d = ctx.find("occurrence_date");
            if (a == ctx.end() || a->second != assignment)
                return false;
            return !before || (d != ctx.end() && parse_date(d->second) < *before);
        };
        auto& q = queues[user_id];
        const auto old_size = q.size();
        q.erase(std::remove_if(q.begin(), q.end(), [&](const QueuedDialog& x) { return matches(x.dialog_id, x.context); }),
                q.end());
        if (q.size() != old_size)
            persist_queue(user_id);
        if (auto it = active_session.find(user_id); it != active_session.end()) {
            auto& s = sessions.at(it->second);
            if (matches(s.dialog_id, s.context)) {
                end_session(s, event);
                pop_queue(user_id);
            }
        }
    }

    void on_complete(const dialog::CompletionEvent& ev) {
        auto& u = user(ev.user_id);
        if (ev.dialog_id == kIntakeDialog) {
            intake_answers[u.user_id] = ev.variables;
            Json vars = Json::object();
            for (const auto& [k, v] : ev.variables)
                dialog::to_json(vars[k], v);
            put(kIntake, u.user_id, vars);
            start_or_queue(u.user_id, {"intake_v1", base_context(u)}, true);
            return;
        }
        if (ev.dialog_id == kIntroDialog) {
            auto tpl = ev.context.find("template_id");
            if (tpl != ev.context.end())
                start_or_queue(u.user_id, {tpl->second, ev.context}, true);
            return;
        }
        if (ev.dialog_id == kFeedbackDialog) {
            complete_feedback(u, ev);
            return;
        }
        auto tpl_it = template_dialogs.find(ev.dialog_id);
        if (tpl_it == template_dialogs.end())
            return;
        const auto& tpl = *tpl_it->second;
        QuestionnaireResponse r;
        r.response_id = response_ids.take();
        r.user_id = u.user_id;
        r.template_id = tpl.template_id;
        auto week = ev.context.find("week");
        r.week_index = week == ev.context.end() ? 0 : std::stoi(week->second);
        r.answers = instruments::answers_from_captures(tpl, ev.variables);
        r.submitted_at = ev.completed_at;
        instruments::score_response(tpl, r, instruments::Completeness::lenient);
        put(kResponse, r.response_id, r);
        responses[r.response_id] = r;
        if (tpl.instrument == Instrument::intake)
            complete_intake(u, ev.variables);
    }

    void complete_intake(UserProfile& u, const dialog::Variables& answers) {
        dialog::Variables merged = intake_answers[u.user_id];
        for (const auto& [k, v] : answers)
            merged[k] = v;
        std::string detail;
        try {
            const auto features = classifier::extract_features(merged);
            u.activity_class = classifier::predict(model, features).label;
            detail = "Intake complete for " + u.display_name + ", activity class " +
                     std::string(name_of(u.activity_class));
        } catch (const Error& e) {
            detail = "Intake complete for " + u.display_name + " but classification failed: " + e.what();
        }
        if (auto age = merged.find("age"); age != merged.end())
            if (const auto* v = std::get_if<double>(&age->second))
                u.age = static_cast<int>(std::lround(*v));
        u.intake_complete = true;
        check(u);
        put(kUser, u.user_id, u);
        raise_alert(AlertKind::profile_complete, u.user_id, "profile_complete:" + u.user_id, detail);
    }

    void complete_feedback(UserProfile& u, const dialog::CompletionEvent& ev) {
        FeedbackEntry f;
        f.user_id = u.user_id;
        f.assignment_id = ev.context.at("assignment_id");
        f.activity_id = ev.context.at("activity_id");
        f.occurrence_date = parse_date(ev.context.at("occurrence_date"));
        const std::string answer = lower(dialog::value_text(ev.variables.at("completion")));
        f.completion = answer == "yes" ? 1.0 : answer == "partly" ? 0.5 : 0.0;
        if (auto note = ev.variables.find("note"); note != ev.variables.end()) {
            const std::string text = trim(dialog::value_text(note->second));
            if (!text.empty() && lower(text) != "no")
                f.note = text;
        }
        f.recorded_at = ev.completed_at;
        try {
            record_feedback(u.user_id, {f});
        } catch (const Error& e) {
            log::warn("feedback from " + u.user_id + " not recorded: " + e.what());
        }
    }

    // -- adherence --------------------------------------------------------

    AdherenceReport report_for(const Assignment& a, std::optional<Date> as_of) {
        const Plan& plan = plan_of(a);
        const auto acts = plan_activities(plan);
        const auto entries = assignment_feedback(a.assignment_id);
        AdherenceQuery q;
        q.thresholds = options.thresholds;
        q.as_of = as_of;
        q.user_id = a.user_id;
        q.assignment_id = a.assignment_id;
        q.computed_at = clock.now();
        return compute_adherence(entries, plan, acts, q);
    }

    AdherenceReport live_report(const Assignment& a) {
        if (a.status == AssignmentStatus::expired)
            return report_for(a, std::nullopt);
        return report_for(a, date_of(clock.now()));
    }

    // Recomputes the closing report (occurrences before today), or the final
    // one, and raises a deterioration alert on a category drop.
    void recompute(const Assignment& a, bool final_report) {
        auto& st = adherence[a.assignment_id];
        st.assignment_id = a.assignment_id;
        st.user_id = a.user_id;
        const Plan& plan = plan_of(a);
        st.plan_mean = report_for(a, std::nullopt).overall_mean;
        std::optional<AdherenceReport> report;
        Date as_of = plan.expiration_date;
        if (final_report) {
            report = report_for(a, std::nullopt);
            st.final_report = report;
        } else {
            as_of = std::min(date_of(clock.now()) - std::chrono::days{1}, plan.expiration_date);
            if (as_of >= plan.start_date) {
                report = report_for(a, as_of);
                st.closing = report;
            }
        }
        if (report) {
            const auto category = report->ternary_category;
            if (st.last_category && category < *st.last_category) {
                const auto& u = user(a.user_id);
                raise_alert(AlertKind::deterioration, a.user_id,
                            "deterioration:" + a.assignment_id + ":" + format_date(as_of),
                            "Adherence of " + u.display_name + " on plan " + a.plan_id + " dropped from " +
                                std::string(name_of(*st.last_category)) + " to " +
                                std::string(name_of(category)) + " (mean " + reports::format_number(report->overall_mean, 3) +
                                " up to " + format_date(as_of) + ")");
            }
            st.last_category = category;
        }
        put(kAdherence, a.assignment_id, st);
    }

    FeedbackResult record_feedback(const UserId& user_id, std::vector<FeedbackEntry> entries) {
        user(user_id);
        if (entries.empty())
            throw Error(ErrorKind::domain, "no feedback entries");
        for (auto& f : entries) {
            f.user_id = user_id;
            auto a = assignments.find(f.assignment_id);
            if (a == assignments.end())
                throw Error(ErrorKind::domain, "no assignment '" + f.assignment_id + "'");
            if (a->second.user_id != user_id)
                throw Error(ErrorKind::domain, "assignment '" + f.assignment_id + "' belongs to another user");
            if (a->second.status != AssignmentStatus::active)
                throw Error(ErrorKind::domain, "assignment '" + f.assignment_id + "' is " +
                                                   std::string(name_of(a->second.status)) + ", not active");
            const Plan& plan = plan_of(a->second);
            auto act = activities.find(f.activity_id);
            if (!plan.contains(f.activity_id) || act == activities.end())
                throw Error(ErrorKind::domain, "activity '" + f.activity_id + "' is not part of plan '" + plan.plan_id + "'");
            const auto dates = expected_occurrences(plan, act->second);
            if (std::find(dates.begin(), dates.end(), f.occurrence_date) == dates.end())
                throw Error(ErrorKind::domain, "no occurrence of '" + f.activity_id + "' on " + format_date(f.occurrence_date));
            if (f.recorded_at == Timestamp{})
                f.recorded_at = clock.now();
            check(f);
        }
        FeedbackResult result;
        for (const auto& f : entries) {
            const std::string id = feedback_ids.take();
            put(kFeedback, id, f);
            feedback[id] = f;
        }
        const auto& a = assignments.at(entries.front().assignment_id);
        std::set<AssignmentId> touched;
        for (const auto& f : entries)
            touched.insert(f.assignment_id);
        for (const auto& id : touched)
            recompute(assignments.at(id), false);
        result.entries = std::move(entries);
        result.live = live_report(a);
        result.state = adherence.at(a.assignment_id);
        return result;
    }

    // -- jobs -------------------------------------------------------------

    void handle_job(const ScheduledJob& job) {
        const auto& p = job.payload;
        if (!users.count(p.user_id))
            return;
        auto& u = user(p.user_id);
        switch (job.kind) {
        case JobKind::plan_notification: {
            const auto& a = assignments.at(*p.assignment_id);
            const Plan& plan = plan_of(a);
            if (p.availability) {
                std::string text = "Your coach has prepared a new plan for you: " + plan.description + ". It runs from " +
                                   format_date(plan.start_date) + " to " + format_date(plan.expiration_date) +
                                   ". Activities:";
                for (const auto& act : plan_activities(plan))
                    text += "\n- " + act.title;
                send_text(u, text, job.job_id);
                break;
            }
            const Date day = p.occurrence_date ? *p.occurrence_date : date_of(job.due_at);
            std::string text;
            for (const auto& act : plan_activities(plan)) {
                const auto dates = expected_occurrences(plan, act);
                if (std::find(dates.begin(), dates.end(), day) != dates.end())
                    text += "\n- " + act.title + ": " + act.instructions;
            }
            send_text(u, text.empty() ? "Good morning " + u.display_name + "! Nothing planned for today, enjoy your rest day."
                                      : "Good morning " + u.display_name + "! Today's activities:" + text,
                      job.job_id);
            break;
        }
        case JobKind::feedback_collection: {
            const auto& a = assignments.at(*p.assignment_id);
            const Plan& plan = plan_of(a);
            const Date day = p.occurrence_date ? *p.occurrence_date : date_of(job.due_at);
            drop_feedback_dialogs(u.user_id, a.assignment_id, day, "superseded");
            for (const auto& act : plan_activities(plan)) {
                const auto dates = expected_occurrences(plan, act);
                if (std::find(dates.begin(), dates.end(), day) == dates.end())
                    continue;
                auto ctx = base_context(u);
                ctx["activity_title"] = act.title;
                ctx["assignment_id"] = a.assignment_id;
                ctx["activity_id"] = act.activity_id;
                ctx["occurrence_date"] = format_date(day);
                start_or_queue(u.user_id, {kFeedbackDialog, ctx});
            }
            recompute(a, false);
            break;
        }
        case JobKind::plan_expiration: {
            auto& a = assignments.at(*p.assignment_id);
            if (a.status != AssignmentStatus::active)
                break;
            a.status = AssignmentStatus::expired;
            put(kAssignment, a.assignment_id, a);
            recompute(a, true);
            drop_feedback_dialogs(u.user_id, a.assignment_id, std::nullopt, "expired");
            const auto& st = adherence.at(a.assignment_id);
            raise_alert(AlertKind::plan_expired, u.user_id, "plan_expired:" + a.assignment_id,
                        "Plan " + a.plan_id + " of " + u.display_name + " expired with adherence " +
                            reports::format_number(st.plan_mean, 3) + " (" +
                            std::string(name_of(st.final_report->ternary_category)) + ")");
            break;
        }
        case JobKind::questionnaire_dispatch: {
            const auto instrument = parse_enum<Instrument>(*p.instrument);
            dispatch(u, instrument, p.week.value_or(0));
            break;
        }
        case JobKind::coach_followup_reminder: {
            const int week = p.week.value_or(0);
            raise_alert(AlertKind::followup_due, u.user_id,
                        "followup_due:" + u.user_id + ":" + std::to_string(week),
                        "End of week " + std::to_string(week) + ": follow up with " + u.display_name);
            break;
        }
        case JobKind::inactivity_check: {
            const std::vector<UserProfile> one{u};
            for (const auto& alert : monitor.scan(one, clock.now(),
                                                  inactivity_periods, options.inactivity_period)) {
                const auto days = std::chrono::duration_cast<std::chrono::hours>(alert.silent_for).count() / 24.0;
                raise_alert(AlertKind::inactivity, u.user_id,
                            "inactivity:" + u.user_id + ":" + format_timestamp(alert.reference),
                            u.display_name + " has been silent since " + format_timestamp(alert.reference) + " (" +
                                reports::format_number(days, 1) + " days)");
            }
            persist_monitor();
            break;
        }
        }
    }

    void dispatch(const UserProfile& u, Instrument instrument, int week) {
        const auto& tpl = instruments::builtin_template(instrument);
        auto ctx = base_context(u);
        ctx["instrument"] = std::string(name_of(instrument));
        ctx["template_id"] = tpl.template_id;
        ctx["week"] = std::to_string(week);
        start_or_queue(u.user_id, {kIntroDialog, ctx});
    }

    void run_jobs() {
        const auto now = clock.now();
        if (scheduler.last_tick() && now < *scheduler.last_tick())
            return;
        fired_buffer = scheduler.tick(now);
        persist_jobs();
        for (const auto& job : fired_buffer)
            handle_job(job);
        persist_jobs();
    }

    void process_inbound() {
        for (auto& in : gateway->receive(clock.now())) {
            auto it = users.find(in.user_id);
            if (it == users.end())
                continue;
            auto& u = it->second;
            u.touch(in.message.received_at);
            put(kUser, u.user_id, u);
            auto active = active_session.find(u.user_id);
            if (active == active_session.end()) {
                send_text(u, "Thanks for your message. Your coach will read it.", "inbound-" + std::to_string(in.message.update_id));
                continue;
            }
            const auto& s = sessions.at(active->second);
            apply(engine.advance(s, in.message, dialogs.at(s.dialog_id), clock.now()));
        }
    }

    void expire_sessions() {
        std::vector<DialogSession> active;
        for (const auto& [user_id, sid] : active_session)
            active.push_back(sessions.at(sid));
        for (auto& s : engine.expire_sessions(active, clock.now(), options.engine.idle_limit)) {
            sessions[s.session_id] = s;
            persist_session(s);
            active_session.erase(s.user_id);
            pop_queue(s.user_id);
        }
    }

    std::vector<ScheduledJob> fired_buffer;
};

CoachService::CoachService(ServiceOptions options, std::shared_ptr<gateway::Channel> channel, Clock clock)
    : options_(std::move(options)),
      gateway_(std::make_shared<gateway::Gateway>(std::move(channel), options_.retry)),
      impl_(std::make_unique<Impl>(options_, clock)) {
    options_.thresholds.check();
    auto& m = *impl_;
    m.gateway = gateway_.get();
    if (clock.mode() == Clock::Mode::simulated)
        gateway_->set_sleeper([](std::chrono::milliseconds) {});
    if (options_.data_dir)
        m.store = store::Store::open(*options_.data_dir, {options_.sync, options_.snapshot_every});
    m.load_builtins();
    m.load();
    m.ensure_pool_activities();
    m.ensure_model();
    for (const auto& [id, u] : m.users)
        if (u.channel_binding)
            gateway_->bind(u.channel_binding->chat_id, id);
    if (auto last = m.scheduler.last_tick(); last && m.clock.mode() == Clock::Mode::simulated && m.clock.now() < *last)
        m.clock.advance_to(*last);
}

CoachService::~CoachService() = default;

Timestamp CoachService::now() {
    std::lock_guard lock(mutex_);
    return impl_->clock.now();
}

UserProfile CoachService::register_user(const RegistrationRequest& request) {
    std::lock_guard lock(mutex_);
    auto& m = *impl_;
    UserProfile u;
    if (request.user_id) {
        u.user_id = *request.user_id;
        if (m.users.count(u.user_id))
            throw Error(ErrorKind::conflict, "user '" + u.user_id + "' already exists");
    } else {
        do
            u.user_id = m.user_ids.take();
        while (m.users.count(u.user_id));
    }
    if (trim(request.display_name).empty())
        throw Error(ErrorKind::domain, "display_name is empty");
    u.display_name = request.display_name;
    u.phone = request.phone;
    u.age = request.age;
    u.gender = request.gender;
    u.locale = request.locale;
    u.registered_at = m.clock.now();
    u.channel_binding = request.channel_binding.value_or(ChannelBinding{gateway_->channel().name(), u.user_id});
    if (u.channel_binding->chat_id.empty())
        throw Error(ErrorKind::domain, "chat_id is empty");
    for (const auto& [id, other] : m.users) {
        if (u.phone && other.phone == u.phone)
            throw Error(ErrorKind::conflict, "phone " + *u.phone + " is already registered");
        if (other.channel_binding == u.channel_binding)
            throw Error(ErrorKind::conflict, "chat " + u.channel_binding->chat_id + " is already bound to " + id);
    }
    check(u);
    m.put(kUser, u.user_id, u);
    m.users[u.user_id] = u;
    gateway_->bind(u.channel_binding->chat_id, u.user_id);
    if (options_.protocol.weeks > 0)
        m.scheduler.schedule_study_protocol(u.user_id, date_of(u.registered_at), options_.protocol);
    m.scheduler.schedule_inactivity_check(u.user_id, u.registered_at + options_.inactivity_check_every,
                                          options_.inactivity_check_every,
                                          u.registered_at + options_.inactivity_horizon);
    m.persist_jobs();
    m.start_or_queue(u.user_id, {kIntakeDialog, m.base_context(u)});
    return m.users.at(u.user_id);
}

std::vector<UserProfile> CoachService::users() const {
    std::lock_guard lock(mutex_);
    std::vector<UserProfile> out;
    for (const auto& [id, u] : impl_->users)
        out.push_back(u);
    return out;
}

UserProfile CoachService::user(const UserId& id) const {
    std::lock_guard lock(mutex_);
    return impl_->user(id);
}

void CoachService::set_inactivity_period(const UserId& id, Duration period) {
    std::lock_guard lock(mutex_);
    impl_->user(id);
    if (period <= Duration::zero())
        throw Error(ErrorKind::domain, "inactivity period must be positive");
    impl_->inactivity_periods[id] = period;
    impl_->put(kPeriod, id, period.count());
}

Activity CoachService::create_activity(Activity activity) {
    std::lock_guard lock(mutex_);
    auto& m = *impl_;
    if (activity.activity_id.empty())
        do
            activity.activity_id = m.activity_ids.take();
        while (m.activities.count(activity.activity_id));
    if (m.activities.count(activity.activity_id))
        throw Error(ErrorKind::conflict, "activity '" + activity.activity_id + "' already exists");
    check(activity);
    m.put(kActivity, activity.activity_id, activity);
    m.activities[activity.activity_id] = activity;
    return activity;
}

std::vector<Activity> CoachService::activities() const {
    std::lock_guard lock(mutex_);
    std::vector<Activity> out;
    for (const auto& [id, a] : impl_->activities)
        out.push_back(a);
    return out;
}

Plan CoachService::create_plan(Plan plan) {
    std::lock_guard lock(mutex_);
    auto& m = *impl_;
    if (plan.plan_id.empty())
        do
            plan.plan_id = m.plan_ids.take();
        while (m.plans.count(plan.plan_id) || m.pool.count(plan.plan_id));
    if (m.plans.count(plan.plan_id) || m.pool.count(plan.plan_id))
        throw Error(ErrorKind::conflict, "plan '" + plan.plan_id + "' already exists");
    try {
        check(plan);
    } catch (const Error& e) {
        throw Error(ErrorKind::invalid_plan, e.what());
    }
    for (const auto& id : plan.activity_ids)
        if (!m.activities.count(id))
            throw Error(ErrorKind::invalid_plan, "plan '" + plan.plan_id + "' references unknown activity '" + id + "'");
    m.put(kPlan, plan.plan_id, plan);
    m.plans[plan.plan_id] = plan;
    return plan;
}

std::vector<Plan> CoachService::plans() const {
    std::lock_guard lock(mutex_);
    std::vector<Plan> out;
    for (const auto& [id, p] : impl_->plans)
        out.push_back(p);
    return out;
}

std::vector<PoolPlan> CoachService::pool_plans() const {
    std::lock_guard lock(mutex_);
    std::vector<PoolPlan> out;
    for (const auto& [id, p] : impl_->pool)
        out.push_back(p);
    return out;
}

TaskBundle CoachService::create_task(TaskBundle task) {
    std::lock_guard lock(mutex_);
    auto& m = *impl_;
    if (task.task_id.empty())
        do
            task.task_id = m.task_ids.take();
        while (m.tasks.count(task.task_id));
    if (m.tasks.count(task.task_id))
        throw Error(ErrorKind::conflict, "task '" + task.task_id + "' already exists");
    check(task);
    for (const auto& id : task.plan_ids)
        if (!m.plans.count(id) && !m.pool.count(id))
            throw Error(ErrorKind::not_found, "unknown plan '" + id + "'");
    m.put(kTask, task.task_id, task);
    m.tasks[task.task_id] = task;
    return task;
}

std::vector<TaskBundle> CoachService::tasks() const {
    std::lock_guard lock(mutex_);
    std::vector<TaskBundle> out;
    for (const auto& [id, t] : impl_->tasks)
        out.push_back(t);
    return out;
}

AssignmentResult CoachService::assign_plan(const AssignmentRequest& request) {
    std::lock_guard lock(mutex_);
    auto& m = *impl_;
    const auto& u = m.user(request.user_id);
    if (!u.intake_complete)
        throw Error(ErrorKind::precondition, "user '" + u.user_id + "' has not completed intake");
    const Timestamp now = m.clock.now();

    Plan plan;
    if (request.plan) {
        plan = *request.plan;
        if (!plan.plan_id.empty() && m.plans.count(plan.plan_id))
            throw Error(ErrorKind::conflict, "plan '" + plan.plan_id + "' already exists");
        if (scheduler::plan_end(plan) < now)
            throw Error(ErrorKind::precondition, "plan expired on " + format_date(plan.expiration_date));
        plan = create_plan(plan);
    } else if (request.plan_id && m.plans.count(*request.plan_id)) {
        plan = m.plans.at(*request.plan_id);
        for (const auto& [id, a] : m.assignments)
            if (a.user_id == u.user_id && a.plan_id == plan.plan_id && a.status == AssignmentStatus::active)
                throw Error(ErrorKind::conflict, "plan '" + plan.plan_id + "' is already assigned to " + u.user_id);
        if (scheduler::plan_end(plan) < now)
            throw Error(ErrorKind::precondition, "plan '" + plan.plan_id + "' expired on " + format_date(plan.expiration_date));
    } else if (request.plan_id && m.pool.count(*request.plan_id)) {
        const auto& pp = m.pool.at(*request.plan_id);
        plan.category = pp.category;
        plan.description = pp.description;
        plan.activity_ids = pp.activity_ids;
        plan.trigger_time = pp.trigger_time;
        plan.feedback_time = pp.feedback_time;
        plan.start_date = request.start_date.value_or(date_of(now));
        plan.expiration_date = plan.start_date + std::chrono::days{pp.duration_days - 1};
        if (scheduler::plan_end(plan) < now)
            throw Error(ErrorKind::precondition, "plan would expire on " + format_date(plan.expiration_date));
        plan = create_plan(plan);
    } else {
        throw Error(ErrorKind::not_found,
                    request.plan_id ? "unknown plan '" + *request.plan_id + "'" : "no plan_id or plan given");
    }

    Assignment a{m.assignment_ids.take(), u.user_id, plan.plan_id, now, AssignmentStatus::active};
    AssignmentResult result{a, plan, m.scheduler.schedule_assignment(a, plan, now)};
    m.put(kAssignment, a.assignment_id, a);
    m.assignments[a.assignment_id] = a;
    AdherenceState st;
    st.assignment_id = a.assignment_id;
    st.user_id = a.user_id;
    m.put(kAdherence, a.assignment_id, st);
    m.adherence[a.assignment_id] = st;
    m.persist_jobs();
    m.run_jobs();  // the availability notification is due now
    return result;
}

std::vector<Assignment> CoachService::assignments(const std::optional<UserId>& user) const {
    std::lock_guard lock(mutex_);
    std::vector<Assignment> out;
    for (const auto& [id, a] : impl_->assignments)
        if (!user || a.user_id == *user)
            out.push_back(a);
    return out;
}

FeedbackResult CoachService::record_feedback(const UserId& user, std::vector<FeedbackEntry> entries) {
    std::lock_guard lock(mutex_);
    return impl_->record_feedback(user, std::move(entries));
}

std::vector<FeedbackEntry> CoachService::feedback(const UserId& user) const {
    std::lock_guard lock(mutex_);
    impl_->user(user);
    std::vector<FeedbackEntry> out;
    for (const auto& [id, f] : impl_->feedback)
        if (f.user_id == user)
            out.push_back(f);
    return out;
}

std::vector<UserAdherence> CoachService::adherence(const UserId& user) {
    std::lock_guard lock(mutex_);
    auto& m = *impl_;
    m.user(user);
    std::vector<UserAdherence> out;
    for (const auto& [id, a] : m.assignments)
        if (a.user_id == user && a.status != AssignmentStatus::cancelled)
            out.push_back({a, m.live_report(a), m.adherence[id]});
    return out;
}

PrivateMessage CoachService::send_private_message(const UserId& user, const std::string& body, std::optional<int> week) {
    std::lock_guard lock(mutex_);
    auto& m = *impl_;
    const auto& u = m.user(user);
    if (trim(body).empty())
        throw Error(ErrorKind::domain, "message body is empty");
    if (week && *week < 1)
        throw Error(ErrorKind::domain, "week_index must be positive");
    PrivateMessage msg{m.message_ids.take(), options_.coach_id, user, body, m.clock.now(), week};
    m.put(kMessage, msg.message_id, msg);
    m.messages[msg.message_id] = msg;
    m.send_text(u, "Message from your coach:\n" + body, msg.message_id);
    return msg;
}

std::vector<PrivateMessage> CoachService::messages(const UserId& user) const {
    std::lock_guard lock(mutex_);
    impl_->user(user);
    std::vector<PrivateMessage> out;
    for (const auto& [id, msg] : impl_->messages)
        if (msg.user_id == user)
            out.push_back(msg);
    return out;
}

std::vector<CoachAlert> CoachService::alerts(std::optional<bool> acknowledged) const {
    std::lock_guard lock(mutex_);
    std::vector<CoachAlert> out;
    for (const auto& [id, a] : impl_->alerts)
        if (!acknowledged || a.acknowledged == *acknowledged)
            out.push_back(a);
    return out;
}

CoachAlert CoachService::acknowledge(const std::string& alert_id) {
    std::lock_guard lock(mutex_);
    auto it = impl_->alerts.find(alert_id);
    if (it == impl_->alerts.end())
        throw Error(ErrorKind::not_found, "unknown alert '" + alert_id + "'");
    if (!it->second.acknowledged) {
        it->second.acknowledged = true;
        impl_->put(kAlert, alert_id, it->second);
    }
    return it->second;
}

std::vector<UserId> CoachService::dispatch_questionnaire(Instrument instrument, std::vector<UserId> users,
                                                         std::optional<int> week) {
    std::lock_guard lock(mutex_);
    auto& m = *impl_;
    if (instrument == Instrument::intake || instrument == Instrument::custom)
        throw Error(ErrorKind::domain, "instrument " + std::string(name_of(instrument)) + " cannot be dispatched");
    if (users.empty()) {
        for (const auto& [id, u] : m.users)
            if (u.intake_complete)
                users.push_back(id);
    }
    for (const auto& id : users)
        m.user(id);
    for (const auto& id : users) {
        const auto& u = m.user(id);
        const int w = week.value_or(static_cast<int>((date_of(m.clock.now()) - date_of(u.registered_at)).count() / 7) + 1);
        m.dispatch(u, instrument, w);
    }
    return users;
}

std::vector<QuestionnaireResponse> CoachService::responses(const std::optional<UserId>& user) const {
    std::lock_guard lock(mutex_);
    if (user)
        impl_->user(*user);
    std::vector<QuestionnaireResponse> out;
    for (const auto& [id, r] : impl_->responses)
        if (!user || r.user_id == *user)
            out.push_back(r);
    return out;
}

std::vector<DialogSession> CoachService::sessions(const UserId& user) const {
    std::lock_guard lock(mutex_);
    impl_->user(user);
    std::vector<DialogSession> out;
    for (const auto& [id, s] : impl_->sessions)
        if (s.user_id == user)
            out.push_back(s);
    return out;
}

const DialogDefinition& CoachService::dialog_definition(const std::string& dialog_id) const {
    std::lock_guard lock(mutex_);
    auto it = impl_->dialogs.find(dialog_id);
    if (it == impl_->dialogs.end())
        throw Error(ErrorKind::not_found, "unknown dialog '" + dialog_id + "'");
    return it->second;
}

std::vector<ScheduledJob> CoachService::tick(std::optional<Timestamp> now) {
    std::lock_guard lock(mutex_);
    auto& m = *impl_;
    if (now) {
        if (m.clock.mode() != Clock::Mode::simulated)
            throw Error(ErrorKind::precondition, "only a simulated clock can be moved");
        m.clock.advance_to(*now);
    }
    m.process_inbound();
    m.run_jobs();
    m.expire_sessions();
    return m.fired_buffer;
}

bool CoachService::ingest_webhook(const std::string& body) {
    std::lock_guard lock(mutex_);
    auto* webhook = dynamic_cast<gateway::WebhookChannel*>(&gateway_->channel());
    if (!webhook)
        throw Error(ErrorKind::precondition, "the active channel does not accept webhooks");
    const bool ok = webhook->ingest(body);
    impl_->process_inbound();
    return ok;
}

void CoachService::process_inbound() {
    std::lock_guard lock(mutex_);
    impl_->process_inbound();
}

reports::StudyData CoachService::study_data() {
    std::lock_guard lock(mutex_);
    auto& m = *impl_;
    reports::StudyData data;
    data.thresholds = options_.thresholds;
    for (const auto& [id, u] : m.users)
        data.users.push_back(u);
    for (const auto& [id, r] : m.responses)
        data.responses.push_back(r);
    std::map<UserId, std::pair<double, int>> sums;
    for (const auto& [id, a] : m.assignments) {
        if (a.status == AssignmentStatus::cancelled)
            continue;
        auto& s = sums[a.user_id];
        s.first += m.report_for(a, std::nullopt).overall_mean;
        s.second += 1;
    }
    for (const auto& [user, s] : sums)
        data.adherence[user] = s.first / s.second;
    return data;
}

const std::vector<store::QuarantineEntry>& CoachService::quarantine() const {
    std::lock_guard lock(mutex_);
    return impl_->store.quarantine();
}

std::vector<gateway::DeadLetter> CoachService::dead_letters() const {
    std::lock_guard lock(mutex_);
    std::vector<gateway::DeadLetter> out;
    for (const auto& [id, d] : impl_->dead_letters)
        out.push_back(d);
    return out;
}

std::vector<ScheduledJob> CoachService::jobs() const {
    std::lock_guard lock(mutex_);
    return impl_->scheduler.jobs();
}

Json CoachService::state_dump() const {
    std::lock_guard lock(mutex_);
    const auto& m = *impl_;
    auto dump_map = [](const auto& map) {
        Json j = Json::object();
        for (const auto& [k, v] : map)
            j[k] = v;
        return j;
    };
    Json j;
    j["users"] = dump_map(m.users);
    j["activities"] = dump_map(m.activities);
    j["plans"] = dump_map(m.plans);
    j["tasks"] = dump_map(m.tasks);
    j["assignments"] = dump_map(m.assignments);
    j["feedback"] = dump_map(m.feedback);
    j["adherence"] = dump_map(m.adherence);
    j["alerts"] = dump_map(m.alerts);
    j["messages"] = dump_map(m.messages);
    j["responses"] = dump_map(m.responses);
    j["sessions"] = dump_map(m.sessions);
    j["active_sessions"] = dump_map(m.active_session);
    Json queues = Json::object();
    for (const auto& [user, q] : m.queues)
        if (!q.empty())
            queues[user] = std::vector<QueuedDialog>(q.begin(), q.end());
    j["queues"] = queues;
    Json intake = Json::object();
    for (const auto& [user, vars] : m.intake_answers)
        for (const auto& [k, v] : vars)
            dialog::to_json(intake[user][k], v);
    j["intake"] = intake;
    Json periods = Json::object();
    for (const auto& [user, d] : m.inactivity_periods)
        periods[user] = d.count();
    j["inactivity_periods"] = periods;
    Json jobs = Json::array();
    for (const auto& job : m.scheduler.jobs())
        jobs.push_back(job);
    j["jobs"] = jobs;
    j["clock"] = m.clock_json();
    Json suppressed = Json::object();
    for (const auto& [user, ts] : m.monitor.suppressed())
        suppressed[user] = ts;
    j["inactivity_suppressed"] = suppressed;
    Json dead = Json::object();
    for (const auto& [id, d] : m.dead_letters)
        dead[id] = Json{{"message", d.message}, {"error", d.error}, {"attempts", d.attempts}, {"at", d.at}};
    j["dead_letters"] = dead;
    j["model"] = m.model;
    return j;
}

void CoachService::snapshot() {
    std::lock_guard lock(mutex_);
    impl_->store.snapshot();
}

void to_json(Json& j, const CoachAlert& a) {
    j = Json{{"alert_id", a.alert_id},         {"kind", a.kind},
             {"user_id", a.user_id},           {"created_at", a.created_at},
             {"acknowledged", a.acknowledged}, {"detail", a.detail},
             {"dedup_key", a.dedup_key}};
}

void from_json(const Json& j, CoachAlert& a) {
    a.alert_id = require_field<std::string>(j, "alert_id");
    a.kind = require_field<AlertKind>(j, "kind");
    a.user_id = require_field<std::string>(j, "user_id");
    a.created_at = require_field<Timestamp>(j, "created_at");
    a.acknowledged = j.value("acknowledged", false);
    a.detail = j.value("detail", "");
    a.dedup_key = require_field<std::string>(j, "dedup_key");
}

void to_json(Json& j, const PrivateMessage& m) {
    j = Json{{"message_id", m.message_id}, {"coach_id", m.coach_id}, {"user_id", m.user_id},
             {"body", m.body},             {"sent_at", m.sent_at}};
    put_optional(j, "week_index", m.week_index);
}

void from_json(const Json& j, PrivateMessage& m) {
    m.message_id = require_field<std::string>(j, "message_id");
    m.coach_id = require_field<std::string>(j, "coach_id");
    m.user_id = require_field<std::string>(j, "user_id");
    m.body = require_field<std::string>(j, "body");
    m.sent_at = require_field<Timestamp>(j, "sent_at");
    m.week_index = get_optional<int>(j, "week_index");
}

void to_json(Json& j, const AdherenceState& s) {
    j = Json{{"assignment_id", s.assignment_id}, {"user_id", s.user_id}, {"plan_mean", s.plan_mean}};
    put_optional(j, "closing", s.closing);
    put_optional(j, "final", s.final_report);
    put_optional(j, "last_category", s.last_category);
}

void from_json(const Json& j, AdherenceState& s) {
    s.assignment_id = require_field<std::string>(j, "assignment_id");
    s.user_id = require_field<std::string>(j, "user_id");
    s.plan_mean = require_field<double>(j, "plan_mean");
    s.closing = get_optional<AdherenceReport>(j, "closing");
    s.final_report = get_optional<AdherenceReport>(j, "final");
    s.last_category = get_optional<TernaryAdherence>(j, "last_category");
}

void to_json(Json& j, const QueuedDialog& q) { j = Json{{"dialog_id", q.dialog_id}, {"context", q.context}}; }

void from_json(const Json& j, QueuedDialog& q) {
    q.dialog_id = require_field<std::string>(j, "dialog_id");
    q.context = j.value("context", std::map<std::string, std::string>{});
}

void to_json(Json& j, const PoolPlan& p) {
    j = Json{{"plan_id", p.plan_id},           {"category", p.category},
             {"description", p.description},   {"activity_ids", p.activity_ids},
             {"trigger_time", p.trigger_time}, {"feedback_time", p.feedback_time},
             {"duration_days", p.duration_days}};
}

void from_json(const Json& j, PoolPlan& p) {
    p.plan_id = require_field<std::string>(j, "plan_id");
    p.category = j.value("category", "");
    p.description = j.value("description", "");
    p.activity_ids = require_field<std::vector<std::string>>(j, "activity_ids");
    p.trigger_time = require_field<TimeOfDay>(j, "trigger_time");
    p.feedback_time = require_field<TimeOfDay>(j, "feedback_time");
    p.duration_days = require_field<int>(j, "duration_days");
    if (p.duration_days < 1)
        throw Error(ErrorKind::domain, "pool plan '" + p.plan_id + "' has a non-positive duration");
}

}  // namespace coachai::service
