#include "coachai/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "coachai/api.hpp"
#include "coachai/classifier.hpp"
#include "coachai/error.hpp"
#include "coachai/gateway.hpp"
#include "coachai/instruments.hpp"
#include "coachai/rng.hpp"
#include "coachai/service.hpp"

namespace coachai::sim {

namespace fs = std::filesystem;
using instruments::Instrument;

namespace {

constexpr std::array kTopics{Topic::physical_activity, Topic::healthy_diet, Topic::mental_wellness};
constexpr std::array kWeeklyInstruments{Instrument::tam, Instrument::attrakdiff, Instrument::hapa};
constexpr auto kEngagedWindow = std::chrono::minutes{30};

std::string pool_plan_for(Topic topic) {
    switch (topic) {
    case Topic::physical_activity:
        return "pool_move_more";
    case Topic::healthy_diet:
        return "pool_eat_well";
    case Topic::mental_wellness:
        return "pool_unwind";
    }
    return "pool_move_more";
}

std::string number_text(double v) {
    char buf[32];
    if (v == std::floor(v))
        std::snprintf(buf, sizeof buf, "%.0f", v);
    else
        std::snprintf(buf, sizeof buf, "%.1f", v);
    return buf;
}

struct Participant {
    ParticipantProfile profile;
    UserId user_id;
    std::string chat_id;
    Rng rng{0};
    std::map<std::string, double> intake;  // feature name -> value
    std::size_t seen = 0;
    std::optional<Timestamp> respond_at;
    std::optional<Timestamp> last_answer;
    std::set<std::string> silent_sessions;
};

class Runner {
public:
    Runner(const StudyConfig& config, const std::optional<fs::path>& dir)
        : config_(config),
          console_(std::make_shared<gateway::ConsoleChannel>()),
          service_(service_options(dir), console_, Clock::simulated(Timestamp{config.start})),
          router_(service_) {}

    StudyResult run() {
        const Timestamp start{config_.start};
        const Timestamp registration = start + std::chrono::hours{9};
        const Timestamp end = start + std::chrono::days{7 * config_.weeks} + std::chrono::hours{1};
        const Timestamp probe = at(config_.start + std::chrono::days{7 * config_.weeks - 1}, TimeOfDay::hm(12, 0));

        for (Timestamp t = start; t <= end; t += config_.tick_step) {
            service_.tick(t);
            if (t == registration)
                register_all();
            for (int week = 2; week <= config_.weeks; ++week)
                if (t == at(config_.start + std::chrono::days{7 * (week - 1)}, TimeOfDay::hm(7, 0)))
                    assign_all(config_.start + std::chrono::days{7 * (week - 1)});
            if (t == probe)
                call("POST", "/api/questionnaires/preference/dispatch", Json{{"week", config_.weeks}}, 202);
            for (auto& p : participants_)
                act(p, t);
        }

        StudyResult result;
        result.data = service_.study_data();
        result.files = render_reports(result.data);
        result.state = service_.state_dump();
        result.manifest = manifest(start, end);
        Json files = Json::array();
        for (const auto& [name, text] : result.files)
            files.push_back(name);
        files.push_back("manifest.json");
        result.manifest["files"] = files;
        return result;
    }

private:
    service::ServiceOptions service_options(const std::optional<fs::path>& dir) {
        service::ServiceOptions o;
        if (dir)
            o.data_dir = *dir / "store";
        o.sync = false;
        o.snapshot_every = 20000;
        o.protocol.weeks = config_.weeks;
        return o;
    }

    Json call(const std::string& method, const std::string& path, const Json& body, int expected,
              std::map<std::string, std::string> query = {}) {
        api::Request req{method, path, std::move(query), body.is_null() ? "" : body.dump(), std::nullopt};
        auto res = router_.handle(req);
        if (res.status != expected)
            throw Error(ErrorKind::invalid_state, method + " " + path + " returned " + std::to_string(res.status) +
                                                      ": " + res.body.dump());
        return res.body;
    }

    void register_all() {
        for (const auto& profile : make_profiles(config_)) {
            Participant p;
            p.profile = profile;
            p.rng = Rng(profile.seed);
            p.user_id = profile.profile_id;
            p.chat_id = "chat-" + profile.profile_id;
            const auto features = classifier::sample_features(profile.intake_class, p.rng);
            for (std::size_t i = 0; i < features.size(); ++i)
                p.intake[classifier::feature_names()[i]] = features[i];
            p.intake["age"] = std::round(p.intake["age"]);
            call("POST", "/api/users",
                 Json{{"user_id", p.user_id},
                      {"display_name", "Participant " + profile.profile_id.substr(1)},
                      {"age", static_cast<int>(p.intake["age"])},
                      {"channel_binding", {{"channel", "console"}, {"chat_id", p.chat_id}}}},
                 201);
            participants_.push_back(std::move(p));
        }
    }

    void assign_all(Date monday) {
        for (auto& p : participants_) {
            api::Request req{"POST", "/api/assignments", {},
                             Json{{"user_id", p.user_id},
                                  {"plan_id", pool_plan_for(p.profile.topic)},
                                  {"start_date", monday}}
                                 .dump(),
                             std::nullopt};
            if (router_.handle(req).status != 201)
                ++assignment_failures_;
        }
    }

    void act(Participant& p, Timestamp t) {
        const auto& transcript = console_->transcript(p.chat_id);
        if (transcript.size() > p.seen && !p.respond_at) {
            const bool engaged = p.last_answer && t - *p.last_answer <= kEngagedWindow;
            const auto span = static_cast<std::uint64_t>(p.profile.delay_max_minutes - p.profile.delay_min_minutes + 1);
            p.respond_at = engaged ? t
                                   : t + std::chrono::minutes{p.profile.delay_min_minutes +
                                                              static_cast<int>(p.rng.below(span))};
        }
        if (!p.respond_at || t < *p.respond_at)
            return;
        p.respond_at.reset();
        for (int guard = 0; guard < 1000; ++guard) {
            const Json active = call("GET", "/api/users/" + p.user_id + "/sessions", nullptr, 200, {{"status", "active"}});
            if (active.empty())
                break;
            const Json& s = active.front();
            const std::string sid = s.at("session_id").get<std::string>();
            if (p.silent_sessions.count(sid))
                break;
            const auto& def = service_.dialog_definition(s.at("dialog_id").get<std::string>());
            const auto* state = def.find(s.at("current_state").get<std::string>());
            if (!state)
                break;
            const auto text = answer(p, s, def, *state);
            if (!text) {
                p.silent_sessions.insert(sid);
                break;
            }
            console_->inject(p.chat_id, *text, t);
            service_.process_inbound();
            p.last_answer = t;
        }
        p.seen = console_->transcript(p.chat_id).size();
    }

    std::optional<std::string> answer(Participant& p, const Json& session, const dialog::DialogDefinition& def,
                                      const dialog::StateSpec& state) {
        const std::string& dialog_id = def.dialog_id;
        const double prob = p.profile.completion_probability;
        if (dialog_id == "daily_feedback") {
            if (state.state_id == "note")
                return std::string("no");
            if (p.rng.bernoulli(prob))
                return std::string("Yes");
            if (p.rng.bernoulli(prob))
                return std::string("No");
            return std::nullopt;
        }
        if (dialog_id == "questionnaire_intro")
            return std::string("Start");
        if (state.capture) {
            if (auto it = p.intake.find(*state.capture); it != p.intake.end())
                return number_text(fit(state, it->second));
            for (const auto& tpl : instruments::builtin_templates()) {
                if (tpl.template_id != dialog_id)
                    continue;
                const auto* item = tpl.find(*state.capture);
                if (!item)
                    break;
                if (!item->answer_scores.empty())
                    return preference_answer(p, *item);
                const auto ctx = session.at("context");
                const int week = ctx.contains("week") ? std::stoi(ctx.at("week").get<std::string>()) : 0;
                return number_text(questionnaire_value(p, tpl, *item, week));
            }
        }
        const auto labels = state.labels();
        if (!labels.empty())
            return labels.front();
        return std::nullopt;
    }

    static double fit(const dialog::StateSpec& state, double v) {
        if (state.input == dialog::InputKind::scale)
            v = std::round(v);
        else if (state.input == dialog::InputKind::numeric)
            v = std::round(v * 10) / 10;
        return std::clamp(v, state.min, state.max);
    }

    std::string preference_answer(Participant& p, const instruments::Item& item) {
        std::vector<std::pair<double, std::string>> by_score;
        for (const auto& [label, score] : item.answer_scores)
            by_score.emplace_back(score, label);
        std::sort(by_score.begin(), by_score.end());
        static constexpr std::array kWeights{0.2, 0.3, 0.5};
        const double u = p.rng.uniform();
        double acc = 0;
        for (std::size_t i = 0; i < by_score.size(); ++i) {
            acc += i < kWeights.size() ? kWeights[i] : 0.0;
            if (u < acc)
                return by_score[i].second;
        }
        return by_score.back().second;
    }

    double questionnaire_value(Participant& p, const instruments::QuestionnaireTemplate& tpl,
                               const instruments::Item& item, int week) {
        const std::string key = std::string(name_of(tpl.instrument)) + "." + item.dimension;
        double mean = item.scale.midpoint();
        if (auto it = p.profile.questionnaire_means.find(key); it != p.profile.questionnaire_means.end())
            mean = it->second;
        if (item.dimension == "behavioral_intention" || item.dimension == "intention")
            mean += p.profile.intention_trend * std::max(0, week - 2);
        double v = mean;
        for (int tries = 0; tries < 20; ++tries) {
            v = p.rng.normal(mean, p.profile.questionnaire_sd);
            if (v >= item.scale.min - 0.5 && v <= item.scale.max + 0.5)
                break;
        }
        v = std::clamp(std::round(v), item.scale.min, item.scale.max);
        return item.reverse ? item.scale.min + item.scale.max - v : v;
    }

    Json manifest(Timestamp start, Timestamp end) {
        Json m;
        m["run_id"] = config_.run_id;
        m["seed"] = config_.seed;
        m["participants"] = config_.participants;
        m["weeks"] = config_.weeks;
        m["tick_step_seconds"] = config_.tick_step.count();
        m["start"] = start;
        m["end"] = end;
        put_optional(m, "completion_probability_override", config_.completion_probability);

        const auto users = service_.users();
        Json profiles = Json::array();
        for (const auto& p : participants_) {
            auto u = std::find_if(users.begin(), users.end(), [&](const auto& x) { return x.user_id == p.user_id; });
            profiles.push_back(Json{{"profile_id", p.profile.profile_id},
                                    {"topic", p.profile.topic},
                                    {"intake_class", p.profile.intake_class},
                                    {"activity_class", u == users.end() ? ActivityClass::unclassified : u->activity_class},
                                    {"completion_probability", p.profile.completion_probability}});
        }
        m["profiles"] = profiles;

        std::map<std::string, int> scheduled;
        std::map<std::string, int> fired;
        int late = 0;
        int notifications_after_expiry = 0;
        const auto jobs = service_.jobs();
        std::map<std::string, Timestamp> expiry;
        for (const auto& job : jobs)
            if (job.kind == scheduler::JobKind::plan_expiration && job.payload.assignment_id)
                expiry[*job.payload.assignment_id] = job.due_at;
        for (const auto& job : jobs) {
            const std::string kind(name_of(job.kind));
            ++scheduled[kind];
            if (job.fired) {
                ++fired[kind];
                late += job.late ? 1 : 0;
                if (job.kind == scheduler::JobKind::plan_notification && job.payload.assignment_id) {
                    auto e = expiry.find(*job.payload.assignment_id);
                    if (e != expiry.end() && job.fired_at && *job.fired_at > e->second)
                        ++notifications_after_expiry;
                }
            }
        }
        m["jobs"] = Json{{"scheduled", scheduled},
                         {"fired", fired},
                         {"late", late},
                         {"notifications_after_expiry", notifications_after_expiry}};

        std::map<std::string, std::map<std::string, int>> per_user;
        std::map<std::string, int> per_template;
        for (const auto& r : service_.responses(std::nullopt)) {
            ++per_user[r.user_id][r.template_id];
            ++per_template[r.template_id];
        }
        m["responses"] = per_template;
        m["responses_per_participant"] = per_user;

        std::map<std::string, int> alerts;
        for (const auto& a : service_.alerts())
            ++alerts[std::string(name_of(a.kind))];
        m["alerts"] = alerts;
        std::size_t feedback = 0;
        for (const auto& p : participants_)
            feedback += service_.feedback(p.user_id).size();
        m["feedback_entries"] = feedback;
        m["messages_delivered"] = console_->delivered_count();
        m["dead_letters"] = service_.dead_letters().size();
        m["assignment_failures"] = assignment_failures_;
        return m;
    }

    StudyConfig config_;
    std::shared_ptr<gateway::ConsoleChannel> console_;
    service::CoachService service_;
    api::Router router_;
    std::vector<Participant> participants_;
    int assignment_failures_ = 0;
};

void prepare_store_dir(const fs::path& store_dir) {
    if (!fs::exists(store_dir))
        return;
    for (const auto& entry : fs::directory_iterator(store_dir)) {
        const auto name = entry.path().filename().string();
        if (name != "events.jsonl" && name != "snapshot.json" && name != "snapshot.json.tmp")
            throw Error(ErrorKind::precondition,
                        store_dir.string() + " holds " + name + ", which is not part of a store; refusing to reuse it");
    }
    fs::remove_all(store_dir);
}

}  // namespace

void check(const StudyConfig& config) {
    if (config.weeks < 2)
        throw Error(ErrorKind::domain, "a study needs at least 2 weeks (baseline plus intervention)");
    if (config.participants < 1)
        throw Error(ErrorKind::domain, "a study needs at least one participant");
    if (config.completion_probability &&
        !(*config.completion_probability >= 0.0 && *config.completion_probability <= 1.0))
        throw Error(ErrorKind::domain, "completion probability must lie in [0, 1]");
    if (config.tick_step <= Duration::zero() || std::chrono::hours{1} % config.tick_step != Duration::zero())
        throw Error(ErrorKind::domain, "tick step must be positive and divide one hour");
    if (weekday_index(config.start) != 1)
        throw Error(ErrorKind::domain, "a study starts on a Monday");
}

std::vector<ParticipantProfile> make_profiles(const StudyConfig& config) {
    Rng master(config.seed);
    std::vector<ParticipantProfile> out;
    for (int i = 0; i < config.participants; ++i) {
        ParticipantProfile p;
        char id[16];
        std::snprintf(id, sizeof id, "P%02d", i + 1);
        p.profile_id = id;
        p.seed = master.next();
        Rng rng(p.seed ^ 0x9e3779b97f4a7c15ULL);
        p.topic = kTopics[static_cast<std::size_t>(i) % kTopics.size()];
        p.intake_class = classifier::kLabels[static_cast<std::size_t>(i + i / 3) % classifier::kClassCount];
        // Alternate engaged and disengaged participants so both adherence groups exist.
        p.completion_probability = config.completion_probability
                                       ? *config.completion_probability
                                       : (i % 2 == 0 ? rng.uniform(0.7, 0.98) : rng.uniform(0.1, 0.45));
        const double base = 3.2 + 2.8 * p.completion_probability;
        for (auto instrument : kWeeklyInstruments) {
            const auto& tpl = instruments::builtin_template(instrument);
            for (const auto& dim : tpl.dimensions)
                p.questionnaire_means[std::string(name_of(instrument)) + "." + dim] =
                    std::clamp(base + rng.uniform(-0.4, 0.4), 1.5, 6.5);
        }
        p.intention_trend = p.completion_probability >= 0.5 ? 0.3 : -0.1;
        out.push_back(std::move(p));
    }
    return out;
}

StudyResult simulate_study(const StudyConfig& config, const std::optional<fs::path>& output_dir) {
    check(config);
    if (output_dir) {
        fs::create_directories(*output_dir);
        prepare_store_dir(*output_dir / "store");
    }
    Runner runner(config, output_dir);
    return runner.run();
}

std::map<std::string, std::string> render_reports(const reports::StudyData& data) {
    std::map<std::string, std::string> files;
    auto both = [&](const std::string& stem, const reports::Table& t) {
        files[stem + ".csv"] = t.to_csv();
        files[stem + ".txt"] = t.to_text();
    };
    both("adherence", reports::adherence_table(data));
    both("adherence_split", reports::adherence_split(data));
    both("descriptives", reports::descriptives_table(data));
    for (auto instrument : kWeeklyInstruments) {
        const auto r = reports::instrument_report(data, instrument);
        const std::string stem = "instrument_" + std::string(name_of(instrument));
        const auto means = r.means_table();
        const auto tests = r.tests_table();
        files[stem + ".txt"] = means.to_text() + "\n" + tests.to_text();
        files[stem + "_means.csv"] = means.to_csv();
        files[stem + "_tests.csv"] = tests.to_csv();
    }
    const auto hapa = reports::hapa_table(data);
    const auto distribution = reports::hapa_distribution(data);
    files["hapa_stages.csv"] = hapa.to_csv();
    files["hapa_distribution.csv"] = distribution.to_csv();
    files["hapa_stages.txt"] = hapa.to_text() + "\n" + distribution.to_text();
    both("preferences", reports::preference_table(data));

    std::string responses = "response_id,user_id,template_id,week_index,item_id,value\n";
    for (const auto& r : data.responses)
        for (const auto& [item, value] : r.answers)
            responses += r.response_id + "," + r.user_id + "," + r.template_id + "," + std::to_string(r.week_index) +
                         "," + item + "," + reports::format_number(value, 2) + "\n";
    files["responses.csv"] = responses;
    return files;
}

void write_bundle(const StudyResult& result, const fs::path& output_dir) {
    fs::create_directories(output_dir);
    auto write = [&](const std::string& name, const std::string& text) {
        std::ofstream out(output_dir / name, std::ios::binary | std::ios::trunc);
        out << text;
        if (!out)
            throw Error(ErrorKind::invalid_state, "cannot write " + (output_dir / name).string());
    };
    for (const auto& [name, text] : result.files)
        write(name, text);
    write("manifest.json", result.manifest.dump(2) + "\n");
}

}  // namespace coachai::sim
