#include "coachai/api.hpp"

#include <httplib.h>

#include <sstream>

#include "coachai/error.hpp"
#include "coachai/log.hpp"

namespace coachai::api {

using service::CoachService;

struct Router::Route {
    std::string method;
    std::string pattern;
    std::vector<std::string> segments;
    std::function<Response(const Request&, const std::vector<std::string>&)> handler;
};

namespace {

std::vector<std::string> split_path(const std::string& path) {
    std::vector<std::string> out;
    std::stringstream ss(path);
    std::string part;
    while (std::getline(ss, part, '/'))
        if (!part.empty())
            out.push_back(part);
    return out;
}

Json problem(ErrorKind kind, const std::string& detail, int status) {
    return Json{{"error", std::string(to_string(kind))}, {"detail", detail}, {"status", status}};
}

Json body_json(const Request& req) {
    if (req.body.find_first_not_of(" \t\r\n") == std::string::npos)
        return Json::object();
    Json j = Json::parse(req.body);
    return j;
}

Json body_object(const Request& req) {
    Json j = body_json(req);
    if (!j.is_object())
        throw Error(ErrorKind::parse, "request body must be a JSON object");
    return j;
}

template <typename T>
Json array_of(const std::vector<T>& items) {
    Json j = Json::array();
    for (const auto& x : items)
        j.push_back(x);
    return j;
}

std::optional<std::string> query(const Request& req, const std::string& key) {
    auto it = req.query.find(key);
    if (it == req.query.end())
        return std::nullopt;
    return it->second;
}

std::optional<bool> query_bool(const Request& req, const std::string& key) {
    auto v = query(req, key);
    if (!v)
        return std::nullopt;
    if (*v == "true" || *v == "1")
        return true;
    if (*v == "false" || *v == "0")
        return false;
    throw Error(ErrorKind::domain, "query parameter '" + key + "' must be true or false");
}

Json user_json(const UserProfile& u) {
    Json j = u;
    return j;
}

Json adherence_json(const service::UserAdherence& a) {
    return Json{{"assignment", a.assignment}, {"report", a.report}, {"state", a.state}};
}

Json response_json(const instruments::QuestionnaireResponse& r) {
    Json j = r;
    try {
        const auto& tpl = instruments::builtin_template(r.template_id);
        j["scores"] = instruments::score_response(tpl, r, instruments::Completeness::lenient);
    } catch (const Error&) {
        j["scores"] = nullptr;
    }
    return j;
}

Json session_json(const dialog::DialogSession& s) {
    return Json{{"session_id", s.session_id},
                {"dialog_id", s.dialog_id},
                {"current_state", s.current_state},
                {"status", s.status},
                {"attempt_count", s.attempt_count},
                {"last_activity_at", s.last_activity_at},
                {"context", s.context}};
}

FeedbackEntry feedback_from(Json j, const UserId& user) {
    j["user_id"] = user;
    if (!j.contains("recorded_at"))
        j["recorded_at"] = Timestamp{};
    return j.get<FeedbackEntry>();
}

}  // namespace

int status_for(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::not_found:
        return 404;
    case ErrorKind::parse:
        return 400;
    case ErrorKind::conflict:
    case ErrorKind::stale_write:
    case ErrorKind::invalid_state:
        return 409;
    case ErrorKind::transport:
        return 502;
    default:
        return 422;
    }
}

Router::Router(CoachService& svc, std::optional<std::string> token) : service_(svc), token_(std::move(token)) {
    auto add = [this](std::string method, std::string pattern,
                      std::function<Response(const Request&, const std::vector<std::string>&)> h) {
        routes_.push_back({std::move(method), pattern, split_path(pattern), std::move(h)});
    };
    auto& s = service_;

    add("GET", "/api/health", [&s](const Request&, const auto&) {
        return Response{200, Json{{"status", "ok"}, {"time", s.now()}}};
    });

    add("POST", "/api/users", [&s](const Request& req, const auto&) {
        const Json j = body_object(req);
        service::RegistrationRequest r;
        r.user_id = get_optional<std::string>(j, "user_id");
        r.display_name = require_field<std::string>(j, "display_name");
        r.phone = get_optional<std::string>(j, "phone");
        r.age = require_field<int>(j, "age");
        if (j.contains("gender"))
            r.gender = require_field<Gender>(j, "gender");
        r.locale = j.value("locale", "en");
        r.channel_binding = get_optional<ChannelBinding>(j, "channel_binding");
        return Response{201, user_json(s.register_user(r))};
    });
    add("GET", "/api/users", [&s](const Request&, const auto&) { return Response{200, array_of(s.users())}; });
    add("GET", "/api/users/{id}", [&s](const Request&, const auto& p) { return Response{200, user_json(s.user(p[0]))}; });
    add("POST", "/api/users/{id}/inactivity-period", [&s](const Request& req, const auto& p) {
        const Json j = body_object(req);
        Duration period{};
        if (j.contains("period"))
            period = j.at("period").is_number() ? Duration{j.at("period").get<std::int64_t>()}
                                                : parse_duration(j.at("period").get<std::string>());
        else if (j.contains("days"))
            period = std::chrono::days{require_field<std::int64_t>(j, "days")};
        else
            period = Duration{require_field<std::int64_t>(j, "seconds")};
        s.set_inactivity_period(p[0], period);
        return Response{200, Json{{"user_id", p[0]}, {"period_seconds", period.count()}}};
    });
    add("GET", "/api/users/{id}/adherence", [&s](const Request&, const auto& p) {
        Json out = Json::array();
        for (const auto& a : s.adherence(p[0]))
            out.push_back(adherence_json(a));
        return Response{200, out};
    });
    add("POST", "/api/users/{id}/messages", [&s](const Request& req, const auto& p) {
        const Json j = body_object(req);
        return Response{201, s.send_private_message(p[0], require_field<std::string>(j, "body"),
                                                    get_optional<int>(j, "week_index"))};
    });
    add("GET", "/api/users/{id}/messages", [&s](const Request&, const auto& p) {
        return Response{200, array_of(s.messages(p[0]))};
    });
    add("GET", "/api/users/{id}/responses", [&s](const Request&, const auto& p) {
        Json out = Json::array();
        for (const auto& r : s.responses(p[0]))
            out.push_back(response_json(r));
        return Response{200, out};
    });
    add("GET", "/api/users/{id}/sessions", [&s](const Request& req, const auto& p) {
        const auto status = query(req, "status");
        Json out = Json::array();
        for (const auto& x : s.sessions(p[0]))
            if (!status || name_of(x.status) == *status)
                out.push_back(session_json(x));
        return Response{200, out};
    });
    add("GET", "/api/users/{id}/feedback", [&s](const Request&, const auto& p) {
        return Response{200, array_of(s.feedback(p[0]))};
    });
    add("POST", "/api/users/{id}/external-feedback", [&s](const Request& req, const auto& p) {
        const Json j = body_json(req);
        std::vector<FeedbackEntry> entries;
        if (j.is_array())
            for (const auto& e : j)
                entries.push_back(feedback_from(e, p[0]));
        else if (j.is_object())
            entries.push_back(feedback_from(j, p[0]));
        else
            throw Error(ErrorKind::parse, "expected a feedback object or array");
        const auto result = s.record_feedback(p[0], std::move(entries));
        return Response{201, Json{{"entries", result.entries}, {"report", result.live}, {"state", result.state}}};
    });

    add("GET", "/api/activities", [&s](const Request&, const auto&) { return Response{200, array_of(s.activities())}; });
    add("POST", "/api/activities", [&s](const Request& req, const auto&) {
        Json j = body_object(req);
        if (!j.contains("activity_id"))
            j["activity_id"] = "";
        return Response{201, s.create_activity(j.get<Activity>())};
    });
    add("GET", "/api/plans", [&s](const Request&, const auto&) { return Response{200, array_of(s.plans())}; });
    add("GET", "/api/plans/pool", [&s](const Request&, const auto&) { return Response{200, array_of(s.pool_plans())}; });
    add("POST", "/api/plans", [&s](const Request& req, const auto&) {
        Json j = body_object(req);
        if (!j.contains("plan_id"))
            j["plan_id"] = "";
        return Response{201, s.create_plan(j.get<Plan>())};
    });
    add("GET", "/api/tasks", [&s](const Request&, const auto&) { return Response{200, array_of(s.tasks())}; });
    add("POST", "/api/tasks", [&s](const Request& req, const auto&) {
        Json j = body_object(req);
        if (!j.contains("task_id"))
            j["task_id"] = "";
        return Response{201, s.create_task(j.get<TaskBundle>())};
    });

    add("POST", "/api/assignments", [&s](const Request& req, const auto&) {
        const Json j = body_object(req);
        service::AssignmentRequest r;
        r.user_id = require_field<std::string>(j, "user_id");
        r.plan_id = get_optional<std::string>(j, "plan_id");
        if (j.contains("plan") && !j.at("plan").is_null()) {
            Json plan = j.at("plan");
            if (!plan.contains("plan_id"))
                plan["plan_id"] = "";
            r.plan = plan.get<Plan>();
        }
        r.start_date = get_optional<Date>(j, "start_date");
        const auto result = s.assign_plan(r);
        return Response{201, Json{{"assignment", result.assignment}, {"plan", result.plan}, {"jobs", result.jobs}}};
    });
    add("GET", "/api/assignments", [&s](const Request& req, const auto&) {
        return Response{200, array_of(s.assignments(query(req, "user_id")))};
    });

    add("GET", "/api/alerts", [&s](const Request& req, const auto&) {
        return Response{200, array_of(s.alerts(query_bool(req, "acknowledged")))};
    });
    add("POST", "/api/alerts/{id}/ack", [&s](const Request&, const auto& p) {
        return Response{200, s.acknowledge(p[0])};
    });

    add("POST", "/api/questionnaires/{instrument}/dispatch", [&s](const Request& req, const auto& p) {
        const Json j = body_object(req);
        const auto instrument = parse_enum<instruments::Instrument>(p[0]);
        auto users = j.value("user_ids", std::vector<std::string>{});
        const auto reached = s.dispatch_questionnaire(instrument, std::move(users), get_optional<int>(j, "week"));
        return Response{202, Json{{"instrument", p[0]}, {"dispatched", reached}}};
    });

    add("GET", "/api/reports/descriptives", [&s](const Request&, const auto&) {
        return Response{200, reports::descriptives_table(s.study_data())};
    });
    add("GET", "/api/reports/instrument/{instrument}", [&s](const Request&, const auto& p) {
        const auto instrument = parse_enum<instruments::Instrument>(p[0]);
        if (instrument != instruments::Instrument::tam && instrument != instruments::Instrument::attrakdiff &&
            instrument != instruments::Instrument::hapa)
            throw Error(ErrorKind::domain, "no weekly report for instrument " + p[0]);
        return Response{200, reports::instrument_report(s.study_data(), instrument)};
    });
    add("GET", "/api/reports/preferences", [&s](const Request&, const auto&) {
        return Response{200, reports::preference_table(s.study_data())};
    });
    add("GET", "/api/reports/hapa-stages", [&s](const Request&, const auto&) {
        const auto data = s.study_data();
        return Response{200, Json{{"participants", reports::hapa_table(data)},
                                  {"distribution", reports::hapa_distribution(data)}}};
    });

    add("GET", "/api/admin/quarantine", [&s](const Request&, const auto&) {
        return Response{200, array_of(s.quarantine())};
    });
    add("GET", "/api/admin/dead-letters", [&s](const Request&, const auto&) {
        Json out = Json::array();
        for (const auto& d : s.dead_letters())
            out.push_back(Json{{"message", d.message}, {"error", d.error}, {"attempts", d.attempts}, {"at", d.at}});
        return Response{200, out};
    });

    add("POST", "/webhook", [&s](const Request& req, const auto&) {
        return Response{200, Json{{"ok", s.ingest_webhook(req.body)}}};
    });
}

Router::~Router() = default;

std::vector<std::pair<std::string, std::string>> Router::routes() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& r : routes_)
        out.emplace_back(r.method, r.pattern);
    return out;
}

Response Router::handle(const Request& req) {
    const auto parts = split_path(req.path);
    const bool open = req.path == "/api/health" || req.path == "/webhook";
    if (token_ && !open && req.authorization != "Bearer " + *token_)
        return Response{401, Json{{"error", "unauthorized"}, {"detail", "missing or wrong bearer token"}, {"status", 401}}};

    bool path_matched = false;
    for (const auto& route : routes_) {
        if (route.segments.size() != parts.size())
            continue;
        std::vector<std::string> params;
        bool match = true;
        for (std::size_t i = 0; i < parts.size() && match; ++i) {
            if (route.segments[i].front() == '{')
                params.push_back(parts[i]);
            else
                match = route.segments[i] == parts[i];
        }
        if (!match)
            continue;
        path_matched = true;
        if (route.method != req.method)
            continue;
        try {
            return route.handler(req, params);
        } catch (const Error& e) {
            const int status = status_for(e.kind());
            return Response{status, problem(e.kind(), e.what(), status)};
        } catch (const nlohmann::json::exception& e) {
            return Response{400, problem(ErrorKind::parse, std::string("malformed request: ") + e.what(), 400)};
        } catch (const std::exception& e) {
            log::error("unhandled error on " + req.method + " " + req.path + ": " + e.what());
            return Response{500, Json{{"error", "internal"}, {"detail", e.what()}, {"status", 500}}};
        }
    }
    if (path_matched)
        return Response{405, Json{{"error", "method_not_allowed"}, {"detail", req.method + " " + req.path}, {"status", 405}}};
    return Response{404, problem(ErrorKind::not_found, "no route for " + req.method + " " + req.path, 404)};
}

struct HttpServer::Impl {
    explicit Impl(Router& r) : router(r) {}
    Router& router;
    httplib::Server server;
};

HttpServer::HttpServer(Router& router) : impl_(std::make_unique<Impl>(router)) {
    auto handler = [this](const httplib::Request& hreq, httplib::Response& hres) {
        Request req;
        req.method = hreq.method;
        req.path = hreq.path;
        for (const auto& [k, v] : hreq.params)
            req.query[k] = v;
        req.body = hreq.body;
        if (hreq.has_header("Authorization"))
            req.authorization = hreq.get_header_value("Authorization");
        const Response res = impl_->router.handle(req);
        hres.status = res.status;
        hres.set_content(res.body.dump(), "application/json");
    };
    impl_->server.Get(".*", handler);
    impl_->server.Post(".*", handler);
    impl_->server.Put(".*", handler);
    impl_->server.Delete(".*", handler);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
    const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
    if (bound <= 0)
        throw Error(ErrorKind::invalid_state, "cannot bind " + host + ":" + std::to_string(port));
    return bound;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
    if (impl_)
        impl_->server.stop();
}

}  // namespace coachai::api
