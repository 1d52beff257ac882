#include <gtest/gtest.h>

#include <httplib.h>

#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "coachai/api.hpp"
#include "coachai/instruments.hpp"
#include "service_support.hpp"
#include "temp_dir.hpp"

using namespace coachai;
using coachai::testing::Harness;
using coachai::testing::TempDir;

namespace {

struct Api : Harness {
    explicit Api(std::optional<std::string> token = std::nullopt, service::ServiceOptions options = {})
        : Harness(std::move(options)), router(*svc, std::move(token)) {}

    api::Response call(const std::string& method, const std::string& path, const Json& body = nullptr,
                       std::map<std::string, std::string> query = {}, std::optional<std::string> auth = std::nullopt) {
        return router.handle({method, path, std::move(query), body.is_null() ? "" : body.dump(), std::move(auth)});
    }

    void enroll(const std::string& id) {
        ASSERT_EQ(call("POST", "/api/users", Json{{"user_id", id}, {"display_name", "User " + id}, {"age", 30}}).status,
                  201);
        complete_intake(id);
    }

    api::Router router;
};

const Json kPlan = {{"plan_id", "p1"},
                    {"category", "physical_activity"},
                    {"description", "Walk daily"},
                    {"activity_ids", {"walk"}},
                    {"trigger_time", "08:00"},
                    {"feedback_time", "20:00"},
                    {"start_date", "2024-01-08"},
                    {"expiration_date", "2024-01-14"}};

const Json kActivity = {{"activity_id", "walk"},
                        {"title", "Walk"},
                        {"instructions", "Walk for 30 minutes"},
                        {"topic", "physical_activity"},
                        {"recurrence", "daily"},
                        {"effort", 2}};

void expect_problem(const api::Response& r, int status) {
    EXPECT_EQ(r.status, status) << r.body.dump();
    EXPECT_EQ(r.body.value("status", 0), status);
    EXPECT_TRUE(r.body.contains("error"));
    EXPECT_TRUE(r.body.contains("detail"));
}

}  // namespace

TEST(Api, ListsEveryContractEndpoint) {
    Api a;
    std::set<std::pair<std::string, std::string>> routes;
    for (auto& r : a.router.routes())
        routes.insert(r);
    const std::vector<std::pair<std::string, std::string>> contract{
        {"POST", "/api/users"},
        {"GET", "/api/users"},
        {"GET", "/api/users/{id}"},
        {"POST", "/api/users/{id}/inactivity-period"},
        {"GET", "/api/activities"},
        {"POST", "/api/activities"},
        {"GET", "/api/plans"},
        {"POST", "/api/plans"},
        {"POST", "/api/tasks"},
        {"POST", "/api/assignments"},
        {"GET", "/api/users/{id}/adherence"},
        {"POST", "/api/users/{id}/messages"},
        {"GET", "/api/users/{id}/messages"},
        {"GET", "/api/alerts"},
        {"POST", "/api/alerts/{id}/ack"},
        {"POST", "/api/questionnaires/{instrument}/dispatch"},
        {"GET", "/api/users/{id}/responses"},
        {"GET", "/api/reports/descriptives"},
        {"GET", "/api/reports/instrument/{instrument}"},
        {"GET", "/api/reports/preferences"},
        {"GET", "/api/reports/hapa-stages"},
        {"GET", "/api/admin/quarantine"},
        {"POST", "/api/users/{id}/external-feedback"},
    };
    for (const auto& r : contract)
        EXPECT_TRUE(routes.count(r)) << r.first << " " << r.second;
}

TEST(Api, EmptyDeployment) {
    Api a;
    auto r = a.call("GET", "/api/alerts", nullptr, {{"acknowledged", "false"}});
    EXPECT_EQ(r.status, 200);
    EXPECT_EQ(r.body, Json::array());
    EXPECT_EQ(a.call("GET", "/api/users").body, Json::array());
    EXPECT_EQ(a.call("GET", "/api/admin/quarantine").body, Json::array());
    EXPECT_EQ(a.call("GET", "/api/health").body.at("status"), "ok");
}

TEST(Api, RoutingErrors) {
    Api a;
    expect_problem(a.call("GET", "/api/nothing"), 404);
    EXPECT_EQ(a.call("DELETE", "/api/users").status, 405);
    expect_problem(a.router.handle({"POST", "/api/users", {}, "{not json", std::nullopt}), 400);
    expect_problem(a.call("POST", "/api/users", Json{{"display_name", "x"}}), 422);
    expect_problem(a.call("GET", "/api/users/ghost"), 404);
    expect_problem(a.call("GET", "/api/alerts", nullptr, {{"acknowledged", "maybe"}}), 422);
}

TEST(Api, BearerToken) {
    Api a("s3cret");
    EXPECT_EQ(a.call("GET", "/api/users").status, 401);
    EXPECT_EQ(a.call("GET", "/api/users", nullptr, {}, "Bearer wrong").status, 401);
    EXPECT_EQ(a.call("GET", "/api/users", nullptr, {}, "Bearer s3cret").status, 200);
    EXPECT_EQ(a.call("GET", "/api/health").status, 200);
}

TEST(Api, UsersAndInactivityPeriod) {
    Api a;
    auto r = a.call("POST", "/api/users",
                    Json{{"user_id", "u1"}, {"display_name", "One"}, {"age", 30}, {"phone", "+1"}});
    ASSERT_EQ(r.status, 201);
    EXPECT_EQ(r.body.at("activity_class"), "unclassified");
    expect_problem(a.call("POST", "/api/users", Json{{"user_id", "u2"}, {"display_name", "Two"}, {"age", 30}, {"phone", "+1"}}),
                   409);
    EXPECT_EQ(a.call("GET", "/api/users/u1").body.at("display_name"), "One");
    EXPECT_EQ(a.call("GET", "/api/users").body.size(), 1u);

    r = a.call("POST", "/api/users/u1/inactivity-period", Json{{"period", "3d"}});
    EXPECT_EQ(r.status, 200);
    EXPECT_EQ(r.body.at("period_seconds"), 3 * 86400);
    EXPECT_EQ(a.call("POST", "/api/users/u1/inactivity-period", Json{{"days", 2}}).body.at("period_seconds"), 2 * 86400);
    expect_problem(a.call("POST", "/api/users/u1/inactivity-period", Json{{"days", 0}}), 422);
    expect_problem(a.call("POST", "/api/users/ghost/inactivity-period", Json{{"days", 2}}), 404);
}

TEST(Api, ContentCatalogue) {
    Api a;
    const auto pool_activities = a.call("GET", "/api/activities").body.size();
    EXPECT_EQ(pool_activities, 9u);
    EXPECT_EQ(a.call("POST", "/api/activities", kActivity).status, 201);
    EXPECT_EQ(a.call("GET", "/api/activities").body.size(), pool_activities + 1);
    expect_problem(a.call("POST", "/api/activities", kActivity), 409);
    EXPECT_EQ(a.call("POST", "/api/plans", kPlan).status, 201);
    EXPECT_EQ(a.call("GET", "/api/plans").body.at(0).at("plan_id"), "p1");
    Json bad = kPlan;
    bad["plan_id"] = "p2";
    bad["activity_ids"] = Json::array();
    expect_problem(a.call("POST", "/api/plans", bad), 422);
    EXPECT_EQ(a.call("POST", "/api/tasks", Json{{"task_id", "t1"}, {"title", "Move"}, {"plan_ids", {"p1"}}}).status, 201);
    EXPECT_EQ(a.call("GET", "/api/tasks").body.size(), 1u);
    EXPECT_EQ(a.call("GET", "/api/plans/pool").body.size(), 3u);
}

TEST(Api, AssignmentAdherenceAndFeedback) {
    Api a;
    a.call("POST", "/api/activities", kActivity);
    a.call("POST", "/api/plans", kPlan);
    a.call("POST", "/api/users", Json{{"user_id", "u1"}, {"display_name", "One"}, {"age", 30}});
    expect_problem(a.call("POST", "/api/assignments", Json{{"user_id", "u1"}, {"plan_id", "p1"}}), 422);
    a.complete_intake("u1");

    auto r = a.call("POST", "/api/assignments", Json{{"user_id", "u1"}, {"plan_id", "p1"}});
    ASSERT_EQ(r.status, 201) << r.body.dump();
    EXPECT_EQ(r.body.at("jobs").size(), 16u);
    const std::string assignment = r.body.at("assignment").at("assignment_id");
    expect_problem(a.call("POST", "/api/assignments", Json{{"user_id", "u1"}, {"plan_id", "p1"}}), 409);
    EXPECT_EQ(a.call("GET", "/api/assignments", nullptr, {{"user_id", "u1"}}).body.size(), 1u);

    r = a.call("GET", "/api/users/u1/adherence");
    ASSERT_EQ(r.body.size(), 1u);
    EXPECT_EQ(r.body.at(0).at("report").at("overall_mean"), 0.0);

    a.svc->tick(at(make_date(2024, 1, 9), TimeOfDay::hm(9, 0)));
    r = a.call("POST", "/api/users/u1/external-feedback",
               Json{{"assignment_id", assignment}, {"activity_id", "walk"}, {"occurrence_date", "2024-01-08"},
                    {"completion", 1.0}, {"note", "8000 steps"}});
    ASSERT_EQ(r.status, 201) << r.body.dump();
    EXPECT_DOUBLE_EQ(r.body.at("report").at("overall_mean").get<double>(), 0.5);
    EXPECT_EQ(a.call("GET", "/api/users/u1/feedback").body.size(), 1u);
    expect_problem(a.call("POST", "/api/users/u1/external-feedback",
                          Json{{"assignment_id", assignment}, {"activity_id", "walk"}, {"occurrence_date", "2024-02-01"},
                               {"completion", 1.0}}),
                   422);
}

TEST(Api, AlertsAndAcknowledge) {
    Api a;
    a.enroll("u1");
    auto open = a.call("GET", "/api/alerts", nullptr, {{"acknowledged", "false"}}).body;
    ASSERT_EQ(open.size(), 1u);
    EXPECT_EQ(open[0].at("kind"), "profile_complete");
    const std::string id = open[0].at("alert_id");
    auto first = a.call("POST", "/api/alerts/" + id + "/ack");
    auto second = a.call("POST", "/api/alerts/" + id + "/ack");
    EXPECT_EQ(first.status, 200);
    EXPECT_EQ(first.body, second.body);
    EXPECT_EQ(a.call("GET", "/api/alerts", nullptr, {{"acknowledged", "false"}}).body, Json::array());
    expect_problem(a.call("POST", "/api/alerts/nope/ack"), 404);
}

TEST(Api, MessagesAndSessions) {
    Api a;
    a.call("POST", "/api/users", Json{{"user_id", "u1"}, {"display_name", "One"}, {"age", 30}});
    auto sessions = a.call("GET", "/api/users/u1/sessions", nullptr, {{"status", "active"}}).body;
    ASSERT_EQ(sessions.size(), 1u);
    EXPECT_EQ(sessions[0].at("dialog_id"), "intake");
    EXPECT_EQ(a.call("POST", "/api/users/u1/messages", Json{{"body", "Welcome"}, {"week_index", 1}}).status, 201);
    expect_problem(a.call("POST", "/api/users/u1/messages", Json{{"body", ""}}), 422);
    auto msgs = a.call("GET", "/api/users/u1/messages").body;
    ASSERT_EQ(msgs.size(), 1u);
    EXPECT_EQ(msgs[0].at("body"), "Welcome");
}

TEST(Api, QuestionnairesAndReports) {
    Api a;
    for (const std::string id : {"u1", "u2", "u3", "u4"})
        a.enroll(id);
    expect_problem(a.call("POST", "/api/questionnaires/NOPE/dispatch", Json::object()), 422);
    const auto& tam = instruments::builtin_template(instruments::Instrument::tam);
    int k = 0;
    for (int week = 2; week <= 4; ++week) {
        auto r = a.call("POST", "/api/questionnaires/TAM/dispatch", Json{{"week", week}});
        ASSERT_EQ(r.status, 202);
        EXPECT_EQ(r.body.at("dispatched").size(), 4u);
        for (const std::string id : {"u1", "u2", "u3", "u4"}) {
            std::map<std::string, std::string> answers;
            for (const auto& item : tam.items)
                answers[item.item_id] = std::to_string(3 + (k++ % 4));
            a.answer_all(id, answers);
        }
    }
    auto responses = a.call("GET", "/api/users/u1/responses").body;
    ASSERT_EQ(responses.size(), 4u);  // intake plus three TAM rounds
    EXPECT_TRUE(responses[1].at("scores").contains("per_dimension"));

    auto report = a.call("GET", "/api/reports/instrument/TAM");
    ASSERT_EQ(report.status, 200);
    EXPECT_EQ(report.body.at("weeks"), (Json{2, 3, 4}));
    ASSERT_EQ(report.body.at("dimensions").size(), 5u);
    for (const auto& d : report.body.at("dimensions")) {
        EXPECT_EQ(d.at("weekly_means").size(), 3u);
        EXPECT_EQ(d.at("tests").at(0).at("test"), "one-sample t vs 4.0");
        EXPECT_EQ(d.at("tests").at(0).at("df1"), "3");
    }
    expect_problem(a.call("GET", "/api/reports/instrument/XYZ"), 422);
    auto desc = a.call("GET", "/api/reports/descriptives").body;
    EXPECT_EQ(desc.at("columns").at(0), "measure");
    EXPECT_EQ(a.call("GET", "/api/reports/preferences").status, 200);
    auto hapa = a.call("GET", "/api/reports/hapa-stages");
    EXPECT_EQ(hapa.status, 200);
    EXPECT_TRUE(hapa.body.contains("participants"));
    EXPECT_TRUE(hapa.body.contains("distribution"));
}

TEST(Api, QuarantinedRecordIsListed) {
    TempDir dir;
    service::ServiceOptions options;
    options.data_dir = dir.path();
    {
        Api a(std::nullopt, options);
        a.call("POST", "/api/users", Json{{"user_id", "u1"}, {"display_name", "One"}, {"age", 30}});
        a.call("POST", "/api/users/u1/messages", Json{{"body", "hello"}});
    }
    // Corrupt the line holding the private message.
    std::ifstream in(dir.path() / "events.jsonl");
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);)
        lines.push_back(line);
    in.close();
    bool corrupted = false;
    for (auto& line : lines)
        if (line.find("\"hello\"") != std::string::npos) {
            line.replace(line.find("\"hello\""), 7, "\"HELLO\"");
            corrupted = true;
        }
    ASSERT_TRUE(corrupted);
    std::ofstream out(dir.path() / "events.jsonl", std::ios::trunc);
    for (auto& line : lines)
        out << line << "\n";
    out.close();

    Api a(std::nullopt, options);
    auto q = a.call("GET", "/api/admin/quarantine").body;
    ASSERT_EQ(q.size(), 1u);
    EXPECT_EQ(q[0].at("source"), "events.jsonl");
    EXPECT_GT(q[0].at("line").get<int>(), 0);
    EXPECT_EQ(a.call("GET", "/api/users/u1").status, 200);
    EXPECT_EQ(a.call("GET", "/api/users/u1/messages").body, Json::array());
}

TEST(Api, DeadLettersAfterRetriesAreListed) {
    Api a;
    a.call("POST", "/api/users", Json{{"user_id", "u1"}, {"display_name", "One"}, {"age", 30}});
    a.console->fail_next(100);
    auto r = a.call("POST", "/api/users/u1/messages", Json{{"body", "hello"}});
    EXPECT_EQ(r.status, 201);
    auto dead = a.call("GET", "/api/admin/dead-letters").body;
    ASSERT_EQ(dead.size(), 1u);
    EXPECT_EQ(dead[0].at("attempts"), 3);
}

TEST(Api, HttpRoundTrip) {
    Api a("tok");
    api::HttpServer server(a.router);
    const int port = server.bind("127.0.0.1", 0);
    ASSERT_GT(port, 0);
    std::thread t([&] { server.listen(); });

    httplib::Client client("127.0.0.1", port);
    client.set_connection_timeout(5);
    auto health = client.Get("/api/health");
    ASSERT_TRUE(health);
    EXPECT_EQ(health->status, 200);
    EXPECT_EQ(Json::parse(health->body).at("status"), "ok");

    auto denied = client.Get("/api/users");
    ASSERT_TRUE(denied);
    EXPECT_EQ(denied->status, 401);

    httplib::Headers auth{{"Authorization", "Bearer tok"}};
    auto created = client.Post("/api/users", auth, R"({"user_id":"u1","display_name":"One","age":30})",
                               "application/json");
    ASSERT_TRUE(created);
    EXPECT_EQ(created->status, 201);
    auto alerts = client.Get("/api/alerts?acknowledged=false", auth);
    ASSERT_TRUE(alerts);
    EXPECT_EQ(alerts->status, 200);
    EXPECT_EQ(Json::parse(alerts->body), Json::array());
    auto missing = client.Get("/api/users/ghost", auth);
    ASSERT_TRUE(missing);
    EXPECT_EQ(missing->status, 404);
    EXPECT_EQ(Json::parse(missing->body).at("error"), "not_found");

    server.stop();
    t.join();
}
