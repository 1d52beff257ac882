#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>

#include "coachai/error.hpp"
#include "coachai/rng.hpp"
#include "coachai/scheduler.hpp"
#include "test_support.hpp"

using namespace coachai;
using namespace coachai::scheduler;
using namespace std::chrono_literals;
using coachai::testing::make_plan;

namespace {

Assignment assignment_for(const std::string& id, const Plan& plan, const std::string& user = "u1") {
    Assignment a;
    a.assignment_id = id;
    a.user_id = user;
    a.plan_id = plan.plan_id;
    return a;
}

std::size_t count_kind(const std::vector<ScheduledJob>& jobs, JobKind kind) {
    return static_cast<std::size_t>(
        std::count_if(jobs.begin(), jobs.end(), [&](const ScheduledJob& j) { return j.kind == kind; }));
}

Timestamp day_at(int y, int m, int d, int hh, int mm = 0) { return at(make_date(y, m, d), TimeOfDay::hm(hh, mm)); }

}  // namespace

TEST(ScheduleAssignment, SevenDayPlanBeforeStart) {
    Scheduler s;
    auto plan = make_plan({"walk"});
    auto jobs = s.schedule_assignment(assignment_for("a1", plan), plan, day_at(2023, 12, 30, 10));
    EXPECT_EQ(jobs.size(), 16u);
    EXPECT_EQ(count_kind(jobs, JobKind::plan_notification), 8u);
    EXPECT_EQ(count_kind(jobs, JobKind::feedback_collection), 7u);
    EXPECT_EQ(count_kind(jobs, JobKind::plan_expiration), 1u);
    EXPECT_TRUE(jobs.front().payload.availability);
    EXPECT_EQ(jobs.front().due_at, day_at(2023, 12, 30, 10));
    EXPECT_EQ(jobs[1].due_at, day_at(2024, 1, 1, 8));
    EXPECT_EQ(jobs.back().due_at, day_at(2024, 1, 7, 23, 59) + 59s);
}

TEST(ScheduleAssignment, OneDayMidWindowAndExpired) {
    Scheduler s;
    auto one = make_plan({"walk"}, make_date(2024, 1, 1), 1);
    EXPECT_EQ(s.schedule_assignment(assignment_for("a1", one), one, day_at(2024, 1, 1, 7)).size(), 4u);
    auto week = make_plan({"walk"});
    EXPECT_EQ(s.schedule_assignment(assignment_for("a2", week), week, day_at(2024, 1, 3, 12)).size(), 1u + 5 + 5 + 1);
    try {
        s.schedule_assignment(assignment_for("a3", week), week, day_at(2024, 1, 8, 0));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::precondition);
    }
    auto cancelled = assignment_for("a4", week);
    cancelled.status = AssignmentStatus::cancelled;
    EXPECT_THROW(s.schedule_assignment(cancelled, week, day_at(2024, 1, 1, 0)), Error);
}

TEST(StudyProtocol, CalendarAndCounts) {
    Scheduler s;
    auto jobs = s.schedule_study_protocol("u1", make_date(2024, 1, 1));
    ASSERT_EQ(jobs.size(), 13u);
    std::map<std::string, std::vector<Date>> dispatch_days;
    for (const auto& j : jobs)
        if (j.kind == JobKind::questionnaire_dispatch)
            dispatch_days[*j.payload.instrument].push_back(date_of(j.due_at));
    const std::vector<Date> sundays{make_date(2024, 1, 14), make_date(2024, 1, 21), make_date(2024, 1, 28)};
    for (const char* instrument : {"TAM", "HAPA", "AttrakDiff"}) {
        EXPECT_EQ(dispatch_days[instrument], sundays) << instrument;
        for (auto d : dispatch_days[instrument])
            EXPECT_EQ(weekday_index(d), 0);
    }
    EXPECT_EQ(count_kind(jobs, JobKind::coach_followup_reminder), 4u);

    auto other = s.schedule_study_protocol("u2", make_date(2024, 1, 1));
    EXPECT_EQ(jobs.size() + other.size(), 26u);
    for (const auto& j : other)
        EXPECT_EQ(j.payload.user_id, "u2");
    try {
        s.schedule_study_protocol("u1", make_date(2024, 2, 1));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::conflict);
    }
}

TEST(Tick, OrderingAndLateFlags) {
    Scheduler s;
    auto plan = make_plan({"walk"});
    s.schedule_assignment(assignment_for("a1", plan), plan, day_at(2023, 12, 31, 12));
    EXPECT_EQ(s.tick(day_at(2023, 12, 31, 12)).size(), 1u);  // availability
    EXPECT_TRUE(s.tick(day_at(2024, 1, 1, 7)).empty());
    // t1 = Jan 1 08:00, t2 = Jan 1 20:00, t3 = Jan 2 08:00; previous tick 07:00 < t1.
    auto fired = s.tick(day_at(2024, 1, 2, 8));
    ASSERT_EQ(fired.size(), 3u);
    EXPECT_EQ(fired[0].due_at, day_at(2024, 1, 1, 8));
    EXPECT_EQ(fired[1].due_at, day_at(2024, 1, 1, 20));
    EXPECT_EQ(fired[2].due_at, day_at(2024, 1, 2, 8));
    for (const auto& j : fired) {
        EXPECT_FALSE(j.late);
        EXPECT_EQ(j.fired_at, day_at(2024, 1, 2, 8));
    }
    EXPECT_TRUE(s.tick(day_at(2024, 1, 2, 8)).empty());
    s.tick(day_at(2024, 1, 2, 10));
    fired = s.tick(day_at(2024, 1, 3, 9));
    ASSERT_EQ(fired.size(), 2u);
    EXPECT_FALSE(fired[0].late);
    EXPECT_THROW(s.tick(day_at(2024, 1, 3, 8)), Error);
}

TEST(Tick, JobsAddedAfterTheirDueTickFireLate) {
    Scheduler s;
    s.tick(day_at(2024, 1, 3, 12));
    // Assigned at noon on day 3: today's 08:00 notification predates the last tick.
    auto plan = make_plan({"walk"});
    s.schedule_assignment(assignment_for("a1", plan), plan, day_at(2024, 1, 3, 12));
    auto fired = s.tick(day_at(2024, 1, 4, 9));
    ASSERT_EQ(fired.size(), 4u);
    EXPECT_EQ(fired[0].due_at, day_at(2024, 1, 3, 8));
    EXPECT_TRUE(fired[0].late);
    EXPECT_FALSE(fired[1].late);  // availability, due exactly at the previous tick
    EXPECT_FALSE(fired[2].late);
    EXPECT_FALSE(fired[3].late);
}

TEST(Tick, TieBreakByJobId) {
    Scheduler s;
    s.schedule_study_protocol("u1", make_date(2024, 1, 1));
    s.tick(day_at(2024, 1, 1, 0));
    auto fired = s.tick(day_at(2024, 1, 14, 18));
    std::vector<std::string> ids;
    for (const auto& j : fired)
        if (j.due_at == day_at(2024, 1, 14, 18))
            ids.push_back(j.job_id);
    EXPECT_EQ(ids.size(), 3u);
    EXPECT_TRUE(std::is_sorted(ids.begin(), ids.end()));
}

TEST(Tick, RecurringCatchUpFiresOnce) {
    Scheduler s;
    s.schedule_inactivity_check("u1", day_at(2024, 1, 1, 9), 24h, day_at(2024, 1, 10, 9));
    EXPECT_EQ(s.tick(day_at(2024, 1, 1, 9)).size(), 1u);
    auto fired = s.tick(day_at(2024, 1, 5, 12));  // three occurrences missed
    ASSERT_EQ(fired.size(), 1u);
    EXPECT_EQ(fired[0].due_at, day_at(2024, 1, 2, 9));
    std::size_t total = 2;
    for (int d = 6; d <= 12; ++d)
        total += s.tick(day_at(2024, 1, d, 12)).size();
    // Occurrences Jan 6..10 at 09:00; nothing past the bound.
    EXPECT_EQ(total, 2u + 5u);
    for (const auto& j : s.jobs())
        EXPECT_LE(j.due_at, day_at(2024, 1, 10, 9));
}

TEST(Tick, NothingForAssignmentAfterExpiration) {
    Scheduler s;
    auto plan = make_plan({"walk"}, make_date(2024, 1, 1), 3);
    s.schedule_assignment(assignment_for("a1", plan), plan, day_at(2024, 1, 1, 0));
    // Simulate a crash: the expiration fires during the window, remaining jobs must die.
    auto all = s.jobs();
    for (auto& j : all)
        if (j.kind == JobKind::plan_expiration)
            j.due_at = day_at(2024, 1, 2, 12);
    s.restore(all, std::nullopt, s.next_id());
    std::vector<ScheduledJob> fired;
    for (int h = 0; h < 24 * 5; ++h) {
        auto f = s.tick(day_at(2024, 1, 1, 0) + std::chrono::hours{h});
        fired.insert(fired.end(), f.begin(), f.end());
    }
    bool expired = false;
    for (const auto& j : fired) {
        if (j.kind == JobKind::plan_expiration)
            expired = true;
        else if (expired)
            ADD_FAILURE() << "job " << j.job_id << " fired after expiration";
    }
    EXPECT_TRUE(expired);
}

TEST(Tick, CancelAssignment) {
    Scheduler s;
    auto plan = make_plan({"walk"});
    s.schedule_assignment(assignment_for("a1", plan), plan, day_at(2024, 1, 1, 0));
    EXPECT_EQ(s.cancel_assignment("a1"), 16);
    EXPECT_TRUE(s.tick(day_at(2024, 2, 1, 0)).empty());
}

TEST(Tick, PropertiesOverRandomTickSequences) {
    Rng rng(99);
    for (int trial = 0; trial < 200; ++trial) {
        auto build = [&] {
            Scheduler s;
            for (int u = 0; u < 3; ++u) {
                auto plan = make_plan({"walk"}, make_date(2024, 1, 1 + u), 2 + u);
                s.schedule_assignment(assignment_for("a" + std::to_string(u), plan, "u" + std::to_string(u)), plan,
                                      day_at(2024, 1, 1, 0));
                s.schedule_study_protocol("u" + std::to_string(u), make_date(2024, 1, 1));
                s.schedule_inactivity_check("u" + std::to_string(u), day_at(2024, 1, 1, 6), 24h,
                                            day_at(2024, 1, 29, 0));
            }
            return s;
        };
        std::vector<Timestamp> ticks;
        Timestamp t = day_at(2024, 1, 1, 0);
        while (t < day_at(2024, 1, 30, 0)) {
            ticks.push_back(t);
            t += std::chrono::minutes{1 + static_cast<long>(rng.below(60 * 72))};
        }
        ticks.push_back(day_at(2024, 1, 30, 0));
        auto a = build();
        auto b = build();
        std::set<std::string> seen;
        std::set<std::string> expired;
        std::vector<ScheduledJob> seq_a;
        for (auto now : ticks) {
            auto fa = a.tick(now);
            auto fb = b.tick(now);
            ASSERT_EQ(fa, fb);
            for (const auto& j : fa) {
                ASSERT_TRUE(seen.insert(j.job_id).second) << "refired " << j.job_id;
                ASSERT_GE(*j.fired_at, j.due_at);
                if (j.kind == JobKind::plan_expiration)
                    expired.insert(*j.payload.assignment_id);
                else if (j.payload.assignment_id)
                    ASSERT_FALSE(expired.count(*j.payload.assignment_id));
            }
        }
        for (const auto& j : a.jobs())
            if (j.recurrence)
                ASSERT_LE(j.due_at, j.recurrence->until);
        for (const auto& j : a.jobs())
            ASSERT_TRUE(j.fired || j.cancelled) << j.job_id;
    }
}

TEST(Inactivity, ScanExamples) {
    InactivityMonitor m;
    const Timestamp now = day_at(2024, 1, 20, 9);
    UserProfile silent;
    silent.user_id = "silent";
    silent.last_interaction_at = now - std::chrono::hours{24 * 8};
    UserProfile active;
    active.user_id = "active";
    active.last_interaction_at = now - 24h;
    std::vector<UserProfile> users{silent, active};
    auto alerts = m.scan(users, now);
    ASSERT_EQ(alerts.size(), 1u);
    EXPECT_EQ(alerts[0].user_id, "silent");
    EXPECT_EQ(alerts[0].silent_for, std::chrono::hours{24 * 8});
    EXPECT_TRUE(m.scan(users, now + 24h).empty());
    users[0].touch(now + 25h);
    EXPECT_TRUE(m.scan(users, now + 26h).empty());
    EXPECT_EQ(m.scan(users, now + 25h + std::chrono::hours{24 * 7} + 1s).size(), 2u);
}

TEST(Inactivity, PerUserPeriodAndNoInteraction) {
    InactivityMonitor m;
    UserProfile fresh;
    fresh.user_id = "fresh";
    fresh.registered_at = day_at(2024, 1, 1, 0);
    std::vector<UserProfile> users{fresh};
    EXPECT_TRUE(m.scan(users, day_at(2024, 1, 3, 0)).empty());
    EXPECT_EQ(m.scan(users, day_at(2024, 1, 3, 0), {{"fresh", 24h}}).size(), 1u);
    EXPECT_THROW(m.scan(users, day_at(2024, 1, 3, 0), {{"fresh", 0s}}), Error);
}

TEST(Jobs, JsonRoundTrip) {
    Scheduler s;
    auto plan = make_plan({"walk"});
    s.schedule_assignment(assignment_for("a1", plan), plan, day_at(2024, 1, 1, 0));
    s.schedule_study_protocol("u1", make_date(2024, 1, 1));
    s.schedule_inactivity_check("u1", day_at(2024, 1, 1, 6), 24h, day_at(2024, 1, 29, 0));
    s.tick(day_at(2024, 1, 3, 0));
    for (const auto& job : s.jobs()) {
        Json j = job;
        EXPECT_EQ(Json::parse(j.dump()).get<ScheduledJob>(), job);
    }
}
