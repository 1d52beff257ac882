#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "coachai/domain.hpp"

namespace coachai::testing {

inline std::string read_fixture(const std::string& rel) {
    std::ifstream in(std::string(COACHAI_FIXTURES_DIR) + "/" + rel);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline Activity make_activity(const std::string& id, Recurrence rec = Recurrence::daily,
                              Topic topic = Topic::physical_activity) {
    Activity a;
    a.activity_id = id;
    a.title = "Activity " + id;
    a.topic = topic;
    a.recurrence = rec;
    a.effort = 2;
    return a;
}

// Monday 2024-01-01 .. Sunday 2024-01-07 unless told otherwise.
inline Plan make_plan(std::vector<ActivityId> ids, Date start = make_date(2024, 1, 1), int days = 7) {
    Plan p;
    p.plan_id = "p1";
    p.category = "physical_activity";
    p.description = "test plan";
    p.activity_ids = std::move(ids);
    p.trigger_time = TimeOfDay::hm(8, 0);
    p.feedback_time = TimeOfDay::hm(20, 0);
    p.start_date = start;
    p.expiration_date = start + std::chrono::days{days - 1};
    return p;
}

}  // namespace coachai::testing
