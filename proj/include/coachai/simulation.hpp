#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "coachai/domain.hpp"
#include "coachai/json_support.hpp"
#include "coachai/reports.hpp"
#include "coachai/time.hpp"

namespace coachai::sim {

struct ParticipantProfile {
    std::string profile_id;
    Topic topic = Topic::physical_activity;
    ActivityClass intake_class = ActivityClass::vigorous;  // class the intake answers are drawn from
    double completion_probability = 0.5;
    int delay_min_minutes = 5;  // first reply to a fresh prompt
    int delay_max_minutes = 90;
    // "<instrument>.<dimension>" -> mean on the item scale at week 2.
    std::map<std::string, double> questionnaire_means;
    double questionnaire_sd = 0.8;
    double intention_trend = 0.0;  // added to intention items per week after week 2
    std::uint64_t seed = 0;

    friend bool operator==(const ParticipantProfile&, const ParticipantProfile&) = default;
};

struct StudyConfig {
    std::string run_id = "run";
    int participants = 19;
    int weeks = 4;
    std::uint64_t seed = 7;
    std::optional<double> completion_probability;  // overrides every profile
    Duration tick_step = std::chrono::minutes{15};
    Date start = make_date(2024, 1, 1);  // a Monday
};

// Checks weeks >= 2, participants >= 1, probability in [0, 1], positive step.
void check(const StudyConfig& config);

std::vector<ParticipantProfile> make_profiles(const StudyConfig& config);

struct StudyResult {
    Json manifest;
    std::map<std::string, std::string> files;  // bundle file name -> contents
    reports::StudyData data;
    Json state;  // the service's state_dump() at the end of the run
};

// Runs a whole study against an embedded service whose store lives in
// `output_dir`/store (in memory when output_dir is empty) and returns the
// report bundle. Nothing is written outside the store.
StudyResult simulate_study(const StudyConfig& config, const std::optional<std::filesystem::path>& output_dir);

// Report files derived from study data alone.
std::map<std::string, std::string> render_reports(const reports::StudyData& data);

void write_bundle(const StudyResult& result, const std::filesystem::path& output_dir);

}  // namespace coachai::sim
