#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "coachai/domain.hpp"
#include "coachai/instruments.hpp"
#include "coachai/json_support.hpp"

namespace coachai::reports {

struct Table {
    std::string title;
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    std::string to_text() const;  // aligned columns, one title line
    std::string to_csv() const;
};

void to_json(Json& j, const Table& t);

struct StudyData {
    std::vector<UserProfile> users;
    std::vector<instruments::QuestionnaireResponse> responses;
    // Per user: mean of the full-window adherence over the user's assignments.
    // Users without assignments are absent.
    std::map<UserId, double> adherence;
    AdherenceThresholds thresholds;
};

std::string format_number(double v, int decimals = 4);

Table adherence_table(const StudyData& data);
// High/low group membership and group sizes.
Table adherence_split(const StudyData& data);

// Adherence plus, per instrument and dimension, each user's mean score over
// all administrations.
Table descriptives_table(const StudyData& data);

struct DimensionTests {
    std::string dimension;
    std::map<int, double> weekly_means;  // week -> mean over users
    std::map<int, int> weekly_n;
    // Each entry: test name -> result row (statistic, df1, df2, p) or a note.
    std::vector<std::vector<std::string>> rows;
};

struct InstrumentReport {
    instruments::Instrument instrument = instruments::Instrument::tam;
    std::string template_id;
    std::vector<int> weeks;
    std::vector<DimensionTests> dimensions;

    Table means_table() const;  // dimension x week
    Table tests_table() const;
};

// One-sample t of user means against the scale midpoint, between-subjects
// ANOVA high vs low adherence, repeated-measures ANOVA across weeks (users
// with every week), Bonferroni paired post-hoc. Degenerate inputs yield "n/a"
// rows with the reason.
InstrumentReport instrument_report(const StudyData& data, instruments::Instrument instrument);
void to_json(Json& j, const InstrumentReport& r);

struct HapaAssignment {
    UserId user_id;
    int week_index = 0;
    double intention = 0;
    double behavior = 0;
    instruments::HapaStage stage = instruments::HapaStage::non_intender;
};

// Latest HAPA response per user. Behavior is the user's adherence mapped
// onto the item scale, or the volition score when the user has no adherence.
std::vector<HapaAssignment> hapa_stages(const StudyData& data);
Table hapa_table(const StudyData& data);
Table hapa_distribution(const StudyData& data);

Table preference_table(const StudyData& data);

}  // namespace coachai::reports
