#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "coachai/dialog.hpp"
#include "coachai/domain.hpp"
#include "coachai/json_support.hpp"
#include "coachai/time.hpp"

namespace coachai::instruments {

using coachai::from_json;
using coachai::to_json;

enum class Instrument { tam, attrakdiff, hapa, intake, preference, custom };

struct Scale {
    double min = 1;
    double max = 7;

    double midpoint() const { return (min + max) / 2; }
    bool contains(double v) const { return v >= min && v <= max; }
    friend bool operator==(const Scale&, const Scale&) = default;
};

struct Item {
    std::string item_id;
    std::string text;
    std::string dimension;
    Scale scale;
    bool reverse = false;
    // Choice items: answer label -> raw score. Empty for plain scale items.
    std::map<std::string, double> answer_scores;

    // min + max - raw for reverse-scored items, raw otherwise.
    double scored(double raw) const { return reverse ? scale.min + scale.max - raw : raw; }
    friend bool operator==(const Item&, const Item&) = default;
};

struct QuestionnaireTemplate {
    std::string template_id;
    Instrument instrument = Instrument::custom;
    std::vector<std::string> dimensions;
    std::vector<Item> items;
    std::string note;
    // HAPA staging cutoff; defaults to the intention items' scale midpoint.
    std::optional<double> stage_cutoff;

    const Item* find(std::string_view item_id) const;
    friend bool operator==(const QuestionnaireTemplate&, const QuestionnaireTemplate&) = default;
};

// Throws instrument errors: unknown dimension, bad scale, duplicate ids,
// wrong dimension set for TAM/AttrakDiff/HAPA.
void check(const QuestionnaireTemplate& tpl);

QuestionnaireTemplate parse_template(std::string_view json_text);

// TAM, AttrakDiff, HAPA, intake and preference templates shipped with the library.
const std::vector<QuestionnaireTemplate>& builtin_templates();
const QuestionnaireTemplate& builtin_template(Instrument instrument);
const QuestionnaireTemplate& builtin_template(std::string_view template_id);

struct QuestionnaireResponse {
    std::string response_id;
    UserId user_id;
    std::string template_id;
    int week_index = 0;
    std::map<std::string, double> answers;  // item_id -> raw value
    Timestamp submitted_at{};

    friend bool operator==(const QuestionnaireResponse&, const QuestionnaireResponse&) = default;
};

struct DimensionScores {
    std::map<std::string, double> per_dimension;
    double total = 0;

    friend bool operator==(const DimensionScores&, const DimensionScores&) = default;
};

enum class Completeness { strict, lenient };

// Domain errors for unknown items, out-of-scale values (naming the item) and,
// in strict mode, unanswered items. Lenient mode averages answered items only
// and omits dimensions with no answers.
DimensionScores score_response(const QuestionnaireTemplate& tpl, const QuestionnaireResponse& response,
                               Completeness mode = Completeness::strict);

enum class HapaStage { non_intender, intender, actor };

HapaStage classify_hapa_stage(const DimensionScores& scores, double behavior_mean, double cutoff);
HapaStage classify_hapa_stage(const QuestionnaireTemplate& tpl, const DimensionScores& scores, double behavior_mean);
double hapa_cutoff(const QuestionnaireTemplate& tpl);

// Linear questionnaire: one state per item, capture = item_id, terminal "done".
// Choice items become choice states, scale items with at most 11 points become
// scale states, wider ranges become numeric states.
dialog::DialogDefinition build_dialog(const QuestionnaireTemplate& tpl);

// Converts captures of a completed questionnaire dialog to raw answers.
std::map<std::string, double> answers_from_captures(const QuestionnaireTemplate& tpl,
                                                    const dialog::Variables& captures);

enum class CoachPreference { human, virtual_coach, combination };

// Counts per topic; cell order is human, virtual, combination. Responses to
// other templates are ignored.
struct PreferenceTable {
    std::map<Topic, std::array<int, 3>> counts;

    int at(Topic topic, CoachPreference choice) const;
    friend bool operator==(const PreferenceTable&, const PreferenceTable&) = default;
};

PreferenceTable preference_probe_summary(const QuestionnaireTemplate& tpl,
                                         std::span<const QuestionnaireResponse> responses);

void to_json(Json& j, const Item& item);
void from_json(const Json& j, Item& item);
void to_json(Json& j, const QuestionnaireTemplate& tpl);
void from_json(const Json& j, QuestionnaireTemplate& tpl);
void to_json(Json& j, const QuestionnaireResponse& r);
void from_json(const Json& j, QuestionnaireResponse& r);
void to_json(Json& j, const DimensionScores& s);
void to_json(Json& j, const PreferenceTable& t);

}  // namespace coachai::instruments

namespace coachai {

template <> struct EnumNames<instruments::Instrument> {
    static constexpr std::array values{std::pair{instruments::Instrument::tam, "TAM"},
                                       std::pair{instruments::Instrument::attrakdiff, "AttrakDiff"},
                                       std::pair{instruments::Instrument::hapa, "HAPA"},
                                       std::pair{instruments::Instrument::intake, "intake"},
                                       std::pair{instruments::Instrument::preference, "preference"},
                                       std::pair{instruments::Instrument::custom, "custom"}};
};
template <> struct EnumNames<instruments::HapaStage> {
    static constexpr std::array values{std::pair{instruments::HapaStage::non_intender, "non_intender"},
                                       std::pair{instruments::HapaStage::intender, "intender"},
                                       std::pair{instruments::HapaStage::actor, "actor"}};
};
template <> struct EnumNames<instruments::CoachPreference> {
    static constexpr std::array values{std::pair{instruments::CoachPreference::human, "human"},
                                       std::pair{instruments::CoachPreference::virtual_coach, "virtual"},
                                       std::pair{instruments::CoachPreference::combination, "combination"}};
};

}  // namespace coachai
