#include "coachai/instruments.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <set>
#include <sstream>

#include "coachai/error.hpp"
#include "coachai/resources.hpp"

namespace coachai::instruments {

namespace {

Error instrument_error(const std::string& msg) { return Error(ErrorKind::instrument, msg); }

const std::set<std::string>* required_dimensions(Instrument instrument) {
    static const std::set<std::string> tam{"usefulness", "ease_of_use", "fun", "attitude", "intention"};
    static const std::set<std::string> attrakdiff{"pragmatic", "hedonic", "appeal", "social"};
    static const std::set<std::string> hapa{"risk_perception", "outcome_expectancy", "action_self_efficacy",
                                            "behavioral_intention", "volition"};
    switch (instrument) {
    case Instrument::tam:
        return &tam;
    case Instrument::attrakdiff:
        return &attrakdiff;
    case Instrument::hapa:
        return &hapa;
    default:
        return nullptr;
    }
}

std::string number_text(double v) {
    std::ostringstream out;
    out << v;
    return out.str();
}

}  // namespace

const Item* QuestionnaireTemplate::find(std::string_view item_id) const {
    for (const auto& item : items)
        if (item.item_id == item_id)
            return &item;
    return nullptr;
}

void check(const QuestionnaireTemplate& tpl) {
    static const std::regex ident("[a-z0-9_]+");
    if (tpl.template_id.empty())
        throw instrument_error("template_id is empty");
    const std::set<std::string> dims(tpl.dimensions.begin(), tpl.dimensions.end());
    if (dims.size() != tpl.dimensions.size())
        throw instrument_error(tpl.template_id + ": duplicate dimension");
    if (const auto* required = required_dimensions(tpl.instrument); required && *required != dims)
        throw instrument_error(tpl.template_id + ": dimensions do not match the " +
                               std::string(name_of(tpl.instrument)) + " dimension set");
    std::set<std::string> ids;
    for (const auto& item : tpl.items) {
        if (!std::regex_match(item.item_id, ident))
            throw instrument_error(tpl.template_id + ": item id '" + item.item_id + "' must match [a-z0-9_]+");
        if (!ids.insert(item.item_id).second)
            throw instrument_error(tpl.template_id + ": duplicate item '" + item.item_id + "'");
        if (!dims.count(item.dimension))
            throw instrument_error(item.item_id + ": undeclared dimension '" + item.dimension + "'");
        if (!(item.scale.min < item.scale.max))
            throw instrument_error(item.item_id + ": scale min must be below max");
        if (item.text.empty())
            throw instrument_error(item.item_id + ": empty text");
        for (const auto& [label, score] : item.answer_scores)
            if (!item.scale.contains(score))
                throw instrument_error(item.item_id + ": answer '" + label + "' scores outside the scale");
    }
    if (tpl.instrument == Instrument::preference)
        for (const auto& item : tpl.items) {
            parse_enum<Topic>(item.dimension);
            if (item.scale.max - item.scale.min != 2)
                throw instrument_error(item.item_id + ": preference items use a 3-point scale");
        }
}

QuestionnaireTemplate parse_template(std::string_view json_text) {
    QuestionnaireTemplate tpl;
    try {
        tpl = Json::parse(json_text).get<QuestionnaireTemplate>();
    } catch (const Json::exception& e) {
        throw instrument_error(std::string("malformed template: ") + e.what());
    } catch (const Error& e) {
        throw instrument_error(std::string("malformed template: ") + e.what());
    }
    check(tpl);
    return tpl;
}

const std::vector<QuestionnaireTemplate>& builtin_templates() {
    static const std::vector<QuestionnaireTemplate> templates = [] {
        std::vector<QuestionnaireTemplate> out;
        for (const char* name : {"tam", "attrakdiff", "hapa", "intake", "preference"})
            out.push_back(parse_template(builtin_resource(std::string("templates/") + name + ".json")));
        return out;
    }();
    return templates;
}

const QuestionnaireTemplate& builtin_template(Instrument instrument) {
    for (const auto& tpl : builtin_templates())
        if (tpl.instrument == instrument)
            return tpl;
    throw Error(ErrorKind::not_found, "no built-in " + std::string(name_of(instrument)) + " template");
}

const QuestionnaireTemplate& builtin_template(std::string_view template_id) {
    for (const auto& tpl : builtin_templates())
        if (tpl.template_id == template_id)
            return tpl;
    throw Error(ErrorKind::not_found, "no built-in template '" + std::string(template_id) + "'");
}

DimensionScores score_response(const QuestionnaireTemplate& tpl, const QuestionnaireResponse& response,
                               Completeness mode) {
    for (const auto& [id, raw] : response.answers) {
        const Item* item = tpl.find(id);
        if (!item)
            throw Error(ErrorKind::domain, "answer for unknown item '" + id + "'");
        if (!std::isfinite(raw) || !item->scale.contains(raw))
            throw Error(ErrorKind::domain, "item '" + id + "': answer " + number_text(raw) + " outside scale " +
                                               number_text(item->scale.min) + ".." + number_text(item->scale.max));
    }
    std::map<std::string, std::pair<double, int>> sums;
    DimensionScores out;
    for (const auto& item : tpl.items) {
        auto it = response.answers.find(item.item_id);
        if (it == response.answers.end()) {
            if (mode == Completeness::strict)
                throw Error(ErrorKind::domain, "incomplete response: item '" + item.item_id + "' unanswered");
            continue;
        }
        const double score = item.scored(it->second);
        auto& [sum, n] = sums[item.dimension];
        sum += score;
        ++n;
        out.total += score;
    }
    for (const auto& [dim, acc] : sums)
        out.per_dimension[dim] = acc.first / acc.second;
    return out;
}

double hapa_cutoff(const QuestionnaireTemplate& tpl) {
    if (tpl.stage_cutoff)
        return *tpl.stage_cutoff;
    for (const auto& item : tpl.items)
        if (item.dimension == "behavioral_intention")
            return item.scale.midpoint();
    throw instrument_error(tpl.template_id + ": no behavioral_intention items");
}

HapaStage classify_hapa_stage(const DimensionScores& scores, double behavior_mean, double cutoff) {
    auto it = scores.per_dimension.find("behavioral_intention");
    if (it == scores.per_dimension.end())
        throw instrument_error("scores lack the behavioral_intention dimension");
    if (it->second < cutoff)
        return HapaStage::non_intender;
    return behavior_mean < cutoff ? HapaStage::intender : HapaStage::actor;
}

HapaStage classify_hapa_stage(const QuestionnaireTemplate& tpl, const DimensionScores& scores,
                              double behavior_mean) {
    return classify_hapa_stage(scores, behavior_mean, hapa_cutoff(tpl));
}

dialog::DialogDefinition build_dialog(const QuestionnaireTemplate& tpl) {
    check(tpl);
    if (tpl.items.empty())
        throw instrument_error(tpl.template_id + ": template has no items");
    dialog::DialogDefinition def;
    def.dialog_id = tpl.template_id;
    const std::string terminal = "done";
    auto state_id = [](const Item& item) { return "q_" + item.item_id; };
    for (std::size_t i = 0; i < tpl.items.size(); ++i) {
        const Item& item = tpl.items[i];
        const std::string next = i + 1 < tpl.items.size() ? state_id(tpl.items[i + 1]) : terminal;
        dialog::StateSpec s;
        s.state_id = state_id(item);
        s.capture = item.item_id;
        if (!item.answer_scores.empty()) {
            s.prompt_template = item.text;
            s.input = dialog::InputKind::choice;
            std::vector<std::pair<double, std::string>> ordered;
            for (const auto& [label, score] : item.answer_scores)
                ordered.emplace_back(score, label);
            std::sort(ordered.begin(), ordered.end());
            for (const auto& [score, label] : ordered)
                s.transitions.push_back({label, next});
        } else {
            s.prompt_template =
                item.text + " (" + number_text(item.scale.min) + "-" + number_text(item.scale.max) + ")";
            const bool integral = item.scale.min == std::floor(item.scale.min) &&
                                  item.scale.max == std::floor(item.scale.max);
            s.input = integral && item.scale.max - item.scale.min <= 10 ? dialog::InputKind::scale
                                                                        : dialog::InputKind::numeric;
            s.min = item.scale.min;
            s.max = item.scale.max;
            s.transitions.push_back({"", next});
        }
        def.required_captures.insert(item.item_id);
        def.states.push_back(std::move(s));
    }
    dialog::StateSpec done;
    done.state_id = terminal;
    done.prompt_template = "Thank you, your answers are saved.";
    def.states.push_back(done);
    def.terminal_states.insert(terminal);
    def.entry_state = def.states.front().state_id;
    return def;
}

std::map<std::string, double> answers_from_captures(const QuestionnaireTemplate& tpl,
                                                    const dialog::Variables& captures) {
    std::map<std::string, double> answers;
    for (const auto& item : tpl.items) {
        auto it = captures.find(item.item_id);
        if (it == captures.end())
            continue;
        if (const auto* num = std::get_if<double>(&it->second)) {
            answers[item.item_id] = *num;
            continue;
        }
        const auto& label = std::get<std::string>(it->second);
        auto score = item.answer_scores.find(label);
        if (score == item.answer_scores.end())
            throw Error(ErrorKind::domain, "item '" + item.item_id + "': unknown answer '" + label + "'");
        answers[item.item_id] = score->second;
    }
    return answers;
}

int PreferenceTable::at(Topic topic, CoachPreference choice) const {
    auto it = counts.find(topic);
    return it == counts.end() ? 0 : it->second[static_cast<std::size_t>(choice)];
}

PreferenceTable preference_probe_summary(const QuestionnaireTemplate& tpl,
                                         std::span<const QuestionnaireResponse> responses) {
    PreferenceTable table;
    for (const auto& [topic, name] : EnumNames<Topic>::values)
        table.counts[topic] = {0, 0, 0};
    for (const auto& response : responses) {
        if (response.template_id != tpl.template_id)
            continue;
        for (const auto& [id, raw] : response.answers) {
            const Item* item = tpl.find(id);
            if (!item)
                continue;
            const double offset = raw - item->scale.min;
            if (offset < 0 || offset > 2 || offset != std::floor(offset))
                continue;
            table.counts[parse_enum<Topic>(item->dimension)][static_cast<std::size_t>(offset)] += 1;
        }
    }
    return table;
}

void to_json(Json& j, const Item& item) {
    j = Json{{"item_id", item.item_id},
             {"text", item.text},
             {"dimension", item.dimension},
             {"scale", Json{{"min", item.scale.min}, {"max", item.scale.max}}},
             {"reverse", item.reverse}};
    if (!item.answer_scores.empty())
        j["answer_scores"] = item.answer_scores;
}

void from_json(const Json& j, Item& item) {
    item.item_id = require_field<std::string>(j, "item_id");
    item.text = require_field<std::string>(j, "text");
    item.dimension = require_field<std::string>(j, "dimension");
    const Json& scale = j.at("scale");
    item.scale = {require_field<double>(scale, "min"), require_field<double>(scale, "max")};
    item.reverse = j.value("reverse", false);
    item.answer_scores = j.value("answer_scores", std::map<std::string, double>{});
}

void to_json(Json& j, const QuestionnaireTemplate& tpl) {
    j = Json{{"template_id", tpl.template_id},
             {"instrument", tpl.instrument},
             {"dimensions", tpl.dimensions},
             {"items", tpl.items}};
    if (!tpl.note.empty())
        j["note"] = tpl.note;
    if (tpl.stage_cutoff)
        j["stage_cutoff"] = *tpl.stage_cutoff;
}

void from_json(const Json& j, QuestionnaireTemplate& tpl) {
    tpl.template_id = require_field<std::string>(j, "template_id");
    tpl.instrument = require_field<Instrument>(j, "instrument");
    tpl.items = require_field<std::vector<Item>>(j, "items");
    if (j.contains("dimensions")) {
        tpl.dimensions = j.at("dimensions").get<std::vector<std::string>>();
    } else {
        tpl.dimensions.clear();
        for (const auto& item : tpl.items)
            if (std::find(tpl.dimensions.begin(), tpl.dimensions.end(), item.dimension) == tpl.dimensions.end())
                tpl.dimensions.push_back(item.dimension);
    }
    tpl.note = j.value("note", "");
    tpl.stage_cutoff = get_optional<double>(j, "stage_cutoff");
}

void to_json(Json& j, const QuestionnaireResponse& r) {
    j = Json{{"response_id", r.response_id}, {"user_id", r.user_id},     {"template_id", r.template_id},
             {"week_index", r.week_index},   {"answers", r.answers},     {"submitted_at", r.submitted_at}};
}

void from_json(const Json& j, QuestionnaireResponse& r) {
    r.response_id = j.value("response_id", "");
    r.user_id = require_field<std::string>(j, "user_id");
    r.template_id = require_field<std::string>(j, "template_id");
    r.week_index = require_field<int>(j, "week_index");
    if (r.week_index < 0)
        throw Error(ErrorKind::domain, "week_index must be >= 0");
    r.answers = require_field<std::map<std::string, double>>(j, "answers");
    r.submitted_at = require_field<Timestamp>(j, "submitted_at");
}

void to_json(Json& j, const DimensionScores& s) { j = Json{{"per_dimension", s.per_dimension}, {"total", s.total}}; }

void to_json(Json& j, const PreferenceTable& t) {
    j = Json::object();
    for (const auto& [topic, cells] : t.counts)
        j[std::string(name_of(topic))] = Json{{"human", cells[0]}, {"virtual", cells[1]}, {"combination", cells[2]}};
}

}  // namespace coachai::instruments
