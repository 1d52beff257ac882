#include "coachai/reports.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>

#include "coachai/error.hpp"
#include "coachai/stats.hpp"

namespace coachai::reports {

using instruments::Instrument;
using instruments::QuestionnaireResponse;
using instruments::QuestionnaireTemplate;

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos)
        return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"')
            out += '"';
        out += c;
    }
    return out + "\"";
}

// user -> week -> dimension scores, last submission per week wins.
std::map<UserId, std::map<int, instruments::DimensionScores>> scores_by_user(const StudyData& data,
                                                                               const QuestionnaireTemplate& tpl) {
    std::vector<const QuestionnaireResponse*> rs;
    for (const auto& r : data.responses)
        if (r.template_id == tpl.template_id)
            rs.push_back(&r);
    std::stable_sort(rs.begin(), rs.end(),
                     [](const auto* a, const auto* b) { return a->submitted_at < b->submitted_at; });
    std::map<UserId, std::map<int, instruments::DimensionScores>> out;
    for (const auto* r : rs)
        out[r->user_id][r->week_index] = instruments::score_response(tpl, *r, instruments::Completeness::lenient);
    return out;
}

std::map<UserId, double> user_means(const std::map<UserId, std::map<int, instruments::DimensionScores>>& scores,
                                    const std::string& dimension) {
    std::map<UserId, double> out;
    for (const auto& [user, weeks] : scores) {
        double sum = 0;
        int n = 0;
        for (const auto& [week, s] : weeks) {
            auto it = s.per_dimension.find(dimension);
            if (it != s.per_dimension.end()) {
                sum += it->second;
                ++n;
            }
        }
        if (n > 0)
            out[user] = sum / n;
    }
    return out;
}

const instruments::Scale& dimension_scale(const QuestionnaireTemplate& tpl, const std::string& dimension) {
    for (const auto& item : tpl.items)
        if (item.dimension == dimension)
            return item.scale;
    throw Error(ErrorKind::instrument, "dimension '" + dimension + "' has no items");
}

std::vector<std::string> test_row(const std::string& name, std::size_t n,
                                  const std::function<stats::TestResult()>& run) {
    try {
        const auto r = run();
        return {name,
                std::to_string(n),
                r.infinite ? (r.statistic < 0 ? "-inf" : "inf") : format_number(r.statistic),
                format_number(r.df1, 0),
                r.df2 ? format_number(*r.df2, 0) : "",
                format_number(r.p_value),
                ""};
    } catch (const Error& e) {
        return {name, std::to_string(n), "n/a", "", "", "n/a", e.what()};
    }
}

const std::vector<Instrument>& reported_instruments() {
    static const std::vector<Instrument> v{Instrument::tam, Instrument::attrakdiff, Instrument::hapa};
    return v;
}

}  // namespace

std::string format_number(double v, int decimals) {
    if (std::isnan(v))
        return "n/a";
    if (std::isinf(v))
        return v < 0 ? "-inf" : "inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    std::string s = buf;
    if (s.find_first_not_of("-0.") == std::string::npos && s[0] == '-')
        s.erase(0, 1);  // no "-0.0000"
    return s;
}

std::string Table::to_text() const {
    std::vector<std::size_t> width(columns.size(), 0);
    for (std::size_t c = 0; c < columns.size(); ++c)
        width[c] = columns[c].size();
    for (const auto& row : rows)
        for (std::size_t c = 0; c < row.size() && c < width.size(); ++c)
            width[c] = std::max(width[c], row[c].size());
    std::ostringstream out;
    out << title << "\n";
    auto emit = [&](const std::vector<std::string>& row) {
        std::string line;
        for (std::size_t c = 0; c < columns.size(); ++c) {
            const std::string cell = c < row.size() ? row[c] : "";
            const std::string pad(width[c] - cell.size(), ' ');
            line += c == 0 ? cell + pad : "  " + pad + cell;
        }
        while (!line.empty() && line.back() == ' ')
            line.pop_back();
        out << line << "\n";
    };
    emit(columns);
    std::size_t total = 0;
    for (auto w : width)
        total += w;
    out << std::string(total + 2 * (width.empty() ? 0 : width.size() - 1), '-') << "\n";
    for (const auto& row : rows)
        emit(row);
    return out.str();
}

std::string Table::to_csv() const {
    std::ostringstream out;
    auto emit = [&](const std::vector<std::string>& row) {
        for (std::size_t c = 0; c < row.size(); ++c)
            out << (c ? "," : "") << csv_field(row[c]);
        out << "\n";
    };
    emit(columns);
    for (const auto& row : rows)
        emit(row);
    return out.str();
}

void to_json(Json& j, const Table& t) { j = Json{{"title", t.title}, {"columns", t.columns}, {"rows", t.rows}}; }

Table adherence_table(const StudyData& data) {
    Table t{"Adherence per participant", {"user_id", "name", "activity_class", "adherence", "binary", "ternary"}, {}};
    for (const auto& u : data.users) {
        auto it = data.adherence.find(u.user_id);
        if (it == data.adherence.end()) {
            t.rows.push_back({u.user_id, u.display_name, std::string(name_of(u.activity_class)), "n/a", "", ""});
            continue;
        }
        t.rows.push_back({u.user_id, u.display_name, std::string(name_of(u.activity_class)),
                          format_number(it->second),
                          std::string(name_of(categorize_binary(it->second, data.thresholds))),
                          std::string(name_of(categorize_ternary(it->second, data.thresholds)))});
    }
    return t;
}

Table adherence_split(const StudyData& data) {
    Table t{"High/low adherence split", {"group", "n", "mean_adherence", "members"}, {}};
    for (auto group : {BinaryAdherence::high, BinaryAdherence::low}) {
        std::vector<double> values;
        std::string members;
        for (const auto& [user, mean] : data.adherence) {
            if (categorize_binary(mean, data.thresholds) != group)
                continue;
            values.push_back(mean);
            members += (members.empty() ? "" : " ") + user;
        }
        double avg = std::nan("");
        if (!values.empty())
            avg = stats::descriptives(values).mean;
        t.rows.push_back({std::string(name_of(group)), std::to_string(values.size()), format_number(avg), members});
    }
    return t;
}

Table descriptives_table(const StudyData& data) {
    Table t{"Descriptive statistics",
            {"measure", "n", "mean", "std_deviation", "std_error", "median", "min", "max", "range"},
            {}};
    auto add = [&](const std::string& measure, const std::vector<double>& values) {
        if (values.empty()) {
            t.rows.push_back({measure, "0", "n/a", "n/a", "n/a", "n/a", "n/a", "n/a", "n/a"});
            return;
        }
        const auto s = stats::descriptives(values);
        t.rows.push_back({measure, std::to_string(s.n), format_number(s.mean), format_number(s.std_deviation),
                          format_number(s.std_error), format_number(s.median), format_number(s.min),
                          format_number(s.max), format_number(s.range)});
    };
    std::vector<double> adherence;
    for (const auto& [user, mean] : data.adherence)
        adherence.push_back(mean);
    add("adherence", adherence);
    for (auto instrument : reported_instruments()) {
        const auto& tpl = instruments::builtin_template(instrument);
        const auto scores = scores_by_user(data, tpl);
        for (const auto& dim : tpl.dimensions) {
            std::vector<double> values;
            for (const auto& [user, mean] : user_means(scores, dim))
                values.push_back(mean);
            add(std::string(name_of(instrument)) + "." + dim, values);
        }
    }
    return t;
}

InstrumentReport instrument_report(const StudyData& data, Instrument instrument) {
    const auto& tpl = instruments::builtin_template(instrument);
    InstrumentReport report;
    report.instrument = instrument;
    report.template_id = tpl.template_id;
    const auto scores = scores_by_user(data, tpl);
    std::set<int> weeks;
    for (const auto& [user, by_week] : scores)
        for (const auto& [week, s] : by_week)
            weeks.insert(week);
    report.weeks.assign(weeks.begin(), weeks.end());

    for (const auto& dim : tpl.dimensions) {
        DimensionTests d;
        d.dimension = dim;
        for (int week : report.weeks) {
            double sum = 0;
            int n = 0;
            for (const auto& [user, by_week] : scores) {
                auto w = by_week.find(week);
                if (w == by_week.end())
                    continue;
                auto it = w->second.per_dimension.find(dim);
                if (it != w->second.per_dimension.end()) {
                    sum += it->second;
                    ++n;
                }
            }
            d.weekly_n[week] = n;
            d.weekly_means[week] = n ? sum / n : std::nan("");
        }

        const auto means = user_means(scores, dim);
        std::vector<double> all;
        std::vector<double> high;
        std::vector<double> low;
        for (const auto& [user, m] : means) {
            all.push_back(m);
            auto a = data.adherence.find(user);
            if (a == data.adherence.end())
                continue;
            (categorize_binary(a->second, data.thresholds) == BinaryAdherence::high ? high : low).push_back(m);
        }
        const double mid = dimension_scale(tpl, dim).midpoint();
        d.rows.push_back(test_row("one-sample t vs " + format_number(mid, 1), all.size(),
                                  [&] { return stats::one_sample_t(all, mid); }));
        d.rows.push_back(test_row("ANOVA high vs low", high.size() + low.size(),
                                  [&] { return stats::anova_between({high, low}); }));

        stats::Matrix matrix;
        for (const auto& [user, by_week] : scores) {
            std::vector<double> row;
            for (int week : report.weeks) {
                auto w = by_week.find(week);
                if (w == by_week.end() || !w->second.per_dimension.count(dim))
                    break;
                row.push_back(w->second.per_dimension.at(dim));
            }
            if (row.size() == report.weeks.size())
                matrix.push_back(std::move(row));
        }
        d.rows.push_back(test_row("RM-ANOVA weeks", matrix.size(), [&] { return stats::rm_anova(matrix); }));
        try {
            for (const auto& pair : stats::posthoc_pairwise(matrix)) {
                const std::string name = "post-hoc week " + std::to_string(report.weeks[pair.first]) + " vs " +
                                         std::to_string(report.weeks[pair.second]);
                d.rows.push_back(test_row(name, matrix.size(), [&] { return pair.test; }));
            }
        } catch (const Error& e) {
            d.rows.push_back({"post-hoc", std::to_string(matrix.size()), "n/a", "", "", "n/a", e.what()});
        }
        report.dimensions.push_back(std::move(d));
    }
    return report;
}

Table InstrumentReport::means_table() const {
    Table t{std::string(name_of(instrument)) + " weekly dimension means", {"dimension"}, {}};
    for (int w : weeks)
        t.columns.push_back("week_" + std::to_string(w));
    for (const auto& d : dimensions) {
        std::vector<std::string> row{d.dimension};
        for (int w : weeks)
            row.push_back(format_number(d.weekly_means.at(w)));
        t.rows.push_back(std::move(row));
    }
    return t;
}

Table InstrumentReport::tests_table() const {
    Table t{std::string(name_of(instrument)) + " tests",
            {"dimension", "test", "n", "statistic", "df1", "df2", "p_value", "note"},
            {}};
    for (const auto& d : dimensions)
        for (const auto& r : d.rows) {
            std::vector<std::string> row{d.dimension};
            row.insert(row.end(), r.begin(), r.end());
            t.rows.push_back(std::move(row));
        }
    return t;
}

void to_json(Json& j, const InstrumentReport& r) {
    j = Json{{"instrument", name_of(r.instrument)}, {"template_id", r.template_id}, {"weeks", r.weeks}};
    Json dims = Json::array();
    for (const auto& d : r.dimensions) {
        Json weekly = Json::object();
        for (const auto& [w, m] : d.weekly_means)
            weekly[std::to_string(w)] = Json{{"mean", std::isnan(m) ? Json(nullptr) : Json(m)}, {"n", d.weekly_n.at(w)}};
        Json tests = Json::array();
        for (const auto& row : d.rows)
            tests.push_back(Json{{"test", row[0]},
                                 {"n", std::stoi(row[1])},
                                 {"statistic", row[2]},
                                 {"df1", row[3]},
                                 {"df2", row[4]},
                                 {"p_value", row[5]},
                                 {"note", row[6]}});
        dims.push_back(Json{{"dimension", d.dimension}, {"weekly_means", weekly}, {"tests", tests}});
    }
    j["dimensions"] = std::move(dims);
}

std::vector<HapaAssignment> hapa_stages(const StudyData& data) {
    const auto& tpl = instruments::builtin_template(Instrument::hapa);
    const auto scores = scores_by_user(data, tpl);
    const auto& scale = dimension_scale(tpl, "behavioral_intention");
    std::vector<HapaAssignment> out;
    for (const auto& [user, by_week] : scores) {
        const auto& [week, latest] = *by_week.rbegin();
        HapaAssignment h;
        h.user_id = user;
        h.week_index = week;
        auto intention = latest.per_dimension.find("behavioral_intention");
        if (intention == latest.per_dimension.end())
            continue;
        h.intention = intention->second;
        auto a = data.adherence.find(user);
        if (a != data.adherence.end())
            h.behavior = scale.min + (scale.max - scale.min) * a->second;
        else if (auto v = latest.per_dimension.find("volition"); v != latest.per_dimension.end())
            h.behavior = v->second;
        else
            continue;
        h.stage = instruments::classify_hapa_stage(tpl, latest, h.behavior);
        out.push_back(h);
    }
    return out;
}

Table hapa_table(const StudyData& data) {
    Table t{"HAPA stage per participant", {"user_id", "week", "intention", "behavior", "stage"}, {}};
    for (const auto& h : hapa_stages(data))
        t.rows.push_back({h.user_id, std::to_string(h.week_index), format_number(h.intention),
                          format_number(h.behavior), std::string(name_of(h.stage))});
    return t;
}

Table hapa_distribution(const StudyData& data) {
    std::map<instruments::HapaStage, int> counts;
    const auto stages = hapa_stages(data);
    for (const auto& h : stages)
        ++counts[h.stage];
    Table t{"HAPA stage distribution", {"stage", "n", "share"}, {}};
    for (auto stage : {instruments::HapaStage::non_intender, instruments::HapaStage::intender,
                       instruments::HapaStage::actor}) {
        const int n = counts[stage];
        t.rows.push_back({std::string(name_of(stage)), std::to_string(n),
                          stages.empty() ? "n/a" : format_number(static_cast<double>(n) / stages.size())});
    }
    return t;
}

Table preference_table(const StudyData& data) {
    const auto& tpl = instruments::builtin_template(Instrument::preference);
    const auto summary = instruments::preference_probe_summary(tpl, data.responses);
    Table t{"Coach preference per topic", {"topic", "human", "virtual", "combination", "total"}, {}};
    for (auto topic : {Topic::physical_activity, Topic::healthy_diet, Topic::mental_wellness}) {
        const int h = summary.at(topic, instruments::CoachPreference::human);
        const int v = summary.at(topic, instruments::CoachPreference::virtual_coach);
        const int c = summary.at(topic, instruments::CoachPreference::combination);
        t.rows.push_back({std::string(name_of(topic)), std::to_string(h), std::to_string(v), std::to_string(c),
                          std::to_string(h + v + c)});
    }
    return t;
}

}  // namespace coachai::reports
