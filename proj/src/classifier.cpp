#include "coachai/classifier.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "coachai/error.hpp"
#include "coachai/rng.hpp"

namespace coachai::classifier {

namespace {

struct FeatureRange {
    double lo;
    double hi;
    bool integral;
};

// Noise ranges for the generator, indexed like feature_names().
constexpr std::array<FeatureRange, kFeatureCount> kNoise{{
    {18, 70, true},     // age
    {1, 5, true},       // occupation_sedentariness
    {2, 7, false},      // sitting_hours (non-sedentary classes)
    {0, 90, true},      // weekly_moderate_minutes (non-mild classes)
    {0, 60, true},      // weekly_vigorous_minutes (non-vigorous classes)
    {5, 9.5, false},    // sleep_hours
    {150, 200, true},   // height_cm
    {50, 110, true},    // weight_kg
    {2, 15, false},     // daily_steps_thousands
    {0, 7, true},       // walking_days
    {0, 60, true},      // active_commute_minutes
    {1, 10, false},     // screen_hours
    {0, 7, true},       // sport_sessions
    {0, 20, true},      // stairs_floors
    {0, 9, true},       // fruit_veg_servings
    {0, 10, true},      // sugary_drinks
    {0, 7, true},       // fast_food_meals
    {2, 12, true},      // water_glasses
    {0, 20, true},      // alcohol_units
    {0, 20, true},      // cigarettes_per_day
    {1, 7, true},       // stress_level
    {1, 7, true},       // sleep_quality
    {1, 7, true},       // energy_level
    {1, 7, true},       // exercise_motivation
    {1, 7, true},       // perceived_fitness
}};

constexpr std::size_t kSitting = 2;
constexpr std::size_t kModerate = 3;
constexpr std::size_t kVigorous = 4;

std::size_t label_index(ActivityClass label) {
    for (std::size_t k = 0; k < kClassCount; ++k)
        if (kLabels[k] == label)
            return k;
    throw Error(ErrorKind::domain, "label must be vigorous, mild or sedentary");
}

double draw(Rng& rng, FeatureRange r) {
    const double v = rng.uniform(r.lo, r.hi);
    return r.integral ? std::round(v) : std::round(v * 10) / 10;
}

std::optional<double> parse_number(std::string_view text) {
    while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front())))
        text.remove_prefix(1);
    while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back())))
        text.remove_suffix(1);
    if (!text.empty() && text.front() == '+')
        text.remove_prefix(1);
    double v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(v))
        return std::nullopt;
    return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ','))
        cells.push_back(cell);
    if (!line.empty() && line.back() == ',')
        cells.emplace_back();
    return cells;
}

std::vector<double> standardize(const SvmModel& model, std::span<const double> x) {
    std::vector<double> z(x.size());
    for (std::size_t d = 0; d < x.size(); ++d)
        z[d] = (x[d] - model.means[d]) / model.stds[d];
    return z;
}

double dot(const std::vector<double>& w, std::span<const double> x) {
    double s = 0;
    for (std::size_t d = 0; d < w.size(); ++d)
        s += w[d] * x[d];
    return s;
}

struct Binary {
    std::vector<double> w;
    double b = 0;
};

double objective(const Binary& m, const std::vector<std::vector<double>>& xs, const std::vector<double>& ys,
                 double C) {
    double reg = 0;
    for (double v : m.w)
        reg += v * v;
    double loss = 0;
    for (std::size_t i = 0; i < xs.size(); ++i)
        loss += std::max(0.0, 1 - ys[i] * (dot(m.w, xs[i]) + m.b));
    return 0.5 * reg + C * loss;
}

Binary fit_binary(const std::vector<std::vector<double>>& xs, const std::vector<double>& ys, const Hyperparams& p,
                  Rng& rng) {
    const std::size_t dims = xs.front().size();
    Binary cur{std::vector<double>(dims, 0.0), 0.0};
    Binary best = cur;
    double best_obj = objective(cur, xs, ys, p.C);
    std::vector<std::size_t> order(xs.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> gw(dims);
    for (int t = 1; t <= p.epochs; ++t) {
        rng.shuffle(std::span(order));
        gw = cur.w;
        double gb = 0;
        for (std::size_t i : order) {
            const double y = ys[i];
            if (y * (dot(cur.w, xs[i]) + cur.b) < 1) {
                for (std::size_t d = 0; d < dims; ++d)
                    gw[d] -= p.C * y * xs[i][d];
                gb -= p.C * y;
            }
        }
        const double eta = p.learning_rate / t;
        for (std::size_t d = 0; d < dims; ++d)
            cur.w[d] -= eta * gw[d];
        cur.b -= eta * gb;
        const double obj = objective(cur, xs, ys, p.C);
        if (obj < best_obj) {
            best_obj = obj;
            best = cur;
        }
    }
    return best;
}

}  // namespace

const std::array<std::string, kFeatureCount>& feature_names() {
    static const std::array<std::string, kFeatureCount> names{
        "age",
        "occupation_sedentariness",
        "sitting_hours",
        "weekly_moderate_minutes",
        "weekly_vigorous_minutes",
        "sleep_hours",
        "height_cm",
        "weight_kg",
        "daily_steps_thousands",
        "walking_days",
        "active_commute_minutes",
        "screen_hours",
        "sport_sessions",
        "stairs_floors",
        "fruit_veg_servings",
        "sugary_drinks",
        "fast_food_meals",
        "water_glasses",
        "alcohol_units",
        "cigarettes_per_day",
        "stress_level",
        "sleep_quality",
        "energy_level",
        "exercise_motivation",
        "perceived_fitness",
    };
    return names;
}

FeatureVector extract_features(const dialog::Variables& intake) {
    FeatureVector out;
    out.reserve(kFeatureCount);
    for (const auto& name : feature_names()) {
        auto it = intake.find(name);
        if (it == intake.end())
            throw Error(ErrorKind::missing_feature, "missing feature '" + name + "'");
        if (const auto* num = std::get_if<double>(&it->second)) {
            if (!std::isfinite(*num))
                throw Error(ErrorKind::coercion, "feature '" + name + "' is not finite");
            out.push_back(*num);
            continue;
        }
        auto parsed = parse_number(std::get<std::string>(it->second));
        if (!parsed)
            throw Error(ErrorKind::coercion, "feature '" + name + "' is not numeric: '" +
                                                 std::get<std::string>(it->second) + "'");
        out.push_back(*parsed);
    }
    return out;
}

std::size_t LabeledDataset::count(ActivityClass label) const {
    return static_cast<std::size_t>(
        std::count_if(rows.begin(), rows.end(), [&](const LabeledRow& r) { return r.label == label; }));
}

LabeledDataset parse_csv(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    LabeledDataset data;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        auto cells = split_csv_line(line);
        if (data.feature_names.empty()) {
            if (cells.size() < 2 || cells.back() != "label")
                throw ParseError(line_no, 1, "header must end with a 'label' column");
            data.feature_names.assign(cells.begin(), cells.end() - 1);
            continue;
        }
        if (cells.size() != data.feature_names.size() + 1)
            throw ParseError(line_no, 1,
                             "expected " + std::to_string(data.feature_names.size() + 1) + " cells, found " +
                                 std::to_string(cells.size()));
        LabeledRow row;
        int column = 1;
        for (std::size_t c = 0; c + 1 < cells.size(); ++c) {
            auto v = parse_number(cells[c]);
            if (!v)
                throw ParseError(line_no, column, "feature '" + data.feature_names[c] + "' is not numeric");
            row.values.push_back(*v);
            column += static_cast<int>(cells[c].size()) + 1;
        }
        try {
            row.label = parse_enum<ActivityClass>(cells.back());
            label_index(row.label);
        } catch (const Error&) {
            throw ParseError(line_no, column, "label must be vigorous, mild or sedentary");
        }
        data.rows.push_back(std::move(row));
    }
    if (data.feature_names.empty())
        throw ParseError(1, 1, "empty dataset");
    return data;
}

std::string to_csv(const LabeledDataset& data) {
    std::ostringstream out;
    for (const auto& name : data.feature_names)
        out << name << ',';
    out << "label\n";
    out.precision(17);
    for (const auto& row : data.rows) {
        for (double v : row.values)
            out << v << ',';
        out << name_of(row.label) << '\n';
    }
    return out.str();
}

FeatureVector sample_features(ActivityClass label, Rng& rng) {
    FeatureVector values;
    values.reserve(kFeatureCount);
    for (std::size_t d = 0; d < kFeatureCount; ++d)
        values.push_back(draw(rng, kNoise[d]));
    if (label == ActivityClass::vigorous)
        values[kVigorous] = draw(rng, {150, 400, true});
    else if (label == ActivityClass::mild)
        values[kModerate] = draw(rng, {150, 300, true});
    else if (label == ActivityClass::sedentary)
        values[kSitting] = draw(rng, {9, 14, false});
    else
        throw Error(ErrorKind::domain, "cannot sample features for an unclassified label");
    return values;
}

LabeledDataset generate_dataset(const GeneratorOptions& options) {
    Rng rng(options.seed);
    LabeledDataset data;
    data.feature_names.assign(feature_names().begin(), feature_names().end());
    for (std::size_t i = 0; i < options.rows; ++i) {
        const ActivityClass label = kLabels[i % kClassCount];
        data.rows.push_back({sample_features(label, rng), label});
    }
    return data;
}

std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& data, double test_fraction,
                                                std::uint64_t seed) {
    if (!(test_fraction > 0 && test_fraction < 1))
        throw Error(ErrorKind::precondition, "test fraction must lie strictly between 0 and 1");
    std::array<std::vector<std::size_t>, kClassCount> by_class;
    for (std::size_t i = 0; i < data.rows.size(); ++i)
        by_class[label_index(data.rows[i].label)].push_back(i);
    for (std::size_t k = 0; k < kClassCount; ++k)
        if (by_class[k].size() < 2)
            throw Error(ErrorKind::stratification, "class " + std::string(name_of(kLabels[k])) + " has " +
                                                       std::to_string(by_class[k].size()) +
                                                       " rows; at least 2 are needed");

    // Largest-remainder allocation of the test rows across classes.
    const auto total_test = static_cast<std::size_t>(std::llround(test_fraction * data.rows.size()));
    std::array<std::size_t, kClassCount> take{};
    std::array<double, kClassCount> remainder{};
    std::size_t assigned = 0;
    for (std::size_t k = 0; k < kClassCount; ++k) {
        const double quota = test_fraction * by_class[k].size();
        take[k] = static_cast<std::size_t>(std::floor(quota));
        remainder[k] = quota - take[k];
        assigned += take[k];
    }
    std::array<std::size_t, kClassCount> rank{0, 1, 2};
    std::stable_sort(rank.begin(), rank.end(), [&](auto a, auto b) { return remainder[a] > remainder[b]; });
    for (std::size_t r = 0; assigned < total_test && r < kClassCount; ++r, ++assigned)
        take[rank[r]] += 1;
    for (std::size_t k = 0; k < kClassCount; ++k)
        take[k] = std::clamp<std::size_t>(take[k], 1, by_class[k].size() - 1);

    Rng rng(seed);
    std::vector<bool> in_test(data.rows.size(), false);
    for (std::size_t k = 0; k < kClassCount; ++k) {
        rng.shuffle(std::span(by_class[k]));
        for (std::size_t i = 0; i < take[k]; ++i)
            in_test[by_class[k][i]] = true;
    }
    LabeledDataset train_set{data.feature_names, {}};
    LabeledDataset test_set{data.feature_names, {}};
    for (std::size_t i = 0; i < data.rows.size(); ++i)
        (in_test[i] ? test_set : train_set).rows.push_back(data.rows[i]);
    return {std::move(train_set), std::move(test_set)};
}

SvmModel train(const LabeledDataset& data, const Hyperparams& params) {
    if (params.epochs < 1)
        throw Error(ErrorKind::precondition, "epochs must be at least 1");
    if (!(params.C > 0) || !(params.learning_rate > 0))
        throw Error(ErrorKind::precondition, "C and learning rate must be positive");
    for (auto label : kLabels)
        if (data.count(label) == 0)
            throw Error(ErrorKind::training, "training data has no rows labeled " + std::string(name_of(label)));
    const std::size_t dims = data.feature_names.size();
    for (const auto& row : data.rows) {
        if (row.values.size() != dims)
            throw Error(ErrorKind::domain, "row width differs from the feature list");
        for (double v : row.values)
            if (!std::isfinite(v))
                throw Error(ErrorKind::domain, "non-finite feature value");
    }

    SvmModel model;
    model.feature_names = data.feature_names;
    model.means.assign(dims, 0.0);
    model.stds.assign(dims, 0.0);
    const double n = static_cast<double>(data.rows.size());
    for (const auto& row : data.rows)
        for (std::size_t d = 0; d < dims; ++d)
            model.means[d] += row.values[d];
    for (auto& m : model.means)
        m /= n;
    for (const auto& row : data.rows)
        for (std::size_t d = 0; d < dims; ++d)
            model.stds[d] += (row.values[d] - model.means[d]) * (row.values[d] - model.means[d]);
    for (auto& s : model.stds) {
        s = std::sqrt(s / n);
        if (!(s > 1e-12))
            s = 1.0;
    }

    std::vector<std::vector<double>> xs;
    xs.reserve(data.rows.size());
    for (const auto& row : data.rows)
        xs.push_back(standardize(model, row.values));

    Rng rng(params.seed);
    for (std::size_t k = 0; k < kClassCount; ++k) {
        std::vector<double> ys;
        for (const auto& row : data.rows)
            ys.push_back(row.label == kLabels[k] ? 1.0 : -1.0);
        auto fit = fit_binary(xs, ys, params, rng);
        model.weights[k] = std::move(fit.w);
        model.biases[k] = fit.b;
    }
    model.seed = params.seed;
    model.epochs = params.epochs;
    model.C = params.C;
    model.learning_rate = params.learning_rate;
    model.train_rows = data.rows.size();
    return model;
}

std::array<double, kClassCount> decision_values(const SvmModel& model, std::span<const double> standardized) {
    std::array<double, kClassCount> scores{};
    for (std::size_t k = 0; k < kClassCount; ++k)
        scores[k] = dot(model.weights[k], standardized) + model.biases[k];
    return scores;
}

Prediction predict(const SvmModel& model, std::span<const double> features) {
    if (features.size() != model.means.size())
        throw Error(ErrorKind::domain, "expected " + std::to_string(model.means.size()) + " features, got " +
                                           std::to_string(features.size()));
    for (double v : features)
        if (!std::isfinite(v))
            throw Error(ErrorKind::domain, "non-finite feature value");
    Prediction p;
    p.scores = decision_values(model, standardize(model, features));
    std::size_t best = 0;
    for (std::size_t k = 1; k < kClassCount; ++k)
        if (p.scores[k] > p.scores[best])
            best = k;
    p.label = kLabels[best];
    return p;
}

Evaluation evaluate(const SvmModel& model, const LabeledDataset& data) {
    Evaluation e;
    e.rows = data.rows.size();
    std::size_t correct = 0;
    for (const auto& row : data.rows) {
        const auto p = predict(model, row.values);
        e.confusion[label_index(row.label)][label_index(p.label)] += 1;
        correct += p.label == row.label;
    }
    e.accuracy = e.rows ? static_cast<double>(correct) / static_cast<double>(e.rows) : 0.0;
    return e;
}

void to_json(Json& j, const SvmModel& m) {
    Json labels = Json::array();
    for (auto l : kLabels)
        labels.push_back(l);
    j = Json{{"format", "coachai-linear-svm"},
             {"version", 1},
             {"labels", labels},
             {"feature_names", m.feature_names},
             {"weights", m.weights},
             {"biases", m.biases},
             {"means", m.means},
             {"stds", m.stds},
             {"metadata", Json{{"seed", m.seed},
                               {"epochs", m.epochs},
                               {"C", m.C},
                               {"learning_rate", m.learning_rate},
                               {"train_rows", m.train_rows}}}};
}

void from_json(const Json& j, SvmModel& m) {
    if (j.value("format", "") != "coachai-linear-svm")
        throw Error(ErrorKind::domain, "not a linear SVM model document");
    if (j.value("version", 0) != 1)
        throw Error(ErrorKind::domain, "unsupported model version");
    m.feature_names = require_field<std::vector<std::string>>(j, "feature_names");
    m.weights = require_field<std::array<std::vector<double>, kClassCount>>(j, "weights");
    m.biases = require_field<std::array<double, kClassCount>>(j, "biases");
    m.means = require_field<std::vector<double>>(j, "means");
    m.stds = require_field<std::vector<double>>(j, "stds");
    const std::size_t dims = m.feature_names.size();
    if (m.means.size() != dims || m.stds.size() != dims)
        throw Error(ErrorKind::domain, "standardization vectors do not match the feature list");
    for (const auto& w : m.weights)
        if (w.size() != dims)
            throw Error(ErrorKind::domain, "weight vector width does not match the feature list");
    for (double s : m.stds)
        if (!(s > 0))
            throw Error(ErrorKind::domain, "standard deviations must be positive");
    const Json& meta = j.at("metadata");
    m.seed = meta.value("seed", std::uint64_t{0});
    m.epochs = meta.value("epochs", 0);
    m.C = meta.value("C", 0.0);
    m.learning_rate = meta.value("learning_rate", 0.0);
    m.train_rows = meta.value("train_rows", std::size_t{0});
}

void to_json(Json& j, const Evaluation& e) {
    Json labels = Json::array();
    for (auto l : kLabels)
        labels.push_back(l);
    j = Json{{"rows", e.rows}, {"accuracy", e.accuracy}, {"labels", labels}, {"confusion", e.confusion}};
}

}  // namespace coachai::classifier
