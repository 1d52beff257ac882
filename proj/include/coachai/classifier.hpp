#pragma once

#include <array>
#include <span>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "coachai/dialog.hpp"
#include "coachai/domain.hpp"
#include "coachai/json_support.hpp"
#include "coachai/rng.hpp"

namespace coachai::classifier {

constexpr std::size_t kFeatureCount = 25;
constexpr std::size_t kClassCount = 3;

// The four intake-dialog captures followed by the intake questionnaire items.
const std::array<std::string, kFeatureCount>& feature_names();

// Fixed label order; also the tie-break order of predict().
constexpr std::array<ActivityClass, kClassCount> kLabels{ActivityClass::vigorous, ActivityClass::mild,
                                                         ActivityClass::sedentary};

using FeatureVector = std::vector<double>;

// Canonical order, unstandardized. Throws missing_feature naming the first
// absent variable, coercion naming a non-numeric one.
FeatureVector extract_features(const dialog::Variables& intake);

struct LabeledRow {
    FeatureVector values;
    ActivityClass label = ActivityClass::unclassified;

    friend bool operator==(const LabeledRow&, const LabeledRow&) = default;
};

struct LabeledDataset {
    std::vector<std::string> feature_names;
    std::vector<LabeledRow> rows;

    std::size_t count(ActivityClass label) const;
    friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;
};

// Header: feature names then "label". Throws ParseError with the line number.
LabeledDataset parse_csv(std::string_view text);
std::string to_csv(const LabeledDataset& data);

struct GeneratorOptions {
    std::size_t rows = 375;
    std::uint64_t seed = 1;
};

// Three classes with disjoint ranges on one signature feature each
// (weekly_vigorous_minutes, weekly_moderate_minutes, sitting_hours); the other
// features are class-independent noise within their intake scales. The gap on
// each signature feature is at least 60 minutes / 2 hours.
LabeledDataset generate_dataset(const GeneratorOptions& options);

// One row of the generator's class-conditional distribution.
FeatureVector sample_features(ActivityClass label, Rng& rng);

// Stratified by label; rows keep their original relative order.
std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& data, double test_fraction,
                                                std::uint64_t seed);

struct Hyperparams {
    explicit Hyperparams(std::uint64_t seed_) : seed(seed_) {}

    double C = 1.0;
    int epochs = 200;
    double learning_rate = 0.01;
    std::uint64_t seed;
};

struct SvmModel {
    std::vector<std::string> feature_names;
    std::array<std::vector<double>, kClassCount> weights;
    std::array<double, kClassCount> biases{};
    std::vector<double> means;
    std::vector<double> stds;  // strictly positive
    std::uint64_t seed = 0;
    int epochs = 0;
    double C = 0;
    double learning_rate = 0;
    std::size_t train_rows = 0;

    friend bool operator==(const SvmModel&, const SvmModel&) = default;
};

// Full-batch hinge-loss subgradient descent per one-vs-rest problem,
// minimizing (1/2)|w|^2 + C * sum max(0, 1 - y (w.x + b)) with step
// learning_rate / t. The seed fixes the per-epoch accumulation order. Returns
// the iterate with the lowest objective.
SvmModel train(const LabeledDataset& data, const Hyperparams& params);

struct Prediction {
    ActivityClass label = ActivityClass::unclassified;
    std::array<double, kClassCount> scores{};
};

Prediction predict(const SvmModel& model, std::span<const double> features);

// Scores for already standardized input.
std::array<double, kClassCount> decision_values(const SvmModel& model, std::span<const double> standardized);

struct Evaluation {
    std::size_t rows = 0;
    double accuracy = 0;
    std::array<std::array<int, kClassCount>, kClassCount> confusion{};  // [actual][predicted], label order
};

Evaluation evaluate(const SvmModel& model, const LabeledDataset& data);

void to_json(Json& j, const SvmModel& m);
void from_json(const Json& j, SvmModel& m);
void to_json(Json& j, const Evaluation& e);

}  // namespace coachai::classifier
