#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace coachai::stats {

struct SampleSummary {
    int n = 0;
    double mean = 0.0;
    double std_error = 0.0;
    double median = 0.0;
    double std_deviation = 0.0;  // n - 1 denominator; 0 when n == 1
    double variance = 0.0;
    double range = 0.0;
    double min = 0.0;
    double max = 0.0;
};

struct TestResult {
    double statistic = 0.0;
    double df1 = 0.0;
    std::optional<double> df2;  // F tests only
    double p_value = 1.0;
    int effect_direction = 0;  // sign of the effect; 0 when none
    // Zero-variance denominator with a nonzero effect: statistic is +/-inf and p = 0.
    bool infinite = false;
};

// A paired comparison between two columns of a subjects x time matrix.
struct PairwiseResult {
    int first = 0;
    int second = 0;
    TestResult test;
};

enum class Correction { none, bonferroni };

// Rows are subjects, columns are time points. NaN marks a missing cell.
using Matrix = std::vector<std::vector<double>>;

SampleSummary descriptives(std::span<const double> values);

// Two-sided one-sample Student t-test against mu0.
TestResult one_sample_t(std::span<const double> values, double mu0);

// Pooled-variance two-sample t-test (two-sided).
TestResult two_sample_t(std::span<const double> a, std::span<const double> b);

// Two-sided paired t-test on a - b.
TestResult paired_t(std::span<const double> a, std::span<const double> b);

// Between-subjects one-way ANOVA.
TestResult anova_between(const std::vector<std::vector<double>>& groups);

// One-way repeated-measures ANOVA, no sphericity correction.
TestResult rm_anova(const Matrix& matrix);

// Paired t-test for every column pair (i < j), in lexicographic order.
std::vector<PairwiseResult> posthoc_pairwise(const Matrix& matrix, Correction correction = Correction::bonferroni);

// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double incomplete_beta(double a, double b, double x);
double t_cdf(double x, double df);
double f_cdf(double x, double df1, double df2);

// Two-sided tail probability P(|T| >= |t|).
double t_two_sided_p(double t, double df);
// Upper tail P(F >= f).
double f_upper_p(double f, double df1, double df2);

}  // namespace coachai::stats
