#include "coachai/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "coachai/error.hpp"

namespace coachai::stats {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

[[noreturn]] void fail(const std::string& what) { throw Error(ErrorKind::domain, what); }

int sign(double v) { return (v > 0) - (v < 0); }

double mean_of(std::span<const double> v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

bool is_constant(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

// Sample mean and n-1 standard deviation; a constant sample reports its
// value and an exact zero.
std::pair<double, double> mean_sd(std::span<const double> v) {
    if (is_constant(v))
        return {v.front(), 0.0};
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v)
        ss += (x - m) * (x - m);
    return {m, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

void check_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x))
            fail("sample contains a non-finite value");
}

// Modified Lentz evaluation of the incomplete beta continued fraction.
double beta_continued_fraction(double a, double b, double x) {
    constexpr double tiny = 1e-300;
    constexpr double eps = 1e-16;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < tiny)
        d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 10000; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny)
            d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny)
            c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny)
            d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny)
            c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < eps)
            return h;
    }
    return h;
}

TestResult paired_from_differences(std::span<const double> diffs) {
    const int n = static_cast<int>(diffs.size());
    auto [m, sd] = mean_sd(diffs);
    TestResult r;
    r.df1 = n - 1;
    r.effect_direction = sign(m);
    if (sd == 0.0) {
        if (m == 0.0) {
            r.statistic = 0.0;
            r.p_value = 1.0;
        } else {
            r.statistic = m > 0 ? kInf : -kInf;
            r.p_value = 0.0;
            r.infinite = true;
        }
        return r;
    }
    r.statistic = m / (sd / std::sqrt(static_cast<double>(n)));
    r.p_value = t_two_sided_p(r.statistic, r.df1);
    return r;
}

TestResult f_result(double ss_effect, double df1, double ss_error, double df2) {
    TestResult r;
    r.df1 = df1;
    r.df2 = df2;
    if (ss_error == 0.0) {
        if (ss_effect == 0.0) {
            r.statistic = 0.0;
            r.p_value = 1.0;
        } else {
            r.statistic = kInf;
            r.p_value = 0.0;
            r.infinite = true;
            r.effect_direction = 1;
        }
        return r;
    }
    r.statistic = (ss_effect / df1) / (ss_error / df2);
    r.p_value = f_upper_p(r.statistic, df1, df2);
    r.effect_direction = r.statistic > 0 ? 1 : 0;
    return r;
}

void check_matrix(const Matrix& matrix) {
    if (matrix.size() < 2)
        fail("repeated-measures analysis needs at least 2 subjects");
    const std::size_t cols = matrix.front().size();
    if (cols < 2)
        fail("repeated-measures analysis needs at least 2 time points");
    for (const auto& row : matrix) {
        if (row.size() != cols)
            fail("repeated-measures matrix has a missing cell (ragged row)");
        for (double x : row)
            if (!std::isfinite(x))
                fail("repeated-measures matrix has a missing cell");
    }
}

}  // namespace

SampleSummary descriptives(std::span<const double> values) {
    if (values.empty())
        fail("descriptives of an empty sample");
    check_finite(values);
    SampleSummary s;
    s.n = static_cast<int>(values.size());
    if (s.n == 1) {
        s.mean = values.front();
    } else {
        std::tie(s.mean, s.std_deviation) = mean_sd(values);
    }
    s.variance = s.std_deviation * s.std_deviation;
    s.std_error = s.std_deviation / std::sqrt(static_cast<double>(s.n));
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    s.min = sorted.front();
    s.max = sorted.back();
    s.range = s.max - s.min;
    const std::size_t mid = sorted.size() / 2;
    s.median = sorted.size() % 2 == 1 ? sorted[mid] : (sorted[mid - 1] + sorted[mid]) / 2.0;
    return s;
}

TestResult one_sample_t(std::span<const double> values, double mu0) {
    if (values.size() < 2)
        fail("one-sample t-test needs at least 2 values");
    check_finite(values);
    const int n = static_cast<int>(values.size());
    auto [m, sd] = mean_sd(values);
    TestResult r;
    r.df1 = n - 1;
    r.effect_direction = sign(m - mu0);
    if (sd == 0.0) {
        if (m == mu0) {
            r.statistic = 0.0;
            r.p_value = 1.0;
        } else {
            r.statistic = m > mu0 ? kInf : -kInf;
            r.p_value = 0.0;
            r.infinite = true;
        }
        return r;
    }
    r.statistic = (m - mu0) / (sd / std::sqrt(static_cast<double>(n)));
    r.p_value = t_two_sided_p(r.statistic, r.df1);
    return r;
}

TestResult two_sample_t(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2)
        fail("two-sample t-test needs at least 2 values per group");
    check_finite(a);
    check_finite(b);
    auto [ma, sa] = mean_sd(a);
    auto [mb, sb] = mean_sd(b);
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    const double df = na + nb - 2.0;
    const double pooled = ((na - 1) * sa * sa + (nb - 1) * sb * sb) / df;
    TestResult r;
    r.df1 = df;
    r.effect_direction = sign(ma - mb);
    if (pooled == 0.0) {
        if (ma == mb) {
            r.p_value = 1.0;
        } else {
            r.statistic = ma > mb ? kInf : -kInf;
            r.p_value = 0.0;
            r.infinite = true;
        }
        return r;
    }
    r.statistic = (ma - mb) / std::sqrt(pooled * (1.0 / na + 1.0 / nb));
    r.p_value = t_two_sided_p(r.statistic, df);
    return r;
}

TestResult paired_t(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        fail("paired t-test needs equally sized samples");
    if (a.size() < 2)
        fail("paired t-test needs at least 2 pairs");
    check_finite(a);
    check_finite(b);
    std::vector<double> diffs(a.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        diffs[i] = a[i] - b[i];
    return paired_from_differences(diffs);
}

TestResult anova_between(const std::vector<std::vector<double>>& groups) {
    if (groups.size() < 2)
        fail("between-subjects ANOVA needs at least 2 groups");
    std::vector<double> means;
    std::vector<double> sizes;
    double ss_within = 0.0;
    double total = 0.0;
    for (const auto& g : groups) {
        if (g.size() < 2)
            fail("every ANOVA group needs at least 2 values");
        check_finite(g);
        auto [m, sd] = mean_sd(g);
        means.push_back(m);
        sizes.push_back(static_cast<double>(g.size()));
        ss_within += sd * sd * static_cast<double>(g.size() - 1);
        total += static_cast<double>(g.size());
    }
    // Pairwise form: exactly zero when all group means coincide.
    double ss_between = 0.0;
    for (std::size_t i = 0; i < means.size(); ++i)
        for (std::size_t j = i + 1; j < means.size(); ++j)
            ss_between += sizes[i] * sizes[j] * (means[i] - means[j]) * (means[i] - means[j]);
    ss_between /= total;
    const double k = static_cast<double>(groups.size());
    return f_result(ss_between, k - 1.0, ss_within, total - k);
}

TestResult rm_anova(const Matrix& matrix) {
    check_matrix(matrix);
    const std::size_t s = matrix.size();
    const std::size_t t = matrix.front().size();
    std::vector<double> row_mean(s, 0.0);
    std::vector<double> col_mean(t, 0.0);
    for (std::size_t i = 0; i < s; ++i)
        row_mean[i] = mean_of(matrix[i]);
    for (std::size_t j = 0; j < t; ++j) {
        double sum = 0.0;
        for (std::size_t i = 0; i < s; ++i)
            sum += matrix[i][j];
        col_mean[j] = sum / static_cast<double>(s);
    }
    const double grand = std::accumulate(col_mean.begin(), col_mean.end(), 0.0) / static_cast<double>(t);

    double ss_time = 0.0;
    for (std::size_t j = 0; j < t; ++j)
        for (std::size_t l = j + 1; l < t; ++l)
            ss_time += (col_mean[j] - col_mean[l]) * (col_mean[j] - col_mean[l]);
    ss_time *= static_cast<double>(s) / static_cast<double>(t);

    double ss_error = 0.0;
    for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = 0; j < t; ++j) {
            const double e = matrix[i][j] - row_mean[i] - col_mean[j] + grand;
            ss_error += e * e;
        }
    const double df1 = static_cast<double>(t - 1);
    const double df2 = static_cast<double>((t - 1) * (s - 1));
    return f_result(ss_time, df1, ss_error, df2);
}

std::vector<PairwiseResult> posthoc_pairwise(const Matrix& matrix, Correction correction) {
    check_matrix(matrix);
    const std::size_t t = matrix.front().size();
    const double pairs = static_cast<double>(t * (t - 1) / 2);
    std::vector<PairwiseResult> out;
    for (std::size_t j = 0; j < t; ++j)
        for (std::size_t l = j + 1; l < t; ++l) {
            std::vector<double> diffs;
            diffs.reserve(matrix.size());
            for (const auto& row : matrix)
                diffs.push_back(row[j] - row[l]);
            PairwiseResult pr{static_cast<int>(j), static_cast<int>(l), paired_from_differences(diffs)};
            if (correction == Correction::bonferroni)
                pr.test.p_value = std::min(1.0, pr.test.p_value * pairs);
            out.push_back(pr);
        }
    return out;
}

double incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0) || std::isnan(x))
        fail("incomplete beta needs a > 0, b > 0");
    if (x <= 0.0)
        return 0.0;
    if (x >= 1.0)
        return 1.0;
    const double log_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0))
        return front * beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double t_cdf(double x, double df) {
    if (!(df > 0.0))
        fail("t distribution needs df > 0");
    if (std::isnan(x))
        fail("t_cdf of NaN");
    if (x == 0.0)
        return 0.5;
    if (std::isinf(x))
        return x > 0 ? 1.0 : 0.0;
    const double x2 = x * x;
    const double z = df / (df + x2);
    // Pick the form whose incomplete-beta argument is small.
    double tail;
    if (z < 0.5)
        tail = 0.5 * incomplete_beta(df / 2.0, 0.5, z);
    else
        tail = 0.5 - 0.5 * incomplete_beta(0.5, df / 2.0, x2 / (df + x2));
    return x > 0 ? 1.0 - tail : tail;
}

double f_cdf(double x, double df1, double df2) {
    if (!(df1 > 0.0) || !(df2 > 0.0))
        fail("F distribution needs positive degrees of freedom");
    if (std::isnan(x))
        fail("f_cdf of NaN");
    if (x <= 0.0)
        return 0.0;
    if (std::isinf(x))
        return 1.0;
    return incomplete_beta(df1 / 2.0, df2 / 2.0, df1 * x / (df1 * x + df2));
}

double t_two_sided_p(double t, double df) {
    if (!(df > 0.0))
        fail("t distribution needs df > 0");
    if (std::isinf(t))
        return 0.0;
    if (t == 0.0)
        return 1.0;
    const double x2 = t * t;
    const double z = df / (df + x2);
    if (z < 0.5)
        return std::clamp(incomplete_beta(df / 2.0, 0.5, z), 0.0, 1.0);
    return std::clamp(1.0 - incomplete_beta(0.5, df / 2.0, x2 / (df + x2)), 0.0, 1.0);
}

double f_upper_p(double f, double df1, double df2) {
    if (!(df1 > 0.0) || !(df2 > 0.0))
        fail("F distribution needs positive degrees of freedom");
    if (f <= 0.0)
        return 1.0;
    if (std::isinf(f))
        return 0.0;
    return std::clamp(incomplete_beta(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f)), 0.0, 1.0);
}

}  // namespace coachai::stats
