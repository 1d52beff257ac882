#include <gtest/gtest.h>

#include <cmath>

#include "coachai/error.hpp"
#include "coachai/json_support.hpp"
#include "coachai/rng.hpp"
#include "coachai/stats.hpp"
#include "unit/test_support.hpp"

using namespace coachai;
using namespace coachai::stats;

namespace {

Json oracles() { return Json::parse(coachai::testing::read_fixture("stats_oracles.json")); }

std::vector<double> scaled_to_sd(std::vector<double> v, double target_sd) {
    auto s = descriptives(v);
    for (double& x : v)
        x = 30.0 + (x - s.mean) * target_sd / s.std_deviation;
    return v;
}

}  // namespace

TEST(Descriptives, TableTwoRangeAnchor) {
    std::vector<double> v{19, 53, 25, 28, 31};
    auto s = descriptives(v);
    EXPECT_EQ(s.min, 19.0);
    EXPECT_EQ(s.max, 53.0);
    EXPECT_EQ(s.range, 34.0);
}

TEST(Descriptives, StdErrorFromSdAndN) {
    Rng rng(3);
    std::vector<double> v;
    for (int i = 0; i < 19; ++i)
        v.push_back(rng.normal(28, 9));
    auto s = descriptives(scaled_to_sd(v, 9.371));
    EXPECT_NEAR(s.std_deviation, 9.371, 1e-9);
    EXPECT_NEAR(s.std_error, 2.150, 0.001);
}

TEST(Descriptives, ConstantAndMedian) {
    std::vector<double> c{4, 4, 4};
    auto s = descriptives(c);
    EXPECT_EQ(s.std_deviation, 0.0);
    EXPECT_EQ(s.range, 0.0);
    std::vector<double> even{1, 9, 3, 5};
    EXPECT_EQ(descriptives(even).median, 4.0);
    std::vector<double> single{7};
    EXPECT_EQ(descriptives(single).std_deviation, 0.0);
    EXPECT_THROW(descriptives(std::vector<double>{}), Error);
}

TEST(Descriptives, IdentitiesHold) {
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> v(2 + rng.below(40));
        for (double& x : v)
            x = rng.uniform(-50, 50);
        auto s = descriptives(v);
        EXPECT_EQ(s.range, s.max - s.min);
        EXPECT_EQ(s.std_error, s.std_deviation / std::sqrt(static_cast<double>(s.n)));
        EXPECT_EQ(s.variance, s.std_deviation * s.std_deviation);
    }
}

TEST(OneSampleT, CenteredConstant) {
    std::vector<double> v(18, 4.0);
    auto r = one_sample_t(v, 4.0);
    EXPECT_EQ(r.statistic, 0.0);
    EXPECT_EQ(r.df1, 17.0);
    EXPECT_EQ(r.p_value, 1.0);
}

TEST(OneSampleT, ConstantOffCenterIsInfinite) {
    std::vector<double> v(5, 6.0);
    auto r = one_sample_t(v, 4.0);
    EXPECT_TRUE(r.infinite);
    EXPECT_TRUE(std::isinf(r.statistic));
    EXPECT_EQ(r.p_value, 0.0);
    EXPECT_THROW(one_sample_t(std::vector<double>{1.0}, 0.0), Error);
}

TEST(OneSampleT, MatchesOracle) {
    auto o = oracles()["one_sample"];
    auto v = o["values"].get<std::vector<double>>();
    auto r = one_sample_t(v, o["mu0"].get<double>());
    EXPECT_NEAR(r.statistic, o["t"].get<double>(), 1e-9);
    EXPECT_NEAR(r.p_value, o["p"].get<double>(), 1e-10);
    EXPECT_EQ(r.df1, 9.0);
    EXPECT_EQ(r.effect_direction, 1);
}

TEST(AnovaBetween, DegreesOfFreedomTenAndEight) {
    Rng rng(8);
    std::vector<double> a(10), b(8);
    for (double& x : a)
        x = rng.normal(5, 1);
    for (double& x : b)
        x = rng.normal(4, 1);
    auto r = anova_between({a, b});
    EXPECT_EQ(r.df1, 1.0);
    EXPECT_EQ(r.df2, 16.0);
}

TEST(AnovaBetween, IdenticalGroups) {
    std::vector<double> g{1.5, 2.25, 3.75, 4.0};
    auto r = anova_between({g, g, g});
    EXPECT_EQ(r.statistic, 0.0);
    EXPECT_EQ(r.p_value, 1.0);
    EXPECT_THROW(anova_between({g, {1.0}}), Error);
    EXPECT_THROW(anova_between({g}), Error);
}

TEST(AnovaBetween, MatchesOracle) {
    for (const auto& o : oracles()["anova"]) {
        auto groups = o["groups"].get<std::vector<std::vector<double>>>();
        auto r = anova_between(groups);
        EXPECT_NEAR(r.statistic, o["F"].get<double>(), 1e-9);
        EXPECT_NEAR(r.p_value, o["p"].get<double>(), 1e-10);
        EXPECT_EQ(r.df1, o["df1"].get<double>());
        EXPECT_EQ(*r.df2, o["df2"].get<double>());
    }
}

TEST(AnovaBetween, TwoGroupsEqualsSquaredT) {
    Rng rng(21);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> a(2 + rng.below(15)), b(2 + rng.below(15));
        for (double& x : a)
            x = rng.normal(0, 2);
        for (double& x : b)
            x = rng.normal(1, 2);
        const double t = two_sample_t(a, b).statistic;
        EXPECT_NEAR(anova_between({a, b}).statistic, t * t, 1e-9 * std::max(1.0, t * t));
    }
}

TEST(RmAnova, IdenticalColumnsAndDf) {
    Matrix m{{1, 1, 1}, {3, 3, 3}, {2.5, 2.5, 2.5}};
    EXPECT_EQ(rm_anova(m).statistic, 0.0);
    Matrix big(18, std::vector<double>(3));
    Rng rng(2);
    for (auto& row : big)
        for (double& x : row)
            x = rng.normal(4, 1);
    auto r = rm_anova(big);
    EXPECT_EQ(r.df1, 2.0);
    EXPECT_EQ(*r.df2, 34.0);
}

TEST(RmAnova, MissingCellsRejected) {
    Matrix ragged{{1, 2, 3}, {1, 2}};
    EXPECT_THROW(rm_anova(ragged), Error);
    Matrix nan{{1, 2, 3}, {1, NAN, 3}};
    EXPECT_THROW(rm_anova(nan), Error);
    EXPECT_THROW(rm_anova(Matrix{{1, 2, 3}}), Error);
}

TEST(RmAnova, MatchesOracle) {
    auto o = oracles()["rm_anova"];
    auto r = rm_anova(o["matrix"].get<Matrix>());
    EXPECT_NEAR(r.statistic, o["F"].get<double>(), 1e-9);
    EXPECT_NEAR(r.p_value, o["p"].get<double>(), 1e-10);
    EXPECT_EQ(r.df1, 2.0);
    EXPECT_EQ(*r.df2, 6.0);
}

TEST(Posthoc, IdenticalColumns) {
    Matrix m{{1, 1, 1}, {2, 2, 2}, {5, 5, 5}};
    for (const auto& pr : posthoc_pairwise(m)) {
        EXPECT_EQ(pr.test.statistic, 0.0);
        EXPECT_EQ(pr.test.p_value, 1.0);
    }
}

TEST(Posthoc, ConstantShiftIsInfinite) {
    Matrix m{{5, 4, 4}, {7, 6, 6}, {3, 2, 2}, {6, 5, 5}};
    auto res = posthoc_pairwise(m);
    ASSERT_EQ(res.size(), 3u);
    EXPECT_TRUE(res[0].test.infinite);  // (1,2)
    EXPECT_TRUE(res[1].test.infinite);  // (1,3)
    EXPECT_FALSE(res[2].test.infinite);
    EXPECT_EQ(res[2].test.statistic, 0.0);
}

TEST(Posthoc, MatchesPairedOracle) {
    auto o = oracles()["posthoc"];
    auto res = posthoc_pairwise(o["matrix"].get<Matrix>());
    ASSERT_EQ(res.size(), o["pairs"].size());
    for (std::size_t i = 0; i < res.size(); ++i) {
        EXPECT_EQ(res[i].first, o["pairs"][i]["first"].get<int>());
        EXPECT_EQ(res[i].second, o["pairs"][i]["second"].get<int>());
        EXPECT_NEAR(res[i].test.statistic, o["pairs"][i]["t"].get<double>(), 1e-9);
        EXPECT_NEAR(res[i].test.p_value, o["pairs"][i]["p_bonferroni"].get<double>(), 1e-10);
    }
}

TEST(Distributions, Boundaries) {
    EXPECT_EQ(t_cdf(0.0, 3.0), 0.5);
    EXPECT_EQ(t_cdf(0.0, 17.0), 0.5);
    EXPECT_EQ(f_cdf(0.0, 1.0, 16.0), 0.0);
    EXPECT_NEAR(t_cdf(2.110, 17), 0.975, 5e-4);
    EXPECT_THROW(t_cdf(1.0, 0.0), Error);
    EXPECT_THROW(f_cdf(1.0, -1.0, 2.0), Error);
}

TEST(Distributions, MatchReferenceValues) {
    auto o = oracles();
    for (const auto& c : o["t_cdf"])
        EXPECT_NEAR(t_cdf(c["x"].get<double>(), c["df"].get<double>()), c["cdf"].get<double>(), 1e-10)
            << c.dump();
    for (const auto& c : o["f_cdf"])
        EXPECT_NEAR(f_cdf(c["x"].get<double>(), c["df1"].get<double>(), c["df2"].get<double>()),
                    c["cdf"].get<double>(), 1e-10)
            << c.dump();
    for (const auto& c : o["incomplete_beta"])
        EXPECT_NEAR(incomplete_beta(c["a"].get<double>(), c["b"].get<double>(), c["x"].get<double>()),
                    c["value"].get<double>(), 1e-10)
            << c.dump();
}

TEST(Distributions, SymmetryAndMonotonicity) {
    Rng rng(99);
    for (int trial = 0; trial < 500; ++trial) {
        const double df = rng.uniform(0.5, 60);
        const double x = rng.uniform(-8, 8);
        EXPECT_NEAR(t_cdf(x, df) + t_cdf(-x, df), 1.0, 1e-10);
        EXPECT_LE(t_cdf(x, df), t_cdf(x + rng.uniform(0, 1), df));
    }
}
