#include <gtest/gtest.h>

#include <algorithm>

#include "coachai/error.hpp"
#include "coachai/instruments.hpp"
#include "coachai/rng.hpp"
#include "test_support.hpp"

using coachai::testing::read_fixture;

using namespace coachai;
using namespace coachai::instruments;

namespace {

QuestionnaireResponse response_for(const QuestionnaireTemplate& tpl, std::vector<double> values) {
    QuestionnaireResponse r;
    r.user_id = "u1";
    r.template_id = tpl.template_id;
    for (std::size_t i = 0; i < values.size(); ++i)
        r.answers[tpl.items[i].item_id] = values[i];
    return r;
}

QuestionnaireTemplate small_template(int items) {
    QuestionnaireTemplate tpl;
    tpl.template_id = "small";
    tpl.dimensions = {"a", "b"};
    for (int i = 0; i < items; ++i)
        tpl.items.push_back({"i" + std::to_string(i), "Item " + std::to_string(i) + "?", i % 2 ? "b" : "a",
                             {1, 5}, i == 1, {}});
    return tpl;
}

}  // namespace

TEST(Templates, BuiltinsLoadAndValidate) {
    const auto& all = builtin_templates();
    EXPECT_EQ(all.size(), 5u);
    EXPECT_EQ(builtin_template(Instrument::tam).items.size(), 10u);
    EXPECT_EQ(builtin_template(Instrument::attrakdiff).dimensions.size(), 4u);
    EXPECT_EQ(builtin_template("hapa_v1").instrument, Instrument::hapa);
    EXPECT_THROW(builtin_template("nope"), Error);
    for (const auto& tpl : all) {
        EXPECT_NO_THROW(check(tpl));
        Json j = tpl;
        EXPECT_EQ(j.get<QuestionnaireTemplate>(), tpl);
    }
}

TEST(Templates, CheckRejectsMalformed) {
    auto tpl = builtin_template(Instrument::tam);
    tpl.dimensions.pop_back();
    tpl.items.erase(std::remove_if(tpl.items.begin(), tpl.items.end(),
                                   [](const Item& i) { return i.dimension == "intention"; }),
                    tpl.items.end());
    EXPECT_THROW(check(tpl), Error);

    auto bad_scale = small_template(2);
    bad_scale.items[0].scale = {5, 5};
    EXPECT_THROW(check(bad_scale), Error);

    auto bad_dim = small_template(2);
    bad_dim.items[0].dimension = "zzz";
    EXPECT_THROW(check(bad_dim), Error);

    auto dup = small_template(2);
    dup.items[1].item_id = dup.items[0].item_id;
    EXPECT_THROW(check(dup), Error);

    try {
        parse_template("{\"template_id\": \"x\"}");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::instrument);
    }
}

TEST(Score, MidpointAnswersGiveMidpointMeans) {
    const auto& tpl = builtin_template(Instrument::attrakdiff);
    auto scores = score_response(tpl, response_for(tpl, std::vector<double>(tpl.items.size(), 4)));
    for (const auto& [dim, mean] : scores.per_dimension)
        EXPECT_DOUBLE_EQ(mean, 4.0) << dim;
    EXPECT_DOUBLE_EQ(scores.total, 4.0 * tpl.items.size());
}

TEST(Score, ReverseItemContributesMirroredScore) {
    QuestionnaireTemplate tpl;
    tpl.template_id = "rev";
    tpl.dimensions = {"d"};
    tpl.items.push_back({"r", "Reversed?", "d", {1, 7}, true, {}});
    auto scores = score_response(tpl, response_for(tpl, {7}));
    EXPECT_DOUBLE_EQ(scores.per_dimension.at("d"), 1.0);
    EXPECT_DOUBLE_EQ(scores.total, 1.0);
}

TEST(Score, TamFixtureDimensionMeans) {
    const auto& tpl = builtin_template(Instrument::tam);
    auto scores = score_response(tpl, response_for(tpl, {5, 5, 6, 6, 3, 3, 7, 7, 4, 4}));
    const std::map<std::string, double> expected{
        {"usefulness", 5}, {"ease_of_use", 6}, {"fun", 3}, {"attitude", 7}, {"intention", 4}};
    EXPECT_EQ(scores.per_dimension, expected);
    EXPECT_DOUBLE_EQ(scores.total, 50);
}

TEST(Score, ErrorsAndCompleteness) {
    const auto& tpl = builtin_template(Instrument::tam);
    auto r = response_for(tpl, {5, 5, 6, 6, 3, 3, 7, 7, 4, 4});
    r.answers["tam_u2"] = 8;
    try {
        score_response(tpl, r);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::domain);
        EXPECT_NE(std::string(e.what()).find("tam_u2"), std::string::npos);
    }
    auto unknown = response_for(tpl, {5, 5, 6, 6, 3, 3, 7, 7, 4, 4});
    unknown.answers["zzz"] = 3;
    EXPECT_THROW(score_response(tpl, unknown), Error);

    auto partial = response_for(tpl, {5, 3, 6});
    EXPECT_THROW(score_response(tpl, partial), Error);
    auto lenient = score_response(tpl, partial, Completeness::lenient);
    EXPECT_DOUBLE_EQ(lenient.per_dimension.at("usefulness"), 4.0);
    EXPECT_DOUBLE_EQ(lenient.per_dimension.at("ease_of_use"), 6.0);
    EXPECT_EQ(lenient.per_dimension.count("fun"), 0u);
    EXPECT_DOUBLE_EQ(lenient.total, 14.0);
}

TEST(Score, ReversalIsAnInvolution) {
    for (const auto& tpl : builtin_templates())
        for (const auto& item : tpl.items)
            for (double v = item.scale.min; v <= item.scale.max; v += 1) {
                Item rev = item;
                rev.reverse = true;
                EXPECT_EQ(rev.scored(rev.scored(v)), v);
            }
}

TEST(Score, BoundedAndPermutationInvariant) {
    Rng rng(9);
    const auto& tpl = builtin_template(Instrument::attrakdiff);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> values;
        for (std::size_t i = 0; i < tpl.items.size(); ++i)
            values.push_back(1 + static_cast<double>(rng.below(7)));
        auto scores = score_response(tpl, response_for(tpl, values));
        for (const auto& [dim, mean] : scores.per_dimension) {
            EXPECT_GE(mean, 1.0);
            EXPECT_LE(mean, 7.0);
        }
        // Permute the items within each dimension; scores must not move.
        auto shuffled = tpl;
        std::vector<std::size_t> order(shuffled.items.size());
        for (std::size_t i = 0; i < order.size(); ++i)
            order[i] = i;
        rng.shuffle(std::span(order));
        std::vector<Item> items;
        for (auto i : order)
            items.push_back(tpl.items[i]);
        shuffled.items = items;
        EXPECT_EQ(score_response(shuffled, response_for(tpl, values)), scores);
    }
}

TEST(Hapa, StageRuleTable) {
    DimensionScores s;
    s.per_dimension["behavioral_intention"] = 2.0;
    EXPECT_EQ(classify_hapa_stage(s, 2.0, 4.0), HapaStage::non_intender);
    s.per_dimension["behavioral_intention"] = 6.0;
    EXPECT_EQ(classify_hapa_stage(s, 2.0, 4.0), HapaStage::intender);
    EXPECT_EQ(classify_hapa_stage(s, 6.0, 4.0), HapaStage::actor);
    s.per_dimension["behavioral_intention"] = 4.0;
    EXPECT_EQ(classify_hapa_stage(s, 4.0, 4.0), HapaStage::actor);
    EXPECT_EQ(hapa_cutoff(builtin_template(Instrument::hapa)), 4.0);
    try {
        classify_hapa_stage(DimensionScores{}, 5.0, 4.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::instrument);
    }
}

TEST(Hapa, Monotone) {
    Rng rng(5);
    for (int trial = 0; trial < 10000; ++trial) {
        DimensionScores s;
        const double intention = rng.uniform(1, 7);
        const double behavior = rng.uniform(1, 7);
        s.per_dimension["behavioral_intention"] = intention;
        const auto base = classify_hapa_stage(s, behavior, 4.0);
        const auto more_behavior = classify_hapa_stage(s, behavior + rng.uniform(0, 3), 4.0);
        EXPECT_FALSE(base == HapaStage::actor && more_behavior == HapaStage::intender);
        s.per_dimension["behavioral_intention"] = intention + rng.uniform(0, 3);
        const auto more_intention = classify_hapa_stage(s, behavior, 4.0);
        EXPECT_FALSE(base == HapaStage::intender && more_intention == HapaStage::non_intender);
        EXPECT_GE(static_cast<int>(more_intention), static_cast<int>(base));
    }
}

TEST(BuildDialog, LinearStructure) {
    auto def = build_dialog(small_template(3));
    EXPECT_EQ(def.states.size(), 4u);
    EXPECT_EQ(def.terminal_states.size(), 1u);
    EXPECT_EQ(def.required_captures.size(), 3u);
    EXPECT_TRUE(dialog::validate(def).empty());
    EXPECT_THROW(build_dialog(small_template(0)), Error);
}

TEST(BuildDialog, EveryBuiltinValidatesAndRoundTrips) {
    for (const auto& tpl : builtin_templates()) {
        auto def = build_dialog(tpl);
        EXPECT_TRUE(dialog::validate(def).empty()) << tpl.template_id;
        EXPECT_EQ(dialog::parse_dialog(dialog::render_dialog(def)), def) << tpl.template_id;
    }
}

TEST(BuildDialog, RandomWalkYieldsScoreableResponse) {
    dialog::Engine engine;
    Rng rng(21);
    const Timestamp now = at(make_date(2024, 1, 15), TimeOfDay::hm(18, 0));
    for (const auto& tpl : builtin_templates()) {
        auto def = build_dialog(tpl);
        for (int walk = 0; walk < 50; ++walk) {
            auto r = engine.start_session(def, {"s", "u1", "c", {}}, now);
            while (r.session.status == dialog::SessionStatus::active) {
                const auto* st = def.find(r.session.current_state);
                std::string answer;
                if (st->input == dialog::InputKind::choice)
                    answer = st->transitions[rng.below(st->transitions.size())].answer;
                else
                    answer = std::to_string(static_cast<long>(st->min) +
                                            static_cast<long>(rng.below(static_cast<std::uint64_t>(st->max - st->min) + 1)));
                r = engine.advance(r.session, {"c", answer, now, 0}, def, now);
            }
            ASSERT_TRUE(r.completion.has_value());
            QuestionnaireResponse resp;
            resp.user_id = "u1";
            resp.template_id = tpl.template_id;
            resp.answers = answers_from_captures(tpl, r.completion->variables);
            EXPECT_EQ(resp.answers.size(), tpl.items.size());
            EXPECT_NO_THROW(score_response(tpl, resp));
        }
    }
}

TEST(Preference, EmptyAndCounting) {
    const auto& tpl = builtin_template(Instrument::preference);
    auto empty = preference_probe_summary(tpl, {});
    for (const auto& [topic, cells] : empty.counts)
        EXPECT_EQ(cells, (std::array<int, 3>{0, 0, 0}));
    EXPECT_EQ(empty.counts.size(), 3u);

    std::vector<QuestionnaireResponse> three;
    for (int i = 0; i < 3; ++i) {
        QuestionnaireResponse r;
        r.template_id = tpl.template_id;
        r.answers["pref_physical_activity"] = 2;
        three.push_back(r);
    }
    auto t = preference_probe_summary(tpl, three);
    EXPECT_EQ(t.at(Topic::physical_activity, CoachPreference::virtual_coach), 3);
    EXPECT_EQ(t.at(Topic::healthy_diet, CoachPreference::virtual_coach), 0);
}

TEST(Preference, MixedFixtureMatchesHandTally) {
    const auto& tpl = builtin_template(Instrument::preference);
    auto responses = Json::parse(read_fixture("preference_responses.json")).get<std::vector<QuestionnaireResponse>>();
    ASSERT_EQ(responses.size(), 9u);
    auto t = preference_probe_summary(tpl, responses);
    EXPECT_EQ(t.counts.at(Topic::physical_activity), (std::array<int, 3>{2, 2, 5}));
    EXPECT_EQ(t.counts.at(Topic::healthy_diet), (std::array<int, 3>{1, 4, 4}));
    EXPECT_EQ(t.counts.at(Topic::mental_wellness), (std::array<int, 3>{3, 1, 5}));
}
