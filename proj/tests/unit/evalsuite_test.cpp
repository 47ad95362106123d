#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "atlas/error.hpp"
#include "atlas/evalsuite.hpp"
#include "json.hpp"
#include "test_support.hpp"

using namespace atlas;
using atlas::testing::brute_auc;

namespace {

std::vector<EunisCode> codes(const std::vector<std::string>& s) {
    std::vector<EunisCode> out;
    for (const auto& c : s) out.emplace_back(c);
    return out;
}

RankedAssemblage ranked(std::vector<std::size_t> species) {
    RankedAssemblage r;
    for (std::size_t i = 0; i < species.size(); ++i) {
        r.species.push_back(species[i]);
        r.probabilities.push_back(1.0 / static_cast<double>(i + 1));
    }
    return r;
}

}  // namespace

TEST(Auc, Examples) {
    EXPECT_EQ(auc(std::vector<double>{0.9, 0.8, 0.1}, std::vector<std::uint8_t>{1, 1, 0}), 1.0);
    EXPECT_EQ(auc(std::vector<double>{0.5, 0.5}, std::vector<std::uint8_t>{1, 0}), 0.5);
    EXPECT_EQ(auc(std::vector<double>{0.2, 0.7, 0.4, 0.9}, std::vector<std::uint8_t>{1, 0, 0, 1}), 0.5);
    EXPECT_FALSE(auc(std::vector<double>{0.2, 0.7}, std::vector<std::uint8_t>{1, 1}).has_value());
    EXPECT_FALSE(auc(std::vector<double>{}, std::vector<std::uint8_t>{}).has_value());
    EXPECT_THROW(auc(std::vector<double>{0.2}, std::vector<std::uint8_t>{1, 0}), ValidationError);
}

TEST(Auc, MatchesPairwiseOracleAndIsRankInvariant) {
    Rng rng(55);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 2 + rng.below(49);
        std::vector<double> s(n);
        std::vector<std::uint8_t> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = static_cast<double>(rng.below(12)) / 11.0;
            y[i] = rng.bernoulli(0.4);
        }
        y[0] = 1;
        y[1] = 0;
        const double a = *auc(s, y);
        ASSERT_NEAR(a, brute_auc(s, y), 1e-12);
        std::vector<double> t(n);
        for (std::size_t i = 0; i < n; ++i) t[i] = std::exp(3 * s[i]) - 7;
        ASSERT_NEAR(*auc(t, y), a, 1e-12);
    }
}

TEST(Fscore, Examples) {
    EXPECT_DOUBLE_EQ(fscore(std::vector<std::size_t>{0, 1, 2}, std::vector<std::size_t>{0, 1}), 0.8);
    EXPECT_EQ(fscore(std::vector<std::size_t>{3, 4}, std::vector<std::size_t>{4, 3}), 1.0);
    EXPECT_EQ(fscore(std::vector<std::size_t>{1}, std::vector<std::size_t>{2}), 0.0);
    EXPECT_EQ(fscore(std::vector<std::size_t>{}, std::vector<std::size_t>{}), 1.0);
    EXPECT_EQ(fscore(std::vector<std::size_t>{}, std::vector<std::size_t>{2}), 0.0);
}

TEST(Fscore, SymmetricAndHandOracle) {
    Rng rng(56);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<std::size_t> a, b;
        for (std::size_t i = 0; i < 10; ++i) {
            if (rng.bernoulli(0.4)) a.push_back(i);
            if (rng.bernoulli(0.4)) b.push_back(i);
        }
        std::set<std::size_t> sa(a.begin(), a.end()), inter;
        for (auto v : b) {
            if (sa.count(v)) inter.insert(v);
        }
        const double expect =
            a.empty() && b.empty() ? 1.0 : 2.0 * static_cast<double>(inter.size()) / static_cast<double>(a.size() + b.size());
        ASSERT_EQ(fscore(a, b), fscore(b, a));
        ASSERT_NEAR(fscore(a, b), expect, 1e-15);
    }
}

TEST(MeanFscore, Examples) {
    const auto t = ThresholdSet::global(0.5);
    const EvalPlot perfect{"p1", {}, {0.9, 0.1}, {1, 0}};
    const EvalPlot partial{"p2", {}, {0.9, 0.8, 0.7}, {1, 1, 0}};
    const EvalPlot partial3{"p2", {}, {0.9, 0.8, 0.7}, {1, 1, 0}};
    const std::vector<EvalPlot> two{perfect, partial};
    EXPECT_NEAR(mean_fscore(std::vector<EvalPlot>{partial3}, t), 0.8, 1e-15);
    EXPECT_NEAR(mean_fscore(two, t), 0.9, 1e-15);
    const std::vector<EvalPlot> doubled{perfect, partial, perfect, partial};
    EXPECT_NEAR(mean_fscore(doubled, t), 0.9, 1e-15);
}

TEST(RecallAtK, Examples) {
    const auto r = ranked({1, 2, 3, 4, 5});
    const std::vector<std::size_t> truth{1, 4, 5};
    EXPECT_DOUBLE_EQ(recall_at_k(r, truth, 2), 1.0 / 3.0);
    EXPECT_EQ(recall_at_k(r, truth, 5), 1.0);
    EXPECT_EQ(recall_at_k(r, std::vector<std::size_t>{7, 8}, 5), 0.0);
    EXPECT_THROW(recall_at_k(r, std::vector<std::size_t>{}, 5), ValidationError);
}

TEST(RecallAtK, MonotoneInK) {
    Rng rng(57);
    for (int trial = 0; trial < 200; ++trial) {
        const auto p = atlas::testing::random_probs(rng, 2 + rng.below(30));
        const auto r = rank_all_species(p);
        std::vector<std::size_t> truth;
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (rng.bernoulli(0.3)) truth.push_back(i);
        }
        if (truth.empty()) truth.push_back(0);
        double prev = 0;
        for (std::size_t k = 1; k <= p.size() + 2; ++k) {
            const double v = recall_at_k(r, truth, k);
            ASSERT_GE(v, prev);
            prev = v;
        }
        ASSERT_EQ(prev, 1.0);
    }
}

TEST(HabitatAccuracy, Examples) {
    const auto same = codes({"R22", "S42"});
    for (int l = 1; l <= 3; ++l) EXPECT_EQ(habitat_accuracy(same, same, l), 1.0);
    const auto p = codes({"R22"});
    const auto t = codes({"R21"});
    EXPECT_EQ(habitat_accuracy(p, t, 1), 1.0);
    EXPECT_EQ(habitat_accuracy(p, t, 2), 1.0);
    EXPECT_EQ(habitat_accuracy(p, t, 3), 0.0);

    const auto preds = codes({"R22", "S42", "R21", "T11"});
    const auto truths = codes({"R22", "S42", "R22", "S41"});
    EXPECT_EQ(habitat_accuracy(preds, truths, 3), 0.5);
    EXPECT_EQ(habitat_accuracy(preds, truths, 2), 0.75);
    EXPECT_EQ(habitat_accuracy(preds, truths, 1), 0.75);
    EXPECT_THROW(habitat_accuracy(preds, t, 1), ValidationError);
    EXPECT_THROW(habitat_accuracy(codes({"R2"}), codes({"R2"}), 1), ValidationError);
}

TEST(HabitatAccuracy, LevelsAreOrderedOnRandomInstances) {
    Rng rng(58);
    const std::vector<std::string> pool{"R21", "R22", "R11", "S42", "S41", "S11", "T12"};
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<std::string> p, t;
        const auto n = 1 + rng.below(20);
        for (std::size_t i = 0; i < n; ++i) {
            p.push_back(pool[rng.below(pool.size())]);
            t.push_back(pool[rng.below(pool.size())]);
        }
        const auto acc = habitat_accuracy_all(codes(p), codes(t));
        ASSERT_GE(acc.level1, acc.level2);
        ASSERT_GE(acc.level2, acc.level3);
    }
}

TEST(Coverage, PublishedFractions) {
    const auto a = coverage_from_count(132'800'000, 5'500'000'000, 50);
    EXPECT_NEAR(a.fraction * 100, 2.4, 0.05);
    EXPECT_DOUBLE_EQ(a.area_m2, 132.8e6 * 2500);
    const auto b = coverage_from_count(3'230'000'000, 5'500'000'000, 50);
    EXPECT_NEAR(b.fraction * 100, 58.6, 0.5);
    const auto z = coverage_from_count(0, 100, 50);
    EXPECT_EQ(z.cells, 0);
    EXPECT_EQ(z.fraction, 0.0);
    EXPECT_EQ(z.area_m2, 0.0);
}

TEST(Coverage, CountsLandCellsOnly) {
    const GridSpec g{0, 0, 10, 2, 2};
    GridPredictor pred(g, 2);
    pred.set({0, 0}, std::vector<double>{0.9, 0.1});
    pred.set({1, 0}, std::vector<double>{0.9, 0.1});
    pred.set({0, 1}, std::vector<double>{0.9, 0.1});
    TerrestrialMask mask(2, 2, true);
    mask.set_land({0, 1}, false);
    const auto cov = coverage_statistics(pred, ThresholdSet::global(0.5), &mask);
    EXPECT_EQ(cov[0].cells, 2);
    EXPECT_DOUBLE_EQ(cov[0].fraction, 2.0 / 3.0);
    EXPECT_EQ(cov[0].area_m2, 200.0);
    EXPECT_EQ(cov[1].cells, 0);
}

TEST(PairwiseSum, MatchesExactSum) {
    std::vector<double> v(1000);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i) * 0.5;
    EXPECT_EQ(pairwise_sum(v), 249750.0);
    EXPECT_EQ(pairwise_sum(std::vector<double>{}), 0.0);
}

TEST(MetricReport, AggregatesAndSerializes) {
    std::vector<EvalPlot> plots{{"a", {}, {0.9, 0.2, 0.6}, {1, 0, 1}}, {"b", {}, {0.3, 0.8, 0.1}, {0, 1, 0}}};
    const auto rep = evaluate_plots(plots, ThresholdSet::global(0.5));
    EXPECT_EQ(rep.auc, 1.0);
    EXPECT_EQ(rep.fscore, 1.0);
    EXPECT_EQ(rep.recall_at_50, 1.0);
    EXPECT_EQ(rep.plots, 2u);
    const auto j = nlohmann::json::parse(rep.to_json());
    for (const char* key : {"auc", "auc_macro", "fscore", "recall@50", "recall@250", "plots"}) {
        EXPECT_TRUE(j.contains(key)) << key;
    }
    EXPECT_TRUE(j["habitat_accuracy"].is_null());

    std::vector<EvalPlot> single{{"a", {}, {0.9, 0.2}, {1, 1}}};
    EXPECT_FALSE(micro_auc(single).has_value());
    EXPECT_FALSE(macro_auc(single).has_value());
}

TEST(MetricReport, MacroAucAveragesSpecies) {
    std::vector<EvalPlot> plots{{"a", {}, {0.9, 0.1}, {1, 1}}, {"b", {}, {0.2, 0.8}, {0, 0}},
                                {"c", {}, {0.5, 0.5}, {1, 0}}};
    const double s0 = brute_auc({0.9, 0.2, 0.5}, {1, 0, 1});
    const double s1 = brute_auc({0.1, 0.8, 0.5}, {1, 0, 0});
    EXPECT_NEAR(*macro_auc(plots), (s0 + s1) / 2, 1e-15);
    EXPECT_NEAR(*micro_auc(plots), brute_auc({0.9, 0.1, 0.2, 0.8, 0.5, 0.5}, {1, 1, 0, 0, 1, 0}), 1e-15);
}
