#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "atlas/calibrate.hpp"
#include "atlas/error.hpp"
#include "atlas/evalsuite.hpp"
#include "test_support.hpp"

using namespace atlas;

namespace {

// Hand F1 oracle for one plot and one cut.
double f1_at(const LabeledVector& v, double t) {
    int tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < v.probs.size(); ++i) {
        const bool pred = v.probs[i] >= t;
        tp += pred && v.truth[i];
        fp += pred && !v.truth[i];
        fn += !pred && v.truth[i];
    }
    if (tp + fp + fn == 0) return 1.0;
    return 2.0 * tp / (2.0 * tp + fp + fn);
}

double mean_f1_at(const std::vector<LabeledVector>& plots, double t) {
    double s = 0;
    for (const auto& p : plots) s += f1_at(p, t);
    return s / static_cast<double>(plots.size());
}

}  // namespace

TEST(FscoreThreshold, WorkedExample) {
    const std::vector<LabeledVector> plots{{{0.9, 0.6, 0.2}, {1, 1, 0}}};
    const auto t = fit_fscore_threshold(plots);
    EXPECT_EQ(t.mode(), ThresholdMode::GlobalFscore);
    EXPECT_EQ(t.global_threshold(), 0.6);
    EXPECT_NEAR(mean_plot_fscore(plots, 0.2), 0.8, 1e-15);
    EXPECT_NEAR(f1_at(plots[0], 0.2), 0.8, 1e-15);
}

TEST(FscoreThreshold, EqualProbabilitiesAllPresent) {
    const std::vector<LabeledVector> plots{{{0.3, 0.3, 0.3}, {1, 1, 1}}};
    EXPECT_EQ(fit_fscore_threshold(plots).global_threshold(), 0.3);
}

TEST(FscoreThreshold, DuplicatePlotDoesNotMoveThreshold) {
    Rng rng(6);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<LabeledVector> plots;
        for (int i = 0; i < 5; ++i) {
            LabeledVector v{atlas::testing::random_probs(rng, 6), std::vector<std::uint8_t>(6)};
            for (auto& y : v.truth) y = rng.bernoulli(0.4);
            v.truth[0] = 1;
            plots.push_back(v);
        }
        const double t = fit_fscore_threshold(plots).global_threshold();
        auto doubled = plots;
        doubled.insert(doubled.end(), plots.begin(), plots.end());
        ASSERT_EQ(fit_fscore_threshold(doubled).global_threshold(), t);
    }
}

TEST(FscoreThreshold, OptimalOverEveryCandidate) {
    Rng rng(10);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<LabeledVector> plots;
        const auto n = 1 + rng.below(6);
        const auto s = 1 + rng.below(8);
        for (std::size_t i = 0; i < n; ++i) {
            LabeledVector v{std::vector<double>(s), std::vector<std::uint8_t>(s)};
            // Coarse values so ties between probabilities are common.
            for (auto& p : v.probs) p = static_cast<double>(rng.below(6)) / 5.0;
            for (auto& y : v.truth) y = rng.bernoulli(0.5);
            plots.push_back(v);
        }
        plots[0].truth[0] = 1;
        const double t = fit_fscore_threshold(plots).global_threshold();
        std::set<double> observed;
        for (const auto& p : plots) observed.insert(p.probs.begin(), p.probs.end());
        std::set<double> cands = observed;
        cands.insert({0.0, 1.0});
        const double best = mean_f1_at(plots, t);
        ASSERT_TRUE(cands.count(t));
        for (double c : cands) {
            ASSERT_GE(best, mean_f1_at(plots, c) - 1e-12);
            // Smaller observed cuts are strictly worse; a sentinel may tie
            // an observed winner.
            if (c < t && observed.count(c)) {
                ASSERT_LT(mean_f1_at(plots, c), best - 1e-12);
            }
            if (!observed.count(t) && observed.count(c)) {
                ASSERT_LT(mean_f1_at(plots, c), best - 1e-12);
            }
        }
        ASSERT_NEAR(mean_plot_fscore(plots, t), best, 1e-12);
    }
}

TEST(FscoreThreshold, NoPresencesRejected) {
    const std::vector<LabeledVector> plots{{{0.4, 0.2}, {0, 0}}};
    EXPECT_THROW(fit_fscore_threshold(plots), ValidationError);
    EXPECT_THROW(fit_fscore_threshold(std::vector<LabeledVector>{}), ValidationError);
}

TEST(Conformal, OrderStatisticExample) {
    EXPECT_EQ(conformal_threshold({0.9, 0.2, 0.6, 0.4, 0.8}, 0.2), 0.2);
    EXPECT_EQ(conformal_threshold({0.2, 0.4, 0.6, 0.8, 0.9}, 0.01), 0.0);
    EXPECT_FALSE(conformal_threshold({}, 0.1).has_value());
    // floor(0.5 * 6) = 3 -> third smallest.
    EXPECT_EQ(conformal_threshold({0.2, 0.4, 0.6, 0.8, 0.9}, 0.5), 0.6);
}

TEST(Conformal, PerSpeciesFitAndCalibrationOmission) {
    std::vector<LabeledVector> plots;
    const std::vector<double> scores{0.2, 0.4, 0.6, 0.8, 0.9};
    for (double s : scores) plots.push_back({{s, 0.5}, {1, 0}});
    const auto t = fit_conformal_thresholds(plots, 0.2);
    EXPECT_EQ(t.mode(), ThresholdMode::Conformal);
    EXPECT_EQ(t.threshold(0), 0.2);
    EXPECT_FALSE(t.threshold(1).has_value());
    int omitted = 0;
    for (const auto& p : plots) omitted += !t.present(0, p.probs[0]);
    EXPECT_EQ(omitted, 0);
    EXPECT_THROW(fit_conformal_thresholds(plots, 0.0), ValidationError);
    EXPECT_THROW(fit_conformal_thresholds(plots, 1.0), ValidationError);
}

TEST(Conformal, MonotoneInAlpha) {
    Rng rng(15);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> s = atlas::testing::random_probs(rng, 1 + rng.below(60));
        std::optional<double> prev = conformal_threshold(s, 0.01);
        for (double a = 0.02; a < 0.99; a += 0.01) {
            const auto t = conformal_threshold(s, a);
            ASSERT_GE(*t, *prev);
            prev = t;
        }
    }
}

TEST(Conformal, CalibrationOmissionAtMostAlpha) {
    Rng rng(16);
    for (int trial = 0; trial < 300; ++trial) {
        const auto s = atlas::testing::random_probs(rng, 1 + rng.below(100));
        const double alpha = rng.uniform(0.01, 0.5);
        const double t = *conformal_threshold(s, alpha);
        std::size_t omitted = 0;
        for (double v : s) omitted += v < t;
        ASSERT_LE(static_cast<double>(omitted), alpha * static_cast<double>(s.size()) + 1e-9);
    }
}

TEST(ApplyThresholds, Basics) {
    const auto global = ThresholdSet::global(0.5);
    const std::vector<double> p{0.9, 0.3};
    const auto a = apply_thresholds(p, global, {1, 2});
    EXPECT_EQ(a.species, (std::vector<std::size_t>{0}));
    EXPECT_EQ(a.probabilities, (std::vector<double>{0.9}));
    EXPECT_EQ(a.cell, (CellIndex{1, 2}));

    const auto never = ThresholdSet::conformal({std::nullopt, std::nullopt}, 0.1);
    EXPECT_TRUE(apply_thresholds(std::vector<double>{1.0, 1.0}, never, {}).species.empty());

    const auto boundary = ThresholdSet::conformal({0.25, 0.75}, 0.1);
    EXPECT_EQ(apply_thresholds(std::vector<double>{0.25, 0.7499}, boundary, {}).species,
              (std::vector<std::size_t>{0}));
    EXPECT_THROW(apply_thresholds(std::vector<double>{0.1}, boundary, {}), ValidationError);
}

TEST(ApplyThresholds, MonotoneInProbabilities) {
    Rng rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng.below(10);
        std::vector<std::optional<double>> ts(n);
        for (auto& t : ts) {
            if (!rng.bernoulli(0.1)) t = rng.uniform();
        }
        const auto set = ThresholdSet::conformal(ts, 0.1);
        auto p = atlas::testing::random_probs(rng, n);
        const auto before = apply_thresholds(p, set, {}).species;
        const auto i = rng.below(n);
        p[i] = std::min(1.0, p[i] + rng.uniform(0.0, 0.5));
        const auto after = apply_thresholds(p, set, {}).species;
        if (std::find(before.begin(), before.end(), i) != before.end()) {
            ASSERT_NE(std::find(after.begin(), after.end(), i), after.end());
        }
    }
}

TEST(ThresholdFile, RoundTripBothModes) {
    const SpeciesCatalog cat(std::vector<std::string>{"sp a", "sp b", "sp c"});
    const auto conf = ThresholdSet::conformal({0.125, std::nullopt, 0.1 + 0.2}, 0.1);
    const std::string text = conf.to_csv(cat);
    EXPECT_EQ(text.rfind("# {", 0), 0u);
    EXPECT_NE(text.find("sp b,NEVER"), std::string::npos);
    std::istringstream in(text);
    EXPECT_EQ(ThresholdSet::from_csv(in, cat), conf);

    const auto g = ThresholdSet::global(0.35);
    std::istringstream in2(g.to_csv(cat));
    EXPECT_EQ(ThresholdSet::from_csv(in2, cat), g);
}

TEST(ThresholdFile, RejectsMalformed) {
    const SpeciesCatalog cat(std::vector<std::string>{"A", "B"});
    auto reject = [&](const std::string& s) {
        std::istringstream in(s);
        EXPECT_THROW(ThresholdSet::from_csv(in, cat), ValidationError) << s;
    };
    reject("species_id,threshold\nA,0.1\nB,0.2\n");
    reject("# {\"mode\":\"conformal\",\"alpha\":0.1}\nspecies_id,threshold\nA,0.1\n");
    reject("# {\"mode\":\"conformal\",\"alpha\":0.1}\nspecies_id,threshold\nA,0.1\nB,1.5\n");
    reject("# {\"mode\":\"conformal\",\"alpha\":0.1}\nspecies_id,threshold\nA,0.1\nZ,0.2\n");
    reject("# {\"mode\":\"weird\",\"alpha\":0.1}\nspecies_id,threshold\nA,0.1\nB,0.1\n");
}
