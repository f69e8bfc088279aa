#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include <ppod/evaluator.hpp>

#include "oracles.hpp"

using namespace ppod;

namespace {

std::vector<scored_item> items_from(const std::vector<std::pair<double, int>>& v) {
    std::vector<scored_item> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out.push_back({"s", outlier_kind::commission, static_cast<double>(i), std::nan(""), v[i].first, v[i].second});
    }
    return out;
}

double pair_count(const std::vector<scored_item>& items) {
    std::vector<double> pos, neg;
    for (const auto& it: items) (it.truth? pos: neg).push_back(it.score);
    return oracle::pair_count_auroc(pos, neg);
}

std::vector<scored_item> random_items(std::size_t n, std::uint64_t seed, int levels) {
    std::mt19937_64 rng(seed);
    std::vector<std::pair<double, int>> v;
    for (std::size_t i = 0; i < n; ++i) {
        int truth = static_cast<int>(rng() % 3 == 0);
        double score = static_cast<double>(rng() % static_cast<std::uint64_t>(levels)) + 0.7*truth;
        v.emplace_back(score, truth);
    }
    v[0].second = 1;
    v[1].second = 0;
    return items_from(v);
}

} // namespace

TEST(Auroc, PerfectSeparation) {
    EXPECT_EQ(auroc(items_from({{0.9, 1}, {0.1, 0}})).auroc, 1.0);
}

TEST(Auroc, AllTiedIsHalf) {
    EXPECT_EQ(auroc(items_from({{0.3, 1}, {0.3, 0}, {0.3, 0}, {0.3, 1}})).auroc, 0.5);
}

TEST(Auroc, HandPickedWithTieMatchesPairCounting) {
    auto items = items_from({{0.9, 1}, {0.4, 0}, {0.6, 1}, {0.6, 0}, {0.2, 0}, {0.1, 1}});
    // Pairs: 0.9 beats 3; 0.6 beats 2 ties 1; 0.1 beats 0 -> 5.5 / 9.
    EXPECT_NEAR(auroc(items).auroc, 5.5/9, 1e-12);
    EXPECT_NEAR(auroc(items).auroc, pair_count(items), 1e-12);
}

TEST(Auroc, RandomSetsMatchPairCounting) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto items = random_items(200, seed, 7);
        EXPECT_NEAR(auroc(items).auroc, pair_count(items), 1e-12);
    }
}

TEST(Auroc, CurveShape) {
    auto r = auroc(random_items(300, 3, 11));
    ASSERT_EQ(r.fpr.size(), r.tpr.size());
    EXPECT_EQ(r.fpr.front(), 0.0);
    EXPECT_EQ(r.tpr.front(), 0.0);
    EXPECT_EQ(r.fpr.back(), 1.0);
    EXPECT_EQ(r.tpr.back(), 1.0);
    for (std::size_t i = 1; i < r.fpr.size(); ++i) {
        EXPECT_GE(r.fpr[i], r.fpr[i - 1]);
        EXPECT_GE(r.tpr[i], r.tpr[i - 1]);
    }
    double area = 0;
    for (std::size_t i = 1; i < r.fpr.size(); ++i) area += (r.fpr[i] - r.fpr[i - 1])*(r.tpr[i] + r.tpr[i - 1])/2;
    EXPECT_NEAR(area, r.auroc, 1e-12);
}

TEST(Auroc, InvariantUnderIncreasingTransform) {
    auto items = random_items(150, 5, 9);
    auto transformed = items;
    for (auto& it: transformed) it.score = std::exp(3*it.score) - 40;
    EXPECT_NEAR(auroc(items).auroc, auroc(transformed).auroc, 1e-12);
}

TEST(Auroc, FlippedTruthsComplement) {
    auto items = random_items(150, 6, 5);
    auto flipped = items;
    for (auto& it: flipped) it.truth = 1 - it.truth;
    EXPECT_NEAR(auroc(flipped).auroc, 1 - auroc(items).auroc, 1e-12);
}

TEST(Auroc, Errors) {
    EXPECT_THROW(auroc(items_from({{0.1, 1}, {0.2, 1}})), validation_error);
    EXPECT_THROW(auroc(items_from({{0.1, 0}})), validation_error);
    EXPECT_THROW(auroc(items_from({{std::nan(""), 0}, {0.2, 1}})), validation_error);
}

TEST(OutlierRatio, Counts) {
    std::vector<std::pair<double, int>> v(10, {0.0, 0});
    v[3].second = 1;
    EXPECT_DOUBLE_EQ(outlier_ratio(items_from(v)), 0.1);
    EXPECT_EQ(outlier_ratio(items_from({{1, 1}, {2, 1}})), 1.0);
    EXPECT_THROW(outlier_ratio({}), validation_error);
}

TEST(Curves, EightItemsByHand) {
    auto items = items_from({{0.1, 0}, {0.2, 1}, {0.3, 0}, {0.4, 0}, {0.5, 1}, {0.6, 0}, {0.7, 1}, {0.8, 1}});
    auto c = fdr_fpr_curves(items, {0.0, 0.35, 0.55, 0.75, 0.9});
    // theta 0: all 8 flagged, 4 negatives.
    EXPECT_EQ(c[0].predicted, 8u);
    EXPECT_EQ(*c[0].fdr, 0.5);
    EXPECT_EQ(*c[0].fpr, 1.0);
    // theta .35: {.4 n, .5 p, .6 n, .7 p, .8 p}
    EXPECT_EQ(c[1].predicted, 5u);
    EXPECT_EQ(c[1].true_pos, 3u);
    EXPECT_DOUBLE_EQ(*c[1].fdr, 2.0/5);
    EXPECT_DOUBLE_EQ(*c[1].fpr, 2.0/4);
    // theta .55: {.6 n, .7 p, .8 p}
    EXPECT_DOUBLE_EQ(*c[2].fdr, 1.0/3);
    EXPECT_DOUBLE_EQ(*c[2].fpr, 1.0/4);
    // theta .75: {.8 p}
    EXPECT_EQ(*c[3].fdr, 0.0);
    EXPECT_EQ(*c[3].fpr, 0.0);
    // theta above max: nothing flagged.
    EXPECT_EQ(c[4].predicted, 0u);
    EXPECT_FALSE(c[4].fdr);
    EXPECT_EQ(*c[4].fpr, 0.0);
}

TEST(Curves, ThresholdIsStrict) {
    auto c = fdr_fpr_curves(items_from({{0.5, 1}, {0.5, 0}}), {0.5});
    EXPECT_EQ(c[0].predicted, 0u);
}

TEST(Curves, Errors) {
    EXPECT_THROW(fdr_fpr_curves({}, {0.0}), validation_error);
    EXPECT_THROW(fdr_fpr_curves(items_from({{1, 1}}), {0.5, 0.1}), validation_error);
    auto c = fdr_fpr_curves(items_from({{1, 1}}), {0.0});
    EXPECT_FALSE(c[0].fpr);
}

TEST(Bounds, Theorem1) {
    EXPECT_NEAR(theorem1_bound(-0.05, 0.1), 1.0/3, 1e-12);
    EXPECT_EQ(theorem1_bound(0, 0.1), 0.0);
    for (double th = 0; th > -3; th -= 0.1) EXPECT_LT(theorem1_bound(th, 0.2), theorem1_bound(th - 0.1, 0.2));
    EXPECT_THROW(theorem1_bound(0.1, 0.1), validation_error);
    EXPECT_THROW(theorem1_bound(-0.1, 0), validation_error);
}

TEST(Bounds, Theorem2) {
    EXPECT_EQ(theorem2_bound(0), 1.0);
    EXPECT_NEAR(theorem2_bound(2), 0.1353352832366127, 1e-12);
    for (double th = 0; th < 5; th += 0.1) EXPECT_GT(theorem2_bound(th), theorem2_bound(th + 0.1));
    EXPECT_THROW(theorem2_bound(-0.1), validation_error);
}

TEST(Bounds, Theorem3) {
    for (double th: {0.0, 0.5, 3.0}) EXPECT_EQ(theorem3_bound(th, 1), theorem2_bound(th));
    EXPECT_EQ(theorem3_bound(4, 0), 1.0);
    EXPECT_NEAR(theorem3_bound(10, 0.1), std::exp(-1.0), 1e-12);
    EXPECT_THROW(theorem3_bound(1, 1.1), validation_error);
}

TEST(Bounds, LinearGrid) {
    auto g = linear_grid(-2, 0, 41);
    EXPECT_EQ(g.front(), -2.0);
    EXPECT_EQ(g.back(), 0.0);
    EXPECT_NEAR(g[10], -1.5, 1e-15);
    EXPECT_THROW(linear_grid(0, 1, 1), validation_error);
}

TEST(VerifyBounds, SmallPoissonRunHasAllCurves) {
    bounds_config cfg;
    cfg.repetitions = 3;
    cfg.n_sequences = 10;
    cfg.span = {0, 400};
    cfg.min_positives = 5;
    auto r = verify_bounds(cfg, 1, 2);
    EXPECT_NO_THROW(r.curve("theorem1"));
    EXPECT_NO_THROW(r.curve("theorem2"));
    EXPECT_NO_THROW(r.curve("theorem3"));
    EXPECT_EQ(r.lambda1.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_GT(r.lambda1[i], 0.0);
    EXPECT_EQ(r.curve("theorem2").at(0).stats.mean, 1.0);
    EXPECT_EQ(r.curve("theorem2").points.size(), cfg.omission_grid.size());
    EXPECT_EQ(r.to_json(), verify_bounds(cfg, 1, 1).to_json());
    std::ostringstream csv;
    r.write_csv(csv);
    EXPECT_NE(csv.str().find("theorem3,fdr,"), std::string::npos);
}

TEST(VerifyBounds, GammaHasNoTheorem3) {
    bounds_config cfg;
    cfg.process = default_gamma();
    cfg.repetitions = 2;
    cfg.n_sequences = 4;
    cfg.span = {0, 200};
    auto r = verify_bounds(cfg, 2);
    EXPECT_THROW(r.curve("theorem3"), validation_error);
}

TEST(VerifyBounds, InvalidConfig) {
    bounds_config cfg;
    cfg.alpha0 = 0;
    EXPECT_THROW(verify_bounds(cfg, 1), validation_error);
    cfg = {};
    cfg.repetitions = 1;
    EXPECT_THROW(verify_bounds(cfg, 1), validation_error);
}
