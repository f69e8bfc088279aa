#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include <ppod/detector.hpp>
#include <ppod/evaluator.hpp>
#include <ppod/injector.hpp>
#include <ppod/models/ground_truth.hpp>
#include <ppod/simulator.hpp>

using namespace ppod;

namespace {

bool is_subsequence(const std::vector<event>& small, const std::vector<event>& big) {
    std::size_t j = 0;
    for (const auto& e: big) {
        if (j < small.size() && small[j] == e) ++j;
    }
    return j == small.size();
}

void expect_labels_consistent(const dataset& d) {
    for (const auto& ls: d.sequences) {
        ASSERT_TRUE(ls.labels);
        auto t = ls.sequence.target_times();
        for (double c: ls.labels->commission) EXPECT_TRUE(std::binary_search(t.begin(), t.end(), c));
        for (double r: ls.labels->removed) EXPECT_FALSE(std::binary_search(t.begin(), t.end(), r));
        EXPECT_NO_THROW(validate_labels(ls.sequence, *ls.labels));
    }
    EXPECT_NO_THROW(validate_dataset(d));
}

struct pipeline_data {
    dataset train, test;
    double lambda_hat_train;
};

pipeline_data default_split(const process_spec& spec, std::uint64_t seed) {
    auto all = simulate_dataset(spec, 40, {0, 1000}, seed);
    auto [train, test] = split_train_test(all, 0.5, seed);
    double rate = empirical_rate(train);
    return {std::move(train), std::move(test), rate};
}

} // namespace

TEST(Schedule, PeriodicValues) {
    periodic_rate p{0.2, 100};
    EXPECT_NEAR(eval_schedule(p, 25), 0.2, 1e-12);
    EXPECT_NEAR(eval_schedule(p, 75), 0.0, 1e-12);
    EXPECT_NEAR(eval_schedule(p, 0), 0.1, 1e-12);
    EXPECT_DOUBLE_EQ(eval_schedule(constant_rate{0.05}, 123.4), 0.05);
}

TEST(Schedule, PiecewiseConstantOnSteps) {
    piecewise_rate p{1.0, 10, 77};
    for (int k = 0; k < 20; ++k) {
        double v = eval_schedule(p, 10.0*k);
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
        for (double off: {0.5, 3.3, 9.999}) EXPECT_EQ(eval_schedule(p, 10.0*k + off), v);
    }
    EXPECT_NE(eval_schedule(p, 5), eval_schedule(p, 15));
    EXPECT_EQ(eval_schedule(piecewise_rate{1.0, 10, 77}, 42), eval_schedule(p, 42));
    // Independent draw per sequence.
    auto s0 = schedule_for_sequence(p, 0), s1 = schedule_for_sequence(p, 1);
    int differ = 0;
    for (int k = 0; k < 20; ++k) differ += eval_schedule(s0, 10.0*k) != eval_schedule(s1, 10.0*k);
    EXPECT_GT(differ, 15);
}

TEST(Schedule, JsonRoundTripAndValidation) {
    for (rate_schedule s: {rate_schedule{constant_rate{0.1}}, rate_schedule{periodic_rate{0.2, 50}}, rate_schedule{piecewise_rate{0.3, 7, 9}}}) {
        auto back = schedule_from_json(schedule_to_json(s));
        for (double t: {0.0, 12.5, 99.0}) EXPECT_EQ(eval_schedule(back, t), eval_schedule(s, t));
    }
    EXPECT_THROW(validate_schedule(constant_rate{-0.1}), validation_error);
    EXPECT_THROW(validate_schedule(periodic_rate{0.1, 0}), validation_error);
    EXPECT_THROW(validate_schedule(piecewise_rate{0.1, -1, 0}), validation_error);
    EXPECT_THROW(schedule_from_json({{"kind", "cosine"}, {"alpha0", 0.1}}), validation_error);
}

TEST(Commission, ZeroRateLeavesDataUnchanged) {
    auto data = simulate_dataset(default_poisson(), 4, {0, 200}, 1);
    auto res = inject_commission(data, constant_rate{0}, 2);
    for (std::size_t i = 0; i < data.size(); ++i) {
        EXPECT_EQ(res.data.sequences[i].sequence, data.sequences[i].sequence);
        EXPECT_TRUE(res.data.sequences[i].labels->commission.empty());
    }
    EXPECT_EQ(res.report.added, 0u);
}

TEST(Commission, PreservesOriginalsAndLabelsAdded) {
    auto data = simulate_dataset(default_gamma(), 6, {0, 500}, 3);
    auto res = inject_commission(data, periodic_rate{0.5, 100}, 4);
    std::size_t labeled = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& before = data.sequences[i].sequence.events;
        const auto& after = res.data.sequences[i].sequence.events;
        EXPECT_TRUE(is_subsequence(before, after));
        EXPECT_EQ(after.size(), before.size() + res.data.sequences[i].labels->commission.size());
        labeled += res.data.sequences[i].labels->commission.size();
    }
    EXPECT_EQ(labeled, res.report.added);
    EXPECT_GT(labeled, 0u);
    expect_labels_consistent(res.data);
}

TEST(Commission, DefaultPoissonRatio) {
    auto p = default_split(default_poisson(), 10);
    auto res = inject_commission(p.test, constant_rate{0.1}, 11);
    EXPECT_NEAR(res.report.realized_ratio(), 0.092, 0.015);
    EXPECT_NEAR(res.report.lambda_hat, empirical_rate(p.test), 0);
}

TEST(Commission, PeriodicExpectedCount) {
    auto data = simulate_dataset(default_poisson(), 20, {0, 1000}, 12);
    double lambda_hat = empirical_rate(data);
    double expected = 0.1*lambda_hat*20*1000;
    double total = 0;
    const int reps = 20;
    for (int r = 0; r < reps; ++r) total += static_cast<double>(inject_commission(data, periodic_rate{0.2, 100}, 100 + r).report.added);
    EXPECT_NEAR(total/reps, expected, 0.1*expected);
}

TEST(Commission, CollisionsAreNudged) {
    // A dense grid of existing targets and a huge injection rate.
    event_sequence s{"s", {0, 1}, {}};
    for (int i = 1; i < 1000; ++i) s.events.push_back({i/1000.0, "x"});
    dataset d{{}, {{s, std::nullopt}}};
    auto res = inject_commission(d, constant_rate{5}, 1);
    expect_labels_consistent(res.data);
}

TEST(Omission, ZeroRateLeavesDataUnchanged) {
    auto data = simulate_dataset(default_gamma(), 4, {0, 200}, 1);
    auto res = inject_omission(data, constant_rate{0}, 2);
    for (std::size_t i = 0; i < data.size(); ++i) {
        EXPECT_EQ(res.data.sequences[i].sequence, data.sequences[i].sequence);
        EXPECT_TRUE(res.data.sequences[i].labels->removed.empty());
    }
}

TEST(Omission, RateOneKeepsOnlyFirstTarget) {
    auto data = simulate_dataset(default_poisson(), 5, {0, 300}, 8);
    auto res = inject_omission(data, constant_rate{1}, 2);
    for (std::size_t i = 0; i < data.size(); ++i) {
        auto before = data.sequences[i].sequence.target_times();
        auto after = res.data.sequences[i].sequence.target_times();
        ASSERT_EQ(after.size(), 1u);
        EXPECT_EQ(after[0], before[0]);
        EXPECT_EQ(res.data.sequences[i].labels->removed.size(), before.size() - 1);
    }
}

TEST(Omission, NeverAddsEvents) {
    auto data = simulate_dataset(default_gamma(), 6, {0, 500}, 3);
    auto res = inject_omission(data, piecewise_rate{0.8, 10, 4}, 5);
    for (std::size_t i = 0; i < data.size(); ++i) {
        EXPECT_TRUE(is_subsequence(res.data.sequences[i].sequence.events, data.sequences[i].sequence.events));
        EXPECT_EQ(res.data.sequences[i].sequence.events.size() + res.data.sequences[i].labels->removed.size(),
                  data.sequences[i].sequence.events.size());
    }
    expect_labels_consistent(res.data);
}

TEST(Omission, RejectsProbabilityAboveOne) {
    auto data = simulate_dataset(default_gamma(), 2, {0, 50}, 3);
    EXPECT_THROW(inject_omission(data, constant_rate{1.5}, 1), validation_error);
}

TEST(Omission, DefaultGammaRatioOverScoredIntervals) {
    // The ratio counts checkpoint intervals, so it needs the detector.
    auto p = default_split(default_gamma(), 20);
    auto res = inject_omission(p.test, constant_rate{0.1}, 21);
    auto gt = make_ground_truth(default_gamma());
    auto items = filter_kind(run_detection(cif_scorer(*gt, "GT"), res.data, p.lambda_hat_train, 22), outlier_kind::omission);
    EXPECT_NEAR(outlier_ratio(items), 0.072, 0.015);
}

TEST(Injection, DeterministicUnderSeed) {
    auto data = simulate_dataset(default_poisson(), 3, {0, 300}, 1);
    EXPECT_EQ(inject_commission(data, constant_rate{0.1}, 5).data, inject_commission(data, constant_rate{0.1}, 5).data);
    EXPECT_EQ(inject_omission(data, constant_rate{0.1}, 5).data, inject_omission(data, constant_rate{0.1}, 5).data);
}
