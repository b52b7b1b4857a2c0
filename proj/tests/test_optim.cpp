#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>
#include <vector>

#include "clozefact/optim.hpp"
#include "clozefact/training.hpp"

using namespace clozefact;

namespace {

struct Pair {
    Matrix a{1, 2};
    Matrix b{2, 1};
    std::vector<Matrix*> tensors() { return {&a, &b}; }
    std::vector<const Matrix*> tensors() const { return {&a, &b}; }
};

double rel(double x, double y) { return std::abs(x - y) / std::max(std::abs(y), 1e-300); }

ScheduleConfig sched(ScheduleKind k, std::size_t warm, double peak, std::size_t total,
                     std::size_t cycles = 1) {
    return ScheduleConfig{k, warm, peak, total, cycles};
}

} // namespace

// Two updates worked by hand for a single weight.
TEST(AdamW, HandComputedSteps) {
    Pair p;
    p.a[0] = 1.0;
    Pair g;
    AdamWState<Pair> st(p);
    AdamWHyper h;
    h.weight_decay = 0.1;
    const double lr = 0.01;

    g.a[0] = 0.5;
    adamw_step(p, g, st, h, lr);
    // m = 0.05, v = 0.00025, mhat = 0.5, vhat = 0.25
    double expect = 1.0 * (1 - lr * 0.1) - lr * 0.5 / (0.5 + 1e-8);
    EXPECT_NEAR(p.a[0], expect, 1e-15);

    g.a[0] = -1.0;
    adamw_step(p, g, st, h, lr);
    const double m = 0.9 * 0.05 + 0.1 * -1.0;
    const double v = 0.999 * 0.00025 + 0.001 * 1.0;
    const double mhat = m / (1 - 0.81);
    const double vhat = v / (1 - 0.999 * 0.999);
    expect = expect * (1 - lr * 0.1) - lr * mhat / (std::sqrt(vhat) + 1e-8);
    EXPECT_NEAR(p.a[0], expect, 1e-15);
    EXPECT_EQ(st.t, 2u);
}

TEST(AdamW, DecayIsDecoupledFromGradient) {
    Pair p;
    p.b[1] = 2.0;
    Pair g; // zero gradient
    AdamWState<Pair> st(p);
    AdamWHyper h;
    h.weight_decay = 0.5;
    adamw_step(p, g, st, h, 0.1);
    EXPECT_DOUBLE_EQ(p.b[1], 2.0 * (1 - 0.1 * 0.5));
}

// The Adam step is invariant to a positive rescaling of the gradient (up to
// epsilon effects).
TEST(AdamW, GradientScaleInvariance) {
    Pair p1, p2, g1, g2;
    p1.a[0] = p2.a[0] = 0.3;
    p1.a[1] = p2.a[1] = -0.7;
    AdamWState<Pair> s1(p1), s2(p2);
    AdamWHyper h;
    h.weight_decay = 0.0;
    for (int step = 0; step < 5; ++step) {
        g1.a[0] = 0.01 * (step + 1);
        g1.a[1] = -0.02;
        g2.a[0] = 1000.0 * g1.a[0];
        g2.a[1] = 1000.0 * g1.a[1];
        adamw_step(p1, g1, s1, h, 1e-3);
        adamw_step(p2, g2, s2, h, 1e-3);
    }
    // eps shifts each update by at most lr * eps / |g| = 1e-9 here.
    EXPECT_NEAR(p1.a[0], p2.a[0], 5e-9);
    EXPECT_NEAR(p1.a[1], p2.a[1], 5e-9);
}

TEST(AdamW, NonFiniteGradientRejectedWithoutMutation) {
    Pair p, g;
    p.a[0] = 1.0;
    g.a[0] = 1.0;
    g.b[1] = std::numeric_limits<double>::quiet_NaN();
    AdamWState<Pair> st(p);
    EXPECT_THROW(adamw_step(p, g, st, AdamWHyper{}, 0.1), std::domain_error);
    EXPECT_EQ(p.a[0], 1.0);
    EXPECT_EQ(st.t, 0u);
    EXPECT_EQ(st.m.a[0], 0.0);
    g.b[1] = std::numeric_limits<double>::infinity();
    EXPECT_THROW(adamw_step(p, g, st, AdamWHyper{}, 0.1), std::domain_error);
}

TEST(AdamW, ShapeMismatchAndNegativeLr) {
    Pair p, g;
    g.a = Matrix(2, 2);
    AdamWState<Pair> st(p);
    EXPECT_THROW(adamw_step(p, g, st, AdamWHyper{}, 0.1), std::invalid_argument);
    Pair g2;
    EXPECT_THROW(adamw_step(p, g2, st, AdamWHyper{}, -1.0), std::invalid_argument);
}

TEST(AdamW, HyperValidation) {
    AdamWHyper h;
    EXPECT_NO_THROW(h.validate());
    h.beta1 = 1.0;
    EXPECT_THROW(h.validate(), std::invalid_argument);
}

TEST(Schedule, WarmupLinearGolden) {
    const auto c = sched(ScheduleKind::WarmupLinear, 500, 1e-4, 3000);
    EXPECT_EQ(learning_rate(0, c), 0.0);
    EXPECT_LE(rel(learning_rate(250, c), 5e-5), 1e-12);
    EXPECT_LE(rel(learning_rate(500, c), 1e-4), 1e-12);
    EXPECT_LE(rel(learning_rate(1750, c), 5e-5), 1e-12);
    EXPECT_EQ(learning_rate(3000, c), 0.0);
}

TEST(Schedule, WarmupCosineGolden) {
    const auto c = sched(ScheduleKind::WarmupCosine, 100, 5e-6, 2000);
    EXPECT_LE(rel(learning_rate(100, c), 5e-6), 1e-12);
    EXPECT_LE(rel(learning_rate(1050, c), 2.5e-6), 1e-12);
    EXPECT_NEAR(learning_rate(2000, c), 0.0, 1e-18);
    EXPECT_LE(rel(learning_rate(50, c), 2.5e-6), 1e-12);
}

TEST(Schedule, MonotoneAfterWarmup) {
    for (auto kind : {ScheduleKind::WarmupLinear, ScheduleKind::WarmupCosine}) {
        const auto c = sched(kind, 10, 1.0, 200);
        for (std::size_t s = 1; s < 10; ++s) {
            EXPECT_LT(learning_rate(s - 1, c), learning_rate(s, c));
        }
        for (std::size_t s = 11; s <= 200; ++s) {
            EXPECT_LE(learning_rate(s, c), learning_rate(s - 1, c));
        }
    }
}

TEST(Schedule, RejectsOutOfRange) {
    const auto c = sched(ScheduleKind::WarmupLinear, 10, 1.0, 100);
    EXPECT_THROW(learning_rate(101, c), std::out_of_range);
    EXPECT_THROW(learning_rate(5, sched(ScheduleKind::WarmupLinear, 100, 1.0, 100)),
                 std::invalid_argument);
    EXPECT_THROW(learning_rate(5, sched(ScheduleKind::WarmupCosine, 1, 0.0, 100)),
                 std::invalid_argument);
}

TEST(Schedule, CyclicPeriodicWithZeroAtBoundaries) {
    const auto c = sched(ScheduleKind::Cyclic, 0, 0.01, 300, 3);
    EXPECT_EQ(cycle_length(c), 100u);
    EXPECT_EQ(cyclic_ramp_steps(c), 10u);
    EXPECT_EQ(learning_rate(0, c), 0.0);
    for (std::size_t b : {100u, 200u, 300u}) {
        EXPECT_NEAR(learning_rate(b, c), 0.0, 1e-18);
    }
    EXPECT_DOUBLE_EQ(learning_rate(10, c), 0.01);
    for (std::size_t s = 1; s < 100; ++s) {
        EXPECT_DOUBLE_EQ(learning_rate(s, c), learning_rate(s + 100, c));
        EXPECT_DOUBLE_EQ(learning_rate(s, c), learning_rate(s + 200, c));
        EXPECT_GT(learning_rate(s, c), 0.0);
    }
}

TEST(Schedule, CyclicRequiresDivisibleTotal) {
    EXPECT_THROW(cycle_length(sched(ScheduleKind::Cyclic, 0, 1.0, 100, 3)),
                 std::invalid_argument);
    EXPECT_THROW(cycle_length(sched(ScheduleKind::Cyclic, 0, 1.0, 3, 3)), std::invalid_argument);
}

TEST(Sampler, EpochsArePermutations) {
    BatchSampler s(10, 3);
    std::multiset<std::size_t> seen;
    for (int i = 0; i < 5; ++i) {
        for (auto x : s.next(4)) {
            seen.insert(x);
        }
    }
    for (std::size_t i = 0; i < 10; ++i) {
        EXPECT_EQ(seen.count(i), 2u);
    }
    EXPECT_THROW(BatchSampler(0, 1), std::invalid_argument);
}

TEST(Trace, MeanLossWindow) {
    std::vector<TraceRow> rows{{1, 0, 4.0}, {2, 0, 2.0}, {3, 0, 0.0}};
    EXPECT_DOUBLE_EQ(mean_loss(rows, 0, 2), 3.0);
    EXPECT_THROW(mean_loss(rows, 2, 2), std::invalid_argument);
    EXPECT_THROW(mean_loss(rows, 0, 0), std::invalid_argument);
}

TEST(TrainConfig, Validation) {
    TrainConfig c;
    EXPECT_NO_THROW(c.validate());
    c.batch_size = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = TrainConfig{};
    c.schedule = ScheduleKind::Cyclic;
    c.cycles = 3;
    c.total_steps = 100;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    const auto pre = pretrain_defaults();
    EXPECT_EQ(pre.total_steps, 3000u);
    EXPECT_EQ(pre.warmup_steps, 500u);
    EXPECT_EQ(pre.peak_lr, 1e-4);
    EXPECT_EQ(pre.batch_size, 64u);
}
