#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "clozefact/random.hpp"

using namespace clozefact;

TEST(Random, SameSeedSameStream) {
    Rng a = make_rng(5, 9);
    Rng b = make_rng(5, 9);
    for (int i = 0; i < 100; ++i) {
        EXPECT_EQ(a(), b());
    }
}

TEST(Random, StreamsDiffer) {
    EXPECT_NE(derive_seed(5, 0), derive_seed(5, 1));
    EXPECT_NE(derive_seed(5, 0), derive_seed(6, 0));
}

TEST(Random, Uniform01InRange) {
    Rng r = make_rng(1);
    double lo = 1.0, hi = 0.0, sum = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double u = uniform01(r);
        lo = std::min(lo, u);
        hi = std::max(hi, u);
        sum += u;
    }
    EXPECT_GE(lo, 0.0);
    EXPECT_LT(hi, 1.0);
    EXPECT_NEAR(sum / n, 0.5, 0.01);
}

TEST(Random, UniformBelowCoversRangeEvenly) {
    Rng r = make_rng(2);
    std::vector<int> hist(7, 0);
    const int n = 70000;
    for (int i = 0; i < n; ++i) {
        ++hist[uniform_below(r, 7)];
    }
    for (int h : hist) {
        EXPECT_NEAR(h, n / 7, 500);
    }
    EXPECT_EQ(uniform_below(r, 0), 0u);
    EXPECT_EQ(uniform_below(r, 1), 0u);
}

TEST(Random, NormalMoments) {
    Rng r = make_rng(3);
    const int n = 200000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = standard_normal(r);
        s += x;
        s2 += x * x;
    }
    const double mean = s / n;
    EXPECT_NEAR(mean, 0.0, 0.01);
    EXPECT_NEAR(s2 / n - mean * mean, 1.0, 0.02);
}

TEST(Random, ShuffleIsPermutation) {
    std::vector<int> v(50);
    std::iota(v.begin(), v.end(), 0);
    Rng r = make_rng(4);
    shuffle(std::span<int>(v), r);
    EXPECT_FALSE(std::is_sorted(v.begin(), v.end()));
    std::sort(v.begin(), v.end());
    for (int i = 0; i < 50; ++i) {
        EXPECT_EQ(v[i], i);
    }
}

TEST(Random, ShuffleEmptyAndSingleton) {
    std::vector<int> empty;
    std::vector<int> one{42};
    Rng r = make_rng(4);
    shuffle(std::span<int>(empty), r);
    shuffle(std::span<int>(one), r);
    EXPECT_EQ(one[0], 42);
}
