#include <gtest/gtest.h>

#include <sstream>
#include <vector>

#include "clozefact/metrics.hpp"

using namespace clozefact;

namespace {

const std::vector<Label> kBinary{Label::SupportText, Label::Refute};

} // namespace

TEST(Metrics, TwoClassOracle) {
    const auto cm = ConfusionMatrix::from_counts({{8, 2}, {3, 7}});
    const auto f1 = per_class_f1(cm);
    ASSERT_EQ(f1.size(), 2u);
    EXPECT_NEAR(f1[0], 16.0 / 21.0, 1e-12);
    EXPECT_NEAR(f1[1], 14.0 / 19.0, 1e-12);
    EXPECT_NEAR(weighted_f1(cm), (16.0 / 21.0 + 14.0 / 19.0) / 2.0, 1e-12);
    EXPECT_NEAR(weighted_f1(cm), 0.7493734335839599, 1e-12);
    EXPECT_DOUBLE_EQ(accuracy(cm), 0.75);
}

TEST(Metrics, SupportWeighting) {
    // Class 0 has 3x the support of class 1.
    const auto cm = ConfusionMatrix::from_counts({{30, 0}, {5, 5}});
    const auto f1 = per_class_f1(cm);
    const double f0 = 2.0 * (30.0 / 35.0) * 1.0 / (30.0 / 35.0 + 1.0);
    const double f1c = 2.0 * 1.0 * 0.5 / 1.5;
    EXPECT_NEAR(f1[0], f0, 1e-12);
    EXPECT_NEAR(f1[1], f1c, 1e-12);
    EXPECT_NEAR(weighted_f1(cm), (30.0 * f0 + 10.0 * f1c) / 40.0, 1e-12);
}

TEST(Metrics, DiagonalAndAllWrong) {
    const auto good = ConfusionMatrix::from_counts({{4, 0, 0}, {0, 2, 0}, {0, 0, 9}});
    EXPECT_TRUE(good.is_diagonal());
    EXPECT_DOUBLE_EQ(weighted_f1(good), 1.0);
    for (double f : per_class_f1(good)) {
        EXPECT_DOUBLE_EQ(f, 1.0);
    }
    const auto bad = ConfusionMatrix::from_counts({{0, 4}, {6, 0}});
    EXPECT_FALSE(bad.is_diagonal());
    EXPECT_DOUBLE_EQ(weighted_f1(bad), 0.0);
    EXPECT_DOUBLE_EQ(accuracy(bad), 0.0);
}

TEST(Metrics, AbsentClassScoresZero) {
    const auto cm = ConfusionMatrix::from_counts({{5, 0, 0}, {0, 5, 0}, {0, 0, 0}});
    const auto f1 = per_class_f1(cm);
    EXPECT_DOUBLE_EQ(f1[2], 0.0);
    // Zero support, so no weight in the final score.
    EXPECT_DOUBLE_EQ(weighted_f1(cm), 1.0);
}

TEST(Metrics, SingleOffDiagonal) {
    const auto cm = ConfusionMatrix::from_counts({{0, 1}, {0, 0}});
    EXPECT_EQ(per_class_f1(cm), (std::vector<double>{0.0, 0.0}));
    EXPECT_DOUBLE_EQ(weighted_f1(cm), 0.0);
}

TEST(Metrics, EmptyAndErrors) {
    const auto cm = confusion(std::vector<Label>{}, std::vector<Label>{}, kBinary);
    EXPECT_EQ(cm.total(), 0u);
    EXPECT_EQ(cm.classes(), 2u);
    EXPECT_THROW(weighted_f1(cm), std::invalid_argument);
    EXPECT_DOUBLE_EQ(accuracy(cm), 0.0);

    const std::vector<Label> g{Label::Refute, Label::Refute};
    const std::vector<Label> p{Label::Refute};
    EXPECT_THROW(confusion(g, p, kBinary), std::invalid_argument);
    const std::vector<Label> outside{Label::SupportMultimodal, Label::Refute};
    EXPECT_THROW(confusion(g, outside, kBinary), std::invalid_argument);
    EXPECT_THROW(ConfusionMatrix::from_counts({{1, 2}, {3}}), std::invalid_argument);
}

TEST(Metrics, ConfusionCountsAndPermutationInvariance) {
    std::vector<Label> golds, preds;
    for (std::size_t i = 0; i < 40; ++i) {
        golds.push_back(kAllLabels[i % 5]);
        preds.push_back(kAllLabels[(i * 7 + i / 3) % 5]);
    }
    const auto cm = confusion(golds, preds);
    EXPECT_EQ(cm.total(), 40u);
    for (std::size_t c = 0; c < 5; ++c) {
        EXPECT_EQ(cm.gold_count(c), 8u);
    }
    std::vector<std::size_t> order(40);
    for (std::size_t i = 0; i < 40; ++i) {
        order[i] = (i * 17) % 40;
    }
    std::vector<Label> g2, p2;
    for (std::size_t i : order) {
        g2.push_back(golds[i]);
        p2.push_back(preds[i]);
    }
    EXPECT_EQ(confusion(g2, p2), cm);
    EXPECT_DOUBLE_EQ(weighted_f1(confusion(g2, p2)), weighted_f1(cm));
}

TEST(Metrics, ReportOutputs) {
    const auto cm = ConfusionMatrix::from_counts({{8, 2}, {3, 7}});
    const auto r = make_report(cm, kBinary);
    EXPECT_EQ(r.evaluated, 20u);
    std::ostringstream csv;
    write_metrics_csv(csv, r);
    EXPECT_EQ(csv.str(), "class,f1\nSupport_Text,0.7619047619\nRefute,0.7368421053\n"
                         "final,0.7493734336\n");
    std::ostringstream table;
    write_metrics_table(table, r, "M1");
    const std::string t = table.str();
    EXPECT_NE(t.find("| Method | Support-Text | Refute | Final  |"), std::string::npos) << t;
    EXPECT_NE(t.find("0.7619"), std::string::npos);
    EXPECT_NE(t.find("0.7494"), std::string::npos);
    EXPECT_NE(t.find("M1"), std::string::npos);
}
