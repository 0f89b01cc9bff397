#include "mive/rng.hpp"
#include "mive/stats.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace mive;
using namespace mive::stats;

TEST(Wilcoxon, AllPositiveFivePairs) {
    const auto r = wilcoxon_signed_rank({2, 3, 4, 5, 6}, {1, 1, 1, 1, 1});
    EXPECT_TRUE(r.exact);
    EXPECT_EQ(r.n, 5);
    EXPECT_EQ(r.w_minus, 0.0);
    EXPECT_EQ(r.w_plus, 15.0);
    EXPECT_DOUBLE_EQ(r.p_two_sided, 0.0625);
}

TEST(Wilcoxon, Degenerate) {
    const auto r = wilcoxon_signed_rank({1, 2, 3}, {1, 2, 3});
    EXPECT_TRUE(r.degenerate);
    EXPECT_EQ(r.note, "degenerate: no nonzero pairs");
    EXPECT_EQ(r.p_two_sided, 1.0);
    EXPECT_THROW(wilcoxon_signed_rank({1}, {1, 2}), ShapeError);
    EXPECT_THROW(wilcoxon_signed_rank({}, {}), DataError);
}

TEST(Wilcoxon, ExactMatchesEnumerationWithTies) {
    Rng rng(2);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = rng.integer(1, 10);
        std::vector<double> x(static_cast<std::size_t>(n)), y(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            x[static_cast<std::size_t>(i)] = rng.integer(1, 5);
            y[static_cast<std::size_t>(i)] = rng.integer(1, 5);
        }
        const auto r = wilcoxon_signed_rank(x, y);
        if (r.degenerate) continue;
        EXPECT_NEAR(r.p_two_sided, oracle::wilcoxon_enumerated_p(x, y), 1e-12);
    }
}

TEST(Wilcoxon, MixedSignsSixPairs) {
    const std::vector<double> x{1.2, 3.4, 2.2, 5.0, 0.1, 4.4}, y{0.9, 3.9, 1.0, 2.1, 0.8, 4.0};
    EXPECT_NEAR(wilcoxon_signed_rank(x, y).p_two_sided, oracle::wilcoxon_enumerated_p(x, y), 1e-15);
}

TEST(Wilcoxon, SwapSymmetry) {
    Rng rng(3);
    for (int n : {4, 12, 30, 60}) {
        std::vector<double> x, y;
        for (int i = 0; i < n; ++i) {
            x.push_back(rng.normal());
            y.push_back(rng.normal() + 0.3);
        }
        const auto a = wilcoxon_signed_rank(x, y), b = wilcoxon_signed_rank(y, x);
        EXPECT_EQ(a.p_two_sided, b.p_two_sided);
        EXPECT_EQ(a.statistic, b.statistic);
    }
}

TEST(Wilcoxon, NormalApproximationAboveExactLimit) {
    std::vector<double> x, y;
    for (int i = 0; i < 40; ++i) {
        x.push_back(i + 1.0);
        y.push_back(0.0);
    }
    const auto r = wilcoxon_signed_rank(x, y);
    EXPECT_FALSE(r.exact);
    EXPECT_LT(r.p_two_sided, 1e-6);
    // Near the boundary the approximation tracks the exact tail.
    std::vector<double> a, b;
    Rng rng(9);
    for (int i = 0; i < 25; ++i) {
        a.push_back(rng.normal());
        b.push_back(rng.normal());
    }
    const double exact = wilcoxon_signed_rank(a, b).p_two_sided;
    a.push_back(0.5);
    b.push_back(0.49);
    EXPECT_NEAR(wilcoxon_signed_rank(a, b).p_two_sided, exact, 0.15);
}

TEST(Krippendorff, PerfectAgreement) {
    RatingTable r{{1, 2, 3, 4, 5}, {1, 2, 3, 4, 5}, {1, 2, std::nullopt, 4, 5}};
    EXPECT_EQ(krippendorff_alpha_ordinal(r), 1.0);
}

TEST(Krippendorff, HandBuiltTwoRaterTable) {
    RatingTable r{{1, 2, 3, 3}, {1, 3, 3, 4}};
    EXPECT_NEAR(krippendorff_alpha_ordinal(r), oracle::krippendorff_pairwise(r), 1e-12);
    const auto cm = coincidences(r);
    EXPECT_DOUBLE_EQ(cm.n, 8.0);
    EXPECT_EQ(cm.values, (std::vector<double>{1, 2, 3, 4}));
    EXPECT_DOUBLE_EQ(cm.o(0, 0), 2.0);
    EXPECT_DOUBLE_EQ(cm.o(1, 2), 1.0);
    EXPECT_DOUBLE_EQ(cm.o(2, 2), 2.0);
}

TEST(Krippendorff, MatchesPairwiseOracleOnRandomTables) {
    Rng rng(4);
    for (int trial = 0; trial < 30; ++trial) {
        const int raters = rng.integer(2, 4), items = rng.integer(2, 8);
        RatingTable r(static_cast<std::size_t>(raters), std::vector<std::optional<double>>(static_cast<std::size_t>(items)));
        for (auto& row : r)
            for (auto& v : row)
                if (rng.uniform() < 0.85) v = rng.integer(1, 5);
        try {
            const double a = krippendorff_alpha_ordinal(r);
            EXPECT_NEAR(a, oracle::krippendorff_pairwise(r), 1e-10);
        } catch (const DataError&) {
        }
    }
}

TEST(Krippendorff, RandomRatingsNearZero) {
    Rng rng(5);
    RatingTable r(2, std::vector<std::optional<double>>(1000));
    for (auto& row : r)
        for (auto& v : row) v = rng.integer(1, 5);
    EXPECT_LT(std::abs(krippendorff_alpha_ordinal(r)), 0.1);
}

TEST(Krippendorff, InvariantUnderItemAndRaterPermutation) {
    RatingTable r{{1, 2, 3, 5, std::nullopt}, {2, 2, 4, 5, 1}, {1, 3, 3, std::nullopt, 2}};
    const double a = krippendorff_alpha_ordinal(r);
    RatingTable p{r[2], r[0], r[1]};
    for (auto& row : p) std::reverse(row.begin(), row.end());
    EXPECT_NEAR(krippendorff_alpha_ordinal(p), a, 1e-14);
}

TEST(Krippendorff, Errors) {
    EXPECT_THROW(krippendorff_alpha_ordinal(RatingTable{{1, 2}}), DataError);
    EXPECT_THROW(krippendorff_alpha_ordinal(RatingTable{{1, std::nullopt}, {std::nullopt, 2}}), DataError);
    EXPECT_THROW(krippendorff_alpha_ordinal(RatingTable{{1, 2}, {1}}), ShapeError);
}
