#include "mive/evaluator.hpp"
#include "mive/ssim.hpp"

#include <gtest/gtest.h>

using namespace mive;
using namespace mive::eval;

namespace {

Video constant_video(int t, int h, int w, float v) { return Video(t, 3, h, w, v); }

/// Background 0.2 everywhere; a 4x4 block of 0.9 at (y0, x0) on the frames where `present`.
Video block_video(const std::vector<bool>& present, int y0 = 10, int x0 = 10) {
    Video v = constant_video(static_cast<int>(present.size()), 32, 32, 0.2f);
    for (int t = 0; t < v.dim(0); ++t)
        if (present[static_cast<std::size_t>(t)])
            for (int c = 0; c < 3; ++c)
                for (int y = y0; y < y0 + 4; ++y)
                    for (int x = x0; x < x0 + 4; ++x) v(t, c, y, x) = 0.9f;
    return v;
}

Mask3 block_region(int frames, int y0 = 10, int x0 = 10) {
    Mask3 m(frames, 32, 32);
    for (int t = 0; t < frames; ++t)
        for (int y = y0; y < y0 + 4; ++y)
            for (int x = x0; x < x0 + 4; ++x) m.set(t, y, x, true);
    return m;
}

}  // namespace

TEST(OracleJudge, PerfectEdit) {
    const auto s = datagen::generate_sample(datagen::EditType::recolor, 4);
    const auto sc = oracle_scores(s, s.tgt);
    EXPECT_EQ(sc[IA], 10.0);
    EXPECT_EQ(sc[CC], 10.0);
    EXPECT_EQ(sc[TS], 10.0);
    EXPECT_EQ(sc[PR], 10.0);
    EXPECT_EQ(sc[VA], 10.0);
    EXPECT_EQ(sc[SC], 10.0);
    EXPECT_NO_THROW(validate(sc));
}

TEST(OracleJudge, NoOpEditOnDelete) {
    const auto s = datagen::generate_sample(datagen::EditType::del, 4);
    const auto sc = oracle_scores(s, s.src);
    EXPECT_EQ(sc[CC], 10.0);
    EXPECT_LT(sc[IA], 5.0);
}

TEST(OracleJudge, SinglePixelFlip) {
    const auto s = datagen::generate_sample(datagen::EditType::recolor, 6);
    Video out = s.tgt;
    int ft = -1, fc = -1, fy = -1, fx = -1;
    for (int t = 0; t < out.dim(0) && ft < 0; ++t)
        for (int y = 0; y < out.dim(2) && ft < 0; ++y)
            for (int x = 0; x < out.dim(3) && ft < 0; ++x)
                for (int c = 0; c < 3 && ft < 0; ++c)
                    if (s.mask(t, y, x) && out(t, c, y, x) <= 0.75f) ft = t, fc = c, fy = y, fx = x;
    ASSERT_GE(ft, 0);
    out(ft, fc, fy, fx) += 0.25f;
    // One channel of one masked pixel moves by 0.25: MAE = 0.25 / (3 * |mask|).
    const double delta = static_cast<double>(out(ft, fc, fy, fx)) - s.tgt(ft, fc, fy, fx);
    const double mae = delta / (3.0 * static_cast<double>(s.mask.count()));
    const auto sc = oracle_scores(s, out);
    EXPECT_NEAR(sc[IA], 10.0 * (1.0 - mae / 0.25), 1e-9);
    EXPECT_EQ(sc[CC], 10.0);
}

TEST(OracleJudge, ScoresClampedToRange) {
    const auto s = datagen::generate_sample(datagen::EditType::background_swap, 2);
    Video inverted = s.tgt;
    for (auto& v : inverted.data) v = 1.0f - v;
    const auto sc = oracle_scores(s, inverted);
    EXPECT_NO_THROW(validate(sc));
    for (double v : sc.value) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 10.0);
    }
    EXPECT_THROW(oracle_scores(s, Video(9, 3, 16, 16)), ShapeError);
}

TEST(CapRule, NegligibleDifferenceCapsAllDimensions) {
    const auto s = datagen::generate_sample(datagen::EditType::del, 3);
    EvalScores sc;
    sc.value = {9.0, 10.0, 7.0, 6.0, 2.0, 8.5};
    const auto capped = apply_negligible_cap(sc, s.src, s.src);
    EXPECT_EQ(capped.value, (std::array<double, 6>{6.0, 6.0, 6.0, 6.0, 2.0, 6.0}));
    EXPECT_EQ(apply_negligible_cap(capped, s.src, s.src), capped);
    EXPECT_EQ(apply_negligible_cap(sc, s.src, s.tgt).value, sc.value);
    EvalScores low;
    low.value = {1, 2, 3, 4, 5, 6};
    EXPECT_EQ(apply_negligible_cap(low, s.src, s.src), low);
}

TEST(Persistence, ExitInSourceAndOutputIsNotPenalized) {
    datagen::EditSample s;
    const std::vector<bool> src_present{true, true, true, true, true, false, false, false, false};
    s.src = block_video(src_present);
    const auto region = block_region(9);
    EXPECT_EQ(reference_persistence_check(s, block_video(src_present), region), Persistence::no_penalty);
}

TEST(Persistence, VanishingOnlyInOutputIsPenalized) {
    datagen::EditSample s;
    s.src = block_video(std::vector<bool>(9, true));
    std::vector<bool> out_present(9, true);
    out_present[3] = false;
    EXPECT_EQ(reference_persistence_check(s, block_video(out_present), block_region(9)), Persistence::penalize);
}

TEST(Persistence, EmptyRegionAndShapeErrors) {
    datagen::EditSample s;
    s.src = block_video(std::vector<bool>(9, true));
    EXPECT_EQ(reference_persistence_check(s, s.src, Mask3(9, 32, 32)), Persistence::no_penalty);
    EXPECT_THROW(reference_persistence_check(s, s.src, Mask3(5, 32, 32)), ShapeError);
}

TEST(Ssim, IdentityIsExactlyOne) {
    const auto s = datagen::generate_sample(datagen::EditType::add, 9);
    EXPECT_EQ(ssim(s.src, s.src), 1.0);
    EXPECT_EQ(ssim(s.tgt, s.tgt), 1.0);
}

TEST(Ssim, Symmetric) {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const auto s = datagen::generate_sample(datagen::EditType::recolor, seed);
        EXPECT_NEAR(ssim(s.src, s.tgt), ssim(s.tgt, s.src), 1e-12);
    }
}

TEST(Ssim, ConstantImagesClosedForm) {
    const double a = 0.3, b = 0.7, c1 = 0.01 * 0.01;
    const double expect = (2 * a * b + c1) / (a * a + b * b + c1);
    EXPECT_NEAR(ssim(constant_video(1, 16, 16, 0.3f), constant_video(1, 16, 16, 0.7f)),
                (2 * static_cast<double>(0.3f) * static_cast<double>(0.7f) + c1) /
                    (std::pow(static_cast<double>(0.3f), 2) + std::pow(static_cast<double>(0.7f), 2) + c1),
                1e-9);
    EXPECT_NEAR(expect, 0.42 / 0.58, 1e-3);
}

TEST(Ssim, InvertedPatternScoresLower) {
    Video x(1, 3, 24, 24);
    for (int y = 0; y < 24; ++y)
        for (int xx = 0; xx < 24; ++xx)
            for (int c = 0; c < 3; ++c) x(0, c, y, xx) = ((y / 3 + xx / 3) % 2) ? 0.7f : 0.3f;
    Video inv = x;
    for (auto& v : inv.data) v = 1.0f - v;
    EXPECT_LT(ssim(x, inv), ssim(x, x));
}

TEST(Ssim, Errors) {
    EXPECT_THROW(ssim(constant_video(1, 16, 16, 0.f), constant_video(1, 16, 17, 0.f)), ShapeError);
    EXPECT_THROW(ssim(constant_video(1, 8, 8, 0.f), constant_video(1, 8, 8, 0.f)), ShapeError);
}

TEST(EvalScores, JsonShape) {
    EvalScores s;
    s.value = {1, 2, 3, 4, 5, 6};
    s.reasoning[0] = "ok";
    const auto j = to_json(s);
    EXPECT_EQ(j.at("IA").at("IA_score").get<double>(), 1.0);
    EXPECT_EQ(j.at("IA").at("reasoning").get<std::string>(), "ok");
    EXPECT_EQ(j.at("SC").at("SC_score").get<double>(), 6.0);
    EXPECT_DOUBLE_EQ(s.mean(), 3.5);
    s.value[2] = 11;
    EXPECT_THROW(validate(s), DataError);
}
