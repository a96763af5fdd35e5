#include "ldm/grid.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace ldm;
using ldm::testing::field_2d;
using ldm::testing::random_field;

TEST(Downsample, BlockMean)
{
    const Field out = downsample(field_2d({{1, 3}, {5, 7}}), 2);
    EXPECT_EQ(out, field_2d({{4}}));
}

TEST(Downsample, ConstantFieldIsFixed)
{
    for (int f : {2, 3, 4}) {
        const Field c = Field::constant({2, 12, 12}, 0.75);
        EXPECT_EQ(downsample(c, f), Field::constant({2, 12 / f, 12 / f}, 0.75));
    }
}

TEST(Downsample, WhiteNoiseVarianceQuarters)
{
    RngStream rng(11);
    const Field eps = standard_normal({1, 1000, 1000}, rng);
    const Field d = downsample(eps, 2);
    const double var = d.squared_norm() / static_cast<double>(d.size());
    EXPECT_NEAR(var, 0.25, 0.25 * 0.01);
}

TEST(Downsample, RejectsNonDivisibleShape)
{
    EXPECT_THROW(downsample(Field(1, 5, 4), 2), DimensionError);
    EXPECT_THROW(downsample(Field(1, 4, 6), 4), DimensionError);
}

TEST(Upsample, Replicates)
{
    EXPECT_EQ(upsample(field_2d({{4}}), 2), field_2d({{4, 4}, {4, 4}}));
    EXPECT_EQ(upsample(field_2d({{1, 2}}), 2), field_2d({{1, 1, 2, 2}, {1, 1, 2, 2}}));
}

TEST(Upsample, DownOfUpIsIdentity)
{
    RngStream rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const Field x = random_field({1 + trial % 3, 3 + trial, 5}, rng);
        for (int f : {2, 3, 4}) EXPECT_LE(relative_max_error(downsample(upsample(x, f), f), x), 1e-15);
    }
}

TEST(Upsample, UpOfDownIsIdempotent)
{
    RngStream rng(4);
    const Field x = random_field({2, 16, 8}, rng);
    const Field once = upsample(downsample(x, 2), 2);
    const Field twice = upsample(downsample(once, 2), 2);
    ldm::testing::expect_fields_near(twice, once, 1e-15);
}

TEST(Laplacian, ConstantFieldLivesInCoarsestBand)
{
    const Pyramid p = laplacian_decompose(Field::constant({1, 8, 8}, 2.5), 3, 2);
    ASSERT_EQ(p.levels(), 3);
    EXPECT_EQ(p.bands[0], Field::constant({1, 8, 8}, 0.0));
    EXPECT_EQ(p.bands[1], Field::constant({1, 4, 4}, 0.0));
    EXPECT_EQ(p.bands[2], Field::constant({1, 2, 2}, 2.5));
}

TEST(Laplacian, TwoByTwoExample)
{
    const Pyramid p = laplacian_decompose(field_2d({{1, 3}, {5, 7}}), 2, 2);
    EXPECT_EQ(p.bands[1], field_2d({{4}}));
    EXPECT_EQ(p.bands[0], field_2d({{-3, -1}, {1, 3}}));
}

TEST(Laplacian, SingleLevelIsInput)
{
    RngStream rng(5);
    const Field x = random_field({3, 6, 10}, rng);
    const Pyramid p = laplacian_decompose(x, 1, 2);
    ASSERT_EQ(p.levels(), 1);
    EXPECT_EQ(p.bands[0], x);
    EXPECT_EQ(laplacian_reconstruct(p), x);
}

TEST(Laplacian, ThreeLevelMatchesExplicitFormulas)
{
    RngStream rng(6);
    const Field x = random_field({1, 16, 16}, rng);
    const Pyramid p = laplacian_decompose(x, 3, 2);
    const Field x3 = downsample(downsample(x, 2), 2);
    const Field x2 = downsample(x, 2) - upsample(x3, 2);
    const Field x1 = x - upsample(downsample(x, 2), 2);
    EXPECT_EQ(p.bands[2], x3);
    ldm::testing::expect_fields_near(p.bands[1], x2, 1e-14);
    ldm::testing::expect_fields_near(p.bands[0], x1, 1e-14);
}

TEST(Laplacian, RoundTripProperty)
{
    RngStream rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        const int f = trial % 2 == 0 ? 2 : 4;
        const int levels = 1 + static_cast<int>(rng.index(3));
        const int unit = static_cast<int>(detail::int_pow(f, levels - 1));
        const int h = unit * (1 + static_cast<int>(rng.index(static_cast<std::size_t>(std::max(1, 64 / unit)))));
        const int w = unit * (1 + static_cast<int>(rng.index(static_cast<std::size_t>(std::max(1, 64 / unit)))));
        const Field x = random_field({1 + static_cast<int>(rng.index(3)), h, w}, rng, 3.0);
        const Field back = laplacian_reconstruct(laplacian_decompose(x, levels, f));
        EXPECT_LE((back - x).norm() / x.norm(), 1e-12);
    }
}

TEST(Laplacian, Linearity)
{
    RngStream rng(8);
    const Field x = random_field({2, 16, 16}, rng);
    const Field y = random_field({2, 16, 16}, rng);
    const double a = 1.7;
    const double b = -0.4;
    const Pyramid pxy = laplacian_decompose(a * x + b * y, 3, 2);
    const Pyramid px = laplacian_decompose(x, 3, 2);
    const Pyramid py = laplacian_decompose(y, 3, 2);
    for (int i = 0; i < 3; ++i) {
        const auto k = static_cast<std::size_t>(i);
        ldm::testing::expect_fields_near(pxy.bands[k], a * px.bands[k] + b * py.bands[k], 1e-13);
    }
}

TEST(Laplacian, Errors)
{
    EXPECT_THROW(laplacian_decompose(Field(1, 8, 8), 5, 2), DimensionError);
    EXPECT_THROW(laplacian_decompose(Field(1, 6, 8), 3, 2), DimensionError);
    EXPECT_THROW(laplacian_decompose(Field(1, 8, 8), 0, 2), DimensionError);
    Pyramid bad;
    bad.factor = 2;
    bad.bands = {Field(1, 8, 8), Field(1, 3, 4)};
    EXPECT_THROW(laplacian_reconstruct(bad), DimensionError);
    EXPECT_THROW(laplacian_reconstruct(Pyramid{}), DimensionError);
}

TEST(Haar, SingleStepCoefficients)
{
    const Field y = haar_forward(field_2d({{1, 2}, {3, 4}}));
    ASSERT_EQ(y.shape(), (Shape{4, 1, 1}));
    EXPECT_DOUBLE_EQ(y[0], 5.0);  // (1+2+3+4)/2
    EXPECT_DOUBLE_EQ(y[1], -1.0); // (1-2+3-4)/2
    EXPECT_DOUBLE_EQ(y[2], -2.0); // (1+2-3-4)/2
    EXPECT_DOUBLE_EQ(y[3], 0.0);  // (1-2-3+4)/2
}

TEST(Haar, TwoLevelShape)
{
    RngStream rng(9);
    const Field y = haar_forward_2level(random_field({3, 8, 8}, rng));
    EXPECT_EQ(y.shape(), (Shape{48, 2, 2}));
    const Field z = haar_forward_2level(random_field({3, 32, 20}, rng));
    EXPECT_EQ(z.shape(), (Shape{48, 8, 5}));
}

TEST(Haar, ConstantHasNoDetail)
{
    const Field y = haar_forward_2level(Field::constant({1, 8, 8}, 3.0));
    for (int c = 0; c < 16; ++c) {
        for (int i = 0; i < 4; ++i) {
            const double v = y[static_cast<std::size_t>(c * 4 + i)];
            if (c == 0) {
                EXPECT_DOUBLE_EQ(v, 12.0); // 4x4 block sum / 4
            } else {
                EXPECT_EQ(v, 0.0);
            }
        }
    }
}

TEST(Haar, RoundTripAndNormPreservation)
{
    RngStream rng(10);
    for (int trial = 0; trial < 30; ++trial) {
        const Field x = random_field({1 + trial % 3, 4 * (1 + trial % 5), 4 * (1 + trial % 7)}, rng);
        const Field y = haar_forward_2level(x);
        EXPECT_LE(relative_max_error(haar_inverse_2level(y), x), 1e-12);
        EXPECT_LE(std::abs(y.squared_norm() - x.squared_norm()) / x.squared_norm(), 1e-12);
    }
}

TEST(Haar, Errors)
{
    EXPECT_THROW(haar_forward_2level(Field(1, 6, 8)), DimensionError);
    EXPECT_THROW(haar_inverse_2level(Field(8, 2, 2)), DimensionError);
}
