#include "ldm/process.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

using namespace ldm;
using ldm::testing::field_2d;
using ldm::testing::random_field;

TEST(ForwardMean, TimeZeroIsIdentity)
{
    RngStream rng(1);
    const auto proc = make_process(3, 2, {1.0, 3.0});
    const Field x = random_field({2, 16, 16}, rng);
    EXPECT_EQ(forward_mean(x, 0.0, proc), x);
}

TEST(ForwardMean, ConstantSurvivesFineAttenuation)
{
    // At t = 3: alpha = (0, 0.5, 1).
    const auto proc = make_process(3, 2, {1.0, 4.0}, {0.0, 2.0});
    ASSERT_EQ(proc.band_alphas(1, 3.0), (std::vector<double>{0.0, 0.5, 1.0}));
    const Field c = Field::constant({1, 8, 8}, -0.3);
    ldm::testing::expect_fields_near(forward_mean(c, 3.0, proc), c, 1e-15);
}

TEST(ForwardMean, TwoBandExample)
{
    const auto proc = make_process(2, 2, {1.0});
    EXPECT_EQ(forward_mean(field_2d({{1, 3}, {5, 7}}), 1.0, proc), field_2d({{4, 4}, {4, 4}}));
}

TEST(ForwardMean, PastLastExtinctionKeepsOnlyCoarsest)
{
    RngStream rng(2);
    const auto proc = make_process(3, 2, {1.0, 2.0});
    const Field x = random_field({1, 16, 16}, rng);
    const Pyramid p = laplacian_decompose(x, 3, 2);
    ldm::testing::expect_fields_near(forward_mean(x, 2.5, proc), upsample_n(p.bands[2], 2, 2), 1e-14);
}

TEST(ForwardMean, CoarseLevelIsDownsampledMean)
{
    RngStream rng(3);
    const auto proc = make_process(3, 2, {1.0, 3.0}, {0.2, 0.5});
    const Field x = random_field({1, 16, 16}, rng);
    for (double t : {0.0, 0.5, 1.5, 2.9}) {
        ldm::testing::expect_fields_near(forward_mean(x, t, proc, 2), downsample(forward_mean(x, t, proc), 2), 1e-13);
        ldm::testing::expect_fields_near(forward_mean(x, t, proc, 3), downsample(forward_mean(x, t, proc), 4), 1e-13);
    }
}

TEST(ForwardNoise, ZeroSigmaIsMean)
{
    RngStream rng(4);
    const auto proc = make_process(2, 2, {1.0});
    const Field x = random_field({1, 8, 8}, rng);
    const DiffusionState s = forward_noise(x, 0.0, proc, rng);
    EXPECT_EQ(s.field, forward_mean(x, 0.0, proc));
    EXPECT_EQ(s.sigma, 0.0);
}

TEST(ForwardNoise, UnitVariance)
{
    RngStream rng(5);
    const Field zero(1, 1, 1);
    std::vector<double> v;
    for (int i = 0; i < 100000; ++i) v.push_back(forward_noise(zero, 1.0, standard_process(), rng).field[0]);
    const auto m = ldm::testing::moments(v);
    EXPECT_NEAR(m.var, 1.0, 0.02);
    EXPECT_NEAR(m.mean, 0.0, 0.015);
}

TEST(ForwardNoise, Deterministic)
{
    const auto proc = make_process(2, 2, {1.0});
    RngStream a(9);
    RngStream b(9);
    const Field x = Field::constant({1, 4, 4}, 0.5);
    EXPECT_EQ(forward_noise(x, 0.7, proc, a).field, forward_noise(x, 0.7, proc, b).field);
}

TEST(ForwardNoise, SingleBandIsStandardProcess)
{
    RngStream rng(6);
    const Field x = random_field({1, 4, 4}, rng);
    RngStream a(10);
    RngStream b(10);
    const DiffusionState s = forward_noise(x, 2.0, standard_process(), a);
    Field expected = x;
    for (double& v : expected.values()) v += 2.0 * b.normal();
    EXPECT_EQ(s.field, expected);
}

TEST(ForwardNoise, BandwiseAssemblyMatches)
{
    // mu + sigma eps == sum_i up(alpha_i x0_i + sigma eps_i)
    RngStream rng(7);
    const auto proc = make_process(3, 2, {0.8, 2.0}, {0.1, 0.4});
    for (int trial = 0; trial < 20; ++trial) {
        const Field x = random_field({2, 16, 16}, rng);
        const Field eps = standard_normal(x.shape(), rng);
        const double t = 3.0 * rng.uniform();
        Field direct = forward_mean(x, t, proc);
        direct.axpy(t, eps);
        Pyramid px = laplacian_decompose(x, 3, 2);
        const Pyramid pe = decompose_noise(eps, 3, 2);
        for (int i = 0; i < 3; ++i) {
            auto& band = px.bands[static_cast<std::size_t>(i)];
            band *= proc.profile.alpha(i + 1, t);
            band.axpy(t, pe.bands[static_cast<std::size_t>(i)]);
        }
        EXPECT_LE(relative_max_error(laplacian_reconstruct(px), direct), 1e-12);
    }
}

TEST(ForwardNoise, ExtinctBandIsUncorrelated)
{
    const auto proc = make_process(2, 2, {1.0});
    RngStream rng(8);
    std::vector<double> a;
    std::vector<double> b;
    for (int i = 0; i < 100000; ++i) {
        const Field x0 = standard_normal({1, 2, 2}, rng);
        const DiffusionState s = forward_noise(x0, 1.5, proc, rng);
        a.push_back(laplacian_decompose(x0, 2, 2).bands[0][0]);
        b.push_back(laplacian_decompose(s.field, 2, 2).bands[0][0]);
    }
    const auto ma = ldm::testing::moments(a);
    const auto mb = ldm::testing::moments(b);
    double cov = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) cov += (a[i] - ma.mean) * (b[i] - mb.mean);
    cov /= static_cast<double>(a.size() - 1);
    EXPECT_LT(std::abs(cov / std::sqrt(ma.var * mb.var)), 0.01);
}

TEST(DecomposeNoise, RoundTripAndVariance)
{
    RngStream rng(11);
    const Field eps = standard_normal({1, 512, 512}, rng);
    const Pyramid p = decompose_noise(eps, 2, 2);
    EXPECT_LE(relative_max_error(laplacian_reconstruct(p), eps), 1e-14);
    const double var = p.bands[1].squared_norm() / static_cast<double>(p.bands[1].size());
    EXPECT_NEAR(var, 0.25, 0.25 * 0.02);
    const Pyramid c = decompose_noise(Field::constant({1, 8, 8}, 1.3), 3, 2);
    EXPECT_EQ(c.bands[0].max_abs(), 0.0);
    EXPECT_EQ(c.bands[1].max_abs(), 0.0);
}

TEST(ProjectNoiseDown, Examples)
{
    EXPECT_EQ(project_noise_down(field_2d({{1, -1}, {-1, 1}}), 2), field_2d({{0}}));
    EXPECT_EQ(project_noise_down(field_2d({{1, 1}, {1, 1}}), 2), field_2d({{2}}));
    EXPECT_THROW(project_noise_down(Field(1, 3, 4), 2), DimensionError);
}

TEST(ProjectNoiseDown, PreservesUnitVariance)
{
    RngStream rng(12);
    for (int ratio : {2, 4}) {
        const Field eps = standard_normal({1, 1000 * ratio / 2, 1000 * ratio / 2}, rng);
        const Field low = project_noise_down(eps, ratio);
        const double var = low.squared_norm() / static_cast<double>(low.size());
        EXPECT_NEAR(var, 1.0, 0.01) << "ratio " << ratio;
    }
}

TEST(DrawNoise, PyramidModeIsWhite)
{
    RngStream rng(13);
    const Field e = draw_noise({1, 512, 512}, 3, 2, NoiseMode::pyramid, rng);
    const double var = e.squared_norm() / static_cast<double>(e.size());
    EXPECT_NEAR(var, 1.0, 0.01);
    double lag = 0.0;
    for (int y = 0; y < e.height(); ++y) {
        for (int x = 0; x + 1 < e.width(); ++x) lag += e(0, y, x) * e(0, y, x + 1);
    }
    lag /= static_cast<double>(e.height() * (e.width() - 1));
    EXPECT_NEAR(lag, 0.0, 0.01);
}

TEST(SwitchUp, WorkedExample)
{
    const auto proc = make_process(2, 2, {1.0});
    const DiffusionState low{field_2d({{4}}), 1.0, 2, 0};
    SwitchRecord rec;
    const DiffusionState high = switch_up_with_noise(low, 2, proc, field_2d({{1, -1}, {-1, 1}}), &rec);
    EXPECT_EQ(high.field, field_2d({{6, 2}, {2, 6}}));
    EXPECT_EQ(high.sigma, 2.0);
    EXPECT_EQ(high.level, 1);
    EXPECT_EQ(rec.from_level, 2);
    EXPECT_EQ(rec.to_level, 1);
    EXPECT_EQ(rec.sigma_after, rec.sigma_before * rec.ratio);
}

TEST(SwitchUp, NoiselessSwitchIsUpsample)
{
    const auto proc = make_process(2, 2, {1.0});
    RngStream rng(14);
    const Field x = random_field({1, 4, 4}, rng);
    const DiffusionState high = switch_up_with_noise({x, 0.5, 2, 0}, 2, proc, Field(1, 8, 8));
    EXPECT_EQ(high.field, upsample(x, 2));
    EXPECT_EQ(high.sigma, 1.0);
}

TEST(SwitchUp, CoupledNoiseIdentity)
{
    RngStream rng(15);
    for (int ratio : {2, 4}) {
        const auto proc = make_process(3, 2, {1.0, 2.0});
        for (int trial = 0; trial < 50; ++trial) {
            const Field xr = random_field({1 + trial % 3, 4, 4}, rng, 2.0);
            const Field eps_high = standard_normal({xr.channels(), 4 * ratio, 4 * ratio}, rng);
            const double sigma = 0.1 + 5 * rng.uniform();
            Field noisy = xr;
            noisy.axpy(sigma, project_noise_down(eps_high, ratio));
            const DiffusionState out = switch_up_with_noise({noisy, sigma, 3, 0}, ratio, proc, eps_high);
            Field expected = upsample(xr, ratio);
            expected.axpy(sigma * ratio, eps_high);
            EXPECT_LE(relative_max_error(out.field, expected), 1e-12);
            EXPECT_EQ(out.level, ratio == 2 ? 2 : 1);
        }
    }
}

TEST(SwitchUp, Errors)
{
    const auto proc = make_process(3, 2, {1.0, 2.0});
    RngStream rng(16);
    EXPECT_THROW(switch_up({Field(1, 2, 2), 0.0, 2, 0}, 2, proc, rng), DomainError);
    EXPECT_THROW(switch_up({Field(1, 2, 2), 1.0, 2, 0}, 3, proc, rng), DomainError);
    EXPECT_THROW(switch_up({Field(1, 2, 2), 1.0, 2, 0}, 4, proc, rng), DomainError);
    EXPECT_THROW(switch_up_with_noise({Field(1, 2, 2), 1.0, 2, 0}, 2, proc, Field(1, 2, 2)), DimensionError);
}

TEST(Snr, Sentinel)
{
    EXPECT_TRUE(std::isinf(snr({Field(1, 2, 2), 0.0, 1, 0}, Field(1, 2, 2), standard_process())));
}

TEST(Snr, UnitPowerUnitNoise)
{
    const Field x0 = field_2d({{1, -1}, {-1, 1}});
    EXPECT_DOUBLE_EQ(snr({x0, 1.0, 1, 0}, x0, standard_process()), 1.0);
}

TEST(Snr, DoublesUnderPooling)
{
    const auto proc = make_process(2, 2, {1e9});
    RngStream rng(17);
    const Field x0 = Field::constant({1, 256, 256}, 0.8);
    const DiffusionState fine = forward_noise(x0, 0.5, proc, rng);
    const DiffusionState coarse = downsample_state(fine, 2, proc);
    EXPECT_NEAR(snr(coarse, x0, proc) / snr(fine, x0, proc), 2.0, 1e-12);

    // Measured from the fields: pooled residual noise has half the std.
    const Field r_fine = fine.field - forward_mean(x0, 0.5, proc);
    const Field r_coarse = coarse.field - forward_mean(x0, 0.5, proc, 2);
    const double std_fine = std::sqrt(r_fine.squared_norm() / static_cast<double>(r_fine.size()));
    const double std_coarse = std::sqrt(r_coarse.squared_norm() / static_cast<double>(r_coarse.size()));
    EXPECT_NEAR(std_fine / std_coarse, 2.0, 0.03);
}
