#include "ldm/linear.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <vector>

using namespace ldm;
using ldm::testing::random_field;

namespace {

LinearTrainConfig fixed_sigma(double sigma, int pairs)
{
    LinearTrainConfig cfg;
    cfg.pairs = pairs;
    cfg.sigma_dist = {std::log(sigma), 0.0};
    return cfg;
}

} // namespace

TEST(LinearFit, SinglePointIsExact)
{
    RngStream rng(1);
    const std::vector<Field> data{random_field({1, 2, 2}, rng)};
    const LinearDenoiser d = train_linear(data, fixed_sigma(0.7, 500), rng);
    EXPECT_FALSE(d.ridge_used());
    EXPECT_LE(eval_loss(d, data, 0.7, 200, rng), 1e-20);
}

TEST(LinearFit, RecoversWienerShrinkage)
{
    // N(0, v I) data: the optimal linear map is v / (v + sigma^2) I.
    RngStream rng(2);
    std::vector<Field> data;
    for (int i = 0; i < 100000; ++i) data.push_back(random_field({1, 2, 2}, rng, 0.5));
    for (double sigma : {0.25, 0.5, 1.0}) {
        const LinearDenoiser d = train_linear(data, fixed_sigma(sigma, 100000), rng);
        const double w = 0.25 / (0.25 + sigma * sigma);
        const Eigen::MatrixXd m = d.effective_matrix(sigma);
        for (int i = 0; i < 4; ++i) {
            EXPECT_NEAR(m(i, i), w, 0.02 * w) << "sigma " << sigma;
            for (int j = 0; j < 4; ++j) {
                if (i != j) {
                    EXPECT_NEAR(m(i, j), 0.0, 0.05 * w) << "sigma " << sigma;
                }
            }
        }
    }
}

TEST(LinearFit, LossSitsBetweenMmseAndBaselines)
{
    RngStream rng(3);
    std::vector<Field> data;
    for (int i = 0; i < 10; ++i) data.push_back(random_field({1, 1, 2}, rng));
    const DatasetOracle mmse(data, standard_process());
    const auto mean = ConstantDenoiser::dataset_mean(data);
    for (double sigma : {0.1, 0.5, 2.0}) {
        const LinearDenoiser lin = train_linear(data, fixed_sigma(sigma, 50000), rng);
        RngStream a(7);
        RngStream b(7);
        RngStream c(7);
        RngStream e(7);
        const double l_mmse = eval_loss(mmse, data, sigma, 20000, a);
        const double l_lin = eval_loss(lin, data, sigma, 20000, b);
        EXPECT_LE(l_mmse, l_lin * 1.001) << "sigma " << sigma;
        EXPECT_LE(l_lin, eval_loss(mean, data, sigma, 20000, c) * 1.01) << "sigma " << sigma;
        EXPECT_LE(l_lin, eval_loss(IdentityDenoiser{}, data, sigma, 20000, e) * 1.01) << "sigma " << sigma;
    }
}

TEST(LinearFit, RidgeWhenUnderdetermined)
{
    RngStream rng(4);
    std::vector<Field> data;
    for (int i = 0; i < 3; ++i) data.push_back(random_field({1, 3, 3}, rng));
    const LinearDenoiser d = train_linear(data, fixed_sigma(1.0, 4), rng);
    EXPECT_TRUE(d.ridge_used());
    const Field out = d.denoise({data[0], 1.0, 1, 0});
    for (double v : out.values()) EXPECT_TRUE(std::isfinite(v));
}

TEST(LinearFit, BucketsSplitBySigma)
{
    RngStream rng(5);
    std::vector<Field> data;
    for (int i = 0; i < 50; ++i) data.push_back(random_field({1, 1, 2}, rng));
    LinearTrainConfig cfg;
    cfg.pairs = 5000;
    cfg.bucket_edges = {0.1, 1.0};
    const LinearDenoiser d = train_linear(data, cfg, rng);
    ASSERT_EQ(d.buckets().size(), 3u);
    EXPECT_EQ(d.bucket_of(0.05), 0u);
    EXPECT_EQ(d.bucket_of(0.1), 1u);
    EXPECT_EQ(d.bucket_of(0.5), 1u);
    EXPECT_EQ(d.bucket_of(50.0), 2u);
    std::size_t total = 0;
    for (const auto& b : d.buckets()) total += b.pairs;
    EXPECT_EQ(total, 5000u);
}

TEST(LinearFit, Errors)
{
    RngStream rng(6);
    EXPECT_THROW(train_linear(std::vector<Field>{}, {}, rng), ConfigError);
    LinearTrainConfig bad;
    bad.bucket_edges = {1.0, 0.5};
    EXPECT_THROW(train_linear(std::vector<Field>{Field(1, 1, 1)}, bad, rng), ConfigError);
    EXPECT_THROW(train_linear(std::vector<Field>{Field(1, 1, 1), Field(1, 1, 2)}, {}, rng), DimensionError);
    const LinearDenoiser d = train_linear(std::vector<Field>{Field(1, 1, 2)}, fixed_sigma(1.0, 10), rng);
    EXPECT_THROW((void)d.denoise({Field(1, 1, 3), 1.0, 1, 0}), DimensionError);
    EXPECT_THROW((void)d.denoise({Field(1, 1, 2), 0.0, 1, 0}), DomainError);
}

TEST(LinearFit, SaveLoadRoundTrip)
{
    RngStream rng(8);
    std::vector<Field> data;
    for (int i = 0; i < 20; ++i) data.push_back(random_field({2, 2, 2}, rng));
    LinearTrainConfig cfg;
    cfg.pairs = 3000;
    cfg.bucket_edges = {0.3};
    const LinearDenoiser d = train_linear(data, cfg, rng);
    const auto path = (std::filesystem::temp_directory_path() / "ldm_linear_roundtrip.bin").string();
    d.save(path);
    const LinearDenoiser back = LinearDenoiser::load(path);
    std::filesystem::remove(path);
    EXPECT_EQ(back.shape(), d.shape());
    EXPECT_EQ(back.edges(), d.edges());
    for (double sigma : {0.1, 2.0}) {
        const DiffusionState s{random_field({2, 2, 2}, rng), sigma, 1, 0};
        EXPECT_EQ(back.denoise(s), d.denoise(s));
    }
    EXPECT_THROW(LinearDenoiser::load(path), IoError);
}
