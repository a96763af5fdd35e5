#include "ldm/config.hpp"

#include <gtest/gtest.h>

#include <string>

using namespace ldm;

namespace {

// Runs `fn` and returns the ConfigError message, or "" if nothing was thrown.
template <class F>
std::string config_error(F&& fn)
{
    try {
        fn();
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

std::string parse_error(const std::string& text)
{
    return config_error([&] { (void)parse_config(text); });
}

std::string validation_error(const std::string& text)
{
    return config_error([&] { validate_config(parse_config(text)); });
}

RunConfig attenuated()
{
    return parse_config(R"({
        "seed": 42,
        "process": {"levels": 3, "factor": 2},
        "schedule": {"t_star": [1.0, 3.0], "ramp_start": [0.2, 1.0], "shape": "cosine", "sigma_max": 40},
        "denoiser": {"staged": true, "dataset": {"source": "synthetic-shapes", "kind": "blob", "count": 7}},
        "sampler": {"steps": [16, 8, 8], "integrator": "euler", "switch_times": [2.5, 0.9], "churn": 0.1,
                    "churn_noise": "pyramid"},
        "forward": {"t": [0, 3]},
        "output": {"format": "raw", "bits": 16, "snapshots": true}
    })");
}

} // namespace

TEST(Config, DefaultsAreValid)
{
    const RunConfig c;
    EXPECT_NO_THROW(validate_config(c));
    EXPECT_EQ(c.process.levels, 1);
    EXPECT_EQ(stage_levels(c), std::vector<int>{1});
}

TEST(Config, ParsesEveryBlock)
{
    const RunConfig c = attenuated();
    EXPECT_EQ(c.seed, 42u);
    EXPECT_EQ(c.process.levels, 3);
    EXPECT_EQ(c.schedule.t_star, (std::vector<double>{1.0, 3.0}));
    EXPECT_EQ(c.schedule.shape, RampShape::cosine);
    EXPECT_EQ(c.schedule.sigma_max, 40.0);
    EXPECT_TRUE(c.denoiser.staged);
    EXPECT_EQ(c.denoiser.dataset.kind, ShapeKind::blob);
    EXPECT_EQ(c.denoiser.dataset.count, 7);
    EXPECT_EQ(c.sampler.integrator, Integrator::euler);
    EXPECT_EQ(c.sampler.churn_noise, NoiseMode::pyramid);
    EXPECT_EQ(c.output.bits, 16);
    EXPECT_EQ(stage_levels(c), (std::vector<int>{3, 2, 1}));
    EXPECT_NO_THROW(validate_config(c));
}

TEST(Config, SerializationIsAFixedPoint)
{
    for (const RunConfig& c : {RunConfig{}, attenuated()}) {
        const std::string once = serialize_config(c);
        const std::string twice = serialize_config(parse_config(once));
        EXPECT_EQ(once, twice);
        EXPECT_EQ(config_hash(c), config_hash(parse_config(once)));
    }
}

TEST(Config, HashIsStableAndSensitive)
{
    // FNV-1a reference values.
    EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ull);
    EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cull);

    const RunConfig a = attenuated();
    RunConfig b = a;
    EXPECT_EQ(config_hash(a), config_hash(b));
    EXPECT_EQ(config_hash(a).size(), 16u);
    b.seed += 1;
    EXPECT_NE(config_hash(a), config_hash(b));
    // Key order and whitespace in the source do not matter.
    EXPECT_EQ(config_hash(parse_config(R"({"seed": 1, "process": {"factor": 2, "levels": 1}})")),
              config_hash(parse_config(R"({"process":{"levels":1,"factor":2},"seed":1})")));
}

TEST(Config, UnknownKeysAreRejectedWithTheirPath)
{
    EXPECT_EQ(parse_error(R"({"sede": 1})"), "unknown key 'sede'");
    EXPECT_EQ(parse_error(R"({"sampler": {"step": [3]}})"), "unknown key 'sampler.step'");
    EXPECT_EQ(parse_error(R"({"denoiser": {"dataset": {"hieght": 8}}})"), "unknown key 'denoiser.dataset.hieght'");
    EXPECT_EQ(parse_error(R"({"denoiser": {"dataset": {"gmm": [{"weight": 1, "mu": 0}]}}})"),
              "unknown key 'denoiser.dataset.gmm[0].mu'");
}

TEST(Config, TypeErrorsNameTheKey)
{
    EXPECT_NE(parse_error(R"({"seed": "x"})").find("seed"), std::string::npos);
    EXPECT_NE(parse_error(R"({"seed": -1})").find("seed"), std::string::npos);
    EXPECT_NE(parse_error(R"({"process": {"levels": 2.5}})").find("process.levels"), std::string::npos);
    EXPECT_NE(parse_error(R"({"schedule": {"t_star": [1, "a"]}})").find("schedule.t_star[1]"), std::string::npos);
    EXPECT_NE(parse_error(R"({"schedule": {"shape": "square"}})").find("schedule.shape"), std::string::npos);
    EXPECT_NE(parse_error(R"({"sampler": {"integrator": "rk4"}})").find("sampler.integrator"), std::string::npos);
    EXPECT_NE(parse_error(R"({"output": {"snapshots": 1}})").find("output.snapshots"), std::string::npos);
    EXPECT_NE(parse_error(R"({"process": 3})").find("process"), std::string::npos);
    EXPECT_NE(parse_error("{not json").find("JSON"), std::string::npos);
}

TEST(Config, ValidationNamesTheOffendingKey)
{
    const auto has = [](const std::string& msg, const std::string& key) {
        return msg.find(key) != std::string::npos;
    };
    EXPECT_TRUE(has(validation_error(R"({"process": {"levels": 2}})"), "schedule.t_star"));
    EXPECT_TRUE(has(validation_error(R"({"process": {"factor": 1}})"), "process.factor"));
    EXPECT_TRUE(has(validation_error(R"({"schedule": {"sigma_min": 0}})"), "schedule.sigma_min"));
    EXPECT_TRUE(has(validation_error(R"({"schedule": {"sigma_max": 0.001}})"), "schedule.sigma_max"));
    EXPECT_TRUE(has(validation_error(R"({"process": {"levels": 2}, "schedule": {"t_star": [1], "ramp_start": [2]}})"),
                    "schedule.ramp_start"));
    EXPECT_TRUE(has(validation_error(R"({"process": {"levels": 3}, "schedule": {"t_star": [3, 1]}})"),
                    "schedule.t_star"));
    EXPECT_TRUE(has(validation_error(R"({"denoiser": {"type": "unet"}})"), "denoiser.type"));
    EXPECT_TRUE(has(validation_error(R"({"denoiser": {"type": "gmm"}})"), "denoiser.type"));
    EXPECT_TRUE(has(validation_error(R"({"process": {"levels": 2}, "schedule": {"t_star": [1]},
                                        "denoiser": {"type": "linear"}})"),
                    "denoiser.type"));
    EXPECT_TRUE(has(validation_error(R"({"denoiser": {"dataset": {"height": 30}},
                                        "process": {"levels": 3}, "schedule": {"t_star": [1, 2]}})"),
                    "denoiser.dataset.height"));
    EXPECT_TRUE(has(validation_error(R"({"denoiser": {"dataset": {"source": "image-directory"}}})"),
                    "denoiser.dataset.directory"));
    EXPECT_TRUE(has(validation_error(R"({"sampler": {"levels": [2]}})"), "sampler.levels[0]"));
    EXPECT_TRUE(has(validation_error(R"({"sampler": {"steps": [0]}})"), "sampler.steps[0]"));
    EXPECT_TRUE(has(validation_error(R"({"sampler": {"steps": [4, 4]}})"), "sampler.steps"));
    EXPECT_TRUE(has(validation_error(R"({"sampler": {"chains": 0}})"), "sampler.chains"));
    EXPECT_TRUE(has(validation_error(R"({"sampler": {"switch_times": [1]}})"), "sampler.switch_times"));
    EXPECT_TRUE(has(validation_error(R"({"forward": {"t": [-1]}})"), "forward.t[0]"));
    EXPECT_TRUE(has(validation_error(R"({"output": {"format": "png"}})"), "output.format"));
    EXPECT_TRUE(has(validation_error(R"({"output": {"bits": 12}})"), "output.bits"));
}

TEST(Config, BuildProcessMatchesTheSchedule)
{
    const LaplacianProcess p = build_process(attenuated());
    EXPECT_EQ(p.levels, 3);
    EXPECT_EQ(p.profile.extinction_time(1), 1.0);
    EXPECT_EQ(p.profile.extinction_time(2), 3.0);
    EXPECT_EQ(p.profile.ramp_start(2), 1.0);
    EXPECT_EQ(p.profile.shape(), RampShape::cosine);
    EXPECT_FALSE(build_process(RunConfig{}).profile.attenuates());
}

TEST(Config, LoadReportsMissingFilesAsIoErrors)
{
    EXPECT_THROW(load_config("/nonexistent/ldm.json"), IoError);
}

TEST(Config, HashIgnoresTheOutputDirectory)
{
    RunConfig a = attenuated();
    RunConfig b = a;
    b.output.directory = "elsewhere";
    EXPECT_EQ(config_hash(a), config_hash(b));
    b.output.bits = 8;
    EXPECT_NE(config_hash(a), config_hash(b));
}
