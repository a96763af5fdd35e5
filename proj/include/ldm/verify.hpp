#ifndef LDM_VERIFY_HPP
#define LDM_VERIFY_HPP

#include "ldm/dataset.hpp"
#include "ldm/denoiser.hpp"
#include "ldm/field.hpp"
#include "ldm/grid.hpp"
#include "ldm/linear.hpp"
#include "ldm/process.hpp"
#include "ldm/sampler.hpp"
#include "ldm/schedule.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace ldm {

/// A check passes when lo <= measured <= hi.
struct CheckResult {
    std::string name;
    double measured = 0.0;
    double lo = -kInfinity;
    double hi = 0.0;
    bool pass = false;
    double seconds = 0.0;
    std::string detail;
};

struct CheckContext {
    std::uint64_t seed = 0;
    int threads = 1;
};

struct Check {
    std::string name;
    std::string description;
    double lo;
    double hi;
    std::function<double(const CheckContext&, std::string& detail)> run;
};

namespace verify {

inline double rel_error(const Field& a, const Field& b) { return relative_max_error(a, b); }

/// Mean and standard error of a sample.
inline std::pair<double, double> mean_se(const std::vector<double>& v)
{
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    s /= static_cast<double>(v.size() - 1);
    return {m, std::sqrt(s / static_cast<double>(v.size()))};
}

/// (a - b) / se, with 0/0 read as 0.
inline double z_score(double diff, double se)
{
    if (se > 0.0) return diff / se;
    return diff == 0.0 ? 0.0 : kInfinity;
}

inline double pyramid_roundtrip(const CheckContext& ctx, std::string& detail)
{
    RngStream rng = RngStream::derive(ctx.seed, 0, 1);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const int levels = 1 + static_cast<int>(rng.index(3));
        const int factor = rng.uniform() < 0.5 ? 2 : 4;
        const int unit = static_cast<int>(detail::int_pow(factor, levels - 1));
        const int lo = std::max(1, (4 + unit - 1) / unit);
        const int hi = 64 / unit;
        const int h = unit * (lo + static_cast<int>(rng.index(static_cast<std::size_t>(hi - lo + 1))));
        const int w = unit * (lo + static_cast<int>(rng.index(static_cast<std::size_t>(hi - lo + 1))));
        const Field x = standard_normal({1 + static_cast<int>(rng.index(3)), h, w}, rng);
        worst = std::max(worst, rel_error(laplacian_reconstruct(laplacian_decompose(x, levels, factor)), x));
    }
    detail = "200 fields, K in {1,2,3}, f in {2,4}";
    return worst;
}

inline double haar(const CheckContext& ctx, std::string& detail)
{
    RngStream rng = RngStream::derive(ctx.seed, 0, 2);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const int h = 4 * (1 + static_cast<int>(rng.index(16)));
        const int w = 4 * (1 + static_cast<int>(rng.index(16)));
        const Field x = standard_normal({3, h, w}, rng);
        const Field y = haar_forward_2level(x);
        if (y.shape() != Shape{48, h / 4, w / 4}) {
            detail = "shape " + to_string(y.shape()) + " for input " + to_string(x.shape());
            return kInfinity;
        }
        worst = std::max(worst, rel_error(haar_inverse_2level(y), x));
        worst = std::max(worst, std::abs(y.squared_norm() - x.squared_norm()) / x.squared_norm());
    }
    detail = "(3,H,W) -> (48,H/4,W/4); max of round-trip and squared-norm error";
    return worst;
}

inline double pooled_noise(const CheckContext& ctx, std::string& detail)
{
    RngStream rng = RngStream::derive(ctx.seed, 0, 3);
    const Field pooled = project_noise_down(standard_normal({1, 2000, 2000}, rng), 2);
    const double std = std::sqrt(pooled.squared_norm() / static_cast<double>(pooled.size()));
    detail = "std of 2*down(eps) over 1e6 pooled pixels = " + std::to_string(std);
    return std::abs(std - 1.0);
}

inline double switch_identity(const CheckContext& ctx, std::string& detail)
{
    RngStream rng = RngStream::derive(ctx.seed, 0, 4);
    const auto proc = make_process(3, 2, {1.0, 2.0});
    double worst = 0.0;
    for (int ratio : {2, 4}) {
        for (int trial = 0; trial < 100; ++trial) {
            const int h = 1 + static_cast<int>(rng.index(4));
            const int w = 1 + static_cast<int>(rng.index(4));
            const Field xr = standard_normal({1 + static_cast<int>(rng.index(3)), h, w}, rng);
            const Field eps_high = standard_normal({xr.channels(), h * ratio, w * ratio}, rng);
            const double sigma = 0.01 + 10.0 * rng.uniform();
            Field noisy = xr;
            noisy.axpy(sigma, project_noise_down(eps_high, ratio));
            const DiffusionState out = switch_up_with_noise({noisy, sigma, 3, 0}, ratio, proc, eps_high);
            Field expected = upsample(xr, ratio);
            expected.axpy(sigma * ratio, eps_high);
            worst = std::max(worst, rel_error(out.field, expected));
        }
    }
    detail = "100 instances at ratios 2 and 4";
    return worst;
}

inline double edm_reduction(const CheckContext& ctx, std::string& detail)
{
    RngStream rng = RngStream::derive(ctx.seed, 0, 5);
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        const Shape shape{1 + static_cast<int>(rng.index(3)), 2 + static_cast<int>(rng.index(6)),
                          2 + static_cast<int>(rng.index(6))};
        std::vector<Field> pts;
        const int n = 2 + static_cast<int>(rng.index(6));
        for (int i = 0; i < n; ++i) pts.push_back(standard_normal(shape, rng));
        auto oracle = std::make_shared<DatasetOracle>(pts, standard_process());
        const int steps = 4 + static_cast<int>(rng.index(40));
        const SigmaSchedule sched{0.002, 1.0 + 99.0 * rng.uniform(), 1.0 + 9.0 * rng.uniform()};
        for (Integrator integ : {Integrator::euler, Integrator::heun}) {
            SamplerConfig cfg;
            cfg.shape = shape;
            cfg.integrator = integ;
            cfg.rho = sched.rho;
            cfg.sigma_min = sched.sigma_min;
            cfg.stages = {{1, sched.sigma_max, 0.0, steps, oracle}};
            const std::uint64_t seed = ctx.seed * 1000 + static_cast<std::uint64_t>(trial);
            const Field a = sample_cascade(cfg, seed, 0).final_sample;
            RngStream ref = RngStream::derive(seed, 0, 1);
            const Field b = reference_edm_sample(*oracle, time_grid(sched, steps), integ, shape, ref);
            for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, std::abs(a[k] - b[k]));
        }
    }
    detail = "10 configs x {euler, heun}; max |cascade - reference|";
    return worst;
}

inline double score_fd(const CheckContext& ctx, std::string& detail)
{
    RngStream rng = RngStream::derive(ctx.seed, 0, 6);
    const std::vector<LaplacianProcess> processes{standard_process(), make_process(2, 2, {0.8}, {0.2}),
                                                  make_process(2, 2, {1.2}, {0.0}, RampShape::cosine)};
    double worst = 0.0;
    for (int probe = 0; probe < 50; ++probe) {
        const LaplacianProcess& proc = processes[static_cast<std::size_t>(probe) % processes.size()];
        const Shape shape = proc.levels == 1 ? Shape{1, 1 + static_cast<int>(rng.index(4)), 4} : Shape{1, 4, 4};
        std::vector<Field> pts;
        const int n = 1 + static_cast<int>(rng.index(8));
        for (int i = 0; i < n; ++i) pts.push_back(standard_normal(shape, rng));
        const DatasetOracle oracle(pts, proc);
        const double sigma = 0.3 + 1.7 * rng.uniform();
        Field x = pts[rng.index(pts.size())];
        x.axpy(sigma, standard_normal(shape, rng));
        const DiffusionState s{x, sigma, 1, 0};
        const Field score = score_from_denoiser(oracle.denoise(s), s, proc);
        const double h = 1e-4 * sigma;
        Field fd(shape);
        for (std::size_t k = 0; k < x.size(); ++k) {
            Field p = x;
            Field m = x;
            p[k] += h;
            m[k] -= h;
            fd[k] = (oracle.log_density({p, sigma, 1, 0}) - oracle.log_density({m, sigma, 1, 0})) / (2.0 * h);
        }
        worst = std::max(worst, (score - fd).norm() / std::max(fd.norm(), 1e-300));
    }
    detail = "50 probes, <= 8 atoms, dim <= 16; relative L2 error vs central differences";
    return worst;
}

inline double mmse_optimality(const CheckContext& ctx, std::string& detail)
{
    RngStream rng = RngStream::derive(ctx.seed, 0, 7);
    double worst = -kInfinity;
    const int n = 2000;
    for (int set = 0; set < 20; ++set) {
        const Shape shape{1, 1, 2 + static_cast<int>(rng.index(15))};
        std::vector<Field> data;
        const int count = 2 + static_cast<int>(rng.index(15));
        for (int i = 0; i < count; ++i) data.push_back(standard_normal(shape, rng));
        const DatasetOracle mmse(data, standard_process());
        const ConstantDenoiser mean = ConstantDenoiser::dataset_mean(data);
        const IdentityDenoiser identity;
        for (double sigma : {0.1, 0.5, 1.0, 5.0}) {
            LinearTrainConfig lc;
            lc.pairs = 20000;
            lc.sigma_dist = {std::log(sigma), 0.0};
            const LinearDenoiser linear = train_linear(data, lc, rng);
            const std::uint64_t draw_seed = rng.engine()();
            auto losses = [&](const Denoiser& d) {
                RngStream r(draw_seed);
                return eval_loss_samples(d, data, sigma, n, r);
            };
            const auto base = losses(mmse);
            for (const Denoiser* other : {static_cast<const Denoiser*>(&linear), static_cast<const Denoiser*>(&mean),
                                          static_cast<const Denoiser*>(&identity)}) {
                const auto l = losses(*other);
                std::vector<double> diff(base.size());
                for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = base[i] - l[i];
                const auto [m, se] = mean_se(diff);
                worst = std::max(worst, z_score(m, se));
            }
        }
    }
    detail = "max over 20 datasets x 4 sigmas x {linear, mean, identity} of (L_mmse - L_other) / SE";
    return worst;
}

inline double gaussian_endpoint_error(Integrator integ, int steps, int chains, std::uint64_t seed)
{
    const Shape shape{1, 1, 4};
    auto g = std::make_shared<GmmOracle>(std::vector<GmmComponent>{{1.0, Field(shape), 1.0}});
    SamplerConfig cfg;
    cfg.shape = shape;
    cfg.integrator = integ;
    cfg.stages = {{1, 80.0, 0.0, steps, g}};
    double err = 0.0;
    for (int c = 0; c < chains; ++c) {
        const auto chain = static_cast<std::uint64_t>(c);
        RngStream start = RngStream::derive(seed, chain, 1);
        const Field x = sample_cascade(cfg, seed, chain).final_sample;
        for (std::size_t k = 0; k < x.size(); ++k) {
            // dx/dsigma = x sigma / (1 + sigma^2)  =>  x(0) = x(80) / sqrt(1 + 80^2)
            const double exact = 80.0 * start.normal() / std::sqrt(1.0 + 80.0 * 80.0);
            err += std::abs(x[k] - exact);
        }
    }
    return err / (chains * static_cast<double>(shape.size()));
}

inline double convergence(Integrator integ, const CheckContext& ctx, std::string& detail)
{
    const double coarse = gaussian_endpoint_error(integ, 32, 50, ctx.seed);
    const double fine = gaussian_endpoint_error(integ, 64, 50, ctx.seed);
    detail = "N(0, I) data, mean endpoint error " + std::to_string(coarse) + " at 32 steps, " + std::to_string(fine) +
             " at 64";
    return coarse / fine;
}

struct ModeRun {
    double plus_fraction = 0.0;
    double near_fraction = 0.0;
};

inline ModeRun mode_run(const CheckContext& ctx)
{
    auto o = std::make_shared<DatasetOracle>(
        std::vector<Field>{Field({1, 1, 1}, {-1.0}), Field({1, 1, 1}, {1.0})}, standard_process());
    SamplerConfig cfg;
    cfg.shape = {1, 1, 1};
    cfg.stages = {{1, 80.0, 0.0, 36, o}};
    const int chains = 10000;
    const CascadeRun run = sample_chains(cfg, ctx.seed + 9, chains, ctx.threads);
    ModeRun m;
    for (const Field& s : run.samples) {
        m.plus_fraction += s[0] > 0.0;
        m.near_fraction += std::abs(std::abs(s[0]) - 1.0) <= 1e-3;
    }
    m.plus_fraction /= chains;
    m.near_fraction /= chains;
    return m;
}

inline double mode_split(const CheckContext& ctx, std::string& detail)
{
    const ModeRun m = mode_run(ctx);
    detail = "fraction at +1 = " + std::to_string(m.plus_fraction) + " over 1e4 chains, 36 Heun steps";
    return std::abs(m.plus_fraction - 0.5);
}

inline double mode_recovery(const CheckContext& ctx, std::string& detail)
{
    const ModeRun m = mode_run(ctx);
    detail = "fraction of chains within 1e-3 of an atom";
    return m.near_fraction;
}

inline double cascade_consistency(const CheckContext& ctx, std::string& detail)
{
    const Shape full{1, 32, 32};
    const auto proc = make_process(3, 2, {1.0, 3.0}, {0.2, 1.0});
    RngStream rng = RngStream::derive(ctx.seed, 0, 10);
    std::vector<Field> data;
    for (auto kind : {ShapeKind::checkerboard, ShapeKind::blob, ShapeKind::gradient, ShapeKind::blob}) {
        data.push_back(make_shape(kind, full, rng));
    }
    auto oracle = std::make_shared<DatasetOracle>(data, proc);
    const int chains = 2000;

    SamplerConfig cascade;
    cascade.process = proc;
    cascade.shape = full;
    cascade.stages = plan_stages(proc, {3, 2, 1}, 80.0, {32, 24, 24}, oracle);
    SamplerConfig coarse = cascade;
    coarse.stages = plan_stages(proc, {3}, 80.0, {32}, oracle);

    const CascadeRun a = sample_chains(cascade, ctx.seed + 101, chains, ctx.threads);
    const CascadeRun b = sample_chains(coarse, ctx.seed + 202, chains, ctx.threads);

    const Shape low = proc.level_shape(full, 3);
    std::vector<std::vector<double>> va(low.size());
    std::vector<std::vector<double>> vb(low.size());
    for (int c = 0; c < chains; ++c) {
        const Field da = downsample(a.samples[static_cast<std::size_t>(c)], 4);
        const Field& db = b.samples[static_cast<std::size_t>(c)];
        for (std::size_t k = 0; k < low.size(); ++k) {
            va[k].push_back(da[k]);
            vb[k].push_back(db[k]);
        }
    }
    // Per pixel: z of the mean difference, and z of the variance difference
    // with SE^2 = (m4 - s^4) / n.
    auto moments = [](const std::vector<double>& v) {
        double m = 0.0;
        for (double x : v) m += x;
        m /= static_cast<double>(v.size());
        double m2 = 0.0;
        double m4 = 0.0;
        for (double x : v) {
            const double d = (x - m) * (x - m);
            m2 += d;
            m4 += d * d;
        }
        m2 /= static_cast<double>(v.size());
        m4 /= static_cast<double>(v.size());
        return std::array<double, 3>{m, m2, m4};
    };
    double worst_mean = 0.0;
    double worst_var = 0.0;
    const double n = chains;
    for (std::size_t k = 0; k < low.size(); ++k) {
        const auto ma = moments(va[k]);
        const auto mb = moments(vb[k]);
        worst_mean = std::max(worst_mean, std::abs(z_score(ma[0] - mb[0], std::sqrt((ma[1] + mb[1]) / n))));
        const double se_var = std::sqrt(std::max(0.0, ma[2] - ma[1] * ma[1]) / n +
                                        std::max(0.0, mb[2] - mb[1] * mb[1]) / n);
        worst_var = std::max(worst_var, std::abs(z_score(ma[1] - mb[1], se_var)));
    }
    detail = "8->16->32 vs 8-only, 2000 chains each; max |z| mean " + std::to_string(worst_mean) + ", variance " +
             std::to_string(worst_var);
    return std::max(worst_mean, worst_var);
}

inline double wiener(const CheckContext& ctx, std::string& detail)
{
    RngStream rng = RngStream::derive(ctx.seed, 0, 11);
    std::vector<Field> data;
    for (int i = 0; i < 100000; ++i) {
        Field x = standard_normal({1, 1, 4}, rng);
        x *= 0.5;
        data.push_back(std::move(x));
    }
    double worst = 0.0;
    for (double sigma : {0.25, 0.5, 1.0}) {
        LinearTrainConfig lc;
        lc.pairs = 100000;
        lc.sigma_dist = {std::log(sigma), 0.0};
        const LinearDenoiser d = train_linear(data, lc, rng);
        const double w = 0.25 / (0.25 + sigma * sigma);
        const Eigen::MatrixXd m = d.effective_matrix(sigma);
        for (Eigen::Index i = 0; i < m.rows(); ++i) worst = std::max(worst, std::abs(m(i, i) - w) / w);
    }
    detail = "N(0, 0.25 I) data, 1e5 pairs per sigma in {0.25, 0.5, 1}; max relative coefficient error";
    return worst;
}

} // namespace verify

/// The full suite, in criterion order.
inline std::vector<Check> verification_checks()
{
    using namespace verify;
    return {
        {"pyramid-roundtrip", "reconstruct(decompose(x)) relative error", -kInfinity, 1e-12, pyramid_roundtrip},
        {"haar", "2-level Haar shape, round trip and norm", -kInfinity, 1e-12, haar},
        {"pooled-noise", "|std(2 down(eps)) - 1|", -kInfinity, 0.01, pooled_noise},
        {"switch-identity", "switch_up vs up(x) + sigma ratio eps", -kInfinity, 1e-12, switch_identity},
        {"edm-reduction", "single-stage cascade vs reference sampler", -kInfinity, 0.0, edm_reduction},
        {"score-fd", "Tweedie score vs finite-difference log density", -kInfinity, 1e-5, score_fd},
        {"mmse-optimality", "max z of L_mmse - L_other", -kInfinity, 2.0, mmse_optimality},
        {"convergence-euler", "error ratio 32 -> 64 Euler steps", 1.7, 2.4,
         [](const CheckContext& c, std::string& d) { return convergence(Integrator::euler, c, d); }},
        {"convergence-heun", "error ratio 32 -> 64 Heun steps", 3.0, 5.0,
         [](const CheckContext& c, std::string& d) { return convergence(Integrator::heun, c, d); }},
        {"mode-split", "|mass at +1 - 0.5|", -kInfinity, 0.015, mode_split},
        {"mode-recovery", "fraction of chains within 1e-3 of an atom", 0.99, 1.0, mode_recovery},
        {"cascade-consistency", "max per-pixel |z| of mean and variance", -kInfinity, 3.0, cascade_consistency},
        {"wiener", "relative error of the linear shrinkage coefficient", -kInfinity, 0.02, wiener},
    };
}

struct Bounds {
    double lo;
    double hi;
};

/// Runs the checks named in `selector` (all when empty). `overrides` replaces
/// a check's bounds. Unknown names are a ConfigError.
inline std::vector<CheckResult> run_checks(const std::vector<std::string>& selector,
                                           const std::map<std::string, Bounds>& overrides, const CheckContext& ctx,
                                           const std::function<void(const CheckResult&)>& on_result = {})
{
    const auto checks = verification_checks();
    auto known = [&](const std::string& n) {
        return std::any_of(checks.begin(), checks.end(), [&](const Check& c) { return c.name == n; });
    };
    for (const auto& n : selector) {
        if (!known(n)) throw ConfigError("unknown check '" + n + "'");
    }
    for (const auto& [n, b] : overrides) {
        if (!known(n)) throw ConfigError("tolerance override for unknown check '" + n + "'");
    }
    std::vector<CheckResult> out;
    for (const Check& c : checks) {
        if (!selector.empty() && std::find(selector.begin(), selector.end(), c.name) == selector.end()) continue;
        CheckResult r{c.name, 0.0, c.lo, c.hi, false, 0.0, ""};
        if (const auto it = overrides.find(c.name); it != overrides.end()) {
            r.lo = it->second.lo;
            r.hi = it->second.hi;
        }
        const auto start = std::chrono::steady_clock::now();
        try {
            r.measured = c.run(ctx, r.detail);
        } catch (const std::exception& e) {
            r.measured = std::numeric_limits<double>::quiet_NaN();
            r.detail = std::string("error: ") + e.what();
        }
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        r.pass = r.measured >= r.lo && r.measured <= r.hi;
        if (on_result) on_result(r);
        out.push_back(std::move(r));
    }
    return out;
}

} // namespace ldm

#endif // LDM_VERIFY_HPP
