#ifndef LDM_SAMPLER_HPP
#define LDM_SAMPLER_HPP

#include "ldm/denoiser.hpp"
#include "ldm/field.hpp"
#include "ldm/grid.hpp"
#include "ldm/process.hpp"
#include "ldm/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace ldm {

enum class Integrator { euler, heun };

inline std::string to_string(Integrator i) { return i == Integrator::euler ? "euler" : "heun"; }

inline Integrator integrator_from_string(const std::string& s)
{
    if (s == "euler") return Integrator::euler;
    if (s == "heun") return Integrator::heun;
    throw ConfigError("unknown integrator '" + s + "' (expected euler or heun)");
}

// ---------------------------------------------------------------------------
// Probability-flow drift
// ---------------------------------------------------------------------------

/// dx/dsigma per band from the score, as derived for the attenuated subspaces:
///
///   drift_i = (alpha_i' / alpha_i) x_i - sigma (alpha_i - alpha_i' sigma) / alpha_i * score_i
///
/// Derivatives are with respect to the state's sigma. Requires alpha_i > 0 on
/// every represented band.
inline Field ode_drift(const DiffusionState& state, const Field& score, std::span<const double> alphas,
                       std::span<const double> alpha_derivs, int factor = 2)
{
    detail::require_positive_sigma(state.sigma, "ode_drift");
    score.require_same_shape(state.field, "ode_drift");
    if (alphas.size() != alpha_derivs.size() || alphas.empty()) {
        throw DomainError("ode_drift: need one alpha and one derivative per represented band");
    }
    for (std::size_t i = 0; i < alphas.size(); ++i) {
        if (!(alphas[i] > 0.0)) {
            throw ConfigError("ode_drift: band " + std::to_string(i + 1) +
                              " is extinct (alpha = 0) but still represented; switch to a coarser level");
        }
    }
    const int nb = static_cast<int>(alphas.size());
    const double sigma = state.sigma;
    Pyramid xb = laplacian_decompose(state.field, nb, factor);
    Pyramid sb = laplacian_decompose(score, nb, factor);
    for (int i = 0; i < nb; ++i) {
        const double a = alphas[static_cast<std::size_t>(i)];
        const double da = alpha_derivs[static_cast<std::size_t>(i)];
        Field& xi = xb.bands[static_cast<std::size_t>(i)];
        xi *= da / a;
        xi.axpy(-sigma * (a - da * sigma) / a, sb.bands[static_cast<std::size_t>(i)]);
    }
    return laplacian_reconstruct(xb);
}

/// The same drift written in terms of the x0-prediction D. Substituting the
/// Tweedie score (alpha_i D_i - x_i) / sigma^2 gives
///
///   drift_i = alpha_i' D_i + (x_i - alpha_i D_i) / sigma,
///
/// which stays finite when a band has just reached alpha = 0. With alpha = 1
/// and alpha' = 0 on every band this is exactly (x - D) / sigma.
inline Field ode_drift_from_denoised(const DiffusionState& state, const Field& denoised,
                                     std::span<const double> alphas, std::span<const double> alpha_derivs,
                                     int factor = 2)
{
    detail::require_positive_sigma(state.sigma, "ode_drift");
    denoised.require_same_shape(state.field, "ode_drift");
    const Field mu = weight_bands(denoised, alphas, factor);
    const double sigma = state.sigma;
    Field drift(state.field.shape());
    const auto x = state.field.values();
    const auto m = mu.values();
    auto d = drift.values();
    for (std::size_t k = 0; k < d.size(); ++k) d[k] = (x[k] - m[k]) / sigma;
    if (std::any_of(alpha_derivs.begin(), alpha_derivs.end(), [](double v) { return v != 0.0; })) {
        drift += weight_bands(denoised, alpha_derivs, factor);
    }
    return drift;
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// One resolution stage of a cascade; sigmas in the stage level's units.
struct Stage {
    int level = 1;
    double sigma_entry = 80.0;
    double sigma_exit = 0.0;
    int steps = 32;
    std::shared_ptr<const Denoiser> denoiser;
};

struct SamplerConfig {
    LaplacianProcess process;
    Shape shape;                ///< full (level-1) resolution
    std::vector<Stage> stages;  ///< coarse to fine
    Integrator integrator = Integrator::heun;
    double rho = 7.0;
    double sigma_min = 0.002;
    double churn = 0.0;         ///< EDM S_churn; 0 = deterministic ODE
    NoiseMode churn_noise = NoiseMode::isotropic;

    [[nodiscard]] int ratio_between(std::size_t j) const
    {
        return static_cast<int>(detail::int_pow(process.factor, stages[j].level - stages[j + 1].level));
    }

    void validate() const
    {
        process.validate();
        require_decomposable(shape, process.levels, process.factor);
        if (stages.empty()) throw ConfigError("sampler.stages must not be empty");
        if (!(rho > 0.0)) throw ConfigError("sampler.rho must be positive");
        if (!(sigma_min > 0.0)) throw ConfigError("schedule.sigma_min must be positive");
        if (churn < 0.0) throw ConfigError("sampler.churn must be non-negative");
        for (std::size_t j = 0; j < stages.size(); ++j) {
            const Stage& s = stages[j];
            const std::string key = "sampler.stages[" + std::to_string(j) + "]";
            if (s.level < 1 || s.level > process.levels) throw ConfigError(key + ".level out of range");
            if (s.steps < 1) throw ConfigError(key + ".steps must be >= 1");
            if (!s.denoiser) throw ConfigError(key + " has no denoiser");
            if (!(s.sigma_entry > s.sigma_exit) || s.sigma_exit < 0.0) {
                throw ConfigError(key + ": need sigma_entry > sigma_exit >= 0");
            }
            if (j + 1 == stages.size()) {
                if (s.sigma_exit != 0.0) throw ConfigError(key + ": the final stage must end at sigma = 0");
                continue;
            }
            const Stage& next = stages[j + 1];
            if (next.level >= s.level) {
                throw ConfigError("sampler.stages[" + std::to_string(j + 1) + "].level must be finer than the previous stage");
            }
            if (!(s.sigma_exit > 0.0)) throw ConfigError(key + ": only the final stage may end at sigma = 0");
            const double expected = s.sigma_exit * ratio_between(j);
            if (std::abs(expected - next.sigma_entry) > 1e-12 * std::max(1.0, expected)) {
                throw ConfigError("sampler.stages[" + std::to_string(j + 1) + "].sigma_entry must equal the previous "
                                  "sigma_exit times the resolution ratio (" + std::to_string(expected) + ")");
            }
            const double t_switch = process.time_at(s.sigma_exit, s.level);
            for (int band = next.level; band < s.level; ++band) {
                if (process.profile.alpha(band, t_switch) != 0.0) {
                    throw ConfigError(key + ": band " + std::to_string(band) +
                                      " still carries signal at the switch time t = " + std::to_string(t_switch));
                }
            }
        }
        // Every grid point must be routable before any compute starts.
        for (std::size_t j = 0; j < stages.size(); ++j) {
            const Stage& s = stages[j];
            const auto* router = dynamic_cast<const ExpertRouter*>(s.denoiser.get());
            if (!router) continue;
            for (double sigma : stage_grid(s.sigma_entry, s.sigma_exit, s.steps, rho, sigma_min)) {
                if (sigma > 0.0) (void)router->route(s.level, sigma);
            }
        }
    }
};

/// Stage plan for `levels` (coarse to fine). The first stage starts at
/// `sigma_max` in its own units; a stage at level l hands over at
/// t = t_star_{l-1}, the extinction time of the finest band it drops,
/// unless `switch_times` (full-resolution t, one per transition) overrides it.
inline std::vector<Stage> plan_stages(const LaplacianProcess& process, const std::vector<int>& levels,
                                      double sigma_max, const std::vector<int>& steps,
                                      std::shared_ptr<const Denoiser> denoiser,
                                      const std::vector<double>& switch_times = {})
{
    if (levels.empty()) throw ConfigError("sampler.stages must not be empty");
    if (steps.size() != levels.size() && steps.size() != 1) {
        throw ConfigError("sampler.steps must have one entry, or one per stage");
    }
    if (!switch_times.empty() && switch_times.size() + 1 != levels.size()) {
        throw ConfigError("sampler.switch_times must have one entry per stage transition");
    }
    std::vector<Stage> plan;
    double entry = sigma_max;
    for (std::size_t j = 0; j < levels.size(); ++j) {
        process.check_level(levels[j]);
        Stage s;
        s.level = levels[j];
        s.sigma_entry = entry;
        s.steps = steps.size() == 1 ? steps[0] : steps[j];
        s.denoiser = denoiser;
        if (j + 1 < levels.size()) {
            if (levels[j] <= 1) throw ConfigError("sampler.stages: cannot switch up from level 1");
            const double t = switch_times.empty() ? process.profile.extinction_time(levels[j] - 1) : switch_times[j];
            s.sigma_exit = process.sigma_at(t, s.level);
            entry = process.sigma_at(t, levels[j + 1]);
        } else {
            s.sigma_exit = 0.0;
        }
        plan.push_back(std::move(s));
    }
    return plan;
}

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

struct TrajectoryPoint {
    int stage = 0;
    int step = 0;
    double sigma = 0.0;
    int level = 1;
    double norm = 0.0;
    Field snapshot; ///< empty unless snapshots were requested
};

struct Trajectory {
    std::vector<TrajectoryPoint> points;
    std::vector<SwitchRecord> switches;
    Field final_sample;
    int final_level = 1;
};

struct RecordOptions {
    bool points = false;
    bool snapshots = false;
};

namespace detail {

inline Field stage_drift(const DiffusionState& s, const Denoiser& denoiser, const LaplacianProcess& process)
{
    const double t = process.time_at(s.sigma, s.level);
    const Field d = denoiser.denoise(s);
    return ode_drift_from_denoised(s, d, process.band_alphas(s.level, t), process.band_alpha_derivatives(s.level, t),
                                   process.factor);
}

inline void record(Trajectory* traj, const RecordOptions& opt, int stage, int step, const DiffusionState& s)
{
    if (!traj || !opt.points) return;
    TrajectoryPoint p{stage, step, s.sigma, s.level, s.field.norm(), {}};
    if (opt.snapshots) p.snapshot = s.field;
    traj->points.push_back(std::move(p));
}

} // namespace detail

/// Integrates one stage from `state.sigma` along the stage grid. Euler:
/// x += h * drift. Heun adds a trapezoidal correction except on a step that
/// lands on sigma = 0.
inline DiffusionState integrate_stage(DiffusionState state, const Stage& stage, const SamplerConfig& cfg, RngStream& rng,
                                      Trajectory* traj = nullptr, const RecordOptions& opt = {}, int stage_index = 0)
{
    if (state.level != stage.level) throw ConfigError("integrate_stage: state level does not match the stage");
    const auto grid = stage_grid(stage.sigma_entry, stage.sigma_exit, stage.steps, cfg.rho, cfg.sigma_min);
    const Denoiser& denoiser = *stage.denoiser;
    const LaplacianProcess& process = cfg.process;
    const double gamma = cfg.churn > 0.0 ? std::min(cfg.churn / stage.steps, std::sqrt(2.0) - 1.0) : 0.0;

    state.sigma = grid[0];
    detail::record(traj, opt, stage_index, 0, state);
    for (int n = 0; n < stage.steps; ++n) {
        const double sigma_next = grid[static_cast<std::size_t>(n) + 1];
        if (gamma > 0.0) {
            const double raised = std::min(state.sigma * (1.0 + gamma), stage.sigma_entry);
            if (raised > state.sigma) {
                const int nb = process.levels - state.level + 1;
                const Field eps = draw_noise(state.field.shape(), nb, process.factor, cfg.churn_noise, rng);
                state.field.axpy(std::sqrt(raised * raised - state.sigma * state.sigma), eps);
                state.sigma = raised;
            }
        }
        const double h = sigma_next - state.sigma;
        const Field d = detail::stage_drift(state, denoiser, process);
        Field next = state.field;
        {
            auto xv = next.values();
            const auto dv = d.values();
            for (std::size_t k = 0; k < xv.size(); ++k) xv[k] = xv[k] + h * dv[k];
        }
        if (cfg.integrator == Integrator::heun && sigma_next > 0.0) {
            const DiffusionState predicted{next, sigma_next, state.level, state.stream};
            const Field d2 = detail::stage_drift(predicted, denoiser, process);
            const auto x0 = state.field.values();
            const auto dv = d.values();
            const auto d2v = d2.values();
            auto xv = next.values();
            for (std::size_t k = 0; k < xv.size(); ++k) xv[k] = x0[k] + h * (0.5 * dv[k] + 0.5 * d2v[k]);
        }
        state.field = std::move(next);
        state.sigma = sigma_next;
        detail::record(traj, opt, stage_index, n + 1, state);
    }
    return state;
}

/// One chain of the cascade: pure noise at the first stage's level, each
/// stage integrated in turn, resolution switches in between.
///
/// Randomness comes from one stream per (seed, chain, level); the initial
/// draw and any switch noise are the first values taken from the stream of
/// the level they produce.
inline Trajectory sample_cascade(const SamplerConfig& cfg, std::uint64_t seed, std::uint64_t chain,
                                 const RecordOptions& opt = {})
{
    Trajectory traj;
    const Stage& first = cfg.stages.front();
    RngStream rng = RngStream::derive(seed, chain, static_cast<std::uint64_t>(first.level));
    DiffusionState state;
    state.field = standard_normal(cfg.process.level_shape(cfg.shape, first.level), rng);
    state.field *= first.sigma_entry;
    state.sigma = first.sigma_entry;
    state.level = first.level;
    state.stream = chain;

    for (std::size_t j = 0; j < cfg.stages.size(); ++j) {
        const Stage& stage = cfg.stages[j];
        if (j > 0) {
            rng = RngStream::derive(seed, chain, static_cast<std::uint64_t>(stage.level));
            SwitchRecord rec;
            state = switch_up(state, cfg.ratio_between(j - 1), cfg.process, rng, &rec);
            traj.switches.push_back(rec);
        }
        state = integrate_stage(std::move(state), stage, cfg, rng, &traj, opt, static_cast<int>(j));
    }
    traj.final_sample = std::move(state.field);
    traj.final_level = state.level;
    return traj;
}

struct CascadeRun {
    std::vector<Field> samples;
    std::vector<Trajectory> trajectories; ///< first `record_chains` chains
};

/// Runs `chains` independent chains over `threads` workers. Output is a
/// function of (cfg, seed) only.
inline CascadeRun sample_chains(const SamplerConfig& cfg, std::uint64_t seed, int chains, int threads = 1,
                                int record_chains = 0, const RecordOptions& opt = {true, false})
{
    cfg.validate();
    if (chains < 1) throw ConfigError("sampler.chains must be >= 1");
    CascadeRun run;
    run.samples.resize(static_cast<std::size_t>(chains));
    run.trajectories.resize(static_cast<std::size_t>(std::clamp(record_chains, 0, chains)));
    threads = std::clamp(threads, 1, chains);

    auto work = [&](int first, std::exception_ptr& error) {
        try {
            for (int c = first; c < chains; c += threads) {
                const bool keep = c < record_chains;
                Trajectory t = sample_cascade(cfg, seed, static_cast<std::uint64_t>(c),
                                              keep ? opt : RecordOptions{});
                run.samples[static_cast<std::size_t>(c)] = t.final_sample;
                if (keep) run.trajectories[static_cast<std::size_t>(c)] = std::move(t);
            }
        } catch (...) {
            error = std::current_exception();
        }
    };
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
    if (threads == 1) {
        work(0, errors[0]);
    } else {
        std::vector<std::jthread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(work, t, std::ref(errors[static_cast<std::size_t>(t)]));
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return run;
}

// ---------------------------------------------------------------------------
// Reference sampler
// ---------------------------------------------------------------------------

/// Plain single-resolution EDM sampler: no pyramid, no attenuation, no
/// stages. x starts at grid[0] * eps and follows dx/dsigma = (x - D) / sigma.
inline Field reference_edm_sample(const Denoiser& denoiser, std::span<const double> grid, Integrator integrator,
                                  Shape shape, RngStream& rng, int level = 1)
{
    if (grid.size() < 2) throw ConfigError("reference sampler needs at least one step");
    Field x = standard_normal(shape, rng);
    x *= grid[0];
    const std::size_t dim = x.size();
    for (std::size_t n = 0; n + 1 < grid.size(); ++n) {
        const double s = grid[n];
        const double s_next = grid[n + 1];
        const double h = s_next - s;
        const Field den = denoiser.denoise({x, s, level, 0});
        std::vector<double> d(dim);
        for (std::size_t k = 0; k < dim; ++k) d[k] = (x[k] - den[k]) / s;
        Field x_next = x;
        for (std::size_t k = 0; k < dim; ++k) x_next[k] = x_next[k] + h * d[k];
        if (integrator == Integrator::heun && s_next != 0.0) {
            const Field den2 = denoiser.denoise({x_next, s_next, level, 0});
            for (std::size_t k = 0; k < dim; ++k) {
                const double d2 = (x_next[k] - den2[k]) / s_next;
                x_next[k] = x[k] + h * (0.5 * d[k] + 0.5 * d2);
            }
        }
        x = std::move(x_next);
    }
    return x;
}

} // namespace ldm

#endif // LDM_SAMPLER_HPP
