#ifndef LDM_SCHEDULE_HPP
#define LDM_SCHEDULE_HPP

#include "ldm/field.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

namespace ldm {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Noise-level range and grid warping. Time is identified with sigma
/// (variance-exploding convention), so sigma(t) = t.
struct SigmaSchedule {
    double sigma_min = 0.002;
    double sigma_max = 80.0;
    double rho = 7.0;

    void validate() const
    {
        if (!(sigma_min > 0.0)) throw ConfigError("schedule.sigma_min must be positive");
        if (!(sigma_max > sigma_min)) throw ConfigError("schedule.sigma_max must exceed schedule.sigma_min");
        if (!(rho > 0.0)) throw ConfigError("schedule.rho must be positive");
    }
};

/// N+1 descending noise levels from `sigma_high` warped by rho towards
/// `sigma_low`; index i < N sits at fraction i/N of the warped interval and
/// the last entry is `sigma_end`.
///
/// With sigma_end == 0 the grid never visits sigma_low itself: the final step
/// jumps straight to zero.
inline std::vector<double> warped_grid(double sigma_high, double sigma_low, double sigma_end, int steps,
                                       double rho)
{
    if (steps < 1) throw DomainError("sampling grid needs at least one step");
    const double a = std::pow(sigma_high, 1.0 / rho);
    const double b = std::pow(sigma_low, 1.0 / rho);
    std::vector<double> grid(static_cast<std::size_t>(steps) + 1);
    grid[0] = sigma_high;
    for (int i = 1; i < steps; ++i) {
        const double frac = static_cast<double>(i) / steps;
        grid[static_cast<std::size_t>(i)] = std::pow(a + frac * (b - a), rho);
    }
    grid[static_cast<std::size_t>(steps)] = sigma_end;
    return grid;
}

inline std::vector<double> time_grid(const SigmaSchedule& s, int steps)
{
    s.validate();
    return warped_grid(s.sigma_max, s.sigma_min, 0.0, steps, s.rho);
}

/// Grid for one cascade stage. Stages that end above zero land exactly on
/// `sigma_exit`; the final stage uses `sigma_min` as the warp target and ends at 0.
inline std::vector<double> stage_grid(double sigma_entry, double sigma_exit, int steps, double rho,
                                      double sigma_min)
{
    if (!(sigma_entry > sigma_exit) || sigma_exit < 0.0) {
        throw DomainError("stage grid needs sigma_entry > sigma_exit >= 0");
    }
    if (sigma_exit > 0.0) return warped_grid(sigma_entry, sigma_exit, sigma_exit, steps, rho);
    return warped_grid(sigma_entry, std::min(sigma_min, sigma_entry), 0.0, steps, rho);
}

// ---------------------------------------------------------------------------
// Attenuation
// ---------------------------------------------------------------------------

enum class RampShape { linear, cosine, step };

inline std::string to_string(RampShape s)
{
    switch (s) {
    case RampShape::linear: return "linear";
    case RampShape::cosine: return "cosine";
    case RampShape::step: return "step";
    }
    return "linear";
}

inline RampShape ramp_shape_from_string(const std::string& s)
{
    if (s == "linear") return RampShape::linear;
    if (s == "cosine") return RampShape::cosine;
    if (s == "step") return RampShape::step;
    throw ConfigError("unknown attenuation shape '" + s + "' (expected linear, cosine or step)");
}

/// Per-band attenuation alpha_i(t). Bands are 1-based, 1 = finest. Band i
/// stays at 1 until its ramp start, falls to 0 at its extinction time and
/// stays there. The coarsest band never attenuates.
class AttenuationProfile {
public:
    /// Standard (non-attenuated) process with `bands` bands.
    explicit AttenuationProfile(int bands = 1) : extinction_(static_cast<std::size_t>(bands), kInfinity),
                                                 ramp_start_(static_cast<std::size_t>(bands), kInfinity)
    {
        if (bands < 1) throw ConfigError("attenuation profile needs at least one band");
    }

    /// `extinction` and `ramp_start` list the K-1 finite bands, finest first.
    AttenuationProfile(std::vector<double> extinction, std::vector<double> ramp_start,
                       RampShape shape = RampShape::linear)
        : extinction_(std::move(extinction)), ramp_start_(std::move(ramp_start)), shape_(shape)
    {
        if (ramp_start_.empty()) ramp_start_.assign(extinction_.size(), 0.0);
        if (ramp_start_.size() != extinction_.size()) {
            throw ConfigError("schedule.ramp_start must have one entry per entry of schedule.t_star");
        }
        for (std::size_t i = 0; i < extinction_.size(); ++i) {
            const double ts = extinction_[i];
            const double r = ramp_start_[i];
            if (!(ts > 0.0)) throw ConfigError("schedule.t_star[" + std::to_string(i) + "] must be positive");
            if (i > 0 && ts < extinction_[i - 1]) {
                throw ConfigError("schedule.t_star must be non-decreasing (finer bands extinguish first)");
            }
            if (shape_ != RampShape::step && !(r >= 0.0 && r < ts)) {
                throw ConfigError("schedule.ramp_start[" + std::to_string(i) + "] must lie in [0, t_star)");
            }
        }
        extinction_.push_back(kInfinity);
        ramp_start_.push_back(kInfinity);
    }

    [[nodiscard]] int bands() const noexcept { return static_cast<int>(extinction_.size()); }
    [[nodiscard]] RampShape shape() const noexcept { return shape_; }

    [[nodiscard]] double extinction_time(int band) const { return extinction_[checked(band)]; }
    [[nodiscard]] double ramp_start(int band) const { return ramp_start_[checked(band)]; }

    /// Finite extinction times (K-1 entries), finest first.
    [[nodiscard]] std::vector<double> finite_extinction_times() const
    {
        return {extinction_.begin(), extinction_.end() - 1};
    }
    [[nodiscard]] std::vector<double> finite_ramp_starts() const
    {
        return {ramp_start_.begin(), ramp_start_.end() - 1};
    }

    [[nodiscard]] bool attenuates() const noexcept
    {
        for (double ts : extinction_) {
            if (std::isfinite(ts)) return true;
        }
        return false;
    }

    [[nodiscard]] double alpha(int band, double t) const
    {
        const auto i = checked(band);
        if (t < 0.0) throw DomainError("alpha: time must be non-negative");
        const double ts = extinction_[i];
        if (!std::isfinite(ts)) return 1.0;
        if (t >= ts) return 0.0;
        if (shape_ == RampShape::step) return 1.0;
        const double r = ramp_start_[i];
        if (t <= r) return 1.0;
        const double u = (t - r) / (ts - r);
        if (shape_ == RampShape::linear) return 1.0 - u;
        return 0.5 * (1.0 + std::cos(std::numbers::pi * u));
    }

    /// d alpha / dt taken from below (the direction backward sampling moves),
    /// so the value at a kink is the slope of the segment just under it.
    [[nodiscard]] double alpha_derivative(int band, double t) const
    {
        const auto i = checked(band);
        const double ts = extinction_[i];
        if (!std::isfinite(ts) || shape_ == RampShape::step) return 0.0;
        if (t > ts) return 0.0;
        const double r = ramp_start_[i];
        if (t <= r) return 0.0;
        const double len = ts - r;
        if (shape_ == RampShape::linear) return -1.0 / len;
        const double u = (t - r) / len;
        return -0.5 * std::numbers::pi * std::sin(std::numbers::pi * u) / len;
    }

private:
    [[nodiscard]] std::size_t checked(int band) const
    {
        if (band < 1 || band > bands()) {
            throw DomainError("band " + std::to_string(band) + " out of range [1, " + std::to_string(bands()) +
                              "]");
        }
        return static_cast<std::size_t>(band - 1);
    }

    std::vector<double> extinction_;
    std::vector<double> ramp_start_;
    RampShape shape_ = RampShape::linear;
};

inline double alpha(const AttenuationProfile& p, int band, double t) { return p.alpha(band, t); }

// ---------------------------------------------------------------------------
// Preconditioning and training noise
// ---------------------------------------------------------------------------

struct PreconditionCoeffs {
    double c_skip;
    double c_out;
    double c_in;
    double c_noise;
};

struct Precondition {
    double sigma_data = 0.5;

    [[nodiscard]] PreconditionCoeffs coeffs(double sigma) const
    {
        if (!(sigma > 0.0)) throw DomainError("precondition: sigma must be positive");
        const double s2 = sigma * sigma;
        const double d2 = sigma_data * sigma_data;
        const double root = std::sqrt(s2 + d2);
        return {d2 / (s2 + d2), sigma * sigma_data / root, 1.0 / root, 0.25 * std::log(sigma)};
    }
};

inline PreconditionCoeffs precondition_coeffs(const Precondition& p, double sigma) { return p.coeffs(sigma); }

/// ln(sigma) ~ Normal(p_mean, p_std^2).
struct TrainSigmaDist {
    double p_mean = -1.2;
    double p_std = 1.2;

    double sample(RngStream& rng) const { return std::exp(p_mean + p_std * rng.normal()); }
};

inline double sample_train_sigma(const TrainSigmaDist& d, RngStream& rng) { return d.sample(rng); }

} // namespace ldm

#endif // LDM_SCHEDULE_HPP
