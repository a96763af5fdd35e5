#ifndef LDM_PROCESS_HPP
#define LDM_PROCESS_HPP

#include "ldm/field.hpp"
#include "ldm/grid.hpp"
#include "ldm/schedule.hpp"

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ldm {

/// Laplacian forward process: K bands at factor f, each attenuated by its own
/// alpha_i(t), plus isotropic noise of std t.
///
/// A state at level l (1 = finest) lives at resolution H/f^(l-1) and is
/// exactly down^(l-1) of the full-resolution state. Its noise std is therefore
/// sigma_l = t / f^(l-1), and that is the sigma a DiffusionState carries.
struct LaplacianProcess {
    int levels = 1;
    int factor = 2;
    AttenuationProfile profile{1};

    void validate() const
    {
        if (levels < 1) throw ConfigError("process.levels must be >= 1");
        if (factor < 2) throw ConfigError("process.factor must be >= 2");
        if (profile.bands() != levels) {
            throw ConfigError("schedule.t_star must list process.levels - 1 = " + std::to_string(levels - 1) +
                              " extinction times, got " + std::to_string(profile.bands() - 1));
        }
    }

    [[nodiscard]] double scale(int level) const
    {
        return static_cast<double>(detail::int_pow(factor, level - 1));
    }

    /// Full-resolution time for a level-l sigma.
    [[nodiscard]] double time_at(double sigma, int level) const { return sigma * scale(level); }
    [[nodiscard]] double sigma_at(double t, int level) const { return t / scale(level); }

    [[nodiscard]] Shape level_shape(Shape full, int level) const
    {
        const auto s = static_cast<int>(detail::int_pow(factor, level - 1));
        return {full.channels, full.height / s, full.width / s};
    }

    /// alpha_i(t) for the bands represented at `level` (bands level..K).
    [[nodiscard]] std::vector<double> band_alphas(int level, double t) const
    {
        check_level(level);
        std::vector<double> a;
        for (int band = level; band <= levels; ++band) a.push_back(profile.alpha(band, t));
        return a;
    }

    /// d alpha_i / d sigma_level for bands level..K (chain rule through t = sigma_l * f^(l-1)).
    [[nodiscard]] std::vector<double> band_alpha_derivatives(int level, double t) const
    {
        check_level(level);
        std::vector<double> d;
        const double s = scale(level);
        for (int band = level; band <= levels; ++band) d.push_back(profile.alpha_derivative(band, t) * s);
        return d;
    }

    void check_level(int level) const
    {
        if (level < 1 || level > levels) {
            throw DomainError("level " + std::to_string(level) + " out of range [1, " + std::to_string(levels) +
                              "]");
        }
    }
};

inline LaplacianProcess standard_process() { return {}; }

inline LaplacianProcess make_process(int levels, int factor, std::vector<double> t_star,
                                     std::vector<double> ramp_start = {}, RampShape shape = RampShape::linear)
{
    LaplacianProcess p{levels, factor,
                       levels == 1 && t_star.empty()
                           ? AttenuationProfile(1)
                           : AttenuationProfile(std::move(t_star), std::move(ramp_start), shape)};
    p.validate();
    return p;
}

/// A noisy sample; sigma is expressed in the units of its own level.
struct DiffusionState {
    Field field;
    double sigma = 0.0;
    int level = 1;
    std::uint64_t stream = 0;
};

struct SwitchRecord {
    int from_level = 0;
    int to_level = 0;
    double sigma_before = 0.0;
    double sigma_after = 0.0;
    double ratio = 1.0;
};

/// Re-weights the Laplacian bands of `x` (at its own resolution) by
/// `weights`, finest first, and sums them back. All-ones weights return x
/// bit-for-bit.
inline Field weight_bands(const Field& x, std::span<const double> weights, int factor)
{
    bool identity = true;
    for (double w : weights) identity = identity && (w == 1.0);
    if (identity) return x;
    Pyramid p = laplacian_decompose(x, static_cast<int>(weights.size()), factor);
    for (std::size_t i = 0; i < weights.size(); ++i) p.bands[i] *= weights[i];
    return laplacian_reconstruct(p);
}

/// mu(x0, t) = sum_i alpha_i(t) up^(i-1)(x0^(i)), evaluated at `level`
/// resolution from a full-resolution x0.
inline Field forward_mean(const Field& x0, double t, const LaplacianProcess& process, int level = 1)
{
    process.check_level(level);
    require_decomposable(x0.shape(), process.levels, process.factor);
    const Field x_level = downsample_n(x0, process.factor, level - 1);
    const auto a = process.band_alphas(level, t);
    return weight_bands(x_level, a, process.factor);
}

/// x_t = mu(x0, t) + sigma_l * eps with eps unit white noise at the level's resolution.
inline DiffusionState forward_noise(const Field& x0, double t, const LaplacianProcess& process, RngStream& rng,
                                    int level = 1)
{
    if (t < 0.0) throw DomainError("forward_noise: time must be non-negative");
    DiffusionState s;
    s.field = forward_mean(x0, t, process, level);
    s.sigma = process.sigma_at(t, level);
    s.level = level;
    if (s.sigma > 0.0) {
        for (double& v : s.field.values()) v += s.sigma * rng.normal();
    }
    return s;
}

inline Pyramid decompose_noise(const Field& eps, int levels, int factor = 2)
{
    return laplacian_decompose(eps, levels, factor);
}

/// ratio * down(eps_R, ratio): the low-resolution unit noise coupled to eps_R.
inline Field project_noise_down(const Field& eps_high, int ratio)
{
    Field e = downsample(eps_high, ratio);
    e *= static_cast<double>(ratio);
    return e;
}

enum class NoiseMode {
    isotropic, ///< one white-noise draw at the target resolution
    pyramid,   ///< independent per-band components assembled by reconstruction
};

/// Unit white noise of `shape`. Pyramid mode draws the high-pass part of
/// each band independently at that band's resolution; the sum has the same
/// law as isotropic noise because the bands are orthogonal.
inline Field draw_noise(Shape shape, int levels, int factor, NoiseMode mode, RngStream& rng)
{
    if (mode == NoiseMode::isotropic || levels == 1) return standard_normal(shape, rng);
    require_decomposable(shape, levels, factor);
    Pyramid p;
    p.factor = factor;
    Shape s = shape;
    double scale = 1.0;
    for (int i = 0; i < levels; ++i) {
        // Unit noise at full resolution restricted to band i equals the band-i
        // component of scale * (white noise at band-i resolution).
        Field e = standard_normal(s, rng);
        e *= scale;
        if (i + 1 < levels) e -= upsample(downsample(e, factor), factor);
        p.bands.push_back(std::move(e));
        s = {s.channels, s.height / factor, s.width / factor};
        scale /= factor;
    }
    return laplacian_reconstruct(p);
}

namespace detail {

inline int switch_levels(int ratio, int factor)
{
    int k = 0;
    long long r = 1;
    while (r < ratio) {
        r *= factor;
        ++k;
    }
    if (r != ratio || k == 0) {
        throw DomainError("switch ratio " + std::to_string(ratio) + " is not a positive power of the factor " +
                          std::to_string(factor));
    }
    return k;
}

} // namespace detail

/// The resolution-switch construction on raw fields:
///   up(x_noisy) + sigma*ratio*(eps_R - up(down(eps_R))).
inline Field switch_construct(const Field& x_noisy_low, double sigma, int ratio, const Field& eps_high)
{
    if (eps_high.channels() != x_noisy_low.channels() || eps_high.height() != x_noisy_low.height() * ratio ||
        eps_high.width() != x_noisy_low.width() * ratio) {
        throw DimensionError("switch: high-resolution noise " + to_string(eps_high.shape()) +
                             " does not match " + to_string(x_noisy_low.shape()) + " x " + std::to_string(ratio));
    }
    Field out = upsample(x_noisy_low, ratio);
    Field high_freq = eps_high;
    high_freq -= upsample(downsample(eps_high, ratio), ratio);
    out.axpy(sigma * ratio, high_freq);
    return out;
}

/// Lifts `state` by `ratio` with the given high-resolution unit noise.
inline DiffusionState switch_up_with_noise(const DiffusionState& state, int ratio, const LaplacianProcess& process,
                                           const Field& eps_high, SwitchRecord* record = nullptr)
{
    if (!(state.sigma > 0.0)) throw DomainError("switch_up: sigma is zero, use plain upsample");
    const int k = detail::switch_levels(ratio, process.factor);
    if (state.level - k < 1) {
        throw DomainError("switch_up: ratio " + std::to_string(ratio) + " overshoots level 1 from level " +
                          std::to_string(state.level));
    }
    DiffusionState out;
    out.field = switch_construct(state.field, state.sigma, ratio, eps_high);
    out.sigma = state.sigma * ratio;
    out.level = state.level - k;
    out.stream = state.stream;
    if (record) *record = {state.level, out.level, state.sigma, out.sigma, static_cast<double>(ratio)};
    return out;
}

/// Draws fresh high-resolution noise from `rng` and lifts `state`.
inline DiffusionState switch_up(const DiffusionState& state, int ratio, const LaplacianProcess& process,
                                RngStream& rng, SwitchRecord* record = nullptr)
{
    const Shape high{state.field.channels(), state.field.height() * ratio, state.field.width() * ratio};
    const Field eps = standard_normal(high, rng);
    return switch_up_with_noise(state, ratio, process, eps, record);
}

/// Amplitude SNR: RMS(mu(x0, t)) / sigma at the state's level; +inf at sigma = 0.
inline double snr(const DiffusionState& state, const Field& x0, const LaplacianProcess& process)
{
    if (state.sigma <= 0.0) return kInfinity;
    const Field mu = forward_mean(x0, process.time_at(state.sigma, state.level), process, state.level);
    mu.require_same_shape(state.field, "snr");
    return std::sqrt(mu.squared_norm() / static_cast<double>(mu.size())) / state.sigma;
}

/// Block-averages a state by `ratio`: the field pools and sigma shrinks by the
/// same ratio, since pooled unit noise has std 1/ratio.
inline DiffusionState downsample_state(const DiffusionState& state, int ratio, const LaplacianProcess& process)
{
    const int k = detail::switch_levels(ratio, process.factor);
    if (state.level + k > process.levels) throw DomainError("downsample_state: beyond the coarsest level");
    return {downsample(state.field, ratio), state.sigma / ratio, state.level + k, state.stream};
}

} // namespace ldm

#endif // LDM_PROCESS_HPP
