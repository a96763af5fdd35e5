#ifndef LDM_DENOISER_HPP
#define LDM_DENOISER_HPP

#include "ldm/field.hpp"
#include "ldm/grid.hpp"
#include "ldm/process.hpp"
#include "ldm/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ldm {

/// x0-predictor D(x_t, sigma, level).
class Denoiser {
public:
    virtual ~Denoiser() = default;
    [[nodiscard]] virtual Field denoise(const DiffusionState& state) const = 0;
};

namespace detail {

inline void require_positive_sigma(double sigma, const char* what)
{
    if (!(sigma > 0.0)) {
        throw DomainError(std::string(what) + ": sigma must be positive (at sigma = 0 the posterior is a point "
                                              "mass; return x_t)");
    }
}

/// Normalised softmax of `logits` in place, max-subtracted.
inline void softmax_inplace(std::vector<double>& logits)
{
    const double mx = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (double& l : logits) {
        l = std::exp(l - mx);
        total += l;
    }
    for (double& l : logits) l /= total;
}

inline double log_sum_exp(std::span<const double> v)
{
    const double mx = *std::max_element(v.begin(), v.end());
    double s = 0.0;
    for (double x : v) s += std::exp(x - mx);
    return mx + std::log(s);
}

} // namespace detail

// ---------------------------------------------------------------------------
// Exact MMSE for a finite dataset
// ---------------------------------------------------------------------------

/// Posterior mean over an empirical data distribution under the Laplacian
/// forward process. Caches every point at every level together with its
/// Laplacian bands upsampled to that level's resolution, so mu(x_j, t) is a
/// weighted sum of cached fields.
class DatasetOracle final : public Denoiser {
public:
    DatasetOracle(std::vector<Field> points, LaplacianProcess process)
        : process_(std::move(process))
    {
        process_.validate();
        if (points.empty()) throw ConfigError("dataset oracle needs at least one point");
        const Shape shape = points.front().shape();
        for (const Field& p : points) {
            if (p.shape() != shape) {
                throw DimensionError("dataset points differ in shape: " + to_string(shape) + " vs " +
                                     to_string(p.shape()));
            }
        }
        require_decomposable(shape, process_.levels, process_.factor);
        const int f = process_.factor;
        levels_.resize(static_cast<std::size_t>(process_.levels));
        std::vector<Field> current = std::move(points);
        for (int level = 1; level <= process_.levels; ++level) {
            LevelCache& cache = levels_[static_cast<std::size_t>(level - 1)];
            const int nbands = process_.levels - level + 1;
            for (const Field& x : current) {
                Pyramid p = laplacian_decompose(x, nbands, f);
                std::vector<Field> lifted;
                lifted.reserve(p.bands.size());
                for (int b = 0; b < nbands; ++b) lifted.push_back(upsample_n(p.bands[static_cast<std::size_t>(b)], f, b));
                cache.bands.push_back(std::move(lifted));
            }
            cache.points = current;
            if (level < process_.levels) {
                for (Field& x : current) x = downsample(x, f);
            }
        }
    }

    [[nodiscard]] const LaplacianProcess& process() const noexcept { return process_; }
    [[nodiscard]] std::size_t size() const noexcept { return levels_.front().points.size(); }
    [[nodiscard]] const std::vector<Field>& points(int level = 1) const { return cache(level).points; }
    [[nodiscard]] Shape shape(int level = 1) const { return cache(level).points.front().shape(); }

    /// mu(x_j, t) at `level`.
    [[nodiscard]] Field mean_of(std::size_t j, double t, int level) const
    {
        const LevelCache& c = cache(level);
        const auto alphas = process_.band_alphas(level, t);
        bool identity = true;
        for (double a : alphas) identity = identity && (a == 1.0);
        if (identity) return c.points[j];
        Field mu(c.points[j].shape());
        for (std::size_t b = 0; b < alphas.size(); ++b) {
            if (alphas[b] != 0.0) mu.axpy(alphas[b], c.bands[j][b]);
        }
        return mu;
    }

    /// Unnormalised log posterior weights -|x_t - mu(x_j,t)|^2 / (2 sigma^2).
    [[nodiscard]] std::vector<double> log_weights(const DiffusionState& state) const
    {
        detail::require_positive_sigma(state.sigma, "mmse_denoise_empirical");
        const LevelCache& c = cache(state.level);
        state.field.require_same_shape(c.points.front(), "mmse_denoise_empirical");
        const double t = process_.time_at(state.sigma, state.level);
        const auto alphas = process_.band_alphas(state.level, t);
        bool identity = true;
        for (double a : alphas) identity = identity && (a == 1.0);

        const double inv2s2 = 1.0 / (2.0 * state.sigma * state.sigma);
        std::vector<double> lw(c.points.size());
        const auto x = state.field.values();
        std::vector<double> mu(x.size());
        for (std::size_t j = 0; j < c.points.size(); ++j) {
            double d2 = 0.0;
            if (identity) {
                d2 = squared_distance(state.field, c.points[j]);
            } else {
                std::fill(mu.begin(), mu.end(), 0.0);
                for (std::size_t b = 0; b < alphas.size(); ++b) {
                    if (alphas[b] == 0.0) continue;
                    const auto band = c.bands[j][b].values();
                    for (std::size_t k = 0; k < mu.size(); ++k) mu[k] += alphas[b] * band[k];
                }
                for (std::size_t k = 0; k < mu.size(); ++k) {
                    const double d = x[k] - mu[k];
                    d2 += d * d;
                }
            }
            lw[j] = -d2 * inv2s2;
        }
        return lw;
    }

    [[nodiscard]] std::vector<double> posterior_weights(const DiffusionState& state) const
    {
        auto w = log_weights(state);
        detail::softmax_inplace(w);
        return w;
    }

    [[nodiscard]] Field denoise(const DiffusionState& state) const override
    {
        const auto w = posterior_weights(state);
        const LevelCache& c = cache(state.level);
        Field out(c.points.front().shape());
        for (std::size_t j = 0; j < w.size(); ++j) {
            if (w[j] != 0.0) out.axpy(w[j], c.points[j]);
        }
        return out;
    }

    /// Exact log p_t(x) of the Gaussian mixture of atoms at the state's level.
    [[nodiscard]] double log_density(const DiffusionState& state) const
    {
        const auto lw = log_weights(state);
        const double d = static_cast<double>(state.field.size());
        return detail::log_sum_exp(lw) - std::log(static_cast<double>(lw.size())) -
               0.5 * d * std::log(2.0 * std::numbers::pi * state.sigma * state.sigma);
    }

private:
    struct LevelCache {
        std::vector<Field> points;
        std::vector<std::vector<Field>> bands; // [point][band] lifted to level resolution
    };

    [[nodiscard]] const LevelCache& cache(int level) const
    {
        process_.check_level(level);
        return levels_[static_cast<std::size_t>(level - 1)];
    }

    LaplacianProcess process_;
    std::vector<LevelCache> levels_;
};

inline Field mmse_denoise_empirical(const DatasetOracle& oracle, const DiffusionState& state)
{
    return oracle.denoise(state);
}

// ---------------------------------------------------------------------------
// Gaussian mixture oracle (standard process, isotropic components)
// ---------------------------------------------------------------------------

struct GmmComponent {
    double weight = 1.0;
    Field mean;
    double variance = 0.0;
};

class GmmOracle final : public Denoiser {
public:
    explicit GmmOracle(std::vector<GmmComponent> components) : components_(std::move(components))
    {
        if (components_.empty()) throw ConfigError("gmm needs at least one component");
        double total = 0.0;
        for (std::size_t k = 0; k < components_.size(); ++k) {
            const auto& c = components_[k];
            if (!(c.weight > 0.0)) throw ConfigError("gmm.components[" + std::to_string(k) + "].weight must be positive");
            if (!(c.variance >= 0.0)) {
                throw ConfigError("gmm.components[" + std::to_string(k) + "].variance must be non-negative");
            }
            if (c.mean.shape() != components_.front().mean.shape()) {
                throw DimensionError("gmm component means differ in shape");
            }
            total += c.weight;
        }
        if (std::abs(total - 1.0) > 1e-12) throw ConfigError("gmm weights must sum to 1");
    }

    [[nodiscard]] const std::vector<GmmComponent>& components() const noexcept { return components_; }
    [[nodiscard]] Shape shape() const { return components_.front().mean.shape(); }

    [[nodiscard]] std::vector<double> responsibilities(const DiffusionState& state) const
    {
        detail::require_positive_sigma(state.sigma, "mmse_denoise_gmm");
        state.field.require_same_shape(components_.front().mean, "mmse_denoise_gmm");
        const double s2 = state.sigma * state.sigma;
        const double d = static_cast<double>(state.field.size());
        std::vector<double> lr(components_.size());
        for (std::size_t k = 0; k < components_.size(); ++k) {
            const auto& c = components_[k];
            const double var = c.variance + s2;
            lr[k] = std::log(c.weight) - 0.5 * d * std::log(var) - squared_distance(state.field, c.mean) / (2.0 * var);
        }
        detail::softmax_inplace(lr);
        return lr;
    }

    [[nodiscard]] Field denoise(const DiffusionState& state) const override
    {
        const auto r = responsibilities(state);
        const double s2 = state.sigma * state.sigma;
        Field out(state.field.shape());
        for (std::size_t k = 0; k < components_.size(); ++k) {
            if (r[k] == 0.0) continue;
            const auto& c = components_[k];
            const double denom = c.variance + s2;
            out.axpy(r[k] * c.variance / denom, state.field);
            out.axpy(r[k] * s2 / denom, c.mean);
        }
        return out;
    }

    [[nodiscard]] double log_density(const DiffusionState& state) const
    {
        const double s2 = state.sigma * state.sigma;
        const double d = static_cast<double>(state.field.size());
        std::vector<double> l(components_.size());
        for (std::size_t k = 0; k < components_.size(); ++k) {
            const auto& c = components_[k];
            const double var = c.variance + s2;
            l[k] = std::log(c.weight) - 0.5 * d * std::log(2.0 * std::numbers::pi * var) -
                   squared_distance(state.field, c.mean) / (2.0 * var);
        }
        return detail::log_sum_exp(l);
    }

    Field sample(RngStream& rng) const
    {
        const double u = rng.uniform();
        double acc = 0.0;
        std::size_t k = components_.size() - 1;
        for (std::size_t i = 0; i < components_.size(); ++i) {
            acc += components_[i].weight;
            if (u < acc) {
                k = i;
                break;
            }
        }
        Field x = components_[k].mean;
        const double sd = std::sqrt(components_[k].variance);
        for (double& v : x.values()) v += sd * rng.normal();
        return x;
    }

private:
    std::vector<GmmComponent> components_;
};

inline Field mmse_denoise_gmm(const GmmOracle& oracle, const DiffusionState& state) { return oracle.denoise(state); }

// ---------------------------------------------------------------------------
// Tweedie
// ---------------------------------------------------------------------------

/// grad log p_t(x_t) from an x0-prediction. Band-wise
/// (alpha_i D^(i) - x_t^(i)) / sigma^2, with `band_alphas` listing the
/// bands represented at the state's level, finest first.
inline Field score_from_denoiser(const Field& denoised, const DiffusionState& state,
                                 std::span<const double> band_alphas, int factor = 2)
{
    detail::require_positive_sigma(state.sigma, "score_from_denoiser");
    denoised.require_same_shape(state.field, "score_from_denoiser");
    Field score = band_alphas.empty() ? denoised : weight_bands(denoised, band_alphas, factor);
    score -= state.field;
    score *= 1.0 / (state.sigma * state.sigma);
    return score;
}

inline Field score_from_denoiser(const Field& denoised, const DiffusionState& state, const LaplacianProcess& process)
{
    const auto a = process.band_alphas(state.level, process.time_at(state.sigma, state.level));
    return score_from_denoiser(denoised, state, a, process.factor);
}

// ---------------------------------------------------------------------------
// Simple baselines
// ---------------------------------------------------------------------------

class IdentityDenoiser final : public Denoiser {
public:
    [[nodiscard]] Field denoise(const DiffusionState& state) const override { return state.field; }
};

class ConstantDenoiser final : public Denoiser {
public:
    explicit ConstantDenoiser(Field value) : value_(std::move(value)) {}

    static ConstantDenoiser dataset_mean(std::span<const Field> dataset)
    {
        if (dataset.empty()) throw ConfigError("dataset mean of an empty dataset");
        Field m(dataset.front().shape());
        for (const Field& x : dataset) m += x;
        m *= 1.0 / static_cast<double>(dataset.size());
        return ConstantDenoiser(std::move(m));
    }

    [[nodiscard]] Field denoise(const DiffusionState& state) const override
    {
        state.field.require_same_shape(value_, "constant denoiser");
        return value_;
    }

private:
    Field value_;
};

// ---------------------------------------------------------------------------
// Mixture of experts
// ---------------------------------------------------------------------------

/// One expert: a denoiser valid at `level` for full-resolution times in
/// (t_low, t_high], with t_low == 0 also covering t = 0.
struct Expert {
    std::shared_ptr<const Denoiser> denoiser;
    int level = 1;
    double t_low = 0.0;
    double t_high = kInfinity;
    std::string name;

    [[nodiscard]] bool covers(int query_level, double t) const
    {
        if (query_level != level) return false;
        if (t > t_high) return false;
        return t > t_low || (t_low == 0.0 && t == 0.0);
    }
};

/// Routes a (level, sigma) query to exactly one expert. Queries are
/// translated to full-resolution time first; intervals are lower-open and
/// upper-closed, so a boundary belongs to the expert below it.
class ExpertRouter final : public Denoiser {
public:
    explicit ExpertRouter(LaplacianProcess process) : process_(std::move(process)) { process_.validate(); }

    /// The staging in which the level-l expert covers [0, t_star_l] and the
    /// coarsest expert covers [0, inf). `per_level[l-1]` serves level l.
    static ExpertRouter staged(const LaplacianProcess& process,
                               const std::vector<std::shared_ptr<const Denoiser>>& per_level)
    {
        if (per_level.size() != static_cast<std::size_t>(process.levels)) {
            throw ConfigError("staged router needs one expert per level");
        }
        ExpertRouter r(process);
        for (int level = 1; level <= process.levels; ++level) {
            r.add({per_level[static_cast<std::size_t>(level - 1)], level, 0.0,
                   process.profile.extinction_time(level), "level-" + std::to_string(level)});
        }
        return r;
    }

    void add(Expert e)
    {
        if (!e.denoiser) throw ConfigError("expert '" + e.name + "' has no denoiser");
        process_.check_level(e.level);
        if (!(e.t_high > e.t_low) || e.t_low < 0.0) {
            throw ConfigError("expert '" + e.name + "' has an empty or negative range");
        }
        for (const Expert& other : experts_) {
            if (other.level == e.level && e.t_low < other.t_high && other.t_low < e.t_high) {
                throw ConfigError("experts '" + other.name + "' and '" + e.name + "' overlap at level " +
                                  std::to_string(e.level));
            }
        }
        experts_.push_back(std::move(e));
    }

    [[nodiscard]] const std::vector<Expert>& experts() const noexcept { return experts_; }
    [[nodiscard]] const LaplacianProcess& process() const noexcept { return process_; }

    [[nodiscard]] const Expert& route_expert(int level, double sigma) const
    {
        process_.check_level(level);
        const double t = process_.time_at(sigma, level);
        for (const Expert& e : experts_) {
            if (e.covers(level, t)) return e;
        }
        throw RoutingError("no expert covers level " + std::to_string(level) + " at sigma " + std::to_string(sigma) +
                           " (t = " + std::to_string(t) + ")");
    }

    [[nodiscard]] const Denoiser& route(int level, double sigma) const { return *route_expert(level, sigma).denoiser; }

    [[nodiscard]] Field denoise(const DiffusionState& state) const override
    {
        return route(state.level, state.sigma).denoise(state);
    }

private:
    LaplacianProcess process_;
    std::vector<Expert> experts_;
};

inline const Denoiser& route(const ExpertRouter& router, int level, double sigma) { return router.route(level, sigma); }

// ---------------------------------------------------------------------------
// Denoising loss
// ---------------------------------------------------------------------------

/// Per-draw squared errors |D(x_t) - x0|^2 at fixed sigma, x0 uniform over the
/// dataset, x_t from the (level-1) forward process.
inline std::vector<double> eval_loss_samples(const Denoiser& denoiser, std::span<const Field> dataset, double sigma,
                                             int n, RngStream& rng,
                                             const LaplacianProcess& process = standard_process())
{
    if (n < 1) throw DomainError("eval_loss: n must be >= 1");
    if (dataset.empty()) throw ConfigError("eval_loss: empty dataset");
    std::vector<double> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const Field& x0 = dataset[rng.index(dataset.size())];
        const DiffusionState s = forward_noise(x0, sigma, process, rng);
        out[static_cast<std::size_t>(i)] = squared_distance(denoiser.denoise(s), x0);
    }
    return out;
}

inline double eval_loss(const Denoiser& denoiser, std::span<const Field> dataset, double sigma, int n, RngStream& rng,
                        const LaplacianProcess& process = standard_process())
{
    const auto s = eval_loss_samples(denoiser, dataset, sigma, n, rng, process);
    double total = 0.0;
    for (double v : s) total += v;
    return total / static_cast<double>(s.size());
}

} // namespace ldm

#endif // LDM_DENOISER_HPP
