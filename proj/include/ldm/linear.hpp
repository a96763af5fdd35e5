#ifndef LDM_LINEAR_HPP
#define LDM_LINEAR_HPP

#include "ldm/denoiser.hpp"
#include "ldm/field.hpp"
#include "ldm/io.hpp"
#include "ldm/schedule.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace ldm {

/// Preconditioned affine denoiser, one affine map per sigma bucket:
///
///   D(x, sigma) = c_skip x + c_out (A_b c_in x + b_b),   b = bucket(sigma).
class LinearDenoiser final : public Denoiser {
public:
    struct Bucket {
        Eigen::MatrixXd matrix; // dim x dim
        Eigen::VectorXd offset; // dim
        std::size_t pairs = 0;
        bool ridge = false;
    };

    LinearDenoiser(Shape shape, Precondition precondition, std::vector<double> edges, std::vector<Bucket> buckets)
        : shape_(shape), precondition_(precondition), edges_(std::move(edges)), buckets_(std::move(buckets))
    {
        if (edges_.size() != buckets_.size() + 1 || buckets_.empty()) {
            throw ConfigError("linear denoiser: need bucket count + 1 edges");
        }
        const auto dim = static_cast<Eigen::Index>(shape_.size());
        for (const Bucket& b : buckets_) {
            if (b.matrix.rows() != dim || b.matrix.cols() != dim || b.offset.size() != dim) {
                throw DimensionError("linear denoiser: map dimensions do not match field dimension " +
                                     std::to_string(dim));
            }
        }
    }

    [[nodiscard]] Shape shape() const noexcept { return shape_; }
    [[nodiscard]] const Precondition& precondition() const noexcept { return precondition_; }
    [[nodiscard]] const std::vector<double>& edges() const noexcept { return edges_; }
    [[nodiscard]] const std::vector<Bucket>& buckets() const noexcept { return buckets_; }

    [[nodiscard]] std::size_t bucket_of(double sigma) const
    {
        const auto it = std::upper_bound(edges_.begin() + 1, edges_.end() - 1, sigma);
        return static_cast<std::size_t>(it - (edges_.begin() + 1));
    }

    [[nodiscard]] bool ridge_used() const noexcept
    {
        return std::any_of(buckets_.begin(), buckets_.end(), [](const Bucket& b) { return b.ridge; });
    }

    /// Effective linear map c_skip I + c_out c_in A_b at `sigma`.
    [[nodiscard]] Eigen::MatrixXd effective_matrix(double sigma) const
    {
        const auto c = precondition_.coeffs(sigma);
        const Bucket& b = buckets_[bucket_of(sigma)];
        Eigen::MatrixXd m = (c.c_out * c.c_in) * b.matrix;
        m.diagonal().array() += c.c_skip;
        return m;
    }

    [[nodiscard]] Field denoise(const DiffusionState& state) const override
    {
        detail::require_positive_sigma(state.sigma, "linear denoiser");
        if (state.field.shape() != shape_) {
            throw DimensionError("linear denoiser expects " + to_string(shape_) + ", got " +
                                 to_string(state.field.shape()));
        }
        const auto c = precondition_.coeffs(state.sigma);
        const Bucket& b = buckets_[bucket_of(state.sigma)];
        const Eigen::Map<const Eigen::VectorXd> x(state.field.data(), static_cast<Eigen::Index>(state.field.size()));
        const Eigen::VectorXd f = b.matrix * (c.c_in * x) + b.offset;
        Field out(shape_);
        Eigen::Map<Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(out.size())) = c.c_skip * x + c.c_out * f;
        return out;
    }

    // Binary layout, little-endian:
    //   char[8] "LDMLIN01"
    //   u32 channels, u32 height, u32 width
    //   f64 sigma_data
    //   u64 bucket count B
    //   f64 edges[B+1]           (edges[0] = 0, edges[B] = +inf)
    //   per bucket: f64 matrix[dim*dim] row-major, f64 offset[dim]
    void save(const std::string& path) const
    {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw IoError("cannot open '" + path + "' for writing");
        os.write(kMagic, 8);
        write_u32(os, static_cast<std::uint32_t>(shape_.channels));
        write_u32(os, static_cast<std::uint32_t>(shape_.height));
        write_u32(os, static_cast<std::uint32_t>(shape_.width));
        write_f64(os, precondition_.sigma_data);
        write_u64(os, buckets_.size());
        for (double e : edges_) write_f64(os, e);
        for (const Bucket& b : buckets_) {
            for (Eigen::Index r = 0; r < b.matrix.rows(); ++r) {
                for (Eigen::Index c = 0; c < b.matrix.cols(); ++c) write_f64(os, b.matrix(r, c));
            }
            for (Eigen::Index r = 0; r < b.offset.size(); ++r) write_f64(os, b.offset(r));
        }
        if (!os) throw IoError("write to '" + path + "' failed");
    }

    static LinearDenoiser load(const std::string& path)
    {
        std::ifstream is(path, std::ios::binary);
        if (!is) throw IoError("cannot open '" + path + "'");
        char magic[8];
        is.read(magic, 8);
        if (!is || std::memcmp(magic, kMagic, 8) != 0) throw IoError("'" + path + "' is not a linear denoiser file");
        Shape s;
        s.channels = static_cast<int>(read_u32(is));
        s.height = static_cast<int>(read_u32(is));
        s.width = static_cast<int>(read_u32(is));
        Precondition pc{read_f64(is)};
        const auto nb = read_u64(is);
        if (!is || nb == 0 || nb > (1u << 20) || s.size() == 0 || s.size() > (1u << 16)) {
            throw IoError("'" + path + "' has a corrupt header");
        }
        std::vector<double> edges(nb + 1);
        for (double& e : edges) e = read_f64(is);
        const auto dim = static_cast<Eigen::Index>(s.size());
        std::vector<Bucket> buckets(nb);
        for (Bucket& b : buckets) {
            b.matrix.resize(dim, dim);
            b.offset.resize(dim);
            for (Eigen::Index r = 0; r < dim; ++r) {
                for (Eigen::Index c = 0; c < dim; ++c) b.matrix(r, c) = read_f64(is);
            }
            for (Eigen::Index r = 0; r < dim; ++r) b.offset(r) = read_f64(is);
        }
        if (!is) throw IoError("'" + path + "' is truncated");
        return {s, pc, std::move(edges), std::move(buckets)};
    }

private:
    static constexpr char kMagic[8] = {'L', 'D', 'M', 'L', 'I', 'N', '0', '1'};

    static void write_u32(std::ostream& os, std::uint32_t v) { detail::write_le(os, v); }
    static void write_u64(std::ostream& os, std::uint64_t v) { detail::write_le(os, v); }
    static void write_f64(std::ostream& os, double v) { detail::write_le(os, v); }
    static std::uint32_t read_u32(std::istream& is) { return detail::read_le<std::uint32_t>(is); }
    static std::uint64_t read_u64(std::istream& is) { return detail::read_le<std::uint64_t>(is); }
    static double read_f64(std::istream& is) { return detail::read_le<double>(is); }

    Shape shape_;
    Precondition precondition_;
    std::vector<double> edges_;
    std::vector<Bucket> buckets_;
};

struct LinearTrainConfig {
    std::vector<double> bucket_edges; ///< interior sigma edges, ascending; empty = one bucket
    int pairs = 100000;
    TrainSigmaDist sigma_dist{};
    Precondition precondition{};
};

/// Relative ridge applied when the normal equations are singular:
/// lambda = kRidgeScale * trace(M) / rows(M).
inline constexpr double kRidgeScale = 1e-8;

/// Least-squares fit of each bucket's affine map on (x0, x_t) pairs with
/// sigma drawn from the training distribution. The fit lives in the
/// preconditioned space: input c_in x_t, target (x0 - c_skip x_t) / c_out.
inline LinearDenoiser train_linear(std::span<const Field> dataset, const LinearTrainConfig& cfg, RngStream& rng)
{
    if (dataset.empty()) throw ConfigError("train_linear: dataset is empty");
    if (cfg.pairs < 1) throw ConfigError("train_linear: pairs must be >= 1");
    if (!std::is_sorted(cfg.bucket_edges.begin(), cfg.bucket_edges.end())) {
        throw ConfigError("train_linear: bucket edges must be ascending");
    }
    const Shape shape = dataset.front().shape();
    for (const Field& x : dataset) {
        if (x.shape() != shape) throw DimensionError("train_linear: dataset points differ in shape");
    }
    std::vector<double> edges{0.0};
    edges.insert(edges.end(), cfg.bucket_edges.begin(), cfg.bucket_edges.end());
    edges.push_back(kInfinity);
    const std::size_t nb = edges.size() - 1;

    const auto dim = static_cast<Eigen::Index>(shape.size());
    std::vector<Eigen::MatrixXd> gram(nb, Eigen::MatrixXd::Zero(dim + 1, dim + 1));
    std::vector<Eigen::MatrixXd> cross(nb, Eigen::MatrixXd::Zero(dim + 1, dim));
    std::vector<std::size_t> counts(nb, 0);

    Eigen::VectorXd u(dim + 1);
    Eigen::VectorXd target(dim);
    for (int n = 0; n < cfg.pairs; ++n) {
        const Field& x0 = dataset[rng.index(dataset.size())];
        const double sigma = cfg.sigma_dist.sample(rng);
        const auto c = cfg.precondition.coeffs(sigma);
        for (Eigen::Index k = 0; k < dim; ++k) {
            const double xt = x0[static_cast<std::size_t>(k)] + sigma * rng.normal();
            u(k) = c.c_in * xt;
            target(k) = (x0[static_cast<std::size_t>(k)] - c.c_skip * xt) / c.c_out;
        }
        u(dim) = 1.0;
        const auto b = static_cast<std::size_t>(
            std::upper_bound(edges.begin() + 1, edges.end() - 1, sigma) - (edges.begin() + 1));
        gram[b].selfadjointView<Eigen::Lower>().rankUpdate(u);
        cross[b].noalias() += u * target.transpose();
        ++counts[b];
    }

    std::vector<LinearDenoiser::Bucket> buckets(nb);
    for (std::size_t b = 0; b < nb; ++b) {
        LinearDenoiser::Bucket& out = buckets[b];
        out.pairs = counts[b];
        if (counts[b] == 0) {
            out.matrix = Eigen::MatrixXd::Zero(dim, dim);
            out.offset = Eigen::VectorXd::Zero(dim);
            continue;
        }
        Eigen::MatrixXd m = gram[b].selfadjointView<Eigen::Lower>();
        Eigen::LLT<Eigen::MatrixXd> llt(m);
        if (llt.info() != Eigen::Success || llt.rcond() < 1e-12) {
            const double lambda = kRidgeScale * std::max(m.trace() / static_cast<double>(m.rows()), 1e-300);
            m.diagonal().array() += lambda;
            llt.compute(m);
            out.ridge = true;
        }
        const Eigen::MatrixXd w = llt.solve(cross[b]); // (dim+1) x dim
        out.matrix = w.topRows(dim).transpose();
        out.offset = w.row(dim).transpose();
    }
    return {shape, cfg.precondition, std::move(edges), std::move(buckets)};
}

} // namespace ldm

#endif // LDM_LINEAR_HPP
