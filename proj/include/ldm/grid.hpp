#ifndef LDM_GRID_HPP
#define LDM_GRID_HPP

#include "ldm/field.hpp"

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace ldm {

namespace detail {

inline void require_factor(int f, const char* what)
{
    if (f < 1) throw DimensionError(std::string(what) + ": resampling factor must be >= 1");
}

inline long long int_pow(int base, int exp)
{
    long long r = 1;
    for (int i = 0; i < exp; ++i) r *= base;
    return r;
}

} // namespace detail

/// Average pooling over f x f blocks, per channel.
inline Field downsample(const Field& x, int f)
{
    detail::require_factor(f, "downsample");
    if (x.height() % f != 0 || x.width() % f != 0) {
        throw DimensionError("downsample: " + to_string(x.shape()) + " not divisible by " + std::to_string(f));
    }
    if (f == 1) return x;
    const int h = x.height() / f;
    const int w = x.width() / f;
    Field out(x.channels(), h, w);
    const double inv = 1.0 / (static_cast<double>(f) * f);
    for (int c = 0; c < x.channels(); ++c) {
        for (int y = 0; y < h; ++y) {
            for (int xx = 0; xx < w; ++xx) {
                double s = 0.0;
                for (int dy = 0; dy < f; ++dy) {
                    const double* row = x.data() + x.index(c, y * f + dy, xx * f);
                    for (int dx = 0; dx < f; ++dx) s += row[dx];
                }
                out(c, y, xx) = s * inv;
            }
        }
    }
    return out;
}

/// Nearest-neighbour replication of every pixel into an f x f block.
inline Field upsample(const Field& x, int f)
{
    detail::require_factor(f, "upsample");
    if (f == 1) return x;
    Field out(x.channels(), x.height() * f, x.width() * f);
    for (int c = 0; c < x.channels(); ++c) {
        for (int y = 0; y < out.height(); ++y) {
            const double* src = x.data() + x.index(c, y / f, 0);
            double* dst = out.data() + out.index(c, y, 0);
            for (int xx = 0; xx < out.width(); ++xx) dst[xx] = src[xx / f];
        }
    }
    return out;
}

/// Applies downsample `times` times with factor f (equivalently one pooling by f^times).
inline Field downsample_n(const Field& x, int f, int times)
{
    if (times <= 0) return x;
    return downsample(x, static_cast<int>(detail::int_pow(f, times)));
}

inline Field upsample_n(const Field& x, int f, int times)
{
    if (times <= 0) return x;
    return upsample(x, static_cast<int>(detail::int_pow(f, times)));
}

// ---------------------------------------------------------------------------
// Laplacian pyramid
// ---------------------------------------------------------------------------

/// Bands ordered finest first: band 0 has the input resolution, band i has
/// resolution divided by factor^i. The last band is the low-pass residual.
struct Pyramid {
    std::vector<Field> bands;
    int factor = 2;

    [[nodiscard]] int levels() const noexcept { return static_cast<int>(bands.size()); }
};

inline void require_decomposable(Shape s, int levels, int f)
{
    if (levels < 1) throw DimensionError("pyramid needs at least one level");
    if (f < 2 && levels > 1) throw DimensionError("pyramid factor must be >= 2");
    const long long div = detail::int_pow(f, levels - 1);
    if (s.height % div != 0 || s.width % div != 0) {
        throw DimensionError("shape " + to_string(s) + " not divisible by " + std::to_string(f) + "^" +
                             std::to_string(levels - 1));
    }
}

inline Pyramid laplacian_decompose(const Field& x, int levels, int f = 2)
{
    require_decomposable(x.shape(), levels, f);
    Pyramid p;
    p.factor = f;
    p.bands.reserve(static_cast<std::size_t>(levels));
    Field current = x;
    for (int i = 0; i + 1 < levels; ++i) {
        Field coarse = downsample(current, f);
        current -= upsample(coarse, f);
        p.bands.push_back(std::move(current));
        current = std::move(coarse);
    }
    p.bands.push_back(std::move(current));
    return p;
}

inline Field laplacian_reconstruct(const Pyramid& p)
{
    if (p.bands.empty()) throw DimensionError("laplacian_reconstruct: empty pyramid");
    Field acc = p.bands.back();
    for (int i = p.levels() - 2; i >= 0; --i) {
        const Field& band = p.bands[static_cast<std::size_t>(i)];
        if (band.channels() != acc.channels() || band.height() != acc.height() * p.factor ||
            band.width() != acc.width() * p.factor) {
            throw DimensionError("laplacian_reconstruct: band " + std::to_string(i) + " has shape " +
                                 to_string(band.shape()) + ", inconsistent with coarser band " +
                                 to_string(acc.shape()));
        }
        Field up = upsample(acc, p.factor);
        up += band;
        acc = std::move(up);
    }
    return acc;
}

// ---------------------------------------------------------------------------
// Haar wavelet
// ---------------------------------------------------------------------------

/// One orthonormal 2-D Haar step: (C,H,W) -> (4C,H/2,W/2). Output channel
/// 4c+k holds sub-band k of input channel c, k in {LL, HL, LH, HH}.
inline Field haar_forward(const Field& x)
{
    if (x.height() % 2 != 0 || x.width() % 2 != 0) {
        throw DimensionError("haar_forward: " + to_string(x.shape()) + " has odd spatial size");
    }
    const int h = x.height() / 2;
    const int w = x.width() / 2;
    Field out(x.channels() * 4, h, w);
    for (int c = 0; c < x.channels(); ++c) {
        for (int y = 0; y < h; ++y) {
            for (int xx = 0; xx < w; ++xx) {
                const double a = x(c, 2 * y, 2 * xx);
                const double b = x(c, 2 * y, 2 * xx + 1);
                const double cc = x(c, 2 * y + 1, 2 * xx);
                const double d = x(c, 2 * y + 1, 2 * xx + 1);
                out(4 * c + 0, y, xx) = 0.5 * (a + b + cc + d);
                out(4 * c + 1, y, xx) = 0.5 * (a - b + cc - d);
                out(4 * c + 2, y, xx) = 0.5 * (a + b - cc - d);
                out(4 * c + 3, y, xx) = 0.5 * (a - b - cc + d);
            }
        }
    }
    return out;
}

inline Field haar_inverse(const Field& y)
{
    if (y.channels() % 4 != 0) {
        throw DimensionError("haar_inverse: channel count " + std::to_string(y.channels()) +
                             " is not a multiple of 4");
    }
    Field out(y.channels() / 4, y.height() * 2, y.width() * 2);
    for (int c = 0; c < out.channels(); ++c) {
        for (int r = 0; r < y.height(); ++r) {
            for (int xx = 0; xx < y.width(); ++xx) {
                const double ll = y(4 * c + 0, r, xx);
                const double hl = y(4 * c + 1, r, xx);
                const double lh = y(4 * c + 2, r, xx);
                const double hh = y(4 * c + 3, r, xx);
                out(c, 2 * r, 2 * xx) = 0.5 * (ll + hl + lh + hh);
                out(c, 2 * r, 2 * xx + 1) = 0.5 * (ll - hl + lh - hh);
                out(c, 2 * r + 1, 2 * xx) = 0.5 * (ll + hl - lh - hh);
                out(c, 2 * r + 1, 2 * xx + 1) = 0.5 * (ll - hl - lh + hh);
            }
        }
    }
    return out;
}

/// Two nested Haar steps applied to every sub-band: (C,H,W) -> (16C,H/4,W/4).
inline Field haar_forward_2level(const Field& x)
{
    if (x.height() % 4 != 0 || x.width() % 4 != 0) {
        throw DimensionError("haar_forward_2level: " + to_string(x.shape()) + " not divisible by 4");
    }
    return haar_forward(haar_forward(x));
}

inline Field haar_inverse_2level(const Field& y)
{
    if (y.channels() % 16 != 0) {
        throw DimensionError("haar_inverse_2level: channel count " + std::to_string(y.channels()) +
                             " is not a multiple of 16");
    }
    return haar_inverse(haar_inverse(y));
}

} // namespace ldm

#endif // LDM_GRID_HPP
