#ifndef LDM_FIELD_HPP
#define LDM_FIELD_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ldm {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shape mismatch, non-divisible resolution, or a pyramid too deep for its input.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Argument outside an operation's domain (sigma <= 0, band index out of range, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class RoutingError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Shape / Field
// ---------------------------------------------------------------------------

struct Shape {
    int channels = 1;
    int height = 1;
    int width = 1;

    [[nodiscard]] std::size_t size() const noexcept
    {
        return static_cast<std::size_t>(channels) * static_cast<std::size_t>(height) *
               static_cast<std::size_t>(width);
    }

    friend bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(const Shape& s)
{
    return "(" + std::to_string(s.channels) + "," + std::to_string(s.height) + "," +
           std::to_string(s.width) + ")";
}

/// Real-valued raster of shape (channels, height, width), row-major within
/// each channel plane, planes stored consecutively.
class Field {
public:
    Field() = default;

    explicit Field(Shape shape) : shape_(validated(shape)), values_(shape_.size(), 0.0) {}

    Field(int channels, int height, int width) : Field(Shape{channels, height, width}) {}

    Field(Shape shape, std::vector<double> values) : shape_(validated(shape)), values_(std::move(values))
    {
        if (values_.size() != shape_.size()) {
            throw DimensionError("field of shape " + to_string(shape_) + " needs " +
                                 std::to_string(shape_.size()) + " values, got " +
                                 std::to_string(values_.size()));
        }
        for (double v : values_) {
            if (!std::isfinite(v)) throw DomainError("field values must be finite");
        }
    }

    static Field constant(Shape shape, double value)
    {
        Field f(shape);
        std::fill(f.values_.begin(), f.values_.end(), value);
        return f;
    }

    [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
    [[nodiscard]] int channels() const noexcept { return shape_.channels; }
    [[nodiscard]] int height() const noexcept { return shape_.height; }
    [[nodiscard]] int width() const noexcept { return shape_.width; }
    [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
    [[nodiscard]] bool empty() const noexcept { return values_.empty(); }

    [[nodiscard]] std::span<double> values() noexcept { return values_; }
    [[nodiscard]] std::span<const double> values() const noexcept { return values_; }
    [[nodiscard]] double* data() noexcept { return values_.data(); }
    [[nodiscard]] const double* data() const noexcept { return values_.data(); }

    double& operator[](std::size_t i) noexcept { return values_[i]; }
    double operator[](std::size_t i) const noexcept { return values_[i]; }

    double& operator()(int c, int y, int x) noexcept { return values_[index(c, y, x)]; }
    double operator()(int c, int y, int x) const noexcept { return values_[index(c, y, x)]; }

    [[nodiscard]] std::size_t index(int c, int y, int x) const noexcept
    {
        return (static_cast<std::size_t>(c) * shape_.height + static_cast<std::size_t>(y)) * shape_.width +
               static_cast<std::size_t>(x);
    }

    Field& operator+=(const Field& other)
    {
        require_same_shape(other, "+=");
        for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
        return *this;
    }

    Field& operator-=(const Field& other)
    {
        require_same_shape(other, "-=");
        for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
        return *this;
    }

    Field& operator*=(double s) noexcept
    {
        for (double& v : values_) v *= s;
        return *this;
    }

    /// this += a * x
    Field& axpy(double a, const Field& x)
    {
        require_same_shape(x, "axpy");
        for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += a * x.values_[i];
        return *this;
    }

    friend Field operator+(Field a, const Field& b) { return a += b; }
    friend Field operator-(Field a, const Field& b) { return a -= b; }
    friend Field operator*(Field a, double s) { return a *= s; }
    friend Field operator*(double s, Field a) { return a *= s; }

    /// Exact element-wise equality (bit-level for finite values, modulo signed zero).
    friend bool operator==(const Field& a, const Field& b)
    {
        return a.shape_ == b.shape_ && a.values_ == b.values_;
    }

    [[nodiscard]] double squared_norm() const noexcept
    {
        double s = 0.0;
        for (double v : values_) s += v * v;
        return s;
    }

    [[nodiscard]] double norm() const noexcept { return std::sqrt(squared_norm()); }

    [[nodiscard]] double dot(const Field& other) const
    {
        require_same_shape(other, "dot");
        double s = 0.0;
        for (std::size_t i = 0; i < values_.size(); ++i) s += values_[i] * other.values_[i];
        return s;
    }

    [[nodiscard]] double max_abs() const noexcept
    {
        double m = 0.0;
        for (double v : values_) m = std::max(m, std::abs(v));
        return m;
    }

    void require_same_shape(const Field& other, const char* what) const
    {
        if (other.shape_ != shape_) {
            throw DimensionError(std::string(what) + ": shape mismatch " + to_string(shape_) + " vs " +
                                 to_string(other.shape_));
        }
    }

private:
    static Shape validated(Shape s)
    {
        if (s.channels <= 0 || s.height <= 0 || s.width <= 0) {
            throw DimensionError("field dimensions must be positive, got " + to_string(s));
        }
        return s;
    }

    Shape shape_{0, 0, 0};
    std::vector<double> values_;
};

inline double squared_distance(const Field& a, const Field& b)
{
    a.require_same_shape(b, "squared_distance");
    double s = 0.0;
    const auto av = a.values();
    const auto bv = b.values();
    for (std::size_t i = 0; i < av.size(); ++i) {
        const double d = av[i] - bv[i];
        s += d * d;
    }
    return s;
}

/// max |a-b| / max(1, max|b|)
inline double relative_max_error(const Field& a, const Field& b)
{
    a.require_same_shape(b, "relative_max_error");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m / std::max(1.0, b.max_abs());
}

// ---------------------------------------------------------------------------
// Random streams
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Seeded generator; one instance per (seed, chain, level) so that parallel
/// chains never share state.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed = 0) : engine_(splitmix64(seed)) {}

    static RngStream derive(std::uint64_t seed, std::uint64_t chain, std::uint64_t level = 0)
    {
        std::uint64_t h = splitmix64(seed);
        h = splitmix64(h ^ (chain + 0x632BE59BD9B4E019ull));
        h = splitmix64(h ^ (level + 0x8CB92BA72F3D8DD7ull));
        RngStream s;
        s.engine_.seed(h);
        return s;
    }

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }

    std::size_t index(std::size_t n)
    {
        return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
    }

    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

inline Field standard_normal(Shape shape, RngStream& rng)
{
    Field f(shape);
    for (double& v : f.values()) v = rng.normal();
    return f;
}

} // namespace ldm

#endif // LDM_FIELD_HPP
