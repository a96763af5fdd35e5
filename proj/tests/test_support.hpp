#ifndef LDM_TEST_SUPPORT_HPP
#define LDM_TEST_SUPPORT_HPP

#include "ldm/field.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <initializer_list>
#include <ostream>
#include <vector>

namespace ldm {

// Readable gtest failure output for fields.
inline void PrintTo(const Field& f, std::ostream* os)
{
    *os << to_string(f.shape()) << " [";
    for (std::size_t i = 0; i < f.size() && i < 8; ++i) *os << (i ? ", " : "") << f[i];
    if (f.size() > 8) *os << ", ...";
    *os << "]";
}

} // namespace ldm

namespace ldm::testing {

inline Field field_2d(std::initializer_list<std::initializer_list<double>> rows)
{
    const int h = static_cast<int>(rows.size());
    const int w = static_cast<int>(rows.begin()->size());
    std::vector<double> v;
    for (const auto& r : rows) v.insert(v.end(), r.begin(), r.end());
    return Field({1, h, w}, std::move(v));
}

inline Field scalar_field(double v) { return Field({1, 1, 1}, {v}); }

inline Field random_field(Shape s, RngStream& rng, double scale = 1.0)
{
    Field f = standard_normal(s, rng);
    f *= scale;
    return f;
}

inline void expect_fields_near(const Field& a, const Field& b, double tol)
{
    ASSERT_EQ(a.shape(), b.shape());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "at index " << i;
}

struct Moments {
    double mean = 0.0;
    double var = 0.0;
};

inline Moments moments(const std::vector<double>& v)
{
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return {m, s / static_cast<double>(v.size() - 1)};
}

} // namespace ldm::testing

#endif
