#ifndef LDM_IO_HPP
#define LDM_IO_HPP

#include "ldm/field.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace ldm {

namespace detail {

template <class T>
void write_le(std::ostream& os, T v)
{
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <class T>
T read_le(std::istream& is)
{
    unsigned char buf[sizeof(T)] = {};
    is.read(reinterpret_cast<char*>(buf), sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
}

// Next header token of a PNM file, skipping whitespace and '#' comments.
inline std::string pnm_token(std::istream& is)
{
    std::string tok;
    int c = is.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = is.get();
        } else if (std::isspace(c)) {
            c = is.get();
        } else {
            break;
        }
    }
    while (c != EOF && !std::isspace(c) && c != '#') {
        tok.push_back(static_cast<char>(c));
        c = is.get();
    }
    // The single whitespace after maxval is consumed here; a '#' is pushed back.
    if (c == '#') is.unget();
    return tok;
}

inline int pnm_int(std::istream& is, const std::string& path, const char* what)
{
    const std::string tok = pnm_token(is);
    try {
        std::size_t used = 0;
        const int v = std::stoi(tok, &used);
        if (used != tok.size() || v <= 0) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw IoError("'" + path + "': bad " + what + " '" + tok + "' in header");
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// PGM / PPM
// ---------------------------------------------------------------------------

/// Sample value v in [0, maxval] maps to 2 v / maxval - 1 in [-1, 1].
inline double sample_to_value(unsigned v, unsigned maxval) { return 2.0 * v / maxval - 1.0; }

inline unsigned value_to_sample(double x, unsigned maxval)
{
    const double s = std::round((x + 1.0) * 0.5 * maxval);
    return static_cast<unsigned>(std::clamp(s, 0.0, static_cast<double>(maxval)));
}

/// Snaps every value to the nearest representable level of a `maxval` image.
inline Field quantize(const Field& x, unsigned maxval)
{
    Field q = x;
    for (double& v : q.values()) v = sample_to_value(value_to_sample(v, maxval), maxval);
    return q;
}

/// Reads binary P5 (1 channel) or P6 (3 channels), 8 or 16 bit.
inline Field read_pnm(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "'");
    const std::string magic = detail::pnm_token(is);
    int channels = 0;
    if (magic == "P5") channels = 1;
    else if (magic == "P6") channels = 3;
    else throw IoError("'" + path + "' is not a binary PGM/PPM (magic '" + magic + "')");
    const int width = detail::pnm_int(is, path, "width");
    const int height = detail::pnm_int(is, path, "height");
    const int maxval = detail::pnm_int(is, path, "maxval");
    if (maxval > 65535) throw IoError("'" + path + "': maxval " + std::to_string(maxval) + " exceeds 65535");
    const bool wide = maxval > 255;

    const std::size_t count = static_cast<std::size_t>(width) * height * channels;
    std::vector<unsigned char> raw(count * (wide ? 2 : 1));
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(is.gcount()) != raw.size()) throw IoError("'" + path + "' is truncated");

    Field f(channels, height, width);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            for (int c = 0; c < channels; ++c) {
                const std::size_t i = (static_cast<std::size_t>(y) * width + x) * channels + c;
                const unsigned v = wide ? (raw[2 * i] << 8u) | raw[2 * i + 1] : raw[i];
                if (v > static_cast<unsigned>(maxval)) throw IoError("'" + path + "': sample exceeds maxval");
                f(c, y, x) = sample_to_value(v, static_cast<unsigned>(maxval));
            }
        }
    }
    return f;
}

/// Writes a 1- or 3-channel field as P5/P6 with `bits` = 8 or 16. Values are
/// clamped to [-1, 1] before quantization.
inline void write_pnm(const std::string& path, const Field& f, int bits = 8)
{
    if (f.channels() != 1 && f.channels() != 3) {
        throw DimensionError("PGM/PPM needs 1 or 3 channels, field has " + std::to_string(f.channels()));
    }
    if (bits != 8 && bits != 16) throw ConfigError("output.bits must be 8 or 16");
    const unsigned maxval = bits == 8 ? 255u : 65535u;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    os << (f.channels() == 1 ? "P5" : "P6") << '\n' << f.width() << ' ' << f.height() << '\n' << maxval << '\n';
    std::vector<unsigned char> raw;
    raw.reserve(f.size() * (bits / 8));
    for (int y = 0; y < f.height(); ++y) {
        for (int x = 0; x < f.width(); ++x) {
            for (int c = 0; c < f.channels(); ++c) {
                const unsigned v = value_to_sample(f(c, y, x), maxval);
                if (bits == 16) raw.push_back(static_cast<unsigned char>(v >> 8u));
                raw.push_back(static_cast<unsigned char>(v & 0xffu));
            }
        }
    }
    os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!os) throw IoError("write to '" + path + "' failed");
}

/// Signed residual shown around mid-gray: value / scale, with scale the
/// largest magnitude (1 for an all-zero field).
struct ResidualView {
    Field image;
    double scale = 1.0;
};

inline ResidualView residual_view(const Field& residual)
{
    const double m = residual.max_abs();
    ResidualView v{residual, m > 0.0 ? m : 1.0};
    v.image *= 1.0 / v.scale;
    return v;
}

// ---------------------------------------------------------------------------
// Raw sidecar
// ---------------------------------------------------------------------------

// Layout, little-endian:
//   char[8] "LDMFLD01"
//   u32 channels, u32 height, u32 width
//   f64 values[channels*height*width], channel-major then row-major
inline constexpr char kFieldMagic[8] = {'L', 'D', 'M', 'F', 'L', 'D', '0', '1'};

inline void write_field(const std::string& path, const Field& f)
{
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    os.write(kFieldMagic, 8);
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(f.channels()));
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(f.height()));
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(f.width()));
    for (double v : f.values()) detail::write_le(os, v);
    if (!os) throw IoError("write to '" + path + "' failed");
}

inline Field read_field(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "'");
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kFieldMagic, 8) != 0) throw IoError("'" + path + "' is not a raw field file");
    Shape s;
    s.channels = static_cast<int>(detail::read_le<std::uint32_t>(is));
    s.height = static_cast<int>(detail::read_le<std::uint32_t>(is));
    s.width = static_cast<int>(detail::read_le<std::uint32_t>(is));
    if (!is || s.channels <= 0 || s.height <= 0 || s.width <= 0) throw IoError("'" + path + "' has a corrupt header");
    std::vector<double> v(s.size());
    for (double& x : v) x = detail::read_le<double>(is);
    if (!is) throw IoError("'" + path + "' is truncated");
    try {
        return Field(s, std::move(v));
    } catch (const Error& e) {
        throw IoError("'" + path + "': " + e.what());
    }
}

/// Reads a PGM/PPM or a raw field, chosen by extension.
inline Field read_any(const std::string& path)
{
    const auto dot = path.rfind('.');
    const std::string ext = dot == std::string::npos ? "" : path.substr(dot);
    if (ext == ".ldmf") return read_field(path);
    return read_pnm(path);
}

} // namespace ldm

#endif // LDM_IO_HPP
