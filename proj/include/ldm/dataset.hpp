#ifndef LDM_DATASET_HPP
#define LDM_DATASET_HPP

#include "ldm/denoiser.hpp"
#include "ldm/field.hpp"
#include "ldm/grid.hpp"
#include "ldm/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

namespace ldm {

enum class DatasetSource { image_directory, synthetic_gmm, synthetic_shapes };
enum class ShapeKind { checkerboard, blob, gradient, mixed };

inline std::string to_string(DatasetSource s)
{
    switch (s) {
    case DatasetSource::image_directory: return "image-directory";
    case DatasetSource::synthetic_gmm: return "synthetic-gmm";
    case DatasetSource::synthetic_shapes: return "synthetic-shapes";
    }
    return "synthetic-shapes";
}

inline DatasetSource dataset_source_from_string(const std::string& s)
{
    if (s == "image-directory") return DatasetSource::image_directory;
    if (s == "synthetic-gmm") return DatasetSource::synthetic_gmm;
    if (s == "synthetic-shapes") return DatasetSource::synthetic_shapes;
    throw ConfigError("unknown dataset source '" + s + "' (expected image-directory, synthetic-gmm or synthetic-shapes)");
}

inline std::string to_string(ShapeKind k)
{
    switch (k) {
    case ShapeKind::checkerboard: return "checkerboard";
    case ShapeKind::blob: return "blob";
    case ShapeKind::gradient: return "gradient";
    case ShapeKind::mixed: return "mixed";
    }
    return "mixed";
}

inline ShapeKind shape_kind_from_string(const std::string& s)
{
    if (s == "checkerboard") return ShapeKind::checkerboard;
    if (s == "blob") return ShapeKind::blob;
    if (s == "gradient") return ShapeKind::gradient;
    if (s == "mixed") return ShapeKind::mixed;
    throw ConfigError("unknown shape kind '" + s + "' (expected checkerboard, blob, gradient or mixed)");
}

/// One isotropic component with a constant mean image.
struct GmmSpec {
    double weight = 1.0;
    double mean = 0.0;
    double variance = 0.25;
};

struct DatasetSpec {
    DatasetSource source = DatasetSource::synthetic_shapes;
    Shape shape{1, 32, 32};
    int count = 4;
    std::string directory;     ///< image-directory only
    ShapeKind kind = ShapeKind::mixed;
    std::vector<GmmSpec> gmm{{1.0, 0.0, 0.25}};
};

inline GmmOracle make_gmm(const std::vector<GmmSpec>& spec, Shape shape)
{
    std::vector<GmmComponent> comps;
    for (const GmmSpec& g : spec) comps.push_back({g.weight, Field::constant(shape, g.mean), g.variance});
    return GmmOracle(std::move(comps));
}

// ---------------------------------------------------------------------------
// Synthetic shapes, values in [-1, 1]
// ---------------------------------------------------------------------------

inline Field make_checkerboard(Shape s, int cell, bool phase, double amplitude)
{
    Field f(s);
    for (int c = 0; c < s.channels; ++c) {
        for (int y = 0; y < s.height; ++y) {
            for (int x = 0; x < s.width; ++x) {
                const bool on = (((y / cell) + (x / cell)) % 2 == 0) != phase;
                f(c, y, x) = on ? amplitude : -amplitude;
            }
        }
    }
    return f;
}

inline Field make_blob(Shape s, double cy, double cx, double radius, double amplitude)
{
    Field f(s);
    for (int c = 0; c < s.channels; ++c) {
        for (int y = 0; y < s.height; ++y) {
            for (int x = 0; x < s.width; ++x) {
                const double dy = (y + 0.5 - cy) / radius;
                const double dx = (x + 0.5 - cx) / radius;
                f(c, y, x) = -1.0 + (amplitude + 1.0) * std::exp(-0.5 * (dy * dy + dx * dx));
            }
        }
    }
    return f;
}

inline Field make_gradient(Shape s, double angle, double amplitude)
{
    Field f(s);
    const double ca = std::cos(angle);
    const double sa = std::sin(angle);
    const double norm = 0.5 * (std::abs(ca) * s.width + std::abs(sa) * s.height);
    for (int c = 0; c < s.channels; ++c) {
        for (int y = 0; y < s.height; ++y) {
            for (int x = 0; x < s.width; ++x) {
                const double u = (ca * (x + 0.5 - 0.5 * s.width) + sa * (y + 0.5 - 0.5 * s.height)) / norm;
                f(c, y, x) = amplitude * u;
            }
        }
    }
    return f;
}

inline Field make_shape(ShapeKind kind, Shape s, RngStream& rng)
{
    if (kind == ShapeKind::mixed) kind = static_cast<ShapeKind>(rng.index(3));
    const double amplitude = 0.5 + 0.5 * rng.uniform();
    switch (kind) {
    case ShapeKind::checkerboard: {
        const int max_cell = std::max(1, std::min(s.height, s.width) / 2);
        int cell = 1;
        while (cell * 2 <= max_cell && rng.uniform() < 0.6) cell *= 2;
        return make_checkerboard(s, cell, rng.uniform() < 0.5, amplitude);
    }
    case ShapeKind::blob:
        return make_blob(s, s.height * (0.25 + 0.5 * rng.uniform()), s.width * (0.25 + 0.5 * rng.uniform()),
                         0.1 * std::min(s.height, s.width) * (1.0 + 2.0 * rng.uniform()), amplitude);
    case ShapeKind::gradient:
    case ShapeKind::mixed:
        break;
    }
    return make_gradient(s, 2.0 * std::numbers::pi * rng.uniform(), amplitude);
}

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

/// Brings an image to `target`: channel count by replication (1 -> 3) or
/// averaging (3 -> 1), size by integer block averaging.
inline Field conform(const Field& img, Shape target, const std::string& name)
{
    Field x = img;
    if (x.channels() != target.channels) {
        if (x.channels() == 1) {
            Field r(target.channels, x.height(), x.width());
            for (int c = 0; c < target.channels; ++c) {
                for (int y = 0; y < x.height(); ++y) {
                    for (int i = 0; i < x.width(); ++i) r(c, y, i) = x(0, y, i);
                }
            }
            x = std::move(r);
        } else if (target.channels == 1) {
            Field r(1, x.height(), x.width());
            for (int c = 0; c < x.channels(); ++c) {
                for (int y = 0; y < x.height(); ++y) {
                    for (int i = 0; i < x.width(); ++i) r(0, y, i) += x(c, y, i) / x.channels();
                }
            }
            x = std::move(r);
        } else {
            throw DimensionError(name + ": cannot map " + std::to_string(x.channels()) + " channels to " +
                                 std::to_string(target.channels));
        }
    }
    if (x.height() == target.height && x.width() == target.width) return x;
    const int fy = x.height() / target.height;
    if (fy < 2 || x.height() != fy * target.height || x.width() != fy * target.width) {
        throw DimensionError(name + ": " + to_string(img.shape()) + " is not an integer multiple of " +
                             to_string(target));
    }
    return downsample(x, fy);
}

inline std::vector<Field> load_image_directory(const std::string& dir, Shape target)
{
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw IoError("dataset directory '" + dir + "' does not exist");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        const auto ext = e.path().extension().string();
        if (e.is_regular_file() && (ext == ".pgm" || ext == ".ppm" || ext == ".ldmf")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("no .pgm, .ppm or .ldmf files in '" + dir + "'");
    std::vector<Field> out;
    for (const auto& p : files) out.push_back(conform(read_any(p.string()), target, p.string()));
    return out;
}

/// Materializes `spec`. Image directories ignore `count` and `rng`.
inline std::vector<Field> build_dataset(const DatasetSpec& spec, RngStream& rng)
{
    if (spec.source == DatasetSource::image_directory) return load_image_directory(spec.directory, spec.shape);
    if (spec.count < 1) throw ConfigError("denoiser.dataset.count must be >= 1");
    std::vector<Field> out;
    out.reserve(static_cast<std::size_t>(spec.count));
    if (spec.source == DatasetSource::synthetic_gmm) {
        const GmmOracle g = make_gmm(spec.gmm, spec.shape);
        for (int i = 0; i < spec.count; ++i) out.push_back(g.sample(rng));
    } else {
        for (int i = 0; i < spec.count; ++i) out.push_back(make_shape(spec.kind, spec.shape, rng));
    }
    return out;
}

/// Writes `data` as 00000.<ext>, 00001.<ext>, ... into `dir`.
inline std::vector<std::string> write_dataset(const std::vector<Field>& data, const std::string& dir,
                                              const std::string& format, int bits)
{
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::vector<std::string> paths;
    for (std::size_t i = 0; i < data.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "%05zu", i);
        std::string path = (fs::path(dir) / name).string();
        if (format == "raw") {
            path += ".ldmf";
            write_field(path, data[i]);
        } else {
            path += data[i].channels() == 3 ? ".ppm" : ".pgm";
            write_pnm(path, data[i], bits);
        }
        paths.push_back(path);
    }
    return paths;
}

} // namespace ldm

#endif // LDM_DATASET_HPP
