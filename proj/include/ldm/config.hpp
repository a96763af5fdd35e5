#ifndef LDM_CONFIG_HPP
#define LDM_CONFIG_HPP

#include "ldm/dataset.hpp"
#include "ldm/field.hpp"
#include "ldm/process.hpp"
#include "ldm/sampler.hpp"
#include "ldm/schedule.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

namespace ldm {

using json = nlohmann::json;

struct RunConfig {
    std::uint64_t seed = 0;

    struct {
        int levels = 1;
        int factor = 2;
    } process;

    struct {
        double sigma_min = 0.002;
        double sigma_max = 80.0;
        double rho = 7.0;
        std::vector<double> t_star;
        std::vector<double> ramp_start;
        RampShape shape = RampShape::linear;
        double p_mean = -1.2;
        double p_std = 1.2;
        double sigma_data = 0.5;
    } schedule;

    struct {
        std::string type = "empirical"; ///< empirical | gmm | linear | mean | identity
        bool staged = false;            ///< wrap in a per-level expert router
        std::string path;               ///< linear: load instead of training
        DatasetSpec dataset;
        int pairs = 100000;
        std::vector<double> bucket_edges;
    } denoiser;

    struct {
        std::vector<int> levels; ///< coarse to fine; empty = K..1
        std::vector<int> steps{32};
        Integrator integrator = Integrator::heun;
        std::vector<double> switch_times;
        int chains = 8;
        double churn = 0.0;
        NoiseMode churn_noise = NoiseMode::isotropic;
        int record_chains = 1;
    } sampler;

    struct {
        std::vector<double> t{0.0, 0.1, 0.5, 1.0, 2.0, 5.0};
        int views = 4;             ///< number of resolutions in the pooled-noise view
        double view_sigma = 0.02;
    } forward;

    struct {
        std::string directory = "out";
        std::string format = "pgm"; ///< pgm | raw
        int bits = 8;
        bool snapshots = false;
    } output;
};

namespace detail {

inline void require_object(const json& j, const std::string& path)
{
    if (!j.is_object()) throw ConfigError((path.empty() ? std::string("config") : path) + ": expected an object");
}

inline std::string join_key(const std::string& path, const std::string& key)
{
    return path.empty() ? key : path + "." + key;
}

inline void reject_unknown(const json& j, const std::string& path, std::initializer_list<const char*> allowed)
{
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) throw ConfigError("unknown key '" + join_key(path, key) + "'");
    }
}

template <class T>
void read(const json& j, const std::string& path, const char* key, T& out)
{
    const auto it = j.find(key);
    if (it == j.end()) return;
    try {
        if constexpr (std::is_same_v<T, double>) {
            if (!it->is_number()) throw std::invalid_argument("number");
        } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
            if (!it->is_number_integer()) throw std::invalid_argument("integer");
            if constexpr (std::is_unsigned_v<T>) {
                if (it->is_number_integer() && !it->is_number_unsigned()) throw std::invalid_argument("non-negative integer");
            }
        } else if constexpr (std::is_same_v<T, bool>) {
            if (!it->is_boolean()) throw std::invalid_argument("boolean");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!it->is_string()) throw std::invalid_argument("string");
        }
        out = it->template get<T>();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(join_key(path, key) + ": expected " + e.what());
    } catch (const json::exception&) {
        throw ConfigError(join_key(path, key) + ": wrong type");
    }
}

template <class T>
void read_list(const json& j, const std::string& path, const char* key, std::vector<T>& out)
{
    const auto it = j.find(key);
    if (it == j.end()) return;
    const std::string k = join_key(path, key);
    if (!it->is_array()) throw ConfigError(k + ": expected an array");
    std::vector<T> v;
    for (std::size_t i = 0; i < it->size(); ++i) {
        const json& e = (*it)[i];
        const bool ok = std::is_integral_v<T> ? e.is_number_integer() : e.is_number();
        if (!ok) throw ConfigError(k + "[" + std::to_string(i) + "]: expected " + (std::is_integral_v<T> ? "integer" : "number"));
        v.push_back(e.get<T>());
    }
    out = std::move(v);
}

template <class E, class F>
void read_enum(const json& j, const std::string& path, const char* key, E& out, F&& parse)
{
    std::string s;
    const auto it = j.find(key);
    if (it == j.end()) return;
    read(j, path, key, s);
    try {
        out = parse(s);
    } catch (const ConfigError& e) {
        throw ConfigError(join_key(path, key) + ": " + e.what());
    }
}

inline NoiseMode noise_mode_from_string(const std::string& s)
{
    if (s == "isotropic") return NoiseMode::isotropic;
    if (s == "pyramid") return NoiseMode::pyramid;
    throw ConfigError("unknown noise mode '" + s + "' (expected isotropic or pyramid)");
}

inline std::string to_string(NoiseMode m) { return m == NoiseMode::pyramid ? "pyramid" : "isotropic"; }

} // namespace detail

inline RunConfig config_from_json(const json& j)
{
    using namespace detail;
    RunConfig c;
    require_object(j, "");
    reject_unknown(j, "", {"seed", "process", "schedule", "denoiser", "sampler", "forward", "output"});
    read(j, "", "seed", c.seed);

    if (const auto it = j.find("process"); it != j.end()) {
        const std::string p = "process";
        require_object(*it, p);
        reject_unknown(*it, p, {"levels", "factor"});
        read(*it, p, "levels", c.process.levels);
        read(*it, p, "factor", c.process.factor);
    }
    if (const auto it = j.find("schedule"); it != j.end()) {
        const std::string p = "schedule";
        require_object(*it, p);
        reject_unknown(*it, p, {"sigma_min", "sigma_max", "rho", "t_star", "ramp_start", "shape", "p_mean", "p_std",
                                "sigma_data"});
        auto& s = c.schedule;
        read(*it, p, "sigma_min", s.sigma_min);
        read(*it, p, "sigma_max", s.sigma_max);
        read(*it, p, "rho", s.rho);
        read_list(*it, p, "t_star", s.t_star);
        read_list(*it, p, "ramp_start", s.ramp_start);
        read_enum(*it, p, "shape", s.shape, ramp_shape_from_string);
        read(*it, p, "p_mean", s.p_mean);
        read(*it, p, "p_std", s.p_std);
        read(*it, p, "sigma_data", s.sigma_data);
    }
    if (const auto it = j.find("denoiser"); it != j.end()) {
        const std::string p = "denoiser";
        require_object(*it, p);
        reject_unknown(*it, p, {"type", "staged", "path", "dataset", "pairs", "bucket_edges"});
        auto& d = c.denoiser;
        read(*it, p, "type", d.type);
        read(*it, p, "staged", d.staged);
        read(*it, p, "path", d.path);
        read(*it, p, "pairs", d.pairs);
        read_list(*it, p, "bucket_edges", d.bucket_edges);
        if (const auto ds = it->find("dataset"); ds != it->end()) {
            const std::string q = "denoiser.dataset";
            require_object(*ds, q);
            reject_unknown(*ds, q, {"source", "channels", "height", "width", "count", "directory", "kind", "gmm"});
            auto& spec = d.dataset;
            read_enum(*ds, q, "source", spec.source, dataset_source_from_string);
            read(*ds, q, "channels", spec.shape.channels);
            read(*ds, q, "height", spec.shape.height);
            read(*ds, q, "width", spec.shape.width);
            read(*ds, q, "count", spec.count);
            read(*ds, q, "directory", spec.directory);
            read_enum(*ds, q, "kind", spec.kind, shape_kind_from_string);
            if (const auto g = ds->find("gmm"); g != ds->end()) {
                if (!g->is_array()) throw ConfigError(q + ".gmm: expected an array of components");
                spec.gmm.clear();
                for (std::size_t i = 0; i < g->size(); ++i) {
                    const std::string r = q + ".gmm[" + std::to_string(i) + "]";
                    require_object((*g)[i], r);
                    reject_unknown((*g)[i], r, {"weight", "mean", "variance"});
                    GmmSpec comp;
                    read((*g)[i], r, "weight", comp.weight);
                    read((*g)[i], r, "mean", comp.mean);
                    read((*g)[i], r, "variance", comp.variance);
                    spec.gmm.push_back(comp);
                }
            }
        }
    }
    if (const auto it = j.find("sampler"); it != j.end()) {
        const std::string p = "sampler";
        require_object(*it, p);
        reject_unknown(*it, p, {"levels", "steps", "integrator", "switch_times", "chains", "churn", "churn_noise",
                                "record_chains"});
        auto& s = c.sampler;
        read_list(*it, p, "levels", s.levels);
        read_list(*it, p, "steps", s.steps);
        read_enum(*it, p, "integrator", s.integrator, integrator_from_string);
        read_list(*it, p, "switch_times", s.switch_times);
        read(*it, p, "chains", s.chains);
        read(*it, p, "churn", s.churn);
        read_enum(*it, p, "churn_noise", s.churn_noise, noise_mode_from_string);
        read(*it, p, "record_chains", s.record_chains);
    }
    if (const auto it = j.find("forward"); it != j.end()) {
        const std::string p = "forward";
        require_object(*it, p);
        reject_unknown(*it, p, {"t", "views", "view_sigma"});
        read_list(*it, p, "t", c.forward.t);
        read(*it, p, "views", c.forward.views);
        read(*it, p, "view_sigma", c.forward.view_sigma);
    }
    if (const auto it = j.find("output"); it != j.end()) {
        const std::string p = "output";
        require_object(*it, p);
        reject_unknown(*it, p, {"directory", "format", "bits", "snapshots"});
        read(*it, p, "directory", c.output.directory);
        read(*it, p, "format", c.output.format);
        read(*it, p, "bits", c.output.bits);
        read(*it, p, "snapshots", c.output.snapshots);
    }
    return c;
}

inline json config_to_json(const RunConfig& c)
{
    json gmm = json::array();
    for (const auto& g : c.denoiser.dataset.gmm) gmm.push_back({{"weight", g.weight}, {"mean", g.mean}, {"variance", g.variance}});
    const auto& ds = c.denoiser.dataset;
    return {
        {"seed", c.seed},
        {"process", {{"levels", c.process.levels}, {"factor", c.process.factor}}},
        {"schedule",
         {{"sigma_min", c.schedule.sigma_min},
          {"sigma_max", c.schedule.sigma_max},
          {"rho", c.schedule.rho},
          {"t_star", c.schedule.t_star},
          {"ramp_start", c.schedule.ramp_start},
          {"shape", to_string(c.schedule.shape)},
          {"p_mean", c.schedule.p_mean},
          {"p_std", c.schedule.p_std},
          {"sigma_data", c.schedule.sigma_data}}},
        {"denoiser",
         {{"type", c.denoiser.type},
          {"staged", c.denoiser.staged},
          {"path", c.denoiser.path},
          {"pairs", c.denoiser.pairs},
          {"bucket_edges", c.denoiser.bucket_edges},
          {"dataset",
           {{"source", to_string(ds.source)},
            {"channels", ds.shape.channels},
            {"height", ds.shape.height},
            {"width", ds.shape.width},
            {"count", ds.count},
            {"directory", ds.directory},
            {"kind", to_string(ds.kind)},
            {"gmm", gmm}}}}},
        {"sampler",
         {{"levels", c.sampler.levels},
          {"steps", c.sampler.steps},
          {"integrator", to_string(c.sampler.integrator)},
          {"switch_times", c.sampler.switch_times},
          {"chains", c.sampler.chains},
          {"churn", c.sampler.churn},
          {"churn_noise", detail::to_string(c.sampler.churn_noise)},
          {"record_chains", c.sampler.record_chains}}},
        {"forward", {{"t", c.forward.t}, {"views", c.forward.views}, {"view_sigma", c.forward.view_sigma}}},
        {"output",
         {{"directory", c.output.directory},
          {"format", c.output.format},
          {"bits", c.output.bits},
          {"snapshots", c.output.snapshots}}},
    };
}

/// Canonical text: keys sorted, two-space indent.
inline std::string serialize_config(const RunConfig& c) { return config_to_json(c).dump(2); }

inline RunConfig parse_config(const std::string& text)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return config_from_json(j);
}

inline RunConfig load_config(const std::string& path)
{
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str());
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view bytes)
{
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ull;
    }
    return h;
}

/// Hash of the canonical config text with output.directory blanked, so the
/// same run written to two places hashes the same.
inline std::string config_hash(const RunConfig& c)
{
    json j = config_to_json(c);
    j["output"]["directory"] = "";
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump(2))));
    return buf;
}

// ---------------------------------------------------------------------------
// Semantic validation and builders
// ---------------------------------------------------------------------------

inline LaplacianProcess build_process(const RunConfig& c)
{
    if (c.process.levels < 1) throw ConfigError("process.levels must be >= 1");
    if (c.process.factor < 2) throw ConfigError("process.factor must be >= 2");
    if (static_cast<int>(c.schedule.t_star.size()) != c.process.levels - 1) {
        throw ConfigError("schedule.t_star must list process.levels - 1 = " + std::to_string(c.process.levels - 1) +
                          " extinction times");
    }
    if (c.process.levels == 1) {
        if (!c.schedule.ramp_start.empty()) throw ConfigError("schedule.ramp_start must be empty when process.levels = 1");
        return standard_process();
    }
    return make_process(c.process.levels, c.process.factor, c.schedule.t_star, c.schedule.ramp_start, c.schedule.shape);
}

inline std::vector<int> stage_levels(const RunConfig& c)
{
    if (!c.sampler.levels.empty()) return c.sampler.levels;
    std::vector<int> levels;
    for (int l = c.process.levels; l >= 1; --l) levels.push_back(l);
    return levels;
}

/// Everything that can be checked without touching data or files.
inline void validate_config(const RunConfig& c)
{
    const LaplacianProcess process = build_process(c);
    SigmaSchedule{c.schedule.sigma_min, c.schedule.sigma_max, c.schedule.rho}.validate();
    if (!(c.schedule.p_std >= 0.0)) throw ConfigError("schedule.p_std must be non-negative");
    if (!(c.schedule.sigma_data > 0.0)) throw ConfigError("schedule.sigma_data must be positive");

    const auto& ds = c.denoiser.dataset;
    if (ds.shape.channels < 1 || ds.shape.height < 1 || ds.shape.width < 1) {
        throw ConfigError("denoiser.dataset.channels/height/width must be positive");
    }
    try {
        require_decomposable(ds.shape, process.levels, process.factor);
    } catch (const DimensionError& e) {
        throw ConfigError(std::string("denoiser.dataset.height/width: ") + e.what());
    }
    if (ds.source == DatasetSource::image_directory && ds.directory.empty()) {
        throw ConfigError("denoiser.dataset.directory is required for source image-directory");
    }
    if (ds.source != DatasetSource::image_directory && ds.count < 1) {
        throw ConfigError("denoiser.dataset.count must be >= 1");
    }
    const std::string& type = c.denoiser.type;
    if (type != "empirical" && type != "gmm" && type != "linear" && type != "mean" && type != "identity") {
        throw ConfigError("denoiser.type: unknown '" + type + "' (expected empirical, gmm, linear, mean or identity)");
    }
    if (type != "empirical" && process.levels != 1) {
        throw ConfigError("denoiser.type: '" + type + "' supports only the standard process (process.levels = 1)");
    }
    if (type == "gmm" && ds.source != DatasetSource::synthetic_gmm) {
        throw ConfigError("denoiser.type: 'gmm' needs denoiser.dataset.source = synthetic-gmm");
    }
    if (c.denoiser.pairs < 1) throw ConfigError("denoiser.pairs must be >= 1");

    const auto levels = stage_levels(c);
    for (std::size_t j = 0; j < levels.size(); ++j) {
        const std::string key = "sampler.levels[" + std::to_string(j) + "]";
        if (levels[j] < 1 || levels[j] > process.levels) throw ConfigError(key + " out of range");
        if (j > 0 && levels[j] >= levels[j - 1]) throw ConfigError(key + " must be finer than the previous stage");
    }
    if (c.sampler.steps.size() != 1 && c.sampler.steps.size() != levels.size()) {
        throw ConfigError("sampler.steps must have one entry, or one per stage");
    }
    for (std::size_t j = 0; j < c.sampler.steps.size(); ++j) {
        if (c.sampler.steps[j] < 1) throw ConfigError("sampler.steps[" + std::to_string(j) + "] must be >= 1");
    }
    if (!c.sampler.switch_times.empty() && c.sampler.switch_times.size() + 1 != levels.size()) {
        throw ConfigError("sampler.switch_times must have one entry per stage transition");
    }
    if (c.sampler.chains < 1) throw ConfigError("sampler.chains must be >= 1");
    if (c.sampler.churn < 0.0) throw ConfigError("sampler.churn must be non-negative");
    if (c.sampler.record_chains < 0) throw ConfigError("sampler.record_chains must be non-negative");
    for (std::size_t i = 0; i < c.forward.t.size(); ++i) {
        if (!(c.forward.t[i] >= 0.0)) throw ConfigError("forward.t[" + std::to_string(i) + "] must be non-negative");
    }
    if (c.forward.views < 1) throw ConfigError("forward.views must be >= 1");
    if (!(c.forward.view_sigma >= 0.0)) throw ConfigError("forward.view_sigma must be non-negative");
    if (c.output.format != "pgm" && c.output.format != "raw") throw ConfigError("output.format must be pgm or raw");
    if (c.output.bits != 8 && c.output.bits != 16) throw ConfigError("output.bits must be 8 or 16");
    if (c.output.directory.empty()) throw ConfigError("output.directory must not be empty");
}

} // namespace ldm

#endif // LDM_CONFIG_HPP
