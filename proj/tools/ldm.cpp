#include "ldm/config.hpp"
#include "ldm/dataset.hpp"
#include "ldm/denoiser.hpp"
#include "ldm/io.hpp"
#include "ldm/linear.hpp"
#include "ldm/sampler.hpp"
#include "ldm/verify.hpp"
#include "ldm/version.hpp"

#include "CLI11.hpp"

#include <Eigen/Core>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace fs = std::filesystem;
using namespace ldm;

namespace {

enum Exit { kOk = 0, kVerifyFailed = 1, kConfigError = 2, kIoError = 3 };

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
};

// Streams that must never collide with the sampler's (seed, chain, level >= 1).
constexpr std::uint64_t kDataChain = 0;
constexpr std::uint64_t kTrainChain = 1;
constexpr std::uint64_t kEvalChain = 2;

RunConfig resolve(const Globals& g)
{
    RunConfig c = g.config.empty() ? RunConfig{} : load_config(g.config);
    if (g.seed) c.seed = *g.seed;
    if (!g.out.empty()) c.output.directory = g.out;
    validate_config(c);
    return c;
}

fs::path prepare_dir(const std::string& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory '" + dir + "'");
    return dir;
}

std::ofstream open_out(const fs::path& p)
{
    std::ofstream os(p);
    if (!os) throw IoError("cannot open '" + p.string() + "' for writing");
    os.precision(17);
    return os;
}

/// Writes `f` as PGM/PPM when the format and channel count allow, raw otherwise.
std::string write_image(const fs::path& dir, const std::string& stem, const Field& f, const RunConfig& c)
{
    if (c.output.format == "pgm" && (f.channels() == 1 || f.channels() == 3)) {
        const auto p = dir / (stem + (f.channels() == 1 ? ".pgm" : ".ppm"));
        write_pnm(p.string(), f, c.output.bits);
        return p.filename().string();
    }
    const auto p = dir / (stem + ".ldmf");
    write_field(p.string(), f);
    return p.filename().string();
}

std::string timestamp()
{
    const std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    return buf;
}

json manifest(const std::string& command, const RunConfig& c)
{
    return {{"tool", "ldm"},
            {"version", kVersion},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)},
            {"command", command},
            {"seed", c.seed},
            {"config_hash", config_hash(c)},
            {"config", config_to_json(c)},
            {"volatile", {{"generated_at", timestamp()}}}};
}

void write_manifest(const fs::path& dir, const json& m)
{
    auto os = open_out(dir / "manifest.json");
    os << m.dump(2) << '\n';
}

std::vector<Field> load_data(const RunConfig& c)
{
    RngStream rng = RngStream::derive(c.seed, kDataChain, 0);
    return build_dataset(c.denoiser.dataset, rng);
}

std::shared_ptr<const Denoiser> build_denoiser(const RunConfig& c, const std::vector<Field>& data,
                                               const LaplacianProcess& process)
{
    const std::string& type = c.denoiser.type;
    if (type == "gmm") return std::make_shared<GmmOracle>(make_gmm(c.denoiser.dataset.gmm, c.denoiser.dataset.shape));
    if (type == "mean") return std::make_shared<ConstantDenoiser>(ConstantDenoiser::dataset_mean(data));
    if (type == "identity") return std::make_shared<IdentityDenoiser>();
    if (type == "linear") {
        if (!c.denoiser.path.empty()) {
            auto d = std::make_shared<LinearDenoiser>(LinearDenoiser::load(c.denoiser.path));
            if (d->shape() != c.denoiser.dataset.shape) {
                throw ConfigError("denoiser.path: model shape " + to_string(d->shape()) + " does not match dataset " +
                                  to_string(c.denoiser.dataset.shape));
            }
            return d;
        }
        LinearTrainConfig lc{c.denoiser.bucket_edges, c.denoiser.pairs, {c.schedule.p_mean, c.schedule.p_std},
                             {c.schedule.sigma_data}};
        RngStream rng = RngStream::derive(c.seed, kTrainChain, 0);
        return std::make_shared<LinearDenoiser>(train_linear(data, lc, rng));
    }
    auto oracle = std::make_shared<DatasetOracle>(data, process);
    if (!c.denoiser.staged) return oracle;
    std::vector<std::shared_ptr<const Denoiser>> per_level(static_cast<std::size_t>(process.levels), oracle);
    return std::make_shared<ExpertRouter>(ExpertRouter::staged(process, per_level));
}

/// Reference points at `level` for nearest-atom distances.
std::vector<Field> atoms_at(const RunConfig& c, const std::vector<Field>& data, const LaplacianProcess& process,
                            int level)
{
    std::vector<Field> out;
    if (c.denoiser.type == "gmm") {
        for (const auto& g : c.denoiser.dataset.gmm) out.push_back(Field::constant(c.denoiser.dataset.shape, g.mean));
    } else {
        for (const Field& x : data) out.push_back(downsample_n(x, process.factor, level - 1));
    }
    return out;
}

std::pair<std::size_t, double> nearest(const Field& x, const std::vector<Field>& atoms)
{
    std::size_t best = 0;
    double d = kInfinity;
    for (std::size_t j = 0; j < atoms.size(); ++j) {
        const double e = std::sqrt(squared_distance(x, atoms[j]) / static_cast<double>(x.size()));
        if (e < d) {
            d = e;
            best = j;
        }
    }
    return {best, d};
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

int cmd_decompose(const Globals& g, const std::string& input, std::optional<int> levels, std::optional<int> factor)
{
    const RunConfig c = resolve(g);
    const int k = levels.value_or(c.process.levels);
    const int f = factor.value_or(c.process.factor);
    if (k < 1) throw ConfigError("--levels must be >= 1");
    if (f < 2) throw ConfigError("--factor must be >= 2");
    const Field x = read_any(input);
    const Pyramid p = laplacian_decompose(x, k, f);
    const fs::path dir = prepare_dir(c.output.directory);

    auto csv = open_out(dir / "bands.csv");
    csv << "band,channels,height,width,view_scale,image,raw\n";
    for (int i = 0; i < k; ++i) {
        const Field& band = p.bands[static_cast<std::size_t>(i)];
        const std::string stem = "band_" + std::to_string(i + 1);
        const bool residual = i + 1 < k;
        const ResidualView view = residual ? residual_view(band) : ResidualView{band, 1.0};
        const std::string image = write_image(dir, stem, view.image, c);
        write_field((dir / (stem + ".ldmf")).string(), band);
        csv << i + 1 << ',' << band.channels() << ',' << band.height() << ',' << band.width() << ',' << view.scale
            << ',' << image << ',' << stem << ".ldmf\n";
        std::cout << "band " << i + 1 << ' ' << to_string(band.shape())
                  << (residual ? "  residual, shown as value/" + std::to_string(view.scale) + " around mid-gray" : "")
                  << '\n';
    }
    const double err = relative_max_error(laplacian_reconstruct(p), x);
    std::cout << "max reconstruction error: " << err << '\n';
    json m = manifest("decompose", c);
    m["input"] = input;
    m["levels"] = k;
    m["factor"] = f;
    m["reconstruction_error"] = err;
    write_manifest(dir, m);
    return kOk;
}

int cmd_forward(const Globals& g, const std::string& input)
{
    const RunConfig c = resolve(g);
    const LaplacianProcess process = build_process(c);
    const Field x = read_any(input);
    require_decomposable(x.shape(), process.levels, process.factor);
    const fs::path dir = prepare_dir(c.output.directory);

    auto csv = open_out(dir / "forward.csv");
    csv << "index,t,sigma,snr,image\n";
    for (std::size_t i = 0; i < c.forward.t.size(); ++i) {
        const double t = c.forward.t[i];
        RngStream rng = RngStream::derive(c.seed, i, 1);
        const DiffusionState s = forward_noise(x, t, process, rng);
        char stem[32];
        std::snprintf(stem, sizeof stem, "forward_%03zu", i);
        const std::string image = write_image(dir, stem, s.field, c);
        write_field((dir / (std::string(stem) + ".ldmf")).string(), s.field);
        csv << i << ',' << t << ',' << s.sigma << ',' << snr(s, x, process) << ',' << image << '\n';
    }

    // One noisy image x + view_sigma * eps seen at successively pooled
    // resolutions: the pooled noise std halves with every 2x step.
    RngStream rng = RngStream::derive(c.seed, c.forward.t.size(), 1);
    Field noisy = x;
    noisy.axpy(c.forward.view_sigma, standard_normal(x.shape(), rng));
    auto views = open_out(dir / "views.csv");
    views << "height,width,noise_std,image\n";
    Field clean = x;
    for (int v = 0; v < c.forward.views; ++v) {
        if (v > 0) {
            if (noisy.height() % 2 != 0 || noisy.width() % 2 != 0) break;
            noisy = downsample(noisy, 2);
            clean = downsample(clean, 2);
        }
        const Field residual = noisy - clean;
        const double std = std::sqrt(residual.squared_norm() / static_cast<double>(residual.size()));
        const std::string stem = "view_" + std::to_string(noisy.height()) + "x" + std::to_string(noisy.width());
        views << noisy.height() << ',' << noisy.width() << ',' << std << ',' << write_image(dir, stem, noisy, c)
              << '\n';
    }
    json m = manifest("forward", c);
    m["input"] = input;
    write_manifest(dir, m);
    std::cout << "wrote " << c.forward.t.size() << " noised images and views to " << dir.string() << '\n';
    return kOk;
}

int cmd_sample(const Globals& g)
{
    const RunConfig c = resolve(g);
    const LaplacianProcess process = build_process(c);
    const std::vector<Field> data = load_data(c);
    const auto denoiser = build_denoiser(c, data, process);

    SamplerConfig sc;
    sc.process = process;
    sc.shape = c.denoiser.dataset.shape;
    sc.integrator = c.sampler.integrator;
    sc.rho = c.schedule.rho;
    sc.sigma_min = c.schedule.sigma_min;
    sc.churn = c.sampler.churn;
    sc.churn_noise = c.sampler.churn_noise;
    sc.stages = plan_stages(process, stage_levels(c), c.schedule.sigma_max, c.sampler.steps, denoiser,
                            c.sampler.switch_times);

    const int record = std::min(c.sampler.record_chains, c.sampler.chains);
    const CascadeRun run = sample_chains(sc, c.seed, c.sampler.chains, g.threads, record, {true, true});
    const fs::path dir = prepare_dir(c.output.directory);

    json files = json::array();
    const auto atoms = atoms_at(c, data, process, 1);
    auto csv = open_out(dir / "samples.csv");
    csv << "chain,image,nearest_atom,rms_distance\n";
    for (std::size_t i = 0; i < run.samples.size(); ++i) {
        char stem[32];
        std::snprintf(stem, sizeof stem, "sample_%05zu", i);
        const std::string image = write_image(dir, stem, run.samples[i], c);
        const auto [atom, dist] = nearest(run.samples[i], atoms);
        csv << i << ',' << image << ',' << atom << ',' << dist << '\n';
        files.push_back(image);
    }

    std::map<int, std::vector<Field>> level_atoms;
    for (int l = 1; l <= process.levels; ++l) level_atoms[l] = atoms_at(c, data, process, l);
    for (std::size_t i = 0; i < run.trajectories.size(); ++i) {
        const Trajectory& tr = run.trajectories[i];
        char name[48];
        std::snprintf(name, sizeof name, "trajectory_%05zu.csv", i);
        auto tcsv = open_out(dir / name);
        tcsv << "stage,step,sigma,level,norm,nearest_rms_distance\n";
        for (const TrajectoryPoint& p : tr.points) {
            const double d = c.denoiser.type == "gmm" && p.level != 1 ? NAN : nearest(p.snapshot, level_atoms[p.level]).second;
            tcsv << p.stage << ',' << p.step << ',' << p.sigma << ',' << p.level << ',' << p.norm << ',' << d << '\n';
            if (c.output.snapshots) {
                char stem[64];
                std::snprintf(stem, sizeof stem, "chain%05zu_stage%d_step%03d", i, p.stage, p.step);
                write_image(dir, stem, p.snapshot, c);
            }
        }
    }

    json m = manifest("sample", c);
    json stages = json::array();
    for (const Stage& s : sc.stages) {
        stages.push_back({{"level", s.level}, {"sigma_entry", s.sigma_entry}, {"sigma_exit", s.sigma_exit},
                          {"steps", s.steps}});
    }
    m["stages"] = stages;
    m["chains"] = c.sampler.chains;
    m["samples"] = files;
    write_manifest(dir, m);
    std::cout << "sampled " << c.sampler.chains << " chains over " << sc.stages.size() << " stage(s) into "
              << dir.string() << " (config " << config_hash(c) << ")\n";
    return kOk;
}

int cmd_train_linear(const Globals& g)
{
    const RunConfig c = resolve(g);
    if (c.process.levels != 1) throw ConfigError("process.levels must be 1 for train-linear");
    const std::vector<Field> data = load_data(c);
    LinearTrainConfig lc{c.denoiser.bucket_edges, c.denoiser.pairs, {c.schedule.p_mean, c.schedule.p_std},
                         {c.schedule.sigma_data}};
    RngStream rng = RngStream::derive(c.seed, kTrainChain, 0);
    const LinearDenoiser linear = train_linear(data, lc, rng);
    const fs::path dir = prepare_dir(c.output.directory);
    linear.save((dir / "linear.bin").string());

    const DatasetOracle mmse(data, standard_process());
    const ConstantDenoiser mean = ConstantDenoiser::dataset_mean(data);
    const IdentityDenoiser identity;
    auto csv = open_out(dir / "losses.csv");
    csv << "sigma,mmse,linear,mean,identity,sandwich\n";
    bool all = true;
    const int n = 2000;
    for (double sigma : {0.05, 0.1, 0.25, 0.5, 1.0, 2.0, 5.0}) {
        // Same held-out draws for every denoiser.
        const std::uint64_t draw_seed = RngStream::derive(c.seed, kEvalChain, 0).engine()() ^ std::hash<double>{}(sigma);
        auto loss = [&](const Denoiser& d) {
            RngStream r(draw_seed);
            return eval_loss(d, data, sigma, n, r);
        };
        const double lm = loss(mmse);
        const double ll = loss(linear);
        const double lmean = loss(mean);
        const double lid = loss(identity);
        const bool ok = lm <= ll && ll <= lmean;
        all = all && ok;
        csv << sigma << ',' << lm << ',' << ll << ',' << lmean << ',' << lid << ',' << (ok ? "yes" : "no") << '\n';
    }
    std::size_t pairs = 0;
    for (const auto& b : linear.buckets()) pairs += b.pairs;
    json m = manifest("train-linear", c);
    m["pairs"] = pairs;
    m["ridge"] = linear.ridge_used();
    write_manifest(dir, m);
    std::cout << "trained " << linear.buckets().size() << " bucket(s) on " << pairs << " pairs"
              << (linear.ridge_used() ? "; normal equations were singular, ridge applied" : "") << '\n'
              << "sandwich mmse <= linear <= mean " << (all ? "holds" : "does not hold") << " on held-out draws\n";
    return kOk;
}

std::map<std::string, Bounds> parse_overrides(const std::vector<std::string>& specs)
{
    std::map<std::string, Bounds> out;
    const auto checks = verification_checks();
    for (const std::string& s : specs) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("--tolerance expects NAME=HI or NAME=LO:HI, got '" + s + "'");
        const std::string name = s.substr(0, eq);
        const std::string value = s.substr(eq + 1);
        Bounds b{-kInfinity, 0.0};
        for (const Check& ch : checks) {
            if (ch.name == name) b.lo = ch.lo;
        }
        try {
            const auto colon = value.find(':');
            if (colon == std::string::npos) {
                b.hi = std::stod(value);
            } else {
                b.lo = std::stod(value.substr(0, colon));
                b.hi = std::stod(value.substr(colon + 1));
            }
        } catch (const std::exception&) {
            throw ConfigError("--tolerance: cannot parse '" + value + "' for check '" + name + "'");
        }
        out[name] = b;
    }
    return out;
}

int cmd_verify(const Globals& g, const std::vector<std::string>& only, const std::vector<std::string>& tolerances,
               bool list, const std::string& report)
{
    if (list) {
        for (const Check& c : verification_checks()) std::cout << c.name << '\t' << c.description << '\n';
        return kOk;
    }
    std::vector<std::string> selector;
    for (const std::string& s : only) {
        std::stringstream ss(s);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (!item.empty()) selector.push_back(item);
        }
    }
    const auto overrides = parse_overrides(tolerances);
    const CheckContext ctx{g.seed.value_or(0), g.threads};
    bool header = false;
    const auto results = run_checks(selector, overrides, ctx, [&header](const CheckResult& r) {
        if (!std::exchange(header, true)) std::cout << "name\tmeasured\tlo\thi\tresult\tseconds\tdetail\n";
        std::cout << r.name << '\t' << r.measured << '\t' << r.lo << '\t' << r.hi << '\t' << (r.pass ? "PASS" : "FAIL")
                  << '\t' << r.seconds << '\t' << r.detail << std::endl;
    });
    bool ok = true;
    json arr = json::array();
    for (const auto& r : results) {
        ok = ok && r.pass;
        arr.push_back({{"name", r.name},
                       {"measured", std::isfinite(r.measured) ? json(r.measured) : json(std::to_string(r.measured))},
                       {"lo", std::isfinite(r.lo) ? json(r.lo) : json(nullptr)},
                       {"hi", r.hi},
                       {"pass", r.pass},
                       {"seconds", r.seconds},
                       {"detail", r.detail}});
    }
    if (!report.empty()) {
        auto os = open_out(report);
        os << json{{"version", kVersion}, {"seed", ctx.seed}, {"checks", arr}, {"pass", ok}}.dump(2) << '\n';
    }
    std::cout << (ok ? "all checks passed" : "verification FAILED") << std::endl;
    return ok ? kOk : kVerifyFailed;
}

int cmd_dataset_gen(const Globals& g)
{
    const RunConfig c = resolve(g);
    const std::vector<Field> data = load_data(c);
    const fs::path dir = prepare_dir(c.output.directory);
    const auto paths = write_dataset(data, dir.string(), c.output.format, c.output.bits);
    json m = manifest("dataset-gen", c);
    json files = json::array();
    for (const auto& p : paths) files.push_back(fs::path(p).filename().string());
    m["files"] = files;
    write_manifest(dir, m);
    std::cout << "wrote " << paths.size() << " images to " << dir.string() << '\n';
    return kOk;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Laplacian diffusion: pyramid transforms, forward noising, cascaded sampling and verification"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    std::uint64_t seed = 0;
    app.add_option("--config", g.config, "run configuration (JSON)");
    auto* seed_opt = app.add_option("--seed", seed, "random seed (overrides the config)");
    app.add_option("--out", g.out, "output directory (overrides output.directory)");
    app.add_option("--threads", g.threads, "worker threads for sampling")->check(CLI::PositiveNumber);

    std::string input;
    std::optional<int> levels;
    std::optional<int> factor;
    auto* dec = app.add_subcommand("decompose", "split an image into Laplacian bands");
    dec->add_option("input", input, "PGM/PPM or .ldmf image")->required();
    dec->add_option("--levels", levels, "number of bands (default process.levels)");
    dec->add_option("--factor", factor, "resolution factor between bands (default process.factor)");

    auto* fwd = app.add_subcommand("forward", "noise an image at the configured times");
    fwd->add_option("input", input, "PGM/PPM or .ldmf image")->required();

    auto* smp = app.add_subcommand("sample", "run the cascaded sampler");
    auto* trn = app.add_subcommand("train-linear", "fit the preconditioned linear denoiser");

    std::vector<std::string> only;
    std::vector<std::string> tolerances;
    bool list = false;
    std::string report;
    auto* ver = app.add_subcommand("verify", "run the invariant suite");
    ver->add_option("--only", only, "comma-separated check names");
    ver->add_option("--tolerance", tolerances, "override bounds: NAME=HI or NAME=LO:HI");
    ver->add_flag("--list", list, "list checks and exit");
    ver->add_option("--report", report, "also write a JSON report to this file");

    auto* gen = app.add_subcommand("dataset-gen", "materialize the configured dataset as images");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }
    if (*seed_opt) g.seed = seed;

    try {
        if (*dec) return cmd_decompose(g, input, levels, factor);
        if (*fwd) return cmd_forward(g, input);
        if (*smp) return cmd_sample(g);
        if (*trn) return cmd_train_linear(g);
        if (*ver) return cmd_verify(g, only, tolerances, list, report);
        if (*gen) return cmd_dataset_gen(g);
    } catch (const IoError& e) {
        std::cerr << "ldm: I/O error: " << e.what() << '\n';
        return kIoError;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "ldm: I/O error: " << e.what() << '\n';
        return kIoError;
    } catch (const ConfigError& e) {
        std::cerr << "ldm: config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const Error& e) {
        std::cerr << "ldm: error: " << e.what() << '\n';
        return kConfigError;
    }
    return kConfigError;
}
