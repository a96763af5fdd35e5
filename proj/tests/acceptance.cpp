// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
#include "ldm/verify.hpp"

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <string>
#include <thread>
#include <vector>

using namespace ldm;

namespace {

struct Criterion {
    int number;
    std::string title;
    std::vector<std::string> checks;
    double max_seconds; // summed over its checks; <= 0 means no limit
};

} // namespace

int main()
{
    const std::vector<Criterion> criteria{
        {1, "pyramid exactness", {"pyramid-roundtrip"}, 5.0},
        {2, "Haar shape and invertibility", {"haar"}, 0.0},
        {3, "pooled-noise variance", {"pooled-noise"}, 0.0},
        {4, "resolution-switch identity", {"switch-identity"}, 0.0},
        {5, "single-stage reduction to the reference sampler", {"edm-reduction"}, 0.0},
        {6, "score vs finite differences", {"score-fd"}, 0.0},
        {7, "MMSE optimality", {"mmse-optimality"}, 0.0},
        {8, "sampler convergence order", {"convergence-euler", "convergence-heun"}, 0.0},
        {9, "mode recovery", {"mode-split", "mode-recovery"}, 30.0},
        {10, "cascade consistency", {"cascade-consistency"}, 0.0},
        {11, "Wiener recovery", {"wiener"}, 0.0},
    };

    const CheckContext ctx{0, static_cast<int>(std::max(1u, std::thread::hardware_concurrency()))};
    std::map<std::string, CheckResult> results;
    for (const CheckResult& r : run_checks({}, {}, ctx, nullptr)) results[r.name] = r;

    int failed = 0;
    for (const Criterion& c : criteria) {
        bool pass = true;
        double seconds = 0.0;
        std::string detail;
        for (const std::string& name : c.checks) {
            const auto it = results.find(name);
            if (it == results.end()) {
                pass = false;
                detail += name + " missing; ";
                continue;
            }
            const CheckResult& r = it->second;
            pass = pass && r.pass;
            seconds += r.seconds;
            char buf[160];
            std::snprintf(buf, sizeof buf, "%s=%.4g in [%.3g, %.3g]; ", name.c_str(), r.measured, r.lo, r.hi);
            detail += buf;
        }
        if (c.max_seconds > 0.0 && seconds > c.max_seconds) {
            pass = false;
            detail += "too slow; ";
        }
        failed += pass ? 0 : 1;
        std::printf("%s %2d %s: %s%.2fs\n", pass ? "PASS" : "FAIL", c.number, c.title.c_str(), detail.c_str(),
                    seconds);
    }

    // The shipped CLI must run the whole suite in under five minutes and exit 0.
    const auto start = std::chrono::steady_clock::now();
    const int status = std::system((std::string(LDM_CLI_PATH) + " verify > /dev/null").c_str());
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    const bool pass = code == 0 && seconds < 300.0;
    failed += pass ? 0 : 1;
    std::printf("%s 12 verify command: exit %d in %.2fs (limit 300s)\n", pass ? "PASS" : "FAIL", code, seconds);
    std::fflush(stdout);
    return failed == 0 ? 0 : 1;
}
