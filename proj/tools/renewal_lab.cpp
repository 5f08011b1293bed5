// renewal-lab: reproducible experiment runner for random matrix products,
// transfer-operator scans and renewal-rate probes. Every subcommand reads a
// config file, runs one experiment, and emits CSV artifacts plus a metadata
// sidecar. Identical configs produce byte-identical CSV bodies, independent
// of --workers.

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "renlab/runner.hpp"

namespace {

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw renlab::ConfigError("cannot open config '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"renewal-lab experiment runner"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    long long seed_override = -1;
    int workers = 0;
    bool quiet = false;

    const std::vector<std::string> subcommands = {
        "lyapunov",        "stationary",     "proximal-cert", "diophantine-scan",
        "resolvent-scan",  "dolgopyat-probe", "renewal-rate",  "fourier-check",
        "regularity-probe", "tauberian-check"};
    for (const auto& name : subcommands) {
        auto* sub = app.add_subcommand(name, "run the " + name + " experiment");
        sub->add_option("--config", config_path, "config file path")->required();
        sub->add_option("--seed", seed_override, "override the config seed");
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--workers", workers,
                        "worker threads (must not change results)");
        sub->add_flag("--quiet", quiet, "suppress progress output");
    }

    CLI11_PARSE(app, argc, argv);

    try {
        auto cfg = renlab::parse_config(read_file(config_path));
        cfg.experiment = app.get_subcommands()[0]->get_name();
        if (seed_override >= 0) {
            cfg.seed = static_cast<std::uint64_t>(seed_override);
            cfg.seed_set = true;
        }
        if (workers > 0) cfg.workers = workers;
        if (!out_dir.empty()) {
            cfg.out_dir = out_dir;
        } else if (cfg.out_dir.empty()) {
            const char* env = std::getenv("RENEWAL_LAB_OUT");
            cfg.out_dir = env ? env : "out";
        }
        renlab::run_and_write(cfg, quiet);
        return 0;
    } catch (const renlab::Error& e) {
        std::cerr << "error category=" << static_cast<int>(e.category())
                  << " what=" << e.what() << "\n";
        return static_cast<int>(e.category());
    } catch (const std::exception& e) {
        std::cerr << "error category=1 what=" << e.what() << "\n";
        return 1;
    }
}
