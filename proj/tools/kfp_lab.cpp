#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <boost/version.hpp>
#include <openssl/crypto.h>

#include "kfp/parallel.hpp"
#include "lab_config.hpp"
#include "lab_runs.hpp"

namespace fs = std::filesystem;
using lab::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitInvalid = 2;
constexpr int kExitCheckFailed = 3;

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw lab::ConfigError("config: cannot read " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw lab::ConfigError("config: " + path + " is not valid JSON (" + e.what() + ")");
    }
}

struct Options {
    std::string configPath;
    std::optional<long> seed;
    int workers = 0;
    std::string out;
};

int run(const std::string& subcommand, const Options& opt) {
    const auto start = std::chrono::steady_clock::now();
    json doc = read_json(opt.configPath);
    if (!doc.is_object()) throw lab::ConfigError("config: must be a JSON object");
    if (opt.seed) doc["seed"] = *opt.seed;
    const lab::LabConfig cfg = lab::parse_config(doc);
    if (cfg.experiment != subcommand)
        throw lab::ConfigError("config.experiment: \"" + cfg.experiment + "\" does not match subcommand " + subcommand);

    std::vector<lab::PreparedRun> prepared;
    for (const auto& r : cfg.runs) {
        try {
            prepared.push_back(lab::prepare_run(r));
        } catch (const lab::ConfigError& e) {
            if (cfg.experiment != "verify-all") throw;
            throw lab::ConfigError("config.runs[" + r.name + "]." + e.what());
        }
    }

    const std::string hash = lab::sha256_hex(cfg.canonical.dump());
    const int workers = kfp::resolve_workers(opt.workers > 0 ? opt.workers : cfg.workers);
    const fs::path outDir = opt.out.empty() ? fs::path(cfg.output) : fs::path(opt.out);
    fs::create_directories(outDir);

    const bool verify = cfg.experiment == "verify-all";
    std::ofstream summary(outDir / (verify ? "verify.csv" : "checks.csv"));
    summary << "run,experiment,check,value,relation,threshold,pass,config_hash\n";
    bool allPass = true;
    json files = json::array();
    for (std::size_t i = 0; i < cfg.runs.size(); ++i) {
        const auto& r = cfg.runs[i];
        const fs::path dir = verify ? outDir / r.name : outDir;
        fs::create_directories(dir);
        const lab::RunResult res = prepared[i]({dir.string(), hash, workers});
        for (const auto& f : res.files) files.push_back(verify ? r.name + "/" + f : f);
        for (const auto& c : res.checks) {
            allPass = allPass && c.pass;
            summary << r.name << ',' << r.experiment << ',' << c.name << ',' << lab::num(c.value) << ',' << c.relation << ','
                    << lab::num(c.threshold) << ',' << (c.pass ? 1 : 0) << ',' << hash << '\n';
            std::cout << (c.pass ? "PASS " : "FAIL ") << r.name << ' ' << c.name << " = " << lab::num(c.value) << ' '
                      << c.relation << ' ' << lab::num(c.threshold) << '\n';
        }
    }
    summary.close();

    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const json manifest = {{"experiment", cfg.experiment},
                           {"config_hash", hash},
                           {"seed", cfg.seed},
                           {"workers", workers},
                           {"files", files},
                           {"checks_passed", allPass},
                           {"versions",
                            {{"compiler", __VERSION__},
                             {"boost", BOOST_LIB_VERSION},
                             {"openssl", OpenSSL_version(OPENSSL_VERSION)},
                             {"cxx", __cplusplus}}},
                           {"wall_time_s", wall}};
    std::ofstream(outDir / "manifest.json") << manifest.dump(2) << '\n';
    return verify && !allPass ? kExitCheckFailed : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Numerical lab for Langevin dynamics absorbed at a position boundary"};
    app.require_subcommand(1);
    Options opt;
    for (const auto& name : lab::kExperiments) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", opt.configPath, "JSON configuration file")->required();
        sub->add_option("--seed", opt.seed, "overrides the config seed")->check(CLI::NonNegativeNumber);
        sub->add_option("--workers", opt.workers, "worker threads (default: config, then KFP_LAB_WORKERS, then 1)")
            ->check(CLI::Range(1, 1024));
        sub->add_option("--out", opt.out, "output directory (default: config output)");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitInvalid;
    }
    try {
        return run(app.get_subcommands().front()->get_name(), opt);
    } catch (const lab::ConfigError& e) {
        std::cerr << "invalid config: " << e.what() << '\n';
        return kExitInvalid;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid config: " << e.what() << '\n';
        return kExitInvalid;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitError;
    }
}
