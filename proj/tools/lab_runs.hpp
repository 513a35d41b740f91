#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lab_config.hpp"

namespace lab {

struct Check {
    std::string name;
    double value = 0.0;
    double threshold = 0.0;
    std::string relation;  // how value is compared with threshold
    bool pass = false;
};

struct RunContext {
    std::string outDir;
    std::string hash;
    int workers = 1;
};

struct RunResult {
    std::vector<Check> checks;
    std::vector<std::string> files;
};

// Parsing and validation happen here, so a bad field fails before any work.
using PreparedRun = std::function<RunResult(const RunContext&)>;
PreparedRun prepare_run(const RunConfig& run);

// Shortest round-trip text of a double, identical on every run.
std::string num(double v);

}  // namespace lab
