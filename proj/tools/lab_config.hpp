#pragma once

#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "kfp/fk.hpp"
#include "kfp/force.hpp"
#include "kfp/geometry.hpp"
#include "kfp/kernel.hpp"

namespace lab {

using json = nlohmann::json;

// Validation failure; the message starts with the dotted field path.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Typed reader over one JSON object that remembers which keys were read, so
// leftovers can be rejected as unknown.
class Fields {
public:
    Fields(const json& obj, std::string path);

    double number(const std::string& key, double fallback, double lo, double hi, bool openLo = false);
    double number(const std::string& key, double lo, double hi, bool openLo = false);  // required
    long integer(const std::string& key, long fallback, long lo, long hi);
    std::string text(const std::string& key, const std::string& fallback, const std::set<std::string>& allowed = {});
    bool flag(const std::string& key, bool fallback);
    std::vector<double> numbers(const std::string& key, std::vector<double> fallback, double lo, double hi);
    bool has(const std::string& key) const { return obj_.contains(key); }
    const json& raw(const std::string& key);
    std::string at(const std::string& key) const { return path_ + "." + key; }
    void finish() const;

private:
    const json& obj_;
    std::string path_;
    std::set<std::string> seen_;
};

struct Model {
    int dim = 1;
    kfp::GaussianKernelSpec kernel;
    kfp::ForceFieldSpec force;
};

// A phase function referenced by name or given as a constant.
struct NamedFunction {
    std::string name;
    kfp::PhaseFunction fn;
    double sup = 0.0;  // sup norm over the phase space
};

NamedFunction parse_function(const json& v, const std::string& path);

Model parse_model(const json& v, const std::string& path);
kfp::DomainSpec parse_domain(const json& v, const std::string& path, int dim);
kfp::PhaseVector parse_point(const json& v, const std::string& path, int dim);

inline const std::set<std::string> kExperiments = {"kernel-checks", "bound",   "simulate", "fk",
                                                   "reversibility", "harnack", "grid",     "verify-all"};

// The resolved configuration of one run.
struct RunConfig {
    std::string name;
    std::string experiment;
    json model;   // kept raw; parsed by the runner that needs it
    json domain;
    json params;
    std::uint64_t seed = 1;
};

struct LabConfig {
    std::string experiment;
    std::uint64_t seed = 1;
    int workers = 0;
    std::string output = "out";
    std::vector<RunConfig> runs;  // one entry unless verify-all
    json canonical;               // hashed form: no workers, no output path
};

LabConfig parse_config(const json& doc);
std::string sha256_hex(const std::string& bytes);

}  // namespace lab
