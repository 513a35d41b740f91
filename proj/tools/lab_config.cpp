#include "lab_config.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include <openssl/evp.h>

namespace lab {

namespace {

std::string show(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

[[noreturn]] void fail(const std::string& path, const std::string& msg) { throw ConfigError(path + ": " + msg); }

}  // namespace

Fields::Fields(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) fail(path_, "must be an object");
}

const json& Fields::raw(const std::string& key) {
    seen_.insert(key);
    if (!obj_.contains(key)) fail(at(key), "is required");
    return obj_.at(key);
}

double Fields::number(const std::string& key, double lo, double hi, bool openLo) {
    const json& v = raw(key);
    if (!v.is_number()) fail(at(key), "must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x) || x > hi || x < lo || (openLo && x == lo)) {
        fail(at(key), "must lie in " + std::string(openLo ? "(" : "[") + show(lo) + ", " + show(hi) + "] (got " + show(x) + ")");
    }
    return x;
}

double Fields::number(const std::string& key, double fallback, double lo, double hi, bool openLo) {
    if (!obj_.contains(key)) {
        seen_.insert(key);
        return fallback;
    }
    return number(key, lo, hi, openLo);
}

long Fields::integer(const std::string& key, long fallback, long lo, long hi) {
    seen_.insert(key);
    if (!obj_.contains(key)) return fallback;
    const json& v = obj_.at(key);
    if (!v.is_number_integer()) fail(at(key), "must be an integer");
    const long x = v.get<long>();
    if (x < lo || x > hi) fail(at(key), "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "] (got " + std::to_string(x) + ")");
    return x;
}

std::string Fields::text(const std::string& key, const std::string& fallback, const std::set<std::string>& allowed) {
    seen_.insert(key);
    if (!obj_.contains(key)) {
        if (fallback.empty()) fail(at(key), "is required");
        return fallback;
    }
    const json& v = obj_.at(key);
    if (!v.is_string()) fail(at(key), "must be a string");
    const std::string s = v.get<std::string>();
    if (!allowed.empty() && !allowed.count(s)) {
        std::string list;
        for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
        fail(at(key), "must be one of {" + list + "} (got \"" + s + "\")");
    }
    return s;
}

bool Fields::flag(const std::string& key, bool fallback) {
    seen_.insert(key);
    if (!obj_.contains(key)) return fallback;
    if (!obj_.at(key).is_boolean()) fail(at(key), "must be true or false");
    return obj_.at(key).get<bool>();
}

std::vector<double> Fields::numbers(const std::string& key, std::vector<double> fallback, double lo, double hi) {
    seen_.insert(key);
    if (!obj_.contains(key)) return fallback;
    const json& v = obj_.at(key);
    if (!v.is_array() || v.empty()) fail(at(key), "must be a non-empty array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const std::string p = at(key) + "[" + std::to_string(i) + "]";
        if (!v[i].is_number()) fail(p, "must be a number");
        const double x = v[i].get<double>();
        if (!std::isfinite(x) || x < lo || x > hi) fail(p, "must lie in [" + show(lo) + ", " + show(hi) + "] (got " + show(x) + ")");
        out.push_back(x);
    }
    return out;
}

void Fields::finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it)
        if (!seen_.count(it.key())) fail(at(it.key()), "unknown key");
}

NamedFunction parse_function(const json& v, const std::string& path) {
    NamedFunction out;
    if (v.is_number()) {
        const double c = v.get<double>();
        if (!std::isfinite(c)) fail(path, "must be finite");
        out.name = show(c);
        out.fn = [c](const kfp::PhaseVector&) { return c; };
        out.sup = std::abs(c);
        return out;
    }
    if (!v.is_string()) fail(path, "must be a function name or a number");
    out.name = v.get<std::string>();
    if (out.name == "zero") {
        out.fn = [](const kfp::PhaseVector&) { return 0.0; };
        out.sup = 0.0;
    } else if (out.name == "one") {
        out.fn = [](const kfp::PhaseVector&) { return 1.0; };
        out.sup = 1.0;
    } else if (out.name == "bump") {
        // exp(-|q|^2 - |p|^2 / 2)
        out.fn = [](const kfp::PhaseVector& z) { return std::exp(-kfp::dot(z.q, z.q) - 0.5 * kfp::dot(z.p, z.p)); };
        out.sup = 1.0;
    } else if (out.name == "smooth") {
        // 0.5 + 0.3 q1 + 0.2 sin(p1) cos(q1); on |q1| <= 1 its range is [0, 1].
        out.fn = [](const kfp::PhaseVector& z) { return 0.5 + 0.3 * z.q[0] + 0.2 * std::sin(z.p[0]) * std::cos(z.q[0]); };
        out.sup = 1.0;
    } else if (out.name == "right-wall") {
        out.fn = [](const kfp::PhaseVector& z) { return z.q[0] > 0.0 ? 1.0 : 0.0; };
        out.sup = 1.0;
    } else {
        fail(path, "unknown function \"" + out.name + "\" (zero, one, bump, smooth, right-wall or a number)");
    }
    return out;
}

Model parse_model(const json& v, const std::string& path) {
    Fields m(v, path);
    Model out;
    out.dim = static_cast<int>(m.integer("d", 1, 1, 3));
    out.kernel.dim = out.dim;
    out.kernel.gamma = m.number("gamma", 0.0, -5.0, 5.0);
    out.kernel.sigma = m.number("sigma", 1.0, 0.0, 10.0, true);
    out.kernel.alpha = m.number("alpha", 0.5, 0.0, 1.0, true);
    if (m.has("force")) {
        Fields f(m.raw("force"), m.at("force"));
        const std::string kind = f.text("kind", "zero", {"zero", "linear", "sine", "tabulated"});
        if (kind == "linear") {
            out.force = kfp::ForceFieldSpec::linear(f.number("k", -100.0, 100.0));
        } else if (kind == "sine") {
            out.force = kfp::ForceFieldSpec::sine(f.number("amplitude", -100.0, 100.0));
        } else if (kind == "tabulated") {
            const double lo = f.number("lo", -1e6, 1e6);
            const double hi = f.number("hi", -1e6, 1e6);
            if (!(hi > lo)) fail(f.at("hi"), "must exceed lo");
            auto table = f.numbers("table", {}, -1e6, 1e6);
            if (table.size() < 2) fail(f.at("table"), "needs at least 2 values");
            out.force = kfp::ForceFieldSpec::tabulated(lo, hi, std::move(table));
        }
        f.finish();
    }
    m.finish();
    return out;
}

kfp::DomainSpec parse_domain(const json& v, const std::string& path, int dim) {
    Fields f(v, path);
    const std::string kind = f.text("kind", "interval", {"interval", "ball"});
    kfp::DomainSpec dom;
    if (kind == "interval") {
        if (dim != 1) fail(path + ".kind", "interval domains need model.d = 1");
        const double a = f.number("a", -1.0, -1e6, 1e6);
        const double b = f.number("b", 1.0, -1e6, 1e6);
        if (!(b > a)) fail(f.at("b"), "must exceed a");
        dom = kfp::DomainSpec::interval(a, b);
    } else {
        auto center = f.numbers("center", std::vector<double>(static_cast<std::size_t>(dim), 0.0), -1e6, 1e6);
        if (static_cast<int>(center.size()) != dim) fail(f.at("center"), "must have model.d entries");
        dom = kfp::DomainSpec::ball(std::move(center), f.number("radius", 1.0, 0.0, 1e6, true));
    }
    f.finish();
    return dom;
}

kfp::PhaseVector parse_point(const json& v, const std::string& path, int dim) {
    Fields f(v, path);
    const auto q = f.numbers("q", {}, -1e6, 1e6);
    const auto p = f.numbers("p", {}, -1e6, 1e6);
    if (static_cast<int>(q.size()) != dim) fail(f.at("q"), "must have model.d entries");
    if (static_cast<int>(p.size()) != dim) fail(f.at("p"), "must have model.d entries");
    f.finish();
    return {q, p};
}

namespace {

RunConfig parse_run(const json& v, const std::string& path, const std::string& experiment, std::uint64_t seed) {
    Fields f(v, path);
    RunConfig run;
    run.experiment = experiment.empty() ? f.text("experiment", "", kExperiments) : experiment;
    if (experiment.empty() && run.experiment == "verify-all") fail(f.at("experiment"), "verify-all cannot be nested");
    run.name = f.text("name", run.experiment);
    for (char c : run.name)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_')) fail(f.at("name"), "use letters, digits, - and _");
    run.model = f.has("model") ? f.raw("model") : json::object();
    run.domain = f.has("domain") ? f.raw("domain") : json::object();
    run.params = f.has("params") ? f.raw("params") : json::object();
    run.seed = seed;
    f.finish();
    return run;
}

}  // namespace

LabConfig parse_config(const json& doc) {
    Fields top(doc, "config");
    LabConfig cfg;
    cfg.experiment = top.text("experiment", "", kExperiments);
    const long seed = top.integer("seed", 1, 0, (1L << 62));
    cfg.seed = static_cast<std::uint64_t>(seed);
    cfg.workers = static_cast<int>(top.integer("workers", 0, 0, 1024));
    cfg.output = top.text("output", "out");
    if (cfg.experiment == "verify-all") {
        const json& runs = top.raw("runs");
        if (!runs.is_array() || runs.empty()) fail("config.runs", "must be a non-empty array");
        std::set<std::string> names;
        for (std::size_t i = 0; i < runs.size(); ++i) {
            const std::string path = "config.runs[" + std::to_string(i) + "]";
            RunConfig run = parse_run(runs[i], path, "", cfg.seed + 1000003ULL * i);
            if (!names.insert(run.name).second) fail(path + ".name", "duplicate run name \"" + run.name + "\"");
            cfg.runs.push_back(std::move(run));
        }
    } else {
        RunConfig run;
        run.experiment = cfg.experiment;
        run.name = cfg.experiment;
        run.model = top.has("model") ? top.raw("model") : json::object();
        run.domain = top.has("domain") ? top.raw("domain") : json::object();
        run.params = top.has("params") ? top.raw("params") : json::object();
        run.seed = cfg.seed;
        cfg.runs.push_back(std::move(run));
    }
    top.finish();
    cfg.canonical = doc;
    cfg.canonical.erase("workers");
    cfg.canonical.erase("output");
    cfg.canonical["seed"] = cfg.seed;
    return cfg;
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) != 1 || EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
        EVP_MD_CTX_free(ctx);
        throw std::runtime_error("sha256 failed");
    }
    EVP_MD_CTX_free(ctx);
    std::string hex;
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", digest[i]);
        hex += buf;
    }
    return hex;
}

}  // namespace lab
