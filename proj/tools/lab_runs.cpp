#include "lab_runs.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

#include "kfp/bound.hpp"
#include "kfp/fk.hpp"
#include "kfp/grid.hpp"
#include "kfp/harnack.hpp"
#include "kfp/parallel.hpp"
#include "kfp/sde.hpp"

namespace lab {

std::string num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

namespace {

namespace fs = std::filesystem;

class Csv {
public:
    Csv(const RunContext& ctx, const std::string& file, std::vector<std::string> header, RunResult& result)
        : hash_(ctx.hash), os_(fs::path(ctx.outDir) / file) {
        if (!os_) throw std::runtime_error("cannot write " + (fs::path(ctx.outDir) / file).string());
        result.files.push_back(file);
        header.push_back("config_hash");
        line(header);
    }
    void row(std::vector<std::string> cells) {
        cells.push_back(hash_);
        line(cells);
    }

private:
    void line(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) os_ << (i ? "," : "") << cells[i];
        os_ << '\n';
    }
    std::string hash_;
    std::ofstream os_;
};

Check at_most(std::string name, double value, double threshold) {
    return {std::move(name), value, threshold, "<=", value <= threshold};
}

Check at_least(std::string name, double value, double threshold) {
    return {std::move(name), value, threshold, ">=", value >= threshold};
}

void write_checks(const RunContext& ctx, const std::string& file, const std::vector<Check>& checks, RunResult& result) {
    Csv csv(ctx, file, {"check", "value", "relation", "threshold", "pass"}, result);
    for (const auto& c : checks) csv.row({c.name, num(c.value), c.relation, num(c.threshold), c.pass ? "1" : "0"});
}

void require_empty(const json& v, const std::string& path, const std::string& experiment) {
    if (!v.is_object() || !v.empty()) throw ConfigError(path + ": not used by " + experiment);
}

kfp::SchemeKind parse_scheme(Fields& f) {
    return kfp::scheme_from_string(f.text("scheme", "splitting", {"splitting", "eulerMaruyama", "perturbed"}));
}

std::vector<kfp::PhaseVector> parse_points(Fields& f, const std::string& key, int dim) {
    const json& v = f.raw(key);
    if (!v.is_array() || v.empty()) throw ConfigError(f.at(key) + ": must be a non-empty array of points");
    std::vector<kfp::PhaseVector> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(parse_point(v[i], f.at(key) + "[" + std::to_string(i) + "]", dim));
    return out;
}

void point_cells(std::vector<std::string>& cells, const kfp::PhaseVector& x) {
    for (double v : x.q) cells.push_back(num(v));
    for (double v : x.p) cells.push_back(num(v));
}

void point_header(std::vector<std::string>& cells, const std::string& prefix, int dim) {
    for (int i = 0; i < dim; ++i) cells.push_back(prefix + "q" + std::to_string(i + 1));
    for (int i = 0; i < dim; ++i) cells.push_back(prefix + "p" + std::to_string(i + 1));
}

void require_inside(const kfp::DomainSpec& dom, const kfp::PhaseVector& x, const std::string& path) {
    if (!(kfp::signed_distance(dom, x.q) > 0.0)) throw ConfigError(path + ": must lie inside the domain");
}

// --- kernel-checks -----------------------------------------------------------

using mp = boost::multiprecision::cpp_bin_float_50;

struct CovBlock {
    mp cqq, cqp, cpp;
};

// Per-component covariance of (q, p) at time t, integrated by hand.
CovBlock covariance_block(double gamma, double sigma, double t) {
    const mp g(gamma), s2 = mp(sigma) * sigma, tt(t);
    if (gamma == 0.0) return {s2 * tt * tt * tt / 3, s2 * tt * tt / 2, s2 * tt};
    const mp e1 = exp(-g * tt), e2 = exp(-2 * g * tt);
    return {s2 / (g * g) * (tt - 2 * (1 - e1) / g + (1 - e2) / (2 * g)), s2 * (1 - 2 * e1 + e2) / (2 * g * g),
            s2 * (1 - e2) / (2 * g)};
}

PreparedRun prepare_kernel_checks(const RunConfig& run) {
    const Model model = parse_model(run.model, "model");
    require_empty(run.domain, "domain", run.experiment);
    Fields f(run.params, "params");
    const long samples = f.integer("samples", 10000, 1, 10000000);
    const double tMin = f.number("tMin", 1e-3, 0.0, 1e3, true);
    const double tMax = f.number("tMax", 10.0, tMin, 1e3);
    const double gammaMax = f.number("gammaMax", 2.0, 0.0, 5.0);
    const double sigmaMin = f.number("sigmaMin", 0.2, 0.0, 10.0, true);
    const double sigmaMax = f.number("sigmaMax", 3.0, sigmaMin, 10.0);
    const double formTol = f.number("formTolerance", 1e-9, 0.0, 1.0, true);
    const double shapeTol = f.number("shapeTolerance", 1e-12, 0.0, 1.0, true);
    const double quadTol = f.number("quadratureTolerance", 1e-4, 0.0, 1.0, true);
    f.finish();
    if (!(model.kernel.alpha < 1.0)) throw ConfigError("model.alpha: kernel-checks needs alpha < 1");
    const std::uint64_t seed = run.seed;

    return [=](const RunContext& ctx) {
        RunResult result;
        kfp::RngStream rng(seed, 0);
        const auto uniform = [&](double a, double b) { return a + (b - a) * rng.uniform(); };

        // Closed-form quadratic form against the inverse of the covariance
        // blocks, which are integrated directly in 50 digits.
        double formErr = 0.0;
        for (long n = 0; n < samples; ++n) {
            const int d = 1 + static_cast<int>(n % 3);
            const double t = std::exp(uniform(std::log(tMin), std::log(tMax)));
            const kfp::GaussianKernelSpec spec{d, uniform(-gammaMax, gammaMax), uniform(sigmaMin, sigmaMax), 1.0};
            const CovBlock c = covariance_block(spec.gamma, spec.sigma, t);
            std::vector<double> v(static_cast<std::size_t>(2 * d));
            for (auto& e : v) e = uniform(-1.0, 1.0);
            mp ref = 0;
            for (int i = 0; i < d; ++i) {
                const mp dq = v[static_cast<std::size_t>(i)], dp = v[static_cast<std::size_t>(d + i)];
                ref += (c.cpp * dq * dq - 2 * c.cqp * dq * dp + c.cqq * dp * dp) / (c.cqq * c.cpp - c.cqp * c.cqp);
            }
            const double dense = ref.convert_to<double>();
            formErr = std::max(formErr, std::abs(kfp::quadratic_form(spec, t, v) - dense) / dense);
        }
        result.checks.push_back(at_most("quadratic-form-rel-err", formErr, formTol));

        double shapeErr = 0.0;
        for (int k = -500; k <= 500; ++k) {
            const double r = k / 100.0;
            const kfp::ShapeValues s = kfp::eval_shape_functions(r);
            shapeErr = std::max(shapeErr, std::abs(s.phi1 + 0.5 * r * s.phi3 - 1.0));
        }
        result.checks.push_back(at_most("shape-identity-abs-err", shapeErr, shapeTol));

        using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
        const auto integrate2 = [](auto&& fn, double qa, double qb, double pa, double pb) {
            return GK::integrate(
                [&](double q) { return GK::integrate([&](double p) { return fn(q, p); }, pa, pb, 12, 1e-12); }, qa, qb, 12,
                1e-12);
        };
        const kfp::GaussianKernelSpec spec{1, model.kernel.gamma, model.kernel.sigma, model.kernel.alpha};
        const double w = std::max(1.0, spec.sigma) * (1.0 + std::abs(spec.gamma));

        // Mass over the backward variable: int p^(alpha)_t(x, y) dx = e^{gamma t}.
        const double t = 0.8;
        const kfp::PhaseVector y = kfp::PhaseVector::one_d(0.2, 0.3);
        const double mass = integrate2(
            [&](double q, double p) { return kfp::density_alpha(spec, t, kfp::PhaseVector::one_d(q, p), y); }, -12 * w,
            12 * w, -25 * w, 25 * w);
        result.checks.push_back(at_most("alpha-mass-rel-err", std::abs(mass * std::exp(-spec.gamma * t) - 1.0), quadTol));

        const double tt = 0.9, u = tt / 3;
        const kfp::PhaseVector x = kfp::PhaseVector::one_d(0.1, 0.5), yy = kfp::PhaseVector::one_d(0.4, 0.2);
        const double ck = integrate2(
            [&](double q, double p) {
                const kfp::PhaseVector z = kfp::PhaseVector::one_d(q, p);
                return kfp::density_alpha(spec, u, x, z) * kfp::density_alpha(spec, tt - u, z, yy);
            },
            -4 * w, 4 * w, -8 * w, 8 * w);
        result.checks.push_back(
            at_most("chapman-kolmogorov-rel-err", std::abs(ck / kfp::density_alpha(spec, tt, x, yy) - 1.0), quadTol));

        write_checks(ctx, "kernel_checks.csv", result.checks, result);
        return result;
    };
}

// --- bound -------------------------------------------------------------------

PreparedRun prepare_bound(const RunConfig& run) {
    const Model model = parse_model(run.model, "model");
    const kfp::DomainSpec dom = parse_domain(run.domain, "domain", model.dim);
    Fields f(run.params, "params");
    const auto times = f.numbers("t", {0.1, 0.5}, 1e-8, 1e3);
    const kfp::PhaseVector x = parse_point(f.raw("x"), "params.x", model.dim);
    const auto points = parse_points(f, "points", model.dim);
    const std::string form = f.text("series", "proof", {"proof", "printed"});
    f.finish();
    if (!(model.kernel.alpha < 1.0)) throw ConfigError("model.alpha: the bound needs alpha < 1");
    const double tMax = *std::max_element(times.begin(), times.end());
    const kfp::ParametrixBoundSpec spec = kfp::make_bound_spec(
        model.kernel, model.force.sup_norm(dom), tMax, form == "proof" ? kfp::SeriesForm::Proof : kfp::SeriesForm::AsPrinted);

    return [=](const RunContext& ctx) {
        RunResult result;
        std::vector<std::string> header{"t"};
        point_header(header, "x_", model.dim);
        point_header(header, "y_", model.dim);
        for (const char* h : {"bound", "log_bound", "series_sum", "tail", "terms"}) header.emplace_back(h);
        Csv csv(ctx, "bound.csv", header, result);
        bool finite = true;
        for (double t : times)
            for (const auto& y : points) {
                const kfp::BoundValue b = kfp::evaluate_bound(spec, t, x, y);
                finite = finite && std::isfinite(b.logValue) && b.value >= 0.0;
                std::vector<std::string> cells{num(t)};
                point_cells(cells, x);
                point_cells(cells, y);
                for (double v : {b.value, b.logValue, b.seriesSum, b.truncationTail}) cells.push_back(num(v));
                cells.push_back(std::to_string(b.termsUsed));
                csv.row(cells);
            }
        result.checks.push_back(at_least("bound-finite", finite ? 1.0 : 0.0, 1.0));
        return result;
    };
}

// --- simulate ----------------------------------------------------------------

PreparedRun prepare_simulate(const RunConfig& run) {
    const Model model = parse_model(run.model, "model");
    const kfp::DomainSpec dom = parse_domain(run.domain, "domain", model.dim);
    Fields f(run.params, "params");
    const kfp::PhaseVector x = parse_point(f.raw("x"), "params.x", model.dim);
    kfp::SimConfig cfg;
    cfg.horizon = f.number("t", 0.0, 1e4, true);
    cfg.dt = f.number("dt", 1e-3, 0.0, 10.0, true);
    cfg.scheme = parse_scheme(f);
    cfg.epsilon = f.number("epsilon", 0.0, 0.0, 10.0);
    cfg.classifyTol = f.number("classifyTol", 0.0, 0.0, 10.0);
    cfg.seed = run.seed;
    const long n = f.integer("nPaths", 10000, 1, 100000000);
    const long dump = f.integer("dumpPaths", 0, 0, 10000);
    const long every = f.integer("recordEvery", 10, 1, 1000000);
    const double minPlus = f.number("minGammaPlus", 0.999, 0.0, 1.0);
    f.finish();
    if (cfg.scheme == kfp::SchemeKind::Perturbed && !(cfg.epsilon > 0.0))
        throw ConfigError("params.epsilon: the perturbed scheme needs epsilon > 0");
    if (kfp::signed_distance(dom, x.q) < 0.0) throw ConfigError("params.x: must lie in the closed domain");
    const auto N = static_cast<std::size_t>(n);

    return [=](const RunContext& ctx) {
        RunResult result;
        kfp::SimConfig c = cfg;
        c.workerCount = ctx.workers;
        const kfp::Simulator sim(model.force, model.kernel, dom, c);
        struct Tally {
            std::size_t absorbed = 0, plus = 0, zero = 0, minus = 0;
            double tauSum = 0.0;
        };
        std::vector<Tally> tallies(kfp::chunk_count(N));
        kfp::parallel_chunks(N, ctx.workers, [&](std::size_t chunk, std::size_t begin, std::size_t end) {
            Tally& t = tallies[chunk];
            for (std::size_t i = begin; i < end; ++i) {
                kfp::PathRng rng(c.seed, i);
                const auto rec = sim.simulate(x, rng);
                if (!rec.absorbed) continue;
                ++t.absorbed;
                t.tauSum += rec.tau;
                if (rec.exitClass.cls == kfp::BoundaryClass::GammaPlus) ++t.plus;
                else if (rec.exitClass.cls == kfp::BoundaryClass::GammaZero) ++t.zero;
                else ++t.minus;
            }
        });
        Tally all;
        for (const auto& t : tallies) {
            all.absorbed += t.absorbed;
            all.plus += t.plus;
            all.zero += t.zero;
            all.minus += t.minus;
            all.tauSum += t.tauSum;
        }
        const double surv = 1.0 - static_cast<double>(all.absorbed) / N;
        Csv csv(ctx, "simulate.csv",
                {"scheme", "dt", "t", "n_paths", "absorbed", "survival", "survival_se", "gamma_plus", "gamma_zero",
                 "gamma_minus", "mean_tau_absorbed"},
                result);
        csv.row({kfp::to_string(c.scheme), num(sim.dt()), num(c.horizon), std::to_string(N), std::to_string(all.absorbed),
                 num(surv), num(std::sqrt(surv * (1 - surv) / N)), std::to_string(all.plus), std::to_string(all.zero),
                 std::to_string(all.minus), num(all.absorbed ? all.tauSum / all.absorbed : 0.0)});
        if (dump > 0) {
            kfp::SimConfig rc = c;
            rc.recordEvery = static_cast<int>(every);
            const kfp::Simulator recSim(model.force, model.kernel, dom, rc);
            std::ofstream os(fs::path(ctx.outDir) / "paths.jsonl");
            for (long i = 0; i < std::min<long>(dump, n); ++i) {
                kfp::PathRng rng(c.seed, static_cast<std::uint64_t>(i));
                kfp::write_path_jsonl(os, static_cast<std::size_t>(i), recSim.simulate(x, rng), ctx.hash);
            }
            result.files.push_back("paths.jsonl");
        }
        if (all.absorbed > 0 && kfp::signed_distance(dom, x.q) > 0.0)
            result.checks.push_back(at_least("gamma-plus-fraction", static_cast<double>(all.plus) / all.absorbed, minPlus));
        return result;
    };
}

// --- fk ----------------------------------------------------------------------

PreparedRun prepare_fk(const RunConfig& run) {
    const Model model = parse_model(run.model, "model");
    const kfp::DomainSpec dom = parse_domain(run.domain, "domain", model.dim);
    Fields f(run.params, "params");
    const double t = f.number("t", 0.0, 1e4, true);
    kfp::SimConfig cfg;
    cfg.dt = f.number("dt", 1e-2, 0.0, 10.0, true);
    cfg.scheme = parse_scheme(f);
    cfg.epsilon = f.number("epsilon", 0.0, 0.0, 10.0);
    cfg.seed = run.seed;
    const long n = f.integer("nPaths", 100000, 1, 100000000);
    const NamedFunction fn = parse_function(f.raw("f"), "params.f");
    const NamedFunction gn = parse_function(f.raw("g"), "params.g");
    const auto points = parse_points(f, "points", model.dim);
    f.finish();
    for (std::size_t i = 0; i < points.size(); ++i) require_inside(dom, points[i], "params.points[" + std::to_string(i) + "]");

    return [=](const RunContext& ctx) {
        RunResult result;
        kfp::SimConfig c = cfg;
        c.workerCount = ctx.workers;
        std::vector<std::string> header{"t"};
        point_header(header, "x_", model.dim);
        header.insert(header.end(), {"estimate", "stderr", "n_paths", "dt"});
        Csv csv(ctx, "fk.csv", header, result);
        double worst = 0.0;
        for (const auto& x : points) {
            kfp::FKProblem pr{fn.fn, gn.fn, fn.sup, gn.sup, t, x};
            const kfp::FKEstimate e = kfp::estimate_u(model.force, model.kernel, dom, pr, static_cast<std::size_t>(n), c);
            worst = std::max(worst, std::abs(e.value));
            std::vector<std::string> cells{num(t)};
            point_cells(cells, x);
            cells.insert(cells.end(), {num(e.value), num(e.stdError), std::to_string(e.nPaths), num(e.dt)});
            csv.row(cells);
        }
        result.checks.push_back(at_most("data-bound", worst, std::max(fn.sup, gn.sup) + 1e-12));
        return result;
    };
}

// --- reversibility -----------------------------------------------------------

PreparedRun prepare_reversibility(const RunConfig& run) {
    const Model model = parse_model(run.model, "model");
    const kfp::DomainSpec dom = parse_domain(run.domain, "domain", model.dim);
    Fields f(run.params, "params");
    const double t = f.number("t", 0.0, 1e4, true);
    kfp::SimConfig cfg;
    cfg.dt = f.number("dt", 1e-3, 0.0, 10.0, true);
    cfg.seed = run.seed;
    const long n = f.integer("nPaths", 1000000, 100, 100000000);
    const kfp::PhaseVector x = parse_point(f.raw("x"), "params.x", model.dim);
    const kfp::PhaseVector y = parse_point(f.raw("y"), "params.y", model.dim);
    kfp::ReversibilityOptions opts;
    opts.bandwidthScale = f.number("bandwidthScale", 1.0, 0.0, 100.0, true);
    opts.kernel = f.text("kernel", "bias-corrected", {"bias-corrected", "gaussian"}) == "gaussian" ? kfp::KdeKernel::Gaussian
                                                                                                   : kfp::KdeKernel::BiasCorrected;
    opts.bootstrap = static_cast<int>(f.integer("bootstrap", 200, 10, 100000));
    opts.confidence = f.number("confidence", 0.95, 0.5, 0.9999);
    const double band = f.number("ratioBand", 0.1, 0.0, 1.0, true);
    f.finish();
    require_inside(dom, x, "params.x");
    require_inside(dom, y, "params.y");

    return [=](const RunContext& ctx) {
        RunResult result;
        kfp::SimConfig c = cfg;
        c.workerCount = ctx.workers;
        const kfp::ReversibilityResult r =
            kfp::reversibility_ratio(model.force, model.kernel, dom, t, x, y, static_cast<std::size_t>(n), c, opts);
        std::vector<std::string> header{"gamma", "t"};
        point_header(header, "x_", model.dim);
        point_header(header, "y_", model.dim);
        header.insert(header.end(), {"ratio", "ci_low", "ci_high", "forward", "forward_se", "adjoint", "adjoint_se", "n_paths"});
        Csv csv(ctx, "reversibility.csv", header, result);
        std::vector<std::string> cells{num(model.kernel.gamma), num(t)};
        point_cells(cells, x);
        point_cells(cells, y);
        for (double v : {r.ratio, r.ciLow, r.ciHigh, r.forward, r.forwardSe, r.adjoint, r.adjointSe}) cells.push_back(num(v));
        cells.push_back(std::to_string(r.nPaths));
        csv.row(cells);
        result.checks.push_back(at_most("ratio-distance-from-1", std::abs(r.ratio - 1.0), band));
        result.checks.push_back(at_most("ci-low", r.ciLow, 1.0));
        result.checks.push_back(at_least("ci-high", r.ciHigh, 1.0));
        return result;
    };
}

// --- harnack -----------------------------------------------------------------

json report_json(const kfp::ChainReport& r) {
    return {{"ok", r.ok()},
            {"r", r.r},
            {"alpha", r.alpha},
            {"endpoint_error", r.endpointError},
            {"knot_mismatch", r.knotMismatch},
            {"grid_points", r.gridPoints},
            {"grid_sup_speed", r.gridSupSpeed},
            {"grid_min_wall_distance", r.gridMinDistance},
            {"path_violations", r.pathViolations},
            {"box_shift", r.boxShift},
            {"t_hat", r.tHat},
            {"t_window", {r.tLow, r.tHigh}},
            {"max_q_hat", r.maxQHat},
            {"max_p_hat", r.maxPHat},
            {"links_enumerated", r.enumerated},
            {"links", r.linksChecked},
            {"box_violations", r.boxViolations},
            {"violations", r.violations}};
}

PreparedRun prepare_harnack(const RunConfig& run) {
    const Model model = parse_model(run.model, "model");
    const kfp::DomainSpec dom = parse_domain(run.domain, "domain", model.dim);
    if (dom.kind != kfp::DomainSpec::Kind::Interval) throw ConfigError("domain.kind: harnack chains need an interval");
    Fields f(run.params, "params");
    kfp::HarnackChainSpec spec;
    spec.domain = dom;
    spec.k = f.number("k", 0.0, 1e3);
    spec.delta = f.number("delta", 0.0, 1e3, true);
    spec.T = f.number("T", 0.0, 1e3, true);
    spec.epsilon = f.number("epsilon", 0.0, 1e3, true);
    spec.R = f.number("R", 0.5, 0.0, 10.0, true);
    spec.DeltaH = f.number("DeltaH", 0.25, 0.0, 10.0, true);
    spec.CKT = f.number("CKT", 10.0, 1.0, 1e6, true);
    const kfp::PhaseVector x = parse_point(f.raw("x"), "params.x", 1);
    const kfp::PhaseVector y = parse_point(f.raw("y"), "params.y", 1);
    const int gridPoints = static_cast<int>(f.integer("gridPoints", 10000, 2, 10000000));
    const double spotT = f.number("spotT", 0.5, 0.0, 1e3, true);
    f.finish();
    try {
        spec.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("params: ") + e.what());
    }

    return [=](const RunContext& ctx) {
        RunResult result;
        const kfp::HarnackChainSpec chain = kfp::build_admissible_chain(spec, x, y);
        const kfp::ChainReport rep = kfp::verify_chain_membership(chain, 0.0, gridPoints);
        const kfp::ChainReport doubled = kfp::verify_chain_membership(chain, 2.0 * chain.rEps, gridPoints);
        const kfp::HarnackConstant hc = kfp::harnack_constant(chain.CKT, chain);
        const kfp::HarnackSpotCheck spot = kfp::harnack_gaussian_spot_check(model.kernel, chain, kfp::PhaseVector::one_d(0.0, 0.0), spotT);
        json doc = {{"config_hash", ctx.hash},
                    {"chain",
                     {{"delta_K", chain.deltaK},
                      {"cover_eps", chain.coverEps},
                      {"cover_radius", chain.coverRadius},
                      {"adjacency", chain.adjacency},
                      {"cover_lattice", {chain.coverQ, chain.coverP}},
                      {"N", chain.N},
                      {"Delta", chain.Delta},
                      {"walk_edges", chain.walkEdges},
                      {"M", chain.M},
                      {"M_bound", chain.MBound},
                      {"sup_acceleration", chain.supAcceleration},
                      {"min_wall_distance", chain.minWallDistance},
                      {"r_KT", chain.rKT},
                      {"r_eps", chain.rEps},
                      {"alpha_eps", chain.alpha},
                      {"n_eps", chain.nEps}}},
                    {"membership", report_json(rep)},
                    {"doubled_r", report_json(doubled)},
                    {"constant",
                     {{"CKT", chain.CKT},
                      {"n", hc.n},
                      {"log", hc.logValue},
                      {"value", std::isfinite(hc.value) ? json(hc.value) : json(nullptr)}}},
                    {"gaussian_spot_check",
                     {{"t", spotT},
                      {"sup_early", spot.supEarly},
                      {"inf_late", spot.infLate},
                      {"fitted_C", spot.fittedC},
                      {"log_fitted_C", spot.logFitted},
                      {"log_returned_C", spot.logReturned}}}};
        std::ofstream(fs::path(ctx.outDir) / "harnack.json") << doc.dump(2) << '\n';
        result.files.push_back("harnack.json");
        result.checks.push_back(at_most("path-violations", rep.pathViolations, 0));
        result.checks.push_back(at_most("box-violations", rep.boxViolations, 0));
        result.checks.push_back(at_least("doubled-r-violations", doubled.boxViolations, 1));
        return result;
    };
}

// --- grid --------------------------------------------------------------------

PreparedRun prepare_grid(const RunConfig& run) {
    const Model model = parse_model(run.model, "model");
    const kfp::DomainSpec dom = parse_domain(run.domain, "domain", model.dim);
    if (dom.kind != kfp::DomainSpec::Kind::Interval) throw ConfigError("domain.kind: the grid solver needs an interval");
    Fields f(run.params, "params");
    const double t = f.number("t", 0.0, 1e4, true);
    const int nq = static_cast<int>(f.integer("nq", 200, 4, 100000));
    const int np = static_cast<int>(f.integer("np", 200, 4, 100000));
    const double P = f.number("P", kfp::default_momentum_cutoff(model.kernel.sigma, model.kernel.gamma, t), 0.0, 1e4, true);
    const std::string schemeName = f.text("scheme", "upwind", {"upwind", "semiLagrangian"});
    const double cfl = f.number("cfl", 0.9, 0.0, 1.0, true);
    const double dt = f.number("dt", 0.0, 0.0, 10.0);
    const NamedFunction fn = parse_function(f.raw("f"), "params.f");
    const NamedFunction gn = parse_function(f.raw("g"), "params.g");
    const auto slices = f.numbers("slices", {0.0}, dom.a, dom.b);
    const bool residual = f.flag("residual", false);
    const int stride = static_cast<int>(f.integer("residualStride", 2, 1, 64));
    const int margin = static_cast<int>(f.integer("residualMargin", 4, 1, 1000));
    const double residualTol = f.number("residualTolerance", 1e-3, 0.0, 1e3, true);
    const double mpTol = f.number("maxPrincipleTolerance", 1e-10, 0.0, 1.0);
    f.finish();
    const kfp::GridScheme scheme = schemeName == "upwind" ? kfp::GridScheme::Upwind : kfp::GridScheme::SemiLagrangian;
    kfp::Mesh1D mesh = kfp::make_mesh(dom.a, dom.b, P, nq, np, model.force, model.kernel.gamma, cfl);
    if (dt > 0.0) {
        mesh.dt = dt;
    } else if (scheme == kfp::GridScheme::SemiLagrangian) {
        throw ConfigError("params.dt: required for the semiLagrangian scheme");
    }
    if (scheme == kfp::GridScheme::Upwind && mesh.dt > kfp::max_stable_dt(mesh, model.force, model.kernel.gamma))
        throw ConfigError("params.dt: exceeds the upwind stability limit " + num(kfp::max_stable_dt(mesh, model.force, model.kernel.gamma)));
    if (residual && gn.sup != 0.0) throw ConfigError("params.residual: the dual residual needs g = 0");
    if (margin < stride) throw ConfigError("params.residualMargin: must be >= residualStride");

    return [=](const RunContext& ctx) {
        RunResult result;
        const kfp::GridProblem pr{model.force, model.kernel.gamma, model.kernel.sigma, fn.fn, gn.fn, t};
        kfp::GridOptions opts;
        opts.scheme = scheme;
        opts.workers = ctx.workers;
        const kfp::GridSolution sol = kfp::solve_kfp_1d(pr, mesh, opts);
        const kfp::GridFrame& fin = sol.final_frame();

        {
            std::ofstream bin(fs::path(ctx.outDir) / "grid.bin", std::ios::binary);
            bin.write(reinterpret_cast<const char*>(fin.u.data()), static_cast<std::streamsize>(fin.u.size() * sizeof(double)));
            result.files.push_back("grid.bin");
        }
        const json header = {{"a", sol.mesh.a},  {"b", sol.mesh.b},   {"P", sol.mesh.P},
                             {"nq", sol.mesh.nq}, {"np", sol.mesh.np}, {"dt", sol.mesh.dt},
                             {"t", fin.t},        {"steps", sol.steps}, {"scheme", schemeName},
                             {"layout", "row-major float64, index i*np+j, q_i = a+i*dq (i=0..nq), p_j = -P+(j+1/2)*dp"},
                             {"config_hash", ctx.hash}};
        std::ofstream(fs::path(ctx.outDir) / "grid.json") << header.dump(2) << '\n';
        result.files.push_back("grid.json");

        Csv csv(ctx, "grid_slices.csv", {"t", "q", "p", "u"}, result);
        for (double q : slices) {
            const int i = static_cast<int>(std::lround((q - sol.mesh.a) / sol.mesh.dq()));
            for (int j = 0; j < sol.mesh.np; ++j) csv.row({num(fin.t), num(sol.mesh.q(i)), num(sol.mesh.p(j)), num(sol.value(i, j))});
        }

        const kfp::MaxPrincipleReport mp = kfp::check_maximum_principle(sol, mpTol);
        result.checks.push_back(at_most("max-principle-excess-above", -mp.upperMargin, mpTol));
        result.checks.push_back(at_most("max-principle-excess-below", -mp.lowerMargin, mpTol));
        result.checks.push_back({"p-cutoff-leak-estimate", sol.leakEstimate, 0.0, "report", true});
        if (residual) {
            const kfp::GridSolution dual = kfp::dual_transform(sol, model.kernel.gamma);
            const kfp::ResidualReport rr = kfp::dual_residual(dual, margin, stride);
            result.checks.push_back(at_most("dual-residual-max", rr.maxAbs, residualTol));
            result.checks.push_back({"dual-residual-rms", rr.rms, 0.0, "report", true});
        }
        write_checks(ctx, "grid_report.csv", result.checks, result);
        return result;
    };
}

}  // namespace

PreparedRun prepare_run(const RunConfig& run) {
    if (run.experiment == "kernel-checks") return prepare_kernel_checks(run);
    if (run.experiment == "bound") return prepare_bound(run);
    if (run.experiment == "simulate") return prepare_simulate(run);
    if (run.experiment == "fk") return prepare_fk(run);
    if (run.experiment == "reversibility") return prepare_reversibility(run);
    if (run.experiment == "harnack") return prepare_harnack(run);
    if (run.experiment == "grid") return prepare_grid(run);
    throw ConfigError("experiment: unsupported \"" + run.experiment + "\"");
}

}  // namespace lab
