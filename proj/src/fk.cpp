#include "kfp/fk.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <boost/random/poisson_distribution.hpp>

#include "kfp/parallel.hpp"

namespace kfp {

namespace {

// Kernel arguments beyond this many bandwidths contribute exp(-72) or less.
constexpr double kKernelCut = 12.0;

SimConfig with_horizon(const SimConfig& cfg, double t) {
    SimConfig c = cfg;
    c.horizon = t;
    if (c.exitRefineTol > c.dt) c.exitRefineTol = c.dt;
    return c;
}

GaussianKernelSpec diamond_spec(const GaussianKernelSpec& spec) {
    GaussianKernelSpec s = spec;
    s.gamma = -spec.gamma;
    return s;
}

PhaseVector flip(PhaseVector x) {
    for (auto& v : x.p) v = -v;
    return x;
}

double kernel_value(const double* z, const PhaseVector& at, const std::vector<double>& h, double logNorm) {
    const std::size_t d = at.dim();
    double e = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double u = (z[i] - at.q[i]) / h[i];
        const double v = (z[d + i] - at.p[i]) / h[d + i];
        if (std::abs(u) > kKernelCut || std::abs(v) > kKernelCut) return 0.0;
        e += u * u + v * v;
    }
    return std::exp(logNorm - 0.5 * e);
}

double kernel_log_norm(const std::vector<double>& h) {
    double l = -0.5 * static_cast<double>(h.size()) * std::log(2.0 * std::numbers::pi);
    for (double v : h) l -= std::log(v);
    return l;
}

void check_bandwidth(const std::vector<double>& h, int dim) {
    if (h.size() != 2 * static_cast<std::size_t>(dim)) throw std::invalid_argument("bandwidth needs 2d entries");
    for (double v : h)
        if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("bandwidth entries must be > 0");
}

// Mean and standard error of contributions whose remaining entries are zero.
MomentAccumulator sparse_moments(const std::vector<double>& c, std::size_t total) {
    MomentAccumulator acc;
    double s = 0.0, s2 = 0.0;
    for (double v : c) {
        s += v;
        s2 += v * v;
    }
    acc.count = total;
    acc.mean = s / static_cast<double>(total);
    acc.m2 = std::max(0.0, s2 - s * s / static_cast<double>(total));
    return acc;
}

}  // namespace

void FKProblem::validate() const {
    if (!f || !g) throw std::invalid_argument("FK problem needs both f and g");
    if (!(t > 0.0) || !std::isfinite(t)) throw std::invalid_argument("FK time t must be > 0");
    if (!x.valid()) throw std::invalid_argument("FK start point must be finite");
    if (!(supF >= 0.0) || !(supG >= 0.0)) throw std::invalid_argument("declared sup norms must be >= 0");
}

FKEstimate estimate_u(const ForceFieldSpec& force, const GaussianKernelSpec& spec, const DomainSpec& dom,
                      const FKProblem& problem, std::size_t nPaths, const SimConfig& cfg) {
    problem.validate();
    if (nPaths == 0) throw std::invalid_argument("nPaths must be > 0");
    const Simulator sim(force, spec, dom, with_horizon(cfg, problem.t));
    std::vector<MomentAccumulator> parts(chunk_count(nPaths));
    parallel_chunks(nPaths, resolve_workers(cfg.workerCount), [&](std::size_t c, std::size_t b, std::size_t e) {
        MomentAccumulator acc;
        for (std::size_t i = b; i < e; ++i) {
            PathRng rng(cfg.seed, i, static_cast<std::uint64_t>(Arm::Forward));
            const AbsorbedPathRecord rec = sim.simulate(problem.x, rng);
            acc.add(rec.absorbed ? problem.g(rec.exitState) : problem.f(rec.finalState));
        }
        parts[c] = acc;
    });
    MomentAccumulator total;
    for (const auto& p : parts) total.merge(p);
    return {total.mean, total.std_error(), nPaths, sim.dt()};
}

Simulator make_adjoint_simulator(const ForceFieldSpec& force, const GaussianKernelSpec& spec, const DomainSpec& dom,
                                 const SimConfig& cfg) {
    return Simulator(force, diamond_spec(spec), dom, cfg);
}

AbsorbedPathRecord flip_adjoint_record(AbsorbedPathRecord rec, double classifyTol) {
    for (auto& s : rec.states) s = flip(std::move(s));
    if (rec.absorbed) {
        rec.exitState = flip(std::move(rec.exitState));
        rec.exitClass.normalDot = -rec.exitClass.normalDot;
        const double nd = rec.exitClass.normalDot;
        rec.exitClass.cls = nd > classifyTol    ? BoundaryClass::GammaPlus
                            : nd < -classifyTol ? BoundaryClass::GammaMinus
                                                : BoundaryClass::GammaZero;
    } else {
        rec.finalState = flip(std::move(rec.finalState));
    }
    return rec;
}

AbsorbedPathRecord simulate_adjoint(const Simulator& adjointSim, const PhaseVector& x, PathRng& rng) {
    return flip_adjoint_record(adjointSim.simulate(flip(x), rng), adjointSim.config().classifyTol);
}

AbsorbedPathRecord simulate_adjoint_absorbed(const ForceFieldSpec& force, const GaussianKernelSpec& spec,
                                             const DomainSpec& dom, const PhaseVector& x, const SimConfig& cfg,
                                             PathRng& rng) {
    return simulate_adjoint(make_adjoint_simulator(force, spec, dom, cfg), x, rng);
}

EndpointCloud collect_endpoints(const Simulator& sim, const PhaseVector& x, std::size_t nPaths, bool adjoint, Arm arm) {
    if (nPaths == 0) throw std::invalid_argument("nPaths must be > 0");
    const SimConfig& cfg = sim.config();
    std::vector<std::vector<double>> parts(chunk_count(nPaths));
    const PhaseVector start = adjoint ? flip(x) : x;
    parallel_chunks(nPaths, resolve_workers(cfg.workerCount), [&](std::size_t c, std::size_t b, std::size_t e) {
        std::vector<double>& out = parts[c];
        for (std::size_t i = b; i < e; ++i) {
            PathRng rng(cfg.seed, i, static_cast<std::uint64_t>(arm));
            const AbsorbedPathRecord rec = sim.simulate(start, rng);
            if (rec.absorbed) continue;
            out.insert(out.end(), rec.finalState.q.begin(), rec.finalState.q.end());
            for (double p : rec.finalState.p) out.push_back(adjoint ? -p : p);
        }
    });
    EndpointCloud cloud;
    cloud.dim = sim.kernel().dim;
    cloud.total = nPaths;
    std::size_t n = 0;
    for (const auto& p : parts) n += p.size();
    cloud.data.reserve(n);
    for (const auto& p : parts) cloud.data.insert(cloud.data.end(), p.begin(), p.end());
    return cloud;
}

std::vector<double> default_bandwidth(const GaussianKernelSpec& spec, double t, std::size_t nTotal, double scale) {
    if (nTotal == 0) throw std::invalid_argument("bandwidth rule needs a positive sample count");
    if (!(scale > 0.0)) throw std::invalid_argument("bandwidth scale must be > 0");
    const KernelMoments m = moments(spec, t);
    const double dims = 2.0 * spec.dim;
    const double factor = std::pow(4.0 / ((dims + 2.0) * static_cast<double>(nTotal)), 1.0 / (dims + 4.0));
    std::vector<double> h(static_cast<std::size_t>(2 * spec.dim));
    for (int i = 0; i < spec.dim; ++i) {
        h[static_cast<std::size_t>(i)] = scale * factor * std::sqrt(m.cqq);
        h[static_cast<std::size_t>(spec.dim + i)] = scale * factor * std::sqrt(m.cpp);
    }
    return h;
}

std::vector<double> kde_contributions(const EndpointCloud& samples, const PhaseVector& point,
                                      const std::vector<double>& bandwidth, KdeKernel kernel) {
    check_bandwidth(bandwidth, samples.dim);
    const double ln = kernel_log_norm(bandwidth);
    std::vector<double> c(samples.count());
    if (kernel == KdeKernel::Gaussian) {
        for (std::size_t i = 0; i < c.size(); ++i) c[i] = kernel_value(samples.point(i), point, bandwidth, ln);
        return c;
    }
    std::vector<double> wide = bandwidth;
    for (double& v : wide) v *= std::sqrt(2.0);
    const double lnWide = kernel_log_norm(wide);
    for (std::size_t i = 0; i < c.size(); ++i)
        c[i] = 2.0 * kernel_value(samples.point(i), point, bandwidth, ln) -
               kernel_value(samples.point(i), point, wide, lnWide);
    return c;
}

DensityEstimate estimate_density_kde(const EndpointCloud& samples, const std::vector<PhaseVector>& points,
                                     const std::vector<double>& bandwidth, int workers) {
    if (samples.total == 0) throw std::invalid_argument("density estimate needs a non-empty sample");
    check_bandwidth(bandwidth, samples.dim);
    for (const auto& p : points)
        if (p.dim() != static_cast<std::size_t>(samples.dim)) throw std::invalid_argument("evaluation point dimension");
    DensityEstimate est;
    est.points = points;
    est.bandwidth = bandwidth;
    est.nSamples = samples.total;
    est.values.assign(points.size(), 0.0);
    est.stdErrors.assign(points.size(), 0.0);
    parallel_chunks(
        points.size(), resolve_workers(workers),
        [&](std::size_t, std::size_t b, std::size_t e) {
            for (std::size_t j = b; j < e; ++j) {
                const MomentAccumulator acc = sparse_moments(kde_contributions(samples, points[j], bandwidth), samples.total);
                est.values[j] = acc.mean;
                est.stdErrors[j] = acc.std_error();
            }
        },
        1);
    return est;
}

ReversibilityResult reversibility_ratio(const ForceFieldSpec& force, const GaussianKernelSpec& spec,
                                        const DomainSpec& dom, double t, const PhaseVector& x, const PhaseVector& y,
                                        std::size_t nPaths, const SimConfig& cfg, const ReversibilityOptions& opts) {
    if (!(t > 0.0)) throw std::invalid_argument("t must be > 0");
    if (signed_distance(dom, x.q) <= 0.0 || signed_distance(dom, y.q) <= 0.0)
        throw std::invalid_argument("reversibility points must be interior");
    if (!(opts.confidence > 0.0 && opts.confidence < 1.0) || opts.bootstrap < 10)
        throw std::invalid_argument("invalid bootstrap settings");
    const SimConfig c = with_horizon(cfg, t);
    const Simulator fwd(force, spec, dom, c);
    const Simulator adj = make_adjoint_simulator(force, spec, dom, c);

    ReversibilityResult r;
    r.nPaths = nPaths;
    r.forwardBandwidth = default_bandwidth(spec, t, nPaths, opts.bandwidthScale);
    r.adjointBandwidth = default_bandwidth(diamond_spec(spec), t, nPaths, opts.bandwidthScale);

    // p^D_t(y, .) at x from forward paths started at y.
    const EndpointCloud cf = collect_endpoints(fwd, y, nPaths, false, Arm::Forward);
    // p~^D_t(x, .) at y from adjoint paths started at x.
    const EndpointCloud ca = collect_endpoints(adj, x, nPaths, true, Arm::Adjoint);
    const std::vector<double> kf = kde_contributions(cf, x, r.forwardBandwidth, opts.kernel);
    const std::vector<double> ka = kde_contributions(ca, y, r.adjointBandwidth, opts.kernel);
    const MomentAccumulator mf = sparse_moments(kf, nPaths), ma = sparse_moments(ka, nPaths);
    r.forward = mf.mean;
    r.forwardSe = mf.std_error();
    r.adjoint = ma.mean;
    r.adjointSe = ma.std_error();
    if (r.forward <= 2.0 * r.forwardSe || r.adjoint <= 2.0 * r.adjointSe)
        throw std::runtime_error("density estimate statistically indistinguishable from 0");
    const double factor = std::exp(-spec.dim * spec.gamma * t);
    r.ratio = r.adjoint / (factor * r.forward);

    // Poisson bootstrap over the nonzero contributions; zeros carry no weight.
    const auto nz = [](const std::vector<double>& v) {
        std::vector<double> out;
        for (double e : v)
            if (e != 0.0) out.push_back(e);
        return out;
    };
    const std::vector<double> zf = nz(kf), za = nz(ka);
    std::vector<double> ratios(static_cast<std::size_t>(opts.bootstrap));
    for (int b = 0; b < opts.bootstrap; ++b) {
        RngStream rng(cfg.seed, static_cast<std::uint64_t>(b), kTagBootstrap);
        boost::random::poisson_distribution<int, double> pois(1.0);
        double sf = 0.0, sa = 0.0;
        for (double v : zf) sf += pois(rng) * v;
        for (double v : za) sa += pois(rng) * v;
        ratios[static_cast<std::size_t>(b)] = sf > 0.0 ? sa / (factor * sf) : INFINITY;
    }
    std::sort(ratios.begin(), ratios.end());
    const auto quant = [&](double q) {
        const double pos = q * static_cast<double>(ratios.size() - 1);
        const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = std::min(lo + 1, ratios.size() - 1);
        return ratios[lo] + (pos - static_cast<double>(lo)) * (ratios[hi] - ratios[lo]);
    };
    r.ciLow = quant(0.5 * (1.0 - opts.confidence));
    r.ciHigh = quant(0.5 * (1.0 + opts.confidence));
    return r;
}

std::vector<ScanRow> boundary_vanishing_scan(const ForceFieldSpec& force, const GaussianKernelSpec& spec,
                                             const DomainSpec& dom, double t, ScanSlot slot,
                                             const std::vector<PhaseVector>& sequence, const PhaseVector& fixed,
                                             std::size_t nPaths, const SimConfig& cfg, double bandwidthScale) {
    const Simulator sim(force, spec, dom, with_horizon(cfg, t));
    const std::vector<double> h = default_bandwidth(spec, t, nPaths, bandwidthScale);
    std::vector<ScanRow> rows;
    const auto survival = [&](const EndpointCloud& c, ScanRow& row) {
        const double p = static_cast<double>(c.count()) / static_cast<double>(c.total);
        row.survival = p;
        row.survivalSe = std::sqrt(p * (1.0 - p) / static_cast<double>(c.total));
    };
    if (slot == ScanSlot::End) {
        const EndpointCloud cloud = collect_endpoints(sim, fixed, nPaths, false);
        const DensityEstimate est = estimate_density_kde(cloud, sequence, h, cfg.workerCount);
        for (std::size_t j = 0; j < sequence.size(); ++j) {
            ScanRow row;
            row.point = sequence[j];
            row.distance = signed_distance(dom, sequence[j].q);
            row.density = est.values[j];
            row.densitySe = est.stdErrors[j];
            survival(cloud, row);
            rows.push_back(row);
        }
        return rows;
    }
    for (const auto& start : sequence) {
        ScanRow row;
        row.point = start;
        row.distance = signed_distance(dom, start.q);
        const EndpointCloud cloud = collect_endpoints(sim, start, nPaths, false);
        const DensityEstimate est = estimate_density_kde(cloud, {fixed}, h, 1);
        row.density = est.values[0];
        row.densitySe = est.stdErrors[0];
        survival(cloud, row);
        rows.push_back(row);
    }
    return rows;
}

FKEstimate nested_chapman_kolmogorov(const ForceFieldSpec& force, const GaussianKernelSpec& spec,
                                     const DomainSpec& dom, double s, double t, const PhaseVector& x,
                                     const PhaseVector& y, std::size_t nOuter, std::size_t nInner,
                                     const std::vector<double>& bandwidth, const SimConfig& cfg) {
    if (!(s > 0.0 && s < t)) throw std::invalid_argument("nested check needs 0 < s < t");
    if (nOuter == 0 || nInner == 0) throw std::invalid_argument("path counts must be > 0");
    check_bandwidth(bandwidth, spec.dim);
    const Simulator outer(force, spec, dom, with_horizon(cfg, s));
    const Simulator inner(force, spec, dom, with_horizon(cfg, t - s));
    const double ln = kernel_log_norm(bandwidth);
    std::vector<MomentAccumulator> parts(chunk_count(nOuter, 64));
    parallel_chunks(
        nOuter, resolve_workers(cfg.workerCount),
        [&](std::size_t c, std::size_t b, std::size_t e) {
            MomentAccumulator acc;
            std::vector<double> z(2 * static_cast<std::size_t>(spec.dim));
            for (std::size_t i = b; i < e; ++i) {
                PathRng rng(cfg.seed, i, static_cast<std::uint64_t>(Arm::Forward));
                const AbsorbedPathRecord rec = outer.simulate(x, rng);
                if (rec.absorbed) {
                    acc.add(0.0);
                    continue;
                }
                double sum = 0.0;
                for (std::size_t j = 0; j < nInner; ++j) {
                    PathRng r2(cfg.seed, i * nInner + j, static_cast<std::uint64_t>(Arm::Aux));
                    const AbsorbedPathRecord in = inner.simulate(rec.finalState, r2);
                    if (in.absorbed) continue;
                    std::copy(in.finalState.q.begin(), in.finalState.q.end(), z.begin());
                    std::copy(in.finalState.p.begin(), in.finalState.p.end(), z.begin() + spec.dim);
                    sum += kernel_value(z.data(), y, bandwidth, ln);
                }
                acc.add(sum / static_cast<double>(nInner));
            }
            parts[c] = acc;
        },
        64);
    MomentAccumulator total;
    for (const auto& p : parts) total.merge(p);
    return {total.mean, total.std_error(), nOuter, inner.dt()};
}

}  // namespace kfp
