#include "kfp/sde.hpp"

#include <cmath>
#include <optional>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

namespace kfp {

namespace {

constexpr double kCubicBound = 4.0 / 27.0;  // sup of |h10|, |h11| on [0, 1]
constexpr int kDipSamples = 16;

double effective_epsilon(const SimConfig& cfg) { return cfg.scheme == SchemeKind::Perturbed ? cfg.epsilon : 0.0; }

void require_finite(const PhaseVector& x) {
    if (!x.valid()) throw std::runtime_error("non-finite state during integration");
}

// Conditional law of the midpoint of a free segment of length h given both
// ends, written as precision P = C^-1 + M^T C^-1 M with C, M over h/2.
Simulator::BridgeLevel make_level(const GaussianKernelSpec& spec, double eps, double h) {
    using ld = long double;
    const double s = 0.5 * h;
    const KernelMoments m = moments(spec, s);
    const ld cqq = static_cast<ld>(m.cqq) + 2.0L * eps * s;
    const ld cqp = m.cqp, cpp = m.cpp;
    const ld det = static_cast<ld>(m.det2) + 2.0L * eps * s * static_cast<ld>(m.cpp);
    const ld ci[2][2] = {{cpp / det, -cqp / det}, {-cqp / det, cqq / det}};
    const ld ms[2][2] = {{1.0L, static_cast<ld>(m.a12)}, {0.0L, static_cast<ld>(m.a22)}};
    ld ciM[2][2], mtCi[2][2], p[2][2];
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            ciM[i][j] = ci[i][0] * ms[0][j] + ci[i][1] * ms[1][j];
            mtCi[i][j] = ms[0][i] * ci[0][j] + ms[1][i] * ci[1][j];
        }
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) p[i][j] = ci[i][j] + mtCi[i][0] * ms[0][j] + mtCi[i][1] * ms[1][j];
    const ld detP = p[0][0] * p[1][1] - p[0][1] * p[1][0];
    const ld pinv[2][2] = {{p[1][1] / detP, -p[0][1] / detP}, {-p[1][0] / detP, p[0][0] / detP}};
    Simulator::BridgeLevel lv;
    lv.h = h;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            lv.b1[i][j] = static_cast<double>(pinv[i][0] * ciM[0][j] + pinv[i][1] * ciM[1][j]);
            lv.b2[i][j] = static_cast<double>(pinv[i][0] * mtCi[0][j] + pinv[i][1] * mtCi[1][j]);
        }
    const ld l11 = std::sqrt(pinv[0][0]);
    const ld l21 = pinv[1][0] / l11;
    const ld l22sq = pinv[1][1] - l21 * l21;
    lv.l11 = static_cast<double>(l11);
    lv.l21 = static_cast<double>(l21);
    lv.l22 = static_cast<double>(l22sq > 0 ? std::sqrt(l22sq) : 0.0L);
    lv.scaleQ = lv.l11;
    return lv;
}

PhaseVector bridge_mid(const Simulator::BridgeLevel& lv, const PhaseVector& z0, const PhaseVector& z1, RngStream& rng) {
    PhaseVector mid(z0.dim());
    for (std::size_t i = 0; i < z0.dim(); ++i) {
        const double g1 = rng.normal();
        const double g2 = rng.normal();
        mid.q[i] = lv.b1[0][0] * z0.q[i] + lv.b1[0][1] * z0.p[i] + lv.b2[0][0] * z1.q[i] + lv.b2[0][1] * z1.p[i] +
                   lv.l11 * g1;
        mid.p[i] = lv.b1[1][0] * z0.q[i] + lv.b1[1][1] * z0.p[i] + lv.b2[1][0] * z1.q[i] + lv.b2[1][1] * z1.p[i] +
                   lv.l21 * g1 + lv.l22 * g2;
    }
    return mid;
}

template <class Dist>
ExitPoint refine_core(const PhaseVector& start, const PhaseVector& end, double h, double lo, double hi, const Dist& dist,
                      double tol, double band) {
    double fhi = dist(hermite_state(start, end, h, hi).q);
    for (int it = 0; it < 200; ++it) {
        if (hi - lo <= tol && std::abs(fhi) <= band) break;
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        const double fm = dist(hermite_state(start, end, h, mid).q);
        if (fm > 0.0) {
            lo = mid;
        } else {
            hi = mid;
            fhi = fm;
        }
    }
    ExitPoint e;
    e.offset = hi;
    e.state = hermite_state(start, end, h, hi);
    e.distance = fhi;
    return e;
}

struct Hit {
    double time = 0.0;
    PhaseVector state;
    double distance = 0.0;
};

template <class Dist>
struct Search {
    const std::vector<Simulator::BridgeLevel>& levels;
    int maxDepth;
    double kappa;
    RngStream& rng;
    const Dist& dist;
    double tol;
    double band;

    bool cubic_dip(double t0, const PhaseVector& z0, double d0, const PhaseVector& z1, double h, Hit& hit) const {
        double prevS = 0.0;
        (void)d0;
        for (int i = 1; i < kDipSamples; ++i) {
            const double s = h * i / kDipSamples;
            if (dist(hermite_state(z0, z1, h, s).q) <= 0.0) {
                const ExitPoint e = refine_core(z0, z1, h, prevS, s, dist, tol, band);
                hit = {t0 + e.offset, e.state, e.distance};
                return true;
            }
            prevS = s;
        }
        return false;
    }

    bool run(int k, double t0, const PhaseVector& z0, double d0, const PhaseVector& z1, double d1, Hit& hit) const {
        const Simulator::BridgeLevel& lv = levels[static_cast<std::size_t>(k)];
        const double h = lv.h;
        if (d1 > 0.0) {
            const double slack = std::min(d0, d1) - kCubicBound * h * (norm(z0.p) + norm(z1.p));
            if (slack > kappa * lv.scaleQ) return false;
            if (k >= maxDepth) return cubic_dip(t0, z0, d0, z1, h, hit);
        } else if (k >= maxDepth) {
            const ExitPoint e = refine_core(z0, z1, h, 0.0, h, dist, tol, band);
            hit = {t0 + e.offset, e.state, e.distance};
            return true;
        }
        const PhaseVector mid = bridge_mid(lv, z0, z1, rng);
        const double dm = dist(mid.q);
        if (run(k + 1, t0, z0, d0, mid, dm, hit)) return true;
        return run(k + 1, t0 + 0.5 * h, mid, dm, z1, d1, hit);
    }
};

void kick(PhaseVector& x, const std::vector<double>& f, double tau) {
    for (std::size_t i = 0; i < x.dim(); ++i) x.p[i] += f[i] * tau;
}

BoundaryClassification classify_exit(const DomainSpec& dom, const PhaseVector& x, double tol) {
    BoundaryClassification c;
    c.normalDot = dot(x.p, nearest_normal(dom, x.q));
    if (c.normalDot > tol)
        c.cls = BoundaryClass::GammaPlus;
    else if (c.normalDot < -tol)
        c.cls = BoundaryClass::GammaMinus;
    else
        c.cls = BoundaryClass::GammaZero;
    return c;
}

}  // namespace

std::string to_string(SchemeKind s) {
    switch (s) {
        case SchemeKind::EulerMaruyama: return "eulerMaruyama";
        case SchemeKind::Splitting: return "splitting";
        case SchemeKind::Perturbed: return "perturbed";
    }
    return "?";
}

SchemeKind scheme_from_string(const std::string& s) {
    if (s == "eulerMaruyama") return SchemeKind::EulerMaruyama;
    if (s == "splitting") return SchemeKind::Splitting;
    if (s == "perturbed") return SchemeKind::Perturbed;
    throw std::invalid_argument("unknown scheme '" + s + "' (expected eulerMaruyama, splitting or perturbed)");
}

void SimConfig::validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("dt must be > 0");
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw std::invalid_argument("horizon must be > 0");
    if (!(exitRefineTol > 0.0) || exitRefineTol > dt) throw std::invalid_argument("exitRefineTol must lie in (0, dt]");
    if (!(geomBand > 0.0)) throw std::invalid_argument("geomBand must be > 0");
    if (classifyTol < 0.0) throw std::invalid_argument("classifyTol must be >= 0");
    if (epsilon < 0.0) throw std::invalid_argument("epsilon must be >= 0");
    if (bridgeDepth < 0 || bridgeDepth > 60 || grazeDepth < 0 || grazeDepth > 60)
        throw std::invalid_argument("bridge depths must lie in [0, 60]");
    if (!(bridgeKappa > 0.0)) throw std::invalid_argument("bridgeKappa must be > 0");
    if (recordEvery < 0) throw std::invalid_argument("recordEvery must be >= 0");
}

int SimConfig::steps() const {
    const double n = std::ceil(horizon / dt - 1e-9);
    return std::max(1, static_cast<int>(n));
}

double SimConfig::step() const { return horizon / steps(); }

PathRng::PathRng(std::uint64_t seed, std::uint64_t index, std::uint64_t salt)
    : main(seed ^ salt, index, kTagPath), perturb(seed ^ salt, index, kTagPerturbation), bridge(seed ^ salt, index, kTagBridge) {}

PhaseVector hermite_state(const PhaseVector& start, const PhaseVector& end, double h, double s) {
    const double th = s / h;
    const double th2 = th * th, th3 = th2 * th;
    const double h00 = 2 * th3 - 3 * th2 + 1, h10 = th3 - 2 * th2 + th, h01 = -2 * th3 + 3 * th2, h11 = th3 - th2;
    PhaseVector out(start.dim());
    for (std::size_t i = 0; i < start.dim(); ++i) {
        out.q[i] = h00 * start.q[i] + h10 * h * start.p[i] + h01 * end.q[i] + h11 * h * end.p[i];
        out.p[i] = (1 - th) * start.p[i] + th * end.p[i];
    }
    return out;
}

ExitPoint refine_exit(const PhaseVector& start, const PhaseVector& end, double h, const DomainSpec& dom, double tol,
                      double band) {
    const auto dist = [&](const std::vector<double>& q) { return signed_distance(dom, q); };
    if (!(h > 0.0)) throw std::invalid_argument("refine_exit: segment length must be > 0");
    if (dist(start.q) < 0.0 || dist(end.q) > 0.0) throw std::invalid_argument("refine_exit: invalid bracket");
    return refine_core(start, end, h, 0.0, h, dist, tol, band);
}

PhaseVector integrate_step(const ForceFieldSpec& force, const GaussianKernelSpec& spec, SchemeKind scheme,
                           double epsilon, const PhaseVector& x, double dt, PathRng& rng) {
    std::vector<double> f;
    force.eval(x.q, f);
    PhaseVector z = x;
    if (scheme == SchemeKind::EulerMaruyama) {
        const double sq = std::sqrt(dt);
        for (std::size_t i = 0; i < z.dim(); ++i) {
            z.q[i] = x.q[i] + x.p[i] * dt;
            z.p[i] = x.p[i] + (f[i] - spec.gamma * x.p[i]) * dt + spec.sigma * sq * rng.main.normal();
        }
        return z;
    }
    const KernelMoments m = moments(spec, dt);
    kick(z, f, 0.5 * dt);
    apply_free_step(m, block_factor(m), z, rng.main);
    if (scheme == SchemeKind::Perturbed && epsilon > 0.0) {
        const double s = std::sqrt(2.0 * epsilon * dt);
        for (auto& q : z.q) q += s * rng.perturb.normal();
    }
    force.eval(z.q, f);
    kick(z, f, 0.5 * dt);
    return z;
}

Simulator::Simulator(ForceFieldSpec force, GaussianKernelSpec spec, DomainSpec dom, SimConfig cfg)
    : force_(std::move(force)), spec_(spec), dom_(std::move(dom)), cfg_(cfg) {
    force_.validate();
    spec_.validate();
    dom_.validate();
    cfg_.validate();
    if (dom_.dim() != spec_.dim) throw std::invalid_argument("domain and kernel dimensions differ");
    dt_ = cfg_.step();
    stepMoments_ = moments(spec_, dt_);
    stepFactor_ = block_factor(stepMoments_);
    const double eps = effective_epsilon(cfg_);
    if (eps > 0.0) {
        stepMoments_.cqq += 2.0 * eps * dt_;
        stepMoments_.det2 += 2.0 * eps * dt_ * stepMoments_.cpp;
        stepFactor_ = block_factor(stepMoments_);
    }
    const int depth = std::max(cfg_.bridgeDepth, cfg_.grazeDepth);
    levels_.reserve(static_cast<std::size_t>(depth + 1));
    for (int k = 0; k <= depth; ++k) levels_.push_back(make_level(spec_, eps, std::ldexp(dt_, -k)));
}

AbsorbedPathRecord Simulator::simulate(const PhaseVector& x, PathRng& rng) const {
    if (x.dim() != static_cast<std::size_t>(spec_.dim) || !x.valid()) throw std::invalid_argument("invalid start state");
    if (cfg_.absorb) {
        const auto c = classify(dom_, x, 0.0);
        if (c.cls == BoundaryClass::Exterior) throw std::invalid_argument("start state lies outside the domain");
        if (c.cls == BoundaryClass::GammaPlus || c.cls == BoundaryClass::GammaZero) {
            AbsorbedPathRecord rec;
            rec.absorbed = true;
            rec.tau = 0.0;
            rec.exitState = x;
            rec.stepEnd = x;
            rec.exitClass = classify_exit(dom_, x, cfg_.classifyTol);
            rec.endTime = 0.0;
            if (cfg_.recordEvery > 0) {
                rec.times.push_back(0.0);
                rec.states.push_back(x);
            }
            return rec;
        }
    }
    if (cfg_.scheme == SchemeKind::EulerMaruyama) return simulate_em(x, rng);
    return simulate_split(x, rng);
}

AbsorbedPathRecord Simulator::simulate_split(const PhaseVector& x0, PathRng& rng) const {
    AbsorbedPathRecord rec;
    const int n = cfg_.steps();
    const double eps = effective_epsilon(cfg_);
    const double epsScale = std::sqrt(2.0 * eps * dt_);
    const auto dist = [&](const std::vector<double>& q) { return signed_distance(dom_, q); };
    const Search<decltype(dist)> search{levels_, cfg_.bridgeDepth, cfg_.bridgeKappa, rng.bridge, dist,
                                        cfg_.exitRefineTol, cfg_.geomBand};
    PhaseVector x = x0;
    std::vector<double> f;
    force_.eval(x.q, f);
    if (cfg_.recordEvery > 0) {
        rec.times.push_back(0.0);
        rec.states.push_back(x);
    }
    double d0 = cfg_.absorb ? dist(x.q) : 1.0;
    for (int k = 0; k < n; ++k) {
        const double t0 = k * dt_;
        kick(x, f, 0.5 * dt_);
        PhaseVector z = x;
        apply_free_step(stepMoments_, stepFactor_, z, rng.main);
        if (eps > 0.0)
            for (auto& q : z.q) q += epsScale * rng.perturb.normal();
        require_finite(z);
        rec.stepsTaken = k + 1;
        if (cfg_.absorb) {
            const double d1 = dist(z.q);
            Hit hit;
            if (search.run(0, t0, x, d0, z, d1, hit)) {
                rec.absorbed = true;
                rec.tau = hit.time;
                rec.exitState = hit.state;
                rec.stepEnd = z;
                rec.exitClass = classify_exit(dom_, hit.state, cfg_.classifyTol);
                rec.endTime = hit.time;
                return rec;
            }
            d0 = d1;
        }
        force_.eval(z.q, f);
        kick(z, f, 0.5 * dt_);
        x = std::move(z);
        if (cfg_.recordEvery > 0 && (k + 1) % cfg_.recordEvery == 0) {
            rec.times.push_back((k + 1) * dt_);
            rec.states.push_back(x);
        }
    }
    rec.finalState = x;
    rec.endTime = cfg_.horizon;
    return rec;
}

AbsorbedPathRecord Simulator::simulate_em(const PhaseVector& x0, PathRng& rng) const {
    AbsorbedPathRecord rec;
    const int n = cfg_.steps();
    const double sq = std::sqrt(dt_);
    const double eps = effective_epsilon(cfg_);
    const double epsScale = std::sqrt(2.0 * eps * dt_);
    const auto dist = [&](const std::vector<double>& q) { return signed_distance(dom_, q); };
    // Depth 0 with zero scale: endpoint test plus the cubic dip check only.
    std::vector<BridgeLevel> single(1);
    single[0].h = dt_;
    const Search<decltype(dist)> search{single, 0, 1.0, rng.bridge, dist, cfg_.exitRefineTol, cfg_.geomBand};
    PhaseVector x = x0;
    std::vector<double> f;
    if (cfg_.recordEvery > 0) {
        rec.times.push_back(0.0);
        rec.states.push_back(x);
    }
    if (cfg_.storeIncrements) rec.increments.reserve(static_cast<std::size_t>(n) * x.dim());
    double d0 = cfg_.absorb ? dist(x.q) : 1.0;
    PhaseVector z = x;
    for (int k = 0; k < n; ++k) {
        const double t0 = k * dt_;
        force_.eval(x.q, f);
        for (std::size_t i = 0; i < x.dim(); ++i) {
            const double db = sq * rng.main.normal();
            if (cfg_.storeIncrements) rec.increments.push_back(db);
            z.q[i] = x.q[i] + x.p[i] * dt_;
            z.p[i] = x.p[i] + (f[i] - spec_.gamma * x.p[i]) * dt_ + spec_.sigma * db;
        }
        if (eps > 0.0)
            for (auto& q : z.q) q += epsScale * rng.perturb.normal();
        require_finite(z);
        rec.stepsTaken = k + 1;
        if (cfg_.absorb) {
            const double d1 = dist(z.q);
            Hit hit;
            if (search.run(0, t0, x, d0, z, d1, hit)) {
                rec.absorbed = true;
                rec.tau = hit.time;
                rec.exitState = hit.state;
                rec.stepEnd = z;
                rec.exitClass = classify_exit(dom_, hit.state, cfg_.classifyTol);
                rec.endTime = hit.time;
                return rec;
            }
            d0 = d1;
        }
        x = z;
        if (cfg_.recordEvery > 0 && (k + 1) % cfg_.recordEvery == 0) {
            rec.times.push_back((k + 1) * dt_);
            rec.states.push_back(x);
        }
    }
    rec.finalState = x;
    rec.endTime = cfg_.horizon;
    return rec;
}

GrazeResult Simulator::first_exterior_visit(const PhaseVector& x0, double window, PathRng& rng) const {
    if (cfg_.scheme == SchemeKind::EulerMaruyama) throw std::invalid_argument("first_exterior_visit needs a splitting scheme");
    if (!(window > 0.0)) throw std::invalid_argument("window must be > 0");
    const std::vector<double> base = x0.q;
    const std::size_t d = x0.dim();
    const std::vector<double> zero(d, 0.0);
    const double baseGap = signed_distance_offset(dom_, base, zero);
    if (std::abs(baseGap) > dom_.default_geom_tol()) throw std::invalid_argument("first_exterior_visit: start is not on the boundary");
    // Positions are kept as offsets from the start so sub-ulp excursions stay visible.
    const auto dist = [&](const std::vector<double>& w) { return signed_distance_offset(dom_, base, w) - baseGap; };
    const Search<decltype(dist)> search{levels_, cfg_.grazeDepth, cfg_.bridgeKappa, rng.bridge, dist,
                                        cfg_.exitRefineTol, 0.0};
    const double eps = effective_epsilon(cfg_);
    const double epsScale = std::sqrt(2.0 * eps * dt_);
    PhaseVector x(zero, x0.p);
    std::vector<double> abs(d), f;
    const auto force_at = [&](const PhaseVector& z) {
        for (std::size_t i = 0; i < d; ++i) abs[i] = base[i] + z.q[i];
        force_.eval(abs, f);
    };
    force_at(x);
    double d0 = 0.0;
    const int n = static_cast<int>(std::ceil(window / dt_ - 1e-9));
    for (int k = 0; k < n; ++k) {
        const double t0 = k * dt_;
        kick(x, f, 0.5 * dt_);
        PhaseVector z = x;
        apply_free_step(stepMoments_, stepFactor_, z, rng.main);
        if (eps > 0.0)
            for (auto& q : z.q) q += epsScale * rng.perturb.normal();
        const double d1 = dist(z.q);
        Hit hit;
        if (search.run(0, t0, x, d0, z, d1, hit)) {
            // Strictly outside means the exterior of the closure was visited.
            return {hit.time <= window, hit.time};
        }
        d0 = d1;
        force_at(z);
        kick(z, f, 0.5 * dt_);
        x = std::move(z);
    }
    return {false, window};
}

AbsorbedPathRecord simulate_absorbed(const ForceFieldSpec& force, const GaussianKernelSpec& spec, const DomainSpec& dom,
                                     const PhaseVector& x, const SimConfig& cfg, PathRng& rng) {
    return Simulator(force, spec, dom, cfg).simulate(x, rng);
}

std::pair<AbsorbedPathRecord, AbsorbedPathRecord> simulate_pair_coupled(const ForceFieldSpec& force,
                                                                        const GaussianKernelSpec& spec,
                                                                        const DomainSpec& dom, const PhaseVector& x,
                                                                        const PhaseVector& y, const SimConfig& cfg,
                                                                        std::uint64_t pathIndex) {
    SimConfig c = cfg;
    c.absorb = false;
    if (c.recordEvery == 0) c.recordEvery = 1;
    const Simulator sim(force, spec, dom, c);
    PathRng rx(cfg.seed, pathIndex), ry(cfg.seed, pathIndex);
    return {sim.simulate(x, rx), sim.simulate(y, ry)};
}

double girsanov_weight(const AbsorbedPathRecord& path, const ForceFieldSpec& force, const GaussianKernelSpec& spec,
                       double dt) {
    if (path.increments.empty() && path.stepsTaken > 0) throw std::invalid_argument("girsanov_weight: path lacks stored increments");
    if (path.stepsTaken == 0) return 0.0;
    const std::size_t d = static_cast<std::size_t>(spec.dim);
    const std::size_t steps = static_cast<std::size_t>(path.stepsTaken);
    if (path.increments.size() != steps * d || path.states.size() < steps)
        throw std::invalid_argument("girsanov_weight: path needs every state and increment");
    double logW = 0.0;
    std::vector<double> f;
    for (std::size_t k = 0; k < steps; ++k) {
        const PhaseVector& s = path.states[k];
        force.eval(s.q, f);
        for (std::size_t i = 0; i < d; ++i) {
            const double z = (f[i] - spec.gamma * s.p[i]) / spec.sigma;
            logW += z * path.increments[k * d + i] - 0.5 * z * z * dt;
        }
    }
    return logW;
}

void write_path_jsonl(std::ostream& os, std::size_t index, const AbsorbedPathRecord& rec, const std::string& configHash) {
    nlohmann::ordered_json j;
    j["configHash"] = configHash;
    j["index"] = index;
    j["status"] = rec.absorbed ? "absorbed" : "survived";
    if (rec.absorbed) {
        j["tau"] = rec.tau;
        j["exitState"] = {{"q", rec.exitState.q}, {"p", rec.exitState.p}};
        j["class"] = to_string(rec.exitClass.cls);
        j["normalDot"] = rec.exitClass.normalDot;
    } else {
        j["tau"] = nullptr;
        j["finalState"] = {{"q", rec.finalState.q}, {"p", rec.finalState.p}};
    }
    if (rec.hasLogWeight)
        j["logWeight"] = rec.logWeight;
    else
        j["logWeight"] = nullptr;
    os << j.dump() << '\n';
}

}  // namespace kfp
