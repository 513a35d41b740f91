#include "kfp/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "kfp/parallel.hpp"

namespace kfp {

namespace {

constexpr std::size_t kRowChunk = 32;

struct Extremes {
    double max = -std::numeric_limits<double>::infinity();
    double min = std::numeric_limits<double>::infinity();
    std::size_t argmax = 0, argmin = 0;
    double tMax = 0.0, tMin = 0.0;

    void scan(const std::vector<double>& u, const std::vector<unsigned char>& fixed, double t) {
        for (std::size_t k = 0; k < u.size(); ++k) {
            if (fixed[k]) continue;
            if (u[k] > max) max = u[k], argmax = k, tMax = t;
            if (u[k] < min) min = u[k], argmin = k, tMin = t;
        }
    }
};

// Upwind transport in q over time h: u_t = p u_q.
void transport_q(const Mesh1D& m, const std::vector<unsigned char>& fixed, const std::vector<double>& in,
                 std::vector<double>& out, double h, int workers) {
    const int np = m.np;
    const double dq = m.dq();
    parallel_chunks(
        static_cast<std::size_t>(np), workers,
        [&](std::size_t, std::size_t begin, std::size_t end) {
            for (std::size_t j = begin; j < end; ++j) {
                const double c = m.p(static_cast<int>(j));
                const double nu = std::abs(c) * h / dq;
                for (int i = 0; i <= m.nq; ++i) {
                    const std::size_t k = static_cast<std::size_t>(i) * np + j;
                    if (fixed[k]) {
                        out[k] = in[k];
                        continue;
                    }
                    const std::size_t up = c > 0.0 ? k + np : k - np;
                    out[k] = in[k] + nu * (in[up] - in[k]);
                }
            }
        },
        kRowChunk);
}

// Upwind transport in p over time h: u_t = (F(q) - gamma p) u_p, with
// constant extrapolation past the momentum cut-off.
void transport_p(const Mesh1D& m, const std::vector<double>& force, double gamma,
                 const std::vector<unsigned char>& fixed, const std::vector<double>& in, std::vector<double>& out,
                 double h, int workers) {
    const int np = m.np;
    const double dp = m.dp();
    parallel_chunks(
        static_cast<std::size_t>(m.nq + 1), workers,
        [&](std::size_t, std::size_t begin, std::size_t end) {
            for (std::size_t i = begin; i < end; ++i) {
                const std::size_t row = i * np;
                for (int j = 0; j < np; ++j) {
                    const std::size_t k = row + j;
                    if (fixed[k]) {
                        out[k] = in[k];
                        continue;
                    }
                    const double c = force[i] - gamma * m.p(j);
                    const double nu = std::abs(c) * h / dp;
                    double up = in[k];
                    if (c > 0.0 && j + 1 < np) up = in[k + 1];
                    if (c < 0.0 && j > 0) up = in[k - 1];
                    out[k] = in[k] + nu * (up - in[k]);
                }
            }
        },
        kRowChunk);
}

// Backward Euler for u_t = (sigma^2 / 2) u_pp along each q row, zero flux at
// the momentum cut-off and fixed values on wall nodes.
void diffuse_p(const Mesh1D& m, double sigma, const std::vector<unsigned char>& fixed, std::vector<double>& u,
               double h, int workers) {
    const int np = m.np;
    const double r = 0.5 * sigma * sigma * h / (m.dp() * m.dp());
    parallel_chunks(
        static_cast<std::size_t>(m.nq + 1), workers,
        [&](std::size_t, std::size_t begin, std::size_t end) {
            std::vector<double> lo(np), di(np), up(np), rhs(np);
            for (std::size_t i = begin; i < end; ++i) {
                double* row = u.data() + i * np;
                const unsigned char* fx = fixed.data() + i * np;
                for (int j = 0; j < np; ++j) {
                    rhs[j] = row[j];
                    if (fx[j]) {
                        lo[j] = up[j] = 0.0;
                        di[j] = 1.0;
                        continue;
                    }
                    lo[j] = j > 0 ? -r : 0.0;
                    up[j] = j + 1 < np ? -r : 0.0;
                    di[j] = 1.0 - lo[j] - up[j];
                }
                for (int j = 1; j < np; ++j) {
                    const double w = lo[j] / di[j - 1];
                    di[j] -= w * up[j - 1];
                    rhs[j] -= w * rhs[j - 1];
                }
                row[np - 1] = rhs[np - 1] / di[np - 1];
                for (int j = np - 2; j >= 0; --j) row[j] = (rhs[j] - up[j] * row[j + 1]) / di[j];
            }
        },
        kRowChunk);
}

double upper_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

// Exact q-characteristics over time h. Between nodes: cubic Hermite with
// centred slopes, clipped to the range of its four stencil values so the
// result stays a local convex bound. A foot past a wall means the
// characteristic met the outgoing wall first, so it takes the wall value.
void characteristics_q(const Mesh1D& m, const std::vector<unsigned char>& fixed, const std::vector<double>& in,
                       std::vector<double>& out, double h, int workers) {
    const int np = m.np, n = m.nq + 1;
    parallel_chunks(
        static_cast<std::size_t>(np), workers,
        [&](std::size_t, std::size_t begin, std::size_t end) {
            for (std::size_t j = begin; j < end; ++j) {
                std::vector<double> ys(n);
                for (int i = 0; i < n; ++i) ys[i] = in[static_cast<std::size_t>(i) * np + j];
                const auto interp = [&](double x) {
                    const double y = (x - m.a) / m.dq();
                    const int l = std::clamp(static_cast<int>(y), 0, n - 2);
                    const double t = y - l;
                    const double u0 = ys[l], u1 = ys[l + 1];
                    const double um = l > 0 ? ys[l - 1] : 2 * u0 - u1;
                    const double u2 = l + 2 < n ? ys[l + 2] : 2 * u1 - u0;
                    const double d0 = 0.5 * (u1 - um), d1 = 0.5 * (u2 - u0);
                    const double t2 = t * t, t3 = t2 * t;
                    const double v = (2 * t3 - 3 * t2 + 1) * u0 + (t3 - 2 * t2 + t) * d0 + (-2 * t3 + 3 * t2) * u1 +
                                     (t3 - t2) * d1;
                    const double lo = std::min({u0, u1, l > 0 ? ys[l - 1] : u0, l + 2 < n ? ys[l + 2] : u1});
                    const double hi = std::max({u0, u1, l > 0 ? ys[l - 1] : u0, l + 2 < n ? ys[l + 2] : u1});
                    return std::clamp(v, lo, hi);
                };
                const double shift = m.p(static_cast<int>(j)) * h;
                for (int i = 0; i < n; ++i) {
                    const std::size_t k = static_cast<std::size_t>(i) * np + j;
                    if (fixed[k]) {
                        out[k] = in[k];
                        continue;
                    }
                    const double foot = m.q(i) + shift;
                    if (foot >= m.b)
                        out[k] = in[static_cast<std::size_t>(m.nq) * np + j];
                    else if (foot <= m.a)
                        out[k] = in[j];
                    else
                        out[k] = interp(foot);
                }
            }
        },
        kRowChunk);
}

double phi1(double x) { return std::abs(x) < 1e-8 ? 1.0 - 0.5 * x : -std::expm1(-x) / x; }

// E[(X - c)+] for X ~ N(mu, s^2), s > 0.
double call_value(double mu, double s, double c) {
    const double z = (mu - c) / s;
    return (mu - c) * upper_tail(-z) + s * std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

// Exact Ornstein-Uhlenbeck step in p over time h at each fixed q: the new
// value is E[Iu(P_h)] with Iu the piecewise-linear interpolant (constant past
// the cut-off). The weights are nonnegative and are renormalised to sum to 1.
void ou_step_p(const Mesh1D& m, const std::vector<double>& force, double gamma, double sigma,
               const std::vector<unsigned char>& fixed, const std::vector<double>& in, std::vector<double>& out,
               double h, int workers) {
    const int np = m.np;
    const double dp = m.dp(), p0 = m.p(0);
    const double decay = std::exp(-gamma * h);
    const double var = sigma * sigma * h * phi1(2.0 * gamma * h);
    const double s = std::sqrt(std::max(var - dp * dp / 6.0, 0.0));
    parallel_chunks(
        static_cast<std::size_t>(m.nq + 1), workers,
        [&](std::size_t, std::size_t begin, std::size_t end) {
            std::vector<double> J(np + 2), w(np);
            for (std::size_t i = begin; i < end; ++i) {
                const std::size_t row = i * np;
                const double drift = force[i] * h * phi1(gamma * h);
                for (int j = 0; j < np; ++j) {
                    const std::size_t k = row + j;
                    if (fixed[k]) {
                        out[k] = in[k];
                        continue;
                    }
                    const double mu = m.p(j) * decay + drift;
                    if (s == 0.0) {
                        const double y = std::clamp((mu - p0) / dp, 0.0, static_cast<double>(np - 1));
                        const int l = std::min(static_cast<int>(y), np - 2);
                        out[k] = (1.0 - (y - l)) * in[row + l] + (y - l) * in[row + l + 1];
                        continue;
                    }
                    const int lo = std::clamp(static_cast<int>(std::floor((mu - 7 * s - p0) / dp)) - 1, 0, np - 1);
                    const int hi = std::clamp(static_cast<int>(std::ceil((mu + 7 * s - p0) / dp)) + 1, 0, np - 1);
                    // J[l + 1] = E[(P - p_l)+] for l = lo-1 .. hi+1.
                    for (int l = lo - 1; l <= hi + 1; ++l) J[l + 1] = call_value(mu, s, p0 + l * dp);
                    double total = 0.0, acc = 0.0;
                    for (int l = lo; l <= hi; ++l) {
                        double wl;
                        if (l == 0)
                            wl = 1.0 - (J[1] - J[2]) / dp;
                        else if (l == np - 1)
                            wl = (J[l] - J[l + 1]) / dp;
                        else
                            wl = (J[l] - 2.0 * J[l + 1] + J[l + 2]) / dp;
                        wl = std::max(wl, 0.0);
                        total += wl;
                        acc += wl * in[row + l];
                    }
                    out[k] = acc / total;
                }
            }
        },
        kRowChunk);
}

}  // namespace

void Mesh1D::validate() const {
    if (!(a < b) || !std::isfinite(a) || !std::isfinite(b)) throw std::invalid_argument("mesh needs a < b");
    if (!(P > 0.0) || !std::isfinite(P)) throw std::invalid_argument("mesh momentum cut-off P must be > 0");
    if (nq < 2 || np < 2) throw std::invalid_argument("mesh needs nq >= 2 and np >= 2");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("mesh dt must be > 0");
}

double default_momentum_cutoff(double sigma, double gamma, double horizon) {
    return 6.0 * sigma / std::sqrt(std::max(2.0 * std::max(gamma, 0.0), 1.0)) * std::max(1.0, std::sqrt(horizon));
}

double max_stable_dt(const Mesh1D& mesh, const ForceFieldSpec& force, double gamma, GridScheme scheme, double cfl) {
    if (scheme == GridScheme::SemiLagrangian) return std::numeric_limits<double>::infinity();
    const double pMax = mesh.P - 0.5 * mesh.dp();
    double cMax = 0.0;
    for (int i = 0; i <= mesh.nq; ++i) {
        const double f = force.component(mesh.q(i));
        cMax = std::max({cMax, std::abs(f - gamma * pMax), std::abs(f + gamma * pMax)});
    }
    // Each transport runs as two half steps.
    double dt = std::numeric_limits<double>::infinity();
    if (pMax > 0.0) dt = std::min(dt, 2.0 * cfl * mesh.dq() / pMax);
    if (cMax > 0.0) dt = std::min(dt, 2.0 * cfl * mesh.dp() / cMax);
    return dt;
}

Mesh1D make_mesh(double a, double b, double P, int nq, int np, const ForceFieldSpec& force, double gamma,
                 double cfl) {
    Mesh1D m{a, b, P, nq, np, 1.0};
    m.validate();
    m.dt = cfl * max_stable_dt(m, force, gamma, GridScheme::Upwind);
    if (!std::isfinite(m.dt)) m.dt = 1.0;
    return m;
}

void GridProblem::validate() const {
    force.validate();
    if (!f || !g) throw std::invalid_argument("grid problem needs f and g");
    if (!std::isfinite(gamma)) throw std::invalid_argument("gamma must be finite");
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("sigma must be > 0");
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw std::invalid_argument("grid horizon must be > 0");
}

double GridSolution::interpolate(double q, double p) const {
    const double x = std::clamp((q - mesh.a) / mesh.dq(), 0.0, static_cast<double>(mesh.nq));
    const double y = std::clamp((p - mesh.p(0)) / mesh.dp(), 0.0, static_cast<double>(mesh.np - 1));
    const int i = std::min(static_cast<int>(x), mesh.nq - 1);
    const int j = std::min(static_cast<int>(y), mesh.np - 2);
    const double s = x - i, w = y - j;
    return (1 - s) * ((1 - w) * value(i, j) + w * value(i, j + 1)) +
           s * ((1 - w) * value(i + 1, j) + w * value(i + 1, j + 1));
}

GridSolution solve_kfp_1d(const GridProblem& problem, const Mesh1D& mesh, const GridOptions& opts) {
    problem.validate();
    mesh.validate();
    if (opts.recordEvery < 0) throw std::invalid_argument("recordEvery must be >= 0");
    if (opts.scheme == GridScheme::SemiLagrangian && mesh.nq < 3)
        throw std::invalid_argument("semi-Lagrangian scheme needs nq >= 3");
    const double limit = max_stable_dt(mesh, problem.force, problem.gamma, opts.scheme);
    if (mesh.dt > limit * (1.0 + 1e-12))
        throw std::invalid_argument("unstable mesh: dt exceeds the transport CFL limit " + std::to_string(limit));
    const int workers = resolve_workers(opts.workers);

    GridSolution s;
    s.scheme = opts.scheme;
    s.mesh = mesh;
    s.force = problem.force;
    s.gamma = problem.gamma;
    s.sigma = problem.sigma;
    s.steps = std::max(1, static_cast<int>(std::ceil(problem.horizon / mesh.dt - 1e-9)));
    const double dt = problem.horizon / s.steps;
    s.mesh.dt = dt;

    const int np = mesh.np;
    const std::size_t n = static_cast<std::size_t>(mesh.nodes());
    s.fixed.assign(n, 0);
    std::vector<double> u(n), tmp(n), force(static_cast<std::size_t>(mesh.nq) + 1);
    for (int i = 0; i <= mesh.nq; ++i) force[i] = problem.force.component(mesh.q(i));
    s.dataMax = -std::numeric_limits<double>::infinity();
    s.dataMin = std::numeric_limits<double>::infinity();
    s.homogeneous = true;
    for (int i = 0; i <= mesh.nq; ++i)
        for (int j = 0; j < np; ++j) {
            const std::size_t k = static_cast<std::size_t>(i) * np + j;
            const PhaseVector x = PhaseVector::one_d(mesh.q(i), mesh.p(j));
            const bool out = (i == 0 && x.p[0] < 0.0) || (i == mesh.nq && x.p[0] > 0.0);
            s.fixed[k] = out;
            u[k] = out ? problem.g(x) : problem.f(x);
            if (!std::isfinite(u[k])) throw std::invalid_argument("grid data must be finite");
            if (out && u[k] != 0.0) s.homogeneous = false;
            s.dataMax = std::max(s.dataMax, u[k]);
            s.dataMin = std::min(s.dataMin, u[k]);
        }

    Extremes ext;
    ext.scan(u, s.fixed, 0.0);
    s.frames.push_back({0.0, u});
    for (int step = 1; step <= s.steps; ++step) {
        if (step == s.steps) s.previous = {(step - 1) * dt, u};
        if (opts.scheme == GridScheme::Upwind) {
            transport_q(mesh, s.fixed, u, tmp, 0.5 * dt, workers);
            transport_p(mesh, force, problem.gamma, s.fixed, tmp, u, 0.5 * dt, workers);
            diffuse_p(mesh, problem.sigma, s.fixed, u, dt, workers);
            transport_p(mesh, force, problem.gamma, s.fixed, u, tmp, 0.5 * dt, workers);
            transport_q(mesh, s.fixed, tmp, u, 0.5 * dt, workers);
        } else {
            characteristics_q(mesh, s.fixed, u, tmp, 0.5 * dt, workers);
            ou_step_p(mesh, force, problem.gamma, problem.sigma, s.fixed, tmp, u, dt, workers);
            characteristics_q(mesh, s.fixed, u, tmp, 0.5 * dt, workers);
            u.swap(tmp);
        }
        const double t = step == s.steps ? problem.horizon : step * dt;
        ext.scan(u, s.fixed, t);
        if (step == s.steps || (opts.recordEvery > 0 && step % opts.recordEvery == 0)) s.frames.push_back({t, u});
    }
    s.interiorMax = ext.max;
    s.interiorMin = ext.min;
    s.argmaxT = ext.tMax;
    s.argmaxQ = mesh.q(static_cast<int>(ext.argmax / np));
    s.argmaxP = mesh.p(static_cast<int>(ext.argmax % np));
    s.argminT = ext.tMin;
    s.argminQ = mesh.q(static_cast<int>(ext.argmin / np));
    s.argminP = mesh.p(static_cast<int>(ext.argmin % np));

    // Chance that a path started with |p| <= P/2 reaches the cut-off before
    // the horizon, times the data oscillation. Variation of constants gives
    // sup|p| <= A (|p0| + sup|F| T + sigma sup_{u <= U} |W_u|) with
    // A = max(1, e^{-gamma T}) and U = (e^{2 gamma T} - 1) / (2 gamma), the
    // time change of the Ornstein-Uhlenbeck convolution; the reflection
    // principle bounds the Brownian term.
    const double T = problem.horizon, g = problem.gamma;
    const double fSup = problem.force.sup_norm(DomainSpec::interval(mesh.a, mesh.b));
    const double A = std::max(1.0, std::exp(-g * T));
    const double U = T * phi1(-2.0 * g * T);
    const double m = (mesh.P / A - 0.5 * mesh.P - fSup * T) / problem.sigma;
    const double tail = m > 0.0 ? std::min(1.0, 4.0 * upper_tail(m / std::sqrt(U))) : 1.0;
    s.leakEstimate = (s.dataMax - s.dataMin) * tail;
    return s;
}

MaxPrincipleReport check_maximum_principle(const GridSolution& s, double tol) {
    MaxPrincipleReport r;
    r.dataMax = s.dataMax;
    r.dataMin = s.dataMin;
    r.solutionMax = s.interiorMax;
    r.solutionMin = s.interiorMin;
    r.upperMargin = s.dataMax - s.interiorMax;
    r.lowerMargin = s.interiorMin - s.dataMin;
    r.argmaxT = s.argmaxT;
    r.argmaxQ = s.argmaxQ;
    r.argmaxP = s.argmaxP;
    r.holds = r.upperMargin >= -tol && r.lowerMargin >= -tol;
    return r;
}

GridSolution dual_transform(const GridSolution& s, double gamma) {
    if (s.dual) throw std::invalid_argument("solution is already a dual solution");
    if (!s.homogeneous) throw std::invalid_argument("dual transform needs g = 0 on the outgoing wall");
    const int np = s.mesh.np;
    const auto flip = [np](const std::vector<double>& u, double scale) {
        std::vector<double> v(u.size());
        for (std::size_t row = 0; row < u.size(); row += np)
            for (int j = 0; j < np; ++j) v[row + j] = scale * u[row + (np - 1 - j)];
        return v;
    };
    GridSolution d = s;
    d.dual = true;
    d.gamma = gamma;
    for (auto& f : d.frames) f.u = flip(f.u, std::exp(-gamma * f.t));
    d.previous.u = flip(s.previous.u, std::exp(-gamma * s.previous.t));
    std::vector<double> fx(s.fixed.begin(), s.fixed.end());
    fx = flip(fx, 1.0);
    for (std::size_t k = 0; k < fx.size(); ++k) d.fixed[k] = fx[k] != 0.0;
    // Extremes are not tracked through the transform.
    d.interiorMax = d.interiorMin = std::numeric_limits<double>::quiet_NaN();
    return d;
}

ResidualReport dual_residual(const GridSolution& d, int margin, int stride) {
    return dual_residual(d, d.previous, d.final_frame(), margin, stride);
}

ResidualReport dual_residual(const GridSolution& d, const GridFrame& earlier, const GridFrame& later, int margin,
                             int stride) {
    if (!d.dual) throw std::invalid_argument("dual_residual needs a dual_transform output");
    if (stride < 1) throw std::invalid_argument("stride must be >= 1");
    if (margin < stride) throw std::invalid_argument("margin must be >= stride");
    if (!(later.t > earlier.t)) throw std::invalid_argument("frames must be in time order");
    const Mesh1D& m = d.mesh;
    const int np = m.np;
    const double hq = stride * m.dq(), hp = stride * m.dp();
    const std::size_t sq = static_cast<std::size_t>(stride) * np, sp = static_cast<std::size_t>(stride);
    const auto& v0 = earlier.u;
    const auto& v1 = later.u;
    const double ht = later.t - earlier.t;
    const double g = d.gamma, s2 = 0.5 * d.sigma * d.sigma;
    const auto op = [&](const std::vector<double>& v, int i, int j) {
        const std::size_t k = static_cast<std::size_t>(i) * np + j;
        const double p = m.p(j);
        const double vq = (v[k + sq] - v[k - sq]) / (2 * hq);
        const double vp = (v[k + sp] - v[k - sp]) / (2 * hp);
        const double vpp = (v[k + sp] - 2 * v[k] + v[k - sp]) / (hp * hp);
        return -p * vq - (d.force.component(m.q(i)) + g * p) * vp - g * v[k] + s2 * vpp;
    };
    ResidualReport r;
    double sum2 = 0.0;
    for (int i = margin; i <= m.nq - margin; ++i)
        for (int j = margin; j < np - margin; ++j) {
            const std::size_t k = static_cast<std::size_t>(i) * np + j;
            const double res = (v1[k] - v0[k]) / ht - 0.5 * (op(v0, i, j) + op(v1, i, j));
            if (std::abs(res) > r.maxAbs) {
                r.maxAbs = std::abs(res);
                r.worstQ = m.q(i);
                r.worstP = m.p(j);
            }
            r.scale = std::max(r.scale, std::abs(v1[k]));
            sum2 += res * res;
            ++r.nodes;
        }
    r.rms = r.nodes ? std::sqrt(sum2 / r.nodes) : 0.0;
    return r;
}

}  // namespace kfp
