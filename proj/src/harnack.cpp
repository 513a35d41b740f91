#include "kfp/harnack.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace kfp {

namespace {

struct Shape {
    double h1, h2, h3;
};

Shape shape(double s) { return {s * s * (3.0 - 2.0 * s), s * s * (s - 1.0), s * (1.0 - s) * (1.0 - 2.0 * s)}; }
Shape shape_d(double s) { return {6.0 * s * (1.0 - s), s * (3.0 * s - 2.0), 1.0 + 6.0 * s * (s - 1.0)}; }
Shape shape_dd(double s) { return {6.0 - 12.0 * s, 6.0 * s - 2.0, 12.0 * s - 6.0}; }

// Roots of a s^2 + b s + c in (0, 1).
std::vector<double> roots_in_unit(double a, double b, double c) {
    std::vector<double> out;
    auto keep = [&](double s) {
        if (s > 0.0 && s < 1.0) out.push_back(s);
    };
    if (a == 0.0) {
        if (b != 0.0) keep(-c / b);
        return out;
    }
    const double disc = b * b - 4.0 * a * c;
    if (disc < 0.0) return out;
    const double sq = std::sqrt(disc);
    const double qq = -0.5 * (b + std::copysign(sq, b));
    if (qq != 0.0) {
        keep(qq / a);
        keep(c / qq);
    } else {
        keep(0.0);
    }
    return out;
}

struct Coord {
    double q, p, dq, dp;
};

Coord coord(const HarnackPath& path, std::size_t i) {
    return {path.from.q[i], path.from.p[i], path.to.q[i] - path.from.q[i], path.to.p[i] - path.from.p[i]};
}

double pos(const Coord& c, double D, double s) {
    const Shape h = shape(s);
    return c.q + c.dq * h.h1 + D * c.dp * h.h2 + D * c.p * h.h3;
}
double vel(const Coord& c, double D, double s) {
    const Shape h = shape_d(s);
    return c.dq * h.h1 / D + c.dp * h.h2 + c.p * h.h3;
}
double acc(const Coord& c, double D, double s) {
    const Shape h = shape_dd(s);
    return (c.dq * h.h1 / D + c.dp * h.h2 + c.p * h.h3) / D;
}

// Exact range of one coordinate of phi over the piece.
std::pair<double, double> position_range(const Coord& c, double D) {
    double lo = std::min(c.q, c.q + c.dq), hi = std::max(c.q, c.q + c.dq);
    // phi'(s) D = dq h1' + D dp h2' + D p h3' as a quadratic in s.
    const double a2 = -6.0 * c.dq + 3.0 * D * c.dp + 6.0 * D * c.p;
    const double a1 = 6.0 * c.dq - 2.0 * D * c.dp - 6.0 * D * c.p;
    const double a0 = D * c.p;
    for (double s : roots_in_unit(a2, a1, a0)) {
        const double v = pos(c, D, s);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    return {lo, hi};
}

void fill_suprema(HarnackPath& path) {
    const double D = path.delta;
    double dev2 = 0.0, vel2 = 0.0, acc2 = 0.0;
    for (std::size_t i = 0; i < path.from.dim(); ++i) {
        const Coord c = coord(path, i);
        const auto [lo, hi] = position_range(c, D);
        const double dev = std::max(std::abs(lo - c.q), std::abs(hi - c.q));
        double v = std::max(std::abs(vel(c, D, 0.0)), std::abs(vel(c, D, 1.0)));
        const double a0 = acc(c, D, 0.0), a1 = acc(c, D, 1.0);
        if (a0 * a1 < 0.0) v = std::max(v, std::abs(vel(c, D, a0 / (a0 - a1))));
        const double a = std::max(std::abs(a0), std::abs(a1));
        dev2 += dev * dev;
        vel2 += v * v;
        acc2 += a * a;
    }
    path.supDeviation = std::sqrt(dev2);
    path.supVelocity = std::sqrt(vel2);
    path.supAcceleration = std::sqrt(acc2);
}

double ratio(double sup, double bound) {
    if (bound > 0.0) return sup / bound;
    return sup > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
}

}  // namespace

std::vector<double> HarnackPath::position(double t) const {
    std::vector<double> out(from.dim());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = pos(coord(*this, i), delta, t / delta);
    return out;
}

std::vector<double> HarnackPath::velocity(double t) const {
    std::vector<double> out(from.dim());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = vel(coord(*this, i), delta, t / delta);
    return out;
}

std::vector<double> HarnackPath::acceleration(double t) const {
    std::vector<double> out(from.dim());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = acc(coord(*this, i), delta, t / delta);
    return out;
}

std::vector<double> HarnackPath::jerk() const {
    std::vector<double> out(from.dim());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const Coord c = coord(*this, i);
        out[i] = (-12.0 * c.dq / delta + 6.0 * c.dp + 12.0 * c.p) / (delta * delta);
    }
    return out;
}

double HarnackPath::deviation_ratio(double C) const { return ratio(supDeviation, C * scale); }
double HarnackPath::velocity_ratio(double C) const { return ratio(supVelocity, C * scale / delta); }
double HarnackPath::acceleration_ratio(double C) const { return ratio(supAcceleration, C * scale / (delta * delta)); }

HarnackPath hermite_bridge(const PhaseVector& x, const PhaseVector& y, double delta) {
    if (!x.valid() || !y.valid() || x.dim() != y.dim()) throw std::invalid_argument("hermite_bridge: bad endpoints");
    if (!(delta > 0.0) || !std::isfinite(delta)) throw std::invalid_argument("hermite_bridge: delta must be positive");
    HarnackPath path;
    path.from = x;
    path.to = y;
    path.delta = delta;
    std::vector<double> dq(x.dim()), dp(x.dim());
    for (std::size_t i = 0; i < x.dim(); ++i) {
        dq[i] = y.q[i] - x.q[i];
        dp[i] = y.p[i] - x.p[i];
    }
    path.scale = norm(dq) + delta * norm(dp) + delta * norm(x.p);
    fill_suprema(path);
    return path;
}

void HarnackChainSpec::validate() const {
    domain.validate();
    if (domain.kind != DomainSpec::Kind::Interval)
        throw std::invalid_argument("harnack chain: only interval domains are supported");
    const double half = 0.5 * (domain.b - domain.a);
    if (!(delta > 0.0) || !(delta <= half)) throw std::invalid_argument("harnack chain: delta must lie in (0, half-length]");
    if (!(k >= 0.0) || !std::isfinite(k)) throw std::invalid_argument("harnack chain: k must be finite and >= 0");
    if (!(T > 0.0) || !std::isfinite(T)) throw std::invalid_argument("harnack chain: T must be positive");
    if (!(epsilon > 0.0)) throw std::invalid_argument("harnack chain: epsilon must be positive");
    if (!(C > 0.0)) throw std::invalid_argument("harnack chain: C must be positive");
    if (!(R > 0.0) || !(DeltaH > 0.0)) throw std::invalid_argument("harnack chain: R and DeltaH must be positive");
    if (!(DeltaH + 0.5 * R * R < 1.0)) throw std::invalid_argument("harnack chain: DeltaH + R^2/2 must be < 1");
    if (!(CKT > 1.0)) throw std::invalid_argument("harnack chain: CKT must exceed 1");
}

PhaseVector HarnackChainSpec::node(std::size_t i) const {
    const std::size_t iq = i / static_cast<std::size_t>(coverP), ip = i % static_cast<std::size_t>(coverP);
    const double lo = domain.a + deltaK, hi = domain.b - deltaK;
    const double q = coverQ > 1 ? lo + (hi - lo) * static_cast<double>(iq) / (coverQ - 1) : 0.5 * (lo + hi);
    const double p = coverP > 1 ? -k + 2.0 * k * static_cast<double>(ip) / (coverP - 1) : 0.0;
    return PhaseVector::one_d(q, p);
}

namespace {

std::size_t segment_index(const HarnackChainSpec& c, double s) {
    if (s <= 0.0) return 0;
    const auto m = static_cast<std::size_t>(std::floor(s / c.Delta));
    return std::min(m, c.segments.size() - 1);
}

}  // namespace

double HarnackChainSpec::position(double s) const {
    const std::size_t m = segment_index(*this, s);
    return segments[m].position(s - static_cast<double>(m) * Delta)[0];
}

double HarnackChainSpec::velocity(double s) const {
    const std::size_t m = segment_index(*this, s);
    return segments[m].velocity(s - static_cast<double>(m) * Delta)[0];
}

double HarnackChainSpec::acceleration(double s) const {
    const std::size_t m = segment_index(*this, s);
    return segments[m].acceleration(s - static_cast<double>(m) * Delta)[0];
}

HarnackChainSpec build_admissible_chain(HarnackChainSpec spec, const PhaseVector& x, const PhaseVector& y) {
    spec.validate();
    for (const PhaseVector* z : {&x, &y}) {
        if (!z->valid() || z->dim() != 1) throw std::invalid_argument("harnack chain: endpoints must be 1-d phase points");
        const double slack = 1e-12 * spec.domain.scale();
        if (std::abs(z->p[0]) > spec.k + slack || signed_distance(spec.domain, z->q) < spec.delta - slack)
            throw std::invalid_argument("harnack chain: endpoints must lie in K");
    }
    spec.x = x;
    spec.y = y;
    spec.deltaK = std::min(spec.delta, spec.domain.sphere_radius());
    spec.coverEps = 0.5 * spec.deltaK;
    spec.coverRadius = spec.coverEps / (8.0 * spec.C);
    spec.adjacency = spec.coverEps / (4.0 * spec.C);
    const double MK = spec.k + 1.0;
    const double lengthQ = (spec.domain.b - spec.domain.a) - 2.0 * spec.deltaK;
    const double lengthP = 2.0 * spec.k;

    // Lattice cells of side h have half-diagonal h / sqrt(2) = coverRadius, so
    // the balls cover K'. Refine until Delta is short enough for the bridges
    // to stay within coverEps of their nodes.
    double h = std::sqrt(2.0) * spec.coverRadius;
    const double deltaCap = std::min(spec.coverEps / (2.0 * MK * spec.C), 1.0);
    for (;;) {
        spec.coverQ = lengthQ > 0.0 ? static_cast<int>(std::ceil(lengthQ / h)) + 1 : 1;
        spec.coverP = lengthP > 0.0 ? static_cast<int>(std::ceil(lengthP / h)) + 1 : 1;
        spec.N = static_cast<std::size_t>(spec.coverQ) * static_cast<std::size_t>(spec.coverP);
        if (spec.N > spec.maxNodes) throw std::runtime_error("harnack chain: cover exceeds maxNodes");
        spec.Delta = spec.T / static_cast<double>(spec.N + 1);
        if (spec.Delta < deltaCap) break;
        h *= 0.5;
    }

    const auto nearest = [&](const PhaseVector& z) {
        const double lo = spec.domain.a + spec.deltaK;
        const auto pick = [](double v, double lo_, double len, int n) {
            if (n == 1) return 0;
            const long i = std::lround((v - lo_) / len * (n - 1));
            return static_cast<int>(std::clamp<long>(i, 0, n - 1));
        };
        const int iq = pick(z.q[0], lo, lengthQ, spec.coverQ);
        const int ip = pick(z.p[0], -spec.k, lengthP, spec.coverP);
        return static_cast<std::size_t>(iq) * spec.coverP + ip;
    };
    const std::size_t start = nearest(x), finish = nearest(y);

    // Breadth-first search over the cover graph (edges: centres within
    // `adjacency`), from the node next to x.
    const double hq = spec.coverQ > 1 ? lengthQ / (spec.coverQ - 1) : 0.0;
    const double hp = spec.coverP > 1 ? lengthP / (spec.coverP - 1) : 0.0;
    std::vector<std::pair<int, int>> offsets;
    for (int di = -2; di <= 2; ++di)
        for (int dj = -2; dj <= 2; ++dj) {
            if (di == 0 && dj == 0) continue;
            if (std::hypot(di * hq, dj * hp) <= spec.adjacency * (1.0 + 1e-12)) offsets.emplace_back(di, dj);
        }
    constexpr std::size_t kUnseen = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> parent(spec.N, kUnseen);
    parent[start] = start;
    std::deque<std::size_t> queue{start};
    std::size_t reached = 1;
    while (!queue.empty()) {
        const std::size_t cur = queue.front();
        queue.pop_front();
        const int iq = static_cast<int>(cur / spec.coverP), ip = static_cast<int>(cur % spec.coverP);
        for (const auto& [di, dj] : offsets) {
            const int nq = iq + di, np = ip + dj;
            if (nq < 0 || nq >= spec.coverQ || np < 0 || np >= spec.coverP) continue;
            const std::size_t nb = static_cast<std::size_t>(nq) * spec.coverP + np;
            if (parent[nb] != kUnseen) continue;
            parent[nb] = cur;
            ++reached;
            queue.push_back(nb);
        }
    }
    if (reached != spec.N) throw std::runtime_error("harnack chain: cover graph is disconnected");

    std::vector<std::size_t> route;
    for (std::size_t v = finish; v != start; v = parent[v]) route.push_back(v);
    route.push_back(start);
    std::reverse(route.begin(), route.end());
    spec.walkEdges = route.size() - 1;
    if (spec.walkEdges > spec.N - 1) throw std::runtime_error("harnack chain: walk longer than N - 1 edges");
    spec.walk = route;
    spec.walk.resize(spec.N, finish);  // pad with loops at the last node

    spec.segments.clear();
    spec.segments.reserve(spec.N + 1);
    spec.segments.push_back(hermite_bridge(x, spec.node(spec.walk.front()), spec.Delta));
    for (std::size_t e = 0; e + 1 < spec.N; ++e)
        spec.segments.push_back(hermite_bridge(spec.node(spec.walk[e]), spec.node(spec.walk[e + 1]), spec.Delta));
    spec.segments.push_back(hermite_bridge(spec.node(spec.walk.back()), y, spec.Delta));

    spec.M = 0.0;
    spec.supAcceleration = 0.0;
    spec.minWallDistance = std::numeric_limits<double>::infinity();
    for (const HarnackPath& seg : spec.segments) {
        spec.M = std::max(spec.M, seg.supVelocity + seg.supAcceleration);
        spec.supAcceleration = std::max(spec.supAcceleration, seg.supAcceleration);
        const auto [lo, hi] = position_range(coord(seg, 0), seg.delta);
        spec.minWallDistance = std::min({spec.minWallDistance, lo - spec.domain.a, spec.domain.b - hi});
    }
    spec.MBound = spec.deltaK / (spec.Delta * spec.Delta);

    const double c = spec.DeltaH + 0.5 * spec.R * spec.R;
    spec.rKT = std::min(std::sqrt(spec.deltaK / (1.0 + spec.M)), 0.5);
    const double rCap = std::min({2.0 * std::pow(spec.R, 3) / (spec.M * c * c), spec.R / (spec.M * c),
                                  std::sqrt(spec.epsilon / (1.0 - c)), spec.rKT});
    // n = floor(T / alpha_max) + 1 keeps alpha strictly below its cap.
    spec.nEps = std::floor(spec.T / (rCap * rCap * c)) + 1.0;
    spec.alpha = spec.T / spec.nEps;
    spec.rEps = std::sqrt(spec.alpha / c);
    spec.populated = true;
    return spec;
}

namespace {

// D = phi(u) - phi(s) - (u - s) phi'(s) and V = phi'(u) - phi'(s), summed
// piece by piece in Taylor form so nothing cancels.
std::pair<double, double> link_increments(const HarnackChainSpec& c, double s, double u) {
    double D = 0.0, V = 0.0, cur = s;
    std::size_t m = segment_index(c, s);
    while (cur < u && m < c.segments.size()) {
        const double knot = static_cast<double>(m + 1) * c.Delta;
        const double hi = m + 1 == c.segments.size() ? u : std::min(u, knot);
        const double h = hi - cur;
        if (h > 0.0) {
            const HarnackPath& seg = c.segments[m];
            const double a = seg.acceleration(cur - static_cast<double>(m) * c.Delta)[0];
            const double j = seg.jerk()[0];
            D += h * V + 0.5 * h * h * a + h * h * h / 6.0 * j;
            V += h * a + 0.5 * h * h * j;
        }
        cur = hi;
        ++m;
    }
    return {D, V};
}

std::string fmt(const std::string& what, double value, double limit) {
    std::ostringstream os;
    os.precision(6);
    os << what << ": " << value << " vs " << limit;
    return os.str();
}

}  // namespace

ChainReport verify_chain_membership(const HarnackChainSpec& chain, double r, int gridPoints, double enumerateLimit) {
    if (!chain.populated) throw std::invalid_argument("verify_chain_membership: chain not built");
    if (gridPoints < 2) throw std::invalid_argument("verify_chain_membership: need at least 2 grid points");
    ChainReport rep;
    rep.r = r > 0.0 ? r : chain.rEps;
    auto flag = [&](int& counter, std::string msg) {
        ++counter;
        if (rep.violations.size() < 20) rep.violations.push_back(std::move(msg));
    };

    // Path-space membership.
    const double T = chain.T;
    const double scaleQ = chain.domain.scale();
    const double scaleP = std::max({1.0, std::abs(chain.x.p[0]), std::abs(chain.y.p[0])});
    // Evaluated on the end pieces directly: with |phi''| ~ 1/Delta^2 the
    // rounding of s = T would dominate.
    const HarnackPath& first = chain.segments.front();
    const HarnackPath& last = chain.segments.back();
    rep.endpointError = std::max({std::abs(first.position(0.0)[0] - chain.x.q[0]) / scaleQ,
                                  std::abs(first.velocity(0.0)[0] - chain.x.p[0]) / scaleP,
                                  std::abs(last.position(last.delta)[0] - chain.y.q[0]) / scaleQ,
                                  std::abs(last.velocity(last.delta)[0] - chain.y.p[0]) / scaleP});
    if (rep.endpointError > 1e-12) flag(rep.pathViolations, fmt("endpoint mismatch", rep.endpointError, 1e-12));
    for (std::size_t m = 0; m + 1 < chain.segments.size(); ++m) {
        const HarnackPath& a = chain.segments[m];
        const HarnackPath& b = chain.segments[m + 1];
        const double dq = std::abs(a.position(a.delta)[0] - b.position(0.0)[0]) / scaleQ;
        const double dv = std::abs(a.velocity(a.delta)[0] - b.velocity(0.0)[0]) / std::max(1.0, chain.k);
        rep.knotMismatch = std::max({rep.knotMismatch, dq, dv});
    }
    if (rep.knotMismatch > 1e-12) flag(rep.pathViolations, fmt("C1 gluing", rep.knotMismatch, 1e-12));

    rep.gridPoints = gridPoints;
    rep.gridMinDistance = std::numeric_limits<double>::infinity();
    const double floorDist = 0.5 * chain.deltaK;
    for (int i = 0; i < gridPoints; ++i) {
        const double s = T * static_cast<double>(i) / (gridPoints - 1);
        const double speed = std::abs(chain.velocity(s)) + std::abs(chain.acceleration(s));
        const double dist = signed_distance(chain.domain, {chain.position(s)});
        rep.gridSupSpeed = std::max(rep.gridSupSpeed, speed);
        rep.gridMinDistance = std::min(rep.gridMinDistance, dist);
    }
    if (rep.gridSupSpeed > chain.M * (1.0 + 1e-12)) flag(rep.pathViolations, fmt("speed on grid", rep.gridSupSpeed, chain.M));
    if (!(rep.gridMinDistance > floorDist)) flag(rep.pathViolations, fmt("wall distance on grid", rep.gridMinDistance, floorDist));
    if (!(chain.minWallDistance > floorDist))
        flag(rep.pathViolations, fmt("certified wall distance", chain.minWallDistance, floorDist));

    // Step 1: z + (-r^2 t p0 + r^3 q, r p) stays in the domain.
    const double rr = rep.r;
    rep.boxShift = chain.M * rr * rr + rr * rr * rr;
    if (!(rep.boxShift < chain.deltaK)) flag(rep.boxViolations, fmt("box shift", rep.boxShift, chain.deltaK));

    // Step 2.
    const double c = chain.DeltaH + 0.5 * chain.R * chain.R;
    rep.alpha = rr * rr * c;
    rep.tHat = -rep.alpha / (rr * rr);
    rep.tLow = -chain.DeltaH - chain.R * chain.R;
    rep.tHigh = -chain.DeltaH;
    if (!(rep.tHat > rep.tLow && rep.tHat <= rep.tHigh)) flag(rep.boxViolations, fmt("t window", rep.tHat, rep.tHigh));
    const double R3 = std::pow(chain.R, 3);
    const double links = std::floor(T / rep.alpha * (1.0 + 1e-14));
    rep.linksChecked = links;
    if (links <= enumerateLimit) {
        rep.enumerated = true;
        const auto n = static_cast<std::size_t>(links);
        for (std::size_t j = 0; j < n; ++j) {
            const double s = static_cast<double>(j) * rep.alpha;
            const double u = std::min(T, static_cast<double>(j + 1) * rep.alpha);
            const auto [D, V] = link_increments(chain, s, u);
            const double qHat = std::abs(D) / (rr * rr * rr);
            const double pHat = std::abs(V) / rr;
            rep.maxQHat = std::max(rep.maxQHat, qHat);
            rep.maxPHat = std::max(rep.maxPHat, pHat);
            if (!(qHat < R3)) flag(rep.boxViolations, fmt("q-hat at j=" + std::to_string(j), qHat, R3));
            if (!(pHat < chain.R)) flag(rep.boxViolations, fmt("p-hat at j=" + std::to_string(j), pHat, chain.R));
        }
    } else {
        // |D| <= alpha^2 / 2 max|phi''| and |V| <= alpha max|phi''| over
        // [s_j, s_j + alpha]; |phi''| is affine on each piece, so its maximum
        // over any link touching pieces m and m + 1 is their end values.
        const std::size_t S = chain.segments.size();
        std::vector<double> pieceAcc(S);
        for (std::size_t m = 0; m < S; ++m) pieceAcc[m] = chain.segments[m].supAcceleration;
        const std::size_t reach = static_cast<std::size_t>(std::ceil(rep.alpha / chain.Delta));
        for (std::size_t m = 0; m < S; ++m) {
            double A = 0.0;
            for (std::size_t k = m; k < std::min(S, m + reach + 1); ++k) A = std::max(A, pieceAcc[k]);
            const double qHat = 0.5 * rep.alpha * rep.alpha * A / (rr * rr * rr);
            const double pHat = rep.alpha * A / rr;
            rep.maxQHat = std::max(rep.maxQHat, qHat);
            rep.maxPHat = std::max(rep.maxPHat, pHat);
            if (!(qHat < R3)) flag(rep.boxViolations, fmt("q-hat on piece " + std::to_string(m), qHat, R3));
            if (!(pHat < chain.R)) flag(rep.boxViolations, fmt("p-hat on piece " + std::to_string(m), pHat, chain.R));
        }
    }
    return rep;
}

HarnackConstant harnack_constant(double CKT, double n) {
    if (!(CKT > 1.0) || !std::isfinite(CKT)) throw std::invalid_argument("harnack_constant: CKT must exceed 1");
    if (!(n >= 1.0) || std::floor(n) != n || !std::isfinite(n))
        throw std::invalid_argument("harnack_constant: n must be a positive integer");
    HarnackConstant out;
    out.n = n;
    out.logValue = n * std::log(CKT);
    out.value = std::pow(CKT, n);
    return out;
}

HarnackConstant harnack_constant(double CKT, const HarnackChainSpec& chain) {
    if (!chain.populated) throw std::invalid_argument("harnack_constant: chain not built");
    return harnack_constant(CKT, chain.nEps);
}

HarnackSpotCheck harnack_gaussian_spot_check(const GaussianKernelSpec& spec, const HarnackChainSpec& chain,
                                             const PhaseVector& y0, double t, int lattice) {
    spec.validate();
    if (spec.dim != 1 || y0.dim() != 1) throw std::invalid_argument("harnack spot check: d = 1 only");
    if (!chain.populated) throw std::invalid_argument("harnack spot check: chain not built");
    if (!(t > 0.0) || lattice < 2) throw std::invalid_argument("harnack spot check: need t > 0 and lattice >= 2");
    const double lo = chain.domain.a + chain.delta, hi = chain.domain.b - chain.delta;
    double logSup = -std::numeric_limits<double>::infinity();
    double logInf = std::numeric_limits<double>::infinity();
    for (int i = 0; i < lattice; ++i)
        for (int j = 0; j < lattice; ++j) {
            const double q = lo + (hi - lo) * i / (lattice - 1);
            const double p = -chain.k + 2.0 * chain.k * j / (lattice - 1);
            const PhaseVector z = PhaseVector::one_d(q, p);
            logSup = std::max(logSup, log_density(spec, t, z, y0));
            logInf = std::min(logInf, log_density(spec, t + chain.T, z, y0));
        }
    HarnackSpotCheck out;
    out.supEarly = std::exp(logSup);
    out.infLate = std::exp(logInf);
    out.logFitted = logSup - logInf;
    out.fittedC = std::exp(out.logFitted);
    out.logReturned = harnack_constant(chain.CKT, chain).logValue;
    return out;
}

}  // namespace kfp
