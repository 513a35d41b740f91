#include <doctest.h>

#include <cmath>

#include "kfp/harnack.hpp"
#include "kfp/rng.hpp"

using namespace kfp;

namespace {

// Power-basis form of the cubic: c0 + c1 t + c2 t^2 + c3 t^3.
struct Cubic {
    double c0, c1, c2, c3;
    double f(double t) const { return c0 + t * (c1 + t * (c2 + t * c3)); }
    double df(double t) const { return c1 + t * (2 * c2 + 3 * c3 * t); }
    double ddf(double t) const { return 2 * c2 + 6 * c3 * t; }
};

Cubic power_form(double q, double p, double q1, double p1, double D) {
    const double dq = q1 - q, dp = p1 - p;
    return {q, p, (3 * dq - D * dp - 3 * D * p) / (D * D), (-2 * dq + D * dp + 2 * D * p) / (D * D * D)};
}

struct DenseSup {
    double dev = 0, vel = 0, acc = 0;
};

DenseSup dense_sup(const Cubic& c, double D, int points) {
    DenseSup s;
    for (int i = 0; i <= points; ++i) {
        const double t = D * i / points;
        s.dev = std::max(s.dev, std::abs(c.f(t) - c.c0));
        s.vel = std::max(s.vel, std::abs(c.df(t)));
        s.acc = std::max(s.acc, std::abs(c.ddf(t)));
    }
    return s;
}

HarnackChainSpec shipped_spec(double T = 1.0) {
    HarnackChainSpec s;
    s.domain = DomainSpec::interval(-1, 1);
    s.delta = 0.5;
    s.k = 2.0;
    s.T = T;
    s.epsilon = 0.1;
    return s;
}

// K' shrunk to a few balls, so the Step-2 links can be enumerated.
HarnackChainSpec small_spec() {
    HarnackChainSpec s;
    s.domain = DomainSpec::interval(-1, 1);
    s.delta = 0.95;
    s.k = 0.01;
    s.T = 0.5;
    s.epsilon = 0.1;
    return s;
}

}  // namespace

TEST_CASE("bridge midpoint values for a unit jump") {
    const HarnackPath path = hermite_bridge(PhaseVector::one_d(0, 0), PhaseVector::one_d(1, 0), 1.0);
    CHECK(path.position(0.5)[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(path.velocity(0.5)[0] == doctest::Approx(1.5).epsilon(1e-15));
    CHECK(path.supVelocity == doctest::Approx(1.5).epsilon(1e-15));
    CHECK(path.supAcceleration == doctest::Approx(6.0).epsilon(1e-15));
}

TEST_CASE("bridge endpoints and power-basis agreement") {
    RngStream rng(11, 0);
    for (int n = 0; n < 2000; ++n) {
        const double q = 4 * rng.uniform() - 2, p = 6 * rng.uniform() - 3;
        const double q1 = 4 * rng.uniform() - 2, p1 = 6 * rng.uniform() - 3;
        const double D = std::exp(std::log(1e-3) + rng.uniform() * std::log(1e4));
        const HarnackPath path = hermite_bridge(PhaseVector::one_d(q, p), PhaseVector::one_d(q1, p1), D);
        CHECK(path.position(0)[0] == q);
        CHECK(path.velocity(0)[0] == p);
        CHECK(path.position(D)[0] == doctest::Approx(q1).epsilon(1e-14).scale(1));
        CHECK(path.velocity(D)[0] == doctest::Approx(p1).epsilon(1e-14).scale(1));
        const Cubic c = power_form(q, p, q1, p1, D);
        const double t = D * rng.uniform();
        const double fs = 1 + std::abs(q) + std::abs(q1) + D * (std::abs(p) + std::abs(p1));
        CHECK(std::abs(path.position(t)[0] - c.f(t)) <= 1e-12 * fs);
        CHECK(std::abs(path.velocity(t)[0] - c.df(t)) <= 1e-12 * fs / D);
        CHECK(std::abs(path.acceleration(t)[0] - c.ddf(t)) <= 1e-12 * fs / (D * D));
        CHECK(std::abs(path.jerk()[0] - 6 * c.c3) <= 1e-12 * fs / (D * D * D));
    }
}

TEST_CASE("bridge bounds hold with C = 8 over random endpoints") {
    RngStream rng(12, 0);
    double worst = 0.0;
    int failures = 0;
    int supFailures = 0;
    for (int n = 0; n < 100000; ++n) {
        const double q = 4 * rng.uniform() - 2, p = 6 * rng.uniform() - 3;
        const double q1 = 4 * rng.uniform() - 2, p1 = 6 * rng.uniform() - 3;
        const double D = std::exp(std::log(1e-3) + rng.uniform() * std::log(1e4));
        const HarnackPath path = hermite_bridge(PhaseVector::one_d(q, p), PhaseVector::one_d(q1, p1), D);
        const DenseSup g = dense_sup(power_form(q, p, q1, p1, D), D, 256);
        const double scale = std::abs(q1 - q) + D * std::abs(p1 - p) + D * std::abs(p);
        const double r0 = g.dev / (8 * scale), r1 = g.vel * D / (8 * scale), r2 = g.acc * D * D / (8 * scale);
        worst = std::max({worst, r0, r1, r2});
        if (r0 > 1 || r1 > 1 || r2 > 1) ++failures;
        // The closed-form suprema dominate the dense-grid ones and exceed
        // them by at most one grid cell of slope.
        const double h = D / 256;
        const bool supOk = path.supDeviation >= g.dev * (1 - 1e-12) && path.supVelocity >= g.vel * (1 - 1e-12) &&
                           path.supAcceleration >= g.acc * (1 - 1e-12) &&
                           path.supDeviation <= g.dev + h * path.supVelocity + 1e-12 &&
                           path.supVelocity <= g.vel + h * path.supAcceleration + 1e-12 * path.supVelocity &&
                           path.supAcceleration <= g.acc * (1 + 1e-12);
        if (!supOk) ++supFailures;
    }
    CHECK(failures == 0);
    CHECK(supFailures == 0);
    MESSAGE("largest ratio to C scale / Delta^k: " << worst);
    CHECK(worst <= 0.75 + 1e-12);
}

TEST_CASE("bridge rejects bad input") {
    CHECK_THROWS(hermite_bridge(PhaseVector::one_d(0, 0), PhaseVector::one_d(1, 0), 0.0));
    CHECK_THROWS(hermite_bridge(PhaseVector::one_d(0, 0), PhaseVector({1, 0}, {0, 0}), 1.0));
}

TEST_CASE("shipped chain is admissible") {
    const HarnackChainSpec c =
        build_admissible_chain(shipped_spec(), PhaseVector::one_d(-0.3, 1.0), PhaseVector::one_d(0.4, -1.5));
    REQUIRE(c.populated);
    CHECK(c.segments.size() == c.N + 1);
    CHECK(c.walk.size() == c.N);
    CHECK(c.Delta == doctest::Approx(c.T / static_cast<double>(c.N + 1)));
    CHECK(c.Delta < std::min(c.coverEps / (2 * (c.k + 1) * c.C), 1.0));
    CHECK(c.deltaK == 0.5);
    CHECK(c.coverRadius == doctest::Approx(0.25 / 64));
    for (std::size_t e = 0; e + 1 < c.walk.size(); ++e)
        CHECK_MESSAGE(phase_distance(c.node(c.walk[e]), c.node(c.walk[e + 1])) <= c.adjacency * (1 + 1e-12), "edge " << e);
    CHECK(phase_distance(c.x, c.node(c.walk.front())) <= c.coverRadius * (1 + 1e-12));
    CHECK(phase_distance(c.y, c.node(c.walk.back())) <= c.coverRadius * (1 + 1e-12));
    CHECK(c.M <= c.MBound);
    CHECK(c.rEps <= c.rKT);
    CHECK(c.nEps >= 1);
    CHECK(c.alpha * c.nEps == doctest::Approx(c.T).epsilon(1e-12));

    const ChainReport rep = verify_chain_membership(c, 0.0, 10000);
    CHECK(rep.ok());
    CHECK(rep.violations.empty());
    CHECK(rep.gridSupSpeed <= c.M);
    CHECK(rep.gridMinDistance > 0.25);
    CHECK(rep.tHat > rep.tLow);
    CHECK(rep.tHat <= rep.tHigh);
    CHECK(rep.maxQHat < std::pow(c.R, 3));
    CHECK(rep.maxPHat < c.R);
    CHECK(rep.boxShift < c.deltaK);
}

TEST_CASE("cover balls cover K'") {
    HarnackChainSpec c = build_admissible_chain(small_spec(), PhaseVector::one_d(0.02, 0.005), PhaseVector::one_d(-0.03, -0.01));
    RngStream rng(13, 0);
    int uncovered = 0;
    for (int n = 0; n < 5000; ++n) {
        const double q = -1 + c.deltaK + (2 - 2 * c.deltaK) * rng.uniform();
        const double p = -c.k + 2 * c.k * rng.uniform();
        double best = 1e300;
        for (std::size_t i = 0; i < c.N; ++i) best = std::min(best, phase_distance(PhaseVector::one_d(q, p), c.node(i)));
        if (best > c.coverRadius * (1 + 1e-12)) ++uncovered;
    }
    CHECK(uncovered == 0);
}

TEST_CASE("speed bound grows as the horizon shrinks") {
    const PhaseVector x = PhaseVector::one_d(-0.3, 1.0), y = PhaseVector::one_d(0.4, -1.5);
    const HarnackChainSpec a = build_admissible_chain(shipped_spec(1.0), x, y);
    const HarnackChainSpec b = build_admissible_chain(shipped_spec(0.1), x, y);
    CHECK(b.M > 10 * a.M);
    CHECK(b.MBound == doctest::Approx(100 * a.MBound).epsilon(1e-9));
    CHECK(verify_chain_membership(b).ok());
}

TEST_CASE("Step 2 conditions are tight in r") {
    const HarnackChainSpec c =
        build_admissible_chain(shipped_spec(), PhaseVector::one_d(-0.3, 1.0), PhaseVector::one_d(0.4, -1.5));
    CHECK(verify_chain_membership(c).ok());
    const ChainReport doubled = verify_chain_membership(c, 2 * c.rEps);
    CHECK(doubled.boxViolations > 0);
    CHECK_FALSE(doubled.ok());
}

TEST_CASE("enumerated links agree with the piecewise suprema") {
    const HarnackChainSpec c =
        build_admissible_chain(small_spec(), PhaseVector::one_d(0.02, 0.005), PhaseVector::one_d(-0.03, -0.01));
    const ChainReport listed = verify_chain_membership(c, 0.0, 10000, 1e9);
    const ChainReport bounded = verify_chain_membership(c, 0.0, 10000, 0.0);
    REQUIRE(listed.enumerated);
    REQUIRE_FALSE(bounded.enumerated);
    MESSAGE("links " << listed.linksChecked << ", N " << c.N);
    CHECK(listed.linksChecked == c.nEps);
    CHECK(listed.ok());
    CHECK(bounded.ok());
    CHECK(listed.maxQHat <= bounded.maxQHat * (1 + 1e-12));
    CHECK(listed.maxPHat <= bounded.maxPHat * (1 + 1e-12));
    CHECK(listed.maxPHat >= 0.5 * bounded.maxPHat);

    // Direct differences of the composed path at a few links.
    const double r = c.rEps, a = c.alpha;
    const auto j = static_cast<std::size_t>(c.nEps / 3);
    const double s = j * a, u = (j + 1) * a;
    const double q = (c.position(u) - c.position(s) - a * c.velocity(s)) / (r * r * r);
    const double p = (c.velocity(s) - c.velocity(u)) / r;
    CHECK(std::abs(q) <= listed.maxQHat * (1 + 1e-6));
    CHECK(std::abs(p) <= listed.maxPHat * (1 + 1e-9));

    const ChainReport doubled = verify_chain_membership(c, 2 * c.rEps, 10000, 1e9);
    CHECK(doubled.enumerated);
    CHECK(doubled.boxViolations > 0);
}

TEST_CASE("chain input validation") {
    const PhaseVector x = PhaseVector::one_d(0, 0);
    HarnackChainSpec s = shipped_spec();
    CHECK_THROWS(build_admissible_chain(s, PhaseVector::one_d(0.8, 0), x));
    CHECK_THROWS(build_admissible_chain(s, PhaseVector::one_d(0, 2.5), x));
    s.domain = DomainSpec::ball({0, 0}, 1);
    CHECK_THROWS(build_admissible_chain(s, x, x));
    s = shipped_spec();
    s.CKT = 1.0;
    CHECK_THROWS(build_admissible_chain(s, x, x));
    s = shipped_spec();
    s.maxNodes = 1000;
    CHECK_THROWS(build_admissible_chain(s, x, x));
    CHECK_THROWS(verify_chain_membership(shipped_spec()));
}

TEST_CASE("harnack constant") {
    CHECK(harnack_constant(2.0, 10.0).value == 1024.0);
    CHECK(harnack_constant(2.0, 10.0).logValue == doctest::Approx(10 * std::log(2.0)));
    CHECK(std::isinf(harnack_constant(10.0, 1e6).value));
    CHECK(harnack_constant(10.0, 1e6).logValue == doctest::Approx(1e6 * std::log(10.0)));
    CHECK_THROWS(harnack_constant(1.0, 3.0));
    CHECK_THROWS(harnack_constant(0.5, 3.0));
    CHECK_THROWS(harnack_constant(2.0, 0.0));
    CHECK_THROWS(harnack_constant(2.0, 2.5));
    const HarnackChainSpec c =
        build_admissible_chain(small_spec(), PhaseVector::one_d(0.02, 0.005), PhaseVector::one_d(-0.03, -0.01));
    CHECK(harnack_constant(c.CKT, c).n == c.nEps);
}

TEST_CASE("gaussian spot check sits below the returned constant") {
    const HarnackChainSpec c =
        build_admissible_chain(shipped_spec(), PhaseVector::one_d(-0.3, 1.0), PhaseVector::one_d(0.4, -1.5));
    const GaussianKernelSpec g{1, 1.0, 1.0, 1.0};
    const HarnackSpotCheck sc = harnack_gaussian_spot_check(g, c, PhaseVector::one_d(0, 0), 0.5);
    MESSAGE("fitted C " << sc.fittedC << ", log returned " << sc.logReturned);
    CHECK(std::isfinite(sc.fittedC));
    CHECK(sc.fittedC >= 1.0);
    CHECK(sc.logFitted <= sc.logReturned);
}
