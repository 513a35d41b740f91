#include <doctest.h>

#include <cmath>

#include "kfp/bound.hpp"
#include "kfp/fk.hpp"
#include "kfp/kernel.hpp"
#include "support/oracles.hpp"

using namespace kfp;

namespace {

const DomainSpec kUnit = DomainSpec::interval(-1.0, 1.0);

SimConfig config(double dt, std::uint64_t seed = 7, int workers = 1) {
    SimConfig c;
    c.dt = dt;
    c.seed = seed;
    c.workerCount = workers;
    return c;
}

FKProblem constant_problem(double fv, double gv, double t, PhaseVector x) {
    FKProblem p;
    p.f = [fv](const PhaseVector&) { return fv; };
    p.g = [gv](const PhaseVector&) { return gv; };
    p.supF = std::abs(fv);
    p.supG = std::abs(gv);
    p.t = t;
    p.x = std::move(x);
    return p;
}

}  // namespace

TEST_CASE("indicator partition and survival collapse") {
    const GaussianKernelSpec k{1, 1.0, 1.0, 0.5};
    const auto force = ForceFieldSpec::linear(1.0);
    const PhaseVector x = PhaseVector::one_d(0.5, 0.5);
    const auto one = estimate_u(force, k, kUnit, constant_problem(1, 1, 0.5, x), 20000, config(0.01));
    CHECK(one.value == 1.0);
    CHECK(one.stdError == 0.0);
    const auto surv = estimate_u(force, k, kUnit, constant_problem(1, 0, 0.5, x), 20000, config(0.01));
    SimConfig c = config(0.01);
    c.horizon = 0.5;
    const Simulator sim(force, k, kUnit, c);
    int alive = 0;
    for (std::size_t i = 0; i < 20000; ++i) {
        PathRng r(c.seed, i, static_cast<std::uint64_t>(Arm::Forward));
        alive += !sim.simulate(x, r).absorbed;
    }
    CHECK(surv.value == doctest::Approx(alive / 20000.0).epsilon(1e-14));
    CHECK(surv.value < 1.0);
    CHECK(surv.value > 0.0);
}

TEST_CASE("estimate stays within the data bound") {
    const GaussianKernelSpec k{1, 0.5, 1.0, 0.5};
    FKProblem p;
    p.f = [](const PhaseVector& z) { return std::cos(3 * z.q[0]) * std::tanh(z.p[0]); };
    p.g = [](const PhaseVector& z) { return 0.7 * std::sin(z.p[0]); };
    p.supF = 1.0;
    p.supG = 0.7;
    p.t = 1.0;
    p.x = PhaseVector::one_d(0.3, -0.2);
    const auto e = estimate_u(ForceFieldSpec::sine(1.0), k, kUnit, p, 20000, config(0.01));
    CHECK(std::abs(e.value) <= std::max(p.supF, p.supG) + 3 * e.stdError);
    CHECK_THROWS(estimate_u(ForceFieldSpec::sine(1.0), k, kUnit, p, 0, config(0.01)));
    p.t = 0.0;
    CHECK_THROWS(estimate_u(ForceFieldSpec::sine(1.0), k, kUnit, p, 10, config(0.01)));
}

TEST_CASE("results do not depend on the worker count") {
    const GaussianKernelSpec k{1, 0.5, 1.0, 0.5};
    FKProblem p = constant_problem(1, 0, 0.7, PhaseVector::one_d(0.2, 0.1));
    p.f = [](const PhaseVector& z) { return z.q[0] * z.q[0] + z.p[0]; };
    p.supF = 50.0;
    const auto a = estimate_u(ForceFieldSpec::sine(1.0), k, kUnit, p, 9000, config(0.01, 3, 1));
    const auto b = estimate_u(ForceFieldSpec::sine(1.0), k, kUnit, p, 9000, config(0.01, 3, 3));
    CHECK(a.value == b.value);
    CHECK(a.stdError == b.stdError);
    SimConfig c = config(0.01, 3, 4);
    c.horizon = 0.7;
    const Simulator s4(ForceFieldSpec::sine(1.0), k, kUnit, c);
    c.workerCount = 1;
    const Simulator s1(ForceFieldSpec::sine(1.0), k, kUnit, c);
    const auto e1 = collect_endpoints(s1, p.x, 10000, false), e4 = collect_endpoints(s4, p.x, 10000, false);
    CHECK(e1.data == e4.data);
}

TEST_CASE("adjoint process without force or friction is the flipped forward process") {
    const GaussianKernelSpec k{1, 0.0, 1.0, 0.5};
    SimConfig c = config(0.01);
    c.horizon = 0.6;
    const Simulator fwd(ForceFieldSpec::zero(), k, kUnit, c);
    const Simulator adj = make_adjoint_simulator(ForceFieldSpec::zero(), k, kUnit, c);
    const PhaseVector x = PhaseVector::one_d(0.4, 0.8);
    const int n = 40000;
    int sf = 0, sa = 0;
    for (int i = 0; i < n; ++i) {
        PathRng r1(1, static_cast<std::uint64_t>(i)), r2(2, static_cast<std::uint64_t>(i));
        sf += !fwd.simulate(PhaseVector::one_d(0.4, -0.8), r1).absorbed;
        sa += !simulate_adjoint(adj, x, r2).absorbed;
    }
    const double pf = double(sf) / n, pa = double(sa) / n;
    CHECK(std::abs(pf - pa) <= 5 * std::sqrt((pf * (1 - pf) + pa * (1 - pa)) / n));
}

TEST_CASE("noise-free adjoint flow reverses the forward flow") {
    const GaussianKernelSpec k{1, 0.5, 1e-12, 0.5};
    SimConfig c = config(0.01);
    c.horizon = 0.8;
    c.absorb = false;
    const auto force = ForceFieldSpec::sine(2.0);
    const Simulator fwd(force, k, kUnit, c);
    const Simulator adj = make_adjoint_simulator(force, k, kUnit, c);
    const PhaseVector x = PhaseVector::one_d(0.1, 0.3);
    PathRng r1(1, 0), r2(2, 0);
    const auto end = fwd.simulate(x, r1).finalState;
    const auto back = simulate_adjoint(adj, end, r2).finalState;
    CHECK(std::abs(back.q[0] - x.q[0]) <= 1e-9);
    CHECK(std::abs(back.p[0] - x.p[0]) <= 1e-9);
}

TEST_CASE("adjoint exits enter through incoming momenta") {
    const GaussianKernelSpec k{1, 0.5, 1.0, 0.5};
    SimConfig c = config(1e-3);
    c.horizon = 2.0;
    const Simulator adj = make_adjoint_simulator(ForceFieldSpec::sine(1.0), k, kUnit, c);
    int exits = 0, minus = 0;
    for (int i = 0; i < 2000; ++i) {
        PathRng r(3, static_cast<std::uint64_t>(i));
        const auto rec = simulate_adjoint(adj, PhaseVector::one_d(0.0, 0.5), r);
        if (!rec.absorbed) continue;
        ++exits;
        minus += rec.exitClass.cls == BoundaryClass::GammaMinus;
    }
    REQUIRE(exits > 1000);
    CHECK(minus == exits);
}

TEST_CASE("kernel density estimate against the exact free kernel") {
    // Whole-space regime: the interval is far away. For a Gaussian law the
    // expected estimate is N(y; m, C + H^2), which gives the bias budget.
    const double t = 0.5;
    const GaussianKernelSpec k{1, 0.6, 1.2, 0.5};
    const auto far = DomainSpec::interval(-100, 100);
    SimConfig c = config(0.05);
    c.horizon = t;
    const Simulator sim(ForceFieldSpec::zero(), k, far, c);
    const PhaseVector x = PhaseVector::one_d(0.2, 0.7);
    const std::size_t n = 200000;
    const auto cloud = collect_endpoints(sim, x, n, false);
    const auto h = default_bandwidth(k, t, n);
    const KernelMoments m = moments(k, t);
    const PhaseVector y = m.mean(x);
    const auto est = estimate_density_kde(cloud, {y}, h);
    const double exact = density(k, t, x, y);
    const double cqq = m.cqq + h[0] * h[0], cpp = m.cpp + h[1] * h[1];
    const double smoothed = oracle::bivariate_normal(0, 0, cqq, m.cqp, cpp, 0, 0);
    const double bias = std::abs(smoothed - exact);
    CHECK(std::abs(est.values[0] - exact) <= 3 * (bias + est.stdErrors[0]));
    CHECK(std::abs(est.values[0] - smoothed) <= 4 * est.stdErrors[0]);
    CHECK_THROWS(estimate_density_kde(EndpointCloud{}, {y}, h));
    CHECK_THROWS(estimate_density_kde(cloud, {y}, {h[0], -1.0}));
}

TEST_CASE("estimate mass equals the survival fraction") {
    const double t = 0.5;
    const GaussianKernelSpec k{1, 0.5, 1.0, 0.5};
    SimConfig c = config(0.01);
    c.horizon = t;
    const Simulator sim(ForceFieldSpec::sine(1.0), k, kUnit, c);
    const auto cloud = collect_endpoints(sim, PhaseVector::one_d(0.4, 0.4), 20000, false);
    const auto h = default_bandwidth(k, t, cloud.total);
    std::vector<PhaseVector> pts;
    const int nq = 120, np = 120;
    const double q0 = -1.3, q1 = 1.3, p0 = -6.5, p1 = 6.5;
    const double dq = (q1 - q0) / nq, dp = (p1 - p0) / np;
    for (int i = 0; i < nq; ++i)
        for (int j = 0; j < np; ++j) pts.push_back(PhaseVector::one_d(q0 + (i + 0.5) * dq, p0 + (j + 0.5) * dp));
    const auto est = estimate_density_kde(cloud, pts, h);
    double mass = 0.0;
    for (double v : est.values) mass += v * dq * dp;
    const double surv = double(cloud.count()) / double(cloud.total);
    CHECK(mass == doctest::Approx(surv).epsilon(2e-3));
    for (double v : est.values) CHECK(v >= 0.0);
}

TEST_CASE("boundary scans vanish toward the right boundary pieces") {
    const double t = 0.5;
    const GaussianKernelSpec k{1, 0.5, 1.0, 0.5};
    SimConfig c = config(1e-3);
    const auto force = ForceFieldSpec::sine(1.0);
    SUBCASE("end points approaching incoming momenta") {
        std::vector<PhaseVector> ys;
        for (double dist : {0.3, 0.1, 0.03, 0.01, 0.003}) ys.push_back(PhaseVector::one_d(1.0 - dist, -1.0));
        const auto rows = boundary_vanishing_scan(force, k, kUnit, t, ScanSlot::End, ys,
                                                  PhaseVector::one_d(0.3, 1.0), 100000, c);
        for (std::size_t j = 1; j < rows.size(); ++j) CHECK(rows[j].density < rows[j - 1].density);
        CHECK(rows.back().density <= 0.1 * rows.front().density);
    }
    SUBCASE("start points approaching outgoing momenta") {
        std::vector<PhaseVector> xs;
        for (double dist : {0.3, 0.1, 0.03, 0.01, 0.003}) xs.push_back(PhaseVector::one_d(1.0 - dist, 1.0));
        const auto rows = boundary_vanishing_scan(force, k, kUnit, t, ScanSlot::Start, xs,
                                                  PhaseVector::one_d(0.3, -0.5), 20000, c);
        for (std::size_t j = 1; j < rows.size(); ++j) CHECK(rows[j].survival <= rows[j - 1].survival);
        CHECK(rows.front().survival > 0.0);
        CHECK(rows.back().survival <= 0.1 * rows.front().survival);
    }
    SUBCASE("end points approaching outgoing momenta stay positive") {
        std::vector<PhaseVector> ys;
        for (double dist : {0.1, 0.01, 0.001}) ys.push_back(PhaseVector::one_d(1.0 - dist, 1.0));
        const auto rows = boundary_vanishing_scan(force, k, kUnit, t, ScanSlot::End, ys,
                                                  PhaseVector::one_d(0.3, 1.0), 100000, c);
        for (const auto& r : rows) CHECK(r.density > 5 * r.densitySe);
    }
}

TEST_CASE("reversibility ratio without friction") {
    const GaussianKernelSpec k{1, 0.0, 1.0, 0.5};
    const PhaseVector x = PhaseVector::one_d(0.1, 0.4), y = PhaseVector::one_d(-0.1, 0.4);
    const auto r = reversibility_ratio(ForceFieldSpec::linear(1.0), k, kUnit, 0.4, x, y, 100000, config(0.01));
    CHECK(r.ciLow <= 1.0);
    CHECK(r.ciHigh >= 1.0);
    CHECK(r.ratio == doctest::Approx(1.0).epsilon(0.1));
    // Points with negligible density are rejected.
    CHECK_THROWS(reversibility_ratio(ForceFieldSpec::zero(), k, kUnit, 0.1, PhaseVector::one_d(0.9, -3.0),
                                     PhaseVector::one_d(-0.9, -3.0), 2000, config(0.01)));
}

TEST_CASE("nested Chapman-Kolmogorov estimate matches the one-stage estimate") {
    const GaussianKernelSpec k{1, 0.5, 1.0, 0.5};
    const auto force = ForceFieldSpec::sine(1.0);
    const double s = 0.2, t = 0.5;
    const PhaseVector x = PhaseVector::one_d(0.0, 0.5), y = PhaseVector::one_d(0.25, 0.3);
    SimConfig c = config(0.01, 17);
    c.horizon = t;
    const std::size_t n = 200000;
    const auto h = default_bandwidth(k, t, n);
    const Simulator sim(force, k, kUnit, c);
    const auto one = estimate_density_kde(collect_endpoints(sim, x, n, false), {y}, h);
    const auto two = nested_chapman_kolmogorov(force, k, kUnit, s, t, x, y, 4000, 50, h, c);
    CHECK(std::abs(one.values[0] - two.value) <= 4 * std::hypot(one.stdErrors[0], two.stdError));
}

TEST_CASE("small-time agreement with the free kernel") {
    const GaussianKernelSpec k{1, 0.5, 1.0, 0.5};
    const auto force = ForceFieldSpec::sine(1.0);
    const PhaseVector x = PhaseVector::one_d(0.0, 0.3);
    std::vector<double> ratios;
    for (double t : {0.05, 0.1, 0.2}) {
        SimConfig c = config(t / 50, 23);
        c.horizon = t;
        const Simulator sim(force, k, kUnit, c);
        const std::size_t n = 200000;
        const auto cloud = collect_endpoints(sim, x, n, false);
        const PhaseVector y = moments(k, t).mean(x);
        const auto contrib = kde_contributions(cloud, y, default_bandwidth(k, t, n), KdeKernel::BiasCorrected);
        double sum = 0;
        for (double v : contrib) sum += v;
        const double est = sum / n;
        const double r = std::abs(est - density(k, t, x, y)) / (std::sqrt(t) * density_alpha(k, t, x, y));
        MESSAGE("t=", t, " scaled discrepancy ", r);
        ratios.push_back(r);
    }
    for (double r : ratios) CHECK(r <= 1.0);
}

TEST_CASE("estimates stay under the parametrix bound") {
    const GaussianKernelSpec k{1, 1.0, 1.0, 0.5};
    const auto force = ForceFieldSpec::sine(1.0);
    const double t = 0.3;
    SimConfig c = config(0.01, 29);
    c.horizon = t;
    const Simulator sim(force, k, kUnit, c);
    const PhaseVector x = PhaseVector::one_d(0.1, 0.2);
    const auto cloud = collect_endpoints(sim, x, 100000, false);
    std::vector<PhaseVector> pts;
    for (double q : {-0.5, 0.0, 0.15, 0.3, 0.6})
        for (double p : {-1.0, 0.0, 0.2, 1.0}) pts.push_back(PhaseVector::one_d(q, p));
    const auto est = estimate_density_kde(cloud, pts, default_bandwidth(k, t, cloud.total));
    const auto spec = make_bound_spec(k, force.sup_norm(kUnit), t);
    for (std::size_t j = 0; j < pts.size(); ++j)
        CHECK(est.values[j] - 3 * est.stdErrors[j] <= evaluate_bound(spec, t, x, pts[j]).value);
}
