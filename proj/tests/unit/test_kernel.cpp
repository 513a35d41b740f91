#include <doctest.h>

#include <cmath>
#include <random>

#include "kfp/kernel.hpp"
#include "support/oracles.hpp"

using namespace kfp;
using oracle::mp;

namespace {

double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

PhaseVector pv1(double q, double p) { return PhaseVector::one_d(q, p); }

}  // namespace

TEST_CASE("shape functions at zero and one") {
    const auto s0 = eval_shape_functions(0.0);
    CHECK(s0.phi1 == 1.0);
    CHECK(s0.phi2 == 1.0);
    CHECK(s0.phi3 == 1.0);
    CHECK(s0.phi == 1.0);
    CHECK(eval_shape_functions(1.0).phi1 == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-15));
}

TEST_CASE("shape functions match 50-digit closed forms") {
    for (double r : {-30.0, -5.0, -1.0, -0.7, -1e-2, -1e-4, -1e-7, 1e-9, 1e-5, 2e-3, 0.3, 0.999, 1.0, 1.001, 3.0, 40.0}) {
        const auto s = eval_shape_functions(r);
        const auto ref = oracle::mp_shapes(mp(r));
        CHECK(rel_err(s.phi1, ref.phi1.convert_to<double>()) < 1e-13);
        CHECK(rel_err(s.phi2, ref.phi2.convert_to<double>()) < 1e-13);
        CHECK(rel_err(s.phi3, ref.phi3.convert_to<double>()) < 1e-13);
        CHECK(rel_err(s.phi, ref.phi.convert_to<double>()) < 1e-12);
        CHECK(s.phi1 > 0);
        CHECK(s.phi2 > 0);
        CHECK(s.phi3 > 0);
        CHECK(s.phi > 0);
    }
}

TEST_CASE("shape identities hold in extended precision") {
    for (double r : {-5.0, -1.0, 0.5, 3.0}) {
        const auto s = oracle::mp_shapes(mp(r));
        const auto s2 = oracle::mp_shapes(mp(2 * r));
        const mp rhs = 4 * s.phi2 * s2.phi1 - 3 * pow(s.phi1, 4);
        CHECK(abs(s.phi - rhs) / s.phi < mp(1e-12));
        CHECK(abs(s.phi1 + mp(r) / 2 * s.phi3 - 1) < mp(1e-12));
        // Library values against the extended-precision identity.
        const auto v = eval_shape_functions(r);
        CHECK(rel_err(v.phi, rhs.convert_to<double>()) < 1e-12);
        CHECK(std::abs(v.phi1 + r / 2 * v.phi3 - 1.0) < 1e-12);
    }
}

TEST_CASE("moments: gamma zero example") {
    GaussianKernelSpec spec{1, 0.0, 1.0, 1.0};
    const auto m = moments(spec, 2.0);
    CHECK(m.cqq == doctest::Approx(8.0 / 3.0).epsilon(1e-15));
    CHECK(m.cqp == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(m.cpp == doctest::Approx(2.0).epsilon(1e-15));
    CHECK_THROWS(moments(spec, 0.0));
    CHECK_THROWS(moments(spec, -1.0));
}

TEST_CASE("moments: small time limit") {
    GaussianKernelSpec spec{2, 0.7, 1.3, 1.0};
    const auto m = moments(spec, 1e-9);
    CHECK(m.cqq < 1e-26);
    CHECK(m.cqp < 1e-17);
    CHECK(m.cpp < 1e-8);
    CHECK(m.a12 < 1e-8);
    CHECK(m.a22 == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("moments agree with direct covariance integrals") {
    for (double g : {-2.0, -0.3, 1e-6, 0.4, 2.0})
        for (double t : {1e-3, 0.7, 5.0}) {
            GaussianKernelSpec spec{1, g, 1.3, 1.0};
            const auto m = moments(spec, t);
            const auto b = oracle::mp_block(g, 1.3, t);
            CHECK(rel_err(m.cqq, b.cqq.convert_to<double>()) < 1e-9);
            CHECK(rel_err(m.cqp, b.cqp.convert_to<double>()) < 1e-9);
            CHECK(rel_err(m.cpp, b.cpp.convert_to<double>()) < 1e-12);
            CHECK(rel_err(m.a12, b.a12.convert_to<double>()) < 1e-12);
        }
}

TEST_CASE("determinant matches dense elimination") {
    for (int d : {1, 2, 3}) {
        GaussianKernelSpec spec{d, 1.0, 1.3, 1.0};
        const auto m = moments(spec, 0.7);
        const auto b = oracle::mp_block(1.0, 1.3, 0.7);
        const mp det = oracle::dense_determinant(oracle::assemble_covariance(b.cqq, b.cqp, b.cpp, d), 2 * d);
        CHECK(rel_err(m.logDet, log(det).convert_to<double>()) < 1e-12);
        CHECK(rel_err(std::exp(m.logDet), det.convert_to<double>()) < 1e-10);
    }
}

TEST_CASE("quadratic form: trivial cases") {
    GaussianKernelSpec spec{2, 0.0, 1.5, 1.0};
    std::vector<double> zero(4, 0.0);
    CHECK(quadratic_form(spec, 0.4, zero) == 0.0);
    const double t = 0.4, s2 = 2.25;
    std::vector<double> dx{0.3, -0.2, 0.5, 0.1};
    double expect = 0.0;
    for (int i = 0; i < 2; ++i) {
        const double dq = dx[i], dp = dx[2 + i];
        expect += dp * dp / (s2 * t) + 12.0 * (dq - t / 2 * dp) * (dq - t / 2 * dp) / (s2 * t * t * t);
    }
    CHECK(quadratic_form(spec, t, dx) == doctest::Approx(expect).epsilon(1e-14));
    CHECK_THROWS(quadratic_form(spec, 0.0, dx));
}

TEST_CASE("quadratic form equals dense inverse form at random inputs") {
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> ut(std::log(1e-3), std::log(10.0)), ug(-2, 2), us(0.2, 3), ux(-1, 1);
    int worst = 0;
    double maxErr = 0.0;
    for (int n = 0; n < 2000; ++n) {
        const int d = 1 + n % 3;
        const double t = std::exp(ut(gen)), g = ug(gen), s = us(gen);
        GaussianKernelSpec spec{d, g, s, 1.0};
        std::vector<double> dx(2 * d);
        for (auto& v : dx) v = ux(gen);
        const auto b = oracle::mp_block(g, s, t);
        std::vector<mp> dxm(dx.begin(), dx.end());
        const mp ref = oracle::dense_inverse_form(oracle::assemble_covariance(b.cqq, b.cqp, b.cpp, d), dxm, 2 * d);
        const double e = rel_err(quadratic_form(spec, t, dx), ref.convert_to<double>());
        if (e > maxErr) {
            maxErr = e;
            worst = n;
        }
    }
    INFO("worst draw " << worst);
    CHECK(maxErr < 1e-9);
}

TEST_CASE("density: mean point and standard example") {
    GaussianKernelSpec spec{1, 0.0, 1.0, 1.0};
    const double v = density(spec, 1.0, pv1(0, 0), pv1(0, 0));
    const double ref = oracle::bivariate_normal(0, 0, 1.0 / 3.0, 0.5, 1.0, 0, 0);
    CHECK(v == doctest::Approx(ref).epsilon(1e-13));
    CHECK(v == doctest::Approx(0.5513).epsilon(1e-4));

    GaussianKernelSpec spec2{2, 0.6, 0.8, 1.0};
    const double t = 0.9;
    PhaseVector x({0.1, -0.4}, {1.0, 0.3});
    const auto m = moments(spec2, t);
    const double peak = std::pow(2 * M_PI, -2) * std::pow(m.det2, -1.0);
    CHECK(density(spec2, t, x, m.mean(x)) == doctest::Approx(peak).epsilon(1e-13));
    CHECK_THROWS(density(spec2, -1.0, x, x));
    PhaseVector far({1e6, 0}, {0, 0});
    CHECK(density(spec2, t, x, far) == 0.0);
}

TEST_CASE("density: bivariate normal agreement and normalization") {
    for (double g : {-1.0, 0.0, 0.8}) {
        GaussianKernelSpec spec{1, g, 1.2, 1.0};
        const double t = 0.6;
        const auto x = pv1(0.2, -0.5);
        const auto b = oracle::mp_block(g, 1.2, t);
        const double mq = 0.2 + b.a12.convert_to<double>() * -0.5;
        const double mpv = b.a22.convert_to<double>() * -0.5;
        const double cqq = b.cqq.convert_to<double>(), cqp = b.cqp.convert_to<double>(), cpp = b.cpp.convert_to<double>();
        for (double dq : {-0.3, 0.0, 0.2})
            for (double dp : {-1.0, 0.4}) {
                const double ref = oracle::bivariate_normal(mq, mpv, cqq, cqp, cpp, mq + dq, mpv + dp);
                CHECK(rel_err(density(spec, t, x, pv1(mq + dq, mpv + dp)), ref) < 1e-10);
            }
        const double sq = 12 * std::sqrt(cqq), sp = 12 * std::sqrt(cpp);
        const double mass = oracle::integrate_2d([&](double q, double p) { return density(spec, t, x, pv1(q, p)); },
                                                 mq - sq, mq + sq, mpv - sp, mpv + sp);
        CHECK(std::abs(mass - 1.0) < 1e-4);
    }
}

TEST_CASE("alpha density: collapse, scaling identity and mass") {
    GaussianKernelSpec one{1, 0.5, 1.0, 1.0};
    const auto x = pv1(0.3, -0.2), y = pv1(0.1, 0.4);
    CHECK(density_alpha(one, 0.8, x, y) == density(one, 0.8, x, y));

    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int n = 0; n < 200; ++n) {
        const int d = 1 + n % 3;
        GaussianKernelSpec spec{d, 2 * u(gen), 1.0 + 0.5 * u(gen), 0.55 + 0.4 * u(gen)};
        const double t = 0.2 + std::abs(u(gen));
        PhaseVector a(d), c(d);
        for (int i = 0; i < d; ++i) {
            a.q[i] = 0.3 * u(gen);
            a.p[i] = u(gen);
            c.q[i] = 0.3 * u(gen);
            c.p[i] = u(gen);
        }
        const auto m = moments(spec, t);
        std::vector<double> dx(2 * d);
        for (int i = 0; i < d; ++i) {
            dx[i] = c.q[i] - a.q[i] - m.a12 * a.p[i];
            dx[d + i] = c.p[i] - m.a22 * a.p[i];
        }
        const double qf = quadratic_form(spec, t, dx);
        // p = alpha^{-d} exp(-(1-alpha) Q / 2) p^(alpha)
        const double lhs = log_density(spec, t, a, c);
        const double rhs = -d * std::log(spec.alpha) - 0.5 * (1 - spec.alpha) * qf + log_density_alpha(spec, t, a, c);
        CHECK(std::abs(std::exp(lhs - rhs) - 1.0) < 1e-10);
    }

    GaussianKernelSpec spec{1, 0.5, 1.0, 0.6};
    const double t = 0.8;
    const auto yy = pv1(0.2, 0.3);
    const double mass = oracle::integrate_2d([&](double q, double p) { return density_alpha(spec, t, pv1(q, p), yy); },
                                             -12, 12, -25, 25, 1e-11);
    CHECK(std::abs(mass - std::exp(0.4)) < 1e-4);
}

TEST_CASE("alpha density: Chapman-Kolmogorov") {
    GaussianKernelSpec spec{1, 0.7, 1.0, 0.8};
    const double t = 0.9, u = t / 3;
    const auto x = pv1(0.1, 0.5), y = pv1(0.4, 0.2);
    const double lhs = oracle::integrate_2d(
        [&](double q, double p) { return density_alpha(spec, u, x, pv1(q, p)) * density_alpha(spec, t - u, pv1(q, p), y); },
        -4, 4, -8, 8, 1e-12);
    const double rhs = density_alpha(spec, t, x, y);
    CHECK(std::abs(lhs / rhs - 1.0) < 1e-4);
}

TEST_CASE("exact sampling reproduces mean and covariance") {
    GaussianKernelSpec spec{1, -0.5, 1.4, 1.0};
    const double t = 0.6;
    const auto x = pv1(0.3, 0.8);
    const auto m = moments(spec, t);
    const auto mean = m.mean(x);
    const int n = 200000;
    RngStream rng(99, 0);
    double sq = 0, sp = 0, sqq = 0, sqp = 0, spp = 0;
    for (int i = 0; i < n; ++i) {
        const auto z = sample_free_step(spec, t, x, rng);
        const double a = z.q[0] - mean.q[0], b = z.p[0] - mean.p[0];
        sq += a;
        sp += b;
        sqq += a * a;
        sqp += a * b;
        spp += b * b;
    }
    CHECK(std::abs(sq / n) < 5 * std::sqrt(m.cqq / n));
    CHECK(std::abs(sp / n) < 5 * std::sqrt(m.cpp / n));
    CHECK(std::abs(sqq / n - m.cqq) < 5 * m.cqq * std::sqrt(2.0 / n));
    CHECK(std::abs(spp / n - m.cpp) < 5 * m.cpp * std::sqrt(2.0 / n));
    CHECK(std::abs(sqp / n - m.cqp) < 5 * std::sqrt((m.cqq * m.cpp + m.cqp * m.cqp) / n));
}

TEST_CASE("sampling: small step limit and determinism") {
    GaussianKernelSpec spec{2, 0.3, 1.0, 1.0};
    PhaseVector x({0.1, 0.2}, {0.3, -0.4});
    RngStream r1(7, 3), r2(7, 3);
    const auto a = sample_free_step(spec, 1e-12, x, r1);
    CHECK(phase_distance(a, x) < 1e-5);
    RngStream r3(7, 3);
    const auto b = sample_free_step(spec, 0.5, x, r2);
    const auto c = sample_free_step(spec, 0.5, x, r3);
    CHECK(b.q == c.q);
    CHECK(b.p == c.p);
}

TEST_CASE("gradient constant") {
    CHECK_THROWS(gradient_bound_constant(0.0));
    CHECK_THROWS(gradient_bound_constant(1.0));
    const double c = gradient_bound_constant(0.5);
    CHECK(c >= 1.0 / std::sqrt(std::exp(1.0) * 0.5));
    double prev = c;
    for (double a : {0.9, 0.99, 0.9999, 0.999999}) {
        const double ca = gradient_bound_constant(a);
        CHECK(ca > prev);
        prev = ca;
    }
    CHECK(prev > 300 * c);
    CHECK(gradient_bound_constant(0.5, 2) == doctest::Approx(2 * c));
}

TEST_CASE("gradient constant shape sup against a dense rho scan") {
    // Independent scan of the weighted ratio using the 50-digit closed forms.
    double best = 0.0;
    for (int k = -400; k <= 400; ++k) {
        const double r = k == 0 ? 1e-9 : std::copysign(std::pow(10.0, std::abs(k) / 100.0 - 2.0), k);
        const auto s = oracle::mp_shapes(mp(r));
        const mp num = abs(s.phi1 * s.phi1 - s.phi3 * exp(mp(-r)) / 2);
        const double ratio = (num / sqrt(s.phi)).convert_to<double>() / (1.0 + std::sqrt(std::max(-r, 0.0)));
        best = std::max(best, ratio);
    }
    CHECK(gradient_shape_sup() >= best * (1 - 1e-9));
    CHECK(gradient_shape_sup() >= 1.0 / std::sqrt(6.0));
}

TEST_CASE("gradient domination by finite differences") {
    std::mt19937_64 gen(21);
    std::uniform_real_distribution<double> u(-1, 1);
    const double alpha = 0.5;
    int violations = 0;
    for (int n = 0; n < 2000; ++n) {
        const int d = 1 + n % 2;
        GaussianKernelSpec spec{d, 2 * u(gen), 1.0 + 0.8 * u(gen), alpha};
        const double t = std::exp(3 * u(gen));
        const auto m = moments(spec, t);
        PhaseVector x(d), y(d);
        for (int i = 0; i < d; ++i) {
            x.q[i] = u(gen);
            x.p[i] = u(gen);
        }
        y = m.mean(x);
        for (int i = 0; i < d; ++i) {
            y.q[i] += 2 * std::sqrt(m.cqq) * u(gen);
            y.p[i] += 2 * std::sqrt(m.cpp) * u(gen);
        }
        double g2 = 0.0;
        for (int i = 0; i < d; ++i) {
            const double h = 1e-5 * std::max(1.0, std::sqrt(m.cpp));
            PhaseVector xp = x, xm = x;
            xp.p[i] += h;
            xm.p[i] -= h;
            const double gi = (density(spec, t, x, y) == 0.0) ? 0.0
                                                              : (density(spec, t, xp, y) - density(spec, t, xm, y)) / (2 * h);
            g2 += gi * gi;
        }
        const double gm = std::max(-spec.gamma, 0.0);
        const double bound = gradient_bound_constant(alpha, d) * (1 + std::sqrt(gm * t)) /
                             std::sqrt(spec.sigma * spec.sigma * t) * density_alpha(spec, t, x, y);
        if (std::sqrt(g2) > bound) ++violations;
    }
    CHECK(violations == 0);
}
