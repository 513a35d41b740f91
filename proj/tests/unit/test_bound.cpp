#include <doctest.h>

#include <cmath>
#include <random>

#include "kfp/bound.hpp"

using namespace kfp;

namespace {

ParametrixBoundSpec spec_with(double fSup, double gamma = 0.0, SeriesForm form = SeriesForm::Proof) {
    return make_bound_spec(GaussianKernelSpec{1, gamma, 1.0, 0.9}, fSup, 1.0, form);
}

}  // namespace

TEST_CASE("printed series: leading coefficient and zero force") {
    const auto s = spec_with(1.0, 0.0, SeriesForm::AsPrinted);
    CHECK(series_term(s, 0, 0.5) == doctest::Approx(1.0 / std::sqrt(M_PI)).epsilon(1e-14));
    const auto z = spec_with(0.0, 0.0, SeriesForm::AsPrinted);
    for (int j = 1; j < 6; ++j) CHECK(series_term(z, j, 0.5) == 0.0);
    CHECK_THROWS(series_term(s, 1, 0.0));
    CHECK_THROWS(series_term(s, 1, 1.5));
}

TEST_CASE("proof series: leading coefficient is one") {
    const auto s = spec_with(1.0);
    CHECK(series_term(s, 0, 0.3) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(series_term(s, 1, 0.3) == doctest::Approx(base_factor(s) * std::sqrt(M_PI * 0.3) / std::tgamma(1.5)).epsilon(1e-13));
}

TEST_CASE("two-step ratio matches the Gamma recurrence") {
    for (auto form : {SeriesForm::Proof, SeriesForm::AsPrinted}) {
        const auto s = spec_with(1.3, -0.4, form);
        const double t = 0.7;
        const double k = base_factor(s);
        for (int j = 0; j < 40; ++j) {
            const double direct = series_term(s, j + 2, t) / series_term(s, j, t);
            const double g = form == SeriesForm::Proof ? (j + 2) / 2.0 : (j + 1) / 2.0;
            CHECK(direct == doctest::Approx(k * k * M_PI * t / g).epsilon(1e-11));
        }
    }
}

TEST_CASE("zero force collapses to the leading term") {
    GaussianKernelSpec kern{2, 0.5, 1.2, 0.8};
    const auto s = make_bound_spec(kern, 0.0, 2.0);
    PhaseVector x({0.1, 0.2}, {0.3, 0.0}), y({0.4, 0.1}, {-0.2, 0.5});
    const auto b = evaluate_bound(s, 1.0, x, y);
    CHECK(b.termsUsed == 1);
    CHECK(b.value == doctest::Approx(std::pow(0.8, -2) * density_alpha(kern, 1.0, x, y)).epsilon(1e-13));
    // The leading term alone already dominates the free density.
    CHECK(b.value >= density(kern, 1.0, x, y));
    CHECK(b.value >= density(kern, 1.0, x, moments(kern, 1.0).mean(x)) * 0.0);
    const auto m = moments(kern, 1.0).mean(x);
    CHECK(evaluate_bound(s, 1.0, x, m).value >= density(kern, 1.0, x, m) * (1 - 1e-12));
}

TEST_CASE("certified tail against brute-force summation") {
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> u(0, 1);
    int kept = 0;
    for (int n = 0; kept < 300; ++n) {
        const auto form = n % 2 ? SeriesForm::Proof : SeriesForm::AsPrinted;
        auto s = make_bound_spec(GaussianKernelSpec{1, 2 * u(gen) - 1, 0.5 + u(gen), 0.5 + 0.45 * u(gen)}, 3 * u(gen),
                                 0.1 + 2 * u(gen), form);
        const double t = s.horizon * (0.01 + 0.99 * u(gen));
        // Keep draws where 500 terms are far past the peak of the series.
        const double k = base_factor(s);
        if (k * k * M_PI * t > 60.0) continue;
        ++kept;
        double brute = 0.0;
        for (int j = 0; j <= 500; ++j) brute += series_term(s, j, t);
        const auto b = series_sum(s, t, 1e-12);
        CHECK(b.seriesSum >= brute * (1 - 1e-12));
        CHECK(std::abs(b.seriesSum / brute - 1.0) < 1e-8);
        CHECK(b.truncationTail >= 0.0);
    }
}

TEST_CASE("bound is monotone in the force sup") {
    GaussianKernelSpec kern{1, 0.3, 1.0, 0.9};
    const auto x = PhaseVector::one_d(0.0, 0.2), y = PhaseVector::one_d(0.1, -0.1);
    double prev = 0.0;
    for (double f : {0.0, 0.1, 0.5, 1.0, 2.0, 4.0}) {
        const double v = evaluate_bound(make_bound_spec(kern, f, 1.0), 0.5, x, y).value;
        CHECK(v >= prev);
        prev = v;
    }
}

TEST_CASE("large base factors stay finite in log space") {
    auto s = make_bound_spec(GaussianKernelSpec{1, -1.0, 1.0, 0.9}, 1.0, 2.0);
    const auto b = series_sum(s, 2.0, 1e-10);
    CHECK(std::isfinite(b.logValue));
    CHECK(b.logValue > 709.0);  // the plain sum would overflow a double
    CHECK(b.termsUsed > 10);
}

TEST_CASE("pathological parameters are reported") {
    auto s = make_bound_spec(GaussianKernelSpec{1, -1.0, 0.3, 0.9}, 30.0, 5.0);
    CHECK_THROWS(series_sum(s, 5.0, 1e-10));
}
