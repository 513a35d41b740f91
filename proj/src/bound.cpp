#include "kfp/bound.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace kfp {

namespace {

double log_add(double a, double b) {
    if (a == -std::numeric_limits<double>::infinity()) return b;
    if (b == -std::numeric_limits<double>::infinity()) return a;
    const double hi = std::max(a, b), lo = std::min(a, b);
    return hi + std::log1p(std::exp(lo - hi));
}

double gamma_arg(SeriesForm form, int j) { return form == SeriesForm::Proof ? 0.5 * j + 1.0 : 0.5 * (j + 1); }

}  // namespace

void ParametrixBoundSpec::validate() const {
    kernel.validate();
    if (!(kernel.alpha < 1.0)) throw std::invalid_argument("bound needs alpha < 1");
    if (!(fSup >= 0.0) || !std::isfinite(fSup)) throw std::invalid_argument("fSup must be finite and >= 0");
    if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be > 0");
    if (!(cAlpha > 0.0)) throw std::invalid_argument("cAlpha must be > 0");
}

ParametrixBoundSpec make_bound_spec(const GaussianKernelSpec& kernel, double fSup, double horizon, SeriesForm form) {
    ParametrixBoundSpec s;
    s.kernel = kernel;
    s.fSup = fSup;
    s.horizon = horizon;
    s.cAlpha = gradient_bound_constant(kernel.alpha, kernel.dim);
    s.form = form;
    s.validate();
    return s;
}

double base_factor(const ParametrixBoundSpec& spec) {
    return spec.fSup * spec.cAlpha * (1.0 + std::sqrt(spec.gamma_minus() * spec.horizon)) / spec.kernel.sigma;
}

double log_series_term(const ParametrixBoundSpec& spec, int j, double t) {
    if (!(t > 0.0 && t <= spec.horizon)) throw std::invalid_argument("series term needs 0 < t <= T");
    if (j < 0) throw std::invalid_argument("series index must be >= 0");
    const double lg = std::lgamma(gamma_arg(spec.form, j));
    if (j == 0) return -lg;
    const double k = base_factor(spec) * std::sqrt(std::numbers::pi * t);
    if (k == 0.0) return -std::numeric_limits<double>::infinity();
    return j * std::log(k) - lg;
}

double series_term(const ParametrixBoundSpec& spec, int j, double t) { return std::exp(log_series_term(spec, j, t)); }

BoundValue series_sum(const ParametrixBoundSpec& spec, double t, double relTailTol, int termCap) {
    BoundValue out;
    const double k = base_factor(spec) * std::sqrt(std::numbers::pi * t);
    double logSum = log_series_term(spec, 0, t);
    if (k == 0.0) {
        out.seriesSum = std::exp(logSum);
        out.termsUsed = 1;
        out.logValue = logSum;
        return out;
    }
    const double k2 = k * k;
    // term(j+2)/term(j) = K^2 / gamma_arg(j); decreasing in j.
    for (int j = 1; j < termCap; ++j) {
        logSum = log_add(logSum, log_series_term(spec, j, t));
        const double r = k2 / gamma_arg(spec.form, j);
        if (r < 0.5) {
            // Remaining terms split by parity, each dominated by a geometric series of ratio r.
            const double logTail = log_add(log_series_term(spec, j + 1, t), log_series_term(spec, j + 2, t)) - std::log1p(-r);
            if (logTail - logSum <= std::log(relTailTol)) {
                out.termsUsed = j + 1;
                out.truncationTail = std::exp(logTail);
                const double logTotal = log_add(logSum, logTail);
                out.seriesSum = std::exp(logTotal);
                out.logValue = logTotal;
                return out;
            }
        }
    }
    throw std::runtime_error("parametrix series: tail tolerance unreachable within the term cap");
}

BoundValue evaluate_bound(const ParametrixBoundSpec& spec, double t, const PhaseVector& x, const PhaseVector& y,
                          double relTailTol) {
    BoundValue out = series_sum(spec, t, relTailTol);
    const double logScale = -spec.kernel.dim * std::log(spec.kernel.alpha) + log_density_alpha(spec.kernel, t, x, y);
    out.logValue += logScale;
    out.value = out.logValue < -745.0 ? 0.0 : std::exp(out.logValue);
    return out;
}

}  // namespace kfp
