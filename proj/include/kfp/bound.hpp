#pragma once

#include "kfp/kernel.hpp"

namespace kfp {

// Which Gamma argument the series uses. The induction in the proof produces
// sqrt(pi)^j / Gamma(j/2 + 1); the theorem statement prints Gamma((j+1)/2),
// whose j = 0 coefficient 1/sqrt(pi) is not an upper bound at F = 0.
enum class SeriesForm { Proof, AsPrinted };

struct ParametrixBoundSpec {
    GaussianKernelSpec kernel;  // alpha < 1 required
    double fSup = 0.0;
    double horizon = 1.0;
    double cAlpha = 0.0;
    SeriesForm form = SeriesForm::Proof;

    double gamma_minus() const { return kernel.gamma < 0.0 ? -kernel.gamma : 0.0; }
    void validate() const;
};

// Fills cAlpha from gradient_bound_constant(kernel.alpha, kernel.dim).
ParametrixBoundSpec make_bound_spec(const GaussianKernelSpec& kernel, double fSup, double horizon,
                                    SeriesForm form = SeriesForm::Proof);

// K = fSup cAlpha (1 + sqrt(gamma_- T)) / sigma.
double base_factor(const ParametrixBoundSpec& spec);

double log_series_term(const ParametrixBoundSpec& spec, int j, double t);
double series_term(const ParametrixBoundSpec& spec, int j, double t);

struct BoundValue {
    double value = 0.0;           // alpha^-d (sum + tail) p^(alpha)
    double logValue = 0.0;
    double seriesSum = 0.0;       // sum of kept coefficients + tail
    double truncationTail = 0.0;  // certified bound on dropped coefficients
    int termsUsed = 0;
};

// Coefficient sum with certified tail; independent of (x, y).
BoundValue series_sum(const ParametrixBoundSpec& spec, double t, double relTailTol = 1e-12, int termCap = 200000);

BoundValue evaluate_bound(const ParametrixBoundSpec& spec, double t, const PhaseVector& x, const PhaseVector& y,
                          double relTailTol = 1e-12);

}  // namespace kfp
