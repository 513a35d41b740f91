#pragma once

#include <span>
#include <vector>

#include "kfp/phase.hpp"
#include "kfp/rng.hpp"

namespace kfp {

struct GaussianKernelSpec {
    int dim = 1;
    double gamma = 0.0;
    double sigma = 1.0;
    double alpha = 1.0;

    void validate() const;  // throws std::invalid_argument
};

// Shape functions of rho = gamma * t. All four equal 1 at rho = 0.
struct ShapeValues {
    double phi1;
    double phi2;
    double phi3;
    double phi;
};

ShapeValues eval_shape_functions(double rho);

// Free-process transition law over time t, per component:
//   mean  (q + a12 p, a22 p)
//   cov   [[cqq, cqp], [cqp, cpp]]
// The full covariance is this 2x2 block repeated on each of the d components.
struct KernelMoments {
    int dim = 1;
    double t = 0.0;
    double a12 = 0.0;  // t * Phi1(gamma t)
    double a22 = 1.0;  // exp(-gamma t)
    double cqq = 0.0;
    double cqp = 0.0;
    double cpp = 0.0;
    double det2 = 0.0;    // per-component determinant, sigma^4 t^4 phi / 12
    double logDet = 0.0;  // log det of the full 2d x 2d covariance

    PhaseVector mean(const PhaseVector& x) const;
    // Dense 2d x 2d forms in (q_1..q_d, p_1..p_d) ordering, row-major.
    std::vector<double> mean_map_dense() const;
    std::vector<double> covariance_dense() const;
};

KernelMoments moments(const GaussianKernelSpec& spec, double t);

// deltaX = y - M(t) x laid out as (dq_1..dq_d, dp_1..dp_d).
double quadratic_form(const GaussianKernelSpec& spec, double t, std::span<const double> deltaX);

double log_density(const GaussianKernelSpec& spec, double t, const PhaseVector& x, const PhaseVector& y);
double density(const GaussianKernelSpec& spec, double t, const PhaseVector& x, const PhaseVector& y);

// alpha^d * density(t, sqrt(alpha) x, sqrt(alpha) y), alpha taken from spec.
double log_density_alpha(const GaussianKernelSpec& spec, double t, const PhaseVector& x, const PhaseVector& y);
double density_alpha(const GaussianKernelSpec& spec, double t, const PhaseVector& x, const PhaseVector& y);

// Exact draw from N(M(t) x, C(t)). Consumes 2d normals in component order.
PhaseVector sample_free_step(const GaussianKernelSpec& spec, double t, const PhaseVector& x, RngStream& rng);

// Cholesky factor of the per-component covariance block.
struct BlockFactor {
    double l11 = 0.0;
    double l21 = 0.0;
    double l22 = 0.0;
};
BlockFactor block_factor(const KernelMoments& m);

// In-place exact step using precomputed moments and factor.
void apply_free_step(const KernelMoments& m, const BlockFactor& l, PhaseVector& x, RngStream& rng);

// Sup over rho of |Phi1^2 - Phi3 e^{-rho} / 2| / (sqrt(phi) (1 + sqrt(rho_-))).
double gradient_shape_sup();

// Certified constant of the momentum-gradient domination
//   |grad_p p_t(x,y)| <= c (1 + sqrt(gamma_- t)) / sqrt(sigma^2 t) * p^(alpha)_t(x,y).
// The alpha^-d factor makes it depend on the dimension.
double gradient_bound_constant(double alpha, int dim = 1);

}  // namespace kfp
