#include "kfp/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace kfp {

namespace {

// Below this |rho| the closed forms lose digits to cancellation.
constexpr double kSeriesWindow = 1.0;
constexpr int kSeriesTerms = 32;

double phi1_of(double rho) {
    if (std::abs(rho) < kSeriesWindow) {
        // sum_{n>=0} (-rho)^n / (n+1)!
        double term = 1.0, sum = 1.0;
        for (int n = 1; n < kSeriesTerms; ++n) {
            term *= -rho / (n + 1);
            sum += term;
        }
        return sum;
    }
    return -std::expm1(-rho) / rho;
}

ShapeValues series_shapes(double rho) {
    ShapeValues s{};
    s.phi1 = phi1_of(rho);
    // Phi3 = 2 sum_{m>=0} (-rho)^m / (m+2)!
    {
        double term = 0.5, sum = 0.5;
        for (int m = 1; m < kSeriesTerms; ++m) {
            term *= -rho / (m + 2);
            sum += term;
        }
        s.phi3 = 2.0 * sum;
    }
    // Phi2 = 3/2 sum_{k>=3} (4 - 2^k) (-rho)^{k-3} / k!
    {
        double inv = 1.0 / 6.0;  // 1/k!
        double pw = 1.0;         // (-rho)^{k-3}
        double two = 8.0;
        double sum = 0.0;
        for (int k = 3; k < kSeriesTerms + 3; ++k) {
            sum += -(4.0 - two) * pw * inv;
            pw *= -rho;
            two *= 2.0;
            inv /= (k + 1);
        }
        s.phi2 = 1.5 * sum;
    }
    // phi = 6 Phi1 sum_{n>=3} (n - 2) (-rho)^{n-3} / n!
    {
        double inv = 1.0 / 6.0;
        double pw = 1.0;
        double sum = 0.0;
        for (int n = 3; n < kSeriesTerms + 3; ++n) {
            sum += (n - 2) * pw * inv;
            pw *= -rho;
            inv /= (n + 1);
        }
        s.phi = 6.0 * s.phi1 * sum;
    }
    return s;
}

ShapeValues closed_shapes(double rho) {
    const double em1 = std::expm1(-rho);
    const double em2 = std::expm1(-2.0 * rho);
    const double e = std::exp(-rho);
    ShapeValues s{};
    s.phi1 = -em1 / rho;
    s.phi2 = 1.5 * (2.0 * rho + 4.0 * em1 - em2) / (rho * rho * rho);
    s.phi3 = 2.0 * (1.0 - s.phi1) / rho;
    const double r2 = rho * rho;
    s.phi = 6.0 * (-em1) * (rho * (1.0 + e) + 2.0 * em1) / (r2 * r2);
    return s;
}

void require_time(double t) {
    if (!(t > 0.0) || !std::isfinite(t)) throw std::invalid_argument("time must be positive and finite, got " + std::to_string(t));
}

void require_dims(const GaussianKernelSpec& spec, const PhaseVector& x) {
    if (x.q.size() != static_cast<std::size_t>(spec.dim) || x.p.size() != static_cast<std::size_t>(spec.dim))
        throw std::invalid_argument("phase vector dimension does not match kernel dimension");
}

// |Phi1^2 - Phi3 e^{-rho}/2| / sqrt(phi)
double gradient_shape_ratio(double rho) {
    if (rho < -1.0) {
        // Everything divided by E = e^{-rho} (numerator) and E^2 (phi).
        const double u = std::exp(rho);
        const double r2 = rho * rho;
        const double num = (u - 1.0) / r2 - 1.0 / rho;
        const double phiScaled = 6.0 * (u - 1.0) * (u * (rho - 2.0) + rho + 2.0) / (r2 * r2);
        return std::abs(num) / std::sqrt(phiScaled);
    }
    const ShapeValues s = eval_shape_functions(rho);
    return std::abs(s.phi1 * s.phi1 - 0.5 * s.phi3 * std::exp(-rho)) / std::sqrt(s.phi);
}

}  // namespace

void GaussianKernelSpec::validate() const {
    if (dim < 1) throw std::invalid_argument("kernel dim must be >= 1");
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("kernel sigma must be > 0");
    if (!std::isfinite(gamma)) throw std::invalid_argument("kernel gamma must be finite");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("kernel alpha must lie in (0, 1]");
}

ShapeValues eval_shape_functions(double rho) {
    if (std::abs(rho) < kSeriesWindow) return series_shapes(rho);
    return closed_shapes(rho);
}

KernelMoments moments(const GaussianKernelSpec& spec, double t) {
    require_time(t);
    const double rho = spec.gamma * t;
    const ShapeValues s = eval_shape_functions(rho);
    const double s2 = spec.sigma * spec.sigma;
    KernelMoments m;
    m.dim = spec.dim;
    m.t = t;
    m.a12 = t * s.phi1;
    m.a22 = std::exp(-rho);
    m.cqq = s2 * t * t * t * s.phi2 / 3.0;
    m.cqp = s2 * t * t * s.phi1 * s.phi1 / 2.0;
    m.cpp = s2 * t * phi1_of(2.0 * rho);
    m.det2 = s2 * s2 * t * t * t * t * s.phi / 12.0;
    m.logDet = spec.dim * std::log(m.det2);
    return m;
}

PhaseVector KernelMoments::mean(const PhaseVector& x) const {
    PhaseVector out(x.dim());
    for (std::size_t i = 0; i < x.dim(); ++i) {
        out.q[i] = x.q[i] + a12 * x.p[i];
        out.p[i] = a22 * x.p[i];
    }
    return out;
}

std::vector<double> KernelMoments::mean_map_dense() const {
    const int n = 2 * dim;
    std::vector<double> m(static_cast<std::size_t>(n * n), 0.0);
    for (int i = 0; i < dim; ++i) {
        m[i * n + i] = 1.0;
        m[i * n + dim + i] = a12;
        m[(dim + i) * n + dim + i] = a22;
    }
    return m;
}

std::vector<double> KernelMoments::covariance_dense() const {
    const int n = 2 * dim;
    std::vector<double> c(static_cast<std::size_t>(n * n), 0.0);
    for (int i = 0; i < dim; ++i) {
        c[i * n + i] = cqq;
        c[i * n + dim + i] = cqp;
        c[(dim + i) * n + i] = cqp;
        c[(dim + i) * n + dim + i] = cpp;
    }
    return c;
}

double quadratic_form(const GaussianKernelSpec& spec, double t, std::span<const double> deltaX) {
    require_time(t);
    const std::size_t d = static_cast<std::size_t>(spec.dim);
    if (deltaX.size() != 2 * d) throw std::invalid_argument("deltaX must have length 2d");
    const ShapeValues s = eval_shape_functions(spec.gamma * t);
    const double s2 = spec.sigma * spec.sigma;
    double a = 0.0, b = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double dq = deltaX[i];
        const double dp = deltaX[d + i];
        const double u = spec.gamma * dq + dp;
        const double v = s.phi1 * dq - 0.5 * t * s.phi3 * dp;
        a += u * u;
        b += v * v;
    }
    return a / (s2 * t) + 12.0 * b / (s2 * t * t * t * s.phi);
}

namespace {

double quadratic_form_between(const GaussianKernelSpec& spec, double t, const PhaseVector& x, const PhaseVector& y,
                              double scale, double& logDet) {
    const KernelMoments m = moments(spec, t);
    logDet = m.logDet;
    const std::size_t d = x.dim();
    std::vector<double> delta(2 * d);
    for (std::size_t i = 0; i < d; ++i) {
        delta[i] = scale * (y.q[i] - x.q[i] - m.a12 * x.p[i]);
        delta[d + i] = scale * (y.p[i] - m.a22 * x.p[i]);
    }
    return quadratic_form(spec, t, delta);
}

}  // namespace

double log_density(const GaussianKernelSpec& spec, double t, const PhaseVector& x, const PhaseVector& y) {
    require_time(t);
    require_dims(spec, x);
    require_dims(spec, y);
    double logDet = 0.0;
    const double q = quadratic_form_between(spec, t, x, y, 1.0, logDet);
    return -spec.dim * std::log(2.0 * std::numbers::pi) - 0.5 * logDet - 0.5 * q;
}

double density(const GaussianKernelSpec& spec, double t, const PhaseVector& x, const PhaseVector& y) {
    const double l = log_density(spec, t, x, y);
    return l < -745.0 ? 0.0 : std::exp(l);
}

double log_density_alpha(const GaussianKernelSpec& spec, double t, const PhaseVector& x, const PhaseVector& y) {
    require_time(t);
    require_dims(spec, x);
    require_dims(spec, y);
    double logDet = 0.0;
    const double q = quadratic_form_between(spec, t, x, y, 1.0, logDet);
    return spec.dim * std::log(spec.alpha) - spec.dim * std::log(2.0 * std::numbers::pi) - 0.5 * logDet -
           0.5 * spec.alpha * q;
}

double density_alpha(const GaussianKernelSpec& spec, double t, const PhaseVector& x, const PhaseVector& y) {
    const double l = log_density_alpha(spec, t, x, y);
    return l < -745.0 ? 0.0 : std::exp(l);
}

BlockFactor block_factor(const KernelMoments& m) {
    BlockFactor l;
    l.l11 = std::sqrt(m.cqq);
    l.l21 = l.l11 > 0.0 ? m.cqp / l.l11 : 0.0;
    l.l22 = m.cqq > 0.0 ? std::sqrt(m.det2 / m.cqq) : 0.0;
    return l;
}

void apply_free_step(const KernelMoments& m, const BlockFactor& l, PhaseVector& x, RngStream& rng) {
    for (std::size_t i = 0; i < x.dim(); ++i) {
        const double z1 = rng.normal();
        const double z2 = rng.normal();
        const double q = x.q[i] + m.a12 * x.p[i];
        const double p = m.a22 * x.p[i];
        x.q[i] = q + l.l11 * z1;
        x.p[i] = p + l.l21 * z1 + l.l22 * z2;
    }
}

PhaseVector sample_free_step(const GaussianKernelSpec& spec, double t, const PhaseVector& x, RngStream& rng) {
    require_dims(spec, x);
    const KernelMoments m = moments(spec, t);
    PhaseVector out = x;
    apply_free_step(m, block_factor(m), out, rng);
    return out;
}

double gradient_shape_sup() {
    static const double value = [] {
        // 1/sqrt(6) is the limit of the weighted ratio as rho -> -infinity.
        double best = 1.0 / std::sqrt(6.0);
        best = std::max(best, gradient_shape_ratio(0.0));
        const int perDecade = 400;
        for (int k = -8 * perDecade; k <= 6 * perDecade; ++k) {
            const double r = std::pow(10.0, static_cast<double>(k) / perDecade);
            best = std::max(best, gradient_shape_ratio(r));
            best = std::max(best, gradient_shape_ratio(-r) / (1.0 + std::sqrt(r)));
        }
        return best;
    }();
    return value;
}

double gradient_bound_constant(double alpha, int dim) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
    if (dim < 1) throw std::invalid_argument("dim must be >= 1");
    const double theta = 1.0 / std::sqrt(std::exp(1.0) * (1.0 - alpha));
    const double shape = 1.0 + std::sqrt(12.0) * gradient_shape_sup();
    return 1.05 * std::pow(alpha, -dim) * theta * shape;
}

}  // namespace kfp
