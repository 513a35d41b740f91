#include "kfp/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace kfp {

std::string to_string(BoundaryClass c) {
    switch (c) {
        case BoundaryClass::GammaPlus: return "GammaPlus";
        case BoundaryClass::GammaZero: return "GammaZero";
        case BoundaryClass::GammaMinus: return "GammaMinus";
        case BoundaryClass::Interior: return "Interior";
        case BoundaryClass::Exterior: return "Exterior";
    }
    return "?";
}

DomainSpec DomainSpec::interval(double a, double b) {
    DomainSpec d;
    d.kind = Kind::Interval;
    d.a = a;
    d.b = b;
    d.validate();
    return d;
}

DomainSpec DomainSpec::ball(std::vector<double> center, double radius) {
    DomainSpec d;
    d.kind = Kind::Ball;
    d.center = std::move(center);
    d.radius = radius;
    d.validate();
    return d;
}

void DomainSpec::validate() const {
    if (kind == Kind::Interval) {
        if (!(a < b) || !std::isfinite(a) || !std::isfinite(b)) throw std::invalid_argument("interval needs finite a < b");
    } else {
        if (center.empty()) throw std::invalid_argument("ball centre must be non-empty");
        if (!(radius > 0.0) || !std::isfinite(radius)) throw std::invalid_argument("ball radius must be > 0");
    }
}

double signed_distance(const DomainSpec& dom, const std::vector<double>& q) {
    if (dom.kind == DomainSpec::Kind::Interval) return std::min(q[0] - dom.a, dom.b - q[0]);
    double r2 = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        const double z = q[i] - dom.center[i];
        r2 += z * z;
    }
    return dom.radius - std::sqrt(r2);
}

double signed_distance_offset(const DomainSpec& dom, const std::vector<double>& base, const std::vector<double>& delta) {
    if (dom.kind == DomainSpec::Kind::Interval) {
        return std::min((base[0] - dom.a) + delta[0], (dom.b - base[0]) - delta[0]);
    }
    // R - |z + w| = (R^2 - |z|^2 - 2 z.w - |w|^2) / (R + |z + w|), with R^2 - |z|^2
    // accumulated in compensated arithmetic so boundary points give a tiny gap.
    double gapHi = dom.radius * dom.radius;
    double gapLo = std::fma(dom.radius, dom.radius, -gapHi);
    double zw = 0.0, w2 = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < base.size(); ++i) {
        const double z = base[i] - dom.center[i];
        const double prod = z * z;
        const double prodErr = std::fma(z, z, -prod);
        // TwoSum of gapHi and -prod.
        const double sum = gapHi - prod;
        const double bb = sum - gapHi;
        const double err = (gapHi - (sum - bb)) + (-prod - bb);
        gapHi = sum;
        gapLo += err - prodErr;
        zw += z * delta[i];
        w2 += delta[i] * delta[i];
        const double sz = z + delta[i];
        s2 += sz * sz;
    }
    return ((gapHi + gapLo) - 2.0 * zw - w2) / (dom.radius + std::sqrt(s2));
}

std::vector<double> nearest_normal(const DomainSpec& dom, const std::vector<double>& q) {
    if (dom.kind == DomainSpec::Kind::Interval) {
        return {(q[0] - dom.a) < (dom.b - q[0]) ? -1.0 : 1.0};
    }
    std::vector<double> n(q.size());
    double r = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        n[i] = q[i] - dom.center[i];
        r += n[i] * n[i];
    }
    r = std::sqrt(r);
    if (r == 0.0) throw std::domain_error("normal undefined at the ball centre");
    for (auto& v : n) v /= r;
    return n;
}

std::vector<double> outward_normal(const DomainSpec& dom, const std::vector<double>& q, double geomTol) {
    if (geomTol < 0.0) geomTol = dom.default_geom_tol();
    if (std::abs(signed_distance(dom, q)) > geomTol) throw std::invalid_argument("outward_normal: point is not on the boundary");
    return nearest_normal(dom, q);
}

BoundaryClassification classify(const DomainSpec& dom, const PhaseVector& x, double tol, double geomTol) {
    if (geomTol < 0.0) geomTol = dom.default_geom_tol();
    const double d = signed_distance(dom, x.q);
    BoundaryClassification out;
    if (d > geomTol) {
        out.cls = BoundaryClass::Interior;
        return out;
    }
    if (d < -geomTol) {
        out.cls = BoundaryClass::Exterior;
        return out;
    }
    out.normalDot = dot(x.p, nearest_normal(dom, x.q));
    if (out.normalDot > tol)
        out.cls = BoundaryClass::GammaPlus;
    else if (out.normalDot < -tol)
        out.cls = BoundaryClass::GammaMinus;
    else
        out.cls = BoundaryClass::GammaZero;
    return out;
}

}  // namespace kfp
