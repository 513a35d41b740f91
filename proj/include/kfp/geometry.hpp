#pragma once

#include <string>
#include <vector>

#include "kfp/phase.hpp"

namespace kfp {

enum class BoundaryClass { GammaPlus, GammaZero, GammaMinus, Interior, Exterior };

std::string to_string(BoundaryClass c);

struct BoundaryClassification {
    BoundaryClass cls = BoundaryClass::Interior;
    double normalDot = 0.0;  // p . n(q); zero when q is off the boundary
};

// Interval (a, b) in d = 1, or an open ball of radius R in any d.
struct DomainSpec {
    enum class Kind { Interval, Ball };

    Kind kind = Kind::Interval;
    double a = -1.0;
    double b = 1.0;
    std::vector<double> center;
    double radius = 1.0;

    static DomainSpec interval(double a, double b);
    static DomainSpec ball(std::vector<double> center, double radius);

    int dim() const { return kind == Kind::Interval ? 1 : static_cast<int>(center.size()); }
    // Length scale R used for default tolerances: radius or half-length.
    double scale() const { return kind == Kind::Interval ? 0.5 * (b - a) : radius; }
    // Interior sphere radius of the uniform sphere condition.
    double sphere_radius() const { return scale(); }
    double default_geom_tol() const { return 1e-12 * scale(); }
    void validate() const;
};

double signed_distance(const DomainSpec& dom, const std::vector<double>& q);

// Signed distance of base + delta, accurate when delta is far below the
// rounding unit of base (used for grazing paths started on the boundary).
double signed_distance_offset(const DomainSpec& dom, const std::vector<double>& base,
                              const std::vector<double>& delta);

// Unit outward normal at a boundary point; throws if |d(q)| > geomTol.
std::vector<double> outward_normal(const DomainSpec& dom, const std::vector<double>& q, double geomTol = -1.0);

// Normal of the nearest boundary point; defined for every q except the ball centre.
std::vector<double> nearest_normal(const DomainSpec& dom, const std::vector<double>& q);

BoundaryClassification classify(const DomainSpec& dom, const PhaseVector& x, double tol = 0.0, double geomTol = -1.0);

}  // namespace kfp
