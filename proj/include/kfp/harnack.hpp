#pragma once

#include <string>
#include <vector>

#include "kfp/geometry.hpp"
#include "kfp/kernel.hpp"

namespace kfp {

// The universal constant of the connecting-path bounds.
inline constexpr double kPathConstant = 8.0;

// Cubic phi on [0, Delta] with (phi, phi')(0) = (q, p), (phi, phi')(Delta) = (q', p'):
//   phi(t) = q + (q'-q) h1 + Delta (p'-p) h2 + Delta p h3,  s = t / Delta,
//   h1 = 3s^2 - 2s^3,  h2 = s^3 - s^2,  h3 = s + 2s^3 - 3s^2.
struct HarnackPath {
    PhaseVector from;
    PhaseVector to;
    double delta = 1.0;
    // |q'-q| + Delta |p'-p| + Delta |p|, the common factor of the bounds.
    double scale = 0.0;
    // Suprema over [0, Delta]: exact per coordinate, combined in the
    // Euclidean norm (exact for d = 1, an upper bound otherwise).
    double supDeviation = 0.0;  // |phi - q|
    double supVelocity = 0.0;   // |phi'|
    double supAcceleration = 0.0;

    std::vector<double> position(double t) const;
    std::vector<double> velocity(double t) const;
    std::vector<double> acceleration(double t) const;
    std::vector<double> jerk() const;  // constant third derivative

    // sup / (C scale / Delta^k) for k = 0, 1, 2; all <= 1 when the bounds hold.
    double deviation_ratio(double C = kPathConstant) const;
    double velocity_ratio(double C = kPathConstant) const;
    double acceleration_ratio(double C = kPathConstant) const;
};

HarnackPath hermite_bridge(const PhaseVector& x, const PhaseVector& y, double delta);

// K = {d(q, wall) >= delta, |p| <= k} inside an interval domain, plus the
// chaining parameters. R, DeltaH, CKT are the base box constants and base
// Harnack constant, which are inputs.
struct HarnackChainSpec {
    DomainSpec domain = DomainSpec::interval(-1.0, 1.0);
    double k = 1.0;
    double delta = 0.5;
    double T = 1.0;
    double epsilon = 0.1;
    double C = kPathConstant;
    double R = 0.5;
    double DeltaH = 0.25;
    double CKT = 10.0;
    std::size_t maxNodes = 4000000;

    // Populated by build_admissible_chain.
    bool populated = false;
    PhaseVector x, y;
    double deltaK = 0.0;       // min(d(K, wall), sphere radius)
    double coverEps = 0.0;     // deltaK / 2
    double coverRadius = 0.0;  // coverEps / (8C)
    double adjacency = 0.0;    // coverEps / (4C)
    int coverQ = 0, coverP = 0;  // lattice sizes along q and p
    std::size_t N = 0;           // number of cover balls
    double Delta = 0.0;          // T / (N + 1)
    std::vector<std::size_t> walk;  // N nodes, N - 1 graph edges
    std::size_t walkEdges = 0;      // edges before padding with loops
    std::vector<HarnackPath> segments;  // N + 1 pieces of length Delta
    double M = 0.0;       // certified sup(|phi'| + |phi''|) of the composed path
    double MBound = 0.0;  // deltaK / Delta^2
    double supAcceleration = 0.0;
    double minWallDistance = 0.0;  // certified lower bound of d(phi, wall)
    double rKT = 0.0;
    double rEps = 0.0;
    double alpha = 0.0;
    double nEps = 0.0;  // integer valued; may exceed 2^53

    void validate() const;
    PhaseVector node(std::size_t i) const;
    // Position of the composed path and its derivatives at time s in [0, T].
    double position(double s) const;
    double velocity(double s) const;
    double acceleration(double s) const;
};

HarnackChainSpec build_admissible_chain(HarnackChainSpec spec, const PhaseVector& x, const PhaseVector& y);

struct ChainReport {
    // Path-space membership H_{T, x, y, M, deltaK / 2}.
    double endpointError = 0.0;
    double knotMismatch = 0.0;  // C^1 gluing at the segment ends
    double gridSupSpeed = 0.0;  // max (|phi'| + |phi''|) on the grid
    double gridMinDistance = 0.0;
    int gridPoints = 0;
    int pathViolations = 0;
    // Step 1: the scaled box stays inside the domain.
    double boxShift = 0.0;  // M r^2 + r^3, must be < deltaK
    // Step 2 with the given r.
    double r = 0.0;
    double alpha = 0.0;
    double tHat = 0.0;
    double tLow = 0.0, tHigh = 0.0;  // window (-DeltaH - R^2, -DeltaH]
    double maxQHat = 0.0;            // compared with R^3
    double maxPHat = 0.0;            // compared with R
    bool enumerated = false;         // every j visited; else segment suprema
    double linksChecked = 0.0;
    int boxViolations = 0;
    std::vector<std::string> violations;

    bool ok() const { return pathViolations == 0 && boxViolations == 0; }
};

// r <= 0 uses the chain's rEps. Step 2 visits every j when n <= enumerateLimit,
// using Taylor forms free of cancellation. Beyond that it bounds every j at
// once through the exact suprema of |phi''| on each cubic piece, which
// dominate |q^_j| r^3 / (alpha^2 / 2) and |p^_j| r / alpha.
ChainReport verify_chain_membership(const HarnackChainSpec& chain, double r = 0.0, int gridPoints = 10000,
                                    double enumerateLimit = 1e6);

struct HarnackConstant {
    double n = 0.0;
    double logValue = 0.0;
    double value = 0.0;  // infinite when it overflows
};

HarnackConstant harnack_constant(double CKT, double n);
HarnackConstant harnack_constant(double CKT, const HarnackChainSpec& chain);

// For F = 0 on the whole space u(t, z) = p^_t(z, y0) solves the Kolmogorov
// equation. Reports the smallest C with sup_K u(t) <= C inf_K u(t + T) on a
// lattice over K.
struct HarnackSpotCheck {
    double supEarly = 0.0;
    double infLate = 0.0;
    double fittedC = 0.0;
    double logFitted = 0.0;
    double logReturned = 0.0;
};

HarnackSpotCheck harnack_gaussian_spot_check(const GaussianKernelSpec& spec, const HarnackChainSpec& chain,
                                             const PhaseVector& y0, double t, int lattice = 41);

}  // namespace kfp
