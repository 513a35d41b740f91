#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "kfp/force.hpp"
#include "kfp/geometry.hpp"
#include "kfp/kernel.hpp"
#include "kfp/rng.hpp"

namespace kfp {

enum class SchemeKind { EulerMaruyama, Splitting, Perturbed };

std::string to_string(SchemeKind s);
SchemeKind scheme_from_string(const std::string& s);

struct SimConfig {
    SchemeKind scheme = SchemeKind::Splitting;
    double epsilon = 0.0;         // position-noise intensity of the perturbed scheme
    double dt = 1e-3;             // shrunk if needed so that it divides the horizon
    double horizon = 1.0;
    double exitRefineTol = 1e-9;  // time tolerance of refine_exit
    double geomBand = 1e-9;       // |signed distance| band of refined exit states
    double classifyTol = 0.0;     // |p.n| band of GammaZero for exit statistics
    int bridgeDepth = 12;         // dyadic bridge levels below dt for absorbed runs
    int grazeDepth = 34;          // levels used by first_exterior_visit
    double bridgeKappa = 6.0;     // refinement trigger in bridge standard deviations
    std::uint64_t seed = 1;
    int workerCount = 1;
    int recordEvery = 0;          // keep every k-th state; 0 keeps none
    bool storeIncrements = false;
    bool absorb = true;           // false: whole-space run, no exit detection

    void validate() const;
    int steps() const;
    double step() const;  // horizon / steps()
};

// The independent streams one path draws from.
struct PathRng {
    RngStream main;
    RngStream perturb;
    RngStream bridge;

    PathRng(std::uint64_t seed, std::uint64_t index, std::uint64_t salt = 0);
};

struct AbsorbedPathRecord {
    std::vector<double> times;
    std::vector<PhaseVector> states;
    bool absorbed = false;
    double tau = std::numeric_limits<double>::infinity();
    PhaseVector exitState;
    PhaseVector stepEnd;  // raw lattice state closing the step in which the exit was found
    BoundaryClassification exitClass;
    PhaseVector finalState;  // state at the horizon when the path survives
    double endTime = 0.0;
    int stepsTaken = 0;
    bool hasLogWeight = false;
    double logWeight = 0.0;
    std::vector<double> increments;  // Brownian increments, d per step, when stored
};

// Hermite interpolation of a free segment of length h: cubic position from
// (q, p) at both ends, momentum interpolated linearly.
PhaseVector hermite_state(const PhaseVector& start, const PhaseVector& end, double h, double s);

struct ExitPoint {
    double offset = 0.0;  // time from segment start
    PhaseVector state;
    double distance = 0.0;
};

// Bisection on the Hermite path between a start with d >= 0 and an end with d <= 0.
ExitPoint refine_exit(const PhaseVector& start, const PhaseVector& end, double h, const DomainSpec& dom, double tol,
                      double band = 1e-9);

// One step of the chosen scheme; no exit detection.
PhaseVector integrate_step(const ForceFieldSpec& force, const GaussianKernelSpec& spec, SchemeKind scheme,
                           double epsilon, const PhaseVector& x, double dt, PathRng& rng);

// Result of a grazing-start test.
struct GrazeResult {
    bool left = false;
    double time = 0.0;
};

class Simulator {
public:
    Simulator(ForceFieldSpec force, GaussianKernelSpec spec, DomainSpec dom, SimConfig cfg);

    const SimConfig& config() const { return cfg_; }
    const DomainSpec& domain() const { return dom_; }
    const GaussianKernelSpec& kernel() const { return spec_; }
    const ForceFieldSpec& force() const { return force_; }
    double dt() const { return dt_; }

    AbsorbedPathRecord simulate(const PhaseVector& x, PathRng& rng) const;

    // Whether the continuous free-flight path from a boundary point visits the
    // exterior of the closure within `window`. Splitting schemes only.
    GrazeResult first_exterior_visit(const PhaseVector& x, double window, PathRng& rng) const;

    struct BridgeLevel {
        double h = 0.0;
        double b1[2][2]{};  // weight of the segment start
        double b2[2][2]{};  // weight of the segment end
        double l11 = 0.0, l21 = 0.0, l22 = 0.0;
        double scaleQ = 0.0;  // conditional std of q at the midpoint
    };

    const std::vector<BridgeLevel>& bridge_levels() const { return levels_; }

private:
    AbsorbedPathRecord simulate_split(const PhaseVector& x, PathRng& rng) const;
    AbsorbedPathRecord simulate_em(const PhaseVector& x, PathRng& rng) const;

    ForceFieldSpec force_;
    GaussianKernelSpec spec_;
    DomainSpec dom_;
    SimConfig cfg_;
    double dt_;
    KernelMoments stepMoments_;
    BlockFactor stepFactor_;
    std::vector<BridgeLevel> levels_;
};

// Convenience wrappers matching the operation names.
AbsorbedPathRecord simulate_absorbed(const ForceFieldSpec& force, const GaussianKernelSpec& spec, const DomainSpec& dom,
                                     const PhaseVector& x, const SimConfig& cfg, PathRng& rng);

// Both paths see identical noise; no absorption.
std::pair<AbsorbedPathRecord, AbsorbedPathRecord> simulate_pair_coupled(const ForceFieldSpec& force,
                                                                        const GaussianKernelSpec& spec,
                                                                        const DomainSpec& dom, const PhaseVector& x,
                                                                        const PhaseVector& y, const SimConfig& cfg,
                                                                        std::uint64_t pathIndex);

// log of the exponential martingale for a path of the free process (F = 0,
// gamma = 0, Euler-Maruyama) with stored states and increments. Integrand
// Z = (F(q) - gamma p) / sigma, left-point sums.
double girsanov_weight(const AbsorbedPathRecord& freePath, const ForceFieldSpec& force, const GaussianKernelSpec& spec,
                       double dt);

// One JSON object per line.
void write_path_jsonl(std::ostream& os, std::size_t index, const AbsorbedPathRecord& rec, const std::string& configHash);

}  // namespace kfp
