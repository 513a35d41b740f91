#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "kfp/sde.hpp"

namespace kfp {

using PhaseFunction = std::function<double(const PhaseVector&)>;

// u(t, x) = E[1{tau > t} f(X_t) + 1{tau <= t} g(X_tau)].
struct FKProblem {
    PhaseFunction f;
    PhaseFunction g;
    double supF = 1.0;  // declared sup norms, used for error budgets
    double supG = 1.0;
    double t = 1.0;
    PhaseVector x;

    void validate() const;
};

struct FKEstimate {
    double value = 0.0;
    double stdError = 0.0;
    std::size_t nPaths = 0;
    double dt = 0.0;
};

// cfg.horizon is replaced by problem.t; cfg.seed and cfg.workerCount are used.
FKEstimate estimate_u(const ForceFieldSpec& force, const GaussianKernelSpec& spec, const DomainSpec& dom,
                      const FKProblem& problem, std::size_t nPaths, const SimConfig& cfg);

// Adjoint process dq = -p dt, dp = (-F + gamma p) dt + sigma dB, simulated as
// the forward process with friction -gamma from (q, -p), momenta flipped back.
Simulator make_adjoint_simulator(const ForceFieldSpec& force, const GaussianKernelSpec& spec, const DomainSpec& dom,
                                 const SimConfig& cfg);
AbsorbedPathRecord flip_adjoint_record(AbsorbedPathRecord diamond, double classifyTol);
AbsorbedPathRecord simulate_adjoint(const Simulator& adjointSim, const PhaseVector& x, PathRng& rng);
AbsorbedPathRecord simulate_adjoint_absorbed(const ForceFieldSpec& force, const GaussianKernelSpec& spec,
                                             const DomainSpec& dom, const PhaseVector& x, const SimConfig& cfg,
                                             PathRng& rng);

// Endpoints of surviving paths, flat (q..., p...) per survivor, plus the
// total path count that normalises densities.
struct EndpointCloud {
    int dim = 1;
    std::vector<double> data;
    std::size_t total = 0;

    std::size_t count() const { return data.size() / (2 * static_cast<std::size_t>(dim)); }
    const double* point(std::size_t i) const { return data.data() + i * 2 * static_cast<std::size_t>(dim); }
};

// Independent noise sources per experiment arm.
enum class Arm : std::uint64_t { Forward = 0, Adjoint = 0x9e3779b97f4a7c15ULL, Aux = 0xbf58476d1ce4e5b9ULL };

EndpointCloud collect_endpoints(const Simulator& sim, const PhaseVector& x, std::size_t nPaths, bool adjoint,
                                Arm arm = Arm::Forward);

// Per-coordinate Silverman rule scaled by the free-kernel deviations sqrt(c_qq),
// sqrt(c_pp) at time t; `spec` must be the kernel of the sampled process.
std::vector<double> default_bandwidth(const GaussianKernelSpec& spec, double t, std::size_t nTotal, double scale = 1.0);

struct DensityEstimate {
    std::vector<PhaseVector> points;
    std::vector<double> values;
    std::vector<double> stdErrors;
    std::vector<double> bandwidth;
    std::size_t nSamples = 0;
};

// Gaussian product kernel, normalised by the total path count so the mass
// equals the survival fraction.
DensityEstimate estimate_density_kde(const EndpointCloud& samples, const std::vector<PhaseVector>& points,
                                     const std::vector<double>& bandwidth, int workers = 1);

// Gaussian: product Gaussian kernel. BiasCorrected: 2 K_h - K_{sqrt2 h}, which
// cancels the h^2 smoothing bias (a fourth-order kernel; may go negative).
enum class KdeKernel { Gaussian, BiasCorrected };

// Per-path kernel contributions at one point (zero for absorbed paths).
std::vector<double> kde_contributions(const EndpointCloud& samples, const PhaseVector& point,
                                      const std::vector<double>& bandwidth, KdeKernel kernel = KdeKernel::Gaussian);

struct ReversibilityResult {
    double ratio = 0.0;
    double ciLow = 0.0;
    double ciHigh = 0.0;
    double forward = 0.0;  // p^D_t(y, x)
    double forwardSe = 0.0;
    double adjoint = 0.0;  // p~^D_t(x, y)
    double adjointSe = 0.0;
    std::vector<double> forwardBandwidth;
    std::vector<double> adjointBandwidth;
    std::size_t nPaths = 0;
};

struct ReversibilityOptions {
    double bandwidthScale = 1.0;
    KdeKernel kernel = KdeKernel::BiasCorrected;
    double confidence = 0.95;
    int bootstrap = 200;
};

// p~^D_t(x, y) / (e^{-d gamma t} p^D_t(y, x)) with a percentile bootstrap CI.
ReversibilityResult reversibility_ratio(const ForceFieldSpec& force, const GaussianKernelSpec& spec,
                                        const DomainSpec& dom, double t, const PhaseVector& x, const PhaseVector& y,
                                        std::size_t nPaths, const SimConfig& cfg,
                                        const ReversibilityOptions& opts = {});

enum class ScanSlot { Start, End };

struct ScanRow {
    PhaseVector point;
    double distance = 0.0;
    double density = 0.0;
    double densitySe = 0.0;
    double survival = 0.0;  // from the start point of this row
    double survivalSe = 0.0;
};

// Start slot: the sequence holds start points and the density is taken at
// `fixed`. End slot: paths start at `fixed` and the density is taken at
// each point of the sequence.
std::vector<ScanRow> boundary_vanishing_scan(const ForceFieldSpec& force, const GaussianKernelSpec& spec,
                                             const DomainSpec& dom, double t, ScanSlot slot,
                                             const std::vector<PhaseVector>& sequence, const PhaseVector& fixed,
                                             std::size_t nPaths, const SimConfig& cfg, double bandwidthScale = 1.0);

// Two-stage estimate E[1{tau > s} KDE_{t-s}(X_s -> y)] with nInner inner
// paths per outer survivor, using the given bandwidth.
FKEstimate nested_chapman_kolmogorov(const ForceFieldSpec& force, const GaussianKernelSpec& spec,
                                     const DomainSpec& dom, double s, double t, const PhaseVector& x,
                                     const PhaseVector& y, std::size_t nOuter, std::size_t nInner,
                                     const std::vector<double>& bandwidth, const SimConfig& cfg);

}  // namespace kfp
