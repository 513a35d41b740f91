#pragma once

#include <vector>

#include "kfp/force.hpp"
#include "kfp/fk.hpp"

namespace kfp {

// Lattice for d = 1: q nodes a + i dq (i = 0..nq, both walls included) and
// staggered momenta -P + (j + 1/2) dp (j = 0..np-1), so no node sits on p = 0.
struct Mesh1D {
    double a = -1.0;
    double b = 1.0;
    double P = 4.0;
    int nq = 100;
    int np = 100;
    double dt = 1e-3;

    double dq() const { return (b - a) / nq; }
    double dp() const { return 2.0 * P / np; }
    double q(int i) const { return a + i * dq(); }
    double p(int j) const { return -P + (j + 0.5) * dp(); }
    int nodes() const { return (nq + 1) * np; }
    void validate() const;
};

// 6 sigma / sqrt(max(2 gamma+, 1)), widened by sqrt(T) for long horizons.
double default_momentum_cutoff(double sigma, double gamma, double horizon);

// Both schemes are Strang splittings whose substeps are convex combinations
// of lattice values, so both satisfy the discrete maximum principle.
//   Upwind: upwind q-transport, upwind p-transport, backward-Euler p-diffusion.
//     First order; stable iff each explicit half step has CFL <= 1.
//   SemiLagrangian: exact q-characteristics with cubic interpolation clipped
//     to the local stencil range, and the exact Ornstein-Uhlenbeck law in p applied to the
//     piecewise-linear interpolant with its variance reduced by dp^2/6 to
//     cancel the interpolation smoothing. No step-size restriction.
enum class GridScheme { Upwind, SemiLagrangian };

// Largest stable dt: both explicit transport half-steps at CFL <= cfl for
// Upwind, infinite for SemiLagrangian.
double max_stable_dt(const Mesh1D& mesh, const ForceFieldSpec& force, double gamma,
                     GridScheme scheme = GridScheme::Upwind, double cfl = 1.0);

// Upwind mesh with dt = cfl * max_stable_dt.
Mesh1D make_mesh(double a, double b, double P, int nq, int np, const ForceFieldSpec& force, double gamma,
                 double cfl = 0.9);

struct GridProblem {
    ForceFieldSpec force;
    double gamma = 0.0;
    double sigma = 1.0;
    PhaseFunction f;
    PhaseFunction g;  // read on the outgoing wall nodes only
    double horizon = 1.0;

    void validate() const;
};

struct GridFrame {
    double t = 0.0;
    std::vector<double> u;  // index i * np + j
};

struct GridSolution {
    GridScheme scheme = GridScheme::Upwind;
    Mesh1D mesh;  // dt is the step actually used
    ForceFieldSpec force;
    double gamma = 0.0;
    double sigma = 1.0;
    int steps = 0;
    bool homogeneous = false;  // g vanishes on every outgoing wall node
    bool dual = false;         // produced by dual_transform
    std::vector<GridFrame> frames;  // t = 0, optional snapshots, final
    GridFrame previous;             // one step before the final frame
    std::vector<unsigned char> fixed;  // outgoing wall nodes (incoming after dual_transform)
    double dataMax = 0.0;  // over f on free nodes and g on fixed nodes
    double dataMin = 0.0;
    double interiorMax = 0.0;  // over free nodes and all times
    double interiorMin = 0.0;
    double argmaxT = 0.0, argmaxQ = 0.0, argmaxP = 0.0;
    double argminT = 0.0, argminQ = 0.0, argminP = 0.0;
    double leakEstimate = 0.0;

    const GridFrame& final_frame() const { return frames.back(); }
    double value(int i, int j) const { return final_frame().u[static_cast<std::size_t>(i) * mesh.np + j]; }
    // Bilinear interpolation of the final frame; p is clamped to the node range.
    double interpolate(double q, double p) const;
};

struct GridOptions {
    GridScheme scheme = GridScheme::Upwind;
    int recordEvery = 0;  // snapshot every k steps; 0 keeps only t = 0 and the final frame
    int workers = 1;
};

GridSolution solve_kfp_1d(const GridProblem& problem, const Mesh1D& mesh, const GridOptions& opts = {});

struct MaxPrincipleReport {
    double dataMax = 0.0;
    double dataMin = 0.0;
    double solutionMax = 0.0;
    double solutionMin = 0.0;
    double upperMargin = 0.0;  // dataMax - solutionMax
    double lowerMargin = 0.0;  // solutionMin - dataMin
    double argmaxT = 0.0, argmaxQ = 0.0, argmaxP = 0.0;
    bool holds = false;
};

MaxPrincipleReport check_maximum_principle(const GridSolution& solution, double tol = 1e-10);

// v(t, q, p) = exp(-gamma t) u(t, q, -p); requires a homogeneous solution.
GridSolution dual_transform(const GridSolution& solution, double gamma);

struct ResidualReport {
    double maxAbs = 0.0;
    double rms = 0.0;
    double scale = 0.0;  // max |v| on the evaluated nodes
    double worstQ = 0.0, worstP = 0.0;
    int nodes = 0;
};

// Finite-difference residual of dv/dt = -p v_q - (F + gamma p) v_p - gamma v + sigma^2/2 v_pp,
// the dual equation with friction -gamma, between two frames of a dual
// solution: forward difference in time, trapezoidal average of centred
// differences with spacing `stride` cells in space. A stride of a few cells
// keeps grid-scale limiter noise from dominating the difference quotients.
// Nodes within `margin` cells of the walls or the cut-off are skipped.
ResidualReport dual_residual(const GridSolution& dual, const GridFrame& earlier, const GridFrame& later,
                             int margin = 4, int stride = 1);
// Between the last two time steps.
ResidualReport dual_residual(const GridSolution& dual, int margin = 4, int stride = 1);

}  // namespace kfp
