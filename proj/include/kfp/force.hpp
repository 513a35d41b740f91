#pragma once

#include <string>
#include <vector>

#include "kfp/geometry.hpp"

namespace kfp {

// Position-dependent force F(q). Components act independently:
//   linear      F_i = -k q_i
//   sine        F_i = A sin(q_i)
//   tabulated   F_i = table(q_i), piecewise linear, constant outside [lo, hi]
struct ForceFieldSpec {
    enum class Kind { Zero, Linear, Sine, Tabulated };

    Kind kind = Kind::Zero;
    double k = 0.0;
    double amplitude = 0.0;
    double lo = 0.0;
    double hi = 1.0;
    std::vector<double> table;

    static ForceFieldSpec zero() { return {}; }
    static ForceFieldSpec linear(double k);
    static ForceFieldSpec sine(double amplitude);
    static ForceFieldSpec tabulated(double lo, double hi, std::vector<double> values);

    void validate() const;

    double component(double q) const;
    void eval(const std::vector<double>& q, std::vector<double>& out) const;

    // Euclidean sup of F over the closure of the domain.
    double sup_norm(const DomainSpec& dom) const;
    // Euclidean sup of F over all of R^d; infinite for the linear force.
    double global_sup_norm(int dim) const;
    // Lipschitz constant of F in the Euclidean norm.
    double lip_const() const;
    // Lipschitz constant of the drift (q, p) -> (p, F(q) - gamma p).
    double drift_lip(double gamma) const;

    std::string describe() const;
};

}  // namespace kfp
