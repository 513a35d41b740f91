#pragma once

#include <cstddef>
#include <vector>

namespace kfp {

// Phase-space point x = (q, p); unit mass, so p is a velocity.
struct PhaseVector {
    std::vector<double> q;
    std::vector<double> p;

    PhaseVector() = default;
    explicit PhaseVector(std::size_t dim) : q(dim, 0.0), p(dim, 0.0) {}
    PhaseVector(std::vector<double> q_, std::vector<double> p_) : q(std::move(q_)), p(std::move(p_)) {}

    std::size_t dim() const { return q.size(); }
    bool valid() const;

    static PhaseVector one_d(double q, double p) { return PhaseVector({q}, {p}); }
};

// Euclidean norm of (q, p) as a 2d-vector.
double phase_norm(const PhaseVector& x);
double phase_distance(const PhaseVector& x, const PhaseVector& y);
double dot(const std::vector<double>& a, const std::vector<double>& b);
double norm(const std::vector<double>& a);

}  // namespace kfp
