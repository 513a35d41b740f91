#include <cmath>
#include <cstdlib>
#include <string>

#include "kfp/parallel.hpp"
#include "kfp/phase.hpp"
#include "kfp/rng.hpp"

namespace kfp {

bool PhaseVector::valid() const {
    if (q.empty() || q.size() != p.size()) return false;
    for (std::size_t i = 0; i < q.size(); ++i)
        if (!std::isfinite(q[i]) || !std::isfinite(p[i])) return false;
    return true;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

double phase_norm(const PhaseVector& x) { return std::sqrt(dot(x.q, x.q) + dot(x.p, x.p)); }

double phase_distance(const PhaseVector& x, const PhaseVector& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.dim(); ++i) {
        const double dq = x.q[i] - y.q[i];
        const double dp = x.p[i] - y.p[i];
        s += dq * dq + dp * dp;
    }
    return std::sqrt(s);
}

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

RngStream::RngStream(std::uint64_t masterSeed, std::uint64_t streamIndex, std::uint64_t tag) {
    std::uint64_t a = masterSeed;
    std::uint64_t key = splitmix64(a);
    std::uint64_t b = streamIndex ^ (key + 0x632be59bd9b4e019ULL);
    key ^= splitmix64(b);
    std::uint64_t c = tag ^ (key * 0xd1342543de82ef95ULL);
    std::uint64_t state = key ^ splitmix64(c);
    for (auto& w : s_) w = splitmix64(state);
    if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 1;
}

int resolve_workers(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("KFP_LAB_WORKERS")) {
        try {
            const int v = std::stoi(env);
            if (v > 0) return v;
        } catch (...) {
        }
    }
    return 1;
}

void MomentAccumulator::merge(const MomentAccumulator& o) {
    if (o.count == 0) return;
    if (count == 0) {
        *this = o;
        return;
    }
    const double n1 = static_cast<double>(count);
    const double n2 = static_cast<double>(o.count);
    const double delta = o.mean - mean;
    const double n = n1 + n2;
    mean += delta * n2 / n;
    m2 += o.m2 + delta * delta * n1 * n2 / n;
    count += o.count;
}

double MomentAccumulator::std_error() const {
    return count > 1 ? std::sqrt(variance() / static_cast<double>(count)) : 0.0;
}

}  // namespace kfp
