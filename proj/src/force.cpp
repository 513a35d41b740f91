#include "kfp/force.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace kfp {

ForceFieldSpec ForceFieldSpec::linear(double k) {
    ForceFieldSpec f;
    f.kind = Kind::Linear;
    f.k = k;
    f.validate();
    return f;
}

ForceFieldSpec ForceFieldSpec::sine(double amplitude) {
    ForceFieldSpec f;
    f.kind = Kind::Sine;
    f.amplitude = amplitude;
    f.validate();
    return f;
}

ForceFieldSpec ForceFieldSpec::tabulated(double lo, double hi, std::vector<double> values) {
    ForceFieldSpec f;
    f.kind = Kind::Tabulated;
    f.lo = lo;
    f.hi = hi;
    f.table = std::move(values);
    f.validate();
    return f;
}

void ForceFieldSpec::validate() const {
    switch (kind) {
        case Kind::Zero: break;
        case Kind::Linear:
            if (!std::isfinite(k)) throw std::invalid_argument("force.k must be finite");
            break;
        case Kind::Sine:
            if (!std::isfinite(amplitude)) throw std::invalid_argument("force.amplitude must be finite");
            break;
        case Kind::Tabulated:
            if (table.size() < 2) throw std::invalid_argument("force.table needs at least two values");
            if (!(lo < hi)) throw std::invalid_argument("force table range needs lo < hi");
            for (double v : table)
                if (!std::isfinite(v)) throw std::invalid_argument("force.table values must be finite");
            break;
    }
}

double ForceFieldSpec::component(double q) const {
    switch (kind) {
        case Kind::Zero: return 0.0;
        case Kind::Linear: return -k * q;
        case Kind::Sine: return amplitude * std::sin(q);
        case Kind::Tabulated: {
            if (q <= lo) return table.front();
            if (q >= hi) return table.back();
            const double h = (hi - lo) / static_cast<double>(table.size() - 1);
            const double s = (q - lo) / h;
            std::size_t i = static_cast<std::size_t>(s);
            if (i >= table.size() - 1) i = table.size() - 2;
            const double w = s - static_cast<double>(i);
            return (1.0 - w) * table[i] + w * table[i + 1];
        }
    }
    return 0.0;
}

void ForceFieldSpec::eval(const std::vector<double>& q, std::vector<double>& out) const {
    out.resize(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) out[i] = component(q[i]);
}

double ForceFieldSpec::sup_norm(const DomainSpec& dom) const {
    const int d = dom.dim();
    switch (kind) {
        case Kind::Zero: return 0.0;
        case Kind::Linear: {
            if (dom.kind == DomainSpec::Kind::Interval) return std::abs(k) * std::max(std::abs(dom.a), std::abs(dom.b));
            return std::abs(k) * (norm(dom.center) + dom.radius);
        }
        case Kind::Sine: {
            if (dom.kind == DomainSpec::Kind::Interval) {
                // |sin| on [a, b]: 1 if a peak lies inside, else the larger endpoint value.
                const double a = dom.a, b = dom.b;
                const double firstPeak = std::ceil((a - M_PI / 2) / M_PI) * M_PI + M_PI / 2;
                if (firstPeak <= b) return std::abs(amplitude);
                return std::abs(amplitude) * std::max(std::abs(std::sin(a)), std::abs(std::sin(b)));
            }
            return global_sup_norm(d);
        }
        case Kind::Tabulated: return global_sup_norm(d);
    }
    return 0.0;
}

double ForceFieldSpec::global_sup_norm(int dim) const {
    const double rd = std::sqrt(static_cast<double>(dim));
    switch (kind) {
        case Kind::Zero: return 0.0;
        case Kind::Linear: return k == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
        case Kind::Sine: return std::abs(amplitude) * rd;
        case Kind::Tabulated: {
            double m = 0.0;
            for (double v : table) m = std::max(m, std::abs(v));
            return m * rd;
        }
    }
    return 0.0;
}

double ForceFieldSpec::lip_const() const {
    switch (kind) {
        case Kind::Zero: return 0.0;
        case Kind::Linear: return std::abs(k);
        case Kind::Sine: return std::abs(amplitude);
        case Kind::Tabulated: {
            const double h = (hi - lo) / static_cast<double>(table.size() - 1);
            double m = 0.0;
            for (std::size_t i = 0; i + 1 < table.size(); ++i) m = std::max(m, std::abs(table[i + 1] - table[i]) / h);
            return m;
        }
    }
    return 0.0;
}

double ForceFieldSpec::drift_lip(double gamma) const {
    // Largest singular value of [[0, 1], [L, |gamma|]], which dominates the
    // drift increment |(dp, F(q)-F(q') - gamma dp)| <= B (|dq|, |dp|).
    const double l = lip_const(), g = std::abs(gamma);
    const double a = 1.0 + l * l + g * g;
    const double det = -l;  // det of B
    return std::sqrt(0.5 * (a + std::sqrt(a * a - 4.0 * det * det)));
}

std::string ForceFieldSpec::describe() const {
    std::ostringstream os;
    switch (kind) {
        case Kind::Zero: os << "zero"; break;
        case Kind::Linear: os << "linear(k=" << k << ")"; break;
        case Kind::Sine: os << "sine(A=" << amplitude << ")"; break;
        case Kind::Tabulated: os << "tabulated(" << table.size() << " nodes)"; break;
    }
    return os.str();
}

}  // namespace kfp
