#pragma once

#include <array>
#include <cstdint>
#include <limits>

#include <boost/random/normal_distribution.hpp>

namespace kfp {

// xoshiro256++ with a splitmix64 seeder. Every path owns one stream keyed by
// (master seed, stream index, tag), so results never depend on scheduling.
class RngStream {
public:
    using result_type = std::uint64_t;

    RngStream(std::uint64_t masterSeed, std::uint64_t streamIndex, std::uint64_t tag = 0);

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    double normal() { return normal_(*this); }
    // Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::array<std::uint64_t, 4> s_{};
    boost::random::normal_distribution<double> normal_{0.0, 1.0};
};

std::uint64_t splitmix64(std::uint64_t& state);

// Stream tags keep independent noise sources of one path apart.
enum StreamTag : std::uint64_t {
    kTagPath = 0,
    kTagPerturbation = 1,
    kTagBridge = 2,
    kTagAdjoint = 3,
    kTagBootstrap = 4,
    kTagAux = 5,
};

}  // namespace kfp
