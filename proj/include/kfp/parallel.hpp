#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace kfp {

// Worker count: explicit request if positive, else KFP_LAB_WORKERS, else 1.
int resolve_workers(int requested);

// Default path-chunk size. Chunk boundaries depend only on n, never on the
// worker count, which keeps chunk-wise reductions bit-reproducible.
inline constexpr std::size_t kChunkSize = 4096;

inline std::size_t chunk_count(std::size_t n, std::size_t chunk = kChunkSize) {
    return (n + chunk - 1) / chunk;
}

// Calls fn(chunkIndex, begin, end) for every chunk, spread over workers.
template <class Fn>
void parallel_chunks(std::size_t n, int workers, Fn&& fn, std::size_t chunk = kChunkSize) {
    const std::size_t nChunks = chunk_count(n, chunk);
    if (nChunks == 0) return;
    const auto run = [&](std::size_t c) {
        const std::size_t begin = c * chunk;
        const std::size_t end = begin + chunk < n ? begin + chunk : n;
        fn(c, begin, end);
    };
    if (workers <= 1 || nChunks == 1) {
        for (std::size_t c = 0; c < nChunks; ++c) run(c);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failureMutex;
    const auto worker = [&] {
        for (;;) {
            const std::size_t c = next.fetch_add(1);
            if (c >= nChunks) return;
            try {
                run(c);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failureMutex);
                if (!failure) failure = std::current_exception();
                next.store(nChunks);
                return;
            }
        }
    };
    const std::size_t nThreads = std::min<std::size_t>(static_cast<std::size_t>(workers), nChunks);
    std::vector<std::thread> pool;
    pool.reserve(nThreads);
    for (std::size_t i = 0; i < nThreads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

// Running mean and second central moment (Welford, Chan merge). Chunks are
// merged in index order so the result is reproducible.
struct MomentAccumulator {
    double mean = 0.0;
    double m2 = 0.0;
    std::size_t count = 0;

    void add(double v) {
        ++count;
        const double delta = v - mean;
        mean += delta / static_cast<double>(count);
        m2 += delta * (v - mean);
    }
    void merge(const MomentAccumulator& o);
    double variance() const { return count > 1 ? m2 / static_cast<double>(count - 1) : 0.0; }
    double std_error() const;
};

}  // namespace kfp
