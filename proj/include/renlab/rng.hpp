#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace renlab {

// SplitMix64. Every Monte Carlo sample owns a stream seeded from
// (seed, sample index), so the output is a pure function of the seed and
// never depends on how samples are distributed over workers.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    Rng(std::uint64_t seed, std::uint64_t stream) : state_(mix(seed, stream)) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0,1)
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // uniform in (0,1], safe under log()
    double next_double_pos() {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    }

    double uniform(double a, double b) { return a + (b - a) * next_double(); }

    // Box-Muller; explicit so sequences are platform-independent
    double normal() {
        double u1 = next_double_pos();
        double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    // index into a cumulative-weight table (inverse CDF)
    std::size_t pick(const std::vector<double>& cumulative) {
        double u = next_double();
        std::size_t lo = 0, hi = cumulative.size() - 1;
        while (lo < hi) {
            std::size_t mid = (lo + hi) / 2;
            if (u < cumulative[mid]) hi = mid; else lo = mid + 1;
        }
        return lo;
    }

private:
    static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
        std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
};

// Deterministic parallel map-reduce over a sample index space.
//
// The index space is cut into fixed-size chunks; workers claim whole chunks
// and per-chunk results are merged in chunk order. Floating-point reduction
// order is therefore identical for every worker count.
template <typename Acc>
void parallel_chunks(std::size_t count, int workers,
                     const std::function<void(std::size_t, std::size_t, Acc&)>& body,
                     const std::function<void(Acc&, const Acc&)>& merge, Acc& out,
                     std::size_t chunk_size = 1024) {
    if (count == 0) return;
    std::size_t n_chunks = (count + chunk_size - 1) / chunk_size;
    if (workers <= 1 || n_chunks == 1) {
        for (std::size_t c = 0; c < n_chunks; ++c) {
            Acc part{};
            body(c * chunk_size, std::min(count, (c + 1) * chunk_size), part);
            merge(out, part);
        }
        return;
    }
    std::vector<Acc> parts(n_chunks);
    std::vector<std::thread> pool;
    std::size_t n_workers = std::min<std::size_t>(workers, n_chunks);
    for (std::size_t w = 0; w < n_workers; ++w) {
        pool.emplace_back([&, w]() {
            for (std::size_t c = w; c < n_chunks; c += n_workers) {
                body(c * chunk_size, std::min(count, (c + 1) * chunk_size), parts[c]);
            }
        });
    }
    for (auto& th : pool) th.join();
    for (std::size_t c = 0; c < n_chunks; ++c) merge(out, parts[c]);
}

} // namespace renlab
