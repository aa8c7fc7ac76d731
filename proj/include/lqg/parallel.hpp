#pragma once

#include <atomic>
#include <cstdint>
#include <thread>
#include <vector>

#include "lqg/rng.hpp"

namespace lqg {

// Replica map with a fixed stream assignment: replica r always runs on
// Rng(seed, base.child(r)), and results land in slot r, so the output is
// byte-identical for any thread count.
template <class F>
auto map_replicas(std::size_t n, RngState base, unsigned threads, F&& fn)
    -> std::vector<decltype(fn(std::size_t{0}, std::declval<Rng&>()))> {
    using R = decltype(fn(std::size_t{0}, std::declval<Rng&>()));
    std::vector<R> out(n);
    if (threads <= 1 || n < 256) {
        for (std::size_t r = 0; r < n; ++r) {
            Rng rng(base.child(r));
            out[r] = fn(r, rng);
        }
        return out;
    }
    constexpr std::size_t kBlock = 1024;
    const std::size_t nblocks = (n + kBlock - 1) / kBlock;
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t blk = next.fetch_add(1);
            if (blk >= nblocks) return;
            const std::size_t lo = blk * kBlock, hi = std::min(n, lo + kBlock);
            for (std::size_t r = lo; r < hi; ++r) {
                Rng rng(base.child(r));
                out[r] = fn(r, rng);
            }
        }
    };
    std::vector<std::thread> pool;
    const unsigned nt = std::min<unsigned>(threads, static_cast<unsigned>(nblocks));
    pool.reserve(nt);
    for (unsigned t = 0; t < nt; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    return out;
}

inline unsigned default_threads() {
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : hc;
}

}  // namespace lqg
