#ifndef MRH_PARALLEL_HPP
#define MRH_PARALLEL_HPP

#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace mrh {

inline unsigned resolve_threads(int requested) {
    if (requested > 0) return static_cast<unsigned>(requested);
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

/// Runs fn(chunk_index, begin, end) over [0, n) split into fixed-size chunks.
/// Chunk boundaries depend only on n and chunk_size, never on the thread
/// count, so callers that store per-chunk partial results and merge them in
/// chunk order get bit-identical output for any --threads value.
template <typename Fn>
inline void for_chunks(std::size_t n, std::size_t chunk_size, int threads, Fn&& fn) {
    if (n == 0) return;
    if (chunk_size == 0) chunk_size = 1;
    const std::size_t nchunks = (n + chunk_size - 1) / chunk_size;
    unsigned nthreads = resolve_threads(threads);
    if (nthreads > nchunks) nthreads = static_cast<unsigned>(nchunks);

    if (nthreads <= 1) {
        for (std::size_t ci = 0; ci < nchunks; ++ci) {
            std::size_t b = ci * chunk_size;
            std::size_t e = b + chunk_size < n ? b + chunk_size : n;
            fn(ci, b, e);
        }
        return;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            std::size_t ci = next.fetch_add(1);
            if (ci >= nchunks) return;
            std::size_t b = ci * chunk_size;
            std::size_t e = b + chunk_size < n ? b + chunk_size : n;
            try {
                fn(ci, b, e);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    for (unsigned t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

} // namespace mrh

#endif
