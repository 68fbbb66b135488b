#pragma once

#include <cstdint>
#include <functional>

namespace tomo {

// Process-wide worker count. 1 (the default) runs everything inline and is
// the strict-determinism mode; batch layers split work into contiguous
// chunks whose outputs never overlap, so results are identical for any
// fixed thread count.
void set_threads(int n);
int threads();

// Calls fn(i) for i in [0, n). Work is split into `threads()` contiguous
// chunks; fn must only write state owned by index i.
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);

// Calls fn(chunk, begin, end) for `threads()` contiguous chunks covering
// [0, n). Lets callers keep per-chunk accumulators and reduce them in
// chunk order afterwards.
void parallel_chunks(int64_t n,
                     const std::function<void(int chunk, int64_t b, int64_t e)>& fn);
int chunk_count(int64_t n);

}  // namespace tomo
