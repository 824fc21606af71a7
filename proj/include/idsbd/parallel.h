#ifndef IDSBD_PARALLEL_H_
#define IDSBD_PARALLEL_H_

#include <cstddef>
#include <functional>

namespace idsbd {

// Thread count from IDSBD_THREADS, falling back to hardware concurrency.
int DefaultThreadCount();

// Runs fn(i) for i in [0, n) on up to `threads` workers. Work is handed out
// in contiguous blocks so results written to per-index slots are
// deterministic regardless of thread count.
void ParallelFor(std::size_t n, int threads,
                 const std::function<void(std::size_t)>& fn);

}  // namespace idsbd

#endif  // IDSBD_PARALLEL_H_
