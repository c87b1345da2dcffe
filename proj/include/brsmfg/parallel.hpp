#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace brsmfg {

/// Runs body(begin, end) over [0, n) split into at most `workers` contiguous
/// chunks. The chunking never affects results as long as body writes only to
/// its own range. The first exception (by chunk order) is rethrown.
template <class Index, class Body>
void parallel_for(Index n, int workers, Body&& body) {
  if (n <= 0) return;
  const Index chunks = std::max<Index>(1, std::min<Index>(static_cast<Index>(std::max(workers, 1)), n));
  if (chunks == 1) {
    body(Index{0}, n);
    return;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(chunks));
  {
    std::vector<std::jthread> threads;
    threads.reserve(static_cast<std::size_t>(chunks));
    for (Index c = 0; c < chunks; ++c) {
      const Index begin = n * c / chunks;
      const Index end = n * (c + 1) / chunks;
      threads.emplace_back([&, c, begin, end] {
        try {
          body(begin, end);
        } catch (...) {
          errors[static_cast<std::size_t>(c)] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace brsmfg
