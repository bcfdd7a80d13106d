#include "povmap/parallel.hpp"

#include <tbb/global_control.h>
#include <tbb/parallel_for.h>

namespace povmap {

struct ThreadLimit::Impl {
  std::unique_ptr<tbb::global_control> control;
};

ThreadLimit::ThreadLimit(std::size_t threads) : impl_(std::make_unique<Impl>()) {
  if (threads > 0) {
    impl_->control = std::make_unique<tbb::global_control>(
        tbb::global_control::max_allowed_parallelism, threads);
  }
}

ThreadLimit::~ThreadLimit() = default;

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  if (n == 0) {
    return;
  }
  if (n == 1) {
    body(0);
    return;
  }
  tbb::parallel_for(std::size_t{0}, n, [&](std::size_t i) { body(i); });
}

} // namespace povmap
