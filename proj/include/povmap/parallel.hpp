#pragma once

#include <cstddef>
#include <functional>
#include <memory>

namespace povmap {

/// Caps the worker count used by every parallel loop for the lifetime of the
/// object. 0 means "all available cores".
class ThreadLimit {
public:
  explicit ThreadLimit(std::size_t threads);
  ~ThreadLimit();
  ThreadLimit(const ThreadLimit&) = delete;
  ThreadLimit& operator=(const ThreadLimit&) = delete;

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Runs body(i) for i in [0, n). Bodies must write only to slot i of their
/// outputs so results do not depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

} // namespace povmap
