#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace lrgw {

// Record of buffer requests observed while a measurement scope was active.
// Solver code reports every significant allocation (anything that scales
// with the problem size) through note_buffer; the peak is a running max and
// therefore monotone within a scope.
struct AllocationStats {
  std::size_t peak_buffer_elements = 0;
  std::vector<std::pair<std::size_t, std::string>> large_buffer_events;
};

namespace detail {

struct AllocScopeState {
  AllocationStats* stats = nullptr;
  std::size_t large_threshold = 0;
};

inline AllocScopeState& alloc_scope_state() {
  thread_local AllocScopeState state;
  return state;
}

}  // namespace detail

// Called by library code when it creates a buffer of `elements` entries.
// No-op unless a scope is active on this thread.
inline void note_buffer(std::size_t elements, const char* tag) {
  auto& state = detail::alloc_scope_state();
  if (state.stats == nullptr) return;
  if (elements > state.stats->peak_buffer_elements)
    state.stats->peak_buffer_elements = elements;
  if (state.large_threshold > 0 && elements >= state.large_threshold &&
      state.stats->large_buffer_events.size() < 16384)
    state.stats->large_buffer_events.emplace_back(elements, tag);
}

// RAII measurement scope; one at a time per thread (scopes do not nest).
// Events of size >= large_threshold are kept individually.
class AllocationScope {
 public:
  explicit AllocationScope(std::size_t large_threshold = 0) {
    auto& state = detail::alloc_scope_state();
    previous_ = state;
    state.stats = &stats_;
    state.large_threshold = large_threshold;
  }
  ~AllocationScope() { detail::alloc_scope_state() = previous_; }

  AllocationScope(const AllocationScope&) = delete;
  AllocationScope& operator=(const AllocationScope&) = delete;

  const AllocationStats& stats() const { return stats_; }

 private:
  AllocationStats stats_;
  detail::AllocScopeState previous_;
};

// Convenience wrapper: run `fn` under a scope and return what it recorded.
template <typename Fn>
AllocationStats allocation_scope(Fn&& fn, std::size_t large_threshold = 0) {
  AllocationScope scope(large_threshold);
  std::forward<Fn>(fn)();
  return scope.stats();
}

}  // namespace lrgw
