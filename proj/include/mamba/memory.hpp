#pragma once

// Allocation accounting for every buffer the library owns.
//
// All tensors, scratch arrays and caches are Buffer<T>, which routes through
// TrackingAllocator. The counters are process-wide; the benchmark harness
// reads the high-water mark instead of OS resident size so that memory
// figures are deterministic and only reflect algorithmic storage.

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <new>
#include <vector>

namespace mamba::memory {

void record_allocation(std::size_t bytes) noexcept;
void record_deallocation(std::size_t bytes) noexcept;

std::int64_t live_bytes() noexcept;
std::int64_t peak_bytes() noexcept;
std::int64_t allocation_count() noexcept;

/// Forget the previous high-water mark; the peak restarts at live_bytes().
void reset_peak() noexcept;

/// Measures the high-water mark above the bytes live at construction.
/// Scopes do not nest: an inner scope resets the peak seen by an outer one.
class PeakScope {
 public:
  PeakScope() noexcept;
  std::int64_t peak_above_baseline() const noexcept;
  std::int64_t allocations() const noexcept;

 private:
  std::int64_t baseline_;
  std::int64_t allocations_at_start_;
};

template <class T>
struct TrackingAllocator {
  using value_type = T;

  TrackingAllocator() noexcept = default;
  template <class U>
  TrackingAllocator(const TrackingAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    auto* p = static_cast<T*>(::operator new(n * sizeof(T)));
    record_allocation(n * sizeof(T));
    return p;
  }
  void deallocate(T* p, std::size_t n) noexcept {
    record_deallocation(n * sizeof(T));
    ::operator delete(p);
  }

  template <class U>
  bool operator==(const TrackingAllocator<U>&) const noexcept {
    return true;
  }
};

}  // namespace mamba::memory

namespace mamba {

template <class T>
using Buffer = std::vector<T, memory::TrackingAllocator<T>>;

}  // namespace mamba
