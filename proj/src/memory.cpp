#include "mamba/memory.hpp"

namespace mamba::memory {
namespace {

std::atomic<std::int64_t> g_live{0};
std::atomic<std::int64_t> g_peak{0};
std::atomic<std::int64_t> g_count{0};

}  // namespace

void record_allocation(std::size_t bytes) noexcept {
  const auto now = g_live.fetch_add(static_cast<std::int64_t>(bytes)) +
                   static_cast<std::int64_t>(bytes);
  g_count.fetch_add(1, std::memory_order_relaxed);
  auto peak = g_peak.load();
  while (now > peak && !g_peak.compare_exchange_weak(peak, now)) {
  }
}

void record_deallocation(std::size_t bytes) noexcept {
  g_live.fetch_sub(static_cast<std::int64_t>(bytes));
}

std::int64_t live_bytes() noexcept { return g_live.load(); }
std::int64_t peak_bytes() noexcept { return g_peak.load(); }
std::int64_t allocation_count() noexcept { return g_count.load(); }

void reset_peak() noexcept { g_peak.store(g_live.load()); }

PeakScope::PeakScope() noexcept
    : baseline_(live_bytes()), allocations_at_start_(allocation_count()) {
  reset_peak();
}

std::int64_t PeakScope::peak_above_baseline() const noexcept {
  return peak_bytes() - baseline_;
}

std::int64_t PeakScope::allocations() const noexcept {
  return allocation_count() - allocations_at_start_;
}

}  // namespace mamba::memory
