#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "emolysis/core.hpp"

namespace emolysis {

inline constexpr double kDefaultWindowS = 15.0;
inline constexpr double kDefaultStrideS = 7.5;
inline constexpr double kDefaultTickS = 0.25;

struct WindowPlan {
  std::vector<TimeInterval> windows;
  double window_s = kDefaultWindowS;
  double stride_s = kDefaultStrideS;
  double duration_s = 0.0;
};

/// Sliding windows: starts at k * stride_s while k * stride_s + stride_s <
/// duration_s, each end clamped to the duration. Falls back to a single
/// [0, duration_s) window when the rule emits nothing.
WindowPlan plan_windows(double duration_s, double window_s = kDefaultWindowS,
                        double stride_s = kDefaultStrideS);

struct WindowWeight {
  std::size_t window;
  double weight;

  friend bool operator==(const WindowWeight&, const WindowWeight&) = default;
};

/// Every window containing `t`, with uniform weights summing to 1.
std::vector<WindowWeight> window_weights(const WindowPlan& plan, double t);

class TickGrid {
 public:
  TickGrid(double duration_s, double tick_s = kDefaultTickS);

  double tick_s() const noexcept { return tick_s_; }
  double duration_s() const noexcept { return duration_s_; }
  std::int64_t count() const noexcept { return count_; }

  double start(std::int64_t k) const noexcept { return static_cast<double>(k) * tick_s_; }
  double midpoint(std::int64_t k) const noexcept {
    return (static_cast<double>(k) + 0.5) * tick_s_;
  }

 private:
  double duration_s_;
  double tick_s_;
  std::int64_t count_;
};

/// Half-open [first, last) tick range.
struct TickRange {
  std::int64_t first = 0;
  std::int64_t last = 0;

  bool empty() const noexcept { return last <= first; }
  std::int64_t size() const noexcept { return empty() ? 0 : last - first; }
  friend bool operator==(const TickRange&, const TickRange&) = default;
};

/// Ticks whose midpoint lies inside `interval`, restricted to the grid. Every
/// tick in the range maps back inside the interval.
TickRange to_tick(const TimeInterval& interval, const TickGrid& grid);

}  // namespace emolysis
