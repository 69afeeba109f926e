#include "emolysis/windowing.hpp"

#include <algorithm>
#include <cmath>

namespace emolysis {

WindowPlan plan_windows(double duration_s, double window_s, double stride_s) {
  if (!std::isfinite(duration_s) || !(duration_s > 0.0)) {
    throw ValidationError("duration_s must be > 0");
  }
  if (!std::isfinite(window_s) || !std::isfinite(stride_s) || !(stride_s > 0.0) ||
      !(stride_s <= window_s)) {
    throw ValidationError("window plan needs 0 < stride_s <= window_s");
  }
  WindowPlan plan{.windows = {}, .window_s = window_s, .stride_s = stride_s,
                  .duration_s = duration_s};
  for (std::int64_t k = 0;; ++k) {
    // Computed from k rather than accumulated so starts are exact multiples.
    const double start = static_cast<double>(k) * stride_s;
    if (!(start + stride_s < duration_s)) break;
    plan.windows.emplace_back(start, std::min(start + window_s, duration_s));
  }
  if (plan.windows.empty()) plan.windows.emplace_back(0.0, duration_s);
  return plan;
}

std::vector<WindowWeight> window_weights(const WindowPlan& plan, double t) {
  if (!std::isfinite(t) || t < 0.0 || !(t < plan.duration_s)) {
    throw ValidationError("t outside [0, duration)");
  }
  std::vector<WindowWeight> out;
  for (std::size_t i = 0; i < plan.windows.size(); ++i) {
    if (plan.windows[i].contains(t)) out.push_back({i, 0.0});
  }
  const double w = 1.0 / static_cast<double>(out.size());
  for (auto& ww : out) ww.weight = w;
  return out;
}

TickGrid::TickGrid(double duration_s, double tick_s) : duration_s_(duration_s), tick_s_(tick_s) {
  if (!std::isfinite(duration_s) || !(duration_s > 0.0)) {
    throw ValidationError("duration_s must be > 0");
  }
  if (!std::isfinite(tick_s) || !(tick_s > 0.0)) throw ValidationError("tick_s must be > 0");
  count_ = static_cast<std::int64_t>(std::ceil(duration_s / tick_s));
  // Guard against ceil rounding up on an exact multiple represented slightly high.
  while (count_ > 1 && start(count_ - 1) >= duration_s) --count_;
  count_ = std::max<std::int64_t>(count_, 1);
}

TickRange to_tick(const TimeInterval& interval, const TickGrid& grid) {
  const double ts = grid.tick_s();
  auto first = static_cast<std::int64_t>(std::ceil(interval.start_s() / ts - 0.5));
  auto last = static_cast<std::int64_t>(std::ceil(interval.end_s() / ts - 0.5));
  // The division can be off by one ulp; settle boundaries with the exact test.
  while (first > 0 && interval.contains(grid.midpoint(first - 1))) --first;
  while (!interval.contains(grid.midpoint(first)) && grid.midpoint(first) < interval.start_s()) {
    ++first;
  }
  while (last > first && !interval.contains(grid.midpoint(last - 1))) --last;
  while (interval.contains(grid.midpoint(last))) ++last;
  first = std::clamp<std::int64_t>(first, 0, grid.count());
  last = std::clamp<std::int64_t>(last, first, grid.count());
  return {first, last};
}

}  // namespace emolysis
