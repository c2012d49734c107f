#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "slimdec/errors.hpp"

namespace slimdec {

struct TimingStats {
  std::size_t runs = 0;
  std::size_t warmup = 0;
  double mean_ms = 0.0;
  double std_ms = 0.0;  // population standard deviation
  std::vector<double> per_run_ms;
};

inline TimingStats summarize_times(std::vector<double> per_run_ms) {
  TimingStats s;
  s.runs = per_run_ms.size();
  if (s.runs == 0) return s;
  double sum = 0.0;
  for (double v : per_run_ms) sum += v;
  s.mean_ms = sum / static_cast<double>(s.runs);
  double var = 0.0;
  for (double v : per_run_ms) var += (v - s.mean_ms) * (v - s.mean_ms);
  s.std_ms = std::sqrt(var / static_cast<double>(s.runs));
  s.per_run_ms = std::move(per_run_ms);
  return s;
}

// Times `runs` calls of step after `warmup` untimed calls, on the calling
// thread with a monotonic clock.
template <typename Fn>
TimingStats step_timer(Fn &&step, std::size_t runs, std::size_t warmup) {
  using Clock = std::chrono::steady_clock;
  if (runs == 0) throw DomainError("step_timer needs at least one run");
  for (std::size_t i = 0; i < warmup; ++i) step();
  std::vector<double> times;
  times.reserve(runs);
  for (std::size_t i = 0; i < runs; ++i) {
    const auto start = Clock::now();
    step();
    times.push_back(std::chrono::duration<double, std::milli>(Clock::now() - start).count());
  }
  TimingStats s = summarize_times(std::move(times));
  s.warmup = warmup;
  return s;
}

// Warmup defaults to a tenth of the measured runs.
template <typename Fn>
TimingStats step_timer(Fn &&step, std::size_t runs) {
  return step_timer(std::forward<Fn>(step), runs, runs / 10);
}

}  // namespace slimdec
