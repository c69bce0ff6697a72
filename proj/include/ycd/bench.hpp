#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "ycd/model.hpp"

namespace ycd {

inline constexpr std::size_t kWarmupIterations = 5;

struct LatencyStats {
  std::size_t samples = 0;
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  double mean_ms = 0.0;
};

/// Nearest-rank percentile, q in (0, 100].
inline double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile of an empty sample");
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q / 100.0 * static_cast<double>(values.size())));
  return values[std::clamp<std::size_t>(rank, 1, values.size()) - 1];
}

inline LatencyStats summarize_latencies(const std::vector<double>& ms) {
  if (ms.empty()) throw std::invalid_argument("no latency samples");
  return {ms.size(), percentile(ms, 50), percentile(ms, 95),
          std::accumulate(ms.begin(), ms.end(), 0.0) / static_cast<double>(ms.size())};
}

/// Times `iterations` forward passes after kWarmupIterations untimed ones.
inline std::vector<double> time_forward(const ModelBundle& bundle, const Tensor& image, std::size_t iterations) {
  if (iterations == 0) throw std::invalid_argument("iterations must be >= 1");
  for (std::size_t i = 0; i < kWarmupIterations; ++i) (void)forward(bundle, image);
  std::vector<double> ms;
  ms.reserve(iterations);
  for (std::size_t i = 0; i < iterations; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    (void)forward(bundle, image);
    ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  return ms;
}

}  // namespace ycd
