#pragma once

#include <cstdint>
#include <vector>

#include "ycd/arch.hpp"

namespace ycd::nn {

struct LayerCost {
  std::size_t index = 0;
  LayerKind kind = LayerKind::Activation;
  std::uint64_t macs = 0;
  std::uint64_t params = 0;
};

struct CostReport {
  std::vector<LayerCost> layers;
  std::uint64_t total_macs = 0;
  std::uint64_t total_params = 0;
};

/// Multiply-accumulate and parameter counts per layer, walking the spatial
/// size from `input_resolution`. One MAC is one fused multiply-add; bias adds,
/// scaling and activations cost nothing. Taps over zero padding count, so
/// the totals follow the closed forms below.
///
///   standard   K²·M·N·F_out²   params K²·M·N
///   depthwise  K²·M·F_out²     params K²·M
///   pointwise  M·N·F²          params M·N
///   scale+bias 0               params 2·C
///   dense      M·K             params M·K + K
inline CostReport count_costs(const std::vector<LayerSpec>& layers, std::size_t input_resolution) {
  validate_chain(layers, kImageChannels);
  CostReport report;
  std::uint64_t side = input_resolution;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const std::uint64_t k = l.params.kernel_size;
    const std::uint64_t m = l.in_channels();
    const std::uint64_t n = l.out_channels();
    LayerCost cost{i, l.kind, 0, 0};
    switch (l.kind) {
      case LayerKind::StandardConv:
        side = conv_output_size(side, k, l.params.stride, l.params.padding);
        cost.macs = k * k * m * n * side * side;
        cost.params = k * k * m * n;
        break;
      case LayerKind::DepthwiseConv:
        side = conv_output_size(side, k, l.params.stride, l.params.padding);
        cost.macs = k * k * m * side * side;
        cost.params = k * k * m;
        break;
      case LayerKind::PointwiseConv:
        cost.macs = m * n * side * side;
        cost.params = m * n;
        break;
      case LayerKind::ScaleBias:
        cost.params = 2 * n;
        break;
      case LayerKind::Activation:
        break;
      case LayerKind::GlobalAvgPool:
        side = 1;
        break;
      case LayerKind::Dense:
        cost.macs = m * n;
        cost.params = m * n + n;
        break;
    }
    report.total_macs += cost.macs;
    report.total_params += cost.params;
    report.layers.push_back(cost);
  }
  return report;
}

inline CostReport count_costs(const ArchSpec& arch, std::size_t input_resolution) {
  return count_costs(arch.layers, input_resolution);
}

inline CostReport count_costs(const ArchSpec& arch) {
  return count_costs(arch.layers, arch.effective_resolution());
}

}  // namespace ycd::nn
