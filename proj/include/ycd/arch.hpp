#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ycd/nnops.hpp"

namespace ycd {

enum class LayerKind {
  StandardConv,
  DepthwiseConv,
  PointwiseConv,
  ScaleBias,
  Activation,
  GlobalAvgPool,
  Dense,
};

enum class ActivationKind { Relu6, Relu };

inline std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::StandardConv: return "StandardConv";
    case LayerKind::DepthwiseConv: return "DepthwiseConv";
    case LayerKind::PointwiseConv: return "PointwiseConv";
    case LayerKind::ScaleBias: return "ScaleBias";
    case LayerKind::Activation: return "Activation";
    case LayerKind::GlobalAvgPool: return "GlobalAvgPool";
    case LayerKind::Dense: return "Dense";
  }
  return "?";
}

inline LayerKind layer_kind_from_string(std::string_view s) {
  for (auto k : {LayerKind::StandardConv, LayerKind::DepthwiseConv, LayerKind::PointwiseConv,
                 LayerKind::ScaleBias, LayerKind::Activation, LayerKind::GlobalAvgPool,
                 LayerKind::Dense}) {
    if (to_string(k) == s) return k;
  }
  throw std::invalid_argument("unknown layer kind '" + std::string(s) + "'");
}

/// One layer of the network. Convolutions use the full ConvParams; every
/// other kind only reads in_channels/out_channels (equal except for Dense).
struct LayerSpec {
  LayerKind kind = LayerKind::Activation;
  nn::ConvParams params{};
  ActivationKind activation = ActivationKind::Relu6;

  std::size_t in_channels() const { return params.in_channels; }
  std::size_t out_channels() const {
    return kind == LayerKind::DepthwiseConv ? params.in_channels : params.out_channels;
  }

  bool operator==(const LayerSpec&) const = default;

  static LayerSpec standard(std::size_t k, std::size_t stride, std::size_t m, std::size_t n) {
    return {LayerKind::StandardConv, {k, stride, nn::Padding::Same, m, n}};
  }
  static LayerSpec depthwise(std::size_t k, std::size_t stride, std::size_t m) {
    return {LayerKind::DepthwiseConv, {k, stride, nn::Padding::Same, m, m}};
  }
  static LayerSpec pointwise(std::size_t m, std::size_t n) {
    return {LayerKind::PointwiseConv, {1, 1, nn::Padding::Same, m, n}};
  }
  static LayerSpec scale_bias(std::size_t c) {
    return {LayerKind::ScaleBias, {1, 1, nn::Padding::Same, c, c}};
  }
  static LayerSpec act(std::size_t c, ActivationKind a = ActivationKind::Relu6) {
    return {LayerKind::Activation, {1, 1, nn::Padding::Same, c, c}, a};
  }
  static LayerSpec global_avg_pool(std::size_t c) {
    return {LayerKind::GlobalAvgPool, {1, 1, nn::Padding::Same, c, c}};
  }
  static LayerSpec dense(std::size_t m, std::size_t k) {
    return {LayerKind::Dense, {1, 1, nn::Padding::Same, m, k}};
  }
};

inline constexpr std::size_t kImageChannels = 3;
inline constexpr std::size_t kDefaultResolution = 224;

struct ArchSpec {
  std::size_t input_resolution = kDefaultResolution;
  double width_multiplier = 1.0;
  double resolution_multiplier = 1.0;
  std::vector<LayerSpec> layers;
  std::size_t embedding_dim = 0;

  std::size_t effective_resolution() const {
    const auto r = std::lround(resolution_multiplier * static_cast<double>(input_resolution));
    return r < 1 ? 1 : static_cast<std::size_t>(r);
  }

  bool operator==(const ArchSpec&) const = default;
};

/// Channel counts must chain from the RGB input through every layer.
/// Spatial validity is checked by forward/count_costs, not here.
inline void validate_chain(const std::vector<LayerSpec>& layers, std::size_t input_channels) {
  std::size_t channels = input_channels;
  bool pooled = false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const auto where = "layer " + std::to_string(i) + " (" + std::string(to_string(l.kind)) + ")";
    if (l.in_channels() != channels)
      throw ShapeError(where + " expects " + std::to_string(l.in_channels()) +
                       " input channels, previous layer produces " + std::to_string(channels));
    if (l.in_channels() == 0 || l.out_channels() == 0)
      throw ShapeError(where + " has a zero channel count");
    if (l.params.kernel_size == 0 || l.params.stride == 0)
      throw ShapeError(where + " has zero kernel size or stride");
    switch (l.kind) {
      case LayerKind::ScaleBias:
      case LayerKind::Activation:
      case LayerKind::GlobalAvgPool:
        if (l.out_channels() != l.in_channels())
          throw ShapeError(where + " must preserve channel count");
        break;
      case LayerKind::PointwiseConv:
        if (l.params.kernel_size != 1 || l.params.stride != 1)
          throw ShapeError(where + " must be 1x1 with stride 1");
        break;
      case LayerKind::Dense:
        if (!pooled) throw ShapeError(where + " must follow GlobalAvgPool");
        break;
      default:
        if (pooled) throw ShapeError(where + " cannot follow GlobalAvgPool");
        break;
    }
    if (l.kind == LayerKind::GlobalAvgPool) pooled = true;
    channels = l.out_channels();
  }
}

/// Full backbone check: valid chain from 3 channels ending in GlobalAvgPool
/// whose width is embedding_dim.
inline void validate(const ArchSpec& arch) {
  if (!(arch.width_multiplier > 0.0 && arch.width_multiplier <= 1.0))
    throw std::invalid_argument("width multiplier must be in (0, 1]");
  if (!(arch.resolution_multiplier > 0.0 && arch.resolution_multiplier <= 1.0))
    throw std::invalid_argument("resolution multiplier must be in (0, 1]");
  if (arch.input_resolution == 0) throw std::invalid_argument("input resolution must be >= 1");
  validate_chain(arch.layers, kImageChannels);
  if (arch.layers.empty() || arch.layers.back().kind != LayerKind::GlobalAvgPool)
    throw ShapeError("architecture must end in GlobalAvgPool");
  if (arch.layers.back().out_channels() != arch.embedding_dim)
    throw ShapeError("embedding_dim does not match the pooled channel count");
}

/// max(1, round(alpha * c)).
inline std::size_t scale_channels(double alpha, std::size_t base) {
  const auto c = std::lround(alpha * static_cast<double>(base));
  return c < 1 ? 1 : static_cast<std::size_t>(c);
}

/// Depthwise-separable blocks of the MobileNet-v1 body: (stride, output channels).
struct SeparableBlock {
  std::size_t stride;
  std::size_t out_channels;
};

inline constexpr SeparableBlock kMobileNetBlocks[] = {
    {1, 64},   {2, 128},  {1, 128},  {2, 256},  {1, 256},  {2, 512},  {1, 512},
    {1, 512},  {1, 512},  {1, 512},  {1, 512},  {2, 1024}, {1, 1024},
};
inline constexpr std::size_t kStemChannels = 32;

/// Stem conv 3×3/2, then 13 depthwise-separable blocks, each conv followed
/// by folded batch norm and ReLU6, then global average pooling.
inline ArchSpec build_arch(double alpha, double rho, std::size_t base_resolution = kDefaultResolution,
                           ActivationKind act = ActivationKind::Relu6) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("width multiplier must be in (0, 1]");
  if (!(rho > 0.0 && rho <= 1.0)) throw std::invalid_argument("resolution multiplier must be in (0, 1]");
  if (base_resolution == 0) throw std::invalid_argument("base resolution must be >= 1");

  ArchSpec arch;
  arch.input_resolution = base_resolution;
  arch.width_multiplier = alpha;
  arch.resolution_multiplier = rho;

  auto& L = arch.layers;
  std::size_t c = scale_channels(alpha, kStemChannels);
  L.push_back(LayerSpec::standard(3, 2, kImageChannels, c));
  L.push_back(LayerSpec::scale_bias(c));
  L.push_back(LayerSpec::act(c, act));
  for (const auto& block : kMobileNetBlocks) {
    const std::size_t next = scale_channels(alpha, block.out_channels);
    L.push_back(LayerSpec::depthwise(3, block.stride, c));
    L.push_back(LayerSpec::scale_bias(c));
    L.push_back(LayerSpec::act(c, act));
    L.push_back(LayerSpec::pointwise(c, next));
    L.push_back(LayerSpec::scale_bias(next));
    L.push_back(LayerSpec::act(next, act));
    c = next;
  }
  L.push_back(LayerSpec::global_avg_pool(c));
  arch.embedding_dim = c;
  return arch;
}

}  // namespace ycd
