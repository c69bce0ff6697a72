#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ycd/arch.hpp"
#include "ycd/nnops.hpp"
#include "ycd/rng.hpp"
#include "ycd/tensor.hpp"

namespace ycd {

inline constexpr std::uint32_t kBundleFormatVersion = 1;

struct ModelBundle {
  std::uint32_t format_version = kBundleFormatVersion;
  std::vector<std::string> labels;
  ArchSpec arch;
  std::vector<Tensor> backbone_weights;
  nn::Dense<float> head;
  std::uint64_t init_seed = 0;
};

/// Bitwise equality, including every float.
inline bool operator==(const ModelBundle& a, const ModelBundle& b) {
  if (a.format_version != b.format_version || a.labels != b.labels || !(a.arch == b.arch) ||
      a.init_seed != b.init_seed || a.backbone_weights.size() != b.backbone_weights.size())
    return false;
  for (std::size_t i = 0; i < a.backbone_weights.size(); ++i)
    if (!bitwise_equal(a.backbone_weights[i], b.backbone_weights[i])) return false;
  auto same_bits = [](const std::vector<float>& x, const std::vector<float>& y) {
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (std::bit_cast<std::uint32_t>(x[i]) != std::bit_cast<std::uint32_t>(y[i])) return false;
    return true;
  };
  return a.head.in_dim == b.head.in_dim && a.head.out_dim == b.head.out_dim &&
         same_bits(a.head.weights, b.head.weights) && same_bits(a.head.bias, b.head.bias);
}

/// Shapes of the backbone weight tensors, in layer order. Convolutions own one
/// tensor; ScaleBias owns two (scale, then bias) of shape (1,1,1,C).
inline std::vector<Shape> weight_shapes(const ArchSpec& arch) {
  std::vector<Shape> shapes;
  for (const auto& l : arch.layers) {
    const std::size_t k = l.params.kernel_size;
    switch (l.kind) {
      case LayerKind::StandardConv:
        shapes.push_back({k, k, l.in_channels(), l.out_channels()});
        break;
      case LayerKind::DepthwiseConv:
        shapes.push_back({k, k, l.in_channels(), 1});
        break;
      case LayerKind::PointwiseConv:
        shapes.push_back({1, 1, l.in_channels(), l.out_channels()});
        break;
      case LayerKind::ScaleBias:
        shapes.push_back({1, 1, 1, l.out_channels()});
        shapes.push_back({1, 1, 1, l.out_channels()});
        break;
      case LayerKind::Dense:
        throw ShapeError("Dense layers belong to the head, not the backbone");
      default:
        break;
    }
  }
  return shapes;
}

inline std::size_t fan_in(const LayerSpec& l) {
  const std::size_t k = l.params.kernel_size;
  switch (l.kind) {
    case LayerKind::StandardConv: return k * k * l.in_channels();
    case LayerKind::DepthwiseConv: return k * k;
    case LayerKind::PointwiseConv: return l.in_channels();
    default: return 0;
  }
}

/// Operating point the folded batch norm centres every activation on: the
/// middle of the ReLU6 band.
inline constexpr double kActivationCentre = 3.0;

/// He-normal convolution weights (std = sqrt(2 / fan_in)); each layer draws
/// from its own stream derived from `seed`, so the result is a pure function
/// of (arch, seed).
///
/// ScaleBias layers hold the folded batch norm of the conv before them,
/// with statistics taken analytically rather than from data: scale 1/sqrt(2)
/// undoes the He variance gain and the bias moves each channel's expected
/// response to kActivationCentre. Without this the random ReLU6 stack maps
/// all images onto nearly the same embedding.
inline std::vector<Tensor> init_backbone(const ArchSpec& arch, std::uint64_t seed) {
  validate(arch);
  const auto shapes = weight_shapes(arch);
  std::vector<Tensor> weights;
  weights.reserve(shapes.size());
  std::size_t slot = 0;
  double incoming_mean = 0.0;  // images are centred on zero
  std::vector<double> channel_mean(kImageChannels, 0.0);
  const double bn_scale = 1.0 / std::sqrt(2.0);

  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const auto& l = arch.layers[i];
    if (l.kind == LayerKind::ScaleBias) {
      Tensor scale(shapes[slot++]);
      Tensor bias(shapes[slot++]);
      for (std::size_t c = 0; c < l.out_channels(); ++c) {
        scale[c] = static_cast<float>(bn_scale);
        bias[c] = static_cast<float>(kActivationCentre - bn_scale * channel_mean[c]);
      }
      weights.push_back(std::move(scale));
      weights.push_back(std::move(bias));
      incoming_mean = kActivationCentre;
      channel_mean.assign(l.out_channels(), kActivationCentre);
      continue;
    }
    const std::size_t fan = fan_in(l);
    if (fan == 0) continue;  // activation / pooling: operating point unchanged
    Tensor w(shapes[slot++]);
    Rng rng(derive_seed(seed, i));
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan));
    for (float& v : w.data()) v = static_cast<float>(rng.normal() * stddev);

    // Expected response to a constant input of incoming_mean: the sum of each
    // output channel's taps (channels are the innermost weight axis for
    // standard/pointwise, the third axis for depthwise).
    channel_mean.assign(l.out_channels(), 0.0);
    const Shape& s = w.shape();
    const std::size_t inner = l.kind == LayerKind::DepthwiseConv ? s.w : s.c;
    for (std::size_t k = 0; k < w.size(); ++k)
      channel_mean[k % inner] += incoming_mean * static_cast<double>(w[k]);
    weights.push_back(std::move(w));
  }
  return weights;
}

/// Checks that weights and head agree with the arch and label list.
inline void validate(const ModelBundle& bundle) {
  validate(bundle.arch);
  const auto shapes = weight_shapes(bundle.arch);
  if (shapes.size() != bundle.backbone_weights.size())
    throw ShapeError("bundle carries " + std::to_string(bundle.backbone_weights.size()) +
                     " backbone tensors, arch needs " + std::to_string(shapes.size()));
  for (std::size_t i = 0; i < shapes.size(); ++i)
    if (!(shapes[i] == bundle.backbone_weights[i].shape()))
      throw ShapeError("backbone tensor " + std::to_string(i) + " has shape " +
                       bundle.backbone_weights[i].shape().str() + ", arch needs " +
                       shapes[i].str());
  if (bundle.head.in_dim != bundle.arch.embedding_dim)
    throw ShapeError("head input " + std::to_string(bundle.head.in_dim) +
                     " != embedding_dim " + std::to_string(bundle.arch.embedding_dim));
  if (bundle.head.out_dim != bundle.labels.size())
    throw ShapeError("head output " + std::to_string(bundle.head.out_dim) + " != " +
                     std::to_string(bundle.labels.size()) + " labels");
  bundle.head.validate();
}

/// Builds a bundle with a freshly initialized backbone and a zero head.
inline ModelBundle make_bundle(ArchSpec arch, std::vector<std::string> labels, std::uint64_t seed) {
  ModelBundle b;
  b.backbone_weights = init_backbone(arch, seed);
  b.head = nn::Dense<float>(arch.embedding_dim, labels.size());
  b.arch = std::move(arch);
  b.labels = std::move(labels);
  b.init_seed = seed;
  return b;
}

/// Runs the backbone over a batch of images (N, R, R, 3) and returns the
/// pooled embeddings, shape (N, 1, 1, embedding_dim).
inline Tensor embed(const ArchSpec& arch, std::span<const Tensor> weights, const Tensor& images) {
  const std::size_t res = arch.effective_resolution();
  const Shape& s = images.shape();
  if (s.h != res || s.w != res || s.c != kImageChannels)
    throw ShapeError("image shape " + s.str() + " does not match model input " +
                     std::to_string(res) + "x" + std::to_string(res) + "x3");
  Tensor x = images;
  std::size_t slot = 0;
  for (const auto& l : arch.layers) {
    switch (l.kind) {
      case LayerKind::StandardConv:
        x = nn::conv2d_standard(x, weights[slot++], l.params);
        break;
      case LayerKind::DepthwiseConv:
        x = nn::conv2d_depthwise(x, weights[slot++], l.params);
        break;
      case LayerKind::PointwiseConv:
        x = nn::conv2d_pointwise(x, weights[slot++]);
        break;
      case LayerKind::ScaleBias:
        x = nn::scale_bias(x, weights[slot].data(), weights[slot + 1].data());
        slot += 2;
        break;
      case LayerKind::Activation:
        x = l.activation == ActivationKind::Relu6 ? nn::relu6(x) : nn::relu(x);
        break;
      case LayerKind::GlobalAvgPool:
        x = nn::global_avg_pool(x);
        break;
      case LayerKind::Dense:
        throw ShapeError("Dense layer inside backbone");
    }
  }
  return x;
}

struct ForwardResult {
  std::vector<float> embedding;
  std::vector<float> probs;
};

/// Classifies a single preprocessed image of shape (1, R, R, 3).
inline ForwardResult forward(const ModelBundle& bundle, const Tensor& image) {
  if (image.shape().n != 1) throw ShapeError("forward expects a single image");
  const Tensor pooled = embed(bundle.arch, bundle.backbone_weights, image);
  ForwardResult r;
  r.embedding = pooled.values();
  const auto logits = nn::dense_forward<float>(r.embedding, bundle.head);
  r.probs = nn::softmax(logits);
  return r;
}

}  // namespace ycd
