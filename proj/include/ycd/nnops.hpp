#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ycd/tensor.hpp"

namespace ycd::nn {

enum class Padding { Same, Valid };

struct ConvParams {
  std::size_t kernel_size = 1;
  std::size_t stride = 1;
  Padding padding = Padding::Same;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;  // ignored by depthwise

  bool operator==(const ConvParams&) const = default;
};

/// Output extent and leading pad along one spatial axis. "same" pads
/// symmetrically and puts the odd pixel on the bottom/right.
struct AxisGeometry {
  std::size_t out = 0;
  std::size_t pad_before = 0;
};

inline AxisGeometry axis_geometry(std::size_t in, std::size_t kernel, std::size_t stride,
                                  Padding padding) {
  if (kernel == 0 || stride == 0) throw ShapeError("kernel size and stride must be >= 1");
  AxisGeometry g;
  if (padding == Padding::Same) {
    g.out = (in + stride - 1) / stride;
    const std::size_t needed = g.out == 0 ? 0 : (g.out - 1) * stride + kernel;
    g.pad_before = needed > in ? (needed - in) / 2 : 0;
  } else {
    g.out = in >= kernel ? (in - kernel) / stride + 1 : 0;
  }
  return g;
}

inline std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                                    Padding padding) {
  return axis_geometry(in, kernel, stride, padding).out;
}

namespace detail {

inline void check_conv_input(const Tensor& input, const ConvParams& p, const char* op) {
  if (p.kernel_size == 0 || p.stride == 0)
    throw ShapeError(std::string(op) + ": kernel size and stride must be >= 1");
  if (input.shape().c != p.in_channels)
    throw ShapeError(std::string(op) + ": input has " + std::to_string(input.shape().c) +
                     " channels, params expect " + std::to_string(p.in_channels));
}

inline void check_weights(const Tensor& weights, Shape expected, const char* op) {
  if (!(weights.shape() == expected))
    throw ShapeError(std::string(op) + ": weights shape " + weights.shape().str() +
                     " expected " + expected.str());
}

struct Geometry {
  AxisGeometry y;
  AxisGeometry x;
};

inline Geometry geometry(const Shape& in, const ConvParams& p, const char* op) {
  Geometry g{axis_geometry(in.h, p.kernel_size, p.stride, p.padding),
             axis_geometry(in.w, p.kernel_size, p.stride, p.padding)};
  if (g.y.out == 0 || g.x.out == 0)
    throw ShapeError(std::string(op) + ": zero-sized spatial output for input " + in.str());
  return g;
}

}  // namespace detail

/// Full convolution. weights are (K, K, M, N); taps that fall outside the
/// input read zero.
inline Tensor conv2d_standard(const Tensor& input, const Tensor& weights, const ConvParams& p) {
  detail::check_conv_input(input, p, "conv2d_standard");
  const std::size_t k = p.kernel_size, m_ch = p.in_channels, n_ch = p.out_channels;
  detail::check_weights(weights, Shape{k, k, m_ch, n_ch}, "conv2d_standard");
  const Shape& in = input.shape();
  const auto g = detail::geometry(in, p, "conv2d_standard");

  Tensor out(Shape{in.n, g.y.out, g.x.out, n_ch});
  const float* src = input.data().data();
  const float* w = weights.data().data();
  float* dst = out.data().data();

  for (std::size_t b = 0; b < in.n; ++b) {
    for (std::size_t oy = 0; oy < g.y.out; ++oy) {
      for (std::size_t ox = 0; ox < g.x.out; ++ox) {
        float* acc = dst + out.offset(b, oy, ox, 0);
        for (std::size_t i = 0; i < k; ++i) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * p.stride + i) -
                                    static_cast<std::ptrdiff_t>(g.y.pad_before);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in.h)) continue;
          for (std::size_t j = 0; j < k; ++j) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * p.stride + j) -
                                      static_cast<std::ptrdiff_t>(g.x.pad_before);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in.w)) continue;
            const float* px = src + input.offset(b, static_cast<std::size_t>(iy),
                                                 static_cast<std::size_t>(ix), 0);
            const float* wtap = w + (i * k + j) * m_ch * n_ch;
            for (std::size_t m = 0; m < m_ch; ++m) {
              const float v = px[m];
              const float* wrow = wtap + m * n_ch;
              for (std::size_t n = 0; n < n_ch; ++n) acc[n] += v * wrow[n];
            }
          }
        }
      }
    }
  }
  return out;
}

/// One K×K filter per input channel. weights are (K, K, M, 1).
inline Tensor conv2d_depthwise(const Tensor& input, const Tensor& weights, const ConvParams& p) {
  detail::check_conv_input(input, p, "conv2d_depthwise");
  const std::size_t k = p.kernel_size, m_ch = p.in_channels;
  detail::check_weights(weights, Shape{k, k, m_ch, 1}, "conv2d_depthwise");
  const Shape& in = input.shape();
  const auto g = detail::geometry(in, p, "conv2d_depthwise");

  Tensor out(Shape{in.n, g.y.out, g.x.out, m_ch});
  const float* src = input.data().data();
  const float* w = weights.data().data();
  float* dst = out.data().data();

  for (std::size_t b = 0; b < in.n; ++b) {
    for (std::size_t oy = 0; oy < g.y.out; ++oy) {
      for (std::size_t ox = 0; ox < g.x.out; ++ox) {
        float* acc = dst + out.offset(b, oy, ox, 0);
        for (std::size_t i = 0; i < k; ++i) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * p.stride + i) -
                                    static_cast<std::ptrdiff_t>(g.y.pad_before);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in.h)) continue;
          for (std::size_t j = 0; j < k; ++j) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * p.stride + j) -
                                      static_cast<std::ptrdiff_t>(g.x.pad_before);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in.w)) continue;
            const float* px = src + input.offset(b, static_cast<std::size_t>(iy),
                                                 static_cast<std::size_t>(ix), 0);
            const float* wtap = w + (i * k + j) * m_ch;
            for (std::size_t m = 0; m < m_ch; ++m) acc[m] += px[m] * wtap[m];
          }
        }
      }
    }
  }
  return out;
}

/// 1×1 convolution: a per-pixel linear map with weights (1, 1, M, N).
inline Tensor conv2d_pointwise(const Tensor& input, const Tensor& weights) {
  const Shape& in = input.shape();
  const std::size_t m_ch = in.c;
  if (weights.shape().n != 1 || weights.shape().h != 1 || weights.shape().w != m_ch)
    throw ShapeError("conv2d_pointwise: weights shape " + weights.shape().str() +
                     " incompatible with " + std::to_string(m_ch) + " input channels");
  const std::size_t n_ch = weights.shape().c;

  Tensor out(Shape{in.n, in.h, in.w, n_ch});
  const float* src = input.data().data();
  const float* w = weights.data().data();
  float* dst = out.data().data();
  const std::size_t pixels = in.n * in.h * in.w;
  for (std::size_t px = 0; px < pixels; ++px) {
    const float* x = src + px * m_ch;
    float* acc = dst + px * n_ch;
    for (std::size_t m = 0; m < m_ch; ++m) {
      const float v = x[m];
      const float* wrow = w + m * n_ch;
      for (std::size_t n = 0; n < n_ch; ++n) acc[n] += v * wrow[n];
    }
  }
  return out;
}

inline Tensor relu6(const Tensor& input) {
  return map_elementwise(input, [](float x) { return std::min(std::max(x, 0.0f), 6.0f); });
}

inline Tensor relu(const Tensor& input) {
  return map_elementwise(input, [](float x) { return std::max(x, 0.0f); });
}

/// Folded batch normalization: out[..., c] = in[..., c] * scale[c] + bias[c].
inline Tensor scale_bias(const Tensor& input, std::span<const float> scale,
                         std::span<const float> bias) {
  const std::size_t c = input.shape().c;
  if (scale.size() != c || bias.size() != c)
    throw ShapeError("scale_bias: vectors of length " + std::to_string(scale.size()) + "/" +
                     std::to_string(bias.size()) + " for " + std::to_string(c) + " channels");
  Tensor out(input.shape());
  auto src = input.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); i += c) {
    for (std::size_t ch = 0; ch < c; ++ch) dst[i + ch] = src[i + ch] * scale[ch] + bias[ch];
  }
  return out;
}

inline Tensor global_avg_pool(const Tensor& input) { return reduce_mean_spatial(input); }

/// Numerically stable softmax (max-subtracted).
template <typename T>
std::vector<T> softmax(std::span<const T> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax of an empty vector");
  const T peak = *std::max_element(logits.begin(), logits.end());
  std::vector<T> out(logits.size());
  T sum = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    sum += out[i];
  }
  for (T& v : out) v /= sum;
  return out;
}

inline std::vector<float> softmax(const std::vector<float>& logits) {
  return softmax<float>(std::span<const float>(logits));
}

inline constexpr double kLogEpsilon = 1e-12;

/// -ln(probs[target] + 1e-12).
template <typename T>
T cross_entropy(std::span<const T> probs, std::size_t target) {
  if (target >= probs.size())
    throw std::out_of_range("cross_entropy: target " + std::to_string(target) + " >= " +
                            std::to_string(probs.size()) + " classes");
  return static_cast<T>(-std::log(static_cast<double>(probs[target]) + kLogEpsilon));
}

/// d(loss)/d(logits) for softmax followed by cross-entropy: probs - one_hot(target).
template <typename T>
std::vector<T> cross_entropy_grad(std::span<const T> probs, std::size_t target) {
  if (target >= probs.size())
    throw std::out_of_range("cross_entropy_grad: target out of range");
  std::vector<T> g(probs.begin(), probs.end());
  g[target] -= T(1);
  return g;
}

/// Fully connected layer out = Wᵀx + b, with W stored row-major as in_dim × out_dim.
template <typename T>
struct Dense {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::vector<T> weights;  // in_dim * out_dim
  std::vector<T> bias;     // out_dim

  Dense() = default;
  Dense(std::size_t in, std::size_t out)
      : in_dim(in), out_dim(out), weights(in * out, T(0)), bias(out, T(0)) {}

  T& w(std::size_t i, std::size_t k) { return weights[i * out_dim + k]; }
  T w(std::size_t i, std::size_t k) const { return weights[i * out_dim + k]; }

  void validate() const {
    if (weights.size() != in_dim * out_dim || bias.size() != out_dim)
      throw ShapeError("dense layer storage does not match " + std::to_string(in_dim) + "x" +
                       std::to_string(out_dim));
  }

  bool operator==(const Dense&) const = default;
};

template <typename T>
std::vector<T> dense_forward(std::span<const T> x, const Dense<T>& layer) {
  layer.validate();
  if (x.size() != layer.in_dim)
    throw ShapeError("dense_forward: input length " + std::to_string(x.size()) + " expected " +
                     std::to_string(layer.in_dim));
  std::vector<T> out(layer.bias);
  for (std::size_t i = 0; i < layer.in_dim; ++i) {
    const T v = x[i];
    const T* row = layer.weights.data() + i * layer.out_dim;
    for (std::size_t k = 0; k < layer.out_dim; ++k) out[k] += v * row[k];
  }
  return out;
}

template <typename T>
struct DenseGrads {
  std::vector<T> weights;
  std::vector<T> bias;
  std::vector<T> input;
};

/// Exact gradients of a scalar loss given d(loss)/d(out).
template <typename T>
DenseGrads<T> dense_backward(std::span<const T> x, const Dense<T>& layer,
                             std::span<const T> grad_out) {
  layer.validate();
  if (x.size() != layer.in_dim || grad_out.size() != layer.out_dim)
    throw ShapeError("dense_backward: dimension mismatch");
  DenseGrads<T> g;
  g.weights.resize(layer.weights.size());
  g.bias.assign(grad_out.begin(), grad_out.end());
  g.input.assign(layer.in_dim, T(0));
  for (std::size_t i = 0; i < layer.in_dim; ++i) {
    const T* row = layer.weights.data() + i * layer.out_dim;
    T* grow = g.weights.data() + i * layer.out_dim;
    T acc = 0;
    for (std::size_t k = 0; k < layer.out_dim; ++k) {
      grow[k] = x[i] * grad_out[k];
      acc += row[k] * grad_out[k];
    }
    g.input[i] = acc;
  }
  return g;
}

}  // namespace ycd::nn
