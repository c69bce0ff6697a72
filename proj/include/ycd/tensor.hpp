#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ycd {

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dimensions of a 4-D NHWC tensor.
struct Shape {
  std::size_t n = 0;
  std::size_t h = 0;
  std::size_t w = 0;
  std::size_t c = 0;

  /// Total element count; throws ShapeError if the product overflows.
  std::size_t count() const {
    std::size_t total = 1;
    for (std::size_t d : {n, h, w, c}) {
      if (d != 0 && total > std::numeric_limits<std::size_t>::max() / d)
        throw ShapeError("element count overflows size_t");
      total *= d;
    }
    return total;
  }

  bool operator==(const Shape&) const = default;

  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(h) + "," +
           std::to_string(w) + "," + std::to_string(c) + ")";
  }
};

/// Dense float32 tensor, row-major in (batch, height, width, channels).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(shape), data_(shape.count(), 0.0f) {}
  Tensor(Shape shape, std::vector<float> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.count())
      throw ShapeError("data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_.str());
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }
  const std::vector<float>& values() const { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  std::size_t offset(std::size_t b, std::size_t y, std::size_t x, std::size_t ch) const {
    return ((b * shape_.h + y) * shape_.w + x) * shape_.c + ch;
  }
  float& at(std::size_t b, std::size_t y, std::size_t x, std::size_t ch) {
    return data_[offset(b, y, x, ch)];
  }
  float at(std::size_t b, std::size_t y, std::size_t x, std::size_t ch) const {
    return data_[offset(b, y, x, ch)];
  }

 private:
  Shape shape_{};
  std::vector<float> data_;
};

/// Bitwise comparison, so -0.0f and 0.0f differ and NaN payloads are compared exactly.
inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape())) return false;
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    if (std::bit_cast<std::uint32_t>(da[i]) != std::bit_cast<std::uint32_t>(db[i])) return false;
  }
  return true;
}

inline Tensor zeros(Shape shape) { return Tensor(shape); }

template <typename F>
Tensor map_elementwise(const Tensor& t, F&& f) {
  Tensor out(t.shape());
  auto src = t.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<float>(f(src[i]));
  return out;
}

/// Mean over the H·W positions of each (batch, channel); output shape (N,1,1,C).
/// Accumulates in double.
inline Tensor reduce_mean_spatial(const Tensor& t) {
  const Shape& s = t.shape();
  if (s.h == 0 || s.w == 0) throw ShapeError("reduce_mean_spatial over empty spatial extent");
  Tensor out(Shape{s.n, 1, 1, s.c});
  const std::size_t positions = s.h * s.w;
  std::vector<double> acc(s.c);
  auto src = t.data();
  for (std::size_t b = 0; b < s.n; ++b) {
    std::fill(acc.begin(), acc.end(), 0.0);
    const float* base = src.data() + b * positions * s.c;
    for (std::size_t p = 0; p < positions; ++p) {
      const float* px = base + p * s.c;
      for (std::size_t ch = 0; ch < s.c; ++ch) acc[ch] += px[ch];
    }
    for (std::size_t ch = 0; ch < s.c; ++ch)
      out.at(b, 0, 0, ch) = static_cast<float>(acc[ch] / static_cast<double>(positions));
  }
  return out;
}

}  // namespace ycd
