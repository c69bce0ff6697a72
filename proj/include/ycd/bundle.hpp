#pragma once

// Model bundle file:
//
//   offset 0   "YCDM"
//          4   u32 LE format version
//          8   u64 LE header length L
//         16   L bytes of UTF-8 JSON (labels, arch, init_seed, tensor table)
//     16 + L   tensor data: little-endian float32 blobs at the offsets named
//              in the tensor table, relative to the start of this section

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "ycd/model.hpp"

namespace ycd {

enum class BundleErrorCode { Io, BadMagic, UnsupportedVersion, Truncated, MalformedHeader, ShapeMismatch };

inline const char* to_string(BundleErrorCode c) {
  switch (c) {
    case BundleErrorCode::Io: return "io_error";
    case BundleErrorCode::BadMagic: return "bad_magic";
    case BundleErrorCode::UnsupportedVersion: return "unsupported_version";
    case BundleErrorCode::Truncated: return "truncated";
    case BundleErrorCode::MalformedHeader: return "malformed_header";
    case BundleErrorCode::ShapeMismatch: return "shape_mismatch";
  }
  return "unknown";
}

class BundleError : public std::runtime_error {
 public:
  BundleError(BundleErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  BundleErrorCode code() const { return code_; }

 private:
  BundleErrorCode code_;
};

inline constexpr char kBundleMagic[4] = {'Y', 'C', 'D', 'M'};
inline constexpr std::size_t kBundlePreambleSize = 16;

namespace detail {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

template <typename T>
T get_le(const std::uint8_t* p) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(p[i]) << (8 * i);
  return v;
}

inline void put_floats(std::vector<std::uint8_t>& out, std::span<const float> values) {
  for (float f : values) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
}

inline nlohmann::json shape_json(const Shape& s) { return {s.n, s.h, s.w, s.c}; }

inline nlohmann::json layer_json(const LayerSpec& l) {
  return {{"kind", std::string(to_string(l.kind))},
          {"kernel_size", l.params.kernel_size},
          {"stride", l.params.stride},
          {"padding", l.params.padding == nn::Padding::Same ? "same" : "valid"},
          {"in_channels", l.params.in_channels},
          {"out_channels", l.params.out_channels},
          {"activation", l.activation == ActivationKind::Relu6 ? "relu6" : "relu"}};
}

inline LayerSpec layer_from_json(const nlohmann::json& j) {
  LayerSpec l;
  l.kind = layer_kind_from_string(j.at("kind").get<std::string>());
  l.params.kernel_size = j.at("kernel_size").get<std::size_t>();
  l.params.stride = j.at("stride").get<std::size_t>();
  const auto pad = j.at("padding").get<std::string>();
  if (pad != "same" && pad != "valid") throw std::invalid_argument("unknown padding '" + pad + "'");
  l.params.padding = pad == "same" ? nn::Padding::Same : nn::Padding::Valid;
  l.params.in_channels = j.at("in_channels").get<std::size_t>();
  l.params.out_channels = j.at("out_channels").get<std::size_t>();
  const auto act = j.at("activation").get<std::string>();
  if (act != "relu6" && act != "relu") throw std::invalid_argument("unknown activation '" + act + "'");
  l.activation = act == "relu6" ? ActivationKind::Relu6 : ActivationKind::Relu;
  return l;
}

}  // namespace detail

inline nlohmann::json arch_to_json(const ArchSpec& a) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : a.layers) layers.push_back(detail::layer_json(l));
  return {{"input_resolution", a.input_resolution},
          {"width_multiplier", a.width_multiplier},
          {"resolution_multiplier", a.resolution_multiplier},
          {"embedding_dim", a.embedding_dim},
          {"layers", std::move(layers)}};
}

inline ArchSpec arch_from_json(const nlohmann::json& j) {
  ArchSpec a;
  a.input_resolution = j.at("input_resolution").get<std::size_t>();
  a.width_multiplier = j.at("width_multiplier").get<double>();
  a.resolution_multiplier = j.at("resolution_multiplier").get<double>();
  a.embedding_dim = j.at("embedding_dim").get<std::size_t>();
  for (const auto& l : j.at("layers")) a.layers.push_back(detail::layer_from_json(l));
  return a;
}

inline std::vector<std::uint8_t> serialize_bundle(const ModelBundle& b) {
  validate(b);
  nlohmann::json tensors = nlohmann::json::array();
  std::uint64_t offset = 0;
  auto add = [&](const std::string& name, const Shape& shape) {
    const std::uint64_t count = shape.count();
    tensors.push_back({{"name", name}, {"shape", detail::shape_json(shape)}, {"offset", offset}, {"count", count}});
    offset += count * sizeof(float);
  };
  for (std::size_t i = 0; i < b.backbone_weights.size(); ++i)
    add("backbone." + std::to_string(i), b.backbone_weights[i].shape());
  add("head.weights", Shape{1, 1, b.head.in_dim, b.head.out_dim});
  add("head.bias", Shape{1, 1, 1, b.head.out_dim});

  const nlohmann::json header = {{"labels", b.labels},
                                 {"arch", arch_to_json(b.arch)},
                                 {"init_seed", b.init_seed},
                                 {"tensors", std::move(tensors)}};
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(kBundleMagic, kBundleMagic + 4);
  detail::put_le<std::uint32_t>(out, b.format_version);
  detail::put_le<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + offset);
  for (const auto& t : b.backbone_weights) detail::put_floats(out, t.data());
  detail::put_floats(out, b.head.weights);
  detail::put_floats(out, b.head.bias);
  return out;
}

inline ModelBundle parse_bundle(std::span<const std::uint8_t> bytes) {
  using E = BundleErrorCode;
  if (bytes.size() < 4) throw BundleError(E::Truncated, "file shorter than the magic number");
  if (std::memcmp(bytes.data(), kBundleMagic, 4) != 0) throw BundleError(E::BadMagic, "not a YCDM model bundle");
  if (bytes.size() < kBundlePreambleSize) throw BundleError(E::Truncated, "incomplete preamble");
  ModelBundle b;
  b.format_version = detail::get_le<std::uint32_t>(bytes.data() + 4);
  if (b.format_version != kBundleFormatVersion)
    throw BundleError(E::UnsupportedVersion, "format version " + std::to_string(b.format_version) +
                                                 ", this build reads " + std::to_string(kBundleFormatVersion));
  const auto header_len = detail::get_le<std::uint64_t>(bytes.data() + 8);
  if (header_len > bytes.size() - kBundlePreambleSize) throw BundleError(E::Truncated, "header runs past end of file");
  const auto data = bytes.subspan(kBundlePreambleSize + header_len);

  struct TensorEntry {
    std::string name;
    Shape shape;
    std::uint64_t offset;
    std::uint64_t count;
  };
  std::vector<TensorEntry> entries;
  try {
    const auto header = nlohmann::json::parse(bytes.begin() + kBundlePreambleSize,
                                              bytes.begin() + kBundlePreambleSize + static_cast<std::ptrdiff_t>(header_len));
    b.labels = header.at("labels").get<std::vector<std::string>>();
    b.arch = arch_from_json(header.at("arch"));
    b.init_seed = header.at("init_seed").get<std::uint64_t>();
    for (const auto& t : header.at("tensors")) {
      const auto dims = t.at("shape").get<std::vector<std::size_t>>();
      if (dims.size() != 4) throw std::invalid_argument("tensor shape must have 4 dims");
      entries.push_back({t.at("name").get<std::string>(), Shape{dims[0], dims[1], dims[2], dims[3]},
                         t.at("offset").get<std::uint64_t>(), t.at("count").get<std::uint64_t>()});
    }
  } catch (const std::exception& e) {
    throw BundleError(E::MalformedHeader, e.what());
  }

  auto read_tensor = [&](const TensorEntry& t) {
    if (t.shape.count() != t.count)
      throw BundleError(E::ShapeMismatch, t.name + ": shape " + t.shape.str() + " holds " +
                                              std::to_string(t.shape.count()) + " values, table says " +
                                              std::to_string(t.count));
    if (t.count > data.size() / sizeof(float) || t.offset > data.size() - t.count * sizeof(float))
      throw BundleError(E::Truncated, t.name + " runs past end of file");
    std::vector<float> values(t.count);
    const std::uint8_t* p = data.data() + t.offset;
    for (std::size_t i = 0; i < t.count; ++i)
      values[i] = std::bit_cast<float>(detail::get_le<std::uint32_t>(p + 4 * i));
    return Tensor(t.shape, std::move(values));
  };

  if (entries.size() < 2) throw BundleError(E::MalformedHeader, "tensor table lacks the head");
  for (std::size_t i = 0; i + 2 < entries.size(); ++i) b.backbone_weights.push_back(read_tensor(entries[i]));
  const Tensor hw = read_tensor(entries[entries.size() - 2]);
  const Tensor hb = read_tensor(entries.back());
  if (hw.shape().n != 1 || hw.shape().h != 1 || hb.shape().n != 1 || hb.shape().h != 1 || hb.shape().w != 1 ||
      hb.shape().c != hw.shape().c)
    throw BundleError(E::ShapeMismatch, "head weight/bias shapes disagree");
  b.head.in_dim = hw.shape().w;
  b.head.out_dim = hw.shape().c;
  b.head.weights = hw.values();
  b.head.bias = hb.values();

  try {
    validate(b);
  } catch (const ShapeError& e) {
    throw BundleError(E::ShapeMismatch, e.what());
  } catch (const std::invalid_argument& e) {
    throw BundleError(E::MalformedHeader, e.what());
  }
  return b;
}

inline void save_bundle(const ModelBundle& b, const std::filesystem::path& path) {
  const auto bytes = serialize_bundle(b);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw BundleError(BundleErrorCode::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw BundleError(BundleErrorCode::Io, "short write to " + path.string());
}

inline ModelBundle load_bundle(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw BundleError(BundleErrorCode::Io, "cannot open " + path.string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return parse_bundle(bytes);
}

}  // namespace ycd
