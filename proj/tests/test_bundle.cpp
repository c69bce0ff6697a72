#include <gtest/gtest.h>

#include <filesystem>

#include "ycd/bundle.hpp"

using namespace ycd;
namespace fs = std::filesystem;

namespace {

ModelBundle random_bundle(Rng& rng) {
  const double alpha = rng.uniform(0.05, 0.3);
  const std::size_t res = 8 + rng.below(40);
  std::vector<std::string> labels;
  const std::size_t k = 1 + rng.below(6);
  for (std::size_t i = 0; i < k; ++i) labels.push_back("L" + std::to_string(rng.below(100000)));
  ModelBundle b = make_bundle(build_arch(alpha, 1.0, res), labels, rng.next_u64());
  for (auto& w : b.head.weights) w = static_cast<float>(rng.normal());
  for (auto& v : b.head.bias) v = static_cast<float>(rng.normal());
  return b;
}

ModelBundle small_bundle() { return make_bundle(build_arch(0.1, 1.0, 32), {"a", "b", "c"}, 4); }

BundleErrorCode code_of(std::span<const std::uint8_t> bytes) {
  try {
    parse_bundle(bytes);
  } catch (const BundleError& e) {
    return e.code();
  }
  ADD_FAILURE() << "parse succeeded";
  return BundleErrorCode::Io;
}

// Replaces the JSON header, fixing the length field.
std::vector<std::uint8_t> with_header(const std::vector<std::uint8_t>& bytes, const std::string& header) {
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(bytes[8 + i]) << (8 * i);
  std::vector<std::uint8_t> out(bytes.begin(), bytes.begin() + 8);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(header.size() >> (8 * i)));
  out.insert(out.end(), header.begin(), header.end());
  out.insert(out.end(), bytes.begin() + 16 + static_cast<std::ptrdiff_t>(len), bytes.end());
  return out;
}

nlohmann::json header_of(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(bytes[8 + i]) << (8 * i);
  return nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(len));
}

}  // namespace

TEST(Bundle, RandomRoundTripsAreBitwise) {
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const ModelBundle b = random_bundle(rng);
    const auto bytes = serialize_bundle(b);
    const ModelBundle back = parse_bundle(bytes);
    EXPECT_TRUE(back == b) << "bundle " << i;
    EXPECT_EQ(serialize_bundle(back), bytes);
  }
}

TEST(Bundle, SpecialFloatsSurvive) {
  ModelBundle b = small_bundle();
  b.head.weights[0] = -0.0f;
  b.head.weights[1] = std::numeric_limits<float>::denorm_min();
  b.head.weights[2] = std::numeric_limits<float>::max();
  EXPECT_TRUE(parse_bundle(serialize_bundle(b)) == b);
}

TEST(Bundle, LittleEndianLayout) {
  ModelBundle b = small_bundle();
  b.head.bias.back() = 1.0f;  // 0x3F800000
  const auto bytes = serialize_bundle(b);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "YCDM");
  EXPECT_EQ(bytes[4], kBundleFormatVersion);
  EXPECT_EQ(bytes[5] | bytes[6] | bytes[7], 0);
  const std::vector<std::uint8_t> tail(bytes.end() - 4, bytes.end());
  EXPECT_EQ(tail, (std::vector<std::uint8_t>{0x00, 0x00, 0x80, 0x3F}));
  const auto header = header_of(bytes);
  EXPECT_EQ(header["labels"], (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(header["tensors"].back()["name"], "head.bias");
}

TEST(Bundle, BadMagic) {
  auto bytes = serialize_bundle(small_bundle());
  bytes[0] = 'X';
  EXPECT_EQ(code_of(bytes), BundleErrorCode::BadMagic);
  const std::vector<std::uint8_t> png_like{0x89, 'P', 'N', 'G', 0, 0, 0, 0};
  EXPECT_EQ(code_of(png_like), BundleErrorCode::BadMagic);
}

TEST(Bundle, TruncationAtEveryRegion) {
  const auto bytes = serialize_bundle(small_bundle());
  const std::uint64_t header_len = header_of(bytes).dump().size();
  for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{10}, std::size_t{16 + header_len / 2},
                          std::size_t{16 + header_len + 8}, bytes.size() - 1}) {
    const std::vector<std::uint8_t> part(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
    EXPECT_EQ(code_of(part), BundleErrorCode::Truncated) << "cut at " << cut;
  }
}

TEST(Bundle, UnsupportedVersion) {
  auto bytes = serialize_bundle(small_bundle());
  bytes[4] = 99;
  EXPECT_EQ(code_of(bytes), BundleErrorCode::UnsupportedVersion);
}

TEST(Bundle, LabelCountDisagreeingWithHead) {
  const auto bytes = serialize_bundle(small_bundle());
  auto header = header_of(bytes);
  header["labels"].push_back("d");
  EXPECT_EQ(code_of(with_header(bytes, header.dump())), BundleErrorCode::ShapeMismatch);
}

TEST(Bundle, TensorCountDisagreeingWithShape) {
  const auto bytes = serialize_bundle(small_bundle());
  auto header = header_of(bytes);
  header["tensors"][0]["count"] = header["tensors"][0]["count"].get<std::uint64_t>() + 1;
  EXPECT_EQ(code_of(with_header(bytes, header.dump())), BundleErrorCode::ShapeMismatch);
}

TEST(Bundle, MalformedHeader) {
  const auto bytes = serialize_bundle(small_bundle());
  EXPECT_EQ(code_of(with_header(bytes, "{\"labels\": [")), BundleErrorCode::MalformedHeader);
  auto header = header_of(bytes);
  header.erase("arch");
  EXPECT_EQ(code_of(with_header(bytes, header.dump())), BundleErrorCode::MalformedHeader);
}

TEST(Bundle, ErrorCodeNames) {
  EXPECT_STREQ(to_string(BundleErrorCode::BadMagic), "bad_magic");
  EXPECT_STREQ(to_string(BundleErrorCode::Truncated), "truncated");
  EXPECT_STREQ(to_string(BundleErrorCode::ShapeMismatch), "shape_mismatch");
}

TEST(Bundle, SaveAndLoadFile) {
  const fs::path dir = fs::temp_directory_path() / "ycd_bundle_io";
  fs::create_directories(dir);
  const ModelBundle b = small_bundle();
  save_bundle(b, dir / "m.ycdm");
  EXPECT_TRUE(load_bundle(dir / "m.ycdm") == b);
  try {
    load_bundle(dir / "missing.ycdm");
    FAIL();
  } catch (const BundleError& e) {
    EXPECT_EQ(e.code(), BundleErrorCode::Io);
  }
  EXPECT_THROW(save_bundle(b, dir / "no" / "such" / "dir.ycdm"), BundleError);
  fs::remove_all(dir);
}

TEST(Bundle, InvalidBundleIsNotSerialized) {
  ModelBundle b = small_bundle();
  b.labels.pop_back();
  EXPECT_THROW(serialize_bundle(b), ShapeError);
}

TEST(ArchJson, RoundTrip) {
  for (double alpha : {1.0, 0.5, 0.25})
    for (double rho : {1.0, 0.75}) {
      const ArchSpec a = build_arch(alpha, rho, 224, alpha < 0.5 ? ActivationKind::Relu : ActivationKind::Relu6);
      EXPECT_EQ(arch_from_json(arch_to_json(a)), a);
    }
}
