#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "ycd/image.hpp"
#include "ycd/rng.hpp"

namespace ycd::data {

namespace fs = std::filesystem;

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Split { Unassigned, Train, Test };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Test: return "test";
    default: return "unassigned";
  }
}

inline Split split_from_string(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  if (s == "unassigned") return Split::Unassigned;
  throw DatasetError("unknown split '" + std::string(s) + "'");
}

/// How many images of each class go to the test split.
///   Default:  55 for a class of exactly 400 images (345 train), else round(0.15·n)
///   Fraction: round(fraction·n)
///   Count:    test_count
struct SplitPolicy {
  enum class Kind { Default, Fraction, Count };
  Kind kind = Kind::Default;
  double fraction = 0.15;
  std::size_t test_count = 55;

  static SplitPolicy by_fraction(double f) { return {Kind::Fraction, f, 0}; }
  static SplitPolicy by_count(std::size_t t) { return {Kind::Count, 0.0, t}; }

  std::size_t test_size(std::size_t n) const {
    switch (kind) {
      case Kind::Count: return test_count;
      case Kind::Fraction: return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
      case Kind::Default:
        break;
    }
    if (n == 400) return 55;
    return static_cast<std::size_t>(std::llround(0.15 * static_cast<double>(n)));
  }

  bool operator==(const SplitPolicy&) const = default;
};

inline constexpr std::size_t kFigureClassSize = 400;

struct Entry {
  std::string path;
  std::string label;
  Split split = Split::Unassigned;
  bool operator==(const Entry&) const = default;
};

struct DatasetManifest {
  std::vector<std::string> classes;
  std::vector<Entry> entries;
  std::uint64_t seed = 0;
  std::optional<SplitPolicy> policy;

  std::size_t class_index(std::string_view label) const {
    const auto it = std::find(classes.begin(), classes.end(), label);
    if (it == classes.end()) throw DatasetError("unknown label '" + std::string(label) + "'");
    return static_cast<std::size_t>(it - classes.begin());
  }

  std::vector<Entry> select(Split split) const {
    std::vector<Entry> out;
    for (const auto& e : entries)
      if (e.split == split) out.push_back(e);
    return out;
  }

  std::size_t count(std::string_view label, Split split) const {
    return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [&](const Entry& e) {
      return e.label == label && e.split == split;
    }));
  }

  bool operator==(const DatasetManifest&) const = default;
};

inline bool has_image_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".jpg" || ext == ".jpeg" || ext == ".png";
}

/// One class per subdirectory of `root`; only .jpg/.jpeg/.png files count.
/// Labels and entries are sorted so the result is independent of directory
/// iteration order.
inline DatasetManifest scan_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw DatasetError("dataset root " + root.string() + " is not a directory");
  DatasetManifest m;
  for (const auto& dir : fs::directory_iterator(root))
    if (dir.is_directory()) m.classes.push_back(dir.path().filename().string());
  if (m.classes.empty()) throw DatasetError("no classes found under " + root.string());
  std::sort(m.classes.begin(), m.classes.end());

  for (const auto& label : m.classes) {
    std::vector<std::string> files;
    for (const auto& f : fs::directory_iterator(root / label))
      if (f.is_regular_file() && has_image_extension(f.path())) files.push_back(f.path().generic_string());
    if (files.empty()) throw DatasetError("class '" + label + "' has no images");
    for (auto& f : files) m.entries.push_back({std::move(f), label, Split::Unassigned});
  }
  std::sort(m.entries.begin(), m.entries.end(),
            [](const Entry& a, const Entry& b) { return a.path < b.path; });
  return m;
}

/// Per class (in manifest order): seeded shuffle, then the last t shuffled
/// entries become Test and the rest Train. Entry order is preserved.
inline DatasetManifest split_manifest(DatasetManifest m, const SplitPolicy& policy, std::uint64_t seed) {
  if (policy.kind == SplitPolicy::Kind::Fraction && !(policy.fraction > 0.0 && policy.fraction < 1.0))
    throw DatasetError("split fraction must be in (0, 1)");
  for (std::size_t c = 0; c < m.classes.size(); ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < m.entries.size(); ++i)
      if (m.entries[i].label == m.classes[c]) members.push_back(i);
    const std::size_t n = members.size();
    const std::size_t t = policy.test_size(n);
    if (t >= n)
      throw DatasetError("class '" + m.classes[c] + "' has " + std::to_string(n) +
                         " images, cannot hold out " + std::to_string(t));
    Rng rng(derive_seed(seed, c));
    rng.shuffle(std::span<std::size_t>(members));
    for (std::size_t k = 0; k < n; ++k)
      m.entries[members[k]].split = k + t >= n ? Split::Test : Split::Train;
  }
  for (const auto& e : m.entries)
    if (std::find(m.classes.begin(), m.classes.end(), e.label) == m.classes.end())
      throw DatasetError("entry " + e.path + " has unknown label '" + e.label + "'");
  m.seed = seed;
  m.policy = policy;
  return m;
}

inline nlohmann::json policy_to_json(const SplitPolicy& p) {
  switch (p.kind) {
    case SplitPolicy::Kind::Fraction: return {{"kind", "fraction"}, {"fraction", p.fraction}};
    case SplitPolicy::Kind::Count: return {{"kind", "count"}, {"test_count", p.test_count}};
    case SplitPolicy::Kind::Default: break;
  }
  return {{"kind", "default"}};
}

inline SplitPolicy policy_from_json(const nlohmann::json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "fraction") return SplitPolicy::by_fraction(j.at("fraction").get<double>());
  if (kind == "count") return SplitPolicy::by_count(j.at("test_count").get<std::size_t>());
  if (kind == "default") return {};
  throw DatasetError("unknown split policy '" + kind + "'");
}

inline nlohmann::json to_json(const DatasetManifest& m) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : m.entries)
    entries.push_back({{"path", e.path}, {"label", e.label}, {"split", std::string(to_string(e.split))}});
  return {{"classes", m.classes},
          {"seed", m.seed},
          {"policy", m.policy ? policy_to_json(*m.policy) : nlohmann::json(nullptr)},
          {"entries", std::move(entries)}};
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
  DatasetManifest m;
  try {
    m.classes = j.at("classes").get<std::vector<std::string>>();
    m.seed = j.at("seed").get<std::uint64_t>();
    if (!j.at("policy").is_null()) m.policy = policy_from_json(j.at("policy"));
    for (const auto& e : j.at("entries"))
      m.entries.push_back({e.at("path").get<std::string>(), e.at("label").get<std::string>(),
                           split_from_string(e.at("split").get<std::string>())});
  } catch (const nlohmann::json::exception& e) {
    throw DatasetError(std::string("malformed manifest: ") + e.what());
  }
  for (const auto& e : m.entries) m.class_index(e.label);
  return m;
}

inline void save_manifest(const DatasetManifest& m, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DatasetError("cannot write " + path.string());
  out << to_json(m).dump(2) << '\n';
}

inline DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot read " + path.string());
  try {
    return manifest_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw DatasetError("manifest " + path.string() + " is not valid JSON: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Synthetic banknotes: each class is a note of one dominant hue carrying its
// denomination as blocky digits, on a grey background, with jittered
// placement, shade and per-pixel noise.

inline constexpr std::array<std::string_view, 8> kSyntheticLabels = {
    "100", "250", "500", "1000", "200", "50", "20", "10"};
inline constexpr std::size_t kMaxSyntheticClasses = kSyntheticLabels.size();

/// Hue in degrees for class i of k: evenly spaced around the wheel.
inline double synthetic_hue(std::size_t i, std::size_t k) { return 360.0 * static_cast<double>(i) / static_cast<double>(k); }

struct Rgb {
  double r, g, b;
};

/// h in degrees, s and v in [0, 1].
inline Rgb hsv_to_rgb(double h, double s, double v) {
  h = std::fmod(std::fmod(h, 360.0) + 360.0, 360.0);
  const double c = v * s;
  const double hp = h / 60.0;
  const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  Rgb rgb{0, 0, 0};
  if (hp < 1) rgb = {c, x, 0};
  else if (hp < 2) rgb = {x, c, 0};
  else if (hp < 3) rgb = {0, c, x};
  else if (hp < 4) rgb = {0, x, c};
  else if (hp < 5) rgb = {x, 0, c};
  else rgb = {c, 0, x};
  const double m = v - c;
  return {rgb.r + m, rgb.g + m, rgb.b + m};
}

namespace detail {

// 3x5 digit bitmaps, rows top to bottom, bit 2 = left column.
inline constexpr std::array<std::array<std::uint8_t, 5>, 10> kDigitFont = {{
    {7, 5, 5, 5, 7}, {2, 6, 2, 2, 7}, {7, 1, 7, 4, 7}, {7, 1, 7, 1, 7}, {5, 5, 7, 1, 1},
    {7, 4, 7, 1, 7}, {7, 4, 7, 5, 7}, {7, 1, 1, 1, 1}, {7, 5, 7, 5, 7}, {7, 5, 7, 1, 7},
}};

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v * 255.0), 0L, 255L));
}

}  // namespace detail

inline RgbImage render_synthetic_note(std::size_t class_index, std::size_t k_classes,
                                      std::size_t resolution, Rng& rng) {
  const double res = static_cast<double>(resolution);
  const double hue = synthetic_hue(class_index, k_classes) + rng.uniform(-8.0, 8.0);
  const double sat = rng.uniform(0.55, 0.85);
  const double val = rng.uniform(0.65, 0.95);
  const double bg = rng.uniform(0.15, 0.35);

  const double note_w = res * rng.uniform(0.94, 1.0);
  const double note_h = res * rng.uniform(0.90, 1.0);
  const double x0 = rng.uniform(0.0, res - note_w), y0 = rng.uniform(0.0, res - note_h);
  const double border = std::max(1.0, res * 0.03);

  const std::string_view label = kSyntheticLabels[class_index];
  const double cell = std::max(1.0, std::floor(note_h * 0.25 / 5.0));
  const double glyph_w = cell * (4.0 * static_cast<double>(label.size()) - 1.0);
  const double gx0 = x0 + border + rng.uniform(0.0, std::max(0.0, note_w - 2 * border - glyph_w));
  const double gy0 = y0 + border + rng.uniform(0.0, std::max(0.0, note_h - 2 * border - 5.0 * cell));

  auto in_glyph = [&](double x, double y) {
    if (x < gx0 || y < gy0) return false;
    const auto col = static_cast<std::size_t>((x - gx0) / cell);
    const auto row = static_cast<std::size_t>((y - gy0) / cell);
    if (row >= 5) return false;
    const std::size_t digit = col / 4, sub = col % 4;
    if (digit >= label.size() || sub == 3) return false;
    const auto bits = detail::kDigitFont[static_cast<std::size_t>(label[digit] - '0')][row];
    return ((bits >> (2 - sub)) & 1u) != 0;
  };

  const Rgb face = hsv_to_rgb(hue, sat, val);
  const Rgb edge = hsv_to_rgb(hue, sat, val * 0.8);
  const Rgb ink = hsv_to_rgb(hue, sat, val * 0.7);

  RgbImage img{resolution, resolution, std::vector<std::uint8_t>(resolution * resolution * 3)};
  for (std::size_t y = 0; y < resolution; ++y) {
    for (std::size_t x = 0; x < resolution; ++x) {
      const double cx = static_cast<double>(x) + 0.5, cy = static_cast<double>(y) + 0.5;
      Rgb c{bg, bg, bg};
      if (cx >= x0 && cx < x0 + note_w && cy >= y0 && cy < y0 + note_h) {
        const bool on_border = cx < x0 + border || cx >= x0 + note_w - border ||
                               cy < y0 + border || cy >= y0 + note_h - border;
        c = on_border ? edge : (in_glyph(cx, cy) ? ink : face);
      }
      const double noise = rng.uniform(-0.03, 0.03);
      std::uint8_t* p = img.px(x, y);
      p[0] = detail::to_byte(c.r + noise);
      p[1] = detail::to_byte(c.g + noise);
      p[2] = detail::to_byte(c.b + noise);
    }
  }
  return img;
}

/// Writes k directories of n PNGs under `root`. Output bytes depend only on
/// (k, n, resolution, seed).
inline std::vector<std::string> generate_synthetic_dataset(const fs::path& root, std::size_t k_classes,
                                                           std::size_t n_per_class, std::size_t resolution,
                                                           std::uint64_t seed) {
  if (k_classes == 0 || k_classes > kMaxSyntheticClasses)
    throw DatasetError("synthetic class count must be in [1, " + std::to_string(kMaxSyntheticClasses) + "]");
  if (n_per_class == 0) throw DatasetError("synthetic images per class must be >= 1");
  if (resolution < 16) throw DatasetError("synthetic resolution must be >= 16");
  std::vector<std::string> labels;
  std::error_code ec;
  for (std::size_t c = 0; c < k_classes; ++c) {
    const std::string label(kSyntheticLabels[c]);
    labels.push_back(label);
    const fs::path dir = root / label;
    fs::create_directories(dir, ec);
    if (ec) throw DatasetError("cannot create " + dir.string() + ": " + ec.message());
    for (std::size_t i = 0; i < n_per_class; ++i) {
      Rng rng(derive_seed(derive_seed(seed, c), i));
      const auto png = encode_png(render_synthetic_note(c, k_classes, resolution, rng), 1);
      char name[32];
      std::snprintf(name, sizeof name, "%04zu.png", i);
      try {
        write_file(dir / name, png);
      } catch (const ImageError& e) {
        throw DatasetError(e.what());
      }
    }
  }
  return labels;
}

}  // namespace ycd::data
