#pragma once

// PNG/JPEG codecs (libpng, libjpeg) and the preprocessing pipeline shared by
// training, evaluation and the classification service.

#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "ycd/tensor.hpp"

namespace ycd {

class ImageError : public std::runtime_error {
 public:
  enum class Code { Io, Undecodable, ZeroDimension };
  ImageError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

/// 8-bit interleaved RGB.
struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t* px(std::size_t x, std::size_t y) { return &pixels[(y * width + x) * 3]; }
  const std::uint8_t* px(std::size_t x, std::size_t y) const { return &pixels[(y * width + x) * 3]; }
};

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageError(ImageError::Code::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ImageError(ImageError::Code::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ImageError(ImageError::Code::Io, "short write to " + path.string());
}

inline bool is_png(std::span<const std::uint8_t> b) {
  static constexpr std::uint8_t sig[] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  return b.size() >= 8 && std::memcmp(b.data(), sig, 8) == 0;
}

inline bool is_jpeg(std::span<const std::uint8_t> b) {
  return b.size() >= 3 && b[0] == 0xFF && b[1] == 0xD8 && b[2] == 0xFF;
}

inline RgbImage decode_png(std::span<const std::uint8_t> bytes) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
    throw ImageError(ImageError::Code::Undecodable, std::string("png: ") + img.message);
  img.format = PNG_FORMAT_RGB;
  if (img.width == 0 || img.height == 0) {
    png_image_free(&img);
    throw ImageError(ImageError::Code::ZeroDimension, "png has a zero dimension");
  }
  RgbImage out{img.width, img.height, std::vector<std::uint8_t>(PNG_IMAGE_SIZE(img))};
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw ImageError(ImageError::Code::Undecodable, "png: " + msg);
  }
  return out;
}

namespace detail {

extern "C" inline void png_append_to_vector(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

extern "C" inline void png_flush_noop(png_structp) {}

// Locals in this frame are trivially destructible; see decode_jpeg_into.
inline bool encode_png_into(const RgbImage& image, int level, std::vector<std::uint8_t>& out) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, info ? &info : nullptr);
    return false;
  }
  png_set_write_fn(png, &out, png_append_to_vector, png_flush_noop);
  png_set_compression_level(png, level);
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < image.height; ++y)
    png_write_row(png, const_cast<png_bytep>(image.pixels.data() + y * image.width * 3));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

}  // namespace detail

/// zlib `level` trades size for speed (0-9). Output bytes are a pure function
/// of the pixels and level.
inline std::vector<std::uint8_t> encode_png(const RgbImage& image, int level = 6) {
  if (image.width == 0 || image.height == 0 || image.pixels.size() != image.width * image.height * 3)
    throw ImageError(ImageError::Code::ZeroDimension, "png encode: bad image dimensions");
  std::vector<std::uint8_t> out;
  if (!detail::encode_png_into(image, level, out)) throw ImageError(ImageError::Code::Io, "png encode failed");
  return out;
}

namespace detail {

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

extern "C" inline void jpeg_error_exit_longjmp(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

extern "C" inline void jpeg_silent_output(j_common_ptr) {}

}  // namespace detail

// The setjmp frames below hold only trivially destructible locals; all owning
// objects live in the callers.
inline bool decode_jpeg_into(std::span<const std::uint8_t> bytes, RgbImage& out, std::string& error) {
  jpeg_decompress_struct cinfo{};
  detail::JpegErrorManager err{};
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = detail::jpeg_error_exit_longjmp;
  err.base.output_message = detail::jpeg_silent_output;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    error = err.message;
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  out.width = cinfo.output_width;
  out.height = cinfo.output_height;
  out.pixels.resize(out.width * out.height * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * out.width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return true;
}

inline RgbImage decode_jpeg(std::span<const std::uint8_t> bytes) {
  RgbImage out;
  std::string error;
  if (!decode_jpeg_into(bytes, out, error))
    throw ImageError(ImageError::Code::Undecodable, "jpeg: " + error);
  if (out.width == 0 || out.height == 0)
    throw ImageError(ImageError::Code::ZeroDimension, "jpeg has a zero dimension");
  return out;
}

inline bool encode_jpeg_into(const RgbImage& image, int quality, unsigned char*& buffer,
                             unsigned long& size, std::string& error) {
  jpeg_compress_struct cinfo{};
  detail::JpegErrorManager err{};
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = detail::jpeg_error_exit_longjmp;
  err.base.output_message = detail::jpeg_silent_output;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    error = err.message;
    return false;
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, &buffer, &size);
  cinfo.image_width = static_cast<JDIMENSION>(image.width);
  cinfo.image_height = static_cast<JDIMENSION>(image.height);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    auto* row = const_cast<JSAMPROW>(image.pixels.data() +
                                     static_cast<std::size_t>(cinfo.next_scanline) * image.width * 3);
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  return true;
}

inline std::vector<std::uint8_t> encode_jpeg(const RgbImage& image, int quality = 90) {
  unsigned char* buffer = nullptr;
  unsigned long size = 0;
  std::string error;
  const bool ok = encode_jpeg_into(image, quality, buffer, size, error);
  std::vector<std::uint8_t> out;
  if (ok) out.assign(buffer, buffer + size);
  std::free(buffer);
  if (!ok) throw ImageError(ImageError::Code::Io, "jpeg encode: " + error);
  return out;
}

/// Sniffs the container from magic bytes.
inline RgbImage decode_image(std::span<const std::uint8_t> bytes) {
  if (is_png(bytes)) return decode_png(bytes);
  if (is_jpeg(bytes)) return decode_jpeg(bytes);
  throw ImageError(ImageError::Code::Undecodable, "not a PNG or JPEG image");
}

/// (1, H, W, 3) tensor holding raw 0..255 values.
inline Tensor to_tensor(const RgbImage& image) {
  Tensor t(Shape{1, image.height, image.width, 3});
  auto d = t.data();
  for (std::size_t i = 0; i < image.pixels.size(); ++i) d[i] = static_cast<float>(image.pixels[i]);
  return t;
}

/// Bilinear resampling with half-pixel centres and edge clamping. Resizing to
/// the current size returns the input unchanged.
inline Tensor resize_bilinear(const Tensor& input, std::size_t out_h, std::size_t out_w) {
  const Shape& s = input.shape();
  if (s.h == 0 || s.w == 0 || out_h == 0 || out_w == 0)
    throw ShapeError("resize_bilinear with a zero dimension");
  struct Tap {
    std::size_t lo, hi;
    float frac;
  };
  auto taps = [](std::size_t in, std::size_t out) {
    std::vector<Tap> t(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
      double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
      if (src < 0.0) src = 0.0;
      const double max_src = static_cast<double>(in - 1);
      if (src > max_src) src = max_src;
      const auto lo = static_cast<std::size_t>(src);
      t[o] = {lo, std::min(lo + 1, in - 1), static_cast<float>(src - static_cast<double>(lo))};
    }
    return t;
  };
  const auto ty = taps(s.h, out_h);
  const auto tx = taps(s.w, out_w);
  Tensor out(Shape{s.n, out_h, out_w, s.c});
  for (std::size_t b = 0; b < s.n; ++b)
    for (std::size_t y = 0; y < out_h; ++y)
      for (std::size_t x = 0; x < out_w; ++x)
        for (std::size_t c = 0; c < s.c; ++c) {
          const float fy = ty[y].frac, fx = tx[x].frac;
          const float top = input.at(b, ty[y].lo, tx[x].lo, c) * (1.0f - fx) +
                            input.at(b, ty[y].lo, tx[x].hi, c) * fx;
          const float bottom = input.at(b, ty[y].hi, tx[x].lo, c) * (1.0f - fx) +
                               input.at(b, ty[y].hi, tx[x].hi, c) * fx;
          out.at(b, y, x, c) = top * (1.0f - fy) + bottom * fy;
        }
  return out;
}

/// Maps 0..255 to [-1, 1] via (v / 255) * 2 - 1.
inline Tensor normalize_pixels(const Tensor& raw) {
  return map_elementwise(raw, [](float v) { return (v / 255.0f) * 2.0f - 1.0f; });
}

struct ImageRecord {
  Tensor pixels;  // (1, R, R, 3), values in [-1, 1]
  std::string source;
};

/// decode -> bilinear resize to target x target -> [0,1] -> [-1,1].
inline Tensor preprocess(const RgbImage& image, std::size_t target_resolution) {
  return normalize_pixels(resize_bilinear(to_tensor(image), target_resolution, target_resolution));
}

inline Tensor preprocess_bytes(std::span<const std::uint8_t> bytes, std::size_t target_resolution) {
  return preprocess(decode_image(bytes), target_resolution);
}

inline ImageRecord load_and_preprocess(const std::filesystem::path& path, std::size_t target_resolution) {
  const auto bytes = read_file(path);
  try {
    return {preprocess_bytes(bytes, target_resolution), path.string()};
  } catch (const ImageError& e) {
    throw ImageError(e.code(), path.string() + ": " + e.what());
  }
}

}  // namespace ycd
