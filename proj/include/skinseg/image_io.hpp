#pragma once

// PNG read/write (8-bit RGB and 8-bit gray) and JPEG read. Grayscale inputs
// are promoted to RGB by channel replication; 8-bit value v maps to v / 255.

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <jpeglib.h>

#include "skinseg/error.hpp"
#include "skinseg/imaging.hpp"

namespace skinseg {

namespace detail {

inline std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct Decoded8 {
  int height = 0;
  int width = 0;
  std::vector<unsigned char> rgb;
};

inline Decoded8 decode_png(const std::vector<unsigned char>& bytes, const std::string& name) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
    throw InputError("cannot decode PNG '" + name + "': " + image.message);
  image.format = PNG_FORMAT_RGB;
  Decoded8 out;
  out.height = static_cast<int>(image.height);
  out.width = static_cast<int>(image.width);
  out.rgb.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.rgb.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw InputError("cannot decode PNG '" + name + "': " + msg);
  }
  return out;
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

extern "C" inline void skinseg_jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

/// Corrupt-data warnings (level -1), such as a truncated stream, are fatal.
extern "C" inline void skinseg_jpeg_emit_message(j_common_ptr cinfo, int level) {
  if (level < 0) skinseg_jpeg_error_exit(cinfo);
}

// No objects with non-trivial destructors may be created between setjmp and
// the end of the function; the output buffer is declared before it.
inline bool decode_jpeg_raw(const std::vector<unsigned char>& bytes, Decoded8& out, std::string& error) {
  jpeg_decompress_struct cinfo{};
  JpegErrorManager jerr{};
  cinfo.err = jpeg_std_error(&jerr.base);
  jerr.base.error_exit = skinseg_jpeg_error_exit;
  jerr.base.emit_message = skinseg_jpeg_emit_message;
  if (setjmp(jerr.jump)) {
    jpeg_destroy_decompress(&cinfo);
    error.assign(jerr.message);
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  out.height = static_cast<int>(cinfo.output_height);
  out.width = static_cast<int>(cinfo.output_width);
  out.rgb.resize(static_cast<std::size_t>(out.height) * out.width * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.rgb.data() + static_cast<std::size_t>(cinfo.output_scanline) * out.width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return true;
}

inline Decoded8 decode_any(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  static constexpr unsigned char png_sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  if (bytes.size() >= 8 && std::equal(png_sig, png_sig + 8, bytes.begin())) return decode_png(bytes, path.string());
  if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF) {
    Decoded8 out;
    std::string error;
    if (!decode_jpeg_raw(bytes, out, error)) throw InputError("cannot decode JPEG '" + path.string() + "': " + error);
    return out;
  }
  throw InputError("unsupported or undecodable image format: '" + path.string() + "'");
}

inline unsigned char to_byte(float v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

inline void write_png(const std::filesystem::path& path, int height, int width, png_uint_32 format,
                      const std::vector<unsigned char>& pixels) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = format;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, pixels.data(), 0, nullptr))
    throw InputError("cannot write PNG '" + path.string() + "': " + image.message);
}

}  // namespace detail

inline RgbImage load_image(const std::filesystem::path& path) {
  const auto dec = detail::decode_any(path);
  RgbImage img(dec.height, dec.width);
  for (std::size_t i = 0; i < dec.rgb.size(); ++i) img.data()[i] = static_cast<float>(dec.rgb[i]) / 255.0f;
  return img;
}

/// Reads a mask image; any pixel whose gray level exceeds 127 is foreground.
inline BinaryMask load_mask(const std::filesystem::path& path) {
  const auto dec = detail::decode_any(path);
  BinaryMask mask(dec.height, dec.width);
  for (std::size_t i = 0; i < mask.pixel_count(); ++i) {
    const int sum = dec.rgb[3 * i] + dec.rgb[3 * i + 1] + dec.rgb[3 * i + 2];
    mask.data()[i] = sum > 3 * 127 ? 1 : 0;
  }
  return mask;
}

inline void save_png(const RgbImage& img, const std::filesystem::path& path) {
  std::vector<unsigned char> px(img.data().size());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = detail::to_byte(img.data()[i]);
  detail::write_png(path, img.height(), img.width(), PNG_FORMAT_RGB, px);
}

template <typename Tag>
void save_png(const Image<float, 1, Tag>& img, const std::filesystem::path& path) {
  std::vector<unsigned char> px(img.data().size());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = detail::to_byte(img.data()[i]);
  detail::write_png(path, img.height(), img.width(), PNG_FORMAT_GRAY, px);
}

/// 8-bit gray PNG with values {0, 255}.
inline void save_mask(const BinaryMask& mask, const std::filesystem::path& path) {
  std::vector<unsigned char> px(mask.pixel_count());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = mask.data()[i] ? 255 : 0;
  detail::write_png(path, mask.height(), mask.width(), PNG_FORMAT_GRAY, px);
}

/// Foreground pixels with a 4-neighbour in the background (or on the frame).
inline BinaryMask mask_boundary(const BinaryMask& mask) {
  BinaryMask out(mask.height(), mask.width());
  const int h = mask.height(), w = mask.width();
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      if (!mask(r, c)) continue;
      const bool edge = r == 0 || c == 0 || r == h - 1 || c == w - 1 || !mask(r - 1, c) || !mask(r + 1, c) ||
                        !mask(r, c - 1) || !mask(r, c + 1);
      out(r, c) = edge ? 1 : 0;
    }
  return out;
}

/// Image with the mask contour drawn in blue.
inline RgbImage render_overlay(const RgbImage& img, const BinaryMask& mask) {
  require_same_shape(img, mask, "overlay");
  RgbImage out = img;
  const auto boundary = mask_boundary(mask);
  for (int r = 0; r < img.height(); ++r)
    for (int c = 0; c < img.width(); ++c)
      if (boundary(r, c)) {
        out(r, c, 0) = 0.0f;
        out(r, c, 1) = 0.0f;
        out(r, c, 2) = 1.0f;
      }
  return out;
}

inline void save_overlay(const RgbImage& img, const BinaryMask& mask, const std::filesystem::path& path) {
  save_png(render_overlay(img, mask), path);
}

}  // namespace skinseg
