#pragma once

#include <jpeglib.h>
#include <png.h>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "logohall/common/error.hpp"

namespace logohall {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
};

// Row-major 8-bit image, 3 (RGB) or 4 (RGBA) interleaved channels.
class ImageBuffer {
 public:
  ImageBuffer() = default;

  ImageBuffer(int width, int height, int channels, std::uint8_t fill = 0)
      : width_(width), height_(height), channels_(channels) {
    validate_shape(width, height, channels);
    pixels_.assign(static_cast<std::size_t>(width) * height * channels, fill);
  }

  ImageBuffer(int width, int height, int channels, std::vector<std::uint8_t> pixels)
      : width_(width), height_(height), channels_(channels), pixels_(std::move(pixels)) {
    validate_shape(width, height, channels);
    if (pixels_.size() != static_cast<std::size_t>(width) * height * channels)
      throw InvariantError("ImageBuffer: pixel count does not match width*height*channels");
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  bool empty() const noexcept { return pixels_.empty(); }
  bool has_alpha() const noexcept { return channels_ == 4; }

  std::span<const std::uint8_t> bytes() const noexcept { return pixels_; }
  std::span<std::uint8_t> bytes() noexcept { return pixels_; }

  std::size_t offset(int x, int y) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_;
  }
  std::uint8_t* at(int x, int y) noexcept { return pixels_.data() + offset(x, y); }
  const std::uint8_t* at(int x, int y) const noexcept { return pixels_.data() + offset(x, y); }

  Rgb rgb(int x, int y) const noexcept {
    const auto* p = at(x, y);
    return {p[0], p[1], p[2]};
  }

  // Fully transparent pixels are outside the logo crop.
  bool opaque(int x, int y) const noexcept { return channels_ != 4 || at(x, y)[3] >= 128; }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

 private:
  static void validate_shape(int w, int h, int c) {
    if (w < 1 || h < 1) throw InvariantError("ImageBuffer: width and height must be >= 1");
    if (c != 3 && c != 4) throw InvariantError("ImageBuffer: channels must be 3 or 4");
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 3;
  std::vector<std::uint8_t> pixels_;
};

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open file: " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

namespace detail {

inline ImageBuffer decode_png(std::span<const std::uint8_t> data, const std::string& name) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (png_image_begin_read_from_memory(&img, data.data(), data.size()) == 0)
    throw ConfigError("png decode failed for " + name + ": " + img.message);
  const bool alpha = (img.format & PNG_FORMAT_FLAG_ALPHA) != 0;
  img.format = alpha ? PNG_FORMAT_RGBA : PNG_FORMAT_RGB;
  std::vector<std::uint8_t> px(PNG_IMAGE_SIZE(img));
  if (png_image_finish_read(&img, nullptr, px.data(), 0, nullptr) == 0) {
    png_image_free(&img);
    throw ConfigError("png decode failed for " + name + ": " + img.message);
  }
  return ImageBuffer(static_cast<int>(img.width), static_cast<int>(img.height), alpha ? 4 : 3,
                     std::move(px));
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  char message[JMSG_LENGTH_MAX];
};

[[noreturn]] inline void jpeg_throw(j_common_ptr cinfo) {
  auto* mgr = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, mgr->message);
  throw ConfigError(std::string("jpeg decode failed: ") + mgr->message);
}

inline ImageBuffer decode_jpeg(std::span<const std::uint8_t> data) {
  jpeg_decompress_struct cinfo{};
  JpegErrorManager err{};
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_throw;
  jpeg_create_decompress(&cinfo);
  std::unique_ptr<jpeg_decompress_struct, void (*)(jpeg_decompress_struct*)> guard(
      &cinfo, [](jpeg_decompress_struct* c) { jpeg_destroy_decompress(c); });
  jpeg_mem_src(&cinfo, data.data(), static_cast<unsigned long>(data.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  const int w = static_cast<int>(cinfo.output_width);
  const int h = static_cast<int>(cinfo.output_height);
  std::vector<std::uint8_t> px(static_cast<std::size_t>(w) * h * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = px.data() + static_cast<std::size_t>(cinfo.output_scanline) * w * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  return ImageBuffer(w, h, 3, std::move(px));
}

}  // namespace detail

// Decodes PNG or JPEG by magic bytes.
inline ImageBuffer decode_image(std::span<const std::uint8_t> data, const std::string& name = "<memory>") {
  static constexpr std::uint8_t kPng[] = {0x89, 'P', 'N', 'G'};
  if (data.size() >= 4 && std::equal(std::begin(kPng), std::end(kPng), data.begin()))
    return detail::decode_png(data, name);
  if (data.size() >= 3 && data[0] == 0xFF && data[1] == 0xD8 && data[2] == 0xFF)
    return detail::decode_jpeg(data);
  throw ConfigError("unsupported image format (expected PNG or JPEG): " + name);
}

inline ImageBuffer load_image(const std::filesystem::path& path) {
  return decode_image(read_file_bytes(path), path.string());
}

inline std::vector<std::uint8_t> encode_png(const ImageBuffer& image) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width());
  img.height = static_cast<png_uint_32>(image.height());
  img.format = image.has_alpha() ? PNG_FORMAT_RGBA : PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (png_image_write_to_memory(&img, nullptr, &size, 0, image.bytes().data(), 0, nullptr) == 0)
    throw InvariantError(std::string("png encode failed: ") + img.message);
  std::vector<std::uint8_t> out(size);
  if (png_image_write_to_memory(&img, out.data(), &size, 0, image.bytes().data(), 0, nullptr) == 0)
    throw InvariantError(std::string("png encode failed: ") + img.message);
  out.resize(size);
  return out;
}

inline void save_png(const ImageBuffer& image, const std::filesystem::path& path) {
  const auto bytes = encode_png(image);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write image: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace logohall
