#pragma once

#include <csetjmp>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "gusl/error.hpp"
#include "gusl/image.hpp"

namespace gusl {

namespace detail {

inline ImageBuffer from_bytes(const std::vector<unsigned char>& bytes, int h, int w) {
  ImageBuffer img(h, w, 3);
  auto d = img.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = bytes[i] / 255.0;
  return img;
}

inline ImageBuffer load_png(const std::string& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw IoError("cannot read PNG '" + path + "': " + image.message);
  image.format = PNG_FORMAT_RGB;
  if (image.width == 0 || image.height == 0) {
    png_image_free(&image);
    throw IoError("zero-dimension image '" + path + "'");
  }
  std::vector<unsigned char> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw IoError("cannot decode PNG '" + path + "': " + msg);
  }
  return from_bytes(buf, static_cast<int>(image.height), static_cast<int>(image.width));
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

inline void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

inline ImageBuffer load_jpeg(const std::string& path) {
  std::unique_ptr<std::FILE, int (*)(std::FILE*)> file(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!file) throw IoError("cannot open '" + path + "'");

  jpeg_decompress_struct cinfo;
  JpegErrorManager jerr;
  cinfo.err = jpeg_std_error(&jerr.base);
  jerr.base.error_exit = jpeg_error_exit;
  std::vector<unsigned char> buf;
  int h = 0, w = 0;
  if (setjmp(jerr.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw IoError("cannot decode JPEG '" + path + "': " + jerr.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, file.get());
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  h = static_cast<int>(cinfo.output_height);
  w = static_cast<int>(cinfo.output_width);
  if (h == 0 || w == 0 || cinfo.output_components != 3) {
    jpeg_destroy_decompress(&cinfo);
    throw IoError("unsupported JPEG layout in '" + path + "'");
  }
  buf.resize(static_cast<std::size_t>(h) * w * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = buf.data() + static_cast<std::size_t>(cinfo.output_scanline) * w * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return from_bytes(buf, h, w);
}

inline bool has_signature(const std::string& path, const unsigned char* sig, std::size_t n) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<char> head(n);
  in.read(head.data(), static_cast<std::streamsize>(n));
  return static_cast<std::size_t>(in.gcount()) == n && std::memcmp(head.data(), sig, n) == 0;
}

}  // namespace detail

// Quantization used by save_image: clamp then round half up.
inline unsigned char quantize(double v) {
  return static_cast<unsigned char>(std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5));
}

// Reads PNG or JPEG (detected by signature) into RGB intensities v/255.
// Grayscale and palette files are expanded to RGB.
inline ImageBuffer load_image(const std::string& path) {
  static constexpr unsigned char png_sig[] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  static constexpr unsigned char jpg_sig[] = {0xFF, 0xD8, 0xFF};
  if (!std::filesystem::is_regular_file(path)) throw IoError("cannot read '" + path + "'");
  if (detail::has_signature(path, png_sig, sizeof png_sig)) return detail::load_png(path);
  if (detail::has_signature(path, jpg_sig, sizeof jpg_sig)) return detail::load_jpeg(path);
  throw IoError("unsupported image format: '" + path + "'");
}

// Writes an 8-bit PNG (gray or RGB, matching the channel count).
inline void save_image(const ImageBuffer& img, const std::string& path) {
  detail::require(!img.empty(), "cannot save an empty image");
  std::vector<unsigned char> bytes(img.data().size());
  auto d = img.data();
  for (std::size_t i = 0; i < d.size(); ++i) bytes[i] = quantize(d[i]);

  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = img.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, bytes.data(), 0, nullptr))
    throw IoError("cannot write PNG '" + path + "': " + image.message);
}

}  // namespace gusl
