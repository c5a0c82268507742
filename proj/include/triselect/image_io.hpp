#pragma once

// PNG/JPEG decoding to luminance and PNG encoding. Requires linking libpng
// and libjpeg (target triselect::image_io).

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <jpeglib.h>
#include <png.h>

#include "triselect/error.hpp"
#include "triselect/image.hpp"

namespace triselect {

enum class ImageCodec { Png, Jpeg, Unknown };

inline ImageCodec sniff_codec(const std::vector<unsigned char>& bytes) {
  static constexpr unsigned char png_sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), png_sig, 8) == 0) return ImageCodec::Png;
  if (bytes.size() >= 3 && bytes[0] == 0xff && bytes[1] == 0xd8 && bytes[2] == 0xff) return ImageCodec::Jpeg;
  return ImageCodec::Unknown;
}

inline std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::DecodeFailed, fmt::format("cannot open '{}'", path.string()));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

namespace detail {

inline GrayImage decode_png(const std::vector<unsigned char>& bytes) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw Error(ErrorKind::DecodeFailed, fmt::format("png: {}", image.message));
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> rgb(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, rgb.data(), 0, nullptr)) {
    png_image_free(&image);
    throw Error(ErrorKind::DecodeFailed, fmt::format("png: {}", image.message));
  }
  const int w = static_cast<int>(image.width);
  const int h = static_cast<int>(image.height);
  std::vector<float> px(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = luminance(rgb[3 * i], rgb[3 * i + 1], rgb[3 * i + 2]);
  return GrayImage(w, h, std::move(px));
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

inline void triselect_jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

inline GrayImage decode_jpeg(const std::vector<unsigned char>& bytes) {
  jpeg_decompress_struct cinfo;
  JpegErrorManager jerr;
  cinfo.err = jpeg_std_error(&jerr.base);
  jerr.base.error_exit = triselect_jpeg_error_exit;
  std::vector<unsigned char> rgb;
  int w = 0;
  int h = 0;
  if (setjmp(jerr.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw Error(ErrorKind::DecodeFailed, fmt::format("jpeg: {}", jerr.message));
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  w = static_cast<int>(cinfo.output_width);
  h = static_cast<int>(cinfo.output_height);
  rgb.resize(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = rgb.data() + static_cast<std::size_t>(cinfo.output_scanline) * static_cast<std::size_t>(w) * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  std::vector<float> px(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = luminance(rgb[3 * i], rgb[3 * i + 1], rgb[3 * i + 2]);
  return GrayImage(w, h, std::move(px));
}

}  // namespace detail

/// Decodes PNG or JPEG bytes (detected by signature) to luminance.
inline GrayImage decode_image(const std::vector<unsigned char>& bytes) {
  switch (sniff_codec(bytes)) {
    case ImageCodec::Png: return detail::decode_png(bytes);
    case ImageCodec::Jpeg: return detail::decode_jpeg(bytes);
    case ImageCodec::Unknown: break;
  }
  throw Error(ErrorKind::DecodeFailed, "unrecognized image signature (expected PNG or JPEG)");
}

inline GrayImage load_image(const std::filesystem::path& path) {
  try {
    return decode_image(read_file_bytes(path));
  } catch (const Error& e) {
    throw Error(e.kind(), fmt::format("{}: {}", path.string(), e.what()));
  }
}

/// Writes an 8-bit grayscale PNG.
inline void save_png(const GrayImage& img, const std::filesystem::path& path) {
  std::vector<unsigned char> gray(img.pixels().size());
  for (std::size_t i = 0; i < gray.size(); ++i) {
    gray[i] = static_cast<unsigned char>(std::lround(static_cast<double>(img.pixels()[i]) * 255.0));
  }
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, gray.data(), 0, nullptr)) {
    throw Error(ErrorKind::DecodeFailed, fmt::format("png write '{}': {}", path.string(), image.message));
  }
}

}  // namespace triselect
