#pragma once

#include <png.h>

#include <csetjmp>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "vlmcc/error.hpp"
#include "vlmcc/imaging.hpp"

namespace vlmcc {

// ─── raw file helpers ───

inline std::vector<unsigned char> read_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot open for reading: " + p.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  if (f.bad()) throw IoError("read failed: " + p.string());
  return bytes;
}

inline void write_file(const std::filesystem::path& p,
                       const std::vector<unsigned char>& bytes) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + p.string());
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + p.string());
}

inline void write_text_file(const std::filesystem::path& p,
                            const std::string& text) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + p.string());
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw IoError("write failed: " + p.string());
}

// ─── PNG codec (RGB only, 8 or 16 bit) ───

struct DecodedPng {
  int width = 0;
  int height = 0;
  int bit_depth = 0;                  // 8 or 16
  std::vector<std::uint16_t> samples;  // interleaved RGB, native range
};

namespace detail {

struct PngMemReader {
  const unsigned char* data;
  std::size_t size;
  std::size_t pos;
};

inline void png_mem_read(png_structp png, png_bytep out, png_size_t n) {
  auto* r = static_cast<PngMemReader*>(png_get_io_ptr(png));
  if (r->pos + n > r->size) png_error(png, "unexpected end of PNG stream");
  std::memcpy(out, r->data + r->pos, n);
  r->pos += n;
}

inline void png_mem_write(png_structp png, png_bytep data, png_size_t n) {
  auto* out = static_cast<std::vector<unsigned char>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + n);
}

inline void png_mem_flush(png_structp) {}

}  // namespace detail

inline DecodedPng decode_png_rgb(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 8 ||
      png_sig_cmp(bytes.data(), 0, 8) != 0)
    throw LoadError("not a PNG stream");

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error("libpng: read struct allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error("libpng: info struct allocation failed");
  }

  detail::PngMemReader reader{bytes.data(), bytes.size(), 0};
  DecodedPng out;
  std::vector<unsigned char> raw;
  std::vector<png_bytep> rows;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw LoadError("PNG decode failed");
  }

  png_set_read_fn(png, &reader, detail::png_mem_read);
  png_read_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (color != PNG_COLOR_TYPE_RGB) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw LoadError("PNG must be RGB without alpha");
  }
  if (depth != 8 && depth != 16) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw LoadError("PNG must be 8-bit or 16-bit");
  }

  png_set_interlace_handling(png);
  png_read_update_info(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  raw.resize(rowbytes * h);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = raw.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  out.width = static_cast<int>(w);
  out.height = static_cast<int>(h);
  out.bit_depth = depth;
  const std::size_t n = static_cast<std::size_t>(w) * h * 3;
  out.samples.resize(n);
  if (depth == 8) {
    for (std::size_t i = 0; i < n; ++i) out.samples[i] = raw[i];
  } else {
    for (std::size_t i = 0; i < n; ++i)  // PNG stores 16-bit big-endian
      out.samples[i] = static_cast<std::uint16_t>((raw[2 * i] << 8) |
                                                  raw[2 * i + 1]);
  }
  return out;
}

namespace detail {

inline std::vector<unsigned char> encode_png_rgb(int width, int height,
                                                 int bit_depth,
                                                 const std::uint16_t* samples) {
  if (width <= 0 || height <= 0)
    throw DomainError("encode_png_rgb: empty image");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            nullptr, nullptr);
  if (!png) throw Error("libpng: write struct allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error("libpng: info struct allocation failed");
  }

  std::vector<unsigned char> out;
  std::vector<unsigned char> row;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("PNG encode failed");
  }

  png_set_write_fn(png, &out, png_mem_write, png_mem_flush);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width),
               static_cast<png_uint_32>(height), bit_depth,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  const std::size_t pixels_per_row = static_cast<std::size_t>(width) * 3;
  row.resize(bit_depth == 16 ? pixels_per_row * 2 : pixels_per_row);
  for (int y = 0; y < height; ++y) {
    const std::uint16_t* src = samples + static_cast<std::size_t>(y) * pixels_per_row;
    if (bit_depth == 16) {
      for (std::size_t i = 0; i < pixels_per_row; ++i) {
        row[2 * i] = static_cast<unsigned char>(src[i] >> 8);
        row[2 * i + 1] = static_cast<unsigned char>(src[i] & 0xff);
      }
    } else {
      for (std::size_t i = 0; i < pixels_per_row; ++i)
        row[i] = static_cast<unsigned char>(src[i] & 0xff);
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, info);
  png_destroy_write_struct(&png, &info);
  return out;
}

}  // namespace detail

inline std::vector<unsigned char> encode_png_rgb16(
    int width, int height, const std::vector<std::uint16_t>& samples) {
  if (samples.size() != static_cast<std::size_t>(width) * height * 3)
    throw DomainError("encode_png_rgb16: sample count mismatch");
  return detail::encode_png_rgb(width, height, 16, samples.data());
}

inline std::vector<unsigned char> encode_png_rgb8(
    int width, int height, const std::vector<std::uint16_t>& samples) {
  if (samples.size() != static_cast<std::size_t>(width) * height * 3)
    throw DomainError("encode_png_rgb8: sample count mismatch");
  return detail::encode_png_rgb(width, height, 8, samples.data());
}

// ─── quantization bridges ───

inline std::uint16_t quantize16(double v) {
  v = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint16_t>(std::lround(v * 65535.0));
}

inline std::uint16_t quantize8(double v) {
  v = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint16_t>(std::lround(v * 255.0));
}

inline std::vector<unsigned char> encode_linear_png16(const LinearImage& img) {
  std::vector<std::uint16_t> q(img.data.size());
  for (std::size_t i = 0; i < img.data.size(); ++i)
    q[i] = quantize16(img.data[i]);
  return encode_png_rgb16(img.width, img.height, q);
}

inline std::vector<unsigned char> encode_srgb_png8(const SrgbImage& img) {
  std::vector<std::uint16_t> q(img.data.size());
  for (std::size_t i = 0; i < img.data.size(); ++i)
    q[i] = quantize8(img.data[i]);
  return encode_png_rgb8(img.width, img.height, q);
}

}  // namespace vlmcc
