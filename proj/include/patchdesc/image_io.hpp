#pragma once

// 8-bit grayscale image I/O: uncompressed 8-bit BMP (palette or gray) and
// binary PGM (P5).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "patchdesc/error.hpp"

namespace patchdesc {

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, top row first

  GrayImage() = default;
  GrayImage(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), pixels(w * h, fill) {}

  std::uint8_t& at(std::size_t row, std::size_t col) { return pixels[row * width + col]; }
  std::uint8_t at(std::size_t row, std::size_t col) const { return pixels[row * width + col]; }
};

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::io, "short write to " + path.string());
}

namespace detail {

inline std::uint32_t le_u32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | static_cast<std::uint32_t>(b[at + 1]) << 8 |
         static_cast<std::uint32_t>(b[at + 2]) << 16 | static_cast<std::uint32_t>(b[at + 3]) << 24;
}

inline std::uint16_t le_u16(const std::vector<std::uint8_t>& b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | b[at + 1] << 8);
}

inline void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
}

}  // namespace detail

inline GrayImage decode_bmp(const std::vector<std::uint8_t>& b, const std::string& name) {
  auto fail = [&](const std::string& what) { return Error(ErrorKind::format, name + ": " + what); };
  if (b.size() < 54 || b[0] != 'B' || b[1] != 'M') throw fail("not a BMP file");
  const std::uint32_t data_offset = detail::le_u32(b, 10);
  const std::uint32_t dib_size = detail::le_u32(b, 14);
  if (dib_size < 40) throw fail("unsupported BMP header");
  const auto width = static_cast<std::int32_t>(detail::le_u32(b, 18));
  const auto raw_height = static_cast<std::int32_t>(detail::le_u32(b, 22));
  const std::uint16_t bpp = detail::le_u16(b, 28);
  const std::uint32_t compression = detail::le_u32(b, 30);
  std::uint32_t colors = detail::le_u32(b, 46);
  if (bpp != 8) throw fail("expected 8 bits per pixel, got " + std::to_string(bpp));
  if (compression != 0) throw fail("compressed BMP not supported");
  if (width <= 0 || raw_height == 0) throw fail("bad BMP dimensions");
  if (colors == 0) colors = 256;
  if (colors > 256) throw fail("bad palette size");

  const std::size_t palette_at = 14 + dib_size;
  if (palette_at + 4 * colors > b.size()) throw fail("truncated palette");
  std::vector<std::uint8_t> lut(256, 0);
  for (std::uint32_t i = 0; i < colors; ++i) {
    const std::size_t e = palette_at + 4 * i;
    const unsigned blue = b[e], green = b[e + 1], red = b[e + 2];
    lut[i] = static_cast<std::uint8_t>((299 * red + 587 * green + 114 * blue + 500) / 1000);
  }

  const bool bottom_up = raw_height > 0;
  const std::size_t w = static_cast<std::size_t>(width);
  const std::size_t h = static_cast<std::size_t>(bottom_up ? raw_height : -raw_height);
  const std::size_t stride = (w + 3) / 4 * 4;
  if (data_offset + stride * h > b.size()) throw fail("truncated pixel data");
  GrayImage img(w, h);
  for (std::size_t r = 0; r < h; ++r) {
    const std::size_t src_row = bottom_up ? h - 1 - r : r;
    const std::uint8_t* src = b.data() + data_offset + src_row * stride;
    for (std::size_t c = 0; c < w; ++c) img.at(r, c) = lut[src[c]];
  }
  return img;
}

/// 8-bit BMP with a gray ramp palette, bottom-up rows.
inline std::vector<std::uint8_t> encode_bmp(const GrayImage& img) {
  const std::size_t stride = (img.width + 3) / 4 * 4;
  const std::uint32_t data_offset = 14 + 40 + 256 * 4;
  std::vector<std::uint8_t> b;
  b.reserve(data_offset + stride * img.height);
  b.push_back('B');
  b.push_back('M');
  detail::put_u32(b, static_cast<std::uint32_t>(data_offset + stride * img.height));
  detail::put_u32(b, 0);
  detail::put_u32(b, data_offset);
  detail::put_u32(b, 40);
  detail::put_u32(b, static_cast<std::uint32_t>(img.width));
  detail::put_u32(b, static_cast<std::uint32_t>(img.height));
  detail::put_u16(b, 1);
  detail::put_u16(b, 8);
  detail::put_u32(b, 0);
  detail::put_u32(b, static_cast<std::uint32_t>(stride * img.height));
  detail::put_u32(b, 2835);
  detail::put_u32(b, 2835);
  detail::put_u32(b, 256);
  detail::put_u32(b, 0);
  for (unsigned i = 0; i < 256; ++i) {
    for (int k = 0; k < 3; ++k) b.push_back(static_cast<std::uint8_t>(i));
    b.push_back(0);
  }
  for (std::size_t r = 0; r < img.height; ++r) {
    const std::size_t src_row = img.height - 1 - r;
    for (std::size_t c = 0; c < img.width; ++c) b.push_back(img.at(src_row, c));
    for (std::size_t c = img.width; c < stride; ++c) b.push_back(0);
  }
  return b;
}

inline GrayImage decode_pgm(const std::vector<std::uint8_t>& b, const std::string& name) {
  auto fail = [&](const std::string& what) { return Error(ErrorKind::format, name + ": " + what); };
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < b.size()) {
      if (b[pos] == '#') {
        while (pos < b.size() && b[pos] != '\n') ++pos;
      } else if (b[pos] == ' ' || b[pos] == '\t' || b[pos] == '\n' || b[pos] == '\r') {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&] {
    skip_space();
    std::size_t value = 0;
    const std::size_t start = pos;
    while (pos < b.size() && b[pos] >= '0' && b[pos] <= '9') value = value * 10 + (b[pos++] - '0');
    if (pos == start) throw fail("malformed PGM header");
    return value;
  };
  if (b.size() < 2 || b[0] != 'P' || b[1] != '5') throw fail("not a binary PGM (P5) file");
  pos = 2;
  const std::size_t w = read_int();
  const std::size_t h = read_int();
  const std::size_t maxval = read_int();
  if (w == 0 || h == 0) throw fail("bad PGM dimensions");
  if (maxval != 255) throw fail("only 8-bit PGM (maxval 255) supported");
  ++pos;  // single whitespace before raster
  if (pos + w * h > b.size()) throw fail("truncated PGM raster");
  GrayImage img(w, h);
  std::copy_n(b.begin() + static_cast<std::ptrdiff_t>(pos), w * h, img.pixels.begin());
  return img;
}

inline std::vector<std::uint8_t> encode_pgm(const GrayImage& img) {
  const std::string header = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> b(header.begin(), header.end());
  b.insert(b.end(), img.pixels.begin(), img.pixels.end());
  return b;
}

/// Decodes by extension: .bmp or .pgm.
inline GrayImage read_gray_image(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  const std::string ext = path.extension().string();
  if (ext == ".bmp" || ext == ".BMP") return decode_bmp(bytes, path.string());
  if (ext == ".pgm" || ext == ".PGM") return decode_pgm(bytes, path.string());
  throw Error(ErrorKind::format, path.string() + ": unsupported image extension");
}

inline void write_gray_image(const std::filesystem::path& path, const GrayImage& img) {
  const std::string ext = path.extension().string();
  if (ext == ".bmp") {
    write_file_bytes(path, encode_bmp(img));
  } else if (ext == ".pgm") {
    write_file_bytes(path, encode_pgm(img));
  } else {
    throw Error(ErrorKind::format, path.string() + ": unsupported image extension");
  }
}

}  // namespace patchdesc
