#pragma once

// File formats: 8-bit PNG (RGB and grayscale), the XHM1 raw relevance-map
// sidecar, and heatmap color rendering.

#include <png.h>

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "facexai/error.hpp"
#include "facexai/image.hpp"

namespace fxai {

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_binary_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  write_binary_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

// Reads an 8-bit PNG. Grayscale files load as 1 channel, everything else as
// RGB; alpha is discarded.
inline Image read_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError("cannot read PNG " + path.string() + ": " + msg);
  }
  const bool gray = (image.format & PNG_FORMAT_FLAG_COLOR) == 0;
  image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  const int channels = gray ? 1 : 3;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError("cannot decode PNG " + path.string() + ": " + msg);
  }
  std::vector<float> data(buffer.size());
  for (std::size_t i = 0; i < buffer.size(); ++i) data[i] = from_u8(buffer[i]);
  return Image::from_data(static_cast<int>(image.width), static_cast<int>(image.height), channels,
                          std::move(data));
}

inline void write_png_u8(const std::filesystem::path& path, int width, int height, int channels,
                         const std::vector<std::uint8_t>& pixels) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, pixels.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError("cannot write PNG " + path.string() + ": " + msg);
  }
}

inline void write_png(const std::filesystem::path& path, const Image& img) {
  std::vector<std::uint8_t> pixels(img.data().size());
  std::ranges::transform(img.data(), pixels.begin(), to_u8);
  write_png_u8(path, img.width(), img.height(), img.channels(), pixels);
}

// 8-bit grayscale rendering; values are clamped to [0,1].
inline void write_gray_png(const std::filesystem::path& path, const RelevanceMap& map) {
  std::vector<std::uint8_t> pixels(map.size());
  std::ranges::transform(map.values(), pixels.begin(), to_u8);
  write_png_u8(path, map.width(), map.height(), 1, pixels);
}

// 256-entry black -> red -> yellow -> white lookup table.
inline const std::array<std::array<std::uint8_t, 3>, 256>& heat_lut() {
  static const auto lut = [] {
    std::array<std::array<std::uint8_t, 3>, 256> t{};
    for (int i = 0; i < 256; ++i) {
      const double v = 3.0 * i / 255.0;
      auto ramp = [](double x) {
        return static_cast<std::uint8_t>(std::lround(std::clamp(x, 0.0, 1.0) * 255.0));
      };
      t[i] = {ramp(v), ramp(v - 1.0), ramp(v - 2.0)};
    }
    return t;
  }();
  return lut;
}

inline void write_color_png(const std::filesystem::path& path, const RelevanceMap& map) {
  const auto& lut = heat_lut();
  std::vector<std::uint8_t> pixels(map.size() * 3);
  for (std::size_t i = 0; i < map.size(); ++i) {
    const auto& rgb = lut[to_u8(map.values()[i])];
    std::copy(rgb.begin(), rgb.end(), pixels.begin() + 3 * i);
  }
  write_png_u8(path, map.width(), map.height(), 3, pixels);
}

// XHM1: magic "XHM1", u32 LE width, u32 LE height, then width*height
// little-endian IEEE-754 float32 values, row-major.
inline std::vector<std::uint8_t> encode_xhm(const RelevanceMap& map) {
  std::vector<std::uint8_t> bytes{'X', 'H', 'M', '1'};
  bytes.reserve(12 + 4 * map.size());
  auto put_u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  put_u32(static_cast<std::uint32_t>(map.width()));
  put_u32(static_cast<std::uint32_t>(map.height()));
  for (float v : map.values()) put_u32(std::bit_cast<std::uint32_t>(v));
  return bytes;
}

inline RelevanceMap decode_xhm(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "XHM1", 4) != 0) {
    throw ParseError("not an XHM1 relevance map");
  }
  auto get_u32 = [&](std::size_t offset) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[offset + i]) << (8 * i);
    return v;
  };
  const std::uint32_t w = get_u32(4);
  const std::uint32_t h = get_u32(8);
  if (w == 0 || h == 0 || w > (1u << 16) || h > (1u << 16)) throw ParseError("XHM1: bad dimensions");
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (bytes.size() != 12 + 4 * n) throw ParseError("XHM1: payload length does not match dimensions");
  std::vector<float> values(n);
  for (std::size_t i = 0; i < n; ++i) values[i] = std::bit_cast<float>(get_u32(12 + 4 * i));
  return RelevanceMap::from_values(static_cast<int>(w), static_cast<int>(h), std::move(values));
}

inline void write_xhm(const std::filesystem::path& path, const RelevanceMap& map) {
  write_binary_file(path, encode_xhm(map));
}

inline RelevanceMap read_xhm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_xhm(bytes);
}

// Writes the XHM1 sidecar plus grayscale and color PNG renderings next to `stem`.
inline void write_heatmap_set(const std::filesystem::path& stem, const RelevanceMap& map, bool with_color) {
  write_xhm(stem.string() + ".xhm", map);
  write_gray_png(stem.string() + ".png", map);
  if (with_color) write_color_png(stem.string() + "_color.png", map);
}

}  // namespace fxai
