#pragma once

// Pixel-grid primitives: images, scalar fields, corner-aligned bilinear
// sampling, resize, rotation and min-max normalization.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "facexai/error.hpp"

namespace fxai {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Point2 operator*(double s, Point2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Point2 a, Point2 b) = default;
};

inline double norm(Point2 p) { return std::hypot(p.x, p.y); }

// Sine and cosine of an angle in degrees, exact at multiples of 90.
inline std::pair<double, double> sincos_deg(double degrees) {
  const double turns = degrees / 90.0;
  if (turns == std::floor(turns) && std::abs(turns) < 1e15) {
    const auto quadrant = static_cast<long long>(std::fmod(std::fmod(turns, 4.0) + 4.0, 4.0));
    constexpr double kSin[] = {0.0, 1.0, 0.0, -1.0};
    constexpr double kCos[] = {1.0, 0.0, -1.0, 0.0};
    return {kSin[quadrant], kCos[quadrant]};
  }
  const double rad = degrees * std::numbers::pi / 180.0;
  return {std::sin(rad), std::cos(rad)};
}

// Rotates `p` by `degrees` about `center` using x-right / y-down pixel axes.
inline Point2 rotate_point(Point2 p, Point2 center, double degrees) {
  const auto [s, c] = sincos_deg(degrees);
  const Point2 d = p - center;
  return {center.x + c * d.x - s * d.y, center.y + s * d.x + c * d.y};
}

// Multi-channel image with values in [0,1], stored row-major with interleaved channels.
class Image {
 public:
  Image() = default;

  Image(int width, int height, int channels, float fill = 0.0f)
      : width_(width), height_(height), channels_(channels) {
    check_shape(width, height, channels);
    if (!(fill >= 0.0f && fill <= 1.0f)) throw InvalidArgument("image fill value outside [0,1]");
    data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
  }

  static Image from_data(int width, int height, int channels, std::vector<float> data) {
    check_shape(width, height, channels);
    if (data.size() != static_cast<std::size_t>(width) * height * channels) {
      throw InvalidArgument("image data length does not match width*height*channels");
    }
    for (float v : data) {
      if (!(v >= 0.0f && v <= 1.0f)) throw InvalidArgument("image value outside [0,1]");
    }
    Image img;
    img.width_ = width;
    img.height_ = height;
    img.channels_ = channels;
    img.data_ = std::move(data);
    return img;
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }

  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }

  float at(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }
  float& at(int x, int y, int c = 0) { return data_[index(x, y, c)]; }

  // Mean over channels at one pixel.
  float intensity(std::size_t pixel) const {
    const float* p = data_.data() + pixel * channels_;
    if (channels_ == 1) return p[0];
    return (p[0] + p[1] + p[2]) / 3.0f;
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  static void check_shape(int width, int height, int channels) {
    if (width < 1 || height < 1) throw InvalidArgument("image dimensions must be positive");
    if (channels != 1 && channels != 3) throw InvalidArgument("image must have 1 or 3 channels");
  }

  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

// Single-channel float grid. Used for relevance maps and RISE masks.
class Field {
 public:
  Field() = default;
  Field(int width, int height, float fill = 0.0f) : width_(width), height_(height) {
    if (width < 1 || height < 1) throw InvalidArgument("field dimensions must be positive");
    values_.assign(static_cast<std::size_t>(width) * height, fill);
  }

  static Field from_values(int width, int height, std::vector<float> values) {
    Field f;
    if (width < 1 || height < 1) throw InvalidArgument("field dimensions must be positive");
    if (values.size() != static_cast<std::size_t>(width) * height) {
      throw InvalidArgument("field value count does not match width*height");
    }
    f.width_ = width;
    f.height_ = height;
    f.values_ = std::move(values);
    return f;
  }

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return values_.empty(); }
  std::size_t size() const { return values_.size(); }

  std::span<const float> values() const { return values_; }
  std::span<float> values() { return values_; }

  float at(int x, int y) const { return values_[static_cast<std::size_t>(y) * width_ + x]; }
  float& at(int x, int y) { return values_[static_cast<std::size_t>(y) * width_ + x]; }

  friend bool operator==(const Field&, const Field&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<float> values_;
};

using RelevanceMap = Field;

namespace detail {

// Tolerance for treating a sample coordinate as lying on the grid border.
inline constexpr double kBorderEps = 1e-9;

// Bilinear read of channel `c` from an interleaved grid at continuous
// coordinates, where integer coordinates are pixel centers. Returns false
// when the point lies outside [0, w-1] x [0, h-1].
inline bool sample_bilinear(const float* data, int w, int h, int channels, int c, double x,
                            double y, float& out) {
  if (x < -kBorderEps || y < -kBorderEps || x > (w - 1) + kBorderEps ||
      y > (h - 1) + kBorderEps) {
    return false;
  }
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  auto px = [&](int xx, int yy) {
    return static_cast<double>(data[(static_cast<std::size_t>(yy) * w + xx) * channels + c]);
  };
  const double top = px(x0, y0) + fx * (px(x1, y0) - px(x0, y0));
  const double bottom = px(x0, y1) + fx * (px(x1, y1) - px(x0, y1));
  out = static_cast<float>(top + fy * (bottom - top));
  return true;
}

// Corner-aligned source coordinate of output index `i` when resampling n_src samples to n_out.
inline double corner_aligned(int i, int n_src, int n_out) {
  if (n_out == 1) return 0.0;
  return static_cast<double>(i) * (n_src - 1) / (n_out - 1);
}

}  // namespace detail

inline float sample_bilinear(const Image& img, double x, double y, int c, float fill) {
  float v = fill;
  detail::sample_bilinear(img.data().data(), img.width(), img.height(), img.channels(), c, x, y, v);
  return v;
}

inline float sample_bilinear(const Field& f, double x, double y, float fill) {
  float v = fill;
  detail::sample_bilinear(f.values().data(), f.width(), f.height(), 1, 0, x, y, v);
  return v;
}

// Corner-aligned bilinear resize: the first and last output samples land on
// the first and last source pixels.
inline Image resize_bilinear(const Image& img, int out_w, int out_h) {
  if (img.empty()) throw InvalidArgument("resize_bilinear: empty source image");
  if (out_w < 1 || out_h < 1) throw InvalidArgument("resize_bilinear: output size must be positive");
  Image out(out_w, out_h, img.channels());
  for (int y = 0; y < out_h; ++y) {
    const double sy = detail::corner_aligned(y, img.height(), out_h);
    for (int x = 0; x < out_w; ++x) {
      const double sx = detail::corner_aligned(x, img.width(), out_w);
      for (int c = 0; c < img.channels(); ++c) out.at(x, y, c) = sample_bilinear(img, sx, sy, c, 0.0f);
    }
  }
  return out;
}

inline Field resize_bilinear(const Field& f, int out_w, int out_h) {
  if (f.empty()) throw InvalidArgument("resize_bilinear: empty source field");
  if (out_w < 1 || out_h < 1) throw InvalidArgument("resize_bilinear: output size must be positive");
  Field out(out_w, out_h);
  for (int y = 0; y < out_h; ++y) {
    const double sy = detail::corner_aligned(y, f.height(), out_h);
    for (int x = 0; x < out_w; ++x) {
      out.at(x, y) = sample_bilinear(f, detail::corner_aligned(x, f.width(), out_w), sy, 0.0f);
    }
  }
  return out;
}

// Rotates image content by `degrees` about `center` (positive turns +x toward +y).
// Each output pixel is inverse-mapped into the source; samples outside take `fill`.
inline Image rotate_about(const Image& img, Point2 center, double degrees, float fill = 0.0f) {
  if (img.empty()) throw InvalidArgument("rotate_about: empty image");
  if (!std::isfinite(degrees)) throw InvalidArgument("rotate_about: angle must be finite");
  Image out(img.width(), img.height(), img.channels());
  const auto [s, c] = sincos_deg(-degrees);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const double dx = x - center.x;
      const double dy = y - center.y;
      const double sx = center.x + c * dx - s * dy;
      const double sy = center.y + s * dx + c * dy;
      for (int ch = 0; ch < img.channels(); ++ch) out.at(x, y, ch) = sample_bilinear(img, sx, sy, ch, fill);
    }
  }
  return out;
}

// Linear rescale so the minimum maps to 0 and the maximum to 1. A constant
// map becomes all zeros.
inline RelevanceMap normalize_relevance(const RelevanceMap& map) {
  if (map.empty()) throw InvalidArgument("normalize_relevance: empty map");
  float lo = map.values()[0];
  float hi = lo;
  for (float v : map.values()) {
    if (std::isnan(v)) throw InvalidArgument("normalize_relevance: NaN value");
    if (!std::isfinite(v)) throw InvalidArgument("normalize_relevance: infinite value");
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  RelevanceMap out(map.width(), map.height(), 0.0f);
  if (hi == lo) return out;
  const double range = static_cast<double>(hi) - lo;
  auto dst = out.values();
  auto src = map.values();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i] = static_cast<float>((static_cast<double>(src[i]) - lo) / range);
  }
  return out;
}

inline std::uint8_t to_u8(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

inline float from_u8(std::uint8_t v) { return static_cast<float>(v) / 255.0f; }

}  // namespace fxai
