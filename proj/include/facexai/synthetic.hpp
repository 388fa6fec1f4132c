#pragma once

// Synthetic "blob faces": an analytic cartoon face with an exact 68-point
// markup, rendered under arbitrary similarity transforms. Used for tests,
// demos and the end-to-end acceptance runs.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "facexai/atlas.hpp"
#include "facexai/image.hpp"
#include "facexai/landmarks.hpp"
#include "facexai/rng.hpp"
#include "facexai/segmentation.hpp"

namespace fxai::synthetic {

inline constexpr int kSide = 224;

// Markup of the untransformed face in a 224x224 frame.
inline LandmarkSet base_landmarks() {
  std::array<Point2, kLandmarkCount> p{};
  const double pi = std::numbers::pi;
  for (int i = 0; i <= 16; ++i) {
    const double t = pi - i * pi / 16.0;
    p[i] = {112.0 + 72.0 * std::cos(t), 104.0 + 88.0 * std::sin(t)};
  }
  for (int i = 0; i < 5; ++i) {
    const double u = i / 4.0;
    p[17 + i] = {60.0 + 42.0 * u, 80.0 - 8.0 * std::sin(pi * u)};
    p[22 + i] = {122.0 + 42.0 * u, 80.0 - 8.0 * std::sin(pi * u)};
  }
  for (int i = 0; i < 4; ++i) p[27 + i] = {112.0, 96.0 + 12.0 * i};
  for (int i = 0; i < 5; ++i) p[31 + i] = {100.0 + 6.0 * i, 138.0 + (i == 2 ? 3.0 : 0.0)};
  // Corner, two upper-lid points, corner, two lower-lid points.
  auto eye = [&](std::size_t first, double cx, double cy) {
    const double rx = 13.0, ry = 6.0;
    const Point2 offsets[6] = {{-rx, 0}, {-rx / 2, -ry}, {rx / 2, -ry}, {rx, 0}, {rx / 2, ry}, {-rx / 2, ry}};
    for (int k = 0; k < 6; ++k) p[first + k] = {cx + offsets[k].x, cy + offsets[k].y};
  };
  eye(36, 82.0, 102.0);
  eye(42, 142.0, 102.0);
  for (int k = 0; k < 12; ++k) {
    const double a = pi + k * 2 * pi / 12.0;
    p[48 + k] = {112.0 + 30.0 * std::cos(a), 168.0 + 13.0 * std::sin(a)};
  }
  for (int k = 0; k < 8; ++k) {
    const double a = pi + k * 2 * pi / 8.0;
    p[60 + k] = {112.0 + 20.0 * std::cos(a), 168.0 + 5.0 * std::sin(a)};
  }
  return LandmarkSet(p);
}

// Facial part whose pixels carry the class evidence.
enum class Part { kBrows, kEyes, kMouth };

inline Part part_for_class(std::size_t class_index) {
  static constexpr Part kParts[] = {Part::kBrows, Part::kMouth, Part::kEyes};  // angry, happy, sad
  return kParts[class_index % 3];
}

// Disks anchored on landmarks, radius proportional to the interocular distance,
// so the region follows the face under any similarity transform.
inline BinaryMask part_region(const LandmarkSet& lm, Part part, int width, int height) {
  const auto eyes = eye_centroids(lm);
  const double iod = norm(eyes.right - eyes.left);
  std::vector<std::pair<Point2, double>> disks;
  switch (part) {
    case Part::kBrows:
      disks = {{lm.centroid(kRightBrow), 0.33 * iod}, {lm.centroid(kLeftBrow), 0.33 * iod}};
      break;
    case Part::kEyes:
      disks = {{eyes.left, 0.33 * iod}, {eyes.right, 0.33 * iod}};
      break;
    case Part::kMouth:
      disks = {{lm.centroid(kOuterLip), 0.5 * iod}};
      break;
  }
  BinaryMask m{width, height, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height, 0)};
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (const auto& [c, r] : disks) {
        if (norm(Point2{static_cast<double>(x), static_cast<double>(y)} - c) <= r) {
          m.bits[static_cast<std::size_t>(y) * width + x] = 1;
        }
      }
    }
  }
  return m;
}

struct Appearance {
  std::array<float, 3> skin{0.92f, 0.80f, 0.70f};
  std::array<float, 3> background{0.10f, 0.12f, 0.15f};
  std::array<float, 3> feature{0.45f, 0.25f, 0.22f};
};

namespace detail {

inline double smoothstep(double edge0, double edge1, double x) {
  const double t = std::clamp((x - edge0) / (edge1 - edge0), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

// Soft ellipse membership in [0,1] with a ~3 px ramp.
inline double ellipse(Point2 q, Point2 c, double rx, double ry) {
  const double dx = (q.x - c.x) / rx;
  const double dy = (q.y - c.y) / ry;
  const double r = std::sqrt(dx * dx + dy * dy);
  const double ramp = 3.0 / std::min(rx, ry);
  return 1.0 - smoothstep(1.0 - ramp, 1.0 + ramp, r);
}

inline std::array<float, 3> base_color(Point2 q, const Appearance& look) {
  const double face = ellipse(q, {112.0, 112.0}, 80.0, 98.0);
  double feature = 0.0;
  feature = std::max(feature, 0.8 * ellipse(q, {82.0, 102.0}, 13.0, 6.0));
  feature = std::max(feature, 0.8 * ellipse(q, {142.0, 102.0}, 13.0, 6.0));
  feature = std::max(feature, 0.6 * ellipse(q, {81.0, 77.0}, 22.0, 4.0));
  feature = std::max(feature, 0.6 * ellipse(q, {143.0, 77.0}, 22.0, 4.0));
  feature = std::max(feature, 0.5 * ellipse(q, {112.0, 168.0}, 30.0, 13.0));
  feature = std::max(feature, 0.2 * ellipse(q, {112.0, 128.0}, 8.0, 14.0));
  std::array<float, 3> out{};
  for (int c = 0; c < 3; ++c) {
    const double skin = look.skin[c] + feature * (look.feature[c] - look.skin[c]);
    out[c] = static_cast<float>(std::clamp(look.background[c] + face * (skin - look.background[c]), 0.0, 1.0));
  }
  return out;
}

}  // namespace detail

struct BlobFace {
  Image image;
  LandmarkSet landmarks;
  Similarity2D transform;  // base frame -> image frame
};

// Renders the base face through `transform` into a side x side image.
inline BlobFace render(const Similarity2D& transform, const Appearance& look = {}, int side = kSide) {
  const Similarity2D inv = transform.inverse();
  Image img(side, side, 3);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      const auto rgb = detail::base_color(inv.apply({static_cast<double>(x), static_cast<double>(y)}), look);
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = rgb[c];
    }
  }
  const LandmarkSet lm = base_landmarks().transformed([&](Point2 p) { return transform.apply(p); });
  return {std::move(img), lm, transform};
}

struct JitterRange {
  double min_scale = 0.85;
  double max_scale = 1.1;
  double max_rotation = 15.0;     // degrees
  double max_translation = 15.0;  // pixels
};

// Similarity about the frame center with parameters drawn from `range`.
inline Similarity2D random_pose(Rng& rng, const JitterRange& range, int side = kSide) {
  const double s = range.min_scale + (range.max_scale - range.min_scale) * rng.uniform();
  const double r = range.max_rotation * (2.0 * rng.uniform() - 1.0);
  const double tx = range.max_translation * (2.0 * rng.uniform() - 1.0);
  const double ty = range.max_translation * (2.0 * rng.uniform() - 1.0);
  const Point2 c{0.5 * (side - 1), 0.5 * (side - 1)};
  // p -> s R (p - c) + c + t
  const Similarity2D about{s, r, {}};
  const Point2 rc = about.apply(c);
  return {s, r, {c.x - rc.x + tx, c.y - rc.y + ty}};
}

inline Appearance random_appearance(Rng& rng) {
  Appearance a;
  const float tone = static_cast<float>(0.9 + 0.1 * rng.uniform());
  for (auto& v : a.skin) v = std::clamp(v * tone, 0.0f, 1.0f);
  return a;
}

}  // namespace fxai::synthetic
