#pragma once

// Face preprocessing: level the eyes by rotating about their midpoint, crop a
// square around the landmarks and resample to the model input size.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "facexai/error.hpp"
#include "facexai/image.hpp"
#include "facexai/landmarks.hpp"

namespace fxai {

struct EyeCentroids {
  Point2 left;   // image-left eye, points 36-41
  Point2 right;  // image-right eye, points 42-47
};

inline EyeCentroids eye_centroids(const LandmarkSet& lm) {
  EyeCentroids eyes{lm.centroid(kLeftEyeRange), lm.centroid(kRightEyeRange)};
  if (norm(eyes.right - eyes.left) <= 1e-9) {
    throw DegenerateLandmarks("eye centroids coincide (zero interocular distance)");
  }
  return eyes;
}

struct AlignConfig {
  int out_side = 224;
  double margin = 0.2;  // bounding-box expansion per side, as a fraction of the box extent
  float fill = 0.0f;
};

struct AlignmentResult {
  Image image;
  LandmarkSet landmarks;  // in output pixel coordinates
  double angle = 0.0;       // degrees; eye-line angle that was removed
  double interocular = 0.0; // eye-centroid distance in the input image
  std::vector<std::string> warnings;
};

// Square crop window in the eye-levelled frame, with the mapping from output
// pixels to input pixels.
class AlignmentTransform {
 public:
  AlignmentTransform(Point2 pivot, double angle, Point2 origin, double extent, int out_side)
      : pivot_(pivot), angle_(angle), origin_(origin), extent_(extent), out_side_(out_side) {
    step_ = out_side > 1 ? extent / (out_side - 1) : 0.0;
    const auto sc = sincos_deg(angle);
    sin_ = sc.first;
    cos_ = sc.second;
  }

  // Output pixel -> input image coordinates.
  Point2 to_source(double u, double v) const {
    const double rx = origin_.x - pivot_.x + u * step_;
    const double ry = origin_.y - pivot_.y + v * step_;
    return {pivot_.x + cos_ * rx - sin_ * ry, pivot_.y + sin_ * rx + cos_ * ry};
  }

  // Input image coordinates -> output pixel coordinates.
  Point2 to_output(Point2 p) const {
    const double dx = p.x - pivot_.x;
    const double dy = p.y - pivot_.y;
    const double rx = cos_ * dx + sin_ * dy;
    const double ry = -sin_ * dx + cos_ * dy;
    const double scale = extent_ > 0 ? (out_side_ - 1) / extent_ : 0.0;
    return {(rx - (origin_.x - pivot_.x)) * scale, (ry - (origin_.y - pivot_.y)) * scale};
  }

 private:
  Point2 pivot_;
  double angle_;
  Point2 origin_;
  double extent_;
  int out_side_;
  double step_ = 0.0;
  double sin_ = 0.0;
  double cos_ = 1.0;
};

inline AlignmentResult align_face(const Image& img, const LandmarkSet& lm, const AlignConfig& config = {}) {
  if (img.empty()) throw InvalidArgument("align_face: empty image");
  if (config.out_side < 2) throw InvalidArgument("align_face: output side must be at least 2");
  if (!(config.margin >= 0.0)) throw InvalidArgument("align_face: margin must be non-negative");

  const EyeCentroids eyes = eye_centroids(lm);
  const Point2 eye_vec = eyes.right - eyes.left;
  const double angle = std::atan2(eye_vec.y, eye_vec.x) * 180.0 / std::numbers::pi;
  const Point2 pivot = 0.5 * (eyes.left + eyes.right);

  AlignmentResult result;
  result.angle = angle;
  result.interocular = norm(eye_vec);

  double min_x = std::numeric_limits<double>::infinity();
  double min_y = min_x;
  double max_x = -min_x;
  double max_y = -min_x;
  bool outside = false;
  for (const auto& p : lm.points()) {
    if (p.x < 0 || p.y < 0 || p.x > img.width() - 1 || p.y > img.height() - 1) outside = true;
    const Point2 r = rotate_point(p, pivot, -angle);
    min_x = std::min(min_x, r.x);
    max_x = std::max(max_x, r.x);
    min_y = std::min(min_y, r.y);
    max_y = std::max(max_y, r.y);
  }
  if (outside) result.warnings.emplace_back("landmarks extend outside the image bounds");

  const double w = max_x - min_x;
  const double h = max_y - min_y;
  const double extent = std::max(w, h) * (1.0 + 2.0 * config.margin);
  const Point2 center{0.5 * (min_x + max_x), 0.5 * (min_y + max_y)};
  const Point2 origin{center.x - 0.5 * extent, center.y - 0.5 * extent};
  const AlignmentTransform transform(pivot, angle, origin, extent, config.out_side);

  const int n = config.out_side;
  Image out(n, n, img.channels(), config.fill);
  bool any_inside = false;
  for (int v = 0; v < n; ++v) {
    for (int u = 0; u < n; ++u) {
      const Point2 s = transform.to_source(u, v);
      for (int c = 0; c < img.channels(); ++c) {
        float value = config.fill;
        if (detail::sample_bilinear(img.data().data(), img.width(), img.height(), img.channels(), c, s.x, s.y,
                                    value)) {
          any_inside = true;
        }
        out.at(u, v, c) = value;
      }
    }
  }
  if (!any_inside) result.warnings.emplace_back("crop lies fully outside the image; output is fill only");

  result.image = std::move(out);
  result.landmarks = lm.transformed([&](Point2 p) { return transform.to_output(p); });
  return result;
}

}  // namespace fxai
