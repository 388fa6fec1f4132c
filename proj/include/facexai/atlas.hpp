#pragma once

// Canonical face space: a Procrustes mean template, least-squares similarity
// fits onto it, and averaging of warped explanations into global heatmaps.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "facexai/error.hpp"
#include "facexai/eval.hpp"
#include "facexai/facealign.hpp"
#include "facexai/image.hpp"
#include "facexai/landmarks.hpp"
#include "facexai/parallel.hpp"

namespace fxai {

// T(p) = scale * R(rotation) * p + translation, with rotation in degrees
// turning +x toward +y (pixel axes).
struct Similarity2D {
  double scale = 1.0;
  double rotation = 0.0;
  Point2 translation{};

  Point2 apply(Point2 p) const {
    const auto [s, c] = sincos_deg(rotation);
    return {scale * (c * p.x - s * p.y) + translation.x, scale * (s * p.x + c * p.y) + translation.y};
  }

  Similarity2D inverse() const {
    if (!(scale > 0.0) || !std::isfinite(scale)) throw InvalidArgument("similarity is not invertible");
    const auto [s, c] = sincos_deg(-rotation);
    const double inv = 1.0 / scale;
    return {inv, -rotation,
            {-inv * (c * translation.x - s * translation.y), -inv * (s * translation.x + c * translation.y)}};
  }
};

// Least-squares similarity mapping `src` onto `dst` (closed form from the
// centered cross-covariance).
inline Similarity2D fit_similarity(std::span<const Point2> src, std::span<const Point2> dst) {
  if (src.size() != dst.size() || src.empty()) throw InvalidArgument("fit_similarity: point sets must match in size");
  const double n = static_cast<double>(src.size());
  Point2 ms, md;
  for (std::size_t i = 0; i < src.size(); ++i) {
    ms = ms + src[i];
    md = md + dst[i];
  }
  ms = (1.0 / n) * ms;
  md = (1.0 / n) * md;
  double var = 0.0, sa = 0.0, sb = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Point2 p = src[i] - ms;
    const Point2 q = dst[i] - md;
    var += p.x * p.x + p.y * p.y;
    sa += p.x * q.x + p.y * q.y;
    sb += p.x * q.y - p.y * q.x;
  }
  if (!(var > 1e-18)) throw DegenerateLandmarks("fit_similarity: source points have zero variance");
  const double a = sa / var;
  const double b = sb / var;
  Similarity2D t;
  t.scale = std::hypot(a, b);
  if (!(t.scale > 0.0)) throw DegenerateLandmarks("fit_similarity: target points have zero variance");
  t.rotation = std::atan2(b, a) * 180.0 / std::numbers::pi;
  t.translation = {md.x - (a * ms.x - b * ms.y), md.y - (b * ms.x + a * ms.y)};
  return t;
}

struct TemplateFraming {
  int side = 224;
  double eye_height = 0.4;   // eye midpoint y, as a fraction of side
  double interocular = 0.3;  // eye-centroid distance, as a fraction of side
};

struct CanonicalTemplate {
  int side = 224;
  LandmarkSet points;
};

inline Similarity2D fit_similarity(const LandmarkSet& src, const CanonicalTemplate& dst) {
  return fit_similarity(std::span<const Point2>(src.points()), std::span<const Point2>(dst.points.points()));
}

namespace detail {

inline std::vector<Point2> normalized_shape(std::span<const Point2> pts) {
  Point2 mean;
  for (const auto& p : pts) mean = mean + p;
  mean = (1.0 / static_cast<double>(pts.size())) * mean;
  double ss = 0.0;
  std::vector<Point2> out;
  out.reserve(pts.size());
  for (const auto& p : pts) {
    out.push_back(p - mean);
    ss += (p.x - mean.x) * (p.x - mean.x) + (p.y - mean.y) * (p.y - mean.y);
  }
  if (!(ss > 1e-18)) throw DegenerateLandmarks("procrustes: all landmark points coincide");
  const double inv = 1.0 / std::sqrt(ss);
  for (auto& p : out) p = inv * p;
  return out;
}

}  // namespace detail

// Generalized Procrustes mean of the sets, framed so the eyes are level with
// their midpoint at (side/2, eye_height*side) and the requested interocular
// distance.
inline CanonicalTemplate procrustes_mean(std::span<const LandmarkSet> sets, const TemplateFraming& framing = {}) {
  if (sets.empty()) throw InvalidArgument("procrustes_mean: need at least one landmark set");
  if (framing.side < 2) throw InvalidArgument("procrustes_mean: side must be >= 2");
  std::vector<std::vector<Point2>> shapes;
  shapes.reserve(sets.size());
  for (const auto& s : sets) shapes.push_back(detail::normalized_shape(s.points()));
  const std::size_t m = kLandmarkCount;

  std::vector<Point2> mean = shapes.front();
  for (int iter = 0; iter < 100; ++iter) {
    std::vector<Point2> next(m);
    for (const auto& shape : shapes) {
      const auto t = fit_similarity(shape, mean);
      for (std::size_t i = 0; i < m; ++i) next[i] = next[i] + t.apply(shape[i]);
    }
    for (auto& p : next) p = (1.0 / static_cast<double>(shapes.size())) * p;
    // Fix the gauge: unit size, centered, oriented like the reference shape.
    next = detail::normalized_shape(next);
    const auto gauge = fit_similarity(next, shapes.front());
    for (auto& p : next) {
      const auto rot = Similarity2D{1.0, gauge.rotation, {}};
      p = rot.apply(p);
    }
    double movement = 0.0;
    for (std::size_t i = 0; i < m; ++i) movement += norm(next[i] - mean[i]);
    movement /= static_cast<double>(m);
    mean = std::move(next);
    if (movement < 1e-8) break;
  }

  std::array<Point2, kLandmarkCount> arr{};
  std::copy(mean.begin(), mean.end(), arr.begin());
  const LandmarkSet shape(arr);
  const auto eyes = eye_centroids(shape);
  const double side = framing.side;
  const double half_iod = 0.5 * framing.interocular * side;
  const Point2 src_eyes[2] = {eyes.left, eyes.right};
  const Point2 dst_eyes[2] = {{0.5 * side - half_iod, framing.eye_height * side},
                              {0.5 * side + half_iod, framing.eye_height * side}};
  const auto frame = fit_similarity(src_eyes, dst_eyes);
  CanonicalTemplate tpl{framing.side, shape.transformed([&](Point2 p) { return frame.apply(p); })};
  for (const auto& p : tpl.points.points()) {
    if (p.x < 0 || p.y < 0 || p.x >= side || p.y >= side) {
      throw InvalidArgument("procrustes_mean: framing places landmarks outside the canonical frame");
    }
  }
  return tpl;
}

// Resamples `expl` into a side x side canonical frame where T maps
// explanation pixels to canonical pixels. Samples from outside the source are 0.
inline RelevanceMap warp_explanation(const RelevanceMap& expl, const Similarity2D& transform, int side) {
  if (expl.empty()) throw InvalidArgument("warp_explanation: empty map");
  if (side < 1) throw InvalidArgument("warp_explanation: side must be positive");
  const Similarity2D inv = transform.inverse();
  RelevanceMap out(side, side);
  for (int v = 0; v < side; ++v) {
    for (int u = 0; u < side; ++u) {
      const Point2 src = inv.apply({static_cast<double>(u), static_cast<double>(v)});
      out.at(u, v) = sample_bilinear(expl, src.x, src.y, 0.0f);
    }
  }
  return out;
}

enum class SelectionPolicy { kGroundTruth, kPredicted, kTruePositive };

inline std::string to_string(SelectionPolicy p) {
  switch (p) {
    case SelectionPolicy::kGroundTruth: return "ground-truth";
    case SelectionPolicy::kPredicted: return "predicted";
    case SelectionPolicy::kTruePositive: return "true-positive";
  }
  return "?";
}

inline SelectionPolicy parse_selection_policy(const std::string& s) {
  if (s == "ground-truth") return SelectionPolicy::kGroundTruth;
  if (s == "predicted") return SelectionPolicy::kPredicted;
  if (s == "true-positive") return SelectionPolicy::kTruePositive;
  throw InvalidArgument("unknown selection policy '" + s + "' (ground-truth | predicted | true-positive)");
}

// Indices of the records selected for `class_index`. Throws EmptySelection
// when nothing matches.
inline std::vector<std::size_t> select_positives(std::span<const PredictionRecord> records, std::size_t class_index,
                                                 SelectionPolicy policy) {
  if (records.empty()) throw InvalidArgument("select_positives: no records");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const bool truth = records[i].label == class_index;
    const bool pred = records[i].predicted == class_index;
    const bool keep = policy == SelectionPolicy::kGroundTruth ? truth
                      : policy == SelectionPolicy::kPredicted ? pred
                                                              : truth && pred;
    if (keep) out.push_back(i);
  }
  if (out.empty()) {
    throw EmptySelection("no records selected for class index " + std::to_string(class_index) + " under policy " +
                         to_string(policy));
  }
  return out;
}

struct AtlasItem {
  RelevanceMap map;
  LandmarkSet landmarks;  // in the map's pixel frame
};

struct Provenance {
  std::string model_id;
  std::string dataset_id;
  std::string method;
  std::string class_name;
  std::string policy;
};

struct GlobalHeatmap {
  RelevanceMap map;
  std::size_t count = 0;
  Provenance provenance;
};

// Per item: min-max normalize, fit the similarity onto the template, warp.
inline RelevanceMap canonicalize(const AtlasItem& item, const CanonicalTemplate& tpl) {
  return warp_explanation(normalize_relevance(item.map), fit_similarity(item.landmarks, tpl), tpl.side);
}

// Arithmetic mean of the canonical maps, accumulated in item order.
inline RelevanceMap mean_canonical(std::span<const AtlasItem> items, const CanonicalTemplate& tpl, int jobs = 1) {
  if (items.empty()) throw EmptySelection("aggregate: no explanations to average");
  std::vector<RelevanceMap> warped(items.size());
  parallel_for(items.size(), jobs, [&](std::size_t i) { warped[i] = canonicalize(items[i], tpl); });
  std::vector<double> sum(static_cast<std::size_t>(tpl.side) * tpl.side, 0.0);
  for (const auto& w : warped) {
    for (std::size_t p = 0; p < sum.size(); ++p) sum[p] += w.values()[p];
  }
  RelevanceMap mean(tpl.side, tpl.side);
  const double inv = 1.0 / static_cast<double>(items.size());
  for (std::size_t p = 0; p < sum.size(); ++p) mean.values()[p] = static_cast<float>(sum[p] * inv);
  return mean;
}

inline GlobalHeatmap aggregate_global(std::span<const AtlasItem> items, const CanonicalTemplate& tpl,
                                      Provenance provenance, int jobs = 1) {
  GlobalHeatmap g;
  g.map = normalize_relevance(mean_canonical(items, tpl, jobs));
  g.count = items.size();
  g.provenance = std::move(provenance);
  return g;
}

}  // namespace fxai
