#pragma once

// LIME for images: random superpixel occlusion, a proximity kernel over the
// binary region vectors, and a kernel-weighted ridge surrogate whose positive
// coefficients become the relevance map.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "facexai/classifier.hpp"
#include "facexai/error.hpp"
#include "facexai/image.hpp"
#include "facexai/parallel.hpp"
#include "facexai/rng.hpp"
#include "facexai/segmentation.hpp"

namespace fxai {

struct LimeParams {
  std::size_t n_samples = 1000;
  double kernel_width = 0.25;
  double ridge = 1.0;
  std::array<float, 3> occlusion_color{0.0f, 0.0f, 0.0f};
  std::uint64_t seed = 0;
};

// One entry per region: 1 keeps the region, 0 occludes it.
using RegionVector = std::vector<std::uint8_t>;

struct SurrogateFit {
  std::vector<double> coefficients;
  double intercept = 0.0;
};

// Sample 0 is the unperturbed instance; every other sample keeps each region
// independently with probability 1/2.
inline std::vector<RegionVector> sample_masks(std::size_t n_regions, std::size_t n_samples, std::uint64_t seed) {
  if (n_regions < 1) throw InvalidArgument("sample_masks: need at least one region");
  std::vector<RegionVector> masks;
  masks.reserve(n_samples);
  if (n_samples == 0) return masks;
  masks.emplace_back(n_regions, 1);
  Rng rng(seed);
  for (std::size_t i = 1; i < n_samples; ++i) {
    RegionVector z(n_regions);
    for (auto& bit : z) bit = static_cast<std::uint8_t>(rng.next() >> 63);
    masks.push_back(std::move(z));
  }
  return masks;
}

inline Image perturb(const Image& img, const SegmentationMap& seg, const RegionVector& z,
                     std::array<float, 3> color = {0.0f, 0.0f, 0.0f}) {
  if (img.width() != seg.width() || img.height() != seg.height()) {
    throw InvalidArgument("perturb: image and segmentation sizes differ");
  }
  if (z.size() != static_cast<std::size_t>(seg.region_count())) {
    throw InvalidArgument("perturb: region vector length does not match region count");
  }
  for (float c : color) {
    if (!(c >= 0.0f && c <= 1.0f)) throw InvalidArgument("perturb: occlusion color outside [0,1]");
  }
  Image out = img;
  const int channels = img.channels();
  auto data = out.data();
  const auto& labels = seg.labels();
  for (std::size_t p = 0; p < labels.size(); ++p) {
    if (z[labels[p]]) continue;
    for (int c = 0; c < channels; ++c) data[p * channels + c] = color[channels == 1 ? 0 : c];
  }
  return out;
}

// exp(-d^2 / sigma^2) with d the cosine distance between z and the all-ones vector.
inline double kernel_weight(const RegionVector& z, double sigma) {
  if (z.empty()) throw InvalidArgument("kernel_weight: empty region vector");
  if (!(sigma > 0.0)) throw InvalidArgument("kernel_weight: sigma must be positive");
  const auto ones = static_cast<double>(std::ranges::count(z, 1));
  const double cosine = ones == 0.0 ? 0.0 : ones / (std::sqrt(ones) * std::sqrt(static_cast<double>(z.size())));
  const double d = 1.0 - cosine;
  return std::exp(-(d * d) / (sigma * sigma));
}

// Minimizes sum_i weight_i (b + z_i.w - y_i)^2 + ridge |w|^2 through the
// weighted normal equations; the intercept is not penalized.
inline SurrogateFit fit_surrogate(std::span<const RegionVector> masks, std::span<const double> weights,
                                  std::span<const double> targets, double ridge) {
  if (masks.empty()) throw InvalidArgument("fit_surrogate: no samples");
  if (masks.size() != weights.size() || masks.size() != targets.size()) {
    throw InvalidArgument("fit_surrogate: masks, weights and targets must have the same length");
  }
  if (!(ridge >= 0.0) || !std::isfinite(ridge)) throw InvalidArgument("fit_surrogate: ridge must be >= 0");
  const auto r = static_cast<Eigen::Index>(masks.front().size());
  const Eigen::Index dim = r + 1;
  Eigen::MatrixXd normal = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd x(dim);
  for (std::size_t i = 0; i < masks.size(); ++i) {
    if (static_cast<Eigen::Index>(masks[i].size()) != r) throw InvalidArgument("fit_surrogate: ragged masks");
    if (!(weights[i] >= 0.0) || !std::isfinite(weights[i])) throw InvalidArgument("fit_surrogate: bad weight");
    if (!std::isfinite(targets[i])) throw InvalidArgument("fit_surrogate: non-finite target");
    x(0) = 1.0;
    for (Eigen::Index k = 0; k < r; ++k) x(k + 1) = masks[i][k];
    normal.selfadjointView<Eigen::Lower>().rankUpdate(x, weights[i]);
    rhs += weights[i] * targets[i] * x;
  }
  normal = normal.selfadjointView<Eigen::Lower>();
  for (Eigen::Index k = 1; k < dim; ++k) normal(k, k) += ridge;

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(normal);
  qr.setThreshold(1e-12);
  if (qr.rank() < dim) {
    throw SingularSystem("surrogate design is rank deficient (rank " + std::to_string(qr.rank()) + " of " +
                         std::to_string(dim) + "); use a ridge penalty > 0 or more samples");
  }
  const Eigen::VectorXd solution = qr.solve(rhs);
  SurrogateFit fit;
  fit.intercept = solution(0);
  fit.coefficients.assign(solution.data() + 1, solution.data() + dim);
  for (double c : fit.coefficients) {
    if (!std::isfinite(c)) throw SingularSystem("surrogate solution is not finite");
  }
  return fit;
}

struct LimeExplanation {
  std::vector<std::size_t> class_indices;
  std::vector<RelevanceMap> maps;  // one per entry of class_indices
  std::vector<SurrogateFit> fits;
  int region_count = 0;
};

// Relevance = max(w_region, 0) painted over the region's pixels.
inline RelevanceMap positive_relevance(const SegmentationMap& seg, const SurrogateFit& fit) {
  RelevanceMap map(seg.width(), seg.height());
  auto values = map.values();
  for (std::size_t p = 0; p < values.size(); ++p) {
    values[p] = static_cast<float>(std::max(fit.coefficients[seg.labels()[p]], 0.0));
  }
  return map;
}

// Runs the full pipeline with caller-supplied region vectors. Predictions are
// shared by every requested class; each class gets its own surrogate.
inline LimeExplanation explain_lime_with_masks(const Image& img, const SegmentationMap& seg,
                                               const ClassifierGateway& gateway,
                                               std::span<const std::size_t> class_indices,
                                               std::span<const RegionVector> masks, const LimeParams& params) {
  const InputSize size = gateway.input_size();
  if (img.width() != size.width || img.height() != size.height) {
    throw SizeMismatch("explain_lime: image size does not match classifier input size");
  }
  for (std::size_t c : class_indices) {
    if (c >= gateway.classes().size()) throw InvalidArgument("explain_lime: class index out of range");
  }
  const std::size_t n = masks.size();
  const auto regions = static_cast<std::size_t>(seg.region_count());
  if (n < regions + 2) {
    throw InvalidArgument("explain_lime: too few samples (" + std::to_string(n) + ") for " +
                          std::to_string(regions) + " regions; need at least regions + 2");
  }

  std::vector<std::vector<double>> targets(class_indices.size(), std::vector<double>(n));
  const int jobs = std::max(gateway.config().jobs, 1);
  const std::size_t chunk = gateway.config().batch_size * static_cast<std::size_t>(jobs);
  std::vector<Image> batch;
  for (std::size_t begin = 0; begin < n; begin += chunk) {
    const std::size_t count = std::min(chunk, n - begin);
    batch.assign(count, Image());
    parallel_for(count, jobs, [&](std::size_t i) {
      batch[i] = perturb(img, seg, masks[begin + i], params.occlusion_color);
    });
    const auto preds = gateway.predict_batch(batch);
    for (std::size_t i = 0; i < count; ++i) {
      for (std::size_t k = 0; k < class_indices.size(); ++k) targets[k][begin + i] = preds[i].probs[class_indices[k]];
    }
  }

  std::vector<double> weights(n);
  for (std::size_t i = 0; i < n; ++i) weights[i] = kernel_weight(masks[i], params.kernel_width);

  LimeExplanation out;
  out.class_indices.assign(class_indices.begin(), class_indices.end());
  out.region_count = seg.region_count();
  for (std::size_t k = 0; k < class_indices.size(); ++k) {
    out.fits.push_back(fit_surrogate(masks, weights, targets[k], params.ridge));
    out.maps.push_back(positive_relevance(seg, out.fits.back()));
  }
  return out;
}

inline LimeExplanation explain_lime(const Image& img, const SegmentationMap& seg, const ClassifierGateway& gateway,
                                    std::span<const std::size_t> class_indices, const LimeParams& params) {
  if (!(params.kernel_width > 0.0)) throw InvalidArgument("explain_lime: kernel width must be positive");
  if (!(params.ridge >= 0.0)) throw InvalidArgument("explain_lime: ridge must be >= 0");
  const auto masks = sample_masks(static_cast<std::size_t>(seg.region_count()), params.n_samples, params.seed);
  return explain_lime_with_masks(img, seg, gateway, class_indices, masks, params);
}

inline RelevanceMap explain_lime(const Image& img, const SegmentationMap& seg, const ClassifierGateway& gateway,
                                 std::size_t class_index, const LimeParams& params) {
  const std::size_t classes[] = {class_index};
  return explain_lime(img, seg, gateway, classes, params).maps.front();
}

}  // namespace fxai
