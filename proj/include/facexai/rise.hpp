#pragma once

// RISE: random low-resolution keep/occlude grids, bilinearly upscaled and
// randomly shifted, blended toward a grey occlusion value; saliency is the
// score-weighted mean of the masks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "facexai/classifier.hpp"
#include "facexai/error.hpp"
#include "facexai/image.hpp"
#include "facexai/parallel.hpp"
#include "facexai/rng.hpp"

namespace fxai {

struct RiseParams {
  std::size_t n_masks = 4000;
  int grid_size = 7;
  double keep_prob = 0.5;
  float occlusion_value = 0.5f;
  std::uint64_t seed = 0;
};

struct MaskShift {
  int dx = 0;
  int dy = 0;
};

struct MaskBatch {
  std::vector<Field> masks;
  std::vector<MaskShift> shifts;
};

inline void validate_mask_params(const RiseParams& params, int out_w, int out_h) {
  if (params.grid_size < 1) throw InvalidArgument("rise: grid size must be >= 1");
  if (!(params.keep_prob >= 0.0 && params.keep_prob <= 1.0)) throw InvalidArgument("rise: keep_prob outside [0,1]");
  if (!(params.occlusion_value >= 0.0f && params.occlusion_value <= 1.0f)) {
    throw InvalidArgument("rise: occlusion value outside [0,1]");
  }
  if (out_w < params.grid_size || out_h < params.grid_size) {
    throw InvalidArgument("rise: output " + std::to_string(out_w) + "x" + std::to_string(out_h) +
                          " is smaller than one pixel per grid cell");
  }
}

// Mask `index` of the seeded family: an (s+1)x(s+1) Bernoulli grid upscaled
// corner-aligned to (s+1)*C per axis (C = ceil(out/s)), then an out_w x out_h
// window cropped at an integer offset drawn uniformly from [0, C).
inline Field gen_mask(const RiseParams& params, int out_w, int out_h, std::size_t index, MaskShift* shift = nullptr) {
  validate_mask_params(params, out_w, out_h);
  const int s = params.grid_size;
  const int cells = s + 1;
  Rng rng = Rng::stream(params.seed, index);
  std::vector<float> grid(static_cast<std::size_t>(cells) * cells);
  for (auto& g : grid) g = rng.bernoulli(params.keep_prob) ? 1.0f : 0.0f;
  const int cell_w = (out_w + s - 1) / s;
  const int cell_h = (out_h + s - 1) / s;
  const MaskShift sh{static_cast<int>(rng.below(static_cast<std::uint64_t>(cell_w))),
                     static_cast<int>(rng.below(static_cast<std::uint64_t>(cell_h)))};
  if (shift) *shift = sh;
  const int up_w = cells * cell_w;
  const int up_h = cells * cell_h;

  struct Tap {
    int i0, i1;
    float f;
  };
  auto taps = [&](int n, int offset, int up) {
    std::vector<Tap> t(n);
    for (int i = 0; i < n; ++i) {
      const double g = detail::corner_aligned(i + offset, cells, up);
      const int i0 = std::min(static_cast<int>(std::floor(g)), cells - 1);
      t[i] = {i0, std::min(i0 + 1, cells - 1), static_cast<float>(g - i0)};
    }
    return t;
  };
  const auto tx = taps(out_w, sh.dx, up_w);
  const auto ty = taps(out_h, sh.dy, up_h);

  Field mask(out_w, out_h);
  auto values = mask.values();
  for (int y = 0; y < out_h; ++y) {
    const float* row0 = &grid[static_cast<std::size_t>(ty[y].i0) * cells];
    const float* row1 = &grid[static_cast<std::size_t>(ty[y].i1) * cells];
    const float fy = ty[y].f;
    float* dst = &values[static_cast<std::size_t>(y) * out_w];
    for (int x = 0; x < out_w; ++x) {
      const Tap& t = tx[x];
      const float top = row0[t.i0] + t.f * (row0[t.i1] - row0[t.i0]);
      const float bottom = row1[t.i0] + t.f * (row1[t.i1] - row1[t.i0]);
      dst[x] = std::clamp(top + fy * (bottom - top), 0.0f, 1.0f);
    }
  }
  return mask;
}

inline MaskBatch gen_masks(const RiseParams& params, int out_w, int out_h) {
  validate_mask_params(params, out_w, out_h);
  MaskBatch batch;
  batch.masks.resize(params.n_masks);
  batch.shifts.resize(params.n_masks);
  for (std::size_t i = 0; i < params.n_masks; ++i) batch.masks[i] = gen_mask(params, out_w, out_h, i, &batch.shifts[i]);
  return batch;
}

// out = I * M + g * (1 - M) for every pixel and channel.
inline Image apply_mask(const Image& img, const Field& mask, float occlusion_value) {
  if (img.width() != mask.width() || img.height() != mask.height()) {
    throw InvalidArgument("apply_mask: mask and image sizes differ");
  }
  if (!(occlusion_value >= 0.0f && occlusion_value <= 1.0f)) {
    throw InvalidArgument("apply_mask: occlusion value outside [0,1]");
  }
  Image out(img.width(), img.height(), img.channels());
  const int channels = img.channels();
  auto src = img.data();
  auto dst = out.data();
  auto m = mask.values();
  for (std::size_t p = 0; p < m.size(); ++p) {
    const float keep = m[p];
    for (int c = 0; c < channels; ++c) {
      const std::size_t i = p * channels + c;
      dst[i] = std::clamp(src[i] * keep + occlusion_value * (1.0f - keep), 0.0f, 1.0f);
    }
  }
  return out;
}

// Unnormalized saliency, one map per requested class:
//   S = 1/(N p) * sum_i f_c(apply_mask(I, M_i, g)) * M_i
// Per-pixel sums run in mask index order, so the result does not depend on
// the worker count or batch size.
inline std::vector<RelevanceMap> explain_rise_raw(const Image& img, const ClassifierGateway& gateway,
                                                  std::span<const std::size_t> class_indices,
                                                  const RiseParams& params) {
  const InputSize size = gateway.input_size();
  if (img.width() != size.width || img.height() != size.height) {
    throw SizeMismatch("explain_rise: image size does not match classifier input size");
  }
  if (!(params.keep_prob > 0.0 && params.keep_prob < 1.0)) throw InvalidArgument("explain_rise: keep_prob must be in (0,1)");
  if (params.n_masks < 1) throw InvalidArgument("explain_rise: need at least one mask");
  for (std::size_t c : class_indices) {
    if (c >= gateway.classes().size()) throw InvalidArgument("explain_rise: class index out of range");
  }
  validate_mask_params(params, img.width(), img.height());

  const std::size_t n_pixels = img.pixel_count();
  const std::size_t n_cls = class_indices.size();
  std::vector<std::vector<double>> sums(n_cls, std::vector<double>(n_pixels, 0.0));
  const int jobs = std::max(gateway.config().jobs, 1);
  const std::size_t chunk = gateway.config().batch_size * static_cast<std::size_t>(jobs);
  std::vector<Field> masks;
  std::vector<Image> batch;
  const std::size_t rows = static_cast<std::size_t>(img.height());
  const std::size_t w = static_cast<std::size_t>(img.width());
  for (std::size_t begin = 0; begin < params.n_masks; begin += chunk) {
    const std::size_t count = std::min(chunk, params.n_masks - begin);
    masks.assign(count, Field());
    batch.assign(count, Image());
    parallel_for(count, jobs, [&](std::size_t i) {
      masks[i] = gen_mask(params, img.width(), img.height(), begin + i);
      batch[i] = apply_mask(img, masks[i], params.occlusion_value);
    });
    const auto preds = gateway.predict_batch(batch);
    parallel_for(rows, jobs, [&](std::size_t y) {
      for (std::size_t k = 0; k < n_cls; ++k) {
        double* acc = &sums[k][y * w];
        for (std::size_t i = 0; i < count; ++i) {
          const double score = preds[i].probs[class_indices[k]];
          const float* m = &masks[i].values()[y * w];
          for (std::size_t x = 0; x < w; ++x) acc[x] += score * m[x];
        }
      }
    });
  }

  const double scale = 1.0 / (static_cast<double>(params.n_masks) * params.keep_prob);
  std::vector<RelevanceMap> out;
  out.reserve(n_cls);
  for (std::size_t k = 0; k < n_cls; ++k) {
    RelevanceMap map(img.width(), img.height());
    auto v = map.values();
    for (std::size_t p = 0; p < n_pixels; ++p) v[p] = static_cast<float>(sums[k][p] * scale);
    out.push_back(std::move(map));
  }
  return out;
}

inline std::vector<RelevanceMap> explain_rise(const Image& img, const ClassifierGateway& gateway,
                                              std::span<const std::size_t> class_indices, const RiseParams& params) {
  auto maps = explain_rise_raw(img, gateway, class_indices, params);
  for (auto& m : maps) m = normalize_relevance(m);
  return maps;
}

inline RelevanceMap explain_rise(const Image& img, const ClassifierGateway& gateway, std::size_t class_index,
                                 const RiseParams& params) {
  const std::size_t classes[] = {class_index};
  return explain_rise(img, gateway, classes, params).front();
}

}  // namespace fxai
