#pragma once

// SLIC superpixels: k-means over (L, a, b, x, y) with grid-initialized
// centers and a local search window, followed by connectivity enforcement.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "facexai/color.hpp"
#include "facexai/error.hpp"
#include "facexai/image.hpp"

namespace fxai {

class SegmentationMap {
 public:
  SegmentationMap() = default;

  // Labels must already form a total partition using every id in [0, region_count).
  SegmentationMap(int width, int height, std::vector<int> labels, int region_count)
      : width_(width), height_(height), region_count_(region_count), labels_(std::move(labels)) {
    if (width < 1 || height < 1) throw InvalidArgument("segmentation: dimensions must be positive");
    if (labels_.size() != static_cast<std::size_t>(width) * height) {
      throw InvalidArgument("segmentation: label count does not match width*height");
    }
    if (region_count < 1) throw InvalidArgument("segmentation: region count must be positive");
    std::vector<bool> used(region_count, false);
    for (int l : labels_) {
      if (l < 0 || l >= region_count) throw InvalidArgument("segmentation: label out of range");
      used[l] = true;
    }
    if (std::ranges::find(used, false) != used.end()) throw InvalidArgument("segmentation: unused label");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int region_count() const { return region_count_; }
  const std::vector<int>& labels() const { return labels_; }
  int label(int x, int y) const { return labels_[static_cast<std::size_t>(y) * width_ + x]; }

  std::vector<std::size_t> region_sizes() const {
    std::vector<std::size_t> sizes(region_count_, 0);
    for (int l : labels_) ++sizes[l];
    return sizes;
  }

  friend bool operator==(const SegmentationMap&, const SegmentationMap&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int region_count_ = 0;
  std::vector<int> labels_;
};

struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
  std::size_t count() const { return static_cast<std::size_t>(std::ranges::count(bits, 1)); }
};

inline BinaryMask region_mask(const SegmentationMap& seg, int region) {
  if (region < 0 || region >= seg.region_count()) {
    throw InvalidArgument("region_mask: region id " + std::to_string(region) + " out of range");
  }
  BinaryMask m{seg.width(), seg.height(), std::vector<std::uint8_t>(seg.labels().size(), 0)};
  for (std::size_t i = 0; i < m.bits.size(); ++i) m.bits[i] = seg.labels()[i] == region ? 1 : 0;
  return m;
}

struct SlicParams {
  int target_regions = 30;
  double compactness = 10.0;
  int iterations = 10;
  // SLIC initialization is a deterministic grid; the seed is recorded for
  // provenance and does not change the labelling.
  std::uint64_t seed = 0;
};

namespace detail {

// Relabels so every label is a single 4-connected component. For each label
// the largest component keeps it; the remaining (orphan) components are
// merged into the largest adjacent region. Output labels are numbered in
// scan order of first appearance.
inline std::vector<int> enforce_connectivity(int width, int height, const std::vector<int>& labels,
                                             int& region_count) {
  const std::size_t n = labels.size();
  std::vector<int> comp(n, -1);
  std::vector<int> comp_label;
  std::vector<std::size_t> comp_size;
  std::deque<std::size_t> queue;
  for (std::size_t start = 0; start < n; ++start) {
    if (comp[start] >= 0) continue;
    const int id = static_cast<int>(comp_label.size());
    comp_label.push_back(labels[start]);
    comp_size.push_back(0);
    comp[start] = id;
    queue.push_back(start);
    while (!queue.empty()) {
      const std::size_t p = queue.front();
      queue.pop_front();
      ++comp_size[id];
      const int x = static_cast<int>(p % width);
      const int y = static_cast<int>(p / width);
      const std::size_t nbrs[4] = {x > 0 ? p - 1 : n, x + 1 < width ? p + 1 : n, y > 0 ? p - width : n,
                                   y + 1 < height ? p + width : n};
      for (std::size_t q : nbrs) {
        if (q < n && comp[q] < 0 && labels[q] == labels[start]) {
          comp[q] = id;
          queue.push_back(q);
        }
      }
    }
  }

  const std::size_t n_comp = comp_label.size();
  int max_label = 0;
  for (int l : comp_label) max_label = std::max(max_label, l);
  std::vector<int> principal(max_label + 1, -1);
  for (std::size_t c = 0; c < n_comp; ++c) {
    int& best = principal[comp_label[c]];
    if (best < 0 || comp_size[c] > comp_size[best]) best = static_cast<int>(c);
  }

  std::vector<std::set<int>> adjacency(n_comp);
  for (std::size_t p = 0; p < n; ++p) {
    const int x = static_cast<int>(p % width);
    const int y = static_cast<int>(p / width);
    if (x + 1 < width && comp[p] != comp[p + 1]) {
      adjacency[comp[p]].insert(comp[p + 1]);
      adjacency[comp[p + 1]].insert(comp[p]);
    }
    if (y + 1 < height && comp[p] != comp[p + width]) {
      adjacency[comp[p]].insert(comp[p + width]);
      adjacency[comp[p + width]].insert(comp[p]);
    }
  }

  std::vector<int> root(n_comp, -1);
  std::vector<std::size_t> region_size(n_comp, 0);
  for (std::size_t c = 0; c < n_comp; ++c) {
    if (principal[comp_label[c]] == static_cast<int>(c)) {
      root[c] = static_cast<int>(c);
      region_size[c] = comp_size[c];
    }
  }
  bool pending = true;
  while (pending) {
    pending = false;
    bool progressed = false;
    for (std::size_t c = 0; c < n_comp; ++c) {
      if (root[c] >= 0) continue;
      int best = -1;
      for (int nb : adjacency[c]) {
        const int r = root[nb];
        if (r < 0) continue;
        if (best < 0 || region_size[r] > region_size[best] || (region_size[r] == region_size[best] && r < best)) {
          best = r;
        }
      }
      if (best < 0) {
        pending = true;
        continue;
      }
      root[c] = best;
      region_size[best] += comp_size[c];
      progressed = true;
    }
    if (pending && !progressed) throw Error("connectivity enforcement: isolated component");
  }

  std::vector<int> relabel(n_comp, -1);
  int next = 0;
  std::vector<int> out(n);
  for (std::size_t p = 0; p < n; ++p) {
    const int r = root[comp[p]];
    if (relabel[r] < 0) relabel[r] = next++;
    out[p] = relabel[r];
  }
  region_count = next;
  return out;
}

}  // namespace detail

inline SegmentationMap slic(const Image& img, const SlicParams& params = {}) {
  if (img.empty()) throw InvalidArgument("slic: empty image");
  if (params.target_regions < 1) throw InvalidArgument("slic: target_regions must be >= 1");
  if (params.iterations < 0) throw InvalidArgument("slic: iterations must be >= 0");
  if (!(params.compactness > 0.0)) throw InvalidArgument("slic: compactness must be positive");
  const int w = img.width();
  const int h = img.height();
  const std::size_t n = img.pixel_count();
  if (static_cast<std::size_t>(params.target_regions) > n) {
    throw InvalidArgument("slic: target_regions exceeds pixel count");
  }
  if (params.target_regions == 1) return SegmentationMap(w, h, std::vector<int>(n, 0), 1);

  std::vector<Lab> lab(n);
  for (std::size_t p = 0; p < n; ++p) {
    const float* px = img.data().data() + p * img.channels();
    lab[p] = img.channels() == 1 ? srgb_to_lab(px[0], px[0], px[0]) : srgb_to_lab(px[0], px[1], px[2]);
  }
  auto lab_at = [&](int x, int y) -> const Lab& { return lab[static_cast<std::size_t>(y) * w + x]; };
  auto lab_dist2 = [](const Lab& a, const Lab& b) {
    return (a.l - b.l) * (a.l - b.l) + (a.a - b.a) * (a.a - b.a) + (a.b - b.b) * (a.b - b.b);
  };

  const int k = params.target_regions;
  const int ny = std::clamp(static_cast<int>(std::lround(std::sqrt(static_cast<double>(k) * h / w))), 1, h);
  const int nx = std::clamp(static_cast<int>(std::lround(static_cast<double>(k) / ny)), 1, w);
  const double step = std::sqrt(static_cast<double>(n) / k);

  struct Center {
    Lab color;
    double x;
    double y;
  };
  std::vector<Center> centers;
  centers.reserve(static_cast<std::size_t>(nx) * ny);
  auto gradient = [&](int x, int y) {
    const int xl = std::max(x - 1, 0), xr = std::min(x + 1, w - 1);
    const int yu = std::max(y - 1, 0), yd = std::min(y + 1, h - 1);
    return lab_dist2(lab_at(xr, y), lab_at(xl, y)) + lab_dist2(lab_at(x, yd), lab_at(x, yu));
  };
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      int cx = std::min(static_cast<int>((i + 0.5) * w / nx), w - 1);
      int cy = std::min(static_cast<int>((j + 0.5) * h / ny), h - 1);
      // Move the seed to the lowest-gradient pixel of its 3x3 neighbourhood.
      double best = gradient(cx, cy);
      int bx = cx, by = cy;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int x = cx + dx, y = cy + dy;
          if (x < 0 || y < 0 || x >= w || y >= h) continue;
          const double g = gradient(x, y);
          if (g < best) {
            best = g;
            bx = x;
            by = y;
          }
        }
      }
      centers.push_back({lab_at(bx, by), static_cast<double>(bx), static_cast<double>(by)});
    }
  }

  const double spatial_weight = (params.compactness / step) * (params.compactness / step);
  const int window = static_cast<int>(std::ceil(step));
  std::vector<int> labels(n, -1);
  std::vector<double> dist(n);
  const int iterations = std::max(params.iterations, 1);
  for (int iter = 0; iter < iterations; ++iter) {
    std::ranges::fill(dist, std::numeric_limits<double>::infinity());
    for (std::size_t c = 0; c < centers.size(); ++c) {
      const auto& ctr = centers[c];
      const int x0 = std::max(0, static_cast<int>(std::floor(ctr.x)) - window);
      const int x1 = std::min(w - 1, static_cast<int>(std::ceil(ctr.x)) + window);
      const int y0 = std::max(0, static_cast<int>(std::floor(ctr.y)) - window);
      const int y1 = std::min(h - 1, static_cast<int>(std::ceil(ctr.y)) + window);
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          const std::size_t p = static_cast<std::size_t>(y) * w + x;
          const double dxy = (x - ctr.x) * (x - ctr.x) + (y - ctr.y) * (y - ctr.y);
          const double d = lab_dist2(lab[p], ctr.color) + spatial_weight * dxy;
          if (d < dist[p]) {
            dist[p] = d;
            labels[p] = static_cast<int>(c);
          }
        }
      }
    }
    // Pixels outside every window fall back to the nearest center in 5D.
    for (std::size_t p = 0; p < n; ++p) {
      if (labels[p] >= 0) continue;
      const int x = static_cast<int>(p % w), y = static_cast<int>(p / w);
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < centers.size(); ++c) {
        const double dxy = (x - centers[c].x) * (x - centers[c].x) + (y - centers[c].y) * (y - centers[c].y);
        const double d = lab_dist2(lab[p], centers[c].color) + spatial_weight * dxy;
        if (d < best) {
          best = d;
          labels[p] = static_cast<int>(c);
        }
      }
    }
    if (iter + 1 == iterations) break;
    std::vector<double> sum(centers.size() * 5, 0.0);
    std::vector<std::size_t> count(centers.size(), 0);
    for (std::size_t p = 0; p < n; ++p) {
      double* s = &sum[static_cast<std::size_t>(labels[p]) * 5];
      s[0] += lab[p].l;
      s[1] += lab[p].a;
      s[2] += lab[p].b;
      s[3] += static_cast<double>(p % w);
      s[4] += static_cast<double>(p / w);
      ++count[labels[p]];
    }
    for (std::size_t c = 0; c < centers.size(); ++c) {
      if (count[c] == 0) continue;
      const double inv = 1.0 / static_cast<double>(count[c]);
      const double* s = &sum[c * 5];
      centers[c] = {{s[0] * inv, s[1] * inv, s[2] * inv}, s[3] * inv, s[4] * inv};
    }
  }

  int region_count = 0;
  auto connected = detail::enforce_connectivity(w, h, labels, region_count);
  return SegmentationMap(w, h, std::move(connected), region_count);
}

// Debug rendering: the image with region boundaries painted in `color`.
inline Image segmentation_overlay(const Image& img, const SegmentationMap& seg, std::array<float, 3> color = {1.0f, 0.0f, 0.0f}) {
  if (img.width() != seg.width() || img.height() != seg.height()) {
    throw InvalidArgument("segmentation_overlay: size mismatch");
  }
  Image out(img.width(), img.height(), 3);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const int l = seg.label(x, y);
      const bool edge = (x + 1 < img.width() && seg.label(x + 1, y) != l) ||
                        (y + 1 < img.height() && seg.label(x, y + 1) != l);
      for (int c = 0; c < 3; ++c) {
        out.at(x, y, c) = edge ? color[c] : img.at(x, y, img.channels() == 1 ? 0 : c);
      }
    }
  }
  return out;
}

}  // namespace fxai
