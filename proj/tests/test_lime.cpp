#include <gtest/gtest.h>

#include <cmath>

#include "facexai/lime.hpp"
#include "facexai/rng.hpp"
#include "facexai/synthetic.hpp"

namespace fxai {
namespace {

const ClassList kTwo({"pos", "neg"});

// Ordinary least squares on the explicit design matrix [1 | Z], solved by
// Gauss-Jordan elimination with partial pivoting.
std::vector<double> brute_force_ols(const std::vector<RegionVector>& masks, const std::vector<double>& y) {
  const std::size_t r = masks.front().size(), dim = r + 1;
  std::vector<std::vector<double>> a(dim, std::vector<double>(dim + 1, 0.0));
  for (std::size_t i = 0; i < masks.size(); ++i) {
    std::vector<double> row(dim, 1.0);
    for (std::size_t k = 0; k < r; ++k) row[k + 1] = masks[i][k];
    for (std::size_t p = 0; p < dim; ++p) {
      for (std::size_t q = 0; q < dim; ++q) a[p][q] += row[p] * row[q];
      a[p][dim] += row[p] * y[i];
    }
  }
  for (std::size_t col = 0; col < dim; ++col) {
    std::size_t pivot = col;
    for (std::size_t p = col + 1; p < dim; ++p)
      if (std::abs(a[p][col]) > std::abs(a[pivot][col])) pivot = p;
    std::swap(a[col], a[pivot]);
    for (std::size_t p = 0; p < dim; ++p) {
      if (p == col) continue;
      const double f = a[p][col] / a[col][col];
      for (std::size_t q = col; q <= dim; ++q) a[p][q] -= f * a[col][q];
    }
  }
  std::vector<double> x(dim);
  for (std::size_t p = 0; p < dim; ++p) x[p] = a[p][dim] / a[p][p];
  return x;
}

std::vector<RegionVector> exhaustive_masks(std::size_t r) {
  std::vector<RegionVector> out;
  for (std::size_t bits = 0; bits < (std::size_t{1} << r); ++bits) {
    RegionVector z(r);
    for (std::size_t k = 0; k < r; ++k) z[k] = (bits >> k) & 1;
    out.push_back(z);
  }
  return out;
}

// Vertical strips of equal width.
SegmentationMap strips(int w, int h, int n) {
  std::vector<int> labels(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) labels[static_cast<std::size_t>(y) * w + x] = x * n / w;
  return SegmentationMap(w, h, labels, n);
}

TEST(SampleMasks, FirstSampleIsUnperturbed) {
  const auto one = sample_masks(5, 1, 3);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0], RegionVector(5, 1));
  EXPECT_EQ(sample_masks(5, 40, 3).front(), RegionVector(5, 1));
  EXPECT_THROW(sample_masks(0, 4, 3), InvalidArgument);
}

TEST(SampleMasks, KeepFrequencyNearHalf) {
  const auto masks = sample_masks(8, 10000, 17);
  for (std::size_t k = 0; k < 8; ++k) {
    double on = 0;
    for (const auto& z : masks) on += z[k];
    EXPECT_NEAR(on / masks.size(), 0.5, 0.02) << "region " << k;
  }
}

TEST(SampleMasks, Deterministic) {
  EXPECT_EQ(sample_masks(12, 300, 5), sample_masks(12, 300, 5));
  EXPECT_NE(sample_masks(12, 300, 5), sample_masks(12, 300, 6));
}

TEST(Perturb, IdentityBlackoutAndSingleRegion) {
  const auto face = synthetic::render(Similarity2D{1.0, 0.0, {0.0, 0.0}}, {}, 40);
  const auto seg = strips(40, 40, 4);
  EXPECT_EQ(perturb(face.image, seg, RegionVector(4, 1)), face.image);
  const Image black = perturb(face.image, seg, RegionVector(4, 0));
  for (float v : black.data()) EXPECT_EQ(v, 0.0f);
  const Image grey = perturb(face.image, seg, RegionVector(4, 0), {0.5f, 0.5f, 0.5f});
  for (float v : grey.data()) EXPECT_EQ(v, 0.5f);
  const Image one_off = perturb(face.image, seg, {1, 0, 1, 1});
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 40; ++x)
      for (int c = 0; c < 3; ++c) {
        if (seg.label(x, y) == 1) {
          EXPECT_EQ(one_off.at(x, y, c), 0.0f);
        } else {
          EXPECT_EQ(one_off.at(x, y, c), face.image.at(x, y, c));
        }
      }
  EXPECT_THROW(perturb(face.image, seg, RegionVector(3, 1)), InvalidArgument);
  EXPECT_THROW(perturb(Image(10, 10, 3), seg, RegionVector(4, 1)), InvalidArgument);
}

TEST(KernelWeight, FrozenValues) {
  EXPECT_DOUBLE_EQ(kernel_weight(RegionVector(6, 1), 0.25), 1.0);
  // d = 1 - sqrt(0.5) = 0.2928932188134524; exp(-d^2 / 0.0625).
  EXPECT_NEAR(kernel_weight({1, 1, 0, 0}, 0.25), 0.25345144771897454, 1e-15);
  EXPECT_NEAR(kernel_weight({1, 0, 1, 0, 1, 0, 0, 1}, 0.25), 0.25345144771897454, 1e-15);
  // exp(-16)
  EXPECT_NEAR(kernel_weight(RegionVector(5, 0), 0.25), 1.1253517471925912e-07, 1e-21);
  EXPECT_THROW(kernel_weight({}, 0.25), InvalidArgument);
  EXPECT_THROW(kernel_weight({1}, 0.0), InvalidArgument);
}

TEST(FitSurrogate, ExhaustiveRecoveryMatchesBruteForce) {
  const std::vector<double> truth = {0.31, -0.12, 0.05, 0.0, 0.4, -0.27, 0.18, 0.09};
  const double b = 0.2;
  const auto masks = exhaustive_masks(8);
  std::vector<double> y, w(masks.size(), 1.0);
  for (const auto& z : masks) {
    double v = b;
    for (std::size_t k = 0; k < 8; ++k) v += truth[k] * z[k];
    y.push_back(v);
  }
  const auto fit = fit_surrogate(masks, w, y, 0.0);
  const auto oracle = brute_force_ols(masks, y);
  EXPECT_NEAR(fit.intercept, b, 1e-6);
  EXPECT_NEAR(oracle[0], b, 1e-9);
  for (std::size_t k = 0; k < 8; ++k) {
    EXPECT_NEAR(fit.coefficients[k], truth[k], 1e-6);
    EXPECT_NEAR(fit.coefficients[k], oracle[k + 1], 1e-9);
  }
}

TEST(FitSurrogate, MatchesBruteForceOnNoisyTargets) {
  Rng rng(77);
  const auto masks = sample_masks(6, 200, 4);
  std::vector<double> y, w(masks.size(), 1.0);
  for (std::size_t i = 0; i < masks.size(); ++i) y.push_back(rng.uniform());
  const auto fit = fit_surrogate(masks, w, y, 0.0);
  const auto oracle = brute_force_ols(masks, y);
  EXPECT_NEAR(fit.intercept, oracle[0], 1e-9);
  for (std::size_t k = 0; k < 6; ++k) EXPECT_NEAR(fit.coefficients[k], oracle[k + 1], 1e-9);
}

TEST(FitSurrogate, ConstantTargets) {
  const auto masks = sample_masks(5, 64, 8);
  std::vector<double> w, y(masks.size(), 0.42);
  for (const auto& z : masks) w.push_back(kernel_weight(z, 0.25));
  const auto fit = fit_surrogate(masks, w, y, 0.0);
  EXPECT_NEAR(fit.intercept, 0.42, 1e-9);
  for (double c : fit.coefficients) EXPECT_NEAR(c, 0.0, 1e-9);
}

TEST(FitSurrogate, HeavyRidgeShrinksToWeightedMean) {
  Rng rng(12);
  const auto masks = sample_masks(7, 300, 1);
  std::vector<double> w, y;
  double sw = 0, swy = 0;
  for (const auto& z : masks) {
    w.push_back(kernel_weight(z, 0.25));
    y.push_back(rng.uniform());
    sw += w.back();
    swy += w.back() * y.back();
  }
  const auto fit = fit_surrogate(masks, w, y, 1e9);
  double norm2 = 0;
  for (double c : fit.coefficients) norm2 += c * c;
  EXPECT_LE(std::sqrt(norm2), 1e-3);
  EXPECT_NEAR(fit.intercept, swy / sw, 1e-3);
}

TEST(FitSurrogate, RankDeficientWithoutRidge) {
  // Regions 0 and 1 are always on or off together.
  std::vector<RegionVector> masks;
  for (int bits = 0; bits < 8; ++bits) masks.push_back({std::uint8_t(bits & 1), std::uint8_t(bits & 1),
                                                        std::uint8_t((bits >> 1) & 1), std::uint8_t((bits >> 2) & 1)});
  const std::vector<double> w(8, 1.0), y(8, 0.5);
  try {
    fit_surrogate(masks, w, y, 0.0);
    FAIL() << "expected SingularSystem";
  } catch (const SingularSystem& e) {
    EXPECT_NE(std::string(e.what()).find("ridge"), std::string::npos);
  }
  EXPECT_NO_THROW(fit_surrogate(masks, w, y, 1.0));
  EXPECT_THROW(fit_surrogate(masks, std::vector<double>(7, 1.0), y, 0.0), InvalidArgument);
}

Field two_region_weights(const SegmentationMap& seg, double w0, double w1) {
  const auto sizes = seg.region_sizes();
  Field a(seg.width(), seg.height());
  for (std::size_t p = 0; p < a.size(); ++p) {
    const int l = seg.labels()[p];
    a.values()[p] = static_cast<float>((l == 0 ? w0 : w1) / static_cast<double>(sizes[l]));
  }
  return a;
}

TEST(ExplainLime, TwoRegionAdditiveRatio) {
  const auto seg = strips(20, 10, 2);
  ClassifierGateway gw(make_oracle({.kind = OracleKind::kLinearWeights,
                                    .size = {20, 10},
                                    .weights = two_region_weights(seg, 0.7, 0.3)},
                                   kTwo));
  const auto masks = exhaustive_masks(2);
  const std::size_t cls[] = {0};
  const auto out = explain_lime_with_masks(Image(20, 10, 3, 1.0f), seg, gw, cls, masks, {.ridge = 0.0});
  const auto& w = out.fits[0].coefficients;
  EXPECT_NEAR(w[0] / w[1], 7.0 / 3.0, 0.05 * 7.0 / 3.0);
  EXPECT_NEAR(out.maps[0].at(0, 0), w[0], 1e-6);
  EXPECT_NEAR(out.maps[0].at(19, 9), w[1], 1e-6);
}

TEST(ExplainLime, IndicatorRegionIsArgmax) {
  const auto seg = strips(48, 24, 8);
  for (int r : {0, 3, 7}) {
    ClassifierGateway gw(
        make_oracle({.kind = OracleKind::kRegionIndicator, .size = {48, 24}, .region = region_mask(seg, r)}, kTwo));
    const auto fit = explain_lime(Image(48, 24, 3, 0.9f), seg, gw, std::vector<std::size_t>{0},
                                  {.n_samples = 300, .seed = static_cast<std::uint64_t>(r)})
                         .fits[0];
    const auto& w = fit.coefficients;
    EXPECT_EQ(std::ranges::max_element(w) - w.begin(), r);
    for (int k = 0; k < 8; ++k)
      if (k != r) {
        EXPECT_LE(std::max(w[k], 0.0), 0.1 * w[r]);
      }
  }
}

TEST(ExplainLime, ConstantClassifierGivesZeroMap) {
  const auto seg = strips(16, 16, 4);
  ClassifierGateway gw(make_oracle({.kind = OracleKind::kLinearWeights, .size = {16, 16}, .weights = Field(16, 16)},
                                   kTwo));
  const auto out = explain_lime(Image(16, 16, 3, 0.3f), seg, gw, std::vector<std::size_t>{0, 1}, {.n_samples = 50});
  for (float v : out.maps[0].values()) EXPECT_EQ(v, 0.0f);
  for (float v : out.maps[1].values()) EXPECT_NEAR(v, 0.0f, 1e-9);
}

TEST(ExplainLime, PositiveAndConstantPerRegion) {
  const auto face = synthetic::render(Similarity2D{0.5, 10.0, {30.0, 30.0}}, {}, 112);
  const auto seg = slic(face.image);
  ClassifierGateway gw(make_oracle({.kind = OracleKind::kMeanBrightness, .size = {112, 112}}, kTwo));
  const auto map = explain_lime(face.image, seg, gw, 1, {.n_samples = 200, .seed = 3});
  std::vector<float> per_region(seg.region_count(), -1.0f);
  for (std::size_t p = 0; p < map.size(); ++p) {
    const float v = map.values()[p];
    EXPECT_GE(v, 0.0f);
    float& ref = per_region[seg.labels()[p]];
    if (ref < 0.0f) ref = v;
    EXPECT_EQ(v, ref);
  }
}

TEST(ExplainLime, IndependentOfWorkerCount) {
  const auto face = synthetic::render(Similarity2D{0.5, -5.0, {25.0, 30.0}}, {}, 112);
  const auto seg = slic(face.image);
  Field a(112, 112);
  Rng rng(6);
  for (auto& v : a.values()) v = static_cast<float>(rng.uniform() * 2.0 / a.size());
  auto run = [&](std::size_t batch, int jobs) {
    ClassifierGateway gw(make_oracle({.kind = OracleKind::kLinearWeights, .size = {112, 112}, .weights = a}, kTwo),
                         {.batch_size = batch, .jobs = jobs});
    return explain_lime(face.image, seg, gw, 0, {.n_samples = 150, .seed = 9});
  };
  const auto ref = run(32, 1);
  EXPECT_EQ(run(7, 4), ref);
  EXPECT_EQ(run(1, 8), ref);
}

TEST(ExplainLime, RejectsTooFewSamples) {
  const auto seg = strips(16, 16, 4);
  ClassifierGateway gw(make_oracle({.size = {16, 16}}, kTwo));
  EXPECT_THROW(explain_lime(Image(16, 16, 3), seg, gw, 0, {.n_samples = 5}), InvalidArgument);
  EXPECT_NO_THROW(explain_lime(Image(16, 16, 3), seg, gw, 0, {.n_samples = 6}));
  EXPECT_THROW(explain_lime(Image(8, 16, 3), seg, gw, 0, {}), SizeMismatch);
}

}  // namespace
}  // namespace fxai
