#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>

#include "facexai/atlas.hpp"
#include "facexai/rng.hpp"
#include "facexai/synthetic.hpp"

namespace fxai {
namespace {

LandmarkSet apply(const Similarity2D& t, const LandmarkSet& lm) {
  return lm.transformed([&](Point2 p) { return t.apply(p); });
}

double rms(const LandmarkSet& a, const LandmarkSet& b) {
  double s = 0;
  for (std::size_t i = 0; i < kLandmarkCount; ++i) {
    const Point2 d = a[i] - b[i];
    s += d.x * d.x + d.y * d.y;
  }
  return std::sqrt(s / kLandmarkCount);
}

Field smooth_map(int w, int h) {
  Field f(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double u = double(x) / w, v = double(y) / h;
      f.at(x, y) = static_cast<float>(0.5 + 0.3 * std::sin(3.0 * u + 1.0) * std::cos(2.0 * v) + 0.2 * u * v);
    }
  return f;
}

TEST(FitSimilarity, IdentityOnEqualSets) {
  const auto lm = synthetic::base_landmarks();
  const auto t = fit_similarity(lm.points(), lm.points());
  EXPECT_NEAR(t.scale, 1.0, 1e-12);
  EXPECT_NEAR(t.rotation, 0.0, 1e-12);
  EXPECT_NEAR(t.translation.x, 0.0, 1e-9);
  EXPECT_NEAR(t.translation.y, 0.0, 1e-9);
}

TEST(FitSimilarity, RecoversKnownTransform) {
  const auto lm = synthetic::base_landmarks();
  const Similarity2D truth{2.0, 30.0, {10.0, 5.0}};
  const auto t = fit_similarity(lm.points(), apply(truth, lm).points());
  EXPECT_NEAR(t.scale, 2.0, 1e-9);
  EXPECT_NEAR(t.rotation, 30.0, 1e-9);
  EXPECT_NEAR(t.translation.x, 10.0, 1e-9);
  EXPECT_NEAR(t.translation.y, 5.0, 1e-9);
}

TEST(FitSimilarity, InverseComposesToIdentity) {
  const Similarity2D t{1.7, -48.0, {-3.0, 22.0}};
  const Point2 p{13.0, -7.5};
  const Point2 back = t.inverse().apply(t.apply(p));
  EXPECT_NEAR(back.x, p.x, 1e-12);
  EXPECT_NEAR(back.y, p.y, 1e-12);
  EXPECT_THROW((Similarity2D{0.0, 0.0, {}}).inverse(), InvalidArgument);
}

TEST(FitSimilarity, NoisyFitMatchesNormalEquations) {
  Rng rng(4);
  const auto lm = synthetic::base_landmarks();
  const auto noisy = apply({0.8, 12.0, {4.0, -9.0}}, lm).transformed([&](Point2 p) {
    return p + Point2{2.0 * rng.normal(), 2.0 * rng.normal()};
  });
  // Unknowns (a, b, tx, ty): x' = a x - b y + tx, y' = b x + a y + ty.
  Eigen::MatrixXd A(2 * kLandmarkCount, 4);
  Eigen::VectorXd rhs(2 * kLandmarkCount);
  for (std::size_t i = 0; i < kLandmarkCount; ++i) {
    const auto p = lm[i], q = noisy[i];
    A.row(2 * i) << p.x, -p.y, 1, 0;
    A.row(2 * i + 1) << p.y, p.x, 0, 1;
    rhs(2 * i) = q.x;
    rhs(2 * i + 1) = q.y;
  }
  const Eigen::Vector4d sol = (A.transpose() * A).ldlt().solve(A.transpose() * rhs);
  const auto t = fit_similarity(lm.points(), noisy.points());
  EXPECT_NEAR(t.scale, std::hypot(sol(0), sol(1)), 1e-9);
  EXPECT_NEAR(t.rotation, std::atan2(sol(1), sol(0)) * 180.0 / std::numbers::pi, 1e-9);
  EXPECT_NEAR(t.translation.x, sol(2), 1e-9);
  EXPECT_NEAR(t.translation.y, sol(3), 1e-9);
  const double oracle_residual = (A * sol - rhs).squaredNorm();
  double residual = 0;
  for (std::size_t i = 0; i < kLandmarkCount; ++i) {
    const Point2 d = t.apply(lm[i]) - noisy[i];
    residual += d.x * d.x + d.y * d.y;
  }
  EXPECT_NEAR(residual, oracle_residual, 1e-9 * oracle_residual);
}

TEST(FitSimilarity, DegenerateSource) {
  const std::vector<Point2> same(5, Point2{3.0, 3.0});
  const std::vector<Point2> other{{0, 0}, {1, 0}, {0, 1}, {1, 1}, {2, 2}};
  EXPECT_THROW(fit_similarity(same, other), DegenerateLandmarks);
  EXPECT_THROW(fit_similarity(other, same), DegenerateLandmarks);
}

TEST(ProcrustesMean, SingleSetIsFramedCopy) {
  const auto lm = apply({0.6, 21.0, {40.0, 10.0}}, synthetic::base_landmarks());
  const auto tpl = procrustes_mean(std::vector{lm});
  EXPECT_EQ(tpl.side, 224);
  const auto eyes = eye_centroids(tpl.points);
  EXPECT_NEAR(eyes.left.y, 0.4 * 224, 1e-6);
  EXPECT_NEAR(eyes.right.y, 0.4 * 224, 1e-6);
  EXPECT_NEAR(0.5 * (eyes.left.x + eyes.right.x), 112.0, 1e-6);
  EXPECT_NEAR(eyes.right.x - eyes.left.x, 0.3 * 224, 1e-6);
  const auto t = fit_similarity(lm, tpl);
  EXPECT_LT(rms(apply(t, lm), tpl.points), 1e-6);
}

TEST(ProcrustesMean, SimilarPairSharesShape) {
  const auto a = synthetic::base_landmarks();
  const auto b = apply({1.4, -33.0, {-20.0, 60.0}}, a);
  const auto tpl = procrustes_mean(std::vector{a, b});
  EXPECT_LT(rms(apply(fit_similarity(a, tpl), a), tpl.points), 1e-6);
  EXPECT_LT(rms(apply(fit_similarity(b, tpl), b), tpl.points), 1e-6);
}

TEST(ProcrustesMean, NoiseAveragesOut) {
  Rng rng(31);
  const auto clean = procrustes_mean(std::vector{synthetic::base_landmarks()});
  std::vector<LandmarkSet> sets;
  for (int i = 0; i < 30; ++i) {
    const auto pose = synthetic::random_pose(rng, {});
    sets.push_back(apply(pose, synthetic::base_landmarks()).transformed([&](Point2 p) {
      return p + Point2{rng.normal(), rng.normal()};
    }));
  }
  const auto tpl = procrustes_mean(sets);
  EXPECT_LT(rms(tpl.points, clean.points), 0.5);
}

TEST(ProcrustesMean, RejectsBadInput) {
  EXPECT_THROW(procrustes_mean(std::vector<LandmarkSet>{}), InvalidArgument);
  std::array<Point2, kLandmarkCount> same{};
  same.fill({5.0, 5.0});
  EXPECT_THROW(procrustes_mean(std::vector{LandmarkSet(same)}), DegenerateLandmarks);
  EXPECT_THROW(procrustes_mean(std::vector{synthetic::base_landmarks()}, {.side = 224, .interocular = 0.9}),
               InvalidArgument);
}

TEST(WarpExplanation, IdentityIsBitEqual) {
  const Field m = smooth_map(50, 50);
  EXPECT_EQ(warp_explanation(m, {}, 50), m);
}

TEST(WarpExplanation, IntegerShiftIsExact) {
  const Field m = smooth_map(40, 40);
  const auto out = warp_explanation(m, {1.0, 0.0, {5.0, -3.0}}, 40);
  for (int v = 0; v < 40; ++v)
    for (int u = 0; u < 40; ++u) {
      const int x = u - 5, y = v + 3;
      if (x >= 0 && x < 40 && y >= 0 && y < 40) {
        EXPECT_EQ(out.at(u, v), m.at(x, y));
      } else {
        EXPECT_EQ(out.at(u, v), 0.0f);
      }
    }
}

TEST(WarpExplanation, RoundTripOnSmoothMap) {
  const Field m = smooth_map(96, 96);
  const Similarity2D t{1.15, 20.0, {-6.0, 9.0}};
  const auto there = warp_explanation(m, t, 128);
  const auto back = warp_explanation(there, t.inverse(), 96);
  double err = 0;
  int n = 0;
  for (int y = 0; y < 96; ++y)
    for (int x = 0; x < 96; ++x) {
      const Point2 q = t.apply({double(x), double(y)});
      if (q.x < 1 || q.y < 1 || q.x > 126 || q.y > 126) continue;
      err += std::abs(back.at(x, y) - m.at(x, y));
      ++n;
    }
  ASSERT_GT(n, 4000);
  EXPECT_LE(err / n, 0.02);
  EXPECT_THROW(warp_explanation(m, {0.0, 0.0, {}}, 10), InvalidArgument);
}

PredictionRecord rec(std::size_t label, std::size_t predicted) {
  PredictionVector pv{{0.0, 0.0}};
  pv.probs[predicted] = 1.0;
  return {"x.png", label, pv, predicted};
}

TEST(SelectPositives, ToySet) {
  const std::vector<PredictionRecord> records{rec(0, 0), rec(0, 1), rec(1, 0)};
  EXPECT_EQ(select_positives(records, 0, SelectionPolicy::kGroundTruth), (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(select_positives(records, 0, SelectionPolicy::kPredicted), (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(select_positives(records, 0, SelectionPolicy::kTruePositive), (std::vector<std::size_t>{0}));
}

TEST(SelectPositives, PerfectClassifierPoliciesCoincide) {
  const std::vector<PredictionRecord> records{rec(0, 0), rec(1, 1), rec(0, 0), rec(1, 1)};
  for (std::size_t c : {0u, 1u}) {
    const auto gt = select_positives(records, c, SelectionPolicy::kGroundTruth);
    EXPECT_EQ(select_positives(records, c, SelectionPolicy::kPredicted), gt);
    EXPECT_EQ(select_positives(records, c, SelectionPolicy::kTruePositive), gt);
  }
}

TEST(SelectPositives, AllWrongIsEmptySelection) {
  const std::vector<PredictionRecord> records{rec(0, 1), rec(1, 0)};
  try {
    select_positives(records, 0, SelectionPolicy::kTruePositive);
    FAIL() << "expected EmptySelection";
  } catch (const EmptySelection& e) {
    EXPECT_NE(std::string(e.what()).find("true-positive"), std::string::npos);
  }
  EXPECT_EQ(parse_selection_policy("predicted"), SelectionPolicy::kPredicted);
  EXPECT_THROW(parse_selection_policy("positives"), InvalidArgument);
}

CanonicalTemplate identity_template(int side) {
  return procrustes_mean(std::vector{synthetic::base_landmarks()}, {.side = side});
}

Field delta(int side, int x, int y) {
  Field f(side, side);
  f.at(x, y) = 1.0f;
  return f;
}

TEST(Aggregate, OneItemIsItsCanonicalMap) {
  const auto tpl = identity_template(224);
  const AtlasItem item{smooth_map(200, 180), apply({0.9, 10.0, {-5.0, 2.0}}, synthetic::base_landmarks())};
  const auto g = aggregate_global(std::vector{item}, tpl, {.method = "rise"});
  EXPECT_EQ(g.count, 1u);
  EXPECT_EQ(g.map, normalize_relevance(canonicalize(item, tpl)));
  EXPECT_EQ(aggregate_global(std::vector{item, item}, tpl, {}).map, g.map);
}

TEST(Aggregate, DisjointDeltas) {
  const auto tpl = identity_template(64);
  const std::vector<AtlasItem> items{{delta(64, 10, 12), tpl.points}, {delta(64, 40, 50), tpl.points}};
  const auto mean = mean_canonical(items, tpl);
  EXPECT_EQ(mean.at(10, 12), 0.5f);
  EXPECT_EQ(mean.at(40, 50), 0.5f);
  const auto g = aggregate_global(items, tpl, {});
  EXPECT_EQ(g.map.at(10, 12), 1.0f);
  EXPECT_EQ(g.map.at(40, 50), 1.0f);
  EXPECT_EQ(g.count, 2u);
  EXPECT_THROW(mean_canonical(std::vector<AtlasItem>{}, tpl), EmptySelection);
}

TEST(Aggregate, LinearOverPartitions) {
  Rng rng(14);
  const auto tpl = identity_template(96);
  std::vector<AtlasItem> items;
  for (int i = 0; i < 5; ++i) {
    Field f(80, 80);
    for (auto& v : f.values()) v = static_cast<float>(rng.uniform());
    items.push_back({f, apply(synthetic::random_pose(rng, {0.25, 0.35, 20.0, 5.0}), synthetic::base_landmarks())});
  }
  const auto all = mean_canonical(items, tpl, 3);
  const auto a = mean_canonical(std::span(items).first(3), tpl);
  const auto b = mean_canonical(std::span(items).subspan(3), tpl);
  for (std::size_t p = 0; p < all.size(); ++p)
    EXPECT_NEAR(all.values()[p], (3.0 * a.values()[p] + 2.0 * b.values()[p]) / 5.0, 1e-6);
}

}  // namespace
}  // namespace fxai
