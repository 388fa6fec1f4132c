#include <gtest/gtest.h>

#include "facexai/classifier.hpp"
#include "facexai/rng.hpp"

namespace fxai {
namespace {

const ClassList kTwo({"pos", "neg"});

BinaryMask full_mask(int w, int h) { return {w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h, 1)}; }

TEST(ClassList, ValidatesNames) {
  EXPECT_THROW(ClassList(std::vector<std::string>{}), InvalidArgument);
  EXPECT_THROW(ClassList({"a", "b", "a"}), InvalidArgument);
  const auto cl = ClassList::expressions();
  EXPECT_EQ(cl.size(), 3u);
  EXPECT_EQ(cl.index_of("happy"), 1u);
  EXPECT_FALSE(cl.find("disgust").has_value());
  EXPECT_THROW(cl.index_of("disgust"), InvalidArgument);
}

TEST(PredictionVector, ArgmaxPrefersLowestIndexOnTies) {
  EXPECT_EQ((PredictionVector{{0.4, 0.4, 0.2}}).argmax(), 0u);
  EXPECT_EQ((PredictionVector{{0.1, 0.2, 0.7}}).argmax(), 2u);
}

TEST(PredictionVector, Validation) {
  EXPECT_NO_THROW(validate_prediction({{0.5, 0.5005}}, 2));
  EXPECT_THROW(validate_prediction({{0.5, 0.51}}, 2), ProtocolError);
  EXPECT_THROW(validate_prediction({{1.2, -0.2}}, 2), ProtocolError);
  EXPECT_THROW(validate_prediction({{1.0}}, 2), ProtocolError);
  EXPECT_THROW(validate_prediction({{std::nan(""), 1.0}}, 2), ProtocolError);
}

TEST(Oracle, MeanBrightnessOnConstantImage) {
  auto model = make_oracle({.kind = OracleKind::kMeanBrightness, .size = {8, 6}}, kTwo);
  const Image img(8, 6, 3, 0.8f);
  const auto out = model->predict(std::span(&img, 1));
  ASSERT_EQ(out.size(), 1u);
  EXPECT_NEAR(out[0].probs[0], 0.8, 1e-6);
  EXPECT_NEAR(out[0].probs[1], 0.2, 1e-6);
}

TEST(Oracle, RegionIndicatorBlackRegionScoresZero) {
  BinaryMask m{4, 4, std::vector<std::uint8_t>(16, 0)};
  m.bits[5] = m.bits[6] = 1;
  OracleClassifier model({.kind = OracleKind::kRegionIndicator, .size = {4, 4}, .region = m}, kTwo);
  Image img(4, 4, 3, 1.0f);
  for (int c = 0; c < 3; ++c) img.at(1, 1, c) = img.at(2, 1, c) = 0.0f;
  EXPECT_EQ(model.score(img), 0.0);
}

TEST(Oracle, RegionIndicatorWholeImageWhite) {
  OracleClassifier model({.kind = OracleKind::kRegionIndicator, .size = {5, 5}, .region = full_mask(5, 5)}, kTwo);
  EXPECT_EQ(model.score(Image(5, 5, 3, 1.0f)), 1.0);
}

TEST(Oracle, LinearWeightsZeroIsConstant) {
  auto model = make_oracle({.kind = OracleKind::kLinearWeights, .size = {3, 3}, .weights = Field(3, 3, 0.0f)}, kTwo);
  Rng rng(2);
  std::vector<Image> imgs;
  for (int i = 0; i < 4; ++i) {
    Image img(3, 3, 3);
    for (auto& v : img.data()) v = static_cast<float>(rng.uniform());
    imgs.push_back(img);
  }
  for (const auto& pv : model->predict(imgs)) EXPECT_EQ(pv.probs, (std::vector<double>{0.0, 1.0}));
}

TEST(Oracle, LinearWeightsUniformIsWeightedMean) {
  const int w = 10, h = 7;
  OracleClassifier model({.kind = OracleKind::kLinearWeights, .size = {w, h}, .weights = Field(w, h, 1.0f / (w * h))},
                         kTwo);
  const Image img(w, h, 3, 0.5f);
  const auto pv = model.predict(std::span(&img, 1)).front();
  EXPECT_NEAR(pv.probs[0], 0.5, 1e-6);
  EXPECT_NEAR(pv.probs[1], 0.5, 1e-6);
}

TEST(Oracle, ThreeClassesShareTheComplement) {
  OracleClassifier model({.kind = OracleKind::kMeanBrightness, .size = {2, 2}, .target_class = 1},
                         ClassList::expressions());
  const Image img(2, 2, 1, 0.4f);
  const auto pv = model.predict(std::span(&img, 1)).front();
  EXPECT_NEAR(pv.probs[1], 0.4, 1e-7);
  EXPECT_NEAR(pv.probs[0], 0.3, 1e-7);
  EXPECT_NEAR(pv.probs[2], 0.3, 1e-7);
}

TEST(Oracle, RejectsMalformedSpecs) {
  EXPECT_THROW(make_oracle({.kind = OracleKind::kRegionIndicator, .size = {4, 4}}, kTwo), InvalidArgument);
  EXPECT_THROW(make_oracle({.kind = OracleKind::kRegionIndicator, .size = {4, 4}, .region = full_mask(3, 4)}, kTwo),
               InvalidArgument);
  EXPECT_THROW(make_oracle({.kind = OracleKind::kRegionIndicator,
                            .size = {2, 2},
                            .region = BinaryMask{2, 2, std::vector<std::uint8_t>(4, 0)}},
                           kTwo),
               InvalidArgument);
  EXPECT_THROW(make_oracle({.kind = OracleKind::kLinearWeights, .size = {4, 4}, .weights = Field(4, 5)}, kTwo),
               InvalidArgument);
  EXPECT_THROW(make_oracle({.size = {4, 4}, .target_class = 2}, kTwo), InvalidArgument);
  EXPECT_THROW(make_oracle({.size = {4, 4}}, ClassList({"only"})), InvalidArgument);
}

TEST(Oracle, PureAndBitExact) {
  Field a(6, 6);
  Rng rng(9);
  for (auto& v : a.values()) v = static_cast<float>(rng.uniform() / 36.0);
  OracleClassifier model({.kind = OracleKind::kLinearWeights, .size = {6, 6}, .weights = a}, kTwo);
  Image img(6, 6, 3);
  for (auto& v : img.data()) v = static_cast<float>(rng.uniform());
  EXPECT_EQ(model.score(img), model.score(img));
}

std::vector<Image> random_images(int n, int w, int h, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Image> out;
  for (int i = 0; i < n; ++i) {
    Image img(w, h, 3);
    for (auto& v : img.data()) v = static_cast<float>(rng.uniform());
    out.push_back(std::move(img));
  }
  return out;
}

TEST(Gateway, OneResultPerImageInOrder) {
  ClassifierGateway gw(make_oracle({.size = {4, 4}}, kTwo), {.batch_size = 3});
  const auto imgs = random_images(10, 4, 4, 1);
  const auto out = gw.predict_batch(imgs);
  ASSERT_EQ(out.size(), imgs.size());
  const auto& oracle = static_cast<const OracleClassifier&>(gw.model());
  for (std::size_t i = 0; i < imgs.size(); ++i) EXPECT_EQ(out[i].probs[0], oracle.score(imgs[i]));
}

TEST(Gateway, ConcatenationProperty) {
  const auto imgs = random_images(23, 5, 5, 4);
  for (std::size_t batch : {1u, 4u, 32u}) {
    for (int jobs : {1, 3}) {
      ClassifierGateway gw(make_oracle({.size = {5, 5}}, kTwo), {.batch_size = batch, .jobs = jobs});
      const std::span<const Image> all(imgs);
      auto a = gw.predict_batch(all.first(9));
      const auto b = gw.predict_batch(all.subspan(9));
      a.insert(a.end(), b.begin(), b.end());
      const auto whole = gw.predict_batch(all);
      ASSERT_EQ(a.size(), whole.size());
      for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].probs, whole[i].probs);
    }
  }
}

TEST(Gateway, SizeMismatchIsReported) {
  ClassifierGateway gw(make_oracle({.size = {4, 4}}, kTwo));
  const std::vector<Image> imgs{Image(4, 4, 3), Image(5, 4, 3)};
  EXPECT_THROW(gw.predict_batch(imgs), SizeMismatch);
  EXPECT_TRUE(gw.predict_batch({}).empty());
}

class BrokenModel : public Classifier {
 public:
  explicit BrokenModel(int mode) : mode_(mode) {}
  const ClassList& classes() const override { return kTwo; }
  InputSize input_size() const override { return {2, 2}; }
  std::vector<PredictionVector> predict(std::span<const Image> images) override {
    if (mode_ == 0) return {};
    return std::vector<PredictionVector>(images.size(), PredictionVector{{0.9, 0.9}});
  }

 private:
  int mode_;
};

TEST(Gateway, ValidatesBackendOutput) {
  const std::vector<Image> imgs(2, Image(2, 2, 3));
  EXPECT_THROW(ClassifierGateway(std::make_shared<BrokenModel>(0)).predict_batch(imgs), ProtocolError);
  EXPECT_THROW(ClassifierGateway(std::make_shared<BrokenModel>(1)).predict_batch(imgs), ProtocolError);
}

}  // namespace
}  // namespace fxai
