#pragma once

// Black-box classifier abstraction. Explainers only ever call
// ClassifierGateway::predict_batch; backends are either an external process
// (see wire.hpp) or one of the built-in oracles defined here.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "facexai/error.hpp"
#include "facexai/image.hpp"
#include "facexai/parallel.hpp"
#include "facexai/segmentation.hpp"

namespace fxai {

class ClassList {
 public:
  ClassList() = default;
  explicit ClassList(std::vector<std::string> names) : names_(std::move(names)) {
    if (names_.empty()) throw InvalidArgument("class list must not be empty");
    std::unordered_set<std::string> seen;
    for (const auto& n : names_) {
      if (n.empty()) throw InvalidArgument("class names must be non-empty");
      if (!seen.insert(n).second) throw InvalidArgument("duplicate class name '" + n + "'");
    }
  }

  // The three expression classes used throughout the experiments.
  static ClassList expressions() { return ClassList({"angry", "happy", "sad"}); }

  std::size_t size() const { return names_.size(); }
  const std::string& operator[](std::size_t i) const { return names_.at(i); }
  const std::vector<std::string>& names() const { return names_; }

  std::optional<std::size_t> find(const std::string& name) const {
    auto it = std::ranges::find(names_, name);
    if (it == names_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - names_.begin());
  }

  std::size_t index_of(const std::string& name) const {
    auto i = find(name);
    if (!i) throw InvalidArgument("unknown class '" + name + "'");
    return *i;
  }

  friend bool operator==(const ClassList&, const ClassList&) = default;

 private:
  std::vector<std::string> names_;
};

struct PredictionVector {
  std::vector<double> probs;

  // Ties go to the lowest class index.
  std::size_t argmax() const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < probs.size(); ++i) {
      if (probs[i] > probs[best]) best = i;
    }
    return best;
  }

  friend bool operator==(const PredictionVector&, const PredictionVector&) = default;
};

inline constexpr double kProbSumTolerance = 1e-3;

inline void validate_prediction(const PredictionVector& pv, std::size_t n_classes) {
  if (pv.probs.size() != n_classes) {
    throw ProtocolError("prediction has " + std::to_string(pv.probs.size()) + " entries, expected " +
                        std::to_string(n_classes));
  }
  double sum = 0.0;
  for (double p : pv.probs) {
    if (!(p >= 0.0 && p <= 1.0)) throw ProtocolError("probability outside [0,1]");
    sum += p;
  }
  if (std::abs(sum - 1.0) > kProbSumTolerance) throw ProtocolError("probabilities do not sum to 1");
}

struct InputSize {
  int width = 224;
  int height = 224;
  friend bool operator==(InputSize, InputSize) = default;
};

class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual const ClassList& classes() const = 0;
  virtual InputSize input_size() const = 0;
  // True when concurrent predict() calls may run in parallel.
  virtual bool reentrant() const { return false; }
  // Implementations must be safe to call from several threads.
  virtual std::vector<PredictionVector> predict(std::span<const Image> images) = 0;
};

enum class OracleKind { kMeanBrightness, kRegionIndicator, kLinearWeights };

// Synthetic classifier definitions with analytically known saliency. Each
// oracle computes a score s in [0,1] for `target_class`; the other classes
// share 1 - s evenly (with two classes the complement takes all of it).
struct OracleSpec {
  OracleKind kind = OracleKind::kMeanBrightness;
  InputSize size{};
  std::size_t target_class = 0;
  std::optional<BinaryMask> region;   // region-indicator
  std::optional<Field> weights;       // linear-weights, one weight per pixel
};

class OracleClassifier final : public Classifier {
 public:
  OracleClassifier(OracleSpec spec, ClassList classes) : spec_(std::move(spec)), classes_(std::move(classes)) {
    if (classes_.size() < 2) throw InvalidArgument("oracle needs at least two classes");
    if (spec_.target_class >= classes_.size()) throw InvalidArgument("oracle target class out of range");
    if (spec_.size.width < 1 || spec_.size.height < 1) throw InvalidArgument("oracle input size must be positive");
    const std::size_t n = static_cast<std::size_t>(spec_.size.width) * spec_.size.height;
    switch (spec_.kind) {
      case OracleKind::kMeanBrightness:
        break;
      case OracleKind::kRegionIndicator:
        if (!spec_.region) throw InvalidArgument("region-indicator oracle needs a region mask");
        if (spec_.region->width != spec_.size.width || spec_.region->height != spec_.size.height ||
            spec_.region->bits.size() != n) {
          throw InvalidArgument("region mask size does not match oracle input size");
        }
        for (std::size_t i = 0; i < n; ++i) {
          if (spec_.region->bits[i]) region_pixels_.push_back(i);
        }
        if (region_pixels_.empty()) throw InvalidArgument("region-indicator oracle has an empty region");
        break;
      case OracleKind::kLinearWeights:
        if (!spec_.weights) throw InvalidArgument("linear-weights oracle needs a weight field");
        if (spec_.weights->width() != spec_.size.width || spec_.weights->height() != spec_.size.height) {
          throw InvalidArgument("weight field size does not match oracle input size");
        }
        for (float a : spec_.weights->values()) {
          if (!std::isfinite(a)) throw InvalidArgument("weight field has non-finite values");
        }
        break;
    }
  }

  const ClassList& classes() const override { return classes_; }
  InputSize input_size() const override { return spec_.size; }
  bool reentrant() const override { return true; }
  const OracleSpec& spec() const { return spec_; }

  double score(const Image& img) const {
    if (img.width() != spec_.size.width || img.height() != spec_.size.height) {
      throw SizeMismatch("oracle expects " + std::to_string(spec_.size.width) + "x" +
                         std::to_string(spec_.size.height) + " input, got " + std::to_string(img.width()) + "x" +
                         std::to_string(img.height()));
    }
    double s = 0.0;
    switch (spec_.kind) {
      case OracleKind::kMeanBrightness: {
        for (std::size_t p = 0; p < img.pixel_count(); ++p) s += img.intensity(p);
        s /= static_cast<double>(img.pixel_count());
        break;
      }
      case OracleKind::kRegionIndicator: {
        for (std::size_t p : region_pixels_) s += img.intensity(p);
        s /= static_cast<double>(region_pixels_.size());
        break;
      }
      case OracleKind::kLinearWeights: {
        const auto a = spec_.weights->values();
        for (std::size_t p = 0; p < img.pixel_count(); ++p) s += static_cast<double>(a[p]) * img.intensity(p);
        break;
      }
    }
    return std::clamp(s, 0.0, 1.0);
  }

  std::vector<PredictionVector> predict(std::span<const Image> images) override {
    std::vector<PredictionVector> out;
    out.reserve(images.size());
    const double others = static_cast<double>(classes_.size() - 1);
    for (const auto& img : images) {
      const double s = score(img);
      PredictionVector pv;
      pv.probs.assign(classes_.size(), (1.0 - s) / others);
      pv.probs[spec_.target_class] = s;
      out.push_back(std::move(pv));
    }
    return out;
  }

 private:
  OracleSpec spec_;
  ClassList classes_;
  std::vector<std::size_t> region_pixels_;
};

inline std::shared_ptr<Classifier> make_oracle(OracleSpec spec, ClassList classes) {
  return std::make_shared<OracleClassifier>(std::move(spec), std::move(classes));
}

struct GatewayConfig {
  std::size_t batch_size = 32;
  int jobs = 1;
};

// Front door to a classifier: checks input sizes, splits requests into
// backend batches, validates every returned probability row and preserves
// input order.
class ClassifierGateway {
 public:
  ClassifierGateway(std::shared_ptr<Classifier> model, GatewayConfig config = {})
      : model_(std::move(model)), config_(config) {
    if (!model_) throw InvalidArgument("gateway needs a classifier");
    if (config_.batch_size < 1) throw InvalidArgument("batch size must be positive");
  }

  const ClassList& classes() const { return model_->classes(); }
  InputSize input_size() const { return model_->input_size(); }
  const GatewayConfig& config() const { return config_; }
  Classifier& model() const { return *model_; }

  std::vector<PredictionVector> predict_batch(std::span<const Image> images) const {
    const InputSize size = model_->input_size();
    for (const auto& img : images) {
      if (img.width() != size.width || img.height() != size.height) {
        throw SizeMismatch("classifier expects " + std::to_string(size.width) + "x" + std::to_string(size.height) +
                           " images, got " + std::to_string(img.width()) + "x" + std::to_string(img.height()));
      }
    }
    const std::size_t n_batches = (images.size() + config_.batch_size - 1) / config_.batch_size;
    std::vector<std::vector<PredictionVector>> parts(n_batches);
    const int jobs = model_->reentrant() ? config_.jobs : 1;
    parallel_for(n_batches, jobs, [&](std::size_t b) {
      const std::size_t begin = b * config_.batch_size;
      const std::size_t count = std::min(config_.batch_size, images.size() - begin);
      parts[b] = model_->predict(images.subspan(begin, count));
      if (parts[b].size() != count) {
        throw ProtocolError("backend returned " + std::to_string(parts[b].size()) + " predictions for " +
                            std::to_string(count) + " images");
      }
    });
    std::vector<PredictionVector> out;
    out.reserve(images.size());
    for (auto& part : parts) {
      for (auto& pv : part) {
        validate_prediction(pv, classes().size());
        out.push_back(std::move(pv));
      }
    }
    return out;
  }

 private:
  std::shared_ptr<Classifier> model_;
  GatewayConfig config_;
};

}  // namespace fxai
