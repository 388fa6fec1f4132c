#pragma once

// Evaluation bookkeeping: dataset manifests, confusion matrices, accuracy
// statistics and k-fold manifest splits.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "facexai/classifier.hpp"
#include "facexai/error.hpp"
#include "facexai/facealign.hpp"
#include "facexai/io.hpp"
#include "facexai/landmarks.hpp"
#include "facexai/rng.hpp"

namespace fxai {

struct ManifestEntry {
  std::string image;
  std::string label;
  std::string landmarks;  // empty when absent

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
  ClassList classes;
  std::vector<ManifestEntry> entries;
  std::filesystem::path base_dir;  // relative paths resolve against this

  std::filesystem::path resolve(const std::string& path) const {
    const std::filesystem::path p(path);
    return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
  }
};

namespace detail {

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::string(trim(cur)));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw ParseError("manifest: unterminated quote");
  fields.push_back(std::string(trim(cur)));
  return fields;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace detail

// CSV with header `image,label,landmarks`; the landmarks column (and its
// value on any row) is optional. Labels must belong to `classes`.
inline DatasetManifest parse_manifest(std::string_view text, const ClassList& classes,
                                      const std::filesystem::path& base_dir = {}) {
  DatasetManifest m{classes, {}, base_dir};
  std::istringstream in{std::string(text)};
  std::string line;
  bool header_seen = false;
  std::size_t line_no = 0;
  int col_image = -1, col_label = -1, col_lm = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (!header_seen) {
      for (std::size_t i = 0; i < fields.size(); ++i) {
        if (fields[i] == "image") col_image = static_cast<int>(i);
        if (fields[i] == "label") col_label = static_cast<int>(i);
        if (fields[i] == "landmarks") col_lm = static_cast<int>(i);
      }
      if (col_image < 0 || col_label < 0) throw ParseError("manifest: header must name 'image' and 'label' columns");
      header_seen = true;
      continue;
    }
    auto field = [&](int col) -> std::string {
      return col >= 0 && static_cast<std::size_t>(col) < fields.size() ? fields[col] : std::string();
    };
    ManifestEntry e{field(col_image), field(col_label), field(col_lm)};
    const std::string where = "manifest line " + std::to_string(line_no);
    if (e.image.empty()) throw ParseError(where + ": empty image path");
    if (!classes.find(e.label)) throw ParseError(where + ": label '" + e.label + "' is not in the class list");
    m.entries.push_back(std::move(e));
  }
  if (!header_seen) throw ParseError("manifest: missing header");
  return m;
}

inline DatasetManifest read_manifest(const std::filesystem::path& path, const ClassList& classes) {
  return parse_manifest(read_text_file(path), classes, path.parent_path());
}

inline std::string format_manifest(const DatasetManifest& m) {
  std::string out = "image,label,landmarks\n";
  for (const auto& e : m.entries) {
    out += detail::csv_field(e.image) + "," + detail::csv_field(e.label) + "," + detail::csv_field(e.landmarks) + "\n";
  }
  return out;
}

class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(ClassList classes)
      : classes_(std::move(classes)), counts_(classes_.size() * classes_.size(), 0) {}

  static ConfusionMatrix from_counts(ClassList classes, const std::vector<std::vector<std::uint64_t>>& rows) {
    ConfusionMatrix cm(std::move(classes));
    if (rows.size() != cm.size()) throw InvalidArgument("confusion matrix row count does not match class count");
    for (std::size_t t = 0; t < rows.size(); ++t) {
      if (rows[t].size() != cm.size()) throw InvalidArgument("confusion matrix must be square");
      for (std::size_t p = 0; p < rows[t].size(); ++p) cm.counts_[t * cm.size() + p] = rows[t][p];
    }
    return cm;
  }

  std::size_t size() const { return classes_.size(); }
  const ClassList& classes() const { return classes_; }
  std::uint64_t at(std::size_t truth, std::size_t predicted) const { return counts_[truth * size() + predicted]; }
  void add(std::size_t truth, std::size_t predicted) { ++counts_[truth * size() + predicted]; }

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto c : counts_) t += c;
    return t;
  }
  std::uint64_t row_sum(std::size_t truth) const {
    std::uint64_t s = 0;
    for (std::size_t p = 0; p < size(); ++p) s += at(truth, p);
    return s;
  }
  std::uint64_t col_sum(std::size_t predicted) const {
    std::uint64_t s = 0;
    for (std::size_t t = 0; t < size(); ++t) s += at(t, predicted);
    return s;
  }

  // Class-name header row and column; rows are true classes.
  std::string to_csv() const {
    std::string out = "true\\pred";
    for (const auto& n : classes_.names()) out += "," + detail::csv_field(n);
    out += "\n";
    for (std::size_t t = 0; t < size(); ++t) {
      out += detail::csv_field(classes_[t]);
      for (std::size_t p = 0; p < size(); ++p) out += "," + std::to_string(at(t, p));
      out += "\n";
    }
    return out;
  }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  ClassList classes_;
  std::vector<std::uint64_t> counts_;
};

struct Metrics {
  double accuracy = 0.0;
  std::vector<double> recall;
  std::vector<bool> recall_undefined;  // true where the class has no ground-truth items
  std::vector<double> predicted_share;
};

inline Metrics metrics(const ConfusionMatrix& cm) {
  const auto total = cm.total();
  if (total == 0) throw InvalidArgument("metrics: empty confusion matrix");
  Metrics m;
  std::uint64_t trace = 0;
  for (std::size_t c = 0; c < cm.size(); ++c) {
    trace += cm.at(c, c);
    const auto row = cm.row_sum(c);
    m.recall_undefined.push_back(row == 0);
    m.recall.push_back(row == 0 ? 0.0 : static_cast<double>(cm.at(c, c)) / static_cast<double>(row));
    m.predicted_share.push_back(static_cast<double>(cm.col_sum(c)) / static_cast<double>(total));
  }
  m.accuracy = static_cast<double>(trace) / static_cast<double>(total);
  return m;
}

struct PredictionRecord {
  std::string image;
  std::size_t label = 0;
  PredictionVector prediction;
  std::size_t predicted = 0;  // argmax, ties to the lowest index
};

struct SkipRecord {
  std::string image;
  std::string reason;
};

struct EvaluationResult {
  ConfusionMatrix matrix;
  std::vector<PredictionRecord> records;
  std::vector<SkipRecord> skipped;
  std::vector<std::string> warnings;
};

struct EvaluateOptions {
  bool preprocess = false;  // align_face before inference; needs landmark paths
  AlignConfig align{};
};

// Classifies every manifest entry once. Unreadable images are skipped and
// recorded; a missing landmark file with preprocessing enabled is an error.
inline EvaluationResult evaluate(const DatasetManifest& manifest, const ClassifierGateway& gateway,
                                 const EvaluateOptions& options = {}) {
  if (gateway.classes() != manifest.classes) {
    throw InvalidArgument("evaluate: classifier classes do not match the manifest class list");
  }
  EvaluationResult result{ConfusionMatrix(manifest.classes), {}, {}, {}};
  std::vector<Image> images;
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const auto& e = manifest.entries[i];
    if (options.preprocess && e.landmarks.empty()) {
      throw InvalidArgument("evaluate: preprocessing needs landmarks for " + e.image);
    }
    Image img;
    try {
      img = read_png(manifest.resolve(e.image));
    } catch (const Error& err) {
      result.skipped.push_back({e.image, err.what()});
      result.warnings.push_back("skipped unreadable image " + e.image);
      continue;
    }
    if (options.preprocess) {
      const auto lm = read_pts(manifest.resolve(e.landmarks));
      auto aligned = align_face(img, lm, options.align);
      for (auto& w : aligned.warnings) result.warnings.push_back(e.image + ": " + w);
      img = std::move(aligned.image);
    }
    images.push_back(std::move(img));
    kept.push_back(i);
  }
  const auto preds = gateway.predict_batch(images);
  for (std::size_t k = 0; k < kept.size(); ++k) {
    const auto& e = manifest.entries[kept[k]];
    PredictionRecord r{e.image, manifest.classes.index_of(e.label), preds[k], preds[k].argmax()};
    result.matrix.add(r.label, r.predicted);
    result.records.push_back(std::move(r));
  }
  return result;
}

// Seeded shuffle, then contiguous folds; the first n % k folds get one extra item.
inline std::vector<DatasetManifest> kfold_split(const DatasetManifest& manifest, std::size_t k, std::uint64_t seed) {
  const std::size_t n = manifest.entries.size();
  if (k < 2) throw InvalidArgument("kfold_split: k must be at least 2");
  if (k > n) throw InvalidArgument("kfold_split: k exceeds the number of entries");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
  std::vector<DatasetManifest> folds;
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = n / k + (f < n % k ? 1 : 0);
    DatasetManifest fold{manifest.classes, {}, manifest.base_dir};
    for (std::size_t j = 0; j < size; ++j) fold.entries.push_back(manifest.entries[order[pos++]]);
    folds.push_back(std::move(fold));
  }
  return folds;
}

}  // namespace fxai
