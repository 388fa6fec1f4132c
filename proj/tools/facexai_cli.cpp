// facexai: align faces, classify datasets, explain predictions and build
// landmark-normalized global heatmaps.
#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "facexai/facexai.hpp"
#include "facexai/synthetic.hpp"

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;
using namespace fxai;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

// Failure that maps to a usage exit code.
class UsageError : public Error {
 public:
  using Error::Error;
};

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

void write_jsonl(const fs::path& path, const std::vector<Json>& rows) {
  std::string text;
  for (const auto& r : rows) text += r.dump() + "\n";
  write_text_file(path, text);
}

void write_json(const fs::path& path, const Json& j) { write_text_file(path, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------
// Classifier selection

struct ModelOptions {
  std::string oracle = "mean-brightness";
  std::string backend;
  std::string classes = "angry,happy,sad";
  std::size_t batch_size = 32;
  int jobs = 1;
};

InputSize parse_size(const std::string& s) {
  const auto x = s.find('x');
  try {
    if (x == std::string::npos) throw std::invalid_argument(s);
    return {std::stoi(s.substr(0, x)), std::stoi(s.substr(x + 1))};
  } catch (const std::exception&) {
    throw UsageError("bad size '" + s + "', expected WxH");
  }
}

// Builds classifiers from `--backend` or an `--oracle` spec of the form
// kind[:key=value,...]. Oracle keys: target=<class>, size=WxH,
// mask=<png> and part=brows|eyes|mouth|class (region-indicator),
// weights=<xhm>|zero (linear-weights).
class ModelFactory {
 public:
  explicit ModelFactory(const ModelOptions& opt) : gateway_config_{opt.batch_size, opt.jobs} {
    if (opt.jobs < 1) throw UsageError("--jobs must be at least 1");
    if (opt.batch_size < 1) throw UsageError("--batch-size must be at least 1");
    if (!opt.backend.empty()) {
      backend_ = std::make_shared<SubprocessClassifier>(opt.backend);
      classes_ = backend_->classes();
      return;
    }
    classes_ = ClassList(split(opt.classes, ','));
    const auto colon = opt.oracle.find(':');
    const std::string kind = opt.oracle.substr(0, colon);
    std::map<std::string, std::string> kv;
    if (colon != std::string::npos) {
      for (const auto& item : split(opt.oracle.substr(colon + 1), ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw UsageError("oracle option '" + item + "' is not key=value");
        kv[item.substr(0, eq)] = item.substr(eq + 1);
      }
    }
    auto take = [&](const std::string& key) -> std::optional<std::string> {
      auto it = kv.find(key);
      if (it == kv.end()) return std::nullopt;
      std::string v = it->second;
      kv.erase(it);
      return v;
    };
    if (auto t = take("target")) target_ = classes_.index_of(*t);
    std::optional<InputSize> size;
    if (auto s = take("size")) size = parse_size(*s);

    if (kind == "mean-brightness") {
      spec_.kind = OracleKind::kMeanBrightness;
    } else if (kind == "region-indicator") {
      spec_.kind = OracleKind::kRegionIndicator;
      const auto mask = take("mask");
      const auto part = take("part");
      if (mask && part) throw UsageError("region-indicator takes either mask= or part=, not both");
      if (mask) {
        const Image m = read_png(*mask);
        BinaryMask bits{m.width(), m.height(), std::vector<std::uint8_t>(m.pixel_count(), 0)};
        for (std::size_t p = 0; p < m.pixel_count(); ++p) bits.bits[p] = m.intensity(p) > 0.5f ? 1 : 0;
        if (!size) size = InputSize{m.width(), m.height()};
        spec_.region = std::move(bits);
      } else {
        part_ = part.value_or("class");
        if (part_ != "brows" && part_ != "eyes" && part_ != "mouth" && part_ != "class") {
          throw UsageError("unknown face part '" + part_ + "'");
        }
      }
    } else if (kind == "linear-weights") {
      spec_.kind = OracleKind::kLinearWeights;
      const auto w = take("weights");
      if (!w) throw UsageError("linear-weights needs weights=<xhm>|zero");
      if (*w != "zero") {
        spec_.weights = read_xhm(*w);
        if (!size) size = InputSize{spec_.weights->width(), spec_.weights->height()};
      }
    } else {
      throw UsageError("unknown oracle kind '" + kind + "'");
    }
    if (!kv.empty()) throw UsageError("unknown oracle option '" + kv.begin()->first + "'");
    spec_.size = size.value_or(InputSize{synthetic::kSide, synthetic::kSide});
    if (spec_.kind == OracleKind::kLinearWeights && !spec_.weights) {
      spec_.weights = Field(spec_.size.width, spec_.size.height, 0.0f);
    }
  }

  const ClassList& classes() const { return classes_; }
  bool landmark_keyed() const { return !part_.empty(); }
  // True when an oracle's scored class follows the class being explained.
  bool follows_class() const { return !backend_ && !target_; }

  ClassifierGateway gateway(std::size_t explained_class, const LandmarkSet* landmarks) const {
    if (backend_) return ClassifierGateway(backend_, gateway_config_);
    OracleSpec spec = spec_;
    spec.target_class = target_.value_or(explained_class);
    if (landmark_keyed()) {
      if (!landmarks) throw InvalidArgument("part-keyed region oracle needs landmarks");
      const auto part = part_ == "brows"  ? synthetic::Part::kBrows
                        : part_ == "eyes" ? synthetic::Part::kEyes
                        : part_ == "mouth"
                            ? synthetic::Part::kMouth
                            : synthetic::part_for_class(spec.target_class);
      spec.region = synthetic::part_region(*landmarks, part, spec.size.width, spec.size.height);
    }
    return ClassifierGateway(make_oracle(std::move(spec), classes_), gateway_config_);
  }

 private:
  GatewayConfig gateway_config_;
  std::shared_ptr<Classifier> backend_;
  ClassList classes_;
  OracleSpec spec_;
  std::optional<std::size_t> target_;
  std::string part_;
};

void add_model_options(CLI::App* cmd, ModelOptions& m) {
  cmd->add_option("--oracle", m.oracle, "Built-in oracle classifier spec");
  cmd->add_option("--backend", m.backend, "Command line of a wire-protocol model process (overrides --oracle)");
  cmd->add_option("--classes", m.classes, "Comma-separated class names for oracles");
  cmd->add_option("--batch-size", m.batch_size, "Images per backend request");
  cmd->add_option("--jobs", m.jobs, "Worker threads");
}

struct AlignOptions {
  int side = 224;
  double margin = 0.2;
};

void add_align_options(CLI::App* cmd, AlignOptions& a) {
  cmd->add_option("--side", a.side, "Aligned output side in pixels");
  cmd->add_option("--margin", a.margin, "Crop margin per side, as a fraction of the landmark box");
}

AlignConfig align_config(const AlignOptions& a) { return {.out_side = a.side, .margin = a.margin}; }

std::string stem_of(const std::string& image) { return fs::path(image).stem().string(); }

void check_unique_stems(const DatasetManifest& m) {
  std::set<std::string> seen;
  for (const auto& e : m.entries) {
    if (!seen.insert(stem_of(e.image)).second) throw InvalidArgument("duplicate image stem '" + stem_of(e.image) + "'");
  }
}

DatasetManifest load_manifest(const std::string& path, const ClassList& classes) {
  auto m = read_manifest(path, classes);
  if (m.entries.empty()) throw InvalidArgument("manifest " + path + " has no entries");
  return m;
}

// ---------------------------------------------------------------------------
// align

int cmd_align(const std::string& manifest_path, const fs::path& out, const AlignOptions& opt,
              const std::string& classes) {
  const auto m = load_manifest(manifest_path, ClassList(split(classes, ',')));
  check_unique_stems(m);
  fs::create_directories(out);
  DatasetManifest aligned{m.classes, {}, out};
  std::vector<Json> skipped;
  std::vector<std::string> warnings;
  for (const auto& e : m.entries) {
    try {
      if (e.landmarks.empty()) throw InvalidArgument("no landmark file");
      const Image img = read_png(m.resolve(e.image));
      const auto r = align_face(img, read_pts(m.resolve(e.landmarks)), align_config(opt));
      const std::string stem = stem_of(e.image);
      write_png(out / (stem + ".png"), r.image);
      write_pts(out / (stem + ".pts"), r.landmarks);
      for (const auto& w : r.warnings) warnings.push_back(e.image + ": " + w);
      aligned.entries.push_back({stem + ".png", e.label, stem + ".pts"});
    } catch (const Error& err) {
      skipped.push_back({{"image", e.image}, {"reason", err.what()}});
      std::cerr << "warning: skipped " << e.image << ": " << err.what() << "\n";
    }
  }
  write_text_file(out / "manifest.csv", format_manifest(aligned));
  write_json(out / "summary.json", {{"total", m.entries.size()},
                                    {"aligned", aligned.entries.size()},
                                    {"skipped", skipped.size()},
                                    {"skipped_rows", skipped},
                                    {"warnings", warnings}});
  if (aligned.entries.empty()) {
    std::cerr << "error: no image could be aligned\n";
    return kExitFailure;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// explain

struct ExplainOptions {
  std::string method = "lime";
  std::string cls = "all";
  std::uint64_t seed = 1;
  bool align = false;
  AlignOptions align_opt;
  std::size_t n_samples = 1000;
  double kernel_width = 0.25;
  double ridge = 1.0;
  float occlusion_color = 0.0f;
  int regions = 30;
  double compactness = 10.0;
  std::size_t n_masks = 4000;
  int grid_size = 7;
  double keep_prob = 0.5;
  float occlusion_value = 0.5f;
};

Json method_params(const ExplainOptions& o) {
  if (o.method == "lime") {
    return {{"n_samples", o.n_samples},     {"kernel_width", o.kernel_width}, {"ridge", o.ridge},
            {"occlusion_color", o.occlusion_color}, {"regions", o.regions},   {"compactness", o.compactness}};
  }
  return {{"n_masks", o.n_masks},
          {"grid_size", o.grid_size},
          {"keep_prob", o.keep_prob},
          {"occlusion_value", o.occlusion_value}};
}

std::vector<std::size_t> requested_classes(const std::string& spec, const ClassList& classes) {
  std::vector<std::size_t> out;
  if (spec == "all") {
    for (std::size_t c = 0; c < classes.size(); ++c) out.push_back(c);
    return out;
  }
  for (const auto& name : split(spec, ',')) out.push_back(classes.index_of(name));
  return out;
}

int cmd_explain(const std::string& manifest_path, const fs::path& out, const ModelOptions& mopt,
                const ExplainOptions& opt) {
  const ModelFactory factory(mopt);
  const auto m = load_manifest(manifest_path, factory.classes());
  check_unique_stems(m);
  const bool by_label = opt.cls == "label";
  const auto targets = by_label ? requested_classes("all", factory.classes()) : requested_classes(opt.cls, factory.classes());
  fs::create_directories(out);

  const LimeParams lime{.n_samples = opt.n_samples,
                        .kernel_width = opt.kernel_width,
                        .ridge = opt.ridge,
                        .occlusion_color = {opt.occlusion_color, opt.occlusion_color, opt.occlusion_color},
                        .seed = opt.seed};
  const SlicParams slic_params{.target_regions = opt.regions, .compactness = opt.compactness, .seed = opt.seed};
  const RiseParams rise{.n_masks = opt.n_masks,
                        .grid_size = opt.grid_size,
                        .keep_prob = opt.keep_prob,
                        .occlusion_value = opt.occlusion_value,
                        .seed = opt.seed};

  // One pass scores all requested classes unless the oracle is rebuilt per class.
  auto passes_for = [&](const std::vector<std::size_t>& wanted) {
    std::vector<std::vector<std::size_t>> passes;
    if (factory.follows_class()) {
      for (std::size_t c : wanted) passes.push_back({c});
    } else {
      passes.push_back(wanted);
    }
    return passes;
  };

  std::map<std::size_t, std::string> index;
  for (std::size_t c : targets) index[c] = "image,label,map,landmarks\n";
  std::vector<Json> skipped;
  for (const auto& e : m.entries) {
    try {
      Image img = read_png(m.resolve(e.image));
      std::optional<LandmarkSet> lm;
      if (!e.landmarks.empty()) lm = read_pts(m.resolve(e.landmarks));
      if (opt.align) {
        if (!lm) throw InvalidArgument("--align needs a landmark file");
        auto r = align_face(img, *lm, align_config(opt.align_opt));
        img = std::move(r.image);
        lm = r.landmarks;
      }
      const std::string stem = stem_of(e.image);
      std::optional<SegmentationMap> seg;
      const auto passes = passes_for(by_label ? std::vector<std::size_t>{m.classes.index_of(e.label)} : targets);
      for (const auto& pass : passes) {
        const auto gw = factory.gateway(pass.front(), lm ? &*lm : nullptr);
        std::vector<RelevanceMap> maps;
        Json extra = Json::object();
        if (opt.method == "lime") {
          if (!seg) seg = slic(img, slic_params);
          auto ex = explain_lime(img, *seg, gw, pass, lime);
          maps = std::move(ex.maps);
          extra["region_count"] = ex.region_count;
        } else {
          maps = explain_rise(img, gw, pass, rise);
        }
        for (std::size_t k = 0; k < pass.size(); ++k) {
          const std::string& cname = factory.classes()[pass[k]];
          const std::string base = stem + "_" + opt.method + "_" + cname;
          write_xhm(out / (base + ".xhm"), maps[k]);
          write_gray_png(out / (base + ".png"), normalize_relevance(maps[k]));
          Json meta{{"image", e.image},
                    {"label", e.label},
                    {"class", cname},
                    {"method", opt.method},
                    {"seed", opt.seed},
                    {"width", img.width()},
                    {"height", img.height()},
                    {"aligned", opt.align},
                    {"params", method_params(opt)}};
          meta.update(extra);
          write_json(out / (base + ".json"), meta);
          index[pass[k]] += detail::csv_field(e.image) + "," + detail::csv_field(e.label) + "," +
                            detail::csv_field(base + ".xhm") + "," + (lm ? stem + ".pts" : std::string()) + "\n";
        }
      }
      if (lm) write_pts(out / (stem + ".pts"), *lm);
    } catch (const BackendDied&) {
      throw;
    } catch (const ProtocolError&) {
      throw;
    } catch (const Error& err) {
      skipped.push_back({{"image", e.image}, {"reason", err.what()}});
      std::cerr << "warning: skipped " << e.image << ": " << err.what() << "\n";
    }
  }
  for (const auto& [c, text] : index) {
    if (by_label && std::ranges::count(text, '\n') == 1) continue;
    write_text_file(out / ("index_" + opt.method + "_" + factory.classes()[c] + ".csv"), text);
  }
  write_jsonl(out / ("skipped_" + opt.method + ".jsonl"), skipped);
  return skipped.empty() ? 0 : kExitFailure;
}

// ---------------------------------------------------------------------------
// evaluate / folds

struct EvaluateCliOptions {
  bool align = false;
  AlignOptions align_opt;
  std::size_t kfold = 0;
  std::uint64_t seed = 1;
};

DatasetManifest absolute_paths(const DatasetManifest& m) {
  DatasetManifest out{m.classes, {}, {}};
  for (const auto& e : m.entries) {
    out.entries.push_back({fs::absolute(m.resolve(e.image)).lexically_normal().string(), e.label,
                           e.landmarks.empty() ? "" : fs::absolute(m.resolve(e.landmarks)).lexically_normal().string()});
  }
  return out;
}

void write_folds(const DatasetManifest& m, const fs::path& out, std::size_t k, std::uint64_t seed) {
  const auto folds = kfold_split(absolute_paths(m), k, seed);
  for (std::size_t f = 0; f < folds.size(); ++f) {
    write_text_file(out / ("fold_" + std::to_string(f + 1) + ".csv"), format_manifest(folds[f]));
  }
}

Json prob_object(const ClassList& classes, const std::vector<double>& v) {
  Json j = Json::object();
  for (std::size_t c = 0; c < classes.size(); ++c) j[classes[c]] = v[c];
  return j;
}

int cmd_evaluate(const std::string& manifest_path, const fs::path& out, const ModelOptions& mopt,
                 const EvaluateCliOptions& opt) {
  const ModelFactory factory(mopt);
  if (factory.landmark_keyed()) throw UsageError("part-keyed region oracles are per image; use a mask= region");
  const auto m = load_manifest(manifest_path, factory.classes());
  fs::create_directories(out);
  const auto r = evaluate(m, factory.gateway(0, nullptr),
                          {.preprocess = opt.align, .align = align_config(opt.align_opt)});
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";

  write_text_file(out / "confusion.csv", r.matrix.to_csv());
  std::vector<Json> records;
  for (const auto& rec : r.records) {
    records.push_back({{"image", rec.image},
                       {"label", m.classes[rec.label]},
                       {"predicted", m.classes[rec.predicted]},
                       {"probs", rec.prediction.probs}});
  }
  write_jsonl(out / "records.jsonl", records);
  std::vector<Json> skipped;
  for (const auto& s : r.skipped) skipped.push_back({{"image", s.image}, {"reason", s.reason}});
  write_jsonl(out / "skipped.jsonl", skipped);
  if (r.records.empty()) {
    std::cerr << "error: no image could be classified\n";
    return kExitFailure;
  }
  const auto met = metrics(r.matrix);
  Json undefined = Json::array();
  for (std::size_t c = 0; c < m.classes.size(); ++c) {
    if (met.recall_undefined[c]) undefined.push_back(m.classes[c]);
  }
  write_json(out / "metrics.json", {{"classes", m.classes.names()},
                                    {"total", r.matrix.total()},
                                    {"skipped", r.skipped.size()},
                                    {"accuracy", met.accuracy},
                                    {"recall", prob_object(m.classes, met.recall)},
                                    {"recall_undefined", undefined},
                                    {"predicted_share", prob_object(m.classes, met.predicted_share)}});
  if (opt.kfold > 0) write_folds(m, out, opt.kfold, opt.seed);
  std::cout << "accuracy " << met.accuracy << " over " << r.matrix.total() << " images\n";
  return 0;
}

// ---------------------------------------------------------------------------
// aggregate

struct AggregateOptions {
  std::string method = "all";
  std::string cls = "all";
  std::string records;
  std::string policy = "true-positive";
  std::string template_pts;
  std::string classes = "angry,happy,sad";
  std::string model_id = "model";
  std::string dataset_id = "dataset";
  int side = 224;
  int jobs = 1;
};

struct IndexRow {
  std::string image;
  std::string label;
  fs::path map;
  fs::path landmarks;
};

std::vector<IndexRow> read_index(const fs::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  std::vector<IndexRow> rows;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto f = detail::split_csv_line(trim(line));
    if (f.size() != 4) throw ParseError(path.string() + ": expected 4 fields");
    if (f[3].empty()) throw InvalidArgument(path.string() + ": " + f[0] + " has no landmarks");
    rows.push_back({f[0], f[1], path.parent_path() / f[2], path.parent_path() / f[3]});
  }
  return rows;
}

std::map<std::string, PredictionRecord> read_records(const fs::path& path, const ClassList& classes) {
  std::map<std::string, PredictionRecord> out;
  std::istringstream in(read_text_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    try {
      const Json j = Json::parse(line);
      PredictionRecord r{j.at("image").get<std::string>(), classes.index_of(j.at("label").get<std::string>()),
                         {j.at("probs").get<std::vector<double>>()}, 0};
      r.predicted = classes.index_of(j.at("predicted").get<std::string>());
      out[r.image] = std::move(r);
    } catch (const Json::exception& e) {
      throw ParseError(path.string() + ": " + e.what());
    }
  }
  return out;
}

int cmd_aggregate(const fs::path& expl_dir, const fs::path& out, const AggregateOptions& opt) {
  const ClassList classes(split(opt.classes, ','));
  const SelectionPolicy policy = parse_selection_policy(opt.policy);
  std::optional<std::map<std::string, PredictionRecord>> records;
  if (!opt.records.empty()) {
    records = read_records(opt.records, classes);
  } else if (policy != SelectionPolicy::kGroundTruth) {
    throw UsageError("--policy " + opt.policy + " needs --records");
  }

  // index files grouped by method, in name order
  std::map<std::string, std::map<std::string, fs::path>> indexes;
  for (const auto& entry : fs::directory_iterator(expl_dir)) {
    const std::string name = entry.path().filename().string();
    if (!name.starts_with("index_") || entry.path().extension() != ".csv") continue;
    const auto parts = split(entry.path().stem().string().substr(6), '_');
    if (parts.size() < 2) continue;
    const std::string method = parts[0];
    const std::string cname = entry.path().stem().string().substr(6 + method.size() + 1);
    if (opt.method != "all" && method != opt.method) continue;
    if (opt.cls != "all" && cname != opt.cls) continue;
    indexes[method][cname] = entry.path();
  }
  if (indexes.empty()) throw InvalidArgument("no explanation index found in " + expl_dir.string());

  fs::create_directories(out);
  int status = 0;
  for (const auto& [method, by_class] : indexes) {
    CanonicalTemplate tpl;
    if (!opt.template_pts.empty()) {
      tpl = {opt.side, read_pts(opt.template_pts)};
    } else {
      // Every explained image contributes once, whatever the class.
      std::map<std::string, LandmarkSet> shapes;
      for (const auto& entry : fs::directory_iterator(expl_dir)) {
        const std::string name = entry.path().filename().string();
        if (!name.starts_with("index_" + method + "_") || entry.path().extension() != ".csv") continue;
        for (const auto& row : read_index(entry.path())) {
          if (!shapes.contains(row.image)) shapes.emplace(row.image, read_pts(row.landmarks));
        }
      }
      std::vector<LandmarkSet> sets;
      for (auto& [image, lm] : shapes) sets.push_back(lm);
      tpl = procrustes_mean(sets, {.side = opt.side});
    }
    write_pts(out / ("template_" + method + ".pts"), tpl.points);

    for (const auto& [cname, path] : by_class) {
      const auto rows = read_index(path);
      std::vector<PredictionRecord> recs;
      for (const auto& row : rows) {
        if (records) {
          auto it = records->find(row.image);
          if (it == records->end()) throw InvalidArgument("no prediction record for " + row.image);
          recs.push_back(it->second);
        } else {
          recs.push_back({row.image, classes.index_of(row.label), {}, 0});
        }
      }
      const auto chosen =
          recs.empty() ? std::vector<std::size_t>{} : select_positives(recs, classes.index_of(cname), policy);
      if (chosen.empty()) {
        std::cerr << "error: empty selection for " << method << " class " << cname << " under policy "
                  << to_string(policy) << "\n";
        status = kExitFailure;
        continue;
      }
      std::vector<AtlasItem> items;
      Json used = Json::array();
      for (std::size_t i : chosen) {
        items.push_back({read_xhm(rows[i].map), read_pts(rows[i].landmarks)});
        used.push_back(rows[i].image);
      }
      const auto g =
          aggregate_global(items, tpl, {opt.model_id, opt.dataset_id, method, cname, to_string(policy)}, opt.jobs);
      const fs::path stem = out / ("global_" + method + "_" + cname);
      write_heatmap_set(stem, g.map, true);
      write_json(stem.string() + ".json", {{"count", g.count},
                                           {"provenance",
                                            {{"model_id", g.provenance.model_id},
                                             {"dataset_id", g.provenance.dataset_id},
                                             {"method", g.provenance.method},
                                             {"class", g.provenance.class_name},
                                             {"policy", g.provenance.policy}}},
                                           {"template", "template_" + method + ".pts"},
                                           {"images", used}});
    }
  }
  return status;
}

// ---------------------------------------------------------------------------
// synth

struct SynthOptions {
  std::size_t count = 30;
  std::uint64_t seed = 1;
  std::string classes = "angry,happy,sad";
  double min_scale = 0.85;
  double max_scale = 1.1;
  double max_rotation = 15.0;
  double max_translation = 15.0;
};

int cmd_synth(const fs::path& out, const SynthOptions& opt) {
  const ClassList classes(split(opt.classes, ','));
  fs::create_directories(out);
  Rng rng(opt.seed);
  DatasetManifest m{classes, {}, out};
  const synthetic::JitterRange range{opt.min_scale, opt.max_scale, opt.max_rotation, opt.max_translation};
  for (std::size_t i = 0; i < opt.count; ++i) {
    const auto pose = synthetic::random_pose(rng, range);
    const auto face = synthetic::render(pose, synthetic::random_appearance(rng));
    char name[32];
    std::snprintf(name, sizeof name, "face_%03zu", i);
    write_png(out / (std::string(name) + ".png"), face.image);
    write_pts(out / (std::string(name) + ".pts"), face.landmarks);
    m.entries.push_back({std::string(name) + ".png", classes[i % classes.size()], std::string(name) + ".pts"});
  }
  write_text_file(out / "manifest.csv", format_manifest(m));
  return 0;
}

// ---------------------------------------------------------------------------
// Configuration files: key=value lines naming long options of the command.
// Values given on the command line win.

std::vector<std::pair<std::string, std::string>> read_config(const fs::path& path) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(read_text_file(path));
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError(path.string() + ":" + std::to_string(n) + ": expected key=value");
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

bool given_on_command_line(const std::vector<std::string>& args, const std::string& key) {
  const std::string flag = "--" + key;
  return std::ranges::any_of(args, [&](const std::string& a) { return a == flag || a.starts_with(flag + "="); });
}

std::vector<std::string> merge_config(CLI::App& app, std::vector<std::string> args) {
  std::string config;
  CLI::App* cmd = nullptr;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config = args[i + 1];
    if (args[i].starts_with("--config=")) config = args[i].substr(9);
    if (!cmd && !args[i].starts_with("-")) {
      try {
        cmd = app.get_subcommand(args[i]);
      } catch (const CLI::OptionNotFound&) {
      }
    }
  }
  if (config.empty() || !cmd) return args;
  for (const auto& [key, value] : read_config(config)) {
    CLI::Option* opt = nullptr;
    try {
      opt = cmd->get_option("--" + key);
    } catch (const CLI::OptionNotFound&) {
      throw UsageError("config key '" + key + "' is not an option of " + cmd->get_name());
    }
    if (given_on_command_line(args, key) || value.empty()) continue;
    if (opt->get_items_expected_min() == 0) {
      if (value == "true") args.push_back("--" + key);
    } else {
      args.push_back("--" + key + "=" + value);
    }
  }
  return args;
}

// The effective configuration of `cmd`, one key=value line per option.
std::string resolved_config(const CLI::App* cmd) {
  std::string text;
  for (const CLI::Option* opt : cmd->get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || name == "config" || name.empty()) continue;
    std::string value;
    if (opt->get_items_expected_min() == 0) {
      value = opt->count() > 0 ? "true" : "false";
    } else if (opt->count() > 0) {
      for (const auto& r : opt->results()) value += (value.empty() ? "" : ",") + r;
    } else {
      value = opt->get_default_str();
    }
    text += name + "=" + value + "\n";
  }
  return text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Facial expression classifier auditing: alignment, evaluation, LIME/RISE explanations, global heatmaps"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  std::string manifest, out, expl_dir, config;
  ModelOptions model;
  AlignOptions align_opt;
  ExplainOptions ex;
  EvaluateCliOptions ev;
  AggregateOptions ag;
  SynthOptions sy;
  std::size_t folds_k = 5;
  std::uint64_t folds_seed = 1;

  auto* align = app.add_subcommand("align", "Rotate, crop and resize faces from their landmarks");
  align->add_option("--manifest", manifest, "Dataset manifest CSV (image,label,landmarks)")->required();
  align->add_option("--out", out, "Output directory")->required();
  add_align_options(align, align_opt);
  align->add_option("--classes", model.classes, "Comma-separated class names");

  auto* explain = app.add_subcommand("explain", "Explain every manifest image with LIME or RISE");
  explain->add_option("--manifest", manifest, "Dataset manifest CSV")->required();
  explain->add_option("--out", out, "Output directory")->required();
  add_model_options(explain, model);
  explain->add_option("--method", ex.method, "lime or rise")->check(CLI::IsMember({"lime", "rise"}));
  explain->add_option("--class", ex.cls, "Class to explain, comma list, 'all', or 'label' for each image's own label");
  explain->add_option("--seed", ex.seed, "Sampling seed");
  explain->add_flag("--align", ex.align, "Align faces before explaining");
  add_align_options(explain, ex.align_opt);
  explain->add_option("--n-samples", ex.n_samples, "LIME perturbation samples");
  explain->add_option("--kernel-width", ex.kernel_width, "LIME kernel width");
  explain->add_option("--ridge", ex.ridge, "LIME ridge penalty");
  explain->add_option("--occlusion-color", ex.occlusion_color, "LIME occlusion gray level");
  explain->add_option("--regions", ex.regions, "SLIC target region count");
  explain->add_option("--compactness", ex.compactness, "SLIC compactness");
  explain->add_option("--n-masks", ex.n_masks, "RISE mask count");
  explain->add_option("--grid-size", ex.grid_size, "RISE grid cells per side");
  explain->add_option("--keep-prob", ex.keep_prob, "RISE cell keep probability");
  explain->add_option("--occlusion-value", ex.occlusion_value, "RISE occlusion gray level");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "Classify a dataset and report confusion matrix and metrics");
  evaluate_cmd->add_option("--manifest", manifest, "Dataset manifest CSV")->required();
  evaluate_cmd->add_option("--out", out, "Output directory")->required();
  add_model_options(evaluate_cmd, model);
  evaluate_cmd->add_flag("--align", ev.align, "Align faces before inference");
  add_align_options(evaluate_cmd, ev.align_opt);
  evaluate_cmd->add_option("--kfold", ev.kfold, "Also write this many fold manifests (0 = none)");
  evaluate_cmd->add_option("--seed", ev.seed, "Fold shuffle seed");

  auto* aggregate = app.add_subcommand("aggregate", "Average explanations in a landmark-normalized frame");
  aggregate->add_option("--explanations", expl_dir, "Directory written by explain")->required();
  aggregate->add_option("--out", out, "Output directory")->required();
  aggregate->add_option("--method", ag.method, "lime, rise or all")->check(CLI::IsMember({"lime", "rise", "all"}));
  aggregate->add_option("--class", ag.cls, "Class name or 'all'");
  aggregate->add_option("--records", ag.records, "records.jsonl written by evaluate");
  aggregate->add_option("--policy", ag.policy, "ground-truth, predicted or true-positive");
  aggregate->add_option("--template", ag.template_pts, "Canonical landmark template (.pts); default is the Procrustes mean");
  aggregate->add_option("--side", ag.side, "Canonical frame side in pixels");
  aggregate->add_option("--classes", ag.classes, "Comma-separated class names");
  aggregate->add_option("--model-id", ag.model_id, "Model identifier for provenance");
  aggregate->add_option("--dataset-id", ag.dataset_id, "Dataset identifier for provenance");
  aggregate->add_option("--jobs", ag.jobs, "Worker threads");

  auto* folds = app.add_subcommand("folds", "Split a manifest into k seeded folds");
  folds->add_option("--manifest", manifest, "Dataset manifest CSV")->required();
  folds->add_option("--out", out, "Output directory")->required();
  folds->add_option("--k", folds_k, "Number of folds");
  folds->add_option("--seed", folds_seed, "Shuffle seed");
  folds->add_option("--classes", model.classes, "Comma-separated class names");

  auto* synth = app.add_subcommand("synth", "Render a synthetic blob-face dataset with landmarks");
  synth->add_option("--out", out, "Output directory")->required();
  synth->add_option("--count", sy.count, "Number of faces");
  synth->add_option("--seed", sy.seed, "Pose seed");
  synth->add_option("--classes", sy.classes, "Labels assigned round robin");
  synth->add_option("--min-scale", sy.min_scale, "Smallest face scale");
  synth->add_option("--max-scale", sy.max_scale, "Largest face scale");
  synth->add_option("--max-rotation", sy.max_rotation, "Largest rotation in degrees");
  synth->add_option("--max-translation", sy.max_translation, "Largest translation in pixels");

  for (auto* cmd : {align, explain, evaluate_cmd, aggregate, folds, synth}) {
    cmd->add_option("--config", config, "key=value file; command-line flags take precedence");
  }

  try {
    std::vector<std::string> args(argv, argv + argc);
    args = merge_config(app, std::move(args));
    std::vector<char*> cargs;
    for (auto& a : args) cargs.push_back(a.data());
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  CLI::App* cmd = app.get_subcommands().front();
  try {
    fs::create_directories(out);
    write_text_file(fs::path(out) / (cmd->get_name() + ".config"), resolved_config(cmd));
    if (cmd == align) return cmd_align(manifest, out, align_opt, model.classes);
    if (cmd == explain) return cmd_explain(manifest, out, model, ex);
    if (cmd == evaluate_cmd) return cmd_evaluate(manifest, out, model, ev);
    if (cmd == aggregate) return cmd_aggregate(expl_dir, out, ag);
    if (cmd == synth) return cmd_synth(out, sy);
    const auto m = load_manifest(manifest, ClassList(split(model.classes, ',')));
    write_folds(m, out, folds_k, folds_seed);
    return 0;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}
