#include "prism/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <set>

#include <nlohmann/json.hpp>

#include "prism/csv.hpp"
#include "prism/errors.hpp"
#include "prism/fsutil.hpp"

namespace prism::pipeline {

using nlohmann::json;

const char* cv_mode_name(CvMode m) {
  switch (m) {
    case CvMode::stratified: return "stratified";
    case CvMode::naive: return "naive";
    case CvMode::kmeans: return "kmeans";
  }
  return "?";
}

CvMode parse_cv_mode(const std::string& s) {
  if (s == "stratified") return CvMode::stratified;
  if (s == "naive") return CvMode::naive;
  if (s == "kmeans") return CvMode::kmeans;
  throw ConfigError("unknown cv mode: '" + s + "'");
}

std::uint64_t derived_cohort_seed(std::uint64_t run_seed) {
  return SplitRng(run_seed).split("cohort").seed();
}

namespace {

json run_config_to_json(const RunConfig& c) {
  json cohort_json = json::parse(cohort::cohort_config_to_json_text(c.cohort));
  cohort_json.erase("seed");  // derived from the run seed
  return json{
      {"cohort", cohort_json},
      {"model",
       {{"d_prime", c.d_prime},
        {"d", c.d},
        {"l", c.l},
        {"fusion_mode", fusion::mode_name(c.fusion_mode)}}},
      {"hyper",
       {{"lr", c.hyper.lr}, {"l1", c.hyper.l1}, {"epochs", c.hyper.epochs}}},
      {"k_folds", c.k_folds},
      {"morph",
       {{"h1", c.morph.h1},
        {"h2", c.morph.h2},
        {"lr", c.morph.lr},
        {"epochs", c.morph.epochs},
        {"patience", c.morph.patience}}},
      {"cv_mode", cv_mode_name(c.cv_mode)},
      {"kmeans_clusters", c.kmeans_clusters},
      {"threshold", c.threshold},
      {"subgroup_columns", c.subgroup_columns},
      {"seed", c.seed},
  };
}

void reject_unknown(const json& j, const json& reference,
                    const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (!reference.contains(key)) {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
  }
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  json reference = run_config_to_json(c);
  reject_unknown(j, reference, "run config");
  try {
    if (j.contains("cohort")) {
      if (j["cohort"].contains("seed")) {
        throw ConfigError(
            "run config: cohort.seed is derived from the run seed; set "
            "top-level 'seed' instead");
      }
      c.cohort = cohort::cohort_config_from_json_text(j["cohort"].dump());
    }
    if (j.contains("model")) {
      const json& m = j["model"];
      reject_unknown(m, reference["model"], "run config model");
      if (m.contains("d_prime")) c.d_prime = m["d_prime"];
      if (m.contains("d")) c.d = m["d"];
      if (m.contains("l")) c.l = m["l"];
      if (m.contains("fusion_mode")) {
        c.fusion_mode = fusion::parse_mode(m["fusion_mode"]);
      }
    }
    if (j.contains("hyper")) {
      const json& h = j["hyper"];
      reject_unknown(h, reference["hyper"], "run config hyper");
      if (h.contains("lr")) c.hyper.lr = h["lr"];
      if (h.contains("l1")) c.hyper.l1 = h["l1"];
      if (h.contains("epochs")) c.hyper.epochs = h["epochs"];
    }
    if (j.contains("k_folds")) c.k_folds = j["k_folds"];
    if (j.contains("morph")) {
      const json& m = j["morph"];
      reject_unknown(m, reference["morph"], "run config morph");
      if (m.contains("h1")) c.morph.h1 = m["h1"];
      if (m.contains("h2")) c.morph.h2 = m["h2"];
      if (m.contains("lr")) c.morph.lr = m["lr"];
      if (m.contains("epochs")) c.morph.epochs = m["epochs"];
      if (m.contains("patience")) c.morph.patience = m["patience"];
    }
    if (j.contains("cv_mode")) c.cv_mode = parse_cv_mode(j["cv_mode"]);
    if (j.contains("kmeans_clusters")) c.kmeans_clusters = j["kmeans_clusters"];
    if (j.contains("threshold")) c.threshold = j["threshold"];
    if (j.contains("subgroup_columns")) {
      c.subgroup_columns =
          j["subgroup_columns"].get<std::vector<std::string>>();
    }
    if (j.contains("seed")) c.seed = j["seed"];
  } catch (const json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  if (c.k_folds < 2) throw ConfigError("run config: k_folds must be >= 2");
  if (!(c.threshold >= 0.0 && c.threshold <= 1.0)) {
    throw ConfigError("run config: threshold must be in [0, 1]");
  }
  c.cohort.seed = derived_cohort_seed(c.seed);
  return c;
}

}  // namespace

RunConfig run_config_from_json_text(const std::string& text) {
  try {
    return run_config_from_json(json::parse(text));
  } catch (const json::exception& e) {
    throw ConfigError("run config: " + std::string(e.what()));
  }
}

std::string run_config_to_json_text(const RunConfig& config) {
  return run_config_to_json(config).dump(2);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return run_config_from_json_text(read_file(path));
}

ManifestBuilder::ManifestBuilder(std::string command, const RunConfig& config)
    : command_(std::move(command)),
      config_echo_(run_config_to_json_text(config)),
      seed_(config.seed) {}

void ManifestBuilder::input(const std::filesystem::path& path) {
  // Keyed by filename so a rerun into a different directory still produces
  // a byte-identical manifest.
  std::string key = path.filename().string();
  while (inputs_.contains(key)) key = "_" + key;
  inputs_[key] = file_content_hash(path);
}

void ManifestBuilder::output(const std::filesystem::path& dir,
                             const std::string& name) {
  outputs_[name] = file_content_hash(dir / name);
}

void ManifestBuilder::stage_ms(const std::string& stage, double ms) {
  stages_.emplace_back(stage, ms);
}

void ManifestBuilder::write(const std::filesystem::path& dir,
                            const std::string& name) const {
  json manifest = {
      {"tool", kToolVersion},
      {"command", command_},
      {"seed", seed_},
      {"config", json::parse(config_echo_)},
      {"inputs", inputs_},
      {"outputs", outputs_},
  };
  write_file(dir / name, manifest.dump(2) + "\n");

  if (!stages_.empty()) {
    json timings = json::object();
    for (const auto& [stage, ms] : stages_) timings[stage] = ms;
    write_file(dir / "timings.json", timings.dump(2) + "\n");
  }
}

void prepare_out_dir(const std::filesystem::path& dir, bool force) {
  namespace fs = std::filesystem;
  if (fs::exists(dir) && !fs::is_directory(dir)) {
    throw IoError("output path exists and is not a directory: " +
                  dir.string());
  }
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!force) {
      throw IoError("output directory not empty (use --force): " +
                    dir.string());
    }
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

namespace {

class StageClock {
 public:
  explicit StageClock(ManifestBuilder& manifest) : manifest_(manifest) {}

  void done(const std::string& stage) {
    auto now = std::chrono::steady_clock::now();
    double ms = std::chrono::duration<double, std::milli>(now - last_).count();
    manifest_.stage_ms(stage, ms);
    last_ = now;
  }

 private:
  ManifestBuilder& manifest_;
  std::chrono::steady_clock::time_point last_ =
      std::chrono::steady_clock::now();
};

cv::FoldAssignment build_folds(const RunConfig& config,
                               const std::vector<cohort::ClinicalRecord>& recs) {
  SplitRng folds_rng = SplitRng(config.seed).split("folds");
  switch (config.cv_mode) {
    case CvMode::stratified:
      return cv::make_folds(recs, config.k_folds, folds_rng);
    case CvMode::naive:
      return cv::naive_folds(recs, config.k_folds, folds_rng);
    case CvMode::kmeans:
      return cv::kmeans_folds(recs, config.k_folds, config.kmeans_clusters,
                              folds_rng);
  }
  throw ConfigError("unreachable cv mode");
}

cohort::LabeledPatches pool_patches(const cohort::Cohort& c) {
  std::size_t total = 0;
  for (const auto& p : c.patients) total += p.bag.n_patches();
  cohort::LabeledPatches pooled;
  pooled.features = num::Matrix(total, c.config.d_m);
  pooled.labels.reserve(total);
  std::size_t row = 0;
  for (const auto& p : c.patients) {
    for (std::size_t i = 0; i < p.bag.n_patches(); ++i, ++row) {
      for (std::size_t k = 0; k < c.config.d_m; ++k) {
        pooled.features(row, k) = p.bag.morph(i, k);
      }
      pooled.labels.push_back(p.bag.patch_class[i]);
    }
  }
  return pooled;
}

void write_morph_report(const std::filesystem::path& path,
                        const morph::MorphTrainReport& report) {
  json j = {
      {"n_train", report.n_train},
      {"n_val", report.n_val},
      {"n_test", report.n_test},
      {"best_epoch", report.best_epoch},
      {"best_val_accuracy", report.best_val_accuracy},
      {"test_accuracy", report.test_accuracy},
      {"test_macro_auc", report.test_macro_auc},
  };
  write_file(path, j.dump(2) + "\n");
}

}  // namespace

GenerateResult cmd_generate(const RunConfig& config,
                            const std::filesystem::path& out_dir, bool force) {
  prepare_out_dir(out_dir, force);
  ManifestBuilder manifest("generate", config);
  StageClock clock(manifest);

  cohort::Cohort c = cohort::generate_cohort(config.cohort);
  clock.done("generate");
  cohort::cohort_save(c, out_dir);
  clock.done("save");

  manifest.output(out_dir, "clinical.csv");
  manifest.output(out_dir, "manifest.json");  // the cohort's own manifest
  for (const auto& p : c.patients) {
    manifest.output(out_dir, p.clinical.patient_id + ".bag");
  }
  // The cohort format owns manifest.json in this directory, so the run
  // manifest gets a distinct name here.
  manifest.write(out_dir, "run_manifest.json");
  return {c.patients.size(), out_dir};
}

TrainMorphResult cmd_train_morph(const RunConfig& config,
                                 const std::filesystem::path& cohort_dir,
                                 const std::filesystem::path& out_dir,
                                 bool force) {
  prepare_out_dir(out_dir, force);
  ManifestBuilder manifest("train-morph", config);
  manifest.input(cohort_dir / "manifest.json");
  StageClock clock(manifest);

  cohort::Cohort c = cohort::cohort_load(cohort_dir);
  clock.done("load");

  cohort::LabeledPatches pooled = pool_patches(c);
  SplitRng morph_rng = SplitRng(config.seed).split("morph");
  SplitRng init_rng = morph_rng.split("init");
  morph::MorphHead head = morph::MorphHead::xavier(
      c.config.d_m, config.morph.h1, config.morph.h2, init_rng);
  auto report =
      morph::train_morph(head, pooled, config.morph, morph_rng.split("train"));
  clock.done("train");

  auto head_path = out_dir / "morph_head.bin";
  morph::save_morph_head(head_path, head, "trained on pooled cohort patches");
  write_morph_report(out_dir / "morph_report.json", report);
  manifest.output(out_dir, "morph_head.bin");
  manifest.output(out_dir, "morph_head.bin.json");
  manifest.output(out_dir, "morph_report.json");
  manifest.write(out_dir);
  return {report, head_path};
}

TrainResultFiles cmd_train(const RunConfig& config,
                           const std::filesystem::path& cohort_dir,
                           const std::filesystem::path& out_dir, bool force,
                           const std::optional<std::filesystem::path>&
                               morph_head_path,
                           int max_threads) {
  prepare_out_dir(out_dir, force);
  ManifestBuilder manifest("train", config);
  manifest.input(cohort_dir / "manifest.json");
  if (morph_head_path) manifest.input(*morph_head_path);
  StageClock clock(manifest);

  cohort::Cohort c = cohort::cohort_load(cohort_dir);
  if (c.config.d_g != config.cohort.d_g || c.config.d_m != config.cohort.d_m) {
    throw DataError("train: cohort feature dims disagree with run config");
  }
  clock.done("load");

  std::vector<cohort::ClinicalRecord> records;
  for (const auto& p : c.patients) records.push_back(p.clinical);
  cv::FoldAssignment folds = build_folds(config, records);
  clock.done("folds");

  // Morphology head: reuse a pretrained one or fit on the cohort's pooled
  // labeled patches (the patch labels are generator metadata, independent of
  // survival outcomes).
  morph::MorphHead head(1, 1, 1);
  if (morph_head_path) {
    head = morph::load_morph_head(*morph_head_path);
    if (head.input_dim() != c.config.d_m) {
      throw DataError("train: morphology head input dim disagrees with cohort");
    }
  } else {
    cohort::LabeledPatches pooled = pool_patches(c);
    SplitRng morph_rng = SplitRng(config.seed).split("morph");
    SplitRng init_rng = morph_rng.split("init");
    head = morph::MorphHead::xavier(c.config.d_m, config.morph.h1,
                                    config.morph.h2, init_rng);
    auto report = morph::train_morph(head, pooled, config.morph,
                                     morph_rng.split("train"));
    morph::save_morph_head(out_dir / "morph_head.bin", head,
                           "trained on pooled cohort patches");
    write_morph_report(out_dir / "morph_report.json", report);
  }
  clock.done("morph");

  std::vector<cohort::PatchFeatureBag> feature_bags;
  feature_bags.reserve(c.patients.size());
  for (const auto& p : c.patients) {
    feature_bags.push_back(morph::extract_bag_features(head, p.bag));
  }
  clock.done("extract");

  mil::PrismDims dims;
  dims.d_g = c.config.d_g;
  dims.d_m = head.h1();
  dims.d_prime = config.d_prime;
  dims.d = config.d;
  dims.l = config.l;
  dims.fusion_mode = config.fusion_mode;

  mil::TrainResult result =
      mil::train_prism(feature_bags, records, folds, dims, config.hyper,
                       SplitRng(config.seed).split("prism"), max_threads);
  clock.done("train");

  TrainResultFiles files;

  // Roles in the folds CSV are reported for the test-fold-0 experiment.
  auto roles = cv::split_roles(folds, 0);
  files.folds_csv = out_dir / "folds.csv";
  write_file(files.folds_csv, cv::folds_to_csv(folds, roles));

  files.predictions_csv = out_dir / "predictions.csv";
  write_file(files.predictions_csv,
             mil::predictions_to_csv(result.predictions));

  std::map<std::string, const cohort::PatchFeatureBag*> bags_by_id;
  for (const auto& b : feature_bags) bags_by_id[b.patient_id] = &b;
  std::vector<mil::SlidePrediction> slide_preds;
  for (const auto& row : result.predictions) {
    const auto& model =
        result.fold_models[static_cast<std::size_t>(row.fold)];
    slide_preds.push_back(
        mil::forward_slide(model, *bags_by_id.at(row.patient_id)));
  }
  files.attention_csv = out_dir / "attention.csv";
  write_file(files.attention_csv,
             mil::attention_to_csv(slide_preds, bags_by_id));

  for (std::size_t f = 0; f < result.fold_models.size(); ++f) {
    auto path = out_dir / ("model_fold" + std::to_string(f) + ".bin");
    mil::save_model(path, result.fold_models[f], config.seed,
                    static_cast<int>(f));
    files.checkpoints.push_back(path);
  }
  clock.done("write");

  manifest.output(out_dir, "folds.csv");
  manifest.output(out_dir, "predictions.csv");
  manifest.output(out_dir, "attention.csv");
  if (!morph_head_path) {
    manifest.output(out_dir, "morph_head.bin");
    manifest.output(out_dir, "morph_head.bin.json");
    manifest.output(out_dir, "morph_report.json");
  }
  for (std::size_t f = 0; f < result.fold_models.size(); ++f) {
    manifest.output(out_dir, "model_fold" + std::to_string(f) + ".bin");
    manifest.output(out_dir, "model_fold" + std::to_string(f) + ".bin.json");
  }
  manifest.write(out_dir);
  return files;
}

EvaluateResult cmd_evaluate(const RunConfig& config,
                            const std::filesystem::path& predictions_csv,
                            const std::filesystem::path& clinical_csv,
                            const std::filesystem::path& out_dir, bool force,
                            const std::vector<std::string>& group_by) {
  prepare_out_dir(out_dir, force);
  ManifestBuilder manifest("evaluate", config);
  manifest.input(predictions_csv);
  manifest.input(clinical_csv);
  StageClock clock(manifest);

  auto predictions = mil::predictions_from_csv_file(predictions_csv);
  if (predictions.empty()) throw DataError("evaluate: no predictions");
  auto clinical = cohort::clinical_from_csv_file(clinical_csv);
  std::map<std::string, const cohort::ClinicalRecord*> by_id;
  for (const auto& r : clinical) by_id[r.patient_id] = &r;
  for (const auto& p : predictions) {
    auto it = by_id.find(p.patient_id);
    if (it == by_id.end()) {
      throw DataError("evaluate: prediction for unknown patient " +
                      p.patient_id);
    }
    if (it->second->label5y != p.label5y) {
      throw DataError("evaluate: label mismatch against clinical table for " +
                      p.patient_id);
    }
  }
  clock.done("load");

  EvaluateResult result;
  result.metrics = report::fold_metrics(predictions, config.threshold);
  write_file(out_dir / "metrics.csv",
             report::metrics_table_to_csv(result.metrics));
  manifest.output(out_dir, "metrics.csv");

  // Pooled ROC over the out-of-fold labelable predictions.
  std::vector<double> pooled_probs;
  std::vector<int> pooled_labels;
  for (const auto& p : predictions) {
    if (!p.has_label) continue;
    pooled_probs.push_back(p.prob);
    pooled_labels.push_back(p.label5y);
  }
  bool has_pos = std::find(pooled_labels.begin(), pooled_labels.end(), 1) !=
                 pooled_labels.end();
  bool has_neg = std::find(pooled_labels.begin(), pooled_labels.end(), 0) !=
                 pooled_labels.end();
  if (has_pos && has_neg) {
    auto points = stats::roc_points(pooled_probs, pooled_labels);
    double pooled_auc = stats::roc_auc(pooled_probs, pooled_labels);
    write_file(out_dir / "roc.csv", report::roc_to_csv(points));
    write_file(out_dir / "roc.svg", report::roc_svg(points, pooled_auc));
    manifest.output(out_dir, "roc.csv");
    manifest.output(out_dir, "roc.svg");
  }

  result.survival = report::survival_report(predictions);
  write_file(out_dir / "cox.json", report::cox_to_json_text(result.survival));
  manifest.output(out_dir, "cox.json");

  std::vector<std::pair<std::string, stats::SurvivalCurve>> curves = {
      {"high_risk", result.survival.groups.high},
      {"low_risk", result.survival.groups.low},
  };
  write_file(out_dir / "km_risk_groups.csv", report::km_curves_to_csv(curves));
  write_file(out_dir / "km_risk_groups.svg",
             report::km_svg(curves, "overall survival by predicted risk"));
  manifest.output(out_dir, "km_risk_groups.csv");
  manifest.output(out_dir, "km_risk_groups.svg");

  for (const auto& column : group_by) {
    auto tables = report::subgroup_metrics(predictions, clinical, column,
                                           config.threshold);
    std::string name = "subgroup_" + column + ".csv";
    write_file(out_dir / name, report::subgroup_tables_to_csv(tables, column));
    manifest.output(out_dir, name);
  }
  clock.done("evaluate");
  manifest.write(out_dir);
  return result;
}

namespace {

// Per-fold rows of the "all" group from a metrics.csv.
struct MetricSeries {
  std::vector<double> auc, accuracy, sensitivity, specificity;
};

MetricSeries parse_metrics_csv(const std::filesystem::path& path) {
  CsvTable table = load_csv(path);
  std::size_t c_group = table.column("group"), c_fold = table.column("fold"),
              c_auc = table.column("auc"), c_acc = table.column("accuracy"),
              c_sens = table.column("sensitivity"),
              c_spec = table.column("specificity");
  MetricSeries series;
  for (const auto& row : table.rows) {
    if (row[c_group] != "all") continue;
    if (row[c_fold] == "mean" || row[c_fold] == "sd") continue;
    auto grab = [&](std::size_t col, std::vector<double>& out) {
      if (row[col] != "n/a") out.push_back(parse_double(row[col], path.string()));
    };
    grab(c_auc, series.auc);
    grab(c_acc, series.accuracy);
    grab(c_sens, series.sensitivity);
    grab(c_spec, series.specificity);
  }
  return series;
}

}  // namespace

std::string cmd_compare(const std::filesystem::path& metrics_a,
                        const std::filesystem::path& metrics_b,
                        const std::filesystem::path& out_path) {
  MetricSeries a = parse_metrics_csv(metrics_a);
  MetricSeries b = parse_metrics_csv(metrics_b);

  json result = json::object();
  auto compare_one = [&](const char* name, const std::vector<double>& xa,
                         const std::vector<double>& xb) {
    if (xa.size() != xb.size()) {
      throw DataError(std::string("compare: unpaired fold counts for ") +
                      name);
    }
    if (xa.empty()) {
      result[name] = {{"p", nullptr}, {"n_pairs", 0}};
      return;
    }
    std::size_t nonzero = 0;
    for (std::size_t i = 0; i < xa.size(); ++i) {
      nonzero += xa[i] != xb[i] ? 1 : 0;
    }
    if (nonzero == 0) {
      throw DataError(std::string("compare: all paired differences are "
                                  "zero for ") + name);
    }
    if (nonzero < 5) {
      // The exact test needs at least 5 informative pairs; report the
      // metric as undecidable instead of failing the whole comparison.
      result[name] = {{"p", nullptr},
                      {"n_pairs", xa.size()},
                      {"note", "fewer than 5 non-zero differences"}};
      return;
    }
    double p = stats::wilcoxon_signed_rank(xa, xb);
    result[name] = {{"p", p}, {"n_pairs", xa.size()}};
  };
  compare_one("auc", a.auc, b.auc);
  compare_one("accuracy", a.accuracy, b.accuracy);
  compare_one("sensitivity", a.sensitivity, b.sensitivity);
  compare_one("specificity", a.specificity, b.specificity);

  std::string text = result.dump(2) + "\n";
  write_file(out_path, text);
  return text;
}

void cmd_folds(const RunConfig& config,
               const std::filesystem::path& clinical_csv,
               const std::filesystem::path& out_dir, bool force,
               int test_fold) {
  prepare_out_dir(out_dir, force);
  ManifestBuilder manifest("folds", config);
  manifest.input(clinical_csv);

  auto records = cohort::clinical_from_csv_file(clinical_csv);
  cv::FoldAssignment folds = build_folds(config, records);
  auto roles = cv::split_roles(folds, test_fold);
  write_file(out_dir / "folds.csv", cv::folds_to_csv(folds, roles));

  auto prevalence = cv::fold_prevalence(folds, records);
  auto strata = cv::assign_strata(records);
  json strata_json = json::object();
  for (const auto& [key, cell] : strata.report) {
    strata_json[key] = {
        {"count", cell.count},
        {"died5y", cell.died5y},
        {"survived5y", cell.survived5y},
        {"no5y", cell.unknown},
        {"death_rate", cell.death_rate()},
    };
  }
  json audit = {
      {"k", folds.k},
      {"cv_mode", cv_mode_name(config.cv_mode)},
      {"fold_sizes", folds.fold_sizes()},
      {"fold_death_prevalence", prevalence},
      {"income_median", strata.income_median},
      {"strata", strata_json},
  };
  write_file(out_dir / "folds_audit.json", audit.dump(2) + "\n");

  manifest.output(out_dir, "folds.csv");
  manifest.output(out_dir, "folds_audit.json");
  manifest.write(out_dir);
}

void cmd_km(const RunConfig& config,
            const std::filesystem::path& clinical_csv,
            const std::filesystem::path& out_dir, bool force,
            const std::optional<std::string>& group_by) {
  prepare_out_dir(out_dir, force);
  ManifestBuilder manifest("km", config);
  manifest.input(clinical_csv);

  auto records = cohort::clinical_from_csv_file(clinical_csv);
  std::map<std::string, std::pair<std::vector<double>,
                                  std::vector<std::uint8_t>>> groups;
  for (const auto& r : records) {
    std::string key =
        group_by ? report::clinical_column_value(r, *group_by) : "all";
    groups[key].first.push_back(r.time_months);
    groups[key].second.push_back(r.died ? 1 : 0);
  }

  std::vector<std::pair<std::string, stats::SurvivalCurve>> curves;
  for (const auto& [name, data] : groups) {
    curves.emplace_back(name, stats::kaplan_meier(data.first, data.second));
  }
  write_file(out_dir / "km.csv", report::km_curves_to_csv(curves));
  write_file(out_dir / "km.svg",
             report::km_svg(curves, group_by ? "overall survival by " +
                                                   *group_by
                                             : "overall survival"));
  manifest.output(out_dir, "km.csv");
  manifest.output(out_dir, "km.svg");
  manifest.write(out_dir);
}

void cmd_cox(const RunConfig& config,
             const std::filesystem::path& predictions_csv,
             const std::filesystem::path& out_dir, bool force,
             stats::TiesMethod ties, std::optional<double> cut) {
  prepare_out_dir(out_dir, force);
  ManifestBuilder manifest("cox", config);
  manifest.input(predictions_csv);

  auto predictions = mil::predictions_from_csv_file(predictions_csv);
  auto survival = report::survival_report(predictions, cut, ties);
  write_file(out_dir / "cox.json", report::cox_to_json_text(survival));
  manifest.output(out_dir, "cox.json");
  manifest.write(out_dir);
}

}  // namespace prism::pipeline
