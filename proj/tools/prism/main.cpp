// prism: synthetic-cohort survival MIL experiments.
//
// Subcommands: generate, train-morph, train, evaluate, compare, folds, km,
// cox. Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric error,
// 5 I/O error.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "prism/errors.hpp"
#include "prism/pipeline.hpp"

namespace {

namespace pipeline = prism::pipeline;

struct GlobalOpts {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  bool force = false;
  std::optional<std::string> cv_mode;
  std::optional<std::string> fusion_mode;
};

pipeline::RunConfig resolve_config(const GlobalOpts& opts) {
  pipeline::RunConfig config;
  if (!opts.config_path.empty()) {
    config = pipeline::load_run_config(opts.config_path);
  }
  std::uint64_t seed = opts.seed.value_or(config.seed);
  if (opts.cv_mode) config.cv_mode = pipeline::parse_cv_mode(*opts.cv_mode);
  if (opts.fusion_mode) {
    config.fusion_mode = prism::fusion::parse_mode(*opts.fusion_mode);
  }
  config.seed = seed;
  config.cohort.seed = pipeline::derived_cohort_seed(seed);
  return config;
}

int fold_parallelism() {
  const char* env = std::getenv("PRISM_THREADS");
  if (!env) return 1;
  int n = std::atoi(env);
  return n < 1 ? 1 : n;
}

void add_globals(CLI::App* cmd, GlobalOpts& opts, bool with_out = true) {
  cmd->add_option("--config", opts.config_path,
                  "run configuration JSON file");
  cmd->add_option("--seed", opts.seed, "root seed (overrides config)");
  if (with_out) {
    cmd->add_option("--out", opts.out_dir, "output directory")->required();
    cmd->add_flag("--force", opts.force, "overwrite a non-empty --out");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"morphology-aware MIL survival pipeline on synthetic cohorts"};
  app.require_subcommand(1);

  GlobalOpts opts;

  // generate
  auto* generate = app.add_subcommand("generate", "generate a synthetic cohort");
  add_globals(generate, opts);
  std::optional<std::size_t> gen_n;
  std::optional<double> gen_signal;
  std::optional<double> gen_censoring;
  generate->add_option("--n", gen_n, "number of patients");
  generate->add_option("--signal", gen_signal,
                       "planted log hazard ratio per burden sd");
  generate->add_option("--censoring", gen_censoring, "censoring rate");

  // train-morph
  auto* train_morph =
      app.add_subcommand("train-morph", "train the morphology classifier");
  add_globals(train_morph, opts);
  std::string tm_cohort;
  train_morph->add_option("--cohort", tm_cohort, "cohort directory")
      ->required();

  // train
  auto* train = app.add_subcommand("train", "cross-validated model training");
  add_globals(train, opts);
  std::string tr_cohort;
  std::string tr_morph_head;
  train->add_option("--cohort", tr_cohort, "cohort directory")->required();
  train->add_option("--morph-head", tr_morph_head,
                    "pretrained morphology head (.bin)");
  train->add_option("--cv-mode", opts.cv_mode,
                    "fold construction: stratified|naive|kmeans");
  train->add_option("--fusion-mode", opts.fusion_mode,
                    "fusion mode: exact|factorized");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "metrics tables and curves");
  add_globals(evaluate, opts);
  std::string ev_predictions, ev_clinical;
  std::vector<std::string> ev_group_by;
  std::optional<double> ev_threshold;
  evaluate->add_option("--predictions", ev_predictions, "predictions.csv")
      ->required();
  evaluate->add_option("--clinical", ev_clinical, "clinical.csv")->required();
  evaluate->add_option("--group-by", ev_group_by,
                       "clinical columns for subgroup tables");
  evaluate->add_option("--threshold", ev_threshold,
                       "classification threshold (default 0.5)");

  // compare
  auto* compare =
      app.add_subcommand("compare", "paired Wilcoxon test between two runs");
  std::string cp_a, cp_b, cp_out;
  compare->add_option("--metrics-a", cp_a, "first metrics.csv")->required();
  compare->add_option("--metrics-b", cp_b, "second metrics.csv")->required();
  compare->add_option("--out", cp_out, "output JSON path")->required();

  // folds
  auto* folds = app.add_subcommand("folds", "fold construction and audit");
  add_globals(folds, opts);
  std::string fd_clinical;
  int fd_test_fold = 0;
  folds->add_option("--clinical", fd_clinical, "clinical.csv")->required();
  folds->add_option("--test-fold", fd_test_fold, "fold used as test role");
  folds->add_option("--cv-mode", opts.cv_mode,
                    "fold construction: stratified|naive|kmeans");

  // km
  auto* km = app.add_subcommand("km", "Kaplan-Meier curves from a clinical table");
  add_globals(km, opts);
  std::string km_clinical;
  std::optional<std::string> km_group_by;
  km->add_option("--clinical", km_clinical, "clinical.csv")->required();
  km->add_option("--group-by", km_group_by, "clinical column to split on");

  // cox
  auto* cox = app.add_subcommand("cox", "dichotomized Cox fit from predictions");
  add_globals(cox, opts);
  std::string cx_predictions;
  std::string cx_ties = "efron";
  std::optional<double> cx_cut;
  cox->add_option("--predictions", cx_predictions, "predictions.csv")
      ->required();
  cox->add_option("--ties", cx_ties, "ties method: efron|breslow");
  cox->add_option("--cut", cx_cut, "risk cut (default: median)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed()) {
      auto config = resolve_config(opts);
      if (gen_n) config.cohort.n_patients = *gen_n;
      if (gen_signal) config.cohort.signal_strength = *gen_signal;
      if (gen_censoring) config.cohort.censoring_rate = *gen_censoring;
      auto result = pipeline::cmd_generate(config, opts.out_dir, opts.force);
      std::cout << "wrote " << result.n_patients << " patients to "
                << result.cohort_dir.string() << "\n";
    } else if (train_morph->parsed()) {
      auto config = resolve_config(opts);
      auto result =
          pipeline::cmd_train_morph(config, tm_cohort, opts.out_dir, opts.force);
      std::cout << "morph head: test accuracy "
                << result.report.test_accuracy << ", macro AUC "
                << result.report.test_macro_auc << "\n";
    } else if (train->parsed()) {
      auto config = resolve_config(opts);
      std::optional<std::filesystem::path> head;
      if (!tr_morph_head.empty()) head = tr_morph_head;
      auto files = pipeline::cmd_train(config, tr_cohort, opts.out_dir,
                                       opts.force, head, fold_parallelism());
      std::cout << "wrote " << files.predictions_csv.string() << " and "
                << files.checkpoints.size() << " fold checkpoints\n";
    } else if (evaluate->parsed()) {
      auto config = resolve_config(opts);
      if (ev_threshold) config.threshold = *ev_threshold;
      auto result = pipeline::cmd_evaluate(config, ev_predictions, ev_clinical,
                                           opts.out_dir, opts.force,
                                           ev_group_by);
      std::cout << "mean AUC " << result.metrics.mean_auc << ", HR "
                << result.survival.groups.fit.hazard_ratio << ", c-index "
                << result.survival.c_index << "\n";
    } else if (compare->parsed()) {
      std::cout << pipeline::cmd_compare(cp_a, cp_b, cp_out);
    } else if (folds->parsed()) {
      auto config = resolve_config(opts);
      pipeline::cmd_folds(config, fd_clinical, opts.out_dir, opts.force,
                          fd_test_fold);
      std::cout << "wrote folds.csv and folds_audit.json\n";
    } else if (km->parsed()) {
      auto config = resolve_config(opts);
      pipeline::cmd_km(config, km_clinical, opts.out_dir, opts.force,
                       km_group_by);
      std::cout << "wrote km.csv and km.svg\n";
    } else if (cox->parsed()) {
      auto config = resolve_config(opts);
      if (cx_ties != "efron" && cx_ties != "breslow") {
        throw prism::ConfigError("unknown ties method: '" + cx_ties + "'");
      }
      auto ties = cx_ties == "breslow" ? prism::stats::TiesMethod::breslow
                                       : prism::stats::TiesMethod::efron;
      pipeline::cmd_cox(config, cx_predictions, opts.out_dir, opts.force, ties,
                        cx_cut);
      std::cout << "wrote cox.json\n";
    }
  } catch (const prism::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
