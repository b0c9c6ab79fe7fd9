#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "prism/cohort.hpp"
#include "prism/milattn.hpp"
#include "prism/morphclass.hpp"
#include "prism/report.hpp"
#include "prism/stratcv.hpp"

namespace prism::pipeline {

inline constexpr const char* kToolVersion = "prism 0.1.0";

enum class CvMode { stratified, naive, kmeans };
const char* cv_mode_name(CvMode m);
CvMode parse_cv_mode(const std::string& s);

// One experiment description. All randomness flows from `seed` through the
// named splits "cohort", "folds", "morph" and "prism"; the cohort block must
// not carry its own seed.
struct RunConfig {
  cohort::CohortConfig cohort;
  std::size_t d_prime = 8;
  std::size_t d = 16;
  std::size_t l = 8;
  fusion::Mode fusion_mode = fusion::Mode::factorized;
  mil::PrismHyper hyper;
  int k_folds = 5;
  morph::MorphConfig morph;
  CvMode cv_mode = CvMode::stratified;
  int kmeans_clusters = 6;
  double threshold = 0.5;
  std::vector<std::string> subgroup_columns;
  std::uint64_t seed = 0;
};

// Strict parse: unknown keys anywhere are a config error.
RunConfig run_config_from_json_text(const std::string& text);
std::string run_config_to_json_text(const RunConfig& config);
RunConfig load_run_config(const std::filesystem::path& path);

std::uint64_t derived_cohort_seed(std::uint64_t run_seed);

// Every command writes a manifest.json into its output directory: tool
// version, command, seed, the config echo, input hashes and output hashes.
// Stage wall-clock goes to a separate timings.json so manifests stay
// byte-identical across reruns.
class ManifestBuilder {
 public:
  ManifestBuilder(std::string command, const RunConfig& config);
  void input(const std::filesystem::path& path);
  void output(const std::filesystem::path& dir, const std::string& name);
  void stage_ms(const std::string& stage, double ms);
  void write(const std::filesystem::path& dir,
             const std::string& name = "manifest.json") const;

 private:
  std::string command_;
  std::string config_echo_;
  std::uint64_t seed_;
  std::map<std::string, std::string> inputs_;
  std::map<std::string, std::string> outputs_;
  std::vector<std::pair<std::string, double>> stages_;
};

// Refuses to reuse a non-empty directory unless force is set.
void prepare_out_dir(const std::filesystem::path& dir, bool force);

struct GenerateResult {
  std::size_t n_patients = 0;
  std::filesystem::path cohort_dir;
};

GenerateResult cmd_generate(const RunConfig& config,
                            const std::filesystem::path& out_dir, bool force);

struct TrainMorphResult {
  morph::MorphTrainReport report;
  std::filesystem::path head_path;
};

TrainMorphResult cmd_train_morph(const RunConfig& config,
                                 const std::filesystem::path& cohort_dir,
                                 const std::filesystem::path& out_dir,
                                 bool force);

struct TrainResultFiles {
  std::filesystem::path predictions_csv;
  std::filesystem::path folds_csv;
  std::filesystem::path attention_csv;
  std::vector<std::filesystem::path> checkpoints;
};

TrainResultFiles cmd_train(const RunConfig& config,
                           const std::filesystem::path& cohort_dir,
                           const std::filesystem::path& out_dir, bool force,
                           const std::optional<std::filesystem::path>&
                               morph_head_path = std::nullopt,
                           int max_threads = 1);

struct EvaluateResult {
  report::MetricsTable metrics;
  report::SurvivalReport survival;
};

EvaluateResult cmd_evaluate(const RunConfig& config,
                            const std::filesystem::path& predictions_csv,
                            const std::filesystem::path& clinical_csv,
                            const std::filesystem::path& out_dir, bool force,
                            const std::vector<std::string>& group_by);

// Paired per-fold Wilcoxon tests between two metrics.csv files; returns the
// JSON text written to out_path.
std::string cmd_compare(const std::filesystem::path& metrics_a,
                        const std::filesystem::path& metrics_b,
                        const std::filesystem::path& out_path);

void cmd_folds(const RunConfig& config,
               const std::filesystem::path& clinical_csv,
               const std::filesystem::path& out_dir, bool force,
               int test_fold);

void cmd_km(const RunConfig& config,
            const std::filesystem::path& clinical_csv,
            const std::filesystem::path& out_dir, bool force,
            const std::optional<std::string>& group_by);

void cmd_cox(const RunConfig& config,
             const std::filesystem::path& predictions_csv,
             const std::filesystem::path& out_dir, bool force,
             stats::TiesMethod ties, std::optional<double> cut);

}  // namespace prism::pipeline
