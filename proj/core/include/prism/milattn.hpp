#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prism/adam.hpp"
#include "prism/cohort.hpp"
#include "prism/fusion.hpp"
#include "prism/matrix.hpp"
#include "prism/rng.hpp"
#include "prism/stratcv.hpp"

namespace prism::mil {

// Gated attention over fused patch features:
//   e_k = W^T (tanh(V^T f_k) ⊙ sigm(U^T f_k)),  a = softmax(e).
struct AttentionParams {
  num::ParamTensor v;  // d x l
  num::ParamTensor u;  // d x l
  num::ParamTensor w;  // l x 1

  AttentionParams(std::size_t d, std::size_t l);
  static AttentionParams xavier(std::size_t d, std::size_t l, SplitRng& rng);

  std::size_t d() const { return v.value.rows(); }
  std::size_t l() const { return v.value.cols(); }
  std::vector<num::ParamTensor*> params();
};

struct AttentionCache {
  num::Matrix tanh_part;  // n x l
  num::Matrix sigm_part;  // n x l
  std::vector<double> scores;  // pre-softmax e
};

// Softmax-normalized importance per patch; sums to 1.
std::vector<double> attention_scores(const num::Matrix& fused,
                                     const AttentionParams& params,
                                     AttentionCache* cache = nullptr);

// Z = sum_j a_j F_j.
std::vector<double> aggregate(const num::Matrix& fused,
                              std::span<const double> attention);

struct PrismHyper {
  double lr = 2e-5;
  double l1 = 5e-4;
  std::size_t epochs = 50;
  // Batch size is 1 by construction: one optimizer step per slide.
};

struct PrismDims {
  std::size_t d_g = 16;
  std::size_t d_m = 16;
  std::size_t d_prime = 8;
  std::size_t d = 16;
  std::size_t l = 8;
  fusion::Mode fusion_mode = fusion::Mode::factorized;
};

class PrismModel {
 public:
  PrismModel(const PrismDims& dims, const PrismHyper& hyper);
  static PrismModel xavier(const PrismDims& dims, const PrismHyper& hyper,
                           SplitRng& rng);

  const PrismDims& dims() const { return dims_; }
  const PrismHyper& hyper() const { return hyper_; }

  std::vector<num::ParamTensor*> params();
  std::vector<const num::ParamTensor*> params() const;
  void zero_grads();
  double l1_norm() const;

  fusion::FusionParams fusion;
  AttentionParams attention;
  num::ParamTensor head_w;  // d x 1
  num::ParamTensor head_b;  // 1 x 1

 private:
  PrismDims dims_;
  PrismHyper hyper_;
};

struct SlidePrediction {
  std::string patient_id;
  double probability = 0.5;
  std::vector<double> attention;   // per patch, sums to 1
  std::vector<double> slide_repr;  // d-dim Z
};

SlidePrediction forward_slide(const PrismModel& model,
                              const cohort::PatchFeatureBag& bag);

// BCE(probability, y) + l1 * sum |theta|; gradients accumulate into the
// model (L1 subgradient 0 at 0).
double slide_loss(const PrismModel& model, const cohort::PatchFeatureBag& bag,
                  int label);
double slide_backward(PrismModel& model, const cohort::PatchFeatureBag& bag,
                      int label);

struct PredictionRow {
  std::string patient_id;
  int fold = 0;
  double prob = 0.0;
  int label5y = 0;        // as stored in the clinical table
  bool has_label = false; // false when censored before 60 months
  double time_months = 0.0;
  bool died = false;
};

struct FoldTrainStats {
  int fold = 0;
  std::size_t best_epoch = 0;
  double best_val_metric = 0.0;
  bool val_metric_is_auc = true;  // falls back to -loss if val is one-class
  std::vector<double> train_loss_per_epoch;
};

struct TrainResult {
  std::vector<PrismModel> fold_models;  // index = test fold
  std::vector<PredictionRow> predictions;  // each patient once, as test
  std::vector<FoldTrainStats> stats;
};

// Bags must already carry the morphology features the model consumes (the
// classifier's hidden representation). One Adam step per slide, best epoch
// by validation AUC, deterministic under the given rng.
TrainResult train_prism(const std::vector<cohort::PatchFeatureBag>& bags,
                        const std::vector<cohort::ClinicalRecord>& clinical,
                        const cv::FoldAssignment& folds,
                        const PrismDims& dims, const PrismHyper& hyper,
                        SplitRng rng, int max_threads = 1);

// CSV: patient_id,patch_index,patch_class,attention_weight
std::string attention_to_csv(
    const std::vector<SlidePrediction>& predictions,
    const std::map<std::string, const cohort::PatchFeatureBag*>& bags_by_id);

std::string predictions_to_csv(const std::vector<PredictionRow>& rows);
std::vector<PredictionRow> predictions_from_csv_file(
    const std::filesystem::path& path);

void save_model(const std::filesystem::path& path, const PrismModel& model,
                std::uint64_t seed, int fold);
PrismModel load_model(const std::filesystem::path& path);

}  // namespace prism::mil
