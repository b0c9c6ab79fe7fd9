#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "prism/adam.hpp"
#include "prism/cohort.hpp"
#include "prism/matrix.hpp"
#include "prism/rng.hpp"

namespace prism::morph {

// 13-way tissue classifier: three linear maps with ReLU between them and
// softmax on the output. After training, the post-ReLU activations of the
// first layer are the morphology-aware features consumed downstream.
class MorphHead {
 public:
  MorphHead(std::size_t d_in, std::size_t h1, std::size_t h2);

  static MorphHead xavier(std::size_t d_in, std::size_t h1, std::size_t h2,
                          SplitRng& rng);

  std::size_t input_dim() const { return d_in_; }
  std::size_t h1() const { return h1_; }
  std::size_t h2() const { return h2_; }

  std::vector<double> logits(std::span<const double> x) const;
  std::vector<double> classify(std::span<const double> x) const;  // softmax
  // h1-dim post-ReLU activations of the first layer (all entries >= 0).
  std::vector<double> extract(std::span<const double> x) const;

  // Cross-entropy loss for one sample; accumulates analytic gradients into
  // the parameter tensors.
  double backward(std::span<const double> x, int label);
  double loss(std::span<const double> x, int label) const;

  std::vector<num::ParamTensor*> params();
  std::vector<const num::ParamTensor*> params() const;
  void zero_grads();

  num::ParamTensor w1, b1, w2, b2, w3, b3;

 private:
  std::size_t d_in_, h1_, h2_;
};

std::vector<double> softmax(std::span<const double> logits);

struct MorphConfig {
  std::size_t h1 = 32;
  std::size_t h2 = 16;
  double lr = 1e-3;
  std::size_t epochs = 60;
  std::size_t patience = 10;
  double train_frac = 0.70;
  double val_frac = 0.15;
};

struct MorphTrainReport {
  std::size_t n_train = 0, n_val = 0, n_test = 0;
  std::size_t best_epoch = 0;
  double best_val_accuracy = 0.0;
  double test_accuracy = 0.0;
  double test_macro_auc = 0.0;  // one-vs-rest, averaged over classes
  std::vector<double> train_loss_per_epoch;
  std::vector<double> val_accuracy_per_epoch;
};

// Class-stratified 70/15/15 split, Adam (batch 1), early stopping on
// validation accuracy; the returned head carries the best-validation
// parameters.
MorphTrainReport train_morph(MorphHead& head,
                             const cohort::LabeledPatches& patches,
                             const MorphConfig& config, SplitRng rng);

void save_morph_head(const std::filesystem::path& path, const MorphHead& head,
                     const std::string& config_note);
MorphHead load_morph_head(const std::filesystem::path& path);

// Maps every patch of every bag through `extract`, yielding bags whose
// morph channel is the h1-dim learned representation.
cohort::PatchFeatureBag extract_bag_features(const MorphHead& head,
                                             const cohort::PatchFeatureBag& bag);

}  // namespace prism::morph
