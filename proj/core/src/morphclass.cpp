#include "prism/morphclass.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "prism/errors.hpp"
#include "prism/fsutil.hpp"
#include "prism/survstats.hpp"
#include "prism/tensor_io.hpp"

namespace prism::morph {

using cohort::kNumMorphClasses;

MorphHead::MorphHead(std::size_t d_in, std::size_t h1, std::size_t h2)
    : w1("morph.w1", num::Matrix(d_in, h1)),
      b1("morph.b1", num::Matrix(1, h1)),
      w2("morph.w2", num::Matrix(h1, h2)),
      b2("morph.b2", num::Matrix(1, h2)),
      w3("morph.w3", num::Matrix(h2, kNumMorphClasses)),
      b3("morph.b3", num::Matrix(1, kNumMorphClasses)),
      d_in_(d_in), h1_(h1), h2_(h2) {
  if (d_in == 0 || h1 == 0 || h2 == 0) {
    throw DimError("MorphHead: zero layer width");
  }
}

MorphHead MorphHead::xavier(std::size_t d_in, std::size_t h1, std::size_t h2,
                            SplitRng& rng) {
  MorphHead head(d_in, h1, h2);
  head.w1.value = num::xavier_uniform_init(d_in, h1, rng);
  head.w2.value = num::xavier_uniform_init(h1, h2, rng);
  head.w3.value = num::xavier_uniform_init(h2, kNumMorphClasses, rng);
  return head;
}

namespace {

// z = x * W + b for a single row.
std::vector<double> affine(std::span<const double> x, const num::Matrix& w,
                           const num::Matrix& b) {
  std::vector<double> z(b.cols());
  for (std::size_t j = 0; j < w.cols(); ++j) z[j] = b(0, j);
  for (std::size_t i = 0; i < w.rows(); ++i) {
    double xi = x[i];
    if (xi == 0.0) continue;
    for (std::size_t j = 0; j < w.cols(); ++j) z[j] += xi * w(i, j);
  }
  return z;
}

void relu_inplace(std::vector<double>& v) {
  for (double& x : v) x = x > 0.0 ? x : 0.0;
}

struct Activations {
  std::vector<double> a1, a2, logits;
};

Activations forward_all(const MorphHead& head, std::span<const double> x) {
  Activations act;
  act.a1 = affine(x, head.w1.value, head.b1.value);
  relu_inplace(act.a1);
  act.a2 = affine(act.a1, head.w2.value, head.b2.value);
  relu_inplace(act.a2);
  act.logits = affine(act.a2, head.w3.value, head.b3.value);
  return act;
}

double log_sum_exp(std::span<const double> z) {
  double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  return m + std::log(s);
}

void check_input(const MorphHead& head, std::span<const double> x) {
  if (x.size() != head.input_dim()) {
    throw DimError("morph head: input dim " + std::to_string(x.size()) +
                   ", expected " + std::to_string(head.input_dim()));
  }
}

}  // namespace

std::vector<double> softmax(std::span<const double> logits) {
  double lse = log_sum_exp(logits);
  std::vector<double> p(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - lse);
  }
  return p;
}

std::vector<double> MorphHead::logits(std::span<const double> x) const {
  check_input(*this, x);
  return forward_all(*this, x).logits;
}

std::vector<double> MorphHead::classify(std::span<const double> x) const {
  return softmax(logits(x));
}

std::vector<double> MorphHead::extract(std::span<const double> x) const {
  check_input(*this, x);
  auto a1 = affine(x, w1.value, b1.value);
  relu_inplace(a1);
  return a1;
}

double MorphHead::loss(std::span<const double> x, int label) const {
  check_input(*this, x);
  auto z = forward_all(*this, x).logits;
  return log_sum_exp(z) - z[static_cast<std::size_t>(label)];
}

double MorphHead::backward(std::span<const double> x, int label) {
  check_input(*this, x);
  if (label < 0 || label >= kNumMorphClasses) {
    throw DataError("morph backward: label out of range");
  }
  Activations act = forward_all(*this, x);
  double lse = log_sum_exp(act.logits);
  double loss_val = lse - act.logits[static_cast<std::size_t>(label)];

  // d loss / d logits = softmax - onehot
  std::vector<double> dz3(act.logits.size());
  for (std::size_t j = 0; j < dz3.size(); ++j) {
    dz3[j] = std::exp(act.logits[j] - lse) -
             (static_cast<int>(j) == label ? 1.0 : 0.0);
  }
  std::vector<double> da2(h2_, 0.0);
  for (std::size_t i = 0; i < h2_; ++i) {
    for (std::size_t j = 0; j < dz3.size(); ++j) {
      w3.grad(i, j) += act.a2[i] * dz3[j];
      da2[i] += w3.value(i, j) * dz3[j];
    }
  }
  for (std::size_t j = 0; j < dz3.size(); ++j) b3.grad(0, j) += dz3[j];

  std::vector<double> dz2(h2_);
  for (std::size_t i = 0; i < h2_; ++i) {
    dz2[i] = act.a2[i] > 0.0 ? da2[i] : 0.0;
  }
  std::vector<double> da1(h1_, 0.0);
  for (std::size_t i = 0; i < h1_; ++i) {
    for (std::size_t j = 0; j < h2_; ++j) {
      w2.grad(i, j) += act.a1[i] * dz2[j];
      da1[i] += w2.value(i, j) * dz2[j];
    }
  }
  for (std::size_t j = 0; j < h2_; ++j) b2.grad(0, j) += dz2[j];

  std::vector<double> dz1(h1_);
  for (std::size_t i = 0; i < h1_; ++i) {
    dz1[i] = act.a1[i] > 0.0 ? da1[i] : 0.0;
  }
  for (std::size_t i = 0; i < d_in_; ++i) {
    double xi = x[i];
    if (xi == 0.0) continue;
    for (std::size_t j = 0; j < h1_; ++j) w1.grad(i, j) += xi * dz1[j];
  }
  for (std::size_t j = 0; j < h1_; ++j) b1.grad(0, j) += dz1[j];

  return loss_val;
}

std::vector<num::ParamTensor*> MorphHead::params() {
  return {&w1, &b1, &w2, &b2, &w3, &b3};
}

std::vector<const num::ParamTensor*> MorphHead::params() const {
  return {&w1, &b1, &w2, &b2, &w3, &b3};
}

void MorphHead::zero_grads() {
  for (auto* p : params()) p->zero_grad();
}

namespace {

struct Split {
  std::vector<std::size_t> train, val, test;
};

Split stratified_split(const cohort::LabeledPatches& patches,
                       const MorphConfig& config, SplitRng& rng) {
  std::vector<std::vector<std::size_t>> by_class(kNumMorphClasses);
  for (std::size_t i = 0; i < patches.labels.size(); ++i) {
    int c = patches.labels[i];
    if (c < 0 || c >= kNumMorphClasses) {
      throw DataError("train_morph: label out of range");
    }
    by_class[static_cast<std::size_t>(c)].push_back(i);
  }
  Split split;
  for (int c = 0; c < kNumMorphClasses; ++c) {
    auto& members = by_class[static_cast<std::size_t>(c)];
    rng.shuffle(members);
    auto n = members.size();
    auto n_train = static_cast<std::size_t>(
        std::llround(config.train_frac * static_cast<double>(n)));
    auto n_val = static_cast<std::size_t>(
        std::llround(config.val_frac * static_cast<double>(n)));
    n_train = std::min(n_train, n);
    n_val = std::min(n_val, n - n_train);
    if (n_train == 0) {
      throw DataError(std::string("train_morph: class '") +
                      cohort::kMorphClassNames[static_cast<std::size_t>(c)] +
                      "' absent from the training split");
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (i < n_train) split.train.push_back(members[i]);
      else if (i < n_train + n_val) split.val.push_back(members[i]);
      else split.test.push_back(members[i]);
    }
  }
  return split;
}

double accuracy_on(const MorphHead& head, const cohort::LabeledPatches& patches,
                   const std::vector<std::size_t>& idx) {
  if (idx.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i : idx) {
    auto z = head.logits(patches.features.row(i));
    auto best = std::distance(z.begin(), std::max_element(z.begin(), z.end()));
    correct += best == patches.labels[i] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(idx.size());
}

std::vector<num::Matrix> snapshot(const MorphHead& head) {
  std::vector<num::Matrix> values;
  for (const auto* p : head.params()) values.push_back(p->value);
  return values;
}

void restore(MorphHead& head, const std::vector<num::Matrix>& values) {
  auto ps = head.params();
  for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->value = values[i];
}

}  // namespace

MorphTrainReport train_morph(MorphHead& head,
                             const cohort::LabeledPatches& patches,
                             const MorphConfig& config, SplitRng rng) {
  if (patches.features.rows() != patches.labels.size()) {
    throw DataError("train_morph: features/labels row mismatch");
  }
  SplitRng split_rng = rng.split("split");
  Split split = stratified_split(patches, config, split_rng);

  MorphTrainReport report;
  report.n_train = split.train.size();
  report.n_val = split.val.size();
  report.n_test = split.test.size();

  num::AdamState adam({.lr = config.lr});
  auto params = head.params();
  SplitRng epoch_rng = rng.split("epochs");

  std::vector<num::Matrix> best = snapshot(head);
  double best_val = -1.0;
  std::size_t best_epoch = 0;
  std::size_t since_best = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    SplitRng order_rng = epoch_rng.split(epoch);
    std::vector<std::size_t> order = split.train;
    order_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t i : order) {
      head.zero_grads();
      epoch_loss += head.backward(patches.features.row(i), patches.labels[i]);
      adam.step(params);
    }
    report.train_loss_per_epoch.push_back(
        epoch_loss / static_cast<double>(std::max<std::size_t>(1, order.size())));

    double val_acc = split.val.empty()
                         ? accuracy_on(head, patches, split.train)
                         : accuracy_on(head, patches, split.val);
    report.val_accuracy_per_epoch.push_back(val_acc);
    if (val_acc > best_val) {
      best_val = val_acc;
      best = snapshot(head);
      best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  restore(head, best);
  report.best_epoch = best_epoch;
  report.best_val_accuracy = best_val;
  report.test_accuracy = accuracy_on(head, patches, split.test);

  // One-vs-rest macro AUC over classes present in the test split.
  double auc_sum = 0.0;
  int auc_classes = 0;
  for (int c = 0; c < kNumMorphClasses; ++c) {
    std::vector<double> scores;
    std::vector<int> labels;
    for (std::size_t i : split.test) {
      scores.push_back(head.classify(patches.features.row(i))[
          static_cast<std::size_t>(c)]);
      labels.push_back(patches.labels[i] == c ? 1 : 0);
    }
    bool has_pos = std::find(labels.begin(), labels.end(), 1) != labels.end();
    bool has_neg = std::find(labels.begin(), labels.end(), 0) != labels.end();
    if (!has_pos || !has_neg) continue;
    auc_sum += stats::roc_auc(scores, labels);
    ++auc_classes;
  }
  report.test_macro_auc = auc_classes == 0 ? 0.0 : auc_sum / auc_classes;
  return report;
}

void save_morph_head(const std::filesystem::path& path, const MorphHead& head,
                     const std::string& config_note) {
  num::TensorArchive archive;
  for (const auto* p : head.params()) archive.add(p->name, p->value);
  num::save_archive(path, archive);

  nlohmann::json sidecar = {
      {"d_in", head.input_dim()},
      {"h1", head.h1()},
      {"h2", head.h2()},
      {"classes", cohort::kNumMorphClasses},
      {"note", config_note},
  };
  write_file(path.string() + ".json", sidecar.dump(2) + "\n");
}

MorphHead load_morph_head(const std::filesystem::path& path) {
  num::TensorArchive archive = num::load_archive(path);
  const num::Matrix& w1 = archive.get("morph.w1");
  const num::Matrix& w2 = archive.get("morph.w2");
  MorphHead head(w1.rows(), w1.cols(), w2.cols());
  head.w1.value = w1;
  head.b1.value = archive.get("morph.b1");
  head.w2.value = w2;
  head.b2.value = archive.get("morph.b2");
  head.w3.value = archive.get("morph.w3");
  head.b3.value = archive.get("morph.b3");
  return head;
}

cohort::PatchFeatureBag extract_bag_features(
    const MorphHead& head, const cohort::PatchFeatureBag& bag) {
  cohort::PatchFeatureBag out;
  out.patient_id = bag.patient_id;
  out.generic = bag.generic;
  out.patch_class = bag.patch_class;
  out.morph = num::Matrix(bag.morph.rows(), head.h1());
  for (std::size_t i = 0; i < bag.morph.rows(); ++i) {
    auto features = head.extract(bag.morph.row(i));
    for (std::size_t j = 0; j < features.size(); ++j) {
      out.morph(i, j) = features[j];
    }
  }
  return out;
}

}  // namespace prism::morph
