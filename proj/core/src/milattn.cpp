#include "prism/milattn.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>

#include <nlohmann/json.hpp>

#include "prism/csv.hpp"
#include "prism/errors.hpp"
#include "prism/fsutil.hpp"
#include "prism/survstats.hpp"
#include "prism/tensor_io.hpp"

namespace prism::mil {

using nlohmann::json;

AttentionParams::AttentionParams(std::size_t d, std::size_t l)
    : v("attn.v", num::Matrix(d, l)),
      u("attn.u", num::Matrix(d, l)),
      w("attn.w", num::Matrix(l, 1)) {
  if (d == 0 || l == 0) throw DimError("attention: zero dimension");
}

AttentionParams AttentionParams::xavier(std::size_t d, std::size_t l,
                                        SplitRng& rng) {
  AttentionParams params(d, l);
  params.v.value = num::xavier_uniform_init(d, l, rng);
  params.u.value = num::xavier_uniform_init(d, l, rng);
  params.w.value = num::xavier_uniform_init(l, 1, rng);
  return params;
}

std::vector<num::ParamTensor*> AttentionParams::params() {
  return {&v, &u, &w};
}

namespace {

double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                  : std::exp(x) / (1.0 + std::exp(x));
}

// log(1 + e^x) without overflow.
double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

}  // namespace

std::vector<double> attention_scores(const num::Matrix& fused,
                                     const AttentionParams& params,
                                     AttentionCache* cache) {
  const std::size_t n = fused.rows();
  if (n == 0) throw DataError("attention_scores: empty bag");
  const std::size_t d = params.d();
  const std::size_t l = params.l();
  if (fused.cols() != d) {
    throw DimError("attention_scores: feature dim " +
                   std::to_string(fused.cols()) + ", expected " +
                   std::to_string(d));
  }

  std::vector<double> scores(n);
  num::Matrix tanh_part(n, l), sigm_part(n, l);
  for (std::size_t j = 0; j < n; ++j) {
    double e = 0.0;
    for (std::size_t h = 0; h < l; ++h) {
      double pv = 0.0, pu = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        pv += params.v.value(k, h) * fused(j, k);
        pu += params.u.value(k, h) * fused(j, k);
      }
      double t = std::tanh(pv);
      double s = sigmoid(pu);
      tanh_part(j, h) = t;
      sigm_part(j, h) = s;
      e += params.w.value(h, 0) * t * s;
    }
    scores[j] = e;
  }

  double m = *std::max_element(scores.begin(), scores.end());
  double z = 0.0;
  std::vector<double> attn(n);
  for (std::size_t j = 0; j < n; ++j) {
    attn[j] = std::exp(scores[j] - m);
    z += attn[j];
  }
  for (double& a : attn) a /= z;

  if (cache) {
    cache->tanh_part = std::move(tanh_part);
    cache->sigm_part = std::move(sigm_part);
    cache->scores = scores;
  }
  return attn;
}

std::vector<double> aggregate(const num::Matrix& fused,
                              std::span<const double> attention) {
  if (attention.size() != fused.rows()) {
    throw DimError("aggregate: attention length " +
                   std::to_string(attention.size()) + " != rows " +
                   std::to_string(fused.rows()));
  }
  std::vector<double> z(fused.cols(), 0.0);
  for (std::size_t j = 0; j < fused.rows(); ++j) {
    double a = attention[j];
    for (std::size_t k = 0; k < fused.cols(); ++k) {
      z[k] += a * fused(j, k);
    }
  }
  return z;
}

PrismModel::PrismModel(const PrismDims& dims, const PrismHyper& hyper)
    : fusion(fusion::FusionConfig{dims.d_g, dims.d_m, dims.d_prime, dims.d,
                                  dims.fusion_mode}),
      attention(dims.d, dims.l),
      head_w("head.w", num::Matrix(dims.d, 1)),
      head_b("head.b", num::Matrix(1, 1)),
      dims_(dims), hyper_(hyper) {}

PrismModel PrismModel::xavier(const PrismDims& dims, const PrismHyper& hyper,
                              SplitRng& rng) {
  PrismModel model(dims, hyper);
  model.fusion = fusion::FusionParams::xavier(
      fusion::FusionConfig{dims.d_g, dims.d_m, dims.d_prime, dims.d,
                           dims.fusion_mode},
      rng);
  model.attention = AttentionParams::xavier(dims.d, dims.l, rng);
  model.head_w.value = num::xavier_uniform_init(dims.d, 1, rng);
  // head bias starts at zero
  return model;
}

std::vector<num::ParamTensor*> PrismModel::params() {
  return {&fusion.w_g, &fusion.w_m, &fusion.w_fusion,
          &attention.v, &attention.u, &attention.w,
          &head_w, &head_b};
}

std::vector<const num::ParamTensor*> PrismModel::params() const {
  return {&fusion.w_g, &fusion.w_m, &fusion.w_fusion,
          &attention.v, &attention.u, &attention.w,
          &head_w, &head_b};
}

void PrismModel::zero_grads() {
  for (auto* p : params()) p->zero_grad();
}

double PrismModel::l1_norm() const {
  double s = 0.0;
  for (const auto* p : params()) {
    for (double v : p->value.data()) s += std::abs(v);
  }
  return s;
}

namespace {

struct ForwardState {
  fusion::FusionCache fcache;
  AttentionCache acache;
  num::Matrix fused;
  std::vector<double> attn;
  std::vector<double> z;
  double logit = 0.0;
  double prob = 0.5;
};

ForwardState run_forward(const PrismModel& model,
                         const cohort::PatchFeatureBag& bag,
                         bool keep_caches) {
  ForwardState st;
  st.fused = fuse_bag(bag.generic, bag.morph, model.fusion,
                      keep_caches ? &st.fcache : nullptr);
  st.attn = attention_scores(st.fused, model.attention,
                             keep_caches ? &st.acache : nullptr);
  st.z = aggregate(st.fused, st.attn);
  st.logit = model.head_b.value(0, 0);
  for (std::size_t k = 0; k < st.z.size(); ++k) {
    st.logit += model.head_w.value(k, 0) * st.z[k];
  }
  st.prob = sigmoid(st.logit);
  return st;
}

double bce_from_logit(double logit, int label) {
  return softplus(logit) - (label == 1 ? logit : 0.0);
}

}  // namespace

SlidePrediction forward_slide(const PrismModel& model,
                              const cohort::PatchFeatureBag& bag) {
  ForwardState st = run_forward(model, bag, false);
  SlidePrediction pred;
  pred.patient_id = bag.patient_id;
  pred.probability = st.prob;
  pred.attention = std::move(st.attn);
  pred.slide_repr = std::move(st.z);
  return pred;
}

double slide_loss(const PrismModel& model, const cohort::PatchFeatureBag& bag,
                  int label) {
  ForwardState st = run_forward(model, bag, false);
  return bce_from_logit(st.logit, label) + model.hyper().l1 * model.l1_norm();
}

double slide_backward(PrismModel& model, const cohort::PatchFeatureBag& bag,
                      int label) {
  const auto& dims = model.dims();
  ForwardState st = run_forward(model, bag, true);
  const std::size_t n = st.fused.rows();
  const std::size_t d = dims.d;
  const std::size_t l = dims.l;

  double loss =
      bce_from_logit(st.logit, label) + model.hyper().l1 * model.l1_norm();

  double dlogit = st.prob - (label == 1 ? 1.0 : 0.0);

  // Head.
  std::vector<double> dz(d);
  for (std::size_t k = 0; k < d; ++k) {
    model.head_w.grad(k, 0) += dlogit * st.z[k];
    dz[k] = dlogit * model.head_w.value(k, 0);
  }
  model.head_b.grad(0, 0) += dlogit;

  // Aggregation: Z = sum_j a_j F_j.
  std::vector<double> da(n);
  num::Matrix dfused(n, d);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      s += dz[k] * st.fused(j, k);
      dfused(j, k) = st.attn[j] * dz[k];
    }
    da[j] = s;
  }

  // Softmax: de_j = a_j (da_j - sum_k a_k da_k).
  double dot_a_da = 0.0;
  for (std::size_t j = 0; j < n; ++j) dot_a_da += st.attn[j] * da[j];
  std::vector<double> de(n);
  for (std::size_t j = 0; j < n; ++j) {
    de[j] = st.attn[j] * (da[j] - dot_a_da);
  }

  // Gate: e_j = sum_h w_h t_{jh} s_{jh}.
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t h = 0; h < l; ++h) {
      double t = st.acache.tanh_part(j, h);
      double s = st.acache.sigm_part(j, h);
      double wh = model.attention.w.value(h, 0);
      model.attention.w.grad(h, 0) += de[j] * t * s;
      double dt = de[j] * wh * s;
      double ds = de[j] * wh * t;
      double dpre_v = dt * (1.0 - t * t);
      double dpre_u = ds * s * (1.0 - s);
      for (std::size_t k = 0; k < d; ++k) {
        double f = st.fused(j, k);
        model.attention.v.grad(k, h) += f * dpre_v;
        model.attention.u.grad(k, h) += f * dpre_u;
        dfused(j, k) += model.attention.v.value(k, h) * dpre_v +
                        model.attention.u.value(k, h) * dpre_u;
      }
    }
  }

  fuse_bag_backward(bag.generic, bag.morph, model.fusion, st.fcache, dfused);

  // L1 subgradient, 0 at 0 so zero weights stay zero.
  double l1 = model.hyper().l1;
  if (l1 != 0.0) {
    for (auto* p : model.params()) {
      for (std::size_t k = 0; k < p->value.size(); ++k) {
        double v = p->value.data()[k];
        if (v > 0.0) p->grad.data()[k] += l1;
        else if (v < 0.0) p->grad.data()[k] -= l1;
      }
    }
  }
  return loss;
}

namespace {

struct ModelSnapshot {
  std::vector<num::Matrix> values;
};

ModelSnapshot snapshot(const PrismModel& model) {
  ModelSnapshot s;
  for (const auto* p : model.params()) s.values.push_back(p->value);
  return s;
}

void restore(PrismModel& model, const ModelSnapshot& s) {
  auto ps = model.params();
  for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->value = s.values[i];
}

struct FoldOutput {
  std::optional<PrismModel> model;
  std::vector<PredictionRow> predictions;
  FoldTrainStats stats;
};

FoldOutput train_one_fold(
    int fold, const std::map<std::string, const cohort::PatchFeatureBag*>& bags,
    const std::map<std::string, const cohort::ClinicalRecord*>& clinical,
    const cv::FoldAssignment& folds, const PrismDims& dims,
    const PrismHyper& hyper, SplitRng fold_rng) {
  auto roles = cv::split_roles(folds, fold);

  std::vector<std::string> train_ids, val_ids, test_ids;
  for (const auto& [id, role] : roles) {
    const cohort::ClinicalRecord* rec = clinical.at(id);
    bool labeled = cohort::has_five_year_label(*rec);
    switch (role) {
      case cv::Role::train:
        if (labeled) train_ids.push_back(id);
        break;
      case cv::Role::val:
        if (labeled) val_ids.push_back(id);
        break;
      case cv::Role::test:
        test_ids.push_back(id);
        break;
    }
  }
  if (train_ids.empty()) {
    throw DataError("train_prism: fold " + std::to_string(fold) +
                    " has no labeled training patients");
  }
  bool has_pos = false, has_neg = false;
  for (const auto& id : train_ids) {
    if (clinical.at(id)->label5y == 1) has_pos = true;
    else has_neg = true;
  }
  if (!has_pos || !has_neg) {
    throw DataError("train_prism: fold " + std::to_string(fold) +
                    " training split contains a single class");
  }

  SplitRng init_rng = fold_rng.split("init");
  PrismModel model = PrismModel::xavier(dims, hyper, init_rng);
  num::AdamState adam({.lr = hyper.lr});
  auto params = model.params();

  auto val_metric = [&](const PrismModel& m, bool* is_auc) {
    std::vector<double> probs;
    std::vector<int> labels;
    bool pos = false, neg = false;
    for (const auto& id : val_ids) {
      probs.push_back(forward_slide(m, *bags.at(id)).probability);
      int y = clinical.at(id)->label5y;
      labels.push_back(y);
      (y == 1 ? pos : neg) = true;
    }
    if (!val_ids.empty() && pos && neg) {
      *is_auc = true;
      return stats::roc_auc(probs, labels);
    }
    // Degenerate validation split: fall back to negative mean BCE.
    *is_auc = false;
    const auto& eval_ids = val_ids.empty() ? train_ids : val_ids;
    double total = 0.0;
    for (const auto& id : eval_ids) {
      total += slide_loss(m, *bags.at(id), clinical.at(id)->label5y);
    }
    return -total / static_cast<double>(eval_ids.size());
  };

  FoldOutput out;
  out.stats.fold = fold;
  SplitRng epoch_rng = fold_rng.split("epochs");
  ModelSnapshot best = snapshot(model);
  double best_metric = -std::numeric_limits<double>::infinity();
  bool best_is_auc = true;

  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    SplitRng order_rng = epoch_rng.split(epoch);
    std::vector<std::string> order = train_ids;
    order_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (const auto& id : order) {
      model.zero_grads();
      epoch_loss += slide_backward(model, *bags.at(id), clinical.at(id)->label5y);
      adam.step(params);
    }
    out.stats.train_loss_per_epoch.push_back(
        epoch_loss / static_cast<double>(order.size()));

    bool is_auc = true;
    double metric = val_metric(model, &is_auc);
    if (metric > best_metric) {
      best_metric = metric;
      best = snapshot(model);
      out.stats.best_epoch = epoch;
      best_is_auc = is_auc;
    }
  }
  restore(model, best);
  out.stats.best_val_metric = best_metric;
  out.stats.val_metric_is_auc = best_is_auc;

  std::sort(test_ids.begin(), test_ids.end());
  for (const auto& id : test_ids) {
    const cohort::ClinicalRecord* rec = clinical.at(id);
    PredictionRow row;
    row.patient_id = id;
    row.fold = fold;
    row.prob = forward_slide(model, *bags.at(id)).probability;
    row.label5y = rec->label5y;
    row.has_label = cohort::has_five_year_label(*rec);
    row.time_months = rec->time_months;
    row.died = rec->died;
    out.predictions.push_back(std::move(row));
  }
  out.model = std::move(model);
  return out;
}

}  // namespace

TrainResult train_prism(const std::vector<cohort::PatchFeatureBag>& bags,
                        const std::vector<cohort::ClinicalRecord>& clinical,
                        const cv::FoldAssignment& folds,
                        const PrismDims& dims, const PrismHyper& hyper,
                        SplitRng rng, int max_threads) {
  std::map<std::string, const cohort::PatchFeatureBag*> bags_by_id;
  for (const auto& b : bags) bags_by_id[b.patient_id] = &b;
  std::map<std::string, const cohort::ClinicalRecord*> clinical_by_id;
  for (const auto& r : clinical) clinical_by_id[r.patient_id] = &r;
  for (const auto& e : folds.entries) {
    if (!bags_by_id.contains(e.patient_id)) {
      throw DataError("train_prism: no bag for patient " + e.patient_id);
    }
    if (!clinical_by_id.contains(e.patient_id)) {
      throw DataError("train_prism: no clinical row for " + e.patient_id);
    }
  }

  const int k = folds.k;
  std::vector<FoldOutput> outputs(static_cast<std::size_t>(k));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(k));

  // Per-fold rngs are derived up front, so results are identical for any
  // thread count.
  std::vector<SplitRng> fold_rngs;
  for (int f = 0; f < k; ++f) {
    fold_rngs.push_back(rng.split("fold").split(static_cast<std::uint64_t>(f)));
  }

  int n_threads = std::clamp(max_threads, 1, k);
  if (n_threads == 1) {
    for (int f = 0; f < k; ++f) {
      outputs[static_cast<std::size_t>(f)] =
          train_one_fold(f, bags_by_id, clinical_by_id, folds, dims, hyper,
                         fold_rngs[static_cast<std::size_t>(f)]);
    }
  } else {
    std::atomic<int> next{0};
    auto worker = [&] {
      for (;;) {
        int f = next.fetch_add(1);
        if (f >= k) return;
        try {
          outputs[static_cast<std::size_t>(f)] =
              train_one_fold(f, bags_by_id, clinical_by_id, folds, dims, hyper,
                             fold_rngs[static_cast<std::size_t>(f)]);
        } catch (...) {
          errors[static_cast<std::size_t>(f)] = std::current_exception();
        }
      }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  TrainResult result;
  for (auto& out : outputs) {
    result.fold_models.push_back(std::move(*out.model));
    result.stats.push_back(std::move(out.stats));
    for (auto& row : out.predictions) {
      result.predictions.push_back(std::move(row));
    }
  }
  return result;
}

std::string attention_to_csv(
    const std::vector<SlidePrediction>& predictions,
    const std::map<std::string, const cohort::PatchFeatureBag*>& bags_by_id) {
  CsvWriter w;
  w.row({"patient_id", "patch_index", "patch_class", "attention_weight"});
  for (const auto& pred : predictions) {
    auto it = bags_by_id.find(pred.patient_id);
    if (it == bags_by_id.end()) {
      throw DataError("attention export: no bag for " + pred.patient_id);
    }
    const auto& bag = *it->second;
    if (bag.n_patches() != pred.attention.size()) {
      throw DataError("attention export: weight count mismatch for " +
                      pred.patient_id);
    }
    for (std::size_t i = 0; i < pred.attention.size(); ++i) {
      w.row({pred.patient_id, std::to_string(i),
             cohort::kMorphClassNames[static_cast<std::size_t>(
                 bag.patch_class[i])],
             format_double(pred.attention[i])});
    }
  }
  return w.str();
}

std::string predictions_to_csv(const std::vector<PredictionRow>& rows) {
  CsvWriter w;
  w.row({"patient_id", "fold", "prob", "label5y", "time_months", "event"});
  for (const auto& r : rows) {
    w.row({r.patient_id, std::to_string(r.fold), format_double(r.prob),
           std::to_string(r.label5y), format_double(r.time_months),
           r.died ? "died" : "censored"});
  }
  return w.str();
}

std::vector<PredictionRow> predictions_from_csv_file(
    const std::filesystem::path& path) {
  CsvTable table = load_csv(path);
  const std::string context = path.string();
  std::size_t c_id = table.column("patient_id"), c_fold = table.column("fold"),
              c_prob = table.column("prob"),
              c_label = table.column("label5y"),
              c_time = table.column("time_months"),
              c_event = table.column("event");
  std::vector<PredictionRow> rows;
  for (const auto& r : table.rows) {
    PredictionRow row;
    row.patient_id = r[c_id];
    row.fold = static_cast<int>(parse_long(r[c_fold], context));
    row.prob = parse_double(r[c_prob], context);
    row.label5y = static_cast<int>(parse_long(r[c_label], context));
    row.time_months = parse_double(r[c_time], context);
    if (r[c_event] == "died") row.died = true;
    else if (r[c_event] == "censored") row.died = false;
    else throw DataError(context + ": unknown event '" + r[c_event] + "'");
    row.has_label = row.died || row.time_months >= 60.0;
    rows.push_back(std::move(row));
  }
  return rows;
}

void save_model(const std::filesystem::path& path, const PrismModel& model,
                std::uint64_t seed, int fold) {
  num::TensorArchive archive;
  for (const auto* p : model.params()) archive.add(p->name, p->value);
  num::save_archive(path, archive);

  const auto& d = model.dims();
  const auto& h = model.hyper();
  json sidecar = {
      {"dims",
       {{"d_g", d.d_g},
        {"d_m", d.d_m},
        {"d_prime", d.d_prime},
        {"d", d.d},
        {"l", d.l},
        {"fusion_mode", fusion::mode_name(d.fusion_mode)}}},
      {"hyper", {{"lr", h.lr}, {"l1", h.l1}, {"epochs", h.epochs}, {"batch", 1}}},
      {"seed", seed},
      {"fold", fold},
  };
  write_file(path.string() + ".json", sidecar.dump(2) + "\n");
}

PrismModel load_model(const std::filesystem::path& path) {
  json sidecar;
  try {
    sidecar = json::parse(read_file(path.string() + ".json"));
  } catch (const json::exception& e) {
    throw IoError(path.string() + ".json: " + std::string(e.what()));
  }
  PrismDims dims;
  PrismHyper hyper;
  try {
    const auto& d = sidecar.at("dims");
    dims.d_g = d.at("d_g");
    dims.d_m = d.at("d_m");
    dims.d_prime = d.at("d_prime");
    dims.d = d.at("d");
    dims.l = d.at("l");
    dims.fusion_mode = fusion::parse_mode(d.at("fusion_mode"));
    const auto& h = sidecar.at("hyper");
    hyper.lr = h.at("lr");
    hyper.l1 = h.at("l1");
    hyper.epochs = h.at("epochs");
  } catch (const json::exception& e) {
    throw IoError(path.string() + ".json: " + std::string(e.what()));
  }

  PrismModel model(dims, hyper);
  num::TensorArchive archive = num::load_archive(path);
  for (auto* p : model.params()) {
    const num::Matrix& stored = archive.get(p->name);
    if (!stored.same_shape(p->value)) {
      throw IoError(path.string() + ": shape mismatch for " + p->name);
    }
    p->value = stored;
    p->grad = num::Matrix(stored.rows(), stored.cols());
  }
  return model;
}

}  // namespace prism::mil
