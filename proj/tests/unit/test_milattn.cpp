#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numeric>
#include <set>

#include "prism/csv.hpp"
#include "prism/errors.hpp"
#include "prism/gradcheck.hpp"
#include "prism/milattn.hpp"

using namespace prism;
using namespace prism::mil;
using cohort::PatchFeatureBag;

namespace {

PrismDims small_dims(fusion::Mode mode = fusion::Mode::factorized) {
  PrismDims dims;
  dims.d_g = 4;
  dims.d_m = 3;
  dims.d_prime = 2;
  dims.d = 5;
  dims.l = 3;
  dims.fusion_mode = mode;
  return dims;
}

PatchFeatureBag random_bag(const std::string& id, std::size_t n,
                           const PrismDims& dims, SplitRng& rng,
                           double shift = 0.0) {
  PatchFeatureBag bag;
  bag.patient_id = id;
  bag.generic = num::Matrix(n, dims.d_g);
  bag.morph = num::Matrix(n, dims.d_m);
  for (double& v : bag.generic.data()) v = rng.normal() + shift;
  for (double& v : bag.morph.data()) v = rng.normal() + shift;
  for (std::size_t i = 0; i < n; ++i) {
    bag.patch_class.push_back(static_cast<int>(rng.uniform_index(13)));
  }
  return bag;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("attention of a singleton bag is one") {
  SplitRng rng(1);
  AttentionParams params = AttentionParams::xavier(5, 3, rng);
  num::Matrix fused(1, 5);
  for (double& v : fused.data()) v = rng.normal();
  auto a = attention_scores(fused, params);
  REQUIRE(a.size() == 1);
  CHECK(a[0] == 1.0);
}

TEST_CASE("identical rows share attention equally") {
  SplitRng rng(2);
  AttentionParams params = AttentionParams::xavier(4, 3, rng);
  num::Matrix fused(2, 4);
  for (std::size_t k = 0; k < 4; ++k) {
    fused(0, k) = 0.3 * static_cast<double>(k) - 0.5;
    fused(1, k) = fused(0, k);
  }
  auto a = attention_scores(fused, params);
  CHECK(a[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(a[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("attention matches the scalar gate formula") {
  SplitRng rng(3);
  AttentionParams params = AttentionParams::xavier(4, 3, rng);
  num::Matrix fused(3, 4);
  for (double& v : fused.data()) v = rng.normal();

  std::vector<double> e(3, 0.0);
  for (std::size_t j = 0; j < 3; ++j) {
    for (std::size_t h = 0; h < 3; ++h) {
      double pv = 0, pu = 0;
      for (std::size_t k = 0; k < 4; ++k) {
        pv += params.v.value(k, h) * fused(j, k);
        pu += params.u.value(k, h) * fused(j, k);
      }
      e[j] += params.w.value(h, 0) * std::tanh(pv) *
              (1.0 / (1.0 + std::exp(-pu)));
    }
  }
  double z = std::exp(e[0]) + std::exp(e[1]) + std::exp(e[2]);
  auto a = attention_scores(fused, params);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(a[j] == doctest::Approx(std::exp(e[j]) / z).epsilon(1e-12));
  }
}

TEST_CASE("attention weights sum to one over random bags") {
  SplitRng rng(4);
  AttentionParams params = AttentionParams::xavier(5, 4, rng);
  for (int trial = 0; trial < 100; ++trial) {
    SplitRng t = rng.split(trial);
    std::size_t n = 1 + t.uniform_index(40);
    num::Matrix fused(n, 5);
    for (double& v : fused.data()) v = 3.0 * t.normal();
    auto a = attention_scores(fused, params);
    double sum = std::accumulate(a.begin(), a.end(), 0.0);
    CHECK(std::abs(sum - 1.0) <= 1e-9);
    for (double w : a) {
      CHECK(w >= 0.0);
      CHECK(w <= 1.0);
    }
  }
}

TEST_CASE("attention rejects an empty bag") {
  SplitRng rng(5);
  AttentionParams params = AttentionParams::xavier(4, 2, rng);
  num::Matrix fused(0, 4);
  CHECK_THROWS_AS(attention_scores(fused, params), DataError);
}

TEST_CASE("aggregate fixtures and loop oracle") {
  SplitRng rng(6);
  num::Matrix fused(4, 3);
  for (double& v : fused.data()) v = rng.normal();

  std::vector<double> onehot{0, 0, 1, 0};
  auto z = aggregate(fused, onehot);
  for (std::size_t k = 0; k < 3; ++k) CHECK(z[k] == fused(2, k));

  num::Matrix same(3, 2);
  for (std::size_t j = 0; j < 3; ++j) {
    same(j, 0) = 1.5;
    same(j, 1) = -0.5;
  }
  std::vector<double> uniform(3, 1.0 / 3.0);
  auto zs = aggregate(same, uniform);
  CHECK(zs[0] == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(zs[1] == doctest::Approx(-0.5).epsilon(1e-12));

  std::vector<double> weights{0.1, 0.4, 0.25, 0.25};
  auto zr = aggregate(fused, weights);
  for (std::size_t k = 0; k < 3; ++k) {
    double expect = 0.0;
    for (std::size_t j = 0; j < 4; ++j) expect += weights[j] * fused(j, k);
    CHECK(zr[k] == doctest::Approx(expect).epsilon(1e-12));
  }

  std::vector<double> wrong(3, 0.5);
  CHECK_THROWS_AS(aggregate(fused, wrong), DimError);
}

TEST_CASE("zero head weights predict one half") {
  PrismDims dims = small_dims();
  SplitRng rng(7);
  PrismModel model = PrismModel::xavier(dims, {}, rng);
  model.head_w.value.set_zero();
  model.head_b.value.set_zero();
  SplitRng bag_rng(8);
  auto bag = random_bag("x", 6, dims, bag_rng);
  CHECK(forward_slide(model, bag).probability == 0.5);
}

TEST_CASE("forward_slide is permutation invariant") {
  PrismDims dims = small_dims();
  SplitRng rng(9);
  PrismModel model = PrismModel::xavier(dims, {}, rng);
  SplitRng bag_rng(10);
  auto bag = random_bag("x", 12, dims, bag_rng);
  auto base = forward_slide(model, bag);

  SplitRng perm_rng(11);
  std::vector<std::size_t> perm(12);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  perm_rng.shuffle(perm);

  PatchFeatureBag shuffled = bag;
  for (std::size_t j = 0; j < 12; ++j) {
    for (std::size_t k = 0; k < dims.d_g; ++k) {
      shuffled.generic(j, k) = bag.generic(perm[j], k);
    }
    for (std::size_t k = 0; k < dims.d_m; ++k) {
      shuffled.morph(j, k) = bag.morph(perm[j], k);
    }
    shuffled.patch_class[j] = bag.patch_class[perm[j]];
  }
  auto permuted = forward_slide(model, shuffled);
  CHECK(std::abs(permuted.probability - base.probability) <= 1e-12);
  for (std::size_t j = 0; j < 12; ++j) {
    CHECK(std::abs(permuted.attention[j] - base.attention[perm[j]]) <= 1e-12);
  }
}

TEST_CASE("two-patch scalar model matches the hand calculation") {
  PrismDims dims;
  dims.d_g = 1;
  dims.d_m = 1;
  dims.d_prime = 1;
  dims.d = 1;
  dims.l = 1;
  dims.fusion_mode = fusion::Mode::factorized;
  PrismModel model(dims, {});
  model.fusion.w_g.value(0, 0) = 1.0;
  model.fusion.w_m.value(0, 0) = 1.0;
  model.fusion.w_fusion.value(0, 0) = 1.0;
  model.attention.v.value(0, 0) = 1.0;
  model.attention.u.value(0, 0) = 1.0;
  model.attention.w.value(0, 0) = 1.0;
  model.head_w.value(0, 0) = 1.0;
  model.head_b.value(0, 0) = 0.0;

  PatchFeatureBag bag;
  bag.patient_id = "hand";
  bag.generic = num::Matrix{{2.0}, {-1.0}};
  bag.morph = num::Matrix{{3.0}, {1.0}};
  bag.patch_class = {0, 9};

  double f1 = 6.0, f2 = -1.0;
  double e1 = std::tanh(f1) * sigmoid(f1);
  double e2 = std::tanh(f2) * sigmoid(f2);
  double a1 = std::exp(e1) / (std::exp(e1) + std::exp(e2));
  double expected = sigmoid(a1 * f1 + (1.0 - a1) * f2);

  auto pred = forward_slide(model, bag);
  CHECK(pred.probability == doctest::Approx(expected).epsilon(1e-12));
  CHECK(pred.attention[0] == doctest::Approx(a1).epsilon(1e-12));
  CHECK(pred.slide_repr[0] ==
        doctest::Approx(a1 * f1 + (1.0 - a1) * f2).epsilon(1e-12));
}

TEST_CASE("full loss gradient passes finite differences on 3-patch bags") {
  for (fusion::Mode mode : {fusion::Mode::factorized, fusion::Mode::exact}) {
    PrismDims dims = small_dims(mode);
    PrismHyper hyper;
    hyper.l1 = 5e-4;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      SplitRng rng(100 + seed);
      PrismModel model = PrismModel::xavier(dims, hyper, rng);
      SplitRng bag_rng(200 + seed);
      auto bag = random_bag("g", 3, dims, bag_rng);
      int label = seed % 2 == 0 ? 1 : 0;

      model.zero_grads();
      slide_backward(model, bag, label);
      auto params = model.params();
      auto loss = [&] { return slide_loss(model, bag, label); };
      CHECK(num::finite_diff_check(loss, params) < 1e-4);
    }
  }
}

TEST_CASE("single-slide overfit drives the data loss under 0.05") {
  PrismDims dims = small_dims();
  PrismHyper hyper;
  hyper.lr = 1e-2;
  hyper.l1 = 5e-4;
  SplitRng rng(12);
  PrismModel model = PrismModel::xavier(dims, hyper, rng);
  SplitRng bag_rng(13);
  auto bag = random_bag("overfit", 5, dims, bag_rng);

  num::AdamState adam({.lr = hyper.lr});
  auto params = model.params();
  for (int step = 0; step < 200; ++step) {
    model.zero_grads();
    slide_backward(model, bag, 1);
    adam.step(params);
  }
  double bce = slide_loss(model, bag, 1) - hyper.l1 * model.l1_norm();
  CHECK(bce < 0.05);
}

namespace {

struct TinyCohort {
  std::vector<PatchFeatureBag> bags;
  std::vector<cohort::ClinicalRecord> clinical;
};

// Labelable patients whose bags carry a mean shift tied to the label.
TinyCohort tiny_cohort(std::size_t n, const PrismDims& dims,
                       std::uint64_t seed) {
  TinyCohort out;
  SplitRng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    char id[16];
    std::snprintf(id, sizeof(id), "T%04zu", i);
    int label = i % 2 == 0 ? 1 : 0;
    SplitRng brng = rng.split(i);
    auto bag = random_bag(id, 4 + brng.uniform_index(5), dims, brng,
                          label == 1 ? 1.2 : -1.2);
    cohort::ClinicalRecord rec;
    rec.patient_id = id;
    rec.age = 50 + static_cast<double>(i % 30);
    rec.bmi = 24 + static_cast<double>(i % 10);
    rec.income = 30000 + 100.0 * static_cast<double>(i);
    rec.time_months = label == 1 ? 20.0 + static_cast<double>(i) : 70.0;
    rec.died = label == 1;
    rec.label5y = label;
    out.bags.push_back(std::move(bag));
    out.clinical.push_back(std::move(rec));
  }
  return out;
}

}  // namespace

TEST_CASE("train_prism is deterministic and thread-count independent") {
  PrismDims dims = small_dims();
  PrismHyper hyper;
  hyper.lr = 1e-3;
  hyper.epochs = 3;
  auto data = tiny_cohort(40, dims, 77);
  auto folds = cv::make_folds(data.clinical, 5, SplitRng(21));

  auto r1 = train_prism(data.bags, data.clinical, folds, dims, hyper,
                        SplitRng(31), 1);
  auto r2 = train_prism(data.bags, data.clinical, folds, dims, hyper,
                        SplitRng(31), 4);
  REQUIRE(r1.fold_models.size() == 5);
  REQUIRE(r1.predictions.size() == data.clinical.size());
  for (std::size_t f = 0; f < 5; ++f) {
    auto pa = r1.fold_models[f].params();
    auto pb = r2.fold_models[f].params();
    for (std::size_t i = 0; i < pa.size(); ++i) {
      CHECK(pa[i]->value == pb[i]->value);
    }
  }
  for (std::size_t i = 0; i < r1.predictions.size(); ++i) {
    CHECK(r1.predictions[i].patient_id == r2.predictions[i].patient_id);
    CHECK(r1.predictions[i].prob == r2.predictions[i].prob);
  }

  // CV accounting: every patient appears exactly once as test.
  std::set<std::string> seen;
  for (const auto& row : r1.predictions) seen.insert(row.patient_id);
  CHECK(seen.size() == data.clinical.size());
}

TEST_CASE("raising the L1 coefficient shrinks the trained weight mass") {
  PrismDims dims = small_dims();
  auto data = tiny_cohort(30, dims, 78);
  auto folds = cv::make_folds(data.clinical, 5, SplitRng(22));

  PrismHyper weak;
  weak.lr = 1e-3;
  weak.epochs = 5;
  weak.l1 = 5e-4;
  PrismHyper strong = weak;
  strong.l1 = 5e-1;

  auto r_weak = train_prism(data.bags, data.clinical, folds, dims, weak,
                            SplitRng(41), 1);
  auto r_strong = train_prism(data.bags, data.clinical, folds, dims, strong,
                              SplitRng(41), 1);
  double sum_weak = 0, sum_strong = 0;
  for (std::size_t f = 0; f < 5; ++f) {
    sum_weak += r_weak.fold_models[f].l1_norm();
    sum_strong += r_strong.fold_models[f].l1_norm();
  }
  CHECK(sum_strong < sum_weak);
}

TEST_CASE("single-class training fold is a data error") {
  PrismDims dims = small_dims();
  auto data = tiny_cohort(20, dims, 79);
  for (auto& rec : data.clinical) {
    rec.label5y = 1;  // everyone dies early
    rec.died = true;
    rec.time_months = 12.0;
  }
  auto folds = cv::make_folds(data.clinical, 5, SplitRng(23));
  CHECK_THROWS_AS(train_prism(data.bags, data.clinical, folds, dims, {},
                              SplitRng(51), 1),
                  DataError);
}

TEST_CASE("model checkpoint round trip preserves behavior") {
  PrismDims dims = small_dims(fusion::Mode::exact);
  SplitRng rng(14);
  PrismModel model = PrismModel::xavier(dims, {}, rng);
  auto path = std::filesystem::temp_directory_path() / "prism_model.bin";
  save_model(path, model, 1234, 2);
  PrismModel back = load_model(path);

  SplitRng bag_rng(15);
  auto bag = random_bag("rt", 7, dims, bag_rng);
  CHECK(forward_slide(back, bag).probability ==
        forward_slide(model, bag).probability);
  CHECK(back.dims().fusion_mode == fusion::Mode::exact);
  std::filesystem::remove(path);
  std::filesystem::remove(path.string() + ".json");
}

TEST_CASE("attention export sums to one per patient and covers all patches") {
  PrismDims dims = small_dims();
  SplitRng rng(16);
  PrismModel model = PrismModel::xavier(dims, {}, rng);
  SplitRng bag_rng(17);
  std::vector<PatchFeatureBag> bags;
  bags.push_back(random_bag("A1", 5, dims, bag_rng));
  bags.push_back(random_bag("A2", 8, dims, bag_rng));

  std::vector<SlidePrediction> preds;
  std::map<std::string, const PatchFeatureBag*> by_id;
  for (const auto& b : bags) {
    preds.push_back(forward_slide(model, b));
    by_id[b.patient_id] = &b;
  }
  std::string csv = attention_to_csv(preds, by_id);

  auto table = parse_csv(csv, "attention");
  CHECK(table.rows.size() == 13);  // 5 + 8 patches
  std::map<std::string, double> sums;
  for (const auto& row : table.rows) {
    sums[row[0]] += parse_double(row[3], "attention");
  }
  CHECK(std::abs(sums["A1"] - 1.0) <= 1e-6);
  CHECK(std::abs(sums["A2"] - 1.0) <= 1e-6);
}
