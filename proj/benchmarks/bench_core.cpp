#include <benchmark/benchmark.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "prism/cohort.hpp"
#include "prism/matrix.hpp"
#include "prism/milattn.hpp"
#include "prism/rng.hpp"
#include "prism/survstats.hpp"

namespace {

using namespace prism;

num::Matrix random_matrix(std::size_t r, std::size_t c, SplitRng& rng) {
  num::Matrix m(r, c);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

void BM_Matmul(benchmark::State& state) {
  auto n = static_cast<std::size_t>(state.range(0));
  SplitRng rng(1);
  num::Matrix a = random_matrix(n, n, rng);
  num::Matrix b = random_matrix(n, n, rng);
  for (auto _ : state) {
    auto c = num::matmul(a, b);
    benchmark::DoNotOptimize(c.data().data());
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(8, 128)->Complexity();

void BM_ForwardSlide(benchmark::State& state) {
  mil::PrismDims dims;
  SplitRng rng(2);
  mil::PrismModel model = mil::PrismModel::xavier(dims, {}, rng);
  cohort::PatchFeatureBag bag;
  bag.patient_id = "bench";
  auto n = static_cast<std::size_t>(state.range(0));
  bag.generic = random_matrix(n, dims.d_g, rng);
  bag.morph = random_matrix(n, dims.d_m, rng);
  bag.patch_class.assign(n, 0);
  for (auto _ : state) {
    auto pred = mil::forward_slide(model, bag);
    benchmark::DoNotOptimize(pred.probability);
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_ForwardSlide)->RangeMultiplier(2)->Range(8, 256)->Complexity();

void BM_SlideBackward(benchmark::State& state) {
  mil::PrismDims dims;
  SplitRng rng(3);
  mil::PrismModel model = mil::PrismModel::xavier(dims, {}, rng);
  cohort::PatchFeatureBag bag;
  bag.patient_id = "bench";
  auto n = static_cast<std::size_t>(state.range(0));
  bag.generic = random_matrix(n, dims.d_g, rng);
  bag.morph = random_matrix(n, dims.d_m, rng);
  bag.patch_class.assign(n, 0);
  for (auto _ : state) {
    model.zero_grads();
    double loss = mil::slide_backward(model, bag, 1);
    benchmark::DoNotOptimize(loss);
  }
}
BENCHMARK(BM_SlideBackward)->Arg(32)->Arg(64);

struct SurvivalFixture {
  std::vector<double> scores, times;
  std::vector<std::uint8_t> events;

  explicit SurvivalFixture(std::size_t n) {
    SplitRng rng(4);
    for (std::size_t i = 0; i < n; ++i) {
      double x = rng.normal();
      scores.push_back(x);
      times.push_back(rng.weibull(1.5, 50.0) * std::exp(-0.5 * x) + 0.01);
      events.push_back(rng.bernoulli(0.7) ? 1 : 0);
    }
  }
};

void BM_CoxFit(benchmark::State& state) {
  SurvivalFixture data(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    auto fit = stats::cox_fit(data.scores, data.times, data.events);
    benchmark::DoNotOptimize(fit.beta);
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_CoxFit)->RangeMultiplier(2)->Range(64, 1024)->Complexity();

void BM_KaplanMeier(benchmark::State& state) {
  SurvivalFixture data(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    auto curve = stats::kaplan_meier(data.times, data.events);
    benchmark::DoNotOptimize(curve.survival.data());
  }
}
BENCHMARK(BM_KaplanMeier)->Arg(256)->Arg(1024);

void BM_ConcordanceIndex(benchmark::State& state) {
  SurvivalFixture data(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    double c = stats::concordance_index(data.scores, data.times, data.events);
    benchmark::DoNotOptimize(c);
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_ConcordanceIndex)->RangeMultiplier(2)->Range(64, 512)->Complexity();

void BM_WilcoxonExact(benchmark::State& state) {
  auto n = static_cast<std::size_t>(state.range(0));
  SplitRng rng(5);
  std::vector<double> a, b;
  for (std::size_t i = 0; i < n; ++i) {
    a.push_back(rng.normal());
    b.push_back(rng.normal());
  }
  for (auto _ : state) {
    double p = stats::wilcoxon_signed_rank(a, b);
    benchmark::DoNotOptimize(p);
  }
}
BENCHMARK(BM_WilcoxonExact)->DenseRange(8, 20, 4);

void BM_GenerateBag(benchmark::State& state) {
  cohort::CohortConfig config;
  config.seed = 6;
  auto draws = cohort::generate_clinical(config);
  SplitRng rng(7);
  for (auto _ : state) {
    auto bag = cohort::generate_bag(draws[0].record, draws[0].latent, config,
                                    rng.split(0));
    benchmark::DoNotOptimize(bag.morph.data().data());
  }
}
BENCHMARK(BM_GenerateBag);

}  // namespace

BENCHMARK_MAIN();
