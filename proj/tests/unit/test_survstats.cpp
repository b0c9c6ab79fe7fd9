#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "prism/errors.hpp"
#include "prism/rng.hpp"
#include "prism/survstats.hpp"

using namespace prism;
using namespace prism::stats;

namespace {

using Events = std::vector<std::uint8_t>;

// Brute-force comparable-pair enumerator, written independently of the
// library routine: walks ordered pairs (i, j) and applies Harrell's rule
// directly.
double cindex_oracle(const std::vector<double>& scores,
                     const std::vector<double>& times, const Events& events) {
  double num = 0.0;
  double den = 0.0;
  const std::size_t n = scores.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!events[i]) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      bool comparable =
          times[i] < times[j] || (times[i] == times[j] && !events[j]);
      if (!comparable) continue;
      den += 1.0;
      if (scores[i] > scores[j]) num += 1.0;
      else if (scores[i] == scores[j]) num += 0.5;
    }
  }
  return num / den;
}

// All-pairs AUC count.
double auc_oracle(const std::vector<double>& scores,
                  const std::vector<int>& labels) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      den += 1.0;
      if (scores[i] > scores[j]) num += 1.0;
      else if (scores[i] == scores[j]) num += 0.5;
    }
  }
  return num / den;
}

// Recursive sign enumeration for the Wilcoxon null, independent of the
// library's Gray-code walk.
void enumerate_signs(const std::vector<double>& ranks, std::size_t i,
                     double acc, std::vector<double>& sums) {
  if (i == ranks.size()) {
    sums.push_back(acc);
    return;
  }
  enumerate_signs(ranks, i + 1, acc, sums);
  enumerate_signs(ranks, i + 1, acc + ranks[i], sums);
}

double wilcoxon_oracle(const std::vector<double>& a,
                       const std::vector<double>& b) {
  std::vector<double> diffs;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) diffs.push_back(a[i] - b[i]);
  }
  std::vector<double> abs_sorted;
  for (double d : diffs) abs_sorted.push_back(std::abs(d));
  std::sort(abs_sorted.begin(), abs_sorted.end());
  auto rank_of = [&](double ad) {
    double lo = 0, hi = 0;
    for (std::size_t i = 0; i < abs_sorted.size(); ++i) {
      if (abs_sorted[i] == ad) {
        if (lo == 0) lo = static_cast<double>(i + 1);
        hi = static_cast<double>(i + 1);
      }
    }
    return 0.5 * (lo + hi);
  };
  std::vector<double> ranks;
  double w = 0.0;
  for (double d : diffs) {
    ranks.push_back(rank_of(std::abs(d)));
    if (d > 0) w += ranks.back();
  }
  std::vector<double> sums;
  enumerate_signs(ranks, 0, 0.0, sums);
  double le = 0, ge = 0;
  for (double s : sums) {
    if (s <= w + 1e-12) le += 1.0;
    if (s >= w - 1e-12) ge += 1.0;
  }
  double total = static_cast<double>(sums.size());
  return std::min(1.0, 2.0 * std::min(le, ge) / total);
}

}  // namespace

TEST_CASE("kaplan-meier hand fixture") {
  std::vector<double> times{1, 2, 3};
  Events events{1, 0, 1};
  auto curve = kaplan_meier(times, events);
  REQUIRE(curve.time.size() == 3);
  CHECK(curve.survival[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(curve.survival[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(curve.survival[2] == 0.0);
  CHECK(curve.at_risk == std::vector<std::size_t>{3, 2, 1});
  CHECK(curve.deaths == std::vector<std::size_t>{1, 0, 1});
  CHECK(curve.survival_at(2.5) == doctest::Approx(2.0 / 3.0));
  CHECK(curve.survival_at(0.5) == 1.0);
}

TEST_CASE("kaplan-meier all censored stays at one") {
  std::vector<double> times{3, 1, 7};
  Events events{0, 0, 0};
  auto curve = kaplan_meier(times, events);
  for (double s : curve.survival) CHECK(s == 1.0);
}

TEST_CASE("kaplan-meier full-event case reaches zero") {
  std::vector<double> times{5, 1, 3, 9};
  Events events{1, 1, 1, 1};
  auto curve = kaplan_meier(times, events);
  CHECK(curve.survival.back() == 0.0);
  // Without censoring the estimate equals the empirical survivor fraction.
  std::size_t n = times.size();
  std::vector<double> sorted = times;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < n; ++i) {
    double expected = static_cast<double>(n - (i + 1)) / static_cast<double>(n);
    CHECK(curve.survival[i] == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("kaplan-meier monotone non-increasing") {
  SplitRng rng(3);
  std::vector<double> times;
  Events events;
  for (int i = 0; i < 60; ++i) {
    times.push_back(rng.uniform(1.0, 80.0));
    events.push_back(rng.bernoulli(0.6) ? 1 : 0);
  }
  auto curve = kaplan_meier(times, events);
  for (std::size_t i = 1; i < curve.survival.size(); ++i) {
    CHECK(curve.survival[i] <= curve.survival[i - 1]);
    CHECK(curve.at_risk[i] <= curve.at_risk[i - 1]);
    CHECK(curve.survival[i] >= 0.0);
    CHECK(curve.survival[i] <= 1.0);
  }
}

TEST_CASE("kaplan-meier rejects empty input") {
  std::vector<double> times;
  Events events;
  CHECK_THROWS_AS(kaplan_meier(times, events), DataError);
}

TEST_CASE("cox constant scores give the null fit") {
  std::vector<double> scores{1, 1, 1, 1};
  std::vector<double> times{1, 2, 3, 4};
  Events events{1, 1, 1, 0};
  auto fit = cox_fit(scores, times, events);
  CHECK(fit.beta == 0.0);
  CHECK(fit.hazard_ratio == 1.0);
  CHECK_FALSE(fit.converged);
  CHECK_FALSE(fit.diagnostic.empty());
}

TEST_CASE("cox six-subject fixture matches grid-search oracle") {
  // (1,d,x=1),(2,d,x=1),(3,d,x=0),(4,c,x=1),(5,d,x=0),(6,c,x=0)
  std::vector<double> scores{1, 1, 0, 1, 0, 0};
  std::vector<double> times{1, 2, 3, 4, 5, 6};
  Events events{1, 1, 1, 0, 1, 0};

  auto fit = cox_fit(scores, times, events, TiesMethod::efron);
  REQUIRE(fit.converged);

  // Grid-search maximization of the explicit partial likelihood, written
  // against the definition rather than the solver.
  auto loglik = [&](double beta) {
    double ll = 0.0;
    for (std::size_t i = 0; i < times.size(); ++i) {
      if (!events[i]) continue;
      double denom = 0.0;
      for (std::size_t j = 0; j < times.size(); ++j) {
        if (times[j] >= times[i]) denom += std::exp(beta * scores[j]);
      }
      ll += beta * scores[i] - std::log(denom);
    }
    return ll;
  };
  double best_beta = 0.0, best_ll = loglik(0.0);
  for (double beta = -5.0; beta <= 5.0; beta += 2e-5) {
    double ll = loglik(beta);
    if (ll > best_ll) {
      best_ll = ll;
      best_beta = beta;
    }
  }
  CHECK(std::abs(fit.beta - best_beta) < 1e-4);
  CHECK(fit.hazard_ratio == doctest::Approx(std::exp(fit.beta)));
  CHECK(fit.ci95_low < fit.hazard_ratio);
  CHECK(fit.ci95_high > fit.hazard_ratio);
}

TEST_CASE("cox shift and scale invariances of the Wald z") {
  SplitRng rng(17);
  std::vector<double> scores, times;
  Events events;
  for (int i = 0; i < 80; ++i) {
    double x = rng.normal();
    scores.push_back(x);
    times.push_back(rng.weibull(1.3, 40.0) * std::exp(-0.4 * x) + 0.01);
    events.push_back(rng.bernoulli(0.75) ? 1 : 0);
  }
  auto base = cox_fit(scores, times, events);
  REQUIRE(base.converged);

  std::vector<double> shifted = scores;
  for (double& x : shifted) x += 11.0;
  auto shift_fit = cox_fit(shifted, times, events);
  CHECK(shift_fit.beta == doctest::Approx(base.beta).epsilon(1e-8));

  std::vector<double> scaled = scores;
  for (double& x : scaled) x *= 2.5;
  auto scale_fit = cox_fit(scaled, times, events);
  CHECK(scale_fit.beta == doctest::Approx(base.beta / 2.5).epsilon(1e-6));
  CHECK(scale_fit.wald_z() == doctest::Approx(base.wald_z()).epsilon(1e-6));
  CHECK(scale_fit.log_likelihood ==
        doctest::Approx(base.log_likelihood).epsilon(1e-6));
}

TEST_CASE("cox efron and breslow agree without tied event times") {
  std::vector<double> scores{0.3, -1.2, 0.8, 0.1, -0.4, 1.5, -0.9};
  std::vector<double> times{2, 4, 5, 7, 9, 11, 13};
  Events events{1, 0, 1, 1, 0, 1, 1};
  auto efron = cox_fit(scores, times, events, TiesMethod::efron);
  auto breslow = cox_fit(scores, times, events, TiesMethod::breslow);
  REQUIRE(efron.converged);
  CHECK(efron.beta == doctest::Approx(breslow.beta).epsilon(1e-10));
  CHECK(efron.std_err == doctest::Approx(breslow.std_err).epsilon(1e-10));
}

TEST_CASE("cox flags monotone likelihood") {
  // Perfect separation: the only deaths carry the largest scores.
  std::vector<double> scores{5, 4, 0.1, 0.2, 0.05, 0.15};
  std::vector<double> times{1, 2, 8, 9, 10, 11};
  Events events{1, 1, 0, 0, 0, 0};
  auto fit = cox_fit(scores, times, events);
  CHECK_FALSE(fit.converged);
  CHECK_FALSE(fit.diagnostic.empty());
}

TEST_CASE("dichotomized cox direction and degeneracy") {
  SplitRng rng(23);
  std::vector<double> probs, times;
  Events events;
  for (int i = 0; i < 100; ++i) {
    double p = rng.uniform();
    probs.push_back(p);
    // Anti-predictive: high probability lives longer.
    times.push_back(rng.weibull(1.5, 30.0) * std::exp(1.2 * p) + 0.01);
    events.push_back(1);
  }
  auto groups = dichotomized_cox(probs, times, events);
  CHECK(groups.fit.hazard_ratio < 1.0);
  CHECK(groups.n_high + groups.n_low == probs.size());

  std::vector<double> same(40, 0.5);
  std::vector<double> t(40);
  Events e(40, 1);
  for (int i = 0; i < 40; ++i) t[static_cast<std::size_t>(i)] = i + 1.0;
  CHECK_THROWS_AS(dichotomized_cox(same, t, e), DataError);
}

TEST_CASE("concordance perfect ranking and ties") {
  std::vector<double> times{3, 1, 4, 2, 5};
  Events all(5, 1);
  std::vector<double> scores;
  for (double t : times) scores.push_back(-t);
  CHECK(concordance_index(scores, times, all) == 1.0);

  std::vector<double> constant(5, 0.7);
  CHECK(concordance_index(constant, times, all) == 0.5);
}

TEST_CASE("concordance matches brute-force oracle") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SplitRng rng(seed);
    std::vector<double> scores, times;
    Events events;
    for (int i = 0; i < 50; ++i) {
      scores.push_back(std::round(rng.normal() * 4.0) / 4.0);  // force ties
      times.push_back(static_cast<double>(rng.uniform_index(30) + 1));
      events.push_back(rng.bernoulli(0.7) ? 1 : 0);
    }
    bool any_event = std::find(events.begin(), events.end(), 1) != events.end();
    if (!any_event) events[0] = 1;
    CHECK(concordance_index(scores, times, events) ==
          cindex_oracle(scores, times, events));
  }
}

TEST_CASE("concordance complement identity without score ties") {
  SplitRng rng(77);
  std::vector<double> scores, times;
  Events events;
  for (int i = 0; i < 40; ++i) {
    scores.push_back(rng.normal());
    times.push_back(rng.uniform(1.0, 50.0));
    events.push_back(rng.bernoulli(0.6) ? 1 : 0);
  }
  events[0] = 1;
  std::vector<double> negated;
  for (double s : scores) negated.push_back(-s);
  double c1 = concordance_index(scores, times, events);
  double c2 = concordance_index(negated, times, events);
  CHECK(c1 + c2 == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("auc extremes") {
  std::vector<double> sep{0.9, 0.8, 0.2, 0.1};
  std::vector<int> labels{1, 1, 0, 0};
  CHECK(roc_auc(sep, labels) == 1.0);

  std::vector<double> equal(6, 0.5);
  std::vector<int> mixed{1, 0, 1, 0, 1, 0};
  CHECK(roc_auc(equal, mixed) == 0.5);

  std::vector<int> single(4, 1);
  CHECK_THROWS_AS(roc_auc(sep, single), DataError);
}

TEST_CASE("auc matches all-pairs oracle") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SplitRng rng(seed + 100);
    std::vector<double> scores;
    std::vector<int> labels;
    for (int i = 0; i < 20; ++i) {
      scores.push_back(std::round(rng.uniform() * 10.0) / 10.0);
      labels.push_back(rng.bernoulli(0.4) ? 1 : 0);
    }
    labels[0] = 1;
    labels[1] = 0;
    CHECK(roc_auc(scores, labels) ==
          doctest::Approx(auc_oracle(scores, labels)).epsilon(1e-12));
  }
}

TEST_CASE("auc invariant under strictly increasing transforms") {
  SplitRng rng(4);
  std::vector<double> scores;
  std::vector<int> labels;
  for (int i = 0; i < 30; ++i) {
    scores.push_back(rng.uniform());
    labels.push_back(rng.bernoulli(0.5) ? 1 : 0);
  }
  labels[0] = 1;
  labels[1] = 0;
  std::vector<double> transformed;
  for (double s : scores) transformed.push_back(std::exp(3.0 * s) - 0.7);
  CHECK(roc_auc(scores, labels) ==
        doctest::Approx(roc_auc(transformed, labels)).epsilon(1e-12));
}

TEST_CASE("roc staircase spans the unit square and integrates to the auc") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SplitRng rng(seed + 300);
    std::vector<double> scores;
    std::vector<int> labels;
    for (int i = 0; i < 40; ++i) {
      scores.push_back(std::round(rng.uniform() * 20.0) / 20.0);
      labels.push_back(rng.bernoulli(0.35) ? 1 : 0);
    }
    labels[0] = 1;
    labels[1] = 0;
    auto points = roc_points(scores, labels);
    REQUIRE(points.size() >= 2);
    CHECK(points.front().fpr == 0.0);
    CHECK(points.front().tpr == 0.0);
    CHECK(points.back().fpr == 1.0);
    CHECK(points.back().tpr == 1.0);
    double area = 0.0;
    for (std::size_t i = 1; i < points.size(); ++i) {
      CHECK(points[i].fpr >= points[i - 1].fpr);
      CHECK(points[i].tpr >= points[i - 1].tpr);
      area += (points[i].fpr - points[i - 1].fpr) *
              0.5 * (points[i].tpr + points[i - 1].tpr);
    }
    CHECK(area == doctest::Approx(roc_auc(scores, labels)).epsilon(1e-9));
  }
}

TEST_CASE("confusion metrics fixtures") {
  std::vector<double> perfect{0.9, 0.8, 0.1, 0.2};
  std::vector<int> labels{1, 1, 0, 0};
  auto m = confusion_metrics(perfect, labels, 0.5);
  CHECK(m.accuracy == 100.0);
  CHECK(m.sensitivity == 100.0);
  CHECK(m.specificity == 100.0);

  std::vector<double> all_neg{0.1, 0.2, 0.3, 0.4};
  auto m2 = confusion_metrics(all_neg, labels, 0.5);
  CHECK(m2.sensitivity == 0.0);
  CHECK(m2.specificity == 100.0);

  // TP=2, FN=1, TN=3, FP=1.
  std::vector<double> probs{0.9, 0.8, 0.1, 0.2, 0.3, 0.4, 0.7};
  std::vector<int> y{1, 1, 1, 0, 0, 0, 0};
  auto m3 = confusion_metrics(probs, y, 0.5);
  CHECK(m3.tp == 2);
  CHECK(m3.fn == 1);
  CHECK(m3.tn == 3);
  CHECK(m3.fp == 1);
  CHECK(m3.sensitivity == doctest::Approx(66.67).epsilon(1e-4));
  CHECK(m3.specificity == doctest::Approx(75.0).epsilon(1e-12));
  CHECK(m3.accuracy == doctest::Approx(71.43).epsilon(1e-4));
}

TEST_CASE("accuracy is the class-balance weighted mean of sensitivity and specificity") {
  SplitRng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    SplitRng t = rng.split(trial);
    std::vector<double> probs;
    std::vector<int> labels;
    for (int i = 0; i < 25; ++i) {
      probs.push_back(t.uniform());
      labels.push_back(t.bernoulli(0.4) ? 1 : 0);
    }
    labels[0] = 1;
    labels[1] = 0;
    auto m = confusion_metrics(probs, labels, 0.5);
    double pos = static_cast<double>(m.tp + m.fn);
    double neg = static_cast<double>(m.tn + m.fp);
    double weighted =
        (m.sensitivity * pos + m.specificity * neg) / (pos + neg);
    CHECK(m.accuracy == doctest::Approx(weighted).epsilon(1e-10));
    CHECK(m.accuracy >= std::min(m.sensitivity, m.specificity) - 1e-10);
    CHECK(m.accuracy <= std::max(m.sensitivity, m.specificity) + 1e-10);
  }
}

TEST_CASE("wilcoxon constant shift n=6 exact p") {
  std::vector<double> a{1, 2, 3, 4, 5, 6};
  std::vector<double> b;
  for (double x : a) b.push_back(x - 0.01);
  CHECK(wilcoxon_signed_rank(a, b) == doctest::Approx(0.03125).epsilon(1e-12));
}

TEST_CASE("wilcoxon identical inputs is a data error") {
  std::vector<double> a{1, 2, 3, 4, 5};
  CHECK_THROWS_AS(wilcoxon_signed_rank(a, a), DataError);
}

TEST_CASE("wilcoxon matches recursive enumeration oracle") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SplitRng rng(seed + 500);
    std::vector<double> a, b;
    for (int i = 0; i < 10; ++i) {
      a.push_back(std::round(rng.normal() * 2.0) / 2.0);
      b.push_back(std::round(rng.normal() * 2.0) / 2.0);
    }
    // Ensure enough non-zero differences.
    int nonzero = 0;
    for (std::size_t i = 0; i < a.size(); ++i) nonzero += a[i] != b[i] ? 1 : 0;
    if (nonzero < 5) continue;
    CHECK(wilcoxon_signed_rank(a, b) ==
          doctest::Approx(wilcoxon_oracle(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("wilcoxon normal approximation is sane for larger n") {
  SplitRng rng(9);
  std::vector<double> a, b;
  for (int i = 0; i < 40; ++i) {
    double base = rng.normal();
    a.push_back(base + 0.8 + 0.1 * rng.normal());
    b.push_back(base);
  }
  double p = wilcoxon_signed_rank(a, b);
  CHECK(p > 0.0);
  CHECK(p < 1e-4);

  // No shift: p should not be extreme.
  std::vector<double> c, d;
  for (int i = 0; i < 40; ++i) {
    c.push_back(rng.normal());
    d.push_back(rng.normal());
  }
  double p2 = wilcoxon_signed_rank(c, d);
  CHECK(p2 > 0.001);
  CHECK(p2 <= 1.0);
}
