#include "prism/survstats.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>

#include "prism/errors.hpp"

namespace prism::stats {

namespace {

void check_survival_input(std::span<const double> times, EventSpan events,
                          const char* who) {
  if (times.empty()) throw DataError(std::string(who) + ": empty input");
  if (times.size() != events.size()) {
    throw DimError(std::string(who) + ": times/events length mismatch");
  }
  for (double t : times) {
    if (!(t > 0.0) || !std::isfinite(t)) {
      throw DataError(std::string(who) + ": times must be finite and > 0");
    }
  }
}

std::vector<std::size_t> order_by_time(std::span<const double> times) {
  std::vector<std::size_t> idx(times.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) {
                     return times[a] < times[b];
                   });
  return idx;
}

}  // namespace

double SurvivalCurve::survival_at(double t) const {
  double s = 1.0;
  for (std::size_t i = 0; i < time.size(); ++i) {
    if (time[i] > t) break;
    s = survival[i];
  }
  return s;
}

SurvivalCurve kaplan_meier(std::span<const double> times, EventSpan events) {
  check_survival_input(times, events, "kaplan_meier");
  auto idx = order_by_time(times);
  const std::size_t n = times.size();

  SurvivalCurve curve;
  double s = 1.0;
  std::size_t i = 0;
  while (i < n) {
    double t = times[idx[i]];
    std::size_t at_risk = n - i;
    std::size_t deaths = 0;
    while (i < n && times[idx[i]] == t) {
      if (events[idx[i]]) ++deaths;
      ++i;
    }
    if (deaths > 0) {
      s *= static_cast<double>(at_risk - deaths) /
           static_cast<double>(at_risk);
    }
    curve.time.push_back(t);
    curve.at_risk.push_back(at_risk);
    curve.deaths.push_back(deaths);
    curve.survival.push_back(s);
  }
  return curve;
}

namespace {

struct CoxObs {
  double time;
  double x;
  bool death;
};

std::vector<CoxObs> cox_prepare(std::span<const double> scores,
                                std::span<const double> times,
                                EventSpan events) {
  check_survival_input(times, events, "cox_fit");
  if (scores.size() != times.size()) {
    throw DimError("cox_fit: scores/times length mismatch");
  }
  for (double x : scores) {
    if (!std::isfinite(x)) throw DataError("cox_fit: non-finite risk score");
  }
  auto idx = order_by_time(times);
  std::vector<CoxObs> obs;
  obs.reserve(times.size());
  for (std::size_t i : idx) {
    obs.push_back({times[i], scores[i], events[i] != 0});
  }
  return obs;
}

struct CoxEval {
  double loglik = 0.0;
  double score = 0.0;
  double info = 0.0;
  bool finite = true;
};

// One sweep over the observations (sorted ascending by time, walked from the
// back) accumulating the risk-set sums S0 = sum e^{bx}, S1 = sum x e^{bx},
// S2 = sum x^2 e^{bx}. Efron subtracts a growing fraction of the tied-death
// sums from each of the d denominators at a tied event time; Breslow uses
// the full risk set for all d.
CoxEval cox_eval(const std::vector<CoxObs>& obs, double beta,
                 TiesMethod ties) {
  CoxEval ev;
  double s0 = 0.0, s1 = 0.0, s2 = 0.0;
  std::ptrdiff_t i = static_cast<std::ptrdiff_t>(obs.size()) - 1;
  while (i >= 0) {
    double t = obs[i].time;
    double d0 = 0.0, d1 = 0.0, d2 = 0.0;
    double sum_x_deaths = 0.0;
    std::size_t d = 0;
    while (i >= 0 && obs[i].time == t) {
      double w = std::exp(beta * obs[i].x);
      if (!std::isfinite(w)) {
        ev.finite = false;
        return ev;
      }
      s0 += w;
      s1 += obs[i].x * w;
      s2 += obs[i].x * obs[i].x * w;
      if (obs[i].death) {
        ++d;
        d0 += w;
        d1 += obs[i].x * w;
        d2 += obs[i].x * obs[i].x * w;
        sum_x_deaths += obs[i].x;
      }
      --i;
    }
    if (d == 0) continue;
    ev.loglik += beta * sum_x_deaths;
    ev.score += sum_x_deaths;
    for (std::size_t r = 0; r < d; ++r) {
      double frac = ties == TiesMethod::efron
                        ? static_cast<double>(r) / static_cast<double>(d)
                        : 0.0;
      double den = s0 - frac * d0;
      double num1 = s1 - frac * d1;
      double num2 = s2 - frac * d2;
      if (!(den > 0.0)) {
        ev.finite = false;
        return ev;
      }
      double ratio = num1 / den;
      ev.loglik -= std::log(den);
      ev.score -= ratio;
      ev.info += num2 / den - ratio * ratio;
    }
  }
  if (!std::isfinite(ev.loglik) || !std::isfinite(ev.score) ||
      !std::isfinite(ev.info)) {
    ev.finite = false;
  }
  return ev;
}

}  // namespace

double cox_partial_loglik(double beta, std::span<const double> scores,
                          std::span<const double> times, EventSpan events,
                          TiesMethod ties) {
  auto obs = cox_prepare(scores, times, events);
  auto ev = cox_eval(obs, beta, ties);
  if (!ev.finite) {
    throw NumericError("cox_partial_loglik: overflow at beta = " +
                       std::to_string(beta));
  }
  return ev.loglik;
}

namespace {

CoxFit degenerate_fit(TiesMethod ties, const std::string& diagnostic) {
  CoxFit fit;
  fit.ties = ties;
  fit.converged = false;
  fit.diagnostic = diagnostic;
  fit.std_err = std::numeric_limits<double>::infinity();
  fit.ci95_low = 0.0;
  fit.ci95_high = std::numeric_limits<double>::infinity();
  fit.log_likelihood = std::nan("");
  return fit;
}

}  // namespace

CoxFit cox_fit(std::span<const double> scores, std::span<const double> times,
               EventSpan events, TiesMethod ties) {
  auto obs = cox_prepare(scores, times, events);

  // Degenerate inputs yield a flagged null fit (beta 0, HR 1) rather than an
  // exception; callers inspect `converged` and `diagnostic`.
  std::size_t n_events = 0;
  for (const auto& o : obs) n_events += o.death ? 1 : 0;
  if (n_events < 2) {
    return degenerate_fit(ties, "fewer than 2 events");
  }

  double mean_x = 0.0;
  for (const auto& o : obs) mean_x += o.x;
  mean_x /= static_cast<double>(obs.size());
  double var_x = 0.0;
  for (const auto& o : obs) var_x += (o.x - mean_x) * (o.x - mean_x);
  if (var_x <= 0.0) {
    return degenerate_fit(ties, "risk scores have zero variance");
  }

  CoxFit fit;
  fit.ties = ties;

  // Center the covariate for conditioning; beta is shift-invariant.
  std::vector<CoxObs> centered = obs;
  for (auto& o : centered) o.x -= mean_x;

  double beta = 0.0;
  CoxEval ev = cox_eval(centered, beta, ties);
  constexpr int kMaxIter = 100;
  constexpr double kTol = 1e-8;
  bool converged = false;
  int iter = 0;
  for (; iter < kMaxIter; ++iter) {
    if (!ev.finite || ev.info <= 0.0) {
      fit.diagnostic = "information matrix not positive; likelihood may be "
                       "monotone (perfect separation)";
      break;
    }
    double delta = ev.score / ev.info;
    // Backtrack if the full Newton step lowers the partial likelihood.
    double step = delta;
    CoxEval next = cox_eval(centered, beta + step, ties);
    int halvings = 0;
    while ((!next.finite || next.loglik < ev.loglik - 1e-12) &&
           halvings < 30) {
      step *= 0.5;
      next = cox_eval(centered, beta + step, ties);
      ++halvings;
    }
    beta += step;
    ev = next;
    if (std::abs(beta) > 40.0) {
      fit.diagnostic = "beta diverging; likelihood is monotone "
                       "(perfect separation)";
      break;
    }
    if (std::abs(step) < kTol) {
      converged = true;
      ++iter;
      break;
    }
  }

  fit.beta = beta;
  fit.iterations = iter;
  fit.converged = converged;
  fit.log_likelihood = ev.finite ? ev.loglik : std::nan("");
  if (!converged && iter >= kMaxIter && fit.diagnostic.empty()) {
    fit.diagnostic = "iteration limit reached";
  }
  if (ev.finite && ev.info > 0.0) {
    fit.std_err = 1.0 / std::sqrt(ev.info);
  } else {
    fit.std_err = std::numeric_limits<double>::infinity();
    fit.converged = false;
  }
  fit.hazard_ratio = std::exp(fit.beta);
  fit.ci95_low = std::exp(fit.beta - 1.96 * fit.std_err);
  fit.ci95_high = std::exp(fit.beta + 1.96 * fit.std_err);
  return fit;
}

RiskGroups dichotomized_cox(std::span<const double> probabilities,
                            std::span<const double> times, EventSpan events,
                            std::optional<double> cut, TiesMethod ties) {
  check_survival_input(times, events, "dichotomized_cox");
  if (probabilities.size() != times.size()) {
    throw DimError("dichotomized_cox: probabilities/times length mismatch");
  }
  RiskGroups groups;
  if (cut.has_value()) {
    groups.cut = *cut;
  } else {
    // Lower median, matching the cohort-median convention used elsewhere.
    std::vector<double> sorted(probabilities.begin(), probabilities.end());
    std::sort(sorted.begin(), sorted.end());
    groups.cut = sorted[(sorted.size() - 1) / 2];
  }

  std::vector<double> binary(probabilities.size());
  std::vector<double> t_high, t_low;
  std::vector<std::uint8_t> e_high, e_low;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    bool high = probabilities[i] > groups.cut;
    binary[i] = high ? 1.0 : 0.0;
    if (high) {
      t_high.push_back(times[i]);
      e_high.push_back(events[i]);
    } else {
      t_low.push_back(times[i]);
      e_low.push_back(events[i]);
    }
  }
  groups.n_high = t_high.size();
  groups.n_low = t_low.size();
  if (groups.n_high < 2 || groups.n_low < 2) {
    throw DataError("dichotomized_cox: degenerate cut (" +
                    std::to_string(groups.n_high) + " high / " +
                    std::to_string(groups.n_low) + " low)");
  }
  groups.fit = cox_fit(binary, times, events, ties);
  groups.high = kaplan_meier(t_high, e_high);
  groups.low = kaplan_meier(t_low, e_low);
  return groups;
}

double concordance_index(std::span<const double> scores,
                         std::span<const double> times, EventSpan events) {
  check_survival_input(times, events, "concordance_index");
  if (scores.size() != times.size()) {
    throw DimError("concordance_index: scores/times length mismatch");
  }
  const std::size_t n = times.size();
  double concordant = 0.0;
  std::size_t comparable = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      // The pair is usable when the shorter observed time is a death (or
      // when times tie, exactly one is a death).
      std::size_t shorter, longer;
      if (times[i] < times[j]) {
        shorter = i;
        longer = j;
      } else if (times[j] < times[i]) {
        shorter = j;
        longer = i;
      } else {
        if (events[i] && !events[j]) {
          shorter = i;
          longer = j;
        } else if (events[j] && !events[i]) {
          shorter = j;
          longer = i;
        } else {
          continue;
        }
      }
      if (!events[shorter]) continue;
      ++comparable;
      if (scores[shorter] > scores[longer]) concordant += 1.0;
      else if (scores[shorter] == scores[longer]) concordant += 0.5;
    }
  }
  if (comparable == 0) {
    throw DataError("concordance_index: no comparable pairs");
  }
  return concordant / static_cast<double>(comparable);
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw DimError("roc_auc: scores/labels length mismatch");
  }
  std::size_t n_pos = 0, n_neg = 0;
  for (int y : labels) {
    if (y == 1) ++n_pos;
    else if (y == 0) ++n_neg;
    else throw DataError("roc_auc: labels must be 0 or 1");
  }
  if (n_pos == 0 || n_neg == 0) {
    throw DataError("roc_auc: needs both classes present");
  }

  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });

  // Midranks, then the Mann-Whitney statistic from the positive rank sum.
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based
    for (std::size_t k = i; k < j; ++k) {
      if (labels[idx[k]] == 1) rank_sum_pos += avg_rank;
    }
    i = j;
  }
  double u = rank_sum_pos -
             static_cast<double>(n_pos) * static_cast<double>(n_pos + 1) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

std::vector<RocPoint> roc_points(std::span<const double> scores,
                                 std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw DimError("roc_points: scores/labels length mismatch");
  }
  std::size_t n_pos = 0, n_neg = 0;
  for (int y : labels) {
    if (y == 1) ++n_pos;
    else if (y == 0) ++n_neg;
    else throw DataError("roc_points: labels must be 0 or 1");
  }
  if (n_pos == 0 || n_neg == 0) {
    throw DataError("roc_points: needs both classes present");
  }

  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  std::vector<RocPoint> points;
  points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < idx.size()) {
    double threshold = scores[idx[i]];
    while (i < idx.size() && scores[idx[i]] == threshold) {
      if (labels[idx[i]] == 1) ++tp;
      else ++fp;
      ++i;
    }
    points.push_back({threshold,
                      static_cast<double>(fp) / static_cast<double>(n_neg),
                      static_cast<double>(tp) / static_cast<double>(n_pos)});
  }
  return points;
}

BinaryMetrics confusion_metrics(std::span<const double> probabilities,
                                std::span<const int> labels,
                                double threshold) {
  if (probabilities.size() != labels.size()) {
    throw DimError("confusion_metrics: probabilities/labels length mismatch");
  }
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw ConfigError("confusion_metrics: threshold must be in [0, 1]");
  }
  BinaryMetrics m;
  m.threshold = threshold;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    bool pred = probabilities[i] > threshold;
    if (labels[i] == 1) {
      pred ? ++m.tp : ++m.fn;
    } else if (labels[i] == 0) {
      pred ? ++m.fp : ++m.tn;
    } else {
      throw DataError("confusion_metrics: labels must be 0 or 1");
    }
  }
  auto pct = [](std::size_t num, std::size_t den) {
    return den == 0 ? std::nan("")
                    : 100.0 * static_cast<double>(num) /
                          static_cast<double>(den);
  };
  m.sensitivity = pct(m.tp, m.tp + m.fn);
  m.specificity = pct(m.tn, m.tn + m.fp);
  m.accuracy = pct(m.tp + m.tn, m.n());
  if (m.tp + m.fn > 0 && m.tn + m.fp > 0) {
    m.auc = roc_auc(probabilities, labels);
    m.auc_defined = true;
  } else {
    m.auc = std::nan("");
    m.auc_defined = false;
  }
  return m;
}

namespace {

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

}  // namespace

double wilcoxon_signed_rank(std::span<const double> a,
                            std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DataError("wilcoxon_signed_rank: unpaired lengths");
  }
  std::vector<double> diffs;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    if (!std::isfinite(d)) {
      throw DataError("wilcoxon_signed_rank: non-finite difference");
    }
    if (d != 0.0) diffs.push_back(d);
  }
  if (diffs.empty()) {
    throw DataError("wilcoxon_signed_rank: all paired differences are zero");
  }
  if (diffs.size() < 5) {
    throw DataError("wilcoxon_signed_rank: needs >= 5 non-zero differences");
  }

  const std::size_t m = diffs.size();
  std::vector<std::size_t> idx(m);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) {
    return std::abs(diffs[x]) < std::abs(diffs[y]);
  });

  // Doubled ranks stay integral under average-rank ties.
  std::vector<std::int64_t> rank2(m);
  std::vector<std::size_t> tie_sizes;
  std::size_t i = 0;
  while (i < m) {
    std::size_t j = i;
    while (j < m &&
           std::abs(diffs[idx[j]]) == std::abs(diffs[idx[i]])) {
      ++j;
    }
    std::int64_t avg2 = static_cast<std::int64_t>(i + 1 + j);  // 2 * avg rank
    for (std::size_t k = i; k < j; ++k) rank2[idx[k]] = avg2;
    tie_sizes.push_back(j - i);
    i = j;
  }

  std::int64_t w2 = 0;  // 2 * (positive rank sum)
  for (std::size_t k = 0; k < m; ++k) {
    if (diffs[k] > 0.0) w2 += rank2[k];
  }

  if (m <= 20) {
    // Exact null: every sign pattern equally likely. Gray-code walk keeps
    // the running rank sum incremental.
    std::vector<std::int64_t> r2(rank2);
    const std::uint64_t total = 1ull << m;
    std::int64_t t2 = 0;
    std::uint64_t count_le = 0, count_ge = 0;
    std::uint64_t gray = 0;
    for (std::uint64_t p = 0;; ++p) {
      if (t2 <= w2) ++count_le;
      if (t2 >= w2) ++count_ge;
      if (p + 1 == total) break;
      std::uint64_t next_gray = (p + 1) ^ ((p + 1) >> 1);
      std::uint64_t flipped = gray ^ next_gray;
      int bit = std::countr_zero(flipped);
      t2 += (next_gray & flipped) ? r2[bit] : -r2[bit];
      gray = next_gray;
    }
    double tail = static_cast<double>(std::min(count_le, count_ge)) /
                  static_cast<double>(total);
    return std::min(1.0, 2.0 * tail);
  }

  // Normal approximation with continuity and tie corrections.
  double md = static_cast<double>(m);
  double mean_w = md * (md + 1.0) / 4.0;
  double var_w = md * (md + 1.0) * (2.0 * md + 1.0) / 24.0;
  for (std::size_t t : tie_sizes) {
    double td = static_cast<double>(t);
    var_w -= (td * td * td - td) / 48.0;
  }
  double w = static_cast<double>(w2) / 2.0;
  double dev = w - mean_w;
  double cc = dev > 0 ? -0.5 : (dev < 0 ? 0.5 : 0.0);
  double z = (dev + cc) / std::sqrt(var_w);
  return std::min(1.0, 2.0 * normal_sf(std::abs(z)));
}

double mean(std::span<const double> v) {
  if (v.empty()) throw DataError("mean: empty input");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_sd(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  double mu = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - mu) * (x - mu);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace prism::stats
