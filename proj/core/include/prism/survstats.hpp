#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace prism::stats {

// Event flag convention across this module: 1 = died, 0 = censored.
using EventSpan = std::span<const std::uint8_t>;

// Product-limit estimate. One row per distinct observed time (death or
// censoring); survival is the value of S just after that time, so the curve
// evaluates as a right-continuous step function with S = 1 before the first
// row.
struct SurvivalCurve {
  std::vector<double> time;
  std::vector<std::size_t> at_risk;
  std::vector<std::size_t> deaths;
  std::vector<double> survival;

  double survival_at(double t) const;
};

SurvivalCurve kaplan_meier(std::span<const double> times, EventSpan events);

enum class TiesMethod { efron, breslow };

struct CoxFit {
  double beta = 0.0;
  double std_err = 0.0;
  double hazard_ratio = 1.0;
  double ci95_low = 0.0;
  double ci95_high = 0.0;
  double log_likelihood = 0.0;
  TiesMethod ties = TiesMethod::efron;
  int iterations = 0;
  bool converged = false;
  std::string diagnostic;

  double wald_z() const { return beta / std_err; }
};

// Single-covariate Cox proportional hazards via Newton-Raphson on the
// partial log-likelihood (analytic score and information). Efron ties
// correction by default.
CoxFit cox_fit(std::span<const double> scores, std::span<const double> times,
               EventSpan events, TiesMethod ties = TiesMethod::efron);

// Partial log-likelihood at a given beta; exposed so callers can audit the
// fit (the test suite maximizes this by grid search).
double cox_partial_loglik(double beta, std::span<const double> scores,
                          std::span<const double> times, EventSpan events,
                          TiesMethod ties = TiesMethod::efron);

struct RiskGroups {
  CoxFit fit;
  double cut = 0.0;
  std::size_t n_high = 0;
  std::size_t n_low = 0;
  SurvivalCurve high;  // KM of the predicted high-risk group
  SurvivalCurve low;
};

// Binarizes scores at `cut` (default: lower median), fits Cox on the binary
// covariate, and returns KM curves per risk group.
RiskGroups dichotomized_cox(std::span<const double> probabilities,
                            std::span<const double> times, EventSpan events,
                            std::optional<double> cut = std::nullopt,
                            TiesMethod ties = TiesMethod::efron);

// Harrell's c-index: exact O(n^2) enumeration of comparable pairs, score
// ties count 1/2.
double concordance_index(std::span<const double> scores,
                         std::span<const double> times, EventSpan events);

// Mann-Whitney AUC with midranks; equals the trapezoidal ROC area.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

// ROC staircase, one point per distinct score threshold, from (0,0) to
// (1,1); trapezoidal area equals roc_auc.
struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};
std::vector<RocPoint> roc_points(std::span<const double> scores,
                                 std::span<const int> labels);

struct BinaryMetrics {
  double auc = 0.5;
  double accuracy = 0.0;     // percentages
  double sensitivity = 0.0;
  double specificity = 0.0;
  double threshold = 0.5;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  bool auc_defined = false;  // both classes present

  std::size_t n() const { return tp + fp + tn + fn; }
};

// Positive class = died within five years; prediction positive when
// probability > threshold.
BinaryMetrics confusion_metrics(std::span<const double> probabilities,
                                std::span<const int> labels,
                                double threshold = 0.5);

// Two-sided Wilcoxon signed-rank p-value for paired samples. Zero
// differences are dropped, |d| ties get average ranks. Exact null
// distribution (all 2^n sign patterns) for n <= 20, normal approximation
// with continuity and tie corrections beyond.
double wilcoxon_signed_rank(std::span<const double> a,
                            std::span<const double> b);

double mean(std::span<const double> v);
double sample_sd(std::span<const double> v);

}  // namespace prism::stats
