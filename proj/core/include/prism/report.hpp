#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "prism/cohort.hpp"
#include "prism/milattn.hpp"
#include "prism/survstats.hpp"

namespace prism::report {

struct FoldRow {
  int fold = 0;
  std::size_t n = 0;          // labelable patients evaluated
  stats::BinaryMetrics metrics;
};

// Per-fold classification metrics plus mean and sd rows, computed over
// patients with a five-year outcome.
struct MetricsTable {
  std::vector<FoldRow> folds;
  double mean_auc = 0.0, sd_auc = 0.0;
  double mean_accuracy = 0.0, sd_accuracy = 0.0;
  double mean_sensitivity = 0.0, sd_sensitivity = 0.0;
  double mean_specificity = 0.0, sd_specificity = 0.0;
  std::size_t n_folds_defined = 0;  // folds where AUC existed
};

MetricsTable fold_metrics(const std::vector<mil::PredictionRow>& predictions,
                          double threshold);

std::string metrics_table_to_csv(const MetricsTable& table);

// Survival-side evaluation pooled over out-of-fold predictions.
struct SurvivalReport {
  stats::RiskGroups groups;
  double c_index = 0.0;
  std::size_t n = 0;
};

SurvivalReport survival_report(
    const std::vector<mil::PredictionRow>& predictions,
    std::optional<double> cut = std::nullopt,
    stats::TiesMethod ties = stats::TiesMethod::efron);

std::string cox_to_json_text(const SurvivalReport& report);

// KM curves as CSV rows (time, at_risk, deaths, survival, group).
std::string km_curves_to_csv(
    const std::vector<std::pair<std::string, stats::SurvivalCurve>>& curves);

// Subgroup evaluation: predictions are partitioned by a clinical column and
// a metrics table is built per subgroup value. Groups where a fold has a
// single outcome class get blank AUC cells rather than a failure.
using SubgroupTables = std::map<std::string, MetricsTable>;

SubgroupTables subgroup_metrics(
    const std::vector<mil::PredictionRow>& predictions,
    const std::vector<cohort::ClinicalRecord>& clinical,
    const std::string& column, double threshold);

std::string subgroup_tables_to_csv(const SubgroupTables& tables,
                                   const std::string& column);

// Value of a clinical column used for grouping (sex, treatment, grade,
// location); DataError for unknown columns.
std::string clinical_column_value(const cohort::ClinicalRecord& record,
                                  const std::string& column);

// Minimal static SVG line/step plot for survival curves.
std::string km_svg(
    const std::vector<std::pair<std::string, stats::SurvivalCurve>>& curves,
    const std::string& title);

// ROC staircase export over the pooled labelable predictions.
std::string roc_to_csv(const std::vector<stats::RocPoint>& points);
std::string roc_svg(const std::vector<stats::RocPoint>& points, double auc);

}  // namespace prism::report
