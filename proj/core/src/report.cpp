#include "prism/report.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "prism/csv.hpp"
#include "prism/errors.hpp"

namespace prism::report {

using nlohmann::json;

namespace {

std::vector<int> folds_present(const std::vector<mil::PredictionRow>& rows) {
  std::set<int> folds;
  for (const auto& r : rows) folds.insert(r.fold);
  return {folds.begin(), folds.end()};
}

void accumulate_mean_sd(const std::vector<double>& values, double* mean_out,
                        double* sd_out) {
  if (values.empty()) {
    *mean_out = std::nan("");
    *sd_out = std::nan("");
    return;
  }
  *mean_out = stats::mean(values);
  *sd_out = stats::sample_sd(values);
}

}  // namespace

MetricsTable fold_metrics(const std::vector<mil::PredictionRow>& predictions,
                          double threshold) {
  if (predictions.empty()) throw DataError("fold_metrics: no predictions");
  MetricsTable table;
  std::vector<double> aucs, accs, sens, specs;
  for (int fold : folds_present(predictions)) {
    std::vector<double> probs;
    std::vector<int> labels;
    for (const auto& r : predictions) {
      if (r.fold != fold || !r.has_label) continue;
      probs.push_back(r.prob);
      labels.push_back(r.label5y);
    }
    FoldRow row;
    row.fold = fold;
    row.n = probs.size();
    if (probs.empty()) {
      row.metrics.accuracy = std::nan("");
      row.metrics.sensitivity = std::nan("");
      row.metrics.specificity = std::nan("");
      row.metrics.auc = std::nan("");
    } else {
      row.metrics = stats::confusion_metrics(probs, labels, threshold);
      if (row.metrics.auc_defined) {
        aucs.push_back(row.metrics.auc);
        ++table.n_folds_defined;
      }
      accs.push_back(row.metrics.accuracy);
      if (!std::isnan(row.metrics.sensitivity)) {
        sens.push_back(row.metrics.sensitivity);
      }
      if (!std::isnan(row.metrics.specificity)) {
        specs.push_back(row.metrics.specificity);
      }
    }
    table.folds.push_back(row);
  }
  accumulate_mean_sd(aucs, &table.mean_auc, &table.sd_auc);
  accumulate_mean_sd(accs, &table.mean_accuracy, &table.sd_accuracy);
  accumulate_mean_sd(sens, &table.mean_sensitivity, &table.sd_sensitivity);
  accumulate_mean_sd(specs, &table.mean_specificity, &table.sd_specificity);
  return table;
}

namespace {

std::string cell(double v) {
  return std::isnan(v) ? "n/a" : format_double(v);
}

void metrics_rows(CsvWriter& w, const MetricsTable& table,
                  const std::string& group) {
  for (const auto& row : table.folds) {
    w.row({group, std::to_string(row.fold), std::to_string(row.n),
           row.metrics.auc_defined ? format_double(row.metrics.auc) : "n/a",
           cell(row.metrics.accuracy), cell(row.metrics.sensitivity),
           cell(row.metrics.specificity)});
  }
  w.row({group, "mean", "", cell(table.mean_auc), cell(table.mean_accuracy),
         cell(table.mean_sensitivity), cell(table.mean_specificity)});
  w.row({group, "sd", "", cell(table.sd_auc), cell(table.sd_accuracy),
         cell(table.sd_sensitivity), cell(table.sd_specificity)});
}

}  // namespace

std::string metrics_table_to_csv(const MetricsTable& table) {
  CsvWriter w;
  w.row({"group", "fold", "n", "auc", "accuracy", "sensitivity",
         "specificity"});
  metrics_rows(w, table, "all");
  return w.str();
}

SurvivalReport survival_report(
    const std::vector<mil::PredictionRow>& predictions,
    std::optional<double> cut, stats::TiesMethod ties) {
  std::vector<double> probs, times;
  std::vector<std::uint8_t> events;
  for (const auto& r : predictions) {
    probs.push_back(r.prob);
    times.push_back(r.time_months);
    events.push_back(r.died ? 1 : 0);
  }
  SurvivalReport report;
  report.n = probs.size();
  report.groups = stats::dichotomized_cox(probs, times, events, cut, ties);
  report.c_index = stats::concordance_index(probs, times, events);
  return report;
}

std::string cox_to_json_text(const SurvivalReport& report) {
  const auto& fit = report.groups.fit;
  json j = {
      {"beta", fit.beta},
      {"se", fit.std_err},
      {"hr", fit.hazard_ratio},
      {"ci95", {fit.ci95_low, fit.ci95_high}},
      {"ties", fit.ties == stats::TiesMethod::efron ? "efron" : "breslow"},
      {"converged", fit.converged},
      {"iterations", fit.iterations},
      {"diagnostic", fit.diagnostic},
      {"c_index", report.c_index},
      {"cut", report.groups.cut},
      {"n", report.n},
      {"n_high", report.groups.n_high},
      {"n_low", report.groups.n_low},
  };
  return j.dump(2) + "\n";
}

std::string km_curves_to_csv(
    const std::vector<std::pair<std::string, stats::SurvivalCurve>>& curves) {
  CsvWriter w;
  w.row({"time", "at_risk", "deaths", "survival", "group"});
  for (const auto& [group, curve] : curves) {
    for (std::size_t i = 0; i < curve.time.size(); ++i) {
      w.row({format_double(curve.time[i]), std::to_string(curve.at_risk[i]),
             std::to_string(curve.deaths[i]), format_double(curve.survival[i]),
             group});
    }
  }
  return w.str();
}

std::string clinical_column_value(const cohort::ClinicalRecord& record,
                                  const std::string& column) {
  if (column == "sex") return cohort::sex_name(record.sex);
  if (column == "treatment") return cohort::treatment_name(record.treatment);
  if (column == "grade") return std::to_string(record.grade);
  if (column == "location") {
    return cohort::kLocationNames[static_cast<std::size_t>(record.location)];
  }
  throw DataError("unknown subgroup column: '" + column + "'");
}

SubgroupTables subgroup_metrics(
    const std::vector<mil::PredictionRow>& predictions,
    const std::vector<cohort::ClinicalRecord>& clinical,
    const std::string& column, double threshold) {
  std::map<std::string, const cohort::ClinicalRecord*> by_id;
  for (const auto& r : clinical) by_id[r.patient_id] = &r;

  std::map<std::string, std::vector<mil::PredictionRow>> groups;
  for (const auto& p : predictions) {
    auto it = by_id.find(p.patient_id);
    if (it == by_id.end()) {
      throw DataError("subgroup_metrics: no clinical row for " + p.patient_id);
    }
    groups[clinical_column_value(*it->second, column)].push_back(p);
  }

  SubgroupTables tables;
  for (const auto& [value, rows] : groups) {
    tables[value] = fold_metrics(rows, threshold);
  }
  return tables;
}

std::string subgroup_tables_to_csv(const SubgroupTables& tables,
                                   const std::string& column) {
  CsvWriter w;
  w.row({column, "fold", "n", "auc", "accuracy", "sensitivity",
         "specificity"});
  for (const auto& [value, table] : tables) {
    metrics_rows(w, table, value);
  }
  return w.str();
}

namespace {

struct PlotFrame {
  double width = 640, height = 440;
  double left = 60, right = 20, top = 40, bottom = 50;
  double t_max = 72;

  double x(double t) const {
    return left + (width - left - right) * (t / t_max);
  }
  double y(double s) const {
    return top + (height - top - bottom) * (1.0 - s);
  }
};

void append_step_path(std::string& svg, const stats::SurvivalCurve& curve,
                      const PlotFrame& frame, const char* color) {
  std::string path = "M " + format_double(frame.x(0)) + " " +
                     format_double(frame.y(1.0));
  double s = 1.0;
  for (std::size_t i = 0; i < curve.time.size(); ++i) {
    double t = std::min(curve.time[i], frame.t_max);
    path += " H " + format_double(frame.x(t));
    if (curve.survival[i] != s) {
      s = curve.survival[i];
      path += " V " + format_double(frame.y(s));
    }
    if (curve.time[i] >= frame.t_max) break;
  }
  path += " H " + format_double(frame.x(frame.t_max));
  svg += "  <path d=\"" + path + "\" fill=\"none\" stroke=\"" + color +
         "\" stroke-width=\"2\"/>\n";
}

}  // namespace

std::string roc_to_csv(const std::vector<stats::RocPoint>& points) {
  CsvWriter w;
  w.row({"threshold", "fpr", "tpr"});
  for (const auto& p : points) {
    w.row({std::isinf(p.threshold) ? "inf" : format_double(p.threshold),
           format_double(p.fpr), format_double(p.tpr)});
  }
  return w.str();
}

std::string roc_svg(const std::vector<stats::RocPoint>& points, double auc) {
  const double size = 420, margin = 50;
  auto x = [&](double fpr) { return margin + (size - 2 * margin) * fpr; };
  auto y = [&](double tpr) {
    return size - margin - (size - 2 * margin) * tpr;
  };
  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
         format_double(size) + "\" height=\"" + format_double(size) +
         "\" viewBox=\"0 0 " + format_double(size) + " " +
         format_double(size) + "\">\n";
  svg += "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "  <text x=\"" + format_double(size / 2) +
         "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"14\">ROC (AUC " + format_double(auc) + ")</text>\n";
  svg += "  <line x1=\"" + format_double(x(0)) + "\" y1=\"" +
         format_double(y(0)) + "\" x2=\"" + format_double(x(1)) + "\" y2=\"" +
         format_double(y(1)) +
         "\" stroke=\"#bbbbbb\" stroke-dasharray=\"4 3\"/>\n";
  svg += "  <line x1=\"" + format_double(x(0)) + "\" y1=\"" +
         format_double(y(0)) + "\" x2=\"" + format_double(x(1)) + "\" y2=\"" +
         format_double(y(0)) + "\" stroke=\"black\"/>\n";
  svg += "  <line x1=\"" + format_double(x(0)) + "\" y1=\"" +
         format_double(y(0)) + "\" x2=\"" + format_double(x(0)) + "\" y2=\"" +
         format_double(y(1)) + "\" stroke=\"black\"/>\n";
  std::string path;
  for (std::size_t i = 0; i < points.size(); ++i) {
    path += (i == 0 ? "M " : " L ") + format_double(x(points[i].fpr)) + " " +
            format_double(y(points[i].tpr));
  }
  svg += "  <path d=\"" + path +
         "\" fill=\"none\" stroke=\"#c0392b\" stroke-width=\"2\"/>\n";
  svg += "  <text x=\"" + format_double(size / 2) + "\" y=\"" +
         format_double(size - 14) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"12\">false positive rate</text>\n";
  svg += "</svg>\n";
  return svg;
}

std::string km_svg(
    const std::vector<std::pair<std::string, stats::SurvivalCurve>>& curves,
    const std::string& title) {
  PlotFrame frame;
  for (const auto& [name, curve] : curves) {
    for (double t : curve.time) frame.t_max = std::max(frame.t_max, t);
  }

  static const char* kColors[] = {"#c0392b", "#2980b9", "#27ae60", "#8e44ad",
                                  "#f39c12", "#16a085"};
  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
         format_double(frame.width) + "\" height=\"" +
         format_double(frame.height) + "\" viewBox=\"0 0 " +
         format_double(frame.width) + " " + format_double(frame.height) +
         "\">\n";
  svg += "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "  <text x=\"" + format_double(frame.width / 2) +
         "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"15\">" + title + "</text>\n";

  // Axes.
  svg += "  <line x1=\"" + format_double(frame.left) + "\" y1=\"" +
         format_double(frame.y(0)) + "\" x2=\"" +
         format_double(frame.width - frame.right) + "\" y2=\"" +
         format_double(frame.y(0)) + "\" stroke=\"black\"/>\n";
  svg += "  <line x1=\"" + format_double(frame.left) + "\" y1=\"" +
         format_double(frame.y(0)) + "\" x2=\"" + format_double(frame.left) +
         "\" y2=\"" + format_double(frame.y(1)) + "\" stroke=\"black\"/>\n";
  for (double s = 0.0; s <= 1.001; s += 0.2) {
    svg += "  <text x=\"" + format_double(frame.left - 8) + "\" y=\"" +
           format_double(frame.y(s) + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" "
           "font-size=\"11\">" + format_double(std::round(s * 10) / 10) +
           "</text>\n";
  }
  for (double t = 0.0; t <= frame.t_max + 0.001; t += 12.0) {
    svg += "  <text x=\"" + format_double(frame.x(t)) + "\" y=\"" +
           format_double(frame.y(0) + 18) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"11\">" + format_double(t) + "</text>\n";
  }
  svg += "  <text x=\"" + format_double(frame.width / 2) + "\" y=\"" +
         format_double(frame.height - 12) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"12\">months</text>\n";

  std::size_t color_index = 0;
  double legend_y = frame.top + 8;
  for (const auto& [name, curve] : curves) {
    const char* color = kColors[color_index % std::size(kColors)];
    append_step_path(svg, curve, frame, color);
    svg += "  <text x=\"" + format_double(frame.width - frame.right - 6) +
           "\" y=\"" + format_double(legend_y) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" "
           "font-size=\"12\" fill=\"" + std::string(color) + "\">" + name +
           "</text>\n";
    legend_y += 16;
    ++color_index;
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace prism::report
