#include "prism/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "prism/csv.hpp"
#include "prism/errors.hpp"
#include "prism/fsutil.hpp"
#include "prism/tensor_io.hpp"

namespace prism::cohort {

using nlohmann::json;

const char* sex_name(Sex s) { return s == Sex::F ? "F" : "M"; }
const char* treatment_name(Treatment t) { return t == Treatment::FL ? "FL" : "IFL"; }

Sex parse_sex(const std::string& s) {
  if (s == "F") return Sex::F;
  if (s == "M") return Sex::M;
  throw DataError("unknown sex: '" + s + "'");
}

Treatment parse_treatment(const std::string& s) {
  if (s == "FL") return Treatment::FL;
  if (s == "IFL") return Treatment::IFL;
  throw DataError("unknown treatment: '" + s + "'");
}

double PatchFeatureBag::risk_class_fraction() const {
  if (patch_class.empty()) return 0.0;
  std::size_t k = 0;
  for (int c : patch_class) k += is_risk_class(c) ? 1 : 0;
  return static_cast<double>(k) / static_cast<double>(patch_class.size());
}

void validate_bag(const PatchFeatureBag& bag) {
  const std::size_t n = bag.patch_class.size();
  if (n == 0) throw DataError("bag " + bag.patient_id + ": no patches");
  if (bag.generic.rows() != n || bag.morph.rows() != n) {
    throw DataError("bag " + bag.patient_id +
                    ": per-patch row counts disagree");
  }
  for (int c : bag.patch_class) {
    if (c < 0 || c >= kNumMorphClasses) {
      throw DataError("bag " + bag.patient_id + ": patch class out of range");
    }
  }
  num::ensure_finite(bag.generic, "bag " + bag.patient_id + " generic");
  num::ensure_finite(bag.morph, "bag " + bag.patient_id + " morph");
}

// Planted burden: zero for 40% of patients, Beta(1, 3) otherwise, so
// high-grade/necrosis patches are absent from most survivor bags and act as
// sparse presence-of-evidence. Moments: mean 0.6 * 1/4 = 0.15,
// E[b^2] = 0.6 * 1/10 = 0.06, sd = sqrt(0.06 - 0.15^2) = sqrt(0.0375).
double burden_mean() { return 0.15; }
double burden_sd() { return std::sqrt(0.0375); }

double sample_burden(SplitRng& rng) {
  bool zero = rng.uniform() < 0.4;
  double positive = 1.0 - std::cbrt(1.0 - rng.uniform());
  return zero ? 0.0 : positive;
}

void CohortConfig::validate() const {
  if (n_patients == 0) throw ConfigError("cohort: n_patients must be >= 1");
  if (d_g == 0 || d_m == 0) throw ConfigError("cohort: feature dims must be >= 1");
  if (patches_min == 0) throw ConfigError("cohort: patches_min must be >= 1");
  if (patches_min > patches_max) {
    throw ConfigError("cohort: patches_min > patches_max");
  }
  if (signal_strength < 0.0) {
    throw ConfigError("cohort: signal_strength must be >= 0");
  }
  if (censoring_rate < 0.0 || censoring_rate > 1.0) {
    throw ConfigError("cohort: censoring_rate must be in [0, 1]");
  }
  if (target_death_frac > 1.0) {
    throw ConfigError("cohort: target_death_frac must be <= 1");
  }
  if (weibull_shape <= 0.0 || baseline_scale_months <= 0.0) {
    throw ConfigError("cohort: Weibull parameters must be positive");
  }
  if (class_separation <= 0.0 || feature_noise_sd <= 0.0) {
    throw ConfigError("cohort: class separation and noise must be positive");
  }
  const auto& d = demo;
  if (d.age_sd <= 0.0 || d.age_min >= d.age_max || d.income_mean <= 0.0 ||
      d.income_log_sd <= 0.0) {
    throw ConfigError("cohort: infeasible demographic marginals");
  }
  if (d.male_frac < 0.0 || d.male_frac > 1.0 || d.fl_frac < 0.0 ||
      d.fl_frac > 1.0) {
    throw ConfigError("cohort: fractions must be in [0, 1]");
  }
  auto positive = [](const auto& arr) {
    double sum = 0.0;
    for (double w : arr) {
      if (w < 0.0) return false;
      sum += w;
    }
    return sum > 0.0;
  };
  if (!positive(d.bmi_weights) || !positive(d.grade_weights) ||
      !positive(d.location_weights)) {
    throw ConfigError("cohort: mixture weights must be nonnegative, sum > 0");
  }
  for (double s : d.bmi_sds) {
    if (s <= 0.0) throw ConfigError("cohort: BMI component sd must be > 0");
  }
}

namespace {

std::string make_patient_id(std::size_t index_1based) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "P%05zu", index_1based);
  return buf;
}

template <std::size_t N>
std::size_t categorical(const std::array<double, N>& weights, SplitRng& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  double u = rng.uniform() * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    acc += weights[i];
    if (u < acc) return i;
  }
  return N - 1;
}

std::size_t categorical(const std::vector<double>& weights, SplitRng& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  double u = rng.uniform() * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) return i;
  }
  return weights.size() - 1;
}

struct SurvivalDraw {
  double exp_draw = 0.0;     // unit exponential behind the Weibull
  double risk = 0.0;         // log relative hazard
  double censor_time = 0.0;  // +inf when not subject to censoring
};

// Survival time under a Weibull proportional-hazards model:
//   S(t | r) = exp(-(t / scale)^shape * e^r)
// so the hazard ratio per unit of risk score is exactly e^r and
//   T = scale * E^{1/shape} * exp(-r / shape),  E ~ Exp(1).
double survival_time(const SurvivalDraw& d, double shape, double scale) {
  return scale * std::pow(d.exp_draw, 1.0 / shape) *
         std::exp(-d.risk / shape);
}

bool observed_death_within(const SurvivalDraw& d, double shape, double scale,
                           double horizon) {
  double t = survival_time(d, shape, scale);
  return t <= d.censor_time && t <= horizon;
}

// The realized count of five-year deaths is non-increasing in the baseline
// scale, so bisection pins the scale that hits the configured target count.
double calibrate_scale(const std::vector<SurvivalDraw>& draws, double shape,
                       std::size_t target_count) {
  auto count_at = [&](double scale) {
    std::size_t k = 0;
    for (const auto& d : draws) {
      k += observed_death_within(d, shape, scale, 60.0) ? 1 : 0;
    }
    return k;
  };
  double lo = 1e-3, hi = 1e6;
  if (count_at(lo) < target_count) return lo;
  if (count_at(hi) >= target_count) return hi;
  for (int i = 0; i < 80; ++i) {
    double mid = 0.5 * (lo + hi);
    if (count_at(mid) >= target_count) lo = mid;
    else hi = mid;
  }
  return lo;
}

}  // namespace

std::vector<ClinicalDraw> generate_clinical(const CohortConfig& config) {
  config.validate();
  const auto& demo = config.demo;
  SplitRng clinical_rng = SplitRng(config.seed).split("clinical");

  double income_mu =
      std::log(demo.income_mean) -
      0.5 * demo.income_log_sd * demo.income_log_sd;

  std::vector<ClinicalDraw> draws(config.n_patients);
  std::vector<SurvivalDraw> survival(config.n_patients);

  for (std::size_t i = 0; i < config.n_patients; ++i) {
    SplitRng rng = clinical_rng.split(i);
    ClinicalDraw& d = draws[i];
    ClinicalRecord& r = d.record;
    r.patient_id = make_patient_id(i + 1);
    r.age = std::clamp(rng.normal(demo.age_mean, demo.age_sd), demo.age_min,
                       demo.age_max);
    std::size_t bmi_comp = categorical(demo.bmi_weights, rng);
    r.bmi = std::clamp(
        rng.normal(demo.bmi_means[bmi_comp], demo.bmi_sds[bmi_comp]), 14.0,
        55.0);
    r.income = std::exp(rng.normal(income_mu, demo.income_log_sd));
    r.sex = rng.bernoulli(demo.male_frac) ? Sex::M : Sex::F;
    r.treatment = rng.bernoulli(demo.fl_frac) ? Treatment::FL : Treatment::IFL;
    r.grade = static_cast<int>(categorical(demo.grade_weights, rng)) + 1;
    r.location = static_cast<int>(categorical(demo.location_weights, rng));

    d.latent.burden = sample_burden(rng);
    d.latent.burden_z = (d.latent.burden - burden_mean()) / burden_sd();
    d.latent.risk = config.signal_strength * d.latent.burden_z +
                    (r.age > 65.0 ? config.age_log_hr : 0.0);

    bool censorable = rng.bernoulli(config.censoring_rate);
    double censor_candidate = rng.uniform(12.0, 72.0);
    survival[i].exp_draw = rng.exponential();
    survival[i].risk = d.latent.risk;
    survival[i].censor_time =
        censorable ? censor_candidate : std::numeric_limits<double>::infinity();
  }

  double scale = config.baseline_scale_months;
  if (config.target_death_frac >= 0.0) {
    auto target = static_cast<std::size_t>(std::llround(
        config.target_death_frac * static_cast<double>(config.n_patients)));
    scale = calibrate_scale(survival, config.weibull_shape, target);
  }

  for (std::size_t i = 0; i < config.n_patients; ++i) {
    ClinicalRecord& r = draws[i].record;
    double t = std::max(survival_time(survival[i], config.weibull_shape, scale),
                        0.01);
    if (t <= survival[i].censor_time) {
      r.died = true;
      r.time_months = t;
    } else {
      r.died = false;
      r.time_months = survival[i].censor_time;
    }
    r.label5y = (r.died && r.time_months <= 60.0) ? 1 : 0;
  }
  return draws;
}

namespace {

// Gram-Schmidt on the columns of a Gaussian draw; requires rows >= cols.
num::Matrix random_orthonormal_cols(std::size_t rows, std::size_t cols,
                                    SplitRng& rng) {
  num::Matrix q(rows, cols);
  for (std::size_t j = 0; j < cols; ++j) {
    std::vector<double> v(rows);
    for (auto& x : v) x = rng.normal();
    for (std::size_t p = 0; p < j; ++p) {
      double proj = 0.0;
      for (std::size_t i = 0; i < rows; ++i) proj += v[i] * q(i, p);
      for (std::size_t i = 0; i < rows; ++i) v[i] -= proj * q(i, p);
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-9) {
      // Degenerate draw; retry this column with fresh randomness.
      --j;
      continue;
    }
    for (std::size_t i = 0; i < rows; ++i) q(i, j) = v[i] / norm;
  }
  return q;
}

}  // namespace

ClassPrototypes make_prototypes(const CohortConfig& config) {
  SplitRng rng = SplitRng(config.seed).split("prototypes");
  num::Matrix raw(kNumMorphClasses, config.d_m);
  for (double& v : raw.data()) v = rng.normal();

  double min_dist = std::numeric_limits<double>::infinity();
  for (int a = 0; a < kNumMorphClasses; ++a) {
    for (int b = a + 1; b < kNumMorphClasses; ++b) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < config.d_m; ++k) {
        double diff = raw(a, k) - raw(b, k);
        d2 += diff * diff;
      }
      min_dist = std::min(min_dist, std::sqrt(d2));
    }
  }
  if (!(min_dist > 0.0)) throw NumericError("prototypes: degenerate draw");
  double noise_norm =
      config.feature_noise_sd * std::sqrt(static_cast<double>(config.d_m));
  double scale = config.class_separation * noise_norm / min_dist;

  ClassPrototypes protos;
  protos.noise_sd = config.feature_noise_sd;
  protos.morph = raw;
  for (double& v : protos.morph.data()) v *= scale;

  // Generic channel = morph prototypes through a fixed orthogonal map, so
  // the channels are correlated through the class but not identical.
  SplitRng map_rng = SplitRng(config.seed).split("channel-map");
  if (config.d_g >= config.d_m) {
    num::Matrix q = random_orthonormal_cols(config.d_g, config.d_m, map_rng);
    protos.generic = num::matmul(protos.morph, num::transpose(q));
  } else {
    num::Matrix q = random_orthonormal_cols(config.d_m, config.d_g, map_rng);
    protos.generic = num::matmul(protos.morph, q);
  }
  return protos;
}

namespace {

PatchFeatureBag generate_bag_impl(const ClinicalRecord& record,
                                  const PatientLatent& latent,
                                  const CohortConfig& config,
                                  const ClassPrototypes& protos,
                                  SplitRng& rng) {
  std::size_t n = config.patches_min +
                  rng.uniform_index(config.patches_max - config.patches_min + 1);

  auto n_risk = static_cast<std::size_t>(
      std::llround(latent.burden * static_cast<double>(n)));
  n_risk = std::min(n_risk, n);
  double adeno_share = rng.uniform();
  auto n_adeno = static_cast<std::size_t>(
      std::llround(adeno_share * static_cast<double>(n_risk)));

  // Patient-specific mixture over the 11 non-risk classes (Dirichlet(1)).
  std::vector<int> nonrisk_classes;
  std::vector<double> nonrisk_weights;
  for (int c = 0; c < kNumMorphClasses; ++c) {
    if (is_risk_class(c)) continue;
    nonrisk_classes.push_back(c);
    nonrisk_weights.push_back(rng.exponential());
  }

  std::vector<int> classes;
  classes.reserve(n);
  for (std::size_t i = 0; i < n_adeno; ++i) classes.push_back(kRiskClassAdenoHigh);
  for (std::size_t i = n_adeno; i < n_risk; ++i) classes.push_back(kRiskClassNecrosis);
  for (std::size_t i = n_risk; i < n; ++i) {
    classes.push_back(nonrisk_classes[categorical(nonrisk_weights, rng)]);
  }
  rng.shuffle(classes);

  PatchFeatureBag bag;
  bag.patient_id = record.patient_id;
  bag.patch_class = std::move(classes);
  bag.morph = num::Matrix(n, config.d_m);
  bag.generic = num::Matrix(n, config.d_g);
  for (std::size_t i = 0; i < n; ++i) {
    int c = bag.patch_class[i];
    for (std::size_t k = 0; k < config.d_m; ++k) {
      bag.morph(i, k) = protos.morph(c, k) + protos.noise_sd * rng.normal();
    }
    for (std::size_t k = 0; k < config.d_g; ++k) {
      bag.generic(i, k) = protos.generic(c, k) + protos.noise_sd * rng.normal();
    }
  }
  return bag;
}

}  // namespace

PatchFeatureBag generate_bag(const ClinicalRecord& record,
                             const PatientLatent& latent,
                             const CohortConfig& config, SplitRng rng) {
  config.validate();
  ClassPrototypes protos = make_prototypes(config);
  return generate_bag_impl(record, latent, config, protos, rng);
}

Cohort generate_cohort(const CohortConfig& config) {
  Cohort cohort;
  cohort.config = config;
  auto draws = generate_clinical(config);
  ClassPrototypes protos = make_prototypes(config);
  SplitRng bags_rng = SplitRng(config.seed).split("bags");
  cohort.patients.reserve(draws.size());
  for (auto& d : draws) {
    Patient p;
    SplitRng rng = bags_rng.split(d.record.patient_id);
    p.bag = generate_bag_impl(d.record, d.latent, config, protos, rng);
    p.clinical = std::move(d.record);
    p.latent = d.latent;
    cohort.patients.push_back(std::move(p));
  }
  return cohort;
}

LabeledPatches sample_labeled_patches(const CohortConfig& config,
                                      std::size_t per_class, SplitRng rng) {
  config.validate();
  ClassPrototypes protos = make_prototypes(config);
  LabeledPatches out;
  out.features = num::Matrix(per_class * kNumMorphClasses, config.d_m);
  out.labels.reserve(per_class * kNumMorphClasses);
  std::size_t row = 0;
  for (int c = 0; c < kNumMorphClasses; ++c) {
    for (std::size_t i = 0; i < per_class; ++i, ++row) {
      for (std::size_t k = 0; k < config.d_m; ++k) {
        out.features(row, k) =
            protos.morph(c, k) + protos.noise_sd * rng.normal();
      }
      out.labels.push_back(c);
    }
  }
  return out;
}

std::string clinical_to_csv(const std::vector<ClinicalRecord>& records) {
  CsvWriter w;
  w.row({"patient_id", "age", "bmi", "income", "sex", "treatment", "grade",
         "location", "time_months", "event", "label5y"});
  for (const auto& r : records) {
    w.row({r.patient_id, format_double(r.age), format_double(r.bmi),
           format_double(r.income), sex_name(r.sex),
           treatment_name(r.treatment), std::to_string(r.grade),
           kLocationNames[static_cast<std::size_t>(r.location)],
           format_double(r.time_months), r.died ? "died" : "censored",
           std::to_string(r.label5y)});
  }
  return w.str();
}

namespace {

int location_index(const std::string& name) {
  for (std::size_t i = 0; i < kLocationNames.size(); ++i) {
    if (name == kLocationNames[i]) return static_cast<int>(i);
  }
  throw DataError("unknown tumor location: '" + name + "'");
}

std::vector<ClinicalRecord> clinical_from_table(const CsvTable& table,
                                                const std::string& context) {
  std::vector<ClinicalRecord> records;
  auto col = [&](const char* name) { return table.column(name); };
  std::size_t c_id = col("patient_id"), c_age = col("age"), c_bmi = col("bmi"),
              c_income = col("income"), c_sex = col("sex"),
              c_treat = col("treatment"), c_grade = col("grade"),
              c_loc = col("location"), c_time = col("time_months"),
              c_event = col("event"), c_label = col("label5y");
  for (const auto& row : table.rows) {
    ClinicalRecord r;
    r.patient_id = row[c_id];
    r.age = parse_double(row[c_age], context);
    r.bmi = parse_double(row[c_bmi], context);
    r.income = parse_double(row[c_income], context);
    r.sex = parse_sex(row[c_sex]);
    r.treatment = parse_treatment(row[c_treat]);
    r.grade = static_cast<int>(parse_long(row[c_grade], context));
    r.location = location_index(row[c_loc]);
    r.time_months = parse_double(row[c_time], context);
    if (row[c_event] == "died") r.died = true;
    else if (row[c_event] == "censored") r.died = false;
    else throw DataError(context + ": unknown event '" + row[c_event] + "'");
    r.label5y = static_cast<int>(parse_long(row[c_label], context));
    records.push_back(std::move(r));
  }
  return records;
}

json config_to_json(const CohortConfig& c) {
  json demo = {
      {"age_mean", c.demo.age_mean},
      {"age_sd", c.demo.age_sd},
      {"age_min", c.demo.age_min},
      {"age_max", c.demo.age_max},
      {"income_mean", c.demo.income_mean},
      {"income_log_sd", c.demo.income_log_sd},
      {"bmi_weights", c.demo.bmi_weights},
      {"bmi_means", c.demo.bmi_means},
      {"bmi_sds", c.demo.bmi_sds},
      {"male_frac", c.demo.male_frac},
      {"fl_frac", c.demo.fl_frac},
      {"grade_weights", c.demo.grade_weights},
      {"location_weights", c.demo.location_weights},
  };
  return json{
      {"n_patients", c.n_patients},
      {"d_g", c.d_g},
      {"d_m", c.d_m},
      {"patches_min", c.patches_min},
      {"patches_max", c.patches_max},
      {"signal_strength", c.signal_strength},
      {"censoring_rate", c.censoring_rate},
      {"target_death_frac", c.target_death_frac},
      {"baseline_scale_months", c.baseline_scale_months},
      {"weibull_shape", c.weibull_shape},
      {"age_log_hr", c.age_log_hr},
      {"class_separation", c.class_separation},
      {"feature_noise_sd", c.feature_noise_sd},
      {"demo", demo},
      {"seed", c.seed},
  };
}

void reject_unknown_keys(const json& j, const json& reference,
                         const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (!reference.contains(key)) {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
  }
}

CohortConfig config_from_json(const json& j) {
  CohortConfig c;
  json reference = config_to_json(c);
  reject_unknown_keys(j, reference, "cohort config");
  try {
    if (j.contains("n_patients")) c.n_patients = j["n_patients"];
    if (j.contains("d_g")) c.d_g = j["d_g"];
    if (j.contains("d_m")) c.d_m = j["d_m"];
    if (j.contains("patches_min")) c.patches_min = j["patches_min"];
    if (j.contains("patches_max")) c.patches_max = j["patches_max"];
    if (j.contains("signal_strength")) c.signal_strength = j["signal_strength"];
    if (j.contains("censoring_rate")) c.censoring_rate = j["censoring_rate"];
    if (j.contains("target_death_frac"))
      c.target_death_frac = j["target_death_frac"];
    if (j.contains("baseline_scale_months"))
      c.baseline_scale_months = j["baseline_scale_months"];
    if (j.contains("weibull_shape")) c.weibull_shape = j["weibull_shape"];
    if (j.contains("age_log_hr")) c.age_log_hr = j["age_log_hr"];
    if (j.contains("class_separation"))
      c.class_separation = j["class_separation"];
    if (j.contains("feature_noise_sd"))
      c.feature_noise_sd = j["feature_noise_sd"];
    if (j.contains("seed")) c.seed = j["seed"];
    if (j.contains("demo")) {
      const json& d = j["demo"];
      reject_unknown_keys(d, reference["demo"], "cohort config demo");
      auto& m = c.demo;
      if (d.contains("age_mean")) m.age_mean = d["age_mean"];
      if (d.contains("age_sd")) m.age_sd = d["age_sd"];
      if (d.contains("age_min")) m.age_min = d["age_min"];
      if (d.contains("age_max")) m.age_max = d["age_max"];
      if (d.contains("income_mean")) m.income_mean = d["income_mean"];
      if (d.contains("income_log_sd")) m.income_log_sd = d["income_log_sd"];
      if (d.contains("bmi_weights")) m.bmi_weights = d["bmi_weights"];
      if (d.contains("bmi_means")) m.bmi_means = d["bmi_means"];
      if (d.contains("bmi_sds")) m.bmi_sds = d["bmi_sds"];
      if (d.contains("male_frac")) m.male_frac = d["male_frac"];
      if (d.contains("fl_frac")) m.fl_frac = d["fl_frac"];
      if (d.contains("grade_weights")) m.grade_weights = d["grade_weights"];
      if (d.contains("location_weights"))
        m.location_weights = d["location_weights"];
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("cohort config: ") + e.what());
  }
  return c;
}

}  // namespace

std::vector<ClinicalRecord> clinical_from_csv_file(
    const std::filesystem::path& path) {
  return clinical_from_table(load_csv(path), path.string());
}

void cohort_save(const Cohort& cohort, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::map<std::string, std::string> hashes;

  std::vector<ClinicalRecord> records;
  records.reserve(cohort.patients.size());
  for (const auto& p : cohort.patients) records.push_back(p.clinical);
  std::string clinical_csv = clinical_to_csv(records);
  write_file(dir / "clinical.csv", clinical_csv);
  hashes["clinical.csv"] = bytes_hash(clinical_csv);

  for (const auto& p : cohort.patients) {
    num::TensorArchive archive;
    archive.add("generic", p.bag.generic);
    archive.add("morph", p.bag.morph);
    std::vector<double> classes(p.bag.patch_class.begin(),
                                p.bag.patch_class.end());
    archive.add("patch_class", num::Matrix::col_vector(std::move(classes)));
    std::string name = p.clinical.patient_id + ".bag";
    num::save_archive(dir / name, archive);
    hashes[name] = file_content_hash(dir / name);
  }

  json manifest = {
      {"format", "prism-cohort/1"},
      {"seed", cohort.config.seed},
      {"n_patients", cohort.patients.size()},
      {"config", config_to_json(cohort.config)},
      {"files", hashes},
  };
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

Cohort cohort_load(const std::filesystem::path& dir) {
  json manifest;
  try {
    manifest = json::parse(read_file(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw IoError("manifest.json: " + std::string(e.what()));
  }
  Cohort cohort;
  cohort.config = config_from_json(manifest.at("config"));
  cohort.config.validate();

  const auto& files = manifest.at("files");
  for (const auto& [name, expected] : files.items()) {
    std::string actual = file_content_hash(dir / name);
    if (actual != expected.get<std::string>()) {
      throw IoError("content hash mismatch for " + name +
                    " (file corrupt or tampered)");
    }
  }

  auto records = clinical_from_csv_file(dir / "clinical.csv");
  if (records.size() != manifest.at("n_patients").get<std::size_t>()) {
    throw IoError("clinical.csv row count disagrees with manifest");
  }
  {
    std::set<std::string> ids;
    for (const auto& r : records) {
      if (!ids.insert(r.patient_id).second) {
        throw DataError("clinical.csv: duplicate patient id " + r.patient_id);
      }
    }
  }
  for (auto& r : records) {
    std::string bag_name = r.patient_id + ".bag";
    if (!files.contains(bag_name)) {
      throw IoError("manifest missing bag file entry: " + bag_name);
    }
    num::TensorArchive archive = num::load_archive(dir / bag_name);
    Patient p;
    p.bag.patient_id = r.patient_id;
    p.bag.generic = archive.get("generic");
    p.bag.morph = archive.get("morph");
    const num::Matrix& classes = archive.get("patch_class");
    p.bag.patch_class.reserve(classes.size());
    for (double v : classes.data()) {
      p.bag.patch_class.push_back(static_cast<int>(v));
    }
    validate_bag(p.bag);
    if (p.bag.generic.cols() != cohort.config.d_g ||
        p.bag.morph.cols() != cohort.config.d_m) {
      throw IoError("bag " + bag_name + ": feature dims disagree with config");
    }
    // Latents are recovered, not stored: burden is the planted risk-class
    // fraction and the risk score follows from the config.
    p.latent.burden = p.bag.risk_class_fraction();
    p.latent.burden_z = (p.latent.burden - burden_mean()) / burden_sd();
    p.latent.risk = cohort.config.signal_strength * p.latent.burden_z +
                    (r.age > 65.0 ? cohort.config.age_log_hr : 0.0);
    p.clinical = std::move(r);
    cohort.patients.push_back(std::move(p));
  }
  std::sort(cohort.patients.begin(), cohort.patients.end(),
            [](const Patient& a, const Patient& b) {
              return a.clinical.patient_id < b.clinical.patient_id;
            });
  return cohort;
}

std::string cohort_config_to_json_text(const CohortConfig& config) {
  return config_to_json(config).dump(2);
}

CohortConfig cohort_config_from_json_text(const std::string& text) {
  try {
    return config_from_json(json::parse(text));
  } catch (const json::exception& e) {
    throw ConfigError("cohort config: " + std::string(e.what()));
  }
}

}  // namespace prism::cohort
