#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "prism/matrix.hpp"
#include "prism/rng.hpp"

namespace prism::cohort {

// The 13 tissue morphology classes. Classes 0 (high-grade adenocarcinoma)
// and 9 (necrosis) are the planted risk classes: their per-bag fraction is
// the burden driving the synthetic survival signal.
inline constexpr std::array<const char*, 13> kMorphClassNames = {
    "adenocarcinoma_high_grade",
    "adenocarcinoma_low_grade",
    "adenoma_high_grade",
    "adenoma_low_grade",
    "fat",
    "hyperplastic_polyp",
    "inflammation",
    "mucin",
    "smooth_muscle",
    "necrosis",
    "sessile_serrated_lesion",
    "stroma",
    "vascular_structures",
};
inline constexpr int kNumMorphClasses = 13;
inline constexpr int kRiskClassAdenoHigh = 0;
inline constexpr int kRiskClassNecrosis = 9;

inline bool is_risk_class(int c) {
  return c == kRiskClassAdenoHigh || c == kRiskClassNecrosis;
}

inline constexpr std::array<const char*, 7> kLocationNames = {
    "cecum",           "ascending_colon", "hepatic_flexure",
    "transverse_colon", "splenic_flexure", "descending_colon",
    "sigmoid_colon",
};

enum class Sex { F, M };
enum class Treatment { FL, IFL };

struct ClinicalRecord {
  std::string patient_id;
  double age = 0.0;      // years
  double bmi = 0.0;      // kg/m^2
  double income = 0.0;   // USD/year
  Sex sex = Sex::F;
  Treatment treatment = Treatment::FL;
  int grade = 1;         // 1..3
  int location = 0;      // index into kLocationNames
  double time_months = 0.0;
  bool died = false;     // event: died vs censored
  int label5y = 0;       // 1 iff died and time_months <= 60
};

// Censored before 60 months -> no five-year outcome; such patients are kept
// for Cox/KM but excluded from classification sets.
inline bool has_five_year_label(const ClinicalRecord& r) {
  return r.died ? true : r.time_months >= 60.0;
}

const char* sex_name(Sex s);
const char* treatment_name(Treatment t);
Sex parse_sex(const std::string& s);
Treatment parse_treatment(const std::string& s);

struct PatchFeatureBag {
  std::string patient_id;
  num::Matrix generic;           // n x d_g
  num::Matrix morph;             // n x d_m
  std::vector<int> patch_class;  // n entries in [0, 13)

  std::size_t n_patches() const { return patch_class.size(); }
  double risk_class_fraction() const;
};

void validate_bag(const PatchFeatureBag& bag);

struct DemographicMarginals {
  double age_mean = 60.47;
  double age_sd = 10.0;
  double age_min = 30.0;
  double age_max = 90.0;
  double income_mean = 43194.59;   // arithmetic mean of the lognormal
  double income_log_sd = 0.5;
  // BMI mixture spanning the <25 / 25-30 / >=30 bands.
  std::array<double, 3> bmi_weights = {0.35, 0.40, 0.25};
  std::array<double, 3> bmi_means = {22.5, 27.3, 33.5};
  std::array<double, 3> bmi_sds = {1.6, 1.4, 2.8};
  double male_frac = 240.0 / 431.0;
  double fl_frac = 219.0 / 431.0;
  std::array<double, 3> grade_weights = {20.0, 300.0, 108.0};
  std::array<double, 7> location_weights = {101.0, 64.0, 28.0, 46.0,
                                            19.0,  19.0, 149.0};
};

struct CohortConfig {
  std::size_t n_patients = 424;
  std::size_t d_g = 16;
  std::size_t d_m = 16;
  std::size_t patches_min = 8;
  std::size_t patches_max = 64;
  // Log hazard ratio per standard deviation of planted burden.
  double signal_strength = 1.0;
  // Probability that a patient is subject to administrative censoring at a
  // Uniform[12, 72] month cutoff (death can still precede it).
  double censoring_rate = 0.25;
  // Target fraction of patients with an observed death within 60 months;
  // the baseline Weibull scale is calibrated to hit it. Negative disables
  // calibration and baseline_scale_months is used as-is.
  double target_death_frac = 103.0 / 424.0;
  double baseline_scale_months = 90.0;
  double weibull_shape = 1.5;
  // Extra log hazard for patients older than 65 (demographic confound used
  // by the fold-construction audits).
  double age_log_hr = 0.0;
  // Minimum pairwise prototype distance in units of the patch noise norm
  // (feature_noise_sd * sqrt(d_m)), so the class layout stays learnable at
  // any feature dimension.
  double class_separation = 2.0;
  double feature_noise_sd = 1.0;
  DemographicMarginals demo;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

struct PatientLatent {
  double burden = 0.0;    // planted risk-class patch fraction in [0, 1)
  double burden_z = 0.0;  // burden standardized by its distribution moments
  double risk = 0.0;      // log relative hazard
};

struct Patient {
  ClinicalRecord clinical;
  PatchFeatureBag bag;
  PatientLatent latent;
};

struct Cohort {
  CohortConfig config;
  std::vector<Patient> patients;  // ordered by patient_id
};

struct ClinicalDraw {
  ClinicalRecord record;
  PatientLatent latent;
};

std::vector<ClinicalDraw> generate_clinical(const CohortConfig& config);

PatchFeatureBag generate_bag(const ClinicalRecord& record,
                             const PatientLatent& latent,
                             const CohortConfig& config, SplitRng rng);

Cohort generate_cohort(const CohortConfig& config);

// Class prototypes shared by every bag of a cohort: seeded Gaussian
// directions rescaled so the minimum pairwise distance is
// class_separation * feature_noise_sd * sqrt(d_m). The generic channel sees
// the same prototypes through a fixed random orthogonal map.
struct ClassPrototypes {
  num::Matrix morph;    // 13 x d_m
  num::Matrix generic;  // 13 x d_g
  double noise_sd = 1.0;
};

ClassPrototypes make_prototypes(const CohortConfig& config);

// Standalone labeled patch set drawn from the same class-conditional
// distributions (morphology-channel features), for classifier training and
// its oracles.
struct LabeledPatches {
  num::Matrix features;     // n x d_m
  std::vector<int> labels;  // n
};

LabeledPatches sample_labeled_patches(const CohortConfig& config,
                                      std::size_t per_class, SplitRng rng);

// On-disk cohort layout: clinical.csv, <patient_id>.bag, manifest.json with
// a config echo, the seed, and per-file content hashes. Round-trips are
// byte-identical.
inline constexpr const char* kClinicalCsvHeader =
    "patient_id,age,bmi,income,sex,treatment,grade,location,time_months,"
    "event,label5y";

void cohort_save(const Cohort& cohort, const std::filesystem::path& dir);
Cohort cohort_load(const std::filesystem::path& dir);

std::string clinical_to_csv(const std::vector<ClinicalRecord>& records);
std::vector<ClinicalRecord> clinical_from_csv_file(
    const std::filesystem::path& path);

// Moments of the planted burden distribution (zero-inflated Beta(1, 3)),
// used to standardize the hazard covariate.
double burden_mean();
double burden_sd();
double sample_burden(SplitRng& rng);

// JSON round-trip for the config block (strict: unknown keys rejected).
std::string cohort_config_to_json_text(const CohortConfig& config);
CohortConfig cohort_config_from_json_text(const std::string& text);

}  // namespace prism::cohort
