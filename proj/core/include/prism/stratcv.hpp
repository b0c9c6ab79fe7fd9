#pragma once

#include <map>
#include <string>
#include <vector>

#include "prism/cohort.hpp"
#include "prism/rng.hpp"

namespace prism::cv {

enum class AgeBand { le65, gt65 };
enum class BmiBand { lt25, from25to30, ge30 };
enum class IncomeBand { le_median, gt_median };
enum class Outcome5y { died, survived, unknown };
enum class Role { train, val, test };

// Demographic bands follow a [lower, upper) convention except age, whose
// low band is inclusive at 65.
struct Stratum {
  AgeBand age = AgeBand::le65;
  BmiBand bmi = BmiBand::lt25;
  IncomeBand income = IncomeBand::le_median;

  auto operator<=>(const Stratum&) const = default;
  std::string key() const;
};

const char* role_name(Role r);
Role parse_role(const std::string& s);
const char* outcome_name(Outcome5y o);

Outcome5y outcome_of(const cohort::ClinicalRecord& r);

struct StrataAssignment {
  // Parallel to the input records.
  std::vector<Stratum> strata;
  double income_median = 0.0;  // lower-median tie convention

  struct CellStats {
    std::size_t count = 0;
    std::size_t died5y = 0;
    std::size_t survived5y = 0;
    std::size_t unknown = 0;
    double death_rate() const;  // among patients with a five-year outcome
  };
  std::map<std::string, CellStats> report;  // keyed by Stratum::key()
};

StrataAssignment assign_strata(
    const std::vector<cohort::ClinicalRecord>& records);

struct FoldAssignment {
  struct Entry {
    std::string patient_id;
    std::string stratum;  // provenance label (threshold key, cluster id, ...)
    Outcome5y outcome = Outcome5y::unknown;
    int fold = 0;
  };
  std::vector<Entry> entries;  // ordered by patient_id
  int k = 0;

  const Entry& find(const std::string& patient_id) const;
  std::vector<std::size_t> fold_sizes() const;
};

// Within each (stratum x outcome) cell: seeded shuffle, then round-robin
// deal across the K folds, so per-cell fold counts differ by at most one.
FoldAssignment make_folds(const std::vector<cohort::ClinicalRecord>& records,
                          int k, SplitRng rng);

// Plain shuffled K-fold ignoring strata and outcome; the baseline for the
// fold-balance audit.
FoldAssignment naive_folds(const std::vector<cohort::ClinicalRecord>& records,
                           int k, SplitRng rng);

// K-means variant: patients clustered on z-scored (age, bmi, income), folds
// built within each cluster x outcome cell.
FoldAssignment kmeans_folds(const std::vector<cohort::ClinicalRecord>& records,
                            int k, int n_clusters, SplitRng rng);

// Test fold -> test role; the remaining folds are split 7/8 train, 1/8 val
// per cell (largest-remainder rounding), giving the 70/10/20 layout at K=5.
std::map<std::string, Role> split_roles(const FoldAssignment& folds,
                                        int test_fold);

std::string folds_to_csv(const FoldAssignment& folds,
                         const std::map<std::string, Role>& roles);

// Per-fold five-year death prevalence among labelable patients.
std::vector<double> fold_prevalence(
    const FoldAssignment& folds,
    const std::vector<cohort::ClinicalRecord>& records);

}  // namespace prism::cv
