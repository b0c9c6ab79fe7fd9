#include "prism/stratcv.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include "prism/csv.hpp"
#include "prism/errors.hpp"

namespace prism::cv {

std::string Stratum::key() const {
  std::string s;
  s += age == AgeBand::le65 ? "age<=65" : "age>65";
  s += '|';
  switch (bmi) {
    case BmiBand::lt25: s += "bmi<25"; break;
    case BmiBand::from25to30: s += "bmi25-30"; break;
    case BmiBand::ge30: s += "bmi>=30"; break;
  }
  s += '|';
  s += income == IncomeBand::le_median ? "inc<=med" : "inc>med";
  return s;
}

const char* role_name(Role r) {
  switch (r) {
    case Role::train: return "train";
    case Role::val: return "val";
    case Role::test: return "test";
  }
  return "?";
}

Role parse_role(const std::string& s) {
  if (s == "train") return Role::train;
  if (s == "val") return Role::val;
  if (s == "test") return Role::test;
  throw DataError("unknown role: '" + s + "'");
}

const char* outcome_name(Outcome5y o) {
  switch (o) {
    case Outcome5y::died: return "died5y";
    case Outcome5y::survived: return "survived5y";
    case Outcome5y::unknown: return "no5y";
  }
  return "?";
}

Outcome5y outcome_of(const cohort::ClinicalRecord& r) {
  if (!cohort::has_five_year_label(r)) return Outcome5y::unknown;
  return r.label5y == 1 ? Outcome5y::died : Outcome5y::survived;
}

double StrataAssignment::CellStats::death_rate() const {
  std::size_t labeled = died5y + survived5y;
  return labeled == 0 ? std::nan("")
                      : static_cast<double>(died5y) /
                            static_cast<double>(labeled);
}

StrataAssignment assign_strata(
    const std::vector<cohort::ClinicalRecord>& records) {
  if (records.empty()) throw DataError("assign_strata: empty cohort");
  for (const auto& r : records) {
    if (!std::isfinite(r.age) || !std::isfinite(r.bmi) ||
        !std::isfinite(r.income)) {
      throw DataError("assign_strata: missing demographic attribute for " +
                      r.patient_id);
    }
  }

  std::vector<double> incomes;
  incomes.reserve(records.size());
  for (const auto& r : records) incomes.push_back(r.income);
  std::sort(incomes.begin(), incomes.end());
  double median = incomes[(incomes.size() - 1) / 2];  // lower median

  StrataAssignment out;
  out.income_median = median;
  out.strata.reserve(records.size());
  for (const auto& r : records) {
    Stratum s;
    s.age = r.age <= 65.0 ? AgeBand::le65 : AgeBand::gt65;
    s.bmi = r.bmi < 25.0 ? BmiBand::lt25
                         : (r.bmi < 30.0 ? BmiBand::from25to30 : BmiBand::ge30);
    s.income = r.income <= median ? IncomeBand::le_median
                                  : IncomeBand::gt_median;
    out.strata.push_back(s);

    auto& cell = out.report[s.key()];
    ++cell.count;
    switch (outcome_of(r)) {
      case Outcome5y::died: ++cell.died5y; break;
      case Outcome5y::survived: ++cell.survived5y; break;
      case Outcome5y::unknown: ++cell.unknown; break;
    }
  }
  return out;
}

const FoldAssignment::Entry& FoldAssignment::find(
    const std::string& patient_id) const {
  auto it = std::lower_bound(entries.begin(), entries.end(), patient_id,
                             [](const Entry& e, const std::string& id) {
                               return e.patient_id < id;
                             });
  if (it == entries.end() || it->patient_id != patient_id) {
    throw DataError("fold assignment missing patient " + patient_id);
  }
  return *it;
}

std::vector<std::size_t> FoldAssignment::fold_sizes() const {
  std::vector<std::size_t> sizes(static_cast<std::size_t>(k), 0);
  for (const auto& e : entries) ++sizes[static_cast<std::size_t>(e.fold)];
  return sizes;
}

namespace {

FoldAssignment folds_from_groups(
    const std::vector<cohort::ClinicalRecord>& records,
    const std::vector<std::string>& group_labels, int k, SplitRng& rng) {
  if (k < 2) throw ConfigError("make_folds: K must be >= 2");
  if (static_cast<std::size_t>(k) > records.size()) {
    throw ConfigError("make_folds: K exceeds cohort size");
  }

  // Canonical cell order (sorted label), patients sorted by id inside each
  // cell before the seeded shuffle, so the assignment is a pure function of
  // (records, K, seed).
  std::map<std::string, std::vector<std::size_t>> cells;
  for (std::size_t i = 0; i < records.size(); ++i) {
    cells[group_labels[i]].push_back(i);
  }

  FoldAssignment out;
  out.k = k;
  out.entries.resize(records.size());
  for (auto& [label, members] : cells) {
    std::sort(members.begin(), members.end(),
              [&](std::size_t a, std::size_t b) {
                return records[a].patient_id < records[b].patient_id;
              });
    rng.shuffle(members);
    // Rotate the deal start per cell so the +1 remainders don't all land on
    // the low-numbered folds.
    std::size_t offset = rng.uniform_index(static_cast<std::uint64_t>(k));
    for (std::size_t j = 0; j < members.size(); ++j) {
      std::size_t i = members[j];
      out.entries[i] = {records[i].patient_id, label, outcome_of(records[i]),
                        static_cast<int>((j + offset) %
                                         static_cast<std::size_t>(k))};
    }
  }
  std::sort(out.entries.begin(), out.entries.end(),
            [](const auto& a, const auto& b) {
              return a.patient_id < b.patient_id;
            });
  return out;
}

}  // namespace

FoldAssignment make_folds(const std::vector<cohort::ClinicalRecord>& records,
                          int k, SplitRng rng) {
  StrataAssignment strata = assign_strata(records);
  std::vector<std::string> labels;
  labels.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    labels.push_back(strata.strata[i].key() + "|" +
                     outcome_name(outcome_of(records[i])));
  }
  auto out = folds_from_groups(records, labels, k, rng);
  // Stratum provenance without the outcome suffix for reporting.
  for (auto& e : out.entries) {
    auto pos = e.stratum.rfind('|');
    e.stratum = e.stratum.substr(0, pos);
  }
  return out;
}

FoldAssignment naive_folds(const std::vector<cohort::ClinicalRecord>& records,
                           int k, SplitRng rng) {
  std::vector<std::string> labels(records.size(), "all");
  return folds_from_groups(records, labels, k, rng);
}

FoldAssignment kmeans_folds(const std::vector<cohort::ClinicalRecord>& records,
                            int k, int n_clusters, SplitRng rng) {
  if (n_clusters < 1) throw ConfigError("kmeans_folds: n_clusters must be >= 1");
  if (static_cast<std::size_t>(n_clusters) > records.size()) {
    throw ConfigError("kmeans_folds: more clusters than patients");
  }
  const std::size_t n = records.size();

  // z-scored (age, bmi, income) feature rows.
  std::array<double, 3> mu{}, sd{};
  auto feature = [&](const cohort::ClinicalRecord& r, std::size_t j) {
    return j == 0 ? r.age : (j == 1 ? r.bmi : r.income);
  };
  for (std::size_t j = 0; j < 3; ++j) {
    for (const auto& r : records) mu[j] += feature(r, j);
    mu[j] /= static_cast<double>(n);
    for (const auto& r : records) {
      double d = feature(r, j) - mu[j];
      sd[j] += d * d;
    }
    sd[j] = std::sqrt(sd[j] / static_cast<double>(n));
    if (sd[j] == 0.0) sd[j] = 1.0;
  }
  std::vector<std::array<double, 3>> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      x[i][j] = (feature(records[i], j) - mu[j]) / sd[j];
    }
  }

  // Lloyd's algorithm, seeded initial centers drawn from distinct patients.
  SplitRng init_rng = rng.split("centers");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  init_rng.shuffle(perm);
  std::vector<std::array<double, 3>> centers;
  for (int c = 0; c < n_clusters; ++c) centers.push_back(x[perm[c]]);

  std::vector<int> assign(n, 0);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < n_clusters; ++c) {
        double d = 0.0;
        for (std::size_t j = 0; j < 3; ++j) {
          double diff = x[i][j] - centers[c][j];
          d += diff * diff;
        }
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    if (!changed && iter > 0) break;
    std::vector<std::array<double, 3>> sums(n_clusters, {0, 0, 0});
    std::vector<std::size_t> counts(n_clusters, 0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < 3; ++j) sums[assign[i]][j] += x[i][j];
      ++counts[assign[i]];
    }
    for (int c = 0; c < n_clusters; ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its center
      for (std::size_t j = 0; j < 3; ++j) {
        centers[c][j] = sums[c][j] / static_cast<double>(counts[c]);
      }
    }
  }

  std::vector<std::string> labels;
  labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels.push_back("cluster" + std::to_string(assign[i]) + "|" +
                     outcome_name(outcome_of(records[i])));
  }
  auto out = folds_from_groups(records, labels, k, rng);
  for (auto& e : out.entries) {
    auto pos = e.stratum.rfind('|');
    e.stratum = e.stratum.substr(0, pos);
  }
  return out;
}

std::map<std::string, Role> split_roles(const FoldAssignment& folds,
                                        int test_fold) {
  if (test_fold < 0 || test_fold >= folds.k) {
    throw ConfigError("split_roles: test fold out of range");
  }

  std::map<std::string, Role> roles;
  // Non-test patients grouped by (stratum, outcome) cell, in canonical
  // patient order.
  std::map<std::string, std::vector<const FoldAssignment::Entry*>> cells;
  std::size_t n_rest = 0;
  for (const auto& e : folds.entries) {
    if (e.fold == test_fold) {
      roles[e.patient_id] = Role::test;
    } else {
      cells[e.stratum + "|" + outcome_name(e.outcome)].push_back(&e);
      ++n_rest;
    }
  }

  // 1/8 of the non-test pool goes to validation, allocated per cell by
  // largest remainder so the global count is exact and each cell is within
  // one patient of proportional.
  auto total_val = static_cast<std::size_t>(
      std::llround(static_cast<double>(n_rest) / 8.0));
  std::vector<std::pair<double, std::string>> remainders;
  std::map<std::string, std::size_t> val_quota;
  std::size_t allocated = 0;
  for (const auto& [label, members] : cells) {
    double exact = static_cast<double>(members.size()) / 8.0;
    auto base = static_cast<std::size_t>(std::floor(exact));
    base = std::min(base, members.size());
    val_quota[label] = base;
    allocated += base;
    remainders.emplace_back(exact - std::floor(exact), label);
  }
  std::sort(remainders.begin(), remainders.end(), [](const auto& a,
                                                     const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (const auto& [frac, label] : remainders) {
    if (allocated >= total_val) break;
    if (val_quota[label] < cells[label].size()) {
      ++val_quota[label];
      ++allocated;
    }
  }

  for (const auto& [label, members] : cells) {
    std::size_t quota = val_quota[label];
    // Validation picks are spread across folds: order by (fold, id) and
    // take every 8th slot first, then top up from the tail.
    std::vector<const FoldAssignment::Entry*> ordered = members;
    std::sort(ordered.begin(), ordered.end(),
              [](const FoldAssignment::Entry* a,
                 const FoldAssignment::Entry* b) {
                if (a->fold != b->fold) return a->fold < b->fold;
                return a->patient_id < b->patient_id;
              });
    std::size_t taken = 0;
    for (std::size_t i = 7; i < ordered.size() && taken < quota; i += 8) {
      roles[ordered[i]->patient_id] = Role::val;
      ++taken;
    }
    for (std::size_t i = ordered.size(); i > 0 && taken < quota; --i) {
      auto id = ordered[i - 1]->patient_id;
      if (!roles.contains(id)) {
        roles[id] = Role::val;
        ++taken;
      }
    }
    for (const auto* e : ordered) {
      if (!roles.contains(e->patient_id)) roles[e->patient_id] = Role::train;
    }
  }
  return roles;
}

std::string folds_to_csv(const FoldAssignment& folds,
                         const std::map<std::string, Role>& roles) {
  CsvWriter w;
  w.row({"patient_id", "stratum", "fold", "role"});
  for (const auto& e : folds.entries) {
    auto it = roles.find(e.patient_id);
    if (it == roles.end()) {
      throw DataError("folds_to_csv: no role for " + e.patient_id);
    }
    w.row({e.patient_id, e.stratum, std::to_string(e.fold),
           role_name(it->second)});
  }
  return w.str();
}

std::vector<double> fold_prevalence(
    const FoldAssignment& folds,
    const std::vector<cohort::ClinicalRecord>& records) {
  std::vector<std::size_t> labeled(static_cast<std::size_t>(folds.k), 0);
  std::vector<std::size_t> died(static_cast<std::size_t>(folds.k), 0);
  for (const auto& r : records) {
    if (!cohort::has_five_year_label(r)) continue;
    const auto& e = folds.find(r.patient_id);
    auto f = static_cast<std::size_t>(e.fold);
    ++labeled[f];
    died[f] += r.label5y == 1 ? 1 : 0;
  }
  std::vector<double> prev(static_cast<std::size_t>(folds.k), 0.0);
  for (std::size_t f = 0; f < prev.size(); ++f) {
    prev[f] = labeled[f] == 0 ? std::nan("")
                              : static_cast<double>(died[f]) /
                                    static_cast<double>(labeled[f]);
  }
  return prev;
}

}  // namespace prism::cv
