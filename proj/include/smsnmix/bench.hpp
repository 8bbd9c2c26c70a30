#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "smsnmix/ecm.hpp"

namespace smsn::bench {

enum class Overlap { Separated, Close };

std::string overlap_name(Overlap overlap);
Overlap overlap_from_name(std::string_view name);

/// Two-component bivariate design: pi = (0.3, 0.7), mu_1 = (-5, 0),
/// mu_2 = (-3, 0) or (-1, 0), lambda = (3, 6) and (5, 4), unit-correlation
/// scale matrices of opposite sign, and nu = (4, 7), alpha = (3, 2) or
/// eta = (2, 3) by family.
MixtureModel make_truth(Overlap overlap, LawKind family);

/// Blanks cells in exactly round(rate n) distinct rows chosen uniformly.
/// Each coordinate of a chosen row is deleted with probability 1/2, redrawn
/// until the row keeps at least one observed and one missing cell.
Matrix inject_mar(const Matrix& data, double rate, std::uint64_t seed);

/// Hubert-Arabie adjusted Rand index.  Returns 1 when both partitions have a
/// single block or both are all singletons.
double ari(std::span<const int> labels_a, std::span<const int> labels_b);

struct BlockError {
  double ab = 0.0;
  double rmse = 0.0;
};

/// Absolute bias (1/B) sum_b sum_k |est - truth| and root mean squared error
/// sqrt((1/B) sum_b sum_k (est - truth)^2), the inner sum running over the
/// entries of a parameter block across components.
struct Recovery {
  BlockError location;
  BlockError skewness;
  BlockError scale_trace;
  BlockError scale_antitrace;  // sum of off-diagonal entries
  BlockError weights;
  BlockError theta;
};

/// Component order of `estimate` matched to `truth` by the permutation with
/// the smallest total location distance (first in lexicographic order on ties).
std::vector<int> match_components(const MixtureModel& truth, const MixtureModel& estimate);

Recovery ab_rmse(const MixtureModel& truth, std::span<const MixtureModel> estimates);

struct FamilyPair {
  LawKind generator;
  LawKind fitted;
};

struct ExperimentGrid {
  std::vector<FamilyPair> families;
  std::vector<double> rates{0.0, 0.2, 0.4, 0.6, 0.8};
  std::vector<Overlap> overlaps{Overlap::Separated, Overlap::Close};
  std::vector<int> sizes{200, 500};
  int replicates = 20;
  int max_iter = 500;
  double tolerance = 1e-5;
  int threads = 1;

  /// Each family fitted to its own generator.
  static ExperimentGrid standard();
  void validate() const;
};

struct MetricsRow {
  LawKind generator;
  LawKind fitted;
  double rate = 0.0;
  Overlap overlap = Overlap::Separated;
  int n = 0;
  int replicates = 0;
  int failures = 0;      // fits that raised an error
  int nonconverged = 0;  // fits that stopped at max_iter (kept in averages)
  bool flagged = false;  // more than 20% failures
  double mean_ari = 0.0;
  Recovery recovery;

  std::string scenario_id() const;
};

/// Every cell of the grid, in order family > rate > overlap > n.  Replicate
/// r of cell c draws from seeds derived from (seed, c, r) only, so results
/// do not depend on the thread count.
std::vector<MetricsRow> run_grid(const ExperimentGrid& grid, std::uint64_t seed);

/// splitmix64 mix of a base seed with stream indices.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

}  // namespace smsn::bench
