#include "smsnmix/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "parallel.hpp"

namespace smsn::bench {

namespace {

double choose2(double n) { return 0.5 * n * (n - 1.0); }

ScaleLaw design_law(LawKind family, int g) {
  switch (family) {
    case LawKind::Degenerate: return ScaleLaw::skew_normal();
    case LawKind::GammaInverse: return ScaleLaw::skew_t(g == 0 ? 4.0 : 7.0);
    case LawKind::BetaInverse: return ScaleLaw::skew_slash(g == 0 ? 3.0 : 2.0);
    case LawKind::Gamma: return ScaleLaw::skew_vgamma(g == 0 ? 2.0 : 3.0);
  }
  return ScaleLaw::skew_normal();
}

struct Accumulator {
  double abs_sum = 0.0;
  double sq_sum = 0.0;

  void add(double estimate, double truth) {
    abs_sum += std::abs(estimate - truth);
    sq_sum += (estimate - truth) * (estimate - truth);
  }
  BlockError finish(double replicates) const {
    if (replicates == 0.0) return {};
    return {abs_sum / replicates, std::sqrt(sq_sum / replicates)};
  }
};

double antitrace(const Matrix& m) { return m.sum() - m.trace(); }

struct ReplicateResult {
  bool ok = false;
  bool converged = false;
  double ari = 0.0;
  MixtureModel model;
};

}  // namespace

std::string overlap_name(Overlap overlap) { return overlap == Overlap::Separated ? "separated" : "close"; }

Overlap overlap_from_name(std::string_view name) {
  if (name == "separated") return Overlap::Separated;
  if (name == "close") return Overlap::Close;
  throw Error(Errc::InvalidArgument, "unknown overlap '" + std::string(name) + "'");
}

MixtureModel make_truth(Overlap overlap, LawKind family) {
  MixtureModel m;
  ComponentParams a{Vector(2), Matrix(2, 2), Vector(2), 0.0};
  ComponentParams b = a;
  a.mu << -5.0, 0.0;
  a.sigma << 3.0, -1.0, -1.0, 3.0;
  a.lambda << 3.0, 6.0;
  b.mu << (overlap == Overlap::Separated ? -3.0 : -1.0), 0.0;
  b.sigma << 3.0, 1.0, 1.0, 3.0;
  b.lambda << 5.0, 4.0;
  m.components = {a, b};
  m.laws = {design_law(family, 0), design_law(family, 1)};
  m.weights = {0.3, 0.7};
  return m;
}

Matrix inject_mar(const Matrix& data, double rate, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0)) throw Error(Errc::InvalidArgument, "missing rate must lie in [0, 1)");
  const int n = static_cast<int>(data.rows());
  const int p = static_cast<int>(data.cols());
  const int selected = static_cast<int>(std::lround(rate * n));
  if (selected > 0 && p < 2) throw Error(Errc::InvalidArgument, "row-level missingness needs p >= 2");
  std::mt19937_64 rng(seed);
  std::vector<int> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  std::shuffle(rows.begin(), rows.end(), rng);
  std::bernoulli_distribution drop(0.5);
  Matrix out = data;
  std::vector<bool> mask(p);
  for (int r = 0; r < selected; ++r) {
    int n_missing = 0;
    do {
      n_missing = 0;
      for (int j = 0; j < p; ++j) n_missing += (mask[j] = drop(rng)) ? 1 : 0;
    } while (n_missing == 0 || n_missing == p);
    for (int j = 0; j < p; ++j)
      if (mask[j]) out(rows[r], j) = std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

double ari(std::span<const int> labels_a, std::span<const int> labels_b) {
  if (labels_a.size() != labels_b.size()) throw Error(Errc::DimensionMismatch, "label vectors differ in length");
  std::map<std::pair<int, int>, double> table;
  std::map<int, double> rows, cols;
  for (std::size_t i = 0; i < labels_a.size(); ++i) {
    table[{labels_a[i], labels_b[i]}] += 1.0;
    rows[labels_a[i]] += 1.0;
    cols[labels_b[i]] += 1.0;
  }
  double index = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& [key, count] : table) index += choose2(count);
  for (const auto& [key, count] : rows) sum_a += choose2(count);
  for (const auto& [key, count] : cols) sum_b += choose2(count);
  const double pairs = choose2(static_cast<double>(labels_a.size()));
  const double expected = pairs > 0.0 ? sum_a * sum_b / pairs : 0.0;
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

std::vector<int> match_components(const MixtureModel& truth, const MixtureModel& estimate) {
  if (truth.size() != estimate.size()) throw Error(Errc::DimensionMismatch, "component counts differ");
  std::vector<int> perm(truth.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    double cost = 0.0;
    for (int g = 0; g < truth.size(); ++g)
      cost += (estimate.components[perm[g]].mu - truth.components[g].mu).norm();
    if (cost < best_cost) {
      best_cost = cost;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

Recovery ab_rmse(const MixtureModel& truth, std::span<const MixtureModel> estimates) {
  Accumulator location, skewness, trace, anti, weights, theta;
  for (const MixtureModel& est : estimates) {
    const std::vector<int> match = match_components(truth, est);
    for (int g = 0; g < truth.size(); ++g) {
      const ComponentParams& t = truth.components[g];
      const ComponentParams& e = est.components[match[g]];
      if (e.dim() != t.dim()) throw Error(Errc::DimensionMismatch, "estimate dimension differs from truth");
      for (int j = 0; j < t.dim(); ++j) {
        location.add(e.mu[j], t.mu[j]);
        skewness.add(e.lambda[j], t.lambda[j]);
      }
      trace.add(e.sigma.trace(), t.sigma.trace());
      anti.add(antitrace(e.sigma), antitrace(t.sigma));
      weights.add(est.weights[match[g]], truth.weights[g]);
      if (!truth.laws[g].is_degenerate()) theta.add(est.laws[match[g]].param(), truth.laws[g].param());
    }
  }
  const double b = static_cast<double>(estimates.size());
  return {location.finish(b), skewness.finish(b), trace.finish(b),
          anti.finish(b),     weights.finish(b),  theta.finish(b)};
}

ExperimentGrid ExperimentGrid::standard() {
  ExperimentGrid grid;
  for (LawKind k : {LawKind::Degenerate, LawKind::GammaInverse, LawKind::BetaInverse, LawKind::Gamma})
    grid.families.push_back({k, k});
  return grid;
}

void ExperimentGrid::validate() const {
  if (families.empty() || rates.empty() || overlaps.empty() || sizes.empty())
    throw Error(Errc::InvalidArgument, "every grid axis needs at least one value");
  for (double r : rates)
    if (!(r >= 0.0 && r < 1.0)) throw Error(Errc::InvalidArgument, "missing rates must lie in [0, 1)");
  for (int n : sizes)
    if (n < 2) throw Error(Errc::InvalidArgument, "sample sizes must be at least 2");
  if (replicates < 1) throw Error(Errc::InvalidArgument, "replicates must be at least 1");
  if (max_iter < 3) throw Error(Errc::InvalidArgument, "max_iter must be at least 3");
  if (!(tolerance > 0.0)) throw Error(Errc::InvalidArgument, "tolerance must be positive");
  if (threads < 1) throw Error(Errc::InvalidArgument, "threads must be at least 1");
}

std::string MetricsRow::scenario_id() const {
  char rate_text[16];
  std::snprintf(rate_text, sizeof rate_text, "%.2f", rate);
  return law_kind_name(generator) + "/" + law_kind_name(fitted) + "/rate" + rate_text + "/" +
         overlap_name(overlap) + "/n" + std::to_string(n);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ a) ^ b);
}

std::vector<MetricsRow> run_grid(const ExperimentGrid& grid, std::uint64_t seed) {
  grid.validate();
  std::vector<MetricsRow> cells;
  std::vector<std::uint64_t> sample_streams;
  for (const FamilyPair& fam : grid.families)
    for (double rate : grid.rates)
      for (Overlap overlap : grid.overlaps)
        for (int n : grid.sizes) {
          MetricsRow row;
          row.generator = fam.generator;
          row.fitted = fam.fitted;
          row.rate = rate;
          row.overlap = overlap;
          row.n = n;
          row.replicates = grid.replicates;
          cells.push_back(row);
          // the sample depends on generator, overlap and n only, so rates and
          // fitted families compare on common draws
          sample_streams.push_back(static_cast<std::uint64_t>(fam.generator) * 1000003ULL +
                                   static_cast<std::uint64_t>(overlap) * 1009ULL + static_cast<std::uint64_t>(n));
        }

  const int n_cells = static_cast<int>(cells.size());
  const int reps = grid.replicates;
  std::vector<ReplicateResult> results(static_cast<std::size_t>(n_cells) * reps);
  detail::parallel_for(n_cells * reps, grid.threads, [&](int task) {
    const int c = task / reps;
    const int r = task % reps;
    const MetricsRow& cell = cells[c];
    const std::uint64_t base = derive_seed(seed, sample_streams[c], static_cast<std::uint64_t>(r));
    const MixtureModel truth = make_truth(cell.overlap, cell.generator);
    std::mt19937_64 rng(base);
    const MixtureSample sample = sample_mixture(truth, cell.n, rng);
    ReplicateResult& out = results[task];
    try {
      FitConfig config;
      config.n_components = truth.size();
      config.family = cell.fitted;
      config.seed = derive_seed(base, 2);
      config.max_iter = grid.max_iter;
      config.tolerance = grid.tolerance;
      const FitReport report =
          fit(IncompleteData::from_matrix(inject_mar(sample.data, cell.rate, derive_seed(base, 1))), config);
      out.ari = ari(report.labels, sample.labels);
      out.converged = report.converged;
      out.model = report.model;
      out.ok = true;
    } catch (const Error&) {
      out.ok = false;
    }
  });

  for (int c = 0; c < n_cells; ++c) {
    MetricsRow& row = cells[c];
    std::vector<MixtureModel> models;
    double ari_sum = 0.0;
    for (int r = 0; r < reps; ++r) {
      const ReplicateResult& res = results[static_cast<std::size_t>(c) * reps + r];
      if (!res.ok) {
        ++row.failures;
        continue;
      }
      if (!res.converged) ++row.nonconverged;
      ari_sum += res.ari;
      models.push_back(res.model);
    }
    row.flagged = row.failures > 0.2 * reps;
    row.mean_ari = models.empty() ? std::numeric_limits<double>::quiet_NaN() : ari_sum / models.size();
    if (!models.empty()) row.recovery = ab_rmse(make_truth(row.overlap, row.generator), models);
  }
  return cells;
}

}  // namespace smsn::bench
