#include <doctest.h>

#include <cmath>
#include <random>

#include "smsnmix/bench.hpp"
#include "support.hpp"

using namespace smsn;
using namespace smsn::bench;
using namespace smsn::testing;

namespace {

// Pair-counting definition of the adjusted Rand index.
double brute_ari(const std::vector<int>& a, const std::vector<int>& b) {
  const std::size_t n = a.size();
  double both = 0.0, in_a = 0.0, in_b = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool sa = a[i] == a[j], sb = b[i] == b[j];
      both += sa && sb;
      in_a += sa;
      in_b += sb;
      pairs += 1.0;
    }
  const double expected = in_a * in_b / pairs;
  return (both - expected) / (0.5 * (in_a + in_b) - expected);
}

MixtureModel point_model(double mu) {
  MixtureModel m;
  m.components = {ComponentParams{vec({mu}), Matrix::Identity(1, 1), vec({0.0}), 0.0}};
  m.laws = {ScaleLaw::skew_normal()};
  m.weights = {1.0};
  return m;
}

int count_missing(const Matrix& x, int row) { return static_cast<int>(x.row(row).array().isNaN().count()); }

}  // namespace

TEST_CASE("design truth") {
  const MixtureModel sn = make_truth(Overlap::Separated, LawKind::Degenerate);
  CHECK(sn.weights[0] == 0.3);
  CHECK(sn.components[1].mu == vec({-3.0, 0.0}));
  CHECK_NOTHROW(sn.validate());
  const MixtureModel st = make_truth(Overlap::Close, LawKind::GammaInverse);
  CHECK(st.laws[0].param() == 4.0);
  CHECK(st.laws[1].param() == 7.0);
  CHECK(st.components[1].mu == vec({-1.0, 0.0}));
  const MixtureModel vg = make_truth(Overlap::Separated, LawKind::Gamma);
  CHECK(vg.laws[0].gamma2() == 4.0);
  CHECK(vg.laws[1].gamma2() == 6.0);
  CHECK(make_truth(Overlap::Close, LawKind::BetaInverse).laws[1].param() == 2.0);
  CHECK(overlap_from_name(overlap_name(Overlap::Close)) == Overlap::Close);
}

TEST_CASE("missingness injection") {
  std::mt19937_64 rng(1);
  const Matrix x = sample_mixture(make_truth(Overlap::Separated, LawKind::Degenerate), 200, rng).data;
  CHECK(inject_mar(x, 0.0, 5) == x);

  const Matrix y = inject_mar(x, 0.2, 5);
  int rows_hit = 0;
  for (int i = 0; i < 200; ++i) {
    const int m = count_missing(y, i);
    CHECK(m <= 1);
    if (m == 0) {
      CHECK(y.row(i) == x.row(i));
    } else {
      ++rows_hit;
    }
  }
  CHECK(rows_hit == 40);
  CHECK((inject_mar(x, 0.2, 5).array().isNaN() == y.array().isNaN()).all());

  // higher rates extend the same draw
  const Matrix z = inject_mar(x, 0.6, 5);
  for (int i = 0; i < 200; ++i)
    if (count_missing(y, i) > 0) CHECK((z.row(i).array().isNaN() == y.row(i).array().isNaN()).all());

  std::normal_distribution<double> n01;
  Matrix wide(50, 5);
  for (int i = 0; i < 50; ++i)
    for (int j = 0; j < 5; ++j) wide(i, j) = n01(rng);
  const Matrix w = inject_mar(wide, 0.5, 9);
  int wide_hit = 0;
  for (int i = 0; i < 50; ++i) {
    const int m = count_missing(w, i);
    CHECK(m < 5);
    wide_hit += m > 0;
  }
  CHECK(wide_hit == 25);

  CHECK_THROWS_AS(inject_mar(x, 1.0, 1), Error);
  CHECK_THROWS_AS(inject_mar(Matrix::Zero(10, 1), 0.5, 1), Error);
}

TEST_CASE("missingness frequency per column") {
  const Matrix x = Matrix::Zero(100, 2);
  double col0 = 0.0;
  const int seeds = 1000;
  for (int s = 0; s < seeds; ++s) col0 += inject_mar(x, 0.4, s).col(0).array().isNaN().count();
  const double freq = col0 / (100.0 * seeds);
  // each cell is missing with probability 0.4 * 0.5 = 0.2
  const double se = std::sqrt(0.2 * 0.8 / (100.0 * seeds));
  CHECK(std::abs(freq - 0.2) < 3.0 * se);
}

TEST_CASE("adjusted rand index") {
  const std::vector<int> a{1, 1, 1, 2, 2, 2};
  const std::vector<int> b{1, 1, 1, 1, 2, 2};
  CHECK(std::abs(ari(a, b) - 0.3243243) < 1e-7);
  CHECK(ari(a, b) == doctest::Approx(brute_ari(a, b)).epsilon(1e-14));
  CHECK(ari(a, a) == 1.0);
  CHECK(ari(a, std::vector<int>{7, 7, 7, 3, 3, 3}) == 1.0);
  CHECK(ari(std::vector<int>{0, 1, 2, 3, 4, 5}, b) == 0.0);
  CHECK(ari(b, a) == ari(a, b));
  CHECK_THROWS_AS(ari(a, std::vector<int>{1, 2}), Error);

  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> label(0, 3);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<int> x(40), y(40), y_relabeled(40);
    for (int i = 0; i < 40; ++i) {
      x[i] = label(rng);
      y[i] = label(rng);
      y_relabeled[i] = 10 - 3 * y[i];
    }
    CHECK(ari(x, y) == doctest::Approx(brute_ari(x, y)).epsilon(1e-12));
    CHECK(ari(x, y) == ari(x, y_relabeled));
    CHECK(ari(x, y) >= -0.5);
    CHECK(ari(x, y) <= 1.0);
  }
}

TEST_CASE("absolute bias and rmse") {
  const MixtureModel truth = make_truth(Overlap::Separated, LawKind::GammaInverse);
  const std::vector<MixtureModel> same(3, truth);
  const Recovery zero = ab_rmse(truth, same);
  CHECK(zero.location.ab == 0.0);
  CHECK(zero.location.rmse == 0.0);
  CHECK(zero.skewness.rmse == 0.0);
  CHECK(zero.scale_trace.ab == 0.0);
  CHECK(zero.scale_antitrace.ab == 0.0);
  CHECK(zero.theta.rmse == 0.0);

  const std::vector<MixtureModel> pair{point_model(1.5), point_model(0.5)};
  const Recovery r = ab_rmse(point_model(1.0), pair);
  CHECK(r.location.ab == 0.5);
  CHECK(r.location.rmse == 0.5);
  const std::vector<MixtureModel> single{point_model(1.7)};
  const Recovery s = ab_rmse(point_model(1.0), single);
  CHECK(s.location.rmse == doctest::Approx(s.location.ab).epsilon(1e-15));

  std::mt19937_64 rng(4);
  std::normal_distribution<double> noise(0.0, 0.1);
  for (int p : {1, 3}) {
    MixtureModel base;
    base.components = {ComponentParams{Vector::Zero(p), Matrix::Identity(p, p), Vector::Zero(p), 0.0}};
    base.laws = {ScaleLaw::skew_normal()};
    base.weights = {1.0};
    std::vector<MixtureModel> draws;
    for (int b = 0; b < 200; ++b) {
      MixtureModel m = base;
      for (int j = 0; j < p; ++j) m.components[0].mu[j] += noise(rng);
      draws.push_back(m);
    }
    CHECK(ab_rmse(base, draws).location.rmse == doctest::Approx(0.1 * std::sqrt(p)).epsilon(0.1));
  }
}

TEST_CASE("component matching undoes label switching") {
  const MixtureModel truth = make_truth(Overlap::Close, LawKind::Degenerate);
  MixtureModel swapped = truth;
  std::swap(swapped.components[0], swapped.components[1]);
  std::swap(swapped.weights[0], swapped.weights[1]);
  CHECK(match_components(truth, swapped) == std::vector<int>{1, 0});
  const std::vector<MixtureModel> est{swapped};
  CHECK(ab_rmse(truth, est).location.ab == 0.0);
  CHECK(ab_rmse(truth, est).weights.ab == 0.0);
}

TEST_CASE("grid runs") {
  ExperimentGrid grid;
  grid.families = {{LawKind::Degenerate, LawKind::Degenerate}};
  grid.rates = {0.0};
  grid.overlaps = {Overlap::Separated};
  grid.sizes = {120};
  grid.replicates = 1;
  grid.max_iter = 30;
  const std::vector<MetricsRow> one = run_grid(grid, 17);
  REQUIRE(one.size() == 1);
  CHECK(one[0].failures == 0);
  CHECK(one[0].mean_ari >= -0.5);
  CHECK(one[0].mean_ari <= 1.0);
  CHECK(one[0].scenario_id() == "skew-normal/skew-normal/rate0.00/separated/n120");

  grid.rates = {0.0, 0.4};
  grid.overlaps = {Overlap::Separated, Overlap::Close};
  grid.replicates = 3;
  const std::vector<MetricsRow> a = run_grid(grid, 18);
  grid.threads = 3;
  const std::vector<MetricsRow> b = run_grid(grid, 18);
  REQUIRE(a.size() == 4);
  for (std::size_t c = 0; c < a.size(); ++c) {
    CHECK(a[c].scenario_id() == b[c].scenario_id());
    CHECK(a[c].mean_ari == b[c].mean_ari);
    CHECK(a[c].recovery.location.rmse == b[c].recovery.location.rmse);
    CHECK(a[c].recovery.skewness.ab == b[c].recovery.skewness.ab);
  }
  CHECK(a[1].rate == 0.0);
  CHECK(a[1].overlap == Overlap::Close);
  CHECK(a[2].rate == 0.4);

  grid.rates = {1.2};
  CHECK_THROWS_AS(run_grid(grid, 1), Error);
}
