#include <doctest.h>

#include <cmath>
#include <random>

#include "ksdist/mmspace.hpp"
#include "ksdist/spaces.hpp"
#include "oracles/oracles.hpp"

using namespace ksd;

namespace {

// Path graph 0 - 1 - ... - (n-1) with spacing h and unit measure per point.
MMSpace path(Index n, double h = 1.0) {
  std::vector<Edge> e;
  for (Index i = 0; i + 1 < n; ++i) e.push_back({i, i + 1, h});
  Mat c(static_cast<Eigen::Index>(n), 1);
  for (Index i = 0; i < n; ++i) c(static_cast<Eigen::Index>(i), 0) = h * static_cast<double>(i);
  return MMSpace::from_graph(n, e, std::vector<double>(n, 1.0)).with_coordinates(c).with_boundary({0, n - 1});
}

std::vector<std::vector<double>> full_matrix(const MMSpace& s) {
  std::vector<std::vector<double>> D(s.size(), std::vector<double>(s.size()));
  for (Index i = 0; i < s.size(); ++i) {
    for (Index j = 0; j < s.size(); ++j) D[i][j] = s.distance(i, j);
  }
  return D;
}

}  // namespace

TEST_CASE("construction validates input") {
  CHECK_THROWS_AS(MMSpace::from_graph(3, {{0, 1, 1.0}}, {1, 1, 1}), ConfigError);  // disconnected
  CHECK_THROWS_AS(MMSpace::from_graph(2, {{0, 1, -1.0}}, {1, 1}), ConfigError);
  CHECK_THROWS_AS(MMSpace::from_graph(2, {{0, 1, 1.0}}, {1, 0}), ConfigError);
  Mat D(2, 2);
  D << 0, 1, 2, 0;
  CHECK_THROWS_AS(MMSpace::from_dense(D, {1, 1}), ConfigError);
}

TEST_CASE("graph metric is the shortest-path closure") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> w(0.1, 2.0);
  std::vector<Edge> edges;
  std::vector<oracle::WeightedPair> ref;
  const Index n = 30;
  for (Index i = 0; i + 1 < n; ++i) edges.push_back({i, i + 1, w(rng)});
  std::uniform_int_distribution<Index> pick(0, n - 1);
  for (int k = 0; k < 40; ++k) {
    const Index a = pick(rng), b = pick(rng);
    if (a != b) edges.push_back({a, b, w(rng)});
  }
  for (const auto& e : edges) ref.push_back({e.i, e.j, e.w});
  const MMSpace s = MMSpace::from_graph(n, edges, std::vector<double>(n, 1.0));
  const auto D = oracle::floyd(n, ref);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) CHECK(s.distance(i, j) == doctest::Approx(D[i][j]).epsilon(1e-14));
  }
  CHECK(s.triangle_violation() <= 1e-12);
}

TEST_CASE("balls") {
  const MMSpace s = path(7, 0.5);
  CHECK(s.ball(3, 0.0) == std::vector<Index>{3});
  auto b = s.ball(3, 0.75);
  std::sort(b.begin(), b.end());
  CHECK(b == std::vector<Index>{2, 3, 4});
  CHECK(s.ball(0, s.diameter()).size() == 7);
  // Neighbourhoods are sorted by (distance, index).
  const Neighborhood nb = s.neighborhood(3, 1.0);
  for (Index k = 1; k < nb.size(); ++k) {
    CHECK((nb[k - 1].dist < nb[k].dist || (nb[k - 1].dist == nb[k].dist && nb[k - 1].index < nb[k].index)));
  }
}

TEST_CASE("mean integrals") {
  Mat D(2, 2);
  D << 0, 1, 1, 0;
  const MMSpace two = MMSpace::from_dense(D, {1.0, 3.0});
  const std::vector<Index> both{0, 1};
  CHECK(mean_integral(two, make_field(two, {0.0, 4.0}), both) == doctest::Approx(3.0));
  const MMSpace p3 = path(3);
  const std::vector<Index> all{0, 1, 2};
  CHECK(mean_integral(p3, make_field(p3, {1, 2, 3}), all) == doctest::Approx(2.0));
  CHECK(mean_integral(p3, constant_field(p3, 7.5), all) == doctest::Approx(7.5));
  CHECK_THROWS(mean_integral(p3, constant_field(p3, 1.0), std::vector<Index>{}));
}

TEST_CASE("mean-oscillation contraction: mean|f - f_A| <= 2 mean|f - c|") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> nd;
  const MMSpace s = build_minkowski_grid(Norm::euclidean(2), Vec::Zero(2), Vec::Ones(2), 8).space;
  std::uniform_int_distribution<Index> pick(0, s.size() - 1);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> v(s.size());
    for (auto& x : v) x = nd(rng);
    const ScalarField f = make_field(s, v);
    const std::vector<Index> A = s.ball(pick(rng), 0.3);
    const double c = nd(rng);
    const double fa = mean_integral(s, f, A);
    double lhs = 0.0, rhs = 0.0, m = 0.0;
    for (Index i : A) {
      lhs += s.measure(i) * std::abs(v[i] - fa);
      rhs += s.measure(i) * std::abs(v[i] - c);
      m += s.measure(i);
    }
    CHECK(lhs / m <= 2.0 * rhs / m + 1e-12);
  }
}

TEST_CASE("local slope") {
  const MMSpace s = path(9, 0.25);
  CHECK(local_slope(s, constant_field(s, 2.0), 4, 0.5).value == 0.0);
  Vec one = Vec::Ones(1);
  CHECK(local_slope(s, linear_field(s, one), 4, 0.5).value == doctest::Approx(1.0));
  CHECK(local_slope(s, linear_field(s, one), 4, 0.1).singleton);
  const ScalarField rho = 3.0 * distance_field(s, 0);
  for (Index x = 0; x < s.size(); ++x) CHECK(local_slope(s, rho, x, 1.0).value <= 3.0 * (1 + 1e-15));
}

TEST_CASE("maximal function") {
  const MMSpace s = path(5);
  CHECK(maximal_function(s, constant_field(s, 2.0), 2, 3.0) == doctest::Approx(2.0));
  const ScalarField bump = make_field(s, {0, 0, 1, 0, 0});
  CHECK(maximal_function(s, bump, 2, 10.0) == doctest::Approx(1.0));
  CHECK(maximal_function(s, bump, 2, 0.5) == doctest::Approx(1.0));
  // Monotone in R.
  std::vector<double> vals{0.3, -2, 0.1, 4, 1};
  const ScalarField g = make_field(s, vals);
  double prev = 0.0;
  for (double R : {0.5, 1.5, 2.5, 4.5}) {
    const double m = maximal_function(s, g, 1, R);
    CHECK(m >= prev);
    CHECK(m >= std::abs(vals[1]));
    prev = m;
  }
}

TEST_CASE("doubling constant against brute-force counting") {
  Mat D = Mat::Zero(1, 1);
  CHECK(doubling_constant(MMSpace::from_dense(D, {1.0}), 1.0).global == 1.0);

  const MMSpace line = path(101, 0.01);
  const double c1 = doubling_constant(line, 0.3, {0.02}).global;
  CHECK(c1 == doctest::Approx(oracle::brute_doubling(full_matrix(line), line.measures(), 0.3, 0.02)));
  CHECK(c1 <= 3.0 + 1e-12);

  const BuiltSpace g = build_minkowski_grid(Norm::euclidean(2), Vec::Zero(2), Vec::Ones(2), 20, 3);
  for (double r_min : {0.0, 0.1}) {
    const auto est = doubling_constant(g.space, 0.3, {r_min});
    CHECK(est.global == doctest::Approx(oracle::brute_doubling(full_matrix(g.space), g.space.measures(), 0.3, r_min))
                            .epsilon(1e-12));
  }
  // Interior of a 51 x 51 grid: area ratio about 4.
  const BuiltSpace big = build_minkowski_grid(Norm::euclidean(2), Vec::Zero(2), Vec::Ones(2), 50, 3);
  const auto est = doubling_constant(big.space, 0.12, {0.06});
  CHECK(est.interior_count > 0);
  CHECK(est.interior == doctest::Approx(4.0).epsilon(0.15));
}

TEST_CASE("Poincare constant") {
  const double h = 0.025;
  const MMSpace s = path(41, h);
  const ScalarField x = linear_field(s, Vec::Ones(1));
  const auto est = poincare_constant(s, {{x, constant_field(s, 1.0)}}, 0.4, 1.0);
  // Direct evaluation on index windows [c - k, c + k] clipped to the path.
  double expect = 0.0;
  for (int c = 0; c <= 40; ++c) {
    for (int k = 1; k * h < 0.4 - 1e-9; ++k) {
      const int lo = std::max(0, c - k), hi = std::min(40, c + k);
      const double mean = 0.5 * (lo + hi);
      double osc = 0.0;
      for (int i = lo; i <= hi; ++i) osc += std::abs(i - mean);
      expect = std::max(expect, osc / (hi - lo + 1) / k);
    }
  }
  CHECK(est.global == doctest::Approx(expect).epsilon(1e-9));
  const auto zero = poincare_constant(s, {{constant_field(s, 3.0), constant_field(s, 1.0)}}, 0.4, 1.0);
  CHECK(zero.global == 0.0);
  // g = 0 is not an upper gradient of a non-constant f.
  const auto rejected = poincare_constant(s, {{x, constant_field(s, 0.0)}}, 0.4, 1.0);
  CHECK(rejected.rejected_pairs > 0);
}

TEST_CASE("Hajlasz inequality") {
  const MMSpace s = path(41, 0.025);
  std::vector<std::pair<Index, Index>> pairs;
  for (Index i = 0; i < 40; i += 3) pairs.emplace_back(i, 40 - i);
  const auto flat = hajlasz_check(s, constant_field(s, 1.0), constant_field(s, 1.0), pairs, 1.0, 1.0);
  CHECK(flat.max_ratio == 0.0);
  const auto lin = hajlasz_check(s, linear_field(s, Vec::Ones(1)), constant_field(s, 1.0), pairs, 1.0, 1.0);
  CHECK(lin.empirical_c <= 1.0);
  CHECK(lin.empirical_c == doctest::Approx(0.5));
  CHECK(lin.violations == 0);

  const BuiltSpace g = build_minkowski_grid(Norm::euclidean(2), Vec::Zero(2), Vec::Ones(2), 16, 2);
  const ScalarField rho = distance_field(g.space, 0);
  std::vector<std::pair<Index, Index>> gp{{3, 200}, {17, 288}, {40, 41}};
  const auto first = hajlasz_check(g.space, rho, constant_field(g.space, 1.0), gp, 1.0, 1.0);
  CHECK(std::isfinite(first.empirical_c));
  const auto again = hajlasz_check(g.space, rho, constant_field(g.space, 1.0), gp, 1.0, first.empirical_c);
  CHECK(again.violations == 0);
}

TEST_CASE("scaling the metric") {
  const MMSpace s = path(6, 0.5);
  const MMSpace t = s.scaled_metric(3.0);
  for (Index j = 0; j < 6; ++j) CHECK(t.distance(0, j) == doctest::Approx(3.0 * s.distance(0, j)));
}

TEST_CASE("serial and parallel doubling are bitwise equal") {
  const BuiltSpace g = build_minkowski_grid(Norm::p_norm(2, 3.0), Vec::Zero(2), Vec::Ones(2), 24, 3);
  const auto s = doubling_constant(g.space, 0.25, {0.05, Exec::serial});
  const auto p = doubling_constant(g.space, 0.25, {0.05, Exec::parallel});
  CHECK(s.global == p.global);
  CHECK(s.interior == p.interior);
  CHECK(s.argmax == p.argmax);
}
