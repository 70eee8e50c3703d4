#include <doctest.h>

#include <cmath>
#include <random>

#include "ksdist/intrinsic.hpp"
#include "ksdist/spaces.hpp"
#include "oracles/oracles.hpp"

using namespace ksd;

namespace {

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

struct RandomGraph {
  MMSpace space;
  std::vector<oracle::WeightedPair> edges;
};

RandomGraph random_graph(Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> w(0.2, 1.5);
  std::uniform_int_distribution<Index> pick(0, n - 1);
  std::vector<Edge> e;
  for (Index i = 0; i + 1 < n; ++i) e.push_back({i, i + 1, w(rng)});
  for (Index k = 0; k < n; ++k) {
    const Index a = pick(rng), b = pick(rng);
    if (a != b) e.push_back({a, b, w(rng)});
  }
  std::vector<oracle::WeightedPair> ref;
  for (const auto& x : e) ref.push_back({x.i, x.j, x.w});
  return {MMSpace::from_graph(n, e, std::vector<double>(n, 1.0)), ref};
}

// Euclidean unit square, resolution 32, stencil 4, with the constant moment.
struct Grid {
  BuiltSpace b = build_minkowski_grid(Norm::euclidean(2), Vec::Zero(2), Vec::Ones(2), 32, 4);
  MomentMatrix M = moment_matrix(Norm::euclidean(2));
};

const Grid& grid() {
  static const Grid g;
  return g;
}

}  // namespace

TEST_CASE("d_ch matches the LP oracle") {
  for (std::uint64_t seed : {1, 2, 3}) {
    const RandomGraph g = random_graph(9, seed);
    for (Index x = 0; x < 9; x += 2) {
      for (Index y = 0; y < 9; ++y) {
        const double lp = oracle::constrained_potential_lp(9, g.edges, x, y);
        CHECK(d_ch(g.space, x, y) == doctest::Approx(lp).epsilon(1e-9));
        CHECK(d_ch(g.space, x, y) == doctest::Approx(g.space.distance(x, y)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("d_ch with a constraint radius") {
  // Constraints on every pair within the radius, with weights d(i, j).
  const RandomGraph g = random_graph(8, 5);
  const double radius = 1.0;
  std::vector<oracle::WeightedPair> pairs;
  for (Index i = 0; i < 8; ++i) {
    for (Index j = i + 1; j < 8; ++j) {
      if (g.space.distance(i, j) <= radius) pairs.push_back({i, j, g.space.distance(i, j)});
    }
  }
  for (const auto& e : g.edges) pairs.push_back(e);
  for (Index y = 1; y < 8; ++y) {
    CHECK(d_ch(g.space, 0, y, radius) == doctest::Approx(oracle::constrained_potential_lp(8, pairs, 0, y)).epsilon(1e-9));
  }
}

TEST_CASE("d_ch trivial cases and invariants") {
  Mat D(2, 2);
  D << 0, 1, 1, 0;
  const MMSpace two = MMSpace::from_dense(D, {1, 1});
  CHECK(d_ch(two, 0, 1) == 1.0);
  CHECK(d_ch(two, 1, 1) == 0.0);
  const ChResult r = d_ch_solve(two, 0, 1);
  CHECK(r.certified);

  const RandomGraph g = random_graph(20, 9);
  const MMSpace scaled = g.space.scaled_metric(2.5);
  for (Index y = 0; y < 20; ++y) {
    CHECK(d_ch(scaled, 3, y) == doctest::Approx(2.5 * d_ch(g.space, 3, y)).epsilon(1e-12));
    CHECK(g.space.distance(3, y) <= d_ch(g.space, 3, y) * (1 + 1e-12));
  }
}

TEST_CASE("equivalence report") {
  const RandomGraph g = random_graph(12, 4);
  const auto pairs = sample_pairs(g.space, 20, 0.0, 3);
  const DistanceFn d = [&](Index a, Index b) { return g.space.distance(a, b); };
  const DistanceFn twice = [&](Index a, Index b) { return 2.0 * g.space.distance(a, b); };
  const auto same = equivalence_report(d, d, pairs);
  CHECK(same.c1 == 1.0);
  CHECK(same.c2 == 1.0);
  const auto dbl = equivalence_report(d, twice, pairs);
  CHECK(dbl.c1 == 2.0);
  CHECK(dbl.c2 == 2.0);
  // Ties go to the lexicographically smallest pair.
  auto sorted = pairs;
  std::sort(sorted.begin(), sorted.end());
  CHECK(same.argmin == sorted.front());
}

TEST_CASE("sample_pairs is seeded") {
  const Grid& G = grid();
  const auto a = sample_pairs(G.b.space, 10, 0.3, 42);
  const auto b = sample_pairs(G.b.space, 10, 0.3, 42);
  CHECK(a == b);
  for (const auto& [x, y] : a) {
    CHECK(x < y);
    CHECK(G.b.space.distance(x, y) >= 0.3);
  }
}

TEST_CASE("riemannized distances") {
  const Grid& G = grid();
  const MMSpace R = riemannized_space(G.b.space, {moment_from_matrix(Mat::Identity(2, 2) / 4.0)});
  const Index a = G.b.nearest(v2(0.25, 0.5));
  const Index b = G.b.nearest(v2(0.75, 0.5));
  CHECK(R.distance(a, b) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(R.distance(a, a) == 0.0);

  const MomentMatrix sq = moment_matrix(Norm::p_norm(2, INFINITY));
  const MMSpace Rs = riemannized_space(G.b.space, {sq});
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<Index> pick(0, G.b.space.size() - 1);
  for (int t = 0; t < 20; ++t) {
    const Index x = pick(rng), y = pick(rng);
    if (x == y) continue;
    const double eu = (G.b.space.point(x) - G.b.space.point(y)).norm();
    CHECK(Rs.distance(x, y) == doctest::Approx(std::sqrt(3.0) * eu).epsilon(0.02));
  }
}

TEST_CASE("d_ks on a Euclidean grid") {
  const Grid& G = grid();
  const MMSpace& S = G.b.space;
  const double h = 1.0 / 32.0;
  KsSolverOptions opt;
  opt.r = 4.5 * h;
  opt.max_iterations = 3000;
  opt.warm_moment = G.M.A;
  opt.ramp_start = false;
  opt.random_start = false;
  opt.trace = true;
  const BallTable balls(S, opt.r);
  const Index x = G.b.nearest(v2(0.3, 0.35));
  const Index y = G.b.nearest(v2(0.7, 0.6));
  const double closed = 2.0 * (S.point(y) - S.point(x)).norm();

  const KsSolveResult res = d_ks_solve(S, balls, x, y, opt);
  CHECK(res.value == doctest::Approx(closed).epsilon(0.03));

  // The returned potential is feasible and attains the value.
  const auto ks = ks_densities(S, balls, res.potential, 2.0);
  CHECK(*std::max_element(ks.begin(), ks.end()) <= 1.0 + 1e-9);
  const double mx = mean_integral(S, res.potential, S.ball(x, opt.r));
  const double my = mean_integral(S, res.potential, S.ball(y, opt.r));
  CHECK(my - mx == doctest::Approx(res.value).epsilon(1e-9));

  // Best-so-far never decreases.
  for (Index k = 1; k < res.trace.size(); ++k) {
    if (res.trace[k].start == res.trace[k - 1].start) {
      CHECK(res.trace[k].best_objective >= res.trace[k - 1].best_objective);
    }
  }

  const double back = d_ks_solve(S, balls, y, x, opt).value;
  CHECK(back == doctest::Approx(res.value).epsilon(0.01));
  CHECK(d_ks_solve(S, balls, x, x, opt).value == 0.0);
}

TEST_CASE("d_ks point objective is a certified lower bound") {
  const Grid& G = grid();
  const MMSpace& S = G.b.space;
  KsSolverOptions opt;
  opt.r = 4.5 / 32.0;
  opt.max_iterations = 800;
  opt.endpoint = KsEndpoint::point;
  opt.warm_moment = G.M.A;
  opt.random_start = false;
  const BallTable balls(S, opt.r);
  const Index x = G.b.nearest(v2(0.3, 0.5));
  const Index y = G.b.nearest(v2(0.7, 0.5));
  const KsSolveResult res = d_ks_solve(S, balls, x, y, opt);
  const auto ks = ks_densities(S, balls, res.potential, 2.0);
  CHECK(*std::max_element(ks.begin(), ks.end()) <= 1.0 + 1e-9);
  CHECK(res.potential[y] - res.potential[x] == doctest::Approx(res.value).epsilon(1e-9));
}

TEST_CASE("d_ks triangle inequality on a sampled triple") {
  const Grid& G = grid();
  const MMSpace& S = G.b.space;
  KsSolverOptions opt;
  opt.r = 4.5 / 32.0;
  opt.max_iterations = 3000;
  opt.warm_moment = G.M.A;
  opt.ramp_start = false;
  opt.random_start = false;
  const BallTable balls(S, opt.r);
  const Index a = G.b.nearest(v2(0.3, 0.3));
  const Index b = G.b.nearest(v2(0.7, 0.35));
  const Index c = G.b.nearest(v2(0.5, 0.7));
  auto d = [&](Index p, Index q) { return d_ks_solve(S, balls, p, q, opt).value; };
  const double ab = d(a, b), bc = d(b, c), ac = d(a, c);
  CHECK(ac <= (ab + bc) * 1.03);
  CHECK(ab <= (ac + bc) * 1.03);
  CHECK(bc <= (ab + ac) * 1.03);
}

TEST_CASE("ks of distance functions") {
  const Grid& G = grid();
  const MMSpace& S = G.b.space;
  const double h = 1.0 / 32.0;
  const MMSpace R = riemannized_space(S, {G.M});
  const Index z = G.b.nearest(v2(0.5, 0.5));
  std::vector<double> rho(S.size());
  for (Index i = 0; i < S.size(); ++i) rho[i] = R.distance(z, i);
  const ScalarField f = make_field(S, rho);
  const ScaleLadder ladder = geometric_ladder(8 * h, 4 * h);
  const auto pts = sample_interior(S, 0.15, 30, 1);
  const auto rep = ks_of_distance_check(S, f, {z}, pts, ladder, 0.03);
  CHECK(rep.holds);
  CHECK(rep.max_ks == doctest::Approx(1.0).epsilon(0.03));
  CHECK(std::isfinite(rep.ks_at_center));
  CHECK(rep.ks_at_center <= rep.global_lip * (1 + 1e-12));

  const Index z2 = G.b.nearest(v2(0.3, 0.6));
  std::vector<double> rho2(S.size());
  for (Index i = 0; i < S.size(); ++i) rho2[i] = R.distance(z2, i);
  const ScalarField g = make_field(S, rho2);
  CHECK(ks_of_distance_check(S, pointwise_max(f, g), {z, z2}, pts, ladder, 0.03).holds);
  CHECK(ks_of_distance_check(S, pointwise_min(f, g), {z, z2}, pts, ladder, 0.03).holds);
}

TEST_CASE("Lip in the riemannized metric equals ks") {
  const Grid& G = grid();
  const MMSpace& S = G.b.space;
  const double h = 1.0 / 32.0;
  const MMSpace R = riemannized_space(S, {G.M});
  const auto pts = sample_interior(S, 0.25, 10, 2);
  const ScaleLadder ladder = geometric_ladder(8 * h, 4 * h);
  const ScaleLadder dks_ladder = geometric_ladder(16 * h, 8 * h);
  const auto lin = lip_dks_equals_ks_check(S, R, linear_field(S, v2(1, 0.5)), pts, ladder, dks_ladder);
  CHECK(lin.used == pts.size());
  CHECK(lin.max_rel_dev <= 0.03);
  for (const auto& row : lin.rows) CHECK(row.ks == doctest::Approx(std::sqrt(1.25) / 2.0).epsilon(0.03));
  const auto flat = lip_dks_equals_ks_check(S, R, constant_field(S, 2.0), pts, ladder, dks_ladder);
  CHECK(flat.degenerate == pts.size());
}

TEST_CASE("serial and parallel d_ks solves agree") {
  const Grid& G = grid();
  KsSolverOptions opt;
  opt.r = 4.5 / 32.0;
  opt.max_iterations = 200;
  opt.warm_moment = G.M.A;
  const BallTable balls(G.b.space, opt.r);
  const Index x = G.b.nearest(v2(0.3, 0.5));
  const Index y = G.b.nearest(v2(0.7, 0.5));
  opt.exec = Exec::serial;
  const KsSolveResult s = d_ks_solve(G.b.space, balls, x, y, opt);
  opt.exec = Exec::parallel;
  const KsSolveResult p = d_ks_solve(G.b.space, balls, x, y, opt);
  CHECK(s.value == p.value);
  CHECK(s.start_values == p.start_values);
}
