#include <doctest.h>

#include <cmath>
#include <random>

#include "ksdist/ks_energy.hpp"
#include "ksdist/moment.hpp"
#include "ksdist/spaces.hpp"

using namespace ksd;

namespace {

MMSpace path(Index n, double h) {
  std::vector<Edge> e;
  for (Index i = 0; i + 1 < n; ++i) e.push_back({i, i + 1, h});
  Mat c(static_cast<Eigen::Index>(n), 1);
  for (Index i = 0; i < n; ++i) c(static_cast<Eigen::Index>(i), 0) = h * static_cast<double>(i);
  return MMSpace::from_graph(n, e, std::vector<double>(n, 1.0)).with_coordinates(c).with_boundary({0, n - 1});
}

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

ScalarField random_field(const MMSpace& s, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  std::vector<double> v(s.size());
  for (auto& x : v) x = nd(rng);
  return make_field(s, v);
}

// Euclidean unit square at resolution 48, stencil 6, and an interior centre.
struct Fine {
  BuiltSpace b = build_minkowski_grid(Norm::euclidean(2), Vec::Zero(2), Vec::Ones(2), 48, 6);
  Index center = b.nearest(v2(0.5, 0.5));
  ScaleLadder ladder = geometric_ladder(0.25, 0.1);
};

const Fine& fine() {
  static const Fine f;
  return f;
}

}  // namespace

TEST_CASE("ks density spot values") {
  const double h = 0.1;
  const MMSpace s = path(11, h);
  CHECK(ks_density(s, constant_field(s, 4.0), 5, 2.0, 0.3) == 0.0);
  const ScalarField x = linear_field(s, Vec::Ones(1));
  // Three-point ball {x - h, x, x + h} at r = 1.5h.
  CHECK(ks_density(s, x, 5, 2.0, 1.5 * h) == doctest::Approx(std::sqrt(2.0 / 3.0) / 1.5).epsilon(1e-12));
  // Translation invariance.
  CHECK(ks_density(s, x + constant_field(s, 3.0), 5, 2.0, 0.3) == doctest::Approx(ks_density(s, x, 5, 2.0, 0.3)));
  CHECK_THROWS_AS(ks_density(s, x, 5, 1.0, 0.3), ConfigError);
}

TEST_CASE("linear fields reproduce the moment oracle") {
  const Fine& F = fine();
  const MomentMatrix M = moment_matrix(Norm::euclidean(2));
  for (const Vec& v : {v2(1, 0), v2(0.3, -0.8), v2(2, 1)}) {
    const KSProfile p = ks_profile(F.b.space, linear_field(F.b.space, v), F.center, 2.0, F.ladder);
    CHECK(p.plateau_flag);
    CHECK(p.limit_estimate == doctest::Approx(ks_of_vector(M, v)).epsilon(0.02));
    CHECK(p.limit_estimate == doctest::Approx(v.norm() / 2.0).epsilon(0.02));
  }
  const KSProfile zero = ks_profile(F.b.space, constant_field(F.b.space, 1.0), F.center, 2.0, F.ladder);
  CHECK(zero.plateau_flag);
  CHECK(zero.limit_estimate == 0.0);
}

TEST_CASE("kink of |x| in 1D tends to 1/sqrt(3)") {
  const double h = 1e-3;
  const MMSpace s = path(2001, h);
  std::vector<double> v(s.size());
  for (Index i = 0; i < s.size(); ++i) v[i] = std::abs(h * static_cast<double>(i) - 1.0);
  const KSProfile p = ks_profile(s, make_field(s, v), 1000, 2.0, geometric_ladder(0.2, 0.02));
  for (double val : p.values) CHECK(val == doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(0.01));
}

TEST_CASE("energy at a scale") {
  const BuiltSpace b = build_minkowski_grid(Norm::euclidean(2), Vec::Zero(2), Vec::Ones(2), 24, 3);
  const MMSpace& s = b.space;
  const BallTable balls(s, 0.1);
  CHECK(ks_energy_at_scale(s, balls, constant_field(s, 2.0), 2.0).total == 0.0);
  const ScalarField f = linear_field(s, v2(1, 2));
  const double e = ks_energy_at_scale(s, balls, f, 2.0).total;
  CHECK(ks_energy_at_scale(s, balls, f + constant_field(s, 5.0), 2.0).total == doctest::Approx(e).epsilon(1e-12));
  CHECK(ks_energy_at_scale(s, balls, 3.0 * f, 2.0).total == doctest::Approx(9.0 * e).epsilon(1e-12));
  // Interior-dominated: about total mass times ks(v)^2 = 5/4, lowered by the boundary.
  CHECK(e == doctest::Approx(s.total_mass() * 1.25).epsilon(0.2));
}

TEST_CASE("parallelogram law at a scale") {
  std::mt19937_64 rng(31);
  const BuiltSpace b = build_minkowski_grid(Norm::p_norm(2, 3.0), Vec::Zero(2), v2(1.0, 0.75), 28, 3);
  REQUIRE(b.space.size() > 500);
  const BallTable balls(b.space, 0.12);
  for (int t = 0; t < 10; ++t) {
    const ScalarField f = random_field(b.space, rng);
    const ScalarField g = random_field(b.space, rng);
    const auto d = parallelogram_defect(b.space, balls, f, g);
    const double ef = ks_energy_at_scale(b.space, balls, f, 2.0).total;
    const double eg = ks_energy_at_scale(b.space, balls, g, 2.0).total;
    CHECK(std::abs(d.parallelogram_defect) <= 1e-10 * (ef + eg));
  }
  const ScalarField f = random_field(b.space, rng);
  CHECK(parallelogram_defect(b.space, balls, f, constant_field(b.space, 0.0)).parallelogram_defect == doctest::Approx(0.0));
}

TEST_CASE("ks at every scale is bounded by the global Lipschitz constant") {
  std::mt19937_64 rng(8);
  const BuiltSpace b = build_minkowski_grid(Norm::euclidean(2), Vec::Zero(2), Vec::Ones(2), 16, 2);
  const MMSpace& s = b.space;
  for (int t = 0; t < 5; ++t) {
    const ScalarField f = random_field(s, rng);
    double lip = 0.0;
    for (const Edge& e : s.edges()) lip = std::max(lip, std::abs(f[e.j] - f[e.i]) / e.w);
    for (double r : {0.07, 0.15, 0.3}) {
      const BallTable balls(s, r);
      for (double k : ks_densities(s, balls, f, 2.0)) CHECK(k <= lip * (1 + 1e-12));
    }
  }
}

TEST_CASE("plateau detection") {
  const std::vector<double> flat{1.0, 1.001, 0.999, 1.0};
  const Plateau p = find_plateau(flat);
  CHECK(p.flag);
  CHECK(p.estimate == doctest::Approx(1.0).epsilon(1e-3));
  // Finest qualifying window is preferred.
  const std::vector<double> settles{2.0, 1.5, 1.2, 1.01, 1.0, 1.005};
  const Plateau q = find_plateau(settles);
  CHECK(q.flag);
  CHECK(q.begin == 3);
  const std::vector<double> noisy{1.0, 2.0, 1.0, 2.0};
  const Plateau r = find_plateau(noisy);
  CHECK_FALSE(r.flag);
  CHECK(r.begin == 1);
  CHECK(r.min == 1.0);
  CHECK(r.max == 2.0);
  const std::vector<double> zeros{0.0, 0.0, 0.0};
  CHECK(find_plateau(zeros).flag);
}

TEST_CASE("ladder below the pitch is truncated") {
  const BuiltSpace b = build_minkowski_grid(Norm::euclidean(2), Vec::Zero(2), Vec::Ones(2), 16, 2);
  const ScalarField f = linear_field(b.space, v2(1, 0));
  const KSProfile p = ks_profile(b.space, f, b.nearest(v2(0.5, 0.5)), 2.0, geometric_ladder(0.3, 0.02));
  CHECK(p.truncated > 0);
  for (double r : p.scales) CHECK(r >= 2.0 / 16.0 - 1e-12);
}

TEST_CASE("pointwise Lipschitz constant") {
  const Fine& F = fine();
  const MMSpace& s = F.b.space;
  const Vec v = v2(0.6, 0.8);
  const LipEstimate lin = lip_pointwise(s, linear_field(s, v), F.center, F.ladder);
  CHECK(lin.value == doctest::Approx(1.0).epsilon(0.01));
  CHECK(lip_pointwise(s, constant_field(s, 1.0), F.center, F.ladder).value == 0.0);
  const ScalarField rho = 2.5 * distance_field(s, 0);
  CHECK(lip_pointwise(s, rho, F.center, F.ladder).value == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("ks against Lip") {
  const Fine& F = fine();
  const MMSpace& s = F.b.space;
  const double cd = doubling_constant(s, 0.25, {2.0 / 48.0}).global;
  const std::vector<Index> pts{F.center, F.b.nearest(v2(0.4, 0.6)), F.b.nearest(v2(0.55, 0.45))};
  const auto lin = ks_lip_comparison(s, linear_field(s, v2(1, 1)), pts, F.ladder, cd, 0.03);
  CHECK(lin.used == 3);
  CHECK(lin.min_ratio == doctest::Approx(0.5).epsilon(0.02));
  CHECK(lin.max_ratio == doctest::Approx(0.5).epsilon(0.02));
  CHECK(lin.min_ratio > lin.c_tilde_sqrt);
  CHECK(lin.upper_ok);
  CHECK(lin.lower_ok);
  const auto flat = ks_lip_comparison(s, constant_field(s, 1.0), pts, F.ladder, cd);
  CHECK(flat.degenerate == 3);
  const auto dist = ks_lip_comparison(s, distance_field(s, 0), pts, F.ladder, cd, 0.03);
  CHECK(dist.max_ratio <= 1.03);
}

TEST_CASE("convexity of ks") {
  const Fine& F = fine();
  const MMSpace& s = F.b.space;
  const ScalarField e1 = linear_field(s, v2(1, 0));
  const ScalarField e2 = linear_field(s, v2(0, 1));
  const auto mix = ks_convexity_check(s, {e1, e2}, {0.5, 0.5}, F.center, F.ladder);
  CHECK(mix.holds);
  CHECK(mix.lhs == doctest::Approx(std::sqrt(2.0) / 4.0).epsilon(0.02));
  CHECK(mix.rhs == doctest::Approx(0.5).epsilon(0.02));
  const auto same = ks_convexity_check(s, {e1, e1}, {0.3, 0.7}, F.center, F.ladder);
  CHECK(same.lhs == doctest::Approx(same.rhs).epsilon(1e-9));
  const auto cancel = ks_convexity_check(s, {e1, -1.0 * e1}, {0.5, 0.5}, F.center, F.ladder);
  CHECK(cancel.lhs == doctest::Approx(0.0));
  CHECK(cancel.holds);
}

TEST_CASE("plateau energies satisfy the parallelogram law") {
  const Fine& F = fine();
  const MMSpace& s = F.b.space;
  const ScalarField f = linear_field(s, v2(1, 0.5));
  const ScalarField g = linear_field(s, v2(-0.3, 1));
  auto ks2 = [&](const ScalarField& h) {
    const double k = ks_profile(s, h, F.center, 2.0, F.ladder).limit_estimate;
    return k * k;
  };
  const double lhs = ks2(f + g) + ks2(f - g);
  const double rhs = 2.0 * ks2(f) + 2.0 * ks2(g);
  CHECK(lhs == doctest::Approx(rhs).epsilon(0.01));
}

TEST_CASE("blow-up diagnostic") {
  const Fine& F = fine();
  const MMSpace& s = F.b.space;
  const BlowupReport lin = blowup_diagnostic(s, linear_field(s, v2(1, -2)), F.center, F.ladder);
  CHECK(lin.differentiable);
  CHECK((lin.gradient - v2(1, -2)).norm() <= 1e-9);
  for (const auto& sc : lin.scales) CHECK(sc.residual <= 1e-9);

  const BuiltSpace wide = build_minkowski_grid(Norm::euclidean(2), v2(0.5, -0.5), v2(1.5, 0.5), 48, 4);
  std::vector<double> sq(wide.space.size());
  for (Index i = 0; i < sq.size(); ++i) sq[i] = std::pow(wide.space.point(i)[0], 2);
  const BlowupReport quad = blowup_diagnostic(wide.space, make_field(wide.space, sq), wide.nearest(v2(1, 0)), F.ladder);
  CHECK(quad.differentiable);
  CHECK((quad.gradient - v2(2, 0)).norm() <= 0.05);

  const MMSpace line = path(2001, 1e-3);
  std::vector<double> a(line.size());
  for (Index i = 0; i < a.size(); ++i) a[i] = std::abs(1e-3 * static_cast<double>(i) - 1.0);
  const BlowupReport kink = blowup_diagnostic(line, make_field(line, a), 1000, geometric_ladder(0.2, 0.02));
  CHECK_FALSE(kink.differentiable);
}

TEST_CASE("serial and parallel ks kernels are bitwise equal") {
  std::mt19937_64 rng(77);
  const BuiltSpace b = build_minkowski_grid(Norm::p_norm(2, 3.0), Vec::Zero(2), Vec::Ones(2), 32, 3);
  const BallTable bs(b.space, 0.11, Exec::serial);
  const BallTable bp(b.space, 0.11, Exec::parallel);
  REQUIRE(bs.nonzeros() == bp.nonzeros());
  for (Index i = 0; i < bs.size(); ++i) {
    REQUIRE(bs.ball_mass(i) == bp.ball_mass(i));
    const auto a = bs.ball(i);
    const auto c = bp.ball(i);
    for (Index k = 0; k < a.size(); ++k) {
      REQUIRE(a[k].index == c[k].index);
      REQUIRE(a[k].dist == c[k].dist);
    }
  }
  const ScalarField f = random_field(b.space, rng);
  CHECK(ks_densities(b.space, bs, f, 2.0, Exec::serial) == ks_densities(b.space, bs, f, 2.0, Exec::parallel));
  CHECK(ks_energy_at_scale(b.space, bs, f, 3.0, Exec::serial).total ==
        ks_energy_at_scale(b.space, bs, f, 3.0, Exec::parallel).total);
}
