#include <doctest.h>

#include <cmath>

#include "ksdist/moment.hpp"
#include "oracles/oracles.hpp"

using namespace ksd;

namespace {

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

double max_abs(const Mat& M) { return M.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("unit ball volumes") {
  const VolumeEstimate interval = unit_ball_volume(Norm::euclidean(1), GridQuadrature{});
  CHECK(interval.vol == doctest::Approx(2.0).epsilon(1e-14));
  const VolumeEstimate disk = unit_ball_volume(Norm::euclidean(2), GridQuadrature{512, 3});
  CHECK(std::abs(disk.vol - M_PI) <= std::max(disk.err, 1e-6));
  const VolumeEstimate square = unit_ball_volume(Norm::p_norm(2, INFINITY), GridQuadrature{512, 3});
  CHECK(std::abs(square.vol - 4.0) <= std::max(square.err, 1e-6));
}

TEST_CASE("moment matrices against the l^p closed form") {
  CHECK(moment_matrix(Norm::euclidean(1)).A(0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  for (int n = 2; n <= 3; ++n) {
    for (double p : {1.0, 1.5, 2.0, 3.0, 4.0}) {
      const MomentMatrix M = moment_matrix(Norm::p_norm(n, p));
      const double a = oracle::lp_ball_moment(n, p);
      CAPTURE(n);
      CAPTURE(p);
      CHECK(max_abs(M.A - a * Mat::Identity(n, n)) <= 3e-3 * a);
      CHECK(M.vol == doctest::Approx(oracle::lp_ball_volume(n, p)).epsilon(3e-3));
    }
  }
  const MomentMatrix sq = moment_matrix(Norm::p_norm(2, INFINITY));
  CHECK(max_abs(sq.A - Mat::Identity(2, 2) / 3.0) <= 1e-6);
}

TEST_CASE("quadratic norms: A (n + 2) Q = I") {
  Mat Q(2, 2);
  Q << 2.0, 0.4, 0.4, 1.0;
  const MomentMatrix M = moment_matrix(Norm::quadratic(Q));
  CHECK(max_abs(M.A * 4.0 * Q - Mat::Identity(2, 2)) <= 1e-3);

  Mat Q3(3, 3);
  Q3 << 3, 1, 0, 1, 2, 0.5, 0, 0.5, 1;
  const MomentMatrix M3 = moment_matrix(Norm::quadratic(Q3));
  CHECK(max_abs(M3.A * 5.0 * Q3 - Mat::Identity(3, 3)) <= 1e-2);
}

TEST_CASE("Monte Carlo quadrature agrees with the grid") {
  const Norm n = Norm::p_norm(2, 3.0);
  const MomentMatrix mc = moment_matrix(n, MonteCarloQuadrature{400'000, 7});
  const MomentMatrix grid = moment_matrix(n, GridQuadrature{256, 3});
  CHECK(max_abs(mc.A - grid.A) <= 5e-3);
  // Same seed, same result.
  CHECK(moment_matrix(n, MonteCarloQuadrature{400'000, 7}).A == mc.A);
}

TEST_CASE("scaling the gauge scales A quadratically") {
  Mat Q(2, 2);
  Q << 1.0, 0.0, 0.0, 1.0;
  const Mat base = moment_matrix(Norm::quadratic(Q)).A;
  for (double t : {0.5, 2.0}) {
    // gauge / t has the unit ball scaled by t.
    const Mat scaled = moment_matrix(Norm::quadratic(Q / (t * t))).A;
    CHECK(max_abs(scaled - t * t * base) <= 1e-3 * t * t);
  }
}

TEST_CASE("A is symmetric positive definite") {
  for (const Norm& n : {Norm::p_norm(2, 1.2), Norm::p_norm(3, 6.0), Norm::p_norm(4, 2.0)}) {
    const MomentMatrix M = moment_matrix(n);
    CHECK(max_abs(M.A - M.A.transpose()) == 0.0);
    CHECK(Eigen::SelfAdjointEigenSolver<Mat>(M.A).eigenvalues().minCoeff() > 0.0);
  }
}

TEST_CASE("ks_of_vector and dual_ks") {
  const MomentMatrix eu = moment_from_matrix(Mat::Identity(2, 2) / 4.0);
  CHECK(ks_of_vector(eu, v2(0, 0)) == 0.0);
  CHECK(ks_of_vector(eu, v2(1, 0)) == doctest::Approx(0.5));
  CHECK(ks_of_vector(eu, v2(3, 4)) == doctest::Approx(2.5));
  CHECK(dual_ks(eu, v2(1, 0)) == doctest::Approx(2.0));
  CHECK(dual_ks(eu, v2(0, 0)) == 0.0);
  const MomentMatrix interval = moment_from_matrix(Mat::Constant(1, 1, 1.0 / 3.0));
  CHECK(dual_ks(interval, Vec::Ones(1)) == doctest::Approx(std::sqrt(3.0)));
  CHECK_THROWS_AS(dual_ks(moment_from_matrix(Mat::Zero(2, 2)), v2(1, 0)), NumericalError);
}

TEST_CASE("riemannize") {
  const Norm r = riemannize(Norm::euclidean(2), GridQuadrature{512, 3});
  CHECK(r.kind() == NormKind::quadratic);
  CHECK(max_abs(r.Q() - 4.0 * Mat::Identity(2, 2)) <= 1e-3);

  Mat Q(2, 2);
  Q << 4.0, 0.0, 0.0, 1.0;
  CHECK(max_abs(riemannize(Norm::quadratic(Q), GridQuadrature{512, 3}).Q() - 4.0 * Q) <= 1e-2);

  const Norm sq = riemannize(Norm::p_norm(2, INFINITY), GridQuadrature{512, 3});
  CHECK(max_abs(sq.Q() - 3.0 * Mat::Identity(2, 2)) <= 1e-5);
}

TEST_CASE("duality check") {
  const MomentMatrix eu = moment_from_matrix(Mat::Identity(2, 2) / 4.0);
  const DualityCheck d = duality_check(eu, v2(1, 1), 10'000, 3);
  CHECK(d.rhs == doctest::Approx(std::sqrt(2.0) / 2.0));
  CHECK(d.rel_err <= 1e-3);
  const DualityCheck d4 = duality_check(moment_matrix(Norm::p_norm(2, 4.0)), v2(1, 0), 10'000, 3);
  CHECK(d4.rel_err <= 1e-2);
  const DualityCheck zero = duality_check(eu, v2(0, 0), 1000);
  CHECK(zero.lhs == 0.0);
  CHECK(zero.rhs == 0.0);
}

TEST_CASE("serial and parallel quadrature are bitwise equal") {
  const std::vector<std::pair<Norm, Quadrature>> cases{{Norm::p_norm(2, 3.0), GridQuadrature{256, 3}},
                                                        {Norm::p_norm(3, 3.0), GridQuadrature{24, 2}},
                                                        {Norm::p_norm(3, 3.0), MonteCarloQuadrature{100'000, 4}}};
  for (const auto& [n, q] : cases) {
    const MomentMatrix s = moment_matrix(n, q, Exec::serial);
    const MomentMatrix p = moment_matrix(n, q, Exec::parallel);
    CHECK(s.A == p.A);
    CHECK(s.vol == p.vol);
  }
}
