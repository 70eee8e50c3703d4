#pragma once

#include <cstdint>
#include <variant>

#include "ksdist/common.hpp"
#include "ksdist/norms.hpp"

namespace ksd {

/// Midpoint grid over the bounding box of the unit ball, `resolution` cells
/// per axis. Cells whose corners are all inside are integrated exactly;
/// straddling cells are subdivided `refine` times.
struct GridQuadrature {
  int resolution = 256;
  int refine = 3;
};

/// Uniform rejection sampling in the bounding box.
struct MonteCarloQuadrature {
  std::int64_t samples = 1'000'000;
  std::uint64_t seed = 0;
};

using Quadrature = std::variant<GridQuadrature, MonteCarloQuadrature>;

/// Grid for n <= 3 (512 / 512 / 96 cells per axis), Monte Carlo beyond.
Quadrature default_quadrature(int dim);

struct VolumeEstimate {
  double vol = 0.0;
  double err = 0.0;
};

/// Second moments of the unit ball {gauge <= 1}: A = mean over the ball of z z^T.
struct MomentMatrix {
  int dim = 0;
  Mat A;
  double vol = 0.0;
  double c = 0.0;  // 1 / vol
  double quadrature_error = 0.0;
  std::int64_t sample_count = 0;
};

VolumeEstimate unit_ball_volume(const Norm& norm, const Quadrature& quad, Exec exec = Exec::parallel);

/// Throws NumericalError if quadrature produced a matrix that is not SPD.
MomentMatrix moment_matrix(const Norm& norm, const Quadrature& quad, Exec exec = Exec::parallel);
MomentMatrix moment_matrix(const Norm& norm);

/// Builds a MomentMatrix from a known A (e.g. read back from JSON).
MomentMatrix moment_from_matrix(const Mat& A, double vol = 0.0);

/// sqrt(v^T A v): the Korevaar-Schoen density of the linear map <v, .>.
double ks_of_vector(const MomentMatrix& M, const Vec& v);

/// sqrt(z^T A^{-1} z) via a Cholesky solve.
double dual_ks(const MomentMatrix& M, const Vec& z);

/// Quadratic norm with Q = A^{-1}.
Norm riemannize(const Norm& norm, const Quadrature& quad);
Norm riemannize(const MomentMatrix& M);

struct DualityCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  double rel_err = 0.0;
};

/// Brute-force sup over `sphere_samples` unit directions z of
/// |<v,z>| / dual_ks(M, z), against ks_of_vector(M, v).
DualityCheck duality_check(const MomentMatrix& M, const Vec& v, int sphere_samples, std::uint64_t seed = 0);

}  // namespace ksd
