#pragma once

#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "ksdist/ks_energy.hpp"
#include "ksdist/mmspace.hpp"
#include "ksdist/moment.hpp"

namespace ksd {

struct ChResult {
  double value = 0.0;
  /// Optimal potential: shortest-path distance from x in the constraint graph.
  ScalarField potential;
  /// The potential satisfies every constraint |f_j - f_i| <= d(i, j).
  bool certified = false;
};

/// max f_y - f_x subject to |f_j - f_i| <= d(i, j) over constraint pairs:
/// graph edges plus all pairs with d(i, j) <= radius (radius 0: graph edges,
/// or every pair for a dense space). The value is the shortest-path distance
/// in the constraint graph; NumericalError if x and y are not connected by
/// constraints (the program is unbounded).
ChResult d_ch_solve(const MMSpace& space, Index x, Index y, double radius = 0.0);
double d_ch(const MMSpace& space, Index x, Index y, double radius = 0.0);

/// What the solver maximizes: f_y - f_x, or the mean of f over B_r(y) minus
/// its mean over B_r(x). Both agree on linear fields away from the boundary;
/// the point form also rewards spikes of height up to about r at x and y,
/// which the ball means average out.
enum class KsEndpoint { point, ball_mean };

struct KsSolverOptions {
  /// Constraint scale; 0 selects default_constraint_scale(space).
  double r = 0.0;
  int max_iterations = 3000;
  int stages = 10;
  double beta_min = 10.0;
  /// Final soft-max temperature is beta_max_per_point * N.
  double beta_max_per_point = 1e4;
  /// A stage ends once a step improves the smoothed objective by less than this (relative).
  double tolerance = 1e-9;
  bool ramp_start = true;
  bool warm_start = true;
  bool random_start = true;
  /// Moment matrix for the warm start; estimated from the coordinates if absent.
  std::optional<Mat> warm_moment;
  KsEndpoint endpoint = KsEndpoint::ball_mean;
  std::uint64_t seed = 0;
  bool trace = false;
  Exec exec = Exec::parallel;
};

struct TraceRow {
  int start = 0;
  int iteration = 0;
  double beta = 0.0;
  double objective = 0.0;       // objective of the iterate scaled to max ks = 1
  double best_objective = 0.0;  // running maximum over all iterates of this start
  double max_constraint = 0.0;  // max_i ks_i of the scaled iterate
};

struct KsSolveResult {
  /// Best objective over max_i ks_{2,r}[f](i); a certified lower bound in point mode.
  double value = 0.0;
  bool converged = false;
  int iterations = 0;
  double r = 0.0;
  int best_start = -1;  // 0 ramp, 1 warm, 2 random
  /// Best value of each start that ran (NaN when skipped).
  std::vector<double> start_values;
  /// Maximizer scaled so that max_i ks_i = 1.
  ScalarField potential;
  std::vector<TraceRow> trace;
};

/// Smallest scale of the plateau window of a near-linear test profile:
/// the distance field of a far point, read at a deep interior point.
double default_constraint_scale(const MMSpace& space);

/// Empirical moment mean over points of mean over B_r(x) of (z - x)(z - x)^T / r^2.
Mat empirical_moment(const MMSpace& space, const BallTable& balls);

/// sup f_y - f_x subject to ks_{2,r}[f] <= 1 at every point, by normalized
/// gradient ascent of (f_y - f_x) / softmax_beta(ks) with annealed beta.
KsSolveResult d_ks_solve(const MMSpace& space, const BallTable& balls, Index x, Index y,
                         const KsSolverOptions& opt = {});
KsSolveResult d_ks_solve(const MMSpace& space, Index x, Index y, const KsSolverOptions& opt = {});
double d_ks(const MMSpace& space, Index x, Index y, double r = 0.0);

/// Same graph with edge lengths sqrt(D^T Qbar D), Qbar the mean of A^{-1} at
/// the two endpoints. `field` has one entry per point, or a single entry for
/// a constant field.
MMSpace riemannized_space(const MMSpace& grid, const std::vector<MomentMatrix>& field);
double d_riemannized(const MMSpace& grid, const std::vector<MomentMatrix>& field, Index x, Index y);

using DistanceFn = std::function<double(Index, Index)>;

struct EquivalenceReport {
  double c1 = 0.0;  // min of dB / dA
  double c2 = 0.0;  // max of dB / dA
  Index pairs = 0;
  std::pair<Index, Index> argmin{0, 0};
  std::pair<Index, Index> argmax{0, 0};
  /// Pairs with ratio 0 or infinity (included in c1, c2).
  Index degenerate = 0;
};

/// Ratio extremes of distB / distA over the pairs; ties go to the
/// lexicographically smallest pair.
EquivalenceReport equivalence_report(const DistanceFn& distA, const DistanceFn& distB,
                                     const std::vector<std::pair<Index, Index>>& pairs);

/// `count` seeded pairs (i < j) with d(i, j) >= min_separation, drawn from
/// `candidates` (all points if empty).
std::vector<std::pair<Index, Index>> sample_pairs(const MMSpace& space, Index count, double min_separation,
                                                  std::uint64_t seed, const std::vector<Index>& candidates = {});

struct DistanceKsReport {
  double max_ks = 0.0;  // over checked points
  Index worst_point = 0;
  Index checked = 0;
  Index no_plateau = 0;   // checked at the finest window: profile without plateau
  Index near_center = 0;  // excluded: top-scale ball contains a center
  double ks_at_center = 0.0;  // largest plateau value at the centers themselves
  double global_lip = 0.0;    // Lipschitz constant of the field over graph edges
  bool holds = false;         // max_ks <= 1 + tolerance
};

/// Plateau ks of a distance-type field (rho_z, or a max / min of several) at
/// the given points, excluding those whose top-scale ball contains one of the
/// centers.
DistanceKsReport ks_of_distance_check(const MMSpace& space, const ScalarField& rho, const std::vector<Index>& centers,
                                      const std::vector<Index>& points, const ScaleLadder& ladder, double tolerance,
                                      const PlateauOptions& opt = {});

struct LipKsRow {
  Index point = 0;
  double lip = 0.0;  // Lip of f in the d_KS space
  double ks = 0.0;   // ks plateau in the original space
};

struct LipKsReport {
  double max_rel_dev = 0.0;
  Index used = 0;
  Index degenerate = 0;  // both sides ~ 0
  Index no_plateau = 0;
  std::vector<LipKsRow> rows;
};

/// Compares Lip[f] in `dks_space` (same points, metric d_KS) against the ks
/// plateau of f in `space`.
LipKsReport lip_dks_equals_ks_check(const MMSpace& space, const MMSpace& dks_space, const ScalarField& f,
                                    const std::vector<Index>& points, const ScaleLadder& ladder,
                                    const ScaleLadder& dks_ladder, const PlateauOptions& opt = {});

}  // namespace ksd
