#pragma once

#include <functional>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "ksdist/common.hpp"

namespace ksd {

struct Edge {
  Index i = 0;
  Index j = 0;
  double w = 0.0;
};

struct Neighbor {
  double dist = 0.0;
  Index index = 0;
};

/// Points within a radius of a center, sorted by (distance, index). Every
/// closed ball of smaller radius is a prefix.
using Neighborhood = std::vector<Neighbor>;

/// Closed-ball membership with a relative tolerance, so that radii computed
/// in floating point still catch points sitting exactly on the sphere.
inline bool within(double d, double r) { return d <= r * (1.0 + 1e-12); }

/// Finite metric measure space. The metric is either a dense symmetric matrix
/// or the shortest-path closure of a weighted graph (rows computed lazily and
/// cached write-once). Optional builder metadata: coordinates, boundary flags,
/// singular points, a diameter hint.
///
/// Copies share the same immutable state and cache.
class MMSpace {
 public:
  static constexpr Index kMaxDensePoints = 2000;

  static MMSpace from_dense(const Mat& D, std::vector<double> measure);
  static MMSpace from_graph(Index n, std::vector<Edge> edges, std::vector<double> measure);

  Index size() const;
  std::uint64_t id() const;
  bool is_graph() const;

  double measure(Index i) const;
  const std::vector<double>& measures() const;
  double total_mass() const;

  double distance(Index i, Index j) const;
  /// Full distance row from i (cached).
  const std::vector<double>& distances_from(Index i) const;
  Neighborhood neighborhood(Index center, double radius) const;
  std::vector<Index> ball(Index center, double r) const;

  /// Graph edges (empty for dense spaces).
  const std::vector<Edge>& edges() const;
  /// CSR adjacency of the graph; for dense spaces, nearest-neighbour pairs.
  std::span<const Neighbor> adjacent(Index i) const;

  /// Smallest positive pairwise distance.
  double pitch() const;
  /// Largest pairwise distance; exact unless a hint was set by a builder.
  double diameter() const;

  bool has_coordinates() const;
  const Mat& coordinates() const;  // size() x dim
  Vec point(Index i) const;
  const std::vector<char>& boundary() const;
  bool is_boundary(Index i) const;
  const std::vector<Index>& singular() const;

  /// Builder metadata; returns a space sharing the metric with the new tags.
  MMSpace with_coordinates(Mat coords) const;
  MMSpace with_boundary(const std::vector<Index>& boundary) const;
  MMSpace with_singular(std::vector<Index> singular) const;
  MMSpace with_diameter_hint(double diameter) const;
  MMSpace with_measure(std::vector<double> measure) const;
  /// Same graph topology with new edge lengths w(i, j); graph spaces only.
  template <class F>
  MMSpace reweighted(F&& w) const {
    std::vector<Edge> e = edges();
    for (auto& x : e) x.w = w(x.i, x.j);
    return rebuild_graph(std::move(e));
  }
  /// Metric multiplied by t > 0.
  MMSpace scaled_metric(double t) const;

  /// Exhaustive triangle-inequality check for N <= 200, 1e5 random triples
  /// otherwise. Returns the worst violation d(i,k) - d(i,j) - d(j,k).
  double triangle_violation(std::uint64_t seed = 0) const;

  struct Impl;

 private:
  explicit MMSpace(std::shared_ptr<Impl> impl);
  MMSpace rebuild_graph(std::vector<Edge> edges) const;
  MMSpace with_meta(const std::function<void(Impl&)>& edit) const;
  std::shared_ptr<Impl> impl_;
};

/// One real value per point of a space.
struct ScalarField {
  std::vector<double> values;
  std::uint64_t space_id = 0;

  Index size() const { return values.size(); }
  double operator[](Index i) const { return values[i]; }
  double& operator[](Index i) { return values[i]; }
};

ScalarField make_field(const MMSpace& space, std::vector<double> values);
ScalarField constant_field(const MMSpace& space, double c);
/// f(i) = d(x0, i).
ScalarField distance_field(const MMSpace& space, Index x0);
/// f(i) = <v, coords(i)>; requires coordinates.
ScalarField linear_field(const MMSpace& space, const Vec& v);
ScalarField operator+(const ScalarField& a, const ScalarField& b);
ScalarField operator-(const ScalarField& a, const ScalarField& b);
ScalarField operator*(double t, const ScalarField& a);
ScalarField pointwise_max(const ScalarField& a, const ScalarField& b);
ScalarField pointwise_min(const ScalarField& a, const ScalarField& b);

void check_field(const MMSpace& space, const ScalarField& f, const char* what);

/// Measure-weighted mean of f over a nonempty index set.
double mean_integral(const MMSpace& space, const ScalarField& f, std::span<const Index> set);

struct SlopeResult {
  double value = 0.0;
  bool singleton = false;
};

/// max over y in B_r(x), y != x, of |f(y) - f(x)| / d(x, y).
SlopeResult local_slope(const MMSpace& space, const ScalarField& f, Index x, double r);
SlopeResult local_slope(const MMSpace& space, const ScalarField& f, Index x, const Neighborhood& nbhd, double r);

/// Canonical discrete upper gradient: the steepest edge slope at each point
/// (graph edges; nearest-neighbour ball for dense spaces).
ScalarField canonical_upper_gradient(const MMSpace& space, const ScalarField& f);

/// sup over 0 < r < R of the ball mean of |g| around x, evaluated exactly at
/// the radii where ball membership changes.
double maximal_function(const MMSpace& space, const ScalarField& g, Index x, double R);

struct ConstantEstimate {
  double global = 0.0;
  double interior = 0.0;
  Index argmax = 0;
  double argmax_radius = 0.0;
  Index interior_count = 0;
};

struct DoublingOptions {
  /// Radii below r_min are ignored (sub-pitch scales on lattices).
  double r_min = 0.0;
  Exec exec = Exec::parallel;
};

/// sup over points x and radii r_min <= r < R of m(B_2r(x)) / m(B_r(x)).
/// The supremum over each interval of constant m(B_r) is taken as its
/// left limit, so the value is exact for closed balls. Interior points are
/// those whose 2R-ball contains no boundary point.
ConstantEstimate doubling_constant(const MMSpace& space, double R, const DoublingOptions& opt = {});

struct PoincareEstimate {
  double global = 0.0;
  double interior = 0.0;
  Index rejected_pairs = 0;
  Index argmax = 0;
  double argmax_radius = 0.0;
};

/// Empirical C_P: max over (f, g) pairs, centers and breakpoint radii r < R of
/// mean|f - f_B| / (r * sqrt(mean over B_{lambda r} of g^2)). Pairs where the
/// right side vanishes while the left does not are rejected and counted.
PoincareEstimate poincare_constant(const MMSpace& space,
                                   const std::vector<std::pair<ScalarField, ScalarField>>& tests, double R,
                                   double lambda, Exec exec = Exec::parallel);

struct HajlaszReport {
  double max_ratio = 0.0;    // max LHS / RHS at the supplied C
  double empirical_c = 0.0;  // smallest C for which every pair holds
  Index violations = 0;
  Index pairs = 0;
};

/// |f(x)-f(y)| <= C d(x,y) (sqrt(M_{2 lambda d} g^2 (x)) + sqrt(M_{2 lambda d} g^2 (y))).
HajlaszReport hajlasz_check(const MMSpace& space, const ScalarField& f, const ScalarField& g,
                            const std::vector<std::pair<Index, Index>>& pairs, double lambda, double C);

}  // namespace ksd
