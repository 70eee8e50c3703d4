#pragma once

#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "ksdist/mmspace.hpp"
#include "ksdist/moment.hpp"
#include "ksdist/norms.hpp"

namespace ksd {

enum class BuilderKind { minkowski_grid, finsler_grid, cone_ray };

const char* to_string(BuilderKind kind);
BuilderKind builder_kind_from_string(const std::string& s);

using NormField = std::function<Norm(const Vec&)>;

/// Inputs of the three builders. Grids cover the box [lower, upper] with
/// spacing h = 1 / resolution (so [0,1]^2 at resolution 32 has 33^2 points).
/// The cone+ray space glues the ray (-ray_length, 0] x {0} to the sector
/// {x in [0, cone_length], |y| <= tan(half_angle) x} at the origin.
struct BuilderConfig {
  BuilderKind kind = BuilderKind::minkowski_grid;
  Vec lower;
  Vec upper;
  double resolution = 32.0;
  /// Offsets s with gcd 1 and max |s_i| <= stencil; at least 2.
  int stencil = 2;
  std::optional<Norm> norm;
  NormField norm_field;
  /// Quadrature used for the per-point moments of a Finsler grid.
  Quadrature field_quadrature = GridQuadrature{64, 2};
  double cone_half_angle = std::numbers::pi / 6.0;
  double cone_length = 1.0;
  double ray_length = 1.0;
};

enum class Region : char { grid = 0, cone = 1, ray = 2, apex = 3 };

struct BuiltSpace {
  explicit BuiltSpace(MMSpace s) : space(std::move(s)) {}

  MMSpace space;
  BuilderConfig config;
  double h = 0.0;
  /// Lattice extent per axis (grids only).
  std::vector<Index> shape;
  /// max over sampled directions of d / gauge(displacement) - 1.
  double anisotropy = 0.0;
  /// Per-point moment matrices (Finsler grids only).
  std::vector<MomentMatrix> moments;
  std::vector<Region> region;
  std::optional<Index> apex;

  /// Lattice point closest to x in Euclidean distance.
  Index nearest(const Vec& x) const;
};

constexpr Index kMaxBuilderPoints = 100'000;

/// Offsets of the given stencil order with a positive leading nonzero entry
/// (one representative per undirected edge direction).
std::vector<Eigen::VectorXi> stencil_offsets(int dim, int order);

BuiltSpace build_minkowski_grid(const Norm& norm, const Vec& lower, const Vec& upper, double resolution,
                                int stencil = 2);
BuiltSpace build_finsler_grid(const NormField& field, const Vec& lower, const Vec& upper, double resolution,
                              int stencil = 2, const Quadrature& quad = GridQuadrature{64, 2});
BuiltSpace build_cone_ray(double resolution, double half_angle, const Norm& norm, double cone_length = 1.0,
                          double ray_length = 1.0, int stencil = 2);
BuiltSpace build(const BuilderConfig& config);

/// True if the closed ball B_r(x) contains no boundary point.
bool deep_interior(const MMSpace& space, Index x, double r);

/// Up to `count` distinct points satisfying deep_interior(., r), drawn with a
/// seeded generator and returned in ascending order.
std::vector<Index> sample_interior(const MMSpace& space, double r, Index count, std::uint64_t seed);

}  // namespace ksd
