#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "ksdist/intrinsic.hpp"
#include "ksdist/ks_energy.hpp"
#include "ksdist/moment.hpp"
#include "ksdist/norms.hpp"
#include "ksdist/spaces.hpp"

namespace ksd::io {

using json = nlohmann::json;

/// Parses a JSON file; ConfigError with the parser diagnostic on failure.
json read_json(const std::filesystem::path& path);
/// Writes with 2-space indentation and a trailing newline.
void write_json(const std::filesystem::path& path, const json& j);
void write_text(const std::filesystem::path& path, const std::string& text);

/// Shortest decimal form that round-trips is not guaranteed by printf, so
/// CSV cells use 17 significant digits.
std::string fmt17(double v);

// {"kind": "p"|"quadratic"|"tabulated", "dim": n, "p": p | "Q": row-major | "samples": [[angle, radius], ...]}
Norm norm_from_json(const json& j);
json norm_to_json(const Norm& norm);

// {dim, A (row-major), vol, c, quadrature_error, sample_count}
json moment_to_json(const MomentMatrix& M);
MomentMatrix moment_from_json(const json& j);

/// Space file: {"points", "metric": "dense"|"graph", "dense" | "edges", "measure", "boundary"}.
json space_to_json(const MMSpace& space);
MMSpace space_from_json(const json& j);
/// Dense space over a subset of points with the given pairwise distances.
json dense_space_json(const Mat& D, const std::vector<double>& measure, const Mat& coords);

/// Builder configs:
///   {"kind": "minkowski_grid", "lower": [...], "upper": [...], "resolution", "stencil", "norm": {...}}
///   {"kind": "finsler_grid", ..., "field": {"type": "constant", "norm": {...}}
///                                        | {"type": "stretch", "coeff": a}           Q(x) = diag(1 + a x_1^2, 1, ...)
///                                        | {"type": "rotating_ellipse", "a", "b", "rate"}}
///   {"kind": "cone_ray", "resolution", "half_angle", "cone_length", "ray_length", "stencil", "norm": {...}}
BuilderConfig builder_from_json(const json& j);
NormField norm_field_from_json(const json& j, int dim);

/// Coordinates, boundary and singular flags, regions, lattice data, and the
/// moment matrix (constant norm) or per-point moment field (Finsler).
json sidecar_to_json(const BuiltSpace& built, const std::vector<MomentMatrix>& moments);
/// Applies a sidecar to a space read from its space file; returns the moments it carries.
MMSpace apply_sidecar(const MMSpace& space, const json& sidecar, std::vector<MomentMatrix>* moments);

/// {"kind": "linear", "v": [...]} | {"kind": "distance_from", "index": i}
/// | {"kind": "table", "values": [...]} | {"kind": "constant", "value": c}
ScalarField field_from_json(const json& j, const MMSpace& space);

/// Rows (center, scale, ks_value, lip_value, plateau_flag).
std::string profile_csv(const std::vector<KSProfile>& ks, const std::vector<LipEstimate>& lip);
/// Rows (start, iteration, beta, objective, best_objective, max_constraint).
std::string trace_csv(const std::vector<TraceRow>& rows);

json equivalence_to_json(const EquivalenceReport& r, const std::string& a, const std::string& b);

}  // namespace ksd::io
