#include "ksdist/spaces.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include <spdlog/spdlog.h>

namespace ksd {

const char* to_string(BuilderKind kind) {
  switch (kind) {
    case BuilderKind::minkowski_grid:
      return "minkowski_grid";
    case BuilderKind::finsler_grid:
      return "finsler_grid";
    case BuilderKind::cone_ray:
      return "cone_ray";
  }
  return "unknown";
}

BuilderKind builder_kind_from_string(const std::string& s) {
  if (s == "minkowski_grid") return BuilderKind::minkowski_grid;
  if (s == "finsler_grid") return BuilderKind::finsler_grid;
  if (s == "cone_ray") return BuilderKind::cone_ray;
  throw ConfigError("unknown builder kind '" + s + "'");
}

Index BuiltSpace::nearest(const Vec& x) const {
  const Mat& X = space.coordinates();
  require_dim(static_cast<Index>(X.cols()), static_cast<Index>(x.size()), "nearest");
  Index best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < space.size(); ++i) {
    const double d = (X.row(static_cast<Eigen::Index>(i)).transpose() - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

std::vector<Eigen::VectorXi> stencil_offsets(int dim, int order) {
  if (dim < 1 || dim > 3) throw ConfigError("grids support dimension 1 to 3");
  if (order < 1) throw ConfigError("stencil order must be at least 1");
  std::vector<Eigen::VectorXi> out;
  Eigen::VectorXi s = Eigen::VectorXi::Constant(dim, -order);
  while (true) {
    int lead = 0;
    for (int k = 0; k < dim; ++k) {
      if (s[k] != 0) {
        lead = s[k];
        break;
      }
    }
    int g = 0;
    for (int k = 0; k < dim; ++k) g = std::gcd(g, std::abs(s[k]));
    if (lead > 0 && g == 1) out.push_back(s);
    int k = dim - 1;
    while (k >= 0 && s[k] == order) s[k--] = -order;
    if (k < 0) break;
    ++s[k];
  }
  return out;
}

namespace {

void check_resolution(double resolution) {
  if (!(resolution >= 8.0) || !std::isfinite(resolution)) {
    throw ConfigError("resolution must be at least 8 points per unit");
  }
}

void check_stencil(int stencil) {
  if (stencil < 2) throw ConfigError("stencil order must be at least 2");
  if (stencil > 8) throw ConfigError("stencil order above 8 is not supported");
}

struct Lattice {
  int dim = 0;
  double h = 0.0;
  Vec lower;
  std::vector<Index> shape;
  std::vector<Index> stride;
  Index count = 1;

  Lattice(const Vec& lo, const Vec& hi, double resolution) : dim(static_cast<int>(lo.size())), h(1.0 / resolution), lower(lo) {
    require_dim(static_cast<Index>(lo.size()), static_cast<Index>(hi.size()), "grid extent");
    if (dim < 1 || dim > 3) throw ConfigError("grids support dimension 1 to 3");
    for (int k = 0; k < dim; ++k) {
      const double len = hi[k] - lo[k];
      if (!(len > 0.0)) throw ConfigError("grid extent must have upper > lower on every axis");
      const double cells = len * resolution;
      const auto n = static_cast<Index>(std::floor(cells + 1e-9)) + 1;
      if (n < 2) throw ConfigError("grid extent shorter than one cell");
      if (static_cast<double>(count) * static_cast<double>(n) > static_cast<double>(kMaxBuilderPoints)) {
        throw ConfigError("grid exceeds the memory guard of 100000 points");
      }
      shape.push_back(n);
      count *= n;
    }
    stride.assign(dim, 1);
    for (int k = dim - 2; k >= 0; --k) stride[k] = stride[k + 1] * shape[k + 1];
  }

  Eigen::VectorXi unravel(Index i) const {
    Eigen::VectorXi m(dim);
    for (int k = 0; k < dim; ++k) {
      m[k] = static_cast<int>(i / stride[k]);
      i %= stride[k];
    }
    return m;
  }

  std::optional<Index> ravel(const Eigen::VectorXi& m) const {
    Index i = 0;
    for (int k = 0; k < dim; ++k) {
      if (m[k] < 0 || static_cast<Index>(m[k]) >= shape[k]) return std::nullopt;
      i += static_cast<Index>(m[k]) * stride[k];
    }
    return i;
  }

  Vec position(const Eigen::VectorXi& m) const { return lower + h * m.cast<double>(); }
};

// Stencil edges of a box lattice, edge length given by len(p, q) with p, q
// the endpoint positions.
template <class Len>
std::vector<Edge> lattice_edges(const Lattice& L, int stencil, Len&& len) {
  const auto offsets = stencil_offsets(L.dim, stencil);
  std::vector<Edge> edges;
  for (Index i = 0; i < L.count; ++i) {
    const Eigen::VectorXi m = L.unravel(i);
    const Vec p = L.position(m);
    for (const auto& s : offsets) {
      const auto j = L.ravel(m + s);
      if (j) edges.push_back(Edge{i, *j, len(p, L.position(m + s))});
    }
  }
  return edges;
}

MMSpace decorate_lattice(const Lattice& L, MMSpace space) {
  Mat coords(static_cast<Eigen::Index>(L.count), L.dim);
  std::vector<double> measure(L.count);
  std::vector<Index> boundary;
  for (Index i = 0; i < L.count; ++i) {
    const Eigen::VectorXi m = L.unravel(i);
    coords.row(static_cast<Eigen::Index>(i)) = L.position(m).transpose();
    double cell = 1.0;
    bool edge = false;
    for (int k = 0; k < L.dim; ++k) {
      const bool end = m[k] == 0 || static_cast<Index>(m[k]) + 1 == L.shape[k];
      cell *= end ? L.h / 2.0 : L.h;
      edge = edge || end;
    }
    measure[i] = cell;
    if (edge) boundary.push_back(i);
  }
  space = space.with_measure(std::move(measure)).with_coordinates(std::move(coords)).with_boundary(boundary);
  // Distances on a box are maximized between corners.
  double diam = 0.0;
  for (Index c = 0; c < (Index{1} << L.dim); ++c) {
    Eigen::VectorXi m(L.dim);
    for (int k = 0; k < L.dim; ++k) m[k] = (c >> k) & 1 ? static_cast<int>(L.shape[k]) - 1 : 0;
    const auto& row = space.distances_from(*L.ravel(m));
    diam = std::max(diam, *std::max_element(row.begin(), row.end()));
  }
  return space.with_diameter_hint(diam);
}

// max over 64 seeded directions of d(c, c + t u) / gauge(t u) - 1, from the
// lattice point nearest the centre.
template <class Gauge>
double measure_anisotropy(const Lattice& L, const MMSpace& space, Gauge&& gauge) {
  Eigen::VectorXi mid(L.dim);
  Index reach = std::numeric_limits<Index>::max();
  for (int k = 0; k < L.dim; ++k) {
    mid[k] = static_cast<int>(L.shape[k] / 2);
    reach = std::min(reach, L.shape[k] / 2);
  }
  if (reach < 2) return 0.0;
  const Index c = *L.ravel(mid);
  const auto& row = space.distances_from(c);
  std::mt19937_64 rng(64);
  std::normal_distribution<double> normal;
  double worst = 0.0;
  for (int t = 0; t < 64; ++t) {
    Vec u(L.dim);
    for (int k = 0; k < L.dim; ++k) u[k] = normal(rng);
    if (L.dim == 1) u[0] = t % 2 == 0 ? 1.0 : -1.0;
    u /= u.cwiseAbs().maxCoeff();
    const Eigen::VectorXi step = (u * static_cast<double>(reach)).array().round().cast<int>();
    if (step.isZero()) continue;
    const auto j = L.ravel(mid + step);
    if (!j) continue;
    const double g = gauge(L.h * step.cast<double>());
    worst = std::max(worst, row[*j] / g - 1.0);
  }
  return worst;
}

std::vector<double> norm_key(const Norm& n) {
  std::vector<double> key{static_cast<double>(n.kind()), static_cast<double>(n.dim()), n.p()};
  if (n.kind() == NormKind::quadratic) key.insert(key.end(), n.Q().data(), n.Q().data() + n.Q().size());
  for (const auto& [a, r] : n.samples()) {
    key.push_back(a);
    key.push_back(r);
  }
  return key;
}

}  // namespace

BuiltSpace build_minkowski_grid(const Norm& norm, const Vec& lower, const Vec& upper, double resolution,
                                int stencil) {
  check_resolution(resolution);
  check_stencil(stencil);
  require_dim(static_cast<Index>(norm.dim()), static_cast<Index>(lower.size()), "build_minkowski_grid");
  const Lattice L(lower, upper, resolution);
  auto edges = lattice_edges(L, stencil, [&](const Vec& p, const Vec& q) { return norm.gauge(q - p); });
  BuiltSpace out(
      decorate_lattice(L, MMSpace::from_graph(L.count, std::move(edges), std::vector<double>(L.count, 1.0))));
  out.h = L.h;
  out.shape = L.shape;
  out.config.kind = BuilderKind::minkowski_grid;
  out.config.lower = lower;
  out.config.upper = upper;
  out.config.resolution = resolution;
  out.config.stencil = stencil;
  out.config.norm = norm;
  out.region.assign(L.count, Region::grid);
  out.anisotropy = measure_anisotropy(L, out.space, [&](const Vec& v) { return norm.gauge(v); });
  return out;
}

BuiltSpace build_finsler_grid(const NormField& field, const Vec& lower, const Vec& upper, double resolution,
                              int stencil, const Quadrature& quad) {
  check_resolution(resolution);
  check_stencil(stencil);
  if (!field) throw ConfigError("finsler grid needs a norm field");
  const Lattice L(lower, upper, resolution);
  auto edges = lattice_edges(L, stencil, [&](const Vec& p, const Vec& q) {
    const Norm n = field(0.5 * (p + q));
    require_dim(static_cast<Index>(L.dim), static_cast<Index>(n.dim()), "norm field");
    return n.gauge(q - p);
  });
  BuiltSpace out(
      decorate_lattice(L, MMSpace::from_graph(L.count, std::move(edges), std::vector<double>(L.count, 1.0))));
  out.h = L.h;
  out.shape = L.shape;
  out.config.kind = BuilderKind::finsler_grid;
  out.config.lower = lower;
  out.config.upper = upper;
  out.config.resolution = resolution;
  out.config.stencil = stencil;
  out.config.norm_field = field;
  out.config.field_quadrature = quad;
  out.region.assign(L.count, Region::grid);

  // Many grid points share a norm (e.g. fields depending on one coordinate).
  std::map<std::vector<double>, Index> seen;
  std::vector<Norm> distinct;
  std::vector<Index> which(L.count);
  for (Index i = 0; i < L.count; ++i) {
    Norm n = field(L.position(L.unravel(i)));
    auto [it, fresh] = seen.try_emplace(norm_key(n), distinct.size());
    if (fresh) distinct.push_back(std::move(n));
    which[i] = it->second;
  }
  std::vector<MomentMatrix> table(distinct.size());
  for (Index k = 0; k < distinct.size(); ++k) {
    try {
      table[k] = moment_matrix(distinct[k], quad);
    } catch (const NumericalError& e) {
      throw NumericalError(std::string("finsler grid: non-SPD moment matrix: ") + e.what());
    }
  }
  out.moments.reserve(L.count);
  for (Index i = 0; i < L.count; ++i) out.moments.push_back(table[which[i]]);

  out.anisotropy = measure_anisotropy(L, out.space, [&](const Vec& v) {
    return field(L.position(L.unravel(L.count / 2))).gauge(v);
  });
  return out;
}

BuiltSpace build_cone_ray(double resolution, double half_angle, const Norm& norm, double cone_length,
                          double ray_length, int stencil) {
  check_resolution(resolution);
  check_stencil(stencil);
  if (!(half_angle > 0.0 && half_angle < std::numbers::pi / 2)) {
    throw ConfigError("cone half angle must lie in (0, pi/2)");
  }
  require_dim(2, static_cast<Index>(norm.dim()), "build_cone_ray");
  if (!norm.is_c1()) throw ConfigError("cone+ray needs a C^1 norm");
  if (!(cone_length > 0.0) || !(ray_length > 0.0)) throw ConfigError("cone and ray lengths must be positive");
  const double h = 1.0 / resolution;
  const double slope = std::tan(half_angle);
  const auto nc = static_cast<int>(std::floor(cone_length * resolution + 1e-9));
  const auto nr = static_cast<int>(std::floor(ray_length * resolution + 1e-9));
  if (nc < 1 || nr < 1) throw ConfigError("cone and ray must each span at least one cell");

  auto inside = [&](double x, double y) { return x >= -1e-12 && x <= cone_length + 1e-12 && std::abs(y) <= slope * x + 1e-12; };

  // Cone lattice points (i h, j h), apex first.
  std::map<std::pair<int, int>, Index> cone_index;
  std::vector<std::pair<int, int>> cone_pts;
  for (int i = 0; i <= nc; ++i) {
    const int jmax = static_cast<int>(std::floor(slope * i + 1e-9));
    for (int j = -jmax; j <= jmax; ++j) {
      cone_index.emplace(std::make_pair(i, j), cone_pts.size());
      cone_pts.emplace_back(i, j);
    }
  }
  const Index n_cone = cone_pts.size();
  const Index n = n_cone + static_cast<Index>(nr);
  if (n > kMaxBuilderPoints) throw ConfigError("cone+ray exceeds the memory guard of 100000 points");

  std::vector<double> measure(n, 0.0);
  Mat coords(static_cast<Eigen::Index>(n), 2);
  std::vector<Region> region(n, Region::cone);
  std::vector<Index> boundary;
  constexpr int kSub = 16;
  for (Index k = 0; k < n_cone; ++k) {
    const auto [i, j] = cone_pts[k];
    const double x = i * h;
    const double y = j * h;
    coords(static_cast<Eigen::Index>(k), 0) = x;
    coords(static_cast<Eigen::Index>(k), 1) = y;
    int hits = 0;
    for (int a = 0; a < kSub; ++a) {
      for (int b = 0; b < kSub; ++b) {
        hits += inside(x + h * ((a + 0.5) / kSub - 0.5), y + h * ((b + 0.5) / kSub - 0.5)) ? 1 : 0;
      }
    }
    measure[k] = h * h * hits / (kSub * kSub);
    const bool full = cone_index.count({i + 1, j}) && cone_index.count({i - 1, j}) && cone_index.count({i, j + 1}) &&
                      cone_index.count({i, j - 1});
    if (!full && k != 0) boundary.push_back(k);
  }
  for (int k = 1; k <= nr; ++k) {
    const Index id = n_cone + static_cast<Index>(k - 1);
    coords(static_cast<Eigen::Index>(id), 0) = -k * h;
    coords(static_cast<Eigen::Index>(id), 1) = 0.0;
    measure[id] = k == nr ? h / 2.0 : h;
    region[id] = Region::ray;
  }
  boundary.push_back(n - 1);
  const Index apex = 0;
  measure[apex] += h / 2.0;
  region[apex] = Region::apex;

  std::vector<Edge> edges;
  Eigen::VectorXi m(2);
  for (const auto& s : stencil_offsets(2, stencil)) {
    const Vec step = h * s.cast<double>();
    const double w = norm.gauge(step);
    for (Index k = 0; k < n_cone; ++k) {
      auto it = cone_index.find({cone_pts[k].first + s[0], cone_pts[k].second + s[1]});
      if (it != cone_index.end()) edges.push_back(Edge{k, it->second, w});
    }
  }
  const double w_ray = norm.gauge(Vec::Unit(2, 0) * h);
  edges.push_back(Edge{apex, n_cone, w_ray});
  for (Index k = n_cone; k + 1 < n; ++k) edges.push_back(Edge{k, k + 1, w_ray});

  MMSpace space = MMSpace::from_graph(n, std::move(edges), std::move(measure))
                      .with_coordinates(std::move(coords))
                      .with_boundary(boundary)
                      .with_singular({apex});
  BuiltSpace out(space);
  out.h = h;
  out.config.kind = BuilderKind::cone_ray;
  out.config.resolution = resolution;
  out.config.stencil = stencil;
  out.config.norm = norm;
  out.config.cone_half_angle = half_angle;
  out.config.cone_length = cone_length;
  out.config.ray_length = ray_length;
  out.region = std::move(region);
  out.apex = apex;
  // Directional check inside the cone from a point on the axis.
  const Index c = cone_index.at({nc / 2, 0});
  const auto& row = out.space.distances_from(c);
  double worst = 0.0;
  for (Index k = 0; k < n_cone; ++k) {
    if (k == c) continue;
    const Vec d = out.space.point(k) - out.space.point(c);
    worst = std::max(worst, row[k] / norm.gauge(d) - 1.0);
  }
  out.anisotropy = worst;
  return out;
}

BuiltSpace build(const BuilderConfig& c) {
  switch (c.kind) {
    case BuilderKind::minkowski_grid:
      if (!c.norm) throw ConfigError("minkowski_grid needs a norm");
      return build_minkowski_grid(*c.norm, c.lower, c.upper, c.resolution, c.stencil);
    case BuilderKind::finsler_grid:
      return build_finsler_grid(c.norm_field, c.lower, c.upper, c.resolution, c.stencil, c.field_quadrature);
    case BuilderKind::cone_ray:
      return build_cone_ray(c.resolution, c.cone_half_angle, c.norm ? *c.norm : Norm::euclidean(2), c.cone_length,
                            c.ray_length, c.stencil);
  }
  throw ConfigError("unknown builder kind");
}

bool deep_interior(const MMSpace& space, Index x, double r) {
  for (const auto& nb : space.neighborhood(x, r)) {
    if (space.is_boundary(nb.index)) return false;
  }
  return true;
}

std::vector<Index> sample_interior(const MMSpace& space, double r, Index count, std::uint64_t seed) {
  std::vector<Index> order(space.size());
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Index> out;
  for (Index i : order) {
    if (out.size() == count) break;
    if (deep_interior(space, i, r)) out.push_back(i);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace ksd
