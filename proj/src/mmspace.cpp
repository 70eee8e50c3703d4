#include "ksdist/mmspace.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <queue>
#include <random>

namespace ksd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::uint64_t next_space_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter++;
}

bool neighbor_less(const Neighbor& a, const Neighbor& b) {
  return a.dist < b.dist || (a.dist == b.dist && a.index < b.index);
}

}  // namespace

// Metric part: dense rows or graph + lazily filled shortest-path rows.
struct MetricCore {
  Index n = 0;
  bool graph = false;
  std::vector<Edge> edges;
  std::vector<Index> adj_offset;
  std::vector<Neighbor> adj;
  double pitch = 0.0;

  mutable std::vector<std::unique_ptr<std::vector<double>>> rows;
  mutable std::unique_ptr<std::once_flag[]> row_flags;
  mutable std::once_flag diameter_flag;
  mutable double diameter = 0.0;

  void build_adjacency() {
    std::vector<Index> deg(n, 0);
    for (const auto& e : edges) {
      ++deg[e.i];
      ++deg[e.j];
    }
    adj_offset.assign(n + 1, 0);
    for (Index i = 0; i < n; ++i) adj_offset[i + 1] = adj_offset[i] + deg[i];
    adj.resize(adj_offset[n]);
    std::vector<Index> fill(adj_offset.begin(), adj_offset.end() - 1);
    for (const auto& e : edges) {
      adj[fill[e.i]++] = Neighbor{e.w, e.j};
      adj[fill[e.j]++] = Neighbor{e.w, e.i};
    }
    for (Index i = 0; i < n; ++i) {
      std::sort(adj.begin() + static_cast<std::ptrdiff_t>(adj_offset[i]),
                adj.begin() + static_cast<std::ptrdiff_t>(adj_offset[i + 1]), neighbor_less);
    }
  }

  std::vector<double> dijkstra(Index src) const {
    std::vector<double> dist(n, kInf);
    using Item = std::pair<double, Index>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    dist[src] = 0.0;
    pq.emplace(0.0, src);
    while (!pq.empty()) {
      const auto [d, u] = pq.top();
      pq.pop();
      if (d > dist[u]) continue;
      for (Index k = adj_offset[u]; k < adj_offset[u + 1]; ++k) {
        const double nd = d + adj[k].dist;
        if (nd < dist[adj[k].index]) {
          dist[adj[k].index] = nd;
          pq.emplace(nd, adj[k].index);
        }
      }
    }
    return dist;
  }

  Neighborhood dijkstra_bounded(Index src, double radius) const {
    thread_local std::vector<double> dist;
    thread_local std::vector<Index> touched;
    if (dist.size() != n) dist.assign(n, kInf);
    Neighborhood out;
    using Item = std::pair<double, Index>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    dist[src] = 0.0;
    touched.push_back(src);
    pq.emplace(0.0, src);
    while (!pq.empty()) {
      const auto [d, u] = pq.top();
      pq.pop();
      if (d > dist[u]) continue;
      out.push_back(Neighbor{d, u});
      for (Index k = adj_offset[u]; k < adj_offset[u + 1]; ++k) {
        const double nd = d + adj[k].dist;
        const Index v = adj[k].index;
        if (nd < dist[v] && within(nd, radius)) {
          if (dist[v] == kInf) touched.push_back(v);
          dist[v] = nd;
          pq.emplace(nd, v);
        }
      }
    }
    for (Index t : touched) dist[t] = kInf;
    touched.clear();
    std::sort(out.begin(), out.end(), neighbor_less);
    return out;
  }

  const std::vector<double>& row(Index i) const {
    std::call_once(row_flags[i], [&] {
      if (!rows[i]) rows[i] = std::make_unique<std::vector<double>>(dijkstra(i));
    });
    return *rows[i];
  }
};

struct MMSpace::Impl {
  std::uint64_t id = 0;
  std::shared_ptr<const MetricCore> core;
  std::vector<double> measure;
  double total = 0.0;
  Mat coords;
  std::vector<char> boundary;
  std::vector<Index> singular;
  double diameter_hint = -1.0;
};

MMSpace::MMSpace(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}

namespace {

void validate_measure(const std::vector<double>& m, Index n) {
  if (m.size() != n) throw DimensionError("measure must have one weight per point");
  for (double w : m) {
    if (!(w > 0.0) || !std::isfinite(w)) throw ConfigError("measure weights must be positive and finite");
  }
}

double sum_of(const std::vector<double>& m) {
  double s = 0.0;
  for (double w : m) s += w;
  return s;
}

}  // namespace

MMSpace MMSpace::from_dense(const Mat& D, std::vector<double> measure) {
  const auto n = static_cast<Index>(D.rows());
  if (n == 0 || D.rows() != D.cols()) throw DimensionError("dense metric must be a nonempty square matrix");
  if (n > kMaxDensePoints) {
    throw ConfigError("dense metric with " + std::to_string(n) + " points exceeds the limit of " +
                      std::to_string(kMaxDensePoints));
  }
  validate_measure(measure, n);
  const double scale = std::max(1.0, D.cwiseAbs().maxCoeff());
  auto core = std::make_shared<MetricCore>();
  core->n = n;
  core->graph = false;
  core->rows.resize(n);
  core->row_flags = std::make_unique<std::once_flag[]>(n);
  double pitch = kInf;
  for (Index i = 0; i < n; ++i) {
    auto row = std::make_unique<std::vector<double>>(n);
    for (Index j = 0; j < n; ++j) {
      const double d = D(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (i == j) {
        if (d != 0.0) throw ConfigError("dense metric must have a zero diagonal");
      } else {
        if (!(d > 0.0) || !std::isfinite(d)) throw ConfigError("dense metric entries must be positive off the diagonal");
        if (std::abs(d - D(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i))) > 1e-12 * scale) {
          throw ConfigError("dense metric must be symmetric");
        }
        pitch = std::min(pitch, d);
      }
      (*row)[j] = d;
    }
    core->rows[i] = std::move(row);
  }
  core->pitch = n > 1 ? pitch : 0.0;
  // Nearest-neighbour pairs stand in for graph edges.
  for (Index i = 0; i < n; ++i) {
    double best = kInf;
    for (Index j = 0; j < n; ++j) {
      if (j != i) best = std::min(best, (*core->rows[i])[j]);
    }
    for (Index j = i + 1; j < n; ++j) {
      if ((*core->rows[i])[j] == best) core->edges.push_back(Edge{i, j, best});
    }
  }
  core->build_adjacency();
  core->edges.clear();

  auto impl = std::make_shared<Impl>();
  impl->id = next_space_id();
  impl->core = core;
  impl->total = sum_of(measure);
  impl->measure = std::move(measure);
  impl->boundary.assign(n, 0);
  MMSpace space(impl);
  if (space.triangle_violation() > 1e-9 * scale) throw ConfigError("dense metric violates the triangle inequality");
  return space;
}

MMSpace MMSpace::from_graph(Index n, std::vector<Edge> edges, std::vector<double> measure) {
  if (n == 0) throw ConfigError("graph space needs at least one point");
  validate_measure(measure, n);
  double pitch = kInf;
  for (const auto& e : edges) {
    if (e.i >= n || e.j >= n) throw ConfigError("edge endpoint out of range");
    if (e.i == e.j) throw ConfigError("self-loop edges are not allowed");
    if (!(e.w > 0.0) || !std::isfinite(e.w)) throw ConfigError("edge weights must be positive and finite");
    pitch = std::min(pitch, e.w);
  }
  auto core = std::make_shared<MetricCore>();
  core->n = n;
  core->graph = true;
  core->edges = std::move(edges);
  core->pitch = n > 1 ? pitch : 0.0;
  core->rows.resize(n);
  core->row_flags = std::make_unique<std::once_flag[]>(n);
  core->build_adjacency();
  // Connectivity.
  std::vector<char> seen(n, 0);
  std::vector<Index> stack{0};
  seen[0] = 1;
  Index count = 1;
  while (!stack.empty()) {
    const Index u = stack.back();
    stack.pop_back();
    for (Index k = core->adj_offset[u]; k < core->adj_offset[u + 1]; ++k) {
      const Index v = core->adj[k].index;
      if (!seen[v]) {
        seen[v] = 1;
        ++count;
        stack.push_back(v);
      }
    }
  }
  if (count != n) throw ConfigError("graph is disconnected");

  auto impl = std::make_shared<Impl>();
  impl->id = next_space_id();
  impl->core = core;
  impl->total = sum_of(measure);
  impl->measure = std::move(measure);
  impl->boundary.assign(n, 0);
  return MMSpace(impl);
}

MMSpace MMSpace::rebuild_graph(std::vector<Edge> edges) const {
  if (!is_graph()) throw ConfigError("reweighting requires a graph space");
  MMSpace fresh = from_graph(size(), std::move(edges), impl_->measure);
  auto impl = std::make_shared<Impl>(*impl_);
  impl->core = fresh.impl_->core;
  impl->diameter_hint = -1.0;
  return MMSpace(impl);
}

MMSpace MMSpace::with_meta(const std::function<void(Impl&)>& edit) const {
  auto impl = std::make_shared<Impl>(*impl_);
  edit(*impl);
  return MMSpace(impl);
}

MMSpace MMSpace::with_coordinates(Mat coords) const {
  if (static_cast<Index>(coords.rows()) != size()) throw DimensionError("coordinates need one row per point");
  return with_meta([&](Impl& m) { m.coords = std::move(coords); });
}

MMSpace MMSpace::with_boundary(const std::vector<Index>& boundary) const {
  std::vector<char> flags(size(), 0);
  for (Index b : boundary) {
    if (b >= size()) throw ConfigError("boundary index out of range");
    flags[b] = 1;
  }
  return with_meta([&](Impl& m) { m.boundary = std::move(flags); });
}

MMSpace MMSpace::with_singular(std::vector<Index> singular) const {
  for (Index s : singular) {
    if (s >= size()) throw ConfigError("singular index out of range");
  }
  return with_meta([&](Impl& m) { m.singular = std::move(singular); });
}

MMSpace MMSpace::with_diameter_hint(double diameter) const {
  return with_meta([&](Impl& m) { m.diameter_hint = diameter; });
}

MMSpace MMSpace::with_measure(std::vector<double> measure) const {
  validate_measure(measure, size());
  return with_meta([&](Impl& m) {
    m.total = sum_of(measure);
    m.measure = std::move(measure);
  });
}

MMSpace MMSpace::scaled_metric(double t) const {
  if (!(t > 0.0)) throw ConfigError("metric scale must be positive");
  if (is_graph()) {
    MMSpace out = reweighted([&](Index i, Index j) {
      const auto nb = adjacent(i);
      double w = kInf;
      for (const auto& x : nb) {
        if (x.index == j) w = std::min(w, x.dist);
      }
      return t * w;
    });
    if (impl_->diameter_hint > 0) out = out.with_diameter_hint(t * impl_->diameter_hint);
    return out;
  }
  Mat D(size(), size());
  for (Index i = 0; i < size(); ++i) {
    for (Index j = 0; j < size(); ++j) D(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = t * distance(i, j);
  }
  MMSpace fresh = from_dense(D, impl_->measure);
  auto impl = std::make_shared<Impl>(*impl_);
  impl->core = fresh.impl_->core;
  impl->diameter_hint = impl_->diameter_hint > 0 ? t * impl_->diameter_hint : -1.0;
  return MMSpace(impl);
}

Index MMSpace::size() const { return impl_->core->n; }
std::uint64_t MMSpace::id() const { return impl_->id; }
bool MMSpace::is_graph() const { return impl_->core->graph; }
double MMSpace::measure(Index i) const { return impl_->measure[i]; }
const std::vector<double>& MMSpace::measures() const { return impl_->measure; }
double MMSpace::total_mass() const { return impl_->total; }

double MMSpace::distance(Index i, Index j) const {
  if (i == j) return 0.0;
  return distances_from(i)[j];
}

const std::vector<double>& MMSpace::distances_from(Index i) const {
  if (i >= size()) throw ConfigError("point index out of range");
  return impl_->core->row(i);
}

Neighborhood MMSpace::neighborhood(Index center, double radius) const {
  if (center >= size()) throw ConfigError("point index out of range");
  if (!(radius >= 0.0)) throw ConfigError("radius must be nonnegative");
  const auto& core = *impl_->core;
  if (core.graph) return core.dijkstra_bounded(center, radius);
  const auto& row = distances_from(center);
  Neighborhood out;
  for (Index j = 0; j < size(); ++j) {
    if (within(row[j], radius)) out.push_back(Neighbor{row[j], j});
  }
  std::sort(out.begin(), out.end(), neighbor_less);
  return out;
}

std::vector<Index> MMSpace::ball(Index center, double r) const {
  std::vector<Index> out;
  for (const auto& nb : neighborhood(center, r)) out.push_back(nb.index);
  return out;
}

const std::vector<Edge>& MMSpace::edges() const { return impl_->core->edges; }

std::span<const Neighbor> MMSpace::adjacent(Index i) const {
  const auto& core = *impl_->core;
  return {core.adj.data() + core.adj_offset[i], core.adj_offset[i + 1] - core.adj_offset[i]};
}

double MMSpace::pitch() const { return impl_->core->pitch; }

double MMSpace::diameter() const {
  if (impl_->diameter_hint > 0.0) return impl_->diameter_hint;
  const auto& core = *impl_->core;
  std::call_once(core.diameter_flag, [&] {
    const auto n = static_cast<std::int64_t>(core.n);
    std::vector<double> ecc(core.n, 0.0);
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < n; ++i) {
      const auto idx = static_cast<Index>(i);
      if (core.graph) {
        const auto d = core.dijkstra(idx);
        ecc[idx] = *std::max_element(d.begin(), d.end());
      } else {
        const auto& d = core.row(idx);
        ecc[idx] = *std::max_element(d.begin(), d.end());
      }
    }
    core.diameter = *std::max_element(ecc.begin(), ecc.end());
  });
  return core.diameter;
}

bool MMSpace::has_coordinates() const { return impl_->coords.rows() > 0; }
const Mat& MMSpace::coordinates() const {
  if (!has_coordinates()) throw ConfigError("space has no coordinates");
  return impl_->coords;
}
Vec MMSpace::point(Index i) const { return coordinates().row(static_cast<Eigen::Index>(i)).transpose(); }
const std::vector<char>& MMSpace::boundary() const { return impl_->boundary; }
bool MMSpace::is_boundary(Index i) const { return impl_->boundary[i] != 0; }
const std::vector<Index>& MMSpace::singular() const { return impl_->singular; }

double MMSpace::triangle_violation(std::uint64_t seed) const {
  const Index n = size();
  double worst = -kInf;
  auto check = [&](Index i, Index j, Index k) {
    worst = std::max(worst, distance(i, k) - distance(i, j) - distance(j, k));
  };
  if (n <= 200) {
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j)
        for (Index k = 0; k < n; ++k) check(i, j, k);
  } else {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<Index> pick(0, n - 1);
    for (int t = 0; t < 100000; ++t) check(pick(rng), pick(rng), pick(rng));
  }
  return n == 0 ? 0.0 : worst;
}

// ---------------------------------------------------------------------------
// Fields

void check_field(const MMSpace& space, const ScalarField& f, const char* what) {
  if (f.size() != space.size()) {
    throw DimensionError(std::string(what) + ": field has " + std::to_string(f.size()) + " values, space has " +
                         std::to_string(space.size()) + " points");
  }
  if (f.space_id != 0 && f.space_id != space.id()) {
    throw ConfigError(std::string(what) + ": field belongs to a different space");
  }
}

ScalarField make_field(const MMSpace& space, std::vector<double> values) {
  ScalarField f{std::move(values), space.id()};
  check_field(space, f, "make_field");
  return f;
}

ScalarField constant_field(const MMSpace& space, double c) { return make_field(space, std::vector<double>(space.size(), c)); }

ScalarField distance_field(const MMSpace& space, Index x0) { return make_field(space, space.distances_from(x0)); }

ScalarField linear_field(const MMSpace& space, const Vec& v) {
  const Mat& X = space.coordinates();
  require_dim(static_cast<Index>(X.cols()), static_cast<Index>(v.size()), "linear_field");
  const Vec vals = X * v;
  return make_field(space, std::vector<double>(vals.data(), vals.data() + vals.size()));
}

namespace {
template <class Op>
ScalarField combine(const ScalarField& a, const ScalarField& b, Op op) {
  if (a.size() != b.size()) throw DimensionError("fields have different sizes");
  ScalarField out{std::vector<double>(a.size()), a.space_id != 0 ? a.space_id : b.space_id};
  for (Index i = 0; i < a.size(); ++i) out.values[i] = op(a.values[i], b.values[i]);
  return out;
}
}  // namespace

ScalarField operator+(const ScalarField& a, const ScalarField& b) { return combine(a, b, std::plus<>()); }
ScalarField operator-(const ScalarField& a, const ScalarField& b) { return combine(a, b, std::minus<>()); }
ScalarField operator*(double t, const ScalarField& a) {
  ScalarField out = a;
  for (auto& x : out.values) x *= t;
  return out;
}
ScalarField pointwise_max(const ScalarField& a, const ScalarField& b) {
  return combine(a, b, [](double x, double y) { return std::max(x, y); });
}
ScalarField pointwise_min(const ScalarField& a, const ScalarField& b) {
  return combine(a, b, [](double x, double y) { return std::min(x, y); });
}

// ---------------------------------------------------------------------------
// Estimators

double mean_integral(const MMSpace& space, const ScalarField& f, std::span<const Index> set) {
  check_field(space, f, "mean_integral");
  if (set.empty()) throw ConfigError("mean_integral over an empty set");
  double num = 0.0;
  double den = 0.0;
  for (Index j : set) {
    num += space.measure(j) * f[j];
    den += space.measure(j);
  }
  return num / den;
}

SlopeResult local_slope(const MMSpace& space, const ScalarField& f, Index x, const Neighborhood& nbhd, double r) {
  check_field(space, f, "local_slope");
  SlopeResult out;
  bool any = false;
  for (const auto& nb : nbhd) {
    if (!within(nb.dist, r)) break;
    if (nb.index == x) continue;
    any = true;
    out.value = std::max(out.value, std::abs(f[nb.index] - f[x]) / nb.dist);
  }
  out.singleton = !any;
  return out;
}

SlopeResult local_slope(const MMSpace& space, const ScalarField& f, Index x, double r) {
  if (!(r >= 0.0)) throw ConfigError("radius must be nonnegative");
  return local_slope(space, f, x, space.neighborhood(x, r), r);
}

ScalarField canonical_upper_gradient(const MMSpace& space, const ScalarField& f) {
  check_field(space, f, "canonical_upper_gradient");
  ScalarField g{std::vector<double>(space.size(), 0.0), space.id()};
  for (Index i = 0; i < space.size(); ++i) {
    for (const auto& nb : space.adjacent(i)) {
      g[i] = std::max(g[i], std::abs(f[nb.index] - f[i]) / nb.dist);
    }
  }
  return g;
}

namespace {

// Running-prefix maximum of ball means of |g| over the distinct radii < R.
double maximal_from(const MMSpace& space, const ScalarField& g, const Neighborhood& nb, double R) {
  double num = 0.0;
  double den = 0.0;
  double best = 0.0;
  for (Index k = 0; k < nb.size(); ++k) {
    if (nb[k].dist >= R) break;
    num += space.measure(nb[k].index) * std::abs(g[nb[k].index]);
    den += space.measure(nb[k].index);
    const bool last_at_radius = k + 1 == nb.size() || nb[k + 1].dist != nb[k].dist;
    if (last_at_radius) best = std::max(best, num / den);
  }
  return best;
}

}  // namespace

double maximal_function(const MMSpace& space, const ScalarField& g, Index x, double R) {
  check_field(space, g, "maximal_function");
  if (!(R > 0.0)) throw ConfigError("maximal function radius must be positive");
  return maximal_from(space, g, space.neighborhood(x, R), R);
}

ConstantEstimate doubling_constant(const MMSpace& space, double R, const DoublingOptions& opt) {
  const Index n = space.size();
  ConstantEstimate out;
  if (n == 1) {
    out.global = out.interior = 1.0;
    out.interior_count = space.is_boundary(0) ? 0 : 1;
    return out;
  }
  if (!(R > space.pitch())) throw ConfigError("doubling_constant: R must exceed the minimum pairwise distance");
  struct PerPoint {
    double ratio = 1.0;
    double radius = 0.0;
    bool interior = true;
  };
  std::vector<PerPoint> per(n);
  const auto nn = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic) if (opt.exec == Exec::parallel)
  for (std::int64_t xi = 0; xi < nn; ++xi) {
    const auto x = static_cast<Index>(xi);
    const Neighborhood nb = space.neighborhood(x, 2.0 * R);
    PerPoint& p = per[x];
    for (const auto& e : nb) {
      if (space.is_boundary(e.index)) p.interior = false;
    }
    // Distinct radii and cumulative masses.
    std::vector<double> radii;
    std::vector<double> mass;
    double acc = 0.0;
    for (Index k = 0; k < nb.size(); ++k) {
      acc += space.measure(nb[k].index);
      if (k + 1 == nb.size() || nb[k + 1].dist != nb[k].dist) {
        radii.push_back(nb[k].dist);
        mass.push_back(acc);
      }
    }
    // m({d < t}) for t <= 2R.
    auto open_mass = [&](double t) {
      const auto it = std::lower_bound(radii.begin(), radii.end(), t * (1.0 - 1e-12));
      const auto k = static_cast<Index>(it - radii.begin());
      return k == 0 ? 0.0 : mass[k - 1];
    };
    for (Index k = 0; k < radii.size() && radii[k] < R; ++k) {
      const double hi = k + 1 < radii.size() ? std::min(radii[k + 1], R) : R;
      if (hi <= opt.r_min) continue;
      const double ratio = open_mass(2.0 * hi) / mass[k];
      if (ratio > p.ratio) {
        p.ratio = ratio;
        p.radius = hi;
      }
    }
  }
  for (Index x = 0; x < n; ++x) {
    if (per[x].ratio > out.global) {
      out.global = per[x].ratio;
      out.argmax = x;
      out.argmax_radius = per[x].radius;
    }
    if (per[x].interior) {
      ++out.interior_count;
      out.interior = std::max(out.interior, per[x].ratio);
    }
  }
  return out;
}

PoincareEstimate poincare_constant(const MMSpace& space,
                                   const std::vector<std::pair<ScalarField, ScalarField>>& tests, double R,
                                   double lambda, Exec exec) {
  if (!(R > 0.0) || !(lambda >= 1.0)) throw ConfigError("poincare_constant: need R > 0 and lambda >= 1");
  for (const auto& [f, g] : tests) {
    check_field(space, f, "poincare_constant");
    check_field(space, g, "poincare_constant");
  }
  const Index n = space.size();
  const Index T = tests.size();
  struct Cell {
    double ratio = 0.0;
    double radius = 0.0;
    bool rejected = false;
  };
  std::vector<Cell> cells(n * T);
  std::vector<char> interior(n, 1);
  const auto nn = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic) if (exec == Exec::parallel)
  for (std::int64_t xi = 0; xi < nn; ++xi) {
    const auto x = static_cast<Index>(xi);
    const Neighborhood nb = space.neighborhood(x, lambda * R);
    for (const auto& e : nb) {
      if (space.is_boundary(e.index)) interior[x] = 0;
    }
    for (Index t = 0; t < T; ++t) {
      const auto& f = tests[t].first;
      const auto& g = tests[t].second;
      Cell& cell = cells[x * T + t];
      double fm = 0.0;
      double m = 0.0;
      Index big = 0;
      double g2 = 0.0;
      double mbig = 0.0;
      for (Index k = 0; k < nb.size() && nb[k].dist < R; ++k) {
        fm += space.measure(nb[k].index) * f[nb[k].index];
        m += space.measure(nb[k].index);
        if (k + 1 < nb.size() && nb[k + 1].dist == nb[k].dist) continue;
        const double r = nb[k].dist;
        if (r == 0.0) continue;
        const double mean = fm / m;
        double osc = 0.0;
        for (Index q = 0; q <= k; ++q) osc += space.measure(nb[q].index) * std::abs(f[nb[q].index] - mean);
        osc /= m;
        while (big < nb.size() && within(nb[big].dist, lambda * r)) {
          g2 += space.measure(nb[big].index) * g[nb[big].index] * g[nb[big].index];
          mbig += space.measure(nb[big].index);
          ++big;
        }
        const double rhs = std::sqrt(g2 / mbig);
        if (rhs == 0.0) {
          if (osc > 1e-14 * (1.0 + std::abs(mean))) cell.rejected = true;
          continue;
        }
        const double ratio = osc / (r * rhs);
        if (ratio > cell.ratio) {
          cell.ratio = ratio;
          cell.radius = r;
        }
      }
    }
  }
  PoincareEstimate out;
  for (Index t = 0; t < T; ++t) {
    bool rejected = false;
    for (Index x = 0; x < n; ++x) rejected = rejected || cells[x * T + t].rejected;
    if (rejected) {
      ++out.rejected_pairs;
      continue;
    }
    for (Index x = 0; x < n; ++x) {
      const Cell& c = cells[x * T + t];
      if (c.ratio > out.global) {
        out.global = c.ratio;
        out.argmax = x;
        out.argmax_radius = c.radius;
      }
      if (interior[x]) out.interior = std::max(out.interior, c.ratio);
    }
  }
  return out;
}

HajlaszReport hajlasz_check(const MMSpace& space, const ScalarField& f, const ScalarField& g,
                            const std::vector<std::pair<Index, Index>>& pairs, double lambda, double C) {
  check_field(space, f, "hajlasz_check");
  check_field(space, g, "hajlasz_check");
  ScalarField g2 = g;
  for (auto& v : g2.values) v *= v;
  HajlaszReport out;
  for (const auto& [x, y] : pairs) {
    if (x == y) continue;
    ++out.pairs;
    const double d = space.distance(x, y);
    const double R = 2.0 * lambda * d;
    const double mx = maximal_function(space, g2, x, R);
    const double my = maximal_function(space, g2, y, R);
    const double lhs = std::abs(f[x] - f[y]);
    const double base = d * (std::sqrt(mx) + std::sqrt(my));
    if (base == 0.0) {
      if (lhs > 0.0) {
        out.empirical_c = kInf;
        out.max_ratio = kInf;
        ++out.violations;
      }
      continue;
    }
    out.empirical_c = std::max(out.empirical_c, lhs / base);
    const double ratio = lhs / (C * base);
    out.max_ratio = std::max(out.max_ratio, ratio);
    if (ratio > 1.0 + 1e-12) ++out.violations;
  }
  return out;
}

}  // namespace ksd
