#include "ksdist/intrinsic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <random>

#include <spdlog/spdlog.h>

#include "ksdist/spaces.hpp"

namespace ksd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_point(const MMSpace& space, Index i, const char* what) {
  if (i >= space.size()) throw ConfigError(std::string(what) + ": point index out of range");
}

}  // namespace

ChResult d_ch_solve(const MMSpace& space, Index x, Index y, double radius) {
  check_point(space, x, "d_ch");
  check_point(space, y, "d_ch");
  const Index n = space.size();
  // Constraint graph adjacency: (neighbour, d(i, j)).
  std::vector<std::vector<std::pair<Index, double>>> adj(n);
  if (space.is_graph()) {
    for (const auto& e : space.edges()) {
      adj[e.i].emplace_back(e.j, space.distance(e.i, e.j));
      adj[e.j].emplace_back(e.i, space.distance(e.i, e.j));
    }
  }
  const bool all_pairs = !space.is_graph() && radius == 0.0;
  if (all_pairs || radius > 0.0) {
    for (Index i = 0; i < n; ++i) {
      const Neighborhood nb = all_pairs ? space.neighborhood(i, kInf) : space.neighborhood(i, radius);
      for (const auto& q : nb) {
        if (q.index != i) adj[i].emplace_back(q.index, q.dist);
      }
    }
  }
  std::vector<double> f(n, kInf);
  using Item = std::pair<double, Index>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  f[x] = 0.0;
  heap.emplace(0.0, x);
  while (!heap.empty()) {
    const auto [d, i] = heap.top();
    heap.pop();
    if (d > f[i]) continue;
    for (const auto& [j, w] : adj[i]) {
      if (d + w < f[j]) {
        f[j] = d + w;
        heap.emplace(f[j], j);
      }
    }
  }
  if (!std::isfinite(f[y])) {
    throw NumericalError("d_ch: constraint graph does not connect the endpoints (radius below the graph scale)");
  }
  // Unreachable points carry no constraint linking them to x; clamp them.
  for (double& v : f) v = std::min(v, f[y]);
  ChResult out;
  out.value = f[y];
  out.certified = true;
  for (Index i = 0; i < n && out.certified; ++i) {
    for (const auto& [j, w] : adj[i]) {
      if (std::abs(f[j] - f[i]) > w * (1.0 + 1e-12)) {
        out.certified = false;
        break;
      }
    }
  }
  out.potential = make_field(space, std::move(f));
  return out;
}

double d_ch(const MMSpace& space, Index x, Index y, double radius) { return d_ch_solve(space, x, y, radius).value; }

double default_constraint_scale(const MMSpace& space) {
  const ScaleLadder ladder = default_ladder(space);
  auto centers = sample_interior(space, ladder.scales.front(), 1, 0);
  const Index c = centers.empty() ? 0 : centers.front();
  const auto& row = space.distances_from(c);
  const auto far = static_cast<Index>(std::max_element(row.begin(), row.end()) - row.begin());
  const KSProfile prof = ks_profile(space, distance_field(space, far), c, 2.0, ladder);
  if (!prof.plateau_flag) {
    spdlog::warn("no ks plateau on the default ladder; using its smallest usable scale");
    return prof.scales.back();
  }
  const PlateauOptions opt;
  return prof.scales[prof.plateau.begin + std::min<Index>(opt.window, prof.scales.size()) - 1];
}

Mat empirical_moment(const MMSpace& space, const BallTable& balls) {
  const Mat& X = space.coordinates();
  const auto dim = X.cols();
  Mat A = Mat::Zero(dim, dim);
  const double r2 = balls.radius() * balls.radius();
  for (Index i = 0; i < space.size(); ++i) {
    Mat local = Mat::Zero(dim, dim);
    for (const auto& nb : balls.ball(i)) {
      const Vec z = (X.row(static_cast<Eigen::Index>(nb.index)) - X.row(static_cast<Eigen::Index>(i))).transpose();
      local += space.measure(nb.index) * z * z.transpose();
    }
    A += space.measure(i) * local / (balls.ball_mass(i) * r2);
  }
  return A / space.total_mass();
}

namespace {

// Ball-wise quadratic constraint data: ks_i^2 = sum_j w_ij (f_j - f_i)^2.
// Ball table flattened for the ascent: the centre entry is dropped (it adds
// nothing to ks) and columns are 32-bit to halve the memory traffic.
struct KsSystem {
  std::vector<std::int64_t> row;
  std::vector<std::int32_t> col;
  std::vector<double> w;

  KsSystem(const MMSpace& space, const BallTable& b) {
    const double r2 = b.radius() * b.radius();
    row.reserve(b.size() + 1);
    row.push_back(0);
    col.reserve(b.nonzeros());
    w.reserve(b.nonzeros());
    for (Index i = 0; i < b.size(); ++i) {
      for (const auto& nb : b.ball(i)) {
        if (nb.index == i) continue;
        col.push_back(static_cast<std::int32_t>(nb.index));
        w.push_back(space.measure(nb.index) / (b.ball_mass(i) * r2));
      }
      row.push_back(static_cast<std::int64_t>(col.size()));
    }
  }

  Index size() const { return static_cast<Index>(row.size()) - 1; }

  void ks(const std::vector<double>& f, std::vector<double>& out) const {
    const Index n = size();
    out.resize(n);
    for (Index i = 0; i < n; ++i) {
      const double fi = f[i];
      double q = 0.0;
      for (std::int64_t k = row[i]; k < row[i + 1]; ++k) {
        const double d = f[col[k]] - fi;
        q += w[k] * d * d;
      }
      out[i] = std::sqrt(q);
    }
  }
};

struct Smoothed {
  double value = 0.0;  // beta-log-sum-exp of ks
  double max = 0.0;
};

Smoothed smooth_max(const std::vector<double>& ks, double beta, std::vector<double>* weights) {
  Smoothed s;
  s.max = *std::max_element(ks.begin(), ks.end());
  double z = 0.0;
  for (double v : ks) z += std::exp(beta * (v - s.max));
  s.value = s.max + std::log(z) / beta;
  if (weights) {
    weights->resize(ks.size());
    for (Index i = 0; i < ks.size(); ++i) (*weights)[i] = std::exp(beta * (ks[i] - s.max)) / z;
  }
  return s;
}

struct StartResult {
  double best = 0.0;
  std::vector<double> potential;
  int iterations = 0;
  bool converged = false;
  std::vector<TraceRow> trace;
};

// Objective weights: f_y - f_x, or the difference of the two ball means.
using Objective = std::vector<std::pair<Index, double>>;

double evaluate(const Objective& a, const std::vector<double>& f) {
  double L = 0.0;
  for (const auto& [i, c] : a) L += c * f[i];
  return L;
}

Objective make_objective(const MMSpace& space, const BallTable& balls, Index x, Index y, KsEndpoint mode) {
  if (mode == KsEndpoint::point) return {{y, 1.0}, {x, -1.0}};
  Objective a;
  for (const auto& nb : balls.ball(y)) a.emplace_back(nb.index, space.measure(nb.index) / balls.ball_mass(y));
  for (const auto& nb : balls.ball(x)) a.emplace_back(nb.index, -space.measure(nb.index) / balls.ball_mass(x));
  return a;
}

// Scales f so that max ks = 1 and f_x = 0; returns the resulting objective.
// `ks` must hold the densities of f on entry (they are shift invariant).
double normalize(std::vector<double>& f, std::vector<double>& ks, const Objective& a, Index x) {
  const double fx = f[x];
  for (double& v : f) v -= fx;
  const double m = *std::max_element(ks.begin(), ks.end());
  if (!(m > 0.0)) return 0.0;
  for (double& v : f) v /= m;
  for (double& v : ks) v /= m;
  return evaluate(a, f);
}

StartResult ascend(const KsSystem& sys, std::vector<double> f, const Objective& a, Index x, const KsSolverOptions& opt,
                   int start_id) {
  const Index n = f.size();
  StartResult res;
  std::vector<double> ks;
  std::vector<double> pi;
  std::vector<double> grad(n);
  std::vector<double> trial(n);
  std::vector<double> trial_ks;
  sys.ks(f, ks);
  double objective = normalize(f, ks, a, x);
  res.best = objective;
  res.potential = f;
  if (!(objective > 0.0)) {
    // Potentials that do not separate x from y carry no information.
    res.best = 0.0;
  }
  const double beta_max = opt.beta_max_per_point * static_cast<double>(n);
  const int per_stage = std::max(1, opt.max_iterations / std::max(1, opt.stages));
  bool last_stage_settled = false;
  double step = 1e-2;
  for (int stage = 0; stage < opt.stages; ++stage) {
    const double t = opt.stages == 1 ? 1.0 : static_cast<double>(stage) / (opt.stages - 1);
    const double beta = opt.beta_min * std::pow(beta_max / opt.beta_min, t);
    last_stage_settled = false;
    for (int it = 0; it < per_stage; ++it) {
      ++res.iterations;
      // J = L / S, L the linear objective, S = smoothed max of ks.
      const Smoothed s = smooth_max(ks, beta, &pi);
      const double L = evaluate(a, f);
      const double J = L / s.value;
      std::fill(grad.begin(), grad.end(), 0.0);
      for (Index i = 0; i < n; ++i) {
        if (ks[i] <= 0.0 || pi[i] < 1e-300) continue;
        const double c = -L / (s.value * s.value) * pi[i] / ks[i];
        const double fi = f[i];
        double gi = 0.0;
        for (std::int64_t k = sys.row[i]; k < sys.row[i + 1]; ++k) {
          const double d = sys.w[k] * (f[sys.col[k]] - fi) * c;
          grad[sys.col[k]] += d;
          gi -= d;
        }
        grad[i] += gi;
      }
      for (const auto& [i, c] : a) grad[i] += c / s.value;
      double gnorm = 0.0;
      double fnorm = 0.0;
      for (Index i = 0; i < n; ++i) {
        gnorm += grad[i] * grad[i];
        fnorm += f[i] * f[i];
      }
      gnorm = std::sqrt(gnorm);
      fnorm = std::sqrt(fnorm);
      if (!(gnorm > 0.0) || !(fnorm > 0.0)) {
        last_stage_settled = true;
        break;
      }
      bool accepted = false;
      double J_new = J;
      while (step > 1e-14) {
        const double scale = step * fnorm / gnorm;
        for (Index i = 0; i < n; ++i) trial[i] = f[i] + scale * grad[i];
        sys.ks(trial, trial_ks);
        const Smoothed st = smooth_max(trial_ks, beta, nullptr);
        J_new = evaluate(a, trial) / st.value;
        if (J_new >= J + 1e-4 * step * fnorm * gnorm) {
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) {
        last_stage_settled = true;
        step = 1e-2;
        break;
      }
      f.swap(trial);
      ks.swap(trial_ks);
      objective = normalize(f, ks, a, x);
      if (objective > res.best) {
        res.best = objective;
        res.potential = f;
      }
      if (opt.trace) {
        TraceRow row;
        row.start = start_id;
        row.iteration = res.iterations;
        row.beta = beta;
        row.objective = objective;
        row.best_objective = res.best;
        row.max_constraint = *std::max_element(ks.begin(), ks.end());
        res.trace.push_back(row);
      }
      step = std::min(step * 2.0, 0.5);
      if (J_new - J <= opt.tolerance * std::abs(J)) {
        last_stage_settled = true;
        break;
      }
    }
  }
  res.converged = last_stage_settled;
  return res;
}

}  // namespace

KsSolveResult d_ks_solve(const MMSpace& space, const BallTable& balls, Index x, Index y,
                         const KsSolverOptions& opt) {
  check_point(space, x, "d_ks");
  check_point(space, y, "d_ks");
  if (balls.size() != space.size()) throw DimensionError("ball table does not match the space");
  if (space.pitch() > 0.0 && balls.radius() < 2.0 * space.pitch() * (1.0 - 1e-12)) {
    throw ConfigError("d_ks constraint scale lies below 2 x pitch");
  }
  KsSolveResult out;
  out.r = balls.radius();
  out.start_values.assign(3, std::numeric_limits<double>::quiet_NaN());
  if (x == y) {
    out.converged = true;
    out.potential = constant_field(space, 0.0);
    return out;
  }
  const Index n = space.size();
  const KsSystem sys(space, balls);
  const Objective objective = make_objective(space, balls, x, y, opt.endpoint);
  const auto& dx = space.distances_from(x);
  std::vector<std::vector<double>> starts(3);
  if (opt.ramp_start || opt.random_start) {
    starts[0].resize(n);
    for (Index i = 0; i < n; ++i) starts[0][i] = std::min(dx[i], dx[y]);
  }
  if (opt.warm_start && space.has_coordinates()) {
    const Mat A = opt.warm_moment ? *opt.warm_moment : empirical_moment(space, balls);
    const Vec delta = space.point(y) - space.point(x);
    const Vec v = A.llt().solve(delta);
    starts[1].resize(n);
    const Vec px = space.point(x);
    const double top = v.dot(delta);
    // Clipping to the level range [0, f_y] can only lower every ks_i.
    for (Index i = 0; i < n; ++i) starts[1][i] = std::clamp(v.dot(space.point(i) - px), 0.0, top);
  }
  if (opt.random_start) {
    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> noise(-0.05, 0.05);
    starts[2] = starts[0];
    for (double& v : starts[2]) v += noise(rng) * dx[y];
  }
  if (!opt.ramp_start) starts[0].clear();

  std::vector<StartResult> results(3);
#pragma omp parallel for schedule(static) if (opt.exec == Exec::parallel)
  for (int s = 0; s < 3; ++s) {
    if (!starts[s].empty()) results[s] = ascend(sys, starts[s], objective, x, opt, s);
  }
  for (int s = 0; s < 3; ++s) {
    if (starts[s].empty()) continue;
    out.start_values[s] = results[s].best;
    out.iterations += results[s].iterations;
    if (out.best_start < 0 || results[s].best > out.value) {
      out.value = results[s].best;
      out.best_start = s;
    }
    out.trace.insert(out.trace.end(), results[s].trace.begin(), results[s].trace.end());
  }
  if (out.best_start < 0) throw ConfigError("d_ks: every start is disabled");
  out.converged = results[out.best_start].converged;
  out.potential = make_field(space, std::move(results[out.best_start].potential));
  if (!out.converged) spdlog::warn("d_ks({}, {}): iteration budget exhausted; returning the best lower bound", x, y);
  return out;
}

KsSolveResult d_ks_solve(const MMSpace& space, Index x, Index y, const KsSolverOptions& opt) {
  const double r = opt.r > 0.0 ? opt.r : default_constraint_scale(space);
  const BallTable balls(space, r, opt.exec);
  return d_ks_solve(space, balls, x, y, opt);
}

double d_ks(const MMSpace& space, Index x, Index y, double r) {
  KsSolverOptions opt;
  opt.r = r;
  return d_ks_solve(space, x, y, opt).value;
}

MMSpace riemannized_space(const MMSpace& grid, const std::vector<MomentMatrix>& field) {
  if (!grid.is_graph()) throw ConfigError("riemannized_space needs a graph space");
  if (!grid.has_coordinates()) throw ConfigError("riemannized_space needs coordinates");
  if (field.size() != 1 && field.size() != grid.size()) {
    throw DimensionError("moment field needs one entry per point or a single constant entry");
  }
  const auto dim = grid.coordinates().cols();
  std::vector<Mat> Q;
  Q.reserve(field.size());
  for (const auto& M : field) {
    require_dim(static_cast<Index>(dim), static_cast<Index>(M.A.rows()), "moment field");
    Eigen::LLT<Mat> llt(M.A);
    if (llt.info() != Eigen::Success) throw NumericalError("moment field entry is not SPD");
    Q.push_back(llt.solve(Mat::Identity(dim, dim)));
  }
  auto Qof = [&](Index i) -> const Mat& { return Q.size() == 1 ? Q.front() : Q[i]; };
  return grid.reweighted([&](Index i, Index j) {
    const Vec d = grid.point(j) - grid.point(i);
    const Mat Qbar = 0.5 * (Qof(i) + Qof(j));
    return std::sqrt(d.dot(Qbar * d));
  });
}

double d_riemannized(const MMSpace& grid, const std::vector<MomentMatrix>& field, Index x, Index y) {
  return riemannized_space(grid, field).distance(x, y);
}

EquivalenceReport equivalence_report(const DistanceFn& distA, const DistanceFn& distB,
                                     const std::vector<std::pair<Index, Index>>& pairs) {
  if (pairs.empty()) throw ConfigError("equivalence_report needs at least one pair");
  EquivalenceReport out;
  out.c1 = kInf;
  out.c2 = -kInf;
  for (const auto& pr : pairs) {
    if (pr.first == pr.second) throw ConfigError("equivalence_report pairs must be distinct points");
    const double a = distA(pr.first, pr.second);
    const double b = distB(pr.first, pr.second);
    double ratio;
    if (a == 0.0) {
      ratio = b == 0.0 ? 1.0 : kInf;
    } else {
      ratio = b / a;
    }
    if (ratio == 0.0 || std::isinf(ratio)) ++out.degenerate;
    ++out.pairs;
    if (ratio < out.c1 || (ratio == out.c1 && pr < out.argmin)) {
      out.c1 = ratio;
      out.argmin = pr;
    }
    if (ratio > out.c2 || (ratio == out.c2 && pr < out.argmax)) {
      out.c2 = ratio;
      out.argmax = pr;
    }
  }
  return out;
}

std::vector<std::pair<Index, Index>> sample_pairs(const MMSpace& space, Index count, double min_separation,
                                                  std::uint64_t seed, const std::vector<Index>& candidates) {
  std::vector<Index> pool = candidates;
  if (pool.empty()) {
    pool.resize(space.size());
    std::iota(pool.begin(), pool.end(), Index{0});
  }
  if (pool.size() < 2) throw ConfigError("sample_pairs needs at least two candidate points");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> pick(0, pool.size() - 1);
  std::vector<std::pair<Index, Index>> out;
  const Index max_tries = 1000 * count + 1000;
  for (Index t = 0; t < max_tries && out.size() < count; ++t) {
    Index a = pool[pick(rng)];
    Index b = pool[pick(rng)];
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    if (space.distance(a, b) < min_separation) continue;
    if (std::find(out.begin(), out.end(), std::make_pair(a, b)) != out.end()) continue;
    out.emplace_back(a, b);
  }
  if (out.size() < count) throw ConfigError("sample_pairs: not enough pairs at the requested separation");
  return out;
}

DistanceKsReport ks_of_distance_check(const MMSpace& space, const ScalarField& rho, const std::vector<Index>& centers,
                                      const std::vector<Index>& points, const ScaleLadder& ladder, double tolerance,
                                      const PlateauOptions& opt) {
  check_field(space, rho, "ks_of_distance_check");
  DistanceKsReport out;
  for (const auto& e : space.edges()) {
    out.global_lip = std::max(out.global_lip, std::abs(rho[e.i] - rho[e.j]) / e.w);
  }
  for (Index z : centers) {
    const KSProfile p = ks_profile(space, rho, z, 2.0, ladder, opt);
    out.ks_at_center = std::max(out.ks_at_center, p.limit_estimate);
  }
  const double top = ladder.scales.front();
  for (Index x : points) {
    bool near = false;
    for (Index z : centers) near = near || within(space.distance(x, z), top);
    if (near) {
      ++out.near_center;
      continue;
    }
    const KSProfile p = ks_profile(space, rho, x, 2.0, ladder, opt);
    // Without a plateau the finest-window mean is still checked.
    if (!p.plateau_flag) ++out.no_plateau;
    ++out.checked;
    if (p.limit_estimate > out.max_ks) {
      out.max_ks = p.limit_estimate;
      out.worst_point = x;
    }
  }
  out.holds = out.checked > 0 && out.max_ks <= 1.0 + tolerance;
  return out;
}

LipKsReport lip_dks_equals_ks_check(const MMSpace& space, const MMSpace& dks_space, const ScalarField& f,
                                    const std::vector<Index>& points, const ScaleLadder& ladder,
                                    const ScaleLadder& dks_ladder, const PlateauOptions& opt) {
  check_field(space, f, "lip_dks_equals_ks_check");
  if (dks_space.size() != space.size()) throw DimensionError("d_KS space must have the same points");
  const ScalarField g = make_field(dks_space, f.values);
  LipKsReport out;
  for (Index x : points) {
    const KSProfile prof = ks_profile(space, f, x, 2.0, ladder, opt);
    const LipEstimate lip = lip_pointwise(dks_space, g, x, dks_ladder, opt);
    const double scale = std::max(std::abs(prof.limit_estimate), std::abs(lip.value));
    if (scale < 1e-12) {
      ++out.degenerate;
      continue;
    }
    if (!prof.plateau_flag) {
      ++out.no_plateau;
      continue;
    }
    ++out.used;
    out.rows.push_back(LipKsRow{x, lip.value, prof.limit_estimate});
    out.max_rel_dev = std::max(out.max_rel_dev, std::abs(lip.value - prof.limit_estimate) / prof.limit_estimate);
  }
  return out;
}

}  // namespace ksd
