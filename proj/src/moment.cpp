#include "ksdist/moment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <spdlog/spdlog.h>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ksd {

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

namespace {

// Raw (unnormalized) integrals over the unit ball.
struct Accum {
  double vol = 0.0;
  double unresolved_vol = 0.0;
  Mat S;
  explicit Accum(int n = 0) : S(Mat::Zero(n, n)) {}
  void add(const Accum& o) {
    vol += o.vol;
    unresolved_vol += o.unresolved_vol;
    S += o.S;
  }
};

struct BallBox {
  Vec half;         // box is [-half, half]
  double lip = 0.0; // Lipschitz constant of the gauge w.r.t. Euclidean length
  double rmax2 = 0.0;
};

BallBox bounding_box(const Norm& norm) {
  const int n = norm.dim();
  BallBox box;
  box.half.resize(n);
  for (int i = 0; i < n; ++i) {
    Vec e = Vec::Zero(n);
    e[i] = 1.0;
    box.half[i] = std::max(norm.dual(e), norm.dual(-e)) * (1.0 + 1e-6) + 1e-12;
  }
  // sup of the gauge on the Euclidean sphere, sampled.
  double lip = 0.0;
  std::mt19937_64 rng(12345);
  std::normal_distribution<double> normal;
  for (int k = 0; k < 4096; ++k) {
    Vec u(n);
    for (int i = 0; i < n; ++i) u[i] = normal(rng);
    lip = std::max(lip, norm.gauge(u.normalized()));
  }
  for (int i = 0; i < n; ++i) {
    Vec e = Vec::Zero(n);
    e[i] = 1.0;
    lip = std::max(lip, norm.gauge(e));
  }
  box.lip = 1.1 * lip;
  box.rmax2 = box.half.squaredNorm();
  return box;
}

// Exact integral of z z^T over an axis-aligned cell with center c and widths h.
void add_full_cell(Accum& acc, const Vec& c, const Vec& h) {
  const double v = h.prod();
  acc.vol += v;
  acc.S.noalias() += v * c * c.transpose();
  for (Eigen::Index i = 0; i < c.size(); ++i) acc.S(i, i) += v * h[i] * h[i] / 12.0;
}

bool corners_inside(const Norm& norm, const Vec& c, const Vec& h, int& inside_count) {
  const int n = static_cast<int>(c.size());
  inside_count = 0;
  for (int mask = 0; mask < (1 << n); ++mask) {
    Vec z = c;
    for (int i = 0; i < n; ++i) z[i] += ((mask >> i) & 1 ? 0.5 : -0.5) * h[i];
    if (norm.gauge(z) <= 1.0) ++inside_count;
  }
  return inside_count == (1 << n);
}

// Recursive treatment of a cell known to straddle (or possibly touch) the boundary.
void refine_cell(const Norm& norm, const BallBox& box, const Vec& c, const Vec& h, int depth, Accum& acc) {
  const int n = static_cast<int>(c.size());
  int inside = 0;
  if (corners_inside(norm, c, h, inside)) {
    add_full_cell(acc, c, h);
    return;
  }
  const double gc = norm.gauge(c);
  if (inside == 0 && gc - 1.0 > box.lip * 0.5 * h.norm()) return;  // provably outside
  if (depth == 0) {
    if (gc <= 1.0) {
      const double v = h.prod();
      acc.vol += v;
      acc.S.noalias() += v * c * c.transpose();
    }
    acc.unresolved_vol += h.prod();
    return;
  }
  const Vec hh = 0.5 * h;
  for (int mask = 0; mask < (1 << n); ++mask) {
    Vec cc = c;
    for (int i = 0; i < n; ++i) cc[i] += ((mask >> i) & 1 ? 0.25 : -0.25) * h[i];
    refine_cell(norm, box, cc, hh, depth - 1, acc);
  }
}

Accum grid_integrate(const Norm& norm, const BallBox& box, int res, int refine, Exec exec) {
  const int n = norm.dim();
  const Vec h = 2.0 * box.half / res;
  // Gauge at grid nodes, shared by neighbouring cells.
  const Index nodes_per_axis = static_cast<Index>(res) + 1;
  Index node_count = 1;
  for (int i = 0; i < n; ++i) node_count *= nodes_per_axis;
  std::vector<char> node_inside(node_count);
  auto node_coord = [&](Index flat) {
    Vec z(n);
    for (int i = 0; i < n; ++i) {
      z[i] = -box.half[i] + h[i] * static_cast<double>(flat % nodes_per_axis);
      flat /= nodes_per_axis;
    }
    return z;
  };
  const auto nn = static_cast<std::int64_t>(node_count);
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
  for (std::int64_t k = 0; k < nn; ++k) {
    node_inside[static_cast<Index>(k)] = norm.gauge(node_coord(static_cast<Index>(k))) <= 1.0;
  }

  // Cells are grouped by their last-axis index; one partial per group.
  Index cells_per_slab = 1;
  for (int i = 0; i + 1 < n; ++i) cells_per_slab *= static_cast<Index>(res);
  std::vector<Accum> partial(static_cast<Index>(res), Accum(n));
#pragma omp parallel for schedule(dynamic) if (exec == Exec::parallel)
  for (int slab = 0; slab < res; ++slab) {
    Accum& acc = partial[static_cast<Index>(slab)];
    std::vector<Index> idx(n);
    for (Index q = 0; q < cells_per_slab; ++q) {
      Index rem = q;
      for (int i = 0; i + 1 < n; ++i) {
        idx[i] = rem % static_cast<Index>(res);
        rem /= static_cast<Index>(res);
      }
      idx[n - 1] = static_cast<Index>(slab);
      Vec c(n);
      for (int i = 0; i < n; ++i) c[i] = -box.half[i] + h[i] * (static_cast<double>(idx[i]) + 0.5);
      int inside = 0;
      for (int mask = 0; mask < (1 << n); ++mask) {
        Index flat = 0;
        Index stride = 1;
        for (int i = 0; i < n; ++i) {
          flat += (idx[i] + ((mask >> i) & 1)) * stride;
          stride *= nodes_per_axis;
        }
        inside += node_inside[flat];
      }
      if (inside == (1 << n)) {
        add_full_cell(acc, c, h);
      } else if (inside > 0 || norm.gauge(c) - 1.0 <= box.lip * 0.5 * h.norm()) {
        refine_cell(norm, box, c, h, refine, acc);
      }
    }
  }
  Accum total(n);
  for (const auto& p : partial) total.add(p);
  return total;
}

struct QuadResult {
  double vol = 0.0;
  double vol_err = 0.0;
  Mat A;
  double A_err = 0.0;
  std::int64_t samples = 0;
};

QuadResult integrate(const Norm& norm, const Quadrature& quad, Exec exec, bool richardson) {
  const int n = norm.dim();
  QuadResult out;
  if (n == 1) {
    // The unit ball is [-a, b]; integrate exactly.
    const double b = 1.0 / norm.gauge(Vec::Ones(1));
    const double a = 1.0 / norm.gauge(-Vec::Ones(1));
    out.vol = a + b;
    out.A = Mat::Constant(1, 1, (a * a * a + b * b * b) / (3.0 * out.vol));
    out.samples = 1;
    return out;
  }
  const BallBox box = bounding_box(norm);
  if (const auto* g = std::get_if<GridQuadrature>(&quad)) {
    if (g->resolution < 4) throw ConfigError("grid quadrature resolution must be at least 4");
    const Accum acc = grid_integrate(norm, box, g->resolution, g->refine, exec);
    if (!(acc.vol > 0.0)) throw NumericalError("quadrature found an empty unit ball");
    out.vol = acc.vol;
    out.vol_err = acc.unresolved_vol;
    out.A = acc.S / acc.vol;
    out.A_err = (acc.unresolved_vol * box.rmax2 + out.A.cwiseAbs().maxCoeff() * acc.unresolved_vol) / acc.vol;
    out.samples = 1;
    for (int i = 0; i < n; ++i) out.samples *= g->resolution;
    if (richardson && g->resolution >= 8) {
      const Accum coarse = grid_integrate(norm, box, g->resolution / 2, g->refine, exec);
      const Mat Ac = coarse.S / coarse.vol;
      out.A_err = std::max(out.A_err, (Ac - out.A).cwiseAbs().maxCoeff());
      out.vol_err = std::max(out.vol_err, std::abs(coarse.vol - acc.vol));
    }
    return out;
  }
  const auto& mc = std::get<MonteCarloQuadrature>(quad);
  if (mc.samples < 1000) throw ConfigError("Monte Carlo quadrature needs at least 1000 samples");
  constexpr std::int64_t kChunk = 1 << 16;
  const std::int64_t chunks = (mc.samples + kChunk - 1) / kChunk;
  std::vector<std::int64_t> hits(static_cast<Index>(chunks), 0);
  std::vector<Mat> sums(static_cast<Index>(chunks), Mat::Zero(n, n));
#pragma omp parallel for schedule(dynamic) if (exec == Exec::parallel)
  for (std::int64_t c = 0; c < chunks; ++c) {
    std::seed_seq seq{static_cast<std::uint64_t>(mc.seed), static_cast<std::uint64_t>(c)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    const std::int64_t count = std::min(kChunk, mc.samples - c * kChunk);
    Vec z(n);
    for (std::int64_t s = 0; s < count; ++s) {
      for (int i = 0; i < n; ++i) z[i] = unif(rng) * box.half[i];
      if (norm.gauge(z) <= 1.0) {
        ++hits[static_cast<Index>(c)];
        sums[static_cast<Index>(c)].noalias() += z * z.transpose();
      }
    }
  }
  std::int64_t total_hits = 0;
  Mat S = Mat::Zero(n, n);
  for (std::int64_t c = 0; c < chunks; ++c) {
    total_hits += hits[static_cast<Index>(c)];
    S += sums[static_cast<Index>(c)];
  }
  if (total_hits == 0) throw NumericalError("Monte Carlo quadrature found an empty unit ball");
  const double box_vol = (2.0 * box.half).prod();
  const double p = static_cast<double>(total_hits) / static_cast<double>(mc.samples);
  out.vol = box_vol * p;
  out.vol_err = 3.0 * box_vol * std::sqrt(p * (1.0 - p) / static_cast<double>(mc.samples));
  out.A = S / static_cast<double>(total_hits);
  out.A_err = 3.0 * box.rmax2 / std::sqrt(static_cast<double>(total_hits));
  out.samples = mc.samples;
  return out;
}

}  // namespace

Quadrature default_quadrature(int dim) {
  if (dim <= 2) return GridQuadrature{512, 3};
  if (dim == 3) return GridQuadrature{96, 2};
  return MonteCarloQuadrature{1'000'000, 0};
}

VolumeEstimate unit_ball_volume(const Norm& norm, const Quadrature& quad, Exec exec) {
  const QuadResult r = integrate(norm, quad, exec, false);
  return {r.vol, r.vol_err};
}

MomentMatrix moment_from_matrix(const Mat& A, double vol) {
  if (A.rows() != A.cols() || A.rows() == 0) throw DimensionError("moment matrix must be square");
  MomentMatrix M;
  M.dim = static_cast<int>(A.rows());
  M.A = 0.5 * (A + A.transpose());
  M.vol = vol;
  M.c = vol > 0.0 ? 1.0 / vol : 0.0;
  return M;
}

MomentMatrix moment_matrix(const Norm& norm, const Quadrature& quad, Exec exec) {
  const bool richardson = std::holds_alternative<GridQuadrature>(quad) && norm.dim() <= 3;
  const QuadResult r = integrate(norm, quad, exec, richardson);
  MomentMatrix M;
  M.dim = norm.dim();
  // Symmetric by construction: copy the lower triangle over the upper.
  M.A = r.A.selfadjointView<Eigen::Lower>();
  M.vol = r.vol;
  M.c = 1.0 / r.vol;
  M.quadrature_error = r.A_err;
  M.sample_count = r.samples;
  Eigen::SelfAdjointEigenSolver<Mat> eig(M.A, Eigen::EigenvaluesOnly);
  if (!(eig.eigenvalues().minCoeff() > 0.0)) {
    throw NumericalError("moment matrix is not positive definite; quadrature resolution too low");
  }
  if (!norm.is_c1()) spdlog::debug("moment_matrix: norm is not C1");
  return M;
}

MomentMatrix moment_matrix(const Norm& norm) { return moment_matrix(norm, default_quadrature(norm.dim())); }

double ks_of_vector(const MomentMatrix& M, const Vec& v) {
  require_dim(static_cast<Index>(M.dim), static_cast<Index>(v.size()), "ks_of_vector");
  return std::sqrt(std::max(0.0, v.dot(M.A * v)));
}

double dual_ks(const MomentMatrix& M, const Vec& z) {
  require_dim(static_cast<Index>(M.dim), static_cast<Index>(z.size()), "dual_ks");
  Eigen::LLT<Mat> llt(M.A);
  if (llt.info() != Eigen::Success) throw NumericalError("dual_ks: moment matrix is numerically singular");
  return std::sqrt(std::max(0.0, z.dot(llt.solve(z))));
}

Norm riemannize(const MomentMatrix& M) {
  Eigen::LLT<Mat> llt(M.A);
  if (llt.info() != Eigen::Success) throw NumericalError("riemannize: moment matrix is numerically singular");
  Mat Q = llt.solve(Mat::Identity(M.dim, M.dim));
  return Norm::quadratic(0.5 * (Q + Q.transpose()));
}

Norm riemannize(const Norm& norm, const Quadrature& quad) {
  if (!norm.is_c1()) spdlog::warn("riemannize: input norm is not C1");
  return riemannize(moment_matrix(norm, quad));
}

DualityCheck duality_check(const MomentMatrix& M, const Vec& v, int sphere_samples, std::uint64_t seed) {
  require_dim(static_cast<Index>(M.dim), static_cast<Index>(v.size()), "duality_check");
  if (sphere_samples < 1000) throw ConfigError("duality_check needs at least 1000 sphere samples");
  DualityCheck out;
  out.rhs = ks_of_vector(M, v);
  if (v.isZero(0.0)) return out;
  Eigen::LLT<Mat> llt(M.A);
  if (llt.info() != Eigen::Success) throw NumericalError("duality_check: moment matrix is numerically singular");
  const int n = M.dim;
  auto term = [&](const Vec& z) { return std::abs(v.dot(z)) / std::sqrt(z.dot(llt.solve(z))); };
  double best = 0.0;
  if (n == 1) {
    best = term(Vec::Ones(1));
  } else if (n == 2) {
    for (int k = 0; k < sphere_samples; ++k) {
      const double t = std::numbers::pi * k / sphere_samples;  // |<v,z>| is even in z
      Vec z(2);
      z << std::cos(t), std::sin(t);
      best = std::max(best, term(z));
    }
  } else {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    Vec z(n);
    for (int k = 0; k < sphere_samples; ++k) {
      for (int i = 0; i < n; ++i) z[i] = normal(rng);
      best = std::max(best, term(z.normalized()));
    }
  }
  out.lhs = best;
  out.rel_err = std::abs(out.lhs - out.rhs) / out.rhs;
  return out;
}

}  // namespace ksd
