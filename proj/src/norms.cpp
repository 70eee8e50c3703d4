#include "ksdist/norms.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <spdlog/spdlog.h>

namespace ksd {

namespace {

double p_gauge(const Vec& v, double p) {
  const double m = v.cwiseAbs().maxCoeff();
  if (m == 0.0) return 0.0;
  if (std::isinf(p)) return m;
  if (p == 1.0) return v.cwiseAbs().sum();
  if (p == 2.0) return v.norm();
  double s = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += std::pow(std::abs(v[i]) / m, p);
  return m * std::pow(s, 1.0 / p);
}

// Maximizes <w, z> / gauge(z) over directions. 2D: angular scan plus golden
// section; nD: Fibonacci/Gaussian sphere sample plus shrinking pattern search.
double sampled_dual(const Norm& norm, const Vec& w) {
  const int n = norm.dim();
  auto ratio = [&](const Vec& z) { return w.dot(z) / norm.gauge(z); };
  if (w.isZero(0.0)) return 0.0;
  if (n == 1) return std::abs(w[0]) / norm.gauge(Vec::Ones(1));

  if (n == 2) {
    constexpr int kScan = 4096;
    auto at = [&](double t) {
      Vec z(2);
      z << std::cos(t), std::sin(t);
      return ratio(z);
    };
    double best_t = 0.0;
    double best = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < kScan; ++k) {
      const double t = 2.0 * std::numbers::pi * k / kScan;
      const double val = at(t);
      if (val > best) {
        best = val;
        best_t = t;
      }
    }
    const double step = 2.0 * std::numbers::pi / kScan;
    double a = best_t - step;
    double b = best_t + step;
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - g * (b - a);
    double d = a + g * (b - a);
    double fc = at(c);
    double fd = at(d);
    for (int it = 0; it < 80; ++it) {
      if (fc > fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - g * (b - a);
        fc = at(c);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + g * (b - a);
        fd = at(d);
      }
    }
    return std::max({best, fc, fd});
  }

  const int samples = n == 3 ? 20000 : 50000;
  std::vector<Vec> pts;
  pts.reserve(samples);
  if (n == 3) {
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int k = 0; k < samples; ++k) {
      const double y = 1.0 - 2.0 * (k + 0.5) / samples;
      const double rad = std::sqrt(1.0 - y * y);
      Vec z(3);
      z << rad * std::cos(golden * k), y, rad * std::sin(golden * k);
      pts.push_back(z);
    }
  } else {
    std::mt19937_64 rng(0);
    std::normal_distribution<double> normal;
    for (int k = 0; k < samples; ++k) {
      Vec z(n);
      for (int i = 0; i < n; ++i) z[i] = normal(rng);
      pts.push_back(z.normalized());
    }
  }
  Vec best_z = pts.front();
  double best = ratio(best_z);
  for (const auto& z : pts) {
    const double val = ratio(z);
    if (val > best) {
      best = val;
      best_z = z;
    }
  }
  // Pattern search on the sphere.
  double step = 0.05;
  while (step > 1e-10) {
    bool improved = false;
    for (int i = 0; i < n; ++i) {
      for (double sgn : {1.0, -1.0}) {
        Vec z = best_z;
        z[i] += sgn * step;
        z.normalize();
        const double val = ratio(z);
        if (val > best) {
          best = val;
          best_z = z;
          improved = true;
        }
      }
    }
    if (!improved) step *= 0.5;
  }
  return best;
}

}  // namespace

Norm Norm::p_norm(int dim, double p) {
  if (dim < 1) throw ConfigError("norm dimension must be positive");
  if (!(p >= 1.0)) throw ConfigError("p-norm requires p >= 1");
  Norm n;
  n.dim_ = dim;
  n.kind_ = NormKind::p_norm;
  n.p_ = p;
  // p = 1 and p = inf have corners; in 1D every p-norm is |x|.
  n.c1_ = dim == 1 || (p > 1.0 && std::isfinite(p));
  return n;
}

Norm Norm::quadratic(const Mat& Q) {
  if (Q.rows() < 1 || Q.rows() != Q.cols()) throw DimensionError("quadratic norm needs a square matrix");
  if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + Q.cwiseAbs().maxCoeff())) {
    throw ConfigError("quadratic norm matrix is not symmetric");
  }
  Eigen::LLT<Mat> llt(Q);
  if (llt.info() != Eigen::Success) throw ConfigError("quadratic norm matrix is not positive definite");
  Norm n;
  n.dim_ = static_cast<int>(Q.rows());
  n.kind_ = NormKind::quadratic;
  n.Q_ = 0.5 * (Q + Q.transpose());
  n.c1_ = true;
  return n;
}

Norm Norm::tabulated(std::vector<std::pair<double, double>> samples) {
  if (samples.size() < 3) throw ConfigError("tabulated norm needs at least 3 samples");
  for (const auto& [a, r] : samples) {
    if (!(r > 0.0) || !std::isfinite(a)) throw ConfigError("tabulated norm radius must be positive");
  }
  for (auto& s : samples) {
    s.first = std::fmod(s.first, 2.0 * std::numbers::pi);
    if (s.first < 0) s.first += 2.0 * std::numbers::pi;
  }
  std::sort(samples.begin(), samples.end());
  // Half-circle tables are mirrored through the origin.
  if (samples.back().first < std::numbers::pi - 1e-12) {
    const auto half = samples;
    for (const auto& [a, r] : half) samples.emplace_back(a + std::numbers::pi, r);
  }
  Norm n;
  n.dim_ = 2;
  n.kind_ = NormKind::tabulated;
  n.c1_ = false;
  n.samples_ = samples;
  for (const auto& [a, r] : samples) n.vertices_.emplace_back(r * std::cos(a), r * std::sin(a));
  const std::size_t m = n.vertices_.size();
  for (std::size_t k = 0; k < m; ++k) {
    const Eigen::Vector2d& p0 = n.vertices_[k];
    const Eigen::Vector2d& p1 = n.vertices_[(k + 1) % m];
    const Eigen::Vector2d& p2 = n.vertices_[(k + 2) % m];
    const Eigen::Vector2d e0 = p1 - p0;
    const Eigen::Vector2d e1 = p2 - p1;
    if (e0.x() * e1.y() - e0.y() * e1.x() < -1e-12) {
      throw ConfigError("tabulated norm samples are not in convex position");
    }
    Eigen::Matrix2d M;
    M << p0.transpose(), p1.transpose();
    if (std::abs(M.determinant()) < 1e-14) throw ConfigError("tabulated norm has an edge through the origin");
    n.normals_.push_back(M.fullPivLu().solve(Eigen::Vector2d::Ones()));
  }
  return n;
}

double Norm::gauge(const Vec& v) const {
  require_dim(static_cast<Index>(dim_), static_cast<Index>(v.size()), "gauge");
  switch (kind_) {
    case NormKind::p_norm:
      return p_gauge(v, p_);
    case NormKind::quadratic:
      return std::sqrt(std::max(0.0, v.dot(Q_ * v)));
    case NormKind::tabulated: {
      double g = 0.0;
      for (const auto& nk : normals_) g = std::max(g, nk.x() * v[0] + nk.y() * v[1]);
      return g;
    }
  }
  return 0.0;
}

Vec Norm::gradient_fd(const Vec& v) const {
  require_dim(static_cast<Index>(dim_), static_cast<Index>(v.size()), "gauge_gradient");
  const double h = 1e-6 * std::max(1.0, v.norm());
  Vec g(dim_);
  for (int i = 0; i < dim_; ++i) {
    Vec a = v;
    Vec b = v;
    a[i] += h;
    b[i] -= h;
    g[i] = (gauge(a) - gauge(b)) / (2.0 * h);
  }
  return g;
}

Vec Norm::gradient(const Vec& v) const {
  require_dim(static_cast<Index>(dim_), static_cast<Index>(v.size()), "gauge_gradient");
  if (v.isZero(0.0)) throw ConfigError("gauge is not differentiable at the origin");
  if (!c1_ || kind_ == NormKind::tabulated) {
    spdlog::warn("gauge_gradient: norm is not C1, using finite differences");
    return gradient_fd(v);
  }
  if (kind_ == NormKind::quadratic) {
    const Vec Qv = Q_ * v;
    return Qv / std::sqrt(v.dot(Qv));
  }
  const double g = gauge(v);
  Vec out(dim_);
  for (int i = 0; i < dim_; ++i) {
    const double a = std::abs(v[i]) / g;
    out[i] = (v[i] < 0 ? -1.0 : 1.0) * std::pow(a, p_ - 1.0);
  }
  return out;
}

double Norm::dual(const Vec& w) const {
  require_dim(static_cast<Index>(dim_), static_cast<Index>(w.size()), "dual_gauge");
  if (kind_ == NormKind::tabulated) {
    double best = 0.0;
    for (const auto& p : vertices_) best = std::max(best, p.x() * w[0] + p.y() * w[1]);
    return best;
  }
  return std::max(0.0, sampled_dual(*this, w));
}

Line Line::through(const Norm& norm, const Vec& direction) {
  return through(norm, direction, Vec::Zero(norm.dim()));
}

Line Line::through(const Norm& norm, const Vec& direction, const Vec& basepoint) {
  require_dim(static_cast<Index>(norm.dim()), static_cast<Index>(basepoint.size()), "line basepoint");
  const double g = norm.gauge(direction);
  if (g == 0.0) throw ConfigError("line direction must be nonzero");
  return Line{direction / g, basepoint};
}

double busemann(const Norm& norm, const Line& line, const Vec& x, BusemannMode mode, double s_max) {
  require_dim(static_cast<Index>(norm.dim()), static_cast<Index>(x.size()), "busemann");
  if (std::abs(norm.gauge(line.direction) - 1.0) > 1e-9) {
    throw ConfigError("busemann: line direction must have unit gauge");
  }
  const Vec rel = x - line.basepoint;
  if (mode == BusemannMode::closed_form) {
    if (!norm.is_c1()) throw ConfigError("busemann closed form requires a C1 norm");
    return -norm.gradient(line.direction).dot(rel);
  }
  if (s_max <= norm.gauge(rel)) {
    spdlog::warn("busemann: s_max={} is not beyond gauge(x)={}, limit not asymptotic", s_max, norm.gauge(rel));
  }
  return norm.gauge(s_max * line.direction - rel) - s_max;
}

}  // namespace ksd
