#pragma once

#include <utility>
#include <vector>

#include "ksdist/common.hpp"

namespace ksd {

enum class NormKind { p_norm, quadratic, tabulated };

/// A positively homogeneous convex gauge on R^n: the local model of a
/// Minkowski chart. Immutable after construction.
///
/// - p_norm:    (sum |v_i|^p)^(1/p), p >= 1 or p = +inf.
/// - quadratic: sqrt(v^T Q v), Q symmetric positive definite.
/// - tabulated: 2D only. The unit sphere is given by (angle, radius)
///              boundary samples; the gauge is the one of the convex polygon
///              through them, i.e. max_k <n_k, v> over edge normals n_k.
class Norm {
 public:
  static Norm p_norm(int dim, double p);
  static Norm euclidean(int dim) { return p_norm(dim, 2.0); }
  static Norm quadratic(const Mat& Q);
  static Norm tabulated(std::vector<std::pair<double, double>> samples);

  int dim() const { return dim_; }
  NormKind kind() const { return kind_; }
  /// True iff the gauge is C^1 away from the origin.
  bool is_c1() const { return c1_; }

  double p() const { return p_; }
  const Mat& Q() const { return Q_; }
  /// Polygon vertices of a tabulated norm, counter-clockwise.
  const std::vector<Eigen::Vector2d>& vertices() const { return vertices_; }
  const std::vector<std::pair<double, double>>& samples() const { return samples_; }

  double gauge(const Vec& v) const;

  /// Gradient of the gauge at v != 0. Closed form for smooth p-norms and
  /// quadratics; central finite differences (with a warning) otherwise.
  Vec gradient(const Vec& v) const;

  /// Central-difference gradient, step 1e-6 * max(1, |v|).
  Vec gradient_fd(const Vec& v) const;

  /// sup { <w, z> : gauge(z) <= 1 }. Tabulated norms use the exact vertex
  /// maximum; other kinds maximize over a dense sphere sample and polish the
  /// best sample by local ascent.
  double dual(const Vec& w) const;

 private:
  Norm() = default;

  int dim_ = 0;
  NormKind kind_ = NormKind::p_norm;
  bool c1_ = true;
  double p_ = 2.0;
  Mat Q_;
  std::vector<std::pair<double, double>> samples_;
  std::vector<Eigen::Vector2d> vertices_;
  std::vector<Eigen::Vector2d> normals_;
};

/// A line s -> basepoint + s * direction with gauge(direction) = 1.
struct Line {
  Vec direction;
  Vec basepoint;

  /// Normalizes `direction` to unit gauge; basepoint defaults to the origin.
  static Line through(const Norm& norm, const Vec& direction);
  static Line through(const Norm& norm, const Vec& direction, const Vec& basepoint);
};

enum class BusemannMode { limit, closed_form };

/// Busemann function of a line in (R^n, norm).
/// limit:       gauge(basepoint + s_max * v - x) - s_max
/// closed_form: -<grad gauge(v), x - basepoint>  (C^1 norms only)
double busemann(const Norm& norm, const Line& line, const Vec& x, BusemannMode mode,
                double s_max = 1e6);

}  // namespace ksd
