#include "ksdist/ks_energy.hpp"

#include <algorithm>
#include <cmath>

#include <spdlog/spdlog.h>

namespace ksd {

namespace {

double pow_abs(double d, double p) {
  const double a = std::abs(d);
  return p == 2.0 ? a * a : std::pow(a, p);
}

void check_exponent(double p) {
  if (!(p > 1.0) || !std::isfinite(p)) throw ConfigError("Korevaar-Schoen exponent must satisfy p > 1");
}

// Mean of |f(y) - f(x)|^p over a ball prefix, divided by r^p, then the p-th root.
double density_from(const MMSpace& space, const ScalarField& f, Index x, std::span<const Neighbor> ball, double p,
                    double r) {
  double num = 0.0;
  double den = 0.0;
  for (const auto& nb : ball) {
    const double m = space.measure(nb.index);
    num += m * pow_abs(f[nb.index] - f[x], p);
    den += m;
  }
  const double mean = num / den / std::pow(r, p);
  return p == 2.0 ? std::sqrt(mean) : std::pow(mean, 1.0 / p);
}

ScaleLadder usable_ladder(const MMSpace& space, const ScaleLadder& ladder, Index& truncated) {
  if (ladder.scales.empty()) throw ConfigError("scale ladder is empty");
  for (Index k = 1; k < ladder.scales.size(); ++k) {
    if (!(ladder.scales[k] < ladder.scales[k - 1])) throw ConfigError("scale ladder must be strictly decreasing");
  }
  if (!(ladder.scales.back() > 0.0)) throw ConfigError("scale ladder radii must be positive");
  ScaleLadder out;
  const double floor = 2.0 * space.pitch();
  truncated = 0;
  for (double r : ladder.scales) {
    if (r < floor * (1.0 - 1e-12)) {
      ++truncated;
    } else {
      out.scales.push_back(r);
    }
  }
  if (truncated > 0) {
    spdlog::warn("scale ladder reaches below 2 x pitch ({}); dropped {} scale(s)", floor, truncated);
  }
  if (out.scales.empty()) throw ConfigError("no ladder scale lies above 2 x pitch");
  return out;
}

Index prefix_length(const Neighborhood& nb, double r) {
  Index k = 0;
  while (k < nb.size() && within(nb[k].dist, r)) ++k;
  return k;
}

}  // namespace

BallTable::BallTable(const MMSpace& space, double r, Exec exec) : r_(r) {
  if (!(r > 0.0)) throw ConfigError("ball radius must be positive");
  const Index n = space.size();
  std::vector<Neighborhood> balls(n);
  const auto nn = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic) if (exec == Exec::parallel)
  for (std::int64_t i = 0; i < nn; ++i) balls[static_cast<Index>(i)] = space.neighborhood(static_cast<Index>(i), r);
  offset_.assign(n + 1, 0);
  mass_.assign(n, 0.0);
  for (Index i = 0; i < n; ++i) offset_[i + 1] = offset_[i] + balls[i].size();
  entries_.reserve(offset_[n]);
  for (Index i = 0; i < n; ++i) {
    for (const auto& nb : balls[i]) {
      entries_.push_back(nb);
      mass_[i] += space.measure(nb.index);
    }
  }
}

double ks_density(const MMSpace& space, const ScalarField& f, Index x, double p, double r) {
  check_field(space, f, "ks_density");
  check_exponent(p);
  if (!(r > 0.0)) throw ConfigError("ks_density radius must be positive");
  const Neighborhood nb = space.neighborhood(x, r);
  return density_from(space, f, x, nb, p, r);
}

double ks_density(const MMSpace& space, const BallTable& balls, const ScalarField& f, Index x, double p) {
  check_field(space, f, "ks_density");
  check_exponent(p);
  return density_from(space, f, x, balls.ball(x), p, balls.radius());
}

std::vector<double> ks_densities(const MMSpace& space, const BallTable& balls, const ScalarField& f, double p,
                                 Exec exec) {
  check_field(space, f, "ks_densities");
  check_exponent(p);
  if (balls.size() != space.size()) throw DimensionError("ball table does not match the space");
  std::vector<double> out(space.size());
  const auto nn = static_cast<std::int64_t>(space.size());
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
  for (std::int64_t i = 0; i < nn; ++i) {
    const auto x = static_cast<Index>(i);
    out[x] = density_from(space, f, x, balls.ball(x), p, balls.radius());
  }
  return out;
}

EnergyReport ks_energy_at_scale(const MMSpace& space, const BallTable& balls, const ScalarField& f, double p,
                                Exec exec) {
  const std::vector<double> ks = ks_densities(space, balls, f, p, exec);
  EnergyReport out;
  out.p = p;
  out.r = balls.radius();
  for (Index i = 0; i < ks.size(); ++i) out.total += space.measure(i) * pow_abs(ks[i], p);
  return out;
}

EnergyReport ks_energy_at_scale(const MMSpace& space, const ScalarField& f, double p, double r, Exec exec) {
  const BallTable balls(space, r, exec);
  return ks_energy_at_scale(space, balls, f, p, exec);
}

EnergyReport parallelogram_defect(const MMSpace& space, const BallTable& balls, const ScalarField& f,
                                  const ScalarField& g, Exec exec) {
  const double kf = ks_energy_at_scale(space, balls, f, 2.0, exec).total;
  const double kg = ks_energy_at_scale(space, balls, g, 2.0, exec).total;
  const double kp = ks_energy_at_scale(space, balls, f + g, 2.0, exec).total;
  const double km = ks_energy_at_scale(space, balls, f - g, 2.0, exec).total;
  EnergyReport out;
  out.p = 2.0;
  out.r = balls.radius();
  out.total = kf + kg;
  out.parallelogram_defect = kp + km - 2.0 * kf - 2.0 * kg;
  return out;
}

EnergyReport parallelogram_defect(const MMSpace& space, const ScalarField& f, const ScalarField& g, double r,
                                  Exec exec) {
  const BallTable balls(space, r, exec);
  return parallelogram_defect(space, balls, f, g, exec);
}

ScaleLadder geometric_ladder(double top, double bottom, double ratio) {
  if (!(top > 0.0) || !(bottom > 0.0) || !(ratio > 0.0 && ratio < 1.0)) {
    throw ConfigError("geometric ladder needs top, bottom > 0 and ratio in (0, 1)");
  }
  ScaleLadder out;
  for (double r = top; r >= bottom * (1.0 - 1e-9); r *= ratio) out.scales.push_back(r);
  if (out.scales.empty()) throw ConfigError("geometric ladder is empty (top < bottom)");
  return out;
}

ScaleLadder default_ladder(const MMSpace& space) {
  return geometric_ladder(space.diameter() / 4.0, 3.0 * space.pitch());
}

Plateau find_plateau(std::span<const double> values, const PlateauOptions& opt) {
  Plateau out;
  if (values.empty()) return out;
  const Index w = std::min<Index>(std::max<Index>(opt.window, 1), values.size());
  auto window_at = [&](Index begin) {
    Plateau p;
    p.begin = begin;
    p.min = *std::min_element(values.begin() + static_cast<std::ptrdiff_t>(begin),
                              values.begin() + static_cast<std::ptrdiff_t>(begin + w));
    p.max = *std::max_element(values.begin() + static_cast<std::ptrdiff_t>(begin),
                              values.begin() + static_cast<std::ptrdiff_t>(begin + w));
    double sum = 0.0;
    for (Index k = begin; k < begin + w; ++k) sum += values[k];
    p.estimate = sum / static_cast<double>(w);
    const double scale = std::max(std::abs(p.max), std::abs(p.min));
    p.spread = scale < 1e-300 ? 0.0 : (p.max - p.min) / std::abs(p.estimate);
    p.flag = scale < 1e-300 || p.spread < opt.tolerance;
    return p;
  };
  for (Index begin = values.size() - w + 1; begin-- > 0;) {
    Plateau p = window_at(begin);
    if (p.flag) return p;
  }
  return window_at(values.size() - w);
}

KSProfile ks_profile(const MMSpace& space, const ScalarField& f, Index x, double p, const ScaleLadder& ladder,
                     const PlateauOptions& opt) {
  check_field(space, f, "ks_profile");
  check_exponent(p);
  KSProfile out;
  out.center = x;
  const ScaleLadder usable = usable_ladder(space, ladder, out.truncated);
  const Neighborhood nb = space.neighborhood(x, usable.scales.front());
  for (double r : usable.scales) {
    const Index k = prefix_length(nb, r);
    out.scales.push_back(r);
    out.values.push_back(density_from(space, f, x, std::span(nb.data(), k), p, r));
  }
  out.plateau = find_plateau(out.values, opt);
  out.plateau_flag = out.plateau.flag;
  out.limit_estimate = out.plateau.estimate;
  return out;
}

LipEstimate lip_pointwise(const MMSpace& space, const ScalarField& f, Index x, const ScaleLadder& ladder,
                          const PlateauOptions& opt) {
  check_field(space, f, "lip_pointwise");
  LipEstimate out;
  const ScaleLadder usable = usable_ladder(space, ladder, out.truncated);
  const Neighborhood nb = space.neighborhood(x, usable.scales.front());
  for (double r : usable.scales) {
    out.scales.push_back(r);
    out.slopes.push_back(local_slope(space, f, x, nb, r).value);
  }
  out.value = out.slopes.back();
  const Index w = std::min<Index>(opt.window, out.slopes.size());
  const Plateau tail = find_plateau(std::span(out.slopes).last(w), PlateauOptions{opt.tolerance, w});
  out.plateau_flag = tail.flag;
  return out;
}

KsLipComparison ks_lip_comparison(const MMSpace& space, const ScalarField& f, std::span<const Index> points,
                                  const ScaleLadder& ladder, double doubling, double tolerance,
                                  const PlateauOptions& opt) {
  KsLipComparison out;
  out.c_tilde = (3.0 / 8.0) * (3.0 / 8.0) / std::pow(doubling, 5.0);
  out.c_tilde_sqrt = std::sqrt(out.c_tilde);
  out.min_ratio = std::numeric_limits<double>::infinity();
  for (Index x : points) {
    const KSProfile prof = ks_profile(space, f, x, 2.0, ladder, opt);
    const LipEstimate lip = lip_pointwise(space, f, x, ladder, opt);
    out.rows.push_back(KsLipRow{x, prof.limit_estimate, lip.value, prof.plateau_flag});
    if (lip.value == 0.0) {
      ++out.degenerate;
      continue;
    }
    if (!prof.plateau_flag) {
      ++out.excluded;
      continue;
    }
    ++out.used;
    const double ratio = prof.limit_estimate / lip.value;
    out.max_ratio = std::max(out.max_ratio, ratio);
    out.min_ratio = std::min(out.min_ratio, ratio);
  }
  if (out.used == 0) out.min_ratio = 0.0;
  out.upper_ok = out.used > 0 && out.max_ratio <= 1.0 + tolerance;
  out.lower_ok = out.used > 0 && out.min_ratio >= out.c_tilde_sqrt;
  return out;
}

ConvexityCheck ks_convexity_check(const MMSpace& space, const std::vector<ScalarField>& fields,
                                  const std::vector<double>& weights, Index x, const ScaleLadder& ladder,
                                  double tolerance, const PlateauOptions& opt) {
  if (fields.empty() || fields.size() != weights.size()) throw DimensionError("need one weight per field");
  double wsum = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw ConfigError("convex weights must be nonnegative");
    wsum += w;
  }
  if (std::abs(wsum - 1.0) > 1e-12) throw ConfigError("convex weights must sum to 1");
  ScalarField combo = constant_field(space, 0.0);
  ConvexityCheck out;
  for (Index k = 0; k < fields.size(); ++k) {
    combo = combo + weights[k] * fields[k];
    out.rhs += weights[k] * ks_profile(space, fields[k], x, 2.0, ladder, opt).limit_estimate;
  }
  out.lhs = ks_profile(space, combo, x, 2.0, ladder, opt).limit_estimate;
  out.holds = out.lhs <= out.rhs + tolerance;
  return out;
}

BlowupReport blowup_diagnostic(const MMSpace& space, const ScalarField& f, Index x, const ScaleLadder& ladder) {
  check_field(space, f, "blowup_diagnostic");
  const Mat& X = space.coordinates();
  const auto dim = X.cols();
  const Vec x0 = space.point(x);
  const Neighborhood nb = space.neighborhood(x, ladder.scales.front());
  BlowupReport out;
  for (double r : ladder.scales) {
    const Index k = prefix_length(nb, r);
    if (k < static_cast<Index>(dim) + 1) throw ConfigError("blowup_diagnostic: ball too small for a linear fit");
    Mat Z(static_cast<Eigen::Index>(k), dim);
    Vec b(static_cast<Eigen::Index>(k));
    Vec w(static_cast<Eigen::Index>(k));
    for (Index q = 0; q < k; ++q) {
      const auto row = static_cast<Eigen::Index>(q);
      Z.row(row) = (X.row(static_cast<Eigen::Index>(nb[q].index)) - x0.transpose()) / r;
      b[row] = (f[nb[q].index] - f[x]) / r;
      w[row] = std::sqrt(space.measure(nb[q].index));
    }
    const Mat Zw = w.asDiagonal() * Z;
    const Vec bw = w.asDiagonal() * b;
    Eigen::ColPivHouseholderQR<Mat> qr(Zw);
    if (qr.rank() < dim) throw ConfigError("blowup_diagnostic: underdetermined fit");
    BlowupScale s;
    s.r = r;
    s.slope = qr.solve(bw);
    s.residual = std::sqrt((bw - Zw * s.slope).squaredNorm() / w.squaredNorm());
    s.drift = out.scales.empty() ? 0.0 : (s.slope - out.scales.back().slope).norm();
    out.scales.push_back(s);
  }
  const auto& coarse = out.scales.front();
  const auto& fine = out.scales.back();
  out.gradient = fine.slope;
  const double floor = 1e-9 * (1.0 + fine.slope.norm());
  out.differentiable =
      fine.residual <= floor || fine.residual <= coarse.residual * std::sqrt(fine.r / coarse.r) + floor;
  if (out.scales.size() < 2) out.differentiable = fine.residual <= floor;
  return out;
}

}  // namespace ksd
