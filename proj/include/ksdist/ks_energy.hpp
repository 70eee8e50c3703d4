#pragma once

#include <limits>
#include <span>
#include <vector>

#include "ksdist/mmspace.hpp"

namespace ksd {

/// Closed balls of one radius around every point, stored as CSR. Building it
/// once amortizes the neighbourhood searches over many fields.
class BallTable {
 public:
  BallTable(const MMSpace& space, double r, Exec exec = Exec::parallel);

  double radius() const { return r_; }
  Index size() const { return offset_.size() - 1; }
  std::span<const Neighbor> ball(Index i) const {
    return {entries_.data() + offset_[i], offset_[i + 1] - offset_[i]};
  }
  double ball_mass(Index i) const { return mass_[i]; }
  Index nonzeros() const { return entries_.size(); }

 private:
  double r_ = 0.0;
  std::vector<Index> offset_;
  std::vector<Neighbor> entries_;
  std::vector<double> mass_;
};

/// ks_{p,r}[f](x) = (mean over B_r(x) of |f(y) - f(x)|^p / r^p)^(1/p).
double ks_density(const MMSpace& space, const ScalarField& f, Index x, double p, double r);
double ks_density(const MMSpace& space, const BallTable& balls, const ScalarField& f, Index x, double p);
std::vector<double> ks_densities(const MMSpace& space, const BallTable& balls, const ScalarField& f, double p,
                                 Exec exec = Exec::parallel);

struct EnergyReport {
  double p = 2.0;
  double r = 0.0;
  double total = 0.0;
  /// KS_r[f+g] + KS_r[f-g] - 2 KS_r[f] - 2 KS_r[g]; NaN unless computed.
  double parallelogram_defect = std::numeric_limits<double>::quiet_NaN();
};

/// KS_{p,r}[f] = sum over x of m(x) ks_{p,r}[f](x)^p.
EnergyReport ks_energy_at_scale(const MMSpace& space, const ScalarField& f, double p, double r,
                                Exec exec = Exec::parallel);
EnergyReport ks_energy_at_scale(const MMSpace& space, const BallTable& balls, const ScalarField& f, double p,
                                Exec exec = Exec::parallel);

/// Parallelogram defect of KS_{2,r}; the report's total is KS_r[f] + KS_r[g].
EnergyReport parallelogram_defect(const MMSpace& space, const ScalarField& f, const ScalarField& g, double r,
                                  Exec exec = Exec::parallel);
EnergyReport parallelogram_defect(const MMSpace& space, const BallTable& balls, const ScalarField& f,
                                  const ScalarField& g, Exec exec = Exec::parallel);

/// Strictly decreasing radii.
struct ScaleLadder {
  std::vector<double> scales;
};

/// top, top*ratio, ... while >= bottom (with a 1e-9 relative slack).
ScaleLadder geometric_ladder(double top, double bottom, double ratio = 0.7071067811865476);
/// diameter/4 down to 3 * pitch, ratio 1/sqrt(2).
ScaleLadder default_ladder(const MMSpace& space);

struct PlateauOptions {
  double tolerance = 0.02;
  Index window = 3;
};

struct Plateau {
  bool flag = false;
  double estimate = 0.0;
  double min = 0.0;
  double max = 0.0;
  double spread = 0.0;  // (max - min) / |mean|
  Index begin = 0;      // index of the coarsest scale in the window
};

/// Finest window of consecutive scales whose relative spread is below the
/// tolerance; if none qualifies, the finest window with flag = false.
Plateau find_plateau(std::span<const double> values, const PlateauOptions& opt = {});

struct KSProfile {
  Index center = 0;
  std::vector<double> scales;
  std::vector<double> values;
  double limit_estimate = 0.0;
  bool plateau_flag = false;
  Plateau plateau;
  Index truncated = 0;  // ladder scales dropped below 2 * pitch
};

KSProfile ks_profile(const MMSpace& space, const ScalarField& f, Index x, double p, const ScaleLadder& ladder,
                     const PlateauOptions& opt = {});

struct LipEstimate {
  double value = 0.0;  // local slope at the smallest usable scale
  std::vector<double> scales;
  std::vector<double> slopes;
  bool plateau_flag = false;
  Index truncated = 0;
};

LipEstimate lip_pointwise(const MMSpace& space, const ScalarField& f, Index x, const ScaleLadder& ladder,
                          const PlateauOptions& opt = {});

struct KsLipRow {
  Index center = 0;
  double ks = 0.0;
  double lip = 0.0;
  bool plateau = false;
};

struct KsLipComparison {
  double max_ratio = 0.0;
  double min_ratio = 0.0;
  Index used = 0;
  Index excluded = 0;    // no ks plateau
  Index degenerate = 0;  // Lip = 0
  /// Proof constant (3/8)^2 / C_D^5 bounding ks^2 / Lip^2 from below, and its root.
  double c_tilde = 0.0;
  double c_tilde_sqrt = 0.0;
  bool upper_ok = false;  // ks <= Lip (1 + tolerance) everywhere
  bool lower_ok = false;  // ks >= sqrt(c_tilde) Lip everywhere
  std::vector<KsLipRow> rows;
};

KsLipComparison ks_lip_comparison(const MMSpace& space, const ScalarField& f, std::span<const Index> points,
                                  const ScaleLadder& ladder, double doubling, double tolerance = 0.0,
                                  const PlateauOptions& opt = {});

struct ConvexityCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
};

/// ks limit of sum(lambda_i f_i) at x against sum(lambda_i * ks limit of f_i).
ConvexityCheck ks_convexity_check(const MMSpace& space, const std::vector<ScalarField>& fields,
                                  const std::vector<double>& weights, Index x, const ScaleLadder& ladder,
                                  double tolerance = 1e-9, const PlateauOptions& opt = {});

struct BlowupScale {
  double r = 0.0;
  Vec slope;
  double residual = 0.0;  // rms of the rescaled fit residual over the ball
  double drift = 0.0;     // |slope_r - slope at the previous (coarser) scale|
};

struct BlowupReport {
  std::vector<BlowupScale> scales;
  bool differentiable = false;
  Vec gradient;  // slope at the finest scale
};

/// Least-squares linear fit of (f - f(x))/r on the coordinates of B_r(x)
/// rescaled by 1/r, at each ladder scale. Flags non-differentiability when the
/// residual fails to decay at least like sqrt(r).
BlowupReport blowup_diagnostic(const MMSpace& space, const ScalarField& f, Index x, const ScaleLadder& ladder);

}  // namespace ksd
