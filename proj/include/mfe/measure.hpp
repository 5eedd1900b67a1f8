#pragma once

#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace mfe {

/// Point mass of the intensity measure at alpha in [0,1].
struct Atom {
  double alpha = 1.0;
  double weight = 1.0;
  friend bool operator==(const Atom&, const Atom&) = default;
};

/// Piecewise-linear density on [breakpoints.front(), breakpoints.back()],
/// zero outside. Repeated breakpoints encode jumps.
struct PiecewiseLinearDensity {
  std::vector<double> breakpoints;
  std::vector<double> values;

  [[nodiscard]] bool empty() const { return breakpoints.size() < 2; }
  [[nodiscard]] double integral() const;
  [[nodiscard]] double operator()(double alpha) const;
  friend bool operator==(const PiecewiseLinearDensity&, const PiecewiseLinearDensity&) = default;
};

/// Shifted exponential moments of P at a point t:
///   int alpha^m e^{alpha t} P(dalpha) = exp(log_scale) * m[m].
struct ExpMoments {
  double log_scale = 0.0;
  double m0 = 0.0;
  double m1 = 0.0;
  double m2 = 0.0;
};

/// Raised when a linear-space exponential moment does not fit in a double.
class MomentOverflow : public std::overflow_error {
 public:
  using std::overflow_error::overflow_error;
};

/// Borel probability measure on [0,1] made of atoms plus a piecewise-linear
/// density. Immutable after construction.
class IntensityMeasure {
 public:
  static constexpr double kMassTolerance = 1e-12;

  IntensityMeasure(std::vector<Atom> atoms, PiecewiseLinearDensity density,
                   int quadrature_nodes = 64);

  static IntensityMeasure dirac(double alpha = 1.0);
  static IntensityMeasure uniform(double lo = 0.0, double hi = 1.0);
  static IntensityMeasure atomic(std::vector<Atom> atoms);

  [[nodiscard]] const std::vector<Atom>& atoms() const { return atoms_; }
  [[nodiscard]] const PiecewiseLinearDensity& density() const { return density_; }
  [[nodiscard]] int quadrature_nodes() const { return quadrature_nodes_; }

  /// int alpha^moment e^{alpha t} P(dalpha), moment in {0,1,2}.
  [[nodiscard]] double weighted_exp(double t, int moment) const;
  /// Natural log of weighted_exp; finite for every finite t.
  [[nodiscard]] double log_weighted_exp(double t, int moment) const;
  [[nodiscard]] ExpMoments moments(double t) const;

  /// P([1-eps, 1]).
  [[nodiscard]] double tail_mass(double eps) const;
  /// P({1}).
  [[nodiscard]] double mass_at_one() const;
  /// int alpha P(dalpha).
  [[nodiscard]] double mean() const;
  [[nodiscard]] double total_mass() const;
  [[nodiscard]] double sup_support() const;
  [[nodiscard]] double inf_support() const;
  /// P([a, b]).
  [[nodiscard]] double interval_mass(double a, double b) const;

  /// Atomic approximation of the density part by the composite trapezoid
  /// rule with `nodes` points per linear piece.
  [[nodiscard]] IntensityMeasure discretized(int nodes) const;

  friend bool operator==(const IntensityMeasure&, const IntensityMeasure&) = default;

 private:
  std::vector<Atom> atoms_;
  PiecewiseLinearDensity density_;
  int quadrature_nodes_ = 64;
  double sup_ = 1.0;
  double inf_ = 0.0;
};

/// Pushes P forward under alpha -> alpha / sup supp P and rescales lambda by
/// (sup supp P)^2, so that 1 lies in the support.
std::pair<IntensityMeasure, double> normalize_support(const IntensityMeasure& measure,
                                                      double lambda);

/// Gauss-Legendre nodes and weights on [-1, 1].
struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};
const GaussRule& gauss_legendre(int n);

}  // namespace mfe
