#pragma once

#include "mfe/domain.hpp"
#include "mfe/measure.hpp"
#include "mfe/solver.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mfe {

/// nu-density lambda int alpha e^{alpha u} P(dalpha) / I at every node.
Field vortex_density(const DiscreteDomain& domain, const Field& u, double lambda, const IntensityMeasure& measure);

struct Peak {
  Vec2 location;
  Eigen::Index node = -1;
  double density = 0.0;
  /// Density integrated over B_rho(location) minus the balls of earlier peaks.
  double mass = 0.0;
};

struct PeakSet {
  std::vector<Peak> peaks;
  double rho = 0.0;
  double total_mass = 0.0;
  /// Mass left outside every peak ball (the residual density s).
  double residual_mass = 0.0;
};

/// Cluster radius: max(8h, min(separation / 4, distance to the boundary / 2)).
double default_cluster_radius(const DiscreteDomain& domain, std::span<const Vec2> peaks);

/// Local maxima above threshold_fraction * max density, strongest first.
/// Maxima closer than 16h merge into the stronger one. With rho unset the
/// default cluster radius is used; peaks closer than 2 rho are dropped.
PeakSet detect_peaks(const DiscreteDomain& domain, const Field& density, double threshold_fraction,
                     std::optional<double> rho = {});

/// Mass of the blow-up measure at one value of alpha.
struct AlphaMass {
  double alpha = 0.0;
  double mass = 0.0;
};

/// 8 pi zeta([0,1]) - (int alpha zeta(dalpha))^2.
double pohozaev_residual(std::span<const AlphaMass> zeta);

/// alpha-resolved mass of lambda e^{alpha u} P(dalpha) dx / I inside a ball:
/// atoms of P exactly, the density part on its discretized node set.
std::vector<AlphaMass> alpha_distribution(const DiscreteDomain& domain, const Field& u, double lambda,
                                          const IntensityMeasure& measure, const Circle& ball);

struct PeakReport {
  Peak peak;
  std::vector<AlphaMass> zeta;
  double pohozaev = 0.0;
};

enum class Regime { nondegenerate, degenerate };
std::string to_string(Regime regime);
Regime regime_of(const IntensityMeasure& measure);

struct BlowupReport {
  double lambda = 0.0;
  double u_max = 0.0;
  double rho = 0.0;
  double total_mass = 0.0;
  double residual_mass = 0.0;
  Regime regime = Regime::nondegenerate;
  std::vector<PeakReport> peaks;
};

BlowupReport blowup_report(const DiscreteDomain& domain, const SolveResult& entry, const IntensityMeasure& measure,
                           double threshold_fraction = 0.05, std::optional<double> rho = {});

struct QuantizationConfig {
  double threshold_fraction = 0.05;
  std::optional<double> rho;
  /// The branch counts as blowing up once max u exceeds this.
  double min_amplitude = 6.0;
  /// Entries at the end of the branch used for extrapolation.
  int fit_points = 5;
  double tolerance = 0.05;
};

struct QuantizationEntry {
  double lambda = 0.0;
  double u_max = 0.0;
  std::vector<double> peak_mass;
  double residual_mass = 0.0;
};

struct QuantizationReport {
  bool blowup = false;
  std::string verdict;
  std::vector<QuantizationEntry> entries;
  /// Intercepts of peak mass against 1 / max u, one per final peak.
  std::vector<double> extrapolated_mass;
  std::vector<Vec2> peak_locations;
  bool residual_shrinks = false;
  bool pass = false;
};

/// Peak masses along a branch, matched to the peaks of the last entry by
/// location and extrapolated to infinite amplitude.
QuantizationReport quantization_check(const DiscreteDomain& domain, const ContinuationBranch& branch,
                                      const IntensityMeasure& measure, const QuantizationConfig& config = {});

/// Samples of a rescaled profile on the square lattice y = spacing * (i, j),
/// |i|, |j| <= half. Points outside the rescaled domain hold NaN.
struct RescaledProfile {
  Vec2 center;
  double sigma = 0.0;
  double spacing = 0.0;
  int half = 0;
  std::vector<double> values;

  [[nodiscard]] int side() const { return 2 * half + 1; }
  [[nodiscard]] double at(int i, int j) const { return values[static_cast<std::size_t>((j + half) * side() + i + half)]; }
  [[nodiscard]] Vec2 y(int i, int j) const { return {spacing * i, spacing * j}; }
  /// Riemann sum of e^{profile} over the finite samples.
  [[nodiscard]] double exp_integral() const;
};

struct RescaleOptions {
  /// Half-width of the sampled window in rescaled units.
  double window = 5.0;
  int half = 50;
  /// log I from the solver entry; recomputed when unset.
  std::optional<double> log_denominator;
};

struct NondegenerateRescaling {
  RescaledProfile profile;
  /// int_Omega e^{w}, bounded by 1 / P({1}).
  double exp_integral = 0.0;
  /// sup of the rescaled perturbation sigma^2 / I int_{[0,1)} alpha e^{alpha u} P(dalpha).
  double perturbation_sup = 0.0;
};

/// w = u - log I, sigma = e^{-w(x_max)/2}, profile w(x_max + sigma y) + 2 log sigma.
NondegenerateRescaling rescale_nondegenerate(const DiscreteDomain& domain, const Field& u, double lambda,
                                             const IntensityMeasure& measure, const RescaleOptions& options = {});

struct DegenerateRescaling {
  RescaledProfile profile;
  double alpha_n = 0.0;
  double v_at_peak = 0.0;
  double v_sup = 0.0;
  /// alpha_n lambda (int alpha P(dalpha) + 1).
  double v_bound = 0.0;
};

/// e^{alpha_n t} = int alpha e^{alpha t} P(dalpha) at t = max u > 0.
double degenerate_alpha(const IntensityMeasure& measure, double t);

/// w = alpha_n u - log I, sigma^2 = e^{-w(x_max)}, profile w(x_max + sigma y) + 2 log sigma,
/// V = alpha_n lambda int alpha e^{(alpha - alpha_n) u} P(dalpha).
DegenerateRescaling rescale_degenerate(const DiscreteDomain& domain, const Field& u, double lambda,
                                       const IntensityMeasure& measure, const RescaleOptions& options = {});

/// ln(8 delta^2 / (delta^2 + |y - xi|^2)^2).
double liouville_bubble(double delta, Vec2 xi, Vec2 y);

struct BubbleFit {
  double delta = 1.0;
  Vec2 xi;
  double offset = 0.0;
  double rms = 0.0;
  double window = 0.0;
  int points = 0;
  int iterations = 0;
  bool converged = false;
};

/// Least-squares fit of liouville_bubble + offset over |y| <= window.
BubbleFit bubble_fit(const RescaledProfile& profile, double window = 5.0);

/// int_{|y - xi| <= radius} e^{U_{delta,xi}} by Gauss-Legendre quadrature.
double bubble_mass(double delta, double radius);

struct ConcentrationClusters {
  bool success = false;
  std::vector<Vec2> points;
  std::vector<double> betas;
  double outside = 0.0;
};

/// Greedy covering of the e^{alpha u} mass by at most k balls of radius r,
/// each centered at the heaviest node not yet covered.
ConcentrationClusters concentration_clusters(const DiscreteDomain& domain, const Field& u,
                                             const IntensityMeasure& measure, int k, double eps, double r);

}  // namespace mfe
