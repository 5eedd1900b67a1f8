#pragma once

#include "mfe/domain.hpp"
#include "mfe/measure.hpp"

#include <complex>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace mfe {

/// int |grad u|^2 (no 1/2), as h^2 <A u, u> over edges and boundary arms.
double dirichlet_energy(const DiscreteDomain& domain, const Field& u);
/// log int int e^{alpha u} P(dalpha) dx.
double log_denominator(const DiscreteDomain& domain, const Field& u, const IntensityMeasure& measure);
/// J_lambda(u) = 1/2 int |grad u|^2 - lambda log int int e^{alpha u}.
double j_lambda(const DiscreteDomain& domain, const Field& u, double lambda, const IntensityMeasure& measure);
/// Gradient of the discrete J_lambda divided by h^2, i.e. the equation residual.
Eigen::VectorXd j_lambda_gradient(const DiscreteDomain& domain, const Field& u, double lambda,
                                  const IntensityMeasure& measure);

/// (1/16 pi) int |grad u|^2 + log C - log int int e^{alpha u}.
double mt_gap(const DiscreteDomain& domain, const Field& u, const IntensityMeasure& measure, double mt_constant);

/// Random field vanishing on the boundary: sine modes up to max_mode on the
/// bounding box, tapered near curved boundaries, rescaled to sup-norm
/// uniform in (0, amplitude].
Field random_smooth_field(const DiscreteDomain& domain, std::mt19937_64& rng, int max_mode, double amplitude);

struct MtCalibration {
  double constant = 1.0;
  /// max over the corpus of log I - E / 16 pi.
  double max_log_ratio = 0.0;
  int corpus_size = 0;
};

/// C = e^{margin} * max(|Omega|, max_corpus I e^{-E/16pi}) over a corpus drawn from seed.
MtCalibration calibrate_mt_constant(const DiscreteDomain& domain, const IntensityMeasure& measure, int corpus_size,
                                    std::uint64_t seed, int max_mode = 8, double amplitude = 5.0,
                                    double margin = 0.1);

struct BarycenterConfig {
  int k = 1;
  std::vector<double> weights{1.0};
  std::vector<double> angles{0.0};
  double eps0 = 0.1;
  double r = 0.9;
  double alpha_tilde = 0.95;

  void validate() const;
  /// (2 alpha_tilde - 1) lambda > 8 k pi.
  [[nodiscard]] bool valid_for(double lambda) const;
};

enum class BubbleProfile {
  /// v_{r,theta}: 4 log(1/(1-r)) on the core, 4 log(R/s) on the layer, 0 outside.
  plateau,
  /// log((eps^2 + R^2)^2 / (eps^2 + s^2)^2) on B_R, 0 outside.
  liouville,
};

struct BubbleIntegrals {
  double dirichlet = 0.0;
  double log_denominator = 0.0;
  /// m_j for j = 1..max_moment.
  std::vector<std::complex<double>> moments;
  /// Share of int int e^{alpha u} inside each probe disk.
  std::vector<double> probe_mass;
};

/// u = (scale / alpha_tilde) log sum_i t_i e^{alpha_tilde v_i} with radial
/// bubbles v_i, evaluated in closed form so that cores far below the grid
/// spacing remain exact. Identical centers are merged.
class BubbleField {
 public:
  BubbleField(std::vector<Vec2> centers, std::vector<double> weights, BubbleProfile profile, double parameter,
              double support, double alpha_tilde = 1.0, double scale = 1.0);

  /// v_{r,theta} with support radius eps0.
  static BubbleField plateau(Vec2 center, double r, double eps0);
  /// u_{r,sigma} for sigma = sum t_i delta_{gamma(theta_i)}.
  static BubbleField barycenter(const BarycenterConfig& config, const EmbeddedCurve& curve);
  /// Truncated Liouville bubble u_eps centered at x0 and cut at r0.
  static BubbleField liouville(Vec2 center, double eps, double r0);

  [[nodiscard]] double value(Vec2 x) const;
  [[nodiscard]] Vec2 gradient(Vec2 x) const;
  [[nodiscard]] double core_radius() const;
  [[nodiscard]] double support() const { return support_; }
  [[nodiscard]] double profile_max() const;
  [[nodiscard]] const std::vector<Vec2>& centers() const { return centers_; }
  [[nodiscard]] const std::vector<double>& weights() const { return weights_; }

  /// Grid samples; throws when the core spans fewer than 4 cells.
  [[nodiscard]] Field rasterize(const DiscreteDomain& domain) const;

  /// Continuum integrals over Omega. The background part (u = 0) comes from
  /// the exact area and, for moments, from the grid quadrature weights.
  [[nodiscard]] BubbleIntegrals integrals(const DiscreteDomain& domain, const IntensityMeasure& measure,
                                          const EmbeddedCurve* curve = nullptr, int max_moment = 0,
                                          const std::vector<Circle>& probes = {}) const;

  [[nodiscard]] double j_lambda(const DiscreteDomain& domain, double lambda, const IntensityMeasure& measure) const;

 private:
  [[nodiscard]] double profile(double s) const;
  [[nodiscard]] double profile_slope(double s) const;

  std::vector<Vec2> centers_;
  std::vector<double> weights_;
  BubbleProfile kind_;
  double parameter_;
  double support_;
  double alpha_tilde_;
  double scale_;
};

Field test_bubble(double theta, double r, const DiscreteDomain& domain, const EmbeddedCurve& curve);
Field barycenter_test_fn(const BarycenterConfig& config, const DiscreteDomain& domain, const EmbeddedCurve& curve);

struct ImprovedMtReport {
  std::vector<double> region_mass;
  bool hypothesis_holds = false;
  double coefficient = 0.0;
  /// log I - coefficient * int |grad u|^2; meaningful when the hypothesis holds.
  double k_constant = 0.0;
  /// The same with the single-region coefficient 1/16 pi.
  double naive_constant = 0.0;
};

/// Regions are disks; ell + 1 = regions.size() >= 2, pairwise distance >= d0 > 0.
ImprovedMtReport improved_mt_check(const DiscreteDomain& domain, const Field& u, const IntensityMeasure& measure,
                                   const std::vector<Circle>& regions, double a0, double eps);
ImprovedMtReport improved_mt_check(const DiscreteDomain& domain, const BubbleField& u, const IntensityMeasure& measure,
                                   const std::vector<Circle>& regions, double a0, double eps);

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  /// Standard error of the slope.
  double stderr_slope = 0.0;
};
SlopeFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

struct AsymptoticsRow {
  double r = 0.0;
  double log_scale = 0.0;  // log(1/(1-r))
  double dirichlet = 0.0;
  double log_denominator = 0.0;
  double j = 0.0;
};

struct AsymptoticsReport {
  std::vector<AsymptoticsRow> rows;
  SlopeFit gradient_fit;
  SlopeFit log_denominator_fit;
  SlopeFit j_fit;
  double gradient_bound = 0.0;          // 32 k pi
  double log_denominator_bound = 0.0;   // 4 alpha_tilde - 2
  double j_bound = 0.0;                 // 2 (8 k pi - (2 alpha_tilde - 1) lambda)
  bool gradient_ok = false;
  bool log_denominator_ok = false;
  bool j_ok = false;
  bool diverges = false;
  /// (2 alpha_tilde - 1) lambda > 8 k pi; the bounds are only claimed when true.
  bool condition_holds = false;
};

/// Sweeps u_{r,sigma} over the r values and fits slopes against log(1/(1-r)).
AsymptoticsReport jlambda_asymptotics(const BarycenterConfig& base, const std::vector<double>& r_values, double lambda,
                                      const IntensityMeasure& measure, const DiscreteDomain& domain,
                                      const EmbeddedCurve& curve, double gradient_tol = 0.03,
                                      double log_denominator_tol = 0.05, double j_tol = 0.10);

/// r ladder {1 - 2^-m}.
std::vector<double> geometric_r_ladder(int m_min, int m_max);

}  // namespace mfe
