#pragma once

#include "mfe/domain.hpp"
#include "mfe/measure.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mfe {

struct SolveConfig {
  double tolerance = 1e-10;
  int max_iterations = 50;
  double min_damping = 0x1p-20;
  /// Consecutive failed line searches before Newton gives up.
  int divergence_patience = 5;
  double lambda_step = 0.5;
  double shrink = 0.5;
  double min_lambda_step = 1e-4;
  /// Largest accepted increase of max u between continuation steps.
  double max_growth = 1.0;
  /// Continuation stops once the bubble scale sqrt(8 / max density) drops
  /// below this many grid cells.
  double resolution_cells = 5.0;

  void validate() const;
};

/// Moments of e^{alpha u} at every node and the global denominator
/// I = int int e^{alpha u} P(dalpha) dx, all scaled by e^{-log_shift}.
struct DensityTerms {
  double log_shift = 0.0;
  Eigen::VectorXd g0, g1, g2;
  double b0 = 0.0, b1 = 0.0, b2 = 0.0;
  double denominator_scaled = 0.0;

  [[nodiscard]] double log_denominator() const;
  /// int int alpha e^{alpha u} / I.
  [[nodiscard]] double mean_alpha_weight(const DiscreteDomain& domain) const;
};

DensityTerms density_terms(const DiscreteDomain& domain, const Field& u, const IntensityMeasure& measure);

/// lambda int alpha e^{alpha u} P(dalpha) / I, with its boundary value.
Field nonlinearity(const DiscreteDomain& domain, const Field& u, double lambda,
                   const IntensityMeasure& measure);

/// F(u) = -Lap_h u - (w / h^2) * nonlinearity(u); zero at discrete solutions.
Eigen::VectorXd residual(const DiscreteDomain& domain, const Field& u, double lambda,
                         const IntensityMeasure& measure);

/// Directional derivative dF(u)[direction] from the analytic Jacobian.
Eigen::VectorXd jacobian_apply(const DiscreteDomain& domain, const Field& u, double lambda,
                               const IntensityMeasure& measure, const Eigen::VectorXd& direction);

struct SolveResult {
  Field u;
  double lambda = 0.0;
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string diagnostic;
  double log_denominator = 0.0;
  /// nu(Omega) = lambda int int alpha e^{alpha u} / I.
  double vortex_mass = 0.0;
  double u_max = 0.0;
  Vec2 u_max_location;
  double max_density = 0.0;
};

SolveResult newton_solve(const DiscreteDomain& domain, const Field& u0, double lambda,
                         const IntensityMeasure& measure, const SolveConfig& config = {});

struct ContinuationBranch {
  std::vector<SolveResult> entries;
  bool terminated_early = false;
  std::string flag;
  double last_good_lambda = 0.0;
};

/// Warm-started lambda sweep. Stops with a flag when the step falls below
/// min_lambda_step or when the concentrating solution is no longer resolved.
ContinuationBranch continue_lambda(const DiscreteDomain& domain, double lambda_start,
                                   double lambda_end, const IntensityMeasure& measure,
                                   const SolveConfig& config = {},
                                   std::optional<Field> initial = {});

}  // namespace mfe
