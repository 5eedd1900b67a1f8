#pragma once

#include "mfe/domain.hpp"
#include "mfe/energy.hpp"
#include "mfe/measure.hpp"

#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mfe {

using Complex = std::complex<double>;
using ComplexVector = std::vector<Complex>;

double squared_norm(std::span<const Complex> z);

/// m_j(u) = int chi^j dmu(u) for j = 1..k, with dmu(u) the normalized
/// density int e^{alpha u} P(dalpha) / I on the grid.
ComplexVector moment_map(const DiscreteDomain& domain, const Field& u, const IntensityMeasure& measure,
                         const EmbeddedCurve& curve, int k);

/// Row j is sum_i |z_i|^2 (z_i / |z_i|)^{n_j}; zero entries contribute 0.
/// The Vandermonde-type map uses n = (1, 2, ..., k).
ComplexVector power_map(std::span<const Complex> z, std::span<const int> exponents);
ComplexVector vandermonde_map(std::span<const Complex> z);
std::vector<int> vandermonde_exponents(int k);
/// Conjugate control: n = (-1, -2, ..., -k).
std::vector<int> conjugate_exponents(int k);

/// Real 2k x 2k Jacobian of power_map at z (all entries nonzero), ordered (Re z_1, Im z_1, ...).
Eigen::MatrixXd power_map_jacobian(std::span<const Complex> z, std::span<const int> exponents);

struct DegreeSample {
  ComplexVector y0;
  int positive = 0;
  int negative = 0;
  [[nodiscard]] int degree() const { return positive - negative; }
};

struct DegreeReport {
  int k = 0;
  std::vector<DegreeSample> samples;
  bool stable = false;
  int degree = 0;
  std::string verdict;
};

/// Signed preimage count of small regular values y0 (|y0| = y_norm) inside
/// D_k, found by multistart Newton in real 2k dimensions. One count per sample.
DegreeReport brouwer_degree(int k, std::span<const int> exponents, std::uint64_t seed, int samples = 5,
                            double y_norm = 1e-3, int starts = 400);
DegreeReport brouwer_degree(int k, std::uint64_t seed, int samples = 5);

struct VandermondeSolution {
  ComplexVector z;
  double residual = 0.0;
  bool converged = false;
};

/// Solves sum_i beta_i z_i^j = y_j, j = 1..l, by Newton multistart on the
/// weight-normalized system. Returns the converged root of least norm.
VandermondeSolution vandermonde_solve(std::span<const double> betas, std::span<const Complex> y,
                                      std::uint64_t seed = 1, int starts = 64);
/// sum_i beta_i z_i^j for j = 1..l.
ComplexVector power_sums(std::span<const double> betas, std::span<const Complex> z);

/// Cutoff: 0 on [0, 1/3], 1 on [2/3, 1], linear in between.
double eta_cutoff(double s);

/// h(z) = eta(|z|) u_{|z|^2, sigma(z)} with sigma(z) = sum |z_i|^2 delta_{gamma(arg z_i)} / |z|^2.
BubbleField family_bubble(std::span<const Complex> z, const EmbeddedCurve& curve, double alpha_tilde);
/// Grid samples of h(z); throws when the cores at r = |z|^2 are unresolved.
Field family_h(std::span<const Complex> z, const DiscreteDomain& domain, const EmbeddedCurve& curve,
               double alpha_tilde);

struct MinmaxSample {
  ComplexVector z;
  double norm = 0.0;
  double j = 0.0;
  /// |m(h(z)) - Phi_k(z)|, filled on boundary samples.
  double moment_error = 0.0;
  bool boundary = false;
};

struct MinmaxConfig {
  int k = 1;
  double lambda = 10.0 * 3.141592653589793;
  double alpha_tilde = 0.95;
  int radial = 12;
  int angular = 16;
  /// Splits of |z|^2 between z_1 and z_2 (k = 2).
  int splits = 5;
  double boundary_radius = 0.999;

  void validate() const;
};

struct MinmaxReport {
  std::vector<MinmaxSample> samples;
  double sup = 0.0;
  ComplexVector argmax;
  double interior_sup = 0.0;
  double boundary_max = 0.0;
  double boundary_moment_error = 0.0;
  int excluded = 0;
};

/// sup over a radial-angular sample of D_k of J_lambda(h(z)), with J evaluated
/// in closed form. Radii are denser near 1; the last ring is boundary_radius.
MinmaxReport minmax_upper_bound(const MinmaxConfig& config, const DiscreteDomain& domain,
                                const IntensityMeasure& measure, const EmbeddedCurve& curve);

}  // namespace mfe
