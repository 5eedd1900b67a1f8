#include "mfe/topology.hpp"

#include "mfe/parallel.hpp"
#include "mfe/solver.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>

namespace mfe {

namespace {

constexpr double kPi = std::numbers::pi;

// Uniform point in the ball of C^k with the given radius.
ComplexVector random_in_ball(std::mt19937_64& rng, int k, double radius) {
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ComplexVector z(static_cast<std::size_t>(k));
  for (Complex& c : z) c = {g(rng), g(rng)};
  double n = std::sqrt(squared_norm(z));
  double s = radius * std::pow(u(rng), 1.0 / (2.0 * k)) / n;
  for (Complex& c : z) c *= s;
  return z;
}

ComplexVector random_on_sphere(std::mt19937_64& rng, int k, double radius) {
  std::normal_distribution<double> g;
  ComplexVector z(static_cast<std::size_t>(k));
  for (Complex& c : z) c = {g(rng), g(rng)};
  double s = radius / std::sqrt(squared_norm(z));
  for (Complex& c : z) c *= s;
  return z;
}

Eigen::VectorXd to_real(std::span<const Complex> z) {
  Eigen::VectorXd x(2 * static_cast<Eigen::Index>(z.size()));
  for (std::size_t i = 0; i < z.size(); ++i) {
    x[2 * static_cast<Eigen::Index>(i)] = z[i].real();
    x[2 * static_cast<Eigen::Index>(i) + 1] = z[i].imag();
  }
  return x;
}

ComplexVector to_complex(const Eigen::VectorXd& x) {
  ComplexVector z(static_cast<std::size_t>(x.size() / 2));
  for (std::size_t i = 0; i < z.size(); ++i)
    z[i] = {x[2 * static_cast<Eigen::Index>(i)], x[2 * static_cast<Eigen::Index>(i) + 1]};
  return z;
}

}  // namespace

double squared_norm(std::span<const Complex> z) {
  double s = 0.0;
  for (Complex c : z) s += std::norm(c);
  return s;
}

ComplexVector moment_map(const DiscreteDomain& domain, const Field& u, const IntensityMeasure& measure,
                         const EmbeddedCurve& curve, int k) {
  if (k < 1) throw std::invalid_argument("moment_map: k must be >= 1");
  DensityTerms t = density_terms(domain, u, measure);
  ComplexVector m(static_cast<std::size_t>(k), 0.0);
  for (Eigen::Index q = 0; q < domain.size(); ++q) {
    Complex chi = curve.chi(domain.position(q)), p = 1.0;
    double w = domain.weights()[q] * t.g0[q];
    for (int j = 0; j < k; ++j) {
      p *= chi;
      m[static_cast<std::size_t>(j)] += w * p;
    }
  }
  for (Complex& c : m) c /= t.denominator_scaled;
  return m;
}

ComplexVector power_map(std::span<const Complex> z, std::span<const int> exponents) {
  ComplexVector out(exponents.size(), 0.0);
  for (Complex c : z) {
    double r = std::abs(c);
    if (r == 0.0) continue;
    Complex unit = c / r;
    for (std::size_t j = 0; j < exponents.size(); ++j) out[j] += r * r * std::pow(unit, exponents[j]);
  }
  return out;
}

std::vector<int> vandermonde_exponents(int k) {
  std::vector<int> n;
  for (int j = 1; j <= k; ++j) n.push_back(j);
  return n;
}

std::vector<int> conjugate_exponents(int k) {
  std::vector<int> n;
  for (int j = 1; j <= k; ++j) n.push_back(-j);
  return n;
}

ComplexVector vandermonde_map(std::span<const Complex> z) {
  return power_map(z, vandermonde_exponents(static_cast<int>(z.size())));
}

Eigen::MatrixXd power_map_jacobian(std::span<const Complex> z, std::span<const int> exponents) {
  const auto rows = static_cast<Eigen::Index>(exponents.size());
  const auto cols = static_cast<Eigen::Index>(z.size());
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(2 * rows, 2 * cols);
  for (Eigen::Index i = 0; i < cols; ++i) {
    Complex c = z[static_cast<std::size_t>(i)];
    double r = std::abs(c);
    if (r == 0.0) throw std::domain_error("power_map_jacobian: not differentiable at z_i = 0");
    for (Eigen::Index j = 0; j < rows; ++j) {
      // g = z^{1 + n/2} conj(z)^{1 - n/2}; Wirtinger derivatives below.
      double n = exponents[static_cast<std::size_t>(j)];
      Complex g = r * r * std::pow(c / r, n);
      Complex gz = (1.0 + n / 2.0) * g / c;
      Complex gzb = (1.0 - n / 2.0) * g / std::conj(c);
      Complex dx = gz + gzb, dy = Complex(0.0, 1.0) * (gz - gzb);
      jac(2 * j, 2 * i) = dx.real();
      jac(2 * j + 1, 2 * i) = dx.imag();
      jac(2 * j, 2 * i + 1) = dy.real();
      jac(2 * j + 1, 2 * i + 1) = dy.imag();
    }
  }
  return jac;
}

DegreeReport brouwer_degree(int k, std::span<const int> exponents, std::uint64_t seed, int samples, double y_norm,
                            int starts) {
  if (k < 1 || k > 2) throw std::invalid_argument("brouwer_degree: k must be 1 or 2");
  if (static_cast<int>(exponents.size()) != k) throw std::invalid_argument("brouwer_degree: need k exponents");
  if (samples < 1 || starts < 1 || !(y_norm > 0.0 && y_norm < 1.0))
    throw std::invalid_argument("brouwer_degree: bad sampling parameters");
  std::mt19937_64 rng(seed);
  DegreeReport rep;
  rep.k = k;
  const double scale = std::sqrt(y_norm);
  for (int s = 0; s < samples; ++s) {
    DegreeSample ds;
    ds.y0 = random_on_sphere(rng, k, y_norm);
    std::vector<ComplexVector> starts_z;
    for (int i = 0; i < starts; ++i) starts_z.push_back(random_in_ball(rng, k, std::min(1.0, 4.0 * scale)));
    std::vector<std::optional<ComplexVector>> found(starts_z.size());
    parallel_for(static_cast<std::ptrdiff_t>(starts_z.size()), [&](std::ptrdiff_t i) {
      Eigen::VectorXd x = to_real(starts_z[static_cast<std::size_t>(i)]);
      Eigen::VectorXd target = to_real(ds.y0);
      for (int it = 0; it < 100; ++it) {
        ComplexVector z = to_complex(x);
        if (std::any_of(z.begin(), z.end(), [](Complex c) { return c == 0.0; })) return;
        Eigen::VectorXd f = to_real(power_map(z, exponents)) - target;
        if (f.norm() <= 1e-14 * y_norm) {
          found[static_cast<std::size_t>(i)] = z;
          return;
        }
        Eigen::VectorXd step = power_map_jacobian(z, exponents).fullPivLu().solve(-f);
        if (!step.allFinite()) return;
        // Keep the iterate from crossing z_i = 0 in one jump.
        double t = 1.0;
        for (std::size_t c = 0; c < z.size(); ++c) {
          double len = std::hypot(step[2 * static_cast<Eigen::Index>(c)], step[2 * static_cast<Eigen::Index>(c) + 1]);
          if (len > 0.5 * std::abs(z[c])) t = std::min(t, 0.5 * std::abs(z[c]) / len);
        }
        x += t * step;
      }
    });
    std::vector<ComplexVector> roots;
    for (const auto& r : found) {
      if (!r || squared_norm(*r) >= 1.0) continue;
      bool fresh = std::none_of(roots.begin(), roots.end(), [&](const ComplexVector& q) {
        double d = 0.0;
        for (std::size_t c = 0; c < q.size(); ++c) d += std::norm(q[c] - (*r)[c]);
        return d <= 1e-16 * y_norm;
      });
      if (fresh) roots.push_back(*r);
    }
    for (const ComplexVector& r : roots) {
      double det = power_map_jacobian(r, exponents).determinant();
      if (det > 0.0) ++ds.positive;
      if (det < 0.0) ++ds.negative;
    }
    rep.samples.push_back(std::move(ds));
  }
  rep.degree = rep.samples.front().degree();
  rep.stable = std::all_of(rep.samples.begin(), rep.samples.end(),
                           [&](const DegreeSample& d) { return d.degree() == rep.degree; });
  rep.verdict = !rep.stable ? "inconclusive" : rep.degree != 0 ? "nonzero" : "zero";
  return rep;
}

DegreeReport brouwer_degree(int k, std::uint64_t seed, int samples) {
  return brouwer_degree(k, vandermonde_exponents(k), seed, samples);
}

ComplexVector power_sums(std::span<const double> betas, std::span<const Complex> z) {
  if (betas.size() != z.size()) throw std::invalid_argument("power_sums: need one beta per z");
  ComplexVector y(z.size(), 0.0);
  for (std::size_t i = 0; i < z.size(); ++i) {
    Complex p = 1.0;
    for (std::size_t j = 0; j < y.size(); ++j) {
      p *= z[i];
      y[j] += betas[i] * p;
    }
  }
  return y;
}

VandermondeSolution vandermonde_solve(std::span<const double> betas, std::span<const Complex> y, std::uint64_t seed,
                                      int starts) {
  const std::size_t l = y.size();
  if (l < 1 || l > 4 || betas.size() != l) throw std::invalid_argument("vandermonde_solve: need 1 <= l <= 4 betas and ys");
  for (double b : betas)
    if (!(b > 0.0)) throw std::invalid_argument("vandermonde_solve: betas must be positive");

  VandermondeSolution best;
  auto residual_of = [&](std::span<const Complex> z) {
    ComplexVector s = power_sums(betas, z);
    double r = 0.0;
    for (std::size_t j = 0; j < l; ++j) r = std::max(r, std::abs(s[j] - y[j]));
    return r;
  };
  // Weighted homogeneity: z -> t z sends y_j -> t^j y_j.
  double t = 0.0;
  for (std::size_t j = 0; j < l; ++j) t = std::max(t, std::pow(std::abs(y[j]), 1.0 / static_cast<double>(j + 1)));
  if (t == 0.0) {
    best.z.assign(l, 0.0);
    best.converged = true;
    return best;
  }
  if (l == 1) {
    best.z = {y[0] / betas[0]};
    best.residual = residual_of(best.z);
    best.converged = true;
    return best;
  }
  ComplexVector ys(l);
  for (std::size_t j = 0; j < l; ++j) ys[j] = y[j] / std::pow(t, static_cast<double>(j + 1));

  std::mt19937_64 rng(seed);
  double best_norm = std::numeric_limits<double>::infinity();
  best.residual = std::numeric_limits<double>::infinity();
  for (int s = 0; s < starts; ++s) {
    ComplexVector w = random_in_ball(rng, static_cast<int>(l), 2.0);
    Eigen::VectorXcd x(static_cast<Eigen::Index>(l));
    for (std::size_t i = 0; i < l; ++i) x[static_cast<Eigen::Index>(i)] = w[i];
    bool ok = false;
    for (int it = 0; it < 100; ++it) {
      Eigen::VectorXcd f(static_cast<Eigen::Index>(l));
      Eigen::MatrixXcd jac(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(l));
      for (std::size_t j = 0; j < l; ++j) {
        Complex fj = -ys[j];
        for (std::size_t i = 0; i < l; ++i) {
          Complex zi = x[static_cast<Eigen::Index>(i)];
          fj += betas[i] * std::pow(zi, static_cast<int>(j + 1));
          jac(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) =
              static_cast<double>(j + 1) * betas[i] * std::pow(zi, static_cast<int>(j));
        }
        f[static_cast<Eigen::Index>(j)] = fj;
      }
      if (f.cwiseAbs().maxCoeff() <= 1e-14) {
        ok = true;
        break;
      }
      Eigen::VectorXcd step = jac.fullPivLu().solve(-f);
      if (!step.allFinite()) break;
      x += step;
      if (x.cwiseAbs().maxCoeff() > 1e3) break;
    }
    if (!ok) continue;
    ComplexVector z(l);
    for (std::size_t i = 0; i < l; ++i) z[i] = t * x[static_cast<Eigen::Index>(i)];
    double n = squared_norm(z);
    if (n < best_norm * (1.0 - 1e-9)) {
      best_norm = n;
      best.z = z;
      best.residual = residual_of(z);
      best.converged = true;
    }
  }
  if (!best.converged) best.z.assign(l, 0.0);
  return best;
}

double eta_cutoff(double s) { return std::clamp(3.0 * s - 1.0, 0.0, 1.0); }

BubbleField family_bubble(std::span<const Complex> z, const EmbeddedCurve& curve, double alpha_tilde) {
  if (z.empty()) throw std::invalid_argument("family_h: z must be non-empty");
  double n2 = squared_norm(z);
  if (!(n2 < 1.0)) throw std::invalid_argument("family_h: |z| must be below 1");
  double scale = eta_cutoff(std::sqrt(n2));
  if (scale == 0.0) return BubbleField({curve.gamma(0.0)}, {1.0}, BubbleProfile::plateau, 0.0, curve.eps0, alpha_tilde, 0.0);
  std::vector<Vec2> centers;
  std::vector<double> weights;
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    double w = std::norm(z[i]) / n2;
    centers.push_back(curve.gamma(z[i] == 0.0 ? 0.0 : std::arg(z[i])));
    weights.push_back(w);
    total += w;
  }
  // Renormalize away the last-bit drift of |z_i|^2 / |z|^2.
  for (double& w : weights) w /= total;
  return BubbleField(centers, weights, BubbleProfile::plateau, n2, curve.eps0, alpha_tilde, scale);
}

Field family_h(std::span<const Complex> z, const DiscreteDomain& domain, const EmbeddedCurve& curve,
               double alpha_tilde) {
  BubbleField b = family_bubble(z, curve, alpha_tilde);
  if (eta_cutoff(std::sqrt(squared_norm(z))) == 0.0) return domain.zero_field();
  if (b.core_radius() < 4.0 * domain.h())
    throw std::invalid_argument("family_h: |z| too close to 1 for the grid (core radius " +
                                std::to_string(b.core_radius()) + ")");
  return b.rasterize(domain);
}

void MinmaxConfig::validate() const {
  if (k < 1 || k > 2) throw std::invalid_argument("minmax: k must be 1 or 2");
  if (!(lambda > 8.0 * k * kPi && lambda < 8.0 * (k + 1) * kPi))
    throw std::invalid_argument("minmax: lambda must lie in (8k pi, 8(k+1) pi)");
  if (!(alpha_tilde > 0.75 && alpha_tilde < 1.0)) throw std::invalid_argument("minmax: alpha_tilde must lie in (3/4, 1)");
  if (radial < 2 || angular < 1 || splits < 2) throw std::invalid_argument("minmax: sample counts too small");
  if (!(boundary_radius > 0.0 && boundary_radius < 1.0)) throw std::invalid_argument("minmax: boundary radius in (0,1)");
}

MinmaxReport minmax_upper_bound(const MinmaxConfig& config, const DiscreteDomain& domain,
                                const IntensityMeasure& measure, const EmbeddedCurve& curve) {
  config.validate();
  std::vector<double> radii;
  for (int i = 0; i < config.radial; ++i) {
    double s = static_cast<double>(i) / config.radial;
    radii.push_back(1.0 - (1.0 - s) * (1.0 - s));
  }
  std::vector<MinmaxSample> samples;
  auto add_ring = [&](double rad, bool boundary) {
    for (int a = 0; a < config.angular; ++a) {
      double th1 = 2.0 * kPi * a / config.angular;
      if (config.k == 1) {
        samples.push_back({{std::polar(rad, th1)}, rad, 0.0, 0.0, boundary});
        continue;
      }
      for (int b = 0; b < config.angular; ++b) {
        double th2 = 2.0 * kPi * b / config.angular;
        for (int s = 0; s < config.splits; ++s) {
          double t = static_cast<double>(s) / (config.splits - 1);
          samples.push_back({{std::polar(rad * std::sqrt(t), th1), std::polar(rad * std::sqrt(1.0 - t), th2)},
                             rad, 0.0, 0.0, boundary});
        }
      }
    }
  };
  for (double r : radii) add_ring(r, false);
  add_ring(config.boundary_radius, true);

  std::vector<char> failed(samples.size(), 0);
  parallel_for(static_cast<std::ptrdiff_t>(samples.size()), [&](std::ptrdiff_t i) {
    MinmaxSample& s = samples[static_cast<std::size_t>(i)];
    try {
      BubbleField b = family_bubble(s.z, curve, config.alpha_tilde);
      BubbleIntegrals in = b.integrals(domain, measure, s.boundary ? &curve : nullptr, s.boundary ? config.k : 0);
      s.j = 0.5 * in.dirichlet - config.lambda * in.log_denominator;
      if (s.boundary) {
        ComplexVector phi = vandermonde_map(s.z);
        double e = 0.0;
        for (std::size_t c = 0; c < phi.size(); ++c) e = std::max(e, std::abs(in.moments[c] - phi[c]));
        s.moment_error = e;
      }
    } catch (const std::invalid_argument&) {
      failed[static_cast<std::size_t>(i)] = 1;
    }
  });

  MinmaxReport rep;
  rep.sup = rep.interior_sup = rep.boundary_max = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (failed[i]) {
      ++rep.excluded;
      continue;
    }
    const MinmaxSample& s = samples[i];
    if (s.j > rep.sup) {
      rep.sup = s.j;
      rep.argmax = s.z;
    }
    if (s.boundary) {
      rep.boundary_max = std::max(rep.boundary_max, s.j);
      rep.boundary_moment_error = std::max(rep.boundary_moment_error, s.moment_error);
    } else {
      rep.interior_sup = std::max(rep.interior_sup, s.j);
    }
    rep.samples.push_back(s);
  }
  return rep;
}

}  // namespace mfe
