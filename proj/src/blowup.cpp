#include "mfe/blowup.hpp"

#include "mfe/energy.hpp"
#include "mfe/parallel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace mfe {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Eigen::Index argmax(const Field& u) {
  if (u.values.size() == 0) throw std::invalid_argument("field has no interior nodes");
  Eigen::Index k = 0;
  u.values.maxCoeff(&k);
  return k;
}

RescaledProfile sample_profile(const DiscreteDomain& domain, const Field& u, Vec2 center, double sigma,
                               double slope, double shift, const RescaleOptions& options) {
  if (options.half < 1 || !(options.window > 0.0)) throw std::invalid_argument("rescale: bad window");
  if (!(sigma * options.window >= 2.0 * domain.h()))
    throw std::invalid_argument("rescale: window sigma * " + std::to_string(options.window) + " = " +
                                std::to_string(sigma * options.window) + " is below 2h, profile unresolvable");
  RescaledProfile p;
  p.center = center;
  p.sigma = sigma;
  p.half = options.half;
  p.spacing = options.window / options.half;
  p.values.assign(static_cast<std::size_t>(p.side() * p.side()), kNaN);
  for (int j = -p.half; j <= p.half; ++j)
    for (int i = -p.half; i <= p.half; ++i) {
      Vec2 x = center + sigma * p.y(i, j);
      if (!domain.spec().contains(x)) continue;
      p.values[static_cast<std::size_t>((j + p.half) * p.side() + i + p.half)] =
          slope * domain.interpolate(u, x) + shift;
    }
  return p;
}

double log_denominator_of(const DiscreteDomain& domain, const Field& u, const IntensityMeasure& measure,
                          const RescaleOptions& options) {
  return options.log_denominator ? *options.log_denominator : density_terms(domain, u, measure).log_denominator();
}

}  // namespace

Field vortex_density(const DiscreteDomain& domain, const Field& u, double lambda, const IntensityMeasure& measure) {
  return nonlinearity(domain, u, lambda, measure);
}

double default_cluster_radius(const DiscreteDomain& domain, std::span<const Vec2> peaks) {
  double floor = 8.0 * domain.h();
  if (peaks.empty()) return floor;
  double sep = std::numeric_limits<double>::infinity(), wall = sep;
  for (std::size_t i = 0; i < peaks.size(); ++i) {
    wall = std::min(wall, domain.spec().distance_to_boundary(peaks[i]));
    for (std::size_t j = i + 1; j < peaks.size(); ++j) sep = std::min(sep, (peaks[i] - peaks[j]).norm());
  }
  return std::max(floor, std::min(sep / 4.0, wall / 2.0));
}

PeakSet detect_peaks(const DiscreteDomain& domain, const Field& density, double threshold_fraction,
                     std::optional<double> rho) {
  domain.check_shape(density);
  if (density.values.minCoeff() < 0.0) throw std::invalid_argument("detect_peaks: density must be nonnegative");
  if (rho && !(*rho > 0.0)) throw std::invalid_argument("detect_peaks: rho must be positive");
  PeakSet out;
  out.total_mass = domain.integrate(density);
  const Eigen::Index n = domain.size();
  if (n == 0) return out;
  double top = density.values.maxCoeff();

  std::vector<Peak> candidates;
  for (Eigen::Index k = 0; k < n; ++k) {
    double v = density.values[k];
    if (!(v > 0.0) || v < threshold_fraction * top) continue;
    auto [i, j] = domain.grid_ij(k);
    bool ge_all = true, gt_one = false;
    for (int dj = -1; dj <= 1 && ge_all; ++dj)
      for (int di = -1; di <= 1; ++di) {
        if (di == 0 && dj == 0) continue;
        int q = domain.index(i + di, j + dj);
        double w = q >= 0 ? density.values[q] : density.boundary_value;
        if (w > v) {
          ge_all = false;
          break;
        }
        if (w < v) gt_one = true;
      }
    if (ge_all && gt_one) candidates.push_back({domain.position(k), k, v, 0.0});
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Peak& a, const Peak& b) { return a.density > b.density; });

  std::vector<Peak> kept;
  for (const Peak& c : candidates)
    if (std::none_of(kept.begin(), kept.end(),
                     [&](const Peak& p) { return (p.location - c.location).norm() < 16.0 * domain.h(); }))
      kept.push_back(c);

  std::vector<Vec2> where;
  for (const Peak& p : kept) where.push_back(p.location);
  out.rho = rho ? *rho : default_cluster_radius(domain, where);
  for (const Peak& c : kept)
    if (std::none_of(out.peaks.begin(), out.peaks.end(),
                     [&](const Peak& p) { return (p.location - c.location).norm() < 2.0 * out.rho; }))
      out.peaks.push_back(c);

  std::vector<char> taken(static_cast<std::size_t>(n), 0);
  double assigned = 0.0;
  for (Peak& p : out.peaks) {
    for (Eigen::Index k = 0; k < n; ++k) {
      if (taken[static_cast<std::size_t>(k)] || (domain.position(k) - p.location).norm() >= out.rho) continue;
      taken[static_cast<std::size_t>(k)] = 1;
      p.mass += domain.weights()[k] * density.values[k];
    }
    assigned += p.mass;
  }
  out.residual_mass = out.total_mass - assigned;
  return out;
}

double pohozaev_residual(std::span<const AlphaMass> zeta) {
  double mass = 0.0, first = 0.0;
  for (const AlphaMass& z : zeta) {
    if (z.mass < 0.0) throw std::invalid_argument("pohozaev_residual: masses must be nonnegative");
    mass += z.mass;
    first += z.alpha * z.mass;
  }
  return 8.0 * kPi * mass - first * first;
}

std::vector<AlphaMass> alpha_distribution(const DiscreteDomain& domain, const Field& u, double lambda,
                                          const IntensityMeasure& measure, const Circle& ball) {
  DensityTerms t = density_terms(domain, u, measure);
  double c = lambda / t.denominator_scaled;
  std::vector<Eigen::Index> inside;
  for (Eigen::Index k = 0; k < domain.size(); ++k)
    if ((domain.position(k) - ball.center).norm() < ball.radius) inside.push_back(k);
  std::vector<AlphaMass> out;
  const IntensityMeasure nodes = measure.discretized(measure.quadrature_nodes());
  for (const Atom& a : nodes.atoms()) {
    double s = 0.0;
    for (Eigen::Index k : inside) s += domain.weights()[k] * std::exp(a.alpha * u.values[k] - t.log_shift);
    out.push_back({a.alpha, c * a.weight * s});
  }
  return out;
}

std::string to_string(Regime regime) {
  return regime == Regime::nondegenerate ? "nondegenerate" : "degenerate";
}

Regime regime_of(const IntensityMeasure& measure) {
  return measure.mass_at_one() > 0.0 ? Regime::nondegenerate : Regime::degenerate;
}

BlowupReport blowup_report(const DiscreteDomain& domain, const SolveResult& entry, const IntensityMeasure& measure,
                           double threshold_fraction, std::optional<double> rho) {
  BlowupReport r;
  r.lambda = entry.lambda;
  r.u_max = entry.u.max();
  r.regime = regime_of(measure);
  PeakSet ps = detect_peaks(domain, vortex_density(domain, entry.u, entry.lambda, measure), threshold_fraction, rho);
  r.rho = ps.rho;
  r.total_mass = ps.total_mass;
  r.residual_mass = ps.residual_mass;
  for (const Peak& p : ps.peaks) {
    PeakReport pr{p, alpha_distribution(domain, entry.u, entry.lambda, measure, {p.location, ps.rho}), 0.0};
    pr.pohozaev = pohozaev_residual(pr.zeta);
    r.peaks.push_back(std::move(pr));
  }
  return r;
}

QuantizationReport quantization_check(const DiscreteDomain& domain, const ContinuationBranch& branch,
                                      const IntensityMeasure& measure, const QuantizationConfig& config) {
  if (config.fit_points < 2) throw std::invalid_argument("quantization_check: need at least 2 fit points");
  QuantizationReport rep;
  if (branch.entries.empty()) {
    rep.verdict = "empty branch";
    return rep;
  }
  const SolveResult& last = branch.entries.back();
  if (!(last.u.max() >= config.min_amplitude)) {
    rep.verdict = "no blow-up";
    return rep;
  }
  rep.blowup = true;
  PeakSet final_peaks =
      detect_peaks(domain, vortex_density(domain, last.u, last.lambda, measure), config.threshold_fraction, config.rho);
  if (final_peaks.peaks.empty()) {
    rep.verdict = "no peaks at branch end";
    return rep;
  }
  for (const Peak& p : final_peaks.peaks) rep.peak_locations.push_back(p.location);
  const double rho = final_peaks.rho;

  rep.entries.resize(branch.entries.size());
  parallel_for(static_cast<std::ptrdiff_t>(branch.entries.size()), [&](std::ptrdiff_t i) {
    const SolveResult& e = branch.entries[static_cast<std::size_t>(i)];
    PeakSet ps = detect_peaks(domain, vortex_density(domain, e.u, e.lambda, measure), config.threshold_fraction, rho);
    QuantizationEntry q{e.lambda, e.u.max(), {}, ps.residual_mass};
    for (Vec2 target : rep.peak_locations) {
      double mass = kNaN, best = rho;
      for (const Peak& p : ps.peaks) {
        double d = (p.location - target).norm();
        if (d < best) {
          best = d;
          mass = p.mass;
        }
      }
      q.peak_mass.push_back(mass);
    }
    rep.entries[static_cast<std::size_t>(i)] = std::move(q);
  });

  std::size_t n = rep.entries.size();
  std::size_t first = n > static_cast<std::size_t>(config.fit_points) ? n - static_cast<std::size_t>(config.fit_points) : 0;
  bool ok = true;
  for (std::size_t p = 0; p < rep.peak_locations.size(); ++p) {
    std::vector<double> x, y;
    for (std::size_t i = first; i < n; ++i)
      if (std::isfinite(rep.entries[i].peak_mass[p]) && rep.entries[i].u_max > 0.0) {
        x.push_back(1.0 / rep.entries[i].u_max);
        y.push_back(rep.entries[i].peak_mass[p]);
      }
    double limit = y.empty() ? kNaN : y.back();
    if (x.size() >= 2 && x.front() != x.back()) limit = fit_line(x, y).intercept;
    rep.extrapolated_mass.push_back(limit);
    ok = ok && std::abs(limit - 8.0 * kPi) <= config.tolerance * 8.0 * kPi;
  }
  rep.residual_shrinks = rep.entries.back().residual_mass < rep.entries[first].residual_mass;
  rep.pass = ok && rep.residual_shrinks;
  rep.verdict = rep.pass ? "quantized" : "not quantized";
  return rep;
}

double RescaledProfile::exp_integral() const {
  double s = 0.0;
  for (double v : values)
    if (std::isfinite(v)) s += std::exp(v);
  return s * spacing * spacing;
}

NondegenerateRescaling rescale_nondegenerate(const DiscreteDomain& domain, const Field& u, double lambda,
                                             const IntensityMeasure& measure, const RescaleOptions& options) {
  double p1 = measure.mass_at_one();
  if (!(p1 > 0.0)) throw std::invalid_argument("rescale_nondegenerate: P({1}) must be positive");
  if (!(lambda > 0.0)) throw std::invalid_argument("rescale_nondegenerate: lambda must be positive");
  Eigen::Index top = argmax(u);
  double u_max = u.values[top];
  double log_i = log_denominator_of(domain, u, measure, options);
  double w_max = u_max - log_i;
  double sigma = std::exp(-0.5 * w_max);

  NondegenerateRescaling r;
  r.profile = sample_profile(domain, u, domain.position(top), sigma, 1.0, -log_i + 2.0 * std::log(sigma), options);
  double s = domain.boundary_strip_area() * std::exp(u.boundary_value - u_max);
  for (Eigen::Index k = 0; k < domain.size(); ++k) s += domain.weights()[k] * std::exp(u.values[k] - u_max);
  r.exp_integral = s * std::exp(w_max);
  for (Eigen::Index k = 0; k < domain.size(); ++k) {
    ExpMoments m = measure.moments(u.values[k]);
    double v = std::exp(m.log_scale - u_max) * m.m1 - p1 * std::exp(u.values[k] - u_max);
    r.perturbation_sup = std::max(r.perturbation_sup, v);
  }
  return r;
}

double degenerate_alpha(const IntensityMeasure& measure, double t) {
  if (!(t > 0.0)) throw std::invalid_argument("degenerate_alpha: max u must be positive, alpha_n is undefined");
  return measure.log_weighted_exp(t, 1) / t;
}

DegenerateRescaling rescale_degenerate(const DiscreteDomain& domain, const Field& u, double lambda,
                                       const IntensityMeasure& measure, const RescaleOptions& options) {
  Eigen::Index top = argmax(u);
  double u_max = u.values[top];
  DegenerateRescaling r;
  r.alpha_n = degenerate_alpha(measure, u_max);
  double log_i = log_denominator_of(domain, u, measure, options);
  double w_max = r.alpha_n * u_max - log_i;
  double sigma = std::exp(-0.5 * w_max);
  r.profile =
      sample_profile(domain, u, domain.position(top), sigma, r.alpha_n, -log_i + 2.0 * std::log(sigma), options);
  auto v = [&](double t) {
    ExpMoments m = measure.moments(t);
    return r.alpha_n * lambda * std::exp(m.log_scale - r.alpha_n * t) * m.m1;
  };
  r.v_at_peak = v(u_max);
  for (Eigen::Index k = 0; k < domain.size(); ++k) r.v_sup = std::max(r.v_sup, v(u.values[k]));
  r.v_sup = std::max(r.v_sup, v(u.boundary_value));
  r.v_bound = r.alpha_n * lambda * (measure.mean() + 1.0);
  return r;
}

double liouville_bubble(double delta, Vec2 xi, Vec2 y) {
  Vec2 d = y - xi;
  double q = delta * delta + d.x * d.x + d.y * d.y;
  return std::log(8.0 * delta * delta / (q * q));
}

BubbleFit bubble_fit(const RescaledProfile& profile, double window) {
  std::vector<Vec2> ys;
  std::vector<double> data;
  for (int j = -profile.half; j <= profile.half; ++j)
    for (int i = -profile.half; i <= profile.half; ++i) {
      Vec2 y = profile.y(i, j);
      double v = profile.at(i, j);
      if (std::isfinite(v) && y.norm() <= window) {
        ys.push_back(y);
        data.push_back(v);
      }
    }
  if (ys.size() < 8) throw std::invalid_argument("bubble_fit: fewer than 8 samples in the window");

  const std::size_t n = ys.size();
  std::size_t peak = static_cast<std::size_t>(std::max_element(data.begin(), data.end()) - data.begin());
  // Parameters: log delta, xi, offset.
  Eigen::Vector4d p(0.0, ys[peak].x, ys[peak].y, data[peak] - std::log(8.0));
  auto residuals = [&](const Eigen::Vector4d& q, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
    double d2 = std::exp(2.0 * q[0]);
    for (std::size_t k = 0; k < n; ++k) {
      double dx = ys[k].x - q[1], dy = ys[k].y - q[2];
      double s = d2 + dx * dx + dy * dy;
      r[static_cast<Eigen::Index>(k)] = std::log(8.0) + 2.0 * q[0] - 2.0 * std::log(s) + q[3] - data[k];
      if (jac) {
        auto row = static_cast<Eigen::Index>(k);
        (*jac)(row, 0) = 2.0 - 4.0 * d2 / s;
        (*jac)(row, 1) = 4.0 * dx / s;
        (*jac)(row, 2) = 4.0 * dy / s;
        (*jac)(row, 3) = 1.0;
      }
    }
  };

  Eigen::VectorXd r(n), trial(n);
  Eigen::MatrixXd jac(n, 4);
  residuals(p, r, &jac);
  double cost = r.squaredNorm(), mu = 1e-3;
  BubbleFit fit;
  for (fit.iterations = 0; fit.iterations < 500; ++fit.iterations) {
    Eigen::Matrix4d jtj = jac.transpose() * jac;
    Eigen::Vector4d g = jac.transpose() * r;
    if (g.lpNorm<Eigen::Infinity>() <= 1e-13 * std::max(1.0, cost)) {
      fit.converged = true;
      break;
    }
    Eigen::Matrix4d damped = jtj;
    damped.diagonal() += mu * jtj.diagonal().cwiseMax(1e-12);
    Eigen::Vector4d step = damped.ldlt().solve(-g);
    Eigen::Vector4d next = p + step;
    residuals(next, trial, nullptr);
    double c = trial.squaredNorm();
    if (c < cost) {
      bool small = cost - c <= 1e-15 * cost || step.norm() <= 1e-12 * (1.0 + p.norm());
      p = next;
      cost = c;
      residuals(p, r, &jac);
      mu = std::max(mu / 3.0, 1e-12);
      if (small) {
        fit.converged = true;
        break;
      }
    } else {
      mu *= 4.0;
      if (mu > 1e12) {
        fit.converged = step.norm() <= 1e-10 * (1.0 + p.norm());
        break;
      }
    }
  }
  fit.delta = std::exp(p[0]);
  fit.xi = {p[1], p[2]};
  fit.offset = p[3];
  fit.rms = std::sqrt(cost / static_cast<double>(n));
  fit.window = window;
  fit.points = static_cast<int>(n);
  return fit;
}

double bubble_mass(double delta, double radius) {
  if (!(delta > 0.0) || !(radius > 0.0)) throw std::invalid_argument("bubble_mass: delta and radius must be positive");
  const GaussRule& gl = gauss_legendre(16);
  // Panels [0, delta], then doubling in s out to the radius.
  std::vector<double> cuts{0.0};
  for (double s = delta; s < radius; s *= 2.0) cuts.push_back(s);
  cuts.push_back(radius);
  double total = 0.0, d2 = delta * delta;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    double a = cuts[i], b = cuts[i + 1];
    for (std::size_t q = 0; q < gl.nodes.size(); ++q) {
      double s = 0.5 * (a + b) + 0.5 * (b - a) * gl.nodes[q];
      double den = d2 + s * s;
      total += 0.5 * (b - a) * gl.weights[q] * 8.0 * d2 / (den * den) * 2.0 * kPi * s;
    }
  }
  return total;
}

ConcentrationClusters concentration_clusters(const DiscreteDomain& domain, const Field& u,
                                             const IntensityMeasure& measure, int k, double eps, double r) {
  if (k < 1) throw std::invalid_argument("concentration_clusters: k must be >= 1");
  if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("concentration_clusters: eps must lie in (0,1)");
  if (!(r > 0.0)) throw std::invalid_argument("concentration_clusters: r must be positive");
  DensityTerms t = density_terms(domain, u, measure);
  const Eigen::Index n = domain.size();
  std::vector<char> covered(static_cast<std::size_t>(n), 0);
  ConcentrationClusters out;
  out.outside = 1.0;
  for (int i = 0; i < k && out.outside >= eps; ++i) {
    Eigen::Index best = -1;
    for (Eigen::Index q = 0; q < n; ++q)
      if (!covered[static_cast<std::size_t>(q)] && (best < 0 || t.g0[q] > t.g0[best])) best = q;
    if (best < 0) break;
    Vec2 c = domain.position(best);
    double mass = 0.0;
    for (Eigen::Index q = 0; q < n; ++q) {
      if (covered[static_cast<std::size_t>(q)] || (domain.position(q) - c).norm() >= r) continue;
      covered[static_cast<std::size_t>(q)] = 1;
      mass += domain.weights()[q] * t.g0[q];
    }
    out.points.push_back(c);
    out.betas.push_back(mass / t.denominator_scaled);
    out.outside -= out.betas.back();
  }
  out.success = out.outside < eps;
  return out;
}

}  // namespace mfe
