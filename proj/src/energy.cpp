#include "mfe/energy.hpp"

#include "mfe/parallel.hpp"
#include "mfe/solver.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace mfe {

namespace {

constexpr double kPi = std::numbers::pi;

double log_sum_exp(const std::vector<double>& a) {
  double m = *std::max_element(a.begin(), a.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : a) s += std::exp(x - m);
  return m + std::log(s);
}

// Roots in (lo, hi) of |p + s d - c| = rho along the unit direction d.
void ray_circle_cuts(Vec2 p, Vec2 d, Vec2 c, double rho, double lo, double hi, std::vector<double>& out) {
  Vec2 q = c - p;
  double b = q.x * d.x + q.y * d.y;
  double disc = b * b - (q.x * q.x + q.y * q.y - rho * rho);
  if (disc <= 0.0) return;
  double sq = std::sqrt(disc);
  for (double s : {b - sq, b + sq})
    if (s > lo && s < hi) out.push_back(s);
}

double region_distance(const Circle& a, const Circle& b) {
  return (a.center - b.center).norm() - a.radius - b.radius;
}

void check_regions(const std::vector<Circle>& regions, double eps) {
  if (regions.size() < 2) throw std::invalid_argument("improved_mt_check: need at least two regions");
  for (std::size_t i = 0; i < regions.size(); ++i)
    for (std::size_t j = i + 1; j < regions.size(); ++j)
      if (!(region_distance(regions[i], regions[j]) > 0.0))
        throw std::invalid_argument("improved_mt_check: regions overlap or touch (d0 must be positive)");
  double top = 16.0 * static_cast<double>(regions.size()) * kPi;
  if (!(eps > 0.0 && eps < top)) throw std::invalid_argument("improved_mt_check: eps out of range");
}

}  // namespace

double dirichlet_energy(const DiscreteDomain& domain, const Field& u) {
  domain.check_shape(u);
  if (u.boundary_value != 0.0) throw std::invalid_argument("dirichlet_energy: field must vanish on the boundary");
  return domain.h() * domain.h() * u.values.dot(domain.laplacian() * u.values);
}

double log_denominator(const DiscreteDomain& domain, const Field& u, const IntensityMeasure& measure) {
  return density_terms(domain, u, measure).log_denominator();
}

double j_lambda(const DiscreteDomain& domain, const Field& u, double lambda, const IntensityMeasure& measure) {
  return 0.5 * dirichlet_energy(domain, u) - lambda * log_denominator(domain, u, measure);
}

Eigen::VectorXd j_lambda_gradient(const DiscreteDomain& domain, const Field& u, double lambda,
                                  const IntensityMeasure& measure) {
  return residual(domain, u, lambda, measure);
}

double mt_gap(const DiscreteDomain& domain, const Field& u, const IntensityMeasure& measure, double mt_constant) {
  if (!(mt_constant > 0.0)) throw std::invalid_argument("mt_gap: constant must be positive");
  return dirichlet_energy(domain, u) / (16.0 * kPi) + std::log(mt_constant) - log_denominator(domain, u, measure);
}

Field random_smooth_field(const DiscreteDomain& domain, std::mt19937_64& rng, int max_mode, double amplitude) {
  if (max_mode < 1 || !(amplitude > 0.0)) throw std::invalid_argument("random field: bad mode count or amplitude");
  const DomainSpec& s = domain.spec();
  bool rect = s.kind == DomainKind::rectangle || s.kind == DomainKind::rectangle_with_hole;
  Vec2 lo = rect ? s.lo : s.outer.center - Vec2{s.outer.radius, s.outer.radius};
  Vec2 hi = rect ? s.hi : s.outer.center + Vec2{s.outer.radius, s.outer.radius};
  double size = std::min(hi.x - lo.x, hi.y - lo.y);
  bool taper = !(s.kind == DomainKind::rectangle);

  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  std::vector<double> a(static_cast<std::size_t>(max_mode * max_mode));
  for (double& x : a) x = coef(rng);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double target = amplitude * (1.0 - unit(rng));  // in (0, amplitude]

  Field u = domain.sample([&](Vec2 p) {
    double sum = 0.0;
    for (int m = 1; m <= max_mode; ++m) {
      double sx = std::sin(m * kPi * (p.x - lo.x) / (hi.x - lo.x));
      for (int n = 1; n <= max_mode; ++n)
        sum += a[static_cast<std::size_t>((m - 1) * max_mode + n - 1)] * sx *
               std::sin(n * kPi * (p.y - lo.y) / (hi.y - lo.y));
    }
    if (taper) {
      double d = std::max(0.0, s.distance_to_boundary(p));
      sum *= d / (d + 0.05 * size);
    }
    return sum;
  });
  double sup = u.sup_norm();
  if (sup > 0.0) u.values *= target / sup;
  return u;
}

MtCalibration calibrate_mt_constant(const DiscreteDomain& domain, const IntensityMeasure& measure, int corpus_size,
                                    std::uint64_t seed, int max_mode, double amplitude, double margin) {
  if (corpus_size < 1) throw std::invalid_argument("calibration corpus must be non-empty");
  std::mt19937_64 rng(seed);
  MtCalibration c;
  c.corpus_size = corpus_size;
  c.max_log_ratio = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < corpus_size; ++i) {
    Field u = random_smooth_field(domain, rng, max_mode, amplitude);
    double ratio = log_denominator(domain, u, measure) - dirichlet_energy(domain, u) / (16.0 * kPi);
    c.max_log_ratio = std::max(c.max_log_ratio, ratio);
  }
  c.constant = std::exp(margin + std::max(std::log(domain.area()), c.max_log_ratio));
  return c;
}

void BarycenterConfig::validate() const {
  if (k < 1) throw std::invalid_argument("barycenter: k must be >= 1");
  if (static_cast<int>(weights.size()) != k || static_cast<int>(angles.size()) != k)
    throw std::invalid_argument("barycenter: need k weights and k angles");
  double sum = 0.0;
  for (double t : weights) {
    if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("barycenter: weights must lie in [0,1]");
    sum += t;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw std::invalid_argument("barycenter: weights must sum to 1");
  if (!(alpha_tilde > 0.75 && alpha_tilde < 1.0))
    throw std::invalid_argument("barycenter: alpha_tilde must lie in (3/4, 1)");
  if (!(r >= 0.0 && r < 1.0)) throw std::invalid_argument("barycenter: r must lie in [0,1)");
  if (!(eps0 > 0.0)) throw std::invalid_argument("barycenter: eps0 must be positive");
}

bool BarycenterConfig::valid_for(double lambda) const { return (2.0 * alpha_tilde - 1.0) * lambda > 8.0 * k * kPi; }

BubbleField::BubbleField(std::vector<Vec2> centers, std::vector<double> weights, BubbleProfile profile,
                         double parameter, double support, double alpha_tilde, double scale)
    : kind_(profile), parameter_(parameter), support_(support), alpha_tilde_(alpha_tilde), scale_(scale) {
  if (centers.empty() || centers.size() != weights.size())
    throw std::invalid_argument("bubble: need one weight per center");
  double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (std::abs(sum - 1.0) > 1e-12) throw std::invalid_argument("bubble: weights must sum to 1");
  if (!(support > 0.0)) throw std::invalid_argument("bubble: support radius must be positive");
  if (!(alpha_tilde > 0.0)) throw std::invalid_argument("bubble: alpha_tilde must be positive");
  if (!(scale >= 0.0)) throw std::invalid_argument("bubble: scale must be nonnegative");
  if (profile == BubbleProfile::plateau && !(parameter >= 0.0 && parameter < 1.0))
    throw std::invalid_argument("bubble: r must lie in [0,1)");
  if (profile == BubbleProfile::liouville && !(parameter > 0.0))
    throw std::invalid_argument("bubble: eps must be positive");
  for (std::size_t i = 0; i < centers.size(); ++i) {
    if (weights[i] < 0.0) throw std::invalid_argument("bubble: weights must be nonnegative");
    // Zero weights drop out of the log-sum; identical centers merge.
    if (weights[i] == 0.0) continue;
    auto it = std::find(centers_.begin(), centers_.end(), centers[i]);
    if (it != centers_.end()) {
      weights_[static_cast<std::size_t>(it - centers_.begin())] += weights[i];
    } else {
      centers_.push_back(centers[i]);
      weights_.push_back(weights[i]);
    }
  }
}

BubbleField BubbleField::plateau(Vec2 center, double r, double eps0) {
  return BubbleField({center}, {1.0}, BubbleProfile::plateau, r, eps0);
}

BubbleField BubbleField::barycenter(const BarycenterConfig& config, const EmbeddedCurve& curve) {
  config.validate();
  std::vector<Vec2> centers;
  for (double th : config.angles) centers.push_back(curve.gamma(th));
  return BubbleField(centers, config.weights, BubbleProfile::plateau, config.r, config.eps0, config.alpha_tilde);
}

BubbleField BubbleField::liouville(Vec2 center, double eps, double r0) {
  return BubbleField({center}, {1.0}, BubbleProfile::liouville, eps, r0);
}

double BubbleField::core_radius() const {
  return kind_ == BubbleProfile::plateau ? support_ * (1.0 - parameter_) : parameter_;
}

double BubbleField::profile(double s) const {
  if (s >= support_) return 0.0;
  if (kind_ == BubbleProfile::plateau) return 4.0 * std::log(support_ / std::max(s, core_radius()));
  double e2 = parameter_ * parameter_;
  return 2.0 * std::log((e2 + support_ * support_) / (e2 + s * s));
}

double BubbleField::profile_slope(double s) const {
  if (s >= support_) return 0.0;
  if (kind_ == BubbleProfile::plateau) return s > core_radius() ? -4.0 / s : 0.0;
  return -4.0 * s / (parameter_ * parameter_ + s * s);
}

double BubbleField::profile_max() const { return profile(0.0); }

double BubbleField::value(Vec2 x) const {
  if (centers_.size() == 1) return scale_ * profile((x - centers_[0]).norm());
  std::vector<double> a(centers_.size());
  for (std::size_t i = 0; i < centers_.size(); ++i)
    a[i] = std::log(weights_[i]) + alpha_tilde_ * profile((x - centers_[i]).norm());
  // Nonnegative in exact arithmetic; clamp the roundoff of the log-sum.
  return scale_ / alpha_tilde_ * std::max(0.0, log_sum_exp(a));
}

Vec2 BubbleField::gradient(Vec2 x) const {
  std::vector<double> a(centers_.size());
  for (std::size_t i = 0; i < centers_.size(); ++i)
    a[i] = std::log(weights_[i]) + alpha_tilde_ * profile((x - centers_[i]).norm());
  double lse = log_sum_exp(a);
  Vec2 g;
  for (std::size_t i = 0; i < centers_.size(); ++i) {
    Vec2 q = x - centers_[i];
    double s = q.norm();
    if (s == 0.0) continue;
    double w = std::exp(a[i] - lse) * profile_slope(s) / s;
    g = g + w * q;
  }
  return scale_ * g;
}

Field BubbleField::rasterize(const DiscreteDomain& domain) const {
  if (core_radius() < 4.0 * domain.h())
    throw std::invalid_argument("bubble: core radius " + std::to_string(core_radius()) +
                                " spans fewer than 4 grid cells");
  return domain.sample([this](Vec2 p) { return value(p); });
}

BubbleIntegrals BubbleField::integrals(const DiscreteDomain& domain, const IntensityMeasure& measure,
                                       const EmbeddedCurve* curve, int max_moment,
                                       const std::vector<Circle>& probes) const {
  for (Vec2 c : centers_)
    if (domain.spec().distance_to_boundary(c) < support_ * (1.0 - 1e-12))
      throw std::invalid_argument("bubble: support leaves the domain");
  if (max_moment > 0 && !curve) throw std::invalid_argument("bubble: moments need an embedded curve");

  const GaussRule& gl = gauss_legendre(16);
  bool radial = centers_.size() == 1 &&
                std::all_of(probes.begin(), probes.end(), [&](const Circle& p) { return p.center == centers_[0]; });
  const int n_theta = radial ? 2 * max_moment + 4 : 512;

  double energy = 0.0, excess = 0.0;
  std::vector<std::complex<double>> mom(static_cast<std::size_t>(max_moment), 0.0);
  std::vector<double> probe_excess(probes.size(), 0.0);

  auto visit = [&](Vec2 x, double weight) {
    double u = value(x);
    Vec2 g = gradient(x);
    energy += (g.x * g.x + g.y * g.y) * weight;
    ExpMoments m = measure.moments(u);
    double ex = std::exp(m.log_scale) * m.m0 - 1.0;
    excess += ex * weight;
    if (max_moment > 0) {
      std::complex<double> chi = curve->chi(x), pw = 1.0;
      for (int j = 0; j < max_moment; ++j) {
        pw *= chi;
        mom[static_cast<std::size_t>(j)] += pw * (ex * weight);
      }
    }
    for (std::size_t p = 0; p < probes.size(); ++p)
      if ((x - probes[p].center).norm() < probes[p].radius) probe_excess[p] += ex * weight;
  };

  for (std::size_t i = 0; i < centers_.size(); ++i) {
    Vec2 c = centers_[i];
    for (int t = 0; t < n_theta; ++t) {
      double th = 2.0 * kPi * t / n_theta;
      Vec2 d{std::cos(th), std::sin(th)};
      double len = support_;
      for (std::size_t j = 0; j < centers_.size(); ++j) {
        if (j == i) continue;
        Vec2 q = centers_[j] - c;
        double proj = q.x * d.x + q.y * d.y;
        if (proj > 0.0) len = std::min(len, 0.5 * (q.x * q.x + q.y * q.y) / proj);
      }
      std::vector<double> cuts{0.0, len};
      if (core_radius() < len) cuts.push_back(core_radius());
      for (std::size_t j = 0; j < centers_.size(); ++j) {
        if (j == i) continue;
        ray_circle_cuts(c, d, centers_[j], core_radius(), 0.0, len, cuts);
        ray_circle_cuts(c, d, centers_[j], support_, 0.0, len, cuts);
      }
      for (const Circle& p : probes) ray_circle_cuts(c, d, p.center, p.radius, 0.0, len, cuts);
      std::sort(cuts.begin(), cuts.end());
      const double dtheta = 2.0 * kPi / n_theta;
      for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
        double a = cuts[k], b = cuts[k + 1];
        if (!(b > a)) continue;
        if (a == 0.0) {
          for (std::size_t q = 0; q < gl.nodes.size(); ++q) {
            double s = 0.5 * b * (1.0 + gl.nodes[q]);
            visit(c + s * d, 0.5 * b * gl.weights[q] * s * dtheta);
          }
          continue;
        }
        // Log-spaced panels of width <= 1 resolve the 1/s layers.
        double la = std::log(a), lb = std::log(b);
        int panels = std::max(1, static_cast<int>(std::ceil(lb - la)));
        double w = (lb - la) / panels;
        for (int pnl = 0; pnl < panels; ++pnl) {
          double mid = la + (pnl + 0.5) * w;
          for (std::size_t q = 0; q < gl.nodes.size(); ++q) {
            double s = std::exp(mid + 0.5 * w * gl.nodes[q]);
            visit(c + s * d, 0.5 * w * gl.weights[q] * s * s * dtheta);
          }
        }
      }
    }
  }

  BubbleIntegrals out;
  out.dirichlet = energy;
  double total = domain.area() + excess;
  if (!(total > 0.0) || !std::isfinite(total)) throw std::runtime_error("bubble: denominator not finite");
  out.log_denominator = std::log(total);
  if (max_moment > 0) {
    out.moments.resize(static_cast<std::size_t>(max_moment));
    for (int j = 0; j < max_moment; ++j) {
      std::complex<double> bg = 0.0;
      for (Eigen::Index k = 0; k < domain.size(); ++k)
        bg += domain.weights()[k] * std::pow(curve->chi(domain.position(k)), j + 1);
      out.moments[static_cast<std::size_t>(j)] = (bg + mom[static_cast<std::size_t>(j)]) / total;
    }
  }
  for (std::size_t p = 0; p < probes.size(); ++p) {
    const Circle& pr = probes[p];
    double base = 0.0;
    if (domain.spec().distance_to_boundary(pr.center) >= pr.radius) {
      base = kPi * pr.radius * pr.radius;
    } else {
      for (Eigen::Index k = 0; k < domain.size(); ++k)
        if ((domain.position(k) - pr.center).norm() < pr.radius) base += domain.weights()[k];
    }
    out.probe_mass.push_back((base + probe_excess[p]) / total);
  }
  return out;
}

double BubbleField::j_lambda(const DiscreteDomain& domain, double lambda, const IntensityMeasure& measure) const {
  BubbleIntegrals i = integrals(domain, measure);
  return 0.5 * i.dirichlet - lambda * i.log_denominator;
}

Field test_bubble(double theta, double r, const DiscreteDomain& domain, const EmbeddedCurve& curve) {
  return BubbleField::plateau(curve.gamma(theta), r, curve.eps0).rasterize(domain);
}

Field barycenter_test_fn(const BarycenterConfig& config, const DiscreteDomain& domain, const EmbeddedCurve& curve) {
  return BubbleField::barycenter(config, curve).rasterize(domain);
}

namespace {

ImprovedMtReport finish_report(std::vector<double> masses, double a0, std::size_t regions, double eps,
                               double log_i, double energy) {
  ImprovedMtReport r;
  r.region_mass = std::move(masses);
  r.hypothesis_holds = std::all_of(r.region_mass.begin(), r.region_mass.end(), [a0](double m) { return m >= a0; });
  r.coefficient = 1.0 / (16.0 * static_cast<double>(regions) * kPi - eps);
  r.k_constant = log_i - r.coefficient * energy;
  r.naive_constant = log_i - energy / (16.0 * kPi);
  return r;
}

}  // namespace

ImprovedMtReport improved_mt_check(const DiscreteDomain& domain, const Field& u, const IntensityMeasure& measure,
                                   const std::vector<Circle>& regions, double a0, double eps) {
  check_regions(regions, eps);
  if (!(a0 > 0.0 && a0 < 1.0)) throw std::invalid_argument("improved_mt_check: a0 must lie in (0,1)");
  DensityTerms t = density_terms(domain, u, measure);
  std::vector<double> masses;
  for (const Circle& c : regions) {
    double m = 0.0;
    for (Eigen::Index k = 0; k < domain.size(); ++k)
      if ((domain.position(k) - c.center).norm() < c.radius) m += domain.weights()[k] * t.g0[k];
    masses.push_back(m / t.denominator_scaled);
  }
  return finish_report(std::move(masses), a0, regions.size(), eps, t.log_denominator(), dirichlet_energy(domain, u));
}

ImprovedMtReport improved_mt_check(const DiscreteDomain& domain, const BubbleField& u, const IntensityMeasure& measure,
                                   const std::vector<Circle>& regions, double a0, double eps) {
  check_regions(regions, eps);
  if (!(a0 > 0.0 && a0 < 1.0)) throw std::invalid_argument("improved_mt_check: a0 must lie in (0,1)");
  BubbleIntegrals in = u.integrals(domain, measure, nullptr, 0, regions);
  return finish_report(in.probe_mass, a0, regions.size(), eps, in.log_denominator, in.dirichlet);
}

SlopeFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_line: need matching samples, n >= 2");
  double n = static_cast<double>(x.size());
  double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw std::invalid_argument("fit_line: x values are all equal");
  SlopeFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  if (x.size() > 2) {
    double ss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      double e = y[i] - f.intercept - f.slope * x[i];
      ss += e * e;
    }
    f.stderr_slope = std::sqrt(ss / (n - 2.0) / sxx);
  }
  return f;
}

std::vector<double> geometric_r_ladder(int m_min, int m_max) {
  std::vector<double> r;
  for (int m = m_min; m <= m_max; ++m) r.push_back(1.0 - std::ldexp(1.0, -m));
  return r;
}

AsymptoticsReport jlambda_asymptotics(const BarycenterConfig& base, const std::vector<double>& r_values, double lambda,
                                      const IntensityMeasure& measure, const DiscreteDomain& domain,
                                      const EmbeddedCurve& curve, double gradient_tol, double log_denominator_tol,
                                      double j_tol) {
  if (r_values.size() < 4) throw std::invalid_argument("jlambda_asymptotics: sweep needs at least 4 values of r");
  base.validate();
  AsymptoticsReport rep;
  rep.rows.resize(r_values.size());
  parallel_for(static_cast<std::ptrdiff_t>(r_values.size()), [&](std::ptrdiff_t i) {
    BarycenterConfig cfg = base;
    cfg.r = r_values[static_cast<std::size_t>(i)];
    BubbleIntegrals in = BubbleField::barycenter(cfg, curve).integrals(domain, measure);
    rep.rows[static_cast<std::size_t>(i)] = {cfg.r, std::log(1.0 / (1.0 - cfg.r)), in.dirichlet, in.log_denominator,
                                            0.5 * in.dirichlet - lambda * in.log_denominator};
  });
  std::vector<double> x, e, li, jj;
  for (const AsymptoticsRow& row : rep.rows) {
    x.push_back(row.log_scale);
    e.push_back(row.dirichlet);
    li.push_back(row.log_denominator);
    jj.push_back(row.j);
  }
  rep.gradient_fit = fit_line(x, e);
  rep.log_denominator_fit = fit_line(x, li);
  rep.j_fit = fit_line(x, jj);
  double k = base.k;
  rep.gradient_bound = 32.0 * k * kPi;
  rep.log_denominator_bound = 4.0 * base.alpha_tilde - 2.0;
  rep.j_bound = 2.0 * (8.0 * k * kPi - (2.0 * base.alpha_tilde - 1.0) * lambda);
  rep.gradient_ok = std::abs(rep.gradient_fit.slope - rep.gradient_bound) <= gradient_tol * rep.gradient_bound;
  rep.log_denominator_ok = std::abs(rep.log_denominator_fit.slope - rep.log_denominator_bound) <=
                           log_denominator_tol * rep.log_denominator_bound;
  rep.j_ok = rep.j_fit.slope <= rep.j_bound + j_tol * std::abs(rep.j_bound);
  rep.diverges = rep.j_fit.slope < 0.0;
  rep.condition_holds = base.valid_for(lambda);
  return rep;
}

}  // namespace mfe
