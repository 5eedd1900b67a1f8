#include "mfe/measure.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <numbers>
#include <string>

namespace mfe {

namespace {

constexpr int kMaxGaussOrder = 64;
// Panels are split so that |t| * width stays below this; 12-point
// Gauss-Legendre is then accurate to roundoff for alpha^m p(alpha) e^{alpha t}.
constexpr double kMaxPanelExponent = 3.0;
constexpr int kPanelOrder = 12;

GaussRule build_gauss(int n) {
  GaussRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) {
        p1 = x;
        p0 = 1.0;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  if (n == 1) {
    rule.nodes = {0.0};
    rule.weights = {2.0};
  }
  return rule;
}

bool positive_piece(double va, double vb) { return va > 0.0 || vb > 0.0; }

}  // namespace

const GaussRule& gauss_legendre(int n) {
  static const std::vector<GaussRule> table = [] {
    std::vector<GaussRule> t(kMaxGaussOrder + 1);
    for (int k = 1; k <= kMaxGaussOrder; ++k) t[k] = build_gauss(k);
    return t;
  }();
  if (n < 1 || n > kMaxGaussOrder)
    throw std::invalid_argument("gauss_legendre: order must be in [1, 64]");
  return table[n];
}

double PiecewiseLinearDensity::integral() const {
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i)
    sum += 0.5 * (values[i] + values[i + 1]) * (breakpoints[i + 1] - breakpoints[i]);
  return sum;
}

double PiecewiseLinearDensity::operator()(double alpha) const {
  if (empty() || alpha < breakpoints.front() || alpha > breakpoints.back()) return 0.0;
  for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i) {
    double a = breakpoints[i], b = breakpoints[i + 1];
    if (alpha >= a && alpha <= b && b > a)
      return values[i] + (values[i + 1] - values[i]) * (alpha - a) / (b - a);
  }
  return 0.0;
}

IntensityMeasure::IntensityMeasure(std::vector<Atom> atoms, PiecewiseLinearDensity density,
                                   int quadrature_nodes)
    : density_(std::move(density)), quadrature_nodes_(quadrature_nodes) {
  if (quadrature_nodes_ < 2)
    throw std::invalid_argument("measure: quadrature_nodes must be >= 2");
  for (const Atom& a : atoms) {
    if (!std::isfinite(a.alpha) || a.alpha < 0.0 || a.alpha > 1.0)
      throw std::invalid_argument("measure: atom location " + std::to_string(a.alpha) +
                                  " outside [0,1]");
    if (!std::isfinite(a.weight) || a.weight <= 0.0)
      throw std::invalid_argument("measure: atom weights must be positive");
  }
  std::sort(atoms.begin(), atoms.end(),
            [](const Atom& x, const Atom& y) { return x.alpha < y.alpha; });
  for (const Atom& a : atoms) {
    if (!atoms_.empty() && atoms_.back().alpha == a.alpha)
      atoms_.back().weight += a.weight;
    else
      atoms_.push_back(a);
  }

  auto& bp = density_.breakpoints;
  auto& val = density_.values;
  if (bp.size() != val.size())
    throw std::invalid_argument("measure: density breakpoints and values differ in length");
  if (bp.size() < 2) {
    bp.clear();
    val.clear();
  }
  for (std::size_t i = 0; i < bp.size(); ++i) {
    if (!std::isfinite(bp[i]) || bp[i] < 0.0 || bp[i] > 1.0)
      throw std::invalid_argument("measure: density breakpoints must lie in [0,1]");
    if (i > 0 && bp[i] < bp[i - 1])
      throw std::invalid_argument("measure: density breakpoints must be non-decreasing");
    if (!std::isfinite(val[i]) || val[i] < 0.0)
      throw std::invalid_argument("measure: density values must be nonnegative");
  }

  double total = total_mass();
  if (std::abs(total - 1.0) > kMassTolerance)
    throw std::invalid_argument("measure: total mass " + std::to_string(total) +
                                " differs from 1");

  sup_ = -1.0;
  inf_ = 2.0;
  if (!atoms_.empty()) {
    sup_ = atoms_.back().alpha;
    inf_ = atoms_.front().alpha;
  }
  for (std::size_t i = 0; i + 1 < bp.size(); ++i) {
    if (bp[i + 1] > bp[i] && positive_piece(val[i], val[i + 1])) {
      sup_ = std::max(sup_, bp[i + 1]);
      inf_ = std::min(inf_, bp[i]);
    }
  }
}

IntensityMeasure IntensityMeasure::dirac(double alpha) {
  return IntensityMeasure({{alpha, 1.0}}, {});
}

IntensityMeasure IntensityMeasure::uniform(double lo, double hi) {
  if (!(hi > lo)) throw std::invalid_argument("measure: uniform needs lo < hi");
  double v = 1.0 / (hi - lo);
  return IntensityMeasure({}, {{lo, hi}, {v, v}});
}

IntensityMeasure IntensityMeasure::atomic(std::vector<Atom> atoms) {
  return IntensityMeasure(std::move(atoms), {});
}

double IntensityMeasure::total_mass() const {
  double sum = 0.0;
  for (const Atom& a : atoms_) sum += a.weight;
  return sum + density_.integral();
}

double IntensityMeasure::sup_support() const { return sup_; }
double IntensityMeasure::inf_support() const { return inf_; }

ExpMoments IntensityMeasure::moments(double t) const {
  ExpMoments out;
  out.log_scale = t >= 0.0 ? t * sup_ : t * inf_;
  for (const Atom& a : atoms_) {
    double e = a.weight * std::exp(a.alpha * t - out.log_scale);
    out.m0 += e;
    out.m1 += a.alpha * e;
    out.m2 += a.alpha * a.alpha * e;
  }
  const auto& bp = density_.breakpoints;
  const auto& val = density_.values;
  const GaussRule& rule = gauss_legendre(kPanelOrder);
  for (std::size_t i = 0; i + 1 < bp.size(); ++i) {
    double a = bp[i], b = bp[i + 1];
    if (!(b > a) || !positive_piece(val[i], val[i + 1])) continue;
    double slope = (val[i + 1] - val[i]) / (b - a);
    int panels = std::max(1, static_cast<int>(std::ceil(std::abs(t) * (b - a) / kMaxPanelExponent)));
    double width = (b - a) / panels;
    for (int p = 0; p < panels; ++p) {
      double lo = a + p * width;
      double mid = lo + 0.5 * width;
      for (int q = 0; q < kPanelOrder; ++q) {
        double x = mid + 0.5 * width * rule.nodes[q];
        double dens = val[i] + slope * (x - a);
        double e = 0.5 * width * rule.weights[q] * dens * std::exp(x * t - out.log_scale);
        out.m0 += e;
        out.m1 += x * e;
        out.m2 += x * x * e;
      }
    }
  }
  return out;
}

double IntensityMeasure::log_weighted_exp(double t, int moment) const {
  if (!std::isfinite(t)) throw std::invalid_argument("weighted_exp: t must be finite");
  ExpMoments m = moments(t);
  double v = moment == 0 ? m.m0 : moment == 1 ? m.m1 : moment == 2 ? m.m2 : -1.0;
  if (v < 0.0) throw std::invalid_argument("weighted_exp: moment must be 0, 1 or 2");
  return m.log_scale + std::log(v);
}

double IntensityMeasure::weighted_exp(double t, int moment) const {
  double lv = log_weighted_exp(t, moment);
  if (lv > std::log(DBL_MAX))
    throw MomentOverflow("weighted_exp: e^{alpha t} moment overflows at t = " +
                         std::to_string(t) + "; use log_weighted_exp");
  return std::exp(lv);
}

double IntensityMeasure::interval_mass(double lo, double hi) const {
  double sum = 0.0;
  for (const Atom& a : atoms_)
    if (a.alpha >= lo && a.alpha <= hi) sum += a.weight;
  const auto& bp = density_.breakpoints;
  for (std::size_t i = 0; i + 1 < bp.size(); ++i) {
    double a = std::max(bp[i], lo), b = std::min(bp[i + 1], hi);
    if (b <= a) continue;
    const auto& val = density_.values;
    double slope = (val[i + 1] - val[i]) / (bp[i + 1] - bp[i]);
    double fa = val[i] + slope * (a - bp[i]), fb = val[i] + slope * (b - bp[i]);
    sum += 0.5 * (fa + fb) * (b - a);
  }
  return sum;
}

double IntensityMeasure::tail_mass(double eps) const {
  if (!(eps > 0.0 && eps <= 1.0)) throw std::invalid_argument("tail_mass: eps must be in (0,1]");
  return interval_mass(1.0 - eps, 1.0);
}

double IntensityMeasure::mass_at_one() const {
  double sum = 0.0;
  for (const Atom& a : atoms_)
    if (a.alpha == 1.0) sum += a.weight;
  return sum;
}

double IntensityMeasure::mean() const { return std::exp(log_weighted_exp(0.0, 1)); }

IntensityMeasure IntensityMeasure::discretized(int nodes) const {
  if (nodes < 2) throw std::invalid_argument("discretized: need at least 2 nodes per piece");
  std::vector<Atom> atoms = atoms_;
  const auto& bp = density_.breakpoints;
  const auto& val = density_.values;
  for (std::size_t i = 0; i + 1 < bp.size(); ++i) {
    double a = bp[i], b = bp[i + 1];
    if (!(b > a) || !positive_piece(val[i], val[i + 1])) continue;
    double step = (b - a) / (nodes - 1);
    for (int j = 0; j < nodes; ++j) {
      double x = j == nodes - 1 ? b : a + j * step;
      double dens = val[i] + (val[i + 1] - val[i]) * (x - a) / (b - a);
      double w = dens * step * ((j == 0 || j == nodes - 1) ? 0.5 : 1.0);
      if (w > 0.0) atoms.push_back({x, w});
    }
  }
  return IntensityMeasure(std::move(atoms), {}, quadrature_nodes_);
}

std::pair<IntensityMeasure, double> normalize_support(const IntensityMeasure& measure,
                                                      double lambda) {
  double top = measure.sup_support();
  if (!(top > 0.0))
    throw std::invalid_argument(
        "normalize_support: all mass at alpha = 0, the problem degenerates to -Lap u = 0");
  if (top == 1.0) return {measure, lambda};

  std::vector<Atom> atoms;
  for (const Atom& a : measure.atoms()) atoms.push_back({std::min(1.0, a.alpha / top), a.weight});

  PiecewiseLinearDensity dens;
  const auto& src = measure.density();
  for (std::size_t i = 0; i < src.breakpoints.size(); ++i) {
    if (src.breakpoints[i] > top) break;
    dens.breakpoints.push_back(std::min(1.0, src.breakpoints[i] / top));
    dens.values.push_back(src.values[i] * top);
  }
  return {IntensityMeasure(std::move(atoms), std::move(dens), measure.quadrature_nodes()),
          top * top * lambda};
}

}  // namespace mfe
