#include "mfe/domain.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace mfe {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Distance along unit direction d from p (inside c) to the circle.
double circle_exit(const Circle& c, Vec2 p, Vec2 d) {
  Vec2 q = p - c.center;
  double b = q.x * d.x + q.y * d.y;
  double cc = q.x * q.x + q.y * q.y - c.radius * c.radius;
  double disc = std::max(0.0, b * b - cc);
  return -b + std::sqrt(disc);
}

// Distance along d from p (outside c) to the first hit of the circle, or inf.
double circle_entry(const Circle& c, Vec2 p, Vec2 d) {
  Vec2 q = p - c.center;
  double b = q.x * d.x + q.y * d.y;
  double cc = q.x * q.x + q.y * q.y - c.radius * c.radius;
  double disc = b * b - cc;
  if (disc < 0.0 || b >= 0.0) return kInf;
  // Stable smaller root: cc / (-b + sqrt(disc)).
  return cc / (-b + std::sqrt(disc));
}

double box_overlap(double a0, double a1, double b0, double b1) {
  return std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
}

}  // namespace

double Vec2::norm() const { return std::hypot(x, y); }

std::string to_string(DomainKind kind) {
  switch (kind) {
    case DomainKind::rectangle: return "rectangle";
    case DomainKind::disk: return "disk";
    case DomainKind::annulus: return "annulus";
    case DomainKind::rectangle_with_hole: return "rectangle_with_hole";
  }
  return "unknown";
}

DomainKind domain_kind_from_string(const std::string& name) {
  if (name == "rectangle") return DomainKind::rectangle;
  if (name == "disk") return DomainKind::disk;
  if (name == "annulus") return DomainKind::annulus;
  if (name == "rectangle_with_hole") return DomainKind::rectangle_with_hole;
  throw std::invalid_argument("unknown domain kind '" + name + "'");
}

DomainSpec DomainSpec::rectangle(Vec2 lo, Vec2 hi, double h) {
  DomainSpec s;
  s.kind = DomainKind::rectangle;
  s.lo = lo;
  s.hi = hi;
  s.h = h;
  s.validate();
  return s;
}

DomainSpec DomainSpec::disk(Vec2 center, double radius, double h) {
  DomainSpec s;
  s.kind = DomainKind::disk;
  s.outer = {center, radius};
  s.h = h;
  s.validate();
  return s;
}

DomainSpec DomainSpec::annulus(Vec2 center, double r_inner, double r_outer, double h) {
  DomainSpec s;
  s.kind = DomainKind::annulus;
  s.outer = {center, r_outer};
  s.hole = Circle{center, r_inner};
  s.h = h;
  s.validate();
  return s;
}

DomainSpec DomainSpec::rectangle_with_hole(Vec2 lo, Vec2 hi, Circle hole, double h) {
  DomainSpec s;
  s.kind = DomainKind::rectangle_with_hole;
  s.lo = lo;
  s.hi = hi;
  s.hole = hole;
  s.h = h;
  s.validate();
  return s;
}

void DomainSpec::validate() const {
  if (!(h > 0.0) || !std::isfinite(h)) throw std::invalid_argument("domain.h must be positive");
  bool rect = kind == DomainKind::rectangle || kind == DomainKind::rectangle_with_hole;
  if (rect && !(hi.x > lo.x && hi.y > lo.y))
    throw std::invalid_argument("domain: rectangle needs lo < hi in both axes");
  if (!rect && !(outer.radius > 0.0)) throw std::invalid_argument("domain: radius must be positive");
  bool holed = kind == DomainKind::annulus || kind == DomainKind::rectangle_with_hole;
  if (holed != hole.has_value())
    throw std::invalid_argument("domain: hole descriptor required exactly for " +
                                std::string("annulus and rectangle_with_hole"));
  if (hole) {
    if (!(hole->radius > 0.0)) throw std::invalid_argument("domain: hole radius must be positive");
    double margin = rect ? std::min({hole->center.x - lo.x, hi.x - hole->center.x,
                                     hole->center.y - lo.y, hi.y - hole->center.y})
                         : outer.radius - (hole->center - outer.center).norm();
    if (!(margin > hole->radius))
      throw std::invalid_argument("domain: hole must lie strictly inside the outer boundary");
  }
  double extent = rect ? std::min(hi.x - lo.x, hi.y - lo.y) : 2.0 * outer.radius;
  if (extent / h < 4.0) throw std::invalid_argument("domain: fewer than 4 cells across");
}

bool DomainSpec::contains(Vec2 p) const {
  bool in_outer = false;
  if (kind == DomainKind::rectangle || kind == DomainKind::rectangle_with_hole) {
    in_outer = p.x > lo.x && p.x < hi.x && p.y > lo.y && p.y < hi.y;
  } else {
    in_outer = (p - outer.center).norm() < outer.radius;
  }
  if (!in_outer) return false;
  if (hole) return (p - hole->center).norm() > hole->radius;
  return true;
}

double DomainSpec::distance_to_boundary(Vec2 p) const {
  double d = 0.0;
  if (kind == DomainKind::rectangle || kind == DomainKind::rectangle_with_hole)
    d = std::min({p.x - lo.x, hi.x - p.x, p.y - lo.y, hi.y - p.y});
  else
    d = outer.radius - (p - outer.center).norm();
  if (hole) d = std::min(d, (p - hole->center).norm() - hole->radius);
  return d;
}

double DomainSpec::exit_distance(Vec2 p, int dx, int dy) const {
  Vec2 d{static_cast<double>(dx), static_cast<double>(dy)};
  double s = kInf;
  if (kind == DomainKind::rectangle || kind == DomainKind::rectangle_with_hole) {
    if (dx > 0) s = hi.x - p.x;
    if (dx < 0) s = p.x - lo.x;
    if (dy > 0) s = hi.y - p.y;
    if (dy < 0) s = p.y - lo.y;
  } else {
    s = circle_exit(outer, p, d);
  }
  if (hole) s = std::min(s, circle_entry(*hole, p, d));
  return s;
}

double disk_box_area(const Circle& c, double xa, double xb, double ya, double yb) {
  double r = c.radius;
  xa = std::max(xa - c.center.x, -r);
  xb = std::min(xb - c.center.x, r);
  ya -= c.center.y;
  yb -= c.center.y;
  if (xb <= xa || yb <= ya || yb <= -r || ya >= r) return 0.0;

  std::vector<double> cuts{xa, xb};
  for (double y : {ya, yb}) {
    if (std::abs(y) < r) {
      double t = std::sqrt(r * r - y * y);
      for (double s : {-t, t})
        if (s > xa && s < xb) cuts.push_back(s);
    }
  }
  std::sort(cuts.begin(), cuts.end());

  auto chord = [r](double t) { return std::sqrt(std::max(0.0, r * r - t * t)); };
  // Antiderivative of sqrt(r^2 - t^2).
  auto prim = [r, &chord](double t) {
    double u = std::clamp(t / r, -1.0, 1.0);
    return 0.5 * (t * chord(t) + r * r * std::asin(u));
  };

  double area = 0.0;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    double t0 = cuts[k], t1 = cuts[k + 1];
    if (t1 <= t0) continue;
    double c_mid = chord(0.5 * (t0 + t1));
    bool top_is_circle = c_mid < yb;
    bool bottom_is_circle = -c_mid > ya;
    double top_mid = top_is_circle ? c_mid : yb;
    double bottom_mid = bottom_is_circle ? -c_mid : ya;
    if (top_mid <= bottom_mid) continue;
    double circ = prim(t1) - prim(t0);
    double top = top_is_circle ? circ : yb * (t1 - t0);
    double bottom = bottom_is_circle ? -circ : ya * (t1 - t0);
    area += top - bottom;
  }
  return std::max(0.0, area);
}

double DomainSpec::area_in_box(double xa, double xb, double ya, double yb) const {
  double a = 0.0;
  if (kind == DomainKind::rectangle || kind == DomainKind::rectangle_with_hole)
    a = box_overlap(xa, xb, lo.x, hi.x) * box_overlap(ya, yb, lo.y, hi.y);
  else
    a = disk_box_area(outer, xa, xb, ya, yb);
  // The hole lies inside the outer boundary, so it can be subtracted directly.
  if (hole) a -= disk_box_area(*hole, xa, xb, ya, yb);
  return std::max(0.0, a);
}

double DomainSpec::area() const {
  double a = (kind == DomainKind::rectangle || kind == DomainKind::rectangle_with_hole)
                 ? (hi.x - lo.x) * (hi.y - lo.y)
                 : std::numbers::pi * outer.radius * outer.radius;
  if (hole) a -= std::numbers::pi * hole->radius * hole->radius;
  return a;
}

double Field::max() const { return values.size() ? std::max(values.maxCoeff(), boundary_value) : boundary_value; }
double Field::min() const { return values.size() ? std::min(values.minCoeff(), boundary_value) : boundary_value; }
double Field::sup_norm() const {
  double m = std::abs(boundary_value);
  return values.size() ? std::max(m, values.cwiseAbs().maxCoeff()) : m;
}

DiscreteDomain::DiscreteDomain(DomainSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  const double h = spec_.h;
  if (spec_.kind == DomainKind::disk || spec_.kind == DomainKind::annulus) {
    // Center the lattice on the disk so radial data stay lattice-symmetric.
    int m = static_cast<int>(std::ceil(spec_.outer.radius / h)) + 1;
    origin_ = {spec_.outer.center.x - m * h, spec_.outer.center.y - m * h};
    nx_ = ny_ = 2 * m + 1;
  } else {
    origin_ = {spec_.lo.x - h, spec_.lo.y - h};
    nx_ = static_cast<int>(std::ceil((spec_.hi.x - spec_.lo.x) / h - 1e-9)) + 3;
    ny_ = static_cast<int>(std::ceil((spec_.hi.y - spec_.lo.y) / h - 1e-9)) + 3;
  }

  constexpr int dirs[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
  index_.assign(static_cast<std::size_t>(nx_) * ny_, -1);
  for (int j = 0; j < ny_; ++j) {
    for (int i = 0; i < nx_; ++i) {
      Vec2 p = node(i, j);
      if (!spec_.contains(p)) continue;
      bool ok = true;
      for (const auto& d : dirs)
        if (spec_.exit_distance(p, d[0], d[1]) < kMinArm * h) ok = false;
      if (!ok) continue;
      index_[static_cast<std::size_t>(j) * nx_ + i] = static_cast<int>(cells_.size());
      cells_.push_back({i, j});
    }
  }
  const Eigen::Index n = size();
  if (n == 0) throw std::invalid_argument("domain: no interior nodes at this h");

  weights_.resize(n);
  arm_coeff_ = Eigen::VectorXd::Zero(n);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(n) * 5);
  const double inv_h2 = 1.0 / (h * h);
  for (Eigen::Index k = 0; k < n; ++k) {
    auto [i, j] = grid_ij(k);
    Vec2 p = node(i, j);
    weights_[k] = spec_.area_in_box(p.x - 0.5 * h, p.x + 0.5 * h, p.y - 0.5 * h, p.y + 0.5 * h);
    double diag = 0.0;
    for (const auto& d : dirs) {
      int q = index(i + d[0], j + d[1]);
      double s = spec_.exit_distance(p, d[0], d[1]);
      if (q >= 0 && s >= h) {
        trip.emplace_back(k, q, -inv_h2);
        diag += inv_h2;
      } else {
        double c = 1.0 / (h * std::min(s, h));
        arm_coeff_[k] += c;
        diag += c;
      }
    }
    trip.emplace_back(k, k, diag);
  }
  laplacian_.resize(n, n);
  laplacian_.setFromTriplets(trip.begin(), trip.end());
  laplacian_.makeCompressed();

  area_ = spec_.area();
  strip_area_ = 0.0;
  for (int j = 0; j < ny_; ++j) {
    for (int i = 0; i < nx_; ++i) {
      if (is_interior(i, j)) continue;
      Vec2 p = node(i, j);
      strip_area_ += spec_.area_in_box(p.x - 0.5 * h, p.x + 0.5 * h, p.y - 0.5 * h, p.y + 0.5 * h);
    }
  }
}

int DiscreteDomain::index(int i, int j) const {
  if (i < 0 || j < 0 || i >= nx_ || j >= ny_) return -1;
  return index_[static_cast<std::size_t>(j) * nx_ + i];
}

void DiscreteDomain::check_shape(const Field& f) const {
  if (f.values.size() != size())
    throw std::invalid_argument("field has " + std::to_string(f.values.size()) +
                                " values, domain has " + std::to_string(size()) + " interior nodes");
}

Field DiscreteDomain::zero_field() const { return Field{Eigen::VectorXd::Zero(size()), 0.0}; }

Field DiscreteDomain::sample(const std::function<double(Vec2)>& f) const {
  Field out = zero_field();
  for (Eigen::Index k = 0; k < size(); ++k) out.values[k] = f(position(k));
  return out;
}

double DiscreteDomain::integrate(const Field& f) const {
  check_shape(f);
  return weights_.dot(f.values) + strip_area_ * f.boundary_value;
}

double DiscreteDomain::interpolate(const Field& f, Vec2 p) const {
  check_shape(f);
  double gx = (p.x - origin_.x) / h();
  double gy = (p.y - origin_.y) / h();
  int i0 = static_cast<int>(std::floor(gx));
  int j0 = static_cast<int>(std::floor(gy));
  double fx = gx - i0, fy = gy - j0;
  auto value = [&](int i, int j) {
    int k = index(i, j);
    return k >= 0 ? f.values[k] : f.boundary_value;
  };
  return (1 - fx) * (1 - fy) * value(i0, j0) + fx * (1 - fy) * value(i0 + 1, j0) +
         (1 - fx) * fy * value(i0, j0 + 1) + fx * fy * value(i0 + 1, j0 + 1);
}

Eigen::Index DiscreteDomain::nearest_interior(Vec2 p) const {
  if (!spec_.contains(p)) throw std::invalid_argument("point lies outside the domain");
  int i = static_cast<int>(std::lround((p.x - origin_.x) / h()));
  int j = static_cast<int>(std::lround((p.y - origin_.y) / h()));
  int k = index(i, j);
  if (k >= 0) return k;
  double best = kInf;
  for (int dj = -1; dj <= 1; ++dj)
    for (int di = -1; di <= 1; ++di) {
      int q = index(i + di, j + dj);
      if (q < 0) continue;
      double d = (position(q) - p).norm();
      if (d < best) {
        best = d;
        k = q;
      }
    }
  if (k < 0) throw std::invalid_argument("no interior node near the requested point");
  return k;
}

Field DiscreteDomain::laplacian_apply(const Field& u) const {
  check_shape(u);
  if (u.boundary_value != 0.0)
    throw std::invalid_argument("laplacian_apply: field must have zero Dirichlet data");
  return Field{laplacian_ * u.values, 0.0};
}

int DiscreteDomain::boundary_components() const {
  std::vector<char> layer(static_cast<std::size_t>(nx_) * ny_, 0);
  auto at = [&](int i, int j) -> char& { return layer[static_cast<std::size_t>(j) * nx_ + i]; };
  for (int j = 0; j < ny_; ++j)
    for (int i = 0; i < nx_; ++i) {
      if (is_interior(i, j)) continue;
      if (is_interior(i + 1, j) || is_interior(i - 1, j) || is_interior(i, j + 1) ||
          is_interior(i, j - 1))
        at(i, j) = 1;
    }
  int components = 0;
  std::vector<std::pair<int, int>> stack;
  for (int j = 0; j < ny_; ++j)
    for (int i = 0; i < nx_; ++i) {
      if (at(i, j) != 1) continue;
      ++components;
      at(i, j) = 2;
      stack.emplace_back(i, j);
      while (!stack.empty()) {
        auto [a, b] = stack.back();
        stack.pop_back();
        for (int db = -1; db <= 1; ++db)
          for (int da = -1; da <= 1; ++da) {
            int x = a + da, y = b + db;
            if (x < 0 || y < 0 || x >= nx_ || y >= ny_ || at(x, y) != 1) continue;
            at(x, y) = 2;
            stack.emplace_back(x, y);
          }
      }
    }
  return components;
}

struct PoissonSolver::Impl {
  Eigen::SimplicialLDLT<SparseMatrix> ldlt;
};

PoissonSolver::PoissonSolver(const DiscreteDomain& domain)
    : domain_(domain), impl_(std::make_unique<Impl>()) {
  impl_->ldlt.compute(domain.laplacian());
  if (impl_->ldlt.info() != Eigen::Success)
    throw std::runtime_error("poisson: factorization of the discrete Laplacian failed");
}

PoissonSolver::~PoissonSolver() = default;
PoissonSolver::PoissonSolver(PoissonSolver&&) noexcept = default;

Field PoissonSolver::solve(const Field& rhs) const {
  domain_.check_shape(rhs);
  if (!rhs.values.allFinite()) throw std::invalid_argument("poisson: rhs is not finite");
  Field u{impl_->ldlt.solve(rhs.values), 0.0};
  // One step of iterative refinement keeps the residual at roundoff level.
  Eigen::VectorXd r = rhs.values - domain_.laplacian() * u.values;
  u.values += impl_->ldlt.solve(r);
  r = rhs.values - domain_.laplacian() * u.values;
  double scale = std::max(1.0, rhs.values.cwiseAbs().maxCoeff());
  double res = r.cwiseAbs().maxCoeff();
  if (!(res <= 1e-8 * scale))
    throw SolveFailure("poisson: residual " + std::to_string(res) + " above tolerance", res);
  return u;
}

Field poisson_solve(const DiscreteDomain& domain, const Field& rhs) {
  return PoissonSolver(domain).solve(rhs);
}

Field green_function(const PoissonSolver& solver, Vec2 y) {
  const DiscreteDomain& dom = solver.domain();
  if (dom.spec().distance_to_boundary(y) < 2.0 * dom.h())
    throw std::invalid_argument("green_function: source closer than 2h to the boundary");
  Field rhs = dom.zero_field();
  rhs.values[dom.nearest_interior(y)] = 1.0 / (dom.h() * dom.h());
  return solver.solve(rhs);
}

Field green_function(const DiscreteDomain& domain, Vec2 y) {
  return green_function(PoissonSolver(domain), y);
}

double regular_part(const PoissonSolver& solver, Vec2 x, Vec2 y) {
  const DiscreteDomain& dom = solver.domain();
  const double h = dom.h();
  if (dom.spec().distance_to_boundary(x) < 2.0 * h)
    throw std::invalid_argument("regular_part: point closer than 2h to the boundary");
  Field g = green_function(solver, y);
  Eigen::Index ky = dom.nearest_interior(y);
  Eigen::Index kx = dom.nearest_interior(x);
  Vec2 ys = dom.position(ky);
  if (kx == ky) {
    auto [i, j] = dom.grid_ij(ky);
    double avg = 0.0;
    for (auto [di, dj] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
      int q = dom.index(i + di, j + dj);
      avg += 0.25 * (q >= 0 ? g.values[q] : 0.0);
    }
    // The lattice Green's function equals 1/4 on the neighbours of the source.
    return avg + 0.25 + (std::log(h) - kLatticeGreenOffset) / (2.0 * std::numbers::pi);
  }
  return dom.interpolate(g, x) + std::log((x - ys).norm()) / (2.0 * std::numbers::pi);
}

double regular_part(const DiscreteDomain& domain, Vec2 x, Vec2 y) {
  return regular_part(PoissonSolver(domain), x, y);
}

Vec2 EmbeddedCurve::gamma(double theta) const {
  return {center.x + r_gamma * std::cos(theta), center.y + r_gamma * std::sin(theta)};
}

std::complex<double> EmbeddedCurve::chi(Vec2 x) const {
  return {(x.x - center.x) / r_gamma, (x.y - center.y) / r_gamma};
}

EmbeddedCurve EmbeddedCurve::around_hole(const DomainSpec& spec, std::optional<double> r_gamma,
                                         std::optional<double> eps0) {
  if (!spec.hole) throw std::invalid_argument("curve: domain has no hole to wind around");
  const Circle& hole = *spec.hole;
  double r_out_min = 0.0, r_out_max = 0.0;
  if (spec.kind == DomainKind::annulus) {
    double off = (hole.center - spec.outer.center).norm();
    r_out_min = spec.outer.radius - off;
    r_out_max = spec.outer.radius + off;
  } else {
    r_out_min = std::min({hole.center.x - spec.lo.x, spec.hi.x - hole.center.x,
                          hole.center.y - spec.lo.y, spec.hi.y - hole.center.y});
    double dx = std::max(hole.center.x - spec.lo.x, spec.hi.x - hole.center.x);
    double dy = std::max(hole.center.y - spec.lo.y, spec.hi.y - hole.center.y);
    r_out_max = std::hypot(dx, dy);
  }
  EmbeddedCurve c;
  c.center = hole.center;
  c.r_gamma = r_gamma.value_or(std::sqrt(hole.radius * r_out_min));
  if (!(c.r_gamma > hole.radius && c.r_gamma < r_out_min))
    throw std::invalid_argument("curve: r_gamma must lie strictly between the hole and the outer boundary");
  double room = std::min(c.r_gamma - hole.radius, r_out_min - c.r_gamma);
  c.eps0 = eps0.value_or(0.5 * room);
  if (!(c.eps0 > 0.0 && c.eps0 <= room))
    throw std::invalid_argument("curve: eps0 must be positive and keep the tube inside the domain");
  c.rho = hole.radius / (2.0 * c.r_gamma);
  c.chi_lipschitz = 1.0 / c.r_gamma;
  c.chi_max = r_out_max / c.r_gamma;
  return c;
}

void EmbeddedCurve::validate(const DiscreteDomain& domain) const {
  for (int s = 0; s < 720; ++s) {
    double th = 2.0 * std::numbers::pi * s / 720.0;
    Vec2 g = gamma(th);
    if (std::abs(std::abs(chi(g)) - 1.0) > 1e-10)
      throw std::invalid_argument("curve: chi(gamma) leaves the unit circle");
    if (domain.spec().distance_to_boundary(g) < eps0 - 1e-12)
      throw std::invalid_argument("curve: tube of radius eps0 around gamma leaves the domain");
  }
  for (Eigen::Index k = 0; k < domain.size(); ++k)
    if (std::abs(chi(domain.position(k))) < 2.0 * rho)
      throw std::invalid_argument("curve: |chi| < 2 rho at an interior node");
}

}  // namespace mfe
