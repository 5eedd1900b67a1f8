#include "doctest.h"
#include "mfe/domain.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace mfe;
constexpr double pi = std::numbers::pi;

namespace {

double sinsin(Vec2 p) { return std::sin(pi * p.x) * std::sin(pi * p.y); }

// Manufactured solution on the unit disk and its -Lap.
double disk_u(Vec2 p) {
  double r2 = p.x * p.x + p.y * p.y;
  return (1.0 - r2) * std::exp(p.x) * (1.0 + p.y * p.y);
}
double disk_rhs(Vec2 p) {
  // -Lap of (1 - r^2) e^x (1 + y^2), expanded by hand.
  double x = p.x, y = p.y;
  double a = 1.0 - x * x - y * y, ex = std::exp(x), b = 1.0 + y * y;
  double uxx = ex * b * (a - 4.0 * x - 2.0);
  double uyy = ex * (-2.0 * b - 8.0 * y * y + 2.0 * a);
  return -(uxx + uyy);
}

double max_error(const DiscreteDomain& d, const Field& u, double (*f)(Vec2)) {
  double e = 0.0;
  for (Eigen::Index k = 0; k < d.size(); ++k) e = std::max(e, std::abs(u.values[k] - f(d.position(k))));
  return e;
}

}  // namespace

TEST_CASE("disk-box areas") {
  Circle c{{0.1, -0.2}, 0.7};
  CHECK(disk_box_area(c, -5, 5, -5, 5) == doctest::Approx(pi * 0.49).epsilon(1e-14));
  CHECK(disk_box_area(c, 0.1, 5, -0.2, 5) == doctest::Approx(pi * 0.49 / 4).epsilon(1e-14));
  CHECK(disk_box_area(c, 2, 3, -5, 5) == 0.0);
  // Brute-force midpoint check on an awkward box.
  double xa = 0.3, xb = 0.75, ya = -0.1, yb = 0.45;
  int n = 4000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    double x = xa + (i + 0.5) * (xb - xa) / n;
    double half = std::sqrt(std::max(0.0, 0.49 - (x - 0.1) * (x - 0.1)));
    sum += std::max(0.0, std::min(yb, -0.2 + half) - std::max(ya, -0.2 - half)) * (xb - xa) / n;
  }
  CHECK(disk_box_area(c, xa, xb, ya, yb) == doctest::Approx(sum).epsilon(1e-6));
}

TEST_CASE("quadrature weights reproduce the exact area") {
  for (auto spec : {DomainSpec::disk({0, 0}, 1.0, 1.0 / 32), DomainSpec::annulus({0, 0}, 0.3, 1.0, 1.0 / 40),
                    DomainSpec::unit_square(1.0 / 16),
                    DomainSpec::rectangle_with_hole({0, 0}, {2, 1}, {{0.7, 0.5}, 0.2}, 1.0 / 24)}) {
    DiscreteDomain d(spec);
    CHECK(d.weights().sum() + d.boundary_strip_area() == doctest::Approx(spec.area()).epsilon(1e-12));
    Field one = d.zero_field();
    one.values.setOnes();
    one.boundary_value = 1.0;
    CHECK(d.integrate(one) == doctest::Approx(spec.area()).epsilon(1e-12));
  }
}

TEST_CASE("laplacian_apply") {
  DiscreteDomain sq(DomainSpec::unit_square(1.0 / 64));
  CHECK(sq.laplacian_apply(sq.zero_field()).sup_norm() == 0.0);

  DiscreteDomain big(DomainSpec::rectangle({-4, -4}, {4, 4}, 1.0 / 16));
  Field x1 = big.sample([](Vec2 p) { return p.x; });
  Field lx = big.laplacian_apply(x1);
  double far = 0.0;
  for (Eigen::Index k = 0; k < big.size(); ++k)
    if (big.spec().distance_to_boundary(big.position(k)) > 0.5) far = std::max(far, std::abs(lx.values[k]));
  CHECK(far < 1e-10);

  double prev = 0.0;
  for (int n : {32, 64, 128}) {
    DiscreteDomain d(DomainSpec::unit_square(1.0 / n));
    Field u = d.sample(sinsin);
    Field lu = d.laplacian_apply(u);
    double err = (lu.values - 2 * pi * pi * u.values).cwiseAbs().maxCoeff();
    CHECK(err < 2 * pi * pi * pi * pi / 6.0 / (n * n));
    if (prev > 0) CHECK(std::log2(prev / err) > 1.9);
    prev = err;
  }

  Field nonzero = sq.zero_field();
  nonzero.boundary_value = 1.0;
  CHECK_THROWS_AS((void)sq.laplacian_apply(nonzero), std::invalid_argument);
  CHECK_THROWS_AS((void)sq.laplacian_apply(Field{Eigen::VectorXd::Zero(3), 0.0}), std::invalid_argument);
}

TEST_CASE("laplacian is symmetric") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (auto spec : {DomainSpec::disk({0, 0}, 1.0, 1.0 / 48), DomainSpec::annulus({0, 0}, 0.25, 1.0, 1.0 / 37)}) {
    DiscreteDomain d(spec);
    Field u = d.zero_field(), v = d.zero_field();
    for (Eigen::Index k = 0; k < d.size(); ++k) {
      u.values[k] = g(rng);
      v.values[k] = g(rng);
    }
    double a = d.laplacian_apply(u).values.dot(v.values);
    double b = u.values.dot(d.laplacian_apply(v).values);
    CHECK(std::abs(a - b) <= 1e-10 * std::max(1.0, d.laplacian_apply(u).values.norm() * v.values.norm()));
  }
}

TEST_CASE("poisson_solve") {
  DiscreteDomain sq(DomainSpec::unit_square(1.0 / 64));
  CHECK(poisson_solve(sq, sq.zero_field()).sup_norm() == 0.0);

  double prev = 0.0;
  for (int n : {32, 64, 128}) {
    DiscreteDomain d(DomainSpec::unit_square(1.0 / n));
    Field rhs = d.sample([](Vec2 p) { return 2 * pi * pi * sinsin(p); });
    double err = max_error(d, poisson_solve(d, rhs), sinsin);
    CHECK(err < 1.0 / (n * n));
    if (prev > 0) CHECK(std::log2(prev / err) > 1.9);
    prev = err;
  }

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  DiscreteDomain ann(DomainSpec::annulus({0, 0}, 0.3, 1.0, 1.0 / 50));
  Field rhs = ann.zero_field();
  for (Eigen::Index k = 0; k < ann.size(); ++k) rhs.values[k] = unif(rng) < 0.1 ? 50 * unif(rng) : 0.0;
  CHECK(poisson_solve(ann, rhs).min() >= -1e-10);
}

TEST_CASE("cut-cell scheme converges at second order on curved boundaries") {
  std::vector<double> errs;
  for (int n : {32, 64, 128, 256}) {
    DiscreteDomain d(DomainSpec::disk({0, 0}, 1.0, 1.0 / n));
    errs.push_back(max_error(d, poisson_solve(d, d.sample(disk_rhs)), disk_u));
  }
  for (std::size_t i = 1; i < errs.size(); ++i) CHECK(std::log2(errs[i - 1] / errs[i]) > 1.7);
  CHECK(errs.back() < 1e-4);
}

TEST_CASE("green_function on the unit disk") {
  DiscreteDomain d(DomainSpec::disk({0, 0}, 1.0, 1.0 / 128));
  PoissonSolver solver(d);
  Field g = green_function(solver, {0, 0});
  CHECK(d.laplacian_apply(g).values.sum() * d.h() * d.h() == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(g.min() >= 0.0);
  double worst = 0.0;
  for (Eigen::Index k = 0; k < d.size(); ++k) {
    double r = d.position(k).norm();
    if (r >= 0.2 && r <= 0.8) worst = std::max(worst, std::abs(g.values[k] - std::log(1 / r) / (2 * pi)));
  }
  CHECK(worst < 0.02);

  CHECK(std::abs(regular_part(solver, {0, 0}, {0, 0})) < 0.02);
  CHECK(std::abs(regular_part(solver, {0.5, 0}, {0.5, 0}) - std::log(0.75) / (2 * pi)) < 0.02);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unif(-0.6, 0.6);
  for (int s = 0; s < 4; ++s) {
    Vec2 x{unif(rng), unif(rng)}, y{unif(rng), unif(rng)};
    double gxy = d.interpolate(green_function(solver, y), d.position(d.nearest_interior(x)));
    double gyx = d.interpolate(green_function(solver, x), d.position(d.nearest_interior(y)));
    CHECK(std::abs(gxy - gyx) <= 5 * d.h());
    CHECK(std::abs(regular_part(solver, x, y) - regular_part(solver, y, x)) <= 5 * d.h());
  }
  CHECK_THROWS_AS(green_function(solver, {0.999, 0.0}), std::invalid_argument);
}

TEST_CASE("green_function on an annulus vanishes on both boundary components") {
  DiscreteDomain d(DomainSpec::annulus({0, 0}, 0.3, 1.0, 1.0 / 64));
  CHECK(d.boundary_components() == 2);
  CHECK(DiscreteDomain(DomainSpec::disk({0, 0}, 1, 1.0 / 64)).boundary_components() == 1);
  Field g = green_function(d, {0.6, 0.1});
  CHECK(d.laplacian_apply(g).values.sum() * d.h() * d.h() == doctest::Approx(1.0).epsilon(1e-8));
  for (int s = 0; s < 16; ++s) {
    double th = 2 * pi * s / 16;
    CHECK(std::abs(d.interpolate(g, {0.3 * std::cos(th), 0.3 * std::sin(th)})) < 0.02);
    CHECK(std::abs(d.interpolate(g, {1.0 * std::cos(th), 1.0 * std::sin(th)})) < 0.02);
  }
}

TEST_CASE("embedded curve around the hole") {
  auto spec = DomainSpec::annulus({0, 0}, 0.25, 1.0, 1.0 / 64);
  DiscreteDomain d(spec);
  auto c = EmbeddedCurve::around_hole(spec);
  CHECK(c.r_gamma == doctest::Approx(0.5));
  CHECK(c.eps0 == doctest::Approx(0.125));
  CHECK(c.rho == doctest::Approx(0.25));
  CHECK_NOTHROW(c.validate(d));
  CHECK(std::abs(c.chi(c.gamma(1.3)) - std::polar(1.0, 1.3)) < 1e-14);
  CHECK_THROWS_AS(EmbeddedCurve::around_hole(spec, 0.5, 0.3), std::invalid_argument);
  CHECK_THROWS_AS(EmbeddedCurve::around_hole(DomainSpec::disk({0, 0}, 1, 0.1)), std::invalid_argument);
  auto rh = DomainSpec::rectangle_with_hole({0, 0}, {2, 2}, {{1, 1}, 0.2}, 1.0 / 32);
  CHECK_NOTHROW(EmbeddedCurve::around_hole(rh).validate(DiscreteDomain(rh)));
}
