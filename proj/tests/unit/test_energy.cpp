#include "doctest.h"
#include "mfe/energy.hpp"
#include "mfe/solver.hpp"
#include "../oracles.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace mfe;
constexpr double pi = std::numbers::pi;

namespace {

DomainSpec ring(double h) { return DomainSpec::annulus({0, 0}, 0.2, 1.0, h); }

// Closed-form integrals of the radial bubbles over B_R, P = delta_1.
double plateau_energy(double r) { return 32 * pi * std::log(1 / (1 - r)); }
double plateau_mass(double R, double r) {
  double c = R * (1 - r);
  return 2 * pi * std::pow(R, 4) / (c * c) - pi * R * R;
}
double liouville_energy(double eps, double R) {
  double e2 = eps * eps;
  return 16 * pi * (std::log((e2 + R * R) / e2) + e2 / (e2 + R * R) - 1);
}
double liouville_mass(double eps, double R) { return pi * (eps * eps + R * R) * R * R / (eps * eps); }

}  // namespace

TEST_CASE("dirichlet_energy") {
  DiscreteDomain d(DomainSpec::unit_square(1.0 / 64));
  CHECK(dirichlet_energy(d, d.zero_field()) == 0.0);
  Field u = d.sample([](Vec2 p) { return std::sin(pi * p.x) * std::sin(pi * p.y); });
  double e = dirichlet_energy(d, u);
  CHECK(e == doctest::Approx(pi * pi / 2).epsilon(0.02));
  Field u2{2.0 * u.values, 0.0};
  CHECK(dirichlet_energy(d, u2) == doctest::Approx(4 * e).epsilon(1e-12));

  DiscreteDomain a(ring(1.0 / 32));
  std::mt19937_64 rng(3);
  Field v = random_smooth_field(a, rng, 6, 3.0);
  double parts = a.h() * a.h() * a.laplacian_apply(v).values.dot(v.values);
  CHECK(std::abs(dirichlet_energy(a, v) - parts) <= 1e-9 * std::max(1.0, parts));
  CHECK(dirichlet_energy(a, v) > 0.0);
}

TEST_CASE("j_lambda basics") {
  DiscreteDomain sq(DomainSpec::unit_square(1.0 / 32));
  CHECK(j_lambda(sq, sq.zero_field(), 8 * pi, IntensityMeasure::dirac()) == doctest::Approx(0.0));
  DiscreteDomain d(ring(1.0 / 32));
  CHECK(j_lambda(d, d.zero_field(), 5.0, IntensityMeasure::uniform()) ==
        doctest::Approx(-5.0 * std::log(d.area())).epsilon(1e-12));

  std::mt19937_64 rng(11);
  auto m = IntensityMeasure::uniform();
  for (int i = 0; i < 5; ++i) {
    Field u = random_smooth_field(d, rng, 8, 5.0);
    double e = dirichlet_energy(d, u), li = log_denominator(d, u, m);
    for (double lambda : {0.0, 3.0, 30.0})
      CHECK(j_lambda(d, u, lambda, m) == doctest::Approx(0.5 * e - lambda * li).epsilon(1e-12));
    if (li > 0) CHECK(j_lambda(d, u, 10.0, m) < j_lambda(d, u, 9.0, m));
  }
}

TEST_CASE("j_lambda at the radial solution") {
  oracle::RadialLiouville o(4 * pi);
  DiscreteDomain d(DomainSpec::disk({0, 0}, 1.0, 1.0 / 128));
  SolveConfig cfg;
  SolveResult r = newton_solve(d, d.zero_field(), 4 * pi, IntensityMeasure::dirac(), cfg);
  REQUIRE(r.converged);
  CHECK(j_lambda(d, r.u, 4 * pi, IntensityMeasure::dirac()) == doctest::Approx(o.functional()).epsilon(1e-2));
  Eigen::VectorXd g = j_lambda_gradient(d, r.u, 4 * pi, IntensityMeasure::dirac());
  CHECK(g.lpNorm<Eigen::Infinity>() <= 10 * cfg.tolerance * std::max(1.0, r.u_max));
}

TEST_CASE("Moser-Trudinger gap with a calibrated constant") {
  DiscreteDomain d(ring(1.0 / 32));
  auto m = IntensityMeasure::uniform();
  MtCalibration c = calibrate_mt_constant(d, m, 100, 1);
  CHECK(c.constant >= d.area());
  CHECK(mt_gap(d, d.zero_field(), m, c.constant) == doctest::Approx(std::log(c.constant / d.area())));
  std::mt19937_64 held_out(2);
  for (int i = 0; i < 100; ++i) CHECK(mt_gap(d, random_smooth_field(d, held_out, 8, 5.0), m, c.constant) >= 0.0);
  CHECK_THROWS_AS(mt_gap(d, d.zero_field(), m, 0.0), std::invalid_argument);

  // Along the sharp family the two sides balance: the gap settles to a constant.
  DiscreteDomain disk(DomainSpec::disk({0, 0}, 1.0, 1.0 / 32));
  std::vector<double> gaps;
  for (double eps : {1e-3, 1e-4, 1e-5, 1e-6}) {
    BubbleIntegrals in = BubbleField::liouville({0, 0}, eps, 1.0).integrals(disk, IntensityMeasure::dirac());
    gaps.push_back(in.dirichlet / (16 * pi) + std::log(c.constant) - in.log_denominator);
  }
  for (double g : gaps) CHECK(std::abs(g - gaps.back()) < 0.01);
}

TEST_CASE("random fields are reproducible and bounded") {
  DiscreteDomain d(ring(1.0 / 32));
  std::mt19937_64 a(5), b(5);
  Field u = random_smooth_field(d, a, 8, 5.0), v = random_smooth_field(d, b, 8, 5.0);
  CHECK(u.values == v.values);
  CHECK(u.sup_norm() <= 5.0 + 1e-12);
  CHECK(u.boundary_value == 0.0);
  CHECK_THROWS_AS(random_smooth_field(d, a, 0, 5.0), std::invalid_argument);
}

TEST_CASE("closed-form bubble integrals") {
  DiscreteDomain d(ring(1.0 / 32));
  EmbeddedCurve curve = EmbeddedCurve::around_hole(d.spec(), {}, 0.1);
  Vec2 c = curve.gamma(0.7);
  for (double r : {0.5, 0.9, 0.999, 0.999999}) {
    BubbleIntegrals in = BubbleField::plateau(c, r, 0.1).integrals(d, IntensityMeasure::dirac());
    CHECK(in.dirichlet == doctest::Approx(plateau_energy(r)).epsilon(1e-9));
    double li = std::log(d.area() - pi * 0.01 + plateau_mass(0.1, r));
    CHECK(in.log_denominator == doctest::Approx(li).epsilon(1e-9));
  }
  DiscreteDomain disk(DomainSpec::disk({0, 0}, 1.0, 1.0 / 32));
  for (double eps : {0.1, 1e-3, 1e-6}) {
    BubbleIntegrals in = BubbleField::liouville({0.1, 0}, eps, 0.5).integrals(disk, IntensityMeasure::dirac());
    CHECK(in.dirichlet == doctest::Approx(liouville_energy(eps, 0.5)).epsilon(1e-9));
    CHECK(in.log_denominator == doctest::Approx(std::log(pi - pi * 0.25 + liouville_mass(eps, 0.5))).epsilon(1e-9));
  }
  CHECK_THROWS_AS((void)BubbleField::liouville({0.8, 0}, 0.1, 0.5).integrals(disk, IntensityMeasure::dirac()),
                  std::invalid_argument);
}

TEST_CASE("rasterized bubble agrees with the closed form") {
  DiscreteDomain d(ring(1.0 / 256));
  EmbeddedCurve curve = EmbeddedCurve::around_hole(d.spec(), {}, 0.1);
  Field v = test_bubble(0.3, 0.5, d, curve);
  CHECK(dirichlet_energy(d, v) == doctest::Approx(plateau_energy(0.5)).epsilon(0.05));
  CHECK(v.max() <= 4 * std::log(2.0) + 1e-12);
  CHECK(v.min() >= 0.0);
  CHECK_THROWS_AS(test_bubble(0.3, 0.99, d, curve), std::invalid_argument);
}

TEST_CASE("test_bubble shape") {
  DiscreteDomain d(ring(1.0 / 64));
  EmbeddedCurve curve = EmbeddedCurve::around_hole(d.spec(), {}, 0.12);
  CHECK(test_bubble(1.0, 0.0, d, curve).sup_norm() == 0.0);
  BubbleField b = BubbleField::plateau(curve.gamma(1.0), 0.99, 0.12);
  CHECK(b.profile_max() == doctest::Approx(4 * std::log(100.0)).epsilon(1e-12));
  CHECK(b.value(curve.gamma(1.0)) == doctest::Approx(18.420680744).epsilon(1e-9));
  Vec2 g = curve.gamma(1.0);
  CHECK(b.value(g + Vec2{0.121, 0}) == 0.0);
  CHECK(b.value(g + Vec2{0.0012 * (1 - 1e-9), 0}) == doctest::Approx(b.value(g)));
  for (double r : geometric_r_ladder(3, 10)) {
    BubbleIntegrals in = BubbleField::plateau(g, r, 0.12).integrals(d, IntensityMeasure::dirac());
    CHECK(in.dirichlet == doctest::Approx(32 * pi * std::log(1 / (1 - r))).epsilon(0.03));
  }
}

TEST_CASE("barycenter test functions") {
  DiscreteDomain d(ring(1.0 / 64));
  EmbeddedCurve curve = EmbeddedCurve::around_hole(d.spec(), {}, 0.1);
  BarycenterConfig one;
  one.eps0 = 0.1;
  one.r = 0.3;
  one.angles = {0.4};
  Field u = barycenter_test_fn(one, d, curve);
  Field v = test_bubble(0.4, 0.3, d, curve);
  CHECK((u.values - v.values).lpNorm<Eigen::Infinity>() <= 1e-12);

  BarycenterConfig same = one;
  same.k = 3;
  same.weights = {0.2, 0.5, 0.3};
  same.angles = {0.4, 0.4, 0.4};
  CHECK((barycenter_test_fn(same, d, curve).values - v.values).lpNorm<Eigen::Infinity>() <= 1e-12);

  BarycenterConfig two = one;
  two.k = 2;
  two.weights = {0.3, 0.7};
  two.angles = {0.4, 1.9};
  Field w = barycenter_test_fn(two, d, curve);
  Field v2 = test_bubble(1.9, 0.3, d, curve);
  CHECK(w.min() >= 0.0);
  for (Eigen::Index k = 0; k < d.size(); ++k)
    CHECK(w.values[k] <= std::max(v.values[k], v2.values[k]) + std::log(2.0) / two.alpha_tilde + 1e-12);

  // Continuity in (r, t, theta).
  BubbleField base = BubbleField::barycenter(two, curve);
  for (double delta : {1e-3, 1e-5}) {
    BarycenterConfig p = two;
    p.r += delta;
    p.weights = {0.3 + delta, 0.7 - delta};
    p.angles = {0.4 + delta, 1.9 - delta};
    BubbleField q = BubbleField::barycenter(p, curve);
    double diff = 0.0;
    for (Eigen::Index k = 0; k < d.size(); ++k)
      diff = std::max(diff, std::abs(base.value(d.position(k)) - q.value(d.position(k))));
    CHECK(diff < 2000 * delta);
  }

  BarycenterConfig bad = two;
  bad.weights = {0.3, 0.6};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = two;
  bad.alpha_tilde = 0.7;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CHECK(two.valid_for(20 * pi) == ((2 * 0.95 - 1) * 20 * pi > 16 * pi));
}

TEST_CASE("barycenter energy slope and mass concentration") {
  DiscreteDomain d(ring(1.0 / 64));
  EmbeddedCurve curve = EmbeddedCurve::around_hole(d.spec(), {}, 0.1);
  BarycenterConfig c;
  c.eps0 = 0.1;
  c.angles = {2.0};
  std::vector<double> x, e;
  for (double r : geometric_r_ladder(3, 10)) {
    c.r = r;
    x.push_back(std::log(1 / (1 - r)));
    e.push_back(BubbleField::barycenter(c, curve).integrals(d, IntensityMeasure::dirac()).dirichlet);
  }
  CHECK(oracle::fit_slope(x, e) <= 32 * pi * 1.03);

  BarycenterConfig two = c;
  two.k = 2;
  two.weights = {0.5, 0.5};
  two.angles = {0.0, pi};
  two.r = 0.999;
  std::vector<Circle> balls{{curve.gamma(0.0), 0.1}, {curve.gamma(pi), 0.1}};
  BubbleIntegrals in = BubbleField::barycenter(two, curve).integrals(d, IntensityMeasure::uniform(), nullptr, 0, balls);
  CHECK(in.probe_mass[0] + in.probe_mass[1] >= 0.95);
}

TEST_CASE("improved Moser-Trudinger check") {
  DiscreteDomain d(ring(1.0 / 64));
  EmbeddedCurve curve = EmbeddedCurve::around_hole(d.spec(), {}, 0.1);
  auto m = IntensityMeasure::dirac();
  std::vector<Circle> regions{{{0.6, 0}, 0.15}, {{-0.6, 0}, 0.15}};
  double fraction = pi * 0.15 * 0.15 / d.area();
  auto zero = improved_mt_check(d, d.zero_field(), m, regions, 0.95 * fraction, 1.0);
  CHECK(zero.hypothesis_holds);
  CHECK(zero.k_constant == doctest::Approx(std::log(d.area())).epsilon(1e-12));
  for (double mass : zero.region_mass) CHECK(mass == doctest::Approx(fraction).epsilon(0.02));

  auto one = improved_mt_check(d, BubbleField::plateau({0.6, 0}, 0.99, 0.1), m, regions, 0.3, 1.0);
  CHECK(one.region_mass[0] > 0.9);
  CHECK_FALSE(one.hypothesis_holds);

  BarycenterConfig two;
  two.k = 2;
  two.weights = {0.5, 0.5};
  two.angles = {0.0, pi};
  two.eps0 = 0.1;
  std::vector<Circle> around{{curve.gamma(0.0), 0.15}, {curve.gamma(pi), 0.15}};
  std::vector<double> ks, naive;
  for (double r : {0.9, 0.99, 0.999}) {
    two.r = r;
    auto rep = improved_mt_check(d, BubbleField::barycenter(two, curve), m, around, 0.3, 1.0);
    CHECK(rep.hypothesis_holds);
    ks.push_back(rep.k_constant);
    naive.push_back(rep.naive_constant);
  }
  CHECK(std::abs(ks.back() - ks.front()) < 0.5);
  CHECK(naive.back() < naive.front() - 5.0);

  std::vector<Circle> overlap{{{0.5, 0}, 0.2}, {{0.6, 0}, 0.2}};
  CHECK_THROWS_AS(improved_mt_check(d, d.zero_field(), m, overlap, 0.1, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(improved_mt_check(d, d.zero_field(), m, {regions[0]}, 0.1, 1.0), std::invalid_argument);
}

TEST_CASE("J_lambda asymptotics along the barycenter family") {
  DiscreteDomain d(ring(1.0 / 64));
  EmbeddedCurve curve = EmbeddedCurve::around_hole(d.spec(), {}, 0.1);
  BarycenterConfig c;
  c.eps0 = 0.1;
  auto ladder = geometric_r_ladder(3, 10);
  REQUIRE(ladder.size() == 8);
  CHECK(ladder.front() == 0.875);

  auto rep = jlambda_asymptotics(c, ladder, 10 * pi, IntensityMeasure::dirac(), d, curve);
  CHECK(rep.condition_holds);
  CHECK(rep.gradient_ok);
  CHECK(rep.j_fit.slope <= -2 * pi * (1 - 0.1));
  CHECK(rep.j_ok);
  CHECK(rep.diverges);
  CHECK(rep.log_denominator_fit.slope >= 1.8 * 0.95);

  auto still = jlambda_asymptotics(c, ladder, 0.0, IntensityMeasure::dirac(), d, curve);
  CHECK_FALSE(still.diverges);
  CHECK_FALSE(still.condition_holds);
  CHECK(still.j_fit.slope >= 0.0);

  CHECK_THROWS_AS(jlambda_asymptotics(c, {0.9, 0.99, 0.999}, 10 * pi, IntensityMeasure::dirac(), d, curve),
                  std::invalid_argument);
}
