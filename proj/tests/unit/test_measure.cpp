#include "doctest.h"
#include "mfe/measure.hpp"

#include <cmath>
#include <numbers>
#include <random>

using mfe::Atom;
using mfe::IntensityMeasure;

namespace {

IntensityMeasure two_atoms() { return IntensityMeasure::atomic({{0.5, 0.5}, {1.0, 0.5}}); }

// Closed form int_lo^hi alpha^m e^{alpha t} dalpha / (hi - lo) for uniform densities.
double uniform_moment(double lo, double hi, double t, int m) {
  auto prim = [t, m](double a) {
    if (t == 0.0) return std::pow(a, m + 1) / (m + 1);
    double e = std::exp(a * t);
    if (m == 0) return e / t;
    if (m == 1) return e * (a / t - 1.0 / (t * t));
    return e * (a * a / t - 2.0 * a / (t * t) + 2.0 / (t * t * t));
  };
  return (prim(hi) - prim(lo)) / (hi - lo);
}

}  // namespace

TEST_CASE("weighted_exp reference values") {
  CHECK(IntensityMeasure::dirac().weighted_exp(0.0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  auto u = IntensityMeasure::uniform();
  CHECK(u.weighted_exp(1.0, 0) == doctest::Approx(std::exp(1.0) - 1.0).epsilon(1e-14));
  for (double t : {-3.0, 0.5, 7.0, 40.0})
    CHECK(IntensityMeasure::dirac().weighted_exp(t, 1) == doctest::Approx(std::exp(t)).epsilon(1e-14));
}

TEST_CASE("density moments match closed forms over a wide range of t") {
  auto u = IntensityMeasure::uniform(0.2, 0.9);
  for (double t : {-50.0, -2.0, 0.0, 0.3, 3.0, 25.0, 300.0})
    for (int m = 0; m <= 2; ++m)
      CHECK(u.weighted_exp(t, m) == doctest::Approx(uniform_moment(0.2, 0.9, t, m)).epsilon(1e-12));
}

TEST_CASE("log-space path survives where linear output overflows") {
  auto u = IntensityMeasure::uniform();
  double lv = u.log_weighted_exp(2000.0, 1);
  // log int_0^1 a e^{2000 a} = 2000 + log((1 - 1/2000)/2000) up to e^{-2000}.
  CHECK(lv == doctest::Approx(2000.0 + std::log((1.0 - 1.0 / 2000.0) / 2000.0)).epsilon(1e-14));
  CHECK_THROWS_AS((void)u.weighted_exp(2000.0, 0), mfe::MomentOverflow);
  CHECK(std::isfinite(u.weighted_exp(700.0, 0)));
}

TEST_CASE("tail_mass and mass_at_one") {
  CHECK(IntensityMeasure::dirac().tail_mass(0.1) == 1.0);
  CHECK(IntensityMeasure::uniform().tail_mass(0.25) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(two_atoms().tail_mass(0.1) == 0.5);
  CHECK(IntensityMeasure::dirac().mass_at_one() == 1.0);
  CHECK(IntensityMeasure::uniform().mass_at_one() == 0.0);
  CHECK(two_atoms().mass_at_one() == 0.5);
  CHECK(IntensityMeasure::uniform(0.3, 0.6).tail_mass(1.0) == doctest::Approx(1.0));
}

TEST_CASE("normalize_support") {
  auto [m1, l1] = mfe::normalize_support(IntensityMeasure::dirac(0.5), 32.0 * std::numbers::pi);
  CHECK(m1 == IntensityMeasure::dirac(1.0));
  CHECK(l1 == doctest::Approx(8.0 * std::numbers::pi).epsilon(1e-15));

  auto [m2, l2] = mfe::normalize_support(IntensityMeasure::dirac(1.0), 3.0);
  CHECK(m2 == IntensityMeasure::dirac(1.0));
  CHECK(l2 == 3.0);

  auto [m3, l3] = mfe::normalize_support(IntensityMeasure::uniform(0.0, 0.5), 4.0);
  CHECK(l3 == doctest::Approx(1.0));
  CHECK(m3.sup_support() == 1.0);
  for (double t : {-1.0, 0.0, 2.0})
    CHECK(m3.weighted_exp(t, 0) == doctest::Approx(uniform_moment(0.0, 1.0, t, 0)).epsilon(1e-13));

  auto [m4, l4] = mfe::normalize_support(m3, l3);
  CHECK(m4 == m3);
  CHECK(l4 == l3);

  CHECK_THROWS_AS(mfe::normalize_support(IntensityMeasure::dirac(0.0), 1.0), std::invalid_argument);
}

TEST_CASE("construction validates and canonicalizes") {
  CHECK_THROWS_AS(IntensityMeasure::atomic({{0.5, 0.7}}), std::invalid_argument);
  CHECK_THROWS_AS(IntensityMeasure::atomic({{1.2, 1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(IntensityMeasure::atomic({{0.5, -0.1}, {1.0, 1.1}}), std::invalid_argument);
  CHECK_THROWS_AS(IntensityMeasure({}, {{0.0, 0.5, 0.2}, {1.0, 1.0}}), std::invalid_argument);
  auto merged = IntensityMeasure::atomic({{1.0, 0.25}, {0.3, 0.5}, {1.0, 0.25}});
  REQUIRE(merged.atoms().size() == 2);
  CHECK(merged.atoms()[0].alpha == 0.3);
  CHECK(merged.mass_at_one() == 0.5);
  // Repeated breakpoint encodes a jump: density 0.5 on [0, 0.5], 1.5 on [0.5, 1].
  IntensityMeasure jump({}, {{0.0, 0.5, 0.5, 1.0}, {0.5, 0.5, 1.5, 1.5}});
  CHECK(jump.tail_mass(0.5) == doctest::Approx(0.75));
  CHECK(jump.sup_support() == 1.0);
}

TEST_CASE("ordering, bound and convexity invariants on random measures") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Atom> atoms;
    int na = static_cast<int>(unif(rng) * 4);
    double atom_mass = na ? 0.5 : 0.0;
    for (int i = 0; i < na; ++i) atoms.push_back({unif(rng), atom_mass / na});
    std::vector<double> bp{0.0, unif(rng), 1.0};
    std::sort(bp.begin(), bp.end());
    std::vector<double> v{unif(rng), unif(rng), unif(rng)};
    mfe::PiecewiseLinearDensity d{bp, v};
    double scale = (1.0 - atom_mass) / d.integral();
    for (double& x : d.values) x *= scale;
    IntensityMeasure m(atoms, d);
    double prev = 0.0;
    for (int s = -40; s <= 40; ++s) {
      double t = 0.5 * s;
      double e0 = m.weighted_exp(t, 0), e1 = m.weighted_exp(t, 1);
      CHECK(e1 <= e0 * (1 + 1e-14));
      // alpha <= 1 bounds e^{alpha t} by e^t only for t >= 0.
      if (t >= 0.0) CHECK(e0 <= std::exp(t) * (1 + 1e-14));
      CHECK(e0 > 0.0);
      CHECK(e0 >= prev * (1 - 1e-14));
      prev = e0;
      double step = 0.25;
      double second = m.weighted_exp(t + step, 0) - 2 * e0 + m.weighted_exp(t - step, 0);
      CHECK(second >= -1e-9 * std::max(1.0, e0));
    }
    double te = 0.0;
    for (double eps : {0.05, 0.2, 0.5, 1.0}) {
      double tm = m.tail_mass(eps);
      CHECK(tm >= te - 1e-15);
      te = tm;
    }
    CHECK(m.tail_mass(1.0) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("trapezoid discretization converges at second order") {
  IntensityMeasure m({}, {{0.0, 0.4, 1.0}, {0.2 / 1.28, 2.0 / 1.28, 0.8 / 1.28}});
  double exact = m.weighted_exp(3.0, 1);
  double prev_err = 0.0;
  for (int n : {9, 17, 33, 65, 129}) {
    double err = std::abs(m.discretized(n).weighted_exp(3.0, 1) - exact);
    if (prev_err > 0.0) CHECK(prev_err / err == doctest::Approx(4.0).epsilon(0.05));
    prev_err = err;
  }
}
