#include <cmath>
#include <numbers>

#include <boost/math/special_functions/spherical_harmonic.hpp>
#include <doctest.h>

#include "jetspec/errors.hpp"
#include "jetspec/harmonics.hpp"

using namespace jetspec;
using namespace jetspec::harmonics;

namespace {

constexpr double kPi = std::numbers::pi;

double boost_profile(int n, int m, double theta) { return boost::math::spherical_harmonic_r(n, m, theta, 0.0); }

}  // namespace

TEST_SUITE("harmonics") {
  TEST_CASE("laplace eigenvalues") {
    CHECK(laplace_eigenvalue(0) == 0.0);
    CHECK(laplace_eigenvalue(2) == 6.0);
    CHECK(laplace_eigenvalue(3) == 12.0);
    CHECK_THROWS_AS(laplace_eigenvalue(-1), ValidationError);
  }

  TEST_CASE("coupling closed forms") {
    CHECK(coupling(1, 0) == doctest::Approx(std::sqrt(1.0 / 3.0)).epsilon(1e-15));
    CHECK(coupling(2, 2) == 0.0);
    CHECK(coupling(3, 1) == doctest::Approx(std::sqrt(8.0 / 35.0)).epsilon(1e-15));
    CHECK(coupling(4, 3) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK_THROWS_AS(coupling(1, 2), ValidationError);
  }

  TEST_CASE("zonal coupling decreases to 1/2 from above") {
    double prev = 1.0;
    for (int n = 1; n <= 400; ++n) {
      const double a = coupling(n, 0);
      CHECK(a > 0.5);
      CHECK(a < prev);
      prev = a;
    }
  }

  TEST_CASE("coupling is even in m, bounded by 1/2 and increases to 1/2") {
    for (int m = 1; m <= 20; ++m) {
      double prev = -1.0;
      for (int n = std::max(m, 1); n <= 400; ++n) {
        const double a = coupling(n, m);
        CHECK(a == coupling(n, -m));
        CHECK(a >= 0.0);
        CHECK(a < 0.5 + 1e-15);
        CHECK(a >= prev);
        prev = a;
      }
      CHECK(coupling(100000, m) == doctest::Approx(0.5).epsilon(1e-6));
    }
  }

  TEST_CASE("eval_basis closed forms") {
    for (double th : {0.0, 0.3, 1.7, kPi}) CHECK(eval_basis(0, 0, th) == doctest::Approx(0.5 / std::sqrt(kPi)).epsilon(1e-15));
    CHECK(eval_basis(2, 0, kPi / 2) == doctest::Approx(-0.5 * std::sqrt(5.0 / (4.0 * kPi))).epsilon(1e-14));
    CHECK(eval_basis(3, 2, 0.0) == 0.0);
    CHECK(eval_basis(3, 2, kPi) == 0.0);
    CHECK_THROWS_AS(eval_basis(1, 2, 0.5), ValidationError);
    CHECK_THROWS_AS(eval_basis(2, 1, -0.1), ValidationError);
    CHECK_THROWS_AS(eval_basis(2, 1, 3.2), ValidationError);
  }

  TEST_CASE("eval_basis agrees with an independent special-function library") {
    for (int n : {0, 1, 2, 5, 17, 64, 150})
      for (int m : {0, 1, 2, 3, 8, -1, -3})
        if (std::abs(m) <= n)
          for (double th : {0.05, 0.4, 1.1, kPi / 2, 2.3, 3.1})
            CHECK(eval_basis(n, m, th) == doctest::Approx(boost_profile(n, m, th)).epsilon(1e-11).scale(1.0));
  }

  TEST_CASE("profile parity in m") {
    for (int n = 1; n <= 30; ++n)
      for (int m = 1; m <= n; ++m)
        for (double th : {0.2, 1.0, 2.5}) CHECK(eval_basis(n, -m, th) == (m % 2 ? -1.0 : 1.0) * eval_basis(n, m, th));
  }

  TEST_CASE("large degree evaluation stays finite and normalized") {
    const auto rule = gauss_legendre(10002);
    for (int m : {0, 5}) {
      double sum = 0.0;
      for (std::size_t k = 0; k < rule.size(); ++k) {
        const double v = eval_basis(10000, m, std::acos(rule.nodes[k]));
        REQUIRE(std::isfinite(v));
        sum += rule.weights[k] * v * v;
      }
      CHECK(2.0 * kPi * sum == doctest::Approx(1.0).epsilon(1e-9));
    }
  }

  TEST_CASE("recurrence identity on a 64-point grid") {
    double worst = 0.0;
    for (int k = 0; k < 64; ++k) {
      const double th = kPi * (k + 0.5) / 64.0;
      for (int m = -20; m <= 20; m += 4) {
        const auto col = eval_basis_column(201, m, th);
        const int am = std::abs(m);
        for (int n = std::max(am, 1); n <= 200; ++n) {
          const std::size_t i = static_cast<std::size_t>(n - am);
          const double below = n > am ? coupling(n, m) * col[i - 1] : 0.0;
          worst = std::max(worst, std::abs(std::cos(th) * col[i] - below - coupling(n + 1, m) * col[i + 1]));
        }
      }
    }
    CHECK(worst < 1e-11);
  }

  TEST_CASE("orthonormality under a 128-point rule") {
    const auto rule = gauss_legendre(128);
    double worst = 0.0;
    for (int m : {0, 1, 2, 7, -3}) {
      std::vector<std::vector<double>> cols;
      for (double x : rule.nodes) cols.push_back(eval_basis_column(60, m, std::acos(x)));
      const int am = std::abs(m);
      for (int n = am; n <= 60; ++n)
        for (int np = am; np <= 60; ++np) {
          double s = 0.0;
          for (std::size_t k = 0; k < rule.size(); ++k)
            s += rule.weights[k] * cols[k][static_cast<std::size_t>(n - am)] * cols[k][static_cast<std::size_t>(np - am)];
          worst = std::max(worst, std::abs(2.0 * kPi * s - (n == np ? 1.0 : 0.0)));
        }
    }
    CHECK(worst < 1e-11);
  }

  TEST_CASE("derivative closed forms and finite differences") {
    CHECK(eval_basis_dtheta(1, 0, kPi / 2) == doctest::Approx(-std::sqrt(3.0 / (4.0 * kPi))).epsilon(1e-14));
    for (double th : {0.0, 0.9, kPi}) CHECK(eval_basis_dtheta(0, 0, th) == 0.0);
    const double h = 1e-6;
    double worst = 0.0;
    for (int n : {1, 2, 3, 6, 11, 25})
      for (int m : {0, 1, 2, -2, 5})
        if (std::abs(m) <= n)
          for (double th : {0.1, 0.7, 1.4, 2.2, 3.0}) {
            const double fd = (eval_basis(n, m, th + h) - eval_basis(n, m, th - h)) / (2.0 * h);
            worst = std::max(worst, std::abs(eval_basis_dtheta(n, m, th) - fd));
          }
    CHECK(worst <= 1e-6);
  }

  TEST_CASE("derivative pole limits match one-sided differences") {
    const double h = 1e-7;
    for (int n : {1, 2, 5, 8})
      for (int m : {0, 1, -1, 2}) {
        if (std::abs(m) > n) continue;
        const double north = (eval_basis(n, m, h) - eval_basis(n, m, 0.0)) / h;
        const double south = (eval_basis(n, m, kPi) - eval_basis(n, m, kPi - h)) / h;
        CHECK(eval_basis_dtheta(n, m, 0.0) == doctest::Approx(north).epsilon(1e-5).scale(1.0));
        CHECK(eval_basis_dtheta(n, m, kPi) == doctest::Approx(south).epsilon(1e-5).scale(1.0));
      }
  }

  TEST_CASE("gauss-legendre rules") {
    const auto one = gauss_legendre(1);
    REQUIRE(one.size() == 1);
    CHECK(one.nodes[0] == 0.0);
    CHECK(one.weights[0] == doctest::Approx(2.0).epsilon(1e-15));
    const auto two = gauss_legendre(2);
    CHECK(two.nodes[0] == doctest::Approx(-1.0 / std::sqrt(3.0)).epsilon(1e-15));
    CHECK(two.nodes[1] == doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(1e-15));
    CHECK(two.weights[0] == doctest::Approx(1.0).epsilon(1e-15));
    const auto three = gauss_legendre(3);
    double quartic = 0.0;
    for (std::size_t k = 0; k < 3; ++k) quartic += three.weights[k] * std::pow(three.nodes[k], 4);
    CHECK(std::abs(quartic - 0.4) <= 1e-14);
    CHECK_THROWS_AS(gauss_legendre(0), ValidationError);
  }

  TEST_CASE("gauss-legendre invariants") {
    for (int npts : {4, 17, 64, 129, 500}) {
      const auto r = gauss_legendre(npts);
      double wsum = 0.0;
      for (std::size_t k = 0; k < r.size(); ++k) {
        wsum += r.weights[k];
        CHECK(r.weights[k] > 0.0);
        if (k) CHECK(r.nodes[k] > r.nodes[k - 1]);
      }
      CHECK(std::abs(wsum - 2.0) <= 1e-13);
      // Monomials up to degree 2·npts - 1.
      for (int p = 0; p <= 2 * npts - 1; p += std::max(1, npts / 4)) {
        double s = 0.0;
        for (std::size_t k = 0; k < r.size(); ++k) s += r.weights[k] * std::pow(r.nodes[k], p);
        const double exact = p % 2 ? 0.0 : 2.0 / (p + 1);
        CHECK(std::abs(s - exact) <= 1e-13);
      }
    }
  }
}
