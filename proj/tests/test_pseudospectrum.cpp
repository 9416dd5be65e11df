#include <algorithm>
#include <cmath>

#include <doctest.h>

#include "jetspec/errors.hpp"
#include "jetspec/numkernels.hpp"
#include "jetspec/pseudospectrum.hpp"

using namespace jetspec;
using namespace jetspec::pseudospectrum;

namespace {

double sup_closed_form(double alpha, int m, const EnvelopeParams& p) {
  double best = 0.0;
  for (int i = 0; i <= 4000; ++i) {
    const double mu = 3.0 * i / 4000.0;
    best = std::max(best, envelope_F(alpha, mu, m, p).closed_form);
  }
  return best;
}

}  // namespace

TEST_SUITE("pseudospectrum") {
  TEST_CASE("parameter validation") {
    CHECK_NOTHROW(EnvelopeParams{}.validate());
    CHECK_THROWS_AS(EnvelopeParams{0.5}.validate(), ValidationError);
    CHECK_THROWS_AS(EnvelopeParams{0.0}.validate(), ValidationError);
    SweepGrid g;
    g.base_points = 500;
    CHECK_THROWS_AS(g.validate(), ValidationError);
    CHECK_THROWS_AS(CoercivityConfig{0.0}.validate(), ValidationError);
  }

  TEST_CASE("resolvent norm closed forms at alpha = 0") {
    CHECK(resolvent_norm_at(0.0, 1, 0.0, 64) == doctest::Approx(0.1).epsilon(1e-13));
    CHECK(resolvent_norm_at(0.0, 1, 24.0, 64) == doctest::Approx(1.0 / 26.0).epsilon(1e-13));
    CHECK_THROWS_AS(resolvent_norm_at(1.0, 0, 0.0, 64), ValidationError);
  }

  TEST_CASE("resolvent norm symmetries") {
    for (double lambda : {0.0, 70.0, 900.0, 5000.0}) {
      const double base = resolvent_norm_at(1e3, 2, lambda, 300);
      CHECK(resolvent_norm_at(1e3, 2, -lambda, 300) == doctest::Approx(base).epsilon(1e-10));
      CHECK(resolvent_norm_at(1e3, -2, lambda, 300) == doctest::Approx(base).epsilon(1e-10));
      CHECK(resolvent_norm_at(-1e3, 2, lambda, 300) == doctest::Approx(base).epsilon(1e-10));
    }
  }

  TEST_CASE("sweep smoke case and invariants") {
    CHECK_THROWS_AS(sweep(0.0, 1), ValidationError);
    const auto r = sweep(10.0, 1);
    CHECK(r.converged);
    CHECK(std::isfinite(r.psi));
    CHECK(r.psi > 0.0);
    CHECK(r.psi * r.norm_peak == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(std::is_sorted(r.mu_grid.begin(), r.mu_grid.end()));
    for (double v : r.norms) {
      CHECK(std::isfinite(v));
      CHECK(v > 0.0);
      CHECK(v <= r.norm_peak);
    }
    CHECK(r.mu_grid.front() == doctest::Approx(-8.0));
    CHECK(r.mu_grid.back() == doctest::Approx(8.0));
  }

  TEST_CASE("sweep symmetries and peak location") {
    const auto a = sweep(1e3, 1);
    const auto b = sweep(1e3, -1);
    const auto c = sweep(-1e3, 1);
    REQUIRE(a.converged);
    CHECK(std::abs(a.mu_peak) < 1.25);
    CHECK(b.psi == doctest::Approx(a.psi).epsilon(1e-8));
    CHECK(c.psi == doctest::Approx(a.psi).epsilon(1e-8));
    const double cs = fit_envelope_constant(a);
    CHECK(cs > 0.0);
    CHECK(fit_envelope_constant(b) == doctest::Approx(cs).epsilon(1e-8));
    for (std::size_t i = 0; i < a.norms.size(); ++i)
      CHECK(a.norms[i] <= cs * envelope_G(a.alpha, a.m, a.mu_grid[i]) * (1 + 1e-14));
    auto unconverged = a;
    unconverged.converged = false;
    CHECK_THROWS_AS(fit_envelope_constant(unconverged), ValidationError);
  }

  TEST_CASE("envelope G branches") {
    CHECK(envelope_G(100.0, 1, 0.0) == doctest::Approx(std::pow(100.0, -2.0 / 3.0)).epsilon(1e-14));
    CHECK(envelope_G(100.0, 1, 1.0) == doctest::Approx(0.1).epsilon(1e-14));
    CHECK(envelope_G(100.0, 1, 2.0) == doctest::Approx(0.01).epsilon(1e-14));
    CHECK(envelope_G(100.0, 1, -2.0) == envelope_G(100.0, 1, 2.0));
    CHECK(envelope_G(100.0, -3, 0.5) == envelope_G(100.0, 3, 0.5));
    CHECK_THROWS_AS(envelope_G(0.0, 1, 0.0), ValidationError);
  }

  TEST_CASE("h functions") {
    const EnvelopeParams p;
    CHECK(h1(10.0, 0.0, 1, p) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(h1(10.0, 2.0, 1, p) == 0.0);
    CHECK(h2(2.0, 0.0, 1, p) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(h1(1.0, 1.0, 4, p) == doctest::Approx(0.5).epsilon(1e-15));
    for (double xi : {0.01, 0.3, 4.0, 100.0})
      for (double mu : {-3.0, -1.0, -0.2, 0.0, 0.999, 1.0, 1.01, 5.0}) {
        CHECK(h1(xi, mu, 2, p) >= 0.0);
        CHECK(h2(xi, mu, 2, p) >= 0.0);
      }
    CHECK_THROWS_AS(h1(0.0, 0.0, 1, p), ValidationError);
  }

  TEST_CASE("numeric infimum never exceeds the regime choice") {
    const EnvelopeParams p;
    for (int ia = 0; ia < 20; ++ia) {
      const double alpha = std::pow(10.0, 1.0 + 4.0 * ia / 19.0);
      for (int im = 0; im < 20; ++im) {
        const double mu = -2.5 + 5.0 * im / 19.0;
        for (int m : {1, 2, 8}) {
          const auto f = envelope_F(alpha, mu, m, p);
          CHECK(f.numeric <= f.closed_form);
          CHECK(f.numeric > 0.0);
          CHECK(envelope_objective(alpha, m, mu, f.xi1_numeric, f.xi2_numeric, p) ==
                doctest::Approx(f.numeric).epsilon(1e-12));
        }
      }
    }
    CHECK_THROWS_AS(envelope_F(0.0, 0.5, 1, p), ValidationError);
  }

  TEST_CASE("closed-form envelope supremum scales like alpha^-1/2 m^-2/3") {
    const EnvelopeParams p;
    for (int m : {1, 4}) {
      double lo = INFINITY, hi = 0.0;
      for (double alpha : {1e3, 1e4, 1e5}) {
        const double v = sup_closed_form(alpha, m, p) * std::sqrt(alpha) * std::pow(m, 2.0 / 3.0);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      CHECK(hi / lo < 2.0);
    }
  }

  TEST_CASE("regime choices") {
    const EnvelopeParams p;
    const auto [a1, a2] = regime_xi(1e4, 1, 3.0, p);
    CHECK(a1 == doctest::Approx(2.0 * p.kappa / 2.0));
    CHECK(a2 * a2 == doctest::Approx(a1));
    const auto [b1, b2] = regime_xi(1e4, 1, 1.0, p);
    CHECK(b1 == doctest::Approx(p.kappa * 100.0 / 2.0));
    CHECK(b2 * b2 == doctest::Approx(b1));
    const auto [c1, c2] = regime_xi(1e3, 2, 0.0, p);
    CHECK(c1 == doctest::Approx(std::cbrt(2e3)));
    CHECK(c2 == doctest::Approx(std::cbrt(2e3)));
  }

  TEST_CASE("coercivity scan, cheap points") {
    const EnvelopeParams p;
    CoercivityConfig cfg;
    cfg.max_doublings = 10;  // |μ| > 1 settles only near n_hi ~ 1e4
    const auto recs = coercivity_scan(1, {3.0, 2.0, 0.0, 0.5, -0.5}, 64, p, cfg);
    REQUIRE(recs.size() == 5);
    for (const auto& r : recs) {
      CHECK(r.converged);
      CHECK(r.max_rel_change <= 1e-6);
      CHECK(r.s_min > 0.0);
      CHECK(r.c_b3 > 0.0);
    }
    CHECK(recs[0].s_min >= 2.0 - 1e-9);
    CHECK(recs[0].ratio_high == doctest::Approx(recs[0].s_min / 2.0));
    CHECK(std::isnan(recs[2].ratio_high));
    CHECK(recs[2].c_combined > 0.0);
    CHECK(std::isnan(recs[0].c_combined));
    CHECK(recs[3].c_combined == doctest::Approx(recs[4].c_combined).epsilon(1e-9));
    // μ = 0 with |m| ≥ 3: Λ is injective on the reduced space.
    const auto r3 = coercivity_scan(3, {0.0}, 64, p);
    CHECK(r3[0].s_min > 0.0);
    CHECK_THROWS_AS(coercivity_scan(0, {0.0}, 64, p), ValidationError);
  }

  TEST_CASE("coercivity is even in m") {
    const EnvelopeParams p;
    const auto a = coercivity_scan(2, {1.5, 0.3}, 64, p);
    const auto b = coercivity_scan(-2, {1.5, 0.3}, 64, p);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].s_min == doctest::Approx(b[i].s_min).epsilon(1e-12));
      CHECK(a[i].c_b3 == doctest::Approx(b[i].c_b3).epsilon(1e-12));
    }
  }
}
