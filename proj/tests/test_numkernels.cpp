#include <atomic>
#include <cmath>
#include <cstdlib>
#include <stdexcept>

#include <Eigen/Eigenvalues>
#include <doctest.h>

#include "jetspec/errors.hpp"
#include "jetspec/numkernels.hpp"
#include "jetspec/operators.hpp"

using namespace jetspec;
using namespace jetspec::numkernels;
using Eigen::MatrixXcd;
using Eigen::VectorXcd;

namespace {

// σ_min² as the smallest eigenvalue of TᴴT.
double oracle_smin(const MatrixXcd& T) {
  Eigen::SelfAdjointEigenSolver<MatrixXcd> es(T.adjoint() * T);
  return std::sqrt(std::max(0.0, es.eigenvalues()(0)));
}

double oracle_min_eig(const MatrixXcd& H) {
  Eigen::SelfAdjointEigenSolver<MatrixXcd> es(H, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

// Largest eigenvalue of A x = λ B x through B = LLᴴ.
double oracle_pencil(const MatrixXcd& A, const MatrixXcd& B) {
  Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXcd> es(A, B, Eigen::EigenvaluesOnly | Eigen::Ax_lBx);
  return es.eigenvalues()(es.eigenvalues().size() - 1);
}

MatrixXcd diag(std::initializer_list<cdouble> d) {
  MatrixXcd m = MatrixXcd::Zero(static_cast<Eigen::Index>(d.size()), static_cast<Eigen::Index>(d.size()));
  Eigen::Index i = 0;
  for (cdouble v : d) m(i, i) = v, ++i;
  return m;
}

// Stable random matrix: spectrum shifted into the left half plane.
MatrixXcd random_stable(Rng& rng, Eigen::Index n) {
  MatrixXcd M = rng.complex_matrix(n, n);
  Eigen::ComplexEigenSolver<MatrixXcd> es(M);
  double shift = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) shift = std::max(shift, es.eigenvalues()(i).real());
  M.diagonal().array() -= shift + 1.0;
  return M;
}

}  // namespace

TEST_SUITE("numkernels") {
  TEST_CASE("tolerance bounds") {
    CHECK_NOTHROW(Tolerance{1e-14});
    CHECK_NOTHROW(Tolerance{1e-2});
    CHECK_THROWS_AS(Tolerance{1e-15}, ValidationError);
    CHECK_THROWS_AS(Tolerance{0.1}, ValidationError);
    CHECK(Tolerance{}.rel() == 1e-10);
  }

  TEST_CASE("min singular value, small cases") {
    CHECK(min_singular_value(diag({2.0, cdouble(0, -3)})) == doctest::Approx(2.0).epsilon(1e-14));
    MatrixXcd nil = MatrixXcd::Zero(2, 2);
    nil(0, 1) = 1.0;
    CHECK(min_singular_value(nil) == 0.0);
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
      const MatrixXcd T = rng.complex_matrix(8, 8);
      CHECK(min_singular_value(T) == doctest::Approx(oracle_smin(T)).epsilon(1e-10));
    }
    CHECK_THROWS_AS(min_singular_value(MatrixXcd(MatrixXcd::Zero(2, 3))), ValidationError);
  }

  TEST_CASE("banded min singular value matches the dense oracle") {
    Rng rng(99);
    for (int m : {1, 3}) {
      for (int n_hi : {40, 150, 420}) {
        const auto sp = ModeSpace::reduced(m, n_hi);
        const auto L = assemble_L(sp, 1e4);
        for (double mu : {0.0, 0.4, 0.95, 1.3}) {
          const auto T = (-1.0 * L).shifted(cdouble(0.0, mu * 1e4 * m));
          const double ref = oracle_smin(T.to_dense());
          CHECK(min_singular_value(T) == doctest::Approx(ref).epsilon(1e-9));
        }
      }
    }
  }

  TEST_CASE("iterative and bidiagonal routes agree above the direct threshold") {
    for (int m : {1, 2, 5}) {
      const auto sp = ModeSpace::reduced(m, 700);
      const auto L = assemble_L(sp, 3e4);
      for (double mu : {0.0, 0.5, 0.9, 2.0}) {
        const auto T = (-1.0 * L).shifted(cdouble(0.0, mu * 3e4 * m));
        const double a = min_singular_value(T), b = min_singular_value_bidiagonal(T);
        CHECK(a == doctest::Approx(b).epsilon(1e-9));
      }
    }
  }

  TEST_CASE("lower bound shift on clustered spectra") {
    // μ - Λ for |μ| > 1 has σ_min just above |μ| - 1 with a dense cluster.
    const auto sp = ModeSpace::reduced(1, 2000);
    const auto T = cdouble(-1.0) * assemble_Lambda(sp).shifted(-1.05);
    const double shifted = min_singular_value(T, Tolerance{}, 0.05);
    const double direct = min_singular_value_bidiagonal(T);
    CHECK(shifted == doctest::Approx(direct).epsilon(1e-9));
    // An invalid bound is ignored, not trusted.
    CHECK(min_singular_value(T, Tolerance{}, 0.5) == doctest::Approx(direct).epsilon(1e-9));
  }

  TEST_CASE("distance to the spectrum of a normal matrix") {
    const auto sp = ModeSpace::full(2, 300);
    const auto A = assemble_A(sp);
    for (cdouble z : {cdouble(0, 0), cdouble(0, 25), cdouble(3, -7)}) {
      double d = INFINITY;
      for (Eigen::Index i = 0; i < sp.dim(); ++i) d = std::min(d, std::abs(z - A(i, i)));
      CHECK(min_singular_value(cdouble(-1.0) * A.widened(1).shifted(-z)) == doctest::Approx(d).epsilon(1e-10));
    }
  }

  TEST_CASE("operator norm") {
    CHECK(operator_norm(MatrixXcd(MatrixXcd::Zero(3, 4))) == 0.0);
    CHECK(operator_norm(diag({1.0, 0.5})) == doctest::Approx(1.0).epsilon(1e-15));
    double prev = 0.0;
    for (int n_hi : {50, 200, 800}) {
      const double nrm = operator_norm(assemble_Lambda(ModeSpace::full(1, n_hi)));
      CHECK(nrm < 1.0);
      CHECK(nrm > prev);
      prev = nrm;
    }
    CHECK(prev > 0.99);
    Rng rng(4);
    const MatrixXcd M = rng.complex_matrix(6, 9);
    Eigen::JacobiSVD<MatrixXcd> svd(M);
    CHECK(operator_norm(M) == doctest::Approx(svd.singularValues()(0)).epsilon(1e-12));
  }

  TEST_CASE("hermitian minimum eigenvalue") {
    CHECK(hermitian_min_eig(MatrixXcd(MatrixXcd::Identity(4, 4))) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(hermitian_min_eig(diag({-4.0, -10.0, -18.0})) == doctest::Approx(-18.0).epsilon(1e-15));
    MatrixXcd two(2, 2);
    two << 2.0, 1.0, 1.0, 2.0;
    CHECK(hermitian_min_eig(two) == doctest::Approx(1.0).epsilon(1e-14));
    MatrixXcd skew = two;
    skew(0, 1) = 3.0;
    CHECK_THROWS_AS(hermitian_min_eig(skew), ValidationError);
  }

  TEST_CASE("banded hermitian minimum eigenvalue, both regimes") {
    for (int n_hi : {60, 400, 1500}) {
      const auto sp = ModeSpace::reduced(2, n_hi);
      const auto S = assemble_sin2_form(sp);
      const auto C = assemble_cos(sp);
      auto H = C.adjoint() * C;
      H += cdouble(-1e-3) * assemble_A(sp).widened(2);
      const double scale = 1.0 + 1e-3 * (n_hi * (n_hi + 1.0));
      if (n_hi <= 400) {
        CHECK(hermitian_min_eig(S) == doctest::Approx(oracle_min_eig(S.to_dense())).epsilon(1e-10).scale(1.0));
        CHECK(hermitian_min_eig(H) == doctest::Approx(oracle_min_eig(H.to_dense())).epsilon(1e-10).scale(scale));
      } else {
        CHECK(hermitian_min_eig(H) >= 0.0);
      }
    }
    const auto sp = ModeSpace::full(1, 30);
    CHECK_THROWS_AS(hermitian_min_eig(assemble_Lambda(sp)), ValidationError);
  }

  TEST_CASE("generalized pencil against a Cholesky-transformed oracle") {
    for (int n_hi : {40, 180, 320}) {
      const auto sp = ModeSpace::reduced(1, n_hi);
      const auto S = assemble_sin2_form(sp);
      const auto T = assemble_Lambda(sp).shifted(-0.5);
      auto B = T.adjoint() * T;
      B += cdouble(-0.01) * assemble_A(sp).widened(2);
      const double ref = oracle_pencil(S.to_dense(), B.to_dense());
      CHECK(pencil_max_eig(S, B) == doctest::Approx(ref).epsilon(1e-9));
    }
  }

  TEST_CASE("banded solve") {
    Rng rng(12);
    const auto sp = ModeSpace::full(1, 250);
    const auto T = (-1.0 * assemble_L(sp, 500.0)).shifted(cdouble(1.0, 1.0));
    const VectorXcd b = rng.complex_vector(sp.dim());
    const VectorXcd x = solve(T, b);
    CHECK((T.apply(x) - b).norm() <= 1e-12 * b.norm());
    auto Z = BandedOperator(sp, 1);
    CHECK_THROWS_AS(solve(Z, b), NumericalError);
  }

  TEST_CASE("propagator basics") {
    Rng rng(31);
    const MatrixXcd I = propagator(rng.complex_matrix(5, 5), 0.0);
    CHECK((I - MatrixXcd::Identity(5, 5)).norm() == 0.0);
    const MatrixXcd E = propagator(diag({-4.0, -10.0}), 0.5);
    CHECK(std::abs(E(0, 0) - std::exp(-2.0)) <= 1e-15);
    CHECK(std::abs(E(1, 1) - std::exp(-5.0)) <= 1e-16);
    CHECK(std::abs(E(0, 1)) == 0.0);
    CHECK_THROWS_AS(propagator(diag({1.0}), -1.0), ValidationError);
  }

  TEST_CASE("semigroup property for random stable matrices") {
    Rng rng(77);
    for (int trial = 0; trial < 20; ++trial) {
      const MatrixXcd L = random_stable(rng, 8);
      const double t1 = 0.1 + rng.uniform(), t2 = 0.1 + 2.0 * rng.uniform();
      const MatrixXcd E = propagator(L, t1 + t2);
      const double err = operator_norm(MatrixXcd(E - propagator(L, t1) * propagator(L, t2)));
      CHECK(err <= 10.0 * 1e-10 * operator_norm(E));
    }
  }

  TEST_CASE("propagator on assembled generators") {
    for (double alpha : {0.0, 10.0, 1e3}) {
      const auto sp = ModeSpace::full(1, 96);
      const MatrixXcd L = assemble_L(sp, alpha).to_dense();
      for (double t : {0.003, 0.05, 0.4}) {
        const MatrixXcd E = propagator(L, 2 * t);
        const MatrixXcd H = propagator(L, t);
        CHECK(operator_norm(MatrixXcd(E - H * H)) <= 10.0 * 1e-10 * std::max(operator_norm(E), 1e-300));
      }
    }
    // α = 0: exactly diagonal.
    const auto sp = ModeSpace::full(2, 40);
    const MatrixXcd E = propagator(assemble_L(sp, 0.0).to_dense(), 0.3);
    for (Eigen::Index i = 0; i < sp.dim(); ++i) {
      const double lam = sp.degree(i) * (sp.degree(i) + 1.0);
      // Squaring amplifies the relative error of the fast-decaying entries.
      CHECK(std::abs(E(i, i) - std::exp((2.0 - lam) * 0.3)) <= 1e-12 * std::exp((2.0 - lam) * 0.3) + 1e-300);
    }
    CHECK((E - MatrixXcd(E.diagonal().asDiagonal())).norm() == 0.0);
    CHECK(operator_norm(MatrixXcd(E.bottomRightCorner(sp.dim() - 1, sp.dim() - 1))) ==
          doctest::Approx(std::exp(-3.0)).epsilon(1e-12));
  }

  TEST_CASE("seeded generator") {
    Rng a(123), b(123);
    for (int i = 0; i < 50; ++i) CHECK(a.normal() == b.normal());
    Rng c(5);
    double mean = 0.0, var = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
      const double x = c.normal();
      mean += x;
      var += x * x;
    }
    CHECK(std::abs(mean / n) < 0.03);
    CHECK(std::abs(var / n - 1.0) < 0.05);
    Rng u(1);
    for (int i = 0; i < 1000; ++i) {
      const double x = u.uniform();
      CHECK(x >= 0.0);
      CHECK(x < 1.0);
    }
  }

  TEST_CASE("parallel_for merges by index and rethrows the first failure") {
    std::vector<int> out(100, 0);
    parallel_for(out.size(), [&](std::size_t i) { out[i] = static_cast<int>(i * i); });
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == static_cast<int>(i * i));
    std::atomic<int> ran{0};
    try {
      parallel_for(50, [&](std::size_t i) {
        ++ran;
        if (i == 17 || i == 40) throw std::runtime_error("fail " + std::to_string(i));
      });
      FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()) == "fail 17");
    }
    CHECK(ran.load() == 50);
    CHECK(worker_count() >= 1);
  }
}
