#pragma once

// Linear-algebra kernels: extremal singular values and eigenvalues of banded and
// dense matrices, and the matrix exponential.
//
// Every kernel is single-threaded and deterministic. Callers parallelize across
// independent evaluations with parallel_for, which merges results by index.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>

#include <Eigen/Dense>

#include "jetspec/operators.hpp"

namespace jetspec::numkernels {

class Tolerance {
 public:
  /// Throws ValidationError unless 1e-14 ≤ rel ≤ 1e-2.
  explicit Tolerance(double rel = 1e-10);
  [[nodiscard]] double rel() const { return rel_; }

 private:
  double rel_;
};

/// σ_min of a square matrix.
///
/// Banded input of dimension above 200 runs Lanczos on (TᴴT - ℓ²)⁻¹, O(n) per
/// step with full reorthogonalization (ℓ is only used for bandwidth ≤ 1). It
/// stops once the Ritz residual is below tol.rel relative to the Ritz value; if that fails within 80 steps it falls
/// back to min_singular_value_bidiagonal. ℓ = `lower_bound` must not exceed σ_min;
/// a valid ℓ close to σ_min separates clustered singular values. It is checked by
/// a Cholesky factorization and ignored when that fails. The dense path uses Eigen's SVD.
double min_singular_value(const BandedOperator& T, Tolerance tol = Tolerance{}, double lower_bound = 0.0);
double min_singular_value(const Eigen::MatrixXcd& T, Tolerance tol = Tolerance{});

/// Direct route: reduction to real bidiagonal form (zgbbrd, O(n²)) then dqds (dbdsqr).
double min_singular_value_bidiagonal(const BandedOperator& T);

/// Largest singular value. The dense overload accepts rectangular input.
double operator_norm(const BandedOperator& M, Tolerance tol = Tolerance{});
double operator_norm(const Eigen::MatrixXcd& M, Tolerance tol = Tolerance{});

/// Smallest eigenvalue of a Hermitian matrix. Rejects input that is not
/// Hermitian to 1e-12 relative to its largest entry.
double hermitian_min_eig(const BandedOperator& H, Tolerance tol = Tolerance{});
double hermitian_min_eig(const Eigen::MatrixXcd& H, Tolerance tol = Tolerance{});

/// Largest λ with A x = λ B x, A Hermitian positive semidefinite banded and B
/// Hermitian positive definite banded. Up to dimension 200 this is zhbgvx; above,
/// bisection on τ using the inertia of τB - A, read off a banded Cholesky attempt.
double pencil_max_eig(const BandedOperator& A, const BandedOperator& B, Tolerance tol = Tolerance{});

/// Solves T x = b by banded LU with partial pivoting. Throws NumericalError if T is singular.
Eigen::VectorXcd solve(const BandedOperator& T, const Eigen::VectorXcd& b);

/// e^{tL} by Padé scaling and squaring. The result is recomputed with one extra
/// squaring; if the two disagree by more than tol.rel relative to the largest
/// column norm, NumericalError is thrown.
Eigen::MatrixXcd propagator(const Eigen::MatrixXcd& L, double t, Tolerance tol = Tolerance{});

/// Seeded generator for test inputs: mt19937_64, uniforms from the top 53 bits,
/// normals by Box–Muller (both values of each pair are used in order).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform();
  double normal();
  /// Real and imaginary parts independent standard normals.
  cdouble complex_normal();

  Eigen::VectorXcd complex_vector(Eigen::Index n);
  Eigen::MatrixXcd complex_matrix(Eigen::Index rows, Eigen::Index cols);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Worker count from JETSPEC_WORKERS, else hardware concurrency (at least 1).
int worker_count();

/// Runs body(i) for i in [0, n) on worker_count() threads. If any call throws,
/// the exception from the smallest failing index is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace jetspec::numkernels
