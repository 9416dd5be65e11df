#pragma once

// Spherical-harmonic basis data on the unit sphere.
//
// Profiles are fully normalized, Y_n^m(θ,φ) = P̄_n^m(θ) e^{imφ} with
// ∫|Y_n^m|² dA = 1 and the Condon–Shortley phase, so P̄_n^{-m} = (-1)^m P̄_n^m.

#include <vector>

namespace jetspec::harmonics {

/// Gauss–Legendre rule on [-1, 1]; nodes strictly increasing.
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  [[nodiscard]] std::size_t size() const { return nodes.size(); }
};

/// λ_n = n(n+1), the eigenvalue of -Δ on degree-n harmonics.
double laplace_eigenvalue(int n);

/// Three-term recurrence weight a_n^m with cosθ·Y_n^m = a_n^m Y_{n-1}^m + a_{n+1}^m Y_{n+1}^m.
/// Zero when n == |m|. Throws ValidationError if n < |m|.
double coupling(int n, int m);

/// Normalized profile P̄_n^m(θ), θ ∈ [0, π].
double eval_basis(int n, int m, double theta);

/// dP̄_n^m/dθ; analytic limits at the poles.
double eval_basis_dtheta(int n, int m, double theta);

/// P̄_k^m(θ) for k = |m| .. n_max in one upward sweep. Entry i holds degree |m| + i.
std::vector<double> eval_basis_column(int n_max, int m, double theta);

QuadratureRule gauss_legendre(int npts);

}  // namespace jetspec::harmonics
