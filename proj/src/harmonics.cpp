#include "jetspec/harmonics.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "jetspec/errors.hpp"

namespace jetspec::harmonics {

namespace {

constexpr double kPi = std::numbers::pi;

// Rescaling threshold for the upward recurrence: values are carried as
// mantissa * 2^exponent so that sin^m θ never underflows mid-sweep.
constexpr int kRescaleBits = 600;

double coupling_unchecked(int n, int abs_m) {
  if (n <= abs_m) return 0.0;
  const double num = static_cast<double>(n - abs_m) * static_cast<double>(n + abs_m);
  const double den = static_cast<double>(2 * n - 1) * static_cast<double>(2 * n + 1);
  return std::sqrt(num / den);
}

void check_theta(double theta) {
  if (!(theta >= 0.0 && theta <= kPi))
    throw ValidationError("colatitude must lie in [0, pi], got " + std::to_string(theta));
}

void check_degree_order(int n, int m) {
  if (n < 0) throw ValidationError("degree must be nonnegative, got " + std::to_string(n));
  if (std::abs(m) > n)
    throw ValidationError("order |m|=" + std::to_string(std::abs(m)) + " exceeds degree " +
                          std::to_string(n));
}

}  // namespace

double laplace_eigenvalue(int n) {
  if (n < 0) throw ValidationError("degree must be nonnegative, got " + std::to_string(n));
  return static_cast<double>(n) * static_cast<double>(n + 1);
}

double coupling(int n, int m) {
  check_degree_order(n, m);
  return coupling_unchecked(n, std::abs(m));
}

std::vector<double> eval_basis_column(int n_max, int m, double theta) {
  check_degree_order(n_max, m);
  check_theta(theta);
  const int am = std::abs(m);
  std::vector<double> out(static_cast<std::size_t>(n_max - am + 1), 0.0);

  const double s = std::sin(theta);
  const double c = std::cos(theta);
  if (am > 0 && (theta == 0.0 || theta == kPi)) return out;

  // log |P̄_m^m(θ)| = ½ log((2m+1)/4π) + ½ Σ_k log((2k-1)/2k) + m log sinθ
  double log_start = 0.5 * std::log((2.0 * am + 1.0) / (4.0 * kPi));
  for (int k = 1; k <= am; ++k) log_start += 0.5 * std::log((2.0 * k - 1.0) / (2.0 * k));
  if (am > 0) log_start += am * std::log(s);

  int exponent = static_cast<int>(std::floor(log_start / std::numbers::ln2));
  double cur = std::exp(log_start - exponent * std::numbers::ln2);
  // Condon–Shortley phase (-1)^m for m > 0; cancelled by (-1)^m for m < 0.
  if (m > 0 && (am % 2 == 1)) cur = -cur;
  double prev = 0.0;
  out[0] = std::ldexp(cur, exponent);

  for (int n = am + 1; n <= n_max; ++n) {
    const double next = (c * cur - coupling_unchecked(n - 1, am) * prev) / coupling_unchecked(n, am);
    prev = cur;
    cur = next;
    if (std::abs(cur) > std::ldexp(1.0, kRescaleBits)) {
      cur = std::ldexp(cur, -kRescaleBits);
      prev = std::ldexp(prev, -kRescaleBits);
      exponent += kRescaleBits;
    }
    out[static_cast<std::size_t>(n - am)] = std::ldexp(cur, exponent);
  }
  return out;
}

double eval_basis(int n, int m, double theta) { return eval_basis_column(n, m, theta).back(); }

double eval_basis_dtheta(int n, int m, double theta) {
  check_degree_order(n, m);
  check_theta(theta);
  const int am = std::abs(m);
  if (n == 0) return 0.0;

  const double s = std::sin(theta);
  if (s < 1e-10) {
    // Only |m| = 1 profiles have a nonzero slope at the poles.
    if (am != 1) return 0.0;
    const double mag = std::sqrt((2.0 * n + 1.0) / (4.0 * kPi)) *
                       std::sqrt(static_cast<double>(n) * (n + 1.0)) / 2.0;
    const bool north = theta < 0.5 * kPi;
    double val = north ? -mag : ((n + 1) % 2 == 0 ? mag : -mag);
    return m < 0 ? -val : val;
  }

  const auto col = eval_basis_column(n, m, theta);
  const double p_n = col.back();
  const double p_nm1 = (n > am) ? col[col.size() - 2] : 0.0;
  // dP̄_n/dθ = (n cosθ P̄_n - (2n+1) a_n P̄_{n-1}) / sinθ
  return (n * std::cos(theta) * p_n - (2.0 * n + 1.0) * coupling_unchecked(n, am) * p_nm1) / s;
}

QuadratureRule gauss_legendre(int npts) {
  if (npts < 1) throw ValidationError("quadrature needs at least one node");
  QuadratureRule rule;
  rule.nodes.assign(static_cast<std::size_t>(npts), 0.0);
  rule.weights.assign(static_cast<std::size_t>(npts), 0.0);

  const int half = (npts + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double z = std::cos(kPi * (i + 0.75) / (npts + 0.5));
    double deriv = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p1 = 1.0, p2 = 0.0;
      for (int j = 1; j <= npts; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j - 1.0) * z * p2 - (j - 1.0) * p3) / j;
      }
      deriv = npts * (z * p1 - p2) / (z * z - 1.0);
      const double dz = p1 / deriv;
      z -= dz;
      if (std::abs(dz) <= 1e-16) break;
    }
    // Re-evaluate the derivative at the converged node for the weight.
    double p1 = 1.0, p2 = 0.0;
    for (int j = 1; j <= npts; ++j) {
      const double p3 = p2;
      p2 = p1;
      p1 = ((2.0 * j - 1.0) * z * p2 - (j - 1.0) * p3) / j;
    }
    deriv = npts * (z * p1 - p2) / (z * z - 1.0);
    const double w = 2.0 / ((1.0 - z * z) * deriv * deriv);

    const auto lo = static_cast<std::size_t>(i);
    const auto hi = static_cast<std::size_t>(npts - 1 - i);
    if (lo == hi) {
      rule.nodes[lo] = 0.0;
      rule.weights[lo] = w;
    } else {
      rule.nodes[lo] = -z;
      rule.nodes[hi] = z;
      rule.weights[lo] = w;
      rule.weights[hi] = w;
    }
  }
  return rule;
}

}  // namespace jetspec::harmonics
