#pragma once

// Resolvent norms of Q L_{α,m} along the imaginary axis, the pseudospectral
// bound Ψ, the envelopes G_m and F_m, and the coercive-estimate scan.
//
// Sweeps use μ = λ/(αm). The resolvent norm depends on (α, m) only through
// |αm| and |m| and is even in λ, so sweeps evaluate μ ≥ 0 and mirror.

#include <vector>

#include "jetspec/operators.hpp"

namespace jetspec::pseudospectrum {

struct EnvelopeParams {
  double kappa = 1.0 / 16.0;

  /// Throws ValidationError unless 0 < kappa < 1/2.
  void validate() const;
};

struct SweepGrid {
  int base_points = 501;       // odd, symmetric about 0
  double base_half_width = 1.25;
  int tail_points = 24;        // per side, geometric from base_half_width to tail_max
  double tail_max = 8.0;
  double peak_rtol = 1e-3;     // golden-section stop: value spread on the bracket
  double psi_rtol = 1e-6;      // truncation gate on Ψ
  int max_doublings = 3;
  TruncationPolicy truncation{};

  void validate() const;
};

struct SweepResult {
  double alpha = 0.0;
  int m = 0;
  std::vector<double> mu_grid;  // ascending
  std::vector<double> norms;    // ‖(iλ - Q L|_Y)^{-1}‖ at λ = μ α m
  double mu_peak = 0.0;         // ≥ 0; the mirror image -mu_peak is an equal peak
  double norm_peak = 0.0;
  double psi = 0.0;             // 1 / norm_peak
  double psi_prev = 0.0;        // Ψ at the previous truncation level
  int n_hi_used = 0;
  bool converged = false;
};

/// 1/σ_min(iλ - L_{α,m}) on the Reduced space of degree n_hi.
double resolvent_norm_at(double alpha, int m, double lambda, int n_hi);

/// Sweep on the grid, refine every local maximum, and double n_hi until Ψ
/// settles. Non-convergence is reported through `converged`, not thrown.
SweepResult sweep(double alpha, int m, const SweepGrid& grid = {});

/// Piecewise envelope G_m(α, μ).
double envelope_G(double alpha, int m, double mu);

double h1(double xi, double mu, int m, const EnvelopeParams& params);
double h2(double xi, double mu, int m, const EnvelopeParams& params);

struct EnvelopeF {
  double closed_form = 0.0;  // objective at the regime choice of (ξ₁, ξ₂)
  double xi1_closed = 0.0;
  double xi2_closed = 0.0;
  double numeric = 0.0;      // grid infimum; never above closed_form
  double xi1_numeric = 0.0;
  double xi2_numeric = 0.0;
};

/// Regime choice (ξ₁, ξ₂) for the envelope at (α, m, μ).
std::pair<double, double> regime_xi(double alpha, int m, double mu, const EnvelopeParams& params);

/// The objective ξ₁/|αm| + ξ₁²ξ₂²/(αm)² + ξ₁² h₂(ξ₂)/|αm| + h₁(ξ₁)².
double envelope_objective(double alpha, int m, double mu, double xi1, double xi2, const EnvelopeParams& params);

EnvelopeF envelope_F(double alpha, double mu, int m, const EnvelopeParams& params);

/// C* = max_i norms[i] / G_m(α, μ_i). Requires a converged sweep.
double fit_envelope_constant(const SweepResult& sweep);

struct CoercivityConfig {
  double alpha_ref = 1e4;  // sets the regime choice of ξ
  double rtol = 1e-6;      // truncation gate on the recorded quantities
  int max_doublings = 5;

  void validate() const;
};

struct CoercivityRecord {
  int m = 0;
  double mu = 0.0;
  double xi1 = 0.0;
  double xi2 = 0.0;
  double s_min = 0.0;       // σ_min of Q(μ - Λ) on Y_m
  double ratio_high = 0.0;  // s_min / (|μ| - 1), NaN for |μ| ≤ 1
  double c_combined = 0.0;  // λ_min(ξ₁² TᵀT + h₁² D_A), NaN for |μ| > 1
  double c_b3 = 0.0;        // 1 / λ_max(S, ξ₂² TᵀT + h₂² D_A)
  int n_hi_used = 0;
  double max_rel_change = 0.0;  // over the gated quantities at the last doubling
  bool converged = false;
};

std::vector<CoercivityRecord> coercivity_scan(int m, const std::vector<double>& mu_list, int n_hi,
                                              const EnvelopeParams& params, const CoercivityConfig& config = {});

}  // namespace jetspec::pseudospectrum
