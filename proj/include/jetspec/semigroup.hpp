#pragma once

// Propagator norms of e^{tL_{α,m}} on the Full space, certified decay rates,
// the α/m scaling study, the P-part transient and the resolvent identities.
//
// With the Y_2^m direction first, L is block upper triangular for |m| ∈ {1,2}:
// its first column is -4·e_0. Hence ‖P e^{tL} P‖ = e^{-4t} exactly and
// ‖P e^{tL} Q‖ is the norm of the first row of e^{tL} without its first entry.

#include <complex>
#include <cstdint>
#include <vector>

#include "jetspec/operators.hpp"
#include "jetspec/pseudospectrum.hpp"

namespace jetspec::semigroup {

/// Log-spaced grid t_k = t_min · 2^{k/q}. Zero fields are chosen automatically:
/// t_min = 0.01 / max(10, psi_hint/2), and t_max is the first t_min·2^j with
/// ‖Q e^{tL} Q‖ ≤ qq_target. q is picked so the grid has about `points` entries.
struct TimeGrid {
  double t_min = 0.0;
  double t_max = 0.0;
  int points = 40;
  double qq_target = 1e-8;
  double psi_hint = 0.0;

  void validate() const;
};

struct CurveConfig {
  TimeGrid time{};
  /// Truncation for propagators; the transient lives on degrees ~ |αm|^{1/3}.
  TruncationPolicy truncation{64, 4.0, 1.0 / 3.0};
  double rtol = 1e-6;          // doubling gate on qq and pq
  double abs_floor = 1e-8;     // values below this are gated absolutely
  int max_doublings = 3;
  double expm_rtol = 1e-10;    // propagator accuracy contract

  void validate() const;
};

struct PropagatorCurve {
  double alpha = 0.0;
  int m = 0;
  std::vector<double> t_grid;
  std::vector<double> qq_norms;      // ‖Q e^{tL} Q‖
  std::vector<double> pq_norms;      // ‖P e^{tL} Q‖; empty for |m| ≥ 3
  std::vector<double> pp_residuals;  // |‖P e^{tL} P‖ - e^{-4t}|; empty for |m| ≥ 3
  double pp_check = 0.0;             // max of pp_residuals
  int n_hi_used = 0;
  double max_rel_change = 0.0;       // at the last doubling
  bool converged = false;
};

struct DecayEstimate {
  double sigma = 0.0;
  double c_cap = 10.0;
  double achieved_prefactor = 0.0;  // max_t qq(t)·e^{σt}, ≤ c_cap
  double t_min = 0.0;
  double t_max = 0.0;
  bool certified = false;           // false when some qq ≥ c_cap; sigma is then 0
};

PropagatorCurve propagator_curve(double alpha, int m, const CurveConfig& config = {});

/// Largest σ with qq(t) ≤ c_cap·e^{-σt} on the whole grid.
DecayEstimate decay_rate(const PropagatorCurve& curve, double c_cap = 10.0);

struct Slope {
  double value = 0.0;
  double std_error = 0.0;
  double ci_low = 0.0;   // Student-t interval at ScalingConfig::ci_level; NaN with < 3 points
  double ci_high = 0.0;
  int points = 0;
};

/// Least-squares slope of ln y against ln x.
Slope loglog_slope(const std::vector<double>& x, const std::vector<double>& y, double ci_level = 0.95);

struct ScalingConfig {
  int m_fixed = 1;             // m for the α series
  double alpha_fixed = 1e4;    // α for the m series
  double sigma_alpha_max = 1e4;  // propagators only up to this α
  double c_cap = 10.0;
  double ci_level = 0.95;
  pseudospectrum::SweepGrid sweep{};
  CurveConfig curve{};

  void validate() const;
};

struct ScalingPoint {
  double alpha = 0.0;
  int m = 0;
  double psi = 0.0;
  double mu_peak = 0.0;
  double c_star = 0.0;
  int n_hi_sweep = 0;
  bool sweep_converged = false;
  double psi_scaled = 0.0;  // Ψ / (|α|^{1/2} |m|^{2/3})
  bool has_sigma = false;
  double sigma = 0.0;
  double achieved_prefactor = 0.0;
  int n_hi_curve = 0;
  bool curve_converged = false;
  double link = 0.0;        // σ / Ψ
};

struct ScalingTable {
  std::vector<ScalingPoint> points;  // α series first, then the m series without repeats
  Slope psi_vs_alpha;
  Slope psi_vs_m;
  Slope sigma_vs_alpha;
  Slope sigma_vs_m;
  double psi_scaled_min = 0.0;
  double psi_scaled_max = 0.0;
  double link_min = 0.0;
  double link_max = 0.0;
};

ScalingTable scaling_study(const std::vector<double>& alpha_list, const std::vector<int>& m_list,
                           const ScalingConfig& config = {});

struct TransientConfig {
  CurveConfig curve{};
  double peak_rtol = 1e-4;  // golden-section stop in log t
  double ci_level = 0.95;

  void validate() const;
};

struct TransientRow {
  double alpha = 0.0;
  int m = 0;
  double amplitude = 0.0;  // max_t ‖P e^{tL} Q‖ e^{2t}
  double t_peak = 0.0;
  double pp_check = 0.0;
  int n_hi_used = 0;
  bool converged = false;
  PropagatorCurve curve;
};

struct TransientTable {
  std::vector<TransientRow> rows;
  Slope amplitude_vs_alpha;
};

TransientTable transient_study(const std::vector<double>& alpha_list, int m, const TransientConfig& config = {});

struct IdentityCheck {
  double q_residual = 0.0;  // max relative residual of the Q identity
  double p_residual = 0.0;  // max relative residual of the P identity (0 for |m| ≥ 3)
  int n_hi = 0;

  [[nodiscard]] double max_residual() const { return q_residual > p_residual ? q_residual : p_residual; }
};

/// Checks Q(ζ-L)⁻¹f = (ζ-QL)⁻¹Qf and
/// P(ζ-L)⁻¹f = Pf/(ζ+4) - iαm/(ζ+4) · PΛ(ζ-QL)⁻¹Qf for seeded random f.
/// n_hi = 0 selects the default truncation policy.
IdentityCheck resolvent_identity_check(double alpha, int m, std::complex<double> zeta, int trials,
                                       std::uint64_t seed = 1, int n_hi = 0);

}  // namespace jetspec::semigroup
