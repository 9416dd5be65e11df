#include "jetspec/pseudospectrum.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <tuple>
#include <utility>

#include "jetspec/errors.hpp"
#include "jetspec/numkernels.hpp"

namespace jetspec::pseudospectrum {

namespace {

using numkernels::parallel_for;

constexpr double kInvGolden = 0.6180339887498949;
constexpr int kMaxGoldenSteps = 80;

void require_nonzero(double alpha, int m) {
  if (alpha == 0.0 || !std::isfinite(alpha)) throw ValidationError("alpha must be finite and nonzero");
  if (m == 0) throw ValidationError("m must be nonzero");
}

double rel_change(double now, double before) {
  const double scale = std::max(std::abs(now), std::numeric_limits<double>::min());
  return std::abs(now - before) / scale;
}

// iλ - L on the Reduced space, for the canonical L with αm > 0.
BandedOperator resolvent_operator(const BandedOperator& L, double lambda) {
  return (-1.0 * L).shifted(cdouble(0.0, lambda));
}

using Samples = std::map<double, double>;  // μ ≥ 0 → resolvent norm

class SweepLevel {
 public:
  // alpha and m positive.
  SweepLevel(double alpha, int m, int n_hi)
      : am_(alpha * m), n_hi_(n_hi), L_(assemble_L(ModeSpace::reduced(m, n_hi), alpha)) {}

  [[nodiscard]] int n_hi() const { return n_hi_; }

  [[nodiscard]] double norm_at(double mu) const {
    return 1.0 / numkernels::min_singular_value(resolvent_operator(L_, mu * am_));
  }

  [[nodiscard]] Samples evaluate(const std::vector<double>& mus) const {
    std::vector<double> vals(mus.size());
    parallel_for(mus.size(), [&](std::size_t i) { vals[i] = norm_at(mus[i]); });
    Samples out;
    for (std::size_t i = 0; i < mus.size(); ++i) out.emplace(mus[i], vals[i]);
    return out;
  }

 private:
  double am_;
  int n_hi_;
  BandedOperator L_;
};

std::vector<double> keys_of(const Samples& s) {
  std::vector<double> k;
  k.reserve(s.size());
  for (const auto& [mu, v] : s) k.push_back(mu);
  return k;
}

double peak_of(const Samples& s, double* where) {
  double best = -1.0;
  for (const auto& [mu, v] : s)
    if (v > best) {
      best = v;
      *where = mu;
    }
  return best;
}

// Golden-section search for a maximum in [a, b]; returns every evaluated point.
std::vector<std::pair<double, double>> golden_max(const SweepLevel& level, double a, double fa, double b, double fb,
                                                  double rtol) {
  std::vector<std::pair<double, double>> pts;
  double c = b - kInvGolden * (b - a);
  double d = a + kInvGolden * (b - a);
  double fc = level.norm_at(c);
  double fd = level.norm_at(d);
  pts.emplace_back(c, fc);
  pts.emplace_back(d, fd);
  for (int step = 0; step < kMaxGoldenSteps; ++step) {
    const double hi = std::max({fa, fb, fc, fd});
    const double lo = std::min({fa, fb, fc, fd});
    if (hi - lo <= rtol * hi) break;
    if (fc >= fd) {
      b = d;
      fb = fd;
      d = c;
      fd = fc;
      c = b - kInvGolden * (b - a);
      fc = level.norm_at(c);
      pts.emplace_back(c, fc);
    } else {
      a = c;
      fa = fc;
      c = d;
      fc = fd;
      d = a + kInvGolden * (b - a);
      fd = level.norm_at(d);
      pts.emplace_back(d, fd);
    }
  }
  return pts;
}

// Adds golden-section points around every interior local maximum. μ = 0 counts
// as interior because the curve is even.
void refine(const SweepLevel& level, Samples& s, double rtol) {
  const auto mus = keys_of(s);
  std::vector<double> vals;
  vals.reserve(mus.size());
  for (double mu : mus) vals.push_back(s.at(mu));

  struct Bracket {
    double a, fa, b, fb;
  };
  std::vector<Bracket> brackets;
  for (std::size_t i = 0; i + 1 < mus.size(); ++i) {
    const double left = i == 0 ? vals[1] : vals[i - 1];
    if (vals[i] >= left && vals[i] >= vals[i + 1]) {
      const std::size_t lo = i == 0 ? 0 : i - 1;
      brackets.push_back({mus[lo], vals[lo], mus[i + 1], vals[i + 1]});
    }
  }
  std::vector<std::vector<std::pair<double, double>>> found(brackets.size());
  parallel_for(brackets.size(), [&](std::size_t k) {
    const auto& br = brackets[k];
    found[k] = golden_max(level, br.a, br.fa, br.b, br.fb, rtol);
  });
  for (const auto& pts : found)
    for (const auto& [mu, v] : pts) s.emplace(mu, v);
}

std::vector<double> half_grid(const SweepGrid& g) {
  std::vector<double> mus;
  const int half = (g.base_points - 1) / 2;
  for (int i = 0; i <= half; ++i) mus.push_back(g.base_half_width * static_cast<double>(i) / half);
  for (int k = 1; k <= g.tail_points; ++k)
    mus.push_back(g.base_half_width * std::pow(g.tail_max / g.base_half_width, static_cast<double>(k) / g.tail_points));
  return mus;
}

}  // namespace

void EnvelopeParams::validate() const {
  if (!(kappa > 0.0 && kappa < 0.5)) throw ValidationError("kappa must lie in (0, 1/2)");
}

void SweepGrid::validate() const {
  if (base_points < 5 || base_points % 2 == 0) throw ValidationError("base_points must be odd and at least 5");
  if (!(base_half_width > 0.0)) throw ValidationError("base_half_width must be positive");
  if (tail_points < 0) throw ValidationError("tail_points must be nonnegative");
  if (tail_points > 0 && !(tail_max > base_half_width)) throw ValidationError("tail_max must exceed base_half_width");
  if (!(peak_rtol >= 1e-14 && peak_rtol <= 1e-2)) throw ValidationError("peak_rtol outside [1e-14, 1e-2]");
  if (!(psi_rtol >= 1e-14 && psi_rtol <= 1e-2)) throw ValidationError("psi_rtol outside [1e-14, 1e-2]");
  if (max_doublings < 1) throw ValidationError("max_doublings must be at least 1");
  if (truncation.floor < 1 || !(truncation.coef >= 0.0) || !(truncation.exponent >= 0.0))
    throw ValidationError("invalid truncation policy");
}

double resolvent_norm_at(double alpha, int m, double lambda, int n_hi) {
  if (m == 0) throw ValidationError("m must be nonzero");
  if (!std::isfinite(alpha) || !std::isfinite(lambda)) throw ValidationError("alpha and lambda must be finite");
  const BandedOperator L = assemble_L(ModeSpace::reduced(m, n_hi), alpha);
  return 1.0 / numkernels::min_singular_value(resolvent_operator(L, lambda));
}

SweepResult sweep(double alpha, int m, const SweepGrid& grid) {
  require_nonzero(alpha, m);
  grid.validate();
  const int abs_m = std::abs(m);
  const double abs_alpha = std::abs(alpha);

  int n_hi = grid.truncation.n_hi(alpha, m);
  auto level = std::make_unique<SweepLevel>(abs_alpha, abs_m, n_hi);
  Samples samples = level->evaluate(half_grid(grid));
  refine(*level, samples, grid.peak_rtol);
  double mu_peak = 0.0;
  double psi = 1.0 / peak_of(samples, &mu_peak);
  double psi_prev = std::numeric_limits<double>::quiet_NaN();
  bool converged = false;

  for (int k = 0; k < grid.max_doublings && !converged; ++k) {
    n_hi *= 2;
    level = std::make_unique<SweepLevel>(abs_alpha, abs_m, n_hi);
    Samples next = level->evaluate(keys_of(samples));
    psi_prev = psi;
    psi = 1.0 / peak_of(next, &mu_peak);
    samples = std::move(next);
    if (rel_change(psi, psi_prev) < grid.psi_rtol) {
      converged = true;
    } else {
      refine(*level, samples, grid.peak_rtol);
      psi = 1.0 / peak_of(samples, &mu_peak);
    }
  }

  SweepResult out;
  out.alpha = alpha;
  out.m = m;
  out.mu_peak = mu_peak;
  out.norm_peak = 1.0 / psi;
  out.psi = psi;
  out.psi_prev = psi_prev;
  out.n_hi_used = n_hi;
  out.converged = converged;
  out.mu_grid.reserve(2 * samples.size());
  out.norms.reserve(2 * samples.size());
  for (auto it = samples.rbegin(); it != samples.rend(); ++it) {
    if (it->first == 0.0) continue;
    out.mu_grid.push_back(-it->first);
    out.norms.push_back(it->second);
  }
  for (const auto& [mu, v] : samples) {
    out.mu_grid.push_back(mu);
    out.norms.push_back(v);
  }
  return out;
}

double envelope_G(double alpha, int m, double mu) {
  require_nonzero(alpha, m);
  const double a = std::abs(alpha);
  const double am = a * std::abs(m);
  const double band = 1.0 / std::sqrt(a);
  const double x = std::abs(mu);
  if (x > 1.0 + band) return 1.0 / (am * (x - 1.0));
  if (x > 1.0 - band) return band / std::abs(m);
  return std::pow(am, -2.0 / 3.0) * std::pow(1.0 - x, -1.0 / 3.0);
}

double h1(double xi, double mu, int m, const EnvelopeParams& params) {
  if (!(xi > 0.0)) throw ValidationError("h1 needs xi > 0");
  if (m == 0) throw ValidationError("m must be nonzero");
  const double x = std::abs(mu);
  const double edge = params.kappa / xi;
  if (x > 1.0 + edge) return 0.0;
  if (x > 1.0 - edge) return 1.0 / std::sqrt(std::abs(m) * xi);
  return 1.0 / (xi * std::sqrt(1.0 - x));
}

double h2(double xi, double mu, int m, const EnvelopeParams& params) {
  if (!(xi > 0.0)) throw ValidationError("h2 needs xi > 0");
  if (m == 0) throw ValidationError("m must be nonzero");
  const double x = std::abs(mu);
  const double edge = params.kappa / (xi * xi);
  if (x > 1.0 + edge) return 0.0;
  if (x > 1.0 - edge) return 1.0 / (std::sqrt(std::abs(m)) * xi * xi);
  return std::sqrt(1.0 - x) / xi;
}

std::pair<double, double> regime_xi(double alpha, int m, double mu, const EnvelopeParams& params) {
  require_nonzero(alpha, m);
  params.validate();
  const double a = std::abs(alpha);
  const double am = a * std::abs(m);
  const double band = 1.0 / std::sqrt(a);
  const double x = std::abs(mu);
  if (x > 1.0 + band) {
    const double xi1 = 2.0 * params.kappa / (x - 1.0);
    return {xi1, std::sqrt(xi1)};
  }
  if (x > 1.0 - band) {
    const double xi1 = params.kappa * std::sqrt(a) / 2.0;
    return {xi1, std::sqrt(xi1)};
  }
  const double c = std::cbrt(am);
  return {c * std::pow(1.0 - x, -1.0 / 3.0), c * std::pow(1.0 - x, 1.0 / 6.0)};
}

double envelope_objective(double alpha, int m, double mu, double xi1, double xi2, const EnvelopeParams& params) {
  const double am = std::abs(alpha * m);
  const double g1 = h1(xi1, mu, m, params);
  return xi1 / am + xi1 * xi1 * xi2 * xi2 / (am * am) + xi1 * xi1 * h2(xi2, mu, m, params) / am + g1 * g1;
}

EnvelopeF envelope_F(double alpha, double mu, int m, const EnvelopeParams& params) {
  require_nonzero(alpha, m);
  params.validate();
  const double am = std::abs(alpha * m);
  EnvelopeF out;
  std::tie(out.xi1_closed, out.xi2_closed) = regime_xi(alpha, m, mu, params);
  out.closed_form = envelope_objective(alpha, m, mu, out.xi1_closed, out.xi2_closed, params);

  // The objective separates: ξ₁/a + h₁(ξ₁)² + ξ₁² · [ξ₂²/a² + h₂(ξ₂)/a].
  const double lo = -8.0;
  const double hi = 4.0 + std::log10(std::max(1.0, am));
  constexpr int kPoints = 4001;
  std::vector<double> xs;
  xs.reserve(kPoints + 16);
  for (int i = 0; i < kPoints; ++i) xs.push_back(std::pow(10.0, lo + (hi - lo) * i / (kPoints - 1)));
  const double gap = std::abs(std::abs(mu) - 1.0);
  std::vector<double> xi1s = xs;
  std::vector<double> xi2s = xs;
  if (gap > 0.0) {
    for (double f : {1.0 - 1e-12, 1.0, 1.0 + 1e-12}) {
      xi1s.push_back(f * params.kappa / gap);
      xi2s.push_back(f * std::sqrt(params.kappa / gap));
    }
  }
  xi1s.push_back(out.xi1_closed);
  xi2s.push_back(out.xi2_closed);

  double inner = std::numeric_limits<double>::infinity();
  for (double xi2 : xi2s) {
    const double v = xi2 * xi2 / (am * am) + h2(xi2, mu, m, params) / am;
    if (v < inner) {
      inner = v;
      out.xi2_numeric = xi2;
    }
  }
  out.numeric = std::numeric_limits<double>::infinity();
  for (double xi1 : xi1s) {
    const double g1 = h1(xi1, mu, m, params);
    const double v = xi1 / am + g1 * g1 + xi1 * xi1 * inner;
    if (v < out.numeric) {
      out.numeric = v;
      out.xi1_numeric = xi1;
    }
  }
  return out;
}

double fit_envelope_constant(const SweepResult& sweep) {
  if (!sweep.converged) throw ValidationError("envelope constant needs a converged sweep");
  if (sweep.mu_grid.size() != sweep.norms.size() || sweep.norms.empty())
    throw ValidationError("sweep grid and norms are inconsistent");
  double best = 0.0;
  for (std::size_t i = 0; i < sweep.norms.size(); ++i)
    best = std::max(best, sweep.norms[i] / envelope_G(sweep.alpha, sweep.m, sweep.mu_grid[i]));
  return best;
}

// --- coercivity ------------------------------------------------------------

void CoercivityConfig::validate() const {
  if (!(alpha_ref > 0.0) || !std::isfinite(alpha_ref)) throw ValidationError("alpha_ref must be positive");
  if (!(rtol >= 1e-14 && rtol <= 1e-2)) throw ValidationError("coercivity rtol outside [1e-14, 1e-2]");
  if (max_doublings < 1) throw ValidationError("max_doublings must be at least 1");
}

namespace {

struct CoercivityValues {
  double s_min;
  double ratio_high;
  double c_combined;
  double c_b3;
};

CoercivityValues coercivity_at(int m, double mu, int n_hi, double xi1, double xi2, const EnvelopeParams& params) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const ModeSpace full = ModeSpace::full(m, n_hi);
  const ModeSpace space = full.as_reduced();
  // On the Reduced space the rows n ≥ 3 of Λ are exactly Q Λ restricted to Y_m.
  const BandedOperator T = (-1.0 * assemble_Lambda(space)).shifted(mu);
  const BandedOperator TT = T.adjoint() * T;
  BandedOperator DA = -1.0 * assemble_A(space);

  CoercivityValues v{};
  const double x = std::abs(mu);
  // ‖Λ_m‖ ≤ 1, so |μ| - 1 bounds σ_min from below and separates its cluster.
  v.s_min = numkernels::min_singular_value(T, numkernels::Tolerance{}, std::max(0.0, x - 1.0));
  v.ratio_high = x > 1.0 ? v.s_min / (x - 1.0) : nan;
  if (x <= 1.0) {
    const double g1 = h1(xi1, mu, m, params);
    BandedOperator H = xi1 * xi1 * TT;
    H += g1 * g1 * DA;
    v.c_combined = numkernels::hermitian_min_eig(H);
  } else {
    v.c_combined = nan;
  }

  // ‖sinθ u‖² for u ∈ Y_m still sees the n = 2 row of cosθ·u, so take the Full form and restrict.
  BandedOperator S = assemble_sin2_form(full).restricted(space);
  const double s_floor = numkernels::hermitian_min_eig(S);
  if (s_floor < 0.0) S.diagonal(0).array() -= s_floor;
  const double g2 = h2(xi2, mu, m, params);
  BandedOperator B = xi2 * xi2 * TT;
  B += g2 * g2 * DA;
  v.c_b3 = 1.0 / numkernels::pencil_max_eig(S, B);
  return v;
}

double gated_change(const CoercivityValues& now, const CoercivityValues& before, double mu) {
  double worst = 0.0;
  if (std::abs(mu) > 1.0) {
    worst = std::max(worst, rel_change(now.s_min, before.s_min));
    worst = std::max(worst, rel_change(now.ratio_high, before.ratio_high));
  } else {
    worst = std::max(worst, rel_change(now.c_combined, before.c_combined));
  }
  return std::max(worst, rel_change(now.c_b3, before.c_b3));
}

}  // namespace

std::vector<CoercivityRecord> coercivity_scan(int m, const std::vector<double>& mu_list, int n_hi,
                                              const EnvelopeParams& params, const CoercivityConfig& config) {
  if (m == 0) throw ValidationError("m must be nonzero");
  params.validate();
  config.validate();
  for (double mu : mu_list)
    if (!std::isfinite(mu)) throw ValidationError("mu values must be finite");
  (void)ModeSpace::full(m, n_hi);  // validates n_hi

  std::vector<CoercivityRecord> out(mu_list.size());
  parallel_for(mu_list.size(), [&](std::size_t i) {
    const double mu = mu_list[i];
    CoercivityRecord rec;
    rec.m = m;
    rec.mu = mu;
    std::tie(rec.xi1, rec.xi2) = regime_xi(config.alpha_ref, m, mu, params);
    int n = n_hi;
    CoercivityValues prev = coercivity_at(m, mu, n, rec.xi1, rec.xi2, params);
    CoercivityValues cur = prev;
    for (int k = 0; k < config.max_doublings; ++k) {
      n *= 2;
      cur = coercivity_at(m, mu, n, rec.xi1, rec.xi2, params);
      rec.max_rel_change = gated_change(cur, prev, mu);
      prev = cur;
      if (rec.max_rel_change < config.rtol) {
        rec.converged = true;
        break;
      }
    }
    rec.s_min = cur.s_min;
    rec.ratio_high = cur.ratio_high;
    rec.c_combined = cur.c_combined;
    rec.c_b3 = cur.c_b3;
    rec.n_hi_used = n;
    out[i] = rec;
  });
  return out;
}

}  // namespace jetspec::pseudospectrum
