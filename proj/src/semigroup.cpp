#include "jetspec/semigroup.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <boost/math/distributions/students_t.hpp>

#include "jetspec/errors.hpp"
#include "jetspec/numkernels.hpp"

namespace jetspec::semigroup {

namespace {

using Eigen::Index;
using Eigen::MatrixXcd;
using numkernels::parallel_for;

constexpr double kInvGolden = 0.6180339887498949;
constexpr int kMaxGoldenSteps = 80;
constexpr int kMaxChain = 80;

struct PartNorms {
  double qq = 0.0;
  double pq = 0.0;
  double pp = 0.0;
};

PartNorms part_norms(const MatrixXcd& e, bool kernel) {
  PartNorms out;
  if (!kernel) {
    out.qq = numkernels::operator_norm(e);
    return out;
  }
  const Index n = e.rows();
  out.qq = numkernels::operator_norm(MatrixXcd(e.bottomRightCorner(n - 1, n - 1)));
  out.pq = e.row(0).tail(n - 1).norm();
  out.pp = std::abs(e(0, 0));
  return out;
}

struct GridLayout {
  double t_min = 0.0;
  int q = 1;  // points per doubling of t
  int last = 0;  // t_k for k = 0..last

  [[nodiscard]] double t(int k) const { return t_min * std::exp2(static_cast<double>(k) / q); }
};

GridLayout choose_grid(const MatrixXcd& L, bool kernel, const TimeGrid& tg, double expm_rtol) {
  GridLayout g;
  g.t_min = tg.t_min > 0.0 ? tg.t_min : 0.01 / std::max(10.0, 0.5 * tg.psi_hint);
  int doublings = 0;
  if (tg.t_max > 0.0) {
    doublings = std::max(1, static_cast<int>(std::ceil(std::log2(tg.t_max / g.t_min) - 1e-12)));
  } else {
    MatrixXcd e = numkernels::propagator(L, g.t_min, numkernels::Tolerance{expm_rtol});
    while (part_norms(e, kernel).qq > tg.qq_target) {
      if (++doublings > kMaxChain)
        throw NumericalError("propagator norm did not fall below " + std::to_string(tg.qq_target) +
                             " by t=" + std::to_string(g.t(kMaxChain)));
      e = e * e;
    }
    doublings = std::max(1, doublings);
  }
  g.q = std::max(1, static_cast<int>(std::lround(static_cast<double>(tg.points - 1) / doublings)));
  g.last = g.q * doublings;
  return g;
}

struct LevelValues {
  std::vector<double> qq, pq, pp_res;
};

// Norms on the grid: q direct exponentials, then E(t_{k+q}) = E(t_k)².
LevelValues evaluate_level(const MatrixXcd& L, bool kernel, const GridLayout& g, double expm_rtol) {
  const auto count = static_cast<std::size_t>(g.last + 1);
  LevelValues v{std::vector<double>(count), std::vector<double>(count), std::vector<double>(count)};
  parallel_for(static_cast<std::size_t>(g.q), [&](std::size_t r) {
    MatrixXcd e = numkernels::propagator(L, g.t(static_cast<int>(r)), numkernels::Tolerance{expm_rtol});
    for (auto k = static_cast<int>(r); k <= g.last; k += g.q) {
      if (k != static_cast<int>(r)) e = e * e;
      const PartNorms p = part_norms(e, kernel);
      const auto i = static_cast<std::size_t>(k);
      v.qq[i] = p.qq;
      v.pq[i] = p.pq;
      v.pp_res[i] = kernel ? std::abs(p.pp - std::exp(-4.0 * g.t(k))) : 0.0;
    }
  });
  return v;
}

double gated_change(const std::vector<double>& now, const std::vector<double>& before, double floor) {
  double worst = 0.0;
  for (std::size_t i = 0; i < now.size(); ++i)
    worst = std::max(worst, std::abs(now[i] - before[i]) / std::max(std::abs(now[i]), floor));
  return worst;
}

void require_m(int m) {
  if (m == 0) throw ValidationError("m must be nonzero");
}

double pq_amplified(const MatrixXcd& L, double t, double expm_rtol) {
  const MatrixXcd e = numkernels::propagator(L, t, numkernels::Tolerance{expm_rtol});
  return e.row(0).tail(e.cols() - 1).norm() * std::exp(2.0 * t);
}

}  // namespace

void TimeGrid::validate() const {
  if (!(t_min >= 0.0) || !(t_max >= 0.0) || !std::isfinite(t_min) || !std::isfinite(t_max))
    throw ValidationError("time grid bounds must be finite and nonnegative");
  if (t_min > 0.0 && t_max > 0.0 && !(t_max > t_min)) throw ValidationError("t_max must exceed t_min");
  if (points < 3) throw ValidationError("time grid needs at least 3 points");
  if (!(qq_target > 0.0 && qq_target < 1.0)) throw ValidationError("qq_target must lie in (0, 1)");
  if (!(psi_hint >= 0.0) || !std::isfinite(psi_hint)) throw ValidationError("psi_hint must be nonnegative");
}

void CurveConfig::validate() const {
  time.validate();
  if (truncation.floor < 1 || !(truncation.coef >= 0.0) || !(truncation.exponent >= 0.0))
    throw ValidationError("invalid truncation policy");
  if (!(rtol >= 1e-14 && rtol <= 1e-2)) throw ValidationError("curve rtol outside [1e-14, 1e-2]");
  if (!(abs_floor > 0.0)) throw ValidationError("abs_floor must be positive");
  if (max_doublings < 1) throw ValidationError("max_doublings must be at least 1");
  numkernels::Tolerance{expm_rtol};
}

PropagatorCurve propagator_curve(double alpha, int m, const CurveConfig& config) {
  require_m(m);
  if (!std::isfinite(alpha)) throw ValidationError("alpha must be finite");
  config.validate();

  int n_hi = config.truncation.n_hi(alpha, m);
  ModeSpace space = ModeSpace::full(m, n_hi);
  const bool kernel = space.has_kernel_direction();
  MatrixXcd L = assemble_L(space, alpha).to_dense();
  const GridLayout grid = choose_grid(L, kernel, config.time, config.expm_rtol);
  LevelValues vals = evaluate_level(L, kernel, grid, config.expm_rtol);

  PropagatorCurve out;
  out.alpha = alpha;
  out.m = m;
  for (int k = 0; k <= grid.last; ++k) out.t_grid.push_back(grid.t(k));
  for (int d = 0; d < config.max_doublings; ++d) {
    n_hi *= 2;
    space = ModeSpace::full(m, n_hi);
    L = assemble_L(space, alpha).to_dense();
    LevelValues next = evaluate_level(L, kernel, grid, config.expm_rtol);
    out.max_rel_change = std::max(gated_change(next.qq, vals.qq, config.abs_floor),
                                  gated_change(next.pq, vals.pq, config.abs_floor));
    vals = std::move(next);
    if (out.max_rel_change <= config.rtol) {
      out.converged = true;
      break;
    }
  }
  out.n_hi_used = n_hi;
  out.qq_norms = std::move(vals.qq);
  if (kernel) {
    out.pq_norms = std::move(vals.pq);
    out.pp_residuals = std::move(vals.pp_res);
    out.pp_check = *std::max_element(out.pp_residuals.begin(), out.pp_residuals.end());
  }
  return out;
}

DecayEstimate decay_rate(const PropagatorCurve& curve, double c_cap) {
  if (!(c_cap > 0.0) || !std::isfinite(c_cap)) throw ValidationError("c_cap must be positive");
  if (curve.t_grid.empty() || curve.t_grid.size() != curve.qq_norms.size())
    throw ValidationError("propagator curve is empty or inconsistent");
  if (!curve.converged) throw ValidationError("decay rate needs a converged propagator curve");
  DecayEstimate est;
  est.c_cap = c_cap;
  est.t_min = curve.t_grid.front();
  est.t_max = curve.t_grid.back();
  double sigma = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < curve.t_grid.size(); ++i) {
    if (curve.qq_norms[i] >= c_cap) {
      est.sigma = 0.0;
      est.certified = false;
      est.achieved_prefactor = *std::max_element(curve.qq_norms.begin(), curve.qq_norms.end());
      return est;
    }
    sigma = std::min(sigma, (std::log(c_cap) - std::log(curve.qq_norms[i])) / curve.t_grid[i]);
  }
  est.sigma = sigma;
  est.certified = true;
  for (std::size_t i = 0; i < curve.t_grid.size(); ++i)
    est.achieved_prefactor = std::max(est.achieved_prefactor, curve.qq_norms[i] * std::exp(sigma * curve.t_grid[i]));
  return est;
}

Slope loglog_slope(const std::vector<double>& x, const std::vector<double>& y, double ci_level) {
  if (x.size() != y.size() || x.size() < 2) throw ValidationError("slope fit needs at least two (x, y) pairs");
  if (!(ci_level > 0.0 && ci_level < 1.0)) throw ValidationError("ci_level must lie in (0, 1)");
  const auto n = static_cast<double>(x.size());
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw ValidationError("slope fit needs positive values");
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  if (!(sxx > 0.0)) throw ValidationError("slope fit needs at least two distinct x values");
  Slope s;
  s.points = static_cast<int>(x.size());
  s.value = sxy / sxx;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (x.size() < 3) {
    s.std_error = s.ci_low = s.ci_high = nan;
    return s;
  }
  const double intercept = my - s.value * mx;
  double rss = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    const double r = ly[i] - intercept - s.value * lx[i];
    rss += r * r;
  }
  s.std_error = std::sqrt(rss / (n - 2.0) / sxx);
  const boost::math::students_t dist(n - 2.0);
  const double tq = boost::math::quantile(dist, 0.5 + 0.5 * ci_level);
  s.ci_low = s.value - tq * s.std_error;
  s.ci_high = s.value + tq * s.std_error;
  return s;
}

void ScalingConfig::validate() const {
  if (m_fixed == 0) throw ValidationError("m_fixed must be nonzero");
  if (alpha_fixed == 0.0 || !std::isfinite(alpha_fixed)) throw ValidationError("alpha_fixed must be nonzero");
  if (!(sigma_alpha_max >= 0.0)) throw ValidationError("sigma_alpha_max must be nonnegative");
  if (!(c_cap > 0.0)) throw ValidationError("c_cap must be positive");
  if (!(ci_level > 0.0 && ci_level < 1.0)) throw ValidationError("ci_level must lie in (0, 1)");
  sweep.validate();
  curve.validate();
}

ScalingTable scaling_study(const std::vector<double>& alpha_list, const std::vector<int>& m_list,
                           const ScalingConfig& config) {
  config.validate();
  if (alpha_list.size() < 4 || m_list.size() < 4)
    throw ValidationError("scaling study needs at least 4 alpha values and 4 m values");
  double amin = std::numeric_limits<double>::infinity(), amax = 0.0;
  for (double a : alpha_list) {
    if (a == 0.0 || !std::isfinite(a)) throw ValidationError("alpha values must be finite and nonzero");
    amin = std::min(amin, std::abs(a));
    amax = std::max(amax, std::abs(a));
  }
  if (amax < 100.0 * amin) throw ValidationError("alpha values must span at least two decades");
  for (int m : m_list) require_m(m);

  ScalingTable table;
  auto add_point = [&](double alpha, int m) {
    for (const auto& p : table.points)
      if (p.alpha == alpha && p.m == m) return;
    ScalingPoint p;
    p.alpha = alpha;
    p.m = m;
    table.points.push_back(p);
  };
  for (double a : alpha_list) add_point(a, config.m_fixed);
  for (int m : m_list) add_point(config.alpha_fixed, m);

  for (auto& p : table.points) {
    const auto sw = pseudospectrum::sweep(p.alpha, p.m, config.sweep);
    if (!sw.converged)
      throw NumericalError("sweep at alpha=" + std::to_string(p.alpha) + ", m=" + std::to_string(p.m) +
                           " did not converge: psi " + std::to_string(sw.psi_prev) + " -> " + std::to_string(sw.psi));
    p.psi = sw.psi;
    p.mu_peak = sw.mu_peak;
    p.c_star = pseudospectrum::fit_envelope_constant(sw);
    p.n_hi_sweep = sw.n_hi_used;
    p.sweep_converged = sw.converged;
    p.psi_scaled = p.psi / (std::sqrt(std::abs(p.alpha)) * std::pow(std::abs(p.m), 2.0 / 3.0));
    if (std::abs(p.alpha) <= config.sigma_alpha_max) {
      CurveConfig cc = config.curve;
      cc.time.psi_hint = p.psi;
      const auto curve = propagator_curve(p.alpha, p.m, cc);
      if (!curve.converged)
        throw NumericalError("propagator curve at alpha=" + std::to_string(p.alpha) + ", m=" + std::to_string(p.m) +
                             " did not converge (change " + std::to_string(curve.max_rel_change) + ")");
      const auto est = decay_rate(curve, config.c_cap);
      p.has_sigma = true;
      p.sigma = est.sigma;
      p.achieved_prefactor = est.achieved_prefactor;
      p.n_hi_curve = curve.n_hi_used;
      p.curve_converged = curve.converged;
      p.link = est.sigma / p.psi;
    }
  }

  std::vector<double> xa, ya, sa_x, sa_y, xm, ym, sm_x, sm_y;
  for (const auto& p : table.points) {
    if (p.m == config.m_fixed) {
      xa.push_back(std::abs(p.alpha));
      ya.push_back(p.psi);
      if (p.has_sigma) {
        sa_x.push_back(std::abs(p.alpha));
        sa_y.push_back(p.sigma);
      }
    }
    if (p.alpha == config.alpha_fixed) {
      xm.push_back(std::abs(p.m));
      ym.push_back(p.psi);
      if (p.has_sigma) {
        sm_x.push_back(std::abs(p.m));
        sm_y.push_back(p.sigma);
      }
    }
  }
  table.psi_vs_alpha = loglog_slope(xa, ya, config.ci_level);
  table.psi_vs_m = loglog_slope(xm, ym, config.ci_level);
  if (sa_x.size() >= 2) table.sigma_vs_alpha = loglog_slope(sa_x, sa_y, config.ci_level);
  if (sm_x.size() >= 2) table.sigma_vs_m = loglog_slope(sm_x, sm_y, config.ci_level);

  table.psi_scaled_min = table.link_min = std::numeric_limits<double>::infinity();
  table.psi_scaled_max = table.link_max = 0.0;
  for (const auto& p : table.points) {
    table.psi_scaled_min = std::min(table.psi_scaled_min, p.psi_scaled);
    table.psi_scaled_max = std::max(table.psi_scaled_max, p.psi_scaled);
    if (p.has_sigma) {
      table.link_min = std::min(table.link_min, p.link);
      table.link_max = std::max(table.link_max, p.link);
    }
  }
  if (!std::isfinite(table.link_min)) table.link_min = table.link_max = std::numeric_limits<double>::quiet_NaN();
  return table;
}

void TransientConfig::validate() const {
  curve.validate();
  if (!(peak_rtol >= 1e-14 && peak_rtol <= 1e-2)) throw ValidationError("peak_rtol outside [1e-14, 1e-2]");
  if (!(ci_level > 0.0 && ci_level < 1.0)) throw ValidationError("ci_level must lie in (0, 1)");
}

TransientTable transient_study(const std::vector<double>& alpha_list, int m, const TransientConfig& config) {
  config.validate();
  if (std::abs(m) != 1 && std::abs(m) != 2) throw ValidationError("transient study needs |m| in {1, 2}");
  if (alpha_list.empty()) throw ValidationError("transient study needs at least one alpha");
  for (double a : alpha_list)
    if (!(std::abs(a) > 4.0) || !std::isfinite(a)) throw ValidationError("transient study needs |alpha| > 4");

  TransientTable table;
  for (double alpha : alpha_list) {
    TransientRow row;
    row.alpha = alpha;
    row.m = m;
    row.curve = propagator_curve(alpha, m, config.curve);
    const auto& c = row.curve;
    row.pp_check = c.pp_check;
    row.n_hi_used = c.n_hi_used;
    row.converged = c.converged;

    std::size_t k = 0;
    for (std::size_t i = 0; i < c.t_grid.size(); ++i)
      if (c.pq_norms[i] * std::exp(2.0 * c.t_grid[i]) > c.pq_norms[k] * std::exp(2.0 * c.t_grid[k])) k = i;
    row.t_peak = c.t_grid[k];
    row.amplitude = c.pq_norms[k] * std::exp(2.0 * c.t_grid[k]);

    // Golden section in log t on the bracket around the grid maximum.
    const MatrixXcd L = assemble_L(ModeSpace::full(m, c.n_hi_used), alpha).to_dense();
    auto f = [&](double logt) { return pq_amplified(L, std::exp(logt), config.curve.expm_rtol); };
    const std::size_t right = std::min(k + 1, c.t_grid.size() - 1);
    double b = std::log(c.t_grid[right]);
    double fb = c.pq_norms[right] * std::exp(2.0 * c.t_grid[right]);
    double a = 0.0, fa = 0.0;
    if (k > 0) {
      a = std::log(c.t_grid[k - 1]);
      fa = c.pq_norms[k - 1] * std::exp(2.0 * c.t_grid[k - 1]);
    } else {
      // Maximum at the first grid point: halve t until the amplified norm drops.
      double mid = std::log(c.t_grid[0]), fmid = row.amplitude;
      a = mid - std::log(2.0);
      fa = f(a);
      for (int step = 0; fa >= fmid; ++step) {
        if (step == kMaxChain) throw NumericalError("transient peak not bracketed below t=" + std::to_string(std::exp(a)));
        b = mid;
        fb = fmid;
        mid = a;
        fmid = fa;
        a -= std::log(2.0);
        fa = f(a);
      }
      row.amplitude = fmid;
      row.t_peak = std::exp(mid);
    }
    double x1 = b - kInvGolden * (b - a), x2 = a + kInvGolden * (b - a);
    double f1 = f(x1), f2 = f(x2);
    for (int step = 0; step < kMaxGoldenSteps; ++step) {
      const double hi = std::max({fa, fb, f1, f2});
      if (hi - std::min({fa, fb, f1, f2}) <= config.peak_rtol * hi) break;
      if (f1 >= f2) {
        b = x2;
        fb = f2;
        x2 = x1;
        f2 = f1;
        x1 = b - kInvGolden * (b - a);
        f1 = f(x1);
      } else {
        a = x1;
        fa = f1;
        x1 = x2;
        f1 = f2;
        x2 = a + kInvGolden * (b - a);
        f2 = f(x2);
      }
    }
    for (auto [x, v] : {std::pair{x1, f1}, std::pair{x2, f2}}) {
      if (v > row.amplitude) {
        row.amplitude = v;
        row.t_peak = std::exp(x);
      }
    }
    table.rows.push_back(std::move(row));
  }

  if (table.rows.size() >= 2) {
    std::vector<double> xs, ys;
    for (const auto& r : table.rows) {
      xs.push_back(std::abs(r.alpha));
      ys.push_back(r.amplitude);
    }
    table.amplitude_vs_alpha = loglog_slope(xs, ys, config.ci_level);
  }
  return table;
}

IdentityCheck resolvent_identity_check(double alpha, int m, std::complex<double> zeta, int trials,
                                       std::uint64_t seed, int n_hi) {
  require_m(m);
  if (!std::isfinite(alpha)) throw ValidationError("alpha must be finite");
  if (trials < 1) throw ValidationError("trials must be positive");
  if (zeta == cdouble(-4.0, 0.0)) throw ValidationError("zeta = -4 is an eigenvalue of P A");
  if (!(zeta.real() >= 0.0)) throw ValidationError("zeta must satisfy Re zeta >= 0");

  if (n_hi == 0) n_hi = TruncationPolicy{}.n_hi(alpha, m);
  const ModeSpace full = ModeSpace::full(m, n_hi);
  const ModeSpace red = full.as_reduced();
  const bool kernel = full.has_kernel_direction();
  const BandedOperator shifted_full = (-1.0 * assemble_L(full, alpha)).shifted(zeta);
  const BandedOperator shifted_red = (-1.0 * assemble_L(red, alpha)).shifted(zeta);
  const BandedOperator lambda_full = assemble_Lambda(full);
  const cdouble coupling = cdouble(0.0, -alpha * m) / (zeta + 4.0);

  auto rel = [](double diff, double a, double b) {
    const double scale = std::max(a, b);
    return scale > 0.0 ? diff / scale : diff;
  };

  IdentityCheck out;
  out.n_hi = n_hi;
  numkernels::Rng rng(seed);
  for (int trial = 0; trial < trials; ++trial) {
    const Eigen::VectorXcd f = rng.complex_vector(full.dim());
    const Eigen::VectorXcd u = numkernels::solve(shifted_full, f);
    const Eigen::VectorXcd v = numkernels::solve(shifted_red, f.tail(red.dim()));
    const Eigen::VectorXcd qu = u.tail(red.dim());
    out.q_residual = std::max(out.q_residual, rel((qu - v).norm(), qu.norm(), v.norm()));
    if (kernel) {
      Eigen::VectorXcd padded = Eigen::VectorXcd::Zero(full.dim());
      padded.tail(red.dim()) = v;
      const cdouble p_lambda = lambda_full.apply(padded)(0);
      const cdouble rhs = f(0) / (zeta + 4.0) + coupling * p_lambda;
      out.p_residual = std::max(out.p_residual, rel(std::abs(u(0) - rhs), std::abs(u(0)), std::abs(rhs)));
    }
  }
  return out;
}

}  // namespace jetspec::semigroup
