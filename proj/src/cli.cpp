#include "jetspec/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>

#include <CLI11.hpp>

#include "jetspec/errors.hpp"
#include "jetspec/operators.hpp"
#include "jetspec/pseudospectrum.hpp"
#include "jetspec/semigroup.hpp"

#ifndef JETSPEC_VERSION
#define JETSPEC_VERSION "0.0.0"
#endif

namespace jetspec::cli {

namespace {

namespace fs = std::filesystem;
namespace ps = pseudospectrum;
namespace sg = semigroup;

constexpr int kCsvSchemaVersion = 1;

// A numerical gate failed after outputs were written; `details` goes into the error record.
class ContractFailure : public NumericalError {
 public:
  ContractFailure(const std::string& what, Json details) : NumericalError(what), details_(std::move(details)) {}
  [[nodiscard]] const Json& details() const { return details_; }

 private:
  Json details_;
};

// --- config <-> module structs ---------------------------------------------

Json truncation_json(const TruncationPolicy& p) {
  return {{"floor", p.floor}, {"coef", p.coef}, {"exponent", p.exponent}};
}

TruncationPolicy truncation_from(const Json& j) {
  return {j.at("floor").get<int>(), j.at("coef").get<double>(), j.at("exponent").get<double>()};
}

Json grid_json(const ps::SweepGrid& g) {
  return {{"base_points", g.base_points},       {"base_half_width", g.base_half_width},
          {"tail_points", g.tail_points},       {"tail_max", g.tail_max},
          {"peak_rtol", g.peak_rtol},           {"psi_rtol", g.psi_rtol},
          {"max_doublings", g.max_doublings},   {"truncation", truncation_json(g.truncation)}};
}

ps::SweepGrid grid_from(const Json& j) {
  ps::SweepGrid g;
  g.base_points = j.at("base_points").get<int>();
  g.base_half_width = j.at("base_half_width").get<double>();
  g.tail_points = j.at("tail_points").get<int>();
  g.tail_max = j.at("tail_max").get<double>();
  g.peak_rtol = j.at("peak_rtol").get<double>();
  g.psi_rtol = j.at("psi_rtol").get<double>();
  g.max_doublings = j.at("max_doublings").get<int>();
  g.truncation = truncation_from(j.at("truncation"));
  return g;
}

Json curve_json(const sg::CurveConfig& c) {
  return {{"time",
           {{"t_min", c.time.t_min},
            {"t_max", c.time.t_max},
            {"points", c.time.points},
            {"qq_target", c.time.qq_target},
            {"psi_hint", c.time.psi_hint}}},
          {"truncation", truncation_json(c.truncation)},
          {"rtol", c.rtol},
          {"abs_floor", c.abs_floor},
          {"max_doublings", c.max_doublings},
          {"expm_rtol", c.expm_rtol}};
}

sg::CurveConfig curve_from(const Json& j) {
  sg::CurveConfig c;
  const Json& t = j.at("time");
  c.time.t_min = t.at("t_min").get<double>();
  c.time.t_max = t.at("t_max").get<double>();
  c.time.points = t.at("points").get<int>();
  c.time.qq_target = t.at("qq_target").get<double>();
  c.time.psi_hint = t.at("psi_hint").get<double>();
  c.truncation = truncation_from(j.at("truncation"));
  c.rtol = j.at("rtol").get<double>();
  c.abs_floor = j.at("abs_floor").get<double>();
  c.max_doublings = j.at("max_doublings").get<int>();
  c.expm_rtol = j.at("expm_rtol").get<double>();
  return c;
}

// --- config merging ----------------------------------------------------------

bool same_kind(const Json& slot, const Json& value) {
  if (slot.is_number_integer()) return value.is_number_integer();
  if (slot.is_number()) return value.is_number();
  return slot.type() == value.type();
}

void assign(Json& slot, const Json& value, const std::string& key);

void merge_object(Json& target, const Json& patch, const std::string& path) {
  if (!patch.is_object()) throw ValidationError("config '" + path + "' must be an object");
  for (const auto& [k, v] : patch.items()) {
    const std::string key = path.empty() ? k : path + "." + k;
    if (!target.contains(k)) throw ValidationError("unknown config key '" + key + "'");
    assign(target[k], v, key);
  }
}

void assign(Json& slot, const Json& value, const std::string& key) {
  if (slot.is_object()) {
    merge_object(slot, value, key);
    return;
  }
  if (slot.is_array()) {
    if (!value.is_array()) throw ValidationError("config key '" + key + "' expects a list");
    Json out = Json::array();
    const Json proto = slot.empty() ? Json(0.0) : slot.front();
    for (const auto& v : value) {
      if (!same_kind(proto, v)) throw ValidationError("config key '" + key + "' expects a list of " + proto.type_name());
      out.push_back(proto.is_number_float() ? Json(v.get<double>()) : v);
    }
    slot = std::move(out);
    return;
  }
  if (!same_kind(slot, value)) throw ValidationError("config key '" + key + "' expects " + slot.type_name());
  slot = slot.is_number_float() ? Json(value.get<double>()) : value;
}

// --- output helpers ----------------------------------------------------------

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Json finite_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

class Csv {
 public:
  Csv(std::string_view schema, std::vector<std::string> columns) : schema_(schema), columns_(std::move(columns)) {}

  void row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_.size()) throw std::logic_error("csv row width mismatch in " + schema_);
    rows_.push_back(cells);
  }

  [[nodiscard]] std::string str() const {
    std::ostringstream os;
    os << "# jetspec-csv " << schema_ << " v" << kCsvSchemaVersion << '\n';
    for (std::size_t i = 0; i < columns_.size(); ++i) os << (i ? "," : "") << columns_[i];
    os << '\n';
    for (const auto& r : rows_) {
      for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
      os << '\n';
    }
    return os.str();
  }

 private:
  std::string schema_;
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

struct Output {
  fs::path dir;
  bool svg = false;

  explicit Output(const Json& config) : dir(config.at("out_dir").get<std::string>()), svg(config.value("svg", false)) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  }

  void write(const std::string& name, std::string_view content) const { write_file_atomic(dir / name, content); }

  void chart(const std::string& name, std::string_view title, std::string_view x_label, std::string_view y_label,
             const std::vector<Series>& series, bool log_x, bool log_y) const {
    if (svg) write(name, svg_line_chart(title, x_label, y_label, series, log_x, log_y));
  }
};

Json summary_head(std::string_view command, const Json& config) {
  return {{"command", command}, {"version", version()}, {"config", config}};
}

Json slope_json(const sg::Slope& s) {
  return {{"value", finite_or_null(s.value)},     {"std_error", finite_or_null(s.std_error)},
          {"ci_low", finite_or_null(s.ci_low)},   {"ci_high", finite_or_null(s.ci_high)},
          {"points", s.points}};
}

const std::vector<std::string> kSweepColumns{"alpha", "m", "mu", "lambda", "resolvent_norm", "envelope_G", "ratio"};
const std::vector<std::string> kCurveColumns{"alpha", "m", "t", "qq_norm", "pq_norm", "pp_residual"};

void add_curve_rows(Csv& csv, const sg::PropagatorCurve& c) {
  const bool kernel = !c.pq_norms.empty();
  for (std::size_t i = 0; i < c.t_grid.size(); ++i)
    csv.row({num(c.alpha), std::to_string(c.m), num(c.t_grid[i]), num(c.qq_norms[i]),
             kernel ? num(c.pq_norms[i]) : "0", kernel ? num(c.pp_residuals[i]) : "nan"});
}

// --- commands ----------------------------------------------------------------

Json cmd_assemble(const Json& config) {
  const Output out(config);
  const int m = config.at("m").get<int>();
  const double alpha = config.at("alpha").get<double>();
  const ModeSpace space = ModeSpace::full(m, config.at("n_hi").get<int>());
  const std::vector<std::pair<std::string, BandedOperator>> ops{
      {"A", assemble_A(space)}, {"Lambda", assemble_Lambda(space)}, {"L", assemble_L(space, alpha)}};
  Json summary = summary_head("assemble", config);
  summary["m"] = m;
  summary["alpha"] = alpha;
  summary["n_lo"] = space.n_lo();
  summary["n_hi"] = space.n_hi();
  summary["dim"] = space.dim();
  summary["kind"] = std::string(to_string(space.kind()));
  Json files = Json::array();
  for (const auto& [name, op] : ops) {
    std::ostringstream os;
    write_banded_text(os, op, name);
    out.write(name + ".txt", os.str());
    files.push_back({{"name", name}, {"file", name + ".txt"}, {"bandwidth", op.bandwidth()}});
  }
  summary["files"] = files;
  return summary;
}

Json cmd_sweep(const Json& config) {
  const Output out(config);
  const double alpha = config.at("alpha").get<double>();
  const int m = config.at("m").get<int>();
  const auto result = ps::sweep(alpha, m, grid_from(config.at("grid")));

  Csv csv("sweep", kSweepColumns);
  std::vector<double> g_values;
  for (std::size_t i = 0; i < result.mu_grid.size(); ++i) {
    const double mu = result.mu_grid[i];
    const double g = ps::envelope_G(alpha, m, mu);
    g_values.push_back(g);
    csv.row({num(alpha), std::to_string(m), num(mu), num(mu * alpha * m), num(result.norms[i]), num(g),
             num(result.norms[i] / g)});
  }
  out.write("sweep.csv", csv.str());
  out.chart("sweep.svg", "resolvent norm along the imaginary axis", "mu", "norm",
            {{"resolvent norm", result.mu_grid, result.norms}, {"envelope G", result.mu_grid, g_values}}, false, true);

  Json summary = summary_head("sweep", config);
  summary["alpha"] = alpha;
  summary["m"] = m;
  summary["psi"] = result.psi;
  summary["psi_prev"] = result.psi_prev;
  summary["mu_peak"] = result.mu_peak;
  summary["C_star"] = result.converged ? Json(ps::fit_envelope_constant(result)) : Json(nullptr);
  summary["n_hi_used"] = result.n_hi_used;
  summary["converged"] = result.converged;
  out.write("sweep.json", summary.dump(2) + "\n");
  if (!result.converged)
    throw ContractFailure("sweep did not converge under n_hi doubling",
                          {{"psi", result.psi}, {"psi_prev", result.psi_prev}, {"n_hi_used", result.n_hi_used}});
  return summary;
}

Json cmd_psbound(const Json& config) {
  const Output out(config);
  const double alpha = config.at("alpha").get<double>();
  const int m = config.at("m").get<int>();
  const ps::EnvelopeParams params{config.at("kappa").get<double>()};
  params.validate();
  const auto mu_list = config.at("mu_list").get<std::vector<double>>();
  if (mu_list.empty()) throw ValidationError("mu_list must not be empty");

  Csv csv("psbound", {"alpha", "m", "mu", "envelope_G", "F_closed", "xi1_closed", "xi2_closed", "F_numeric",
                      "xi1_numeric", "xi2_numeric"});
  std::vector<double> g_values, closed, numeric;
  double worst_gap = 0.0;
  for (double mu : mu_list) {
    const double g = ps::envelope_G(alpha, m, mu);
    const auto f = ps::envelope_F(alpha, mu, m, params);
    csv.row({num(alpha), std::to_string(m), num(mu), num(g), num(f.closed_form), num(f.xi1_closed),
             num(f.xi2_closed), num(f.numeric), num(f.xi1_numeric), num(f.xi2_numeric)});
    g_values.push_back(g);
    closed.push_back(f.closed_form);
    numeric.push_back(f.numeric);
    worst_gap = std::max(worst_gap, f.numeric / f.closed_form);
  }
  out.write("psbound.csv", csv.str());
  out.chart("psbound.svg", "resolvent envelopes", "mu", "value",
            {{"G", mu_list, g_values}, {"F closed form", mu_list, closed}, {"F numeric", mu_list, numeric}}, false,
            true);

  Json summary = summary_head("psbound", config);
  summary["alpha"] = alpha;
  summary["m"] = m;
  summary["points"] = mu_list.size();
  summary["F_closed_max"] = *std::max_element(closed.begin(), closed.end());
  summary["F_numeric_max"] = *std::max_element(numeric.begin(), numeric.end());
  summary["numeric_over_closed_max"] = worst_gap;
  out.write("psbound.json", summary.dump(2) + "\n");
  return summary;
}

Json cmd_coercivity(const Json& config) {
  const Output out(config);
  const auto m_list = config.at("m_list").get<std::vector<int>>();
  const auto mu_list = config.at("mu_list").get<std::vector<double>>();
  if (m_list.empty() || mu_list.empty()) throw ValidationError("m_list and mu_list must not be empty");
  const ps::EnvelopeParams params{config.at("kappa").get<double>()};
  ps::CoercivityConfig cc;
  cc.alpha_ref = config.at("alpha_ref").get<double>();
  cc.rtol = config.at("rtol").get<double>();
  cc.max_doublings = config.at("max_doublings").get<int>();
  const int n_hi = config.at("n_hi").get<int>();

  Csv csv("coercivity", {"m", "mu", "s_min", "ratio_high", "c_combined", "c_b3"});
  Json records = Json::array();
  Json per_m = Json::array();
  bool all_converged = true;
  for (int m : m_list) {
    const auto recs = ps::coercivity_scan(m, mu_list, n_hi, params, cc);
    double r_lo = INFINITY, r_hi = 0.0, c_lo = INFINITY, c_hi = 0.0, b_lo = INFINITY, b_hi = 0.0;
    for (const auto& r : recs) {
      csv.row({std::to_string(r.m), num(r.mu), num(r.s_min), num(r.ratio_high), num(r.c_combined), num(r.c_b3)});
      records.push_back({{"m", r.m},
                         {"mu", r.mu},
                         {"xi1", r.xi1},
                         {"xi2", r.xi2},
                         {"s_min", r.s_min},
                         {"ratio_high", finite_or_null(r.ratio_high)},
                         {"c_combined", finite_or_null(r.c_combined)},
                         {"c_b3", r.c_b3},
                         {"n_hi_used", r.n_hi_used},
                         {"max_rel_change", r.max_rel_change},
                         {"converged", r.converged}});
      all_converged = all_converged && r.converged;
      if (std::isfinite(r.ratio_high)) {
        r_lo = std::min(r_lo, r.ratio_high);
        r_hi = std::max(r_hi, r.ratio_high);
      }
      if (std::isfinite(r.c_combined)) {
        c_lo = std::min(c_lo, r.c_combined);
        c_hi = std::max(c_hi, r.c_combined);
      }
      b_lo = std::min(b_lo, r.c_b3);
      b_hi = std::max(b_hi, r.c_b3);
    }
    per_m.push_back({{"m", m},
                     {"ratio_high_min", finite_or_null(r_lo)},
                     {"ratio_high_max", finite_or_null(r_hi == 0.0 ? NAN : r_hi)},
                     {"c_combined_min", finite_or_null(c_lo)},
                     {"c_combined_max", finite_or_null(c_hi == 0.0 ? NAN : c_hi)},
                     {"c_b3_min", b_lo},
                     {"c_b3_max", b_hi}});
  }
  out.write("coercivity.csv", csv.str());

  Json summary = summary_head("coercivity", config);
  summary["converged"] = all_converged;
  summary["per_m"] = per_m;
  summary["records"] = records;
  out.write("coercivity.json", summary.dump(2) + "\n");
  if (!all_converged)
    throw ContractFailure("coercivity quantities did not settle under n_hi doubling", {{"records", records}});
  return summary;
}

Json cmd_semigroup(const Json& config) {
  const Output out(config);
  const double alpha = config.at("alpha").get<double>();
  const int m = config.at("m").get<int>();
  const double c_cap = config.at("c_cap").get<double>();
  const auto curve = sg::propagator_curve(alpha, m, curve_from(config.at("curve")));

  Csv csv("curve", kCurveColumns);
  add_curve_rows(csv, curve);
  out.write("curve.csv", csv.str());

  Json summary = summary_head("semigroup", config);
  summary["alpha"] = alpha;
  summary["m"] = m;
  summary["n_hi_used"] = curve.n_hi_used;
  summary["converged"] = curve.converged;
  summary["max_rel_change"] = curve.max_rel_change;
  summary["pp_check"] = curve.pq_norms.empty() ? Json(nullptr) : Json(curve.pp_check);
  std::vector<Series> series{{"|Q e^{tL} Q|", curve.t_grid, curve.qq_norms}};
  if (!curve.pq_norms.empty()) series.push_back({"|P e^{tL} Q|", curve.t_grid, curve.pq_norms});
  if (curve.converged) {
    const auto est = sg::decay_rate(curve, c_cap);
    summary["sigma"] = est.sigma;
    summary["c_cap"] = est.c_cap;
    summary["achieved_prefactor"] = est.achieved_prefactor;
    summary["certified"] = est.certified;
    summary["t_min"] = est.t_min;
    summary["t_max"] = est.t_max;
    summary["certificate_scope"] = "checked on the finite grid [t_min, t_max] only";
    std::vector<double> bound;
    for (double t : curve.t_grid) bound.push_back(c_cap * std::exp(-est.sigma * t));
    series.push_back({"certificate", curve.t_grid, bound});
  }
  out.chart("curve.svg", "propagator norms", "t", "norm", series, true, true);
  out.write("semigroup.json", summary.dump(2) + "\n");
  if (!curve.converged)
    throw ContractFailure("propagator curve did not settle under n_hi doubling",
                          {{"max_rel_change", curve.max_rel_change}, {"n_hi_used", curve.n_hi_used}});
  return summary;
}

Json cmd_scaling(const Json& config) {
  const Output out(config);
  sg::ScalingConfig sc;
  sc.m_fixed = config.at("m_fixed").get<int>();
  sc.alpha_fixed = config.at("alpha_fixed").get<double>();
  sc.sigma_alpha_max = config.at("sigma_alpha_max").get<double>();
  sc.c_cap = config.at("c_cap").get<double>();
  sc.ci_level = config.at("ci_level").get<double>();
  sc.sweep = grid_from(config.at("grid"));
  sc.curve = curve_from(config.at("curve"));
  const auto table = sg::scaling_study(config.at("alpha_list").get<std::vector<double>>(),
                                       config.at("m_list").get<std::vector<int>>(), sc);

  Csv csv("scaling", {"alpha", "m", "psi", "mu_peak", "C_star", "n_hi_sweep", "psi_scaled", "sigma",
                      "achieved_prefactor", "n_hi_curve", "link"});
  Json points = Json::array();
  std::vector<double> xa, ya;
  for (const auto& p : table.points) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    csv.row({num(p.alpha), std::to_string(p.m), num(p.psi), num(p.mu_peak), num(p.c_star),
             std::to_string(p.n_hi_sweep), num(p.psi_scaled), num(p.has_sigma ? p.sigma : nan),
             num(p.has_sigma ? p.achieved_prefactor : nan), std::to_string(p.has_sigma ? p.n_hi_curve : 0),
             num(p.has_sigma ? p.link : nan)});
    points.push_back({{"alpha", p.alpha},
                      {"m", p.m},
                      {"psi", p.psi},
                      {"C_star", p.c_star},
                      {"psi_scaled", p.psi_scaled},
                      {"sigma", p.has_sigma ? Json(p.sigma) : Json(nullptr)},
                      {"link", p.has_sigma ? Json(p.link) : Json(nullptr)}});
    if (p.m == sc.m_fixed) {
      xa.push_back(std::abs(p.alpha));
      ya.push_back(p.psi);
    }
  }
  out.write("scaling.csv", csv.str());
  out.chart("scaling.svg", "pseudospectral bound against alpha", "alpha", "psi", {{"psi", xa, ya}}, true, true);

  Json summary = summary_head("scaling", config);
  summary["slopes"] = {{"psi_vs_alpha", slope_json(table.psi_vs_alpha)},
                       {"psi_vs_m", slope_json(table.psi_vs_m)},
                       {"sigma_vs_alpha", slope_json(table.sigma_vs_alpha)},
                       {"sigma_vs_m", slope_json(table.sigma_vs_m)}};
  summary["psi_scaled_min"] = table.psi_scaled_min;
  summary["psi_scaled_max"] = table.psi_scaled_max;
  summary["link_min"] = finite_or_null(table.link_min);
  summary["link_max"] = finite_or_null(table.link_max);
  summary["points"] = points;
  out.write("scaling.json", summary.dump(2) + "\n");
  return summary;
}

Json cmd_transient(const Json& config) {
  const Output out(config);
  sg::TransientConfig tc;
  tc.curve = curve_from(config.at("curve"));
  tc.peak_rtol = config.at("peak_rtol").get<double>();
  tc.ci_level = config.at("ci_level").get<double>();
  const int m = config.at("m").get<int>();
  const auto table = sg::transient_study(config.at("alpha_list").get<std::vector<double>>(), m, tc);

  Csv rows("transient", {"alpha", "m", "amplitude", "t_peak", "pp_check", "n_hi_used"});
  Csv curves("curve", kCurveColumns);
  Json records = Json::array();
  std::vector<Series> series;
  bool all_converged = true;
  for (const auto& r : table.rows) {
    rows.row({num(r.alpha), std::to_string(r.m), num(r.amplitude), num(r.t_peak), num(r.pp_check),
              std::to_string(r.n_hi_used)});
    add_curve_rows(curves, r.curve);
    records.push_back({{"alpha", r.alpha},
                       {"m", r.m},
                       {"amplitude", r.amplitude},
                       {"t_peak", r.t_peak},
                       {"pp_check", r.pp_check},
                       {"n_hi_used", r.n_hi_used},
                       {"converged", r.converged}});
    all_converged = all_converged && r.converged;
    Series s{"alpha=" + num(r.alpha), r.curve.t_grid, {}};
    for (std::size_t i = 0; i < r.curve.t_grid.size(); ++i)
      s.y.push_back(r.curve.pq_norms[i] * std::exp(2.0 * r.curve.t_grid[i]));
    series.push_back(std::move(s));
  }
  out.write("transient.csv", rows.str());
  out.write("curves.csv", curves.str());
  out.chart("transient.svg", "amplified P-part of the propagator", "t", "|P e^{tL} Q| e^{2t}", series, true, false);

  Json summary = summary_head("transient", config);
  summary["amplitude_vs_alpha"] = slope_json(table.amplitude_vs_alpha);
  summary["converged"] = all_converged;
  summary["rows"] = records;
  out.write("transient.json", summary.dump(2) + "\n");
  if (!all_converged) throw ContractFailure("propagator curves did not settle under n_hi doubling", {{"rows", records}});
  return summary;
}

Json cmd_velocity(const Json& config) {
  const Output out(config);
  const int n = config.at("n").get<int>();
  const double amplitude = config.at("amplitude").get<double>();
  const int points = config.at("points").get<int>();
  const bool pole_limits = config.at("pole_limits").get<bool>();
  if (points < 2) throw ValidationError("velocity profile needs at least 2 points");
  std::vector<double> theta;
  if (pole_limits) {
    for (int i = 0; i < points; ++i) theta.push_back(std::numbers::pi * i / (points - 1));
  } else {
    for (int i = 0; i < points; ++i) theta.push_back(std::numbers::pi * (i + 0.5) / points);
  }
  const auto u = velocity_profile(n, amplitude, theta, pole_limits);

  Csv csv("velocity", {"theta", "angular_speed"});
  double odd = 0.0, even = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    csv.row({num(theta[i]), num(u[i])});
    const double mirror = u[theta.size() - 1 - i];
    odd = std::max(odd, std::abs(u[i] + mirror));
    even = std::max(even, std::abs(u[i] - mirror));
  }
  out.write("velocity.csv", csv.str());
  out.chart("velocity.svg", "zonal angular speed", "theta", "angular speed", {{"n=" + std::to_string(n), theta, u}},
            false, false);

  Json summary = summary_head("velocity", config);
  summary["n"] = n;
  summary["points"] = points;
  summary["max_abs"] = std::abs(*std::max_element(u.begin(), u.end(), [](double a, double b) {
    return std::abs(a) < std::abs(b);
  }));
  summary["odd_residual"] = odd;
  summary["even_residual"] = even;
  out.write("velocity.json", summary.dump(2) + "\n");
  return summary;
}

Json with_output(Json body) {
  Json j{{"out_dir", "out"}, {"svg", false}};
  for (auto& [k, v] : body.items()) j[k] = v;
  return j;
}

// SVG coordinate transform for one axis.
struct Axis {
  double lo = 0.0, hi = 1.0;
  bool log = false;

  [[nodiscard]] double map(double v) const { return log ? std::log10(v) : v; }
  [[nodiscard]] double unmap(double v) const { return log ? std::pow(10.0, v) : v; }
  [[nodiscard]] bool usable(double v) const { return std::isfinite(v) && (!log || v > 0.0); }
};

std::string escape_xml(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string short_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

}  // namespace

std::string_view version() { return JETSPEC_VERSION; }

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"assemble", "sweep",     "psbound",  "coercivity",
                                              "semigroup", "scaling", "transient", "velocity"};
  return names;
}

Json default_config(std::string_view command) {
  const ps::SweepGrid grid;
  const sg::CurveConfig curve;
  if (command == "assemble") return Json{{"out_dir", "out"}, {"m", 1}, {"n_hi", 16}, {"alpha", 0.0}};
  if (command == "sweep") return with_output({{"alpha", 1e4}, {"m", 1}, {"grid", grid_json(grid)}});
  if (command == "psbound")
    return with_output({{"alpha", 1e4},
                        {"m", 1},
                        {"kappa", ps::EnvelopeParams{}.kappa},
                        {"mu_list", {0.0, 0.25, 0.5, 0.9, 0.99, 1.0, 1.01, 1.1, 1.5, 2.0}}});
  if (command == "coercivity") {
    const ps::CoercivityConfig cc;
    return with_output({{"m_list", {1, 2, 3}},
                        {"mu_list", {1.05, 1.1, 1.5, 2.0, 0.0, 0.5, -0.5, 0.9, -0.9, 0.99, -0.99}},
                        {"n_hi", 64},
                        {"kappa", ps::EnvelopeParams{}.kappa},
                        {"alpha_ref", cc.alpha_ref},
                        {"rtol", cc.rtol},
                        {"max_doublings", 10}});
  }
  if (command == "semigroup")
    return with_output({{"alpha", 1e4}, {"m", 1}, {"c_cap", 10.0}, {"curve", curve_json(curve)}});
  if (command == "scaling") {
    const sg::ScalingConfig sc;
    return with_output({{"alpha_list", {1e2, 1e3, 1e4, 1e5}},
                        {"m_list", {1, 2, 3, 4, 5, 6, 7, 8}},
                        {"m_fixed", sc.m_fixed},
                        {"alpha_fixed", sc.alpha_fixed},
                        {"sigma_alpha_max", sc.sigma_alpha_max},
                        {"c_cap", sc.c_cap},
                        {"ci_level", sc.ci_level},
                        {"grid", grid_json(grid)},
                        {"curve", curve_json(curve)}});
  }
  if (command == "transient") {
    const sg::TransientConfig tc;
    return with_output({{"alpha_list", {1e3, 1e4, 1e5}},
                        {"m", 1},
                        {"peak_rtol", tc.peak_rtol},
                        {"ci_level", tc.ci_level},
                        {"curve", curve_json(curve)}});
  }
  if (command == "velocity")
    return with_output({{"n", 2}, {"amplitude", 1.0}, {"points", 181}, {"pole_limits", true}});
  throw ValidationError("unknown command '" + std::string(command) + "'");
}

Json resolve_config(std::string_view command, const Json& file, const std::vector<std::string>& overrides) {
  Json config = default_config(command);
  if (!file.is_null()) merge_object(config, file, "");
  for (const auto& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw ValidationError("override '" + item + "' is not key=value");
    const std::string key = item.substr(0, eq);
    const std::string text = item.substr(eq + 1);
    Json value = Json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    Json patch = value;
    std::string rest = key;
    std::vector<std::string> parts;
    for (std::size_t pos; (pos = rest.find('.')) != std::string::npos; rest = rest.substr(pos + 1))
      parts.push_back(rest.substr(0, pos));
    parts.push_back(rest);
    for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = Json{{*it, patch}};
    merge_object(config, patch, "");
  }
  return config;
}

Json run_command(std::string_view command, const Json& config) {
  if (command == "assemble") {
    Json summary = cmd_assemble(config);
    write_file_atomic(fs::path(config.at("out_dir").get<std::string>()) / "assemble.json", summary.dump(2) + "\n");
    return summary;
  }
  if (command == "sweep") return cmd_sweep(config);
  if (command == "psbound") return cmd_psbound(config);
  if (command == "coercivity") return cmd_coercivity(config);
  if (command == "semigroup") return cmd_semigroup(config);
  if (command == "scaling") return cmd_scaling(config);
  if (command == "transient") return cmd_transient(config);
  if (command == "velocity") return cmd_velocity(config);
  throw ValidationError("unknown command '" + std::string(command) + "'");
}

void write_file_atomic(const fs::path& path, std::string_view content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + tmp.string() + " for writing");
    os.write(content.data(), static_cast<std::streamsize>(content.size()));
    os.flush();
    if (!os) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move " + tmp.string() + " to " + path.string());
  }
}

std::string svg_line_chart(std::string_view title, std::string_view x_label, std::string_view y_label,
                           const std::vector<Series>& series, bool log_x, bool log_y) {
  constexpr double kWidth = 720, kHeight = 440, kLeft = 80, kRight = 170, kTop = 40, kBottom = 60;
  static const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  Axis ax{INFINITY, -INFINITY, log_x}, ay{INFINITY, -INFINITY, log_y};
  for (const auto& s : series)
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!ax.usable(s.x[i]) || !ay.usable(s.y[i])) continue;
      ax.lo = std::min(ax.lo, ax.map(s.x[i]));
      ax.hi = std::max(ax.hi, ax.map(s.x[i]));
      ay.lo = std::min(ay.lo, ay.map(s.y[i]));
      ay.hi = std::max(ay.hi, ay.map(s.y[i]));
    }
  for (Axis* a : {&ax, &ay}) {
    if (!(a->lo <= a->hi)) a->lo = 0.0, a->hi = 1.0;
    if (a->hi - a->lo < 1e-12) a->lo -= 0.5, a->hi += 0.5;
  }
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double v) { return kLeft + (ax.map(v) - ax.lo) / (ax.hi - ax.lo) * pw; };
  auto py = [&](double v) { return kTop + ph - (ay.map(v) - ay.lo) / (ay.hi - ay.lo) * ph; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape_xml(title)
     << "</text>\n";
  os << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double fx = ax.lo + (ax.hi - ax.lo) * k / 4.0, fy = ay.lo + (ay.hi - ay.lo) * k / 4.0;
    const double x = kLeft + pw * k / 4.0, y = kTop + ph - ph * k / 4.0;
    os << "<line x1=\"" << x << "\" y1=\"" << kTop + ph << "\" x2=\"" << x << "\" y2=\"" << kTop + ph + 5
       << "\" stroke=\"black\"/><text x=\"" << x << "\" y=\"" << kTop + ph + 18 << "\" text-anchor=\"middle\">"
       << short_num(ax.unmap(fx)) << "</text>\n";
    os << "<line x1=\"" << kLeft - 5 << "\" y1=\"" << y << "\" x2=\"" << kLeft << "\" y2=\"" << y
       << "\" stroke=\"black\"/><text x=\"" << kLeft - 8 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">"
       << short_num(ay.unmap(fy)) << "</text>\n";
  }
  os << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 18 << "\" text-anchor=\"middle\">"
     << escape_xml(x_label) << "</text>\n";
  os << "<text transform=\"translate(18," << kTop + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
     << escape_xml(y_label) << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kColors[s % std::size(kColors)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < std::min(series[s].x.size(), series[s].y.size()); ++i)
      if (ax.usable(series[s].x[i]) && ay.usable(series[s].y[i]))
        os << short_num(px(series[s].x[i])) << ',' << short_num(py(series[s].y[i])) << ' ';
    os << "\"/>\n";
    const double ly = kTop + 14 + 18.0 * static_cast<double>(s);
    os << "<line x1=\"" << kWidth - kRight + 12 << "\" y1=\"" << ly - 4 << "\" x2=\"" << kWidth - kRight + 32
       << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/><text x=\""
       << kWidth - kRight + 38 << "\" y=\"" << ly << "\">" << escape_xml(series[s].name) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

int exit_code(const std::exception_ptr& error) {
  if (!error) return 0;
  try {
    std::rethrow_exception(error);
  } catch (const ValidationError&) {
    return 2;
  } catch (const nlohmann::json::exception&) {
    return 2;
  } catch (const IoError&) {
    return 4;
  } catch (const fs::filesystem_error&) {
    return 4;
  } catch (...) {
    return 3;
  }
}

Json error_record(const std::exception_ptr& error, std::string_view command) {
  Json rec{{"command", command}, {"exit_code", exit_code(error)}};
  try {
    std::rethrow_exception(error);
  } catch (const ContractFailure& e) {
    rec["kind"] = "numerical";
    rec["message"] = e.what();
    rec["details"] = e.details();
  } catch (const ValidationError& e) {
    rec["kind"] = "validation";
    rec["message"] = e.what();
  } catch (const nlohmann::json::exception& e) {
    rec["kind"] = "validation";
    rec["message"] = e.what();
  } catch (const IoError& e) {
    rec["kind"] = "io";
    rec["message"] = e.what();
  } catch (const fs::filesystem_error& e) {
    rec["kind"] = "io";
    rec["message"] = e.what();
  } catch (const NumericalError& e) {
    rec["kind"] = "numerical";
    rec["message"] = e.what();
  } catch (const std::exception& e) {
    rec["kind"] = "internal";
    rec["message"] = e.what();
  } catch (...) {
    rec["kind"] = "internal";
    rec["message"] = "unknown exception";
  }
  return Json{{"error", rec}};
}

int main_entry(int argc, char** argv) {
  CLI::App app{"Spectral analysis of the linearized two-jet flow on the sphere, one azimuthal mode at a time.",
               "jetspec"};
  app.set_version_flag("--version", std::string(version()));
  app.require_subcommand(1);

  struct Options {
    std::string config_file;
    std::vector<std::string> sets;
    std::string out_dir;
    bool svg = false;
  };
  std::map<std::string, Options> options;
  const std::map<std::string, std::string> blurbs{
      {"assemble", "export A, Lambda and L as banded text files"},
      {"sweep", "resolvent norm sweep along the imaginary axis and the bound psi"},
      {"psbound", "resolvent envelopes G and F on a list of mu"},
      {"coercivity", "coercive-estimate constants on a mu grid"},
      {"semigroup", "propagator norm curve and certified decay rate"},
      {"scaling", "psi and decay-rate scaling in alpha and m"},
      {"transient", "peak of the amplified P-part of the propagator"},
      {"velocity", "zonal angular speed of the n-jet flow"}};
  for (const auto& name : command_names()) {
    auto* sub = app.add_subcommand(name, blurbs.at(name));
    Options& o = options[name];
    sub->add_option("-c,--config", o.config_file, "JSON config file");
    sub->add_option("-s,--set", o.sets, "override a config value, e.g. grid.base_points=301");
    sub->add_option("-o,--out-dir", o.out_dir, "output directory");
    if (name != "assemble") sub->add_flag("--svg", o.svg, "also write SVG charts");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const Options& o = options.at(command);
    Json file;
    if (!o.config_file.empty()) {
      std::ifstream is(o.config_file);
      if (!is) throw IoError("cannot read config file " + o.config_file);
      file = Json::parse(is, nullptr, false);
      if (file.is_discarded()) throw ValidationError("config file " + o.config_file + " is not valid JSON");
    }
    std::vector<std::string> overrides = o.sets;
    if (!o.out_dir.empty()) overrides.push_back("out_dir=" + Json(o.out_dir).dump());
    if (o.svg) overrides.push_back("svg=true");
    const Json config = resolve_config(command, file, overrides);
    run_command(command, config);
    std::cout << Json{{"command", command}, {"out_dir", config.at("out_dir")}, {"status", "ok"}}.dump()
              << std::endl;
    return 0;
  } catch (...) {
    const auto error = std::current_exception();
    std::cerr << error_record(error, command).dump() << std::endl;
    return exit_code(error);
  }
}

}  // namespace jetspec::cli
