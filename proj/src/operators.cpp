#include "jetspec/operators.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

#include "jetspec/errors.hpp"
#include "jetspec/harmonics.hpp"

namespace jetspec {

namespace {

using Eigen::Index;

void require_same_space(const BandedOperator& a, const BandedOperator& b) {
  if (!(a.space() == b.space())) throw ValidationError("banded operators live on different mode spaces");
}

}  // namespace

std::string_view to_string(SpaceKind kind) { return kind == SpaceKind::Full ? "full" : "reduced"; }

int lowest_degree(int m, SpaceKind kind) {
  const int am = std::abs(m);
  return kind == SpaceKind::Full ? std::max(2, am) : std::max(3, am);
}

ModeSpace::ModeSpace(int m, int n_hi, SpaceKind kind) : m_(m), n_hi_(n_hi), kind_(kind) {
  if (m == 0) throw ValidationError("mode space requires m != 0");
  n_lo_ = lowest_degree(m, kind);
  // Measured from the Full lower degree so every Full space can be reduced.
  const int min_hi = lowest_degree(m, SpaceKind::Full) + 8;
  if (n_hi < min_hi)
    throw ValidationError("truncation degree " + std::to_string(n_hi) + " below minimum " +
                          std::to_string(min_hi) + " for m=" + std::to_string(m));
}

bool ModeSpace::has_kernel_direction() const {
  return kind_ == SpaceKind::Full && std::abs(m_) <= 2;
}

int TruncationPolicy::n_hi(double alpha, int m) const {
  const int n_lo = lowest_degree(m, SpaceKind::Full);
  const double grow = std::ceil(coef * std::pow(std::abs(alpha * m), exponent));
  return std::max({floor, n_lo + static_cast<int>(grow), n_lo + 8});
}

// --- SpectralVector --------------------------------------------------------

SpectralVector::SpectralVector(ModeSpace space, Eigen::VectorXcd coeffs)
    : space_(space), coeffs_(std::move(coeffs)) {
  if (coeffs_.size() != space_.dim())
    throw ValidationError("coefficient count " + std::to_string(coeffs_.size()) +
                          " does not match space dimension " + std::to_string(space_.dim()));
  if (!coeffs_.allFinite()) throw ValidationError("spectral vector has non-finite coefficients");
}

SpectralVector SpectralVector::zero(const ModeSpace& space) {
  return {space, Eigen::VectorXcd::Zero(space.dim())};
}

SpectralVector SpectralVector::unit(const ModeSpace& space, int n) {
  if (!space.contains(n)) throw ValidationError("degree " + std::to_string(n) + " not in mode space");
  Eigen::VectorXcd c = Eigen::VectorXcd::Zero(space.dim());
  c(space.index_of(n)) = 1.0;
  return {space, std::move(c)};
}

// --- BandedOperator --------------------------------------------------------

BandedOperator::BandedOperator(ModeSpace space, int bandwidth) : space_(space), bandwidth_(bandwidth) {
  if (bandwidth < 0 || bandwidth > 2) throw ValidationError("bandwidth must be 0, 1 or 2");
  const Index n = space_.dim();
  diags_.reserve(static_cast<std::size_t>(2 * bandwidth + 1));
  for (int k = -bandwidth; k <= bandwidth; ++k)
    diags_.emplace_back(Eigen::VectorXcd::Zero(std::max<Index>(0, n - std::abs(k))));
}

const Eigen::VectorXcd& BandedOperator::diagonal(int offset) const {
  if (std::abs(offset) > bandwidth_) throw ValidationError("band offset outside bandwidth");
  return diags_[static_cast<std::size_t>(offset + bandwidth_)];
}

Eigen::VectorXcd& BandedOperator::diagonal(int offset) {
  if (std::abs(offset) > bandwidth_) throw ValidationError("band offset outside bandwidth");
  return diags_[static_cast<std::size_t>(offset + bandwidth_)];
}

cdouble BandedOperator::operator()(Index row, Index col) const {
  const auto k = static_cast<int>(col - row);
  if (std::abs(k) > bandwidth_) return 0.0;
  return diags_[static_cast<std::size_t>(k + bandwidth_)](std::min(row, col));
}

void BandedOperator::set(Index row, Index col, cdouble value) {
  const auto k = static_cast<int>(col - row);
  diagonal(k)(std::min(row, col)) = value;
}

Eigen::VectorXcd BandedOperator::apply(const Eigen::VectorXcd& x) const {
  const Index n = dim();
  if (x.size() != n) throw ValidationError("vector length does not match operator dimension");
  Eigen::VectorXcd y = Eigen::VectorXcd::Zero(n);
  for (int k = -bandwidth_; k <= bandwidth_; ++k) {
    const auto& d = diagonal(k);
    const Index len = d.size();
    if (k >= 0) {
      y.head(len).array() += d.array() * x.segment(k, len).array();
    } else {
      y.segment(-k, len).array() += d.array() * x.head(len).array();
    }
  }
  return y;
}

SpectralVector BandedOperator::apply(const SpectralVector& u) const {
  if (!(u.space() == space_)) throw ValidationError("vector and operator live on different mode spaces");
  return {space_, apply(u.coeffs())};
}

Eigen::MatrixXcd BandedOperator::to_dense() const {
  const Index n = dim();
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(n, n);
  for (int k = -bandwidth_; k <= bandwidth_; ++k) {
    const auto& d = diagonal(k);
    for (Index i = 0; i < d.size(); ++i) {
      if (k >= 0)
        out(i, i + k) = d(i);
      else
        out(i - k, i) = d(i);
    }
  }
  return out;
}

BandedOperator BandedOperator::widened(int bandwidth) const {
  if (bandwidth < bandwidth_) throw ValidationError("cannot narrow a band by widening");
  BandedOperator out(space_, bandwidth);
  for (int k = -bandwidth_; k <= bandwidth_; ++k) out.diagonal(k) = diagonal(k);
  return out;
}

BandedOperator BandedOperator::adjoint() const {
  BandedOperator out(space_, bandwidth_);
  for (int k = -bandwidth_; k <= bandwidth_; ++k) out.diagonal(-k) = diagonal(k).conjugate();
  return out;
}

BandedOperator BandedOperator::restricted(const ModeSpace& sub) const {
  if (sub.m() != space_.m() || sub.n_hi() != space_.n_hi() || sub.n_lo() < space_.n_lo())
    throw ValidationError("restriction target is not a sub-slice of the operator's space");
  const Index skip = sub.n_lo() - space_.n_lo();
  BandedOperator out(sub, bandwidth_);
  for (int k = -bandwidth_; k <= bandwidth_; ++k) {
    auto& dst = out.diagonal(k);
    dst = diagonal(k).segment(skip, dst.size());
  }
  return out;
}

bool BandedOperator::is_real() const {
  for (const auto& d : diags_)
    if (!d.imag().isZero(0.0)) return false;
  return true;
}

bool BandedOperator::all_finite() const {
  for (const auto& d : diags_)
    if (!d.allFinite()) return false;
  return true;
}

BandedOperator& BandedOperator::operator+=(const BandedOperator& rhs) {
  require_same_space(*this, rhs);
  if (rhs.bandwidth_ > bandwidth_) *this = widened(rhs.bandwidth_);
  for (int k = -rhs.bandwidth_; k <= rhs.bandwidth_; ++k) diagonal(k) += rhs.diagonal(k);
  return *this;
}

BandedOperator& BandedOperator::operator-=(const BandedOperator& rhs) {
  require_same_space(*this, rhs);
  if (rhs.bandwidth_ > bandwidth_) *this = widened(rhs.bandwidth_);
  for (int k = -rhs.bandwidth_; k <= rhs.bandwidth_; ++k) diagonal(k) -= rhs.diagonal(k);
  return *this;
}

BandedOperator& BandedOperator::operator*=(cdouble s) {
  for (auto& d : diags_) d *= s;
  return *this;
}

BandedOperator BandedOperator::shifted(cdouble s) const {
  BandedOperator out = *this;
  out.diagonal(0).array() += s;
  return out;
}

bool BandedOperator::operator==(const BandedOperator& rhs) const {
  return space_ == rhs.space_ && bandwidth_ == rhs.bandwidth_ && diags_ == rhs.diags_;
}

BandedOperator operator+(BandedOperator lhs, const BandedOperator& rhs) { return lhs += rhs; }
BandedOperator operator-(BandedOperator lhs, const BandedOperator& rhs) { return lhs -= rhs; }
BandedOperator operator*(cdouble s, BandedOperator op) { return op *= s; }

BandedOperator operator*(const BandedOperator& lhs, const BandedOperator& rhs) {
  require_same_space(lhs, rhs);
  const int bw = lhs.bandwidth() + rhs.bandwidth();
  if (bw > 2) throw ValidationError("band product would exceed half-bandwidth 2");
  const Index n = lhs.dim();
  BandedOperator out(lhs.space(), bw);
  for (Index i = 0; i < n; ++i) {
    for (Index j = std::max<Index>(0, i - bw); j <= std::min<Index>(n - 1, i + bw); ++j) {
      cdouble acc = 0.0;
      const Index lo = std::max({Index{0}, i - lhs.bandwidth(), j - rhs.bandwidth()});
      const Index hi = std::min({n - 1, i + lhs.bandwidth(), j + rhs.bandwidth()});
      for (Index k = lo; k <= hi; ++k) acc += lhs(i, k) * rhs(k, j);
      out.set(i, j, acc);
    }
  }
  return out;
}

// --- assembly --------------------------------------------------------------

BandedOperator assemble_A(const ModeSpace& space) {
  BandedOperator op(space, 0);
  auto& d = op.diagonal(0);
  for (Index i = 0; i < space.dim(); ++i) d(i) = 2.0 - harmonics::laplace_eigenvalue(space.degree(i));
  return op;
}

BandedOperator assemble_B2(const ModeSpace& space) {
  BandedOperator op(space, 0);
  auto& d = op.diagonal(0);
  for (Index i = 0; i < space.dim(); ++i) d(i) = 1.0 - 6.0 / harmonics::laplace_eigenvalue(space.degree(i));
  return op;
}

BandedOperator assemble_cos(const ModeSpace& space) {
  BandedOperator op(space, 1);
  auto& upper = op.diagonal(1);
  auto& lower = op.diagonal(-1);
  for (Index i = 0; i < upper.size(); ++i) {
    const double a = harmonics::coupling(space.degree(i + 1), space.m());
    upper(i) = a;
    lower(i) = a;
  }
  return op;
}

BandedOperator assemble_Lambda(const ModeSpace& space) {
  BandedOperator op = assemble_cos(space);
  const auto b2 = assemble_B2(space).diagonal(0);
  // Column scaling: entry (i, j) picks up b_j.
  op.diagonal(1).array() *= b2.tail(op.diagonal(1).size()).array();
  op.diagonal(-1).array() *= b2.head(op.diagonal(-1).size()).array();
  return op;
}

BandedOperator assemble_L(const ModeSpace& space, double alpha) {
  const cdouble coef(0.0, -alpha * space.m());
  return assemble_A(space).widened(1) + coef * assemble_Lambda(space);
}

BandedOperator assemble_sin2_form(const ModeSpace& space) {
  const BandedOperator c = assemble_cos(space);
  BandedOperator s = -1.0 * (c.adjoint() * c);
  s.diagonal(0).array() += 1.0;
  return s;
}

SpectralVector project_Q(const SpectralVector& u) {
  if (u.space().kind() != SpaceKind::Full) throw ValidationError("project_Q expects a vector on a Full space");
  if (!u.space().has_kernel_direction()) return u;
  Eigen::VectorXcd c = u.coeffs();
  c(u.space().index_of(2)) = 0.0;
  return {u.space(), std::move(c)};
}

SpectralVector project_P(const SpectralVector& u) {
  if (u.space().kind() != SpaceKind::Full) throw ValidationError("project_P expects a vector on a Full space");
  SpectralVector out = SpectralVector::zero(u.space());
  if (!u.space().has_kernel_direction()) return out;
  Eigen::VectorXcd c = out.coeffs();
  c(u.space().index_of(2)) = u.coefficient(2);
  return {u.space(), std::move(c)};
}

SpectralVector sobolev_scale(const SpectralVector& u, double s, FractionalPower which) {
  Eigen::VectorXcd c = u.coeffs();
  const auto& space = u.space();
  for (Index i = 0; i < space.dim(); ++i) {
    const double lam = harmonics::laplace_eigenvalue(space.degree(i));
    const double base = which == FractionalPower::MinusLaplace ? lam : lam - 2.0;
    c(i) *= std::pow(base, s);
  }
  return {space, std::move(c)};
}

std::vector<double> velocity_profile(int n, double amplitude, const std::vector<double>& theta_grid,
                                     bool pole_limits) {
  if (n < 1) throw ValidationError("velocity profile needs n >= 1");
  const double lam = harmonics::laplace_eigenvalue(n);
  const double norm = std::sqrt((2.0 * n + 1.0) / (4.0 * std::numbers::pi));
  std::vector<double> out;
  out.reserve(theta_grid.size());
  for (double theta : theta_grid) {
    const bool at_pole = theta <= 0.0 || theta >= std::numbers::pi;
    if (at_pole) {
      if (!pole_limits)
        throw ValidationError("velocity profile is singular at the poles; got theta=" + std::to_string(theta));
      if (theta < 0.0 || theta > std::numbers::pi) throw ValidationError("colatitude outside [0, pi]");
      // dY_n^0/dθ / sinθ → -norm·P_n'(±1), with P_n'(1) = λ_n/2 and P_n'(-1) = (-1)^{n+1} λ_n/2.
      const double sign = (theta <= 0.0 || n % 2 == 1) ? 1.0 : -1.0;
      out.push_back(sign * amplitude * norm / 2.0);
      continue;
    }
    // dY_n^0/dθ = √λ_n · Y_n^1, which keeps full relative accuracy next to the poles.
    out.push_back(-amplitude / (std::sqrt(lam) * std::sin(theta)) * harmonics::eval_basis(n, 1, theta));
  }
  return out;
}

// --- text export -----------------------------------------------------------

void write_banded_text(std::ostream& os, const BandedOperator& op, std::string_view name) {
  const auto& sp = op.space();
  os << "# jetspec-banded v1 " << name << '\n';
  os << "m " << sp.m() << " n_lo " << sp.n_lo() << " n_hi " << sp.n_hi() << " bandwidth " << op.bandwidth()
     << " kind " << to_string(sp.kind()) << '\n';
  std::ostringstream line;
  line << std::setprecision(17);
  for (int k = -op.bandwidth(); k <= op.bandwidth(); ++k) {
    const auto& d = op.diagonal(k);
    line.str("");
    line << "band " << k << ' ' << d.size();
    for (Index i = 0; i < d.size(); ++i) line << ' ' << d(i).real() << ' ' << d(i).imag();
    os << line.str() << '\n';
  }
}

BandedOperator read_banded_text(std::istream& is, std::string* name) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("# jetspec-banded v1", 0) != 0)
    throw ValidationError("missing banded-format header line");
  if (name) *name = line.size() > 20 ? line.substr(20) : std::string{};

  std::string key_m, key_lo, key_hi, key_bw, key_kind, kind;
  int m = 0, n_lo = 0, n_hi = 0, bw = 0;
  if (!std::getline(is, line)) throw ValidationError("missing banded-format shape line");
  std::istringstream shape(line);
  shape >> key_m >> m >> key_lo >> n_lo >> key_hi >> n_hi >> key_bw >> bw >> key_kind >> kind;
  if (!shape || key_m != "m" || key_lo != "n_lo" || key_hi != "n_hi" || key_bw != "bandwidth" ||
      key_kind != "kind")
    throw ValidationError("malformed banded-format shape line: " + line);
  const SpaceKind sk = kind == "full" ? SpaceKind::Full : SpaceKind::Reduced;
  if (kind != "full" && kind != "reduced") throw ValidationError("unknown space kind: " + kind);
  ModeSpace space(m, n_hi, sk);
  if (space.n_lo() != n_lo) throw ValidationError("n_lo inconsistent with m and kind");

  BandedOperator op(space, bw);
  for (int k = -bw; k <= bw; ++k) {
    if (!std::getline(is, line)) throw ValidationError("missing band line for offset " + std::to_string(k));
    std::istringstream band(line);
    std::string tag;
    int offset = 0;
    Index len = 0;
    band >> tag >> offset >> len;
    auto& d = op.diagonal(k);
    if (!band || tag != "band" || offset != k || len != d.size())
      throw ValidationError("malformed band line for offset " + std::to_string(k));
    for (Index i = 0; i < len; ++i) {
      double re = 0.0, im = 0.0;
      if (!(band >> re >> im)) throw ValidationError("truncated band line for offset " + std::to_string(k));
      d(i) = cdouble(re, im);
    }
  }
  if (!op.all_finite()) throw ValidationError("banded file contains non-finite entries");
  return op;
}

}  // namespace jetspec
