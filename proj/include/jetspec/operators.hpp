#pragma once

// Truncated spectral operators of the linearized two-jet flow, per azimuthal mode m.
//
// A mode space holds coefficients c_n of u = Σ c_n Y_n^m for n_lo ≤ n ≤ n_hi. The
// basis is orthonormal, so every L² quantity below is a plain coefficient sum.

#include <complex>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace jetspec {

using cdouble = std::complex<double>;

enum class SpaceKind {
  Full,     // degrees n ≥ max(2, |m|)
  Reduced,  // degrees n ≥ max(3, |m|): the Y_2^m kernel direction removed
};

std::string_view to_string(SpaceKind kind);

class ModeSpace {
 public:
  ModeSpace(int m, int n_hi, SpaceKind kind);

  static ModeSpace full(int m, int n_hi) { return {m, n_hi, SpaceKind::Full}; }
  static ModeSpace reduced(int m, int n_hi) { return {m, n_hi, SpaceKind::Reduced}; }

  [[nodiscard]] int m() const { return m_; }
  [[nodiscard]] int n_lo() const { return n_lo_; }
  [[nodiscard]] int n_hi() const { return n_hi_; }
  [[nodiscard]] SpaceKind kind() const { return kind_; }
  [[nodiscard]] Eigen::Index dim() const { return n_hi_ - n_lo_ + 1; }
  [[nodiscard]] int degree(Eigen::Index i) const { return n_lo_ + static_cast<int>(i); }
  [[nodiscard]] Eigen::Index index_of(int n) const { return n - n_lo_; }
  [[nodiscard]] bool contains(int n) const { return n >= n_lo_ && n <= n_hi_; }

  [[nodiscard]] ModeSpace as_reduced() const { return reduced(m_, n_hi_); }
  /// True when the Y_2^m direction is present, i.e. Full with |m| ∈ {1, 2}.
  [[nodiscard]] bool has_kernel_direction() const;

  bool operator==(const ModeSpace&) const = default;

 private:
  int m_;
  int n_lo_;
  int n_hi_;
  SpaceKind kind_;
};

/// Lowest retained degree for the given kind.
int lowest_degree(int m, SpaceKind kind);

/// n_hi = max(floor, n_lo + ceil(coef · |α m|^exponent)).
struct TruncationPolicy {
  int floor = 64;
  double coef = 6.0;
  double exponent = 0.5;

  [[nodiscard]] int n_hi(double alpha, int m) const;
};

class SpectralVector {
 public:
  SpectralVector(ModeSpace space, Eigen::VectorXcd coeffs);

  static SpectralVector zero(const ModeSpace& space);
  /// The basis vector Y_n^m.
  static SpectralVector unit(const ModeSpace& space, int n);

  [[nodiscard]] const ModeSpace& space() const { return space_; }
  [[nodiscard]] const Eigen::VectorXcd& coeffs() const { return coeffs_; }
  [[nodiscard]] cdouble coefficient(int n) const { return coeffs_(space_.index_of(n)); }
  [[nodiscard]] double norm() const { return coeffs_.norm(); }

 private:
  ModeSpace space_;
  Eigen::VectorXcd coeffs_;
};

/// Complex band matrix of half-bandwidth 0, 1 or 2 on a mode space.
///
/// Diagonal `k` stores entries (i, i+k) for k ≥ 0 and (i-k, i) for k < 0,
/// indexed by the smaller of the two positions.
class BandedOperator {
 public:
  BandedOperator(ModeSpace space, int bandwidth);

  [[nodiscard]] const ModeSpace& space() const { return space_; }
  [[nodiscard]] int bandwidth() const { return bandwidth_; }
  [[nodiscard]] Eigen::Index dim() const { return space_.dim(); }

  [[nodiscard]] const Eigen::VectorXcd& diagonal(int offset) const;
  Eigen::VectorXcd& diagonal(int offset);

  [[nodiscard]] cdouble operator()(Eigen::Index row, Eigen::Index col) const;
  void set(Eigen::Index row, Eigen::Index col, cdouble value);

  [[nodiscard]] Eigen::VectorXcd apply(const Eigen::VectorXcd& x) const;
  [[nodiscard]] SpectralVector apply(const SpectralVector& u) const;
  [[nodiscard]] Eigen::MatrixXcd to_dense() const;

  /// Same operator with a wider stored band (extra diagonals zero).
  [[nodiscard]] BandedOperator widened(int bandwidth) const;
  /// Conjugate transpose.
  [[nodiscard]] BandedOperator adjoint() const;
  /// Sub-slice onto a space with the same m and n_hi and a larger n_lo.
  [[nodiscard]] BandedOperator restricted(const ModeSpace& sub) const;

  [[nodiscard]] bool is_real() const;
  [[nodiscard]] bool all_finite() const;

  BandedOperator& operator+=(const BandedOperator& rhs);
  BandedOperator& operator-=(const BandedOperator& rhs);
  BandedOperator& operator*=(cdouble s);
  /// this + s·I
  [[nodiscard]] BandedOperator shifted(cdouble s) const;

  bool operator==(const BandedOperator& rhs) const;

 private:
  ModeSpace space_;
  int bandwidth_;
  std::vector<Eigen::VectorXcd> diags_;  // offsets -bandwidth .. +bandwidth
};

BandedOperator operator+(BandedOperator lhs, const BandedOperator& rhs);
BandedOperator operator-(BandedOperator lhs, const BandedOperator& rhs);
BandedOperator operator*(cdouble s, BandedOperator op);
/// Band product; throws if the result would exceed half-bandwidth 2.
BandedOperator operator*(const BandedOperator& lhs, const BandedOperator& rhs);

// --- assembly --------------------------------------------------------------

/// A_m: diagonal 2 - λ_n.
BandedOperator assemble_A(const ModeSpace& space);
/// B_{2,m}: diagonal 1 - 6/λ_n.
BandedOperator assemble_B2(const ModeSpace& space);
/// Multiplication by cosθ; the coupling out of n_hi is dropped.
BandedOperator assemble_cos(const ModeSpace& space);
/// Λ_m = M_cos (I + 6Δ⁻¹) = assemble_cos · assemble_B2.
BandedOperator assemble_Lambda(const ModeSpace& space);
/// L_{α,m} = A_m - iαm Λ_m.
BandedOperator assemble_L(const ModeSpace& space, double alpha);
/// S = I - CᵀC with C = assemble_cos; u*Su is the truncated ‖sinθ·u‖².
BandedOperator assemble_sin2_form(const ModeSpace& space);

/// Removes the Y_2^m component (|m| ∈ {1,2}); identity otherwise. Input must be on a Full space.
SpectralVector project_Q(const SpectralVector& u);
/// Keeps only the Y_2^m component (zero vector when |m| ≥ 3).
SpectralVector project_P(const SpectralVector& u);

enum class FractionalPower { MinusLaplace, MinusA };

/// Multiplies c_n by λ_n^s (MinusLaplace) or (λ_n - 2)^s (MinusA).
SpectralVector sobolev_scale(const SpectralVector& u, double s, FractionalPower which);

/// Zonal angular speed -(a / (λ_n sinθ)) dY_n^0/dθ of the n-jet flow at each θ.
/// Poles are rejected unless `pole_limits` is set, in which case the analytic limit is used.
std::vector<double> velocity_profile(int n, double amplitude, const std::vector<double>& theta_grid,
                                     bool pole_limits = false);

// --- text export -----------------------------------------------------------

/// Writes the banded text format:
///   # jetspec-banded v1 <name>
///   m <m> n_lo <n_lo> n_hi <n_hi> bandwidth <b> kind <full|reduced>
///   band <offset> <length> <re_0> <im_0> <re_1> <im_1> ...
/// one `band` line per offset from -b to +b, values printed with 17 significant digits.
void write_banded_text(std::ostream& os, const BandedOperator& op, std::string_view name);
BandedOperator read_banded_text(std::istream& is, std::string* name = nullptr);

}  // namespace jetspec
