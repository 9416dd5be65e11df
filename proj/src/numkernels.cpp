#include "jetspec/numkernels.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <numbers>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <complex>
#define lapack_complex_float std::complex<float>
#define lapack_complex_double std::complex<double>
#include <lapacke.h>

#include "jetspec/errors.hpp"

namespace jetspec::numkernels {

namespace {

using Eigen::Index;
using Eigen::MatrixXcd;

void check_square(Index rows, Index cols, const char* what) {
  if (rows != cols)
    throw ValidationError(std::string(what) + " needs a square matrix, got " + std::to_string(rows) + "x" +
                          std::to_string(cols));
}

void check_finite(const MatrixXcd& m, const char* what) {
  if (!m.allFinite()) throw ValidationError(std::string(what) + ": matrix has non-finite entries");
}

void check_finite(const BandedOperator& op, const char* what) {
  if (!op.all_finite()) throw ValidationError(std::string(what) + ": operator has non-finite entries");
}

// General band storage, column major: entry (i, j) at ab[ku + i - j + j * ldab].
std::vector<lapack_complex_double> general_band(const BandedOperator& op, int& ldab) {
  const int b = op.bandwidth();
  const auto n = static_cast<int>(op.dim());
  ldab = 2 * b + 1;
  std::vector<lapack_complex_double> ab(static_cast<std::size_t>(ldab) * n, lapack_complex_double(0.0, 0.0));
  for (int k = -b; k <= b; ++k) {
    const auto& d = op.diagonal(k);
    for (Index p = 0; p < d.size(); ++p) {
      const auto i = static_cast<int>(k >= 0 ? p : p - k);
      const auto j = static_cast<int>(k >= 0 ? p + k : p);
      ab[static_cast<std::size_t>(b + i - j + j * ldab)] = d(p);
    }
  }
  return ab;
}

// Hermitian upper band storage: entry (i, j), i ≤ j, at ab[kd + i - j + j * ldab].
std::vector<lapack_complex_double> hermitian_band(const BandedOperator& op, int kd) {
  const auto n = static_cast<int>(op.dim());
  const int ldab = kd + 1;
  std::vector<lapack_complex_double> ab(static_cast<std::size_t>(ldab) * n, lapack_complex_double(0.0, 0.0));
  for (int k = 0; k <= op.bandwidth(); ++k) {
    const auto& d = op.diagonal(k);
    for (Index p = 0; p < d.size(); ++p) {
      const auto i = static_cast<int>(p);
      const auto j = static_cast<int>(p + k);
      ab[static_cast<std::size_t>(kd + i - j + j * ldab)] = d(p);
    }
  }
  return ab;
}

void check_hermitian(const BandedOperator& h) {
  double scale = 0.0;
  for (int k = -h.bandwidth(); k <= h.bandwidth(); ++k) scale = std::max(scale, h.diagonal(k).cwiseAbs().maxCoeff());
  double defect = h.diagonal(0).imag().cwiseAbs().maxCoeff();
  for (int k = 1; k <= h.bandwidth(); ++k)
    defect = std::max(defect, (h.diagonal(k) - h.diagonal(-k).conjugate()).cwiseAbs().maxCoeff());
  if (defect > 1e-12 * std::max(1.0, scale))
    throw ValidationError("matrix is not Hermitian (defect " + std::to_string(defect) + ")");
}

// Singular values of a square banded matrix, descending.
std::vector<double> banded_singular_values(const BandedOperator& op) {
  const auto n = static_cast<int>(op.dim());
  if (op.bandwidth() == 0) {
    std::vector<double> s(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) s[static_cast<std::size_t>(i)] = std::abs(op.diagonal(0)(i));
    std::sort(s.begin(), s.end(), std::greater<>());
    return s;
  }
  int ldab = 0;
  auto ab = general_band(op, ldab);
  const int b = op.bandwidth();
  std::vector<double> d(static_cast<std::size_t>(n));
  std::vector<double> e(static_cast<std::size_t>(std::max(1, n - 1)));
  lapack_complex_double dummy{0.0, 0.0};
  lapack_int info = LAPACKE_zgbbrd(LAPACK_COL_MAJOR, 'N', n, n, 0, b, b, ab.data(), ldab, d.data(), e.data(),
                                   &dummy, 1, &dummy, 1, &dummy, 1);
  if (info != 0) throw NumericalError("zgbbrd failed with info=" + std::to_string(info));
  double ddummy = 0.0;
  info = LAPACKE_dbdsqr(LAPACK_COL_MAJOR, 'U', n, 0, 0, 0, d.data(), e.data(), &ddummy, 1, &ddummy, 1, &ddummy, 1);
  if (info > 0)
    throw NumericalError("bidiagonal SVD did not converge: " + std::to_string(info) +
                         " superdiagonals failed to reach zero");
  if (info < 0) throw NumericalError("dbdsqr rejected argument " + std::to_string(-info));
  return d;
}

// Largest eigenvalue of a Hermitian positive semidefinite operator, by Lanczos
// with full reorthogonalization from a fixed seeded start vector. Stops when the
// Ritz residual is at most rel times the Ritz value. Returns a negative value if
// that does not happen within max_steps.
double lanczos_max_eig(Index n, const std::function<void(Eigen::VectorXcd&)>& apply, double rel, int max_steps) {
  const auto steps = static_cast<Index>(std::min<Index>(n, max_steps));
  MatrixXcd V(n, steps + 1);
  Rng rng(0x6c616e637a6f73ULL);
  V.col(0) = rng.complex_vector(n);
  V.col(0).normalize();
  std::vector<double> alpha;
  std::vector<double> beta;
  Eigen::VectorXcd w(n);
  for (Index j = 0; j < steps; ++j) {
    w = V.col(j);
    apply(w);
    alpha.push_back(V.col(j).dot(w).real());
    for (int pass = 0; pass < 2; ++pass) w -= V.leftCols(j + 1) * (V.leftCols(j + 1).adjoint() * w);
    const double bj = w.norm();

    const auto k = static_cast<Index>(alpha.size());
    const Eigen::VectorXd diag = Eigen::Map<const Eigen::VectorXd>(alpha.data(), k);
    const Eigen::VectorXd sub = Eigen::Map<const Eigen::VectorXd>(beta.data(), k - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    if (es.info() != Eigen::Success) return -1.0;
    const double theta = es.eigenvalues()(k - 1);
    const double residual = bj * std::abs(es.eigenvectors()(k - 1, k - 1));
    if (!std::isfinite(theta) || !std::isfinite(bj)) return -1.0;
    if (theta > 0.0 && (residual <= rel * theta || bj <= std::numeric_limits<double>::epsilon() * theta))
      return theta;
    if (bj == 0.0) return -1.0;
    beta.push_back(bj);
    V.col(j + 1) = w / bj;
  }
  return -1.0;
}

constexpr int kLanczosSteps = 80;
constexpr Index kDirectMaxDim = 200;

// Banded LU of a square operator, for repeated solves with T and Tᴴ.
class BandedLu {
 public:
  explicit BandedLu(const BandedOperator& op)
      : n_(static_cast<int>(op.dim())), b_(op.bandwidth()), ldab_(3 * b_ + 1) {
    // zgbtrf layout: kl extra rows on top for fill-in.
    ab_.assign(static_cast<std::size_t>(ldab_) * n_, lapack_complex_double(0.0, 0.0));
    for (int k = -b_; k <= b_; ++k) {
      const auto& d = op.diagonal(k);
      for (Index p = 0; p < d.size(); ++p) {
        const auto i = static_cast<int>(k >= 0 ? p : p - k);
        const auto j = static_cast<int>(k >= 0 ? p + k : p);
        ab_[static_cast<std::size_t>(2 * b_ + i - j + j * ldab_)] = d(p);
      }
    }
    ipiv_.resize(static_cast<std::size_t>(n_));
    const lapack_int info = LAPACKE_zgbtrf(LAPACK_COL_MAJOR, n_, n_, b_, b_, ab_.data(), ldab_, ipiv_.data());
    if (info < 0) throw NumericalError("zgbtrf rejected argument " + std::to_string(-info));
    singular_ = info > 0;
  }

  [[nodiscard]] bool singular() const { return singular_; }

  void solve(char trans, Eigen::VectorXcd& v) {
    const lapack_int e =
        LAPACKE_zgbtrs(LAPACK_COL_MAJOR, trans, n_, b_, b_, 1, ab_.data(), ldab_, ipiv_.data(), v.data(), n_);
    if (e != 0) throw NumericalError("zgbtrs failed with info=" + std::to_string(e));
  }

 private:
  int n_;
  int b_;
  int ldab_;
  std::vector<lapack_complex_double> ab_;
  std::vector<lapack_int> ipiv_;
  bool singular_ = false;
};

// Banded Cholesky B = UᴴU of a Hermitian positive definite operator.
class BandedCholesky {
 public:
  explicit BandedCholesky(const BandedOperator& op)
      : n_(static_cast<int>(op.dim())), kd_(op.bandwidth()), ab_(hermitian_band(op, kd_)) {
    const lapack_int info = LAPACKE_zpbtrf(LAPACK_COL_MAJOR, 'U', n_, kd_, ab_.data(), kd_ + 1);
    if (info < 0) throw NumericalError("zpbtrf rejected argument " + std::to_string(-info));
    positive_ = info == 0;
  }

  [[nodiscard]] bool positive_definite() const { return positive_; }

  // v ← U⁻¹ v (trans 'N') or U⁻ᴴ v (trans 'C').
  void solve_factor(char trans, Eigen::VectorXcd& v) const {
    const lapack_int e =
        LAPACKE_ztbtrs(LAPACK_COL_MAJOR, 'U', trans, 'N', n_, kd_, 1, ab_.data(), kd_ + 1, v.data(), n_);
    if (e != 0) throw NumericalError("ztbtrs failed with info=" + std::to_string(e));
  }

  void solve(Eigen::VectorXcd& v) const {
    solve_factor('C', v);
    solve_factor('N', v);
  }

 private:
  int n_;
  int kd_;
  std::vector<lapack_complex_double> ab_;
  bool positive_ = false;
};

// Bisection for the boundary of a monotone predicate with pred(lo) true and
// pred(hi) false, down to the given bracket width.
template <class Pred>
double bisect_boundary(double lo, double hi, double width, Pred pred) {
  for (int it = 0; it < 200 && hi - lo > width; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (pred(mid) ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double bisection_width(Tolerance tol, double scale) {
  return std::max(1e-2 * tol.rel(), 4.0 * std::numeric_limits<double>::epsilon()) * scale;
}

// σ_min by Lanczos on (TᴴT - ℓ²)⁻¹ with ℓ < σ_min. Negative if not converged.
double lanczos_min_singular_value(const BandedOperator& op, double lower_bound, double rel) {
  if (lower_bound > 0.0 && op.bandwidth() <= 1) {
    BandedOperator gram = op.adjoint() * op;
    gram.diagonal(0).array() -= lower_bound * lower_bound;
    const BandedCholesky chol(gram);
    if (chol.positive_definite()) {
      const double theta = lanczos_max_eig(
          op.dim(), [&](Eigen::VectorXcd& v) { chol.solve(v); }, rel, kLanczosSteps);
      if (theta > 0.0) return std::sqrt(lower_bound * lower_bound + 1.0 / theta);
    }
  }
  BandedLu lu(op);
  if (lu.singular()) return 0.0;
  const double theta = lanczos_max_eig(
      op.dim(),
      [&](Eigen::VectorXcd& v) {
        lu.solve('C', v);
        lu.solve('N', v);
      },
      rel, kLanczosSteps);
  return theta > 0.0 ? 1.0 / std::sqrt(theta) : -1.0;
}

// --- Padé scaling and squaring ---------------------------------------------

constexpr std::array<double, 4> kPade3 = {120.0, 60.0, 12.0, 1.0};
constexpr std::array<double, 6> kPade5 = {30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0};
constexpr std::array<double, 8> kPade7 = {17297280.0, 8648640.0, 1995840.0, 277200.0,
                                          25200.0,    1512.0,    56.0,      1.0};
constexpr std::array<double, 10> kPade9 = {17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
                                           2162160.0,     110880.0,     3960.0,       90.0,        1.0};
constexpr std::array<double, 14> kPade13 = {64764752532480000.0,
                                            32382376266240000.0,
                                            7771770303897600.0,
                                            1187353796428800.0,
                                            129060195264000.0,
                                            10559470521600.0,
                                            670442572800.0,
                                            33522128640.0,
                                            1323241920.0,
                                            40840800.0,
                                            960960.0,
                                            16380.0,
                                            182.0,
                                            1.0};
// Largest 1-norms for which each degree meets double-precision backward error.
constexpr std::array<double, 5> kTheta = {1.495585217958292e-2, 2.539398330063230e-1, 9.504178996162932e-1,
                                          2.097847961257068, 5.371920351148152};

template <std::size_t K>
MatrixXcd pade_low(const MatrixXcd& a, const std::array<double, K>& b) {
  const Index n = a.rows();
  const MatrixXcd id = MatrixXcd::Identity(n, n);
  const MatrixXcd a2 = a * a;
  MatrixXcd u_sum = b[K - 1] * id;
  MatrixXcd v_sum = b[K - 2] * id;
  // Horner in A² over odd (U) and even (V) coefficients.
  for (int k = static_cast<int>(K) - 3; k >= 0; k -= 2) {
    u_sum = a2 * u_sum + b[static_cast<std::size_t>(k)] * id;
    if (k >= 1) v_sum = a2 * v_sum + b[static_cast<std::size_t>(k - 1)] * id;
  }
  const MatrixXcd u = a * u_sum;
  return (v_sum - u).partialPivLu().solve(v_sum + u);
}

MatrixXcd pade13(const MatrixXcd& a) {
  const auto& b = kPade13;
  const Index n = a.rows();
  const MatrixXcd id = MatrixXcd::Identity(n, n);
  const MatrixXcd a2 = a * a;
  const MatrixXcd a4 = a2 * a2;
  const MatrixXcd a6 = a4 * a2;
  const MatrixXcd u_inner = a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2);
  const MatrixXcd u = a * (u_inner + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * id);
  const MatrixXcd v = a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * id;
  return (v - u).partialPivLu().solve(v + u);
}

MatrixXcd square_repeatedly(MatrixXcd e, int s) {
  for (int i = 0; i < s; ++i) e = e * e;
  return e;
}

double one_norm(const MatrixXcd& a) { return a.cwiseAbs().colwise().sum().maxCoeff(); }

}  // namespace

Tolerance::Tolerance(double rel) : rel_(rel) {
  if (!(rel >= 1e-14 && rel <= 1e-2))
    throw ValidationError("tolerance " + std::to_string(rel) + " outside [1e-14, 1e-2]");
}

double min_singular_value(const BandedOperator& T, Tolerance tol, double lower_bound) {
  check_finite(T, "min_singular_value");
  if (!(lower_bound >= 0.0) || !std::isfinite(lower_bound))
    throw ValidationError("lower bound on the smallest singular value must be finite and nonnegative");
  if (T.dim() > kDirectMaxDim && T.bandwidth() > 0) {
    const double s = lanczos_min_singular_value(T, lower_bound, tol.rel());
    if (s >= 0.0) return s;
  }
  return banded_singular_values(T).back();
}

double min_singular_value_bidiagonal(const BandedOperator& T) {
  check_finite(T, "min_singular_value_bidiagonal");
  return banded_singular_values(T).back();
}

double min_singular_value(const Eigen::MatrixXcd& T, Tolerance /*tol*/) {
  check_square(T.rows(), T.cols(), "min_singular_value");
  check_finite(T, "min_singular_value");
  if (T.size() == 0) throw ValidationError("min_singular_value of an empty matrix");
  Eigen::BDCSVD<MatrixXcd> svd(T);
  if (svd.info() != Eigen::Success) throw NumericalError("dense SVD did not converge");
  return svd.singularValues()(svd.singularValues().size() - 1);
}

double operator_norm(const BandedOperator& M, Tolerance /*tol*/) {
  check_finite(M, "operator_norm");
  return banded_singular_values(M).front();
}

double operator_norm(const Eigen::MatrixXcd& M, Tolerance /*tol*/) {
  check_finite(M, "operator_norm");
  if (M.size() == 0) return 0.0;
  Eigen::BDCSVD<MatrixXcd> svd(M);
  if (svd.info() != Eigen::Success) throw NumericalError("dense SVD did not converge");
  return svd.singularValues()(0);
}

double hermitian_min_eig(const Eigen::MatrixXcd& H, Tolerance /*tol*/) {
  check_square(H.rows(), H.cols(), "hermitian_min_eig");
  check_finite(H, "hermitian_min_eig");
  if (H.size() == 0) throw ValidationError("hermitian_min_eig of an empty matrix");
  const double scale = H.cwiseAbs().maxCoeff();
  const double defect = (H - H.adjoint()).cwiseAbs().maxCoeff();
  if (defect > 1e-12 * std::max(1.0, scale))
    throw ValidationError("matrix is not Hermitian (defect " + std::to_string(defect) + ")");
  Eigen::SelfAdjointEigenSolver<MatrixXcd> es(H, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericalError("Hermitian eigensolver did not converge");
  return es.eigenvalues()(0);
}

double hermitian_min_eig(const BandedOperator& H, Tolerance tol) {
  check_finite(H, "hermitian_min_eig");
  check_hermitian(H);
  if (H.dim() > kDirectMaxDim) {
    // λ_min = sup{τ : H - τI positive definite}, bracketed by Gershgorin discs.
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (Index i = 0; i < H.dim(); ++i) {
      double radius = 0.0;
      for (Index j = std::max<Index>(0, i - H.bandwidth()); j <= std::min(H.dim() - 1, i + H.bandwidth()); ++j)
        if (j != i) radius += std::abs(H(i, j));
      lo = std::min(lo, H(i, i).real() - radius);
      hi = std::max(hi, H(i, i).real() + radius);
    }
    const double spread = std::max(hi - lo, std::numeric_limits<double>::min());
    lo -= spread;
    hi = std::min(hi, H.diagonal(0).real().minCoeff()) + spread * 1e-3;
    const auto definite = [&](double tau) { return BandedCholesky(H.shifted(-tau)).positive_definite(); };
    if (!definite(lo) || definite(hi)) throw NumericalError("Hermitian eigenvalue bracket is inconsistent");
    return bisect_boundary(lo, hi, bisection_width(tol, std::max(std::abs(lo), std::abs(hi))), definite);
  }
  const auto n = static_cast<int>(H.dim());
  const int kd = H.bandwidth();
  auto ab = hermitian_band(H, kd);
  lapack_complex_double dummy{0.0, 0.0};
  double w_dummy = 0.0;
  std::vector<double> w(static_cast<std::size_t>(n));
  std::vector<lapack_int> ifail(static_cast<std::size_t>(n));
  lapack_int found = 0;
  const double abstol = 2.0 * LAPACKE_dlamch('S');
  const lapack_int info = LAPACKE_zhbevx(LAPACK_COL_MAJOR, 'N', 'I', 'U', n, kd, ab.data(), kd + 1, &dummy, 1,
                                         w_dummy, w_dummy, 1, 1, abstol, &found, w.data(), &dummy, 1, ifail.data());
  if (info != 0 || found != 1) throw NumericalError("zhbevx failed with info=" + std::to_string(info));
  return w[0];
}

double pencil_max_eig(const BandedOperator& A, const BandedOperator& B, Tolerance tol) {
  if (!(A.space() == B.space())) throw ValidationError("pencil operators live on different mode spaces");
  check_finite(A, "pencil_max_eig");
  check_finite(B, "pencil_max_eig");
  check_hermitian(A);
  check_hermitian(B);
  const auto n = static_cast<int>(A.dim());
  if (A.dim() > kDirectMaxDim) {
    if (!BandedCholesky(B).positive_definite())
      throw ValidationError("pencil right-hand operator is not positive definite");
    // λ_max = inf{τ : τB - A positive definite}.
    const auto definite = [&](double tau) {
      BandedOperator g = tau * B.widened(std::max(A.bandwidth(), B.bandwidth()));
      g -= A;
      return BandedCholesky(g).positive_definite();
    };
    double hi = 1.0;
    double lo = 0.0;
    if (definite(hi)) {
      while (definite(hi / 2.0) && hi > std::numeric_limits<double>::min()) hi /= 2.0;
      lo = hi / 2.0;
    } else {
      do {
        lo = hi;
        hi *= 2.0;
        if (!std::isfinite(hi)) throw NumericalError("pencil eigenvalue bracket diverged");
      } while (!definite(hi));
    }
    return bisect_boundary(lo, hi, bisection_width(tol, hi), [&](double tau) { return !definite(tau); });
  }
  // zhbgvx requires ka ≥ kb.
  const int kb = B.bandwidth();
  const int ka = std::max(A.bandwidth(), kb);
  auto ab = hermitian_band(A.widened(ka), ka);
  auto bb = hermitian_band(B, kb);
  lapack_complex_double dummy{0.0, 0.0};
  std::vector<double> w(static_cast<std::size_t>(n));
  std::vector<lapack_int> ifail(static_cast<std::size_t>(n));
  lapack_int found = 0;
  const double abstol = 2.0 * LAPACKE_dlamch('S');
  const lapack_int info =
      LAPACKE_zhbgvx(LAPACK_COL_MAJOR, 'N', 'I', 'U', n, ka, kb, ab.data(), ka + 1, bb.data(), kb + 1, &dummy, 1,
                     0.0, 0.0, n, n, abstol, &found, w.data(), &dummy, 1, ifail.data());
  if (info > n) throw ValidationError("pencil right-hand operator is not positive definite");
  if (info != 0 || found != 1) throw NumericalError("zhbgvx failed with info=" + std::to_string(info));
  return w[0];
}

Eigen::VectorXcd solve(const BandedOperator& T, const Eigen::VectorXcd& b) {
  check_finite(T, "solve");
  if (b.size() != T.dim()) throw ValidationError("right-hand side length does not match operator dimension");
  BandedLu lu(T);
  if (lu.singular()) throw NumericalError("banded solve: matrix is singular");
  Eigen::VectorXcd x = b;
  lu.solve('N', x);
  return x;
}

Eigen::MatrixXcd propagator(const Eigen::MatrixXcd& L, double t, Tolerance tol) {
  check_square(L.rows(), L.cols(), "propagator");
  check_finite(L, "propagator");
  if (!(t >= 0.0) || !std::isfinite(t)) throw ValidationError("propagator time must be finite and nonnegative");
  const Index n = L.rows();
  if (t == 0.0 || n == 0) return MatrixXcd::Identity(n, n);

  const MatrixXcd a = t * L;
  const double norm = one_norm(a);
  MatrixXcd e;
  int s = 0;
  if (norm <= kTheta[0]) {
    e = pade_low(a, kPade3);
  } else if (norm <= kTheta[1]) {
    e = pade_low(a, kPade5);
  } else if (norm <= kTheta[2]) {
    e = pade_low(a, kPade7);
  } else if (norm <= kTheta[3]) {
    e = pade_low(a, kPade9);
  } else {
    s = std::max(0, static_cast<int>(std::ceil(std::log2(norm / kTheta[4]))));
    e = square_repeatedly(pade13(std::ldexp(1.0, -s) * a), s);
  }
  const MatrixXcd check = square_repeatedly(pade13(std::ldexp(1.0, -(s + 1)) * a), s + 1);
  const double scale = e.colwise().norm().maxCoeff();
  const double gap = (e - check).norm();
  if (!std::isfinite(gap) || gap > tol.rel() * scale)
    throw NumericalError("matrix exponential failed its accuracy check: discrepancy " + std::to_string(gap) +
                         " vs allowed " + std::to_string(tol.rel() * scale) + " (t=" + std::to_string(t) +
                         ", squarings=" + std::to_string(s) + ")");
  return e;
}

// --- random inputs ---------------------------------------------------------

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double phi = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(phi);
  has_spare_ = true;
  return r * std::cos(phi);
}

cdouble Rng::complex_normal() {
  const double re = normal();
  const double im = normal();
  return {re, im};
}

Eigen::VectorXcd Rng::complex_vector(Index n) {
  Eigen::VectorXcd v(n);
  for (Index i = 0; i < n; ++i) v(i) = complex_normal();
  return v;
}

Eigen::MatrixXcd Rng::complex_matrix(Index rows, Index cols) {
  MatrixXcd m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = complex_normal();
  return m;
}

// --- worker pool -----------------------------------------------------------

int worker_count() {
  if (const char* env = std::getenv("JETSPEC_WORKERS"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1 || v > 4096)
      throw ValidationError(std::string("JETSPEC_WORKERS must be a positive integer, got '") + env + "'");
    return static_cast<int>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  if (n == 0) return;
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(worker_count()), n);
  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::size_t err_index = n;
  std::exception_ptr err;
  auto run = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(err_mutex);
        if (i < err_index) {
          err_index = i;
          err = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace jetspec::numkernels
