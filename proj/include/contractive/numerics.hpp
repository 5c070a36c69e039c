#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace contractive {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Positive (or merely finite) diagonal matrix stored by its entries.
/// Houses the diagonal metrics P, D, Gamma, Sigma, Phi.
struct DiagonalMatrix {
  Vector diag;

  DiagonalMatrix() = default;
  explicit DiagonalMatrix(Vector d) : diag(std::move(d)) {}

  [[nodiscard]] Eigen::Index size() const { return diag.size(); }
  [[nodiscard]] Matrix dense() const { return diag.asDiagonal(); }
  [[nodiscard]] bool is_positive() const { return diag.size() > 0 && (diag.array() > 0.0).all(); }
};

/// Raised on malformed input (shape, symmetry, definiteness) or solver failure.
class NumericsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace tol {
/// Default relative tolerance for numerical identities.
inline constexpr double kRelative = 1e-9;
/// Strict definiteness margin: "X < 0" means lambda_max(X) < -kCertMargin * (1 + |X|).
inline constexpr double kCertMargin = 1e-7;
/// Symmetry check tolerance, relative to the Frobenius norm.
inline constexpr double kSymmetry = 1e-10;
}  // namespace tol

void require_square(const Matrix& a, const char* what);
void require_finite(const Matrix& a, const char* what);
void require_symmetric(const Matrix& s, const char* what, double rel_tol = tol::kSymmetry);

/// (A + A^T) / 2.
Matrix sym_part(const Matrix& a);

/// Largest eigenvalue of a symmetric matrix.
double max_eig_sym(const Matrix& s);
/// Smallest eigenvalue of a symmetric matrix.
double min_eig_sym(const Matrix& s);

/// max Re(lambda_i(A)).
double spectral_abscissa(const Matrix& a);

/// True iff every eigenvalue of A has real part < -tol.
bool is_hurwitz(const Matrix& a, double tol = 0.0);

/// True iff lambda_max(S) < -kCertMargin * (1 + |S|_F) for symmetric S.
bool is_negative_definite(const Matrix& s, double margin = tol::kCertMargin);

/// Solves A^T M + M A = -Q for symmetric M. A must be Hurwitz.
///
/// Uses a complex Schur (Bartels-Stewart) reduction, then checks the residual
/// |A^T M + M A + Q| <= 1e-8 |Q|.
Matrix solve_lyapunov(const Matrix& a, const Matrix& q);

/// e^A by scaling and squaring with a diagonal Pade approximant of degree
/// 3, 5, 7, 9 or 13 selected from the 1-norm.
Matrix matrix_exp(const Matrix& a);

/// Frechet derivative of the exponential: d/dt e^{A + tE} at t = 0.
Matrix matrix_exp_frechet(const Matrix& a, const Matrix& e);

/// Symmetric R with R R = S for symmetric positive semidefinite S.
/// Eigenvalues in (-tol |S|, 0) are clamped to zero; anything below throws.
Matrix symmetric_sqrt(const Matrix& s, double rel_tol = 1e-10);

/// Skew-symmetric n x n matrix from its strictly-lower-triangular entries,
/// packed row by row: (1,0), (2,0), (2,1), (3,0), ...
Matrix skew_from_lower(const Vector& params, Eigen::Index n);
/// Inverse of skew_from_lower's packing applied to an arbitrary matrix:
/// returns G_ij - G_ji for i > j (the gradient of a scalar through skew_from_lower).
Vector skew_lower_gradient(const Matrix& g);

}  // namespace contractive
