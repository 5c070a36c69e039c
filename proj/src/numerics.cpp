#include "contractive/numerics.hpp"

#include <array>
#include <cmath>
#include <complex>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace contractive {

namespace {

std::string shape_of(const Matrix& a) {
  std::ostringstream os;
  os << a.rows() << "x" << a.cols();
  return os.str();
}

// Pade approximant numerator/denominator pieces: e^A ~ (V - U)^{-1} (V + U).
void pade3(const Matrix& a, Matrix& u, Matrix& v) {
  constexpr std::array<double, 4> b = {120.0, 60.0, 12.0, 1.0};
  const auto id = Matrix::Identity(a.rows(), a.cols());
  const Matrix a2 = a * a;
  u.noalias() = a * (b[3] * a2 + b[1] * id);
  v = b[2] * a2 + b[0] * id;
}

void pade5(const Matrix& a, Matrix& u, Matrix& v) {
  constexpr std::array<double, 6> b = {30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0};
  const auto id = Matrix::Identity(a.rows(), a.cols());
  const Matrix a2 = a * a;
  const Matrix a4 = a2 * a2;
  u.noalias() = a * (b[5] * a4 + b[3] * a2 + b[1] * id);
  v = b[4] * a4 + b[2] * a2 + b[0] * id;
}

void pade7(const Matrix& a, Matrix& u, Matrix& v) {
  constexpr std::array<double, 8> b = {17297280.0, 8648640.0, 1995840.0, 277200.0,
                                       25200.0,    1512.0,    56.0,      1.0};
  const auto id = Matrix::Identity(a.rows(), a.cols());
  const Matrix a2 = a * a;
  const Matrix a4 = a2 * a2;
  const Matrix a6 = a4 * a2;
  u.noalias() = a * (b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * id);
  v = b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * id;
}

void pade9(const Matrix& a, Matrix& u, Matrix& v) {
  constexpr std::array<double, 10> b = {17643225600.0, 8821612800.0, 2075673600.0, 302702400.0,
                                        30270240.0,    2162160.0,    110880.0,     3960.0,
                                        90.0,          1.0};
  const auto id = Matrix::Identity(a.rows(), a.cols());
  const Matrix a2 = a * a;
  const Matrix a4 = a2 * a2;
  const Matrix a6 = a4 * a2;
  const Matrix a8 = a6 * a2;
  u.noalias() = a * (b[9] * a8 + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * id);
  v = b[8] * a8 + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * id;
}

void pade13(const Matrix& a, Matrix& u, Matrix& v) {
  constexpr std::array<double, 14> b = {
      64764752532480000.0, 32382376266240000.0, 7771770303897600.0, 1187353796428800.0,
      129060195264000.0,   10559470521600.0,    670442572800.0,     33522128640.0,
      1323241920.0,        40840800.0,          960960.0,           16380.0,
      182.0,               1.0};
  const auto id = Matrix::Identity(a.rows(), a.cols());
  const Matrix a2 = a * a;
  const Matrix a4 = a2 * a2;
  const Matrix a6 = a4 * a2;
  Matrix inner = b[13] * a6 + b[11] * a4 + b[9] * a2;
  u.noalias() = a * (a6 * inner + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * id);
  inner = b[12] * a6 + b[10] * a4 + b[8] * a2;
  v = a6 * inner + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * id;
}

double one_norm(const Matrix& a) { return a.cwiseAbs().colwise().sum().maxCoeff(); }

}  // namespace

void require_square(const Matrix& a, const char* what) {
  if (a.rows() < 1 || a.rows() != a.cols()) {
    throw NumericsError(std::string(what) + ": expected a non-empty square matrix, got " +
                        shape_of(a));
  }
}

void require_finite(const Matrix& a, const char* what) {
  if (!a.allFinite()) throw NumericsError(std::string(what) + ": non-finite entries");
}

void require_symmetric(const Matrix& s, const char* what, double rel_tol) {
  require_square(s, what);
  const double asym = (s - s.transpose()).norm();
  if (!(asym <= rel_tol * s.norm())) {
    std::ostringstream os;
    os << what << ": matrix is not symmetric (|S - S^T| = " << asym << ")";
    throw NumericsError(os.str());
  }
}

Matrix sym_part(const Matrix& a) {
  require_square(a, "sym_part");
  return 0.5 * (a + a.transpose());
}

double max_eig_sym(const Matrix& s) {
  require_symmetric(s, "max_eig_sym");
  if (s.rows() == 1) return s(0, 0);
  Eigen::SelfAdjointEigenSolver<Matrix> es(s, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericsError("max_eig_sym: eigensolver did not converge");
  return es.eigenvalues()(es.eigenvalues().size() - 1);
}

double min_eig_sym(const Matrix& s) {
  require_symmetric(s, "min_eig_sym");
  if (s.rows() == 1) return s(0, 0);
  Eigen::SelfAdjointEigenSolver<Matrix> es(s, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericsError("min_eig_sym: eigensolver did not converge");
  return es.eigenvalues()(0);
}

double spectral_abscissa(const Matrix& a) {
  require_square(a, "spectral_abscissa");
  require_finite(a, "spectral_abscissa");
  if (a.rows() == 1) return a(0, 0);
  Eigen::EigenSolver<Matrix> es(a, false);
  if (es.info() != Eigen::Success) {
    throw NumericsError("spectral_abscissa: eigensolver did not converge");
  }
  return es.eigenvalues().real().maxCoeff();
}

bool is_hurwitz(const Matrix& a, double tol) { return spectral_abscissa(a) < -tol; }

bool is_negative_definite(const Matrix& s, double margin) {
  return max_eig_sym(s) < -margin * (1.0 + s.norm());
}

Matrix solve_lyapunov(const Matrix& a, const Matrix& q) {
  require_square(a, "solve_lyapunov");
  require_symmetric(q, "solve_lyapunov(Q)", 1e-10);
  if (q.rows() != a.rows()) throw NumericsError("solve_lyapunov: A and Q differ in size");
  if (!is_hurwitz(a)) {
    throw NumericsError("solve_lyapunov: A is not Hurwitz, no positive-definite solution");
  }
  const Eigen::Index n = a.rows();
  using CMatrix = Eigen::MatrixXcd;
  Eigen::ComplexSchur<Matrix> schur(a);
  if (schur.info() != Eigen::Success) throw NumericsError("solve_lyapunov: Schur form failed");
  const CMatrix& t = schur.matrixT();
  const CMatrix& z = schur.matrixU();

  // T^H Y + Y T = -C with C = Z^H R Z, solved column by column.
  auto solve_triangular = [&](const Matrix& rhs) {
    const CMatrix c = z.adjoint() * rhs.cast<std::complex<double>>() * z;
    CMatrix y = CMatrix::Zero(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index i = 0; i < n; ++i) {
        std::complex<double> acc = -c(i, j);
        for (Eigen::Index k = 0; k < i; ++k) acc -= std::conj(t(k, i)) * y(k, j);
        for (Eigen::Index k = 0; k < j; ++k) acc -= y(i, k) * t(k, j);
        y(i, j) = acc / (std::conj(t(i, i)) + t(j, j));
      }
    }
    Matrix m = (z * y * z.adjoint()).real();
    return Matrix(0.5 * (m + m.transpose()));
  };

  Matrix m = solve_triangular(q);
  const double qn = q.norm();
  Matrix residual = a.transpose() * m + m * a + q;
  if (residual.norm() > 1e-12 * qn) {
    // One step of refinement on the residual equation.
    m += solve_triangular(residual);
    residual = a.transpose() * m + m * a + q;
  }
  if (!(residual.norm() <= 1e-8 * qn) || !m.allFinite()) {
    std::ostringstream os;
    os << "solve_lyapunov: residual " << residual.norm() << " exceeds 1e-8 |Q|";
    throw NumericsError(os.str());
  }
  return m;
}

Matrix matrix_exp(const Matrix& a) {
  require_square(a, "matrix_exp");
  require_finite(a, "matrix_exp");
  const double norm = one_norm(a);
  Matrix u;
  Matrix v;
  int squarings = 0;
  // Higham (2005) theta_m bounds for the 1-norm in double precision.
  if (norm < 1.495585217958292e-2) {
    pade3(a, u, v);
  } else if (norm < 2.539398330063230e-1) {
    pade5(a, u, v);
  } else if (norm < 9.504178996162932e-1) {
    pade7(a, u, v);
  } else if (norm < 2.097847961257068e0) {
    pade9(a, u, v);
  } else {
    constexpr double theta13 = 5.371920351148152e0;
    squarings = std::max(0, static_cast<int>(std::ceil(std::log2(norm / theta13))));
    if (squarings > 1000) throw NumericsError("matrix_exp: norm too large, result overflows");
    pade13(std::ldexp(1.0, -squarings) * a, u, v);
  }
  Matrix result = (v - u).partialPivLu().solve(v + u);
  for (int k = 0; k < squarings; ++k) result = result * result;
  if (!result.allFinite()) throw NumericsError("matrix_exp: overflow");
  return result;
}

Matrix matrix_exp_frechet(const Matrix& a, const Matrix& e) {
  require_square(a, "matrix_exp_frechet");
  if (e.rows() != a.rows() || e.cols() != a.cols()) {
    throw NumericsError("matrix_exp_frechet: direction has the wrong shape");
  }
  const Eigen::Index n = a.rows();
  const double en = one_norm(e);
  if (en == 0.0) return Matrix::Zero(n, n);
  // Scale E so it does not drive the squaring count of the block matrix.
  const double an = one_norm(a);
  const double scale = an > 0.0 ? an / en : 1.0 / en;
  Matrix block = Matrix::Zero(2 * n, 2 * n);
  block.topLeftCorner(n, n) = a;
  block.bottomRightCorner(n, n) = a;
  block.topRightCorner(n, n) = scale * e;
  const Matrix eb = matrix_exp(block);
  return eb.topRightCorner(n, n) / scale;
}

Matrix symmetric_sqrt(const Matrix& s, double rel_tol) {
  require_symmetric(s, "symmetric_sqrt");
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (s + s.transpose()));
  if (es.info() != Eigen::Success) throw NumericsError("symmetric_sqrt: eigensolver failed");
  Vector lambda = es.eigenvalues();
  const double floor = -rel_tol * std::max(1.0, s.norm());
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (lambda(i) < floor) {
      std::ostringstream os;
      os << "symmetric_sqrt: negative eigenvalue " << lambda(i);
      throw NumericsError(os.str());
    }
    lambda(i) = std::sqrt(std::max(0.0, lambda(i)));
  }
  const Matrix& vecs = es.eigenvectors();
  Matrix r = vecs * lambda.asDiagonal() * vecs.transpose();
  return 0.5 * (r + r.transpose());
}

Matrix skew_from_lower(const Vector& params, Eigen::Index n) {
  if (params.size() != n * (n - 1) / 2) {
    throw NumericsError("skew_from_lower: expected n(n-1)/2 parameters");
  }
  Matrix k = Matrix::Zero(n, n);
  Eigen::Index idx = 0;
  for (Eigen::Index i = 1; i < n; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) {
      k(i, j) = params(idx);
      k(j, i) = -params(idx);
      ++idx;
    }
  }
  return k;
}

Vector skew_lower_gradient(const Matrix& g) {
  const Eigen::Index n = g.rows();
  Vector out(n * (n - 1) / 2);
  Eigen::Index idx = 0;
  for (Eigen::Index i = 1; i < n; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) out(idx++) = g(i, j) - g(j, i);
  }
  return out;
}

}  // namespace contractive
