#include "contractive/certificates.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "contractive/rng.hpp"

namespace contractive {

namespace {

void require_slope(double g) {
  if (!(g > 0.0) || !std::isfinite(g)) throw NumericsError("slope bound g must be positive");
}

double definiteness_threshold(const Matrix& s) { return -tol::kCertMargin * (1.0 + s.norm()); }

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace

std::string_view to_string(Theorem t) {
  switch (t) {
    case Theorem::Abs: return "abs";
    case Theorem::Symmetric: return "symmetric";
    case Theorem::PQP: return "pqp";
    case Theorem::Triangular: return "triangular";
    case Theorem::SVDCond: return "svd";
    case Theorem::Search: return "search";
  }
  return "unknown";
}

Theorem theorem_from_string(std::string_view s) {
  if (s == "abs") return Theorem::Abs;
  if (s == "symmetric") return Theorem::Symmetric;
  if (s == "pqp") return Theorem::PQP;
  if (s == "triangular") return Theorem::Triangular;
  if (s == "svd") return Theorem::SVDCond;
  if (s == "search") return Theorem::Search;
  throw std::invalid_argument("unknown theorem id '" + std::string(s) + "'");
}

Matrix abs_condition_matrix(const Matrix& w, double g) {
  require_square(w, "abs_condition_matrix");
  require_finite(w, "abs_condition_matrix");
  require_slope(g);
  Matrix a = w.cwiseAbs();
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    if (w(i, i) <= 0.0) a(i, i) = 0.0;
  }
  a *= g;
  a.diagonal().array() -= 1.0;
  return a;
}

bool satisfies_abs_condition(const Matrix& w, double g) {
  return is_hurwitz(abs_condition_matrix(w, g));
}

CertifyResult certify_abs(const Matrix& w, double g) {
  const Matrix a = abs_condition_matrix(w, g);
  const double abscissa = spectral_abscissa(a);
  if (!(abscissa < 0.0)) {
    return CertifyResult::reject("g|W| - I is not Hurwitz (max real eigenvalue " + fmt(abscissa) +
                                 ")");
  }
  auto check = [&](const Vector& p) {
    const Matrix s = p.asDiagonal() * a + a.transpose() * p.asDiagonal();
    return std::pair{max_eig_sym(s), definiteness_threshold(s)};
  };

  Vector p = solve_lyapunov(a, Matrix::Identity(a.rows(), a.cols())).diagonal();
  std::string notes = "P = diag of Lyapunov solution";
  auto [lam, threshold] = check(p);
  if (!(p.array() > 0.0).all() || !(lam < threshold)) {
    // Metzler fallback: x = -A^{-1} 1, y = -A^{-T} 1, P = diag(y / x).
    const Vector ones = Vector::Ones(a.rows());
    const auto lu = a.partialPivLu();
    const Vector x = -lu.solve(ones);
    const Vector y = -a.transpose().partialPivLu().solve(ones);
    p = y.cwiseQuotient(x);
    notes = "P = diag(y/x) Metzler construction";
    std::tie(lam, threshold) = check(p);
    if (!(p.array() > 0.0).all() || !(lam < threshold)) {
      throw CertificationError("certify_abs: diagonal metric failed verification (lambda_max " +
                               fmt(lam) + ")");
    }
  }
  Certificate cert;
  cert.theorem = Theorem::Abs;
  cert.W = w;
  cert.g = g;
  cert.metric = p.asDiagonal();
  cert.margin = -lam;
  cert.notes = std::move(notes);
  return CertifyResult::accept(std::move(cert));
}

CertifyResult certify_symmetric(const Matrix& w, double g) {
  require_symmetric(w, "certify_symmetric", 1e-10);
  require_finite(w, "certify_symmetric");
  require_slope(g);
  const Eigen::Index n = w.rows();
  const Matrix ws = sym_part(w);
  const double top = max_eig_sym(g * ws);
  if (!(top < 1.0 - tol::kCertMargin * (1.0 + g * ws.norm()))) {
    return CertifyResult::reject("gW has eigenvalue " + fmt(top) + ", not < 1");
  }
  // Rate split beta = 2 lambda; gamma^2 must stay positive, so beta < 2.
  const double beta = std::min(0.5 * (1.0 - top), 1.0);
  const double gamma2 = g / (2.0 * (2.0 - beta));
  const double gamma = std::sqrt(gamma2);
  const Matrix id = Matrix::Identity(n, n);
  const Matrix s = symmetric_sqrt(id / (4.0 * gamma2) - ws);
  const Matrix r = s / gamma + id / (2.0 * gamma2);
  const Matrix proof_metric = gamma2 * r * r;
  const Matrix recon = r - proof_metric;
  const double roundoff = 64.0 * std::numeric_limits<double>::epsilon() *
                          (r.norm() + proof_metric.norm());
  const double err = (ws - recon).norm();
  if (!(err <= 1e-8 * ws.norm() + roundoff)) {
    throw CertificationError("certify_symmetric: W - (R - gamma^2 RR) residual " + fmt(err));
  }
  Matrix metric = proof_metric.inverse();
  metric = 0.5 * (metric + metric.transpose());

  Certificate cert;
  cert.theorem = Theorem::Symmetric;
  cert.W = w;
  cert.g = g;
  cert.metric = std::move(metric);
  cert.proof_metric = 0.5 * (proof_metric + proof_metric.transpose());
  cert.margin = 1.0 - top;
  cert.notes = "beta = " + fmt(beta) + "; metric = (gamma^2 RR)^{-1}";
  return CertifyResult::accept(std::move(cert));
}

Certificate certify_pqp(const DiagonalMatrix& p1, const Matrix& q, const DiagonalMatrix& p2,
                        double g) {
  require_slope(g);
  require_symmetric(q, "certify_pqp(Q)");
  if (p1.size() != q.rows() || p2.size() != q.rows()) {
    throw NumericsError("certify_pqp: P1, Q, P2 sizes differ");
  }
  if (!p1.is_positive() || !p2.is_positive()) {
    throw NumericsError("certify_pqp: P1 and P2 must have positive diagonals");
  }
  const Matrix qs = sym_part(q);
  if (!(min_eig_sym(qs) > tol::kCertMargin * (1.0 + qs.norm()))) {
    throw NumericsError("certify_pqp: Q is not positive definite");
  }
  Certificate cert;
  cert.theorem = Theorem::PQP;
  cert.W = -(p1.diag.asDiagonal() * qs * p2.diag.asDiagonal());
  cert.g = g;
  const Matrix inner = p1.diag.asDiagonal() * qs * p1.diag.asDiagonal();
  Matrix metric = inner.inverse();
  cert.metric = 0.5 * (metric + metric.transpose());
  // sym(M(WD - I)) = -M - P1^{-1} P2 D <= -M.
  cert.margin = min_eig_sym(cert.metric);
  cert.notes = "metric = (P1 Q P1)^{-1}";
  return cert;
}

CertifyResult certify_triangular(const Matrix& w, double g, double eps) {
  require_square(w, "certify_triangular");
  require_finite(w, "certify_triangular");
  require_slope(g);
  if (!(eps > 0.0 && eps < 1.0)) throw NumericsError("certify_triangular: eps must be in (0,1)");
  const Eigen::Index n = w.rows();
  const bool lower = w.triangularView<Eigen::StrictlyUpper>().toDenseMatrix().isZero(0.0);
  const bool upper = w.triangularView<Eigen::StrictlyLower>().toDenseMatrix().isZero(0.0);
  if (!lower && !upper) throw NumericsError("certify_triangular: W is not triangular");

  const double top = (g * w.diagonal()).maxCoeff() - 1.0;
  if (!(top < -tol::kCertMargin)) {
    return CertifyResult::reject("some g W_ii >= 1 (max g W_ii - 1 = " + fmt(top) + ")");
  }
  for (int attempt = 0; attempt <= 8; ++attempt, eps *= 0.1) {
    Vector gamma(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto power = static_cast<double>(lower ? i : n - 1 - i);
      gamma(i) = std::pow(eps, power);
    }
    if (!(gamma.array() > 0.0).all()) break;
    const Matrix similar = gamma.asDiagonal() * w * gamma.cwiseInverse().asDiagonal();
    // sym(g|Gamma W Gamma^{-1}|' - I) < 0 bounds sym(Gamma (WD - I) Gamma^{-1}) for all D.
    const Matrix s = sym_part(abs_condition_matrix(similar, g));
    const double lam = max_eig_sym(s);
    if (lam < definiteness_threshold(s)) {
      Certificate cert;
      cert.theorem = Theorem::Triangular;
      cert.W = w;
      cert.g = g;
      cert.metric = gamma.cwiseAbs2().asDiagonal();
      cert.margin = -lam;
      cert.notes = "Gamma_i = eps^i with eps = " + fmt(eps);
      return CertifyResult::accept(std::move(cert));
    }
  }
  return CertifyResult::reject("eps search exhausted without a verified diagonal metric");
}

CertifyResult certify_svd_condition(const Matrix& w, double g, const DiagonalMatrix& p) {
  require_square(w, "certify_svd_condition");
  require_finite(w, "certify_svd_condition");
  require_slope(g);
  if (p.size() != w.rows() || !p.is_positive()) {
    throw NumericsError("certify_svd_condition: P must be a positive diagonal of matching size");
  }
  // The condition is homogeneous in P; check it at unit scale.
  const Vector unit = p.diag / p.diag.maxCoeff();
  const auto pd = unit.asDiagonal();
  Matrix s = g * g * (w.transpose() * pd * w);
  s.diagonal() -= unit;
  s = sym_part(s);
  const double lam = max_eig_sym(s);
  if (!(lam < definiteness_threshold(s))) {
    return CertifyResult::reject("g^2 W^T P W - P has eigenvalue " + fmt(lam) + ", not < 0");
  }
  Certificate cert;
  cert.theorem = Theorem::SVDCond;
  cert.W = w;
  cert.g = g;
  cert.metric = p.dense();
  cert.margin = -lam;
  cert.notes = "metric = P";
  return CertifyResult::accept(std::move(cert));
}

DSet DSet::box_vertices(Eigen::Index n, double g) {
  if (n > 20) throw NumericsError("DSet::box_vertices: dimension too large");
  DSet out;
  const std::uint64_t count = std::uint64_t{1} << n;
  out.vertices.reserve(count);
  for (std::uint64_t mask = 0; mask < count; ++mask) {
    Vector d(n);
    for (Eigen::Index i = 0; i < n; ++i) d(i) = (mask >> i) & 1U ? g : 0.0;
    out.vertices.emplace_back(std::move(d));
  }
  return out;
}

void DSet::validate(Eigen::Index n, double g) const {
  if (vertices.empty()) throw NumericsError("DSet: empty");
  for (const auto& v : vertices) {
    if (v.size() != n) throw NumericsError("DSet: vertex of wrong dimension");
    if ((v.diag.array() < 0.0).any() || (v.diag.array() > g).any()) {
      throw NumericsError("DSet: vertex entries must lie in [0, g]");
    }
  }
}

double differential_margin(const Matrix& metric, const Matrix& w, const Vector& d) {
  Matrix j = w * d.asDiagonal();
  j.diagonal().array() -= 1.0;
  return max_eig_sym(sym_part(metric * j));
}

namespace {

// max over D of lambda_max(sym(M(WD - I))) plus the strictness margin.
double feasibility_score(const Matrix& m, const std::vector<Matrix>& jacobians) {
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& j : jacobians) {
    const Matrix s = sym_part(m * j);
    worst = std::max(worst, max_eig_sym(s) + tol::kCertMargin * (1.0 + s.norm()));
  }
  return worst;
}

struct CholeskyGrid {
  Eigen::Index n;

  // Parameters: for i >= 1, log-diagonal t_i, then strictly lower entries.
  [[nodiscard]] int dims() const { return static_cast<int>(n - 1 + n * (n - 1) / 2); }

  [[nodiscard]] Matrix metric(const std::vector<double>& theta) const {
    Matrix l = Matrix::Zero(n, n);
    l(0, 0) = 1.0;
    std::size_t k = 0;
    for (Eigen::Index i = 1; i < n; ++i) l(i, i) = std::exp(theta[k++]);
    for (Eigen::Index i = 1; i < n; ++i) {
      for (Eigen::Index j = 0; j < i; ++j) l(i, j) = theta[k++];
    }
    Matrix m = l * l.transpose();
    return m * (static_cast<double>(n) / m.trace());
  }

  [[nodiscard]] bool is_log_diag(int k) const { return k < n - 1; }
};

}  // namespace

FeasibilityResult constant_metric_feasible(const Matrix& w, double g, const DSet& dset, int grid,
                                           const std::vector<Matrix>& seeds) {
  require_square(w, "constant_metric_feasible");
  require_finite(w, "constant_metric_feasible");
  require_slope(g);
  const Eigen::Index n = w.rows();
  if (n > 4) throw NumericsError("constant_metric_feasible: grid search supports n <= 4 only");
  if (grid < 2) throw NumericsError("constant_metric_feasible: grid resolution must be >= 2");
  dset.validate(n, g);

  std::vector<Matrix> jacobians;
  jacobians.reserve(dset.vertices.size());
  for (const auto& d : dset.vertices) {
    Matrix j = w * d.diag.asDiagonal();
    j.diagonal().array() -= 1.0;
    jacobians.push_back(std::move(j));
  }

  FeasibilityResult result;
  result.best_score = std::numeric_limits<double>::infinity();
  auto consider = [&](const Matrix& m) {
    ++result.candidates_evaluated;
    const double score = feasibility_score(m, jacobians);
    if (score < result.best_score) {
      result.best_score = score;
      if (score < 0.0) {
        result.feasible = true;
        result.metric = m;
      }
    }
    return score;
  };

  consider(Matrix::Identity(n, n));
  for (const auto& seed : seeds) {
    require_symmetric(seed, "constant_metric_feasible(seed)", 1e-8);
    if (seed.rows() != n || !(min_eig_sym(sym_part(seed)) > 0.0)) continue;
    consider(sym_part(seed) * (static_cast<double>(n) / seed.trace()));
    if (result.feasible) return result;
  }
  if (result.feasible || n == 1) return result;

  const CholeskyGrid param{n};
  const int dims = param.dims();
  constexpr double kBudget = 2.0e5;
  const int res = std::max(
      3, std::min(grid, static_cast<int>(std::floor(std::pow(kBudget, 1.0 / dims)))));
  constexpr double kLogSpan = 4.6;  // diagonal ratios in [1e-2, 1e2]
  constexpr double kOffSpan = 4.0;
  auto axis = [&](int k, int idx) {
    const double span = param.is_log_diag(k) ? kLogSpan : kOffSpan;
    return -span + 2.0 * span * idx / (res - 1);
  };

  // Keep the best few grid points for refinement.
  constexpr std::size_t kKeep = 4;
  std::vector<std::pair<double, std::vector<double>>> best;
  std::vector<int> index(static_cast<std::size_t>(dims), 0);
  std::vector<double> theta(static_cast<std::size_t>(dims), 0.0);
  while (true) {
    for (int k = 0; k < dims; ++k) theta[k] = axis(k, index[k]);
    const double score = consider(param.metric(theta));
    if (result.feasible) return result;
    if (best.size() < kKeep || score < best.back().first) {
      best.emplace_back(score, theta);
      std::sort(best.begin(), best.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      if (best.size() > kKeep) best.pop_back();
    }
    int k = 0;
    while (k < dims && ++index[k] == res) index[k++] = 0;
    if (k == dims) break;
  }

  // Pattern search around the best grid points.
  for (auto& [score, point] : best) {
    double step = 2.0 * kOffSpan / (res - 1);
    int evals = 0;
    while (step > 1e-7 && evals < 4000) {
      bool improved = false;
      for (int k = 0; k < dims && !improved; ++k) {
        for (double dir : {+1.0, -1.0}) {
          auto trial = point;
          trial[k] += dir * step;
          ++evals;
          const double s = consider(param.metric(trial));
          if (result.feasible) return result;
          if (s < score) {
            score = s;
            point = std::move(trial);
            improved = true;
            break;
          }
        }
      }
      if (!improved) step *= 0.5;
    }
  }
  return result;
}

ValidationReport validate_certificate(const Certificate& cert, std::size_t samples,
                                      std::uint64_t rng_seed, int vertex_limit) {
  require_square(cert.W, "validate_certificate(W)");
  require_symmetric(cert.metric, "validate_certificate(metric)", 1e-8);
  if (cert.metric.rows() != cert.W.rows()) {
    throw NumericsError("validate_certificate: metric and W differ in size");
  }
  const Eigen::Index n = cert.W.rows();
  ValidationReport report;
  report.worst_margin = -std::numeric_limits<double>::infinity();
  auto check = [&](const Vector& d) {
    const double m = differential_margin(cert.metric, cert.W, d);
    if (m > report.worst_margin) {
      report.worst_margin = m;
      report.worst_d = d;
    }
    if (!(m < 0.0)) ++report.violations;
  };
  if (n <= vertex_limit) {
    for (const auto& v : DSet::box_vertices(n, cert.g).vertices) {
      check(v.diag);
      ++report.vertices_checked;
    }
  }
  Rng rng(rng_seed);
  Vector d(n);
  for (std::size_t s = 0; s < samples; ++s) {
    for (Eigen::Index i = 0; i < n; ++i) d(i) = rng.uniform(0.0, cert.g);
    check(d);
    ++report.samples_checked;
  }
  return report;
}

}  // namespace contractive
