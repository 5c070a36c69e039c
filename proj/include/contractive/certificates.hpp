#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "contractive/numerics.hpp"

namespace contractive {

/// Which sufficient contraction condition a certificate was issued under.
enum class Theorem {
  Abs,         ///< g|W| - I Hurwitz (Metzler, hence diagonally stable)
  Symmetric,   ///< W = W^T, gW < I
  PQP,         ///< W = -P1 Q P2
  Triangular,  ///< gW - I triangular and Hurwitz
  SVDCond,     ///< g^2 W^T P W - P < 0
  Search,      ///< constant metric found numerically over the D-box vertices
};

std::string_view to_string(Theorem t);
Theorem theorem_from_string(std::string_view s);

/// Proof object binding a weight matrix to a contraction metric.
///
/// `metric` is always expressed for the x-form dynamics
/// tau x' = -x + W phi(x) + u, i.e. for every diagonal D with entries in
/// [0, g], sym(metric (W D - I)) is negative definite. `margin` is the slack
/// of the theorem's own defining inequality as it was checked.
struct Certificate {
  Theorem theorem = Theorem::Abs;
  Matrix W;
  double g = 1.0;
  Matrix metric;
  double margin = 0.0;
  std::string notes;
  /// Metric in which the proof was carried out when it differs from `metric`
  /// (the symmetric case works with the y-form Jacobian DW - I).
  std::optional<Matrix> proof_metric;

  [[nodiscard]] Eigen::Index n() const { return W.rows(); }
};

/// Outcome of a certify_* call: a certificate or the reason it was refused.
struct CertifyResult {
  std::optional<Certificate> certificate;
  std::string reason;

  explicit operator bool() const { return certificate.has_value(); }
  static CertifyResult accept(Certificate c) { return {std::move(c), {}}; }
  static CertifyResult reject(std::string why) { return {std::nullopt, std::move(why)}; }
};

/// Internal failure of a constructive proof step (never a plain rejection).
class CertificationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// g|W|' - I, where |W|' is the elementwise magnitude with nonpositive
/// diagonal entries set to zero.
Matrix abs_condition_matrix(const Matrix& w, double g);

/// Acceptance predicate of certify_abs without building the metric.
bool satisfies_abs_condition(const Matrix& w, double g);

CertifyResult certify_abs(const Matrix& w, double g);
CertifyResult certify_symmetric(const Matrix& w, double g);
/// Constructive: W = -P1 Q P2 is contracting in (P1 Q P1)^{-1}. Throws on bad inputs.
Certificate certify_pqp(const DiagonalMatrix& p1, const Matrix& q, const DiagonalMatrix& p2,
                        double g = 1.0);
CertifyResult certify_triangular(const Matrix& w, double g, double eps = 0.1);
CertifyResult certify_svd_condition(const Matrix& w, double g, const DiagonalMatrix& p);

/// Candidate activation-slope matrices D.
struct DSet {
  std::vector<DiagonalMatrix> vertices;

  /// All 2^n corners of [0, g]^n.
  static DSet box_vertices(Eigen::Index n, double g);
  void validate(Eigen::Index n, double g) const;
};

struct FeasibilityResult {
  bool feasible = false;
  /// Witness normalized to trace n (empty when infeasible).
  Matrix metric;
  /// Best value of max_D [lambda_max(sym(M(WD - I))) + margin] found; < 0 iff feasible.
  double best_score = 0.0;
  std::size_t candidates_evaluated = 0;
};

/// Searches for one constant metric M > 0 with sym(M(WD - I)) < 0 for every D
/// in `dset`. Grid over a Cholesky parameterization (resolution `grid` per
/// free parameter, capped by a total budget), then a pattern search from the
/// best grid points. `seeds` are checked first. n <= 4 only.
FeasibilityResult constant_metric_feasible(const Matrix& w, double g, const DSet& dset,
                                           int grid = 200, const std::vector<Matrix>& seeds = {});

struct ValidationReport {
  std::size_t samples_checked = 0;
  std::size_t vertices_checked = 0;
  /// Largest lambda_max(sym(M(WD - I))) seen; negative for a valid certificate.
  double worst_margin = 0.0;
  Vector worst_d;
  std::size_t violations = 0;

  [[nodiscard]] bool valid() const { return violations == 0; }
};

/// Empirically checks the differential condition of a certificate: random
/// diagonal D with entries uniform in [0, g], plus every vertex of [0, g]^n
/// when n <= vertex_limit (the condition is affine in D, so the vertices
/// carry the exact worst case).
ValidationReport validate_certificate(const Certificate& cert, std::size_t samples,
                                      std::uint64_t rng_seed, int vertex_limit = 12);

/// Checks one (metric, W, g) triple at a given D.
double differential_margin(const Matrix& metric, const Matrix& w, const Vector& d);

}  // namespace contractive
