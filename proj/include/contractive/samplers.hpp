#pragma once

#include <cstdint>
#include <string_view>
#include <stdexcept>

#include "contractive/certificates.hpp"
#include "contractive/rng.hpp"

namespace contractive {

/// Where the nonzeros of a candidate go.
enum class SparsePattern {
  ExactCount,  ///< round(density n^2) distinct positions, like scipy.sparse.random
  Bernoulli,   ///< each entry independently with probability density
};

std::string_view to_string(SparsePattern p);
SparsePattern sparse_pattern_from_string(std::string_view s);

/// Sparse rejection-sampling settings. Nonzeros are uniform in
/// [-pre_scalar, pre_scalar]; accepted draws are scaled by `post_scalar`
/// (<= 1 keeps the certificate valid).
struct SparseInitConfig {
  Eigen::Index n = 32;
  double density = 0.033;
  double pre_scalar = 30.0;
  double post_scalar = 0.2;
  std::size_t max_tries = 100000;
  std::uint64_t seed = 0;
  SparsePattern pattern = SparsePattern::ExactCount;

  void validate() const;
};

struct SparseSample {
  Matrix W;
  Certificate cert;
  std::size_t tries = 0;
};

/// Thrown when no candidate passes within max_tries.
class SamplingExhausted : public std::runtime_error {
 public:
  SamplingExhausted(std::size_t tries, const SparseInitConfig& cfg);
  std::size_t tries;
};

/// One candidate draw, diagonal zeroed afterwards. ExactCount: a partial
/// Fisher-Yates over the n^2 row-major positions picks k = round(density n^2)
/// of them, then one uniform per chosen position in pick order. Bernoulli: n^2
/// (keep, value) uniform pairs in row-major order. A value u maps to (2u - 1) * scalar.
Matrix draw_sparse_candidate(Rng& rng, Eigen::Index n, double density, double scalar,
                             SparsePattern pattern = SparsePattern::ExactCount);

/// Rejection-samples one Theorem-1 subnetwork (g = 1). Deterministic under cfg.seed.
SparseSample sample_sparse_subnet(const SparseInitConfig& cfg);

/// Same, drawing from an existing generator (used for per-subnetwork streams).
SparseSample sample_sparse_subnet(const SparseInitConfig& cfg, Rng& rng);

/// Fraction of i.i.d. candidates passing the Theorem-1 condition with g = 1.
double estimate_acceptance_rate(Eigen::Index n, double density, double scalar, std::size_t trials,
                                std::uint64_t rng_seed,
                                SparsePattern pattern = SparsePattern::ExactCount);

/// SVD-parameterized subnetwork: W = Phi^{-1} U Sigma V^T Phi.
struct SVDSubnetParams {
  Vector phi_raw;    ///< n
  Vector skew_u;     ///< n(n-1)/2, strictly lower triangle row by row
  Vector skew_v;     ///< n(n-1)/2
  Vector sigma_raw;  ///< n
  double g = 1.0;

  [[nodiscard]] Eigen::Index n() const { return phi_raw.size(); }
  [[nodiscard]] Eigen::Index flat_size() const { return 2 * n() + n() * (n() - 1); }
  void validate() const;

  static SVDSubnetParams zeros(Eigen::Index n, double g = 1.0);
  /// Phi ~ I, small random rotations, singular values spread over (0, 1/g).
  static SVDSubnetParams random(Eigen::Index n, Rng& rng, double g = 1.0);

  /// Flat layout: phi_raw, skew_u, skew_v, sigma_raw.
  [[nodiscard]] Vector flatten() const;
  static SVDSubnetParams unflatten(const Vector& flat, Eigen::Index n, double g);
};

namespace svd_constants {
inline constexpr double kSigmaEps = 1e-3;
inline constexpr double kPhiEps = 1e-4;
}  // namespace svd_constants

/// Intermediate factors kept for differentiation.
struct SVDSubnet {
  Matrix W;
  Matrix metric;  ///< Phi^2
  Vector phi;
  Matrix U;
  Matrix V;
  Vector sigma;
  Matrix skew_u;
  Matrix skew_v;
};

SVDSubnet build_svd_subnet(const SVDSubnetParams& params);

/// Chain rule through build_svd_subnet: given dLoss/dW and dLoss/dMetric
/// (metric = Phi^2, only its diagonal matters), returns the flat gradient.
Vector svd_subnet_gradient(const SVDSubnetParams& params, const SVDSubnet& built,
                           const Matrix& grad_w, const Matrix& grad_metric);

/// Certificate for an SVD subnet (Theorem 5 with P = Phi^2). Throws if the
/// check fails, which the parameterization rules out.
Certificate certify_svd_subnet(const SVDSubnetParams& params, const SVDSubnet& built);

}  // namespace contractive
