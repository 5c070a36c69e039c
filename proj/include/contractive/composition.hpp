#pragma once

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "contractive/certificates.hpp"
#include "contractive/dynamics.hpp"

namespace contractive {

/// One certified module of a network of networks.
struct SubnetworkSpec {
  Matrix W;
  Matrix metric;
  double g = 1.0;
  Certificate cert;

  [[nodiscard]] Eigen::Index size() const { return W.rows(); }
  static SubnetworkSpec from_certificate(const Certificate& cert);
};

using BlockIndex = std::pair<int, int>;

/// Unordered subnetwork pairs (stored as (i, j) with i > j) that carry feedback.
struct InterconnectionMask {
  std::vector<BlockIndex> trainable_blocks;
  double feedback_density = 1.0;

  static InterconnectionMask all_pairs(int p);
  [[nodiscard]] bool contains(int i, int j) const;
  void validate(int p) const;
};

/// How B becomes L.
enum class FeedbackMode {
  LowerTriangular,  ///< B_ij (i > j) trainable; L_ij = B_ij, L_ji = -M_j^{-1} B_ij^T M_i
  AllBlocks,        ///< both B_ij and B_ji; L_ij = B_ij - M_i^{-1} B_ji^T M_j
  Control,          ///< L = B on both off-diagonal blocks of every pair, unconstrained
};

std::string_view to_string(FeedbackMode m);
FeedbackMode feedback_mode_from_string(std::string_view s);

/// Subnetwork sizes to block offsets (size p + 1).
std::vector<Eigen::Index> block_offsets(const std::vector<SubnetworkSpec>& subnets);

/// Builds the interconnection matrix from B; blocks outside the mask and all
/// diagonal blocks are zero. Outside Control mode the result satisfies
/// M_i L_ij = -L_ji^T M_j, checked to 1e-12 relative.
Matrix build_L(const Matrix& b, const std::vector<SubnetworkSpec>& subnets,
               const InterconnectionMask& mask,
               FeedbackMode mode = FeedbackMode::LowerTriangular);

/// Block lower-triangular (feedforward) interconnection from explicit blocks.
Matrix build_hierarchical_L(const std::map<BlockIndex, Matrix>& blocks,
                            const std::vector<SubnetworkSpec>& subnets);

/// BlockDiag(k_1 M_1, ..., k_p M_p); empty k means all ones.
Matrix block_metric(const std::vector<SubnetworkSpec>& subnets, const std::vector<double>& k = {});

/// BlockDiag(W_1, ..., W_p).
Matrix block_diagonal_weights(const std::vector<SubnetworkSpec>& subnets);

struct InterconnectionReport {
  double q_norm = 0.0;         ///< |M L + L^T M|_F
  double scale = 0.0;          ///< 1 + |M L|_F
  double min_eig_q = 0.0;      ///< lambda_min(sym(Q)), general-C mode only
  bool ok = false;

  [[nodiscard]] double relative_residual() const { return q_norm / scale; }
};

/// Q = -(M L + L^T M). With `general_c` false (C = 0) requires
/// |Q| <= 1e-10 (1 + |M L|); otherwise requires sym(Q) >= -1e-10 (1 + |M L|).
InterconnectionReport verify_interconnection(const Matrix& l, const Matrix& mtilde,
                                             bool general_c = false);

/// Trainable scalars of a p x n_sub Sparse Combo Net with lower-triangular B:
/// (n^2 - p n_sub^2)/2 + in n + n out + n + out, n = p n_sub.
std::uint64_t param_count(std::uint64_t p, std::uint64_t n_sub, std::uint64_t in_dim,
                          std::uint64_t out_dim);

/// Keeps ceil(density * p(p-1)/2) pairs of `mask`, sampled uniformly without
/// replacement; deterministic under the seed.
InterconnectionMask apply_feedback_density(const InterconnectionMask& mask, int p, double density,
                                           std::uint64_t rng_seed);

/// A network of networks: certified subnetworks, feedback, and I/O layers.
struct ComposedNetwork {
  std::vector<SubnetworkSpec> subnets;
  InterconnectionMask mask;
  FeedbackMode mode = FeedbackMode::LowerTriangular;
  std::vector<double> k;  ///< block metric weights
  Matrix B;
  Matrix L;
  Matrix metric;          ///< block metric M~
  double tau = 1.0;
  Matrix input_weights;   ///< n_total x in_dim
  Vector input_bias;      ///< n_total
  Matrix output_weights;  ///< out_dim x n_total
  Vector output_bias;     ///< out_dim

  [[nodiscard]] Eigen::Index n_total() const { return metric.rows(); }
  [[nodiscard]] Eigen::Index in_dim() const { return input_weights.cols(); }
  [[nodiscard]] Eigen::Index out_dim() const { return output_weights.rows(); }
  [[nodiscard]] int p() const { return static_cast<int>(subnets.size()); }
  [[nodiscard]] Matrix w_tilde() const { return block_diagonal_weights(subnets); }
  [[nodiscard]] RecurrentSystem system(Activation a = Activation::ReLU) const;

  /// Same network with a new B (L rebuilt).
  [[nodiscard]] ComposedNetwork with_b(const Matrix& b) const;
  /// Input layer applied to a raw input vector.
  [[nodiscard]] Vector drive(const Vector& raw_input) const;

  static ComposedNetwork compose(std::vector<SubnetworkSpec> subnets, const Matrix& b,
                                 InterconnectionMask mask, FeedbackMode mode, Matrix input_weights,
                                 Vector input_bias, Matrix output_weights, Vector output_bias,
                                 double tau = 1.0, std::vector<double> k = {});
};

/// lambda_max(sym(M~ J)) for J = (-I + W~ D + L) / tau at the diagonal D.
double composed_jacobian_margin(const ComposedNetwork& net, const Vector& d);

}  // namespace contractive
