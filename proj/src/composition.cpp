#include "contractive/composition.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "contractive/rng.hpp"

namespace contractive {

SubnetworkSpec SubnetworkSpec::from_certificate(const Certificate& cert) {
  require_square(cert.W, "SubnetworkSpec(W)");
  require_symmetric(cert.metric, "SubnetworkSpec(metric)", 1e-8);
  if (cert.metric.rows() != cert.W.rows()) {
    throw NumericsError("SubnetworkSpec: metric and W differ in size");
  }
  return SubnetworkSpec{cert.W, cert.metric, cert.g, cert};
}

InterconnectionMask InterconnectionMask::all_pairs(int p) {
  InterconnectionMask mask;
  for (int i = 1; i < p; ++i) {
    for (int j = 0; j < i; ++j) mask.trainable_blocks.emplace_back(i, j);
  }
  mask.feedback_density = 1.0;
  return mask;
}

bool InterconnectionMask::contains(int i, int j) const {
  if (i < j) std::swap(i, j);
  return std::binary_search(trainable_blocks.begin(), trainable_blocks.end(), BlockIndex{i, j});
}

void InterconnectionMask::validate(int p) const {
  if (!(feedback_density >= 0.0 && feedback_density <= 1.0)) {
    throw NumericsError("InterconnectionMask: feedback density outside [0, 1]");
  }
  for (std::size_t k = 0; k < trainable_blocks.size(); ++k) {
    const auto [i, j] = trainable_blocks[k];
    if (!(i > j) || j < 0 || i >= p) {
      throw NumericsError("InterconnectionMask: pairs must satisfy p > i > j >= 0");
    }
    if (k > 0 && !(trainable_blocks[k - 1] < trainable_blocks[k])) {
      throw NumericsError("InterconnectionMask: pairs must be sorted and unique");
    }
  }
}

std::string_view to_string(FeedbackMode m) {
  switch (m) {
    case FeedbackMode::LowerTriangular: return "lower";
    case FeedbackMode::AllBlocks: return "all";
    case FeedbackMode::Control: return "control";
  }
  return "unknown";
}

FeedbackMode feedback_mode_from_string(std::string_view s) {
  if (s == "lower") return FeedbackMode::LowerTriangular;
  if (s == "all") return FeedbackMode::AllBlocks;
  if (s == "control") return FeedbackMode::Control;
  throw std::invalid_argument("unknown feedback mode '" + std::string(s) + "'");
}

std::vector<Eigen::Index> block_offsets(const std::vector<SubnetworkSpec>& subnets) {
  std::vector<Eigen::Index> off(subnets.size() + 1, 0);
  for (std::size_t i = 0; i < subnets.size(); ++i) off[i + 1] = off[i] + subnets[i].size();
  return off;
}

namespace {

Matrix symmetric_inverse(const Matrix& m) {
  Matrix inv = m.ldlt().solve(Matrix::Identity(m.rows(), m.cols()));
  return 0.5 * (inv + inv.transpose());
}

void check_b_shape(const Matrix& b, Eigen::Index n) {
  if (b.rows() != n || b.cols() != n) {
    std::ostringstream os;
    os << "B is " << b.rows() << "x" << b.cols() << ", expected " << n << "x" << n;
    throw NumericsError(os.str());
  }
}

}  // namespace

Matrix build_L(const Matrix& b, const std::vector<SubnetworkSpec>& subnets,
               const InterconnectionMask& mask, FeedbackMode mode) {
  const auto off = block_offsets(subnets);
  const Eigen::Index n = off.back();
  check_b_shape(b, n);
  mask.validate(static_cast<int>(subnets.size()));
  Matrix l = Matrix::Zero(n, n);

  std::vector<Matrix> inverse(subnets.size());
  if (mode != FeedbackMode::Control) {
    for (std::size_t i = 0; i < subnets.size(); ++i) {
      if (!(min_eig_sym(subnets[i].metric) > 0.0)) {
        throw NumericsError("build_L: subnetwork metric is not positive definite");
      }
      inverse[i] = symmetric_inverse(subnets[i].metric);
    }
  }

  for (const auto& [i, j] : mask.trainable_blocks) {
    const Eigen::Index ni = subnets[i].size();
    const Eigen::Index nj = subnets[j].size();
    const auto bij = b.block(off[i], off[j], ni, nj);
    const auto bji = b.block(off[j], off[i], nj, ni);
    auto lij = l.block(off[i], off[j], ni, nj);
    auto lji = l.block(off[j], off[i], nj, ni);
    const Matrix& mi = subnets[i].metric;
    const Matrix& mj = subnets[j].metric;
    switch (mode) {
      case FeedbackMode::Control:
        lij = bij;
        lji = bji;
        continue;
      case FeedbackMode::LowerTriangular:
        lij = bij;
        lji = -inverse[j] * bij.transpose() * mi;
        break;
      case FeedbackMode::AllBlocks:
        lij = bij - inverse[i] * bji.transpose() * mj;
        lji = bji - inverse[j] * bij.transpose() * mi;
        break;
    }
    const Matrix lhs = mi * lij;
    const Matrix rhs = -(lji.transpose() * mj);
    const double err = (lhs - rhs).norm();
    if (!(err <= 1e-12 * (1.0 + lhs.norm() + rhs.norm()))) {
      std::ostringstream os;
      os << "build_L: M_i L_ij = -L_ji^T M_j violated by " << err << " for block (" << i << ","
         << j << ")";
      throw NumericsError(os.str());
    }
  }
  return l;
}

Matrix build_hierarchical_L(const std::map<BlockIndex, Matrix>& blocks,
                            const std::vector<SubnetworkSpec>& subnets) {
  const auto off = block_offsets(subnets);
  const auto p = static_cast<int>(subnets.size());
  Matrix l = Matrix::Zero(off.back(), off.back());
  for (const auto& [idx, blk] : blocks) {
    const auto [i, j] = idx;
    if (!(i > j) || j < 0 || i >= p) {
      throw NumericsError("build_hierarchical_L: only strictly lower blocks (i > j) allowed");
    }
    if (blk.rows() != subnets[i].size() || blk.cols() != subnets[j].size()) {
      throw NumericsError("build_hierarchical_L: block has the wrong shape");
    }
    l.block(off[i], off[j], blk.rows(), blk.cols()) = blk;
  }
  return l;
}

Matrix block_metric(const std::vector<SubnetworkSpec>& subnets, const std::vector<double>& k) {
  if (!k.empty() && k.size() != subnets.size()) {
    throw NumericsError("block_metric: need one weight per subnetwork");
  }
  const auto off = block_offsets(subnets);
  Matrix m = Matrix::Zero(off.back(), off.back());
  for (std::size_t i = 0; i < subnets.size(); ++i) {
    const double ki = k.empty() ? 1.0 : k[i];
    if (!(ki > 0.0)) throw NumericsError("block_metric: weights must be positive");
    m.block(off[i], off[i], subnets[i].size(), subnets[i].size()) = ki * subnets[i].metric;
  }
  return m;
}

Matrix block_diagonal_weights(const std::vector<SubnetworkSpec>& subnets) {
  const auto off = block_offsets(subnets);
  Matrix w = Matrix::Zero(off.back(), off.back());
  for (std::size_t i = 0; i < subnets.size(); ++i) {
    w.block(off[i], off[i], subnets[i].size(), subnets[i].size()) = subnets[i].W;
  }
  return w;
}

InterconnectionReport verify_interconnection(const Matrix& l, const Matrix& mtilde,
                                             bool general_c) {
  require_square(l, "verify_interconnection(L)");
  if (mtilde.rows() != l.rows() || mtilde.cols() != l.cols()) {
    throw NumericsError("verify_interconnection: L and M~ differ in shape");
  }
  InterconnectionReport r;
  const Matrix ml = mtilde * l;
  const Matrix q = -(ml + ml.transpose());
  r.q_norm = q.norm();
  r.scale = 1.0 + ml.norm();
  if (general_c) {
    r.min_eig_q = min_eig_sym(sym_part(q));
    r.ok = r.min_eig_q >= -1e-10 * r.scale;
  } else {
    r.min_eig_q = r.q_norm == 0.0 ? 0.0 : min_eig_sym(sym_part(q));
    r.ok = r.q_norm <= 1e-10 * r.scale;
  }
  return r;
}

std::uint64_t param_count(std::uint64_t p, std::uint64_t n_sub, std::uint64_t in_dim,
                          std::uint64_t out_dim) {
  const std::uint64_t n = p * n_sub;
  return (n * n - p * n_sub * n_sub) / 2 + in_dim * n + n * out_dim + n + out_dim;
}

InterconnectionMask apply_feedback_density(const InterconnectionMask& mask, int p, double density,
                                           std::uint64_t rng_seed) {
  if (!(density >= 0.0 && density <= 1.0)) {
    throw NumericsError("apply_feedback_density: density outside [0, 1]");
  }
  mask.validate(p);
  const double possible = 0.5 * static_cast<double>(p) * static_cast<double>(p - 1);
  auto count = static_cast<std::size_t>(std::ceil(density * possible - 1e-9));
  count = std::min(count, mask.trainable_blocks.size());
  std::vector<BlockIndex> pool = mask.trainable_blocks;
  Rng rng(rng_seed);
  rng.shuffle(pool);
  pool.resize(count);
  std::sort(pool.begin(), pool.end());
  return InterconnectionMask{std::move(pool), density};
}

RecurrentSystem ComposedNetwork::system(Activation a) const {
  RecurrentSystem sys;
  sys.W = w_tilde();
  sys.L = L;
  sys.tau = tau;
  sys.activation = a;
  return sys;
}

ComposedNetwork ComposedNetwork::with_b(const Matrix& b) const {
  ComposedNetwork out = *this;
  out.B = b;
  out.L = build_L(b, subnets, mask, mode);
  return out;
}

Vector ComposedNetwork::drive(const Vector& raw_input) const {
  if (raw_input.size() != in_dim()) throw NumericsError("drive: input has wrong dimension");
  return input_weights * raw_input + input_bias;
}

ComposedNetwork ComposedNetwork::compose(std::vector<SubnetworkSpec> subnets, const Matrix& b,
                                         InterconnectionMask mask, FeedbackMode mode,
                                         Matrix input_weights, Vector input_bias,
                                         Matrix output_weights, Vector output_bias, double tau,
                                         std::vector<double> k) {
  if (subnets.empty()) throw NumericsError("compose: need at least one subnetwork");
  if (!(tau > 0.0)) throw NumericsError("compose: tau must be positive");
  ComposedNetwork net;
  net.subnets = std::move(subnets);
  net.mask = std::move(mask);
  net.mode = mode;
  net.k = std::move(k);
  net.metric = block_metric(net.subnets, net.k);
  const Eigen::Index n = net.metric.rows();
  net.B = b;
  net.L = build_L(b, net.subnets, net.mask, mode);
  net.tau = tau;
  if (input_weights.rows() != n || input_bias.size() != n) {
    throw NumericsError("compose: input layer must have n_total rows");
  }
  if (output_weights.cols() != n || output_bias.size() != output_weights.rows()) {
    throw NumericsError("compose: output layer must have n_total columns");
  }
  net.input_weights = std::move(input_weights);
  net.input_bias = std::move(input_bias);
  net.output_weights = std::move(output_weights);
  net.output_bias = std::move(output_bias);
  return net;
}

double composed_jacobian_margin(const ComposedNetwork& net, const Vector& d) {
  if (d.size() != net.n_total()) throw NumericsError("composed_jacobian_margin: bad D size");
  Matrix j = net.w_tilde() * d.asDiagonal() + net.L;
  j.diagonal().array() -= 1.0;
  j /= net.tau;
  return max_eig_sym(sym_part(net.metric * j));
}

}  // namespace contractive
