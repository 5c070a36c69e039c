#include "contractive/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include "contractive/rng.hpp"

namespace contractive {

namespace {

Matrix phi(Activation a, const Matrix& x) {
  if (a == Activation::ReLU) return x.cwiseMax(0.0);
  return x.array().tanh().matrix();
}

Matrix phi_slope(Activation a, const Matrix& x) {
  if (a == Activation::ReLU) return (x.array() > 0.0).cast<double>().matrix();
  return (1.0 - x.array().tanh().square()).matrix();
}

Matrix inverse_spd(const Matrix& m) {
  Matrix inv = m.ldlt().solve(Matrix::Identity(m.rows(), m.cols()));
  return 0.5 * (inv + inv.transpose());
}

// Adjoint of T = -Ma^{-1} X^T Mb given G = dLoss/dT.
void reflect_backward(const Matrix& g, const Matrix& x, const Matrix& ma_inv, const Matrix& mb,
                      Matrix& grad_x, Matrix& grad_ma, Matrix& grad_mb) {
  grad_x.noalias() -= mb * g.transpose() * ma_inv;
  grad_ma.noalias() += ma_inv * g * mb * x * ma_inv;
  grad_mb.noalias() -= x * ma_inv * g;
}

Matrix uniform_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double bound) {
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.uniform(-bound, bound);
  }
  return m;
}

}  // namespace

std::string_view to_string(Variant v) { return v == Variant::Sparse ? "sparse" : "svd"; }

Variant variant_from_string(std::string_view s) {
  if (s == "sparse") return Variant::Sparse;
  if (s == "svd") return Variant::SVD;
  throw std::invalid_argument("unknown variant '" + std::string(s) + "'");
}

Eigen::Index ParamLayout::n_total() const {
  return std::accumulate(sizes.begin(), sizes.end(), Eigen::Index{0});
}

ParamLayout make_layout(const std::vector<Eigen::Index>& sizes, const InterconnectionMask& mask,
                        FeedbackMode mode, Eigen::Index in_dim, Eigen::Index out_dim, bool svd) {
  mask.validate(static_cast<int>(sizes.size()));
  ParamLayout lay;
  lay.sizes = sizes;
  lay.in_dim = in_dim;
  lay.out_dim = out_dim;
  Eigen::Index at = 0;
  for (const auto& [i, j] : mask.trainable_blocks) {
    lay.b_blocks.push_back({i, j, at});
    at += sizes[i] * sizes[j];
    if (mode != FeedbackMode::LowerTriangular) {
      lay.b_blocks.push_back({j, i, at});
      at += sizes[i] * sizes[j];
    }
  }
  const Eigen::Index n = lay.n_total();
  lay.input_weights = at;
  at += n * in_dim;
  lay.input_bias = at;
  at += n;
  lay.output_weights = at;
  at += out_dim * n;
  lay.output_bias = at;
  at += out_dim;
  if (svd) {
    for (auto m : sizes) {
      lay.svd.push_back(at);
      at += 2 * m + m * (m - 1);
    }
  }
  lay.total = at;
  return lay;
}

void TrainState::validate() const {
  if (params.size() != layout.total) throw std::invalid_argument("TrainState: params/layout size");
  if (adam_m.size() != params.size() || adam_v.size() != params.size()) {
    throw std::invalid_argument("TrainState: moment vectors must match params");
  }
}

double lr_for_epoch(const OptimizerSpec& opt, int completed_epochs) {
  double lr = opt.lr;
  for (const auto& [epoch, mult] : opt.schedule) {
    if (completed_epochs >= epoch) lr *= mult;
  }
  return lr;
}

void ArchitectureSpec::validate() const {
  if (p < 1 || n_sub < 1 || in_dim < 1 || out_dim < 1) {
    throw std::invalid_argument("architecture: p, n_sub, in_dim, out_dim must be >= 1");
  }
  if (!(g > 0.0) || !(tau > 0.0) || !(alpha > 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("architecture: need g > 0, tau > 0, alpha in (0, 1]");
  }
  if (!(feedback_density >= 0.0 && feedback_density <= 1.0)) {
    throw std::invalid_argument("architecture: feedback_density must be in [0, 1]");
  }
}

std::uint64_t weight_checksum(const Matrix& w) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto* bytes = reinterpret_cast<const unsigned char*>(w.data());
  for (std::size_t i = 0; i < static_cast<std::size_t>(w.size()) * sizeof(double); ++i) {
    h = (h ^ bytes[i]) * 0x100000001b3ULL;
  }
  return h;
}

Model initialize_model(const ArchitectureSpec& arch, const OptimizerSpec& opt, std::uint64_t seed) {
  arch.validate();
  Model model;
  std::vector<SubnetworkSpec> subnets;
  std::vector<SVDSubnetParams> svd;
  for (int k = 0; k < arch.p; ++k) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(k));
    if (arch.variant == Variant::Sparse) {
      if (arch.g != 1.0) throw std::invalid_argument("architecture: sparse variant assumes g = 1");
      SparseInitConfig cfg = arch.init;
      cfg.n = arch.n_sub;
      SparseSample s = sample_sparse_subnet(cfg, rng);
      subnets.push_back(SubnetworkSpec::from_certificate(s.cert));
    } else {
      svd.push_back(SVDSubnetParams::random(arch.n_sub, rng, arch.g));
      const SVDSubnet built = build_svd_subnet(svd.back());
      subnets.push_back(SubnetworkSpec::from_certificate(certify_svd_subnet(svd.back(), built)));
    }
  }
  InterconnectionMask mask = InterconnectionMask::all_pairs(arch.p);
  if (arch.feedback_density < 1.0) {
    mask = apply_feedback_density(mask, arch.p, arch.feedback_density,
                                  Rng::stream(seed, 1000003).next());
  }
  const Eigen::Index n = arch.p * arch.n_sub;
  Rng rng = Rng::stream(seed, 1000004);
  // Linear-layer style uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every group.
  const double b_bound = 1.0 / std::sqrt(static_cast<double>(n));
  const double in_bound = 1.0 / std::sqrt(static_cast<double>(arch.in_dim));
  Matrix b = Matrix::Zero(n, n);
  const Eigen::Index m = arch.n_sub;
  for (const auto& [i, j] : mask.trainable_blocks) {
    b.block(i * m, j * m, m, m) = uniform_matrix(rng, m, m, b_bound);
    if (arch.mode != FeedbackMode::LowerTriangular) {
      b.block(j * m, i * m, m, m) = uniform_matrix(rng, m, m, b_bound);
    }
  }
  Matrix in_w = uniform_matrix(rng, n, arch.in_dim, in_bound);
  Vector in_b = uniform_matrix(rng, n, 1, in_bound);
  Matrix out_w = uniform_matrix(rng, arch.out_dim, n, b_bound);
  Vector out_b = uniform_matrix(rng, arch.out_dim, 1, b_bound);

  model.tmpl.net = ComposedNetwork::compose(std::move(subnets), b, mask, arch.mode, std::move(in_w),
                                            std::move(in_b), std::move(out_w), std::move(out_b),
                                            arch.tau);
  model.tmpl.variant = arch.variant;
  model.tmpl.activation = arch.activation;
  model.tmpl.alpha = arch.alpha;

  TrainState& st = model.state;
  st.layout = make_layout(std::vector<Eigen::Index>(arch.p, arch.n_sub), mask, arch.mode,
                          arch.in_dim, arch.out_dim, arch.variant == Variant::SVD);
  st.params = Vector::Zero(st.layout.total);
  load_params(st, model.tmpl.net, svd);
  st.adam_m = Vector::Zero(st.layout.total);
  st.adam_v = Vector::Zero(st.layout.total);
  st.optimizer = opt;
  st.lr = lr_for_epoch(opt, 0);
  st.w_checksum = weight_checksum(model.tmpl.net.w_tilde());
  return model;
}

Matrix assemble_b(const TrainState& state) {
  const ParamLayout& lay = state.layout;
  std::vector<Eigen::Index> off(lay.sizes.size() + 1, 0);
  for (std::size_t i = 0; i < lay.sizes.size(); ++i) off[i + 1] = off[i] + lay.sizes[i];
  Matrix b = Matrix::Zero(off.back(), off.back());
  for (const auto& blk : lay.b_blocks) {
    const Eigen::Index r = lay.sizes[blk.row_block];
    const Eigen::Index c = lay.sizes[blk.col_block];
    b.block(off[blk.row_block], off[blk.col_block], r, c) =
        Eigen::Map<const Matrix>(state.params.data() + blk.offset, r, c);
  }
  return b;
}

void load_params(TrainState& state, const ComposedNetwork& net,
                 const std::vector<SVDSubnetParams>& svd) {
  const ParamLayout& lay = state.layout;
  if (state.params.size() != lay.total) state.params = Vector::Zero(lay.total);
  const auto off = block_offsets(net.subnets);
  for (const auto& blk : lay.b_blocks) {
    const Eigen::Index r = lay.sizes[blk.row_block];
    const Eigen::Index c = lay.sizes[blk.col_block];
    Eigen::Map<Matrix>(state.params.data() + blk.offset, r, c) =
        net.B.block(off[blk.row_block], off[blk.col_block], r, c);
  }
  const Eigen::Index n = lay.n_total();
  Eigen::Map<Matrix>(state.params.data() + lay.input_weights, n, lay.in_dim) = net.input_weights;
  state.params.segment(lay.input_bias, n) = net.input_bias;
  Eigen::Map<Matrix>(state.params.data() + lay.output_weights, lay.out_dim, n) = net.output_weights;
  state.params.segment(lay.output_bias, lay.out_dim) = net.output_bias;
  if (!lay.svd.empty()) {
    if (svd.size() != lay.svd.size()) throw std::invalid_argument("load_params: need SVD params");
    for (std::size_t k = 0; k < svd.size(); ++k) {
      state.params.segment(lay.svd[k], svd[k].flat_size()) = svd[k].flatten();
    }
  }
}

std::vector<SVDSubnetParams> svd_params(const TrainState& state, const NetTemplate& tmpl) {
  std::vector<SVDSubnetParams> out;
  const ParamLayout& lay = state.layout;
  for (std::size_t k = 0; k < lay.svd.size(); ++k) {
    const Eigen::Index m = lay.sizes[k];
    out.push_back(SVDSubnetParams::unflatten(state.params.segment(lay.svd[k], 2 * m + m * (m - 1)),
                                             m, tmpl.net.subnets[k].g));
  }
  return out;
}

ComposedNetwork materialize(const TrainState& state, const NetTemplate& tmpl,
                            std::vector<SVDSubnet>* svd_out) {
  state.validate();
  const ParamLayout& lay = state.layout;
  ComposedNetwork net = tmpl.net;
  if (tmpl.variant == Variant::SVD) {
    const auto params = svd_params(state, tmpl);
    std::vector<SVDSubnet> built;
    for (std::size_t k = 0; k < params.size(); ++k) {
      built.push_back(build_svd_subnet(params[k]));
      net.subnets[k].W = built.back().W;
      net.subnets[k].metric = built.back().metric;
    }
    net.metric = block_metric(net.subnets, net.k);
    if (svd_out != nullptr) *svd_out = std::move(built);
  }
  const Eigen::Index n = lay.n_total();
  net.B = assemble_b(state);
  net.L = build_L(net.B, net.subnets, net.mask, net.mode);
  net.input_weights = Eigen::Map<const Matrix>(state.params.data() + lay.input_weights, n, lay.in_dim);
  net.input_bias = state.params.segment(lay.input_bias, n);
  net.output_weights =
      Eigen::Map<const Matrix>(state.params.data() + lay.output_weights, lay.out_dim, n);
  net.output_bias = state.params.segment(lay.output_bias, lay.out_dim);
  return net;
}

Batch Batch::from_sequences(const std::vector<InputSequence>& seqs, const std::vector<int>& labels) {
  if (seqs.size() != labels.size() || seqs.empty()) {
    throw std::invalid_argument("Batch: need one label per sequence and at least one sequence");
  }
  Batch b;
  b.labels = labels;
  const std::size_t steps = seqs.front().steps();
  const Eigen::Index dim = steps > 0 ? seqs.front().values.front().size() : 0;
  b.inputs.assign(steps, Matrix(dim, static_cast<Eigen::Index>(seqs.size())));
  for (std::size_t s = 0; s < seqs.size(); ++s) {
    if (seqs[s].steps() != steps) throw std::invalid_argument("Batch: unequal sequence lengths");
    for (std::size_t t = 0; t < steps; ++t) {
      if (seqs[s].values[t].size() != dim) throw std::invalid_argument("Batch: ragged input dims");
      b.inputs[t].col(static_cast<Eigen::Index>(s)) = seqs[s].values[t];
    }
  }
  return b;
}

Batch Batch::gather(const SequenceSet& set, const std::size_t* indices, std::size_t count) {
  Batch b;
  b.labels.resize(count);
  b.inputs.assign(static_cast<std::size_t>(set.steps),
                  Matrix(set.dim, static_cast<Eigen::Index>(count)));
  for (std::size_t s = 0; s < count; ++s) {
    b.labels[s] = set.labels[indices[s]];
    for (Eigen::Index t = 0; t < set.steps; ++t) {
      b.inputs[static_cast<std::size_t>(t)].col(static_cast<Eigen::Index>(s)) =
          Eigen::Map<const Eigen::VectorXf>(set.at(indices[s], t), set.dim).cast<double>();
    }
  }
  return b;
}

ForwardResult forward(const TrainState& state, const NetTemplate& tmpl, const Batch& batch) {
  ForwardResult out;
  ForwardCache& c = out.cache;
  c.net = materialize(state, tmpl, &c.svd);
  c.w_tilde = c.net.w_tilde();
  c.batch_size = batch.size();
  c.param_count = state.params.size();
  const Eigen::Index n = c.net.n_total();
  const double a = tmpl.alpha;
  const Matrix drive_w = c.net.input_weights;
  c.states.reserve(batch.inputs.size() + 1);
  c.states.emplace_back(Matrix::Zero(n, batch.size()));
  Matrix pre(n, batch.size());
  for (std::size_t t = 0; t < batch.inputs.size(); ++t) {
    const Matrix& x = c.states.back();
    if (batch.inputs[t].rows() != c.net.in_dim()) {
      throw std::invalid_argument("forward: input dimension differs from the input layer");
    }
    pre.noalias() = c.w_tilde * phi(tmpl.activation, x);
    pre.noalias() += c.net.L * x;
    pre.noalias() += drive_w * batch.inputs[t];
    pre.colwise() += c.net.input_bias;
    Matrix next = (1.0 - a) * x + a * pre;
    if (!next.allFinite()) {
      std::ostringstream os;
      os << "forward: non-finite state at step " << t << " (max |x| before step "
         << x.cwiseAbs().maxCoeff() << ")";
      throw NonFiniteError(os.str());
    }
    c.states.push_back(std::move(next));
  }
  out.logits = c.net.output_weights * c.states.back();
  out.logits.colwise() += c.net.output_bias;
  return out;
}

namespace {

Matrix softmax_columns(const Matrix& logits) {
  Matrix p = logits.rowwise() - logits.colwise().maxCoeff();
  p = p.array().exp().matrix();
  p.array().rowwise() /= p.colwise().sum().array();
  return p;
}

void check_labels(const Matrix& logits, const std::vector<int>& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != logits.cols()) {
    throw std::invalid_argument("loss: one label per logits column required");
  }
  for (int l : labels) {
    if (l < 0 || l >= logits.rows()) {
      throw std::invalid_argument("loss: label " + std::to_string(l) + " out of range");
    }
  }
}

}  // namespace

double loss(const Matrix& logits, const std::vector<int>& labels) {
  check_labels(logits, labels);
  double total = 0.0;
  for (Eigen::Index s = 0; s < logits.cols(); ++s) {
    const auto col = logits.col(s);
    const double mx = col.maxCoeff();
    const double lse = mx + std::log((col.array() - mx).exp().sum());
    total += lse - col(labels[static_cast<std::size_t>(s)]);
  }
  return total / static_cast<double>(logits.cols());
}

Vector backward(const TrainState& state, const NetTemplate& tmpl, const ForwardResult& fwd,
                const Batch& batch) {
  const ForwardCache& c = fwd.cache;
  if (c.param_count != state.params.size() || c.batch_size != batch.size() ||
      c.states.size() != batch.inputs.size() + 1) {
    throw std::invalid_argument("backward: cache does not match this state/batch");
  }
  check_labels(fwd.logits, batch.labels);
  const ParamLayout& lay = state.layout;
  const ComposedNetwork& net = c.net;
  const Eigen::Index n = net.n_total();
  const double a = tmpl.alpha;
  const auto bs = static_cast<double>(batch.size());

  Matrix dlogits = softmax_columns(fwd.logits);
  for (Eigen::Index s = 0; s < dlogits.cols(); ++s) dlogits(batch.labels[s], s) -= 1.0;
  dlogits /= bs;

  Vector grad = Vector::Zero(lay.total);
  Eigen::Map<Matrix>(grad.data() + lay.output_weights, lay.out_dim, n) =
      dlogits * c.states.back().transpose();
  grad.segment(lay.output_bias, lay.out_dim) = dlogits.rowwise().sum();

  const bool svd = tmpl.variant == Variant::SVD;
  Matrix delta = net.output_weights.transpose() * dlogits;
  Matrix grad_l = Matrix::Zero(n, n);
  Matrix grad_w = svd ? Matrix::Zero(n, n) : Matrix();
  Matrix grad_in = Matrix::Zero(n, lay.in_dim);
  Vector grad_in_b = Vector::Zero(n);
  Matrix da(n, batch.size());
  for (std::size_t t = batch.inputs.size(); t-- > 0;) {
    const Matrix& x = c.states[t];
    da = a * delta;
    grad_l.noalias() += da * x.transpose();
    grad_in.noalias() += da * batch.inputs[t].transpose();
    grad_in_b += da.rowwise().sum();
    if (svd) grad_w.noalias() += da * phi(tmpl.activation, x).transpose();
    Matrix back = c.w_tilde.transpose() * da;
    delta = (1.0 - a) * delta + phi_slope(tmpl.activation, x).cwiseProduct(back);
    delta.noalias() += net.L.transpose() * da;
  }
  Eigen::Map<Matrix>(grad.data() + lay.input_weights, n, lay.in_dim) = grad_in;
  grad.segment(lay.input_bias, n) = grad_in_b;

  // Chain rule through build_L.
  const auto off = block_offsets(net.subnets);
  const std::size_t p = net.subnets.size();
  std::vector<Matrix> grad_m(p);
  std::vector<Matrix> m_inv(p);
  for (std::size_t i = 0; i < p; ++i) {
    grad_m[i] = Matrix::Zero(net.subnets[i].size(), net.subnets[i].size());
    if (net.mode != FeedbackMode::Control) m_inv[i] = inverse_spd(net.subnets[i].metric);
  }
  auto gblock = [&](int i, int j) {
    return grad_l.block(off[i], off[j], net.subnets[i].size(), net.subnets[j].size());
  };
  auto bblock = [&](int i, int j) {
    return net.B.block(off[i], off[j], net.subnets[i].size(), net.subnets[j].size());
  };
  for (const auto& blk : lay.b_blocks) {
    const int i = blk.row_block;
    const int j = blk.col_block;
    Eigen::Map<Matrix> gb(grad.data() + blk.offset, net.subnets[i].size(), net.subnets[j].size());
    Matrix gbij = gblock(i, j);
    if (net.mode != FeedbackMode::Control) {
      // B_ij also enters L_ji = ... - M_j^{-1} B_ij^T M_i.
      reflect_backward(gblock(j, i), bblock(i, j), m_inv[j], net.subnets[i].metric, gbij,
                       grad_m[j], grad_m[i]);
    }
    gb = gbij;
  }

  if (svd) {
    const auto params = svd_params(state, tmpl);
    for (std::size_t k = 0; k < p; ++k) {
      const Eigen::Index m = net.subnets[k].size();
      const Matrix gw = grad_w.block(off[k], off[k], m, m);
      grad.segment(lay.svd[k], params[k].flat_size()) =
          svd_subnet_gradient(params[k], c.svd[k], gw, grad_m[k]);
    }
  }
  return grad;
}

void adam_step(TrainState& state, const Vector& grad) {
  state.validate();
  if (grad.size() != state.params.size()) throw std::invalid_argument("adam_step: size mismatch");
  const OptimizerSpec& o = state.optimizer;
  Vector g = grad;
  if (o.clip_norm > 0.0) {
    const double norm = g.norm();
    if (norm > o.clip_norm) g *= o.clip_norm / norm;
  }
  g += o.weight_decay * state.params;
  ++state.step_count;
  const auto t = static_cast<double>(state.step_count);
  state.adam_m = o.beta1 * state.adam_m + (1.0 - o.beta1) * g;
  state.adam_v = o.beta2 * state.adam_v + (1.0 - o.beta2) * g.cwiseAbs2();
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);
  state.params.array() -=
      state.lr * (state.adam_m.array() / c1) / ((state.adam_v.array() / c2).sqrt() + o.eps);
}

EpochMetrics train_epoch(TrainState& state, const NetTemplate& tmpl, const SequenceSet& data,
                         std::size_t batch_size, std::uint64_t seed) {
  if (data.size() == 0) throw std::invalid_argument("train_epoch: empty dataset");
  if (batch_size == 0) throw std::invalid_argument("train_epoch: batch size must be >= 1");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(state.epoch));
  rng.shuffle(order);

  EpochMetrics m;
  m.lr = state.lr;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, order.size() - start);
    const Batch batch = Batch::gather(data, order.data() + start, count);
    const ForwardResult fwd = forward(state, tmpl, batch);
    loss_sum += loss(fwd.logits, batch.labels) * static_cast<double>(count);
    for (Eigen::Index s = 0; s < fwd.logits.cols(); ++s) {
      Eigen::Index arg = 0;
      fwd.logits.col(s).maxCoeff(&arg);
      if (arg == batch.labels[s]) ++correct;
    }
    adam_step(state, backward(state, tmpl, fwd, batch));
    ++m.batches;
  }
  m.train_loss = loss_sum / static_cast<double>(data.size());
  m.train_accuracy = static_cast<double>(correct) / static_cast<double>(data.size());

  const ComposedNetwork net = materialize(state, tmpl);
  const InterconnectionReport rep = verify_interconnection(net.L, net.metric);
  m.skew_residual = rep.relative_residual();
  Rng drng = Rng::stream(seed ^ 0x5eedULL, static_cast<std::uint64_t>(state.epoch));
  m.worst_jacobian = -std::numeric_limits<double>::infinity();
  const double g = net.subnets.front().g;
  for (int k = 0; k < 10; ++k) {
    Vector d(net.n_total());
    for (Eigen::Index i = 0; i < d.size(); ++i) d(i) = drng.uniform(0.0, g);
    m.worst_jacobian = std::max(m.worst_jacobian, composed_jacobian_margin(net, d));
  }
  ++state.epoch;
  state.lr = lr_for_epoch(state.optimizer, state.epoch);

  if (net.mode != FeedbackMode::Control) {
    if (!rep.ok) {
      std::ostringstream os;
      os << "epoch " << state.epoch << ": interconnection lost skew symmetry in the metric "
         << "(relative residual " << m.skew_residual << ")";
      throw InvariantViolation(os.str());
    }
    if (!(m.worst_jacobian < 0.0)) {
      std::ostringstream os;
      os << "epoch " << state.epoch << ": composed Jacobian not negative definite in the metric "
         << "(lambda_max " << m.worst_jacobian << ")";
      throw InvariantViolation(os.str());
    }
  }
  if (tmpl.variant == Variant::Sparse && weight_checksum(net.w_tilde()) != state.w_checksum) {
    throw InvariantViolation("frozen subnetwork weights changed during training");
  }
  return m;
}

EvalMetrics evaluate(const TrainState& state, const NetTemplate& tmpl, const SequenceSet& data,
                     std::size_t batch_size) {
  EvalMetrics out;
  if (data.size() == 0) return out;
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::size_t correct = 0;
  double loss_sum = 0.0;
  for (std::size_t start = 0; start < idx.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, idx.size() - start);
    const Batch batch = Batch::gather(data, idx.data() + start, count);
    const ForwardResult fwd = forward(state, tmpl, batch);
    loss_sum += loss(fwd.logits, batch.labels) * static_cast<double>(count);
    for (Eigen::Index s = 0; s < fwd.logits.cols(); ++s) {
      Eigen::Index arg = 0;
      fwd.logits.col(s).maxCoeff(&arg);
      if (arg == batch.labels[s]) ++correct;
    }
  }
  out.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  out.loss = loss_sum / static_cast<double>(data.size());
  return out;
}

}  // namespace contractive
