#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "contractive/composition.hpp"
#include "contractive/data.hpp"
#include "contractive/samplers.hpp"

namespace contractive {

enum class Variant { Sparse, SVD };
std::string_view to_string(Variant v);
Variant variant_from_string(std::string_view s);

/// Raised when a stability invariant breaks during training (CLI exit code 3).
class InvariantViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite activations in a forward pass.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fixed structure the trainable parameters are poured into. In Sparse mode
/// net.subnets are frozen; in SVD mode they are rebuilt from the parameters.
struct NetTemplate {
  ComposedNetwork net;
  Variant variant = Variant::Sparse;
  Activation activation = Activation::ReLU;
  double alpha = 1.0;  ///< dt / tau of the training recurrence
};

/// Where each trainable group lives in the flat parameter vector.
struct ParamLayout {
  struct Block {
    int row_block = 0;
    int col_block = 0;
    Eigen::Index offset = 0;
  };
  std::vector<Eigen::Index> sizes;  ///< subnetwork sizes
  std::vector<Block> b_blocks;      ///< trainable B blocks, in mask order
  Eigen::Index in_dim = 0;
  Eigen::Index out_dim = 0;
  Eigen::Index input_weights = 0;   ///< offsets, column-major
  Eigen::Index input_bias = 0;
  Eigen::Index output_weights = 0;
  Eigen::Index output_bias = 0;
  std::vector<Eigen::Index> svd;    ///< per-subnet SVD parameter offset (SVD mode)
  Eigen::Index total = 0;

  [[nodiscard]] Eigen::Index n_total() const;
};

/// Lower mode: one block (i, j) per masked pair; All/Control: (i, j) then (j, i).
ParamLayout make_layout(const std::vector<Eigen::Index>& sizes, const InterconnectionMask& mask,
                        FeedbackMode mode, Eigen::Index in_dim, Eigen::Index out_dim, bool svd);

struct OptimizerSpec {
  double lr = 1e-3;
  double weight_decay = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<std::pair<int, double>> schedule{{90, 0.1}, {140, 0.1}};
  double clip_norm = 0.0;  ///< global-norm clip; 0 disables
};

struct TrainState {
  ParamLayout layout;
  Vector params;
  Vector adam_m;
  Vector adam_v;
  std::uint64_t step_count = 0;
  int epoch = 0;  ///< completed epochs
  double lr = 1e-3;
  OptimizerSpec optimizer;
  std::uint64_t w_checksum = 0;  ///< FNV-1a of the frozen W blocks (Sparse mode)

  void validate() const;
};

/// Learning rate after `completed_epochs` epochs.
double lr_for_epoch(const OptimizerSpec& opt, int completed_epochs);

struct ArchitectureSpec {
  Variant variant = Variant::Sparse;
  int p = 4;
  Eigen::Index n_sub = 16;
  Eigen::Index in_dim = 28;
  Eigen::Index out_dim = 10;
  SparseInitConfig init{16, 0.4, 0.4, 1.0, 100000, 0};  ///< n is replaced by n_sub
  double g = 1.0;
  double feedback_density = 1.0;
  FeedbackMode mode = FeedbackMode::LowerTriangular;
  double tau = 1.0;
  double alpha = 1.0;
  Activation activation = Activation::ReLU;

  void validate() const;
};

struct Model {
  NetTemplate tmpl;
  TrainState state;
};

/// Samples/initialises subnetworks, mask, B and I/O layers deterministically
/// from `seed` (subnetwork k uses stream k, so it does not depend on p).
Model initialize_model(const ArchitectureSpec& arch, const OptimizerSpec& opt, std::uint64_t seed);

/// FNV-1a over the bytes of W~.
std::uint64_t weight_checksum(const Matrix& w);

/// Network with the current parameters (L rebuilt from B).
ComposedNetwork materialize(const TrainState& state, const NetTemplate& tmpl,
                            std::vector<SVDSubnet>* svd_out = nullptr);

/// Dense B (zero outside the trainable blocks).
Matrix assemble_b(const TrainState& state);

/// Packs a network's B and I/O layers (and SVD params, if given) into a state's params.
void load_params(TrainState& state, const ComposedNetwork& net,
                 const std::vector<SVDSubnetParams>& svd = {});

std::vector<SVDSubnetParams> svd_params(const TrainState& state, const NetTemplate& tmpl);

/// Equal-length sequences; inputs[t] is in_dim x batch.
struct Batch {
  std::vector<Matrix> inputs;
  std::vector<int> labels;

  [[nodiscard]] Eigen::Index size() const { return static_cast<Eigen::Index>(labels.size()); }
  [[nodiscard]] Eigen::Index steps() const { return static_cast<Eigen::Index>(inputs.size()); }
  static Batch from_sequences(const std::vector<InputSequence>& seqs, const std::vector<int>& labels);
  static Batch gather(const SequenceSet& set, const std::size_t* indices, std::size_t count);
};

struct ForwardCache {
  ComposedNetwork net;
  std::vector<SVDSubnet> svd;
  std::vector<Matrix> states;  ///< T + 1 entries, each n x batch
  Matrix w_tilde;
  Eigen::Index batch_size = 0;
  Eigen::Index param_count = 0;
};

struct ForwardResult {
  Matrix logits;  ///< out_dim x batch
  ForwardCache cache;
};

ForwardResult forward(const TrainState& state, const NetTemplate& tmpl, const Batch& batch);

/// Mean cross-entropy of softmax(logits) against labels.
double loss(const Matrix& logits, const std::vector<int>& labels);

/// Gradient of the mean loss with respect to every trainable scalar.
Vector backward(const TrainState& state, const NetTemplate& tmpl, const ForwardResult& fwd,
                const Batch& batch);

/// One Adam update with coupled L2 decay (g += wd * theta) and optional clipping.
void adam_step(TrainState& state, const Vector& grad);

struct EpochMetrics {
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double skew_residual = 0.0;     ///< |M~L + L^T M~| / (1 + |M~L|) after the epoch
  double worst_jacobian = 0.0;    ///< max over spot-checked D of lambda_max(sym(M~ J))
  double lr = 0.0;                ///< rate used during the epoch
  std::size_t batches = 0;
};

/// Shuffles under Rng::stream(seed, epoch), runs Adam over all batches, then
/// checks the interconnection and (Sparse mode) that W is unchanged. Throws
/// InvariantViolation on failure. Control mode skips the stability checks.
EpochMetrics train_epoch(TrainState& state, const NetTemplate& tmpl, const SequenceSet& data,
                         std::size_t batch_size, std::uint64_t seed);

struct EvalMetrics {
  double accuracy = 0.0;
  double loss = 0.0;
};

EvalMetrics evaluate(const TrainState& state, const NetTemplate& tmpl, const SequenceSet& data,
                     std::size_t batch_size = 1000);

}  // namespace contractive
