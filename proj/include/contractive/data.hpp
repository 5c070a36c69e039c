#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "contractive/dynamics.hpp"

namespace contractive {

enum class Split { Train, Test };
std::string_view to_string(Split s);

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Images stored contiguously, each height x width x channels (HWC), values in [0, 1].
struct Dataset {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<float> pixels;
  std::vector<std::uint8_t> labels;
  Split split = Split::Train;

  [[nodiscard]] std::size_t size() const { return labels.size(); }
  [[nodiscard]] std::size_t image_size() const {
    return static_cast<std::size_t>(width) * height * channels;
  }
  [[nodiscard]] const float* image(std::size_t i) const { return pixels.data() + i * image_size(); }
  /// First `count` examples (or all); keeps the split.
  [[nodiscard]] Dataset head(std::size_t count) const;
  void validate() const;
};

/// Reads a whole file, transparently gunzipping if it is gzip-compressed.
std::vector<std::uint8_t> read_maybe_gzip(const std::filesystem::path& path);

/// IDX image file (magic 0x00000803) or label file (0x00000801). An images
/// file yields a Dataset with zeroed labels; a labels file yields labels only.
Dataset load_idx(const std::filesystem::path& path);

/// Image + label IDX pair with a count check.
Dataset load_idx_pair(const std::filesystem::path& images, const std::filesystem::path& labels,
                      Split split);

/// MNIST from a directory holding {train,t10k}-{images-idx3,labels-idx1}-ubyte[.gz].
Dataset load_mnist(const std::filesystem::path& dir, Split split);

/// One CIFAR-10 binary batch: records of 1 label byte + 3072 channel-major bytes.
Dataset load_cifar10_binary(const std::filesystem::path& path, Split split = Split::Train);

/// CIFAR-10 from cifar-10-batches-bin/ (data_batch_1..5 or test_batch).
Dataset load_cifar10(const std::filesystem::path& dir, Split split);

/// Root from $CONTRACTIVENETS_DATA, if set.
std::optional<std::filesystem::path> data_root_from_env();

enum class SequenceMode { Pixel, Row };
std::string_view to_string(SequenceMode m);
SequenceMode sequence_mode_from_string(std::string_view s);

struct SequenceConfig {
  SequenceMode mode = SequenceMode::Pixel;
  std::optional<std::uint64_t> permutation_seed;
  int downsample = 1;
};

/// Sequences of equal length, stored [example][step][feature].
struct SequenceSet {
  Eigen::Index steps = 0;
  Eigen::Index dim = 0;
  std::vector<float> values;
  std::vector<std::uint8_t> labels;
  std::vector<std::size_t> permutation;  ///< step order used (identity if none)

  [[nodiscard]] std::size_t size() const { return labels.size(); }
  [[nodiscard]] const float* at(std::size_t example, Eigen::Index step) const {
    return values.data() + (example * steps + step) * dim;
  }
  [[nodiscard]] InputSequence sequence(std::size_t example, double dt = 1.0) const;
};

/// Seeded Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> make_permutation(std::size_t n, std::uint64_t seed);

/// Average-pools each image by `factor` in both directions.
Dataset downsample(const Dataset& ds, int factor);

/// Pixel mode: T = H W / f^2 steps of `channels` values; row mode: H / f steps
/// of W / f * channels values. The permutation (if any) reorders steps.
SequenceSet sequentialize(const Dataset& ds, const SequenceConfig& cfg);

/// Inverse of pixel-mode sequentialize (undoing the permutation) for one example.
std::vector<float> desequentialize(const SequenceSet& seq, std::size_t example, int width,
                                   int height, int channels);

}  // namespace contractive
