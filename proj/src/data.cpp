#include "contractive/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstdlib>
#include <numeric>
#include <sstream>

#include "contractive/rng.hpp"

namespace contractive {

namespace {

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;
constexpr std::size_t kCifarRecord = 1 + 3072;

std::string where(const std::filesystem::path& path) { return path.string() + ": "; }

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset,
                        const std::filesystem::path& path) {
  if (offset + 4 > bytes.size()) {
    std::ostringstream os;
    os << where(path) << "truncated header at byte offset " << offset << " (file has "
       << bytes.size() << " bytes)";
    throw DataError(os.str());
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void require_bytes(const std::vector<std::uint8_t>& bytes, std::size_t need,
                   const std::filesystem::path& path, std::size_t data_offset) {
  if (bytes.size() < need) {
    std::ostringstream os;
    os << where(path) << "truncated data: expected " << need << " bytes, file ends at byte offset "
       << bytes.size() << " (payload starts at " << data_offset << ")";
    throw DataError(os.str());
  }
}

std::filesystem::path first_existing(const std::filesystem::path& dir, const std::string& stem) {
  for (const auto& name : {stem, stem + ".gz"}) {
    if (std::filesystem::exists(dir / name)) return dir / name;
  }
  throw DataError("missing dataset file " + (dir / stem).string() + "[.gz]");
}

}  // namespace

std::string_view to_string(Split s) { return s == Split::Train ? "train" : "test"; }

Dataset Dataset::head(std::size_t count) const {
  Dataset out = *this;
  count = std::min(count, size());
  out.labels.resize(count);
  out.pixels.resize(count * image_size());
  return out;
}

void Dataset::validate() const {
  if (width < 1 || height < 1 || channels < 1) throw DataError("Dataset: bad image shape");
  if (pixels.size() != size() * image_size()) throw DataError("Dataset: pixel count mismatch");
  for (auto l : labels) {
    if (l > 9) throw DataError("Dataset: label outside [0, 9]");
  }
}

std::vector<std::uint8_t> read_maybe_gzip(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError(where(path) + "no such file");
  gzFile f = gzopen(path.c_str(), "rb");
  if (f == nullptr) throw DataError(where(path) + "cannot open");
  std::vector<std::uint8_t> out;
  std::uint8_t buf[1 << 16];
  int got = 0;
  while ((got = gzread(f, buf, sizeof buf)) > 0) out.insert(out.end(), buf, buf + got);
  int errnum = 0;
  const char* msg = gzerror(f, &errnum);
  const std::string err = errnum != Z_OK && errnum != Z_STREAM_END ? msg : "";
  gzclose(f);
  if (got < 0 || !err.empty()) throw DataError(where(path) + "read failed: " + err);
  return out;
}

Dataset load_idx(const std::filesystem::path& path) {
  const auto bytes = read_maybe_gzip(path);
  const std::uint32_t magic = read_be32(bytes, 0, path);
  Dataset ds;
  if (magic == kIdxLabels) {
    const std::uint32_t count = read_be32(bytes, 4, path);
    require_bytes(bytes, 8 + std::size_t{count}, path, 8);
    ds.labels.assign(bytes.begin() + 8, bytes.begin() + 8 + count);
    for (std::size_t i = 0; i < ds.labels.size(); ++i) {
      if (ds.labels[i] > 9) {
        std::ostringstream os;
        os << where(path) << "label " << int(ds.labels[i]) << " at byte offset " << 8 + i
           << " outside [0, 9]";
        throw DataError(os.str());
      }
    }
    return ds;
  }
  if (magic != kIdxImages) {
    std::ostringstream os;
    os << where(path) << "bad IDX magic 0x" << std::hex << magic << " at byte offset 0";
    throw DataError(os.str());
  }
  const std::uint32_t count = read_be32(bytes, 4, path);
  ds.height = static_cast<int>(read_be32(bytes, 8, path));
  ds.width = static_cast<int>(read_be32(bytes, 12, path));
  ds.channels = 1;
  const std::size_t total = std::size_t{count} * ds.image_size();
  require_bytes(bytes, 16 + total, path, 16);
  ds.pixels.resize(total);
  std::transform(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(total),
                 ds.pixels.begin(), [](std::uint8_t b) { return static_cast<float>(b) / 255.0f; });
  ds.labels.assign(count, 0);
  return ds;
}

Dataset load_idx_pair(const std::filesystem::path& images, const std::filesystem::path& labels,
                      Split split) {
  Dataset ds = load_idx(images);
  const Dataset lab = load_idx(labels);
  if (ds.width == 0) throw DataError(where(images) + "is not an IDX image file");
  if (lab.width != 0) throw DataError(where(labels) + "is not an IDX label file");
  if (lab.labels.size() != ds.labels.size()) {
    std::ostringstream os;
    os << "count mismatch: " << images.string() << " has " << ds.labels.size() << " images, "
       << labels.string() << " has " << lab.labels.size() << " labels";
    throw DataError(os.str());
  }
  ds.labels = lab.labels;
  ds.split = split;
  return ds;
}

Dataset load_mnist(const std::filesystem::path& dir, Split split) {
  const std::string prefix = split == Split::Train ? "train" : "t10k";
  return load_idx_pair(first_existing(dir, prefix + "-images-idx3-ubyte"),
                       first_existing(dir, prefix + "-labels-idx1-ubyte"), split);
}

Dataset load_cifar10_binary(const std::filesystem::path& path, Split split) {
  const auto bytes = read_maybe_gzip(path);
  if (bytes.empty() || bytes.size() % kCifarRecord != 0) {
    std::ostringstream os;
    os << where(path) << "length " << bytes.size() << " is not a multiple of " << kCifarRecord
       << "; corrupt record at byte offset " << bytes.size() / kCifarRecord * kCifarRecord;
    throw DataError(os.str());
  }
  Dataset ds;
  ds.width = 32;
  ds.height = 32;
  ds.channels = 3;
  ds.split = split;
  const std::size_t count = bytes.size() / kCifarRecord;
  ds.labels.resize(count);
  ds.pixels.resize(count * 3072);
  for (std::size_t r = 0; r < count; ++r) {
    const std::uint8_t* rec = bytes.data() + r * kCifarRecord;
    if (rec[0] > 9) {
      std::ostringstream os;
      os << where(path) << "label " << int(rec[0]) << " at byte offset " << r * kCifarRecord
         << " outside [0, 9]";
      throw DataError(os.str());
    }
    ds.labels[r] = rec[0];
    float* dst = ds.pixels.data() + r * 3072;
    // channel-major on disk, HWC in memory
    for (int c = 0; c < 3; ++c) {
      for (int p = 0; p < 1024; ++p) dst[p * 3 + c] = rec[1 + c * 1024 + p] / 255.0f;
    }
  }
  return ds;
}

Dataset load_cifar10(const std::filesystem::path& dir, Split split) {
  if (split == Split::Test) return load_cifar10_binary(first_existing(dir, "test_batch.bin"), split);
  Dataset all;
  for (int b = 1; b <= 5; ++b) {
    Dataset part = load_cifar10_binary(
        first_existing(dir, "data_batch_" + std::to_string(b) + ".bin"), split);
    if (b == 1) {
      all = std::move(part);
      continue;
    }
    all.pixels.insert(all.pixels.end(), part.pixels.begin(), part.pixels.end());
    all.labels.insert(all.labels.end(), part.labels.begin(), part.labels.end());
  }
  return all;
}

std::optional<std::filesystem::path> data_root_from_env() {
  const char* v = std::getenv("CONTRACTIVENETS_DATA");
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::filesystem::path(v);
}

std::string_view to_string(SequenceMode m) { return m == SequenceMode::Pixel ? "pixel" : "row"; }

SequenceMode sequence_mode_from_string(std::string_view s) {
  if (s == "pixel") return SequenceMode::Pixel;
  if (s == "row") return SequenceMode::Row;
  throw std::invalid_argument("unknown sequence mode '" + std::string(s) + "'");
}

InputSequence SequenceSet::sequence(std::size_t example, double dt) const {
  InputSequence seq;
  seq.dt = dt;
  seq.values.reserve(static_cast<std::size_t>(steps));
  for (Eigen::Index t = 0; t < steps; ++t) {
    const float* p = at(example, t);
    seq.values.emplace_back(Eigen::Map<const Eigen::VectorXf>(p, dim).cast<double>());
  }
  return seq;
}

std::vector<std::size_t> make_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(perm);
  return perm;
}

Dataset downsample(const Dataset& ds, int factor) {
  if (factor < 1) throw DataError("downsample: factor must be >= 1");
  if (factor == 1) return ds;
  if (ds.width % factor != 0 || ds.height % factor != 0) {
    std::ostringstream os;
    os << "downsample: factor " << factor << " does not divide " << ds.height << "x" << ds.width;
    throw DataError(os.str());
  }
  Dataset out;
  out.width = ds.width / factor;
  out.height = ds.height / factor;
  out.channels = ds.channels;
  out.labels = ds.labels;
  out.split = ds.split;
  out.pixels.assign(ds.size() * out.image_size(), 0.0f);
  const float inv = 1.0f / static_cast<float>(factor * factor);
  for (std::size_t n = 0; n < ds.size(); ++n) {
    const float* src = ds.image(n);
    float* dst = out.pixels.data() + n * out.image_size();
    for (int y = 0; y < ds.height; ++y) {
      for (int x = 0; x < ds.width; ++x) {
        for (int c = 0; c < ds.channels; ++c) {
          dst[((y / factor) * out.width + x / factor) * ds.channels + c] +=
              src[(y * ds.width + x) * ds.channels + c] * inv;
        }
      }
    }
  }
  return out;
}

SequenceSet sequentialize(const Dataset& raw, const SequenceConfig& cfg) {
  raw.validate();
  const Dataset ds = downsample(raw, cfg.downsample);
  SequenceSet out;
  out.labels = ds.labels;
  if (cfg.mode == SequenceMode::Pixel) {
    out.steps = static_cast<Eigen::Index>(ds.width) * ds.height;
    out.dim = ds.channels;
  } else {
    out.steps = ds.height;
    out.dim = static_cast<Eigen::Index>(ds.width) * ds.channels;
  }
  const auto steps = static_cast<std::size_t>(out.steps);
  if (cfg.permutation_seed) {
    out.permutation = make_permutation(steps, *cfg.permutation_seed);
  } else {
    out.permutation.resize(steps);
    std::iota(out.permutation.begin(), out.permutation.end(), std::size_t{0});
  }
  // In both modes a step is a contiguous run of `dim` values in HWC order.
  const auto dim = static_cast<std::size_t>(out.dim);
  out.values.resize(ds.size() * steps * dim);
  for (std::size_t n = 0; n < ds.size(); ++n) {
    const float* src = ds.image(n);
    float* dst = out.values.data() + n * steps * dim;
    for (std::size_t t = 0; t < steps; ++t) {
      std::copy_n(src + out.permutation[t] * dim, dim, dst + t * dim);
    }
  }
  return out;
}

std::vector<float> desequentialize(const SequenceSet& seq, std::size_t example, int width,
                                   int height, int channels) {
  const auto dim = static_cast<std::size_t>(seq.dim);
  const std::size_t total = static_cast<std::size_t>(width) * height * channels;
  if (static_cast<std::size_t>(seq.steps) * dim != total) {
    throw DataError("desequentialize: shape does not match the sequence");
  }
  std::vector<float> image(total);
  for (Eigen::Index t = 0; t < seq.steps; ++t) {
    std::copy_n(seq.at(example, t), dim, image.data() + seq.permutation[t] * dim);
  }
  return image;
}

}  // namespace contractive
