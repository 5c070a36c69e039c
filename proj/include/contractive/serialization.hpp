#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "contractive/certificates.hpp"
#include "contractive/training.hpp"

namespace contractive {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Version string written into certificates.
std::string library_version();

nlohmann::json matrix_to_json(const Matrix& m);  ///< nested rows
Matrix matrix_from_json(const nlohmann::json& j, const std::string& what = "matrix");

/// {theorem_id, n, g, W, metric, margin, created_by_version, notes[, proof_metric]}.
/// Doubles are written in shortest round-trip form, so reading back is bit-exact.
nlohmann::json certificate_to_json(const Certificate& cert);
Certificate certificate_from_json(const nlohmann::json& j);
void write_certificate(const std::filesystem::path& path, const Certificate& cert);
Certificate read_certificate(const std::filesystem::path& path);

/// Matrix from text: a JSON array of rows, a JSON object with key "W", or CSV
/// (comma/whitespace separated, '#' comments).
Matrix parse_matrix(const std::string& text);
Matrix read_matrix_file(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// Network checkpoint: 8-byte magic "CNNCKPT1", little-endian uint64 header
/// length, JSON header, then little-endian float64 payload in the order the
/// header's "payload" manifest lists (row-major matrices): per-subnet W and
/// metric, B, input weights, input bias, output weights, output bias, and the
/// TrainState appendix (params, adam_m, adam_v).
struct Checkpoint {
  NetTemplate tmpl;
  TrainState state;
  nlohmann::json meta;  ///< free-form provenance (seeds, config)
};

void save_checkpoint(const std::filesystem::path& path, const NetTemplate& tmpl,
                     const TrainState& state, const nlohmann::json& meta = nlohmann::json::object());
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace contractive
