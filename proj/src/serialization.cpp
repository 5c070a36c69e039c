#include "contractive/serialization.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace contractive {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'C', 'N', 'N', 'C', 'K', 'P', 'T', '1'};

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(const unsigned char* b) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{b[i]} << (8 * i);
  return v;
}

void put_f64(std::ostream& os, double d) { put_u64(os, std::bit_cast<std::uint64_t>(d)); }

// Row-major for matrices.
void put_matrix(std::ostream& os, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) put_f64(os, m(i, j));
  }
}

class PayloadReader {
 public:
  PayloadReader(const std::vector<unsigned char>& bytes, std::size_t at) : bytes_(bytes), at_(at) {}

  double f64() {
    if (at_ + 8 > bytes_.size()) {
      throw FormatError("checkpoint: payload truncated at byte offset " + std::to_string(at_));
    }
    const double d = std::bit_cast<double>(get_u64(bytes_.data() + at_));
    at_ += 8;
    return d;
  }
  Matrix matrix(Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = f64();
    }
    return m;
  }
  Vector vector(Eigen::Index n) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = f64();
    return v;
  }
  [[nodiscard]] bool done() const { return at_ == bytes_.size(); }

 private:
  const std::vector<unsigned char>& bytes_;
  std::size_t at_;
};

json optimizer_to_json(const OptimizerSpec& o) {
  return {{"lr", o.lr},       {"weight_decay", o.weight_decay}, {"beta1", o.beta1},
          {"beta2", o.beta2}, {"eps", o.eps},                   {"schedule", o.schedule},
          {"clip_norm", o.clip_norm}};
}

OptimizerSpec optimizer_from_json(const json& j) {
  OptimizerSpec o;
  o.lr = j.at("lr").get<double>();
  o.weight_decay = j.at("weight_decay").get<double>();
  o.beta1 = j.at("beta1").get<double>();
  o.beta2 = j.at("beta2").get<double>();
  o.eps = j.at("eps").get<double>();
  o.schedule = j.at("schedule").get<std::vector<std::pair<int, double>>>();
  o.clip_norm = j.at("clip_norm").get<double>();
  return o;
}

}  // namespace

std::string library_version() { return CONTRACTIVE_VERSION; }

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (!std::isfinite(m(i, j))) throw FormatError("cannot serialize a non-finite matrix entry");
      row.push_back(m(i, j));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) throw FormatError(what + ": expected a non-empty array of rows");
  const std::size_t cols = j.front().is_array() ? j.front().size() : 0;
  if (cols == 0) throw FormatError(what + ": rows must be non-empty arrays");
  Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_array() || j[i].size() != cols) {
      throw FormatError(what + ": row " + std::to_string(i) + " has the wrong length");
    }
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[i][c].is_number()) {
        throw FormatError(what + ": entry (" + std::to_string(i) + "," + std::to_string(c) +
                          ") is not a number");
      }
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = j[i][c].get<double>();
    }
  }
  return m;
}

json certificate_to_json(const Certificate& cert) {
  json j;
  j["theorem_id"] = std::string(to_string(cert.theorem));
  j["n"] = cert.n();
  j["g"] = cert.g;
  j["W"] = matrix_to_json(cert.W);
  j["metric"] = matrix_to_json(cert.metric);
  j["margin"] = cert.margin;
  j["created_by_version"] = library_version();
  j["notes"] = cert.notes;
  if (cert.proof_metric) j["proof_metric"] = matrix_to_json(*cert.proof_metric);
  return j;
}

Certificate certificate_from_json(const json& j) {
  try {
    Certificate c;
    c.theorem = theorem_from_string(j.at("theorem_id").get<std::string>());
    c.g = j.at("g").get<double>();
    c.W = matrix_from_json(j.at("W"), "W");
    c.metric = matrix_from_json(j.at("metric"), "metric");
    c.margin = j.at("margin").get<double>();
    c.notes = j.value("notes", "");
    if (j.contains("proof_metric")) c.proof_metric = matrix_from_json(j["proof_metric"], "proof_metric");
    if (j.at("n").get<Eigen::Index>() != c.W.rows() || c.W.rows() != c.W.cols() ||
        c.metric.rows() != c.W.rows() || c.metric.cols() != c.W.cols()) {
      throw FormatError("certificate: n, W and metric shapes disagree");
    }
    return c;
  } catch (const json::exception& e) {
    throw FormatError(std::string("certificate: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("certificate: ") + e.what());
  }
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
  if (!out) throw FormatError("write failed: " + path.string());
}

void write_certificate(const std::filesystem::path& path, const Certificate& cert) {
  write_text_file(path, certificate_to_json(cert).dump(2) + "\n");
}

Certificate read_certificate(const std::filesystem::path& path) {
  try {
    return certificate_from_json(json::parse(read_text_file(path)));
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

Matrix parse_matrix(const std::string& text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) throw FormatError("matrix: empty input");
  if (text[first] == '[' || text[first] == '{') {
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw FormatError(std::string("matrix: ") + e.what());
    }
    if (j.is_object()) {
      if (!j.contains("W")) throw FormatError("matrix: JSON object without key \"W\"");
      return matrix_from_json(j["W"], "W");
    }
    return matrix_from_json(j);
  }
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    for (char& ch : line) {
      if (ch == ',' || ch == ';' || ch == '\t' || ch == '\r') ch = ' ';
    }
    std::istringstream ls(line);
    std::vector<double> row;
    std::string tok;
    while (ls >> tok) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size()) {
        throw FormatError("matrix: line " + std::to_string(lineno) + ": '" + tok +
                          "' is not a number");
      }
      row.push_back(v);
    }
    if (!row.empty()) rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError("matrix: no rows");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size()) {
      throw FormatError("matrix: row " + std::to_string(i + 1) + " has " +
                        std::to_string(rows[i].size()) + " entries, expected " +
                        std::to_string(rows[0].size()));
    }
    for (std::size_t c = 0; c < rows[i].size(); ++c) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
    }
  }
  return m;
}

Matrix read_matrix_file(const std::filesystem::path& path) {
  try {
    return parse_matrix(read_text_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const NetTemplate& tmpl,
                     const TrainState& state, const json& meta) {
  state.validate();
  const ComposedNetwork net = materialize(state, tmpl);
  const Eigen::Index n = net.n_total();
  json h;
  h["format"] = "contractivenets-checkpoint";
  h["version"] = 1;
  h["created_by_version"] = library_version();
  h["p"] = net.p();
  json sizes = json::array();
  json subs = json::array();
  for (const auto& s : tmpl.net.subnets) {
    sizes.push_back(s.size());
    subs.push_back({{"g", s.g},
                    {"theorem_id", std::string(to_string(s.cert.theorem))},
                    {"margin", s.cert.margin},
                    {"notes", s.cert.notes}});
  }
  h["sizes"] = sizes;
  h["subnets"] = subs;
  h["g"] = tmpl.net.subnets.front().g;
  h["tau"] = net.tau;
  h["k"] = net.k;
  h["mask_pairs"] = net.mask.trainable_blocks;
  h["feedback_density"] = net.mask.feedback_density;
  h["mode"] = std::string(to_string(net.mode));
  h["variant"] = std::string(to_string(tmpl.variant));
  h["activation"] = tmpl.activation == Activation::ReLU ? "relu" : "tanh";
  h["alpha"] = tmpl.alpha;
  h["in_dim"] = net.in_dim();
  h["out_dim"] = net.out_dim();
  h["train_state"] = {{"step_count", state.step_count},
                      {"epoch", state.epoch},
                      {"lr", state.lr},
                      {"optimizer", optimizer_to_json(state.optimizer)},
                      {"w_checksum", state.w_checksum},
                      {"params", state.params.size()}};
  h["meta"] = meta;
  json manifest = json::array();
  for (std::size_t k = 0; k < tmpl.net.subnets.size(); ++k) {
    const auto m = tmpl.net.subnets[k].size();
    manifest.push_back({{"name", "W" + std::to_string(k)}, {"shape", {m, m}}});
    manifest.push_back({{"name", "metric" + std::to_string(k)}, {"shape", {m, m}}});
  }
  manifest.push_back({{"name", "B"}, {"shape", {n, n}}});
  manifest.push_back({{"name", "input_weights"}, {"shape", {n, net.in_dim()}}});
  manifest.push_back({{"name", "input_bias"}, {"shape", {n}}});
  manifest.push_back({{"name", "output_weights"}, {"shape", {net.out_dim(), n}}});
  manifest.push_back({{"name", "output_bias"}, {"shape", {net.out_dim()}}});
  for (const char* name : {"params", "adam_m", "adam_v"}) {
    manifest.push_back({{"name", name}, {"shape", {state.params.size()}}});
  }
  h["payload"] = manifest;

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  const std::string header = h.dump();
  out.write(kMagic, 8);
  put_u64(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  // The template's subnetworks (SVD mode: the initial ones; params carry the rest).
  for (const auto& s : tmpl.net.subnets) {
    put_matrix(out, s.W);
    put_matrix(out, s.metric);
  }
  put_matrix(out, net.B);
  put_matrix(out, net.input_weights);
  put_matrix(out, net.input_bias);
  put_matrix(out, net.output_weights);
  put_matrix(out, net.output_bias);
  put_matrix(out, state.params);
  put_matrix(out, state.adam_m);
  put_matrix(out, state.adam_v);
  if (!out) throw FormatError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw FormatError(path.string() + ": not a checkpoint (bad magic at byte offset 0)");
  }
  const std::uint64_t hlen = get_u64(bytes.data() + 8);
  if (16 + hlen > bytes.size()) throw FormatError(path.string() + ": header truncated");
  Checkpoint ck;
  try {
    const json h = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<long>(hlen));
    PayloadReader r(bytes, 16 + hlen);
    const auto sizes = h.at("sizes").get<std::vector<Eigen::Index>>();
    const auto& subs = h.at("subnets");
    std::vector<SubnetworkSpec> subnets;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      Certificate cert;
      cert.theorem = theorem_from_string(subs.at(k).at("theorem_id").get<std::string>());
      cert.g = subs.at(k).at("g").get<double>();
      cert.margin = subs.at(k).at("margin").get<double>();
      cert.notes = subs.at(k).at("notes").get<std::string>();
      cert.W = r.matrix(sizes[k], sizes[k]);
      cert.metric = r.matrix(sizes[k], sizes[k]);
      subnets.push_back(SubnetworkSpec::from_certificate(cert));
    }
    Eigen::Index n = 0;
    for (auto s : sizes) n += s;
    const auto in_dim = h.at("in_dim").get<Eigen::Index>();
    const auto out_dim = h.at("out_dim").get<Eigen::Index>();
    InterconnectionMask mask{h.at("mask_pairs").get<std::vector<BlockIndex>>(),
                             h.at("feedback_density").get<double>()};
    const FeedbackMode mode = feedback_mode_from_string(h.at("mode").get<std::string>());
    Matrix b = r.matrix(n, n);
    Matrix in_w = r.matrix(n, in_dim);
    Vector in_b = r.vector(n);
    Matrix out_w = r.matrix(out_dim, n);
    Vector out_b = r.vector(out_dim);
    ck.tmpl.variant = variant_from_string(h.at("variant").get<std::string>());
    ck.tmpl.activation =
        h.at("activation").get<std::string>() == "tanh" ? Activation::Tanh : Activation::ReLU;
    ck.tmpl.alpha = h.at("alpha").get<double>();
    ck.tmpl.net = ComposedNetwork::compose(std::move(subnets), b, mask, mode, std::move(in_w),
                                           std::move(in_b), std::move(out_w), std::move(out_b),
                                           h.at("tau").get<double>(),
                                           h.at("k").get<std::vector<double>>());
    const auto& ts = h.at("train_state");
    TrainState& st = ck.state;
    st.layout = make_layout(sizes, ck.tmpl.net.mask, mode, in_dim, out_dim,
                            ck.tmpl.variant == Variant::SVD);
    const auto count = ts.at("params").get<Eigen::Index>();
    if (count != st.layout.total) {
      throw FormatError("parameter count " + std::to_string(count) + " does not match the layout (" +
                        std::to_string(st.layout.total) + ")");
    }
    st.params = r.vector(count);
    st.adam_m = r.vector(count);
    st.adam_v = r.vector(count);
    if (!r.done()) throw FormatError("trailing bytes after payload");
    st.step_count = ts.at("step_count").get<std::uint64_t>();
    st.epoch = ts.at("epoch").get<int>();
    st.lr = ts.at("lr").get<double>();
    st.optimizer = optimizer_from_json(ts.at("optimizer"));
    st.w_checksum = ts.at("w_checksum").get<std::uint64_t>();
    ck.meta = h.value("meta", json::object());
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": bad checkpoint header: " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return ck;
}

}  // namespace contractive
