#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "contractive/run_config.hpp"
#include "contractive/serialization.hpp"
#include "test_support.hpp"

using namespace contractive;
using namespace contractive::testing;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path tmp(const std::string& name) { return fs::temp_directory_path() / ("cnn_ser_" + name); }

bool bit_equal(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Serialization, CertificateRoundTripIsBitExact) {
  Rng rng(1);
  for (int t = 0; t < 20; ++t) {
    const Matrix w = random_symmetric(rng, 4, 0.1);
    const CertifyResult r = certify_symmetric(w, 1.0);
    ASSERT_TRUE(r);
    const fs::path p = tmp("cert.json");
    write_certificate(p, *r.certificate);
    const Certificate back = read_certificate(p);
    EXPECT_EQ(back.theorem, Theorem::Symmetric);
    EXPECT_TRUE(bit_equal(back.W, r.certificate->W));
    EXPECT_TRUE(bit_equal(back.metric, r.certificate->metric));
    ASSERT_TRUE(back.proof_metric.has_value());
    EXPECT_TRUE(bit_equal(*back.proof_metric, *r.certificate->proof_metric));
    EXPECT_EQ(back.margin, r.certificate->margin);
    EXPECT_EQ(back.g, 1.0);
  }
  const json j = certificate_to_json(*certify_abs(Matrix::Zero(2, 2), 1.0).certificate);
  for (const char* key : {"theorem_id", "n", "g", "W", "metric", "margin", "created_by_version"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(j["theorem_id"], "abs");
  EXPECT_EQ(j["created_by_version"], library_version());
}

TEST(Serialization, CertificateShapeErrors) {
  json j = certificate_to_json(*certify_abs(Matrix::Zero(2, 2), 1.0).certificate);
  j["n"] = 3;
  EXPECT_THROW(certificate_from_json(j), FormatError);
  j["n"] = 2;
  j["theorem_id"] = "bogus";
  EXPECT_THROW(certificate_from_json(j), FormatError);
}

TEST(Serialization, ParseMatrixFormats) {
  const Matrix expect = (Matrix(2, 2) << 1, -2.5, 3e-3, 4).finished();
  EXPECT_EQ(parse_matrix("[[1, -2.5], [3e-3, 4]]"), expect);
  EXPECT_EQ(parse_matrix("{\"W\": [[1, -2.5], [3e-3, 4]]}"), expect);
  EXPECT_EQ(parse_matrix("# comment\n1, -2.5\n3e-3 4\n\n"), expect);
  EXPECT_NE(error_of([] { parse_matrix("1,2\n3"); }).find("row 2"), std::string::npos);
  EXPECT_NE(error_of([] { parse_matrix("1,x\n3,4"); }).find("line 1"), std::string::npos);
  EXPECT_NE(error_of([] { parse_matrix("[[1,2],[3]]"); }).find("row 1"), std::string::npos);
  EXPECT_THROW(parse_matrix("{\"V\": [[1]]}"), FormatError);
  EXPECT_THROW(parse_matrix("   "), FormatError);
}

TEST(Serialization, CheckpointRoundTrip) {
  ArchitectureSpec arch;
  arch.p = 3;
  arch.n_sub = 4;
  arch.in_dim = 2;
  arch.out_dim = 3;
  arch.init = SparseInitConfig{4, 0.5, 0.8, 1.0, 1000, 0};
  arch.alpha = 0.3;
  for (Variant v : {Variant::Sparse, Variant::SVD}) {
    arch.variant = v;
    Model m = initialize_model(arch, OptimizerSpec{}, 4);
    m.state.adam_m.setConstant(0.25);
    m.state.step_count = 17;
    m.state.epoch = 2;
    const fs::path p = tmp("model.ckpt");
    save_checkpoint(p, m.tmpl, m.state, json{{"seed", 4}});
    const Checkpoint c = load_checkpoint(p);
    EXPECT_EQ(c.state.params, m.state.params);
    EXPECT_EQ(c.state.adam_m, m.state.adam_m);
    EXPECT_EQ(c.state.step_count, 17u);
    EXPECT_EQ(c.state.epoch, 2);
    EXPECT_EQ(c.state.w_checksum, m.state.w_checksum);
    EXPECT_EQ(c.tmpl.alpha, 0.3);
    EXPECT_EQ(c.tmpl.variant, v);
    EXPECT_EQ(c.meta["seed"], 4);
    ASSERT_EQ(c.tmpl.net.subnets.size(), 3u);
    for (int k = 0; k < 3; ++k) {
      EXPECT_TRUE(bit_equal(c.tmpl.net.subnets[k].W, m.tmpl.net.subnets[k].W));
      EXPECT_TRUE(bit_equal(c.tmpl.net.subnets[k].metric, m.tmpl.net.subnets[k].metric));
    }
    EXPECT_EQ(c.tmpl.net.mask.trainable_blocks, m.tmpl.net.mask.trainable_blocks);
    EXPECT_TRUE(bit_equal(c.tmpl.net.L, m.tmpl.net.L));
  }
}

TEST(Serialization, CheckpointCorruption) {
  ArchitectureSpec arch;
  arch.p = 2;
  arch.n_sub = 3;
  arch.in_dim = 1;
  arch.out_dim = 2;
  arch.init = SparseInitConfig{3, 0.5, 0.8, 1.0, 1000, 0};
  const Model m = initialize_model(arch, OptimizerSpec{}, 1);
  const fs::path p = tmp("bad.ckpt");
  save_checkpoint(p, m.tmpl, m.state);
  const auto size = fs::file_size(p);
  fs::resize_file(p, size - 8);
  EXPECT_NE(error_of([&] { load_checkpoint(p); }).find("truncated"), std::string::npos);
  write_text_file(p, "NOTACKPT........");
  EXPECT_NE(error_of([&] { load_checkpoint(p); }).find("bad magic"), std::string::npos);
}

TEST(RunConfig, DefaultsAndOverrides) {
  const json d = resolve_run_config(json::object());
  EXPECT_EQ(d["architecture"]["p"], 4);
  EXPECT_EQ(d["architecture"]["alpha"], 1.0);
  EXPECT_EQ(d["training"]["lr"], 0.001);
  const json c = resolve_run_config(json::parse(R"({"architecture": {"p": 2, "alpha": 0.2}})"));
  EXPECT_EQ(c["architecture"]["p"], 2);
  EXPECT_EQ(c["architecture"]["n_sub"], 16);
  const ArchitectureSpec a = architecture_from_config(c);
  EXPECT_EQ(a.p, 2);
  EXPECT_EQ(a.alpha, 0.2);
  EXPECT_EQ(a.in_dim, 28);  // row MNIST

  json pixel = c;
  pixel["task"]["mode"] = "pixel";
  EXPECT_EQ(architecture_from_config(pixel).in_dim, 1);
  pixel["task"]["dataset"] = "cifar10";
  EXPECT_EQ(architecture_from_config(pixel).in_dim, 3);
}

TEST(RunConfig, RejectsUnknownKeysAndBadTypes) {
  EXPECT_NE(error_of([] { resolve_run_config(json::parse(R"({"training": {"epoch": 3}})")); })
                .find("training.epoch"),
            std::string::npos);
  EXPECT_NE(error_of([] { resolve_run_config(json::parse(R"({"training": {"epochs": "3"}})")); })
                .find("expected number"),
            std::string::npos);
  EXPECT_THROW(resolve_run_config(json::parse(R"({"architecture": {"alpha": 1.5}})")), ConfigError);
  EXPECT_THROW(resolve_run_config(json::parse(R"({"task": {"mode": "column"}})")), ConfigError);
  EXPECT_NO_THROW(resolve_run_config(json::parse(R"({"task": {"permutation_seed": 7}})")));
}

TEST(RunConfig, SetValueFromCommandLine) {
  json c = default_run_config();
  set_config_value(c, "training.epochs", "3");
  set_config_value(c, "architecture.activation", "tanh");
  EXPECT_EQ(c["training"]["epochs"], 3);
  EXPECT_EQ(c["architecture"]["activation"], "tanh");
  EXPECT_THROW(set_config_value(c, "training.nope", "1"), ConfigError);
  EXPECT_NO_THROW(resolve_run_config(c));
}

TEST(RunConfig, TrainingLogLine) {
  EXPECT_EQ(training_log_header(), "epoch,lr,train_loss,train_acc,test_acc,skew_residual,wall_seconds");
  EpochRecord r;
  r.epoch = 3;
  r.lr = 1e-3;
  const std::string line = training_log_line(r);
  EXPECT_EQ(line.substr(0, 2), "3,");
  EXPECT_EQ(std::count(line.begin(), line.end(), ','), 6);
}
