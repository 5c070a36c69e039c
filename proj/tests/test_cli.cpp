#include <gtest/gtest.h>

#include <sys/wait.h>

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "contractive/serialization.hpp"

using namespace contractive;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path fresh(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("cnn_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = std::string(CONTRACTIVE_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

json read_json(const fs::path& p) { return json::parse(read_text_file(p)); }

void put_be32(std::ofstream& f, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) f.put(static_cast<char>((v >> s) & 0xff));
}

// 40 tiny 28x28 digits: label k lights up row 2k.
void write_fake_mnist(const fs::path& dir, const std::string& prefix, int count) {
  fs::create_directories(dir);
  std::ofstream img(dir / (prefix + "-images-idx3-ubyte"), std::ios::binary);
  std::ofstream lab(dir / (prefix + "-labels-idx1-ubyte"), std::ios::binary);
  put_be32(img, 0x803);
  put_be32(img, count);
  put_be32(img, 28);
  put_be32(img, 28);
  put_be32(lab, 0x801);
  put_be32(lab, count);
  for (int i = 0; i < count; ++i) {
    const int label = i % 10;
    for (int p = 0; p < 784; ++p) img.put(static_cast<char>(p / 28 == 2 * label ? 255 : 0));
    lab.put(static_cast<char>(label));
  }
}

}  // namespace

TEST(Cli, CertifyAcceptsAndRejects) {
  const fs::path dir = fresh("certify");
  write_text_file(dir / "zero.csv", "0,0\n0,0\n");
  EXPECT_EQ(run("certify " + (dir / "zero.csv").string() + " --out " + (dir / "a").string()), 0);
  const Certificate c = read_certificate(dir / "a" / "certificate.json");
  EXPECT_EQ(c.n(), 2);

  write_text_file(dir / "rot.json", "[[0,-2],[2,0]]");
  EXPECT_EQ(run("certify " + (dir / "rot.json").string() + " --out " + (dir / "b").string()), 2);
  EXPECT_TRUE(fs::exists(dir / "b" / "rejection.json"));

  write_text_file(dir / "sym.json", "[[0,0.4],[0.4,0]]");
  EXPECT_EQ(run("certify " + (dir / "sym.json").string() + " --theorem symmetric --out " +
                (dir / "c").string()),
            0);
  EXPECT_EQ(read_json(dir / "c" / "certificate.json")["theorem_id"], "symmetric");

  write_text_file(dir / "bad.csv", "1,2\n3\n");
  EXPECT_EQ(run("certify " + (dir / "bad.csv").string() + " --out " + (dir / "d").string()), 1);
  EXPECT_EQ(run("frobnicate"), 1);
}

TEST(Cli, SampleComposeSimulate) {
  const fs::path dir = fresh("pipeline");
  ASSERT_EQ(run("sample --n 8 --density 0.3 --pre-scalar 1 --post-scalar 1 --count 2 --seed 3 "
                "--out " + dir.string()),
            0);
  ASSERT_TRUE(fs::exists(dir / "subnet_0.json"));
  ASSERT_TRUE(fs::exists(dir / "subnet_1.json"));
  ASSERT_EQ(run("compose --cert " + (dir / "subnet_0.json").string() + " --cert " +
                (dir / "subnet_1.json").string() + " --out " + dir.string()),
            0);
  const json rep = read_json(dir / "compose_report.json");
  ASSERT_TRUE(fs::exists(dir / "network.ckpt"));
  ASSERT_EQ(run("simulate " + (dir / "network.ckpt").string() + " --horizon 10 --input sine --out " +
                dir.string()),
            0);
  const json con = read_json(dir / "contraction.json");
  EXPECT_GT(con["rate"].get<double>(), 0.0);
  EXPECT_TRUE(fs::exists(dir / "distance.csv"));
}

TEST(Cli, SamplingExhaustionExitsTwo) {
  const fs::path dir = fresh("exhaust");
  EXPECT_EQ(run("sample --n 8 --density 1 --pre-scalar 50 --max-tries 5 --out " + dir.string()), 2);
}

TEST(Cli, TrainAndEvalOnTinyData) {
  const fs::path dir = fresh("train");
  write_fake_mnist(dir / "data" / "mnist", "train", 40);
  write_fake_mnist(dir / "data" / "mnist", "t10k", 20);
  const std::string common = "--set task.data_root=" + (dir / "data").string() +
                             " --set architecture.p=2 --set architecture.n_sub=4"
                             " --set architecture.alpha=0.2 --set training.batch=8";
  ASSERT_EQ(run("train " + common + " --set training.epochs=2 --out " + (dir / "run").string()), 0);
  ASSERT_TRUE(fs::exists(dir / "run" / "model.ckpt"));
  std::ifstream log(dir / "run" / "train_log.csv");
  std::string header, line;
  std::getline(log, header);
  EXPECT_EQ(header, "epoch,lr,train_loss,train_acc,test_acc,skew_residual,wall_seconds");
  int lines = 0;
  while (std::getline(log, line)) ++lines;
  EXPECT_EQ(lines, 2);
  EXPECT_EQ(read_json(dir / "run" / "effective_config.json")["architecture"]["p"], 2);

  EXPECT_EQ(run("eval " + (dir / "run" / "model.ckpt").string() + " " + common + " --out " +
                (dir / "eval").string()),
            0);
  // Row checkpoint against pixel data: input dims differ.
  EXPECT_EQ(run("eval " + (dir / "run" / "model.ckpt").string() + " " + common +
                " --set task.mode=pixel --out " + (dir / "eval2").string()),
            1);
  EXPECT_EQ(run("train " + common + " --set training.bogus=1"), 1);
}
