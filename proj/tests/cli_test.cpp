// Drives the built mgf binary end to end.
#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>
#include <sys/wait.h>
#include <unistd.h>

#include "mgf/dataset.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string output;
};

Run mgf_run(const std::string& args) {
  const std::string cmd = std::string(MGF_CLI_PATH) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t got = 0;
  while ((got = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), got);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

const std::string kArch = " --audio-layers 1 --audio-hidden 4 --text-layers 1 --text-hidden 4 --highway 1 --lr 3e-3";
const std::string kSmall = kArch + " --max-epochs 4";

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / ("mgf_cli_test_" + std::to_string(getpid()));
    fs::remove_all(root_);
    fs::create_directories(root_);
    auto r = mgf_run("synth --n 16 --seed 5 --out " + (root_ / "data").string());
    ASSERT_EQ(r.code, 0) << r.output;
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static std::string p(const std::string& rel) { return (root_ / rel).string(); }
  static std::string data_args() {
    return " --manifest " + p("data/manifest.csv") + " --embeddings " + p("data/embeddings.txt");
  }

  static fs::path root_;
};

fs::path Cli::root_;

}  // namespace

TEST_F(Cli, HelpExitsZero) {
  auto r = mgf_run("--help");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.output.find("cv"), std::string::npos);
  EXPECT_EQ(mgf_run("cv --help").code, 0);
}

TEST_F(Cli, UsageErrorsExitTwo) {
  auto r = mgf_run("cv --bogus-flag");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("--bogus-flag"), std::string::npos);
  EXPECT_EQ(mgf_run("").code, 2);
  EXPECT_EQ(mgf_run("frobnicate").code, 2);
  EXPECT_EQ(mgf_run("cv --folds notanumber").code, 2);
}

TEST_F(Cli, InvalidInputExitsOneNamingIt) {
  auto r = mgf_run("cv --manifest " + p("missing.csv") + " --embeddings " + p("data/embeddings.txt") + " --out " + p("x"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("missing.csv"), std::string::npos) << r.output;

  r = mgf_run("cv --task nonsense" + data_args() + " --out " + p("x"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("--task"), std::string::npos) << r.output;

  r = mgf_run("cv" + data_args());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("--out"), std::string::npos) << r.output;
}

TEST_F(Cli, CorruptManifestNamesFile) {
  mgf::write_file(p("bad/manifest.csv"), "session_id,nope\n");
  auto r = mgf_run("cv --manifest " + p("bad/manifest.csv") + " --embeddings " + p("data/embeddings.txt") +
                   " --out " + p("x"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("manifest"), std::string::npos) << r.output;
}

TEST_F(Cli, CvWritesReportAndIsDeterministic) {
  auto a = mgf_run("cv --folds 4" + data_args() + kSmall + " --out " + p("cv_a"));
  ASSERT_EQ(a.code, 0) << a.output;
  auto b = mgf_run("cv --folds 4" + data_args() + kSmall + " --out " + p("cv_b"));
  ASSERT_EQ(b.code, 0) << b.output;
  const auto report = mgf::read_file(p("cv_a/report.json"));
  EXPECT_EQ(report, mgf::read_file(p("cv_b/report.json")));
  auto j = nlohmann::json::parse(report);
  EXPECT_EQ(j["protocol"], "4-fold");
  EXPECT_EQ(j["n"], 16);
  EXPECT_TRUE(j["metrics"]["accuracy"].is_number());
  EXPECT_EQ(j["folds"].size(), 4u);
}

TEST_F(Cli, ConfigReplayReproducesReport) {
  ASSERT_EQ(mgf_run("cv --folds 3 --seed 9" + data_args() + kSmall + " --out " + p("cv_c")).code, 0);
  auto cfg = nlohmann::json::parse(mgf::read_file(p("cv_c/config.json")));
  // every default is spelled out
  EXPECT_EQ(cfg["train"]["patience"], 10);
  EXPECT_EQ(cfg["train"]["batch_size"], 32);
  EXPECT_EQ(cfg["featurize"]["alpha"], 0.05);
  EXPECT_EQ(cfg["arch"]["audio"]["timestep"], 20);
  EXPECT_EQ(cfg["workers"], 1);
  auto r = mgf_run("cv --config " + p("cv_c/config.json") + " --out " + p("cv_d"));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(mgf::read_file(p("cv_c/report.json")), mgf::read_file(p("cv_d/report.json")));
}

TEST_F(Cli, WorkersDoNotChangeReport) {
  ASSERT_EQ(mgf_run("cv --folds 4" + data_args() + kSmall + " --workers 1 --out " + p("w1")).code, 0);
  ASSERT_EQ(mgf_run("cv --folds 4" + data_args() + kSmall + " --workers 3 --out " + p("w3")).code, 0);
  EXPECT_EQ(mgf::read_file(p("w1/report.json")), mgf::read_file(p("w3/report.json")));
}

TEST_F(Cli, DeclineDefaultsToLoso) {
  auto r = mgf_run("cv --task decline" + data_args() + kArch + " --max-epochs 1 --out " + p("dec"));
  ASSERT_EQ(r.code, 0) << r.output;
  auto j = nlohmann::json::parse(mgf::read_file(p("dec/report.json")));
  EXPECT_EQ(j["protocol"], "loso");
  r = mgf_run("cv --task decline --folds 2" + data_args() + kArch + " --max-epochs 1 --out " + p("dec2"));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(nlohmann::json::parse(mgf::read_file(p("dec2/report.json")))["protocol"], "2-fold");
}

TEST_F(Cli, TrainPredictEvalRoundTrip) {
  auto r = mgf_run("train" + data_args() + kSmall + " --out " + p("tr"));
  ASSERT_EQ(r.code, 0) << r.output;
  for (const char* f : {"model.ckpt", "train_log.csv", "config.json"}) EXPECT_TRUE(fs::exists(p("tr") + "/" + f)) << f;
  EXPECT_EQ(mgf::read_file(p("tr/train_log.csv")).rfind("epoch,train_loss,val_loss", 0), 0u);

  ASSERT_EQ(mgf_run("train" + data_args() + kSmall + " --out " + p("tr2")).code, 0);
  EXPECT_EQ(mgf::read_file(p("tr/model.ckpt")), mgf::read_file(p("tr2/model.ckpt")));

  r = mgf_run("predict" + data_args() + " --checkpoint " + p("tr/model.ckpt") + " --out " + p("pr"));
  ASSERT_EQ(r.code, 0) << r.output;
  const auto preds = mgf::read_file(p("pr/predictions.csv"));
  EXPECT_EQ(preds.rfind("session_id,score,label\n", 0), 0u);
  EXPECT_EQ(std::count(preds.begin(), preds.end(), '\n'), 17);

  r = mgf_run("eval" + data_args() + " --checkpoint " + p("tr/model.ckpt") + " --out " + p("ev"));
  ASSERT_EQ(r.code, 0) << r.output;
  auto j = nlohmann::json::parse(mgf::read_file(p("ev/report.json")));
  EXPECT_EQ(j["n"], 16);
}

TEST_F(Cli, PredictRejectsMismatchedFeatures) {
  ASSERT_EQ(mgf_run("train" + data_args() + kSmall + " --out " + p("trm")).code, 0);
  auto r = mgf_run("predict" + data_args() + " --no-lmprob --checkpoint " + p("trm/model.ckpt") + " --out " + p("prm"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("--no-lmprob"), std::string::npos) << r.output;

  // same vocabulary, different vectors
  std::string emb = mgf::read_file(p("data/embeddings.txt"));
  emb[emb.find('.') + 1] = emb[emb.find('.') + 1] == '9' ? '1' : '9';
  mgf::write_file(p("other.txt"), emb);
  r = mgf_run("predict --manifest " + p("data/manifest.csv") + " --embeddings " + p("other.txt") + " --checkpoint " +
              p("trm/model.ckpt") + " --out " + p("prm"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("other.txt"), std::string::npos) << r.output;

  mgf::write_file(p("junk.ckpt"), "not a checkpoint");
  r = mgf_run("predict" + data_args() + " --checkpoint " + p("junk.ckpt") + " --out " + p("prm"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("junk.ckpt"), std::string::npos) << r.output;
}

TEST_F(Cli, ExtractWritesPerSessionCsvs) {
  auto r = mgf_run("extract" + data_args() + " --out " + p("ex"));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(p("ex/functionals/S00.csv")));
  EXPECT_TRUE(fs::exists(p("ex/lexical/S15.csv")));
  r = mgf_run("extract --no-disfl --no-pause --no-lmprob" + data_args() + " --out " + p("ex_words"));
  ASSERT_EQ(r.code, 0) << r.output;
  const auto lex = mgf::read_file(p("ex_words/lexical/S00.csv"));
  const auto header = lex.substr(0, lex.find('\n'));
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), 99);  // 100 embedding columns only
}
