// Runs the gslosh binary end to end on a tiny fixture.

#include "gsnn/dataset.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

const fs::path& workdir() {
  static const fs::path d = [] {
    const auto p = fs::temp_directory_path() / "gsnn_cli";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return d;
}

std::string at(const std::string& name) { return (workdir() / name).string(); }

struct CliRun {
  int code = -1;
  std::string err;
};

CliRun gslosh(const std::string& args, const std::string& env = "") {
  const std::string err = at("stderr.txt");
  const std::string cmd = env + " \"" GSLOSH_BIN "\" " + args + " 2> \"" + err + "\" > /dev/null";
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream is(err);
  std::stringstream ss;
  ss << is.rdbuf();
  r.err = ss.str();
  return r;
}

std::vector<unsigned char> bytes(const std::string& p) { return gsnn::io::read_file(p); }

const char* kTiny = R"({"autoencoders": {"groups": [
  {"group": "q", "hidden": [8], "output_size": 2, "train": {"epochs": 30, "lr": 0.003, "batch": 32}},
  {"group": "v", "hidden": [8], "output_size": 2, "train": {"epochs": 30, "lr": 0.003, "batch": 32}},
  {"group": "e", "hidden": [8], "output_size": 2, "train": {"epochs": 30, "lr": 0.003, "batch": 32}},
  {"group": "sigma", "hidden": [8], "output_size": 2, "train": {"epochs": 30, "lr": 0.003, "batch": 32}},
  {"group": "tau", "hidden": [8], "output_size": 2, "train": {"epochs": 30, "lr": 0.003, "batch": 32}}],
  "latent_dim": 5, "finetune_epochs": 5},
 "gru": {"layers": 2, "hidden": 6, "window": 4, "train": {"epochs": 20, "lr": 0.003, "batch": 32}},
 "spnn": {"layers": 3, "width": 16, "train": {"epochs": 20, "batch": 32}},
 "correction": {"spnn_unfrozen": 2, "lr": 0.001, "epochs": 10}})";

const std::string kSmall = " --duration 0.2 --columns 20 --stations 5 -q";

/// Source recordings and a trained tiny model, built once.
const std::string& model() {
  static const std::string dir = [] {
    gsnn::write_text(at("tiny.json"), kTiny);
    EXPECT_EQ(gslosh("gen --impulse 0.03 --out " + at("a.bin") + kSmall).code, 0);
    EXPECT_EQ(gslosh("gen --impulse -0.05 --out " + at("b.bin") + kSmall).code, 0);
    const std::string common = " --data " + at("a.bin") + " " + at("b.bin") + " --config " + at("tiny.json") +
                               " --out " + at("model") + " -q";
    EXPECT_EQ(gslosh("train-ae" + common).code, 0);
    EXPECT_EQ(gslosh("train-gru" + common).code, 0);
    EXPECT_EQ(gslosh("train-spnn" + common).code, 0);
    EXPECT_EQ(gslosh("gen --impulse 0.04 --dt 0.015 --viscosity-scale 0.3 --duration 0.6 --columns 20 --stations 5 "
                     "--out " + at("target.bin") + " -q")
                  .code,
              0);
    return at("model");
  }();
  return dir;
}

}  // namespace

TEST(Cli, GenIsDeterministicAndRecordsFluid) {
  ASSERT_EQ(gslosh("gen --seed 3 --noise 0.001 --out " + at("g1.bin") + kSmall).code, 0);
  ASSERT_EQ(gslosh("gen --seed 3 --noise 0.001 --out " + at("g2.bin") + kSmall).code, 0);
  EXPECT_EQ(bytes(at("g1.bin")), bytes(at("g2.bin")));
  ASSERT_EQ(gslosh("gen --noise 0.001 --out " + at("g3.bin") + kSmall, "GSLOSH_SEED=3").code, 0);
  EXPECT_EQ(bytes(at("g1.bin")), bytes(at("g3.bin")));
  const auto m = gsnn::read_json(at("g1.bin.manifest.json"));
  EXPECT_EQ(m["command"], "gen");
  EXPECT_EQ(m["seed"], 3);
  EXPECT_EQ(m["config"]["fluid"]["k"].get<double>(), 0.950);
  EXPECT_EQ(m["config"]["fluid"]["density"].get<double>(), 1261.0);
  EXPECT_EQ(m["outputs"].size(), 2u);
}

TEST(Cli, ZeroImpulseGivesFlatSurface) {
  ASSERT_EQ(gslosh("gen --fluid glycerine --impulse 0 --out " + at("flat.bin") + kSmall).code, 0);
  const auto ds = gsnn::read_dataset(at("flat.bin"));
  const auto& s = ds.group(gsnn::kSurfaceGroup);
  for (std::size_t i = 1; i < s.data.size(); i += 2) EXPECT_EQ(s.data[i], s.data[1]);
}

TEST(Cli, InvalidParametersPrintUsage) {
  const CliRun a = gslosh("gen --fluid mercury --out " + at("x.bin"));
  EXPECT_EQ(a.code, 2);
  EXPECT_NE(a.err.find("Usage"), std::string::npos);
  EXPECT_NE(gslosh("gen --duration -1 --out " + at("x.bin")).code, 0);
  EXPECT_NE(gslosh("gen").code, 0);
  EXPECT_FALSE(fs::exists(at("x.bin")));
}

TEST(Cli, StagesAreOrdered) {
  model();
  const CliRun r = gslosh("train-spnn --data " + at("a.bin") + " --config " + at("tiny.json") + " --out " + at("empty"));
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("train-ae"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(at("empty") + "/spnn.gsnn"));
}

TEST(Cli, TrainingWritesManifestsAndLogs) {
  const auto& dir = model();
  for (const char* f : {"ae.gsnn", "gru.gsnn", "spnn.gsnn", "model.json", "ae_loss.csv", "gru_loss.csv", "spnn_loss.csv",
                        "manifest.train-ae.json", "manifest.train-gru.json", "manifest.train-spnn.json"})
    EXPECT_TRUE(fs::exists(fs::path(dir) / f)) << f;
  const auto m = gsnn::read_json(dir + "/manifest.train-spnn.json");
  EXPECT_EQ(m["config"]["spnn"]["layers"], 3);
  EXPECT_TRUE(m["checkpoints"].contains("spnn"));
}

TEST(Cli, RetrainingReproducesCheckpoints) {
  const auto& dir = model();
  const std::string common = " --data " + at("a.bin") + " " + at("b.bin") + " --config " + at("tiny.json") + " --out " +
                             at("model2") + " -q";
  ASSERT_EQ(gslosh("train-ae" + common).code, 0);
  ASSERT_EQ(gslosh("train-gru" + common).code, 0);
  for (const char* f : {"ae.gsnn", "gru.gsnn", "gru_loss.csv"})
    EXPECT_EQ(bytes(dir + "/" + f), bytes(at("model2") + "/" + f)) << f;
}

TEST(Cli, CorrectWithZeroEpochsKeepsCheckpoints) {
  const auto& dir = model();
  ASSERT_EQ(gslosh("correct --source " + dir + " --observations " + at("target.bin") + " --config " + at("tiny.json") +
                   " --epochs 0 --out " + at("c0") + " -q")
                .code,
            0);
  for (const char* f : {"ae.gsnn", "gru.gsnn", "spnn.gsnn"})
    EXPECT_EQ(bytes(dir + "/" + f), bytes(at("c0") + "/" + f)) << f;
}

TEST(Cli, CorrectLowersRewardAndKeepsDecoder) {
  const auto& dir = model();
  ASSERT_EQ(gslosh("correct --source " + dir + " --observations " + at("target.bin") + " --config " + at("tiny.json") +
                   " --out " + at("c1") + " -q")
                .code,
            0);
  EXPECT_EQ(bytes(dir + "/ae.gsnn"), bytes(at("c1") + "/ae.gsnn"));
  const auto m = gsnn::read_json(at("c1") + "/manifest.correct.json");
  EXPECT_EQ(m["config"]["spnn_unfrozen"], 2);
  EXPECT_EQ(m["config"]["lambda"], 2000.0);
  EXPECT_LT(m["results"]["after"]["train"]["total"].get<double>(), m["results"]["before"]["train"]["total"].get<double>());
  std::ifstream csv(at("c1") + "/rewards.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "epoch,surface,degeneracy,total");
}

TEST(Cli, SimulateZeroStepsIsEmpty) {
  const auto& dir = model();
  ASSERT_EQ(gslosh("simulate --model " + dir + " --observations " + at("a.bin") + " --steps 0 --out " + at("s0.bin") + " -q")
                .code,
            0);
  const auto ds = gsnn::read_dataset(at("s0.bin"));
  EXPECT_EQ(ds.snapshots(), 0u);
  EXPECT_EQ(ds.groups.size(), 6u);
}

TEST(Cli, SimulateThenEvaluate) {
  const auto& dir = model();
  ASSERT_EQ(gslosh("simulate --model " + dir + " --observations " + at("a.bin") +
                   " --steps 5 --mode closed-loop --out " + at("s5.bin") + " -q")
                .code,
            0);
  ASSERT_EQ(gslosh("evaluate --pred " + at("s5.bin") + " --truth " + at("a.bin") + " --out " + at("e5.csv") + " -q").code, 0);
  std::ifstream csv(at("e5.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "snapshot,time_s,rel_err,split");
  std::getline(csv, line);
  EXPECT_EQ(line.substr(0, 2), "4,");  // window 4: the first prediction is snapshot 4
  EXPECT_TRUE(fs::exists(at("e5.csv.summary.json")));
  EXPECT_NE(gslosh("simulate --model " + dir + " --observations " + at("a.bin") + " --steps 5 --mode sideways --out " +
                   at("bad.bin"))
                .code,
            0);
}

TEST(Cli, EvaluateIdenticalIsZero) {
  model();
  ASSERT_EQ(gslosh("evaluate --pred " + at("a.bin") + " --truth " + at("a.bin") + " --out " + at("e0.csv") + " -q").code, 0);
  std::ifstream csv(at("e0.csv"));
  std::string line;
  std::getline(csv, line);
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    std::stringstream row(line);
    std::string snap, t, e;
    std::getline(row, snap, ',');
    std::getline(row, t, ',');
    std::getline(row, e, ',');
    EXPECT_EQ(e, "0");
  }
  EXPECT_EQ(rows, 40u);
}
