#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "beltrami/cli.hpp"
#include "beltrami/fixtures.hpp"
#include "beltrami/oracles.hpp"

using namespace beltrami;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const std::string kFixtures = BELTRAMI_FIXTURES;

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "beltrami");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string fixture(const std::string& name) { return kFixtures + "/" + name; }

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("beltrami_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(path(name)) << text;
    return path(name);
  }

  fs::path dir_;
};

std::string slurp(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const std::string& p) { return json::parse(slurp(p)); }

Matrix read_csv(const std::string& p) {
  std::ifstream in(p);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<double> r;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) r.push_back(std::stod(cell));
    rows.push_back(r);
  }
  Matrix m(rows.size(), rows.empty() ? 0 : rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  return m;
}

std::vector<json> read_jsonl(const std::string& p) {
  std::ifstream in(p);
  std::vector<json> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(json::parse(line));
  return out;
}

}  // namespace

TEST_F(Cli, EncodePprFile) {
  const auto r = run({"encode", "--graph", fixture("path3.edges"), "--positional", "ppr", "--beta", "0.5", "--out",
                      path("pe.txt")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("n=3 d'=3"), std::string::npos);
  const Matrix pe = io::load_matrix(path("pe.txt"));
  PprConfig c;
  c.beta = 0.5;
  EXPECT_LE(max_abs_diff(pe, ppr_encode(fixtures::path(3), c).matrix), 1e-15);
}

TEST_F(Cli, EncodeNothingIsAnInputError) {
  const auto r = run({"encode", "--graph", fixture("path3.edges"), "--out", path("pe.txt")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("nothing to encode"), std::string::npos);
}

TEST_F(Cli, EncodePoincareStaysInBall) {
  const auto r = run({"encode", "--graph", fixture("karate.edges"), "--positional", "poincare", "--embed_epochs", "30",
                      "--out", path("pe.txt")});
  ASSERT_EQ(r.code, 0) << r.err;
  const Matrix pe = io::load_matrix(path("pe.txt"));
  ASSERT_EQ(pe.rows(), 34u);
  ASSERT_EQ(pe.cols(), 2u);
  for (std::size_t i = 0; i < 34; ++i) EXPECT_LT(std::hypot(pe(i, 0), pe(i, 1)), 1.0);
}

TEST_F(Cli, DiffuseWritesSnapshotsOnTheGrid) {
  const auto r = run({"diffuse", "--graph", fixture("cycle6.edges"), "--tau", "0.3", "--t_end", "1", "--out",
                      path("d")});
  ASSERT_EQ(r.code, 0) << r.err;
  const json stats = read_json(path("d/stats.json"));
  ASSERT_EQ(stats["snapshots"].size(), 4u);
  const double expect[4] = {0.3, 0.6, 0.9, 1.0};
  for (std::size_t q = 0; q < 4; ++q) {
    EXPECT_NEAR(stats["snapshots"][q]["t"].get<double>(), expect[q], 1e-15);
    EXPECT_TRUE(fs::exists(path("d/" + stats["snapshots"][q]["file"].get<std::string>())));
  }
  EXPECT_EQ(stats["accepted_steps"], 4);
  EXPECT_EQ(stats["status"], "ok");
  EXPECT_EQ(read_csv(path("d/snapshot_1.csv")).rows(), 6u);
}

TEST_F(Cli, DiffuseConstantFeaturesStayPut) {
  const std::string feat = write("feat.txt", "6 2\n0.5 -1\n0.5 -1\n0.5 -1\n0.5 -1\n0.5 -1\n0.5 -1\n");
  const auto r = run({"diffuse", "--graph", fixture("cycle6.edges"), "--features", feat, "--method", "rk4",
                      "--init", "random", "--out", path("d")});
  ASSERT_EQ(r.code, 0) << r.err;
  const Matrix last = read_csv(path("d/snapshot_10.csv"));
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(last(i, 0), 0.5);
    EXPECT_EQ(last(i, 1), -1.0);
  }
}

TEST_F(Cli, DiffuseFrozenWeightsMatchMatrixExponential) {
  const auto r = run({"diffuse", "--graph", fixture("cycle6.edges"), "--method", "dopri5", "--rtol", "1e-10", "--atol",
                      "1e-12", "--t_end", "1.5", "--snapshot_every", "0", "--frozen_weights", "--init", "random",
                      "--seed", "4", "--out", path("d")});
  ASSERT_EQ(r.code, 0) << r.err;
  const json stats = read_json(path("d/stats.json"));
  ASSERT_EQ(stats["snapshots"].size(), 1u);
  const Matrix got = read_csv(path("d/" + stats["snapshots"][0]["file"].get<std::string>()));

  const Graph g = io::load_graph(fixture("cycle6.edges")).graph;
  const auto s0 = JointState<double>::features_only(from_eigen(Eigen::MatrixXd::Identity(6, 6)));
  std::mt19937_64 rng(4);
  const auto p = verify::detail::random_params(Kernel::ScaledDot, Normalizer::Softmax, 4, 0, 6, rng);
  const auto w = compute_weights(g, s0, p);
  const Eigen::MatrixXd gen = oracle::weight_matrix(g, w.values) - Eigen::MatrixXd::Identity(6, 6);
  const Matrix expect = from_eigen(oracle::expm(gen * 1.5));
  EXPECT_LT(max_abs_diff(got, expect), 1e-6);
}

TEST_F(Cli, DiffuseSolverFailureDumpsPartialOutput) {
  const auto r = run({"diffuse", "--graph", fixture("cycle6.edges"), "--tau", "0.1", "--max_steps", "3", "--out",
                      path("d")});
  EXPECT_EQ(r.code, 1);
  const json stats = read_json(path("d/stats.json"));
  EXPECT_EQ(stats["status"], "failed");
  EXPECT_NE(stats["error"].get<std::string>().find("max_steps"), std::string::npos);
  EXPECT_EQ(stats["accepted_steps"], 3);
}

TEST_F(Cli, TrainZeroLearningRateIsFlat) {
  const auto r = run({"train", "--graph", fixture("karate.edges"), "--labels", fixture("karate.labels"), "--lr", "0",
                      "--epochs", "5", "--out", path("t")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto m = read_jsonl(path("t/metrics.jsonl"));
  ASSERT_EQ(m.size(), 5u);
  for (const auto& e : m) EXPECT_EQ(e["train_loss"], m[0]["train_loss"]);
}

TEST_F(Cli, TrainSeparatesTwoCliquesAndEvalAgrees) {
  const auto r = run({"train", "--graph", fixture("two_clique.edges"), "--labels", fixture("two_clique.labels"),
                      "--features", fixture("two_clique.features"), "--train_per_class", "2", "--lr", "0.2",
                      "--epochs", "60", "--tau", "0.5", "--out", path("t")});
  ASSERT_EQ(r.code, 0) << r.err;
  const json s = read_json(path("t/summary.json"));
  EXPECT_EQ(s["train_acc"], 1.0);
  EXPECT_EQ(s["test_acc"], 1.0);
  EXPECT_EQ(s["split"]["train"], 4);
  const auto e = run({"eval", "--graph", fixture("two_clique.edges"), "--labels", fixture("two_clique.labels"),
                      "--features", fixture("two_clique.features"), "--train_per_class", "2", "--tau", "0.5",
                      "--params", path("t/params.json"), "--out", path("eval.json")});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_EQ(read_json(path("eval.json"))["test_acc"], 1.0);
  // wrong input width
  const auto bad = run({"eval", "--graph", fixture("two_clique.edges"), "--labels", fixture("two_clique.labels"),
                        "--params", path("t/params.json")});
  EXPECT_EQ(bad.code, 2);
}

TEST_F(Cli, TrainIsByteIdenticalAcrossRuns) {
  for (const char* d : {"a", "b"}) {
    const auto r = run({"train", "--graph", fixture("karate.edges"), "--labels", fixture("karate.labels"), "--seed",
                        "5", "--epochs", "8", "--val_per_class", "2", "--out", path(d)});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  for (const char* f : {"metrics.jsonl", "summary.json", "params.json"})
    EXPECT_EQ(slurp(path(std::string("a/") + f)), slurp(path(std::string("b/") + f))) << f;
}

TEST_F(Cli, VerifyPolyakovReportsCurves) {
  const auto r = run({"verify", "polyakov", "--out", path("v.json")});
  ASSERT_EQ(r.code, 0) << r.out;
  const json v = read_json(path("v.json"));
  EXPECT_TRUE(v["passed"].get<bool>());
  const json& suite = v["suites"][0];
  EXPECT_EQ(suite["suite"], "polyakov");
  ASSERT_TRUE(suite.contains("curves"));
  ASSERT_EQ(suite["curves"].size(), 2u);
  for (const auto& [name, families] : suite["curves"].items())
    for (const auto& [family, curve] : families.items()) {
      const auto& s = curve["action"];
      EXPECT_GT(s.size(), 1u);
      for (std::size_t k = 1; k < s.size(); ++k)
        EXPECT_LE(s[k].get<double>(), s[k - 1].get<double>()) << name << " " << family;
    }
}

TEST_F(Cli, VerifyDirectedSlotAuditFails) {
  const auto r = run({"verify", "graph", "--directed_slots", fixture("asymmetric.slots")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("symmetry"), std::string::npos);
}

TEST_F(Cli, ConfigFileWithFlagPrecedence) {
  const std::string cfg = write("run.cfg", "# training defaults\nepochs = 3\nlr = 0\nseed = 2\n");
  const auto r = run({"train", "--graph", fixture("karate.edges"), "--labels", fixture("karate.labels"), "--config", cfg,
                      "--epochs", "2", "--out", path("t")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto m = read_jsonl(path("t/metrics.jsonl"));
  ASSERT_EQ(m.size(), 2u);  // flag wins
  EXPECT_EQ(m[0]["train_loss"], m[1]["train_loss"]);  // lr from the file
  const std::string bad = write("bad.cfg", "epochz = 3\n");
  EXPECT_EQ(run({"train", "--graph", fixture("karate.edges"), "--labels", fixture("karate.labels"), "--config", bad,
                 "--out", path("t2")})
                .code,
            2);
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run({"--help"}).code, 0);
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"verify", "bogus"}).code, 2);
  EXPECT_EQ(run({"train", "--graph", path("missing.edges"), "--labels", fixture("karate.labels"), "--out", path("t")})
                .code,
            2);
  EXPECT_EQ(run({"diffuse", "--graph", fixture("cycle6.edges"), "--tau", "-1", "--out", path("d")}).code, 2);
  EXPECT_EQ(run({"diffuse", "--graph", fixture("cycle6.edges"), "--rewiring", "knn_adaptive", "--out", path("d")}).code,
            2);
  EXPECT_EQ(run({"encode", "--graph", fixture("cycle6.edges"), "--positional", "ppr", "--beta", "1.5", "--out",
                 path("pe.txt")})
                .code,
            2);
}

TEST_F(Cli, BinaryExitStatus) {
  const std::string bin = BELTRAMI_CLI;
  auto status = [&](const std::string& args) {
    const int s = std::system((bin + " " + args + " > " + path("log.txt") + " 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  EXPECT_EQ(status("verify attention"), 0);
  EXPECT_EQ(status("verify bogus"), 2);
  EXPECT_EQ(status("verify graph --directed_slots " + fixture("asymmetric.slots")), 1);
}
