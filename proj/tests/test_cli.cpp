#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + std::string(YCD_CLI_PATH) + " " + args + " 2>&1";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    work_ = fs::temp_directory_path() / "ycd_cli";
    fs::remove_all(work_);
    fs::create_directories(work_);
    const auto r = run("synth --out " + (work_ / "data").string() + " --per-class 10 --resolution 32 --seed 4");
    ASSERT_EQ(r.code, 0) << r.out;
  }
  static void TearDownTestSuite() { fs::remove_all(work_); }

  static std::string data() { return (work_ / "data").string(); }
  static std::string path(const std::string& name) { return (work_ / name).string(); }
  static std::string train_args(const std::string& tag, const std::string& extra = "", int epochs = 6) {
    return "train --data " + data() + " --test-count 2 --alpha 0.25 --rho 1 --base-resolution 32 --epochs " +
           std::to_string(epochs) + " --out " +
           path(tag + ".ycdm") + " --metrics " + path(tag + ".csv") + " " + extra;
  }

  static fs::path work_;
};
fs::path Cli::work_;

}  // namespace

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("train --data /no/such/dir").code, 2);
  EXPECT_EQ(run("train --data " + data() + " --bogus").code, 2);
  EXPECT_EQ(run("info --alpha 2").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("train --data " + data() + " --test-count 2 --test-fraction 0.1").code, 2);
}

TEST_F(Cli, HelpExitsZero) {
  const auto r = run("--help");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("train"), std::string::npos);
}

TEST_F(Cli, ScanAndSplit) {
  auto r = run("dataset-scan --data " + data());
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("# repro seed=none"), std::string::npos);
  EXPECT_NE(r.out.find("1000"), std::string::npos);
  r = run("dataset-split --data " + data() + " --test-count 3 --seed 5 --out " + path("m.json"));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto j = nlohmann::json::parse(slurp(path("m.json")));
  EXPECT_EQ(j["entries"].size(), 40u);
  EXPECT_EQ(j["seed"], 5);
  EXPECT_EQ(run("dataset-split --data " + data() + " --test-count 10 --seed 5").code, 1);
}

TEST_F(Cli, TrainIsDeterministicAndWritesMetrics) {
  auto a = run(train_args("a", "--seed 3"));
  ASSERT_EQ(a.code, 0) << a.out;
  EXPECT_NE(a.out.find("# repro seed=3 digest="), std::string::npos);
  EXPECT_NE(a.out.find("--epochs 6"), std::string::npos);
  EXPECT_NE(a.out.find("CLASS\tACCURACY\t# SAMPLES"), std::string::npos);
  auto b = run(train_args("b", "--seed 3"));
  ASSERT_EQ(b.code, 0) << b.out;
  EXPECT_EQ(slurp(path("a.ycdm")), slurp(path("b.ycdm")));
  EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));
  const auto csv = slurp(path("a.csv"));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);

  auto c = run(train_args("c", "--seed 4"));
  ASSERT_EQ(c.code, 0);
  EXPECT_NE(slurp(path("a.ycdm")), slurp(path("c.ycdm")));
}

TEST_F(Cli, RefusesToOverwriteWithoutForce) {
  ASSERT_EQ(run(train_args("o", "", 1)).code, 0);
  const auto before = slurp(path("o.ycdm"));
  const auto r = run(train_args("o", "--seed 9", 1));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("--force"), std::string::npos);
  EXPECT_EQ(slurp(path("o.ycdm")), before);
  EXPECT_EQ(run(train_args("o", "--seed 9 --force", 1)).code, 0);
  EXPECT_NE(slurp(path("o.ycdm")), before);
}

TEST_F(Cli, EvalClassifyAndBench) {
  ASSERT_EQ(run(train_args("e", "--seed 2")).code, 0);
  auto r = run("eval --model " + path("e.ycdm") + " --data " + data() + " --test-count 2 --seed 2 --json " + path("e.json"));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto j = nlohmann::json::parse(slurp(path("e.json")));
  EXPECT_EQ(j["per_class"].size(), 4u);
  for (const auto& row : j["per_class"]) EXPECT_EQ(row["samples"], 2);

  r = run("classify --model " + path("e.ycdm") + " --top-k 2 " + data() + "/100/0000.png");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("0000.png"), std::string::npos);

  r = run("bench --model " + path("e.ycdm") + " --iterations 7");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("warmup 5 samples 7"), std::string::npos);
}

TEST_F(Cli, EvalRejectsForeignLabels) {
  ASSERT_EQ(run(train_args("f", "--seed 1")).code, 0);
  const fs::path other = work_ / "other";
  fs::create_directories(other / "5000");
  fs::copy_file(work_ / "data" / "100" / "0000.png", other / "5000" / "a.png");
  fs::copy_file(work_ / "data" / "100" / "0001.png", other / "5000" / "b.png");
  const auto r = run("eval --model " + path("f.ycdm") + " --data " + other.string() + " --test-count 1");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("'5000'"), std::string::npos);
}

TEST_F(Cli, InfoComparison) {
  const auto r = run("info --alpha 1 --rho 1 --compare-alpha 0.5");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("total MACs 567716352"), std::string::npos);
  EXPECT_NE(r.out.find("total params 3206976"), std::string::npos);
  EXPECT_NE(r.out.find("pointwise MAC ratio 0.2500"), std::string::npos);
}

TEST_F(Cli, EnvironmentSuppliesDefaultsAndFlagsWin) {
  ASSERT_EQ(run(train_args("g", "--seed 6")).code, 0);
  auto r = run("bench --iterations 2", "YCD_MODEL=" + path("g.ycdm"));
  EXPECT_EQ(r.code, 0) << r.out;
  r = run("bench --iterations 2 --model " + path("g.ycdm"), "YCD_MODEL=/no/such/model");
  EXPECT_EQ(r.code, 0) << r.out;
  r = run(train_args("h", "", 1), "YCD_SEED=42");
  EXPECT_NE(r.out.find("seed=42"), std::string::npos);
  r = run(train_args("i", "--seed 7", 1), "YCD_SEED=42");
  EXPECT_NE(r.out.find("seed=7"), std::string::npos);
}
