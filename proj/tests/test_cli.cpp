#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "slrvb/data_io.hpp"
#include "slrvb/fit_document.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kCli = SLRVB_CLI_PATH;
const fs::path kGolden = SLRVB_GOLDEN_DIR;

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("slrvb_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  /// Runs the CLI with stdout captured to `log`; returns the exit status.
  int run(const std::string& args, const std::string& log = "out.txt") const {
    const std::string cmd = kCli + " " + args + " > " + path(log) + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  void write(const std::string& name, const std::string& text) const {
    std::ofstream(path(name), std::ios::binary) << text;
  }

  fs::path dir_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("simulate --phi 1.2 --out " + path("y.csv")), 1);
  EXPECT_EQ(run("simulate --sigma2 -1 --out " + path("y.csv")), 1);
  EXPECT_EQ(run("simulate --T 0 --out " + path("y.csv")), 1);
  EXPECT_EQ(run("fit --model nope --data x --out y"), 1);
  EXPECT_EQ(run("fit --model conjugate --out y"), 1);
  write("y.csv", "y\n1\n");
  EXPECT_EQ(run("fit --model conjugate --data " + path("y.csv") + " --estimator magic --out " + path("f.json")), 1);
  EXPECT_EQ(run("fit --model conjugate --data " + path("y.csv") + " --method newton --out " + path("f.json")), 1);
  EXPECT_EQ(run("diagnose --fit " + path("missing.json")), 1);
}

TEST_F(Cli, SimulateMatchesGoldenAndRepeats) {
  ASSERT_EQ(run("simulate --T 50 --seed 7 --out " + path("a.csv")), 0);
  ASSERT_EQ(run("simulate --T 50 --seed 7 --out " + path("b.csv")), 0);
  EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));
  EXPECT_EQ(slurp(path("a.csv")), slurp(kGolden / "simulate_T50_seed7.csv"));
  ASSERT_EQ(run("simulate --T 50 --seed 8 --out " + path("c.csv")), 0);
  EXPECT_NE(slurp(path("a.csv")), slurp(path("c.csv")));
}

TEST_F(Cli, ConjugateFitMatchesGoldenAndRepeats) {
  write("y.csv", "y\n1\n1\n1\n1\n");
  const std::string args = "fit --model conjugate --data " + path("y.csv") + " --out ";
  ASSERT_EQ(run(args + path("a.json")), 0);
  ASSERT_EQ(run(args + path("b.json")), 0);
  EXPECT_EQ(slurp(path("a.json")), slurp(path("b.json")));
  EXPECT_EQ(slurp(path("a.json")), slurp(kGolden / "fit_conjugate.json"));
  const slrvb::FitDocument d = slrvb::read_fit_document(path("a.json"));
  EXPECT_TRUE(d.converged);
  EXPECT_GE(d.r2.value, 0.999);
}

TEST_F(Cli, NotConvergedExitCode) {
  write("y.csv", "y\n1\n1\n1\n1\n");
  EXPECT_EQ(run("fit --model conjugate --data " + path("y.csv") +
                " --estimator sample-cov --ctol 1e-30 --max-iters 40 --out " + path("f.json")),
            2);
  // the document is still written
  EXPECT_FALSE(slrvb::read_fit_document(path("f.json")).converged);
  EXPECT_EQ(run("fit --model conjugate --data " + path("y.csv") + " --method batch --max-outer 1 --grad-tol 1e-30 "
                "--out " + path("g.json")),
            2);
}

TEST_F(Cli, DiagnoseSampleAndCompare) {
  write("y.csv", "y\n1\n1\n1\n1\n");
  ASSERT_EQ(run("fit --model conjugate --data " + path("y.csv") + " --method batch --out " + path("f.json")), 0);
  ASSERT_EQ(run("diagnose --fit " + path("f.json") + " --out " + path("s.csv"), "diag.txt"), 0);
  const std::string diag = slurp(path("diag.txt"));
  const auto at = diag.find("R2 ");
  ASSERT_NE(at, std::string::npos);
  EXPECT_GE(std::stod(diag.substr(at + 3)), 0.999);
  EXPECT_NE(slurp(path("s.csv")).find("variable,mean,sd,q05,q50,q95\nmu,"), std::string::npos);

  ASSERT_EQ(run("sample --fit " + path("f.json") + " --n 1000 --out " + path("draws.csv")), 0);
  std::ifstream in(path("draws.csv"));
  const slrvb::Table t = slrvb::parse_table_csv(in);
  EXPECT_EQ(t.header, std::vector<std::string>{"mu"});
  EXPECT_EQ(t.rows.size(), 1000u);
  ASSERT_EQ(run("sample --fit " + path("f.json") + " --n 1000 --out " + path("again.csv")), 0);
  EXPECT_EQ(slurp(path("draws.csv")), slurp(path("again.csv")));

  ASSERT_EQ(run("mcmc --fit " + path("f.json") + " --iterations 40000 --burn-in 10000 --thin 3 --out " +
                path("ref.csv")),
            0);
  ASSERT_EQ(run("compare --fit " + path("f.json") + " --mcmc " + path("ref.csv") + " --out " + path("cmp.csv"),
                "cmp.txt"),
            0);
  const std::string cmp = slurp(path("cmp.csv"));
  EXPECT_EQ(cmp.rfind("variable,vb_mean,vb_sd,ref_mean,ref_sd,std_diff,sd_ratio,underestimated\nmu,", 0), 0u);
}

TEST_F(Cli, SchemaErrorsAreUsageErrors) {
  write("bad.json", "{\"schema_version\": 2}");
  EXPECT_EQ(run("diagnose --fit " + path("bad.json")), 1);
  write("ref.csv", "nu\n0\n1\n");
  write("y.csv", "y\n1\n");
  ASSERT_EQ(run("fit --model conjugate --data " + path("y.csv") + " --out " + path("f.json")), 0);
  EXPECT_EQ(run("compare --fit " + path("f.json") + " --mcmc " + path("ref.csv")), 1);
}

TEST_F(Cli, SampleCovRefusedForLargeBlocks) {
  ASSERT_EQ(run("simulate --T 300 --seed 1 --out " + path("y.csv")), 0);
  EXPECT_EQ(run("fit --model sv-a --data " + path("y.csv") + " --estimator sample-cov --out " + path("f.json")), 1);
}
