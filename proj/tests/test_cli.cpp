#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

namespace {

const fs::path& dir() {
  static const fs::path d = [] {
    auto p = fs::temp_directory_path() / ("ikr_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return d;
}

int cli(const std::string& args) {
  const std::string cmd = std::string(IKR_CLI_PATH) + " " + args + " >" + (dir() / "out.txt").string() + " 2>" +
                          (dir() / "err.txt").string();
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

const std::string kData = "--dataset blobs:5 --validation 200";
const std::string kModel = "--model arch:1x4C3-MP2-3Softmax@1x8x8";

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(cli(""), 2);
  EXPECT_EQ(cli("frobnicate"), 2);
  EXPECT_EQ(cli("cost-sweep --param bogus"), 2);
  EXPECT_EQ(cli("train " + kData + " " + kModel), 2);  // --out missing
  EXPECT_EQ(cli("cost-sweep --n-keep 12"), 2);
}

TEST(Cli, CostSweepCsv) {
  ASSERT_EQ(cli("cost-sweep --param n_pat --values 1,2,4 --n-keep 4"), 0);
  const auto out = slurp(dir() / "out.txt");
  EXPECT_EQ(out.substr(0, out.find('\n')), "param,value,mux_cost,multipliers,adder_depth");
}

TEST(Cli, ReportBuiltIn) {
  ASSERT_EQ(cli("report --model lenet5 --json " + (dir() / "r.json").string()), 0);
  EXPECT_NE(slurp(dir() / "out.txt").find("35520"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir() / "r.json"));
  EXPECT_EQ(cli("report --model lenet5 --reference vgg"), 2);
}

TEST(Cli, DataErrorsExitThree) {
  EXPECT_EQ(cli("train --dataset mnist:/nonexistent --out " + (dir() / "x.ikrm").string()), 3);
  EXPECT_EQ(cli("eval --dataset blobs:1 --model " + (dir() / "missing.ikrm").string()), 3);
}

TEST(Cli, CorruptModelExitsFour) {
  {
    std::ofstream os(dir() / "bad.ikrm", std::ios::binary);
    os << "IKRMgarbage";
  }
  EXPECT_EQ(cli("eval " + kData + " --model " + (dir() / "bad.ikrm").string()), 4);
  EXPECT_EQ(cli("validate " + (dir() / "bad.ikrm").string()), 4);
}

TEST(Cli, TrainPruneRetrainExportEval) {
  const auto d = dir();
  {
    std::ofstream os(d / "cfg.txt");
    os << "layer=0 K=3 nsets=2 npat=4 nkeep=4\nlayer=1 K=3 nsets=2 npat=4 nkeep=3\n";
  }
  const std::string hyper = " --schedule 3:1e-2 --batch 16 --quiet";
  ASSERT_EQ(cli("train " + kData + " " + kModel + hyper + " --out " + (d / "base.ikrm").string()), 0);
  ASSERT_EQ(cli("prune --model " + (d / "base.ikrm").string() + " --config " + (d / "cfg.txt").string() + " --out " +
                (d / "pruned.ikrm").string() + " --csp " + (d / "struct.ikrc").string()),
            0);
  ASSERT_EQ(cli("retrain " + kData + hyper + " --structure " + (d / "struct.ikrc").string() + " --out " +
                (d / "retrained.ikrm").string()),
            0);
  ASSERT_EQ(cli("export-csp --structure " + (d / "struct.ikrc").string() + " --model " +
                (d / "retrained.ikrm").string() + " --out " + (d / "final.ikrc").string()),
            0);
  ASSERT_EQ(cli("validate " + (d / "final.ikrc").string()), 0);
  EXPECT_EQ(slurp(d / "out.txt").rfind("IKRC ok", 0), 0u);
  ASSERT_EQ(cli("validate " + (d / "base.ikrm").string()), 0);
  EXPECT_EQ(slurp(d / "out.txt").rfind("IKRM ok", 0), 0u);
  ASSERT_EQ(cli("eval " + kData + " --model " + (d / "final.ikrc").string()), 0);
  const auto sparse = slurp(d / "out.txt");
  ASSERT_EQ(cli("eval " + kData + " --model " + (d / "retrained.ikrm").string()), 0);
  EXPECT_EQ(slurp(d / "out.txt"), sparse);
  // weights that violate the structure are rejected
  EXPECT_EQ(cli("export-csp --structure " + (d / "struct.ikrc").string() + " --model " + (d / "base.ikrm").string() +
                " --out " + (d / "bad.ikrc").string()),
            4);
}
