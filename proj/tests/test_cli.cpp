#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "support.hpp"

namespace {

using namespace reaffirm;
namespace fs = std::filesystem;
namespace fx = reaffirm::testing;

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("reaffirm_cli_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    write("threshold.model.json", serialize(fx::threshold_model()));
    write("threshold.stl", std::string(fx::kThresholdSpec) + "\n");
    write("noop.hatl", "# the model already declares theta\n");
    write("acc.model.json", serialize(cases::build_acc()));
    write("pattern1.hatl", cases::kPattern1);
    write("nominal.signals.json", serialize_signals(cases::acc_nominal_signals()));
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void write(const std::string& name, const std::string& content) const {
    std::ofstream(dir_ / name, std::ios::binary) << content;
  }

  /// Exit status of the CLI with `args`; output goes to files in the temp dir.
  int run(const std::string& args, const std::string& env = {}) const {
    const std::string cmd = (env.empty() ? "" : env + " ") + "'" + std::string(REAFFIRM_CLI) + "' " + args + " >'" +
                            path("stdout.txt") + "' 2>'" + path("stderr.txt") + "'";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string out() const { return fx::read_file(path("stdout.txt")); }
  std::string err() const { return fx::read_file(path("stderr.txt")); }

  std::string repair_threshold(const std::string& range, const std::string& out_dir, const std::string& extra = {},
                               const std::string& env = {}, int* code = nullptr) const {
    const int c = run("repair " + path("threshold.model.json") + " " + path("noop.hatl") + " " + path("threshold.stl") +
                          " --param theta:" + range + ":dec --T 2 --h 0.01 --budget-evals 40 --validation 20 --out " +
                          path(out_dir) + " " + extra,
                      env);
    if (code) *code = c;
    return fx::read_file(path(out_dir + "/report.json"));
  }

  fs::path dir_;
};

TEST_F(Cli, HelpListsSubcommands) {
  EXPECT_EQ(run("--help"), 0);
  for (const char* sub : {"validate", "transform", "simulate", "repair", "export-cases"}) {
    EXPECT_NE(out().find(sub), std::string::npos) << sub;
  }
}

TEST_F(Cli, ValidateExitCodes) {
  EXPECT_EQ(run("validate " + path("acc.model.json")), 0);
  EXPECT_NE(out().find("2 modes"), std::string::npos);

  HybridModel bad = cases::build_acc();
  bad.transitions.front().destination = 99;
  write("bad.model.json", serialize(bad));
  EXPECT_EQ(run("validate " + path("bad.model.json")), 1);
  EXPECT_FALSE(err().empty());

  write("broken.model.json", "{\"name\": ");
  EXPECT_EQ(run("validate " + path("broken.model.json")), 2);
}

TEST_F(Cli, TransformWritesOnlyOnSuccess) {
  EXPECT_EQ(run("transform " + path("acc.model.json") + " " + path("pattern1.hatl") + " " + path("p1.json")), 0);
  const HybridModel m = load_model(path("p1.json"));
  EXPECT_EQ(m.modes.size(), 4u);
  EXPECT_EQ(m.transitions.size(), 6u);

  write("bad.hatl", "model.addParam(\"theta\")\nmodel.frobnicate()\n");
  EXPECT_EQ(run("transform " + path("acc.model.json") + " " + path("bad.hatl") + " " + path("p2.json")), 1);
  EXPECT_FALSE(fs::exists(path("p2.json")));
  EXPECT_NE(err().find("frobnicate"), std::string::npos);
}

TEST_F(Cli, SimulateWritesCsvAndPlot) {
  ASSERT_EQ(run("simulate " + path("acc.model.json") + " " + path("nominal.signals.json") +
                " --T 1 --h 0.01 --out " + path("t/acc.csv")),
            0);
  const std::string csv = fx::read_file(path("t/acc.csv"));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "t,mode,d,v,e_d,e_v,ngps,nenc,nrad");
  EXPECT_TRUE(fs::exists(path("t/acc.plot.json")));
}

TEST_F(Cli, RepairSuccessAndFailure) {
  int code = -1;
  const std::string ok = repair_threshold("0:2", "ok", "--workers 1", {}, &code);
  EXPECT_EQ(code, 0);
  EXPECT_NE(ok.find("\"status\": \"Success\""), std::string::npos);
  EXPECT_TRUE(fs::exists(path("ok/repaired.model.json")));
  EXPECT_TRUE(fs::exists(path("ok/timing.json")));

  const std::string bad = repair_threshold("1.2:2", "bad", "--workers 1", {}, &code);
  EXPECT_EQ(code, 3);
  EXPECT_NE(bad.find("\"status\": \"Failure\""), std::string::npos);
  EXPECT_FALSE(fs::exists(path("bad/repaired.model.json")));
  EXPECT_NE(out().find("theta in [1.2, 2]"), std::string::npos);
}

TEST_F(Cli, ReportIsByteIdenticalAcrossRunsAndWorkers) {
  const std::string a = repair_threshold("0:2", "a", "--seed 7 --workers 1");
  const std::string b = repair_threshold("0:2", "b", "--seed 7 --workers 1");
  const std::string c = repair_threshold("0:2", "c", "--seed 7 --workers 4");
  ASSERT_FALSE(a.empty());
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, c);
  EXPECT_EQ(fx::read_file(path("a/repaired.model.json")), fx::read_file(path("c/repaired.model.json")));
}

TEST_F(Cli, SeedEnvironmentOverridesFlag) {
  const std::string env = repair_threshold("0:2", "env", "--seed 1 --workers 1", "REAFFIRM_SEED=9");
  const std::string flag = repair_threshold("0:2", "flag", "--seed 9 --workers 1");
  EXPECT_NE(env.find("\"seed\": 9"), std::string::npos);
  EXPECT_EQ(env, flag);
}

TEST_F(Cli, BadArgumentsFail) {
  EXPECT_NE(run("validate"), 0);
  EXPECT_EQ(run("validate " + path("missing.json")), 1);
  int code = 0;
  repair_threshold("2:0", "empty", {}, {}, &code);
  EXPECT_EQ(code, 1);
  repair_threshold("0:2", "envbad", {}, "REAFFIRM_SEED=abc", &code);
  EXPECT_EQ(code, 1);
}

TEST_F(Cli, ExportCasesMatchesAssets) {
  ASSERT_EQ(run("export-cases " + path("cases")), 0);
  for (const auto& [rel, content] : cases::assets()) {
    EXPECT_EQ(fx::read_file(path("cases/" + rel)), content) << rel;
  }
}

}  // namespace
