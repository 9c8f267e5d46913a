#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "stork/cli.hpp"

namespace fs = std::filesystem;
using stork::cli::RunConfig;

namespace {

struct Result {
  int status = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> v;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) v.push_back(l);
  return v;
}

std::vector<std::string> data_rows(const std::string& csv) {
  std::vector<std::string> v;
  for (const auto& l : lines(csv))
    if (!l.empty() && l[0] != '#') v.push_back(l);
  return v;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> v;
  std::istringstream in(line);
  for (std::string c; std::getline(in, c, ',');) v.push_back(c);
  return v;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("stork_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()) + "_" +
            std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Runs the installed binary with the scratch directory as STORK_OUTPUT_DIR.
  Result run(const std::string& args, const std::string& env = "") const {
    const fs::path out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
    const std::string cmd = "cd '" + dir_.string() + "' && " + (env.empty() ? "" : env + " ") + "STORK_OUTPUT_DIR='" +
                            (dir_ / "out").string() + "' '" + STORK_CLI_PATH + "' " + args + " >'" + out.string() +
                            "' 2>'" + err.string() + "'";
    const int raw = std::system(cmd.c_str());
    Result r;
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    fs::remove(out);
    fs::remove(err);
    return r;
  }

  fs::path out_dir() const { return dir_ / "out"; }
  int files_in_out_dir() const {
    if (!fs::exists(out_dir())) return 0;
    int n = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(out_dir())) ++n;
    return n;
  }

  void expect_config_error(const std::string& args, const std::string& needle) const {
    const Result r = run(args);
    EXPECT_EQ(r.status, 2) << args;
    const auto ls = lines(r.err);
    ASSERT_EQ(ls.size(), 1u) << r.err;
    const auto j = nlohmann::json::parse(ls[0]);
    EXPECT_TRUE(j.contains("error") && j.contains("message"));
    EXPECT_NE(j["message"].get<std::string>().find(needle), std::string::npos) << j.dump();
    EXPECT_EQ(files_in_out_dir(), 0) << args;
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, DemoStiffTable) {
  const Result r = run("demo-stiff");
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_EQ(fs::path(lines(r.out).at(0)), out_dir() / "demo-stiff.csv");
  const auto rows = data_rows(slurp(out_dir() / "demo-stiff.csv"));
  ASSERT_EQ(rows.size(), 12u);
  EXPECT_EQ(rows[0], "t,exact,euler,heun,rkg2_s4");
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_EQ(split(rows[i]).size(), 5u);
  EXPECT_EQ(split(rows[1])[2], "1");
}

TEST_F(Cli, SweepHasOneRowPerCell) {
  const Result r = run("sweep --mode exact");
  ASSERT_EQ(r.status, 0) << r.err;
  const auto rows = data_rows(slurp(out_dir() / "sweep.csv"));
  ASSERT_EQ(rows.size(), 16u);
  EXPECT_EQ(rows[0], "method,nfe,steps,nfe_used,error,status");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto c = split(rows[i]);
    ASSERT_EQ(c.size(), 6u);
    EXPECT_LE(std::stoi(c[3]), std::stoi(c[1])) << rows[i];
  }
}

TEST_F(Cli, DumpCoeffsStork2) {
  const Result r = run("dump-coeffs --method stork2 --substeps 4");
  ASSERT_EQ(r.status, 0) << r.err;
  bool found = false;
  for (const auto& row : data_rows(slurp(out_dir() / "dump-coeffs.csv"))) {
    const auto c = split(row);
    if (c.at(0) == "w1") {
      found = true;
      EXPECT_EQ(std::stod(c.at(2)), 0.25);
    }
  }
  EXPECT_TRUE(found);
}

TEST_F(Cli, RepeatRunsAreByteIdentical) {
  const std::string args = "solve --problem gaussian-flow --batch 5 --seed 11 --steps 12 --method stork4";
  ASSERT_EQ(run(args + " -o a.csv").status, 0);
  ASSERT_EQ(run(args + " -o b.csv").status, 0);
  const std::string a = slurp(dir_ / "a.csv"), b = slurp(dir_ / "b.csv");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, b);
  ASSERT_EQ(run("solve --problem gaussian-flow --batch 5 --seed 12 --steps 12 --method stork4 -o c.csv").status, 0);
  EXPECT_NE(data_rows(a), data_rows(slurp(dir_ / "c.csv")));
}

TEST_F(Cli, HeaderEchoesProvenance) {
  ASSERT_EQ(run("solve --problem rotation --steps 16 --method heun").status, 0);
  const auto ls = lines(slurp(out_dir() / "solve.csv"));
  ASSERT_GE(ls.size(), 5u);
  EXPECT_EQ(ls[0], std::string("# stork ") + stork::kVersion);
  const std::string config = ls[3].substr(std::string("# config ").size());
  EXPECT_EQ(ls[1], "# config_hash " + stork::hex64(stork::fnv1a(config)));
  EXPECT_EQ(ls[2], "# coefficient_table " + std::string(stork::rock4_table_version()) + " " +
                       stork::hex64(stork::rock4_table_checksum()));
  const auto j = nlohmann::json::parse(config);
  EXPECT_EQ(j["solver"]["method"], "heun");
  EXPECT_EQ(j["grid"]["steps"], 16);
}

TEST_F(Cli, JsonOutput) {
  ASSERT_EQ(run("convergence --problem rotation --method rk4 --mode exact --format json").status, 0);
  const auto j = nlohmann::json::parse(slurp(out_dir() / "convergence.json"));
  EXPECT_EQ(j["meta"]["version"], stork::kVersion);
  EXPECT_TRUE(j.contains("result"));
  EXPECT_NEAR(j["result"]["fitted_order"].get<double>(), 4.0, 0.2);
}

TEST_F(Cli, ConfigFileFromSamples) {
  const std::string cfg = std::string(STORK_SAMPLES_DIR) + "/configs/flow_convergence.toml";
  for (const std::string& args : {"--config '" + cfg + "' convergence", "convergence --config '" + cfg + "'"}) {
    const Result r = run(args);
    ASSERT_EQ(r.status, 0) << r.err;
    const auto ls = lines(slurp(out_dir() / "convergence.csv"));
    const auto j = nlohmann::json::parse(ls.at(3).substr(9));
    EXPECT_EQ(j["problem"]["name"], "gaussian-flow");
    EXPECT_EQ(j["solver"]["substage_mode"], "exact");
    EXPECT_EQ(data_rows(slurp(out_dir() / "convergence.csv")).size(), 5u);
  }
}

TEST_F(Cli, ExplicitOutputOverridesEnvironment) {
  ASSERT_EQ(run("dump-coeffs -o sub/dir/c.csv").status, 0);
  EXPECT_TRUE(fs::exists(dir_ / "sub/dir/c.csv"));
  EXPECT_EQ(files_in_out_dir(), 0);
}

TEST_F(Cli, EnvironmentSetsDefaultDirectory) {
  ASSERT_EQ(run("dump-coeffs --method stork4 --substeps 41").status, 0);
  EXPECT_TRUE(fs::exists(out_dir() / "dump-coeffs.csv"));
  EXPECT_EQ(files_in_out_dir(), 1);
  const std::string text = slurp(out_dir() / "dump-coeffs.csv");
  EXPECT_NE(text.find("\nsubsteps,,42\n"), std::string::npos) << text.substr(0, 800);
}

TEST_F(Cli, ConfigErrorsExitTwoWithoutOutput) {
  expect_config_error("solve --method stork1", "stork1");
  expect_config_error("solve --method rk45", "rk45");
  expect_config_error("dump-coeffs --method stork4 --substeps 41 --strict-degree", "42");
  expect_config_error("stability --re-min 1 --re-max -1", "bounds");
  expect_config_error("solve --problem nope", "nope");
  expect_config_error("solve --steps 2 --method stork4", "n + 1");
  expect_config_error("convergence --steps-list 10,20,40", "step counts");
  expect_config_error("solve --method stork2 --substeps 1 --mode exact", "substeps");
}

TEST_F(Cli, UsageErrorsAreSingleLineJson) {
  for (const std::string args : {"", "frobnicate", "solve --bogus 1", "solve --format xml"}) {
    const Result r = run(args);
    EXPECT_EQ(r.status, 2) << args;
    const auto ls = lines(r.err);
    ASSERT_EQ(ls.size(), 1u) << args << ": " << r.err;
    EXPECT_EQ(nlohmann::json::parse(ls[0])["error"], "usage");
  }
}

TEST_F(Cli, HelpExitsZero) {
  const Result r = run("--help");
  EXPECT_EQ(r.status, 0);
  EXPECT_NE(r.out.find("sweep"), std::string::npos);
}

TEST_F(Cli, FailingSweepCellIsIsolated) {
  // Budget 3 leaves too few steps for the taylor start-up; the other cells still run.
  const Result r = run("sweep --methods heun,stork4 --nfe 3,20 --mode taylor --problem rotation");
  ASSERT_EQ(r.status, 0) << r.err;
  const auto rows = data_rows(slurp(out_dir() / "sweep.csv"));
  ASSERT_EQ(rows.size(), 5u);
  int ok = 0, failed = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const std::string status = rows[i].substr(rows[i].rfind(',') + 1);
    if (status == "ok") ++ok;
    if (rows[i].find("error:") != std::string::npos) ++failed;
  }
  EXPECT_EQ(failed, 1);
  EXPECT_EQ(ok, 3);
}

TEST_F(Cli, NonFiniteSweepCellIsReported) {
  const Result r = run("sweep --methods euler,rk4 --nfe 4,400 --problem stiff-scalar --lambda -1000");
  ASSERT_EQ(r.status, 0) << r.err;
  const std::string text = slurp(out_dir() / "sweep.csv");
  for (const auto& row : data_rows(text)) {
    const auto c = split(row);
    if (c[0] == "euler" && c[1] == "400") {
      EXPECT_EQ(c[5], "ok") << row;
    }
  }
}

TEST_F(Cli, NoTemporaryFilesRemain) {
  ASSERT_EQ(run("stability --method stork2 --substeps 4 --nx 40 --ny 30").status, 0);
  EXPECT_EQ(files_in_out_dir(), 1);
  EXPECT_EQ(data_rows(slurp(out_dir() / "stability.csv")).size(), 1u + 40u * 30u);
}

TEST(CliInProcess, HashIgnoresOutputPathAndWorkers) {
  RunConfig a, b;
  a.command = b.command = "sweep";
  a.output = "x.csv";
  b.output = "y.csv";
  a.workers = 1;
  b.workers = 8;
  stork::cli::resolve(a);
  stork::cli::resolve(b);
  EXPECT_EQ(stork::cli::to_json(a), stork::cli::to_json(b));
}

TEST(CliInProcess, BudgetMapping) {
  stork::SolverConfig c;
  c.method = stork::Method::stork4;
  EXPECT_EQ(stork::cli::steps_for_budget(c, 20, false), 19);
  EXPECT_EQ(stork::cli::steps_for_budget(c, 20, true), 17);
  c.substage_mode = stork::SubstageMode::exact;
  c.substeps = 5;
  EXPECT_EQ(stork::cli::steps_for_budget(c, 20, false), 4);
  c.method = stork::Method::rk4;
  EXPECT_EQ(stork::cli::steps_for_budget(c, 20, false), 5);
}

TEST(CliInProcess, ErrorLineIsSingleLine) {
  const std::string l = stork::cli::error_line("config", "bad\nthing");
  EXPECT_EQ(l.find('\n'), std::string::npos);
  EXPECT_EQ(nlohmann::json::parse(l)["message"], "bad\nthing");
}
