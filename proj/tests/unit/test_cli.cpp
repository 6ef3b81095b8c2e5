#include <cstdlib>
#include <fstream>
#include <sys/wait.h>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "golden.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

Outcome run_cli(const std::string& args) {
  const auto dir = oracle::temp_dir("cli");
  const std::string cmd = std::string(RTPROBE_CLI_PATH) + " " + args + " > " + (dir / "out").string() + " 2> " +
                          (dir / "err").string();
  const int status = std::system(cmd.c_str());
  Outcome o;
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  o.out = golden::read_file((dir / "out").string());
  o.err = golden::read_file((dir / "err").string());
  return o;
}

fs::path make_fixture(const std::string& tag) {
  const auto dir = oracle::temp_dir(tag);
  const auto cfg = dir / "synth.json";
  std::ofstream(cfg) << R"({"num_docs": 16, "units_per_doc": 12, "participants": 3, "iv_samples": 4,
                           "model": {"num_layers": 3, "hidden_dim": 5}})";
  const auto o = run_cli("synth --config " + cfg.string() + " --out " + (dir / "fx").string() + " --seed 21");
  EXPECT_EQ(o.code, 0) << o.err;
  return dir / "fx";
}

}  // namespace

TEST(Cli, ValidateCleanFixtureExitsZero) {
  const auto fx = make_fixture("cli_ok");
  const auto o = run_cli("validate -c " + (fx / "run_config.json").string());
  EXPECT_EQ(o.code, 0) << o.out << o.err;
  EXPECT_NE(o.out.find("clean"), std::string::npos);
}

TEST(Cli, ValidateMissingTraceExitsTwo) {
  const auto fx = make_fixture("cli_missing");
  fs::remove_all(fx / "trace");
  const auto o = run_cli("validate --json -c " + (fx / "run_config.json").string());
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.out.find((fx / "trace").string()), std::string::npos);
}

TEST(Cli, RunWritesReportAndIsReproducible) {
  const auto fx = make_fixture("cli_run");
  const auto cfg = (fx / "run_config.json").string();
  auto a = run_cli("run -c " + cfg + " --measures GD --output " + (fx / "a").string());
  ASSERT_EQ(a.code, 0) << a.err;
  auto b = run_cli("run -c " + cfg + " --measures GD --workers 2 --output " + (fx / "b").string());
  ASSERT_EQ(b.code, 0) << b.err;
  for (const char* f : {"report.tsv", "report.json", "summary.tex", "summary.txt", "plot_data.json"})
    EXPECT_EQ(oracle::sha256_file(fx / "a" / f), oracle::sha256_file(fx / "b" / f)) << f;
  const auto r = run_cli("report -i " + (fx / "a" / "report.json").string() + " -o " + (fx / "c").string());
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(oracle::sha256_file(fx / "a" / "summary.tex"), oracle::sha256_file(fx / "c" / "summary.tex"));
}

TEST(Cli, ErrorsProduceMachineReadableRecord) {
  const auto fx = make_fixture("cli_err");
  const auto o = run_cli("run -c " + (fx / "run_config.json").string() + " --folds 40");
  EXPECT_EQ(o.code, 2);
  const auto j = nlohmann::json::parse(o.err);
  EXPECT_EQ(j["error"]["command"], "run");
  EXPECT_EQ(j["error"]["exit_code"], 2);
  EXPECT_FALSE(j["error"]["message"].get<std::string>().empty());
}

TEST(Cli, UnknownSubcommandFails) {
  EXPECT_NE(run_cli("frobnicate").code, 0);
}
