#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include "probetraj/cli.hpp"
#include "probetraj/binary_io.hpp"
#include "probetraj/dataset.hpp"
#include "probetraj/digest.hpp"
#include "probetraj/report.hpp"
#include "test_util.hpp"

using namespace probetraj;
namespace fs = std::filesystem;

namespace {

struct Result {
  int status = 0;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  Result r;
  r.status = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

void write(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

std::size_t file_count(const fs::path& dir) {
  return static_cast<std::size_t>(std::distance(fs::directory_iterator(dir), fs::directory_iterator{}));
}

// Small synthetic dataset written through the CLI.
fs::path synth(const fs::path& dir, const std::string& name, std::vector<std::string> extra = {}) {
  std::vector<std::string> args = {"synth", "--out", (dir / name).string(), "--counts", "6,6,6,6", "--dim", "6"};
  args.insert(args.end(), extra.begin(), extra.end());
  const auto r = run(args);
  EXPECT_EQ(r.status, 0) << r.err;
  return dir / name;
}

}  // namespace

TEST(Cli, NoArgumentsPrintsUsage) {
  const auto r = run({});
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.err.find("selftest"), std::string::npos);
}

TEST(Cli, UnknownSubcommandOrFlag) {
  EXPECT_EQ(run({"frobnicate"}).status, 1);
  const auto r = run({"selftest", "--no-such-flag"});
  EXPECT_EQ(r.status, 1);
  EXPECT_FALSE(r.err.empty());
}

TEST(Cli, HelpAndVersion) {
  EXPECT_EQ(run({"--help"}).status, 0);
  EXPECT_EQ(run({"evaluate", "--help"}).status, 0);
  const auto v = run({"--version"});
  EXPECT_EQ(v.status, 0);
  EXPECT_NE(v.out.find(std::string(cli::kVersion)), std::string::npos);
}

TEST(Cli, SelftestPasses) {
  const auto r = run({"selftest"});
  EXPECT_EQ(r.status, 0) << r.out;
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
  EXPECT_NE(r.out.find("PASS"), std::string::npos);
}

TEST(Cli, MissingInputNamesThePathAndWritesNothing) {
  const auto dir = probetraj::testing::scratch("cli_missing");
  const auto missing = (dir / "nope.hstj").string();
  const auto data = synth(dir, "d.hstj");
  const auto before = file_count(dir);
  const auto r = run({"evaluate", "--probe", missing, "--data", data.string(), "--out", (dir / "r.json").string()});
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.err.find(missing), std::string::npos);
  EXPECT_EQ(file_count(dir), before);
}

TEST(Cli, CorruptInputWritesNothing) {
  const auto dir = probetraj::testing::scratch("cli_corrupt");
  const auto data = synth(dir, "d.hstj");
  auto bytes = read_file_bytes(data);
  bytes.resize(bytes.size() - 7);
  write_file_bytes(dir / "cut.hstj", bytes);
  const auto before = file_count(dir);
  const auto r = run({"train-probe", "--data", (dir / "cut.hstj").string(), "--out", (dir / "p.prb").string()});
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.err.find("cut.hstj"), std::string::npos);
  EXPECT_EQ(file_count(dir), before);
}

TEST(Cli, OutputDirectoryMustExist) {
  const auto dir = probetraj::testing::scratch("cli_outdir");
  const auto r = run({"synth", "--out", (dir / "no" / "d.hstj").string()});
  EXPECT_EQ(r.status, 1);
  EXPECT_FALSE(fs::exists(dir / "no"));
}

TEST(Cli, SynthWritesDatasetRequestsAndManifest) {
  const auto dir = probetraj::testing::scratch("cli_synth");
  const auto data = synth(dir, "d.hstj", {"--seed", "9"});
  const auto ds = load_dataset(data);
  EXPECT_EQ(ds.size(), 24u);
  EXPECT_EQ(ds.dim, 6u);
  EXPECT_TRUE(fs::exists(dir / "d.hstj.requests.json"));
  const auto m = read_json_file(dir / "d.hstj.manifest.json");
  EXPECT_EQ(m["subcommand"], "synth");
  EXPECT_EQ(m["flags"]["seed"], "9");
  EXPECT_EQ(m["artifact"]["sha256"], sha256_file(data));
}

TEST(Cli, FlagsBeatConfigBeatsEnvironment) {
  const auto dir = probetraj::testing::scratch("cli_precedence");
  write(dir / "run.cfg", "# shared\nseed = 5\ndim = 6\ncounts = 2,2,2,2\nepochs = 3\n");
  auto seed_of = [&](const std::string& name) {
    return read_json_file(dir / (name + ".manifest.json"))["flags"]["seed"].get<std::string>();
  };
  const auto cfg = (dir / "run.cfg").string();
  ASSERT_EQ(run({"--config", cfg, "synth", "--out", (dir / "a.hstj").string()}).status, 0);
  EXPECT_EQ(seed_of("a.hstj"), "5");
  ASSERT_EQ(run({"--config", cfg, "synth", "--seed", "6", "--out", (dir / "b.hstj").string()}).status, 0);
  EXPECT_EQ(seed_of("b.hstj"), "6");
  EXPECT_NE(read_file_bytes(dir / "a.hstj"), read_file_bytes(dir / "b.hstj"));

  ::setenv("PROBETRAJ_SEED", "77", 1);
  const auto with_env = run({"synth", "--counts", "2,2,2,2", "--dim", "6", "--out", (dir / "c.hstj").string()});
  const auto cfg_over_env = run({"--config", cfg, "synth", "--out", (dir / "d.hstj").string()});
  ::unsetenv("PROBETRAJ_SEED");
  ASSERT_EQ(with_env.status, 0) << with_env.err;
  ASSERT_EQ(cfg_over_env.status, 0);
  EXPECT_EQ(seed_of("c.hstj"), "77");
  EXPECT_EQ(seed_of("d.hstj"), "5");
}

TEST(Cli, ConfigRejectsUnknownKeys) {
  const auto dir = probetraj::testing::scratch("cli_badcfg");
  write(dir / "bad.cfg", "sede = 5\n");
  const auto r = run({"--config", (dir / "bad.cfg").string(), "synth", "--out", (dir / "a.hstj").string()});
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.err.find("sede"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "a.hstj"));
}

TEST(Cli, FullPipelineProducesReports) {
  const auto dir = probetraj::testing::scratch("cli_pipeline");
  const auto d = dir.string();
  ASSERT_EQ(run({"synth", "--out", d + "/train.hstj", "--counts", "20,20,0,0", "--split", "train", "--dim", "8"}).status, 0);
  ASSERT_EQ(run({"synth", "--out", d + "/eval.hstj", "--seed", "43", "--counts", "10,10,10,10", "--dim", "8"}).status, 0);
  auto ok = [&](std::vector<std::string> a) {
    const auto r = run(a);
    EXPECT_EQ(r.status, 0) << a[0] << ": " << r.err;
  };
  ok({"train-probe", "--data", d + "/train.hstj", "--out", d + "/p.prb", "--width", "4", "--lr", "0.01", "--epochs", "30"});
  ok({"fit-hmm", "--data", d + "/train.hstj", "--out", d + "/m.thm", "--pca-dim", "4", "--restarts", "2"});
  ok({"evaluate", "--probe", d + "/p.prb", "--data", d + "/eval.hstj", "--traj", d + "/m.thm", "--requests",
      d + "/eval.hstj.requests.json", "--train", d + "/train.hstj", "--widths", "2,4", "--epochs", "5", "--out",
      d + "/report.json", "--csv", d + "/csv"});
  ok({"geometry", "--probe", d + "/p.prb", "--data", d + "/eval.hstj", "--train", d + "/train.hstj", "--caught-miss",
      d + "/report.json", "--out", d + "/geo.json"});
  ok({"token-sweep", "--probe", d + "/p.prb", "--data", d + "/eval.hstj", "--requests", d + "/eval.hstj.requests.json",
      "--out", d + "/sweep.json"});
  ok({"sweep-width", "--train", d + "/train.hstj", "--eval", d + "/eval.hstj", "--widths", "2,8", "--epochs", "5", "--out",
      d + "/widths.json"});

  const auto rep = read_json_file(dir / "report.json");
  for (const char* key : {"final_token", "max_pool", "trajectory", "token_sweep", "width_sweep", "manifest"}) {
    EXPECT_TRUE(rep.contains(key)) << key;
  }
  EXPECT_EQ(rep["manifest"]["inputs"]["probe"]["sha256"], sha256_file(dir / "p.prb"));
  EXPECT_TRUE(fs::exists(dir / "report.txt"));
  EXPECT_GT(file_count(dir / "csv"), 2u);
  EXPECT_TRUE(read_json_file(dir / "geo.json").contains("geometry"));
  EXPECT_TRUE(fs::exists(dir / "m.thm.manifest.json"));
  EXPECT_TRUE(fs::exists(dir / "widths.txt"));
}

TEST(Cli, ExecutableExitCodes) {
  const std::string exe = PROBETRAJ_EXE;
  auto status = [](const std::string& cmd) {
    const int s = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  EXPECT_EQ(status(exe), 1);
  EXPECT_EQ(status(exe + " --version"), 0);
  EXPECT_EQ(status(exe + " evaluate --probe /nonexistent/p --data /nonexistent/d"), 1);
}
