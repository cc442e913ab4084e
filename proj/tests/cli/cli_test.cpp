// Exit codes and reproducibility of the memcirc command line.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(MEMCIRC_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("memcirc_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_config(const fs::path& dir, const std::string& json) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << json;
  return p;
}

}  // namespace

TEST(Cli, UsageErrorsAreContractViolations) {
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("build-dataset --task sideways"), 2);
}

TEST(Cli, MissingInputsAreContractViolations) {
  const fs::path dir = scratch("missing");
  EXPECT_EQ(run("--out " + dir.string() + " score"), 2);
  const fs::path bad = write_config(dir, R"({"model": {"d_model": 30}})");
  EXPECT_EQ(run("--config " + bad.string() + " --out " + dir.string() + " train"), 2);
}

TEST(Cli, EmptyDatasetIsASearchFailure) {
  const fs::path dir = scratch("empty");
  // Untrained: nothing is memorized, so no divergence contexts and no pairs.
  const fs::path cfg = write_config(
      dir, R"({"samples": 4, "foreign_samples": 0, "target_memorized": 0, "max_epochs": 0,
              "model": {"d_model": 16, "n_heads": 2, "d_head": 8, "d_mlp": 32}})");
  const std::string base = "--config " + cfg.string() + " --out " + dir.string() + " ";
  ASSERT_EQ(run(base + "train"), 0);
  ASSERT_EQ(run(base + "score"), 0);
  EXPECT_EQ(run(base + "build-dataset --task branch"), 4);
}

TEST(Cli, OverflowingWeightsAreANumericFailure) {
  const fs::path dir = scratch("numeric");
  const fs::path cfg = write_config(
      dir, R"({"samples": 2, "foreign_samples": 0, "target_memorized": 0, "max_epochs": 0,
              "model": {"d_model": 16, "n_heads": 2, "d_head": 8, "d_mlp": 32, "init_std": 1e308}})");
  const std::string base = "--config " + cfg.string() + " --out " + dir.string() + " ";
  EXPECT_EQ(run(base + "train"), 3);
}
