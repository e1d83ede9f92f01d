#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(NOBOX_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("attack"), 2);
  EXPECT_EQ(run("attack --config /nonexistent/cfg.json"), 2);
  EXPECT_EQ(run("calibrate --length 30"), 0);
  EXPECT_EQ(run("calibrate --length 10"), 3);
}

TEST(Cli, CalibrateWritesJson) {
  const auto dir = fs::temp_directory_path() / ("nobox-cli-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  ASSERT_EQ(run("calibrate --length 20 --out " + dir.string()), 0);
  std::ifstream in(dir / "calibration.json");
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_NE(ss.str().find("\"tau\": 19"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Cli, MalformedConfigIsInvalidArgument) {
  const auto file = fs::temp_directory_path() / ("nobox-cli-bad-" + std::to_string(::getpid()) + ".json");
  std::ofstream(file) << R"({"victim": "v", "unknown_key": 1})";
  EXPECT_EQ(run("attack --config " + file.string()), 2);
  fs::remove(file);
}

TEST(Cli, MissingVictimIsIoError) {
  const auto file = fs::temp_directory_path() / ("nobox-cli-io-" + std::to_string(::getpid()) + ".json");
  std::ofstream(file) << R"({"victim": "/nonexistent/ckpt", "attack": {"name": "none"}})";
  EXPECT_EQ(run("attack --config " + file.string()), 4);
  fs::remove(file);
}
