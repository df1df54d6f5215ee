#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "depthmup/cli.hpp"

using namespace depthmup;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "depthmup");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

int shell(const std::string& args) {
  const std::string cmd = std::string("\"") + CLI_BINARY + "\" " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("binary exit codes") {
  CHECK(shell("") != 0);
  CHECK(shell("--version") == 0);
  CHECK(shell("classify --alpha 0.5 --gamma 0.5") == 0);
  CHECK(shell("classify --no-such-flag") != 0);
  CHECK(shell("--config /nonexistent/cfg.json classify") != 0);
}

TEST_CASE("classify") {
  const Run r = run({"classify", "--alpha", "0.5", "--gamma", "0.5"});
  CHECK(r.code == 0);
  CHECK(r.out == "DepthMuP\n");
  CHECK(run({"classify", "--alpha", "0.4", "--gamma", "0.5"}).out == "UnstableInit\n");
}

TEST_CASE("help on empty invocation") {
  const Run r = run({});
  CHECK(r.code == 2);
  CHECK(r.err.find("limit-linear") != std::string::npos);
}

TEST_CASE("limit-linear writes csv") {
  const auto dir = scratch_dir("depthmup_cli_limit");
  const Run r = run({"--out", dir.string(), "limit-linear", "--depth", "8", "--steps", "3"});
  CHECK(r.code == 0);
  std::ifstream is(dir / "rms.csv");
  REQUIRE(is);
  std::string header;
  std::getline(is, header);
  CHECK(!header.empty());
  int rows = 0;
  for (std::string line; std::getline(is, line);) rows += !line.empty();
  CHECK(rows > 0);
  CHECK(std::filesystem::exists(dir / "manifest.json"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("bad config is an error") {
  const auto dir = scratch_dir("depthmup_cli_cfg");
  std::filesystem::create_directories(dir);
  const auto cfg = (dir / "cfg.json").string();
  {
    std::ofstream os(cfg);
    os << "{\"network\": {\"n\": 8, \"typo\": 1}}";
  }
  const Run r = run({"--config", cfg, "classify"});
  CHECK(r.code == 1);
  CHECK(r.err.find("typo") != std::string::npos);
  std::filesystem::remove_all(dir);
}
