#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <fstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "test_support.hpp"

namespace {

struct RunResult {
  int code = -1;
  std::string out;
};

RunResult run_apt(const std::string& args) {
  const std::string cmd = std::string(APTNESS_APT_BINARY) + " " + args + " 2>/dev/null";
  RunResult r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  while (auto n = std::fread(buf.data(), 1, buf.size(), pipe)) r.out.append(buf.data(), n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

}  // namespace

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    std::ofstream(dir / "history.json")
        << R"({"id":"h","utterances":[{"role":"speaker","text":"I keep failing my driving test."}]})";
  }
  testing_support::TempDir dir;
  std::string path(const std::string& name) const { return (dir / name).string(); }
};

TEST_F(Cli, RespondGenOffline) {
  auto r = run_apt("--no-network respond --mode gen --history " + path("history.json"));
  ASSERT_EQ(r.code, 0) << r.out;
  auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j.at("mode"), "gen");
  EXPECT_FALSE(j.at("text").get<std::string>().empty());
}

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run_apt("--definitely-not-a-flag").code, 2);
  EXPECT_EQ(run_apt("respond").code, 2);
  std::ofstream(dir / "bad.ini") << "[provider.chat]\nkind = telepathy\n";
  EXPECT_EQ(run_apt("--config " + path("bad.ini") + " respond --mode gen --history " +
                    path("history.json"))
                .code,
            2);
}

TEST_F(Cli, ReplayMissExitsThree) {
  std::filesystem::create_directories(dir / "fx");
  std::ofstream(dir / "fx" / "chat.jsonl") << "";
  auto r = run_apt("--no-network --fixtures " + path("fx") + " respond --mode gen --history " +
                   path("history.json"));
  EXPECT_EQ(r.code, 3);
}

TEST_F(Cli, RecordThenReplayIsIdentical) {
  const std::string base = "--fixtures " + path("fx2");
  auto rec = run_apt(base + " --record respond --mode gen --history " + path("history.json"));
  ASSERT_EQ(rec.code, 0);
  auto rep = run_apt("--no-network " + base + " respond --mode gen --history " + path("history.json"));
  ASSERT_EQ(rep.code, 0);
  EXPECT_EQ(rec.out, rep.out);
}

TEST_F(Cli, MissingIndexForRetrievalModes) {
  auto r = run_apt("--no-network respond --mode rag --index " + path("no-index") + " --history " +
                   path("history.json"));
  EXPECT_NE(r.code, 0);
}
