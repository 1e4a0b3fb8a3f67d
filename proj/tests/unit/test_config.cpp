#include <fstream>

#include <gtest/gtest.h>

#include "aptness/config.hpp"
#include "aptness/error.hpp"
#include "test_support.hpp"

using namespace aptness;

namespace {

ErrorKind kind_of(const std::string& ini) {
  try {
    AppConfig::parse(ini);
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "accepted: " << ini;
  return ErrorKind::kData;
}

}  // namespace

TEST(AppConfigTest, DefaultsAreOfflineMocks) {
  auto c = AppConfig::defaults();
  EXPECT_EQ(c.chat.kind, llm::ProviderKind::kMock);
  EXPECT_EQ(c.embed.model_id, "mock-embed");
  EXPECT_EQ(c.judge.model_id, "mock-judge");
  EXPECT_EQ(c.pipeline.k, 2u);
  EXPECT_EQ(c.pipeline.mode, Mode::kAptness);
  EXPECT_DOUBLE_EQ(c.judge_temperature, 0.0);
}

TEST(AppConfigTest, ParsesSections) {
  auto c = AppConfig::parse(R"(
[provider.chat]
kind = openai
base_url = http://localhost:8000/v1
model = llama-3-8b-instruct
api_key_env = CHAT_KEY
temperature = 0.9
top_p = 0.8

[provider.strategy]
predictor = endpoint

[pipeline]
mode = rag
scheme = esconv
k = 5

[service]
port = 9090
cors_origin = http://localhost:5173
)");
  EXPECT_EQ(c.chat.kind, llm::ProviderKind::kOpenAI);
  EXPECT_EQ(c.chat.model_id, "llama-3-8b-instruct");
  EXPECT_EQ(c.predictor, PredictorKind::kEndpoint);
  EXPECT_EQ(c.pipeline.mode, Mode::kRag);
  EXPECT_EQ(c.pipeline.scheme, Scheme::kESConv);
  EXPECT_EQ(c.pipeline.k, 5u);
  EXPECT_DOUBLE_EQ(c.pipeline.sampling.temperature, 0.9);
  EXPECT_EQ(c.service.port, 9090);
  auto j = c.to_json().dump();
  EXPECT_NE(j.find("CHAT_KEY"), std::string::npos);
}

TEST(AppConfigTest, RejectsBadValues) {
  EXPECT_EQ(kind_of("[provider.chat]\nkind = telepathy\n"), ErrorKind::kConfig);
  EXPECT_EQ(kind_of("[provider.chat]\nkind = openai\n"), ErrorKind::kConfig);
  EXPECT_EQ(kind_of("[pipeline]\nk = lots\n"), ErrorKind::kConfig);
  EXPECT_EQ(kind_of("[pipeline]\nmode = magic\n"), ErrorKind::kConfig);
  EXPECT_EQ(kind_of("[service]\nport = 70000\n"), ErrorKind::kConfig);
  EXPECT_EQ(kind_of("[provider.strategy]\npredictor = oracle\n"), ErrorKind::kConfig);
}

TEST(AppConfigTest, RelativePathsResolveAgainstTheFile) {
  testing_support::TempDir dir;
  std::ofstream(dir / "apt.ini") << "[paths]\nindex = idx\n";
  auto c = AppConfig::load(dir / "apt.ini");
  EXPECT_EQ(c.index_dir, dir.path() / "idx");
  try {
    AppConfig::load(dir / "missing.ini");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
  }
}

TEST(AppConfigTest, InlineCommentsAreStripped) {
  auto c = AppConfig::parse(
      "[pipeline]\nmode = gen ; gen | rag | aptness\nk = 3\t; examples\n"
      "[paths]\ncatalog =   ; shipped\n[provider.chat]\nmodel = a;b\n");
  EXPECT_EQ(c.pipeline.mode, Mode::kGen);
  EXPECT_EQ(c.pipeline.k, 3u);
  EXPECT_TRUE(c.catalog.empty());
  EXPECT_EQ(c.chat.model_id, "a;b");
}

TEST(AppConfigTest, ReadmeSampleParses) {
  std::ifstream in(APTNESS_README);
  ASSERT_TRUE(in);
  std::string line, ini;
  bool inside = false;
  while (std::getline(in, line)) {
    if (line == "```ini") {
      inside = true;
    } else if (inside && line == "```") {
      break;
    } else if (inside) {
      ini += line + "\n";
    }
  }
  ASSERT_FALSE(ini.empty());
  auto c = AppConfig::parse(ini);
  EXPECT_EQ(c.chat.kind, llm::ProviderKind::kOpenAI);
  EXPECT_EQ(c.predictor, PredictorKind::kEndpoint);
  EXPECT_EQ(c.pipeline.scheme, Scheme::kExTES);
  EXPECT_EQ(c.pipeline.query_source, pipeline::QuerySource::kDraft);
  EXPECT_EQ(c.service.journal, "sessions.jsonl");
}
