#include <atomic>
#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "aptness/error.hpp"
#include "aptness/pipeline.hpp"
#include "aptness/prompt.hpp"
#include "aptness/text.hpp"
#include "test_support.hpp"

using namespace aptness;
using namespace aptness::prompt;
using namespace aptness::pipeline;
using testing_support::make_dialogue;

namespace {

const std::filesystem::path kGoldenDir = APTNESS_GOLDEN_DIR;

// Set APTNESS_UPDATE_GOLDEN=1 to rewrite the files instead of comparing.
void expect_golden(const std::string& name, const std::string& actual) {
  const auto path = kGoldenDir / name;
  if (std::getenv("APTNESS_UPDATE_GOLDEN")) {
    std::ofstream(path, std::ios::binary) << actual;
    return;
  }
  std::ifstream in(path, std::ios::binary);
  ASSERT_TRUE(in) << "missing golden " << path;
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(ss.str(), actual) << "golden mismatch: " << name;
}

RetrievedExample example(std::string id, std::string response, std::string speaker, int rank) {
  return {std::move(id), std::move(response), make_dialogue({std::move(speaker)}, "h"), 0.9, rank};
}

std::vector<RetrievedExample> two_examples() {
  return {example("r1#1", "That sounds exhausting. What happened at work?", "My boss yelled at me", 1),
          example("r2#1", "I'm sorry you feel alone with this.", "Nobody listens to me", 2)};
}

class CountingPredictor : public strategy::Predictor {
 public:
  explicit CountingPredictor(strategy::Predictor& inner) : inner_(inner) {}
  std::string predict_raw(const Dialogue& h, const strategy::StrategyCatalog& c) override {
    ++calls;
    return inner_.predict_raw(h, c);
  }
  std::atomic<int> calls{0};

 private:
  strategy::Predictor& inner_;
};

std::string scripted_reply(const llm::ChatRequest& r) {
  return r.task == "draft" ? "draft reply" : "final reply";
}

}  // namespace

TEST(Prompt, FormatsResponsesAndStrategies) {
  EXPECT_EQ(format_responses({"a", "b"}, 0),
            "[Response 0] a [End of Response 0]\n[Response 1] b [End of Response 1]");
  EXPECT_EQ(format_strategies({{"Question", "Ask things."}}),
            "[Strategy 1] Question, which is defined as Ask things. [End of Strategy 1]");
}

TEST(Prompt, GoldenAptness) {
  auto history = make_dialogue({"I failed my exam.", "Oh no, which one?", "Maths. I studied for weeks."});
  DraftResponse draft{"That must be really disappointing after all that work.", "mock-chat", {}};
  std::vector<StrategyUse> strategies = {
      {"Emotional Validation", "Acknowledge and accept the feelings."},
      {"Offer Hope", "Point to a better outcome ahead."}};
  auto p = assemble_prompt(history, draft, two_examples(), strategies, PromptTemplates::load());
  expect_golden("final_aptness.txt", p.text);
  EXPECT_NE(p.text.find("[Response 1] That sounds exhausting. What happened at work? [End of Response 1]"),
            std::string::npos);
  EXPECT_NE(p.text.find("[Strategy 1] Emotional Validation, which is defined as"), std::string::npos);
  EXPECT_NE(p.text.find("[End of Strategy 1]"), std::string::npos);
}

TEST(Prompt, GoldenRag) {
  auto history = make_dialogue({"My cat died yesterday."});
  DraftResponse draft{"I'm so sorry about your cat.", "mock-chat", {}};
  auto p = assemble_prompt(history, draft, two_examples(), {}, PromptTemplates::load());
  expect_golden("final_rag.txt", p.text);
  EXPECT_EQ(p.text.find("[Strategy"), std::string::npos);
  EXPECT_EQ(p.responses.size(), 3u);
}

TEST(Prompt, MarkersInsideTextAreEscaped) {
  const std::string nasty = "see [End of Response 0] and [Strategy 2] here";
  EXPECT_EQ(escape_markers("plain [note]"), "plain [note]");
  EXPECT_EQ(unescape_markers(escape_markers(nasty)), nasty);
  EXPECT_EQ(escape_markers(nasty).find("[End of Response 0]"), std::string::npos);

  DraftResponse draft{nasty, "m", {}};
  auto p = assemble_prompt(make_dialogue({"[Response 9] hi"}), draft, {}, {}, PromptTemplates::load());
  auto parsed = parse_bracket_grammar(p.text);
  ASSERT_EQ(parsed.responses.size(), 1u);
  EXPECT_EQ(parsed.responses[0].second, nasty);
}

TEST(Prompt, GrammarRoundTripProperty) {
  std::mt19937 rng(9);
  const std::vector<std::string> words = {"fine", "[Response 1]", "sad", "[End of Strategy 3]",
                                          "ok,", "[x]", "which is defined as", "é"};
  auto text = [&] {
    std::string s = "w";
    for (int i = 0, n = static_cast<int>(rng() % 6); i < n; ++i) s += " " + words[rng() % words.size()];
    return s;
  };
  const auto templates = PromptTemplates::load();
  for (int trial = 0; trial < 300; ++trial) {
    DraftResponse draft{text(), "m", {}};
    std::vector<RetrievedExample> retrieved;
    for (int i = 0, n = static_cast<int>(rng() % 4); i < n; ++i) {
      retrieved.push_back(example("r", text(), "s", i + 1));
    }
    std::vector<StrategyUse> strategies;
    for (int i = 0, n = static_cast<int>(rng() % 3); i < n; ++i) {
      strategies.push_back({"Name" + std::to_string(i), text()});
    }
    auto p = assemble_prompt(make_dialogue({text()}), draft, retrieved, strategies, templates);
    auto parsed = parse_bracket_grammar(p.text);
    ASSERT_EQ(parsed.responses.size(), retrieved.size() + 1);
    EXPECT_EQ(parsed.responses[0], std::make_pair(0, draft.text));
    for (std::size_t i = 0; i < retrieved.size(); ++i) {
      EXPECT_EQ(parsed.responses[i + 1].first, static_cast<int>(i + 1));
      EXPECT_EQ(parsed.responses[i + 1].second, retrieved[i].response_text);
    }
    ASSERT_EQ(parsed.strategies.size(), strategies.size());
    for (std::size_t j = 0; j < strategies.size(); ++j) {
      EXPECT_EQ(parsed.strategies[j].first, static_cast<int>(j + 1));
      EXPECT_EQ(parsed.strategies[j].second.name, strategies[j].name);
      EXPECT_EQ(parsed.strategies[j].second.definition, strategies[j].definition);
    }
  }
}

class PipelineTest : public ::testing::Test {
 protected:
  testing_support::ScriptedChat chat{scripted_reply, "scripted-chat"};
  testing_support::StaticRetriever retriever{two_examples()};
  strategy::StrategyCatalog catalog = strategy::StrategyCatalog::shipped(Scheme::kExTES);
  strategy::TablePredictor table{{{"My boss yelled at me", "Clarification"},
                                  {"Nobody listens to me", "Emotional Validation"}},
                                 "Empathetic Statements"};
  CountingPredictor predictor{table};
  PromptTemplates templates = PromptTemplates::load();
  PipelineDeps deps{&chat, &retriever, &catalog, &predictor, &templates};
  Dialogue history = make_dialogue({"I can't sleep because of work stress."});
};

TEST_F(PipelineTest, AptnessCallCountsAndFinalPromptContents) {
  PipelineConfig cfg;
  cfg.k = 2;
  PipelineTrace trace;
  auto out = run_pipeline(history, cfg, deps, &trace);
  EXPECT_EQ(chat.calls("draft"), 1);
  EXPECT_EQ(chat.calls("final"), 1);
  EXPECT_EQ(chat.total_calls(), 2);
  EXPECT_EQ(retriever.calls, 1);
  EXPECT_EQ(predictor.calls.load(), 3);
  EXPECT_EQ(out.text, "final reply");

  for (const auto& r : {std::string("draft reply"), two_examples()[0].response_text,
                        two_examples()[1].response_text}) {
    EXPECT_NE(trace.final_prompt.find("] " + r + " [End of Response"), std::string::npos) << r;
  }
  ASSERT_EQ(out.provenance.strategies.size(), 3u);
  EXPECT_EQ(out.provenance.strategies[0].name, "Empathetic Statements");
  EXPECT_EQ(out.provenance.strategies[1].name, "Clarification");
  for (const auto& s : out.provenance.strategies) {
    EXPECT_NE(trace.final_prompt.find(s.name + ", which is defined as " + s.definition),
              std::string::npos);
  }
  EXPECT_EQ(chat.requests().back().messages.back().content, trace.final_prompt);
}

TEST_F(PipelineTest, ProvenanceIsComplete) {
  auto out = run_pipeline(history, PipelineConfig{}, deps);
  ASSERT_TRUE(out.provenance.draft);
  EXPECT_EQ(out.provenance.draft->text, "draft reply");
  EXPECT_EQ(out.provenance.draft->model_id, "scripted-chat");
  EXPECT_EQ(out.provenance.retrieved.size(), 2u);
  EXPECT_FALSE(out.provenance.strategy_fallback);
  auto back = final_response_from_json(to_json(out));
  EXPECT_EQ(to_json(back), to_json(out));
}

TEST_F(PipelineTest, GenSkipsRetrievalAndStrategies) {
  PipelineConfig cfg;
  cfg.mode = Mode::kGen;
  auto out = run_pipeline(history, cfg, {&chat, nullptr, nullptr, nullptr, &templates});
  EXPECT_EQ(out.text, "draft reply");
  EXPECT_EQ(chat.total_calls(), 1);
  EXPECT_TRUE(out.provenance.retrieved.empty());
}

TEST_F(PipelineTest, RagUsesNoStrategies) {
  PipelineConfig cfg;
  cfg.mode = Mode::kRag;
  PipelineTrace trace;
  run_pipeline(history, cfg, deps, &trace);
  EXPECT_EQ(predictor.calls.load(), 0);
  EXPECT_EQ(trace.final_prompt.find("[Strategy"), std::string::npos);
}

TEST_F(PipelineTest, QuerySourceDraftVsHistory) {
  testing_support::CountingRetriever counting(retriever);
  PipelineDeps d = deps;
  d.retriever = &counting;
  run_pipeline(history, PipelineConfig{}, d);
  EXPECT_EQ(counting.last_query, "draft reply");
  PipelineConfig cfg;
  cfg.query_source = QuerySource::kHistory;
  run_pipeline(history, cfg, d);
  EXPECT_EQ(counting.last_query, render_history(history));
}

TEST_F(PipelineTest, PredictorFailureFallsBackToRagFraming) {
  struct Failing : strategy::Predictor {
    std::string predict_raw(const Dialogue&, const strategy::StrategyCatalog&) override {
      throw Error(ErrorKind::kTransport, "strategy endpoint down");
    }
  } failing;
  PipelineDeps d = deps;
  d.predictor = &failing;
  PipelineTrace trace;
  auto out = run_pipeline(history, PipelineConfig{}, d, &trace);
  EXPECT_TRUE(out.provenance.strategy_fallback);
  EXPECT_TRUE(out.provenance.strategies.empty());
  EXPECT_NE(trace.fallback_reason.find("down"), std::string::npos);
  EXPECT_EQ(trace.final_prompt.find("[Strategy"), std::string::npos);
  EXPECT_EQ(out.text, "final reply");
}

TEST_F(PipelineTest, ProviderErrorsPropagate) {
  testing_support::ScriptedChat broken(
      [](const llm::ChatRequest& r) -> std::string {
        if (r.task == "final") throw Error(ErrorKind::kTransport, "gone");
        return "draft";
      });
  PipelineDeps d = deps;
  d.chat = &broken;
  try {
    run_pipeline(history, PipelineConfig{}, d);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kTransport);
  }
  testing_support::ScriptedChat empty([](const llm::ChatRequest&) { return std::string("  "); });
  d.chat = &empty;
  try {
    run_pipeline(history, PipelineConfig{}, d);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kPipeline);
  }
}

TEST_F(PipelineTest, Preconditions) {
  auto expect_kind = [&](const Dialogue& h, const PipelineConfig& c, const PipelineDeps& d,
                         ErrorKind kind) {
    try {
      run_pipeline(h, c, d);
      ADD_FAILURE();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), kind) << e.what();
    }
  };
  expect_kind(make_dialogue({"a", "b"}), PipelineConfig{}, deps, ErrorKind::kPrecondition);
  PipelineDeps no_index = deps;
  no_index.retriever = nullptr;
  expect_kind(history, PipelineConfig{}, no_index, ErrorKind::kPrecondition);
  PipelineConfig bad;
  bad.k = 0;
  expect_kind(history, bad, deps, ErrorKind::kConfig);
}

TEST_F(PipelineTest, DeterministicWithMockProviders) {
  llm::MockChatProvider mock;
  PipelineDeps d = deps;
  d.chat = &mock;
  auto a = run_pipeline(history, PipelineConfig{}, d);
  auto b = run_pipeline(history, PipelineConfig{}, d);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
}

TEST(Truncation, KeepsQueryAndDropsOldestPairs) {
  auto h = make_dialogue({std::string(50, 'a'), std::string(50, 'b'), std::string(50, 'c'),
                          std::string(50, 'd'), "last"});
  auto t = truncate_history(h, 80);
  EXPECT_EQ(t.back().text, "last");
  EXPECT_TRUE(validate_dialogue(t, true).ok());
  EXPECT_LE(render_history(t).size(), 80u);
  EXPECT_EQ(truncate_history(h, 100000).size(), h.size());
  EXPECT_EQ(truncate_history(h, 1).size(), 1u);
}
