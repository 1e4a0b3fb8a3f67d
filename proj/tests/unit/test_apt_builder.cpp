#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "aptness/apt_builder.hpp"
#include "aptness/error.hpp"
#include "aptness/text.hpp"
#include "test_support.hpp"

using namespace aptness;
using namespace aptness::apt;
using testing_support::ScriptedChat;
using testing_support::TempDir;

namespace {

BuildPlan desk_plan() {
  BuildPlan p;
  p.factors_per_emotion = 2;
  p.situations_per_factor = 2;
  p.dialogues_per_situation = 1;
  p.emotions = {"joy", "sadness"};
  p.seed = 11;
  p.max_in_flight = 2;
  return p;
}

// Passes calls through to the mock until `budget` runs out, then throws
// something the builder does not treat as a recoverable failure.
class KillAfter : public llm::ChatProvider {
 public:
  explicit KillAfter(int budget) : budget_(budget) {}
  llm::ChatResult chat(const llm::ChatRequest& r) override {
    if (budget_-- <= 0) throw std::runtime_error("killed");
    return inner_.chat(r);
  }
  std::string model_id() const override { return inner_.model_id(); }

 private:
  std::atomic<int> budget_;
  llm::MockChatProvider inner_;
};

// Listener count straight from the JSON, without the library's parser.
std::size_t listener_turns(const std::filesystem::path& db) {
  std::size_t n = 0;
  std::ifstream in(db);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto row = nlohmann::json::parse(line);
    for (const auto& u : row["dialogue"]["utterances"]) {
      n += u["role"] == "listener";
    }
  }
  return n;
}

}  // namespace

TEST(EmotionPalette, ShippedPaletteHasSevenMajorsAndTwentyThreeSubcategories) {
  auto p = EmotionPalette::shipped();
  EXPECT_EQ(p.major_categories().size(), 7u);
  auto subs = p.subcategories();
  EXPECT_EQ(subs.size(), 23u);
  EXPECT_EQ(std::set<std::string>(subs.begin(), subs.end()).size(), 23u);
  EXPECT_TRUE(p.contains("anger"));
  EXPECT_FALSE(p.contains("boredom"));
}

TEST(EmotionPalette, RejectsDuplicateSubcategory) {
  auto j = nlohmann::json::parse(
      R"({"major_categories":[{"name":"a","subcategories":["x","y"]},{"name":"b","subcategories":["x"]}]})");
  EXPECT_THROW(EmotionPalette::from_json(j), Error);
}

TEST(ParseItemList, StripsBulletsAndNumbering) {
  auto items = parse_item_list("1. Work stress\n- Family conflict\n* \"Money\"\n", 3);
  EXPECT_EQ(items, (std::vector<std::string>{"Work stress", "Family conflict", "Money"}));
}

TEST(ParseItemList, ParagraphWhereListExpectedIsParseError) {
  EXPECT_THROW(parse_item_list("Here is one long paragraph about many things.", 5), ParseError);
  EXPECT_THROW(parse_item_list("   \n ", 1), ParseError);
}

TEST(ParseGeneratedDialogue, LabelsContinuationsAndTrailingSpeaker) {
  auto d = parse_generated_dialogue(
      "Speaker: I got the job!\nListener: Congratulations!\nThat is great news.\n"
      "Speaker: Thanks.\nListener: **You earned it.**\nSpeaker: bye",
      "I got the job!", "e/0/0/0");
  ASSERT_EQ(d.size(), 4u);
  EXPECT_EQ(d.utterances()[1].text, "Congratulations! That is great news.");
  EXPECT_EQ(d.back().text, "You earned it.");
  EXPECT_EQ(d.back().role, Role::kListener);
}

TEST(ParseGeneratedDialogue, PrependsOpeningWhenReplyStartsWithListener) {
  auto d = parse_generated_dialogue("Listener: Oh no.\nSpeaker: Yes.\nListener: I see.", "I fell.",
                                    "x");
  ASSERT_EQ(d.size(), 4u);
  EXPECT_EQ(d.utterances()[0].text, "I fell.");
}

TEST(ParseGeneratedDialogue, NonAlternatingIsParseError) {
  EXPECT_THROW(parse_generated_dialogue("Speaker: a\nSpeaker: b\nListener: c", "a", "x"),
               ParseError);
  EXPECT_THROW(parse_generated_dialogue("Speaker: only me", "only me", "x"), ParseError);
}

TEST(GenerateFactors, IntraReplyDuplicateTriggersExactlyOneReprompt) {
  int call = 0;
  ScriptedChat chat([&](const llm::ChatRequest&) { return call++ == 0 ? "x\nx" : "x"; });
  BuildPlan plan;
  plan.factors_per_emotion = 1;
  auto f = generate_factors(EmotionPalette::shipped(), "joy", plan, chat, BuilderPrompts::load());
  EXPECT_EQ(f, std::vector<std::string>{"x"});
  EXPECT_EQ(chat.total_calls(), 2);
  // The re-prompt tells the model what to avoid.
  EXPECT_NE(chat.requests()[1].messages.back().content.find("- x"), std::string::npos);
}

TEST(GenerateFactors, ExhaustedBudgetReportsPartialList) {
  ScriptedChat chat([](const llm::ChatRequest&) { return "a\na"; });
  BuildPlan plan;
  plan.factors_per_emotion = 3;
  plan.retry_budget = 2;
  try {
    generate_factors(EmotionPalette::shipped(), "joy", plan, chat, BuilderPrompts::load());
    FAIL();
  } catch (const BuildError& e) {
    EXPECT_EQ(e.partial(), std::vector<std::string>{"a"});
  }
  EXPECT_EQ(chat.total_calls(), 3);
}

TEST(GenerateSituations, RoleLabelsInsideSituationsAreRejected) {
  int call = 0;
  ScriptedChat chat([&](const llm::ChatRequest&) {
    return call++ == 0 ? "Speaker: my boss yelled\nlost a wallet" : "lost a wallet\nmissed a train";
  });
  BuildPlan plan;
  plan.situations_per_factor = 2;
  auto s = generate_situations(EmotionPalette::shipped(), "anger", "work", plan, chat,
                               BuilderPrompts::load());
  EXPECT_EQ(s, (std::vector<std::string>{"lost a wallet", "missed a train"}));
}

TEST(GenerateDialogue, RethinkReplacesLastListenerTurn) {
  ScriptedChat chat([](const llm::ChatRequest& r) -> std::string {
    if (r.task == "dialogue_opening") return "Speaker: My dog died.";
    if (r.task == "dialogue_continuation") {
      return "Listener: Oh.\nSpeaker: He was 14.\nListener: Get a new one.";
    }
    return "Losing a companion of fourteen years is heartbreaking.";
  });
  auto rec = generate_dialogue("sadness", "loss", "pet died", "sadness/0/0/0", BuildPlan{}, chat,
                               BuilderPrompts::load());
  EXPECT_EQ(rec.dialogue.size(), 4u);
  EXPECT_EQ(rec.final_response, "Losing a companion of fourteen years is heartbreaking.");
  EXPECT_EQ(rec.dialogue.back().text, rec.final_response);
  EXPECT_TRUE(rec.violations(EmotionPalette::shipped()).empty());
  EXPECT_EQ(chat.total_calls(), 3);
}

TEST(RunBuild, DeskScalePlanProducesEightValidRecords) {
  TempDir dir;
  llm::MockChatProvider chat;
  const auto db = dir / "apt.jsonl";
  auto stats = run_build(EmotionPalette::shipped(), desk_plan(), chat, db, false);
  EXPECT_EQ(stats.dialogues, 8u);
  EXPECT_EQ(stats.failed_subtrees, 0u);
  auto records = read_database(db);
  ASSERT_EQ(records.size(), 8u);
  std::set<std::string> ids;
  for (const auto& r : records) {
    EXPECT_TRUE(r.violations(EmotionPalette::shipped()).empty()) << r.id;
    ids.insert(r.id);
  }
  EXPECT_EQ(ids.size(), 8u);
  EXPECT_TRUE(ids.count("joy/0/0/0"));
  EXPECT_TRUE(ids.count("sadness/1/1/0"));

  auto responses = extract_responses(db);
  EXPECT_EQ(responses.size(), listener_turns(db));
  EXPECT_EQ(stats.responses, responses.size());
  for (const auto& r : responses) {
    EXPECT_EQ(r.history.back().role, Role::kSpeaker);
    EXPECT_NE(r.id.find('#'), std::string::npos);
  }
  auto again = compute_stats(db);
  EXPECT_EQ(again.dialogues, 8u);
  EXPECT_EQ(again.situations, 8u);
  EXPECT_EQ(again.factors, 4u);
}

TEST(RunBuild, ResumeAfterKillIsByteIdentical) {
  TempDir a, b;
  llm::MockChatProvider chat;
  run_build(EmotionPalette::shipped(), desk_plan(), chat, a / "db.jsonl", false);
  const auto reference = read_file(a / "db.jsonl");

  for (int budget : {3, 9, 17}) {
    TempDir dir;
    KillAfter dying(budget);
    EXPECT_THROW(run_build(EmotionPalette::shipped(), desk_plan(), dying, dir / "db.jsonl", false),
                 std::runtime_error);
    EXPECT_FALSE(std::filesystem::exists(dir / "db.jsonl"));
    run_build(EmotionPalette::shipped(), desk_plan(), chat, dir / "db.jsonl", false);
    EXPECT_EQ(read_file(dir / "db.jsonl"), reference) << "budget " << budget;
  }
  (void)b;
}

TEST(RunBuild, CompletedCheckpointMakesNoProviderCalls) {
  TempDir dir;
  llm::MockChatProvider chat;
  run_build(EmotionPalette::shipped(), desk_plan(), chat, dir / "db.jsonl", false);
  ScriptedChat never([](const llm::ChatRequest&) -> std::string { throw std::logic_error("called"); });
  run_build(EmotionPalette::shipped(), desk_plan(), never, dir / "db.jsonl", false);
  EXPECT_EQ(never.total_calls(), 0);
}

TEST(RunBuild, TornLastCheckpointLineIsIgnored) {
  TempDir dir;
  llm::MockChatProvider chat;
  run_build(EmotionPalette::shipped(), desk_plan(), chat, dir / "ref.jsonl", false);
  KillAfter dying(12);
  EXPECT_ANY_THROW(run_build(EmotionPalette::shipped(), desk_plan(), dying, dir / "db.jsonl", false));
  {
    std::ofstream out(dir / "db.jsonl.ckpt.jsonl", std::ios::app);
    out << R"({"kind":"triple","id":"joy/1)";
  }
  run_build(EmotionPalette::shipped(), desk_plan(), chat, dir / "db.jsonl", false);
  EXPECT_EQ(read_file(dir / "db.jsonl"), read_file(dir / "ref.jsonl"));
}

TEST(RunBuild, CheckpointFromAnotherPlanIsRefused) {
  TempDir dir;
  llm::MockChatProvider chat;
  run_build(EmotionPalette::shipped(), desk_plan(), chat, dir / "db.jsonl", false);
  auto other = desk_plan();
  other.seed = 12;
  try {
    run_build(EmotionPalette::shipped(), other, chat, dir / "db.jsonl", false);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kCheckpoint);
  }
  EXPECT_NO_THROW(run_build(EmotionPalette::shipped(), other, chat, dir / "db.jsonl", true));
}

TEST(RunBuild, FailedSubtreeIsCountedAndSkipped) {
  TempDir dir;
  llm::MockChatProvider mock;
  ScriptedChat chat([&](const llm::ChatRequest& r) {
    if (r.task == "situations" && r.messages.back().content.find("Emotion: sadness") != std::string::npos) {
      return std::string("one paragraph, no list at all");
    }
    return mock.chat(r).text;
  });
  auto stats = run_build(EmotionPalette::shipped(), desk_plan(), chat, dir / "db.jsonl", false);
  EXPECT_EQ(stats.failed_subtrees, 2u);
  EXPECT_EQ(stats.dialogues, 4u);
}

TEST(RunBuild, UnknownPlanEmotionIsConfigError) {
  TempDir dir;
  llm::MockChatProvider chat;
  auto plan = desk_plan();
  plan.emotions = {"boredom"};
  try {
    run_build(EmotionPalette::shipped(), plan, chat, dir / "db.jsonl", false);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
  }
}

TEST(ReadDatabase, MalformedLineIsNamed) {
  TempDir dir;
  write_file_atomic(dir / "db.jsonl", "{}\n");
  try {
    read_database(dir / "db.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find(":1"), std::string::npos) << e.what();
  }
}
