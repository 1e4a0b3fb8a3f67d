#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "aptness/error.hpp"
#include "aptness/gateway.hpp"
#include "aptness/model.hpp"

// Builds the APT response database: every palette emotion is decomposed into
// factors, each factor into situations, and each situation into short
// dialogues whose final Listener turn is regenerated with the emotion, factor
// and situation in mind.
namespace aptness::apt {

struct MajorCategory {
  std::string name;
  std::vector<std::string> subcategories;
};

class EmotionPalette {
 public:
  // Throws kData when a subcategory name repeats anywhere in the palette.
  static EmotionPalette from_json(const nlohmann::json& j);
  static EmotionPalette load(const std::filesystem::path& path);
  // The palette compiled into the library (7 categories, 23 subcategories).
  static EmotionPalette shipped();

  const std::vector<MajorCategory>& major_categories() const noexcept { return majors_; }
  std::vector<std::string> subcategories() const;
  bool contains(std::string_view emotion) const;
  // Position of a subcategory in palette order; throws kData if absent.
  std::size_t position(std::string_view emotion) const;

 private:
  std::vector<MajorCategory> majors_;
};

struct BuildPlan {
  int factors_per_emotion = 10;
  // 2,415 situations over 230 factors is 10.5 per factor; the default is
  // uniform and rounds up.
  int situations_per_factor = 11;
  int dialogues_per_situation = 4;
  std::uint64_t seed = 0;
  std::filesystem::path checkpoint_path;
  int retry_budget = 3;
  int max_in_flight = 4;
  // Subset of palette subcategories to build; empty means all of them.
  std::vector<std::string> emotions;

  void validate() const;
  static BuildPlan from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct AptRecord {
  std::string id;
  std::string emotion;
  std::string factor;
  std::string situation;
  Dialogue dialogue;
  std::string final_response;

  nlohmann::json to_json() const;
  static AptRecord from_json(const nlohmann::json& j);
  std::vector<std::string> violations(const EmotionPalette& palette) const;
};

// "{emotion}/{factor_idx}/{situation_idx}/{dialogue_idx}", all 0-based.
std::string record_id(std::string_view emotion, int factor_idx, int situation_idx,
                      int dialogue_idx);

struct BuilderPrompts {
  std::string factors;
  std::string situations;
  std::string few_shot;
  std::string opening;
  std::string continuation;
  std::string rethink;

  static BuilderPrompts load(const std::filesystem::path& override_dir = {});
};

// A stage that exhausted its retry budget. `partial` holds what had been
// accepted so far (e.g. distinct factors collected before giving up).
class BuildError : public Error {
 public:
  BuildError(const std::string& message, std::vector<std::string> partial)
      : Error(ErrorKind::kBuild, message), partial_(std::move(partial)) {}
  const std::vector<std::string>& partial() const noexcept { return partial_; }

 private:
  std::vector<std::string> partial_;
};

// Parses a one-item-per-line provider answer, stripping bullets and
// numbering. Throws ParseError when the text is not a list (no items, or a
// single paragraph where several items were requested).
std::vector<std::string> parse_item_list(std::string_view raw, int expected_count);

// Parses "Speaker: ..." / "Listener: ..." lines. Unlabelled lines continue
// the previous utterance; a reply starting with the Listener is prefixed with
// `opening`; a trailing Speaker line is dropped. Throws ParseError when the
// result does not alternate or has no Listener turn.
Dialogue parse_generated_dialogue(std::string_view raw, std::string_view opening,
                                  std::string id);

std::vector<std::string> generate_factors(const EmotionPalette& palette,
                                          std::string_view emotion, const BuildPlan& plan,
                                          llm::ChatProvider& provider,
                                          const BuilderPrompts& prompts);

std::vector<std::string> generate_situations(const EmotionPalette& palette,
                                             std::string_view emotion, std::string_view factor,
                                             const BuildPlan& plan, llm::ChatProvider& provider,
                                             const BuilderPrompts& prompts);

// Three provider calls: opening Speaker utterance, continuation into a full
// dialogue, then a rethink that regenerates the last Listener turn.
AptRecord generate_dialogue(std::string_view emotion, std::string_view factor,
                            std::string_view situation, std::string id, const BuildPlan& plan,
                            llm::ChatProvider& provider, const BuilderPrompts& prompts);

struct BuildStats {
  std::size_t emotions = 0;
  std::size_t factors = 0;
  std::size_t situations = 0;
  std::size_t dialogues = 0;
  std::size_t responses = 0;
  std::size_t failed_subtrees = 0;
  std::vector<std::string> failures;

  nlohmann::json to_json() const;
};

// Resumable: completed (emotion, factor, situation) triples, along with the
// generated factor and situation lists, are journalled to the checkpoint.
// Restarting skips them. A checkpoint that does not parse, or was written
// for a different plan, is refused (kCheckpoint) unless `fresh` is set.
BuildStats run_build(const EmotionPalette& palette, const BuildPlan& plan,
                     llm::ChatProvider& provider, const std::filesystem::path& out_path,
                     bool fresh, const BuilderPrompts& prompts = BuilderPrompts::load());

std::vector<AptRecord> read_database(const std::filesystem::path& db_path);
BuildStats compute_stats(const std::filesystem::path& db_path);

// One Listener response of the database with the history strictly before it.
struct ResponseEntry {
  std::string id;         // "<record id>#<utterance index>"
  std::string record_id;
  std::string response;
  Dialogue history;

  nlohmann::json to_json() const;
  static ResponseEntry from_json(const nlohmann::json& j);
};

// File order, then utterance order. Malformed lines are reported with their
// line number.
std::vector<ResponseEntry> extract_responses(const std::filesystem::path& db_path);
std::vector<ResponseEntry> read_responses(const std::filesystem::path& responses_path);

}  // namespace aptness::apt
