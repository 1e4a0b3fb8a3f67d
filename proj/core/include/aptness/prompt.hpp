#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "aptness/model.hpp"

namespace aptness::prompt {

struct PromptTemplates {
  std::string draft;
  std::string final_rag;
  std::string final_aptness;

  static PromptTemplates load(const std::filesystem::path& override_dir = {});
};

struct AssembledPrompt {
  std::string text;
  // Section contents as placed in the prompt (escaped).
  std::string dialogue;
  std::vector<std::string> responses;  // index 0 is the draft
  std::vector<StrategyUse> strategies;
};

// Bracket markers ("[Response 3]", "[End of Strategy 1]", ...) inside free
// text are rewritten with full-width brackets so they cannot break the
// prompt structure; unescape_markers reverses exactly that rewrite.
std::string escape_markers(std::string_view text);
std::string unescape_markers(std::string_view text);

// "[Response i] <text> [End of Response i]" per line, numbered from first_index.
std::string format_responses(const std::vector<std::string>& texts, int first_index);
// "[Strategy j] <name>, which is defined as <definition> [End of Strategy j]", j from 1.
std::string format_strategies(const std::vector<StrategyUse>& strategies);

// Fills {dialogue}, {responses} and {strategies}. The draft is Response 0,
// retrieved examples follow in rank order. Without strategies the
// retrieval-only template is used.
AssembledPrompt assemble_prompt(const Dialogue& history, const DraftResponse& draft,
                                const std::vector<RetrievedExample>& retrieved,
                                const std::vector<StrategyUse>& strategies,
                                const PromptTemplates& templates);

struct ParsedPrompt {
  std::vector<std::pair<int, std::string>> responses;
  std::vector<std::pair<int, StrategyUse>> strategies;
};

// Recovers bracket-wrapped responses and strategies (unescaped).
ParsedPrompt parse_bracket_grammar(std::string_view text);

}  // namespace aptness::prompt
