#include "aptness/prompt.hpp"

#include <regex>

#include "aptness/data.hpp"
#include "aptness/text.hpp"

namespace aptness::prompt {

namespace {

constexpr std::string_view kFullOpen = "\xEF\xBC\xBB";   // U+FF3B
constexpr std::string_view kFullClose = "\xEF\xBC\xBD";  // U+FF3D

const std::regex& ascii_marker() {
  static const std::regex re(R"(\[((?:End of )?(?:Response|Strategy) \d+)\])");
  return re;
}

const std::regex& fullwidth_marker() {
  static const std::regex re("\xEF\xBC\xBB((?:End of )?(?:Response|Strategy) \\d+)\xEF\xBC\xBD");
  return re;
}

}  // namespace

PromptTemplates PromptTemplates::load(const std::filesystem::path& override_dir) {
  return {data::load_template("draft", override_dir),
          data::load_template("final_rag", override_dir),
          data::load_template("final_aptness", override_dir)};
}

std::string escape_markers(std::string_view text) {
  return std::regex_replace(std::string(text), ascii_marker(),
                            std::string(kFullOpen) + "$1" + std::string(kFullClose));
}

std::string unescape_markers(std::string_view text) {
  return std::regex_replace(std::string(text), fullwidth_marker(), "[$1]");
}

std::string format_responses(const std::vector<std::string>& texts, int first_index) {
  std::string out;
  int i = first_index;
  for (const auto& t : texts) {
    if (!out.empty()) out.push_back('\n');
    const auto n = std::to_string(i++);
    out += "[Response " + n + "] " + escape_markers(t) + " [End of Response " + n + "]";
  }
  return out;
}

std::string format_strategies(const std::vector<StrategyUse>& strategies) {
  std::string out;
  int j = 1;
  for (const auto& s : strategies) {
    if (!out.empty()) out.push_back('\n');
    const auto n = std::to_string(j++);
    out += "[Strategy " + n + "] " + escape_markers(s.name) + ", which is defined as " +
           escape_markers(s.definition) + " [End of Strategy " + n + "]";
  }
  return out;
}

AssembledPrompt assemble_prompt(const Dialogue& history, const DraftResponse& draft,
                                const std::vector<RetrievedExample>& retrieved,
                                const std::vector<StrategyUse>& strategies,
                                const PromptTemplates& templates) {
  AssembledPrompt p;
  p.dialogue = escape_markers(render_history(history));
  std::vector<std::string> texts;
  texts.push_back(draft.text);
  for (const auto& r : retrieved) texts.push_back(r.response_text);
  for (const auto& t : texts) p.responses.push_back(escape_markers(t));
  p.strategies = strategies;

  std::map<std::string, std::string> slots = {{"dialogue", p.dialogue},
                                              {"responses", format_responses(texts, 0)}};
  if (strategies.empty()) {
    p.text = render_template(templates.final_rag, slots);
  } else {
    slots["strategies"] = format_strategies(strategies);
    p.text = render_template(templates.final_aptness, slots);
  }
  return p;
}

ParsedPrompt parse_bracket_grammar(std::string_view text) {
  ParsedPrompt out;
  const std::string s(text);
  static const std::regex response_re(R"(\[Response (\d+)\] ([^\n]*?) \[End of Response \1\])");
  static const std::regex strategy_re(
      R"(\[Strategy (\d+)\] ([^\n]*?), which is defined as ([^\n]*?) \[End of Strategy \1\])");
  for (auto it = std::sregex_iterator(s.begin(), s.end(), response_re); it != std::sregex_iterator();
       ++it) {
    out.responses.emplace_back(std::stoi((*it)[1]), unescape_markers((*it)[2].str()));
  }
  for (auto it = std::sregex_iterator(s.begin(), s.end(), strategy_re); it != std::sregex_iterator();
       ++it) {
    out.strategies.emplace_back(
        std::stoi((*it)[1]),
        StrategyUse{unescape_markers((*it)[2].str()), unescape_markers((*it)[3].str())});
  }
  return out;
}

}  // namespace aptness::prompt
