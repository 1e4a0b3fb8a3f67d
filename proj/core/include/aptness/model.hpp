#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace aptness {

using nlohmann::json;

enum class Role { kSpeaker, kListener };

std::string_view to_string(Role role);
Role parse_role(std::string_view s);

struct Utterance {
  Role role;
  std::string text;
  std::size_t index = 0;

  bool operator==(const Utterance&) const = default;
};

// A dialogue history C: alternating Speaker/Listener utterances. Values are
// immutable once built; growing a dialogue yields a new value.
class Dialogue {
 public:
  Dialogue() = default;
  // Rejects empty or whitespace-only utterance text with ErrorKind::kData.
  // Alternation is not enforced here; see validate_dialogue.
  Dialogue(std::string id, const std::vector<std::pair<Role, std::string>>& turns,
           json meta = json::object());

  static Dialogue from_json(const json& j);
  json to_json() const;

  const std::string& id() const noexcept { return id_; }
  const std::vector<Utterance>& utterances() const noexcept { return utterances_; }
  const json& meta() const noexcept { return meta_; }
  std::size_t size() const noexcept { return utterances_.size(); }
  bool empty() const noexcept { return utterances_.empty(); }
  const Utterance& back() const { return utterances_.back(); }

  Dialogue appended(Role role, std::string text) const;
  Dialogue first(std::size_t count) const;
  Dialogue with_id(std::string id) const;

  bool operator==(const Dialogue&) const = default;

 private:
  std::string id_;
  std::vector<Utterance> utterances_;
  json meta_ = json::object();
};

struct ValidationResult {
  std::vector<std::string> violations;
  bool ok() const noexcept { return violations.empty(); }
};

ValidationResult validate_dialogue(const Dialogue& d, bool require_query_ready);

// Number of Speaker+Listener exchanges, counting a pending final Speaker
// utterance as a turn: ceil(len / 2).
std::size_t turn_count(const Dialogue& d);

// C_ij: utterances S_1, L_1, ..., S_j (2j - 1 of them). Throws kRange unless
// 1 <= j <= turn_count(d).
Dialogue history_prefix(const Dialogue& d, std::size_t j);

// "Speaker: ...\nListener: ..." one utterance per line.
std::string render_history(const Dialogue& d);

enum class Scheme { kExTES, kESConv };
std::string_view to_string(Scheme scheme);
Scheme parse_scheme(std::string_view s);

struct StrategyName {
  std::string name;
  Scheme scheme = Scheme::kExTES;

  bool operator==(const StrategyName&) const = default;
};

enum class Mode { kGen, kRag, kAptness };
std::string_view to_string(Mode mode);
Mode parse_mode(std::string_view s);

struct Sampling {
  double temperature = 0.95;
  double top_p = 0.7;

  bool operator==(const Sampling&) const = default;
};

struct DraftResponse {
  std::string text;
  std::string model_id;
  Sampling sampling;
};

struct RetrievedExample {
  std::string record_id;
  std::string response_text;
  Dialogue history;
  double similarity = 0.0;
  int rank = 0;
};

struct StrategyUse {
  std::string name;
  std::string definition;
};

struct Provenance {
  std::optional<DraftResponse> draft;
  std::vector<RetrievedExample> retrieved;
  std::vector<StrategyUse> strategies;
  // APTNESS run whose strategy prediction failed and degraded to RAG framing.
  bool strategy_fallback = false;
  // Predictions that fell back to "Greetings" because no name was recognised.
  int greeting_fallbacks = 0;
  int unknown_strategy_names = 0;
};

// R_final with everything that went into it.
struct FinalResponse {
  std::string text;
  Mode mode = Mode::kGen;
  Provenance provenance;
};

json to_json(const DraftResponse& d);
json to_json(const RetrievedExample& r);
json to_json(const Provenance& p);
json to_json(const FinalResponse& f);
DraftResponse draft_from_json(const json& j);
RetrievedExample retrieved_from_json(const json& j);
Provenance provenance_from_json(const json& j);
FinalResponse final_response_from_json(const json& j);

}  // namespace aptness
