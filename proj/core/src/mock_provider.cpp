#include <array>
#include <cmath>

#include "aptness/error.hpp"
#include "aptness/gateway.hpp"
#include "aptness/text.hpp"

namespace aptness::llm {

namespace {

constexpr std::array<std::string_view, 8> kAcknowledge = {
    "That sounds really hard.",
    "I can hear how much this is weighing on you.",
    "It makes sense that you feel this way.",
    "Thank you for telling me about this.",
    "I'm sorry you are going through that.",
    "That must have been a lot to take in.",
    "What a moment that must have been for you.",
    "I can tell this matters to you a great deal.",
};

constexpr std::array<std::string_view, 8> kReflect = {
    "Feeling caught off guard like that would shake anyone.",
    "It sounds like you were hoping for something very different.",
    "Carrying that on your own is exhausting.",
    "You clearly put a lot of yourself into this.",
    "Not knowing what comes next can be the worst part.",
    "It is natural to replay a moment like that over and over.",
    "Being treated that way would hurt anyone.",
    "That kind of news takes time to settle.",
};

constexpr std::array<std::string_view, 8> kOffer = {
    "Would it help to talk through what happened?",
    "Is there someone close to you who could be with you right now?",
    "Maybe take a small break tonight and be gentle with yourself.",
    "What do you think would help you most at the moment?",
    "I'm here if you want to tell me more.",
    "Perhaps writing down what you feel could ease it a little.",
    "You don't have to figure it all out today.",
    "Let's think together about one small next step.",
};

constexpr std::array<std::string_view, 6> kSpeakerLines = {
    "I still can't stop thinking about it.",
    "I just don't know what to do anymore.",
    "It happened again this morning and I felt terrible.",
    "Everyone around me seems to be fine except me.",
    "I keep wondering whether it was my fault.",
    "I wanted to tell someone because it has been a strange week.",
};

constexpr std::array<std::string_view, 6> kMetricNames = {
    "Empathy", "Coherence", "Informativity", "Identification", "Comforting", "Suggestion"};

template <std::size_t N>
std::string_view pick(const std::array<std::string_view, N>& bank, SplitMix64& rng) {
  return bank[rng.next_below(N)];
}

std::string reply(SplitMix64& rng) {
  std::string out(pick(kAcknowledge, rng));
  out += ' ';
  out += pick(kReflect, rng);
  out += ' ';
  out += pick(kOffer, rng);
  return out;
}

int hint_int(const ChatRequest& req, const std::string& key, int fallback) {
  if (auto it = req.hints.find(key); it != req.hints.end()) {
    try {
      return std::stoi(it->second);
    } catch (const std::exception&) {
      return fallback;
    }
  }
  return fallback;
}

}  // namespace

MockChatProvider::MockChatProvider(ProviderConfig cfg) : cfg_(std::move(cfg)) {}

ChatResult MockChatProvider::chat(const ChatRequest& request) {
  calls_.fetch_add(1);
  const json wire = chat_wire_request(request, cfg_);
  const std::uint64_t seed = fnv1a64(wire.dump()) ^ fnv1a64(request.task);
  SplitMix64 rng(seed);
  const std::string tag = hex64(seed).substr(0, 8);

  std::string text;
  const auto& task = request.task;
  if (task == "factors" || task == "situations") {
    const int count = std::max(1, hint_int(request, "count", 3));
    const std::string noun = task == "factors" ? "factor" : "situation";
    for (int i = 1; i <= count; ++i) {
      if (i > 1) text += '\n';
      if (task == "factors") {
        text += noun + " " + tag + "-" + std::to_string(i);
      } else {
        text += "You face " + noun + " " + tag + "-" + std::to_string(i) +
                " and it stays with you all day.";
      }
    }
  } else if (task == "dialogue_opening") {
    text = std::string(pick(kSpeakerLines, rng)) + " (" + tag + ")";
  } else if (task == "dialogue_continuation") {
    text = "Listener: " + reply(rng) + "\nSpeaker: " + std::string(pick(kSpeakerLines, rng)) +
           "\nListener: " + reply(rng);
  } else if (task == "strategy") {
    std::vector<std::string> candidates;
    if (auto it = request.hints.find("candidates"); it != request.hints.end()) {
      candidates = split_any(it->second, "\n");
    }
    if (candidates.empty()) {
      text = "Greetings";
    } else {
      const bool multi = hint_int(request, "multi", 0) != 0;
      text = candidates[rng.next_below(candidates.size())];
      if (multi && rng.next_below(2) == 1) {
        const auto& second = candidates[rng.next_below(candidates.size())];
        if (second != text) text += "; " + second;
      }
    }
  } else if (task == "judge") {
    for (std::size_t i = 0; i < kMetricNames.size(); ++i) {
      if (i > 0) text += '\n';
      text += std::string(kMetricNames[i]) + ": " + std::to_string(4 + rng.next_below(4));
    }
  } else {
    // draft, final, dialogue_rethink and anything unrecognised.
    text = reply(rng);
  }

  ChatResult result;
  result.text = std::move(text);
  result.usage.prompt_tokens = static_cast<int>(wire.dump().size() / 4);
  result.usage.completion_tokens = static_cast<int>(result.text.size() / 4);
  return result;
}

MockEmbedder::MockEmbedder(std::string model_id, int dimension)
    : model_id_(std::move(model_id)), dimension_(dimension) {
  if (dimension_ < 1) throw Error(ErrorKind::kConfig, "mock embedder dimension must be >= 1");
}

std::vector<float> MockEmbedder::vector_for(std::string_view model_id, std::string_view text,
                                            int dimension) {
  SplitMix64 rng(fnv1a64(text) ^ (fnv1a64(model_id) * 0x9e3779b97f4a7c15ULL));
  std::vector<double> raw(static_cast<std::size_t>(dimension));
  double norm_sq = 0.0;
  for (auto& x : raw) {
    x = 2.0 * rng.next_unit() - 1.0;
    norm_sq += x * x;
  }
  const double norm = std::sqrt(norm_sq);
  std::vector<float> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = static_cast<float>(raw[i] / norm);
  return out;
}

std::vector<std::vector<float>> MockEmbedder::embed(const std::vector<std::string>& texts) {
  if (texts.empty()) {
    throw Error(ErrorKind::kPrecondition, "embed called with no texts");
  }
  std::vector<std::vector<float>> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(vector_for(model_id_, t, dimension_));
  return out;
}

}  // namespace aptness::llm
