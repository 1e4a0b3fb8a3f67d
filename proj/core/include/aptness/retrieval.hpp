#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "aptness/apt_builder.hpp"
#include "aptness/gateway.hpp"
#include "aptness/model.hpp"

// Exact top-K cosine retrieval over embedded APT responses. A linear scan is
// used on purpose: at ~20k entries it takes milliseconds and is trivially
// checkable against a brute-force sort.
namespace aptness::retrieval {

struct IndexManifest {
  std::string embedding_model_id;
  int dimension = 0;
  std::size_t entry_count = 0;
  std::string build_timestamp;
  // FNV-1a 64 of vectors.bin.
  std::string vectors_checksum;

  nlohmann::json to_json() const;
  static IndexManifest from_json(const nlohmann::json& j);
};

struct EmbeddingEntry {
  std::string record_id;
  std::string response_text;
  Dialogue history;
  std::vector<float> vector;
};

// Dot product over the product of Euclidean norms, accumulated in double.
double cosine_similarity(std::span<const float> a, std::span<const float> b);

class VectorIndex {
 public:
  struct Entry {
    std::string record_id;
    std::string response_text;
    Dialogue history;
  };

  // Embeds every response once, in batches. Aborts naming the record on a
  // dimension change or an all-zero vector.
  static VectorIndex build(const std::vector<apt::ResponseEntry>& entries,
                           llm::Embedder& embedder, std::size_t batch_size = 64,
                           std::string build_timestamp = {});
  static VectorIndex from_vectors(std::string model_id, std::vector<Entry> entries,
                                  const std::vector<std::vector<float>>& vectors,
                                  std::string build_timestamp = {});

  // Writes manifest.json, entries.jsonl and vectors.bin (little-endian f32).
  void save(const std::filesystem::path& dir) const;
  // Validates sizes and checksum (kLoad); a differing expected model id is a
  // kManifest error.
  static VectorIndex load(const std::filesystem::path& dir,
                          const std::optional<std::string>& expected_model_id = std::nullopt);

  const IndexManifest& manifest() const noexcept { return manifest_; }
  std::size_t size() const noexcept { return entries_.size(); }
  int dimension() const noexcept { return manifest_.dimension; }
  const Entry& entry(std::size_t i) const { return entries_.at(i); }
  std::span<const float> vector(std::size_t i) const;
  EmbeddingEntry embedding_entry(std::size_t i) const;

  // Top min(k, size()) by similarity, ties to the lower insertion position.
  std::vector<RetrievedExample> query_vector(std::span<const float> query, std::size_t k) const;
  // Embeds `text` with `embedder`, whose model must match the manifest.
  std::vector<RetrievedExample> query(std::string_view text, std::size_t k,
                                      llm::Embedder& embedder) const;

 private:
  IndexManifest manifest_;
  std::vector<Entry> entries_;
  std::vector<float> matrix_;  // row-major, size() x dimension()
  std::vector<double> norms_;
};

// What the pipeline sees: text in, ranked examples out.
class Retriever {
 public:
  virtual ~Retriever() = default;
  virtual std::vector<RetrievedExample> retrieve(std::string_view text, std::size_t k) = 0;
};

class IndexRetriever : public Retriever {
 public:
  IndexRetriever(const VectorIndex& index, llm::Embedder& embedder)
      : index_(index), embedder_(embedder) {}
  std::vector<RetrievedExample> retrieve(std::string_view text, std::size_t k) override {
    return index_.query(text, k, embedder_);
  }

 private:
  const VectorIndex& index_;
  llm::Embedder& embedder_;
};

std::string utc_timestamp_now();

}  // namespace aptness::retrieval
