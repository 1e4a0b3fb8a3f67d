#include "aptness/retrieval.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <ctime>
#include <fstream>
#include <numeric>

#include "aptness/error.hpp"
#include "aptness/text.hpp"

namespace aptness::retrieval {

static_assert(std::endian::native == std::endian::little,
              "vectors.bin is little-endian; add byte swapping for this target");

using nlohmann::json;

namespace {

double norm_of(std::span<const float> v) {
  double s = 0.0;
  for (float x : v) s += static_cast<double>(x) * static_cast<double>(x);
  return std::sqrt(s);
}

double dot(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return s;
}

std::string checksum_of(const std::vector<float>& matrix) {
  const auto* bytes = reinterpret_cast<const char*>(matrix.data());
  return hex64(fnv1a64(std::string_view(bytes, matrix.size() * sizeof(float))));
}

}  // namespace

std::string utc_timestamp_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json IndexManifest::to_json() const {
  return {{"embedding_model_id", embedding_model_id},
          {"dimension", dimension},
          {"entry_count", entry_count},
          {"build_timestamp", build_timestamp},
          {"vectors_checksum", vectors_checksum}};
}

IndexManifest IndexManifest::from_json(const json& j) {
  IndexManifest m;
  m.embedding_model_id = j.at("embedding_model_id").get<std::string>();
  m.dimension = j.at("dimension").get<int>();
  m.entry_count = j.at("entry_count").get<std::size_t>();
  m.build_timestamp = j.value("build_timestamp", std::string{});
  m.vectors_checksum = j.value("vectors_checksum", std::string{});
  if (m.dimension < 1) throw Error(ErrorKind::kLoad, "manifest dimension must be positive");
  return m;
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorKind::kQuery, "cosine of vectors with different dimensions");
  }
  const double na = norm_of(a);
  const double nb = norm_of(b);
  if (na == 0.0 || nb == 0.0) throw Error(ErrorKind::kQuery, "cosine of a zero vector");
  return dot(a, b) / (na * nb);
}

VectorIndex VectorIndex::from_vectors(std::string model_id, std::vector<Entry> entries,
                                      const std::vector<std::vector<float>>& vectors,
                                      std::string build_timestamp) {
  if (entries.empty()) throw Error(ErrorKind::kPrecondition, "index needs at least one entry");
  if (entries.size() != vectors.size()) {
    throw Error(ErrorKind::kPrecondition, "entry and vector counts differ");
  }
  VectorIndex index;
  const std::size_t dim = vectors.front().size();
  if (dim == 0) throw Error(ErrorKind::kBuild, "embedding dimension is zero");
  index.matrix_.reserve(entries.size() * dim);
  index.norms_.reserve(entries.size());
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (vectors[i].size() != dim) {
      throw Error(ErrorKind::kBuild, "embedding dimension changed from " + std::to_string(dim) +
                                         " to " + std::to_string(vectors[i].size()) +
                                         " at record '" + entries[i].record_id + "'");
    }
    const double n = norm_of(vectors[i]);
    if (n == 0.0) {
      throw Error(ErrorKind::kBuild, "all-zero embedding for record '" + entries[i].record_id + "'");
    }
    index.matrix_.insert(index.matrix_.end(), vectors[i].begin(), vectors[i].end());
    index.norms_.push_back(n);
  }
  index.entries_ = std::move(entries);
  index.manifest_.embedding_model_id = std::move(model_id);
  index.manifest_.dimension = static_cast<int>(dim);
  index.manifest_.entry_count = index.entries_.size();
  index.manifest_.build_timestamp =
      build_timestamp.empty() ? utc_timestamp_now() : std::move(build_timestamp);
  index.manifest_.vectors_checksum = checksum_of(index.matrix_);
  return index;
}

VectorIndex VectorIndex::build(const std::vector<apt::ResponseEntry>& entries,
                               llm::Embedder& embedder, std::size_t batch_size,
                               std::string build_timestamp) {
  if (entries.empty()) throw Error(ErrorKind::kPrecondition, "index needs at least one entry");
  batch_size = std::max<std::size_t>(1, batch_size);
  std::vector<Entry> metas;
  std::vector<std::vector<float>> vectors;
  metas.reserve(entries.size());
  vectors.reserve(entries.size());
  for (std::size_t begin = 0; begin < entries.size(); begin += batch_size) {
    const std::size_t end = std::min(entries.size(), begin + batch_size);
    std::vector<std::string> texts;
    for (std::size_t i = begin; i < end; ++i) texts.push_back(entries[i].response);
    auto batch = embedder.embed(texts);
    if (batch.size() != texts.size()) {
      throw Error(ErrorKind::kProviderContract, "embedder returned " +
                                                    std::to_string(batch.size()) + " vectors for " +
                                                    std::to_string(texts.size()) + " texts");
    }
    for (std::size_t i = begin; i < end; ++i) {
      auto& v = batch[i - begin];
      if (!vectors.empty() && v.size() != vectors.front().size()) {
        throw Error(ErrorKind::kBuild, "embedding dimension drift at record '" + entries[i].id +
                                           "': " + std::to_string(v.size()) + " != " +
                                           std::to_string(vectors.front().size()));
      }
      metas.push_back({entries[i].id, entries[i].response, entries[i].history});
      vectors.push_back(std::move(v));
    }
  }
  return from_vectors(embedder.model_id(), std::move(metas), vectors, std::move(build_timestamp));
}

void VectorIndex::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::vector<json> rows;
  rows.reserve(entries_.size());
  for (const auto& e : entries_) {
    rows.push_back({{"id", e.record_id}, {"response", e.response_text}, {"history", e.history.to_json()}});
  }
  write_jsonl(dir / "entries.jsonl", rows);
  const auto* bytes = reinterpret_cast<const char*>(matrix_.data());
  write_file_atomic(dir / "vectors.bin", std::string_view(bytes, matrix_.size() * sizeof(float)));
  write_file_atomic(dir / "manifest.json", manifest_.to_json().dump(2) + "\n");
}

VectorIndex VectorIndex::load(const std::filesystem::path& dir,
                              const std::optional<std::string>& expected_model_id) {
  for (const char* name : {"manifest.json", "entries.jsonl", "vectors.bin"}) {
    if (!std::filesystem::exists(dir / name)) {
      throw Error(ErrorKind::kLoad, "index " + dir.string() + " lacks " + name);
    }
  }
  IndexManifest manifest;
  try {
    manifest = IndexManifest::from_json(json::parse(read_file(dir / "manifest.json")));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kLoad, "bad manifest in " + dir.string() + ": " + e.what());
  }
  if (expected_model_id && *expected_model_id != manifest.embedding_model_id) {
    throw Error(ErrorKind::kManifest, "index was built with embedding model '" +
                                          manifest.embedding_model_id + "' but '" +
                                          *expected_model_id + "' is configured");
  }

  const std::size_t dim = static_cast<std::size_t>(manifest.dimension);
  const std::size_t expected_bytes = manifest.entry_count * dim * sizeof(float);
  const std::string raw = read_file(dir / "vectors.bin");
  if (raw.size() < expected_bytes) {
    throw Error(ErrorKind::kLoad, "truncated vectors.bin: data ends at byte offset " +
                                      std::to_string(raw.size()) + ", expected " +
                                      std::to_string(expected_bytes) + " bytes (row " +
                                      std::to_string(raw.size() / (dim * sizeof(float))) + ")");
  }
  if (raw.size() > expected_bytes) {
    throw Error(ErrorKind::kLoad, "vectors.bin has " + std::to_string(raw.size() - expected_bytes) +
                                      " unexpected bytes after offset " +
                                      std::to_string(expected_bytes));
  }
  if (!manifest.vectors_checksum.empty() &&
      hex64(fnv1a64(raw)) != manifest.vectors_checksum) {
    throw Error(ErrorKind::kLoad, "vectors.bin checksum mismatch in " + dir.string());
  }

  std::vector<Entry> entries;
  for (const auto& row : read_jsonl(dir / "entries.jsonl")) {
    entries.push_back({row.at("id").get<std::string>(), row.at("response").get<std::string>(),
                       Dialogue::from_json(row.at("history"))});
  }
  if (entries.size() != manifest.entry_count) {
    throw Error(ErrorKind::kLoad, "entries.jsonl has " + std::to_string(entries.size()) +
                                      " rows, manifest says " +
                                      std::to_string(manifest.entry_count));
  }

  VectorIndex index;
  index.matrix_.resize(manifest.entry_count * dim);
  std::memcpy(index.matrix_.data(), raw.data(), expected_bytes);
  index.norms_.reserve(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const double n = norm_of(std::span<const float>(index.matrix_.data() + i * dim, dim));
    if (n == 0.0) {
      throw Error(ErrorKind::kLoad, "all-zero vector at row " + std::to_string(i));
    }
    index.norms_.push_back(n);
  }
  index.entries_ = std::move(entries);
  index.manifest_ = std::move(manifest);
  return index;
}

std::span<const float> VectorIndex::vector(std::size_t i) const {
  const std::size_t dim = static_cast<std::size_t>(manifest_.dimension);
  if (i >= entries_.size()) throw Error(ErrorKind::kRange, "index row out of range");
  return {matrix_.data() + i * dim, dim};
}

EmbeddingEntry VectorIndex::embedding_entry(std::size_t i) const {
  const auto v = vector(i);
  const auto& e = entries_.at(i);
  return {e.record_id, e.response_text, e.history, std::vector<float>(v.begin(), v.end())};
}

std::vector<RetrievedExample> VectorIndex::query_vector(std::span<const float> query,
                                                        std::size_t k) const {
  if (k == 0) throw Error(ErrorKind::kPrecondition, "k must be positive");
  const std::size_t dim = static_cast<std::size_t>(manifest_.dimension);
  if (query.size() != dim) {
    throw Error(ErrorKind::kQuery, "query dimension " + std::to_string(query.size()) +
                                       " does not match index dimension " + std::to_string(dim));
  }
  const double qn = norm_of(query);
  if (qn == 0.0) throw Error(ErrorKind::kQuery, "query vector has zero norm");

  std::vector<double> sims(entries_.size());
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    sims[i] = dot(query, std::span<const float>(matrix_.data() + i * dim, dim)) / (qn * norms_[i]);
  }
  std::vector<std::size_t> order(entries_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t take = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (sims[a] != sims[b]) return sims[a] > sims[b];
                      return a < b;
                    });
  std::vector<RetrievedExample> out;
  out.reserve(take);
  for (std::size_t r = 0; r < take; ++r) {
    const auto& e = entries_[order[r]];
    out.push_back({e.record_id, e.response_text, e.history, sims[order[r]], static_cast<int>(r + 1)});
  }
  return out;
}

std::vector<RetrievedExample> VectorIndex::query(std::string_view text, std::size_t k,
                                                 llm::Embedder& embedder) const {
  if (embedder.model_id() != manifest_.embedding_model_id) {
    throw Error(ErrorKind::kManifest, "query embedder '" + embedder.model_id() +
                                          "' does not match index model '" +
                                          manifest_.embedding_model_id + "'");
  }
  auto vectors = embedder.embed({std::string(text)});
  if (vectors.size() != 1) {
    throw Error(ErrorKind::kProviderContract, "embedder returned no vector for the query");
  }
  return query_vector(vectors.front(), k);
}

}  // namespace aptness::retrieval
