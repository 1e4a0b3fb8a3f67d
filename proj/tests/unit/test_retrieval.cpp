#include <cmath>
#include <fstream>
#include <numeric>

#include <gtest/gtest.h>

#include "aptness/error.hpp"
#include "aptness/retrieval.hpp"
#include "aptness/text.hpp"
#include "test_support.hpp"

using namespace aptness;
using namespace aptness::retrieval;
using testing_support::TempDir;

namespace {

std::vector<VectorIndex::Entry> entries_for(std::size_t n) {
  std::vector<VectorIndex::Entry> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({"r" + std::to_string(i), "response " + std::to_string(i),
                   testing_support::make_dialogue({"speaker " + std::to_string(i)})});
  }
  return out;
}

// Brute force: score everything, stable sort by similarity so equal scores
// keep insertion order.
std::vector<std::size_t> oracle_top_k(const std::vector<std::vector<float>>& rows,
                                      const std::vector<float>& q, std::size_t k) {
  auto cos = [](const std::vector<float>& a, const std::vector<float>& b) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      ab += double(a[i]) * b[i];
      aa += double(a[i]) * a[i];
      bb += double(b[i]) * b[i];
    }
    return ab / (std::sqrt(aa) * std::sqrt(bb));
  };
  std::vector<std::pair<double, std::size_t>> scored;
  for (std::size_t i = 0; i < rows.size(); ++i) scored.emplace_back(cos(rows[i], q), i);
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < std::min(k, scored.size()); ++i) out.push_back(scored[i].second);
  return out;
}

std::vector<std::size_t> ids_of(const std::vector<RetrievedExample>& r) {
  std::vector<std::size_t> out;
  for (const auto& e : r) out.push_back(std::stoul(e.record_id.substr(1)));
  return out;
}

}  // namespace

TEST(Cosine, BasicValues) {
  std::vector<float> a{1.0f, 0.0f}, b{0.0f, 2.0f}, c{3.0f, 0.0f};
  EXPECT_DOUBLE_EQ(cosine_similarity(a, c), 1.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(a, b), 0.0);
}

TEST(VectorIndex, MatchesBruteForceOnMockEmbeddings) {
  std::vector<std::vector<float>> rows;
  for (int i = 0; i < 1000; ++i) rows.push_back(llm::MockEmbedder::vector_for("mock-embed", "text " + std::to_string(i), 64));
  auto index = VectorIndex::from_vectors("mock-embed", entries_for(rows.size()), rows);
  for (int q = 0; q < 25; ++q) {
    auto query = llm::MockEmbedder::vector_for("mock-embed", "query " + std::to_string(q), 64);
    for (std::size_t k : {1u, 2u, 5u, 20u}) {
      auto got = index.query_vector(query, k);
      EXPECT_EQ(ids_of(got), oracle_top_k(rows, query, k)) << "q=" << q << " k=" << k;
      for (std::size_t r = 0; r < got.size(); ++r) EXPECT_EQ(got[r].rank, int(r + 1));
    }
  }
}

TEST(VectorIndex, TiesBreakByInsertionOrder) {
  std::vector<std::vector<float>> rows = {{0, 1}, {1, 0}, {0, 1}, {1, 0}, {2, 0}};
  auto index = VectorIndex::from_vectors("m", entries_for(rows.size()), rows);
  auto got = index.query_vector(std::vector<float>{1.0f, 0.0f}, 3);
  EXPECT_EQ(ids_of(got), (std::vector<std::size_t>{1, 3, 4}));
}

TEST(VectorIndex, SelfQueryHasSimilarityOne) {
  auto rows = testing_support::random_unit_vectors(200, 32, 5);
  auto index = VectorIndex::from_vectors("m", entries_for(rows.size()), rows);
  for (std::size_t i = 0; i < rows.size(); i += 17) {
    auto top = index.query_vector(rows[i], 1);
    EXPECT_NEAR(top[0].similarity, 1.0, 1e-6);
    EXPECT_EQ(top[0].record_id, "r" + std::to_string(i));
  }
}

TEST(VectorIndex, KLargerThanIndexReturnsEverything) {
  auto rows = testing_support::random_unit_vectors(3, 8, 1);
  auto index = VectorIndex::from_vectors("m", entries_for(3), rows);
  EXPECT_EQ(index.query_vector(rows[0], 10).size(), 3u);
}

TEST(VectorIndex, RejectsBadQueries) {
  auto rows = testing_support::random_unit_vectors(3, 8, 1);
  auto index = VectorIndex::from_vectors("m", entries_for(3), rows);
  auto kind_of = [&](auto&& f) {
    try {
      f();
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::kConfig;
  };
  EXPECT_EQ(kind_of([&] { index.query_vector(rows[0], 0); }), ErrorKind::kPrecondition);
  EXPECT_EQ(kind_of([&] { index.query_vector(std::vector<float>(8, 0.0f), 1); }), ErrorKind::kQuery);
  EXPECT_EQ(kind_of([&] { index.query_vector(std::vector<float>(4, 1.0f), 1); }), ErrorKind::kQuery);
  llm::MockEmbedder other("other-embed", 8);
  EXPECT_EQ(kind_of([&] { index.query("hello", 1, other); }), ErrorKind::kManifest);
}

TEST(VectorIndex, BuildRejectsDimensionDriftNamingTheRecord) {
  std::vector<std::vector<float>> rows = {{1, 0}, {1, 0, 0}};
  try {
    VectorIndex::from_vectors("m", entries_for(2), rows);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kBuild);
    EXPECT_NE(std::string(e.what()).find("'r1'"), std::string::npos);
  }
  std::vector<std::vector<float>> zero = {{0.0f, 0.0f}};
  EXPECT_THROW(VectorIndex::from_vectors("m", entries_for(1), zero), Error);
}

TEST(VectorIndex, BuildFromResponsesEmbedsEachOnce) {
  std::vector<apt::ResponseEntry> responses;
  for (int i = 0; i < 10; ++i) {
    responses.push_back({"rec" + std::to_string(i) + "#1", "rec" + std::to_string(i),
                         "reply " + std::to_string(i), testing_support::make_dialogue({"hi"})});
  }
  llm::MockEmbedder emb;
  auto index = VectorIndex::build(responses, emb, 3, "2024-01-01T00:00:00Z");
  EXPECT_EQ(index.size(), 10u);
  EXPECT_EQ(index.dimension(), 64);
  auto hit = index.query("reply 7", 1, emb);
  EXPECT_EQ(hit[0].record_id, "rec7#1");
  EXPECT_NEAR(hit[0].similarity, 1.0, 1e-6);
  EXPECT_EQ(hit[0].history.size(), 1u);
}

TEST(VectorIndex, SaveLoadRoundTrip) {
  TempDir dir;
  auto rows = testing_support::random_unit_vectors(50, 16, 3);
  auto index = VectorIndex::from_vectors("m", entries_for(50), rows, "2024-01-01T00:00:00Z");
  index.save(dir.path());
  auto back = VectorIndex::load(dir.path(), std::string("m"));
  EXPECT_EQ(back.manifest().vectors_checksum, index.manifest().vectors_checksum);
  EXPECT_EQ(back.manifest().build_timestamp, "2024-01-01T00:00:00Z");
  for (std::size_t i = 0; i < 50; i += 7) {
    EXPECT_EQ(ids_of(back.query_vector(rows[i], 5)), ids_of(index.query_vector(rows[i], 5)));
  }
  EXPECT_EQ(back.embedding_entry(3).vector, rows[3]);
  try {
    VectorIndex::load(dir.path(), std::string("different-model"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kManifest);
  }
}

TEST(VectorIndex, TruncatedVectorsFileNamesTheOffset) {
  TempDir dir;
  auto rows = testing_support::random_unit_vectors(4, 8, 3);
  VectorIndex::from_vectors("m", entries_for(4), rows).save(dir.path());
  std::filesystem::resize_file(dir / "vectors.bin", 100);
  try {
    VectorIndex::load(dir.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kLoad);
    EXPECT_NE(std::string(e.what()).find("byte offset 100"), std::string::npos) << e.what();
  }
}

TEST(VectorIndex, CorruptedVectorsFailChecksum) {
  TempDir dir;
  auto rows = testing_support::random_unit_vectors(4, 8, 3);
  VectorIndex::from_vectors("m", entries_for(4), rows).save(dir.path());
  {
    std::fstream f(dir / "vectors.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(5);
    f.put('\x7f');
  }
  try {
    VectorIndex::load(dir.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kLoad);
    EXPECT_NE(std::string(e.what()).find("checksum"), std::string::npos);
  }
}
