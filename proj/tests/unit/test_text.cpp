#include <gtest/gtest.h>

#include "aptness/error.hpp"
#include "aptness/text.hpp"
#include "test_support.hpp"

using namespace aptness;

TEST(Fnv1a64, PublishedTestVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
  EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
}

TEST(SplitMix64, ReferenceSequence) {
  SplitMix64 rng(0);
  EXPECT_EQ(rng.next(), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(rng.next(), 0x6e789e6aa1b965f4ULL);
}

TEST(SplitMix64, BoundedDrawsStayInRange) {
  SplitMix64 rng(99);
  for (int i = 0; i < 10000; ++i) {
    EXPECT_LT(rng.next_below(7), 7u);
    const double u = rng.next_unit();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}

TEST(RenderTemplate, SinglePassAndUnknownSlotsKept) {
  EXPECT_EQ(render_template("{a} and {b} and {c}", {{"a", "{b}"}, {"b", "B"}}),
            "{b} and B and {c}");
  EXPECT_EQ(render_template("{ not a slot }", {}), "{ not a slot }");
}

TEST(Strings, Helpers) {
  EXPECT_EQ(trim("  x y \n"), "x y");
  EXPECT_EQ(normalize_key("  Self   Disclosure "), "self disclosure");
  EXPECT_TRUE(starts_with_icase("SPEAKER: hi", "speaker:"));
  EXPECT_EQ(split_any("a, b;;c\n", ",;\n"), (std::vector<std::string>{"a", "b", "c"}));
}

TEST(Jsonl, ReportsLineNumberOfBadRow) {
  testing_support::TempDir dir;
  const auto p = dir / "x.jsonl";
  write_file_atomic(p, "{\"a\":1}\n\n{oops\n");
  try {
    read_jsonl(p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kParse);
    EXPECT_NE(std::string(e.what()).find(":3"), std::string::npos) << e.what();
  }
  write_jsonl(p, {{{"k", 1}}, {{"k", 2}}});
  EXPECT_EQ(read_jsonl(p).size(), 2u);
}

TEST(ErrorKinds, ExitCodes) {
  EXPECT_EQ(exit_code_for(ErrorKind::kConfig), 2);
  EXPECT_EQ(exit_code_for(ErrorKind::kManifest), 2);
  EXPECT_EQ(exit_code_for(ErrorKind::kTransport), 3);
  EXPECT_EQ(exit_code_for(ErrorKind::kReplay), 3);
  EXPECT_EQ(exit_code_for(ErrorKind::kData), 4);
}
