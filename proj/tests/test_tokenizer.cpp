#include <gtest/gtest.h>

#include "fixtures.hpp"

using namespace prorank;

namespace {

Corpus cat_corpus() { return Corpus({{"d1", "cat cat dog"}}, {{"q1", "cat"}}, {}); }

}  // namespace

TEST(Vocabulary, ContainsWordsTemplateAndBinaryTokens) {
  PromptTemplate tmpl;
  const auto v = build_vocab(cat_corpus(), tmpl, 4096);
  for (const char* t : {"cat", "dog", "0", "1", "relevance", ":"}) EXPECT_TRUE(v.contains(t)) << t;
  for (const auto& w : tmpl.words()) EXPECT_TRUE(v.contains(w)) << w;
  EXPECT_EQ(v.token(Vocabulary::kPad), "<pad>");
  EXPECT_EQ(v.id("cat") == v.id("dog"), false);
}

TEST(Vocabulary, BinaryTokensEncodeToOneId) {
  const auto v = build_vocab(cat_corpus(), PromptTemplate(), 4096);
  EXPECT_EQ(encode(v, "0"), TokenIds{v.zero_id()});
  EXPECT_EQ(encode(v, "1"), TokenIds{v.one_id()});
  EXPECT_NE(v.zero_id(), v.one_id());
}

TEST(Vocabulary, DeterministicAndFrequencyRanked) {
  const auto w = fixtures::small_world();
  const auto a = build_vocab(w.corpus, w.tmpl, 4096);
  const auto b = build_vocab(w.corpus, w.tmpl, 4096);
  EXPECT_EQ(a.tokens(), b.tokens());
  // Truncation keeps the required tokens and drops the rarest words.
  const auto small = build_vocab(w.corpus, w.tmpl, 60);
  EXPECT_EQ(small.size(), 60u);
  EXPECT_TRUE(small.contains("0"));
  EXPECT_TRUE(small.contains("1"));
  EXPECT_THROW(build_vocab(w.corpus, w.tmpl, 8), Error);
}

TEST(Vocabulary, TiesBrokenLexicographically) {
  Corpus c({{"d1", "zeta alpha mid"}}, {{"q1", "x"}}, {});
  PromptTemplate tmpl("{query} {document} relevance:");
  const auto v = build_vocab(c, tmpl, 4096);
  EXPECT_LT(v.id("alpha"), v.id("mid"));
  EXPECT_LT(v.id("mid"), v.id("zeta"));
}

TEST(Encode, Examples) {
  const auto v = build_vocab(cat_corpus(), PromptTemplate(), 4096);
  EXPECT_EQ(encode(v, "Cat dog"), (TokenIds{v.id("cat"), v.id("dog")}));
  EXPECT_EQ(encode(v, "zzzz"), TokenIds{Vocabulary::kUnk});
  EXPECT_TRUE(encode(v, "").empty());
  EXPECT_EQ(encode(v, "cat,dog"), encode(v, "cat , dog"));
  EXPECT_EQ(encode(v, "cat,dog").size(), 3u);
}

TEST(Decode, Examples) {
  const auto v = build_vocab(cat_corpus(), PromptTemplate(), 4096);
  EXPECT_EQ(decode(v, {v.one_id()}), "1");
  EXPECT_EQ(decode(v, {v.id("cat"), v.id("dog")}), "cat dog");
  EXPECT_THROW(decode(v, {static_cast<std::int32_t>(v.size())}), Error);
  EXPECT_EQ(decode(v, encode(v, "  CAT   dog ")), "cat dog");
}

TEST(Template, PlaceholdersExactlyOnce) {
  EXPECT_NO_THROW(PromptTemplate("{document} then {query} relevance:"));
  EXPECT_THROW(PromptTemplate("{query} only"), Error);
  EXPECT_THROW(PromptTemplate("{query} {query} {document}"), Error);
}

TEST(RenderPrompt, FullPromptWithinBudget) {
  const auto v = build_vocab(cat_corpus(), PromptTemplate(), 4096);
  PromptTemplate tmpl;
  const Query q{"q1", "cat"};
  const Document d{"d1", "cat cat dog"};
  const auto ids = render_prompt(v, tmpl, q, d, 256);
  EXPECT_EQ(ids.front(), Vocabulary::kBos);
  EXPECT_EQ(ids.size(), skeleton_length(v, tmpl) + 1 + 3);
  EXPECT_EQ(v.token(ids.back()), ":");
  EXPECT_EQ(v.token(ids[ids.size() - 2]), "relevance");
}

TEST(RenderPrompt, LongDocumentTruncatedSuffixKept) {
  std::string long_doc;
  for (int i = 0; i < 10000; ++i) long_doc += i % 2 ? "dog " : "cat ";
  const auto v = build_vocab(cat_corpus(), PromptTemplate(), 4096);
  PromptTemplate tmpl;
  const auto short_ids = render_prompt(v, tmpl, {"q", "cat"}, {"d", "dog"}, 128);
  const auto ids = render_prompt(v, tmpl, {"q", "cat"}, {"d", long_doc}, 128);
  EXPECT_EQ(ids.size(), 128u);
  const auto suffix = encode(v, tmpl.segment(2));
  ASSERT_GE(ids.size(), suffix.size());
  EXPECT_TRUE(std::equal(suffix.rbegin(), suffix.rend(), ids.rbegin()));
  EXPECT_TRUE(std::equal(suffix.rbegin(), suffix.rend(), short_ids.rbegin()));
}

TEST(RenderPrompt, QueryTruncatedAfterDocument) {
  const auto v = build_vocab(cat_corpus(), PromptTemplate(), 4096);
  PromptTemplate tmpl;
  const std::size_t budget = skeleton_length(v, tmpl) + 8;
  std::string long_query;
  for (int i = 0; i < 50; ++i) long_query += "cat ";
  const auto ids = render_prompt(v, tmpl, {"q", long_query}, {"d", "dog dog dog"}, budget);
  EXPECT_EQ(ids.size(), budget);
  EXPECT_EQ(std::count(ids.begin(), ids.end(), v.id("dog")), 0);
  EXPECT_EQ(std::count(ids.begin(), ids.end(), v.id("cat")), 8);
}

TEST(RenderPrompt, BudgetBelowSkeleton) {
  const auto v = build_vocab(cat_corpus(), PromptTemplate(), 4096);
  PromptTemplate tmpl;
  EXPECT_THROW(render_prompt(v, tmpl, {"q", "cat"}, {"d", "dog"}, skeleton_length(v, tmpl) + 7), Error);
}

TEST(Vocabulary, JsonRoundTrip) {
  const auto w = fixtures::small_world();
  const auto dir = fixtures::temp_dir("vocab");
  save_vocab(w.vocab, dir / "vocab.json");
  const auto back = load_vocab(dir / "vocab.json");
  EXPECT_EQ(back.tokens(), w.vocab.tokens());
  EXPECT_NE(fixtures::read_file(dir / "vocab.json").find("vocab-v1"), std::string::npos);
}
