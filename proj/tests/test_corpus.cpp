#include <gtest/gtest.h>

#include <set>

#include "fixtures.hpp"

using namespace prorank;
using fixtures::temp_dir;
using fixtures::write_file;

namespace {

std::filesystem::path write_tiny(const std::string& name, const std::string& qrels) {
  auto dir = temp_dir(name);
  write_file(dir / "docs.jsonl", "{\"_id\": \"d1\", \"text\": \"red apples\"}\n{\"_id\": \"d2\", \"text\": \"blue sky\"}\n");
  write_file(dir / "queries.jsonl", "{\"_id\": \"q1\", \"text\": \"apples\"}\n");
  write_file(dir / "qrels.tsv", qrels);
  return dir;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorKind::usage;
}

}  // namespace

TEST(Corpus, LoadsSingleJudgment) {
  const auto dir = write_tiny("load1", "q1\td1\t1\n");
  const auto c = load_corpus_dir(dir);
  EXPECT_EQ(c.documents().size(), 2u);
  EXPECT_EQ(c.queries().size(), 1u);
  EXPECT_EQ(c.qrels().size(), 1u);
  EXPECT_EQ(c.grade("q1", "d1"), 1);
  EXPECT_EQ(c.grade("q1", "d2"), 0);
}

TEST(Corpus, SkipsQrelHeader) {
  const auto dir = write_tiny("header", "query-id\tcorpus-id\tscore\nq1\td1\t2\n");
  EXPECT_EQ(load_corpus_dir(dir).grade("q1", "d1"), 2);
}

TEST(Corpus, DanglingQrelIsRejected) {
  const auto dir = write_tiny("dangling", "q1\td9\t1\n");
  EXPECT_EQ(kind_of([&] { load_corpus_dir(dir); }), ErrorKind::data);
}

TEST(Corpus, EmptyQrelsMeansAllZero) {
  const auto dir = write_tiny("empty", "");
  const auto c = load_corpus_dir(dir);
  EXPECT_TRUE(c.qrels().empty());
  EXPECT_EQ(c.grade("q1", "d1"), 0);
}

TEST(Corpus, MalformedLineReportsLineNumber) {
  auto dir = write_tiny("malformed", "q1\td1\t1\n");
  write_file(dir / "docs.jsonl", "{\"_id\": \"d1\", \"text\": \"a\"}\n{not json\n");
  try {
    load_corpus_dir(dir);
    FAIL() << "expected a data error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::data);
    EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos) << e.what();
  }
}

TEST(Corpus, MissingFileAndDuplicateIds) {
  EXPECT_EQ(kind_of([] { load_corpus_dir("/nonexistent/prorank"); }), ErrorKind::data);
  auto dir = write_tiny("dup", "");
  write_file(dir / "docs.jsonl", "{\"_id\": \"d1\", \"text\": \"a\"}\n{\"_id\": \"d1\", \"text\": \"b\"}\n");
  EXPECT_EQ(kind_of([&] { load_corpus_dir(dir); }), ErrorKind::data);
}

TEST(Corpus, Binarize) {
  EXPECT_EQ(binarize(0, 1), 0);
  EXPECT_EQ(binarize(1, 1), 1);
  EXPECT_EQ(binarize(2, 1), 1);
}

TEST(Synthetic, CountsForTwoTopics) {
  SyntheticConfig sc;
  sc.num_topics = 2;
  sc.docs_per_topic = 3;
  sc.queries_per_topic = 1;
  sc.seed = 7;
  const auto c = generate_synthetic(sc);
  EXPECT_EQ(c.documents().size(), 6u);
  ASSERT_EQ(c.queries().size(), 2u);
  for (const auto& q : c.queries()) {
    int relevant = 0;
    for (const auto& [doc, grade] : c.qrels().for_query(q.query_id)) relevant += grade;
    EXPECT_EQ(relevant, 3);
  }
}

TEST(Synthetic, Deterministic) {
  SyntheticConfig sc;
  sc.seed = 99;
  EXPECT_TRUE(generate_synthetic(sc) == generate_synthetic(sc));
  auto other = sc;
  other.seed = 100;
  EXPECT_FALSE(generate_synthetic(sc) == generate_synthetic(other));
}

// With no noise and no leakage, documents of different topics share no word.
TEST(Synthetic, NoNoiseKeepsTopicsDisjoint) {
  SyntheticConfig sc;
  sc.num_topics = 3;
  sc.docs_per_topic = 10;
  sc.queries_per_topic = 2;
  sc.noise_rate = 0.0;
  sc.leak_rate = 0.0;
  const auto c = generate_synthetic(sc);
  const auto& q0 = c.queries().front();
  std::set<std::string> relevant_words, other_words;
  for (const auto& d : c.documents()) {
    auto& bucket = c.grade(q0.query_id, d.doc_id) ? relevant_words : other_words;
    for (const auto& w : oracle::split_ws(d.text)) bucket.insert(w);
  }
  for (const auto& w : relevant_words) EXPECT_EQ(other_words.count(w), 0u) << w;
}

TEST(Synthetic, EveryQueryHasBothClasses) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SyntheticConfig sc;
    sc.seed = seed;
    sc.num_topics = 2 + static_cast<int>(seed % 3);
    const auto c = generate_synthetic(sc);
    for (const auto& q : c.queries()) {
      int pos = 0, neg = 0;
      for (const auto& d : c.documents()) (c.grade(q.query_id, d.doc_id) ? pos : neg)++;
      EXPECT_GT(pos, 0);
      EXPECT_GT(neg, 0);
    }
  }
}

TEST(Synthetic, VocabularyTooSmallIsRejected) {
  SyntheticConfig sc;
  sc.num_topics = 10;
  sc.vocab_words = 40;
  EXPECT_EQ(kind_of([&] { generate_synthetic(sc); }), ErrorKind::usage);
  SyntheticConfig bad;
  bad.noise_rate = 1.5;
  EXPECT_EQ(kind_of([&] { generate_synthetic(bad); }), ErrorKind::usage);
}

TEST(Split, Arithmetic) {
  SyntheticConfig sc;
  sc.num_topics = 2;
  sc.queries_per_topic = 5;
  const auto c = generate_synthetic(sc);
  const auto s = split(c, 0.6, 0.2, 13);
  EXPECT_EQ(s.train.queries().size(), 6u);
  EXPECT_EQ(s.dev.queries().size(), 2u);
  EXPECT_EQ(s.test.queries().size(), 2u);
  EXPECT_EQ(s.train.documents().size(), c.documents().size());
  std::set<std::string> seen;
  for (const auto* part : {&s.train, &s.dev, &s.test}) {
    for (const auto& q : part->queries()) EXPECT_TRUE(seen.insert(q.query_id).second);
    for (const auto& [key, grade] : part->qrels().judgments()) {
      EXPECT_NO_THROW(part->query(key.first));
    }
  }
  EXPECT_EQ(seen.size(), 10u);
  const auto again = split(c, 0.6, 0.2, 13);
  EXPECT_TRUE(again.test == s.test);
}

TEST(Split, TooFewQueries) {
  SyntheticConfig sc;
  sc.num_topics = 2;
  sc.queries_per_topic = 1;
  const auto c = generate_synthetic(sc);
  EXPECT_EQ(kind_of([&] { split(c, 0.6, 0.2, 1); }), ErrorKind::data);
  EXPECT_EQ(kind_of([&] { split(c, 0.8, 0.3, 1); }), ErrorKind::usage);
}

TEST(Corpus, SaveLoadRoundTrip) {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    SyntheticConfig sc;
    sc.seed = seed;
    sc.docs_per_topic = 5 + static_cast<int>(seed);
    const auto c = generate_synthetic(sc);
    const auto dir = temp_dir("roundtrip" + std::to_string(seed));
    save_corpus(c, dir);
    const auto back = load_corpus_dir(dir);
    EXPECT_TRUE(back == c);
    save_corpus(back, dir / "again");
    EXPECT_EQ(fixtures::read_file(dir / "docs.jsonl"), fixtures::read_file(dir / "again" / "docs.jsonl"));
    EXPECT_EQ(fixtures::read_file(dir / "qrels.tsv"), fixtures::read_file(dir / "again" / "qrels.tsv"));
  }
}

TEST(Corpus, RoundTripPreservesAwkwardText) {
  Corpus c({{"d\"1", "tab\there, quote \" and unicode \xc3\xa9"}}, {{"q1", "back\\slash"}}, {});
  const auto dir = temp_dir("awkward");
  save_corpus(c, dir);
  EXPECT_TRUE(load_corpus_dir(dir) == c);
}

TEST(PairSampler, BalancedBatches) {
  const auto w = fixtures::small_world();
  PairSampler sampler(w.corpus);
  Rng rng(3);
  const auto batch = sampler.batch(rng, 10);
  int pos = 0;
  for (const auto& p : batch) {
    pos += p.label;
    EXPECT_EQ(p.label, binarize(w.corpus.grade(w.corpus.queries()[p.query].query_id, w.corpus.documents()[p.doc].doc_id)));
  }
  EXPECT_EQ(pos, 5);
}
