#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "contrax/corpus.hpp"
#include "test_util.hpp"

namespace contrax {
namespace {

using testing::TempDir;

Corpus read_jsonl_string(const std::string& s) {
  std::istringstream in(s);
  return detail::read_jsonl(in);
}

Corpus read_csv_string(const std::string& s) {
  std::istringstream in(s);
  return detail::read_csv(in);
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

TEST(LoadCorpus, FirstAppearanceAuthorIndex) {
  const auto c = read_jsonl_string(
      R"({"id":"x","text":"one","author":"A"})"
      "\n"
      R"({"id":"y","text":"two","author":"B"})"
      "\n"
      R"({"id":"z","text":"three","author":"A"})"
      "\n");
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c.num_authors(), 2u);
  EXPECT_EQ(c.author_id("A"), 0);
  EXPECT_EQ(c.author_id("B"), 1);
  EXPECT_EQ(c.labels(), (std::vector<int>{0, 1, 0}));
  EXPECT_EQ(c[1].id, "y");
}

TEST(LoadCorpus, MissingAuthorNamesLine) {
  const auto msg = error_of([] {
    read_jsonl_string(R"({"text":"fine","author":"A"})"
                      "\n"
                      R"({"text":"no author here"})"
                      "\n");
  });
  EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
  EXPECT_NE(msg.find("author"), std::string::npos) << msg;
}

TEST(LoadCorpus, MalformedAndEmptyInputs) {
  EXPECT_NE(error_of([] { read_jsonl_string("{\"text\": \"a\", \"author\":\n"); }).find("line 1"),
            std::string::npos);
  EXPECT_NE(error_of([] { read_jsonl_string(""); }).find("no records"), std::string::npos);
  EXPECT_NE(error_of([] { read_jsonl_string("\n  \n"); }).find("no records"), std::string::npos);
  EXPECT_NE(error_of([] {
              read_jsonl_string(R"({"id":"a","text":"x","author":"A"})"
                                "\n"
                                R"({"id":"a","text":"y","author":"B"})");
            }).find("duplicate"),
            std::string::npos);
  EXPECT_NE(error_of([] { read_jsonl_string(R"({"text":"   ","author":"A"})"); }).find("empty text"),
            std::string::npos);
}

TEST(LoadCorpus, AutogeneratedIdsUseLineNumber) {
  const auto c = read_jsonl_string(
      R"({"text":"a","author":"A"})"
      "\n\n"
      R"({"text":"b","author":"A"})");
  EXPECT_EQ(c[0].id, "doc-1");
  EXPECT_EQ(c[1].id, "doc-3");
}

TEST(LoadCorpus, CsvQuotingFollowsRfc4180) {
  const auto c = read_csv_string(
      "id,text,author\r\n"
      "a,\"hello, world\",X\r\n"
      "b,\"she said \"\"hi\"\"\nthen left\",Y\r\n"
      ",plain,X\r\n");
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c[0].text, "hello, world");
  EXPECT_EQ(c[1].text, "she said \"hi\"\nthen left");
  EXPECT_EQ(c[2].id, "doc-5");
  EXPECT_EQ(c.num_authors(), 2u);
}

TEST(LoadCorpus, CsvErrors) {
  EXPECT_NE(error_of([] { read_csv_string("text,author\nx,A\n"); }).find("header"), std::string::npos);
  EXPECT_NE(error_of([] { read_csv_string("id,text,author\na,x\n"); }).find("line 2"), std::string::npos);
  EXPECT_NE(error_of([] { read_csv_string("id,text,author\na,\"open\n"); }).find("unterminated"),
            std::string::npos);
}

TEST(LoadCorpus, SaveThenLoadRoundTrips) {
  TempDir dir("corpus");
  auto original = generate_synthetic_corpus({3, 4, 10, 30, 0.5, 1});
  original.add({"tricky", "comma, \"quotes\"\nnewline \xC3\xA9t\xC3\xA9", "author-1"});
  for (auto fmt : {CorpusFormat::jsonl, CorpusFormat::csv}) {
    const auto path = dir.file(fmt == CorpusFormat::jsonl ? "c.jsonl" : "c.csv");
    save_corpus(path, original, fmt);
    const auto loaded = load_corpus(path, fmt);
    EXPECT_EQ(loaded, original);
    EXPECT_EQ(loaded.author_index(), original.author_index());
    EXPECT_EQ(loaded.checksum(), original.checksum());
  }
  EXPECT_NE(error_of([&] { load_corpus(dir.file("missing.jsonl"), CorpusFormat::jsonl); }).find("cannot open"),
            std::string::npos);
}

// ---------------------------------------------------------------------------

Corpus uniform_corpus(std::size_t authors, std::size_t docs) {
  Corpus c;
  for (std::size_t a = 0; a < authors; ++a) {
    for (std::size_t d = 0; d < docs; ++d) {
      c.add({"a" + std::to_string(a) + "d" + std::to_string(d), "text", "author" + std::to_string(a)});
    }
  }
  return c;
}

std::map<int, std::array<std::size_t, 3>> per_author_counts(const Corpus& c, const SplitManifest& m) {
  std::map<int, std::array<std::size_t, 3>> out;
  const std::array<const std::vector<std::string>*, 3> parts{&m.train, &m.val, &m.test};
  for (int s = 0; s < 3; ++s) {
    for (const auto& id : *parts[s]) ++out[c.label(*c.find_document(id))][s];
  }
  return out;
}

TEST(StratifiedSplit, ExactEightOneOne) {
  const auto c = uniform_corpus(3, 10);
  const auto m = stratified_split(c, {0.8, 0.1, 0.1}, 5);
  for (const auto& [a, counts] : per_author_counts(c, m)) {
    EXPECT_EQ(counts, (std::array<std::size_t, 3>{8, 1, 1})) << "author " << a;
  }
}

TEST(StratifiedSplit, EightTwoLeavesTestEmpty) {
  const auto c = uniform_corpus(4, 10);
  const auto m = stratified_split(c, {0.8, 0.2, 0.0}, 1);
  EXPECT_TRUE(m.test.empty());
  EXPECT_EQ(m.train.size(), 32u);
  EXPECT_EQ(m.val.size(), 8u);
}

TEST(StratifiedSplit, DeterministicAndSeedSensitive) {
  const auto c = generate_synthetic_corpus({4, 25, 5, 40, 0.5, 3});
  const auto a = stratified_split(c, {0.8, 0.1, 0.1}, 11);
  const auto b = stratified_split(c, {0.8, 0.1, 0.1}, 11);
  EXPECT_EQ(a.to_json().dump(2), b.to_json().dump(2));
  const auto other = stratified_split(c, {0.8, 0.1, 0.1}, 12);
  EXPECT_NE(a.train, other.train);
}

TEST(StratifiedSplit, RemainderGoesToLargestRatio) {
  // 7 docs at 0.5/0.3/0.2: floors 3/2/1, leftover to train.
  EXPECT_EQ(split_counts(7, {0.5, 0.3, 0.2}), (std::array<std::size_t, 3>{4, 2, 1}));
  // 3 docs at 0.8/0.1/0.1: floors 2/0/0, leftover to train, then val and test borrow.
  EXPECT_EQ(split_counts(3, {0.8, 0.1, 0.1}), (std::array<std::size_t, 3>{1, 1, 1}));
  EXPECT_EQ(split_counts(5, {0.2, 0.4, 0.4}), (std::array<std::size_t, 3>{1, 2, 2}));
}

TEST(StratifiedSplit, TooFewDocumentsIsAnError) {
  Corpus c;
  c.add({"a", "x", "A"});
  c.add({"b", "y", "A"});
  const auto msg = error_of([&] { stratified_split(c, {0.8, 0.1, 0.1}, 0); });
  EXPECT_NE(msg.find("author 'A'"), std::string::npos) << msg;
  EXPECT_NO_THROW(stratified_split(c, {0.5, 0.5, 0.0}, 0));
  EXPECT_THROW(stratified_split(c, {0.5, 0.6, 0.0}, 0), Error);
  EXPECT_THROW(stratified_split(c, {1.2, -0.2, 0.0}, 0), Error);
}

TEST(StratifiedSplit, PartitionAndBoundProperty) {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    Corpus c;
    const auto authors = 1 + uniform_index(rng, 5);
    for (std::size_t a = 0; a < authors; ++a) {
      const auto n = 3 + uniform_index(rng, 40);
      for (std::size_t d = 0; d < n; ++d) {
        c.add({std::to_string(a) + "-" + std::to_string(d), "t", "A" + std::to_string(a)});
      }
    }
    double r1 = uniform01(rng);
    double r2 = uniform01(rng) * (1.0 - r1);
    SplitRatios ratios{r1, r2, 1.0 - r1 - r2};
    const auto m = stratified_split(c, ratios, rng());
    std::multiset<std::string> all(m.train.begin(), m.train.end());
    all.insert(m.val.begin(), m.val.end());
    all.insert(m.test.begin(), m.test.end());
    ASSERT_EQ(all.size(), c.size());
    ASSERT_EQ(std::set<std::string>(all.begin(), all.end()).size(), c.size());
    const auto groups = c.documents_by_author();
    for (const auto& [a, counts] : per_author_counts(c, m)) {
      const auto n = static_cast<double>(groups[static_cast<std::size_t>(a)].size());
      const auto r = ratios.as_array();
      for (int s = 0; s < 3; ++s) {
        ASSERT_LT(std::abs(static_cast<double>(counts[s]) - r[s] * n), 1.0 + 3.0);
      }
    }
  }
}

TEST(StratifiedSplit, ManifestJsonRoundTrip) {
  const auto c = uniform_corpus(2, 10);
  const auto m = stratified_split(c, {0.8, 0.1, 0.1}, 9);
  EXPECT_EQ(SplitManifest::from_json(nlohmann::json::parse(m.to_json().dump())), m);
  const auto j = m.to_json();
  EXPECT_EQ(j.begin().key(), "ratios");
  EXPECT_EQ(j["seed"], 9);
}

// ---------------------------------------------------------------------------

TEST(StratifiedSubsample, FullFractionIsIdentity) {
  const auto c = generate_synthetic_corpus({3, 7, 5, 30, 0.5, 2});
  EXPECT_EQ(stratified_subsample(c, 1.0, 99), c);
}

TEST(StratifiedSubsample, QuarterOfHundred) {
  const auto c = uniform_corpus(2, 100);
  const auto s = stratified_subsample(c, 0.25, 4);
  EXPECT_EQ(s.size(), 50u);
  for (const auto& g : s.documents_by_author()) EXPECT_EQ(g.size(), 25u);
}

TEST(StratifiedSubsample, CountsDependOnlyOnCountAndFraction) {
  const auto c = generate_synthetic_corpus({5, 37, 5, 30, 0.5, 2});
  const auto a = stratified_subsample(c, 0.5, 1);
  const auto b = stratified_subsample(c, 0.5, 2);
  std::vector<std::size_t> ca, cb;
  for (const auto& g : a.documents_by_author()) ca.push_back(g.size());
  for (const auto& g : b.documents_by_author()) cb.push_back(g.size());
  EXPECT_EQ(ca, cb);
  EXPECT_EQ(ca.front(), 19u);  // 18.5 rounds half up
  std::vector<std::string> ids_a, ids_b;
  for (const auto& d : a.documents()) ids_a.push_back(d.id);
  for (const auto& d : b.documents()) ids_b.push_back(d.id);
  EXPECT_NE(ids_a, ids_b);
  EXPECT_EQ(stratified_subsample(c, 0.5, 1), a);
}

TEST(StratifiedSubsample, NeverDropsAnAuthor) {
  Corpus c;
  c.add({"a", "x", "A"});
  c.add({"b", "y", "B"});
  c.add({"c", "z", "B"});
  const auto s = stratified_subsample(c, 0.01, 0);
  EXPECT_EQ(s.num_authors(), 2u);
  EXPECT_EQ(s.size(), 2u);
  EXPECT_EQ(s.authors(), c.authors());
}

TEST(StratifiedSubsample, RejectsBadFractions) {
  const auto c = uniform_corpus(1, 4);
  EXPECT_THROW(stratified_subsample(c, 0.0, 0), Error);
  EXPECT_THROW(stratified_subsample(c, -0.5, 0), Error);
  EXPECT_THROW(stratified_subsample(c, 1.01, 0), Error);
}

// ---------------------------------------------------------------------------

TEST(SyntheticCorpus, FullSkewGivesDisjointVocabularies) {
  const auto c = generate_synthetic_corpus({2, 30, 40, 100, 1.0, 8});
  std::array<std::set<std::string>, 2> seen;
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (const auto& t : word_tokens(c[i].text)) seen[static_cast<std::size_t>(c.label(i))].insert(t);
  }
  for (const auto& t : seen[0]) EXPECT_FALSE(seen[1].contains(t)) << t;
}

// Upper quantile of chi-squared via the Wilson-Hilferty approximation.
double chi2_critical(double df, double z) {
  const double a = 2.0 / (9.0 * df);
  return df * std::pow(1.0 - a + z * std::sqrt(a), 3.0);
}

TEST(SyntheticCorpus, ZeroSkewAuthorsShareOneDistribution) {
  const auto c = generate_synthetic_corpus({2, 500, 20, 50, 0.0, 13});
  std::map<std::string, std::array<double, 2>> counts;
  std::array<double, 2> totals{};
  for (std::size_t i = 0; i < c.size(); ++i) {
    const auto a = static_cast<std::size_t>(c.label(i));
    for (const auto& t : word_tokens(c[i].text)) {
      counts[t][a] += 1.0;
      totals[a] += 1.0;
    }
  }
  const double grand = totals[0] + totals[1];
  double chi2 = 0.0;
  for (const auto& [w, o] : counts) {
    const double row = o[0] + o[1];
    for (int a = 0; a < 2; ++a) {
      const double e = row * totals[a] / grand;
      chi2 += (o[a] - e) * (o[a] - e) / e;
    }
  }
  const double df = static_cast<double>(counts.size() - 1);
  EXPECT_LT(chi2, chi2_critical(df, 1.6449)) << "chi2=" << chi2 << " df=" << df;
}

TEST(SyntheticCorpus, GoldenCorpusChecksum) {
  const auto& c = testing::golden_corpus();
  EXPECT_EQ(c.size(), 2000u);
  EXPECT_EQ(c.num_authors(), 10u);
  EXPECT_EQ(hex64(c.checksum()), "4d8e609663c405da");
  EXPECT_EQ(generate_synthetic_corpus({10, 200, 120, 2000, 0.6, 7}).checksum(), c.checksum());
}

TEST(SyntheticCorpus, Validation) {
  EXPECT_THROW(generate_synthetic_corpus({5, 10, 10, 4, 0.5, 0}), Error);
  EXPECT_THROW(generate_synthetic_corpus({0, 10, 10, 40, 0.5, 0}), Error);
  EXPECT_THROW(generate_synthetic_corpus({2, 10, 10, 40, 1.5, 0}), Error);
  const auto c = generate_synthetic_corpus({2, 3, 7, 40, 0.5, 0});
  for (const auto& d : c.documents()) EXPECT_EQ(word_tokens(d.text).size(), 7u);
}

}  // namespace
}  // namespace contrax
