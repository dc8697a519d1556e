#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "contrax/common.hpp"
#include "contrax/corpus.hpp"
#include "contrax/function_words.hpp"
#include "contrax/text.hpp"

namespace contrax {

enum class FeatureType { content, style, hybrid, topic };

inline constexpr std::array<FeatureType, 4> kAllFeatureTypes = {
    FeatureType::content, FeatureType::style, FeatureType::hybrid, FeatureType::topic};

inline std::string_view to_string(FeatureType t) {
  switch (t) {
    case FeatureType::content: return "content";
    case FeatureType::style: return "style";
    case FeatureType::hybrid: return "hybrid";
    case FeatureType::topic: return "topic";
  }
  return "?";
}

inline FeatureType parse_feature_type(std::string_view s) {
  for (auto t : kAllFeatureTypes) {
    if (to_string(t) == s) return t;
  }
  throw Error("unknown feature type '" + std::string(s) + "'");
}

struct FeatureVector {
  FeatureType type = FeatureType::content;
  std::vector<double> values;

  std::size_t dimension() const { return values.size(); }
  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

// ---------------------------------------------------------------------------
// n-gram vocabularies

enum class NgramUnit { word, character };

inline std::string_view to_string(NgramUnit u) { return u == NgramUnit::word ? "word" : "char"; }

namespace detail {

// Splits a UTF-8 string into code points.
inline std::vector<std::string_view> code_points(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    std::size_t j = i + 1;
    while (j < s.size() && (static_cast<unsigned char>(s[j]) & 0xC0) == 0x80) ++j;
    out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

// Units of a document for n-gram extraction: word tokens, or code points of the
// lowercased raw text (spaces included).
struct NgramUnits {
  std::string lowered;
  std::vector<std::string> words;
  std::vector<std::string_view> chars;

  NgramUnits(std::string_view text, NgramUnit unit) {
    if (unit == NgramUnit::word) {
      words = word_tokens(text);
    } else {
      lowered = to_lower(text);
      chars = code_points(lowered);
    }
  }

  std::size_t size() const { return words.empty() ? chars.size() : words.size(); }

  std::size_t count(int order) const {
    const auto n = static_cast<std::size_t>(order);
    return size() >= n ? size() - n + 1 : 0;
  }

  std::string gram(std::size_t start, int order) const {
    std::string g;
    for (int k = 0; k < order; ++k) {
      if (!words.empty()) {
        if (k) g.push_back(' ');
        g += words[start + static_cast<std::size_t>(k)];
      } else {
        g += chars[start + static_cast<std::size_t>(k)];
      }
    }
    return g;
  }
};

}  // namespace detail

struct NgramEntry {
  std::string gram;
  int order = 1;
  friend bool operator==(const NgramEntry&, const NgramEntry&) = default;
};

// Entries are grouped by ascending order, then descending corpus frequency,
// then lexicographically.
struct NgramVocabulary {
  NgramUnit unit = NgramUnit::word;
  std::vector<int> orders;
  std::size_t k_per_order = 1000;
  std::vector<NgramEntry> entries;
  std::unordered_map<std::string, std::size_t> index;

  std::size_t size() const { return entries.size(); }

  std::uint64_t checksum() const {
    Fnv1a h;
    for (const auto& e : entries) {
      h.update_u64(static_cast<std::uint64_t>(e.order));
      h.update_u64(e.gram.size());
      h.update(e.gram);
    }
    return h.digest();
  }
};

inline NgramVocabulary build_ngram_vocab(const Corpus& corpus, NgramUnit unit,
                                         std::vector<int> orders, std::size_t k_per_order = 1000) {
  if (corpus.empty()) throw Error("build_ngram_vocab: empty corpus");
  if (orders.empty()) throw Error("build_ngram_vocab: no n-gram orders given");
  if (k_per_order == 0) throw Error("build_ngram_vocab: k_per_order must be positive");
  std::sort(orders.begin(), orders.end());
  orders.erase(std::unique(orders.begin(), orders.end()), orders.end());
  if (orders.front() < 1) throw Error("build_ngram_vocab: n-gram orders must be >= 1");

  std::vector<std::unordered_map<std::string, std::size_t>> counts(orders.size());
  for (const auto& doc : corpus.documents()) {
    detail::NgramUnits units(doc.text, unit);
    for (std::size_t o = 0; o < orders.size(); ++o) {
      const std::size_t n = units.count(orders[o]);
      for (std::size_t i = 0; i < n; ++i) ++counts[o][units.gram(i, orders[o])];
    }
  }

  NgramVocabulary vocab;
  vocab.unit = unit;
  vocab.orders = orders;
  vocab.k_per_order = k_per_order;
  for (std::size_t o = 0; o < orders.size(); ++o) {
    std::vector<std::pair<std::string, std::size_t>> ranked(counts[o].begin(), counts[o].end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    if (ranked.size() > k_per_order) ranked.resize(k_per_order);
    for (auto& [gram, count] : ranked) {
      vocab.index.emplace(gram, vocab.entries.size());
      vocab.entries.push_back({std::move(gram), orders[o]});
    }
  }
  return vocab;
}

// Relative frequency of each vocabulary n-gram within the document, normalized
// by the document's total n-gram count of the same order.
inline std::vector<double> ngram_frequencies(std::string_view text, const NgramVocabulary& vocab) {
  std::vector<double> values(vocab.size(), 0.0);
  detail::NgramUnits units(text, vocab.unit);
  for (int order : vocab.orders) {
    const std::size_t n = units.count(order);
    if (n == 0) continue;
    for (std::size_t i = 0; i < n; ++i) {
      auto it = vocab.index.find(units.gram(i, order));
      if (it != vocab.index.end()) values[it->second] += 1.0;
    }
    for (std::size_t e = 0; e < vocab.size(); ++e) {
      if (vocab.entries[e].order == order) values[e] /= static_cast<double>(n);
    }
  }
  return values;
}

inline FeatureVector content_features(const Document& doc, const NgramVocabulary& vocab) {
  if (vocab.unit != NgramUnit::word) throw Error("content_features: vocabulary must be word n-grams");
  return {FeatureType::content, ngram_frequencies(doc.text, vocab)};
}

inline FeatureVector hybrid_features(const Document& doc, const NgramVocabulary& vocab) {
  if (vocab.unit != NgramUnit::character) {
    throw Error("hybrid_features: vocabulary must be character n-grams");
  }
  return {FeatureType::hybrid, ngram_frequencies(doc.text, vocab)};
}

// ---------------------------------------------------------------------------
// Style

inline constexpr std::string_view kPunctuation = ".,;:!?'\"()-";
inline constexpr std::size_t kShortWordMaxLength = 3;

// Layout offsets of the style vector.
struct StyleLayout {
  static constexpr std::size_t avg_word_length = 0;
  static constexpr std::size_t short_words = 1;
  static constexpr std::size_t digit_fraction = 2;
  static constexpr std::size_t upper_fraction = 3;
  static constexpr std::size_t letters = 4;
  static constexpr std::size_t digits = letters + 26;
  static constexpr std::size_t richness = digits + 10;
  static constexpr std::size_t function_words = richness + 1;
  static constexpr std::size_t punctuation = function_words + kFunctionWords.size();
  static constexpr std::size_t dimension = punctuation + kPunctuation.size();
};
static_assert(StyleLayout::dimension == 202);

inline FeatureVector style_features(const Document& doc) {
  std::vector<double> v(StyleLayout::dimension, 0.0);
  const std::string_view text = doc.text;

  const auto words = word_tokens(text);
  if (!words.empty()) {
    const auto total = static_cast<double>(words.size());
    std::size_t letters_in_words = 0;
    std::size_t short_words = 0;
    std::unordered_set<std::string_view> distinct;
    for (const auto& w : words) {
      const std::size_t len = utf8_length(w);
      letters_in_words += len;
      if (len <= kShortWordMaxLength) ++short_words;
      distinct.insert(w);
    }
    v[StyleLayout::avg_word_length] = static_cast<double>(letters_in_words) / total;
    v[StyleLayout::short_words] = static_cast<double>(short_words) / total;
    v[StyleLayout::richness] = static_cast<double>(distinct.size()) / total;

    static const auto function_index = [] {
      std::unordered_map<std::string_view, std::size_t> m;
      for (std::size_t i = 0; i < kFunctionWords.size(); ++i) m.emplace(kFunctionWords[i], i);
      return m;
    }();
    for (const auto& w : words) {
      auto it = function_index.find(w);
      if (it != function_index.end()) v[StyleLayout::function_words + it->second] += 1.0;
    }
    for (std::size_t i = 0; i < kFunctionWords.size(); ++i) {
      v[StyleLayout::function_words + i] /= total;
    }
  }

  const std::size_t chars = utf8_length(text);
  std::size_t letters = 0;
  std::size_t upper = 0;
  std::size_t digits = 0;
  std::array<std::size_t, 26> letter_counts{};
  std::array<std::size_t, 10> digit_counts{};
  std::array<std::size_t, kPunctuation.size()> punct_counts{};
  for (char ch : text) {
    if (ch >= 'a' && ch <= 'z') {
      ++letters;
      ++letter_counts[static_cast<std::size_t>(ch - 'a')];
    } else if (ch >= 'A' && ch <= 'Z') {
      ++letters;
      ++upper;
      ++letter_counts[static_cast<std::size_t>(ch - 'A')];
    } else if (ch >= '0' && ch <= '9') {
      ++digits;
      ++digit_counts[static_cast<std::size_t>(ch - '0')];
    } else if (auto p = kPunctuation.find(ch); p != std::string_view::npos) {
      ++punct_counts[p];
    }
  }
  if (chars > 0) {
    const auto n = static_cast<double>(chars);
    v[StyleLayout::digit_fraction] = static_cast<double>(digits) / n;
    for (std::size_t i = 0; i < punct_counts.size(); ++i) {
      v[StyleLayout::punctuation + i] = static_cast<double>(punct_counts[i]) / n;
    }
  }
  if (letters > 0) {
    const auto n = static_cast<double>(letters);
    v[StyleLayout::upper_fraction] = static_cast<double>(upper) / n;
    for (std::size_t i = 0; i < 26; ++i) {
      v[StyleLayout::letters + i] = static_cast<double>(letter_counts[i]) / n;
    }
  }
  if (digits > 0) {
    const auto n = static_cast<double>(digits);
    for (std::size_t i = 0; i < 10; ++i) {
      v[StyleLayout::digits + i] = static_cast<double>(digit_counts[i]) / n;
    }
  }
  return {FeatureType::style, std::move(v)};
}

// ---------------------------------------------------------------------------
// Author representations

struct FeatureExtractor {
  FeatureType type;
  std::function<FeatureVector(const Document&)> extract;

  FeatureVector operator()(const Document& d) const { return extract(d); }
};

struct AuthorFeature {
  std::string author;
  FeatureType type = FeatureType::content;
  FeatureVector vector;
};

inline std::vector<double> mean_of(const std::vector<const std::vector<double>*>& rows) {
  std::vector<double> mean(rows.front()->size(), 0.0);
  for (const auto* r : rows) {
    if (r->size() != mean.size()) throw Error("feature vectors of differing dimension");
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += (*r)[i];
  }
  for (double& x : mean) x /= static_cast<double>(rows.size());
  return mean;
}

// Mean of the author's per-document feature vectors.
inline AuthorFeature author_representation(const Corpus& corpus, std::string_view author,
                                           const FeatureExtractor& extractor) {
  const int id = corpus.author_id(author);
  std::vector<std::vector<double>> vectors;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus.label(i) == id) vectors.push_back(extractor(corpus[i]).values);
  }
  if (vectors.empty()) throw Error("author '" + std::string(author) + "' has no documents");
  std::vector<const std::vector<double>*> rows;
  for (const auto& v : vectors) rows.push_back(&v);
  return {std::string(author), extractor.type, {extractor.type, mean_of(rows)}};
}

// Per-document feature matrix, one row per document in corpus order.
inline Matrix extract_feature_matrix(const Corpus& corpus, const FeatureExtractor& extractor) {
  Matrix m;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    auto v = extractor(corpus[i]).values;
    if (i == 0) m = Matrix(corpus.size(), v.size());
    if (v.size() != m.cols()) throw Error("feature extractor returned inconsistent dimensions");
    std::copy(v.begin(), v.end(), m.row(i).begin());
  }
  return m;
}

// All author representations, indexed by author id. Authors without documents
// in this corpus are rejected.
inline std::vector<FeatureVector> author_representations(const Corpus& corpus,
                                                         const FeatureExtractor& extractor) {
  const Matrix docs = extract_feature_matrix(corpus, extractor);
  const auto groups = corpus.documents_by_author();
  std::vector<FeatureVector> out;
  for (std::size_t a = 0; a < groups.size(); ++a) {
    if (groups[a].empty()) throw Error("author '" + corpus.authors()[a] + "' has no documents");
    std::vector<double> mean(docs.cols(), 0.0);
    for (std::size_t i : groups[a]) {
      for (std::size_t c = 0; c < docs.cols(); ++c) mean[c] += docs(i, c);
    }
    for (double& x : mean) x /= static_cast<double>(groups[a].size());
    out.push_back({extractor.type, std::move(mean)});
  }
  return out;
}

// csv: id, author, f0..f{d-1}
inline void write_feature_csv(std::ostream& out, const Corpus& corpus, const Matrix& features) {
  out << "id,author";
  for (std::size_t c = 0; c < features.cols(); ++c) out << ",f" << c;
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    out << detail::csv_escape(corpus[i].id) << ',' << detail::csv_escape(corpus[i].author);
    for (std::size_t c = 0; c < features.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", features(i, c));
      out << ',' << buf;
    }
    out << '\n';
  }
}

}  // namespace contrax
