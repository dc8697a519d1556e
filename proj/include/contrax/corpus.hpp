#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "contrax/common.hpp"
#include "contrax/text.hpp"

namespace contrax {

struct Document {
  std::string id;
  std::string text;
  std::string author;

  friend bool operator==(const Document&, const Document&) = default;
};

enum class CorpusFormat { jsonl, csv };

inline CorpusFormat parse_corpus_format(std::string_view s) {
  if (s == "jsonl") return CorpusFormat::jsonl;
  if (s == "csv") return CorpusFormat::csv;
  throw Error("unknown corpus format '" + std::string(s) + "' (expected jsonl or csv)");
}

inline CorpusFormat format_from_path(std::string_view path) {
  return path.ends_with(".csv") ? CorpusFormat::csv : CorpusFormat::jsonl;
}

// A labeled document collection. Author ids are contiguous in [0, K) and
// assigned in first-appearance order unless an explicit author list is given.
// Subsets keep the parent's author list so labels stay comparable across splits.
class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::vector<std::string> authors) {
    for (auto& a : authors) register_author(a);
  }

  void add(Document doc) {
    if (is_blank(doc.text)) throw Error("document '" + doc.id + "' has empty text");
    if (doc.author.empty()) throw Error("document '" + doc.id + "' has empty author");
    if (doc.id.empty()) throw Error("document with empty id");
    if (!ids_.insert(doc.id).second) throw Error("duplicate document id '" + doc.id + "'");
    labels_.push_back(register_author(doc.author));
    documents_.push_back(std::move(doc));
  }

  const std::vector<Document>& documents() const { return documents_; }
  const Document& operator[](std::size_t i) const { return documents_[i]; }
  std::size_t size() const { return documents_.size(); }
  bool empty() const { return documents_.empty(); }

  const std::vector<std::string>& authors() const { return authors_; }
  std::size_t num_authors() const { return authors_.size(); }
  const std::unordered_map<std::string, int>& author_index() const { return author_index_; }

  std::optional<int> find_author(std::string_view author) const {
    auto it = author_index_.find(std::string(author));
    if (it == author_index_.end()) return std::nullopt;
    return it->second;
  }
  int author_id(std::string_view author) const {
    auto id = find_author(author);
    if (!id) throw Error("unknown author '" + std::string(author) + "'");
    return *id;
  }

  int label(std::size_t doc) const { return labels_[doc]; }
  const std::vector<int>& labels() const { return labels_; }

  std::optional<std::size_t> find_document(std::string_view id) const {
    for (std::size_t i = 0; i < documents_.size(); ++i) {
      if (documents_[i].id == id) return i;
    }
    return std::nullopt;
  }

  // Document indices grouped by author id, each group in corpus order.
  std::vector<std::vector<std::size_t>> documents_by_author() const {
    std::vector<std::vector<std::size_t>> groups(authors_.size());
    for (std::size_t i = 0; i < documents_.size(); ++i) {
      groups[static_cast<std::size_t>(labels_[i])].push_back(i);
    }
    return groups;
  }

  // Documents with the given ids, in corpus order; author list preserved.
  Corpus subset(const std::vector<std::string>& ids) const {
    std::unordered_set<std::string> wanted(ids.begin(), ids.end());
    if (wanted.size() != ids.size()) throw Error("subset: duplicate ids requested");
    Corpus out(authors_);
    for (const auto& d : documents_) {
      if (wanted.contains(d.id)) out.add(d);
    }
    if (out.size() != wanted.size()) throw Error("subset: unknown document id requested");
    return out;
  }

  Corpus subset_indices(const std::vector<std::size_t>& sorted_indices) const {
    Corpus out(authors_);
    for (std::size_t i : sorted_indices) out.add(documents_[i]);
    return out;
  }

  // Order-sensitive checksum over ids, authors and texts.
  std::uint64_t checksum() const {
    Fnv1a h;
    for (const auto& d : documents_) {
      h.update_u64(d.id.size());
      h.update(d.id);
      h.update_u64(d.author.size());
      h.update(d.author);
      h.update_u64(d.text.size());
      h.update(d.text);
    }
    return h.digest();
  }

  friend bool operator==(const Corpus& a, const Corpus& b) {
    return a.authors_ == b.authors_ && a.documents_ == b.documents_;
  }

 private:
  int register_author(const std::string& author) {
    auto [it, inserted] = author_index_.emplace(author, static_cast<int>(authors_.size()));
    if (inserted) authors_.push_back(author);
    return it->second;
  }

  std::vector<Document> documents_;
  std::vector<int> labels_;
  std::vector<std::string> authors_;
  std::unordered_map<std::string, int> author_index_;
  std::unordered_set<std::string> ids_;
};

namespace detail {

// RFC-4180 record reader: quoted fields may contain commas, CRLF and "" escapes.
class CsvReader {
 public:
  explicit CsvReader(std::istream& in) : in_(in) {}

  // Returns false at end of input. `line` is the 1-based line the record starts on.
  bool next(std::vector<std::string>& fields, std::size_t& line) {
    fields.clear();
    int c = in_.get();
    if (c == EOF) return false;
    line = line_;
    std::string field;
    bool quoted = false;
    bool was_quoted = false;
    while (true) {
      if (c == EOF) {
        if (quoted) throw Error("csv line " + std::to_string(line) + ": unterminated quoted field");
        fields.push_back(std::move(field));
        return true;
      }
      const char ch = static_cast<char>(c);
      if (quoted) {
        if (ch == '"') {
          if (in_.peek() == '"') {
            in_.get();
            field.push_back('"');
          } else {
            quoted = false;
          }
        } else {
          if (ch == '\n') ++line_;
          field.push_back(ch);
        }
      } else if (ch == '"') {
        if (!field.empty() || was_quoted) {
          throw Error("csv line " + std::to_string(line_) + ": stray quote inside field");
        }
        quoted = true;
        was_quoted = true;
      } else if (ch == ',') {
        fields.push_back(std::move(field));
        field.clear();
        was_quoted = false;
      } else if (ch == '\r' && in_.peek() == '\n') {
        // CRLF terminator; the '\n' ends the record on the next iteration.
      } else if (ch == '\n') {
        ++line_;
        fields.push_back(std::move(field));
        return true;
      } else {
        field.push_back(ch);
      }
      c = in_.get();
    }
  }

 private:
  std::istream& in_;
  std::size_t line_ = 1;
};

inline std::string csv_escape(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline Corpus read_jsonl(std::istream& in) {
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  std::size_t records = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (is_blank(line)) continue;
    const std::string where = "line " + std::to_string(line_no);
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(where + ": malformed json (" + e.what() + ")");
    }
    if (!rec.is_object()) throw Error(where + ": record is not a json object");
    if (!rec.contains("text") || !rec["text"].is_string()) {
      throw Error(where + ": missing string field \"text\"");
    }
    if (!rec.contains("author") || !rec["author"].is_string()) {
      throw Error(where + ": missing string field \"author\"");
    }
    Document doc;
    if (rec.contains("id") && !rec["id"].is_null()) {
      if (!rec["id"].is_string()) throw Error(where + ": field \"id\" must be a string");
      doc.id = rec["id"].get<std::string>();
    } else {
      doc.id = "doc-" + std::to_string(line_no);
    }
    doc.text = rec["text"].get<std::string>();
    doc.author = rec["author"].get<std::string>();
    try {
      corpus.add(std::move(doc));
    } catch (const Error& e) {
      throw Error(where + ": " + e.what());
    }
    ++records;
  }
  if (records == 0) throw Error("corpus file contains no records");
  return corpus;
}

inline Corpus read_csv(std::istream& in) {
  CsvReader reader(in);
  std::vector<std::string> fields;
  std::size_t line = 0;
  if (!reader.next(fields, line)) throw Error("corpus file contains no records");
  if (!fields.empty() && fields[0].starts_with("\xEF\xBB\xBF")) fields[0].erase(0, 3);
  if (fields != std::vector<std::string>{"id", "text", "author"}) {
    throw Error("csv line 1: header must be id,text,author");
  }
  Corpus corpus;
  std::size_t records = 0;
  while (reader.next(fields, line)) {
    if (fields.size() == 1 && fields[0].empty()) continue;
    const std::string where = "line " + std::to_string(line);
    if (fields.size() != 3) {
      throw Error(where + ": expected 3 fields, found " + std::to_string(fields.size()));
    }
    Document doc{fields[0], fields[1], fields[2]};
    if (doc.id.empty()) doc.id = "doc-" + std::to_string(line);
    try {
      corpus.add(std::move(doc));
    } catch (const Error& e) {
      throw Error(where + ": " + e.what());
    }
    ++records;
  }
  if (records == 0) throw Error("corpus file contains no records");
  return corpus;
}

}  // namespace detail

inline Corpus load_corpus(const std::string& path, CorpusFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open corpus file '" + path + "'");
  try {
    return format == CorpusFormat::jsonl ? detail::read_jsonl(in) : detail::read_csv(in);
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

inline void write_corpus(std::ostream& out, const Corpus& corpus, CorpusFormat format) {
  if (format == CorpusFormat::jsonl) {
    for (const auto& d : corpus.documents()) {
      nlohmann::ordered_json rec;
      rec["id"] = d.id;
      rec["text"] = d.text;
      rec["author"] = d.author;
      out << rec.dump() << '\n';
    }
  } else {
    out << "id,text,author\r\n";
    for (const auto& d : corpus.documents()) {
      out << detail::csv_escape(d.id) << ',' << detail::csv_escape(d.text) << ','
          << detail::csv_escape(d.author) << "\r\n";
    }
  }
}

inline void save_corpus(const std::string& path, const Corpus& corpus, CorpusFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write corpus file '" + path + "'");
  write_corpus(out, corpus, format);
}

// ---------------------------------------------------------------------------
// Splits

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;

  std::array<double, 3> as_array() const { return {train, val, test}; }
};

struct SplitManifest {
  SplitRatios ratios;
  std::uint64_t seed = 0;
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;

  const std::vector<std::string>& part(std::string_view name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    if (name == "test") return test;
    throw Error("unknown split '" + std::string(name) + "' (expected train, val or test)");
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["ratios"] = {ratios.train, ratios.val, ratios.test};
    j["seed"] = seed;
    j["train"] = train;
    j["val"] = val;
    j["test"] = test;
    return j;
  }

  static SplitManifest from_json(const nlohmann::json& j) {
    SplitManifest m;
    try {
      auto r = j.at("ratios").get<std::vector<double>>();
      if (r.size() != 3) throw Error("manifest: ratios must have three entries");
      m.ratios = {r[0], r[1], r[2]};
      m.seed = j.at("seed").get<std::uint64_t>();
      m.train = j.at("train").get<std::vector<std::string>>();
      m.val = j.at("val").get<std::vector<std::string>>();
      m.test = j.at("test").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(std::string("manifest: ") + e.what());
    }
    return m;
  }

  friend bool operator==(const SplitManifest& a, const SplitManifest& b) {
    return a.ratios.as_array() == b.ratios.as_array() && a.seed == b.seed && a.train == b.train &&
           a.val == b.val && a.test == b.test;
  }
};

inline void save_manifest(const std::string& path, const SplitManifest& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write manifest '" + path + "'");
  out << m.to_json().dump(2) << '\n';
}

inline SplitManifest load_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open manifest '" + path + "'");
  try {
    return SplitManifest::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(path + ": " + e.what());
  }
}

inline void validate_ratios(const SplitRatios& r) {
  for (double x : r.as_array()) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw Error("split ratios must be non-negative");
  }
  const double sum = r.train + r.val + r.test;
  if (std::abs(sum - 1.0) > 1e-9) throw Error("split ratios must sum to 1");
}

// Per-author split sizes: floor(ratio * n), leftover documents handed out one at
// a time to the non-empty splits in descending-ratio order (ties: train, val,
// test). A positive-ratio split that would otherwise be empty borrows one
// document from the currently largest split.
inline std::array<std::size_t, 3> split_counts(std::size_t n, const SplitRatios& ratios) {
  const auto r = ratios.as_array();
  std::array<std::size_t, 3> counts{};
  std::size_t assigned = 0;
  for (int s = 0; s < 3; ++s) {
    counts[s] = static_cast<std::size_t>(std::floor(r[s] * static_cast<double>(n) + 1e-9));
    assigned += counts[s];
  }
  std::vector<int> order;
  for (int s = 0; s < 3; ++s) {
    if (r[s] > 0.0) order.push_back(s);
  }
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return r[a] > r[b]; });
  if (n < order.size()) {
    throw Error("too few documents (" + std::to_string(n) + ") to populate " +
                std::to_string(order.size()) + " non-empty splits");
  }
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) counts[order[k % order.size()]] += 1;
  for (int s : order) {
    if (counts[s] == 0) {
      auto donor = std::max_element(counts.begin(), counts.end());
      --*donor;
      counts[s] = 1;
    }
  }
  return counts;
}

inline SplitManifest stratified_split(const Corpus& corpus, const SplitRatios& ratios,
                                      std::uint64_t seed) {
  validate_ratios(ratios);
  SplitManifest m;
  m.ratios = ratios;
  m.seed = seed;
  std::array<std::vector<std::size_t>, 3> parts;
  const auto groups = corpus.documents_by_author();
  for (std::size_t a = 0; a < groups.size(); ++a) {
    if (groups[a].empty()) continue;
    std::array<std::size_t, 3> counts;
    try {
      counts = split_counts(groups[a].size(), ratios);
    } catch (const Error& e) {
      throw Error("author '" + corpus.authors()[a] + "': " + e.what());
    }
    auto docs = groups[a];
    Rng rng(mix_seed(seed, a));
    shuffle(docs, rng);
    std::size_t pos = 0;
    for (int s = 0; s < 3; ++s) {
      for (std::size_t k = 0; k < counts[s]; ++k) parts[s].push_back(docs[pos++]);
    }
  }
  std::array<std::vector<std::string>*, 3> out{&m.train, &m.val, &m.test};
  for (int s = 0; s < 3; ++s) {
    std::sort(parts[s].begin(), parts[s].end());
    for (std::size_t i : parts[s]) out[s]->push_back(corpus[i].id);
  }
  return m;
}

// round-half-up of fraction * n, never below one document.
inline std::size_t subsample_count(std::size_t n, double fraction) {
  const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 0.5 + 1e-9));
  return std::clamp<std::size_t>(k, 1, n);
}

inline Corpus stratified_subsample(const Corpus& corpus, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw Error("subsample fraction must be in (0, 1]");
  std::vector<std::size_t> keep;
  const auto groups = corpus.documents_by_author();
  for (std::size_t a = 0; a < groups.size(); ++a) {
    if (groups[a].empty()) continue;
    auto docs = groups[a];
    Rng rng(mix_seed(seed, a));
    shuffle(docs, rng);
    docs.resize(subsample_count(docs.size(), fraction));
    keep.insert(keep.end(), docs.begin(), docs.end());
  }
  std::sort(keep.begin(), keep.end());
  return corpus.subset_indices(keep);
}

// ---------------------------------------------------------------------------
// Synthetic corpora

struct SyntheticSpec {
  std::size_t num_authors = 10;
  std::size_t docs_per_author = 200;
  std::size_t doc_length = 120;
  std::size_t vocab_size = 2000;
  double skew = 0.6;
  std::uint64_t seed = 7;
};

// Pronounceable, unique, purely alphabetic word for a vocabulary index.
inline std::string synthetic_word(std::size_t index, std::size_t syllables) {
  static constexpr std::string_view consonants = "bcdfghjklmnpqrstvwxz";
  static constexpr std::string_view vowels = "aeiou";
  std::string w;
  for (std::size_t s = 0; s < syllables; ++s) {
    const std::size_t digit = index % 100;
    index /= 100;
    w.push_back(consonants[digit / 5]);
    w.push_back(vowels[digit % 5]);
  }
  return w;
}

// Each author's token distribution mixes a shared Zipfian distribution over the
// whole vocabulary (weight 1 - skew) with a Zipfian distribution over a private
// slice of V / K words (weight skew).
inline Corpus generate_synthetic_corpus(const SyntheticSpec& spec) {
  if (spec.num_authors == 0 || spec.docs_per_author == 0 || spec.doc_length == 0 ||
      spec.vocab_size == 0) {
    throw Error("synthetic corpus: all counts must be positive");
  }
  if (spec.vocab_size < spec.num_authors) {
    throw Error("synthetic corpus: vocab_size must be at least num_authors");
  }
  if (!(spec.skew >= 0.0 && spec.skew <= 1.0)) throw Error("synthetic corpus: skew must be in [0, 1]");

  const std::size_t V = spec.vocab_size;
  std::size_t syllables = 2;
  for (std::size_t cap = 10000; cap < V; cap *= 100) ++syllables;
  std::vector<std::string> words(V);
  for (std::size_t w = 0; w < V; ++w) words[w] = synthetic_word(w, syllables);

  Rng rng(spec.seed);
  std::vector<std::size_t> shared_rank(V);
  for (std::size_t w = 0; w < V; ++w) shared_rank[w] = w;
  shuffle(shared_rank, rng);

  const std::size_t slice = V / spec.num_authors;
  std::vector<std::vector<double>> cumulative(spec.num_authors, std::vector<double>(V));
  double shared_norm = 0.0;
  for (std::size_t r = 0; r < V; ++r) shared_norm += 1.0 / static_cast<double>(r + 1);
  double private_norm = 0.0;
  for (std::size_t r = 0; r < slice; ++r) private_norm += 1.0 / static_cast<double>(r + 1);

  for (std::size_t a = 0; a < spec.num_authors; ++a) {
    std::vector<std::size_t> private_rank(slice);
    for (std::size_t r = 0; r < slice; ++r) private_rank[r] = r;
    shuffle(private_rank, rng);
    std::vector<double> p(V);
    for (std::size_t w = 0; w < V; ++w) {
      p[w] = (1.0 - spec.skew) / (static_cast<double>(shared_rank[w] + 1) * shared_norm);
    }
    for (std::size_t r = 0; r < slice; ++r) {
      p[a * slice + r] += spec.skew / (static_cast<double>(private_rank[r] + 1) * private_norm);
    }
    double acc = 0.0;
    for (std::size_t w = 0; w < V; ++w) {
      acc += p[w];
      cumulative[a][w] = acc;
    }
  }

  std::vector<std::string> authors;
  for (std::size_t a = 0; a < spec.num_authors; ++a) {
    authors.push_back("author-" + std::to_string(a));
  }
  Corpus corpus(authors);
  for (std::size_t a = 0; a < spec.num_authors; ++a) {
    for (std::size_t d = 0; d < spec.docs_per_author; ++d) {
      std::string text;
      for (std::size_t t = 0; t < spec.doc_length; ++t) {
        if (t) text.push_back(' ');
        text += words[sample_cumulative(cumulative[a], rng)];
      }
      corpus.add({"a" + std::to_string(a) + "-d" + std::to_string(d), std::move(text), authors[a]});
    }
  }
  return corpus;
}

}  // namespace contrax
