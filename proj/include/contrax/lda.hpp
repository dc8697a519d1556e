#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "contrax/common.hpp"
#include "contrax/corpus.hpp"
#include "contrax/stylometry.hpp"
#include "contrax/text.hpp"

namespace contrax {

struct LdaOptions {
  std::size_t num_topics = 20;
  std::size_t iterations = 500;
  // Non-positive alpha selects the 50 / num_topics default.
  double alpha = 0.0;
  double beta = 0.01;
  std::uint64_t seed = 0;

  double effective_alpha() const {
    return alpha > 0.0 ? alpha : 50.0 / static_cast<double>(num_topics);
  }
};

struct LdaModel {
  std::size_t num_topics = 0;
  double alpha = 0.0;
  double beta = 0.0;
  std::size_t iterations = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> vocabulary;
  Matrix topic_word;  // num_topics x V, rows sum to 1
  std::unordered_map<std::string, std::size_t> word_index;

  void rebuild_index() {
    word_index.clear();
    for (std::size_t w = 0; w < vocabulary.size(); ++w) word_index.emplace(vocabulary[w], w);
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["num_topics"] = num_topics;
    j["vocab_size"] = vocabulary.size();
    j["alpha"] = alpha;
    j["beta"] = beta;
    j["iterations"] = iterations;
    j["seed"] = seed;
    j["vocabulary"] = vocabulary;
    j["topic_word"] = topic_word.storage();
    return j;
  }

  static LdaModel from_json(const nlohmann::json& j) {
    LdaModel m;
    try {
      m.num_topics = j.at("num_topics").get<std::size_t>();
      m.alpha = j.at("alpha").get<double>();
      m.beta = j.at("beta").get<double>();
      m.iterations = j.at("iterations").get<std::size_t>();
      m.seed = j.at("seed").get<std::uint64_t>();
      m.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
      auto values = j.at("topic_word").get<std::vector<double>>();
      if (j.at("vocab_size").get<std::size_t>() != m.vocabulary.size() ||
          values.size() != m.num_topics * m.vocabulary.size()) {
        throw Error("lda model: dimension mismatch");
      }
      m.topic_word = Matrix(m.num_topics, m.vocabulary.size());
      m.topic_word.storage() = std::move(values);
    } catch (const nlohmann::json::exception& e) {
      throw Error(std::string("lda model: ") + e.what());
    }
    m.rebuild_index();
    return m;
  }
};

inline void save_lda(const std::string& path, const LdaModel& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << m.to_json().dump() << '\n';
}

inline LdaModel load_lda(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  return LdaModel::from_json(nlohmann::json::parse(in));
}

// Collapsed Gibbs sampler state. Exposed so count consistency can be checked
// between sweeps.
class LdaGibbsSampler {
 public:
  LdaGibbsSampler(std::vector<std::vector<std::size_t>> docs, std::size_t vocab_size,
                  const LdaOptions& opts)
      : docs_(std::move(docs)),
        V_(vocab_size),
        K_(opts.num_topics),
        alpha_(opts.effective_alpha()),
        beta_(opts.beta),
        rng_(opts.seed),
        doc_topic_(docs_.size(), std::vector<std::size_t>(K_, 0)),
        topic_word_(K_, std::vector<std::size_t>(V_, 0)),
        topic_total_(K_, 0),
        weights_(K_) {
    if (K_ == 0) throw Error("lda: num_topics must be >= 1");
    assignments_.resize(docs_.size());
    for (std::size_t d = 0; d < docs_.size(); ++d) {
      assignments_[d].resize(docs_[d].size());
      for (std::size_t i = 0; i < docs_[d].size(); ++i) {
        const auto k = static_cast<std::size_t>(uniform_index(rng_, K_));
        assignments_[d][i] = k;
        add(d, docs_[d][i], k);
      }
    }
  }

  void sweep() {
    const double vbeta = static_cast<double>(V_) * beta_;
    for (std::size_t d = 0; d < docs_.size(); ++d) {
      for (std::size_t i = 0; i < docs_[d].size(); ++i) {
        const std::size_t w = docs_[d][i];
        remove(d, w, assignments_[d][i]);
        double acc = 0.0;
        for (std::size_t k = 0; k < K_; ++k) {
          acc += (static_cast<double>(doc_topic_[d][k]) + alpha_) *
                 (static_cast<double>(topic_word_[k][w]) + beta_) /
                 (static_cast<double>(topic_total_[k]) + vbeta);
          weights_[k] = acc;
        }
        const std::size_t k = sample_cumulative(weights_, rng_);
        assignments_[d][i] = k;
        add(d, w, k);
      }
    }
  }

  std::size_t total_tokens() const {
    std::size_t n = 0;
    for (const auto& d : docs_) n += d.size();
    return n;
  }

  // Sum over all topic-word counts; equals total_tokens() between sweeps.
  std::size_t topic_word_count_sum() const {
    std::size_t n = 0;
    for (const auto& row : topic_word_) {
      for (std::size_t c : row) n += c;
    }
    return n;
  }

  bool counts_consistent() const {
    std::vector<std::vector<std::size_t>> dt(docs_.size(), std::vector<std::size_t>(K_, 0));
    std::vector<std::vector<std::size_t>> tw(K_, std::vector<std::size_t>(V_, 0));
    std::vector<std::size_t> tt(K_, 0);
    for (std::size_t d = 0; d < docs_.size(); ++d) {
      for (std::size_t i = 0; i < docs_[d].size(); ++i) {
        const std::size_t k = assignments_[d][i];
        ++dt[d][k];
        ++tw[k][docs_[d][i]];
        ++tt[k];
      }
    }
    return dt == doc_topic_ && tw == topic_word_ && tt == topic_total_ &&
           topic_word_count_sum() == total_tokens();
  }

  const std::vector<std::vector<std::size_t>>& doc_topic() const { return doc_topic_; }
  const std::vector<std::vector<std::size_t>>& assignments() const { return assignments_; }

  // Smoothed topic-word distributions from the current counts.
  Matrix topic_word_distribution() const {
    Matrix phi(K_, V_);
    for (std::size_t k = 0; k < K_; ++k) {
      const double denom = static_cast<double>(topic_total_[k]) + static_cast<double>(V_) * beta_;
      double sum = 0.0;
      for (std::size_t w = 0; w < V_; ++w) {
        phi(k, w) = (static_cast<double>(topic_word_[k][w]) + beta_) / denom;
        sum += phi(k, w);
      }
      for (std::size_t w = 0; w < V_; ++w) phi(k, w) /= sum;
    }
    return phi;
  }

 private:
  void add(std::size_t d, std::size_t w, std::size_t k) {
    ++doc_topic_[d][k];
    ++topic_word_[k][w];
    ++topic_total_[k];
  }
  void remove(std::size_t d, std::size_t w, std::size_t k) {
    --doc_topic_[d][k];
    --topic_word_[k][w];
    --topic_total_[k];
  }

  std::vector<std::vector<std::size_t>> docs_;
  std::size_t V_;
  std::size_t K_;
  double alpha_;
  double beta_;
  Rng rng_;
  std::vector<std::vector<std::size_t>> assignments_;
  std::vector<std::vector<std::size_t>> doc_topic_;
  std::vector<std::vector<std::size_t>> topic_word_;
  std::vector<std::size_t> topic_total_;
  std::vector<double> weights_;
};

// Sorted word vocabulary of the corpus and each document as word ids.
inline std::pair<std::vector<std::string>, std::vector<std::vector<std::size_t>>> lda_documents(
    const Corpus& corpus) {
  std::vector<std::vector<std::string>> tokens;
  std::map<std::string, std::size_t> vocab;
  for (const auto& d : corpus.documents()) {
    tokens.push_back(word_tokens(d.text));
    for (const auto& t : tokens.back()) vocab.emplace(t, 0);
  }
  std::vector<std::string> words;
  for (auto& [w, id] : vocab) {
    id = words.size();
    words.push_back(w);
  }
  std::vector<std::vector<std::size_t>> docs;
  for (const auto& doc : tokens) {
    std::vector<std::size_t> ids;
    ids.reserve(doc.size());
    for (const auto& t : doc) ids.push_back(vocab.at(t));
    docs.push_back(std::move(ids));
  }
  return {std::move(words), std::move(docs)};
}

inline LdaModel fit_lda(const Corpus& corpus, const LdaOptions& opts) {
  if (corpus.empty()) throw Error("fit_lda: empty corpus");
  if (opts.num_topics == 0) throw Error("fit_lda: num_topics must be >= 1");
  auto [words, docs] = lda_documents(corpus);
  if (words.empty()) throw Error("fit_lda: empty vocabulary after tokenization");
  LdaGibbsSampler sampler(std::move(docs), words.size(), opts);
  for (std::size_t it = 0; it < opts.iterations; ++it) sampler.sweep();

  LdaModel m;
  m.num_topics = opts.num_topics;
  m.alpha = opts.effective_alpha();
  m.beta = opts.beta;
  m.iterations = opts.iterations;
  m.seed = opts.seed;
  m.vocabulary = std::move(words);
  m.topic_word = sampler.topic_word_distribution();
  m.rebuild_index();
  return m;
}

struct TopicInference {
  FeatureVector distribution;
  // True when the document had no in-vocabulary tokens; the distribution is uniform.
  bool out_of_vocabulary = false;
};

// Per-document topic distribution by Gibbs sampling with topic_word held fixed.
// The sampler seed is derived from the model seed and the text, so repeated
// calls agree exactly.
inline TopicInference infer_topics(const Document& doc, const LdaModel& model,
                                   std::size_t infer_iterations = 100) {
  const std::size_t K = model.num_topics;
  if (K == 0 || model.topic_word.rows() != K) throw Error("infer_topics: model not fitted");
  std::vector<std::size_t> ids;
  for (const auto& t : word_tokens(doc.text)) {
    auto it = model.word_index.find(t);
    if (it != model.word_index.end()) ids.push_back(it->second);
  }
  TopicInference out;
  out.distribution.type = FeatureType::topic;
  if (ids.empty()) {
    out.distribution.values.assign(K, 1.0 / static_cast<double>(K));
    out.out_of_vocabulary = true;
    return out;
  }
  Fnv1a h;
  h.update(doc.text);
  Rng rng(mix_seed(model.seed, h.digest()));
  std::vector<std::size_t> z(ids.size());
  std::vector<std::size_t> counts(K, 0);
  for (auto& k : z) {
    k = static_cast<std::size_t>(uniform_index(rng, K));
    ++counts[k];
  }
  std::vector<double> weights(K);
  for (std::size_t it = 0; it < infer_iterations; ++it) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      --counts[z[i]];
      double acc = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        acc += (static_cast<double>(counts[k]) + model.alpha) * model.topic_word(k, ids[i]);
        weights[k] = acc;
      }
      z[i] = sample_cumulative(weights, rng);
      ++counts[z[i]];
    }
  }
  auto& theta = out.distribution.values;
  theta.resize(K);
  double sum = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    theta[k] = static_cast<double>(counts[k]) + model.alpha;
    sum += theta[k];
  }
  for (double& x : theta) x /= sum;
  return out;
}

inline FeatureVector topic_features(const Document& doc, const LdaModel& model,
                                    std::size_t infer_iterations = 100) {
  return infer_topics(doc, model, infer_iterations).distribution;
}

}  // namespace contrax
