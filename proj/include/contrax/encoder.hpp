#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "contrax/common.hpp"
#include "contrax/corpus.hpp"
#include "contrax/text.hpp"

namespace contrax {

// ---------------------------------------------------------------------------
// Token vocabulary

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr std::size_t kDefaultMaxLen = 256;

struct TokenVocabulary {
  std::vector<std::string> tokens{"<pad>", "<unk>"};
  std::size_t max_len = kDefaultMaxLen;
  std::unordered_map<std::string, int> index;

  std::size_t size() const { return tokens.size(); }

  int id(std::string_view word) const {
    auto it = index.find(std::string(word));
    return it == index.end() ? kUnkId : it->second;
  }

  void rebuild_index() {
    index.clear();
    for (std::size_t i = 2; i < tokens.size(); ++i) index.emplace(tokens[i], static_cast<int>(i));
  }

  std::uint64_t checksum() const {
    Fnv1a h;
    h.update_u64(max_len);
    for (const auto& t : tokens) {
      h.update_u64(t.size());
      h.update(t);
    }
    return h.digest();
  }
};

// The `cap` most frequent word tokens (ties lexicographic) plus PAD and UNK.
// Callers pass the training split so held-out-only words map to UNK.
inline TokenVocabulary build_token_vocab(const Corpus& train, std::size_t cap,
                                         std::size_t max_len = kDefaultMaxLen) {
  if (train.empty()) throw Error("build_token_vocab: empty corpus");
  if (max_len == 0) throw Error("build_token_vocab: max_len must be positive");
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& d : train.documents()) {
    for (auto& t : word_tokens(d.text)) ++counts[std::move(t)];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (ranked.size() > cap) ranked.resize(cap);
  TokenVocabulary vocab;
  vocab.max_len = max_len;
  for (auto& [t, c] : ranked) vocab.tokens.push_back(std::move(t));
  vocab.rebuild_index();
  return vocab;
}

struct TokenizedText {
  std::vector<int> ids;    // exactly max_len entries
  std::size_t length = 0;  // non-pad positions

  friend bool operator==(const TokenizedText&, const TokenizedText&) = default;
};

inline TokenizedText tokenize(std::string_view text, const TokenVocabulary& vocab) {
  TokenizedText out;
  out.ids.assign(vocab.max_len, kPadId);
  for (const auto& t : word_tokens(text)) {
    if (out.length == vocab.max_len) break;
    out.ids[out.length++] = vocab.id(t);
  }
  return out;
}

inline std::vector<TokenizedText> tokenize_corpus(const Corpus& corpus, const TokenVocabulary& vocab) {
  std::vector<TokenizedText> out;
  out.reserve(corpus.size());
  for (const auto& d : corpus.documents()) out.push_back(tokenize(d.text, vocab));
  return out;
}

// ---------------------------------------------------------------------------
// Parameter tensors

struct TensorView {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::span<double> data;
};

// Affine map y = W x + b with W stored out x in.
struct Linear {
  Matrix weight;
  std::vector<double> bias;

  Linear() = default;
  Linear(std::size_t in, std::size_t out) : weight(out, in), bias(out, 0.0) {}

  std::size_t in() const { return weight.cols(); }
  std::size_t out() const { return weight.rows(); }

  // Uniform in +-sqrt(6 / (fan_in + fan_out)); bias zero.
  void init_uniform(Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in() + out()));
    for (double& w : weight.flat()) w = uniform(rng, -limit, limit);
    std::fill(bias.begin(), bias.end(), 0.0);
  }

  // Y = X W^T + b, X is N x in.
  Matrix forward(const Matrix& x) const {
    if (x.cols() != in()) throw Error("linear layer: input dimension mismatch");
    Matrix y(x.rows(), out());
    for (std::size_t n = 0; n < x.rows(); ++n) {
      const auto xr = x.row(n);
      for (std::size_t o = 0; o < out(); ++o) y(n, o) = bias[o] + dot(weight.row(o), xr);
    }
    return y;
  }

  // Accumulates dW, db into `grad` and returns dX.
  Matrix backward(const Matrix& x, const Matrix& dy, Linear& grad) const {
    Matrix dx(x.rows(), in());
    for (std::size_t n = 0; n < x.rows(); ++n) {
      const auto xr = x.row(n);
      auto dxr = dx.row(n);
      for (std::size_t o = 0; o < out(); ++o) {
        const double g = dy(n, o);
        if (g == 0.0) continue;
        grad.bias[o] += g;
        auto gw = grad.weight.row(o);
        const auto w = weight.row(o);
        for (std::size_t i = 0; i < in(); ++i) {
          gw[i] += g * xr[i];
          dxr[i] += g * w[i];
        }
      }
    }
    return dx;
  }

  void append_tensors(const std::string& prefix, std::vector<TensorView>& out) {
    out.push_back({prefix + ".weight", weight.rows(), weight.cols(), weight.flat()});
    out.push_back({prefix + ".bias", bias.size(), 1, bias});
  }
};

inline void tanh_inplace(Matrix& m) {
  for (double& x : m.flat()) x = std::tanh(x);
}

// dPre = dPost * (1 - post^2)
inline Matrix tanh_backward(const Matrix& post, const Matrix& dpost) {
  Matrix d(post.rows(), post.cols());
  for (std::size_t i = 0; i < post.size(); ++i) {
    const double y = post.storage()[i];
    d.storage()[i] = dpost.storage()[i] * (1.0 - y * y);
  }
  return d;
}

// ---------------------------------------------------------------------------
// Document encoder: mean of token embeddings over non-pad positions, then
// affine -> tanh -> affine.

struct EncoderConfig {
  std::size_t vocab_size = 0;
  std::size_t token_dim = 64;
  std::size_t hidden_dim = 128;
  std::size_t embed_dim = 64;

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct EncoderCache {
  std::uint64_t params_version = 0;
  bool filled = false;
  bool train_mode = false;
  std::vector<TokenizedText> docs;
  Matrix pooled;
  Matrix hidden;  // post-tanh
};

class MeanPoolEncoder {
 public:
  using Cache = EncoderCache;

  MeanPoolEncoder() = default;
  explicit MeanPoolEncoder(const EncoderConfig& cfg)
      : config_(cfg),
        table_(cfg.vocab_size, cfg.token_dim),
        proj1_(cfg.token_dim, cfg.hidden_dim),
        proj2_(cfg.hidden_dim, cfg.embed_dim) {}

  static MeanPoolEncoder initialized(const EncoderConfig& cfg, std::uint64_t seed) {
    MeanPoolEncoder e(cfg);
    Rng rng(seed);
    const double limit = std::sqrt(6.0 / static_cast<double>(cfg.vocab_size + cfg.token_dim));
    for (double& w : e.table_.flat()) w = uniform(rng, -limit, limit);
    e.proj1_.init_uniform(rng);
    e.proj2_.init_uniform(rng);
    return e;
  }

  // Gradient accumulator with this encoder's shapes, all zeros.
  MeanPoolEncoder zeros_like() const { return MeanPoolEncoder(config_); }

  const EncoderConfig& config() const { return config_; }
  std::size_t embed_dim() const { return config_.embed_dim; }
  std::uint64_t version() const { return version_; }
  void bump_version() { ++version_; }

  Matrix& table() { return table_; }
  const Matrix& table() const { return table_; }

  Matrix pool(std::span<const TokenizedText> batch) const {
    Matrix pooled(batch.size(), config_.token_dim);
    for (std::size_t n = 0; n < batch.size(); ++n) {
      const auto& doc = batch[n];
      if (doc.length == 0) continue;
      auto row = pooled.row(n);
      for (std::size_t p = 0; p < doc.length; ++p) {
        const int id = doc.ids[p];
        if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size) {
          throw Error("encoder: token id out of range");
        }
        const auto t = table_.row(static_cast<std::size_t>(id));
        for (std::size_t c = 0; c < row.size(); ++c) row[c] += t[c];
      }
      const double inv = 1.0 / static_cast<double>(doc.length);
      for (double& x : row) x *= inv;
    }
    return pooled;
  }

  Matrix forward(std::span<const TokenizedText> batch, Cache* cache = nullptr,
                 bool train_mode = false) const {
    Matrix pooled = pool(batch);
    Matrix hidden = proj1_.forward(pooled);
    tanh_inplace(hidden);
    Matrix embeddings = proj2_.forward(hidden);
    if (cache) {
      cache->params_version = version_;
      cache->filled = true;
      cache->train_mode = train_mode;
      cache->docs.assign(batch.begin(), batch.end());
      cache->pooled = std::move(pooled);
      cache->hidden = std::move(hidden);
    }
    return embeddings;
  }

  // Accumulates parameter gradients into `grad`. Returns nothing: the encoder
  // input is discrete.
  void backward(const Cache& cache, const Matrix& d_embeddings, MeanPoolEncoder& grad) const {
    if (!cache.filled || cache.params_version != version_) {
      throw Error("encoder backward: stale cache (parameters changed since forward)");
    }
    if (d_embeddings.rows() != cache.docs.size() || d_embeddings.cols() != config_.embed_dim) {
      throw Error("encoder backward: gradient shape does not match cached batch");
    }
    Matrix d_hidden = proj2_.backward(cache.hidden, d_embeddings, grad.proj2_);
    Matrix d_pre = tanh_backward(cache.hidden, d_hidden);
    Matrix d_pooled = proj1_.backward(cache.pooled, d_pre, grad.proj1_);
    for (std::size_t n = 0; n < cache.docs.size(); ++n) {
      const auto& doc = cache.docs[n];
      if (doc.length == 0) continue;
      const double share = 1.0 / static_cast<double>(doc.length);
      const auto g = d_pooled.row(n);
      for (std::size_t p = 0; p < doc.length; ++p) {
        auto t = grad.table_.row(static_cast<std::size_t>(doc.ids[p]));
        for (std::size_t c = 0; c < t.size(); ++c) t[c] += g[c] * share;
      }
    }
  }

  std::vector<TensorView> tensors() {
    std::vector<TensorView> out;
    out.push_back({"encoder.table", table_.rows(), table_.cols(), table_.flat()});
    proj1_.append_tensors("encoder.proj1", out);
    proj2_.append_tensors("encoder.proj2", out);
    return out;
  }

  nlohmann::ordered_json config_json() const {
    return {{"type", "mean_pool"},
            {"vocab_size", config_.vocab_size},
            {"token_dim", config_.token_dim},
            {"hidden_dim", config_.hidden_dim},
            {"embed_dim", config_.embed_dim}};
  }

  static MeanPoolEncoder from_config_json(const nlohmann::json& j) {
    if (j.at("type").get<std::string>() != "mean_pool") throw Error("checkpoint: unsupported encoder type");
    EncoderConfig cfg;
    cfg.vocab_size = j.at("vocab_size").get<std::size_t>();
    cfg.token_dim = j.at("token_dim").get<std::size_t>();
    cfg.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    cfg.embed_dim = j.at("embed_dim").get<std::size_t>();
    return MeanPoolEncoder(cfg);
  }

 private:
  EncoderConfig config_;
  Matrix table_;
  Linear proj1_;
  Linear proj2_;
  std::uint64_t version_ = 0;
};

// Interface a substitute document encoder must provide to be trained.
template <class E>
concept DocumentEncoder = requires(E& e, const E& ce, std::span<const TokenizedText> batch,
                                   typename E::Cache& cache, const Matrix& grad, const nlohmann::json& j) {
  { ce.forward(batch, &cache, true) } -> std::same_as<Matrix>;
  { ce.backward(cache, grad, e) };
  { ce.zeros_like() } -> std::same_as<E>;
  { ce.embed_dim() } -> std::convertible_to<std::size_t>;
  { e.tensors() } -> std::same_as<std::vector<TensorView>>;
  { e.bump_version() };
  { ce.config_json() };
  { E::from_config_json(j) } -> std::same_as<E>;
};

static_assert(DocumentEncoder<MeanPoolEncoder>);

// ---------------------------------------------------------------------------
// Classifier head: affine -> tanh -> dropout -> affine.

inline constexpr double kDefaultDropout = 0.35;

struct HeadConfig {
  std::size_t embed_dim = 64;
  std::size_t hidden_dim = 128;
  std::size_t num_classes = 0;
  double dropout = kDefaultDropout;

  friend bool operator==(const HeadConfig&, const HeadConfig&) = default;
};

struct HeadCache {
  std::uint64_t params_version = 0;
  bool filled = false;
  Matrix embeddings;
  Matrix hidden;   // post-tanh, before dropout
  Matrix mask;     // dropout multipliers (0 or 1/keep); empty in eval mode
  Matrix dropped;  // input to the output layer
};

class ClassifierHead {
 public:
  ClassifierHead() = default;
  explicit ClassifierHead(const HeadConfig& cfg)
      : config_(cfg), fc1_(cfg.embed_dim, cfg.hidden_dim), fc2_(cfg.hidden_dim, cfg.num_classes) {
    if (cfg.dropout < 0.0 || cfg.dropout >= 1.0) throw Error("dropout rate must be in [0, 1)");
  }

  static ClassifierHead initialized(const HeadConfig& cfg, std::uint64_t seed) {
    ClassifierHead h(cfg);
    Rng rng(seed);
    h.fc1_.init_uniform(rng);
    h.fc2_.init_uniform(rng);
    return h;
  }

  ClassifierHead zeros_like() const { return ClassifierHead(config_); }
  const HeadConfig& config() const { return config_; }
  std::uint64_t version() const { return version_; }
  void bump_version() { ++version_; }

  // Logits N x K. In train mode the hidden layer is dropped out with a mask
  // drawn from `dropout_seed`, survivors scaled by 1 / keep.
  Matrix forward(const Matrix& embeddings, bool train_mode, std::uint64_t dropout_seed,
                 HeadCache* cache = nullptr) const {
    if (embeddings.cols() != config_.embed_dim) throw Error("classifier head: embedding dimension mismatch");
    Matrix hidden = fc1_.forward(embeddings);
    tanh_inplace(hidden);
    Matrix mask;
    Matrix dropped = hidden;
    if (train_mode) {
      const double keep = 1.0 - config_.dropout;
      mask = Matrix(hidden.rows(), hidden.cols());
      Rng rng(dropout_seed);
      for (std::size_t i = 0; i < mask.size(); ++i) {
        mask.storage()[i] = uniform01(rng) < keep ? 1.0 / keep : 0.0;
        dropped.storage()[i] *= mask.storage()[i];
      }
    }
    Matrix logits = fc2_.forward(dropped);
    if (cache) {
      cache->params_version = version_;
      cache->filled = true;
      cache->embeddings = embeddings;
      cache->hidden = std::move(hidden);
      cache->mask = std::move(mask);
      cache->dropped = std::move(dropped);
    }
    return logits;
  }

  // Accumulates parameter gradients into `grad`; returns dL/d(embeddings).
  Matrix backward(const HeadCache& cache, const Matrix& d_logits, ClassifierHead& grad) const {
    if (!cache.filled || cache.params_version != version_) {
      throw Error("head backward: stale cache (parameters changed since forward)");
    }
    if (d_logits.rows() != cache.embeddings.rows() || d_logits.cols() != config_.num_classes) {
      throw Error("head backward: gradient shape does not match cached batch");
    }
    Matrix d_dropped = fc2_.backward(cache.dropped, d_logits, grad.fc2_);
    if (!cache.mask.empty()) {
      for (std::size_t i = 0; i < d_dropped.size(); ++i) d_dropped.storage()[i] *= cache.mask.storage()[i];
    }
    Matrix d_pre = tanh_backward(cache.hidden, d_dropped);
    return fc1_.backward(cache.embeddings, d_pre, grad.fc1_);
  }

  std::vector<TensorView> tensors() {
    std::vector<TensorView> out;
    fc1_.append_tensors("head.fc1", out);
    fc2_.append_tensors("head.fc2", out);
    return out;
  }

 private:
  HeadConfig config_;
  Linear fc1_;
  Linear fc2_;
  std::uint64_t version_ = 0;
};

}  // namespace contrax
