#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "contrax/common.hpp"
#include "contrax/corpus.hpp"
#include "contrax/encoder.hpp"
#include "contrax/model.hpp"
#include "contrax/objective.hpp"
#include "contrax/optim.hpp"

namespace contrax {

enum class SamplerKind { shuffle, class_balanced };

inline std::string_view to_string(SamplerKind s) {
  return s == SamplerKind::shuffle ? "shuffle" : "class_balanced";
}

inline SamplerKind parse_sampler(std::string_view s) {
  if (s == "shuffle") return SamplerKind::shuffle;
  if (s == "class_balanced") return SamplerKind::class_balanced;
  throw Error("unknown sampler '" + std::string(s) + "' (expected shuffle or class_balanced)");
}

struct TrainConfig {
  std::size_t epochs = 8;
  std::size_t batch_size = 24;
  double lr0 = 1e-3;
  double lr_min = 0.0;
  AdamWConfig adam;
  LossConfig loss;
  std::uint64_t seed = 0;
  SamplerKind sampler = SamplerKind::shuffle;
  std::size_t authors_per_batch = 8;  // P, class_balanced only
  std::size_t docs_per_author = 3;    // Q, class_balanced only
  // Skips the contrastive term entirely rather than weighting it by zero.
  bool cross_entropy_only = false;
  ModelSpec model;
  std::size_t eval_batch = 256;

  void validate() const {
    if (epochs == 0) throw Error("epochs must be >= 1");
    if (batch_size == 0) throw Error("batch_size must be >= 1");
    if (!(lr0 > 0.0)) throw Error("lr0 must be positive");
    if (!(lr_min >= 0.0)) throw Error("lr_min must be non-negative");
    if (sampler == SamplerKind::class_balanced && (authors_per_batch == 0 || docs_per_author == 0)) {
      throw Error("class_balanced sampler needs positive P and Q");
    }
    loss.validate();
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["epochs"] = epochs;
    j["batch_size"] = batch_size;
    j["lr0"] = lr0;
    j["lr_min"] = lr_min;
    j["betas"] = {adam.beta1, adam.beta2};
    j["adam_epsilon"] = adam.epsilon;
    j["weight_decay"] = adam.weight_decay;
    j["tau"] = loss.tau;
    j["lambda"] = loss.lambda;
    j["self_pairs"] = loss.self_pairs == SelfPairMode::literal ? "literal" : "exclude_self";
    j["seed"] = seed;
    j["sampler"] = std::string(to_string(sampler));
    j["authors_per_batch"] = authors_per_batch;
    j["docs_per_author"] = docs_per_author;
    j["cross_entropy_only"] = cross_entropy_only;
    j["model"] = {{"vocab_cap", model.vocab_cap},     {"max_len", model.max_len},
                  {"token_dim", model.token_dim},     {"hidden_dim", model.hidden_dim},
                  {"embed_dim", model.embed_dim},     {"head_hidden_dim", model.head_hidden_dim},
                  {"dropout", model.dropout}};
    return j;
  }

  // Keys absent from `j` keep their current values.
  void update_from_json(const nlohmann::json& j) {
    try {
      epochs = j.value("epochs", epochs);
      batch_size = j.value("batch_size", batch_size);
      lr0 = j.value("lr0", lr0);
      lr_min = j.value("lr_min", lr_min);
      if (j.contains("betas")) {
        auto b = j.at("betas").get<std::vector<double>>();
        if (b.size() != 2) throw Error("config: betas must have two entries");
        adam.beta1 = b[0];
        adam.beta2 = b[1];
      }
      adam.epsilon = j.value("adam_epsilon", adam.epsilon);
      adam.weight_decay = j.value("weight_decay", adam.weight_decay);
      loss.tau = j.value("tau", loss.tau);
      loss.lambda = j.value("lambda", loss.lambda);
      if (j.contains("self_pairs")) {
        const auto s = j.at("self_pairs").get<std::string>();
        if (s != "literal" && s != "exclude_self") throw Error("config: self_pairs must be literal or exclude_self");
        loss.self_pairs = s == "literal" ? SelfPairMode::literal : SelfPairMode::exclude_self;
      }
      seed = j.value("seed", seed);
      if (j.contains("sampler")) sampler = parse_sampler(j.at("sampler").get<std::string>());
      authors_per_batch = j.value("authors_per_batch", authors_per_batch);
      docs_per_author = j.value("docs_per_author", docs_per_author);
      cross_entropy_only = j.value("cross_entropy_only", cross_entropy_only);
      if (j.contains("model")) {
        const auto& mj = j.at("model");
        model.vocab_cap = mj.value("vocab_cap", model.vocab_cap);
        model.max_len = mj.value("max_len", model.max_len);
        model.token_dim = mj.value("token_dim", model.token_dim);
        model.hidden_dim = mj.value("hidden_dim", model.hidden_dim);
        model.embed_dim = mj.value("embed_dim", model.embed_dim);
        model.head_hidden_dim = mj.value("head_hidden_dim", model.head_hidden_dim);
        model.dropout = mj.value("dropout", model.dropout);
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(std::string("config: ") + e.what());
    }
  }
};

struct StepRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  // Per-sample means; the optimized objective is the batch sum.
  double l_ce = 0.0;
  double l_cl = 0.0;
  double l_total = 0.0;
};

struct TrainHistory {
  std::vector<StepRecord> steps;
  std::vector<double> val_accuracy;  // one per epoch; empty when there is no validation split
  std::size_t total_steps = 0;
  std::size_t best_epoch = 0;  // 1-based; 0 when there is no validation split
  double best_val_accuracy = 0.0;

  void write_csv(std::ostream& out) const {
    out << "step,lr,l_ce,l_cl,l_total\n";
    char buf[160];
    for (const auto& s : steps) {
      std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g\n", s.step, s.lr, s.l_ce, s.l_cl,
                    s.l_total);
      out << buf;
    }
  }

  nlohmann::ordered_json summary() const {
    nlohmann::ordered_json j;
    j["total_steps"] = total_steps;
    j["epochs"] = val_accuracy.size();
    j["val_accuracy"] = val_accuracy;
    j["best_epoch"] = best_epoch;
    j["best_val_accuracy"] = best_val_accuracy;
    if (!steps.empty()) {
      j["final_l_ce"] = steps.back().l_ce;
      j["final_l_cl"] = steps.back().l_cl;
      j["final_l_total"] = steps.back().l_total;
    }
    return j;
  }
};

// Mini-batch plans for every epoch, drawn up front so the schedule length is
// known before the first step.
inline std::vector<std::vector<std::vector<std::size_t>>> plan_batches(const std::vector<int>& labels,
                                                                       std::size_t num_authors,
                                                                       const TrainConfig& cfg) {
  std::vector<std::vector<std::vector<std::size_t>>> epochs(cfg.epochs);
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    Rng rng(mix_seed(mix_seed(cfg.seed, 100), e));
    auto& batches = epochs[e];
    if (cfg.sampler == SamplerKind::shuffle) {
      std::vector<std::size_t> order(labels.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      shuffle(order, rng);
      for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::size_t end = std::min(order.size(), start + cfg.batch_size);
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
      }
    } else {
      // P authors x Q documents per batch until every document has been used once.
      std::vector<std::vector<std::size_t>> pools(num_authors);
      for (std::size_t i = 0; i < labels.size(); ++i) pools[static_cast<std::size_t>(labels[i])].push_back(i);
      for (auto& p : pools) shuffle(p, rng);
      std::vector<std::size_t> cursor(num_authors, 0);
      while (true) {
        std::vector<std::size_t> live;
        for (std::size_t a = 0; a < num_authors; ++a) {
          if (cursor[a] < pools[a].size()) live.push_back(a);
        }
        if (live.empty()) break;
        shuffle(live, rng);
        if (live.size() > cfg.authors_per_batch) live.resize(cfg.authors_per_batch);
        std::sort(live.begin(), live.end());
        std::vector<std::size_t> batch;
        for (std::size_t a : live) {
          for (std::size_t q = 0; q < cfg.docs_per_author && cursor[a] < pools[a].size(); ++q) {
            batch.push_back(pools[a][cursor[a]++]);
          }
        }
        batches.push_back(std::move(batch));
      }
    }
  }
  return epochs;
}

struct EvalResult {
  std::vector<int> predictions;
  Matrix embeddings;
  Matrix logits;
};

// Labels of `corpus` expressed as the model's author ids.
template <DocumentEncoder Encoder>
std::vector<int> model_labels(const BasicModel<Encoder>& model, const Corpus& corpus) {
  if (corpus.authors() != model.authors) {
    throw Error("author labels of the corpus do not match the model's label set");
  }
  return corpus.labels();
}

// Argmax prediction per document with dropout disabled; ties go to the
// lowest author id.
template <DocumentEncoder Encoder>
EvalResult evaluate(const BasicModel<Encoder>& model, const Corpus& corpus, std::size_t batch = 256) {
  model_labels(model, corpus);
  const auto tokens = tokenize_corpus(corpus, model.vocab);
  EvalResult out;
  out.embeddings = Matrix(corpus.size(), model.encoder.embed_dim());
  out.logits = Matrix(corpus.size(), model.num_classes());
  out.predictions.resize(corpus.size());
  for (std::size_t start = 0; start < tokens.size(); start += batch) {
    const std::size_t n = std::min(batch, tokens.size() - start);
    std::span<const TokenizedText> chunk(tokens.data() + start, n);
    const Matrix e = model.encoder.forward(chunk);
    const Matrix logits = model.head.forward(e, false, 0);
    for (std::size_t i = 0; i < n; ++i) {
      std::copy(e.row(i).begin(), e.row(i).end(), out.embeddings.row(start + i).begin());
      std::copy(logits.row(i).begin(), logits.row(i).end(), out.logits.row(start + i).begin());
      const auto row = logits.row(i);
      out.predictions[start + i] =
          static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    }
  }
  return out;
}

template <DocumentEncoder Encoder>
double evaluate_accuracy(const BasicModel<Encoder>& model, const Corpus& corpus) {
  if (corpus.empty()) return 0.0;
  const auto result = evaluate(model, corpus);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) hits += result.predictions[i] == corpus.label(i);
  return static_cast<double>(hits) / static_cast<double>(corpus.size());
}

template <DocumentEncoder Encoder>
struct BasicTrainResult {
  BasicModel<Encoder> final_model;
  BasicModel<Encoder> best_model;  // highest validation accuracy, ties to the later epoch; final_model when no validation split
  TrainHistory history;
};

using TrainResult = BasicTrainResult<MeanPoolEncoder>;

// Joint-objective training loop: forward through encoder and head, L_CE +
// lambda * L_CL, manual backward, AdamW under the cosine schedule.
template <DocumentEncoder Encoder>
BasicTrainResult<Encoder> train(BasicModel<Encoder> model, const Corpus& train_set, const Corpus& val_set,
                                const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.empty()) throw Error("train: empty training split");
  const auto labels = model_labels(model, train_set);
  if (!val_set.empty()) model_labels(model, val_set);
  const auto tokens = tokenize_corpus(train_set, model.vocab);
  const auto plan = plan_batches(labels, model.num_classes(), cfg);

  TrainHistory history;
  for (const auto& epoch : plan) history.total_steps += epoch.size();

  AdamW optimizer(cfg.adam);
  auto encoder_grad = model.encoder.zeros_like();
  auto head_grad = model.head.zeros_like();
  std::vector<TensorView> grads = encoder_grad.tensors();
  for (auto& t : head_grad.tensors()) grads.push_back(t);

  typename Encoder::Cache encoder_cache;
  HeadCache head_cache;
  const std::uint64_t dropout_root = mix_seed(cfg.seed, 3);
  BasicModel<Encoder> best = model;
  double best_acc = -1.0;
  std::size_t step = 0;

  for (std::size_t e = 0; e < plan.size(); ++e) {
    for (const auto& batch : plan[e]) {
      std::vector<TokenizedText> docs;
      std::vector<int> y;
      docs.reserve(batch.size());
      for (std::size_t i : batch) {
        docs.push_back(tokens[i]);
        y.push_back(labels[i]);
      }
      const Matrix emb = model.encoder.forward(docs, &encoder_cache, true);
      const Matrix logits = model.head.forward(emb, true, mix_seed(dropout_root, step), &head_cache);

      StepRecord rec;
      rec.step = step;
      rec.epoch = e;
      rec.lr = cosine_lr(step, history.total_steps, cfg.lr0, cfg.lr_min);
      Matrix d_logits;
      Matrix d_emb_contrastive;
      double loss = 0.0;
      if (cfg.cross_entropy_only) {
        auto ce = cross_entropy_loss(logits, y);
        loss = ce.loss;
        rec.l_ce = ce.loss;
        d_logits = std::move(ce.d_logits);
      } else {
        auto jl = joint_loss(logits, emb, y, cfg.loss);
        loss = jl.loss;
        rec.l_ce = jl.cross_entropy;
        rec.l_cl = jl.contrastive;
        d_logits = std::move(jl.d_logits);
        if (cfg.loss.lambda != 0.0) d_emb_contrastive = std::move(jl.d_embeddings);
      }
      if (!std::isfinite(loss)) {
        throw Error("train: non-finite loss at step " + std::to_string(step) + " (epoch " +
                    std::to_string(e + 1) + ", l_ce=" + std::to_string(rec.l_ce) +
                    ", l_cl=" + std::to_string(rec.l_cl) + ")");
      }
      const double n = static_cast<double>(batch.size());
      rec.l_total = (rec.l_ce + (cfg.cross_entropy_only ? 0.0 : cfg.loss.lambda * rec.l_cl)) / n;
      rec.l_ce /= n;
      rec.l_cl /= n;
      history.steps.push_back(rec);

      for (auto& g : grads) std::fill(g.data.begin(), g.data.end(), 0.0);
      Matrix d_emb = model.head.backward(head_cache, d_logits, head_grad);
      if (!d_emb_contrastive.empty()) {
        for (std::size_t i = 0; i < d_emb.size(); ++i) d_emb.storage()[i] += d_emb_contrastive.storage()[i];
      }
      model.encoder.backward(encoder_cache, d_emb, encoder_grad);
      try {
        optimizer.step(model.tensors(), grads, rec.lr, step + 1);
      } catch (const Error& err) {
        throw Error(std::string(err.what()) + " at step " + std::to_string(step));
      }
      model.bump_version();
      ++step;
    }
    if (!val_set.empty()) {
      const double acc = evaluate_accuracy(model, val_set);
      history.val_accuracy.push_back(acc);
      if (acc >= best_acc) {
        best_acc = acc;
        best = model;
        history.best_epoch = e + 1;
        history.best_val_accuracy = acc;
      }
    }
  }
  if (val_set.empty()) best = model;
  return {std::move(model), std::move(best), std::move(history)};
}

inline TrainResult train(const Corpus& train_set, const Corpus& val_set, const TrainConfig& cfg) {
  return train(make_model(train_set, cfg.model, mix_seed(cfg.seed, 0)), train_set, val_set, cfg);
}

}  // namespace contrax
