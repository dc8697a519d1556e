#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "contrax/common.hpp"
#include "contrax/corpus.hpp"
#include "contrax/lda.hpp"
#include "contrax/objective.hpp"
#include "contrax/stylometry.hpp"

namespace contrax {

// ---------------------------------------------------------------------------
// Classification metrics

inline double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) throw Error("accuracy: length mismatch");
  if (labels.empty()) throw Error("accuracy: no predictions");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

// Rows are true authors, columns predicted authors.
struct ConfusionMatrix {
  std::vector<std::string> labels;
  std::vector<std::int64_t> counts;

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::vector<std::string> names)
      : labels(std::move(names)), counts(labels.size() * labels.size(), 0) {}

  std::size_t size() const { return labels.size(); }
  std::int64_t& at(std::size_t t, std::size_t p) { return counts[t * size() + p]; }
  std::int64_t at(std::size_t t, std::size_t p) const { return counts[t * size() + p]; }

  std::int64_t row_sum(std::size_t t) const {
    std::int64_t s = 0;
    for (std::size_t p = 0; p < size(); ++p) s += at(t, p);
    return s;
  }
  std::int64_t col_sum(std::size_t p) const {
    std::int64_t s = 0;
    for (std::size_t t = 0; t < size(); ++t) s += at(t, p);
    return s;
  }
  std::int64_t total() const {
    std::int64_t s = 0;
    for (auto c : counts) s += c;
    return s;
  }
  std::int64_t trace() const {
    std::int64_t s = 0;
    for (std::size_t k = 0; k < size(); ++k) s += at(k, k);
    return s;
  }
};

inline ConfusionMatrix confusion_matrix(std::span<const int> labels, std::span<const int> predictions,
                                        std::vector<std::string> names) {
  if (labels.size() != predictions.size()) throw Error("confusion_matrix: length mismatch");
  ConfusionMatrix cm(std::move(names));
  const auto k = static_cast<int>(cm.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= k || predictions[i] < 0 || predictions[i] >= k) {
      throw Error("confusion_matrix: label out of range");
    }
    ++cm.at(static_cast<std::size_t>(labels[i]), static_cast<std::size_t>(predictions[i]));
  }
  return cm;
}

struct MetricsReport {
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> f1;
  std::vector<double> class_accuracy;  // == recall
  double class_accuracy_variance = 0.0;  // population variance

  nlohmann::ordered_json to_json(const std::vector<std::string>& labels) const {
    nlohmann::ordered_json j;
    j["accuracy"] = accuracy;
    j["macro_precision"] = macro_precision;
    j["macro_recall"] = macro_recall;
    j["macro_f1"] = macro_f1;
    j["class_accuracy_variance"] = class_accuracy_variance;
    j["labels"] = labels;
    j["class_accuracy"] = class_accuracy;
    j["precision"] = precision;
    j["recall"] = recall;
    j["f1"] = f1;
    return j;
  }
};

// Per-class precision = diag / column sum, recall = diag / row sum (0 when the
// denominator is 0), F1 their harmonic mean; macro values are unweighted means.
inline MetricsReport macro_metrics(const ConfusionMatrix& cm) {
  const std::size_t k = cm.size();
  if (k == 0 || cm.total() == 0) throw Error("macro_metrics: empty confusion matrix");
  MetricsReport r;
  r.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(cm.total());
  for (std::size_t c = 0; c < k; ++c) {
    const auto tp = static_cast<double>(cm.at(c, c));
    const auto col = static_cast<double>(cm.col_sum(c));
    const auto row = static_cast<double>(cm.row_sum(c));
    const double p = col > 0 ? tp / col : 0.0;
    const double rc = row > 0 ? tp / row : 0.0;
    const double f = (p + rc) > 0 ? 2.0 * p * rc / (p + rc) : 0.0;
    r.precision.push_back(p);
    r.recall.push_back(rc);
    r.f1.push_back(f);
  }
  const auto mean = [k](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(k);
  };
  r.macro_precision = mean(r.precision);
  r.macro_recall = mean(r.recall);
  r.macro_f1 = mean(r.f1);
  r.class_accuracy = r.recall;
  const double mu = mean(r.class_accuracy);
  double var = 0.0;
  for (double a : r.class_accuracy) var += (a - mu) * (a - mu);
  r.class_accuracy_variance = var / static_cast<double>(k);
  return r;
}

// Entrywise difference of two confusion matrices over the same test set.
struct RelativeConfusion {
  std::vector<std::string> labels;
  std::vector<std::int64_t> values;

  std::size_t size() const { return labels.size(); }
  std::int64_t at(std::size_t t, std::size_t p) const { return values[t * size() + p]; }
  std::int64_t row_sum(std::size_t t) const {
    std::int64_t s = 0;
    for (std::size_t p = 0; p < size(); ++p) s += at(t, p);
    return s;
  }
};

inline RelativeConfusion relative_confusion(const ConfusionMatrix& contrast, const ConfusionMatrix& baseline) {
  if (contrast.size() != baseline.size() || contrast.labels != baseline.labels) {
    throw Error("relative_confusion: matrices have different author labels");
  }
  for (std::size_t t = 0; t < contrast.size(); ++t) {
    if (contrast.row_sum(t) != baseline.row_sum(t)) {
      throw Error("relative_confusion: row sums differ for author '" + contrast.labels[t] +
                  "' (different test sets?)");
    }
  }
  RelativeConfusion r{contrast.labels, std::vector<std::int64_t>(contrast.counts.size())};
  for (std::size_t i = 0; i < r.values.size(); ++i) r.values[i] = contrast.counts[i] - baseline.counts[i];
  return r;
}

// Accuracy over the documents of two authors together.
inline double pair_cumulative_accuracy(const ConfusionMatrix& cm, std::size_t a, std::size_t b) {
  const auto total = cm.row_sum(a) + cm.row_sum(b);
  if (total == 0) return 0.0;
  return static_cast<double>(cm.at(a, a) + cm.at(b, b)) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Distances

inline void validate_simplex(std::span<const double> p, const char* what) {
  double sum = 0.0;
  for (double x : p) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw Error(std::string(what) + ": negative or non-finite probability");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw Error(std::string(what) + ": probabilities do not sum to 1");
}

// Jensen-Shannon divergence in nats, in [0, ln 2].
inline double jsd(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw Error("jsd: length mismatch");
  validate_simplex(p, "jsd");
  validate_simplex(q, "jsd");
  double kl_p = 0.0;
  double kl_q = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) kl_p += p[i] * std::log(p[i] / m);
    if (q[i] > 0.0) kl_q += q[i] * std::log(q[i] / m);
  }
  return std::clamp(0.5 * kl_p + 0.5 * kl_q, 0.0, std::numbers::ln2);
}

inline double cosine_similarity(std::span<const double> u, std::span<const double> v,
                                double eps = kNormEpsilon) {
  if (u.size() != v.size()) throw Error("cosine_similarity: length mismatch");
  return dot(u, v) / (std::max(norm2(u), eps) * std::max(norm2(v), eps));
}

// JSD for topic distributions, 1 - cosine otherwise.
inline double feature_distance(FeatureType type, std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw Error("feature_distance: dimension mismatch");
  if (type == FeatureType::topic) return jsd(u, v);
  if (std::equal(u.begin(), u.end(), v.begin())) return 0.0;
  return std::clamp(1.0 - cosine_similarity(u, v), 0.0, 2.0);
}

inline double feature_distance(const AuthorFeature& u, const AuthorFeature& v) {
  if (u.type != v.type || u.vector.type != v.vector.type) {
    throw Error("feature_distance: feature types differ");
  }
  return feature_distance(u.type, u.vector.values, v.vector.values);
}

// ---------------------------------------------------------------------------
// Author-level stylometric analysis

struct StylometryOptions {
  std::size_t k_per_order = 1000;
  LdaOptions lda;
  std::size_t infer_iterations = 100;
  std::vector<FeatureType> features{kAllFeatureTypes.begin(), kAllFeatureTypes.end()};
};

// The four feature extractors, fitted to one corpus.
struct FittedExtractors {
  std::optional<NgramVocabulary> word_vocab;
  std::optional<NgramVocabulary> char_vocab;
  std::optional<LdaModel> lda;
  std::size_t infer_iterations = 100;

  FeatureExtractor get(FeatureType type) const {
    switch (type) {
      case FeatureType::content:
        return {type, [this](const Document& d) { return content_features(d, *word_vocab); }};
      case FeatureType::style:
        return {type, [](const Document& d) { return style_features(d); }};
      case FeatureType::hybrid:
        return {type, [this](const Document& d) { return hybrid_features(d, *char_vocab); }};
      case FeatureType::topic:
        return {type, [this](const Document& d) { return topic_features(d, *lda, infer_iterations); }};
    }
    throw Error("unknown feature type");
  }
};

inline FittedExtractors fit_extractors(const Corpus& corpus, const StylometryOptions& opts) {
  FittedExtractors fx;
  fx.infer_iterations = opts.infer_iterations;
  for (auto t : opts.features) {
    if (t == FeatureType::content) fx.word_vocab = build_ngram_vocab(corpus, NgramUnit::word, {1, 2, 3}, opts.k_per_order);
    if (t == FeatureType::hybrid) fx.char_vocab = build_ngram_vocab(corpus, NgramUnit::character, {2, 3}, opts.k_per_order);
    if (t == FeatureType::topic) fx.lda = fit_lda(corpus, opts.lda);
  }
  return fx;
}

// Author representations per feature space, indexed by author id.
struct StylometricProfile {
  std::vector<std::string> authors;
  std::vector<FeatureType> features;
  std::map<FeatureType, std::vector<FeatureVector>> representations;

  const std::vector<FeatureVector>& of(FeatureType t) const {
    auto it = representations.find(t);
    if (it == representations.end()) throw Error("profile has no '" + std::string(to_string(t)) + "' features");
    return it->second;
  }
};

inline StylometricProfile stylometric_profile(const Corpus& corpus, const FittedExtractors& fx,
                                              const std::vector<FeatureType>& features) {
  StylometricProfile p;
  p.authors = corpus.authors();
  p.features = features;
  for (auto t : features) p.representations[t] = author_representations(corpus, fx.get(t));
  return p;
}

inline StylometricProfile stylometric_profile(const Corpus& corpus, const StylometryOptions& opts = {}) {
  const auto fx = fit_extractors(corpus, opts);
  return stylometric_profile(corpus, fx, opts.features);
}

// K x K matrix of d(v_Ai, v_Aj) in one feature space.
inline Matrix feature_distance_matrix(const StylometricProfile& p, FeatureType t) {
  const auto& reps = p.of(t);
  const std::size_t k = reps.size();
  Matrix d(k, k);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      const double x = feature_distance(t, reps[i].values, reps[j].values);
      d(i, j) = x;
      d(j, i) = x;
    }
  }
  return d;
}

enum class PairMode {
  all_ordered_pairs,  // |A|^2 ordered pairs, diagonal included (contributes 0)
  exclude_diagonal    // |A|(|A|-1) ordered pairs
};

// Mean pairwise author distance of a dataset in feature space t.
inline double dataset_dissimilarity(const StylometricProfile& p, FeatureType t,
                                    PairMode mode = PairMode::all_ordered_pairs) {
  const auto& reps = p.of(t);
  const std::size_t k = reps.size();
  if (k < 2) throw Error("dataset_dissimilarity: needs at least two authors");
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      if (i != j) sum += feature_distance(t, reps[i].values, reps[j].values);
    }
  }
  const double pairs = mode == PairMode::all_ordered_pairs ? static_cast<double>(k * k)
                                                           : static_cast<double>(k * (k - 1));
  return sum / pairs;
}

// Raw per-feature dissimilarities of several datasets, and the same columns
// divided by their maximum across datasets.
struct DissimilarityTable {
  std::vector<std::string> datasets;
  std::vector<FeatureType> features;
  std::vector<std::vector<double>> raw;     // [dataset][feature]
  std::vector<std::vector<double>> scaled;  // column max == 1 (0 columns stay 0)
};

inline DissimilarityTable scaled_dissimilarity_table(const std::vector<std::string>& names,
                                                     const std::vector<std::vector<double>>& raw,
                                                     const std::vector<FeatureType>& features) {
  if (names.size() != raw.size()) throw Error("scaled_dissimilarity_table: name/row count mismatch");
  DissimilarityTable t{names, features, raw, raw};
  for (std::size_t f = 0; f < features.size(); ++f) {
    double mx = 0.0;
    for (const auto& row : raw) {
      if (row.size() != features.size()) throw Error("scaled_dissimilarity_table: ragged rows");
      mx = std::max(mx, row[f]);
    }
    for (auto& row : t.scaled) row[f] = mx > 0.0 ? row[f] / mx : 0.0;
  }
  return t;
}

inline DissimilarityTable scaled_dissimilarity_table(const std::vector<std::string>& names,
                                                     const std::vector<StylometricProfile>& profiles,
                                                     PairMode mode = PairMode::all_ordered_pairs) {
  if (profiles.empty()) throw Error("scaled_dissimilarity_table: no datasets");
  const auto features = profiles.front().features;
  std::vector<std::vector<double>> raw;
  for (const auto& p : profiles) {
    std::vector<double> row;
    for (auto f : features) row.push_back(dataset_dissimilarity(p, f, mode));
    raw.push_back(std::move(row));
  }
  return scaled_dissimilarity_table(names, raw, features);
}

// Per-feature distance matrices, their normalizers C_f, and the pairwise
// author distance PD = mean_f d_f / C_f (a feature with C_f = 0 adds 0).
struct DistanceReport {
  std::vector<std::string> authors;
  std::vector<FeatureType> features;
  std::vector<double> dissimilarity;  // per feature, all ordered pairs
  std::vector<Matrix> distances;      // per feature
  std::vector<double> normalizers;    // C_f per feature
  Matrix pd;
};

inline DistanceReport distance_report(const StylometricProfile& p) {
  DistanceReport r;
  r.authors = p.authors;
  r.features = p.features;
  const std::size_t k = p.authors.size();
  if (k < 2) throw Error("distance_report: needs at least two authors");
  r.pd = Matrix(k, k);
  for (auto f : p.features) {
    Matrix d = feature_distance_matrix(p, f);
    double cf = 0.0;
    for (double x : d.flat()) cf = std::max(cf, x);
    r.dissimilarity.push_back(dataset_dissimilarity(p, f));
    r.normalizers.push_back(cf);
    if (cf > 0.0) {
      for (std::size_t i = 0; i < d.size(); ++i) r.pd.storage()[i] += d.storage()[i] / cf;
    }
    r.distances.push_back(std::move(d));
  }
  for (double& x : r.pd.flat()) x /= static_cast<double>(p.features.size());
  return r;
}

inline double pairwise_author_distance(const StylometricProfile& p, std::size_t a, std::size_t b) {
  const std::size_t k = p.authors.size();
  if (a >= k || b >= k) throw Error("pairwise_author_distance: unknown author");
  return distance_report(p).pd(a, b);
}

inline double pairwise_author_distance(const StylometricProfile& p, std::string_view a, std::string_view b) {
  const auto find = [&](std::string_view name) {
    auto it = std::find(p.authors.begin(), p.authors.end(), name);
    if (it == p.authors.end()) throw Error("pairwise_author_distance: unknown author '" + std::string(name) + "'");
    return static_cast<std::size_t>(it - p.authors.begin());
  };
  return pairwise_author_distance(p, find(a), find(b));
}

struct AuthorPair {
  std::size_t a = 0;
  std::size_t b = 0;
  double distance = 0.0;
};

// The m closest distinct author pairs by PD (ties by index).
inline std::vector<AuthorPair> most_similar_pairs(const Matrix& pd, std::size_t m) {
  std::vector<AuthorPair> pairs;
  for (std::size_t i = 0; i < pd.rows(); ++i) {
    for (std::size_t j = i + 1; j < pd.cols(); ++j) pairs.push_back({i, j, pd(i, j)});
  }
  std::stable_sort(pairs.begin(), pairs.end(),
                   [](const AuthorPair& x, const AuthorPair& y) { return x.distance < y.distance; });
  if (pairs.size() > m) pairs.resize(m);
  return pairs;
}

// ---------------------------------------------------------------------------
// Embedding analysis

struct ClusterQuality {
  double intra = 0.0;  // mean cosine over same-author pairs
  double inter = 0.0;  // mean cosine over cross-author pairs
  double gap() const { return intra - inter; }
};

inline ClusterQuality cluster_quality(const Matrix& embeddings, std::span<const int> labels) {
  if (labels.size() != embeddings.rows()) throw Error("cluster_quality: label count mismatch");
  double intra = 0.0;
  double inter = 0.0;
  std::size_t n_intra = 0;
  std::size_t n_inter = 0;
  std::vector<double> norms(embeddings.rows());
  for (std::size_t i = 0; i < norms.size(); ++i) norms[i] = std::max(norm2(embeddings.row(i)), kNormEpsilon);
  for (std::size_t i = 0; i < embeddings.rows(); ++i) {
    for (std::size_t j = i + 1; j < embeddings.rows(); ++j) {
      const double c = dot(embeddings.row(i), embeddings.row(j)) / (norms[i] * norms[j]);
      if (labels[i] == labels[j]) {
        intra += c;
        ++n_intra;
      } else {
        inter += c;
        ++n_inter;
      }
    }
  }
  if (n_intra == 0) throw Error("cluster_quality: no same-author pair");
  if (n_inter == 0) throw Error("cluster_quality: needs at least two authors");
  return {intra / static_cast<double>(n_intra), inter / static_cast<double>(n_inter)};
}

struct Projection {
  Matrix coordinates;                 // M x 2
  Matrix components;                  // 2 x d, unit rows
  std::array<double, 2> variance{};   // eigenvalues of the covariance
  double total_variance = 0.0;
  bool degenerate = false;            // zero-variance input; coordinates are zeros
};

// Mean-centered PCA onto the top two principal directions by power iteration
// with deflation on the covariance matrix. Each direction's sign is fixed so
// its largest-magnitude component is positive.
inline Projection project_embeddings(const Matrix& x, std::uint64_t seed = 0, double tol = 1e-9,
                                     std::size_t max_iterations = 20000) {
  const std::size_t m = x.rows();
  const std::size_t d = x.cols();
  if (m < 2) throw Error("project_embeddings: needs at least two points");
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t c = 0; c < d; ++c) mean[c] += x(i, c);
  }
  for (double& v : mean) v /= static_cast<double>(m);
  Matrix centered(m, d);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t c = 0; c < d; ++c) centered(i, c) = x(i, c) - mean[c];
  }
  Matrix cov(d, d);
  for (std::size_t i = 0; i < m; ++i) {
    const auto r = centered.row(i);
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = a; b < d; ++b) cov(a, b) += r[a] * r[b];
    }
  }
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = a; b < d; ++b) {
      cov(a, b) /= static_cast<double>(m);
      cov(b, a) = cov(a, b);
    }
  }

  Projection out;
  out.coordinates = Matrix(m, 2);
  out.components = Matrix(2, d);
  for (std::size_t a = 0; a < d; ++a) out.total_variance += cov(a, a);
  if (!(out.total_variance > 0.0)) {
    out.degenerate = true;
    return out;
  }

  Rng rng(seed);
  const double scale = out.total_variance;
  for (std::size_t comp = 0; comp < 2 && comp < d; ++comp) {
    std::vector<double> v(d);
    for (double& c : v) c = uniform(rng, -1.0, 1.0);
    double len = norm2(v);
    for (double& c : v) c /= len;
    double lambda = 0.0;
    std::vector<double> w(d);
    for (std::size_t it = 0; it < max_iterations; ++it) {
      for (std::size_t a = 0; a < d; ++a) w[a] = dot(cov.row(a), v);
      lambda = dot(w, v);
      double residual = 0.0;
      for (std::size_t a = 0; a < d; ++a) residual += (w[a] - lambda * v[a]) * (w[a] - lambda * v[a]);
      len = norm2(w);
      if (len <= tol * scale) break;  // remaining variance is zero
      for (std::size_t a = 0; a < d; ++a) v[a] = w[a] / len;
      if (std::sqrt(residual) <= tol * scale) break;
    }
    if (lambda < 0.0) lambda = 0.0;
    const auto big = std::max_element(v.begin(), v.end(),
                                      [](double p, double q) { return std::abs(p) < std::abs(q); });
    if (*big < 0.0) {
      for (double& c : v) c = -c;
    }
    out.variance[comp] = lambda;
    std::copy(v.begin(), v.end(), out.components.row(comp).begin());
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = 0; b < d; ++b) cov(a, b) -= lambda * v[a] * v[b];
    }
  }
  for (std::size_t i = 0; i < m; ++i) {
    out.coordinates(i, 0) = dot(centered.row(i), out.components.row(0));
    out.coordinates(i, 1) = dot(centered.row(i), out.components.row(1));
  }
  return out;
}

// ---------------------------------------------------------------------------
// csv emission

// Shortest representation that round-trips exactly.
inline std::string format_double(double x) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

// Square matrix with a header row and column of author labels.
template <class Cell>
void write_labeled_matrix(std::ostream& out, const std::vector<std::string>& labels, Cell cell) {
  out << "author";
  for (const auto& l : labels) out << ',' << detail::csv_escape(l);
  out << '\n';
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out << detail::csv_escape(labels[i]);
    for (std::size_t j = 0; j < labels.size(); ++j) out << ',' << cell(i, j);
    out << '\n';
  }
}

inline void write_matrix_csv(std::ostream& out, const std::vector<std::string>& labels, const Matrix& m) {
  write_labeled_matrix(out, labels, [&](std::size_t i, std::size_t j) { return format_double(m(i, j)); });
}

inline void write_confusion_csv(std::ostream& out, const ConfusionMatrix& cm) {
  write_labeled_matrix(out, cm.labels, [&](std::size_t i, std::size_t j) { return cm.at(i, j); });
}

inline void write_relative_confusion_csv(std::ostream& out, const RelativeConfusion& rc) {
  write_labeled_matrix(out, rc.labels, [&](std::size_t i, std::size_t j) { return rc.at(i, j); });
}

}  // namespace contrax
