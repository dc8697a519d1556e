#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "contrax/common.hpp"

namespace contrax {

inline constexpr double kNormEpsilon = 1e-12;

// Which pairs enter the contrastive softmax. `literal` sums over every
// same-author j including i in the numerator and over every k including i in
// the denominator. `exclude_self` drops i from both; anchors without another
// same-author sample in the batch then contribute nothing.
enum class SelfPairMode { literal, exclude_self };

struct LossConfig {
  double tau = 0.1;
  double lambda = 1.0;
  double norm_epsilon = kNormEpsilon;
  SelfPairMode self_pairs = SelfPairMode::literal;

  void validate() const {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw Error("tau must be positive");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw Error("lambda must be non-negative");
    if (!(norm_epsilon > 0.0)) throw Error("norm epsilon must be positive");
  }
};

// Cosine similarity matrix of the rows of `embeddings`, with the row norms
// (clamped below at epsilon) kept for the backward pass.
struct SimilarityMatrix {
  Matrix values;
  std::vector<double> norms;         // max(||e_i||, eps)
  std::vector<bool> norm_clamped;    // ||e_i|| < eps

  std::size_t size() const { return values.rows(); }
  double operator()(std::size_t i, std::size_t j) const { return values(i, j); }
};

inline SimilarityMatrix similarity_matrix(const Matrix& embeddings, double eps = kNormEpsilon) {
  const std::size_t n = embeddings.rows();
  SimilarityMatrix s;
  s.values = Matrix(n, n);
  s.norms.resize(n);
  s.norm_clamped.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double len = norm2(embeddings.row(i));
    s.norm_clamped[i] = len < eps;
    s.norms[i] = std::max(len, eps);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double c = dot(embeddings.row(i), embeddings.row(j)) / (s.norms[i] * s.norms[j]);
      s.values(i, j) = c;
      s.values(j, i) = c;
    }
  }
  return s;
}

// Pulls dL/dS back through the cosine similarity onto the embeddings. Both
// occurrences of each embedding (row and column) receive gradient.
inline Matrix similarity_backward(const Matrix& embeddings, const SimilarityMatrix& s,
                                  const Matrix& d_sim) {
  const std::size_t n = embeddings.rows();
  const std::size_t d = embeddings.cols();
  Matrix grad(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    auto gi = grad.row(i);
    const auto ei = embeddings.row(i);
    double radial = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double g = d_sim(i, j) + d_sim(j, i);
      if (g == 0.0) continue;
      const auto ej = embeddings.row(j);
      const double scale = g / (s.norms[i] * s.norms[j]);
      for (std::size_t c = 0; c < d; ++c) gi[c] += scale * ej[c];
      radial += g * s.values(i, j);
    }
    if (!s.norm_clamped[i]) {
      const double scale = radial / (s.norms[i] * s.norms[i]);
      for (std::size_t c = 0; c < d; ++c) gi[c] -= scale * ei[c];
    }
  }
  return grad;
}

struct ContrastiveResult {
  double loss = 0.0;
  Matrix d_sim;  // dL/dS, N x N
};

// L = -sum_i log( sum_{j: a_j = a_i} exp(S_ij / tau) / sum_k exp(S_ik / tau) ),
// a batch sum. Both sums use max-subtracted exponentials.
inline ContrastiveResult contrastive_loss(const SimilarityMatrix& sim, std::span<const int> labels,
                                          double tau, SelfPairMode mode = SelfPairMode::literal) {
  if (!(tau > 0.0)) throw Error("contrastive_loss: tau must be positive");
  const std::size_t n = sim.size();
  if (labels.size() != n) throw Error("contrastive_loss: label count does not match batch size");
  ContrastiveResult out;
  out.d_sim = Matrix(n, n);
  std::vector<double> z(n);
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool skip_self = mode == SelfPairMode::exclude_self;
    bool has_positive = false;
    double zmax = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k) {
      if (skip_self && k == i) continue;
      z[k] = sim(i, k) / tau;
      zmax = std::max(zmax, z[k]);
      if (labels[k] == labels[i]) has_positive = true;
    }
    if (!has_positive) continue;
    double all = 0.0;
    double pos = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (skip_self && k == i) continue;
      w[k] = std::exp(z[k] - zmax);
      all += w[k];
      if (labels[k] == labels[i]) pos += w[k];
    }
    out.loss += std::log(all) - std::log(pos);
    // dL_i/dS_ik = (softmax_all_k - [a_k = a_i] softmax_pos_k) / tau
    for (std::size_t k = 0; k < n; ++k) {
      if (skip_self && k == i) continue;
      double g = w[k] / all;
      if (labels[k] == labels[i]) g -= w[k] / pos;
      out.d_sim(i, k) = g / tau;
    }
  }
  return out;
}

struct CrossEntropyResult {
  double loss = 0.0;
  Matrix d_logits;
};

// Batch-summed cross-entropy of softmax(logits) against integer labels.
inline CrossEntropyResult cross_entropy_loss(const Matrix& logits, std::span<const int> labels) {
  const std::size_t n = logits.rows();
  const std::size_t k = logits.cols();
  if (labels.size() != n) throw Error("cross_entropy_loss: label count does not match batch size");
  CrossEntropyResult out;
  out.d_logits = Matrix(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw Error("cross_entropy_loss: label " + std::to_string(labels[i]) + " out of range");
    }
    const auto row = logits.row(i);
    const double m = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (std::size_t c = 0; c < k; ++c) sum += std::exp(row[c] - m);
    const double log_z = m + std::log(sum);
    const auto y = static_cast<std::size_t>(labels[i]);
    out.loss += log_z - row[y];
    for (std::size_t c = 0; c < k; ++c) out.d_logits(i, c) = std::exp(row[c] - log_z);
    out.d_logits(i, y) -= 1.0;
  }
  return out;
}

struct JointLossResult {
  double loss = 0.0;
  double cross_entropy = 0.0;
  double contrastive = 0.0;
  Matrix d_logits;
  Matrix d_embeddings;  // contrastive part only; the head adds its own term
};

// L = L_CE + lambda * L_CL. With lambda = 0 the contrastive term is still
// evaluated for reporting but contributes neither loss nor gradient.
inline JointLossResult joint_loss(const Matrix& logits, const Matrix& embeddings,
                                  std::span<const int> labels, const LossConfig& config) {
  config.validate();
  if (logits.rows() != embeddings.rows()) throw Error("joint_loss: logits and embeddings disagree on N");
  auto ce = cross_entropy_loss(logits, labels);
  const auto sim = similarity_matrix(embeddings, config.norm_epsilon);
  auto cl = contrastive_loss(sim, labels, config.tau, config.self_pairs);

  JointLossResult out;
  out.cross_entropy = ce.loss;
  out.contrastive = cl.loss;
  out.d_logits = std::move(ce.d_logits);
  if (config.lambda == 0.0) {
    out.loss = ce.loss;
    out.d_embeddings = Matrix(embeddings.rows(), embeddings.cols());
    return out;
  }
  out.loss = ce.loss + config.lambda * cl.loss;
  for (double& g : cl.d_sim.flat()) g *= config.lambda;
  out.d_embeddings = similarity_backward(embeddings, sim, cl.d_sim);
  return out;
}

}  // namespace contrax
