#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "contrax/analysis.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace contrax {
namespace {

using testing::random_matrix;

ConfusionMatrix cm_from(std::vector<std::vector<std::int64_t>> rows) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < rows.size(); ++i) names.push_back("A" + std::to_string(i));
  ConfusionMatrix cm(names);
  for (std::size_t t = 0; t < rows.size(); ++t) {
    for (std::size_t p = 0; p < rows.size(); ++p) cm.at(t, p) = rows[t][p];
  }
  return cm;
}

std::vector<double> random_simplex(Rng& rng, std::size_t n, bool sparse) {
  std::vector<double> p(n);
  double sum = 0.0;
  for (auto& x : p) {
    x = sparse && uniform01(rng) < 0.3 ? 0.0 : -std::log(1.0 - uniform01(rng));
    sum += x;
  }
  if (sum == 0.0) {
    p[0] = 1.0;
    return p;
  }
  for (auto& x : p) x /= sum;
  return p;
}

TEST(Accuracy, Examples) {
  const std::vector<int> y{0, 1, 2, 1, 0};
  EXPECT_EQ(accuracy(y, y), 1.0);
  EXPECT_EQ(accuracy(std::vector<int>{1, 0, 0, 0, 1}, y), 0.0);
  EXPECT_DOUBLE_EQ(accuracy(std::vector<int>{0, 1, 2, 0, 1}, y), 0.6);
  EXPECT_THROW(accuracy(std::vector<int>{0}, y), Error);
  EXPECT_THROW(accuracy(std::vector<int>{}, std::vector<int>{}), Error);
}

TEST(Confusion, CountsAndTotals) {
  const std::vector<int> y{0, 0, 1, 2, 2, 2};
  const std::vector<int> p{0, 1, 1, 2, 0, 2};
  const auto cm = confusion_matrix(y, p, {"a", "b", "c"});
  EXPECT_EQ(cm.total(), 6);
  EXPECT_EQ(cm.trace(), 4);
  EXPECT_EQ(cm.at(2, 0), 1);
  EXPECT_EQ(cm.row_sum(2), 3);
  EXPECT_EQ(cm.col_sum(0), 2);
  EXPECT_DOUBLE_EQ(macro_metrics(cm).accuracy, accuracy(p, y));
  EXPECT_THROW(confusion_matrix(y, std::vector<int>{0, 0, 1, 2, 2, 3}, {"a", "b", "c"}), Error);
}

TEST(MacroMetrics, PerfectDiagonal) {
  const auto r = macro_metrics(cm_from({{3, 0, 0}, {0, 4, 0}, {0, 0, 5}}));
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.macro_precision, 1.0);
  EXPECT_EQ(r.macro_recall, 1.0);
  EXPECT_EQ(r.macro_f1, 1.0);
  EXPECT_EQ(r.class_accuracy_variance, 0.0);
}

TEST(MacroMetrics, TwoClassVarianceIsExact) {
  const auto r = macro_metrics(cm_from({{4, 0}, {2, 2}}));
  EXPECT_EQ(r.class_accuracy, (std::vector<double>{1.0, 0.5}));
  EXPECT_EQ(r.class_accuracy_variance, 0.0625);
}

TEST(MacroMetrics, HandComputedThreeByThree) {
  const auto r = macro_metrics(cm_from({{5, 1, 0}, {2, 3, 1}, {0, 2, 6}}));
  EXPECT_NEAR(r.macro_precision, 0.6904761904761906, 1e-15);
  EXPECT_NEAR(r.macro_recall, 0.6944444444444445, 1e-15);
  EXPECT_NEAR(r.macro_f1, 0.6897435897435896, 1e-15);
  EXPECT_NEAR(r.class_accuracy_variance, 0.02006172839506173, 1e-15);
  EXPECT_DOUBLE_EQ(r.accuracy, 0.7);
  const auto j = r.to_json({"x", "y", "z"});
  EXPECT_EQ(j["class_accuracy"].size(), 3u);
}

TEST(MacroMetrics, EmptyRowsAndColumns) {
  const auto r = macro_metrics(cm_from({{2, 0}, {0, 0}}));
  EXPECT_EQ(r.recall[1], 0.0);
  EXPECT_EQ(r.precision[1], 0.0);
  EXPECT_EQ(r.f1[1], 0.0);
  EXPECT_THROW(macro_metrics(cm_from({{0, 0}, {0, 0}})), Error);
}

TEST(RelativeConfusion, RowsSumToZeroExactly) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + uniform_index(rng, 6);
    std::vector<std::vector<std::int64_t>> a(k, std::vector<std::int64_t>(k));
    std::vector<std::vector<std::int64_t>> b(k, std::vector<std::int64_t>(k, 0));
    for (std::size_t t = 0; t < k; ++t) {
      std::int64_t n = 0;
      for (auto& x : a[t]) n += x = static_cast<std::int64_t>(uniform_index(rng, 20));
      for (std::int64_t i = 0; i < n; ++i) ++b[t][uniform_index(rng, k)];
    }
    const auto rc = relative_confusion(cm_from(a), cm_from(b));
    for (std::size_t t = 0; t < k; ++t) {
      ASSERT_EQ(rc.row_sum(t), 0);
      for (std::size_t p = 0; p < k; ++p) {
        if (rc.at(t, p) < 0) {
          std::int64_t positive = 0;
          for (std::size_t q = 0; q < k; ++q) positive += std::max<std::int64_t>(rc.at(t, q), 0);
          ASSERT_GE(positive, -rc.at(t, p));
        }
      }
    }
  }
}

TEST(RelativeConfusion, IdenticalInputsGiveZeroAndMismatchesThrow) {
  const auto cm = cm_from({{5, 1}, {2, 3}});
  const auto rc = relative_confusion(cm, cm);
  for (auto v : rc.values) EXPECT_EQ(v, 0);
  EXPECT_THROW(relative_confusion(cm, cm_from({{5, 1}, {2, 4}})), Error);
  EXPECT_THROW(relative_confusion(cm, cm_from({{6, 0, 0}, {2, 3, 0}, {0, 0, 0}})), Error);
}

TEST(PairAccuracy, CumulativeOverTwoAuthors) {
  const auto cm = cm_from({{5, 1, 0}, {2, 3, 1}, {0, 2, 6}});
  EXPECT_DOUBLE_EQ(pair_cumulative_accuracy(cm, 0, 1), 8.0 / 12.0);
  EXPECT_DOUBLE_EQ(pair_cumulative_accuracy(cm, 1, 2), 9.0 / 14.0);
}

// ---------------------------------------------------------------------------

TEST(Jsd, WorkedExamples) {
  const std::vector<double> p{0.5, 0.5};
  EXPECT_LT(jsd(p, p), 1e-12);
  EXPECT_NEAR(jsd(std::vector<double>{1, 0}, std::vector<double>{0, 1}), std::numbers::ln2, 1e-15);
  EXPECT_NEAR(jsd(p, std::vector<double>{1, 0}), 0.21576155433883565, 1e-12);
  EXPECT_NEAR(jsd(p, std::vector<double>{1, 0}), 0.215761, 1e-6);
}

TEST(Jsd, PropertiesOverRandomPairs) {
  Rng rng(99);
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t n = 2 + uniform_index(rng, 20);
    const auto p = random_simplex(rng, n, trial % 2 == 0);
    const auto q = random_simplex(rng, n, trial % 3 == 0);
    const double a = jsd(p, q);
    ASSERT_EQ(a, jsd(q, p));
    ASSERT_GE(a, 0.0);
    ASSERT_LE(a, std::numbers::ln2 + 1e-12);
    ASSERT_LT(jsd(p, p), 1e-12);
  }
}

TEST(Jsd, RejectsInvalidInput) {
  EXPECT_THROW(jsd(std::vector<double>{0.5, 0.6}, std::vector<double>{0.5, 0.5}), Error);
  EXPECT_THROW(jsd(std::vector<double>{1.5, -0.5}, std::vector<double>{0.5, 0.5}), Error);
  EXPECT_THROW(jsd(std::vector<double>{1.0}, std::vector<double>{0.5, 0.5}), Error);
}

TEST(FeatureDistance, Branches) {
  const AuthorFeature a{"a", FeatureType::content, {FeatureType::content, {1, 0, 2}}};
  const AuthorFeature b{"b", FeatureType::content, {FeatureType::content, {0, 3, 0}}};
  EXPECT_NEAR(feature_distance(a, a), 0.0, 1e-15);
  EXPECT_NEAR(feature_distance(a, b), 1.0, 1e-15);
  const AuthorFeature t{"t", FeatureType::topic, {FeatureType::topic, {0.2, 0.8}}};
  EXPECT_EQ(feature_distance(t, t), 0.0);
  const AuthorFeature u{"u", FeatureType::topic, {FeatureType::topic, {1.0, 0.0}}};
  EXPECT_NEAR(feature_distance(t, u), jsd(t.vector.values, u.vector.values), 0.0);
  EXPECT_THROW(feature_distance(a, t), Error);
  EXPECT_THROW(feature_distance(FeatureType::style, std::vector<double>{1}, std::vector<double>{1, 2}), Error);
  EXPECT_EQ(feature_distance(FeatureType::style, std::vector<double>{0, 0}, std::vector<double>{1, 0}), 1.0);
}

// ---------------------------------------------------------------------------

StylometricProfile manual_profile(std::vector<std::vector<double>> content) {
  StylometricProfile p;
  p.features = {FeatureType::content};
  for (std::size_t i = 0; i < content.size(); ++i) {
    p.authors.push_back("A" + std::to_string(i));
    p.representations[FeatureType::content].push_back({FeatureType::content, content[i]});
  }
  return p;
}

TEST(DatasetDissimilarity, SmallExamples) {
  EXPECT_EQ(dataset_dissimilarity(manual_profile({{1, 2}, {1, 2}}), FeatureType::content), 0.0);
  EXPECT_NEAR(dataset_dissimilarity(manual_profile({{1, 0}, {0, 1}}), FeatureType::content), 0.5, 1e-15);
  EXPECT_NEAR(dataset_dissimilarity(manual_profile({{1, 0}, {0, 1}}), FeatureType::content,
                                    PairMode::exclude_diagonal),
              1.0, 1e-15);
  EXPECT_THROW(dataset_dissimilarity(manual_profile({{1, 0}}), FeatureType::content), Error);
  EXPECT_THROW(dataset_dissimilarity(manual_profile({{1, 0}, {0, 1}}), FeatureType::topic), Error);
}

TEST(DatasetDissimilarity, MatchesBruteForceOnThreeAuthors) {
  const auto c = generate_synthetic_corpus({3, 10, 40, 120, 0.5, 17});
  StylometryOptions opts;
  opts.lda.num_topics = 4;
  opts.lda.iterations = 40;
  opts.infer_iterations = 30;
  const auto fx = fit_extractors(c, opts);
  const auto profile = stylometric_profile(c, fx, opts.features);
  const auto report = distance_report(profile);
  const auto bf = testing::brute_force_distances(c, fx, opts.features);
  for (std::size_t f = 0; f < opts.features.size(); ++f) {
    EXPECT_NEAR(dataset_dissimilarity(profile, opts.features[f]), bf.dissimilarity[f], 1e-12);
    EXPECT_NEAR(report.dissimilarity[f], bf.dissimilarity[f], 1e-12);
    EXPECT_NEAR(report.normalizers[f], bf.normalizers[f], 1e-12);
  }
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_NEAR(report.pd(i, j), bf.pd[i][j], 1e-12) << i << "," << j;
      EXPECT_NEAR(pairwise_author_distance(profile, i, j), bf.pd[i][j], 1e-12);
    }
  }
}

TEST(PairwiseDistance, MatrixProperties) {
  const auto c = generate_synthetic_corpus({5, 6, 30, 100, 0.5, 3});
  StylometryOptions opts;
  opts.lda.num_topics = 3;
  opts.lda.iterations = 20;
  opts.infer_iterations = 20;
  const auto profile = stylometric_profile(c, opts);
  const auto r = distance_report(profile);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(r.pd(i, i), 0.0);
    for (std::size_t j = 0; j < 5; ++j) {
      EXPECT_NEAR(r.pd(i, j), r.pd(j, i), 1e-12);
      EXPECT_GE(r.pd(i, j), 0.0);
      EXPECT_LE(r.pd(i, j), 1.0 + 1e-12);
    }
  }
  for (std::size_t f = 0; f < r.features.size(); ++f) {
    double mx = 0.0;
    for (double x : r.distances[f].flat()) mx = std::max(mx, x / r.normalizers[f]);
    EXPECT_DOUBLE_EQ(mx, 1.0);
  }
  EXPECT_EQ(pairwise_author_distance(profile, "author-1", "author-3"), r.pd(1, 3));
  EXPECT_THROW(pairwise_author_distance(profile, "author-1", "nobody"), Error);
  EXPECT_THROW(pairwise_author_distance(profile, 0, 9), Error);
}

TEST(PairwiseDistance, ZeroNormalizerContributesNothing) {
  StylometricProfile p;
  p.authors = {"a", "b"};
  p.features = {FeatureType::content, FeatureType::style};
  p.representations[FeatureType::content] = {{FeatureType::content, {1, 0}}, {FeatureType::content, {0, 1}}};
  p.representations[FeatureType::style] = {{FeatureType::style, {1, 1}}, {FeatureType::style, {1, 1}}};
  const auto r = distance_report(p);
  EXPECT_EQ(r.normalizers[1], 0.0);
  EXPECT_DOUBLE_EQ(r.pd(0, 1), 0.5);
}

TEST(MostSimilarPairs, OrderedAscendingWithIndexTies) {
  Matrix pd(4, 4);
  const double v[4][4] = {{0, .5, .2, .9}, {.5, 0, .2, .1}, {.2, .2, 0, .7}, {.9, .1, .7, 0}};
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) pd(i, j) = v[i][j];
  }
  const auto top = most_similar_pairs(pd, 4);
  ASSERT_EQ(top.size(), 4u);
  EXPECT_EQ(std::make_pair(top[0].a, top[0].b), std::make_pair(std::size_t{1}, std::size_t{3}));
  EXPECT_EQ(std::make_pair(top[1].a, top[1].b), std::make_pair(std::size_t{0}, std::size_t{2}));
  EXPECT_EQ(std::make_pair(top[2].a, top[2].b), std::make_pair(std::size_t{1}, std::size_t{2}));
  EXPECT_EQ(most_similar_pairs(pd, 100).size(), 6u);
}

TEST(ScaledTable, SingleAndDominatedCorpora) {
  const std::vector<FeatureType> f{FeatureType::content, FeatureType::style};
  const auto one = scaled_dissimilarity_table({"d"}, {{0.3, 0.7}}, f);
  EXPECT_EQ(one.scaled[0], (std::vector<double>{1.0, 1.0}));
  const auto two = scaled_dissimilarity_table({"big", "small"}, {{0.4, 0.8}, {0.1, 0.2}}, f);
  EXPECT_EQ(two.scaled[0], (std::vector<double>{1.0, 1.0}));
  for (double x : two.scaled[1]) EXPECT_LT(x, 1.0);
  const auto three = scaled_dissimilarity_table({"a", "b", "c"}, {{0.5, 0.1}, {0.2, 0.3}, {0.4, 0.6}}, f);
  for (std::size_t col = 0; col < 2; ++col) {
    std::size_t raw_min = 0, scaled_min = 0;
    for (std::size_t r = 1; r < 3; ++r) {
      if (three.raw[r][col] < three.raw[raw_min][col]) raw_min = r;
      if (three.scaled[r][col] < three.scaled[scaled_min][col]) scaled_min = r;
    }
    EXPECT_EQ(raw_min, scaled_min);
  }
  EXPECT_THROW(scaled_dissimilarity_table({"a"}, {{0.1}}, f), Error);
}

// ---------------------------------------------------------------------------

TEST(ClusterQuality, Examples) {
  Matrix same(4, 3, 1.0);
  const std::vector<int> labels{0, 0, 1, 1};
  const auto q = cluster_quality(same, labels);
  EXPECT_NEAR(q.intra, 1.0, 1e-15);
  EXPECT_NEAR(q.inter, 1.0, 1e-15);

  Matrix rays(4, 2);
  rays(0, 0) = 1;
  rays(1, 0) = 3;
  rays(2, 1) = 2;
  rays(3, 1) = 0.5;
  const auto r = cluster_quality(rays, labels);
  EXPECT_NEAR(r.intra, 1.0, 1e-15);
  EXPECT_NEAR(r.inter, 0.0, 1e-15);
  EXPECT_THROW(cluster_quality(rays, std::vector<int>{0, 1, 2, 3}), Error);
  EXPECT_THROW(cluster_quality(rays, std::vector<int>{0, 0, 0, 0}), Error);
}

// Cyclic Jacobi eigenvalues of a symmetric matrix, descending.
std::vector<double> jacobi_eigenvalues(Matrix a) {
  const std::size_t n = a.rows();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    }
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = a(i, i);
  std::sort(ev.rbegin(), ev.rend());
  return ev;
}

Matrix covariance(const Matrix& x) {
  const std::size_t m = x.rows(), d = x.cols();
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t c = 0; c < d; ++c) mean[c] += x(i, c) / static_cast<double>(m);
  }
  Matrix cov(d, d);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = 0; b < d; ++b) cov(a, b) += (x(i, a) - mean[a]) * (x(i, b) - mean[b]) / static_cast<double>(m);
    }
  }
  return cov;
}

TEST(Projection, MatchesEigendecompositionOracle) {
  Rng rng(8);
  // 10-dim data with a decaying spectrum.
  Matrix x(200, 10);
  for (std::size_t i = 0; i < 200; ++i) {
    for (std::size_t c = 0; c < 10; ++c) x(i, c) = uniform(rng, -1, 1) * (10.0 - static_cast<double>(c));
  }
  const Matrix mix = random_matrix(10, 10, rng);
  Matrix y(200, 10);
  for (std::size_t i = 0; i < 200; ++i) {
    for (std::size_t c = 0; c < 10; ++c) y(i, c) = dot(x.row(i), mix.row(c));
  }
  const auto cov = covariance(y);
  const auto ev = jacobi_eigenvalues(cov);
  const auto p = project_embeddings(y, 3);
  EXPECT_NEAR(p.variance[0], ev[0], 1e-7 * ev[0]);
  EXPECT_NEAR(p.variance[1], ev[1], 1e-7 * ev[0]);
  double trace = 0.0, best_axis = 0.0;
  for (std::size_t c = 0; c < 10; ++c) {
    trace += cov(c, c);
    best_axis = std::max(best_axis, cov(c, c));
  }
  EXPECT_NEAR(p.total_variance, trace, 1e-9 * trace);
  EXPECT_GE(p.variance[0] + p.variance[1], best_axis);

  // Coordinate variances equal the eigenvalues; components are orthonormal.
  for (int k = 0; k < 2; ++k) {
    double var = 0.0;
    for (std::size_t i = 0; i < 200; ++i) var += p.coordinates(i, k) * p.coordinates(i, k) / 200.0;
    EXPECT_NEAR(var, p.variance[k], 1e-7 * ev[0]);
    EXPECT_NEAR(norm2(p.components.row(k)), 1.0, 1e-12);
  }
  EXPECT_NEAR(dot(p.components.row(0), p.components.row(1)), 0.0, 1e-6);
}

TEST(Projection, PlanarPointsKeepTheirDistances) {
  Rng rng(2);
  const Matrix basis = random_matrix(2, 8, rng);
  Matrix x(30, 8);
  for (std::size_t i = 0; i < 30; ++i) {
    const double a = uniform(rng, -3, 3), b = uniform(rng, -3, 3);
    for (std::size_t c = 0; c < 8; ++c) x(i, c) = a * basis(0, c) + b * basis(1, c) + 5.0;
  }
  const auto p = project_embeddings(x, 1);
  for (std::size_t i = 0; i < 30; ++i) {
    for (std::size_t j = 0; j < 30; ++j) {
      double dx = 0.0;
      for (std::size_t c = 0; c < 8; ++c) dx += (x(i, c) - x(j, c)) * (x(i, c) - x(j, c));
      const double dp = std::hypot(p.coordinates(i, 0) - p.coordinates(j, 0), p.coordinates(i, 1) - p.coordinates(j, 1));
      ASSERT_NEAR(std::sqrt(dx), dp, 1e-6);
    }
  }
}

TEST(Projection, DuplicatesShiftsAndDegenerateInput) {
  Rng rng(6);
  const Matrix x = random_matrix(10, 5, rng);
  Matrix doubled(20, 5);
  for (std::size_t i = 0; i < 20; ++i) std::copy(x.row(i % 10).begin(), x.row(i % 10).end(), doubled.row(i).begin());
  const auto p = project_embeddings(doubled);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(p.coordinates(i, 0), p.coordinates(i + 10, 0));
    EXPECT_EQ(p.coordinates(i, 1), p.coordinates(i + 10, 1));
  }

  Matrix shifted = x;
  for (double& v : shifted.flat()) v += 7.5;
  const auto a = project_embeddings(x);
  const auto b = project_embeddings(shifted);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_NEAR(std::abs(a.coordinates(i, 0)), std::abs(b.coordinates(i, 0)), 1e-6);
    EXPECT_NEAR(std::abs(a.coordinates(i, 1)), std::abs(b.coordinates(i, 1)), 1e-6);
  }

  const auto flat = project_embeddings(Matrix(4, 3, 2.0));
  EXPECT_TRUE(flat.degenerate);
  for (double v : flat.coordinates.flat()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(project_embeddings(Matrix(1, 3)), Error);
}

// ---------------------------------------------------------------------------

TEST(CsvOutput, LabeledMatrices) {
  std::ostringstream out;
  write_confusion_csv(out, cm_from({{1, 2}, {3, 4}}));
  EXPECT_EQ(out.str(), "author,A0,A1\nA0,1,2\nA1,3,4\n");
  std::ostringstream m;
  Matrix x(1, 1, 0.1);
  write_matrix_csv(m, {"a,b"}, x);
  EXPECT_EQ(m.str(), "author,\"a,b\"\n\"a,b\",0.1\n");
}

}  // namespace
}  // namespace contrax
