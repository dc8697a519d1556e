#pragma once

// Experiment orchestration: run directories with a config snapshot and an
// artifact inventory, plus one function per CLI subcommand.

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "contrax/analysis.hpp"
#include "contrax/trainer.hpp"

namespace contrax {

inline constexpr std::string_view kCodeVersion = "contrax 0.1.0";

namespace fs = std::filesystem;

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// An output directory owned by one command invocation. Every file written
// through it is listed with its size and FNV-1a hash in run.json.
class RunDirectory {
 public:
  RunDirectory(const fs::path& root, bool overwrite) : root_(root), started_(utc_timestamp()) {
    std::error_code ec;
    if (fs::exists(root_, ec)) {
      if (!fs::is_directory(root_)) throw Error("output path '" + root_.string() + "' is not a directory");
      if (!fs::is_empty(root_)) {
        if (!overwrite) {
          throw Error("output directory '" + root_.string() + "' is not empty (use --overwrite)");
        }
        for (const auto& entry : fs::directory_iterator(root_)) fs::remove_all(entry.path());
      }
    }
    fs::create_directories(root_, ec);
    if (ec) throw Error("cannot create output directory '" + root_.string() + "': " + ec.message());
  }

  const fs::path& root() const { return root_; }

  // Absolute path for a relative artifact name; parent directories are created.
  std::string path(const std::string& rel) const {
    const fs::path p = root_ / rel;
    fs::create_directories(p.parent_path());
    return p.string();
  }

  void write(const std::string& rel, const std::string& content) {
    const std::string p = path(rel);
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("cannot write '" + p + "'");
    out << content;
    out.close();
    if (!out) throw Error("failed writing '" + p + "'");
    add(rel);
  }

  void write_json(const std::string& rel, const nlohmann::ordered_json& j) { write(rel, j.dump(2) + "\n"); }

  // Registers a file that was written directly under `path(rel)`.
  void add(const std::string& rel) {
    const std::string content = read_file(root_ / rel);
    Fnv1a h;
    h.update(content);
    artifacts_[rel] = {content.size(), hex64(h.digest())};
  }

  // Writes config.json and run.json; run.json lists every other artifact.
  void finish(const std::string& command, const nlohmann::ordered_json& config,
              const std::map<std::string, std::string>& corpus_checksums) {
    write_json("config.json", config);
    nlohmann::ordered_json run;
    run["command"] = command;
    run["code_version"] = kCodeVersion;
    run["config"] = config;
    run["corpus_checksums"] = corpus_checksums;
    run["started_at"] = started_;
    run["finished_at"] = utc_timestamp();
    nlohmann::ordered_json inv = nlohmann::ordered_json::array();
    for (const auto& [name, a] : artifacts_) {
      inv.push_back({{"path", name}, {"bytes", a.bytes}, {"fnv1a", a.hash}});
    }
    run["artifacts"] = inv;
    const std::string p = path("run.json");
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("cannot write '" + p + "'");
    out << run.dump(2) << '\n';
  }

 private:
  struct Artifact {
    std::size_t bytes;
    std::string hash;
  };
  fs::path root_;
  std::string started_;
  std::map<std::string, Artifact> artifacts_;
};

// ---------------------------------------------------------------------------
// Experiment configuration

struct ExperimentConfig {
  std::string corpus;
  std::string format = "auto";
  std::string manifest;
  SplitRatios ratios;
  std::uint64_t seed = 0;  // root seed for split, subsample and training
  std::vector<double> fractions{0.25, 0.5, 0.75, 1.0};
  std::vector<std::uint64_t> seeds;  // data-regimes seeds; empty means {seed}
  bool with_baseline = false;
  TrainConfig train;

  CorpusFormat corpus_format() const {
    return format == "auto" ? format_from_path(corpus) : parse_corpus_format(format);
  }

  TrainConfig train_config() const {
    TrainConfig t = train;
    t.seed = seed;
    return t;
  }

  void validate() const {
    for (double f : fractions) {
      if (!(f > 0.0 && f <= 1.0)) throw Error("fractions must lie in (0, 1]");
    }
    if (fractions.empty()) throw Error("fractions list is empty");
    validate_ratios(ratios);
    train_config().validate();
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["corpus"] = corpus;
    j["format"] = format;
    j["manifest"] = manifest;
    j["ratios"] = {ratios.train, ratios.val, ratios.test};
    j["seed"] = seed;
    j["fractions"] = fractions;
    j["seeds"] = seeds;
    j["with_baseline"] = with_baseline;
    j["train"] = train_config().to_json();
    return j;
  }

  // Keys absent from `j` keep their current values.
  void update_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw Error("config: expected a json object");
    try {
      corpus = j.value("corpus", corpus);
      format = j.value("format", format);
      manifest = j.value("manifest", manifest);
      if (j.contains("ratios")) {
        auto r = j.at("ratios").get<std::vector<double>>();
        if (r.size() != 3) throw Error("config: ratios must have three entries");
        ratios = {r[0], r[1], r[2]};
      }
      seed = j.value("seed", seed);
      fractions = j.value("fractions", fractions);
      seeds = j.value("seeds", seeds);
      with_baseline = j.value("with_baseline", with_baseline);
      if (j.contains("train")) train.update_from_json(j.at("train"));
    } catch (const nlohmann::json::exception& e) {
      throw Error(std::string("config: ") + e.what());
    }
  }

  static ExperimentConfig load(const std::string& path) {
    ExperimentConfig c;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open config '" + path + "'");
    try {
      c.update_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(path + ": " + e.what());
    }
    return c;
  }
};

inline Corpus load_experiment_corpus(const ExperimentConfig& cfg) {
  if (cfg.corpus.empty()) throw Error("no corpus given (--corpus)");
  if (!fs::exists(cfg.corpus)) throw Error("corpus '" + cfg.corpus + "' does not exist");
  return load_corpus(cfg.corpus, cfg.corpus_format());
}

struct SplitCorpora {
  Corpus train, val, test;

  const Corpus& part(std::string_view name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    if (name == "test") return test;
    throw Error("unknown split '" + std::string(name) + "' (expected train, val or test)");
  }
};

inline SplitCorpora apply_manifest(const Corpus& corpus, const SplitManifest& m) {
  return {corpus.subset(m.train), corpus.subset(m.val), corpus.subset(m.test)};
}

inline SplitManifest load_experiment_manifest(const ExperimentConfig& cfg) {
  if (cfg.manifest.empty()) throw Error("no split manifest given (--manifest)");
  if (!fs::exists(cfg.manifest)) throw Error("manifest '" + cfg.manifest + "' does not exist");
  return load_manifest(cfg.manifest);
}

// ---------------------------------------------------------------------------
// Commands

struct SynthOptions {
  SyntheticSpec spec;
  CorpusFormat format = CorpusFormat::jsonl;
};

inline std::string corpus_file_name(CorpusFormat f) {
  return f == CorpusFormat::jsonl ? "corpus.jsonl" : "corpus.csv";
}

inline void cmd_synth(const SynthOptions& opts, RunDirectory& out) {
  const Corpus c = generate_synthetic_corpus(opts.spec);
  std::ostringstream ss;
  write_corpus(ss, c, opts.format);
  out.write(corpus_file_name(opts.format), ss.str());
  nlohmann::ordered_json cfg;
  cfg["num_authors"] = opts.spec.num_authors;
  cfg["docs_per_author"] = opts.spec.docs_per_author;
  cfg["doc_length"] = opts.spec.doc_length;
  cfg["vocab_size"] = opts.spec.vocab_size;
  cfg["skew"] = opts.spec.skew;
  cfg["seed"] = opts.spec.seed;
  cfg["format"] = opts.format == CorpusFormat::jsonl ? "jsonl" : "csv";
  out.finish("synth", cfg, {{corpus_file_name(opts.format), hex64(c.checksum())}});
}

inline void cmd_split(const ExperimentConfig& cfg, RunDirectory& out) {
  validate_ratios(cfg.ratios);
  const Corpus c = load_experiment_corpus(cfg);
  const auto m = stratified_split(c, cfg.ratios, cfg.seed);
  out.write_json("split.json", m.to_json());
  nlohmann::ordered_json snap;
  snap["corpus"] = cfg.corpus;
  snap["format"] = cfg.format;
  snap["ratios"] = {cfg.ratios.train, cfg.ratios.val, cfg.ratios.test};
  snap["seed"] = cfg.seed;
  out.finish("split", snap, {{"corpus", hex64(c.checksum())}});
}

inline nlohmann::ordered_json write_training(RunDirectory& out, const std::string& dir, const TrainResult& r,
                                             const SplitCorpora& s, const TrainConfig& tc) {
  const nlohmann::ordered_json extra = {{"train_config", tc.to_json()}};
  Model best = r.best_model;
  Model final = r.final_model;
  save_checkpoint(out.path(dir + "/model"), best, extra);
  save_checkpoint(out.path(dir + "/final"), final, extra);
  for (const char* f : {"/model.json", "/model.bin", "/final.json", "/final.bin"}) out.add(dir + f);
  std::ostringstream hist;
  r.history.write_csv(hist);
  out.write(dir + "/history.csv", hist.str());
  auto summary = r.history.summary();
  summary["lambda"] = tc.cross_entropy_only ? 0.0 : tc.loss.lambda;
  summary["tau"] = tc.loss.tau;
  summary["train_docs"] = s.train.size();
  if (!s.test.empty()) {
    summary["test_accuracy"] = evaluate_accuracy(r.best_model, s.test);
    summary["final_test_accuracy"] = evaluate_accuracy(r.final_model, s.test);
  }
  out.write_json(dir + "/summary.json", summary);
  return summary;
}

inline TrainConfig baseline_config(TrainConfig tc) {
  tc.loss.lambda = 0.0;
  return tc;
}

inline void cmd_train(const ExperimentConfig& cfg, RunDirectory& out) {
  cfg.validate();
  const Corpus c = load_experiment_corpus(cfg);
  const auto s = apply_manifest(c, load_experiment_manifest(cfg));
  const TrainConfig tc = cfg.train_config();
  write_training(out, "contra", train(s.train, s.val, tc), s, tc);
  if (cfg.with_baseline) {
    const TrainConfig bc = baseline_config(tc);
    write_training(out, "baseline", train(s.train, s.val, bc), s, bc);
  }
  out.finish("train", cfg.to_json(), {{"corpus", hex64(c.checksum())}});
}

struct EvalOptions {
  std::string checkpoint;
  std::string compare;  // optional second checkpoint (the baseline)
  std::string split = "test";
};

inline std::string per_class_csv(const MetricsReport& r, const ConfusionMatrix& cm) {
  std::ostringstream ss;
  ss << "author,support,precision,recall,f1,class_accuracy\n";
  for (std::size_t k = 0; k < cm.size(); ++k) {
    ss << detail::csv_escape(cm.labels[k]) << ',' << cm.row_sum(k) << ',' << format_double(r.precision[k]) << ','
       << format_double(r.recall[k]) << ',' << format_double(r.f1[k]) << ','
       << format_double(r.class_accuracy[k]) << '\n';
  }
  return ss.str();
}

struct CheckpointEvaluation {
  Model model;
  EvalResult result;
  ConfusionMatrix cm;
  MetricsReport metrics;
};

inline CheckpointEvaluation evaluate_checkpoint(const std::string& path, const Corpus& corpus) {
  if (corpus.empty()) throw Error("evaluation split is empty");
  Model m = load_checkpoint(path);
  auto r = evaluate(m, corpus);
  auto cm = confusion_matrix(model_labels(m, corpus), r.predictions, m.authors);
  auto metrics = macro_metrics(cm);
  return {std::move(m), std::move(r), std::move(cm), std::move(metrics)};
}

inline void write_evaluation(RunDirectory& out, const std::string& prefix, const CheckpointEvaluation& e,
                             const Corpus& corpus) {
  auto j = e.metrics.to_json(e.cm.labels);
  j["documents"] = corpus.size();
  out.write_json(prefix + "metrics.json", j);
  std::ostringstream cm;
  write_confusion_csv(cm, e.cm);
  out.write(prefix + "confusion.csv", cm.str());
  out.write(prefix + "per_class.csv", per_class_csv(e.metrics, e.cm));
  std::ostringstream pred;
  pred << "id,author,predicted\n";
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    pred << detail::csv_escape(corpus[i].id) << ',' << detail::csv_escape(corpus[i].author) << ','
         << detail::csv_escape(e.cm.labels[static_cast<std::size_t>(e.result.predictions[i])]) << '\n';
  }
  out.write(prefix + "predictions.csv", pred.str());
}

inline void cmd_eval(const ExperimentConfig& cfg, const EvalOptions& opts, RunDirectory& out) {
  const Corpus c = load_experiment_corpus(cfg);
  const auto s = apply_manifest(c, load_experiment_manifest(cfg));
  const Corpus& part = s.part(opts.split);
  const auto a = evaluate_checkpoint(opts.checkpoint, part);
  write_evaluation(out, "", a, part);
  if (!opts.compare.empty()) {
    const auto b = evaluate_checkpoint(opts.compare, part);
    write_evaluation(out, "compare_", b, part);
    std::ostringstream rc;
    write_relative_confusion_csv(rc, relative_confusion(a.cm, b.cm));
    out.write("relative_confusion.csv", rc.str());
  }
  nlohmann::ordered_json snap = cfg.to_json();
  snap["checkpoint"] = opts.checkpoint;
  snap["compare"] = opts.compare;
  snap["split"] = opts.split;
  out.finish("eval", snap, {{"corpus", hex64(c.checksum())}});
}

// ---------------------------------------------------------------------------
// Data regimes

// Spearman rank correlation with average ranks for ties; NaN when either
// variable has zero variance.
inline double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw Error("spearman: need two equal-length samples of size >= 2");
  const auto ranks = [](std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

struct RegimeRun {
  double fraction;
  std::string model;  // "contra" or "baseline"
  std::uint64_t seed;
  std::size_t train_docs;
  double test_accuracy;
};

struct RegimeResult {
  std::vector<RegimeRun> runs;
  double spearman_contra = 0.0;
  double spearman_baseline = 0.0;
};

inline std::vector<std::uint64_t> regime_seeds(const ExperimentConfig& cfg) {
  return cfg.seeds.empty() ? std::vector<std::uint64_t>{cfg.seed} : cfg.seeds;
}

// For every (seed, fraction): a stratified subsample of the train split with
// identical val/test, training the joint model and the lambda=0 baseline.
inline RegimeResult run_data_regimes(const SplitCorpora& s, const ExperimentConfig& cfg) {
  cfg.validate();
  if (s.test.empty()) throw Error("data-regimes needs a non-empty test split");
  RegimeResult out;
  for (std::uint64_t seed : regime_seeds(cfg)) {
    for (std::size_t fi = 0; fi < cfg.fractions.size(); ++fi) {
      const double f = cfg.fractions[fi];
      const Corpus sub = f == 1.0 ? s.train : stratified_subsample(s.train, f, mix_seed(seed, fi + 1));
      TrainConfig tc = cfg.train;
      tc.seed = seed;
      for (const auto& [name, c] : {std::pair{"contra", tc}, std::pair{"baseline", baseline_config(tc)}}) {
        const auto r = train(sub, s.val, c);
        out.runs.push_back({f, name, seed, sub.size(), evaluate_accuracy(r.best_model, s.test)});
      }
    }
  }
  for (const std::string model : {"contra", "baseline"}) {
    std::vector<double> x, y;
    for (const auto& r : out.runs) {
      if (r.model == model) {
        x.push_back(r.fraction);
        y.push_back(r.test_accuracy);
      }
    }
    (model == "contra" ? out.spearman_contra : out.spearman_baseline) =
        x.size() >= 2 ? spearman(x, y) : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

inline nlohmann::ordered_json json_number(double x) {
  return std::isfinite(x) ? nlohmann::ordered_json(x) : nlohmann::ordered_json(nullptr);
}

// One row per (fraction, model): mean and population std over seeds.
inline std::string regimes_table_csv(const RegimeResult& r, const std::vector<double>& fractions) {
  std::ostringstream ss;
  ss << "fraction,model,seeds,train_docs,test_accuracy,test_accuracy_std\n";
  for (double f : fractions) {
    for (const std::string model : {"contra", "baseline"}) {
      std::vector<double> acc;
      std::size_t docs = 0;
      for (const auto& run : r.runs) {
        if (run.fraction == f && run.model == model) {
          acc.push_back(run.test_accuracy);
          docs = run.train_docs;
        }
      }
      const double n = static_cast<double>(acc.size());
      const double mean = std::accumulate(acc.begin(), acc.end(), 0.0) / n;
      double var = 0.0;
      for (double a : acc) var += (a - mean) * (a - mean) / n;
      ss << format_double(f) << ',' << model << ',' << acc.size() << ',' << docs << ',' << format_double(mean)
         << ',' << format_double(std::sqrt(var)) << '\n';
    }
  }
  return ss.str();
}

inline void cmd_data_regimes(const ExperimentConfig& cfg, RunDirectory& out) {
  const Corpus c = load_experiment_corpus(cfg);
  const auto s = apply_manifest(c, load_experiment_manifest(cfg));
  const auto r = run_data_regimes(s, cfg);
  out.write("regimes.csv", regimes_table_csv(r, cfg.fractions));
  std::ostringstream runs;
  runs << "fraction,model,seed,train_docs,test_accuracy\n";
  for (const auto& run : r.runs) {
    runs << format_double(run.fraction) << ',' << run.model << ',' << run.seed << ',' << run.train_docs << ','
         << format_double(run.test_accuracy) << '\n';
  }
  out.write("regimes_runs.csv", runs.str());
  nlohmann::ordered_json summary;
  summary["fractions"] = cfg.fractions;
  summary["seeds"] = regime_seeds(cfg);
  summary["spearman_contra"] = json_number(r.spearman_contra);
  summary["spearman_baseline"] = json_number(r.spearman_baseline);
  out.write_json("summary.json", summary);
  out.finish("data-regimes", cfg.to_json(), {{"corpus", hex64(c.checksum())}});
}

// ---------------------------------------------------------------------------
// Analysis and projection

struct ProjectOptions {
  std::string checkpoint;
  std::string split;  // empty: whole corpus
};

inline std::string projection_csv(const Corpus& c, const Projection& p) {
  std::ostringstream ss;
  ss << "id,author,x,y\n";
  for (std::size_t i = 0; i < c.size(); ++i) {
    ss << detail::csv_escape(c[i].id) << ',' << detail::csv_escape(c[i].author) << ','
       << format_double(p.coordinates(i, 0)) << ',' << format_double(p.coordinates(i, 1)) << '\n';
  }
  return ss.str();
}

inline std::string embeddings_csv(const Corpus& c, const Matrix& e) {
  std::ostringstream ss;
  ss << "id,author";
  for (std::size_t k = 0; k < e.cols(); ++k) ss << ",e" << k;
  ss << '\n';
  for (std::size_t i = 0; i < c.size(); ++i) {
    ss << detail::csv_escape(c[i].id) << ',' << detail::csv_escape(c[i].author);
    for (double x : e.row(i)) ss << ',' << format_double(x);
    ss << '\n';
  }
  return ss.str();
}

inline nlohmann::ordered_json projection_summary(const Matrix& e, std::span<const int> labels,
                                                 const Projection& p) {
  nlohmann::ordered_json j;
  const auto q = cluster_quality(e, labels);
  j["intra"] = q.intra;
  j["inter"] = q.inter;
  j["gap"] = q.gap();
  j["pc_variance"] = {p.variance[0], p.variance[1]};
  j["total_variance"] = p.total_variance;
  j["degenerate"] = p.degenerate;
  return j;
}

inline void warn_degenerate(const Projection& p) {
  if (p.degenerate) std::cerr << "warning: embeddings have zero variance; projection is all zeros\n";
}

inline Corpus select_part(const ExperimentConfig& cfg, const Corpus& c, const std::string& split) {
  if (split.empty()) return c;
  return apply_manifest(c, load_experiment_manifest(cfg)).part(split);
}

inline void write_projection(RunDirectory& out, const std::string& prefix, const Corpus& part, const Model& m,
                             const EvalResult& r, std::uint64_t seed) {
  const auto p = project_embeddings(r.embeddings, seed);
  warn_degenerate(p);
  out.write(prefix + "projection.csv", projection_csv(part, p));
  out.write(prefix + "embeddings.csv", embeddings_csv(part, r.embeddings));
  out.write_json(prefix + "cluster_quality.json", projection_summary(r.embeddings, model_labels(m, part), p));
}

inline void cmd_project(const ExperimentConfig& cfg, const ProjectOptions& opts, RunDirectory& out) {
  const Corpus c = load_experiment_corpus(cfg);
  const Corpus part = select_part(cfg, c, opts.split);
  const Model m = load_checkpoint(opts.checkpoint);
  write_projection(out, "", part, m, evaluate(m, part), cfg.seed);
  nlohmann::ordered_json snap = cfg.to_json();
  snap["checkpoint"] = opts.checkpoint;
  snap["split"] = opts.split;
  out.finish("project", snap, {{"corpus", hex64(c.checksum())}});
}

struct AnalyzeOptions {
  std::vector<std::string> extra_corpora;  // further datasets for the dissimilarity table
  StylometryOptions stylometry;
  std::size_t top_m = 4;
  std::vector<std::string> checkpoints;  // none, or contra then baseline
  std::string split = "test";            // evaluation split when checkpoints are given
};

inline std::string dataset_name(const std::string& path) { return fs::path(path).stem().string(); }

inline std::string dissimilarity_csv(const DissimilarityTable& t, const std::vector<std::vector<double>>& rows) {
  std::ostringstream ss;
  ss << "dataset";
  for (auto f : t.features) ss << ',' << to_string(f);
  ss << '\n';
  for (std::size_t d = 0; d < t.datasets.size(); ++d) {
    ss << detail::csv_escape(t.datasets[d]);
    for (double x : rows[d]) ss << ',' << format_double(x);
    ss << '\n';
  }
  return ss.str();
}

inline void cmd_analyze(const ExperimentConfig& cfg, const AnalyzeOptions& opts, RunDirectory& out) {
  if (opts.checkpoints.size() != 0 && opts.checkpoints.size() != 2) {
    throw Error("analyze takes either no checkpoints or exactly two (contra, baseline)");
  }
  if (opts.top_m == 0) throw Error("--top must be >= 1");
  const Corpus c = load_experiment_corpus(cfg);
  std::map<std::string, std::string> checksums{{"corpus", hex64(c.checksum())}};

  auto sopts = opts.stylometry;
  sopts.lda.seed = cfg.seed;
  const auto profile = stylometric_profile(c, sopts);
  const auto report = distance_report(profile);

  std::vector<std::string> names{dataset_name(cfg.corpus)};
  std::vector<std::vector<double>> raw{report.dissimilarity};
  for (const auto& path : opts.extra_corpora) {
    if (!fs::exists(path)) throw Error("corpus '" + path + "' does not exist");
    const Corpus extra = load_corpus(path, format_from_path(path));
    checksums[path] = hex64(extra.checksum());
    const auto p = stylometric_profile(extra, sopts);
    std::vector<double> row;
    for (auto f : p.features) row.push_back(dataset_dissimilarity(p, f));
    names.push_back(dataset_name(path));
    raw.push_back(std::move(row));
  }
  const auto table = scaled_dissimilarity_table(names, raw, report.features);
  out.write("dissimilarity.csv", dissimilarity_csv(table, table.raw));
  out.write("dissimilarity_scaled.csv", dissimilarity_csv(table, table.scaled));

  std::ostringstream pd;
  write_matrix_csv(pd, report.authors, report.pd);
  out.write("pd.csv", pd.str());
  for (std::size_t f = 0; f < report.features.size(); ++f) {
    std::ostringstream d;
    write_matrix_csv(d, report.authors, report.distances[f]);
    out.write("distance_" + std::string(to_string(report.features[f])) + ".csv", d.str());
  }
  const auto top = most_similar_pairs(report.pd, opts.top_m);
  nlohmann::ordered_json summary;
  summary["authors"] = report.authors;
  summary["documents"] = c.size();
  for (std::size_t f = 0; f < report.features.size(); ++f) {
    const std::string name(to_string(report.features[f]));
    summary["dissimilarity"][name] = report.dissimilarity[f];
    summary["normalizer"][name] = report.normalizers[f];
  }

  std::optional<CheckpointEvaluation> contra, baseline;
  Corpus part;
  if (!opts.checkpoints.empty()) {
    part = select_part(cfg, c, opts.split);
    contra = evaluate_checkpoint(opts.checkpoints[0], part);
    baseline = evaluate_checkpoint(opts.checkpoints[1], part);
    if (contra->model.authors != report.authors) throw Error("checkpoint authors differ from the corpus authors");
  }

  std::ostringstream tp;
  tp << "rank,author_a,author_b,pd";
  if (contra) tp << ",contra_pair_accuracy,baseline_pair_accuracy";
  tp << '\n';
  nlohmann::ordered_json top_json = nlohmann::ordered_json::array();
  for (std::size_t r = 0; r < top.size(); ++r) {
    const auto& a = report.authors[top[r].a];
    const auto& b = report.authors[top[r].b];
    tp << r + 1 << ',' << detail::csv_escape(a) << ',' << detail::csv_escape(b) << ','
       << format_double(top[r].distance);
    nlohmann::ordered_json pj{{"author_a", a}, {"author_b", b}, {"pd", top[r].distance}};
    if (contra) {
      const double ca = pair_cumulative_accuracy(contra->cm, top[r].a, top[r].b);
      const double ba = pair_cumulative_accuracy(baseline->cm, top[r].a, top[r].b);
      tp << ',' << format_double(ca) << ',' << format_double(ba);
      pj["contra_pair_accuracy"] = ca;
      pj["baseline_pair_accuracy"] = ba;
    }
    tp << '\n';
    top_json.push_back(pj);
  }
  out.write("top_pairs.csv", tp.str());
  summary["top_pairs"] = top_json;

  if (contra) {
    std::ostringstream rc;
    write_relative_confusion_csv(rc, relative_confusion(contra->cm, baseline->cm));
    out.write("relative_confusion.csv", rc.str());
    write_evaluation(out, "contra/", *contra, part);
    write_evaluation(out, "baseline/", *baseline, part);
    write_projection(out, "contra/", part, contra->model, contra->result, cfg.seed);
    write_projection(out, "baseline/", part, baseline->model, baseline->result, cfg.seed);
    summary["accuracy"] = {{"contra", contra->metrics.accuracy}, {"baseline", baseline->metrics.accuracy}};
  }
  out.write_json("summary.json", summary);

  nlohmann::ordered_json snap = cfg.to_json();
  snap["extra_corpora"] = opts.extra_corpora;
  snap["k_per_order"] = sopts.k_per_order;
  snap["lda"] = {{"num_topics", sopts.lda.num_topics},
                 {"iterations", sopts.lda.iterations},
                 {"alpha", sopts.lda.effective_alpha()},
                 {"beta", sopts.lda.beta},
                 {"seed", sopts.lda.seed},
                 {"infer_iterations", sopts.infer_iterations}};
  nlohmann::ordered_json feats = nlohmann::ordered_json::array();
  for (auto f : sopts.features) feats.push_back(std::string(to_string(f)));
  snap["features"] = feats;
  snap["top_m"] = opts.top_m;
  snap["checkpoints"] = opts.checkpoints;
  snap["split"] = opts.split;
  out.finish("analyze", snap, checksums);
}

}  // namespace contrax
