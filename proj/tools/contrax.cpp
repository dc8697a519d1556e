// contrax command-line interface.

#include <CLI11.hpp>

#include <functional>
#include <iostream>
#include <memory>

#include "contrax/experiment.hpp"

namespace {

using namespace contrax;

// Flags are applied after the optional --config file, and only when given,
// so explicit flags override config values and config values override defaults.
class Bindings {
 public:
  template <typename T, typename Apply>
  CLI::Option* add(CLI::App* app, const std::string& name, const std::string& help, Apply apply) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app->add_option(name, *value, help);
    actions_.push_back([opt, value, apply] {
      if (opt->count() > 0) apply(*value);
    });
    return opt;
  }

  CLI::Option* flag(CLI::App* app, const std::string& name, const std::string& help, std::function<void()> apply) {
    CLI::Option* opt = app->add_flag(name, help);
    actions_.push_back([opt, apply] {
      if (opt->count() > 0) apply();
    });
    return opt;
  }

  void apply() const {
    for (const auto& a : actions_) a();
  }

 private:
  std::vector<std::function<void()>> actions_;
};

struct Globals {
  std::string config;
  std::string out;
  bool overwrite = false;
};

struct Command {
  CLI::App* app;
  Bindings bindings;
  Globals globals;
};

void add_globals(Command& c, ExperimentConfig& cfg, bool corpus) {
  c.app->add_option("--config", c.globals.config, "json experiment config");
  c.app->add_option("--out", c.globals.out, "output directory")->required();
  c.app->add_flag("--overwrite", c.globals.overwrite, "replace the contents of a non-empty output directory");
  c.bindings.add<std::uint64_t>(c.app, "--seed", "root seed", [&cfg](std::uint64_t v) { cfg.seed = v; });
  if (corpus) {
    c.bindings.add<std::string>(c.app, "--corpus", "corpus file (.jsonl or .csv)",
                                [&cfg](const std::string& v) { cfg.corpus = v; });
    c.bindings.add<std::string>(c.app, "--format", "corpus format: auto, jsonl or csv",
                                [&cfg](const std::string& v) { cfg.format = v; });
  }
}

void add_manifest(Command& c, ExperimentConfig& cfg) {
  c.bindings.add<std::string>(c.app, "--manifest", "split manifest written by 'split'",
                              [&cfg](const std::string& v) { cfg.manifest = v; });
}

void add_training(Command& c, ExperimentConfig& cfg) {
  auto& b = c.bindings;
  auto* app = c.app;
  TrainConfig& t = cfg.train;
  b.add<std::size_t>(app, "--epochs", "training epochs", [&t](std::size_t v) { t.epochs = v; });
  b.add<std::size_t>(app, "--batch-size", "documents per batch", [&t](std::size_t v) { t.batch_size = v; });
  b.add<double>(app, "--lr", "peak learning rate", [&t](double v) { t.lr0 = v; });
  b.add<double>(app, "--lr-min", "final learning rate", [&t](double v) { t.lr_min = v; });
  b.add<double>(app, "--weight-decay", "AdamW weight decay", [&t](double v) { t.adam.weight_decay = v; });
  b.add<double>(app, "--tau", "contrastive temperature", [&t](double v) { t.loss.tau = v; });
  b.add<double>(app, "--lambda", "contrastive weight", [&t](double v) { t.loss.lambda = v; });
  b.add<std::string>(app, "--self-pairs", "literal or exclude_self", [&t](const std::string& v) {
    t.update_from_json({{"self_pairs", v}});
  });
  b.add<std::string>(app, "--sampler", "shuffle or class_balanced",
                     [&t](const std::string& v) { t.sampler = parse_sampler(v); });
  b.add<std::size_t>(app, "--authors-per-batch", "class_balanced P", [&t](std::size_t v) { t.authors_per_batch = v; });
  b.add<std::size_t>(app, "--docs-per-author", "class_balanced Q", [&t](std::size_t v) { t.docs_per_author = v; });
  b.flag(app, "--ce-only", "train with cross-entropy only", [&t] { t.cross_entropy_only = true; });
  b.add<std::size_t>(app, "--vocab-cap", "token vocabulary size", [&t](std::size_t v) { t.model.vocab_cap = v; });
  b.add<std::size_t>(app, "--max-len", "tokens per document", [&t](std::size_t v) { t.model.max_len = v; });
  b.add<std::size_t>(app, "--token-dim", "token embedding width", [&t](std::size_t v) { t.model.token_dim = v; });
  b.add<std::size_t>(app, "--hidden-dim", "encoder hidden width", [&t](std::size_t v) { t.model.hidden_dim = v; });
  b.add<std::size_t>(app, "--embed-dim", "document embedding width", [&t](std::size_t v) { t.model.embed_dim = v; });
  b.add<std::size_t>(app, "--head-hidden-dim", "classifier hidden width",
                     [&t](std::size_t v) { t.model.head_hidden_dim = v; });
  b.add<double>(app, "--dropout", "classifier dropout", [&t](double v) { t.model.dropout = v; });
}

ExperimentConfig resolve(const Command& c, ExperimentConfig& cfg) {
  if (!c.globals.config.empty()) cfg = ExperimentConfig::load(c.globals.config);
  c.bindings.apply();
  return cfg;
}

int run(int argc, char** argv) {
  CLI::App app{"contrax: contrastive authorship attribution toolkit"};
  app.require_subcommand(1);

  // Each command resolves into its own config; flag closures write here.
  ExperimentConfig cfg;
  std::vector<std::unique_ptr<Command>> commands;
  const auto command = [&](const std::string& name, const std::string& help) -> Command& {
    commands.push_back(std::make_unique<Command>(Command{app.add_subcommand(name, help), {}, {}}));
    return *commands.back();
  };

  // synth
  SynthOptions synth;
  std::string synth_format = "jsonl";
  auto& c_synth = command("synth", "generate a synthetic corpus");
  add_globals(c_synth, cfg, false);
  c_synth.app->add_option("--authors", synth.spec.num_authors, "number of authors");
  c_synth.app->add_option("--docs-per-author", synth.spec.docs_per_author, "documents per author");
  c_synth.app->add_option("--doc-length", synth.spec.doc_length, "tokens per document");
  c_synth.app->add_option("--vocab", synth.spec.vocab_size, "shared vocabulary size");
  c_synth.app->add_option("--skew", synth.spec.skew, "author-specific vocabulary weight in [0,1]");
  c_synth.app->add_option("--format", synth_format, "jsonl or csv");

  // split
  auto& c_split = command("split", "stratified train/val/test split");
  add_globals(c_split, cfg, true);
  c_split.bindings.add<std::vector<double>>(c_split.app, "--ratios", "train val test ratios",
                                            [&cfg](const std::vector<double>& v) {
                                              if (v.size() != 3) throw Error("--ratios takes three values");
                                              cfg.ratios = {v[0], v[1], v[2]};
                                            })
      ->expected(3);

  // train
  auto& c_train = command("train", "train the joint model (and optionally the lambda=0 baseline)");
  add_globals(c_train, cfg, true);
  add_manifest(c_train, cfg);
  add_training(c_train, cfg);
  c_train.bindings.flag(c_train.app, "--with-baseline", "also train a lambda=0 baseline",
                        [&cfg] { cfg.with_baseline = true; });

  // eval
  EvalOptions eval;
  auto& c_eval = command("eval", "evaluate a checkpoint on a split");
  add_globals(c_eval, cfg, true);
  add_manifest(c_eval, cfg);
  c_eval.app->add_option("--checkpoint", eval.checkpoint, "checkpoint (.json or .bin)")->required();
  c_eval.app->add_option("--compare", eval.compare, "second checkpoint; emits relative confusion");
  c_eval.app->add_option("--split", eval.split, "train, val or test");

  // data-regimes
  auto& c_regimes = command("data-regimes", "accuracy versus training-set fraction");
  add_globals(c_regimes, cfg, true);
  add_manifest(c_regimes, cfg);
  add_training(c_regimes, cfg);
  c_regimes.bindings.add<std::vector<double>>(c_regimes.app, "--fractions", "training fractions",
                                              [&cfg](const std::vector<double>& v) { cfg.fractions = v; });
  c_regimes.bindings.add<std::vector<std::uint64_t>>(c_regimes.app, "--seeds", "training seeds",
                                                     [&cfg](const std::vector<std::uint64_t>& v) { cfg.seeds = v; });

  // analyze
  AnalyzeOptions analyze;
  std::vector<std::string> feature_names;
  auto& c_analyze = command("analyze", "stylometric distances, optionally with two checkpoints");
  add_globals(c_analyze, cfg, true);
  add_manifest(c_analyze, cfg);
  c_analyze.app->add_option("--extra-corpus", analyze.extra_corpora, "further corpora for the dissimilarity table");
  c_analyze.app->add_option("--checkpoints", analyze.checkpoints, "contra and baseline checkpoints")->expected(2);
  c_analyze.app->add_option("--split", analyze.split, "evaluation split for checkpoints");
  c_analyze.app->add_option("--top", analyze.top_m, "number of most similar author pairs");
  c_analyze.app->add_option("--k-per-order", analyze.stylometry.k_per_order, "n-grams kept per order");
  c_analyze.app->add_option("--topics", analyze.stylometry.lda.num_topics, "LDA topics");
  c_analyze.app->add_option("--lda-iterations", analyze.stylometry.lda.iterations, "LDA Gibbs sweeps");
  c_analyze.app->add_option("--infer-iterations", analyze.stylometry.infer_iterations, "topic inference sweeps");
  c_analyze.app->add_option("--features", feature_names, "subset of content, style, hybrid, topic");

  // project
  ProjectOptions project;
  auto& c_project = command("project", "2-D PCA projection of document embeddings");
  add_globals(c_project, cfg, true);
  add_manifest(c_project, cfg);
  c_project.app->add_option("--checkpoint", project.checkpoint, "checkpoint (.json or .bin)")->required();
  c_project.app->add_option("--split", project.split, "train, val or test (default: whole corpus)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  for (const auto& c : commands) {
    if (!c->app->parsed()) continue;
    const ExperimentConfig resolved = resolve(*c, cfg);
    RunDirectory out(c->globals.out, c->globals.overwrite);
    const std::string name = c->app->get_name();
    if (name == "synth") {
      synth.spec.seed = c->app->get_option("--seed")->count() > 0 ? resolved.seed : synth.spec.seed;
      synth.format = parse_corpus_format(synth_format);
      cmd_synth(synth, out);
    } else if (name == "split") {
      cmd_split(resolved, out);
    } else if (name == "train") {
      cmd_train(resolved, out);
    } else if (name == "eval") {
      cmd_eval(resolved, eval, out);
    } else if (name == "data-regimes") {
      cmd_data_regimes(resolved, out);
    } else if (name == "analyze") {
      if (!feature_names.empty()) {
        analyze.stylometry.features.clear();
        for (const auto& f : feature_names) analyze.stylometry.features.push_back(parse_feature_type(f));
      }
      cmd_analyze(resolved, analyze, out);
    } else if (name == "project") {
      cmd_project(resolved, project, out);
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: " << msg << "\n";
    return 1;
  }
}
