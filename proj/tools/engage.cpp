// engage: customer-support engagement prediction pipeline.
//
// Subcommands mirror the pipeline stages; a declarative config file provides
// defaults and command-line flags win over it. Exit codes: 0 success, 1 data
// error, 2 usage error.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "engage/pipeline.hpp"

namespace {

using engage::pipeline::Artifacts;
using engage::pipeline::PipelineConfig;

struct GlobalFlags {
  std::optional<std::string> config_path;
  std::optional<std::string> corpus;
  std::optional<std::string> lexicons;
  std::optional<std::string> external_scores;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> toggles;
};

void add_global_flags(CLI::App* cmd, GlobalFlags& flags) {
  cmd->add_option("--config", flags.config_path,
                  "config file (INI-style); ENGAGE_CONFIG sets the default")
      ->envname("ENGAGE_CONFIG");
  cmd->add_option("--corpus", flags.corpus, "raw corpus CSV path");
  cmd->add_option("--lexicons", flags.lexicons, "lexicon directory");
  cmd->add_option("--external-scores", flags.external_scores,
                  "external empathy/dialogue score overrides CSV");
  cmd->add_option("--out", flags.out, "output directory for artifacts");
  cmd->add_option("--seed", flags.seed, "root seed for every random choice");
  cmd->add_option("--toggles", flags.toggles,
                  "feature groups: cp,bap,liwc,empathy,perplexity,dialogue");
}

PipelineConfig resolve_config(const GlobalFlags& flags) {
  PipelineConfig config;
  if (flags.config_path && !flags.config_path->empty())
    engage::pipeline::load_config_file(config, *flags.config_path);
  if (flags.corpus) config.corpus_path = *flags.corpus;
  if (flags.lexicons) config.lexicon_dir = *flags.lexicons;
  if (flags.external_scores) config.external_scores_path = *flags.external_scores;
  if (flags.out) config.out_dir = *flags.out;
  if (flags.seed) config.seed = *flags.seed;
  if (flags.toggles) config.toggles = engage::features::parse_toggles(*flags.toggles);
  config.validate();
  return config;
}

std::string fmt3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"customer-support engagement prediction pipeline"};
  app.require_subcommand(1);

  GlobalFlags flags;

  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic corpus CSV");
  std::string synth_out = "corpus.csv";
  std::uint64_t synth_tweets = 200000;
  std::uint64_t synth_seed = 7;
  synth_cmd->add_option("--out", synth_out, "output CSV path");
  synth_cmd->add_option("--tweets", synth_tweets, "total tweet count");
  synth_cmd->add_option("--seed", synth_seed, "generator seed");

  auto* ingest_cmd = app.add_subcommand("ingest", "parse and thread the corpus");
  add_global_flags(ingest_cmd, flags);

  auto* train_lm_cmd = app.add_subcommand("train-lm", "train the response language model");
  add_global_flags(train_lm_cmd, flags);
  bool export_arpa = false;
  train_lm_cmd->add_flag("--arpa", export_arpa, "also export the model in ARPA text format");

  auto* ppl_cmd = app.add_subcommand("ppl", "score text perplexity under the trained model");
  add_global_flags(ppl_cmd, flags);
  std::string ppl_text;
  std::string ppl_model;
  ppl_cmd->add_option("--text", ppl_text, "text to score");
  ppl_cmd->add_option("--model", ppl_model, "model path (default <out>/lm.bin)");

  auto* featurize_cmd = app.add_subcommand("featurize", "build feature matrices");
  add_global_flags(featurize_cmd, flags);

  auto* train_cmd = app.add_subcommand("train", "train the engagement classifier");
  add_global_flags(train_cmd, flags);

  auto* evaluate_cmd = app.add_subcommand("evaluate", "evaluate on the test split");
  add_global_flags(evaluate_cmd, flags);

  auto* ablate_cmd = app.add_subcommand("ablate", "per-group ablation study");
  add_global_flags(ablate_cmd, flags);

  auto* explain_cmd = app.add_subcommand("explain", "rank feature importances");
  add_global_flags(explain_cmd, flags);

  auto* reproduce_cmd = app.add_subcommand("reproduce", "run the whole pipeline end to end");
  add_global_flags(reproduce_cmd, flags);

  try {
    app.parse(argc, argv);

    if (synth_cmd->parsed()) {
      engage::synth::SynthConfig config;
      config.total_tweets = synth_tweets;
      config.seed = synth_seed;
      std::filesystem::path path(synth_out);
      if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
      std::ofstream os(path, std::ios::binary);
      if (!os.good()) throw engage::DataError("cannot open " + synth_out + " for writing");
      engage::synth::SynthSummary summary = engage::synth::write_corpus(os, config);
      std::cerr << "[engage] synth: " << summary.tweets_written << " tweets, "
                << summary.conversations << " conversations, prevalence "
                << fmt3(static_cast<double>(summary.engaged) /
                        static_cast<double>(summary.conversations))
                << ", mean turns " << fmt3(summary.mean_turns) << "\n";
      return 0;
    }

    PipelineConfig config = resolve_config(flags);

    if (ingest_cmd->parsed()) {
      engage::pipeline::IngestReport report = engage::pipeline::ingest_run(config);
      std::cerr << "[engage] ingest: parsed " << report.parsed << " tweets (skipped "
                << report.skipped_malformed << "), " << report.stats.total_conversations
                << " conversations, mean turns " << fmt3(report.stats.mean_turns_per_conversation)
                << "\n";
    } else if (train_lm_cmd->parsed()) {
      engage::pipeline::TrainLmReport report =
          engage::pipeline::train_lm_run(config, export_arpa);
      for (const std::string& w : report.warnings) std::cerr << "[engage] train-lm: " << w << "\n";
      std::cerr << "[engage] train-lm: " << report.responses << " brand responses from "
                << report.lm_conversations << " held-out conversations\n";
    } else if (ppl_cmd->parsed()) {
      if (ppl_text.empty())
        throw engage::UsageError("ppl requires nonempty --text");
      std::filesystem::path model_path =
          ppl_model.empty() ? Artifacts(config.out_dir).lm_bin() : std::filesystem::path(ppl_model);
      std::ifstream is(model_path, std::ios::binary);
      if (!is.good())
        throw engage::DataError("cannot open language model " + model_path.string());
      engage::lm::KNModel model = engage::lm::KNModel::load(is);
      engage::text::TokenSequence tokens =
          engage::text::tokenize(engage::text::normalize(ppl_text, config.norm));
      if (tokens.empty()) throw engage::UsageError("ppl text normalized to zero tokens");
      engage::lm::PerplexityScore score = model.perplexity(tokens);
      std::cout << "perplexity " << score.value << "\ntokens " << score.token_count
                << "\noov " << score.oov_count << "\n";
    } else if (featurize_cmd->parsed()) {
      engage::pipeline::FeaturizeReport report = engage::pipeline::featurize_run(config);
      std::cerr << "[engage] featurize: " << report.train_examples << " train / "
                << report.test_examples << " test examples, " << report.dimension
                << " features\n";
      if (report.override_unknown_ids > 0)
        std::cerr << "[engage] featurize: warning: " << report.override_unknown_ids
                  << " external-score rows reference unknown conversations\n";
      if (report.override_rejected > 0)
        std::cerr << "[engage] featurize: warning: " << report.override_rejected
                  << " external-score rows rejected\n";
    } else if (train_cmd->parsed()) {
      engage::pipeline::TrainRunReport report = engage::pipeline::train_run(config);
      std::cerr << "[engage] train: " << report.epochs << " epochs, final loss "
                << report.final_loss << "\n";
    } else if (evaluate_cmd->parsed()) {
      engage::pipeline::EvaluateReport report = engage::pipeline::evaluate_run(config);
      std::cerr << "[engage] evaluate: macro F1 " << fmt3(report.model_metrics.macro_f1)
                << " (stratified " << fmt3(report.stratified.macro_f1) << ", uniform "
                << fmt3(report.uniform.macro_f1) << ", minor " << fmt3(report.minor.macro_f1)
                << ")\n";
    } else if (ablate_cmd->parsed()) {
      engage::eval::AblationReport report = engage::pipeline::ablate_run(config);
      for (const engage::eval::AblationRow& row : report.rows)
        std::cerr << "[engage] ablate: -" << row.removed << " macro F1 "
                  << fmt3(row.metrics.macro_f1) << " (delta " << fmt3(row.delta_f1) << ")\n";
    } else if (explain_cmd->parsed()) {
      engage::eval::ImportanceReport report = engage::pipeline::explain_run(config);
      std::cerr << "[engage] explain: " << report.stylistic.size()
                << " stylistic features ranked\n";
    } else if (reproduce_cmd->parsed()) {
      engage::pipeline::reproduce_run(config, std::cerr);
      std::cerr << "[engage] reproduce: manifest written to "
                << Artifacts(config.out_dir).manifest().string() << "\n";
    }
    return 0;
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const engage::UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
