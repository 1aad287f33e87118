#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "qta/pipeline.hpp"

namespace {

namespace pl = qta::pipeline;

constexpr const char *kFooter = R"(Exit codes:
  0  success
  1  other failure (validation, I/O)
  2  usage error (bad flags, unknown config keys)
  3  parse error in an input file
  4  numeric failure (non-finite values, divergence)
  5  missing artifact or config-hash mismatch with an upstream artifact

Stages read and write under --out-dir. Every artifact records the toolkit
version, the config hash, the stage hash and the seed. Logs are JSON lines on
stderr.)";

struct Globals {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  std::string log_file;
  bool quiet = false;
  bool verbose = false;
  bool allow_mismatch = false;
  bool force = false;
};

pl::Context make_context(const Globals &g) {
  pl::Context ctx;
  if (!g.config.empty())
    ctx.config = pl::merge_config(pl::default_config(), pl::load_config_file(g.config));
  for (const auto &s : g.sets)
    pl::apply_override(ctx.config, s);
  if (g.seed)
    ctx.config["seed"] = *g.seed;
  ctx.out_dir = g.out_dir;
  ctx.allow_mismatch = g.allow_mismatch;
  ctx.force = g.force;
  ctx.log.quiet = g.quiet;
  ctx.log.verbose = g.verbose;
  if (!g.log_file.empty()) {
    ctx.log.file.open(g.log_file, std::ios::app);
    if (!ctx.log.file)
      throw qta::Error("cannot open log file " + g.log_file);
  }
  return ctx;
}

int run(int argc, char **argv) {
  CLI::App app{"qta: quantum-topological atomic property pipeline", "qta"};
  app.footer(kFooter);
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", QTA_VERSION);

  Globals g;
  app.add_option("--config", g.config, "JSON run configuration with one block per stage");
  app.add_option("--set", g.sets, "Override a config key, e.g. --set train.epochs=50 (repeatable)");
  app.add_option("--seed", g.seed, "Global seed (overrides the config)");
  app.add_option("--out-dir", g.out_dir, "Directory holding all artifacts")->capture_default_str();
  app.add_option("--log-file", g.log_file, "Also append log records to this file");
  app.add_flag("--quiet", g.quiet, "Do not write log records to stderr");
  app.add_flag("--verbose", g.verbose, "Include per-epoch log records");
  app.add_flag("--allow-mismatch", g.allow_mismatch, "Warn instead of failing on upstream config-hash mismatch");
  app.add_flag("--force", g.force, "Retrain instead of failing when resumable outputs have a different config hash");

  std::string stage_to_run;
  std::optional<std::string> scores;
  std::string xyz, sumviz, exclude, dipole_source;
  auto stage = [&](const std::string &name, const std::string &help) {
    auto *sub = app.add_subcommand(name, help);
    sub->callback([&stage_to_run, name] { stage_to_run = name; });
    return sub;
  };
  stage("synth", "Generate the analytic synthetic dataset");
  auto *ingest = stage("ingest", "Assemble a dataset from .xyz and .sumviz files");
  ingest->add_option("--xyz", xyz, "Directory of extended .xyz files (overrides ingest.xyz)");
  ingest->add_option("--sumviz", sumviz, "Directory of .sumviz files (overrides ingest.sumviz)");
  ingest->add_option("--exclude", exclude, "Exclusion list, one molecule id per line (overrides ingest.exclude)");
  stage("cluster", "Label atomic environments by SOAP, PCA and density clustering");
  stage("split", "Build the held-out environment split and the repeated grouped folds");
  stage("train", "Train one atomic model per variant and fold cell");
  stage("eval", "Score every trained model on the holdout by environment stratum");
  auto *st = stage("stats", "Repeated-measures ANOVA, Tukey tables and diagnostics");
  st->add_option("--scores", scores, "Score table to analyse instead of the eval output");
  stage("infer", "Train an ensemble and infer atomic properties");
  auto *dip = stage("dipole", "Reconstruct molecular dipoles from atomic dipoles");
  dip->add_option("--source", dipole_source, "inferred or truth (overrides dipole.source)");
  stage("molecular", "Molecular property models with and without atomic inputs");
  stage("report", "Verify provenance and collect the report tables");
  stage("run", "Run every stage enabled under \"stages\" in pipeline order");
  bool show_config = false;
  app.add_subcommand("config", "Print the effective configuration")->callback([&] { show_config = true; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return 2;
  }

  pl::Context ctx = make_context(g);
  if (!xyz.empty())
    ctx.config["ingest"]["xyz"] = xyz;
  if (!sumviz.empty())
    ctx.config["ingest"]["sumviz"] = sumviz;
  if (!exclude.empty())
    ctx.config["ingest"]["exclude"] = exclude;
  if (!dipole_source.empty())
    ctx.config["dipole"]["source"] = dipole_source;

  if (show_config) {
    std::cout << ctx.config.dump(2) << "\n";
    return 0;
  }
  if (stage_to_run == "run")
    pl::run_all(ctx);
  else if (stage_to_run == "stats")
    pl::stage_stats(ctx, scores);
  else
    pl::run_stage(ctx, stage_to_run);
  return 0;
}

} // namespace

int main(int argc, char **argv) {
  try {
    return run(argc, argv);
  } catch (const pl::UsageError &e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const qta::ParseError &e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 3;
  } catch (const qta::NumericError &e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const qta::MissingArtifactError &e) {
    std::cerr << "missing artifact: " << e.what() << "\n";
    return 5;
  } catch (const nlohmann::json::exception &e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
