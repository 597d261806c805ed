// Command-line front end over the v2eg pipeline.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "v2eg/errors.hpp"
#include "v2eg/pipeline.hpp"

namespace fs = std::filesystem;
using namespace v2eg;

namespace {

struct Globals {
  std::string config;
  std::uint64_t seed{0};
  bool seed_given{false};
  std::string out{"run"};
  unsigned threads{1};
  std::vector<std::string> overrides;
};

RunConfig resolve_config(const Globals& g, const fs::path& fallback = {}) {
  RunConfig cfg;
  if (!g.config.empty()) cfg = load_run_config(g.config);
  else if (!fallback.empty() && fs::exists(fallback)) cfg = load_run_config(fallback);
  for (const auto& kv : g.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (g.seed_given) cfg.seed = g.seed;
  cfg.validate();
  return cfg;
}

int fail(const std::string& kind, const std::string& message, const std::string& out) {
  const nlohmann::json j = {{"error", {{"kind", kind}, {"message", message}}}};
  std::cerr << j.dump() << "\n";
  if (!out.empty() && fs::is_directory(out)) {
    try {
      write_file_atomic(fs::path(out) / "error.json", j.dump(1) + "\n");
    } catch (...) {
    }
  }
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* lvl = std::getenv("V2EG_LOG")) {
    try {
      set_log_level(parse_log_level(lvl));
    } catch (const Error& e) {
      return fail(e.kind(), e.what(), "");
    }
  }

  CLI::App app{"Video-conditioned EEG generation pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "Run configuration file (key = value lines)");
  app.add_option_function<std::uint64_t>(
      "--seed", [&](std::uint64_t s) { g.seed = s, g.seed_given = true; }, "Seed for every stochastic step");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--threads", g.threads, "Worker threads for sampling")->check(CLI::PositiveNumber);
  app.add_option("--set", g.overrides, "Override a config key (key=value), repeatable");

  auto* fixture = app.add_subcommand("fixture", "Write a synthetic aligned corpus");

  auto* preprocess = app.add_subcommand("preprocess", "Bandpass, segment and normalize a corpus");
  std::string pre_in;
  preprocess->add_option("--in", pre_in, "Input corpus")->required();

  auto* train = app.add_subcommand("train", "Train a denoiser on a corpus");
  std::string train_data;
  train->add_option("--data", train_data, "Training corpus")->required();

  auto* generate = app.add_subcommand("generate", "Sample EEG for the evaluation split of a corpus");
  std::string gen_run, gen_data;
  std::size_t gen_count = 0;
  generate->add_option("--run", gen_run, "Train run directory")->required();
  generate->add_option("--data", gen_data, "Corpus supplying conditions")->required();
  generate->add_option("--count", gen_count, "Number of samples (0 = whole split)");

  auto* evaluate = app.add_subcommand("evaluate", "Compare a generated corpus with its reference");
  std::string ev_gen, ev_ref;
  evaluate->add_option("--generated", ev_gen, "Generated corpus or generate run")->required();
  evaluate->add_option("--reference", ev_ref, "Reference corpus")->required();

  auto* package = app.add_subcommand("package", "Copy a generated corpus into a release layout");
  std::string pkg_gen;
  package->add_option("--generated", pkg_gen, "Generated corpus or generate run")->required();

  auto* ablate = app.add_subcommand("ablate", "Run the six ablation configurations");
  std::string ab_data, ab_preset{"standard"}, ab_full, ab_noatt, ab_base;
  bool ab_shared = false, ab_published_only = false;
  ablate->add_option("--data", ab_data, "Corpus");
  ablate->add_option("--preset", ab_preset, "Configuration set")->check(CLI::IsMember({"standard"}));
  ablate->add_flag("--shared-init", ab_shared, "Start every configuration from the same parameter stream");
  ablate->add_option("--full-run", ab_full, "Trained full model (skips training)");
  ablate->add_option("--no-attention-run", ab_noatt, "Trained no-attention model");
  ablate->add_option("--baseline-run", ab_base, "Trained baseline model");
  ablate->add_flag("--published", ab_published_only, "Only print degradations of the published ablation numbers");

  auto* plots = app.add_subcommand("report-plots", "Write plot-ready CSV from a report");
  std::string plot_report;
  plots->add_option("--report", plot_report, "report.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), "");
  }

  const fs::path out(g.out);
  try {
    if (fixture->parsed()) {
      const auto m = cmd_fixture(resolve_config(g), out);
      std::cout << "fixture: " << m.samples.size() << " samples -> " << (out / "corpus").string() << "\n";
    } else if (preprocess->parsed()) {
      const auto m = cmd_preprocess(resolve_config(g), pre_in, out);
      std::cout << "preprocess: " << m.samples.size() << " segments -> " << (out / "corpus").string() << "\n";
    } else if (train->parsed()) {
      const auto s = cmd_train(resolve_config(g), train_data, out);
      std::cout << "train: " << s.result.epochs_completed << " epochs, checkpoint " << s.checkpoint_hash << "\n";
    } else if (generate->parsed()) {
      const auto m = cmd_generate(resolve_config(g, fs::path(gen_run) / "config.cfg"), gen_run, gen_data, out,
                                  gen_count, g.threads);
      std::cout << "generate: " << m.samples.size() << " samples -> " << (out / "corpus").string() << "\n";
    } else if (evaluate->parsed()) {
      const auto r = cmd_evaluate(resolve_config(g), ev_gen, ev_ref, out);
      std::cout << "evaluate: mse " << r.aggregates.at("mse").mean << ", correlation "
                << r.aggregates.at("correlation").mean << " over " << r.samples.size() << " samples\n";
    } else if (package->parsed()) {
      cmd_package(resolve_config(g), pkg_gen, out);
      std::cout << "package: " << (out / "dataset").string() << "\n";
    } else if (ablate->parsed()) {
      if (ab_published_only) {
        std::cout << published_ablation().table();
        return 0;
      }
      if (ab_data.empty()) throw ConfigError("ablate needs --data unless --published is given");
      AblateOptions opt;
      opt.shared_init = ab_shared;
      opt.threads = g.threads;
      opt.full_run = ab_full;
      opt.no_attention_run = ab_noatt;
      opt.baseline_run = ab_base;
      opt.train_each = ab_full.empty() && ab_noatt.empty() && ab_base.empty();
      const auto res = cmd_ablate(resolve_config(g), ab_data, out, opt);
      std::cout << res.table();
    } else if (plots->parsed()) {
      cmd_report_plots(plot_report, out);
      std::cout << "report-plots: " << (out / "metrics.csv").string() << ", "
                << (out / "band_similarity.csv").string() << "\n";
    }
  } catch (const Error& e) {
    return fail(e.kind(), e.what(), g.out);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), g.out);
  }
  return 0;
}
