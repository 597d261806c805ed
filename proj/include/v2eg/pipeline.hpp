#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "v2eg/dataset_io.hpp"
#include "v2eg/diffusion_engine.hpp"
#include "v2eg/electrode_graphs.hpp"
#include "v2eg/quality_metrics.hpp"

namespace v2eg {

// ---- logging (V2EG_LOG = error | info | debug) ----
enum class LogLevel { error = 0, info = 1, debug = 2 };
void set_log_level(LogLevel level);
LogLevel log_level();
LogLevel parse_log_level(const std::string& name);  // ConfigError
void log_msg(LogLevel level, const std::string& msg);

// ---- run configuration ----
// Flat UTF-8 "key = value" lines with dotted keys; '#' starts a comment.
struct RunConfig {
  std::uint64_t seed{7};

  std::size_t channels{62};
  std::size_t samples{400};
  double sampling_rate_hz{200.0};
  std::size_t holdout{0};  // trailing manifest entries kept out of training
  double band_low_hz{0.5};
  double band_high_hz{40.0};

  int fixture_subjects{15};
  int fixture_videos{72};
  std::size_t fixture_frame_size{32};
  double fixture_alpha_beta_factor{2.0};
  double fixture_noise_std{0.1};

  std::size_t frame_count{4};
  std::size_t frame_size{224};
  double frame_hz{2.0};

  std::size_t video_dim{768};
  std::size_t text_rows{77};
  std::size_t fused_dim{512};
  std::size_t heads{1};
  bool use_eeg_prior{false};
  std::uint64_t encoder_seed{7};

  std::size_t hidden{256};
  std::size_t layers{5};
  std::size_t scales{2};
  std::size_t time_dim{128};
  double attention_slope{0.2};
  double init_std{0.02};
  std::size_t disc_hidden{64};

  int graph_k{4};
  double graph_threshold{0.3};
  std::size_t graph_segments{64};  // training segments concatenated for S-Graphs

  std::size_t diffusion_steps{1000};
  std::string schedule{"linear"};
  double beta_min{1e-4};
  double beta_max{0.02};

  std::size_t inference_steps{50};
  double guidance_scale{1.0};

  LossWeights loss;
  bool augment{true};
  AugmentationConfig augmentation;
  AdamConfig adam;
  double lr{1e-5};
  double clip_norm{1.0};
  std::size_t epochs{100};
  std::size_t batch{4};
  double cond_dropout{0.1};
  std::size_t max_segments{0};  // 0 = every training entry

  std::size_t eval_samples{10};
  std::size_t timing_runs{5};

  bool disable_spgn{false};
  bool disable_spatial_attention{false};

  // Throws ConfigError naming the key for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  std::vector<std::string> keys() const;
  // Every key in sorted order, "key = value\n", doubles in shortest
  // round-trip form. Parsing it back gives an identical config.
  std::string canonical() const;
  std::string hash() const;  // FNV-1a of canonical(), 16 hex digits
  void validate() const;     // ConfigError

  SpgnConfig spgn() const;
  ConditioningConfig conditioning() const;
  TrainConfig training() const;
  FixtureConfig fixture() const;
  NoiseSchedule noise_schedule() const;
};

RunConfig parse_run_config(const std::string& text, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});

// ---- model variants ----
enum class Variant { full, no_attention, baseline };
const char* variant_name(Variant v);
Variant variant_of(const RunConfig& cfg);

// ---- data ----
struct ExampleSet {
  std::vector<ManifestEntry> entries;
  std::vector<TrainingExample> examples;  // eeg as stored, conditions encoded
};

struct Split {
  std::vector<ManifestEntry> train;
  std::vector<ManifestEntry> eval;  // holdout tail, or everything when holdout is 0
};

Split split_corpus(const Manifest& m, const RunConfig& cfg);

// Video frames resampled to the conditioning grid and encoded, plus the
// subject/emotion text embedding. EEG prior when enabled.
ConditionInputs condition_inputs(const RunConfig& cfg, const Encoder& encoder, const AlignedSample& s);
std::unique_ptr<Encoder> make_encoder(const RunConfig& cfg);
ExampleSet load_examples(const RunConfig& cfg, const std::filesystem::path& corpus,
                         const std::vector<ManifestEntry>& entries);

// E-Graph from the channel layout plus S-Graphs from up to graph_segments
// training segments laid end to end.
GraphSet corpus_graphs(const RunConfig& cfg, const std::vector<TrainingExample>& train);
void save_graphs(const std::filesystem::path& dir, const GraphSet& g);
GraphSet load_graphs(const std::filesystem::path& dir);

GenerativeModel build_model(const RunConfig& cfg, Variant v, const GraphSet& graphs, Rng& init);
TrainResult train_model(GenerativeModel& model, const RunConfig& cfg, const std::vector<TrainingExample>& train,
                        Rng& rng);

struct Generated {
  std::vector<EegSegment> eeg;
  std::vector<double> seconds;  // wall time per sample
};

// Sample i draws from Rng(seed).derive(i); threads only change wall time.
Generated generate_for(const GenerativeModel& model, const RunConfig& cfg, const std::vector<TrainingExample>& conds,
                       std::size_t inference_steps, std::uint64_t seed, unsigned threads);

// ---- subcommands (disk level) ----
// Every run directory receives config.cfg (canonical) and run.json.
void write_run_record(const std::filesystem::path& out, const RunConfig& cfg, const std::string& command,
                      const std::vector<std::pair<std::string, std::string>>& inputs);

Manifest cmd_fixture(const RunConfig& cfg, const std::filesystem::path& out);
Manifest cmd_preprocess(const RunConfig& cfg, const std::filesystem::path& in, const std::filesystem::path& out);

struct TrainSummary {
  std::string config_hash;
  std::string checkpoint_hash;
  TrainResult result;
  double seconds{0};
};
TrainSummary cmd_train(const RunConfig& cfg, const std::filesystem::path& data, const std::filesystem::path& out);

struct LoadedRun {
  RunConfig cfg;
  GenerativeModel model;
  std::string checkpoint_hash;
};
// Rebuilds the model of a train run directory from its embedded config.
LoadedRun load_run(const std::filesystem::path& run_dir);

Manifest cmd_generate(const RunConfig& cfg, const std::filesystem::path& run_dir, const std::filesystem::path& data,
                      const std::filesystem::path& out, std::size_t count, unsigned threads);
QualityReport cmd_evaluate(const RunConfig& cfg, const std::filesystem::path& generated,
                           const std::filesystem::path& reference, const std::filesystem::path& out);
void cmd_package(const RunConfig& cfg, const std::filesystem::path& generated, const std::filesystem::path& out);

struct AblationRow {
  std::string name;
  double mse{0}, correlation{0}, mae{0}, inference_time_s{0};
  std::size_t samples{0};
};

struct Degradation {
  std::string name;
  double vs_full{0};    // (mse - mse_full) / mse_full
  double vs_config{0};  // (mse - mse_full) / mse
};

struct AblationResult {
  std::vector<AblationRow> rows;  // full row named "Full SPGN"
  std::vector<Degradation> degradation() const;
  std::string to_json() const;
  std::string to_csv() const;
  std::string table() const;  // human-readable, both conventions labeled
};

// Published ablation numbers: mse, correlation, mae, seconds per sample.
AblationResult published_ablation();

struct AblateOptions {
  bool train_each{true};
  bool shared_init{false};
  std::filesystem::path full_run, no_attention_run, baseline_run;  // used when train_each is false
  unsigned threads{1};
};

// Six configurations: Full SPGN, Baseline, No Spatial Attention, Diffusion
// 25 / 50 / 100 (the full model sampled with that many steps).
AblationResult cmd_ablate(const RunConfig& cfg, const std::filesystem::path& data, const std::filesystem::path& out,
                          const AblateOptions& opt);

// metrics.csv and band_similarity.csv from a report.json.
void cmd_report_plots(const std::filesystem::path& report, const std::filesystem::path& out);

}  // namespace v2eg
