#include "v2eg/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>
#include <variant>

#include "json.hpp"
#include "v2eg/errors.hpp"

namespace v2eg {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- logging ----

namespace {
std::atomic<int> g_log_level{static_cast<int>(LogLevel::info)};
std::mutex g_log_mutex;
}  // namespace

void set_log_level(LogLevel level) { g_log_level = static_cast<int>(level); }
LogLevel log_level() { return static_cast<LogLevel>(g_log_level.load()); }

LogLevel parse_log_level(const std::string& name) {
  if (name == "error") return LogLevel::error;
  if (name == "info") return LogLevel::info;
  if (name == "debug") return LogLevel::debug;
  throw ConfigError("V2EG_LOG must be error, info or debug, got '" + name + "'");
}

void log_msg(LogLevel level, const std::string& msg) {
  if (static_cast<int>(level) > g_log_level.load()) return;
  static const char* names[] = {"error", "info", "debug"};
  std::lock_guard<std::mutex> lock(g_log_mutex);
  std::cerr << "[v2eg " << names[static_cast<int>(level)] << "] " << msg << "\n";
}

// ---- run configuration ----

namespace {

static_assert(std::is_same_v<std::size_t, std::uint64_t>, "seed slots reuse the size_t alternative");
using Slot = std::variant<std::size_t*, int*, double*, bool*, std::string*>;

std::map<std::string, Slot> slots(RunConfig& c) {
  return {
      {"seed", &c.seed},
      {"data.channels", &c.channels},
      {"data.samples", &c.samples},
      {"data.sampling_rate_hz", &c.sampling_rate_hz},
      {"data.holdout", &c.holdout},
      {"data.band_low_hz", &c.band_low_hz},
      {"data.band_high_hz", &c.band_high_hz},
      {"fixture.subjects", &c.fixture_subjects},
      {"fixture.videos", &c.fixture_videos},
      {"fixture.frame_size", &c.fixture_frame_size},
      {"fixture.alpha_beta_factor", &c.fixture_alpha_beta_factor},
      {"fixture.noise_std", &c.fixture_noise_std},
      {"video.frame_count", &c.frame_count},
      {"video.frame_size", &c.frame_size},
      {"video.frame_hz", &c.frame_hz},
      {"cond.video_dim", &c.video_dim},
      {"cond.text_rows", &c.text_rows},
      {"cond.fused_dim", &c.fused_dim},
      {"cond.heads", &c.heads},
      {"cond.use_eeg_prior", &c.use_eeg_prior},
      {"cond.encoder_seed", &c.encoder_seed},
      {"model.hidden", &c.hidden},
      {"model.layers", &c.layers},
      {"model.scales", &c.scales},
      {"model.time_dim", &c.time_dim},
      {"model.attention_slope", &c.attention_slope},
      {"model.init_std", &c.init_std},
      {"model.disc_hidden", &c.disc_hidden},
      {"graph.k", &c.graph_k},
      {"graph.threshold", &c.graph_threshold},
      {"graph.segments", &c.graph_segments},
      {"diffusion.steps", &c.diffusion_steps},
      {"diffusion.schedule", &c.schedule},
      {"diffusion.beta_min", &c.beta_min},
      {"diffusion.beta_max", &c.beta_max},
      {"sample.inference_steps", &c.inference_steps},
      {"sample.guidance_scale", &c.guidance_scale},
      {"loss.diffusion", &c.loss.diffusion},
      {"loss.adversarial", &c.loss.adversarial},
      {"loss.frequency", &c.loss.frequency},
      {"loss.spatial", &c.loss.spatial},
      {"loss.temporal", &c.loss.temporal},
      {"augmentation.enabled", &c.augment},
      {"augmentation.ratio", &c.augmentation.ratio},
      {"augmentation.noise_std", &c.augmentation.noise_std},
      {"augmentation.dropout_channels", &c.augmentation.dropout_channels},
      {"augmentation.max_offset_samples", &c.augmentation.max_offset_samples},
      {"augmentation.scale_low", &c.augmentation.scale_low},
      {"augmentation.scale_high", &c.augmentation.scale_high},
      {"augmentation.stack", &c.augmentation.stack},
      {"optim.lr", &c.lr},
      {"optim.beta1", &c.adam.beta1},
      {"optim.beta2", &c.adam.beta2},
      {"optim.eps", &c.adam.eps},
      {"optim.clip_norm", &c.clip_norm},
      {"train.epochs", &c.epochs},
      {"train.batch", &c.batch},
      {"train.cond_dropout", &c.cond_dropout},
      {"train.max_segments", &c.max_segments},
      {"eval.samples", &c.eval_samples},
      {"eval.timing_runs", &c.timing_runs},
      {"ablation.disable_spgn", &c.disable_spgn},
      {"ablation.disable_spatial_attention", &c.disable_spatial_attention},
  };
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("config key '" + key + "': cannot parse '" + v + "'");
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string slot_value(const Slot& s) {
  return std::visit(
      [](auto* p) -> std::string {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, double>) return format_double(*p);
        else if constexpr (std::is_same_v<T, bool>) return *p ? "true" : "false";
        else if constexpr (std::is_same_v<T, std::string>) return *p;
        else return std::to_string(*p);
      },
      s);
}

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError("config key '" + key + "': " + what);
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& raw) {
  auto all = slots(*this);
  const auto it = all.find(key);
  if (it == all.end()) throw ConfigError("unknown config key '" + key + "'");
  const std::string v = trim(raw);
  std::visit(
      [&](auto* p) {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, bool>) {
          if (v == "true" || v == "1") *p = true;
          else if (v == "false" || v == "0") *p = false;
          else throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
        } else if constexpr (std::is_same_v<T, std::string>) {
          *p = v;
        } else if constexpr (std::is_same_v<T, std::size_t>) {
          if (!v.empty() && v[0] == '-') throw ConfigError("config key '" + key + "': must be non-negative");
          *p = parse_number<T>(key, v);
        } else {
          *p = parse_number<T>(key, v);
        }
      },
      it->second);
}

std::vector<std::string> RunConfig::keys() const {
  RunConfig copy = *this;
  std::vector<std::string> out;
  for (const auto& [k, s] : slots(copy)) out.push_back(k);
  return out;
}

std::string RunConfig::canonical() const {
  RunConfig copy = *this;
  std::string out;
  for (const auto& [k, s] : slots(copy)) out += k + " = " + slot_value(s) + "\n";
  return out;
}

std::string RunConfig::hash() const { return hex64(fnv1a64(canonical())); }

void RunConfig::validate() const {
  require(channels >= 2, "data.channels", "must be >= 2");
  require(channels <= 62, "data.channels", "at most 62 channels have electrode positions");
  require(samples >= 16, "data.samples", "must be >= 16");
  require(sampling_rate_hz > 2 * band_high_hz, "data.sampling_rate_hz", "must exceed twice data.band_high_hz");
  require(band_low_hz > 0 && band_low_hz < band_high_hz, "data.band_low_hz", "need 0 < low < high");
  require(frame_size % PatchProjectionEncoder::kPatch == 0, "video.frame_size", "must be a multiple of 16");
  require(graph_k >= 1 && static_cast<std::size_t>(graph_k) < channels, "graph.k", "must be in [1, channels)");
  require(graph_threshold >= 0 && graph_threshold <= 1, "graph.threshold", "must be in [0, 1]");
  require(graph_segments >= 1, "graph.segments", "must be >= 1");
  require(inference_steps >= 1 && inference_steps <= diffusion_steps, "sample.inference_steps",
          "must be in [1, diffusion.steps]");
  require(guidance_scale >= 0, "sample.guidance_scale", "must be >= 0");
  require(eval_samples >= 1, "eval.samples", "must be >= 1");
  require(timing_runs >= 1, "eval.timing_runs", "must be >= 1");
  require(lr > 0, "optim.lr", "must be > 0");
  require(clip_norm > 0, "optim.clip_norm", "must be > 0");
  try {
    parse_schedule(schedule);
    spgn().validate();
    conditioning().validate();
    training().validate();
    fixture().validate();
    noise_schedule();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

SpgnConfig RunConfig::spgn() const {
  SpgnConfig s;
  s.channels = channels;
  s.samples = samples;
  s.hidden = hidden;
  s.layers = layers;
  s.scales = scales;
  s.time_dim = time_dim;
  s.cond_dim = fused_dim;
  s.graphs = 1 + default_bands(sampling_rate_hz).size();
  s.spatial_attention = !disable_spatial_attention;
  s.attention_slope = attention_slope;
  s.disc_hidden = disc_hidden;
  s.disc_pool_width = std::min<std::size_t>(16, samples);
  s.init_std = init_std;
  return s;
}

ConditioningConfig RunConfig::conditioning() const {
  ConditioningConfig c;
  c.frame_count = frame_count;
  c.frame_size = frame_size;
  c.frame_hz = frame_hz;
  c.video_dim = video_dim;
  c.text_rows = text_rows;
  c.fused_dim = fused_dim;
  c.heads = heads;
  c.use_eeg_prior = use_eeg_prior;
  c.eeg_channels = channels;
  c.encoder_seed = encoder_seed;
  return c;
}

TrainConfig RunConfig::training() const {
  TrainConfig t;
  t.epochs = epochs;
  t.batch = batch;
  t.lr = lr;
  t.clip_norm = clip_norm;
  t.cond_dropout = cond_dropout;
  t.weights = loss;
  t.adam = adam;
  t.augment = augment;
  t.augmentation = augmentation;
  t.sampling_rate_hz = sampling_rate_hz;
  return t;
}

FixtureConfig RunConfig::fixture() const {
  FixtureConfig f;
  f.subjects = fixture_subjects;
  f.videos = fixture_videos;
  f.channels = channels;
  f.samples = samples;
  f.sampling_rate_hz = sampling_rate_hz;
  f.frame_count = frame_count;
  f.frame_size = fixture_frame_size;
  f.frame_hz = frame_hz;
  f.alpha_beta_factor = fixture_alpha_beta_factor;
  f.noise_std = fixture_noise_std;
  f.graph_k = graph_k;
  return f;
}

NoiseSchedule RunConfig::noise_schedule() const {
  return make_schedule(parse_schedule(schedule), diffusion_steps, beta_min, beta_max);
}

RunConfig parse_run_config(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    base.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return base;
}

RunConfig load_run_config(const fs::path& path, RunConfig base) {
  if (!fs::exists(path)) throw IoError("config file not found: " + path.string());
  const auto bytes = read_file(path);
  return parse_run_config(std::string(bytes.begin(), bytes.end()), std::move(base));
}

// ---- variants ----

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::no_attention: return "no_attention";
    case Variant::baseline: return "baseline";
  }
  return "?";
}

Variant variant_of(const RunConfig& cfg) {
  if (cfg.disable_spgn) return Variant::baseline;
  if (cfg.disable_spatial_attention) return Variant::no_attention;
  return Variant::full;
}

namespace {

RunConfig config_for(RunConfig cfg, Variant v) {
  cfg.disable_spgn = v == Variant::baseline;
  cfg.disable_spatial_attention = v == Variant::no_attention;
  return cfg;
}

fs::path corpus_root(const fs::path& p) {
  if (fs::exists(p / kManifestFile)) return p;
  if (fs::exists(p / "corpus" / kManifestFile)) return p / "corpus";
  throw IoError("no corpus (manifest.json) at " + p.string());
}

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create directory " + p.string());
}

EegSegment preprocess_eeg(const RunConfig& cfg, const EegSegment& raw) {
  if (raw.normalized) return raw;
  return normalize(bandpass(raw, cfg.band_low_hz, cfg.band_high_hz)).segment;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

// ---- data ----

Split split_corpus(const Manifest& m, const RunConfig& cfg) {
  Split s;
  if (cfg.holdout >= m.samples.size() && cfg.holdout > 0)
    throw ConfigError("data.holdout (" + std::to_string(cfg.holdout) + ") leaves no training samples");
  const std::size_t cut = m.samples.size() - cfg.holdout;
  s.train.assign(m.samples.begin(), m.samples.begin() + static_cast<long>(cut));
  if (cfg.holdout == 0) s.eval = m.samples;
  else s.eval.assign(m.samples.begin() + static_cast<long>(cut), m.samples.end());
  return s;
}

std::unique_ptr<Encoder> make_encoder(const RunConfig& cfg) {
  return std::make_unique<PatchProjectionEncoder>(cfg.frame_size, cfg.video_dim, cfg.encoder_seed);
}

ConditionInputs condition_inputs(const RunConfig& cfg, const Encoder& encoder, const AlignedSample& s) {
  NoGradGuard guard;
  ConditionInputs in;
  in.video = encoder.encode(extract_frames(s.video, cfg.frame_hz, cfg.frame_count, cfg.frame_size));
  in.text = encode_subject(s.subject_id, s.emotion, "", cfg.text_rows, cfg.video_dim, cfg.encoder_seed).matrix;
  if (cfg.use_eeg_prior) in.prior = eeg_prior_features({s.eeg}, default_bands(cfg.sampling_rate_hz));
  return in;
}

ExampleSet load_examples(const RunConfig& cfg, const fs::path& corpus, const std::vector<ManifestEntry>& entries) {
  const auto root = corpus_root(corpus);
  const auto encoder = make_encoder(cfg);
  ExampleSet out;
  for (const auto& e : entries) {
    const AlignedSample s = read_sample(root, e);
    if (s.eeg.channels != cfg.channels || s.eeg.samples != cfg.samples)
      throw ConfigError("sample " + e.id + " has eeg " + std::to_string(s.eeg.channels) + "x" +
                        std::to_string(s.eeg.samples) + ", config expects " + std::to_string(cfg.channels) + "x" +
                        std::to_string(cfg.samples));
    if (s.eeg.sampling_rate_hz != cfg.sampling_rate_hz)
      throw ConfigError("sample " + e.id + " sampling rate differs from data.sampling_rate_hz");
    TrainingExample ex;
    ex.eeg = preprocess_eeg(cfg, s.eeg);
    ex.cond = condition_inputs(cfg, *encoder, s);
    out.entries.push_back(e);
    out.examples.push_back(std::move(ex));
  }
  return out;
}

GraphSet corpus_graphs(const RunConfig& cfg, const std::vector<TrainingExample>& train) {
  if (train.empty()) throw ConfigError("no training segments to build signal graphs from");
  const std::size_t n = std::min(cfg.graph_segments, train.size());
  EegSegment joined = EegSegment::zeros(cfg.channels, n * cfg.samples, cfg.sampling_rate_hz);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < cfg.channels; ++c) {
      const auto src = train[i].eeg.channel(c);
      std::copy(src.begin(), src.end(), joined.channel(c).begin() + static_cast<long>(i * cfg.samples));
    }
  const auto layout = layout_subset(standard_layout_62(), cfg.channels);
  return build_graph_set(layout, cfg.graph_k, joined, default_bands(cfg.sampling_rate_hz), cfg.graph_threshold);
}

void save_graphs(const fs::path& dir, const GraphSet& g) {
  ensure_dir(dir);
  const auto all = g.all();
  const std::size_t n = g.nodes();
  std::vector<double> values;
  json bands = json::array();
  for (const Graph* gr : all) {
    values.insert(values.end(), gr->adjacency.begin(), gr->adjacency.end());
    bands.push_back(gr->band);
  }
  const std::vector<std::uint32_t> dims{static_cast<std::uint32_t>(all.size()), static_cast<std::uint32_t>(n),
                                        static_cast<std::uint32_t>(n)};
  write_file_atomic(dir / "graphs.v2a", encode_array(RawArray::from_f64(dims, values)));
  write_file_atomic(dir / "graphs.json", json{{"bands", bands}, {"nodes", n}}.dump(1) + "\n");
}

GraphSet load_graphs(const fs::path& dir) {
  const auto a = decode_array(read_file(dir / "graphs.v2a"), "graphs.v2a");
  const auto bytes = read_file(dir / "graphs.json");
  const json meta = json::parse(bytes.begin(), bytes.end());
  if (a.dims.size() != 3 || a.dims[1] != a.dims[2] || a.dims[0] < 1) throw IoError("graphs.v2a has a bad shape");
  const auto values = a.to_f64();
  const std::size_t n = a.dims[1];
  GraphSet g;
  for (std::size_t i = 0; i < a.dims[0]; ++i) {
    Graph gr;
    gr.nodes = n;
    gr.adjacency.assign(values.begin() + static_cast<long>(i * n * n), values.begin() + static_cast<long>((i + 1) * n * n));
    gr.kind = i == 0 ? GraphKind::electrode : GraphKind::signal_band;
    gr.band = meta.at("bands").at(i).get<std::string>();
    if (i == 0) g.e_graph = std::move(gr);
    else g.s_graphs.push_back(std::move(gr));
  }
  g.validate();
  return g;
}

GenerativeModel build_model(const RunConfig& cfg, Variant v, const GraphSet& graphs, Rng& init) {
  const RunConfig c = config_for(cfg, v);
  return make_generative_model(c.spgn(), c.conditioning(), v == Variant::baseline, make_operators(graphs),
                               c.noise_schedule(), init);
}

TrainResult train_model(GenerativeModel& model, const RunConfig& cfg, const std::vector<TrainingExample>& train,
                        Rng& rng) {
  std::vector<TrainingExample> data = train;
  if (cfg.max_segments > 0 && data.size() > cfg.max_segments) data.resize(cfg.max_segments);
  return v2eg::train(model, data, cfg.training(), rng, [&](std::size_t epoch, const GenerativeModel&) {
    log_msg(LogLevel::debug, "epoch " + std::to_string(epoch + 1) + " done");
  });
}

Generated generate_for(const GenerativeModel& model, const RunConfig& cfg, const std::vector<TrainingExample>& conds,
                       std::size_t inference_steps, std::uint64_t seed, unsigned threads) {
  Generated out;
  out.eeg.resize(conds.size());
  out.seconds.resize(conds.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    try {
      for (std::size_t i = next++; i < conds.size(); i = next++) {
        NoGradGuard guard;
        Rng rng = Rng(seed).derive(i);
        const auto t0 = std::chrono::steady_clock::now();
        const Tensor cond = model.pooled_condition(conds[i].cond);
        out.eeg[i] = sample_segment(model, cond, inference_steps, cfg.guidance_scale, cfg.sampling_rate_hz, rng);
        out.seconds[i] = seconds_since(t0);
        out.eeg[i].channel_names = conds[i].eeg.channel_names;
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(failure_mutex);
      if (!failure) failure = std::current_exception();
      next = conds.size();
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(conds.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

// ---- subcommands ----

void write_run_record(const fs::path& out, const RunConfig& cfg, const std::string& command,
                      const std::vector<std::pair<std::string, std::string>>& inputs) {
  ensure_dir(out);
  write_file_atomic(out / "config.cfg", cfg.canonical());
  json in = json::object();
  for (const auto& [k, v] : inputs) in[k] = v;
  const json j = {{"schema", "v2eg.run"},
                  {"version", 1},
                  {"command", command},
                  {"config_hash", cfg.hash()},
                  {"seed", cfg.seed},
                  {"inputs", in},
                  {"rng", std::string(Rng::kAlgorithm)}};
  write_file_atomic(out / "run.json", j.dump(1) + "\n");
}

Manifest cmd_fixture(const RunConfig& cfg, const fs::path& out) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const auto m = synth_fixture(cfg.fixture(), cfg.seed, out / "corpus", cfg.hash());
  write_run_record(out, cfg, "fixture", {});
  log_msg(LogLevel::info, "fixture: " + std::to_string(m.samples.size()) + " samples in " +
                              format_double(seconds_since(t0)) + " s");
  return m;
}

Manifest cmd_preprocess(const RunConfig& cfg, const fs::path& in, const fs::path& out) {
  cfg.validate();
  const auto root = corpus_root(in);
  const double window_s = static_cast<double>(cfg.samples) / cfg.sampling_rate_hz;
  json scales = json::object();
  Manifest result;
  {
    CorpusWriter w(out / "corpus", cfg.hash());
    auto cur = load_corpus(root);
    while (auto s = cur.next()) {
      if (s->eeg.sampling_rate_hz != cfg.sampling_rate_hz)
        throw ConfigError("sample " + s->id + " is at " + format_double(s->eeg.sampling_rate_hz) +
                          " Hz, data.sampling_rate_hz is " + format_double(cfg.sampling_rate_hz));
      if (s->eeg.channels != cfg.channels) throw ConfigError("sample " + s->id + " channel count differs from data.channels");
      if (s->eeg.samples < cfg.samples) throw ConfigError("sample " + s->id + " is shorter than data.samples");
      const auto filtered = bandpass(s->eeg, cfg.band_low_hz, cfg.band_high_hz);
      const auto windows = s->eeg.samples == cfg.samples ? std::vector<EegSegment>{filtered}
                                                         : segment(filtered, window_s, window_s);
      for (std::size_t k = 0; k < windows.size(); ++k) {
        AlignedSample o = *s;
        if (windows.size() > 1) {
          o.id = s->id + "_w" + std::to_string(k);
          o.start_time_s = s->start_time_s + static_cast<double>(k) * window_s;
        }
        auto norm = normalize(windows[k]);
        o.eeg = std::move(norm.segment);
        o.eeg.channel_names = s->eeg.channel_names;
        o.duration_s = window_s;
        json sc = json::array();
        for (const auto& c : norm.scale.channels)
          sc.push_back({{"center", c.center}, {"half_range", c.half_range}, {"constant", c.constant}});
        scales[o.id] = sc;
        w.add(o, false);
      }
    }
    w.commit();
    result = w.manifest();
  }
  write_file_atomic(out / "scales.json", scales.dump(1) + "\n");
  write_run_record(out, cfg, "preprocess", {{"input", root.string()}});
  log_msg(LogLevel::info, "preprocess: " + std::to_string(result.samples.size()) + " segments");
  return result;
}

namespace {

void write_loss_history(const fs::path& out, const TrainResult& r) {
  std::ostringstream csv;
  csv << "epoch,step,total,diffusion,adversarial,frequency,spatial,temporal,discriminator\n";
  for (const auto& s : r.history)
    csv << s.epoch << ',' << s.step << ',' << format_double(s.total) << ',' << format_double(s.diffusion) << ','
        << format_double(s.adversarial) << ',' << format_double(s.frequency) << ',' << format_double(s.spatial)
        << ',' << format_double(s.temporal) << ',' << format_double(s.discriminator) << '\n';
  write_file_atomic(out / "loss_history.csv", csv.str());
}

TrainSummary train_into(const RunConfig& cfg, Variant v, const std::vector<TrainingExample>& train,
                        const GraphSet& graphs, Rng& init, Rng& trng, const fs::path& out,
                        GenerativeModel* keep = nullptr) {
  const RunConfig c = config_for(cfg, v);
  GenerativeModel model = build_model(c, v, graphs, init);
  const auto t0 = std::chrono::steady_clock::now();
  TrainSummary s;
  s.result = train_model(model, c, train, trng);
  s.seconds = seconds_since(t0);
  s.config_hash = c.hash();
  const auto info = save_checkpoint(out / "checkpoint", model.net.params, s.config_hash);
  s.checkpoint_hash = info.checkpoint_hash;
  save_graphs(out, graphs);
  write_loss_history(out, s.result);
  const json j = {{"schema", "v2eg.train_summary"},
                  {"variant", variant_name(v)},
                  {"config_hash", s.config_hash},
                  {"checkpoint_hash", s.checkpoint_hash},
                  {"parameters", model.net.params.count()},
                  {"segments", std::min(train.size(), c.max_segments ? c.max_segments : train.size())},
                  {"epochs_completed", s.result.epochs_completed},
                  {"epoch_diffusion", s.result.epoch_diffusion},
                  {"epoch_total", s.result.epoch_total}};
  write_file_atomic(out / "train_summary.json", j.dump(1) + "\n");
  write_run_record(out, c, "train", {});
  log_msg(LogLevel::info, std::string("train ") + variant_name(v) + ": " + std::to_string(s.result.epochs_completed) +
                              " epochs in " + format_double(s.seconds) + " s");
  if (keep) *keep = std::move(model);
  return s;
}

}  // namespace

TrainSummary cmd_train(const RunConfig& cfg, const fs::path& data, const fs::path& out) {
  cfg.validate();
  const auto root = corpus_root(data);
  const auto split = split_corpus(load_manifest(root), cfg);
  const auto train = load_examples(cfg, root, split.train);
  const auto graphs = corpus_graphs(cfg, train.examples);
  Rng init = Rng(cfg.seed).derive(1), trng = Rng(cfg.seed).derive(2);
  auto s = train_into(cfg, variant_of(cfg), train.examples, graphs, init, trng, out);
  write_run_record(out, cfg, "train", {{"data", root.string()}});
  return s;
}

LoadedRun load_run(const fs::path& run_dir) {
  if (!fs::exists(run_dir / "checkpoint" / "checkpoint.json"))
    throw ConfigError("no checkpoint in run directory " + run_dir.string());
  RunConfig cfg = load_run_config(run_dir / "config.cfg");
  cfg.validate();
  const GraphSet graphs = load_graphs(run_dir);
  Rng init = Rng(cfg.seed).derive(1);
  GenerativeModel model = build_model(cfg, variant_of(cfg), graphs, init);
  const auto info = load_checkpoint(run_dir / "checkpoint", model.net.params, cfg.hash());
  return {cfg, std::move(model), info.checkpoint_hash};
}

Manifest cmd_generate(const RunConfig& cfg, const fs::path& run_dir, const fs::path& data, const fs::path& out,
                      std::size_t count, unsigned threads) {
  cfg.validate();
  const LoadedRun run = load_run(run_dir);
  if (cfg.inference_steps > run.cfg.diffusion_steps)
    throw ConfigError("sample.inference_steps exceeds the trained diffusion.steps");
  const auto root = corpus_root(data);
  auto entries = split_corpus(load_manifest(root), run.cfg).eval;
  if (count > 0 && entries.size() > count) entries.resize(count);
  const auto ex = load_examples(run.cfg, root, entries);
  const auto gen = generate_for(run.model, cfg, ex.examples, cfg.inference_steps, cfg.seed, threads);

  if (fs::exists(out / "corpus")) fs::remove_all(out / "corpus");
  json timing = {{"schema", "v2eg.timing"}, {"threads", threads}, {"samples", json::object()}};
  Manifest m;
  {
    CorpusWriter w(out / "corpus", cfg.hash());
    for (std::size_t i = 0; i < entries.size(); ++i) {
      AlignedSample s = read_sample(root, entries[i]);
      s.eeg = gen.eeg[i];
      s.duration_s = static_cast<double>(s.eeg.samples) / s.eeg.sampling_rate_hz;
      s.provenance = {ProvenanceKind::generated, run.cfg.hash(), run.checkpoint_hash, cfg.seed};
      w.add(s, false);
      timing["samples"][s.id] = gen.seconds[i];
    }
    w.commit();
    m = w.manifest();
  }
  // Wall-clock numbers live outside the corpus so the corpus stays byte-reproducible.
  write_file_atomic(out / "timing.json", timing.dump(1) + "\n");
  write_run_record(out, cfg, "generate",
                   {{"run", run_dir.string()}, {"data", root.string()}, {"count", std::to_string(count)}});
  log_msg(LogLevel::info, "generate: " + std::to_string(m.samples.size()) + " samples");
  return m;
}

QualityReport cmd_evaluate(const RunConfig& cfg, const fs::path& generated, const fs::path& reference,
                           const fs::path& out) {
  const auto groot = corpus_root(generated);
  const auto rroot = corpus_root(reference);
  std::map<std::string, double> times;
  for (const auto& tp : {generated / "timing.json", groot.parent_path() / "timing.json"}) {
    if (!fs::exists(tp)) continue;
    const auto bytes = read_file(tp);
    const json t = json::parse(bytes.begin(), bytes.end());
    for (const auto& [id, v] : t.at("samples").items()) times[id] = v.get<double>();
    break;
  }
  const Manifest rm = load_manifest(rroot);
  std::vector<AlignedSample> gen, ref;
  auto cur = load_corpus(groot);
  while (auto s = cur.next()) {
    const ManifestEntry* e = rm.find(s->id);
    if (!e) throw IoError("reference corpus has no sample " + s->id);
    ref.push_back(read_sample(rroot, *e));
    gen.push_back(std::move(*s));
  }
  if (gen.empty()) throw ReportError("generated corpus is empty");
  std::vector<ReportInput> inputs;
  for (std::size_t i = 0; i < gen.size(); ++i) {
    const auto it = times.find(gen[i].id);
    inputs.push_back({&gen[i].eeg, &ref[i].eeg, it == times.end() ? 0.0 : it->second, gen[i].id, gen[i].subject_id,
                      gen[i].video_id});
  }
  const auto report = build_report(inputs, default_bands(gen[0].eeg.sampling_rate_hz));
  ensure_dir(out);
  write_file_atomic(out / "report.json", report.to_json());
  write_file_atomic(out / "report.csv", report.to_csv());
  write_run_record(out, cfg, "evaluate", {{"generated", groot.string()}, {"reference", rroot.string()}});
  log_msg(LogLevel::info, "evaluate: mse " + format_double(report.aggregates.at("mse").mean) + " over " +
                              std::to_string(report.samples.size()) + " samples");
  return report;
}

void cmd_package(const RunConfig& cfg, const fs::path& generated, const fs::path& out) {
  const auto groot = corpus_root(generated);
  if (fs::exists(out / "dataset")) fs::remove_all(out / "dataset");
  json alignment = json::object();
  std::map<std::string, int> emotions;
  std::set<int> subjects, videos;
  std::set<std::string> sources;
  std::set<std::tuple<std::string, std::string, std::uint64_t>> provenance;
  std::size_t passed = 0, total = 0, channels = 0, samples = 0;
  double rate = 0;
  json video_shape;
  {
    CorpusWriter w(out / "dataset", load_manifest(groot).config_hash);
    auto cur = load_corpus(groot);
    while (auto s = cur.next()) {
      const auto v = validate_alignment(*s);
      json checks = json::array();
      for (const auto& c : v.checks) checks.push_back({{"check", c.name}, {"passed", c.passed}, {"detail", c.detail}});
      alignment[s->id] = {{"passed", v.passed()}, {"checks", checks}};
      passed += v.passed();
      ++total;
      ++emotions[emotion_name(s->emotion)];
      subjects.insert(s->subject_id);
      videos.insert(s->video_id);
      sources.insert(s->video.source_id);
      provenance.insert({s->provenance.config_hash, s->provenance.checkpoint_hash, s->provenance.seed});
      channels = s->eeg.channels;
      samples = s->eeg.samples;
      rate = s->eeg.sampling_rate_hz;
      video_shape = {s->video.frames, s->video.height, s->video.width, 3};
      w.add(*s, false);
    }
    w.commit();
  }
  if (total == 0) throw IoError("nothing to package in " + groot.string());
  json prov = json::array();
  for (const auto& [c, k, seed] : provenance) prov.push_back({{"config_hash", c}, {"checkpoint_hash", k}, {"seed", seed}});
  const json card = {{"schema", "v2eg.dataset_card"},
                     {"version", 1},
                     {"samples", total},
                     {"subjects", subjects},
                     {"videos", videos},
                     {"emotions", emotions},
                     {"eeg", {{"channels", channels}, {"samples", samples}, {"sampling_rate_hz", rate}, {"dtype", "f32"}}},
                     {"video_shape", video_shape},
                     {"video_sources", sources},
                     {"generation", prov},
                     {"alignment", {{"passed", passed}, {"failed", total - passed}}}};
  write_file_atomic(out / "dataset_card.json", card.dump(1) + "\n");
  write_file_atomic(out / "alignment.json", alignment.dump(1) + "\n");
  write_run_record(out, cfg, "package", {{"generated", groot.string()}});
  log_msg(LogLevel::info, "package: " + std::to_string(total) + " samples, " + std::to_string(passed) +
                              " pass alignment");
}

// ---- ablation ----

std::vector<Degradation> AblationResult::degradation() const {
  const auto full = std::find_if(rows.begin(), rows.end(), [](const AblationRow& r) { return r.name == "Full SPGN"; });
  if (full == rows.end()) throw ReportError("ablation result has no Full SPGN row");
  std::vector<Degradation> out;
  for (const auto& r : rows) {
    if (&r == &*full) continue;
    out.push_back({r.name, (r.mse - full->mse) / full->mse, (r.mse - full->mse) / r.mse});
  }
  return out;
}

std::string AblationResult::to_json() const {
  json rj = json::array();
  for (const auto& r : rows)
    rj.push_back({{"name", r.name},
                  {"mse", r.mse},
                  {"correlation", r.correlation},
                  {"mae", r.mae},
                  {"inference_time_s", r.inference_time_s},
                  {"samples", r.samples}});
  json dj = json::array();
  for (const auto& d : degradation())
    dj.push_back({{"name", d.name}, {"relative_to_full", d.vs_full}, {"relative_to_config", d.vs_config}});
  return json{{"schema", "v2eg.ablation"}, {"version", 1}, {"rows", rj}, {"degradation", dj}}.dump(1) + "\n";
}

std::string AblationResult::to_csv() const {
  std::ostringstream out;
  out << "configuration,mse,correlation,mae,inference_time_s,samples\n";
  for (const auto& r : rows)
    out << r.name << ',' << format_double(r.mse) << ',' << format_double(r.correlation) << ',' << format_double(r.mae)
        << ',' << format_double(r.inference_time_s) << ',' << r.samples << '\n';
  return out.str();
}

std::string AblationResult::table() const {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-22s %10s %12s %10s %10s %8s\n", "configuration", "mse", "correlation", "mae",
                "time_s", "samples");
  out << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-22s %10.4f %12.4f %10.4f %10.4f %8zu\n", r.name.c_str(), r.mse, r.correlation,
                  r.mae, r.inference_time_s, r.samples);
    out << line;
  }
  out << "MSE degradation vs Full SPGN\n";
  std::snprintf(line, sizeof line, "%-22s %22s %24s\n", "configuration", "(mse-full)/full %",
                "(mse-full)/config %");
  out << line;
  for (const auto& d : degradation()) {
    std::snprintf(line, sizeof line, "%-22s %22.1f %24.1f\n", d.name.c_str(), 100 * d.vs_full, 100 * d.vs_config);
    out << line;
  }
  return out.str();
}

AblationResult published_ablation() {
  return {{{"Diffusion 100", 0.5016, 0.0053, 0.4013, 0.0452, 10},
           {"Full SPGN", 0.5109, 0.0054, 0.4087, 0.0333, 10},
           {"Diffusion 25", 0.5335, 0.0046, 0.4268, 0.0169, 10},
           {"Diffusion 50", 0.5446, 0.0049, 0.4357, 0.0276, 10},
           {"No Spatial Attention", 0.5907, 0.0042, 0.4726, 0.0293, 10},
           {"Baseline", 0.6726, 0.0037, 0.6181, 0.0224, 10}}};
}

namespace {

AblationRow evaluate_row(const std::string& name, const GenerativeModel& model, const RunConfig& cfg,
                         const ExampleSet& eval, std::size_t steps, unsigned threads) {
  if (steps > cfg.diffusion_steps)
    throw ConfigError(name + " needs " + std::to_string(steps) + " inference steps but diffusion.steps is " +
                      std::to_string(cfg.diffusion_steps));
  // Outputs depend on the seed only; timing reruns are single threaded and
  // the per-sample mean of each run enters a median.
  const auto gen = generate_for(model, cfg, eval.examples, steps, cfg.seed, threads);
  std::vector<double> run_means;
  for (std::size_t r = 0; r < cfg.timing_runs; ++r) {
    const auto g = r == 0 && threads == 1 ? gen : generate_for(model, cfg, eval.examples, steps, cfg.seed, 1);
    double sum = 0;
    for (double s : g.seconds) sum += s;
    run_means.push_back(sum / static_cast<double>(g.seconds.size()));
  }
  std::sort(run_means.begin(), run_means.end());
  const std::size_t k = run_means.size();
  const double median = k % 2 ? run_means[k / 2] : 0.5 * (run_means[k / 2 - 1] + run_means[k / 2]);

  std::vector<ReportInput> inputs;
  for (std::size_t i = 0; i < gen.eeg.size(); ++i)
    inputs.push_back({&gen.eeg[i], &eval.examples[i].eeg, gen.seconds[i], eval.entries[i].id,
                      eval.entries[i].subject_id, eval.entries[i].video_id});
  const auto rep = build_report(inputs, default_bands(cfg.sampling_rate_hz));
  log_msg(LogLevel::info, "ablate " + name + ": mse " + format_double(rep.aggregates.at("mse").mean));
  return {name, rep.aggregates.at("mse").mean, rep.aggregates.at("correlation").mean, rep.aggregates.at("mae").mean,
          median, gen.eeg.size()};
}

}  // namespace

AblationResult cmd_ablate(const RunConfig& cfg, const fs::path& data, const fs::path& out, const AblateOptions& opt) {
  cfg.validate();
  if (cfg.diffusion_steps < 100) throw ConfigError("the ablation preset samples with 100 steps; diffusion.steps must be >= 100");
  const auto root = corpus_root(data);
  const auto split = split_corpus(load_manifest(root), cfg);
  auto eval_entries = split.eval;
  if (eval_entries.size() > cfg.eval_samples) eval_entries.resize(cfg.eval_samples);
  const auto eval = load_examples(cfg, root, eval_entries);

  std::map<Variant, GenerativeModel> models;
  if (opt.train_each) {
    const auto train = load_examples(cfg, root, split.train);
    const auto graphs = corpus_graphs(cfg, train.examples);
    for (Variant v : {Variant::full, Variant::no_attention, Variant::baseline}) {
      // Fresh parameter streams per configuration unless shared_init.
      Rng init = Rng(cfg.seed).derive(opt.shared_init ? 1 : 100 + static_cast<std::uint64_t>(v));
      Rng trng = Rng(cfg.seed).derive(2);
      GenerativeModel m;
      train_into(cfg, v, train.examples, graphs, init, trng, out / variant_name(v), &m);
      models.emplace(v, std::move(m));
    }
  } else {
    const std::pair<Variant, fs::path> runs[] = {
        {Variant::full, opt.full_run}, {Variant::no_attention, opt.no_attention_run}, {Variant::baseline, opt.baseline_run}};
    for (const auto& [v, path] : runs) {
      if (path.empty()) throw ConfigError(std::string("missing checkpoint for configuration ") + variant_name(v));
      auto run = load_run(path);
      if (variant_of(run.cfg) != v)
        throw ConfigError(path.string() + " holds a " + variant_name(variant_of(run.cfg)) + " model, expected " +
                          variant_name(v));
      models.emplace(v, std::move(run.model));
    }
  }

  AblationResult res;
  res.rows.push_back(evaluate_row("Full SPGN", models.at(Variant::full), cfg, eval, cfg.inference_steps, opt.threads));
  res.rows.push_back(evaluate_row("Baseline", models.at(Variant::baseline), cfg, eval, cfg.inference_steps, opt.threads));
  res.rows.push_back(
      evaluate_row("No Spatial Attention", models.at(Variant::no_attention), cfg, eval, cfg.inference_steps, opt.threads));
  for (std::size_t steps : {25, 50, 100})
    res.rows.push_back(
        evaluate_row("Diffusion " + std::to_string(steps), models.at(Variant::full), cfg, eval, steps, opt.threads));

  ensure_dir(out);
  write_file_atomic(out / "ablation.json", res.to_json());
  write_file_atomic(out / "ablation.csv", res.to_csv());
  write_file_atomic(out / "ablation.txt", res.table());
  const auto published = published_ablation();
  write_file_atomic(out / "published_degradation.txt", published.table());
  write_run_record(out, cfg, "ablate", {{"data", root.string()}, {"train_each", opt.train_each ? "true" : "false"},
                                        {"shared_init", opt.shared_init ? "true" : "false"}});
  return res;
}

void cmd_report_plots(const fs::path& report, const fs::path& out) {
  const auto bytes = read_file(report);
  const auto rep = QualityReport::from_json(std::string(bytes.begin(), bytes.end()));
  std::ostringstream metrics, bands;
  metrics << "id,subject_id,video_id,mse,mae,correlation,snr_db,inference_time_s\n";
  std::vector<std::string> names;
  if (!rep.samples.empty())
    for (const auto& [b, v] : rep.samples[0].band_similarity) names.push_back(b);
  // Spectral order rather than alphabetical.
  const std::vector<std::string> order{"delta", "theta", "alpha", "beta", "gamma"};
  std::vector<std::string> cols;
  for (const auto& o : order)
    if (std::find(names.begin(), names.end(), o) != names.end()) cols.push_back(o);
  for (const auto& n : names)
    if (std::find(cols.begin(), cols.end(), n) == cols.end()) cols.push_back(n);
  bands << "id";
  for (const auto& c : cols) bands << ',' << c;
  bands << '\n';
  for (const auto& s : rep.samples) {
    metrics << s.id << ',' << s.subject_id << ',' << s.video_id << ',' << format_double(s.mse) << ','
            << format_double(s.mae) << ',' << format_double(s.correlation) << ',' << format_double(s.snr_db) << ','
            << format_double(s.inference_time_s) << '\n';
    bands << s.id;
    for (const auto& c : cols) bands << ',' << format_double(s.band_similarity.at(c));
    bands << '\n';
  }
  ensure_dir(out);
  write_file_atomic(out / "metrics.csv", metrics.str());
  write_file_atomic(out / "band_similarity.csv", bands.str());
}

}  // namespace v2eg
