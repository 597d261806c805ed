#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "v2eg/conditioning.hpp"
#include "v2eg/params.hpp"
#include "v2eg/preprocessing.hpp"
#include "v2eg/rng.hpp"

namespace v2eg {

// ---- array files ----
// 64-byte header: "V2EG" | u16 version | u8 dtype | u8 ndim | 8 x u32 dims |
// zero padding, then the row-major payload. Everything little endian.
enum class DType : std::uint8_t { f32 = 0, f64 = 1, u8 = 2 };

inline constexpr std::size_t kArrayHeaderBytes = 64;
inline constexpr std::uint16_t kArrayVersion = 1;
inline constexpr std::size_t kMaxDims = 8;

std::string dtype_name(DType t);
std::size_t dtype_size(DType t);

struct RawArray {
  DType dtype{DType::f64};
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> payload;  // little endian

  std::size_t elements() const;
  static RawArray from_f64(std::vector<std::uint32_t> dims, std::span<const double> values);
  // Values are rounded to float.
  static RawArray from_f32(std::vector<std::uint32_t> dims, std::span<const double> values);
  static RawArray from_u8(std::vector<std::uint32_t> dims, std::span<const std::uint8_t> values);
  // f32 and f64 payloads widened to double; u8 payloads rejected.
  std::vector<double> to_f64() const;
};

std::vector<std::uint8_t> encode_array(const RawArray& a);
// Throws IoError on bad magic, version, dtype, ndim or payload length.
RawArray decode_array(std::span<const std::uint8_t> bytes, const std::string& label = "array");

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
// Writes a sibling temp file, flushes it and renames it over path.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

std::string hex64(std::uint64_t v);

// ---- samples ----
enum class ProvenanceKind { real, generated };

struct Provenance {
  ProvenanceKind kind{ProvenanceKind::real};
  std::string config_hash;
  std::string checkpoint_hash;
  std::uint64_t seed{0};

  bool operator==(const Provenance&) const = default;
};

struct AlignedSample {
  std::string id;
  int subject_id{0};
  int video_id{0};
  double start_time_s{0.0};
  VideoClip video;
  EegSegment eeg;  // stored as f32
  double duration_s{0.0};
  Emotion emotion{Emotion::neutral};
  Provenance provenance;

  double sampling_rate_hz() const { return eeg.sampling_rate_hz; }
  // samples == round(duration_s * sampling_rate_hz).
  bool consistent() const;
  // Throws ValidationError for malformed ids, arrays or rates. Alignment
  // problems are reported by validate_alignment, not here.
  void validate() const;
};

struct AlignmentCheck {
  std::string name;
  bool passed{false};
  std::string detail;
};

struct AlignmentVerdict {
  std::vector<AlignmentCheck> checks;  // eeg_samples, video_frames, start_time
  bool passed() const;
};

AlignmentVerdict validate_alignment(const AlignedSample& s);

// ---- manifest ----
struct FileEntry {
  std::string role;  // video, eeg, meta
  std::string path;  // relative to the corpus root
  std::string dtype;  // f32, f64, u8 or json
  std::vector<std::uint32_t> shape;
  std::uint64_t bytes{0};
  std::string fnv1a64;  // 16 hex digits
};

struct ManifestEntry {
  std::string id;
  int subject_id{0};
  int video_id{0};
  Emotion emotion{Emotion::neutral};
  ProvenanceKind provenance{ProvenanceKind::real};
  std::vector<FileEntry> files;

  const FileEntry& file(const std::string& role) const;
};

struct Manifest {
  static constexpr const char* kSchema = "v2eg.manifest";
  static constexpr int kFormatVersion = 1;

  std::string config_hash;
  std::vector<ManifestEntry> samples;

  const ManifestEntry* find(const std::string& id) const;
  std::string to_json() const;
  // Throws IoError when the document does not follow the schema.
  static Manifest from_json(const std::string& text);
};

inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kLockFile = ".v2eg.lock";

Manifest load_manifest(const std::filesystem::path& root);

// Single writer per root: the constructor takes the lock file (ConflictError
// when it is held) and the destructor releases it. An existing manifest is
// extended.
class CorpusWriter {
 public:
  explicit CorpusWriter(std::filesystem::path root, std::string config_hash = {});
  ~CorpusWriter();
  CorpusWriter(const CorpusWriter&) = delete;
  CorpusWriter& operator=(const CorpusWriter&) = delete;

  // Duplicate id -> ConflictError; write failure -> IoError with the
  // manifest on disk unchanged. With commit false the manifest is only
  // rewritten by a later commit().
  ManifestEntry add(const AlignedSample& sample, bool commit = true);
  void commit();
  const Manifest& manifest() const { return manifest_; }
  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
  Manifest manifest_;
  bool dirty_{false};
};

ManifestEntry write_sample(const AlignedSample& sample, const std::filesystem::path& root);

struct CorpusFilter {
  std::optional<int> subject_id;
  std::optional<int> video_id;
  std::optional<Emotion> emotion;
  std::optional<ProvenanceKind> provenance;

  bool matches(const ManifestEntry& e) const;
};

// Reads one sample, verifying byte lengths and checksums against the
// manifest. Missing or corrupted files raise IoError naming the sample id.
AlignedSample read_sample(const std::filesystem::path& root, const ManifestEntry& entry);

// Lazy pass over the manifest in order; each next() loads one sample.
class CorpusCursor {
 public:
  CorpusCursor(std::filesystem::path root, CorpusFilter filter = {});
  std::optional<AlignedSample> next();
  const Manifest& manifest() const { return manifest_; }
  // Entries passing the filter, without loading them.
  std::vector<const ManifestEntry*> matching() const;

 private:
  std::filesystem::path root_;
  Manifest manifest_;
  CorpusFilter filter_;
  std::size_t pos_{0};
};

CorpusCursor load_corpus(const std::filesystem::path& root, CorpusFilter filter = {});

// ---- synthetic fixture ----
struct FixtureConfig {
  int subjects{15};
  int videos{72};
  std::size_t channels{8};
  std::size_t samples{400};
  double sampling_rate_hz{200.0};
  std::size_t frame_count{4};
  std::size_t frame_size{32};
  double frame_hz{2.0};
  // happy / sad ratio of (alpha power / beta power).
  double alpha_beta_factor{2.0};
  double noise_std{0.1};
  double gain_low{0.7};
  double gain_high{1.0};
  int graph_k{4};

  void validate() const;
  std::size_t sample_count() const { return static_cast<std::size_t>(subjects) * static_cast<std::size_t>(videos); }
};

// Video v carries emotion (v - 1) % 4 in Emotion order.
Emotion fixture_emotion(int video_id);

struct FixtureTruth {
  struct Oscillator {
    double freq_hz;
    double amplitude;
    double phase;
  };
  std::vector<std::vector<Oscillator>> per_emotion;  // indexed by Emotion
  std::vector<double> channel_gain;
  // channels x channels; rows of the normalized E-Graph adjacency scaled to
  // unit norm, so smoothed white noise keeps variance noise_std^2.
  std::vector<double> smoothing;
  double noise_std{0.0};
  std::string to_json() const;
};

FixtureTruth fixture_truth(const FixtureConfig& cfg, std::uint64_t seed);

// Deterministic in (cfg, seed). Sample ids are s<subject>_v<video>.
AlignedSample synth_sample(const FixtureConfig& cfg, const FixtureTruth& truth, int subject, int video,
                           std::uint64_t seed);

// Writes the corpus plus fixture_truth.json under root; returns the manifest.
Manifest synth_fixture(const FixtureConfig& cfg, std::uint64_t seed, const std::filesystem::path& root,
                       const std::string& config_hash = {});

// ---- checkpoints ----
// dir/checkpoint.json plus one f64 array file per parameter in store order.
struct CheckpointInfo {
  std::string config_hash;
  std::string checkpoint_hash;  // FNV-1a over names and parameter bytes
  std::size_t parameters{0};
};

std::string params_hash(const ParamStore& store);
CheckpointInfo save_checkpoint(const std::filesystem::path& dir, const ParamStore& store,
                               const std::string& config_hash);
// Overwrites the values of store, which must hold the same names and shapes.
// Throws IoError on damaged files and ConfigError on a structural or
// config-hash mismatch (expected_config_hash empty skips the hash check).
CheckpointInfo load_checkpoint(const std::filesystem::path& dir, ParamStore& store,
                               const std::string& expected_config_hash = {});

}  // namespace v2eg
