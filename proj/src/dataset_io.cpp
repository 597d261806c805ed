#include "v2eg/dataset_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include <unistd.h>

#include "json.hpp"
#include "v2eg/electrode_graphs.hpp"
#include "v2eg/errors.hpp"

namespace v2eg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'V', '2', 'E', 'G'};

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::uint8_t* out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = v << 8 | p[i];
  return v;
}

std::uint64_t file_checksum(std::span<const std::uint8_t> bytes) { return fnv1a64(bytes.data(), bytes.size()); }

const char* provenance_name(ProvenanceKind k) { return k == ProvenanceKind::real ? "real" : "generated"; }

ProvenanceKind parse_provenance(const std::string& s) {
  if (s == "real") return ProvenanceKind::real;
  if (s == "generated") return ProvenanceKind::generated;
  throw IoError("unknown provenance '" + s + "'");
}

std::string sample_dir(const std::string& id) { return "samples/" + id; }

json file_json(const FileEntry& f) {
  return {{"role", f.role},   {"path", f.path},   {"dtype", f.dtype}, {"shape", f.shape},
          {"byte_order", "little"}, {"bytes", f.bytes}, {"fnv1a64", f.fnv1a64}};
}

FileEntry make_file(const std::string& role, const std::string& path, const std::string& dtype,
                    std::vector<std::uint32_t> shape, std::span<const std::uint8_t> bytes) {
  return {role, path, dtype, std::move(shape), bytes.size(), hex64(file_checksum(bytes))};
}

std::vector<std::uint8_t> verified_read(const fs::path& root, const std::string& owner, const FileEntry& f) {
  const fs::path p = root / f.path;
  if (!fs::exists(p)) throw IoError(owner + ": missing file " + f.path);
  auto bytes = read_file(p);
  if (bytes.size() != f.bytes)
    throw IoError(owner + ": " + f.path + " declared " + std::to_string(f.bytes) + " bytes, actual " +
                  std::to_string(bytes.size()));
  const auto sum = hex64(file_checksum(bytes));
  if (sum != f.fnv1a64)
    throw IoError(owner + ": " + f.path + " checksum declared " + f.fnv1a64 + ", actual " + sum);
  return bytes;
}

std::vector<std::uint32_t> u32_dims(std::initializer_list<std::size_t> dims) {
  std::vector<std::uint32_t> out;
  for (auto d : dims) {
    if (d > UINT32_MAX) throw ValidationError("array dimension exceeds 32 bits");
    out.push_back(static_cast<std::uint32_t>(d));
  }
  return out;
}

}  // namespace

// ---- array files ----

std::string dtype_name(DType t) {
  switch (t) {
    case DType::f32: return "f32";
    case DType::f64: return "f64";
    case DType::u8: return "u8";
  }
  return "?";
}

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::f32: return 4;
    case DType::f64: return 8;
    case DType::u8: return 1;
  }
  return 0;
}

std::size_t RawArray::elements() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

RawArray RawArray::from_f64(std::vector<std::uint32_t> dims, std::span<const double> values) {
  RawArray a{DType::f64, std::move(dims), {}};
  if (a.elements() != values.size()) throw DimensionError("array dims do not match value count");
  a.payload.resize(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) put_u64(&a.payload[i * 8], std::bit_cast<std::uint64_t>(values[i]));
  return a;
}

RawArray RawArray::from_f32(std::vector<std::uint32_t> dims, std::span<const double> values) {
  RawArray a{DType::f32, std::move(dims), {}};
  if (a.elements() != values.size()) throw DimensionError("array dims do not match value count");
  a.payload.reserve(values.size() * 4);
  for (double v : values) put_u32(a.payload, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return a;
}

RawArray RawArray::from_u8(std::vector<std::uint32_t> dims, std::span<const std::uint8_t> values) {
  RawArray a{DType::u8, std::move(dims), {values.begin(), values.end()}};
  if (a.elements() != values.size()) throw DimensionError("array dims do not match value count");
  return a;
}

std::vector<double> RawArray::to_f64() const {
  std::vector<double> out(elements());
  if (dtype == DType::f64) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::bit_cast<double>(get_u64(&payload[i * 8]));
  } else if (dtype == DType::f32) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::bit_cast<float>(get_u32(&payload[i * 4]));
  } else {
    throw IoError("u8 array cannot be read as floating point");
  }
  return out;
}

std::vector<std::uint8_t> encode_array(const RawArray& a) {
  if (a.dims.empty() || a.dims.size() > kMaxDims) throw DimensionError("array rank must be 1..8");
  if (a.payload.size() != a.elements() * dtype_size(a.dtype)) throw DimensionError("array payload length mismatch");
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  out.reserve(kArrayHeaderBytes + a.payload.size());
  put_u16(out, kArrayVersion);
  out.push_back(static_cast<std::uint8_t>(a.dtype));
  out.push_back(static_cast<std::uint8_t>(a.dims.size()));
  for (std::size_t i = 0; i < kMaxDims; ++i) put_u32(out, i < a.dims.size() ? a.dims[i] : 0);
  out.resize(kArrayHeaderBytes, 0);
  out.insert(out.end(), a.payload.begin(), a.payload.end());
  return out;
}

RawArray decode_array(std::span<const std::uint8_t> bytes, const std::string& label) {
  if (bytes.size() < kArrayHeaderBytes) throw IoError(label + ": shorter than the 64-byte header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw IoError(label + ": bad magic");
  const std::uint16_t version = static_cast<std::uint16_t>(bytes[4] | bytes[5] << 8);
  if (version != kArrayVersion) throw IoError(label + ": unsupported version " + std::to_string(version));
  if (bytes[6] > 2) throw IoError(label + ": unknown dtype code " + std::to_string(bytes[6]));
  RawArray a;
  a.dtype = static_cast<DType>(bytes[6]);
  const std::size_t ndim = bytes[7];
  if (ndim == 0 || ndim > kMaxDims) throw IoError(label + ": bad ndim " + std::to_string(ndim));
  for (std::size_t i = 0; i < ndim; ++i) a.dims.push_back(get_u32(&bytes[8 + 4 * i]));
  const std::size_t expect = kArrayHeaderBytes + a.elements() * dtype_size(a.dtype);
  if (bytes.size() != expect)
    throw IoError(label + ": header implies " + std::to_string(expect) + " bytes, file has " +
                  std::to_string(bytes.size()));
  a.payload.assign(bytes.begin() + kArrayHeaderBytes, bytes.end());
  return a;
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for " + path.string());
  return bytes;
}

void write_file_atomic(const fs::path& path, std::span<const std::uint8_t> bytes) {
  const fs::path tmp = path.string() + ".tmp." + std::to_string(::getpid());
  std::FILE* f = std::fopen(tmp.c_str(), "wb");
  if (!f) throw IoError("cannot create " + tmp.string());
  const bool ok = std::fwrite(bytes.data(), 1, bytes.size(), f) == bytes.size() && std::fflush(f) == 0;
  if (std::fclose(f) != 0 || !ok) {
    std::error_code ec;
    fs::remove(tmp, ec);
    throw IoError("write failed for " + path.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("rename failed for " + path.string());
  }
}

void write_file_atomic(const fs::path& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---- samples ----

bool AlignedSample::consistent() const {
  return static_cast<double>(eeg.samples) == std::round(duration_s * eeg.sampling_rate_hz);
}

void AlignedSample::validate() const {
  if (id.empty() || id.find_first_of("/\\") != std::string::npos || id == "." || id == "..")
    throw ValidationError("sample id '" + id + "' is not a plain file name");
  if (!std::isfinite(start_time_s)) throw ValidationError("sample " + id + ": start time not finite");
  if (!(duration_s > 0.0) || !std::isfinite(duration_s)) throw ValidationError("sample " + id + ": duration must be > 0");
  video.validate();
  eeg.validate();
}

bool AlignmentVerdict::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const AlignmentCheck& c) { return c.passed; });
}

AlignmentVerdict validate_alignment(const AlignedSample& s) {
  AlignmentVerdict v;
  std::ostringstream a, b, c;
  const double want_samples = std::round(s.duration_s * s.eeg.sampling_rate_hz);
  a << "eeg has " << s.eeg.samples << " samples, duration x rate = " << want_samples;
  v.checks.push_back({"eeg_samples", static_cast<double>(s.eeg.samples) == want_samples, a.str()});
  const double want_frames = s.duration_s * s.video.frame_rate_hz;
  b << "video has " << s.video.frames << " frames, duration x frame rate = " << want_frames;
  v.checks.push_back({"video_frames", std::abs(static_cast<double>(s.video.frames) - want_frames) <= 1.0, b.str()});
  c << "start time " << s.start_time_s << " s";
  v.checks.push_back({"start_time", s.start_time_s >= 0.0, c.str()});
  return v;
}

// ---- manifest ----

const FileEntry& ManifestEntry::file(const std::string& role) const {
  for (const auto& f : files)
    if (f.role == role) return f;
  throw IoError("sample " + id + ": manifest has no " + role + " file");
}

const ManifestEntry* Manifest::find(const std::string& id) const {
  for (const auto& e : samples)
    if (e.id == id) return &e;
  return nullptr;
}

std::string Manifest::to_json() const {
  json j;
  j["schema"] = kSchema;
  j["format_version"] = kFormatVersion;
  j["config_hash"] = config_hash;
  j["samples"] = json::array();
  for (const auto& e : samples) {
    json files = json::array();
    for (const auto& f : e.files) files.push_back(file_json(f));
    j["samples"].push_back({{"id", e.id},
                            {"subject_id", e.subject_id},
                            {"video_id", e.video_id},
                            {"emotion", emotion_name(e.emotion)},
                            {"provenance", provenance_name(e.provenance)},
                            {"files", files}});
  }
  return j.dump(1) + "\n";
}

Manifest Manifest::from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.at("schema") != kSchema) throw IoError("manifest schema is not " + std::string(kSchema));
    if (j.at("format_version") != kFormatVersion) throw IoError("unsupported manifest format_version");
    Manifest m;
    m.config_hash = j.at("config_hash").get<std::string>();
    for (const auto& s : j.at("samples")) {
      ManifestEntry e;
      e.id = s.at("id").get<std::string>();
      e.subject_id = s.at("subject_id").get<int>();
      e.video_id = s.at("video_id").get<int>();
      e.emotion = parse_emotion(s.at("emotion").get<std::string>());
      e.provenance = parse_provenance(s.at("provenance").get<std::string>());
      for (const auto& f : s.at("files")) {
        if (f.at("byte_order") != "little") throw IoError("sample " + e.id + ": unsupported byte order");
        e.files.push_back({f.at("role").get<std::string>(), f.at("path").get<std::string>(),
                           f.at("dtype").get<std::string>(), f.at("shape").get<std::vector<std::uint32_t>>(),
                           f.at("bytes").get<std::uint64_t>(), f.at("fnv1a64").get<std::string>()});
      }
      m.samples.push_back(std::move(e));
    }
    return m;
  } catch (const json::exception& ex) {
    throw IoError(std::string("malformed manifest: ") + ex.what());
  } catch (const ValidationError& ex) {
    throw IoError(std::string("malformed manifest: ") + ex.what());
  }
}

Manifest load_manifest(const fs::path& root) {
  const auto bytes = read_file(root / kManifestFile);
  return Manifest::from_json(std::string(bytes.begin(), bytes.end()));
}

CorpusWriter::CorpusWriter(fs::path root, std::string config_hash) : root_(std::move(root)) {
  std::error_code ec;
  fs::create_directories(root_, ec);
  if (ec) throw IoError("cannot create corpus root " + root_.string());
  const fs::path lock = root_ / kLockFile;
  std::FILE* f = std::fopen(lock.c_str(), "wx");
  if (!f) throw ConflictError("corpus " + root_.string() + " is locked by another writer (" + lock.string() + ")");
  std::fprintf(f, "%d\n", static_cast<int>(::getpid()));
  std::fclose(f);
  try {
    if (fs::exists(root_ / kManifestFile)) {
      manifest_ = load_manifest(root_);
      if (!config_hash.empty() && manifest_.config_hash.empty()) manifest_.config_hash = config_hash;
    } else {
      manifest_.config_hash = std::move(config_hash);
      dirty_ = true;
    }
  } catch (...) {
    fs::remove(lock, ec);
    throw;
  }
}

CorpusWriter::~CorpusWriter() {
  try {
    if (dirty_) commit();
  } catch (...) {
  }
  std::error_code ec;
  fs::remove(root_ / kLockFile, ec);
}

ManifestEntry CorpusWriter::add(const AlignedSample& s, bool commit_now) {
  s.validate();
  if (manifest_.find(s.id)) throw ConflictError("sample id '" + s.id + "' already exists in " + root_.string());
  const std::string rel = sample_dir(s.id);
  const fs::path dir = root_ / rel;
  ManifestEntry e{s.id, s.subject_id, s.video_id, s.emotion, s.provenance.kind, {}};
  try {
    fs::create_directories(dir);
    const auto video = encode_array(
        RawArray::from_u8(u32_dims({s.video.frames, s.video.height, s.video.width, 3}), s.video.pixels));
    const auto eeg = encode_array(RawArray::from_f32(u32_dims({s.eeg.channels, s.eeg.samples}), s.eeg.data));
    json meta = {{"id", s.id},
                 {"subject_id", s.subject_id},
                 {"video_id", s.video_id},
                 {"start_time_s", s.start_time_s},
                 {"duration_s", s.duration_s},
                 {"sampling_rate_hz", s.eeg.sampling_rate_hz},
                 {"frame_rate_hz", s.video.frame_rate_hz},
                 {"video_source", s.video.source_id},
                 {"emotion", emotion_name(s.emotion)},
                 {"channel_names", s.eeg.channel_names},
                 {"normalized", s.eeg.normalized},
                 {"alignment_consistent", s.consistent()},
                 {"provenance",
                  {{"kind", provenance_name(s.provenance.kind)},
                   {"config_hash", s.provenance.config_hash},
                   {"checkpoint_hash", s.provenance.checkpoint_hash},
                   {"seed", s.provenance.seed}}}};
    const std::string meta_text = meta.dump(1) + "\n";
    const std::span meta_bytes(reinterpret_cast<const std::uint8_t*>(meta_text.data()), meta_text.size());
    write_file_atomic(dir / "video.v2a", video);
    write_file_atomic(dir / "eeg.v2a", eeg);
    write_file_atomic(dir / "meta.json", meta_bytes);
    e.files.push_back(make_file("video", rel + "/video.v2a", "u8",
                                u32_dims({s.video.frames, s.video.height, s.video.width, 3}), video));
    e.files.push_back(make_file("eeg", rel + "/eeg.v2a", "f32", u32_dims({s.eeg.channels, s.eeg.samples}), eeg));
    e.files.push_back(make_file("meta", rel + "/meta.json", "json", {}, meta_bytes));
  } catch (const std::exception& ex) {
    std::error_code ec;
    fs::remove_all(dir, ec);
    throw IoError("writing sample " + s.id + " failed: " + ex.what());
  }
  manifest_.samples.push_back(e);
  dirty_ = true;
  if (commit_now) commit();
  return e;
}

void CorpusWriter::commit() {
  write_file_atomic(root_ / kManifestFile, manifest_.to_json());
  dirty_ = false;
}

ManifestEntry write_sample(const AlignedSample& sample, const fs::path& root) {
  CorpusWriter w(root);
  return w.add(sample);
}

bool CorpusFilter::matches(const ManifestEntry& e) const {
  return (!subject_id || *subject_id == e.subject_id) && (!video_id || *video_id == e.video_id) &&
         (!emotion || *emotion == e.emotion) && (!provenance || *provenance == e.provenance);
}

AlignedSample read_sample(const fs::path& root, const ManifestEntry& entry) {
  const std::string owner = "sample " + entry.id;
  const auto& vf = entry.file("video");
  const auto& ef = entry.file("eeg");
  const auto video = decode_array(verified_read(root, owner, vf), owner + " video");
  const auto eeg = decode_array(verified_read(root, owner, ef), owner + " eeg");
  const auto meta_bytes = verified_read(root, owner, entry.file("meta"));
  if (video.dtype != DType::u8 || video.dims != vf.shape || video.dims.size() != 4 || video.dims[3] != 3)
    throw IoError(owner + ": video array does not match the manifest shape");
  if (eeg.dtype != DType::f32 || eeg.dims != ef.shape || eeg.dims.size() != 2)
    throw IoError(owner + ": eeg array does not match the manifest shape");
  try {
    const json m = json::parse(meta_bytes.begin(), meta_bytes.end());
    AlignedSample s;
    s.id = m.at("id").get<std::string>();
    if (s.id != entry.id) throw IoError(owner + ": metadata id is " + s.id);
    s.subject_id = m.at("subject_id").get<int>();
    s.video_id = m.at("video_id").get<int>();
    s.start_time_s = m.at("start_time_s").get<double>();
    s.duration_s = m.at("duration_s").get<double>();
    s.emotion = parse_emotion(m.at("emotion").get<std::string>());
    s.video.frames = video.dims[0];
    s.video.height = video.dims[1];
    s.video.width = video.dims[2];
    s.video.pixels = video.payload;
    s.video.frame_rate_hz = m.at("frame_rate_hz").get<double>();
    s.video.source_id = m.at("video_source").get<std::string>();
    s.eeg.channels = eeg.dims[0];
    s.eeg.samples = eeg.dims[1];
    s.eeg.data = eeg.to_f64();
    s.eeg.sampling_rate_hz = m.at("sampling_rate_hz").get<double>();
    s.eeg.channel_names = m.at("channel_names").get<std::vector<std::string>>();
    s.eeg.normalized = m.at("normalized").get<bool>();
    const auto& p = m.at("provenance");
    s.provenance = {parse_provenance(p.at("kind").get<std::string>()), p.at("config_hash").get<std::string>(),
                    p.at("checkpoint_hash").get<std::string>(), p.at("seed").get<std::uint64_t>()};
    return s;
  } catch (const json::exception& ex) {
    throw IoError(owner + ": malformed metadata: " + ex.what());
  } catch (const ValidationError& ex) {
    throw IoError(owner + ": malformed metadata: " + ex.what());
  }
}

CorpusCursor::CorpusCursor(fs::path root, CorpusFilter filter)
    : root_(std::move(root)), manifest_(load_manifest(root_)), filter_(filter) {}

std::optional<AlignedSample> CorpusCursor::next() {
  while (pos_ < manifest_.samples.size()) {
    const auto& e = manifest_.samples[pos_++];
    if (filter_.matches(e)) return read_sample(root_, e);
  }
  return std::nullopt;
}

std::vector<const ManifestEntry*> CorpusCursor::matching() const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : manifest_.samples)
    if (filter_.matches(e)) out.push_back(&e);
  return out;
}

CorpusCursor load_corpus(const fs::path& root, CorpusFilter filter) { return CorpusCursor(root, filter); }

// ---- synthetic fixture ----

void FixtureConfig::validate() const {
  if (subjects < 1 || videos < 1) throw ConfigError("fixture needs at least one subject and one video");
  if (channels < 2 || channels > 62) throw ConfigError("fixture channels must be in [2, 62]");
  if (!(sampling_rate_hz > 60.0)) throw ConfigError("fixture sampling rate must exceed 60 Hz");
  if (samples < 2) throw ConfigError("fixture samples must be >= 2");
  if (frame_count < 1 || frame_size < 16 || !(frame_hz > 0.0)) throw ConfigError("fixture video shape invalid");
  if (!(alpha_beta_factor > 0.0)) throw ConfigError("alpha_beta_factor must be > 0");
  if (!(noise_std >= 0.0)) throw ConfigError("noise_std must be >= 0");
  if (!(gain_low > 0.0) || !(gain_high >= gain_low)) throw ConfigError("gain range invalid");
  if (graph_k < 1 || static_cast<std::size_t>(graph_k) >= channels) throw ConfigError("graph_k must be in [1, channels)");
}

Emotion fixture_emotion(int video_id) { return static_cast<Emotion>(((video_id - 1) % kEmotionCount + kEmotionCount) % kEmotionCount); }

std::string FixtureTruth::to_json() const {
  json j;
  j["noise_std"] = noise_std;
  j["channel_gain"] = channel_gain;
  j["emotions"] = json::object();
  for (std::size_t e = 0; e < per_emotion.size(); ++e) {
    json osc = json::array();
    for (const auto& o : per_emotion[e])
      osc.push_back({{"freq_hz", o.freq_hz}, {"amplitude", o.amplitude}, {"phase", o.phase}});
    j["emotions"][emotion_name(static_cast<Emotion>(e))] = osc;
  }
  return j.dump(1) + "\n";
}

FixtureTruth fixture_truth(const FixtureConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng = Rng(seed).derive(0x7472757468ULL);
  FixtureTruth t;
  t.noise_std = cfg.noise_std;
  // alpha/beta power ratio per emotion relative to sad; happy / sad = factor.
  const double f = cfg.alpha_beta_factor;
  const double ratio[kEmotionCount] = {f, 1.0, std::sqrt(f), 1.0 / std::sqrt(f)};
  const double beta_amp = 0.5;
  for (int e = 0; e < kEmotionCount; ++e) {
    std::vector<FixtureTruth::Oscillator> osc;
    osc.push_back({6.0, 0.3, rng.uniform(0.0, 2 * std::numbers::pi)});
    osc.push_back({10.0, beta_amp * std::sqrt(ratio[e]), rng.uniform(0.0, 2 * std::numbers::pi)});
    osc.push_back({20.0, beta_amp, rng.uniform(0.0, 2 * std::numbers::pi)});
    t.per_emotion.push_back(std::move(osc));
  }
  for (std::size_t c = 0; c < cfg.channels; ++c) t.channel_gain.push_back(rng.uniform(cfg.gain_low, cfg.gain_high));
  const auto layout = layout_subset(standard_layout_62(), cfg.channels);
  t.smoothing = normalized_adjacency(build_e_graph(layout, cfg.graph_k));
  const std::size_t n = cfg.channels;
  for (std::size_t i = 0; i < n; ++i) {
    double ss = 0;
    for (std::size_t j = 0; j < n; ++j) ss += t.smoothing[i * n + j] * t.smoothing[i * n + j];
    for (std::size_t j = 0; j < n; ++j) t.smoothing[i * n + j] /= std::sqrt(ss);
  }
  return t;
}

AlignedSample synth_sample(const FixtureConfig& cfg, const FixtureTruth& truth, int subject, int video,
                           std::uint64_t seed) {
  char id[32];
  std::snprintf(id, sizeof id, "s%02d_v%03d", subject, video);
  Rng rng = Rng(seed).derive(fnv1a64(id));
  AlignedSample s;
  s.id = id;
  s.subject_id = subject;
  s.video_id = video;
  s.emotion = fixture_emotion(video);
  s.start_time_s = std::round(rng.uniform(0.0, 600.0) * 100.0) / 100.0;
  s.duration_s = static_cast<double>(cfg.samples) / cfg.sampling_rate_hz;

  const std::size_t n = cfg.channels, len = cfg.samples;
  s.eeg = EegSegment::zeros(n, len, cfg.sampling_rate_hz);
  const auto layout = layout_subset(standard_layout_62(), n);
  s.eeg.channel_names = layout.names;
  std::vector<double> wave(len, 0.0);
  for (const auto& o : truth.per_emotion[static_cast<int>(s.emotion)])
    for (std::size_t t = 0; t < len; ++t)
      wave[t] += o.amplitude * std::sin(2 * std::numbers::pi * o.freq_hz * t / cfg.sampling_rate_hz + o.phase);
  std::vector<double> white(n * len);
  for (auto& v : white) v = rng.normal();
  for (std::size_t c = 0; c < n; ++c)
    for (std::size_t t = 0; t < len; ++t) {
      double z = 0;
      for (std::size_t j = 0; j < n; ++j) z += truth.smoothing[c * n + j] * white[j * len + t];
      s.eeg.at(c, t) = truth.channel_gain[c] * wave[t] + truth.noise_std * z;
    }

  // Moving gradient: direction from the subject, hue offset and drift speed
  // from the emotion.
  const double angle = 2 * std::numbers::pi * std::fmod(subject * 0.6180339887498949, 1.0);
  const double hue[kEmotionCount] = {0.0, 2.1, 4.2, 1.0};
  const double speed[kEmotionCount] = {3.0, 0.8, 0.3, 2.0};
  const int e = static_cast<int>(s.emotion);
  auto& clip = s.video;
  clip.frames = cfg.frame_count;
  clip.height = clip.width = cfg.frame_size;
  clip.frame_rate_hz = cfg.frame_hz;
  clip.source_id = "fixture/video" + std::to_string(video);
  clip.pixels.resize(clip.frames * clip.frame_bytes());
  const double size = static_cast<double>(cfg.frame_size);
  for (std::size_t f = 0; f < clip.frames; ++f) {
    const double time = static_cast<double>(f) / cfg.frame_hz;
    std::uint8_t* px = clip.frame(f);
    for (std::size_t y = 0; y < clip.height; ++y)
      for (std::size_t x = 0; x < clip.width; ++x) {
        const double u = (std::cos(angle) * x + std::sin(angle) * y) / size;
        for (int k = 0; k < 3; ++k) {
          const double v = 127.5 + 127.5 * std::sin(2 * std::numbers::pi * u + speed[e] * time + hue[e] +
                                                    k * 2 * std::numbers::pi / 3);
          *px++ = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
        }
      }
  }
  return s;
}

Manifest synth_fixture(const FixtureConfig& cfg, std::uint64_t seed, const fs::path& root,
                       const std::string& config_hash) {
  const FixtureTruth truth = fixture_truth(cfg, seed);
  CorpusWriter w(root, config_hash);
  for (int subj = 1; subj <= cfg.subjects; ++subj)
    for (int vid = 1; vid <= cfg.videos; ++vid) w.add(synth_sample(cfg, truth, subj, vid, seed), false);
  w.commit();
  write_file_atomic(root / "fixture_truth.json", truth.to_json());
  return w.manifest();
}

// ---- checkpoints ----

std::string params_hash(const ParamStore& store) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : store.items()) {
    h = fnv1a64(p.name.data(), p.name.size() + 1, h);
    for (double v : p.value.data()) {
      std::uint8_t b[8];
      put_u64(b, std::bit_cast<std::uint64_t>(v));
      h = fnv1a64(b, 8, h);
    }
  }
  return hex64(h);
}

CheckpointInfo save_checkpoint(const fs::path& dir, const ParamStore& store, const std::string& config_hash) {
  std::error_code ec;
  fs::create_directories(dir / "params", ec);
  if (ec) throw IoError("cannot create checkpoint directory " + dir.string());
  CheckpointInfo info{config_hash, params_hash(store), store.items().size()};
  json params = json::array();
  std::size_t i = 0;
  for (const auto& p : store.items()) {
    std::vector<std::uint32_t> dims;
    for (auto d : p.value.shape()) dims.push_back(static_cast<std::uint32_t>(d));
    const auto bytes = encode_array(RawArray::from_f64(dims, p.value.data()));
    char name[32];
    std::snprintf(name, sizeof name, "params/p%04zu.v2a", i++);
    write_file_atomic(dir / name, bytes);
    params.push_back({{"name", p.name},
                      {"file", name},
                      {"shape", dims},
                      {"bytes", bytes.size()},
                      {"fnv1a64", hex64(file_checksum(bytes))}});
  }
  json j = {{"schema", "v2eg.checkpoint"},
            {"format_version", 1},
            {"config_hash", config_hash},
            {"checkpoint_hash", info.checkpoint_hash},
            {"params", params}};
  write_file_atomic(dir / "checkpoint.json", j.dump(1) + "\n");
  return info;
}

CheckpointInfo load_checkpoint(const fs::path& dir, ParamStore& store, const std::string& expected_config_hash) {
  json j;
  try {
    const auto bytes = read_file(dir / "checkpoint.json");
    j = json::parse(bytes.begin(), bytes.end());
    if (j.at("schema") != "v2eg.checkpoint") throw IoError("not a checkpoint: " + dir.string());
  } catch (const json::exception& ex) {
    throw IoError("malformed checkpoint.json: " + std::string(ex.what()));
  }
  CheckpointInfo info{j.at("config_hash").get<std::string>(), j.at("checkpoint_hash").get<std::string>(), 0};
  if (!expected_config_hash.empty() && info.config_hash != expected_config_hash)
    throw ConfigError("checkpoint config hash " + info.config_hash + " does not match " + expected_config_hash);
  const auto& params = j.at("params");
  auto& items = store.items();
  if (params.size() != items.size())
    throw ConfigError("checkpoint holds " + std::to_string(params.size()) + " tensors, model has " +
                      std::to_string(items.size()));
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& pj = params[i];
    const std::string name = pj.at("name").get<std::string>();
    if (name != items[i].name) throw ConfigError("checkpoint tensor " + name + " where model expects " + items[i].name);
    const FileEntry f{"param", pj.at("file").get<std::string>(), "f64", pj.at("shape").get<std::vector<std::uint32_t>>(),
                      pj.at("bytes").get<std::uint64_t>(), pj.at("fnv1a64").get<std::string>()};
    const auto a = decode_array(verified_read(dir, "checkpoint " + name, f), name);
    Shape shape(a.dims.begin(), a.dims.end());
    if (a.dtype != DType::f64 || shape != items[i].value.shape())
      throw ConfigError("checkpoint tensor " + name + " has shape " + shape_str(shape) + ", model expects " +
                        shape_str(items[i].value.shape()));
    const auto values = a.to_f64();
    std::copy(values.begin(), values.end(), items[i].value.mutable_data().begin());
  }
  info.parameters = items.size();
  if (params_hash(store) != info.checkpoint_hash) throw IoError("checkpoint hash mismatch after load");
  return info;
}

}  // namespace v2eg
