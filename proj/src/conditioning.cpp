#include "v2eg/conditioning.hpp"

#include <algorithm>
#include <cmath>

#include "v2eg/errors.hpp"
#include "v2eg/rng.hpp"
#include "v2eg/spectral.hpp"

namespace v2eg {

void VideoClip::validate() const {
  if (frames < 1) throw ValidationError("video clip has no frames");
  if (height < 16 || width < 16) throw ValidationError("video frames must be at least 16x16");
  if (pixels.size() != frames * frame_bytes()) throw ValidationError("video pixel buffer size does not match F x H x W x 3");
  if (!(frame_rate_hz > 0.0) || !std::isfinite(frame_rate_hz)) throw ValidationError("video frame rate must be positive");
}

std::vector<std::uint8_t> resize_bilinear(const std::uint8_t* src, std::size_t h, std::size_t w, std::size_t out_h,
                                          std::size_t out_w) {
  std::vector<std::uint8_t> out(out_h * out_w * 3);
  auto coord = [](std::size_t o, std::size_t in_n, std::size_t out_n, std::size_t& i0, std::size_t& i1, double& f) {
    double s = (static_cast<double>(o) + 0.5) * static_cast<double>(in_n) / static_cast<double>(out_n) - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in_n - 1));
    i0 = static_cast<std::size_t>(std::floor(s));
    i1 = std::min(i0 + 1, in_n - 1);
    f = s - static_cast<double>(i0);
  };
  for (std::size_t y = 0; y < out_h; ++y) {
    std::size_t y0, y1;
    double fy;
    coord(y, h, out_h, y0, y1, fy);
    for (std::size_t x = 0; x < out_w; ++x) {
      std::size_t x0, x1;
      double fx;
      coord(x, w, out_w, x0, x1, fx);
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double a = src[(y0 * w + x0) * 3 + ch], b = src[(y0 * w + x1) * 3 + ch];
        const double c = src[(y1 * w + x0) * 3 + ch], d = src[(y1 * w + x1) * 3 + ch];
        const double v = (1 - fy) * ((1 - fx) * a + fx * b) + fy * ((1 - fx) * c + fx * d);
        out[(y * out_w + x) * 3 + ch] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return out;
}

VideoClip extract_frames(const VideoClip& clip, double target_hz, std::size_t count, std::size_t size) {
  clip.validate();
  if (!(target_hz > 0.0) || count == 0 || size < 16) throw ParameterError("frame extraction needs rate > 0, count >= 1, size >= 16");
  if (clip.duration_s() * target_hz + 1e-9 < static_cast<double>(count))
    throw IngestionError("clip '" + clip.source_id + "' is too short for " + std::to_string(count) + " frames at " +
                         std::to_string(target_hz) + " Hz");
  VideoClip out;
  out.frames = count;
  out.height = out.width = size;
  out.frame_rate_hz = target_hz;
  out.source_id = clip.source_id;
  out.pixels.reserve(count * out.frame_bytes());
  for (std::size_t k = 0; k < count; ++k) {
    const double t = static_cast<double>(k) / target_hz;
    const auto f = std::min(clip.frames - 1, static_cast<std::size_t>(std::floor(t * clip.frame_rate_hz + 1e-9)));
    const auto px = resize_bilinear(clip.frame(f), clip.height, clip.width, size, size);
    out.pixels.insert(out.pixels.end(), px.begin(), px.end());
  }
  return out;
}

PatchProjectionEncoder::PatchProjectionEncoder(std::size_t frame_size, std::size_t dim, std::uint64_t seed)
    : size_(frame_size), dim_(dim) {
  if (frame_size < kPatch || frame_size % kPatch != 0)
    throw EncoderError("frame size " + std::to_string(frame_size) + " is not a multiple of the 16-pixel patch");
  if (dim == 0) throw EncoderError("encoder dimension must be positive");
  const std::size_t per_side = frame_size / kPatch;
  inputs_ = per_side * per_side * 3 + 1;
  projection_.resize(inputs_ * dim_);
  Rng rng(seed);
  for (auto& v : projection_) v = rng.normal();
}

std::vector<double> PatchProjectionEncoder::patch_features(const std::uint8_t* frame) const {
  const std::size_t per_side = size_ / kPatch;
  std::vector<double> f(inputs_, 0.0);
  for (std::size_t y = 0; y < size_; ++y)
    for (std::size_t x = 0; x < size_; ++x) {
      const std::size_t p = (y / kPatch) * per_side + x / kPatch;
      for (std::size_t ch = 0; ch < 3; ++ch) f[p * 3 + ch] += frame[(y * size_ + x) * 3 + ch];
    }
  const double n = static_cast<double>(kPatch * kPatch) * 255.0;
  for (std::size_t i = 0; i + 1 < inputs_; ++i) f[i] = f[i] / n - 0.5;
  f[inputs_ - 1] = 1.0;
  return f;
}

Tensor PatchProjectionEncoder::encode(const VideoClip& frames) const {
  if (frames.height != size_ || frames.width != size_)
    throw EncoderError("encoder expects " + std::to_string(size_) + "x" + std::to_string(size_) + " frames, got " +
                       std::to_string(frames.height) + "x" + std::to_string(frames.width));
  if (frames.frames == 0 || frames.pixels.size() != frames.frames * frames.frame_bytes())
    throw EncoderError("frame buffer does not match its shape");
  std::vector<double> out(frames.frames * dim_, 0.0);
  for (std::size_t f = 0; f < frames.frames; ++f) {
    const auto in = patch_features(frames.frame(f));
    double* row = out.data() + f * dim_;
    for (std::size_t i = 0; i < inputs_; ++i) {
      const double* p = projection_.data() + i * dim_;
      for (std::size_t d = 0; d < dim_; ++d) row[d] += in[i] * p[d];
    }
    double nrm = 0.0;
    for (std::size_t d = 0; d < dim_; ++d) nrm += row[d] * row[d];
    nrm = std::sqrt(nrm);
    for (std::size_t d = 0; d < dim_; ++d) row[d] /= nrm;
  }
  return Tensor::from({frames.frames, dim_}, std::move(out));
}

const char* emotion_name(Emotion e) {
  switch (e) {
    case Emotion::happy: return "happy";
    case Emotion::sad: return "sad";
    case Emotion::neutral: return "neutral";
    case Emotion::fear: return "fear";
  }
  return "?";
}

Emotion parse_emotion(const std::string& label) {
  for (int i = 0; i < kEmotionCount; ++i)
    if (label == emotion_name(static_cast<Emotion>(i))) return static_cast<Emotion>(i);
  throw ValidationError("unknown emotion label '" + label + "' (expected happy, sad, neutral or fear)");
}

SubjectEmbedding encode_subject(int subject_id, Emotion emotion, const std::string& descriptor, std::size_t rows,
                                std::size_t dim, std::uint64_t seed) {
  if (rows == 0 || dim == 0) throw ConfigError("subject embedding needs rows >= 1 and dim >= 1");
  const std::string key = std::to_string(subject_id) + "|" + emotion_name(emotion) + "|" + descriptor;
  Rng rng(fnv1a64(key) ^ seed);
  std::vector<double> v(rows * dim);
  const double sd = 1.0 / std::sqrt(static_cast<double>(dim));
  for (auto& x : v) x = sd * rng.normal();
  return {Tensor::from({rows, dim}, std::move(v)), subject_id, emotion};
}

void ConditioningConfig::validate() const {
  if (frame_count == 0 || video_dim == 0 || text_rows == 0 || fused_dim == 0)
    throw ConfigError("conditioning dimensions must be positive");
  if (heads == 0 || fused_dim % heads != 0) throw ConfigError("conditioning.heads must divide conditioning.fused_dim");
  if (frame_size % PatchProjectionEncoder::kPatch != 0) throw ConfigError("conditioning.frame_size must be a multiple of 16");
  if (!(frame_hz > 0.0)) throw ConfigError("conditioning.frame_hz must be positive");
}

void init_conditioning_params(ParamStore& store, const ConditioningConfig& cfg, Rng& rng) {
  cfg.validate();
  const double sd = 1.0 / std::sqrt(static_cast<double>(cfg.video_dim));
  if (cfg.heads == 1) {
    for (const char* n : {"cond.w_q", "cond.w_k", "cond.w_v"}) store.add_normal(n, {cfg.video_dim, cfg.fused_dim}, sd, rng);
  } else {
    const std::size_t dh = cfg.fused_dim / cfg.heads;
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      const std::string p = "cond.h" + std::to_string(h) + ".";
      for (const char* n : {"w_q", "w_k", "w_v"}) store.add_normal(p + n, {cfg.video_dim, dh}, sd, rng);
      store.add_normal(p + "w_o", {dh, cfg.fused_dim}, 1.0 / std::sqrt(static_cast<double>(dh)), rng);
    }
  }
  if (cfg.use_eeg_prior) store.add_normal("cond.w_prior", {5 * cfg.eeg_channels, cfg.fused_dim}, 0.02, rng);
}

namespace {

Tensor attend(const Tensor& video, const Tensor& text, const Tensor& wq, const Tensor& wk, const Tensor& wv,
              Tensor& weights) {
  const Tensor q = matmul(video, wq);
  const Tensor k = matmul(text, wk);
  const Tensor v = matmul(text, wv);
  const double inv = 1.0 / std::sqrt(static_cast<double>(wq.cols()));
  weights = softmax_rows(scale(matmul(q, transpose(k)), inv));
  return matmul(weights, v);
}

}  // namespace

FusedCondition fuse(const Tensor& video, const Tensor& text, const ParamStore& store, const ConditioningConfig& cfg,
                    const Tensor& prior) {
  if (video.shape().size() != 2 || video.cols() != cfg.video_dim)
    throw ConfigError("video features have " + shape_str(video.shape()) + ", expected [F x " +
                      std::to_string(cfg.video_dim) + "]");
  if (text.shape().size() != 2 || text.cols() != cfg.video_dim)
    throw ConfigError("text embedding has " + shape_str(text.shape()) + ", expected [L x " +
                      std::to_string(cfg.video_dim) + "]");
  FusedCondition out;
  if (cfg.heads == 1) {
    Tensor w;
    out.matrix = attend(video, text, store.get("cond.w_q"), store.get("cond.w_k"), store.get("cond.w_v"), w);
    out.attention.push_back(w);
  } else {
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      const std::string p = "cond.h" + std::to_string(h) + ".";
      Tensor w;
      const Tensor head = matmul(attend(video, text, store.get(p + "w_q"), store.get(p + "w_k"), store.get(p + "w_v"), w),
                                 store.get(p + "w_o"));
      out.matrix = h == 0 ? head : add(out.matrix, head);
      out.attention.push_back(w);
    }
  }
  out.pooled = mean_rows(out.matrix);
  if (prior.defined()) {
    if (!store.contains("cond.w_prior")) throw ConfigError("EEG prior given but conditioning.use_eeg_prior is off");
    if (prior.shape() != Shape{1, 5 * cfg.eeg_channels})
      throw ConfigError("EEG prior has " + shape_str(prior.shape()) + ", expected [1 x " +
                        std::to_string(5 * cfg.eeg_channels) + "]");
    out.pooled = add(out.pooled, matmul(prior, store.get("cond.w_prior")));
  }
  return out;
}

Tensor eeg_prior_features(const std::vector<EegSegment>& segments, const std::vector<BandDefinition>& bands) {
  if (segments.empty()) throw ParameterError("EEG prior needs at least one segment");
  const std::size_t ch = segments.front().channels;
  std::vector<double> acc(bands.size() * ch, 0.0);
  for (const auto& s : segments) {
    if (s.channels != ch) throw ParameterError("EEG prior segments disagree on channel count");
    for (std::size_t c = 0; c < ch; ++c) {
      const Psd psd = welch_psd_1s(s.channel(c), s.sampling_rate_hz);
      for (std::size_t b = 0; b < bands.size(); ++b) acc[b * ch + c] += band_power(psd, bands[b].low_hz, bands[b].high_hz);
    }
  }
  for (auto& v : acc) v = std::log10(v / static_cast<double>(segments.size()) + 1e-12);
  const std::size_t n = acc.size();
  return Tensor::from({1, n}, std::move(acc));
}

}  // namespace v2eg
