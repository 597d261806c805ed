#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "v2eg/params.hpp"
#include "v2eg/preprocessing.hpp"
#include "v2eg/tensor.hpp"

namespace v2eg {

// F x H x W x 3 interleaved 8-bit RGB.
struct VideoClip {
  std::size_t frames{0};
  std::size_t height{0};
  std::size_t width{0};
  std::vector<std::uint8_t> pixels;
  double frame_rate_hz{0.0};
  std::string source_id;

  std::size_t frame_bytes() const { return height * width * 3; }
  const std::uint8_t* frame(std::size_t f) const { return pixels.data() + f * frame_bytes(); }
  std::uint8_t* frame(std::size_t f) { return pixels.data() + f * frame_bytes(); }
  double duration_s() const { return static_cast<double>(frames) / frame_rate_hz; }
  // Throws ValidationError: F >= 1, H, W >= 16, buffer size, rate > 0.
  void validate() const;
};

// Uniform timestamps t_k = k / target_hz, k < count, each frame resized to
// size x size by bilinear interpolation on pixel centers. Throws
// IngestionError when duration * target_hz < count.
VideoClip extract_frames(const VideoClip& clip, double target_hz, std::size_t count, std::size_t size);

// Pixel-center bilinear resize of one RGB frame.
std::vector<std::uint8_t> resize_bilinear(const std::uint8_t* src, std::size_t h, std::size_t w, std::size_t out_h,
                                          std::size_t out_w);

// ---- ingestion ----
// Binary PPM (P6, maxval 255).
std::vector<std::uint8_t> read_ppm(const std::string& path, std::size_t& height, std::size_t& width);
void write_ppm(const std::string& path, const std::uint8_t* rgb, std::size_t height, std::size_t width);
// 8-bit RGB or RGBA PNG; alpha is dropped, gray and palette images expanded.
std::vector<std::uint8_t> read_png(const std::string& path, std::size_t& height, std::size_t& width);
// All *.ppm / *.png files of a directory in lexicographic order; frames must
// share one size.
VideoClip load_frame_directory(const std::string& dir, double frame_rate_hz);
// Planar binary: u32 frames, u32 height, u32 width (little endian), f64 rate,
// then per frame the R plane, G plane and B plane.
VideoClip load_planar_rgb(const std::string& path);
void save_planar_rgb(const VideoClip& clip, const std::string& path);

// ---- encoders ----
class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual std::string name() const = 0;
  virtual std::size_t dim() const = 0;
  // frames x dim features. Throws EncoderError on shape mismatch.
  virtual Tensor encode(const VideoClip& frames) const = 0;
};

// Mean of every 16 x 16 patch per color (scaled to [-0.5, 0.5]) plus a
// constant 1, through a fixed seeded Gaussian projection, rows scaled to unit
// norm.
class PatchProjectionEncoder final : public Encoder {
 public:
  PatchProjectionEncoder(std::size_t frame_size, std::size_t dim, std::uint64_t seed);
  std::string name() const override { return "patch_projection"; }
  std::size_t dim() const override { return dim_; }
  Tensor encode(const VideoClip& frames) const override;

  static constexpr std::size_t kPatch = 16;
  std::vector<double> patch_features(const std::uint8_t* frame) const;

 private:
  std::size_t size_;
  std::size_t dim_;
  std::size_t inputs_;
  std::vector<double> projection_;  // inputs x dim
};

enum class Emotion { happy, sad, neutral, fear };

const char* emotion_name(Emotion e);
// Throws ValidationError on unknown labels.
Emotion parse_emotion(const std::string& label);
inline constexpr int kEmotionCount = 4;

struct SubjectEmbedding {
  Tensor matrix;  // rows x dim
  int subject_id{0};
  Emotion emotion{Emotion::neutral};
};

// Rows ~ N(0, 1/dim) from a stream keyed on a hash of the inputs and seed.
SubjectEmbedding encode_subject(int subject_id, Emotion emotion, const std::string& descriptor, std::size_t rows,
                                std::size_t dim, std::uint64_t seed);

struct ConditioningConfig {
  std::size_t frame_count{4};
  std::size_t frame_size{224};
  double frame_hz{2.0};
  std::size_t video_dim{768};
  std::size_t text_rows{77};
  std::size_t fused_dim{512};
  std::size_t heads{1};
  bool use_eeg_prior{false};
  std::size_t eeg_channels{62};  // prior input is 5 bands x channels
  std::uint64_t encoder_seed{7};

  void validate() const;  // ConfigError
};

// Registers cond.* parameters. Single head: w_q, w_k, w_v (video_dim x
// fused_dim). Multi-head: per head h<i>.w_q/w_k/w_v (video_dim x fused/heads)
// and h<i>.w_o (fused/heads x fused_dim).
void init_conditioning_params(ParamStore& store, const ConditioningConfig& cfg, Rng& rng);

struct FusedCondition {
  Tensor matrix;                   // frame_count x fused_dim
  Tensor pooled;                   // 1 x fused_dim
  std::vector<Tensor> attention;   // per head, frame_count x text_rows
};

// softmax(Q K^T / sqrt(d)) V with Q = v W_Q, K = e W_K, V = e W_V.
// prior, when given, is a 1 x (5 * channels) band-power row projected by
// cond.w_prior and added to pooled. Throws ConfigError on shape mismatch.
FusedCondition fuse(const Tensor& video, const Tensor& text, const ParamStore& store, const ConditioningConfig& cfg,
                    const Tensor& prior = {});

// log10 of mean band power per (band, channel) over the given segments,
// 1 x (bands * channels), band-major.
Tensor eeg_prior_features(const std::vector<EegSegment>& segments, const std::vector<BandDefinition>& bands);

}  // namespace v2eg
