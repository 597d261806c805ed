#pragma once

#include <functional>
#include <string>
#include <vector>

#include "v2eg/adam.hpp"
#include "v2eg/conditioning.hpp"
#include "v2eg/graph_da.hpp"
#include "v2eg/spgn_network.hpp"

namespace v2eg {

enum class ScheduleKind { linear, cosine };

const char* schedule_name(ScheduleKind k);
ScheduleKind parse_schedule(const std::string& name);  // ConfigError

struct NoiseSchedule {
  ScheduleKind kind{ScheduleKind::linear};
  std::size_t steps{0};
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
};

// Linear: beta evenly spaced from beta_min to beta_max. Cosine: squared-cosine
// alpha_bar (offset 0.008), betas clamped to [beta_min, 0.999] and alpha_bar
// recomputed from them. Throws ConstructionError.
NoiseSchedule make_schedule(ScheduleKind kind, std::size_t steps, double beta_min = 1e-4, double beta_max = 0.02);

struct Diffused {
  Tensor x_t;
  Tensor noise;
};

// x_t = sqrt(ab_t) x0 + sqrt(1 - ab_t) eps.
Diffused forward_diffuse(const Tensor& x0, std::size_t t, const NoiseSchedule& sched, Rng& rng);
Tensor diffuse_with(const Tensor& x0, const Tensor& noise, std::size_t t, const NoiseSchedule& sched);
// (x_t - sqrt(1 - ab_t) eps) / sqrt(ab_t)
Tensor predict_x0(const Tensor& x_t, const Tensor& eps_hat, std::size_t t, const NoiseSchedule& sched);

struct LossWeights {
  double diffusion{1.0};
  double adversarial{0.001};
  double frequency{0.1};
  double spatial{0.1};
  double temporal{0.1};

  void validate() const;  // ConfigError
};

inline constexpr double kAdversarialCap = 1000.0;
inline constexpr std::size_t kTemporalLags = 20;

// Constant matrices for the spectral and temporal loss terms.
struct LossContext {
  Tensor dft_cos;    // samples x bins
  Tensor dft_sin;    // samples x bins
  Tensor band_mask;  // bins x bands (bands with no bin are dropped)
  std::size_t max_lag{kTemporalLags};
};

LossContext make_loss_context(std::size_t samples, double sampling_rate_hz);

// Band power is |X_k|^2 / N^2 summed over the band's bins (mean-square
// units); the floor keeps near-silent bands from dominating the log.
inline constexpr double kLogPowerFloor = 1e-3;

// log(band power + floor) per channel, channels x bands.
Tensor log_band_power(const Tensor& x, const LossContext& ctx);
// Channel correlation matrix of centered, unit-norm rows.
Tensor channel_correlation(const Tensor& x);

struct LossTerms {
  Tensor total;  // 1 x 1, differentiable
  double diffusion{0}, adversarial{0}, frequency{0}, spatial{0}, temporal{0};
  // alpha_bar_t; total = w_d diff + w_a adv + x0_weight (w_f freq + w_s spat + w_t temp).
  double x0_weight{1.0};
  Tensor x0_hat;
};

// Raw -log D values above the cap pass the cap with zero gradient.
Tensor clamp_adversarial(const Tensor& raw);

// Five-term loss from a given noise prediction. disc, when set, maps x0_hat to
// D(x0_hat). Throws NumericError naming a non-finite term.
LossTerms loss_terms(const Tensor& x0, const Tensor& x_t, const Tensor& noise, const Tensor& eps_hat, std::size_t t,
                     const NoiseSchedule& sched, const LossWeights& w, const LossContext& ctx,
                     const std::function<Tensor(const Tensor&)>& disc = {});

// Inputs of the conditioning pathway for one sample.
struct ConditionInputs {
  Tensor video;  // frame_count x video_dim
  Tensor text;   // text_rows x video_dim
  Tensor prior;  // optional 1 x 5*channels
};

struct GenerativeModel {
  DenoiserModel net;  // parameters also hold cond.* for conditional models
  ConditioningConfig cond_cfg;
  NoiseSchedule schedule;

  // Pooled condition, or undefined for the baseline.
  Tensor pooled_condition(const ConditionInputs& in) const;
};

GenerativeModel make_generative_model(const SpgnConfig& net_cfg, const ConditioningConfig& cond_cfg, bool baseline,
                                      GraphOperators ops, NoiseSchedule schedule, Rng& rng);

LossTerms training_loss(const GenerativeModel& model, const Tensor& x0, const Tensor& cond, const LossWeights& w,
                        const LossContext& ctx, Rng& rng);

struct TrainingExample {
  EegSegment eeg;  // normalized
  ConditionInputs cond;
};

struct TrainConfig {
  std::size_t epochs{100};
  std::size_t batch{4};
  double lr{1e-5};
  double clip_norm{1.0};
  double cond_dropout{0.1};
  LossWeights weights;
  AdamConfig adam;
  bool augment{true};
  AugmentationConfig augmentation;
  double sampling_rate_hz{200.0};

  void validate() const;  // ConfigError
};

struct StepRecord {
  std::size_t epoch{0}, step{0};
  double total{0}, diffusion{0}, adversarial{0}, frequency{0}, spatial{0}, temporal{0}, discriminator{0};
};

struct TrainResult {
  std::vector<StepRecord> history;       // epochs x ceil(N / batch) entries
  std::vector<double> epoch_diffusion;   // mean diffusion term per epoch
  std::vector<double> epoch_total;
  std::size_t epochs_completed{0};
};

// Alternating generator / discriminator Adam steps with global-norm clipping.
// on_epoch(epoch, model) runs after every completed epoch. A non-finite loss
// or gradient aborts with NumericError before any parameter is changed.
TrainResult train(GenerativeModel& model, const std::vector<TrainingExample>& data, const TrainConfig& cfg, Rng& rng,
                  const std::function<void(std::size_t, const GenerativeModel&)>& on_epoch = {});

// Retained steps tau_i = floor(i T / S), i < S.
std::vector<std::size_t> strided_steps(std::size_t steps, std::size_t inference_steps);

// Ancestral sampling over the strided subset with posterior variance and
// classifier-free guidance; output clamped to [-1, 1].
Tensor sample(const GenerativeModel& model, const Tensor& cond, std::size_t inference_steps, double guidance, Rng& rng);

EegSegment sample_segment(const GenerativeModel& model, const Tensor& cond, std::size_t inference_steps, double guidance,
                          double sampling_rate_hz, Rng& rng);

// Row-major tensor <-> segment helpers.
Tensor to_tensor(const EegSegment& s);
EegSegment to_segment(const Tensor& t, double sampling_rate_hz, bool normalized = true);

}  // namespace v2eg
