#include "v2eg/diffusion_engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "v2eg/errors.hpp"

namespace v2eg {

const char* schedule_name(ScheduleKind k) { return k == ScheduleKind::linear ? "linear" : "cosine"; }

ScheduleKind parse_schedule(const std::string& name) {
  if (name == "linear") return ScheduleKind::linear;
  if (name == "cosine") return ScheduleKind::cosine;
  throw ConfigError("unknown schedule kind '" + name + "' (expected linear or cosine)");
}

NoiseSchedule make_schedule(ScheduleKind kind, std::size_t steps, double beta_min, double beta_max) {
  if (steps < 2) throw ConstructionError("a noise schedule needs at least 2 steps");
  if (!(beta_min > 0.0 && beta_min < beta_max && beta_max < 1.0))
    throw ConstructionError("schedule needs 0 < beta_min < beta_max < 1");
  NoiseSchedule s;
  s.kind = kind;
  s.steps = steps;
  s.beta.resize(steps);
  const double n = static_cast<double>(steps);
  if (kind == ScheduleKind::linear) {
    // Written as a convex combination so both endpoints come out exact.
    for (std::size_t t = 0; t < steps; ++t) {
      const double u = static_cast<double>(t) / (n - 1.0);
      s.beta[t] = (1.0 - u) * beta_min + u * beta_max;
    }
  } else {
    constexpr double off = 0.008;
    auto f = [&](double u) {
      const double c = std::cos((u / n + off) / (1.0 + off) * M_PI / 2.0);
      return c * c;
    };
    for (std::size_t t = 0; t < steps; ++t)
      s.beta[t] = std::clamp(1.0 - f(static_cast<double>(t + 1)) / f(static_cast<double>(t)), beta_min, 0.999);
  }
  s.alpha.resize(steps);
  s.alpha_bar.resize(steps);
  double prod = 1.0;
  for (std::size_t t = 0; t < steps; ++t) {
    if (!(s.beta[t] > 0.0 && s.beta[t] < 1.0)) throw ConstructionError("beta outside (0, 1) at step " + std::to_string(t));
    s.alpha[t] = 1.0 - s.beta[t];
    prod *= s.alpha[t];
    s.alpha_bar[t] = prod;
    if (t > 0 && !(s.alpha_bar[t] < s.alpha_bar[t - 1]))
      throw ConstructionError("alpha_bar is not strictly decreasing at step " + std::to_string(t));
  }
  return s;
}

Tensor diffuse_with(const Tensor& x0, const Tensor& noise, std::size_t t, const NoiseSchedule& sched) {
  const double ab = sched.alpha_bar.at(t);
  return add(scale(x0, std::sqrt(ab)), scale(noise, std::sqrt(1.0 - ab)));
}

Diffused forward_diffuse(const Tensor& x0, std::size_t t, const NoiseSchedule& sched, Rng& rng) {
  std::vector<double> e(x0.size());
  for (auto& v : e) v = rng.normal();
  Tensor noise = Tensor::from(x0.shape(), std::move(e));
  return {diffuse_with(x0, noise, t, sched), noise};
}

Tensor predict_x0(const Tensor& x_t, const Tensor& eps_hat, std::size_t t, const NoiseSchedule& sched) {
  const double ab = sched.alpha_bar.at(t);
  return scale(sub(x_t, scale(eps_hat, std::sqrt(1.0 - ab))), 1.0 / std::sqrt(ab));
}

void LossWeights::validate() const {
  for (double w : {diffusion, adversarial, frequency, spatial, temporal})
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and >= 0");
  if (!(diffusion > 0.0)) throw ConfigError("loss.diffusion must be positive");
}

LossContext make_loss_context(std::size_t samples, double sampling_rate_hz) {
  const std::size_t bins = samples / 2 + 1;
  std::vector<double> c(samples * bins), s(samples * bins);
  for (std::size_t n = 0; n < samples; ++n)
    for (std::size_t k = 0; k < bins; ++k) {
      const double ph = 2.0 * M_PI * static_cast<double>((n * k) % samples) / static_cast<double>(samples);
      c[n * bins + k] = std::cos(ph);
      s[n * bins + k] = std::sin(ph);
    }
  std::vector<std::vector<double>> cols;
  for (const auto& b : default_bands(sampling_rate_hz)) {
    std::vector<double> col(bins, 0.0);
    bool any = false;
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sampling_rate_hz / static_cast<double>(samples);
      if (f >= b.low_hz && f < b.high_hz) {
        col[k] = 1.0;
        any = true;
      }
    }
    if (any) cols.push_back(std::move(col));
  }
  if (cols.empty()) throw ConfigError("segments are too short to resolve any EEG band");
  std::vector<double> mask(bins * cols.size());
  for (std::size_t k = 0; k < bins; ++k)
    for (std::size_t b = 0; b < cols.size(); ++b) mask[k * cols.size() + b] = cols[b][k];
  LossContext ctx;
  ctx.dft_cos = Tensor::from({samples, bins}, std::move(c));
  ctx.dft_sin = Tensor::from({samples, bins}, std::move(s));
  ctx.band_mask = Tensor::from({bins, cols.size()}, std::move(mask));
  ctx.max_lag = std::min<std::size_t>(kTemporalLags, samples - 1);
  return ctx;
}

Tensor log_band_power(const Tensor& x, const LossContext& ctx) {
  const double n = static_cast<double>(x.cols());
  const Tensor p = scale(add(square(matmul(x, ctx.dft_cos)), square(matmul(x, ctx.dft_sin))), 1.0 / (n * n));
  return log(add_scalar(matmul(p, ctx.band_mask), kLogPowerFloor));
}

Tensor channel_correlation(const Tensor& x) {
  const Tensor z = normalize_rows(center_rows(x), 1e-12);
  return matmul(z, transpose(z));
}

Tensor clamp_adversarial(const Tensor& raw) { return clamp_max(raw, kAdversarialCap); }

namespace {

double checked(const Tensor& term, const char* name) {
  const double v = term.item();
  if (!std::isfinite(v)) throw NumericError(std::string("non-finite ") + name + " loss term");
  return v;
}

// -log(p) with a floor that keeps an underflowed probability finite.
Tensor neg_log(const Tensor& p) { return scale(log(add_scalar(p, 1e-300)), -1.0); }

// Builds one term, attributing any numeric failure inside it to the term.
template <class F>
Tensor term(const char* name, F&& build) {
  try {
    Tensor t = build();
    checked(t, name);
    return t;
  } catch (const NumericError& e) {
    const std::string what = e.what();
    if (what.rfind("non-finite ", 0) == 0) throw;
    throw NumericError(std::string("non-finite ") + name + " loss term (" + what + ")");
  }
}


}  // namespace

LossTerms loss_terms(const Tensor& x0, const Tensor& x_t, const Tensor& noise, const Tensor& eps_hat, std::size_t t,
                     const NoiseSchedule& sched, const LossWeights& w, const LossContext& ctx,
                     const std::function<Tensor(const Tensor&)>& disc) {
  LossTerms out;
  const Tensor diff = term("diffusion", [&] { return mean(square(sub(noise, eps_hat))); });
  out.x0_hat = predict_x0(x_t, eps_hat, t, sched);
  const Tensor freq = term("frequency", [&] {
    return mean(square(sub(log_band_power(out.x0_hat, ctx), log_band_power(x0, ctx))));
  });
  const Tensor spat = term("spatial", [&] {
    return sum(square(sub(channel_correlation(out.x0_hat), channel_correlation(x0))));
  });
  const Tensor temp = term("temporal", [&] {
    return mean(square(sub(autocorrelation(out.x0_hat, ctx.max_lag, 1e-12), autocorrelation(x0, ctx.max_lag, 1e-12))));
  });
  out.diffusion = diff.item();
  out.frequency = freq.item();
  out.spatial = spat.item();
  out.temporal = temp.item();
  // x0_hat error grows like sqrt((1 - ab) / ab) at large t; weighting the
  // x0_hat terms by ab_t keeps their gradient on eps_hat bounded.
  const double ab = sched.alpha_bar[t];
  out.x0_weight = ab;
  Tensor total = scale(diff, w.diffusion);
  total = add(total, scale(freq, ab * w.frequency));
  total = add(total, scale(spat, ab * w.spatial));
  total = add(total, scale(temp, ab * w.temporal));
  if (disc) {
    const Tensor adv = term("adversarial", [&] { return clamp_adversarial(neg_log(disc(out.x0_hat))); });
    out.adversarial = adv.item();
    total = add(total, scale(adv, w.adversarial));
  }
  checked(total, "total");
  out.total = total;
  return out;
}

Tensor GenerativeModel::pooled_condition(const ConditionInputs& in) const {
  if (!net.conditional()) return {};
  return fuse(in.video, in.text, net.params, cond_cfg, in.prior).pooled;
}

GenerativeModel make_generative_model(const SpgnConfig& net_cfg, const ConditioningConfig& cond_cfg, bool baseline,
                                      GraphOperators ops, NoiseSchedule schedule, Rng& rng) {
  if (!baseline && net_cfg.cond_dim != cond_cfg.fused_dim)
    throw ConfigError("network condition width " + std::to_string(net_cfg.cond_dim) + " differs from fused width " +
                      std::to_string(cond_cfg.fused_dim));
  GenerativeModel m;
  m.net = make_model(net_cfg, baseline, std::move(ops), rng);
  m.cond_cfg = cond_cfg;
  m.schedule = std::move(schedule);
  if (!baseline) init_conditioning_params(m.net.params, cond_cfg, rng);
  return m;
}

LossTerms training_loss(const GenerativeModel& model, const Tensor& x0, const Tensor& cond, const LossWeights& w,
                        const LossContext& ctx, Rng& rng) {
  const std::size_t t = rng.below(model.schedule.steps);
  const Diffused d = forward_diffuse(x0, t, model.schedule, rng);
  const Tensor eps_hat = model.net.predict(d.x_t, static_cast<long>(t), cond);
  std::function<Tensor(const Tensor&)> disc;
  if (model.net.has_discriminator() && w.adversarial > 0.0)
    disc = [&](const Tensor& x) { return discriminate(x, model.net.params, model.net.cfg); };
  return loss_terms(x0, d.x_t, d.noise, eps_hat, t, model.schedule, w, ctx, disc);
}

void TrainConfig::validate() const {
  if (batch == 0) throw ConfigError("train.batch must be positive");
  if (!(lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (!(clip_norm > 0.0)) throw ConfigError("train.clip_norm must be positive");
  if (!(cond_dropout >= 0.0 && cond_dropout <= 1.0)) throw ConfigError("train.cond_dropout must lie in [0, 1]");
  weights.validate();
  if (augment) augmentation.validate();
}

Tensor to_tensor(const EegSegment& s) { return Tensor::from({s.channels, s.samples}, s.data); }

EegSegment to_segment(const Tensor& t, double sampling_rate_hz, bool normalized) {
  auto s = EegSegment::zeros(t.rows(), t.cols(), sampling_rate_hz);
  std::copy(t.data().begin(), t.data().end(), s.data.begin());
  s.normalized = normalized;
  return s;
}

TrainResult train(GenerativeModel& model, const std::vector<TrainingExample>& data, const TrainConfig& cfg, Rng& rng,
                  const std::function<void(std::size_t, const GenerativeModel&)>& on_epoch) {
  cfg.validate();
  if (data.empty()) throw ConfigError("training needs at least one example");
  const auto& ncfg = model.net.cfg;
  for (const auto& ex : data)
    if (ex.eeg.channels != ncfg.channels || ex.eeg.samples != ncfg.samples)
      throw ConfigError("training segment shape does not match the network config");

  ParamStore gen, disc;
  for (auto& p : model.net.params.items()) (p.name.rfind("disc.", 0) == 0 ? disc : gen).add(p.name, p.value);
  AdamState gen_state, disc_state;
  const LossContext ctx = make_loss_context(ncfg.samples, cfg.sampling_rate_hz);
  const bool adversarial = model.net.has_discriminator() && disc.count() > 0;
  auto disc_fn = [&](const Tensor& x) { return discriminate(x, model.net.params, ncfg); };
  std::function<Tensor(const Tensor&)> gen_disc;
  if (adversarial && cfg.weights.adversarial > 0.0) gen_disc = disc_fn;

  TrainResult result;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batches = (data.size() + cfg.batch - 1) / cfg.batch;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double sum_diff = 0.0, sum_total = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * cfg.batch, hi = std::min(data.size(), lo + cfg.batch);
      std::vector<EegSegment> segs;
      for (std::size_t i = lo; i < hi; ++i) segs.push_back(data[order[i]].eeg);
      if (cfg.augment) segs = augment_batch(segs, cfg.augmentation, rng).segments;

      StepRecord rec;
      rec.epoch = epoch;
      rec.step = result.history.size();
      const double inv = 1.0 / static_cast<double>(hi - lo);
      try {
        model.net.params.zero_grad();
        Tensor total;
        std::vector<Tensor> fakes, reals;
        for (std::size_t i = lo; i < hi; ++i) {
          const Tensor x0 = to_tensor(segs[i - lo]);
          Tensor cond;
          if (model.net.conditional() && !rng.bernoulli(cfg.cond_dropout)) cond = model.pooled_condition(data[order[i]].cond);
          const std::size_t t = rng.below(model.schedule.steps);
          const Diffused d = forward_diffuse(x0, t, model.schedule, rng);
          const Tensor eps_hat = model.net.predict(d.x_t, static_cast<long>(t), cond);
          const LossTerms lt = loss_terms(x0, d.x_t, d.noise, eps_hat, t, model.schedule, cfg.weights, ctx, gen_disc);
          total = total.defined() ? add(total, lt.total) : lt.total;
          rec.diffusion += lt.diffusion * inv;
          rec.adversarial += lt.adversarial * inv;
          rec.frequency += lt.frequency * inv;
          rec.spatial += lt.spatial * inv;
          rec.temporal += lt.temporal * inv;
          fakes.push_back(lt.x0_hat.detach());
          reals.push_back(x0);
        }
        total = scale(total, inv);
        rec.total = total.item();
        total.backward();
        adam_step(gen, gen_state, cfg.lr, cfg.adam, clip_factor(gen, cfg.clip_norm));

        if (adversarial) {
          model.net.params.zero_grad();
          Tensor dl;
          for (std::size_t i = 0; i < fakes.size(); ++i) {
            const Tensor real = neg_log(disc_fn(reals[i]));
            const Tensor fake = neg_log(add_scalar(scale(disc_fn(fakes[i]), -1.0), 1.0));
            const Tensor both = add(real, fake);
            dl = dl.defined() ? add(dl, both) : both;
          }
          dl = scale(dl, inv);
          rec.discriminator = checked(dl, "discriminator");
          dl.backward();
          adam_step(disc, disc_state, cfg.lr, cfg.adam, clip_factor(disc, cfg.clip_norm));
        }
      } catch (const NumericError& e) {
        throw NumericError("training aborted at epoch " + std::to_string(epoch) + " step " + std::to_string(rec.step) +
                           ": " + e.what());
      } catch (const OptimizerError& e) {
        throw NumericError("training aborted at epoch " + std::to_string(epoch) + " step " + std::to_string(rec.step) +
                           ": " + e.what());
      }
      sum_diff += rec.diffusion;
      sum_total += rec.total;
      result.history.push_back(rec);
    }
    result.epoch_diffusion.push_back(sum_diff / static_cast<double>(batches));
    result.epoch_total.push_back(sum_total / static_cast<double>(batches));
    result.epochs_completed = epoch + 1;
    model.net.params.zero_grad();
    if (on_epoch) on_epoch(epoch, model);
  }
  return result;
}

std::vector<std::size_t> strided_steps(std::size_t steps, std::size_t inference_steps) {
  if (inference_steps < 1) throw ParameterError("inference steps must be at least 1");
  if (inference_steps > steps)
    throw ParameterError("inference steps " + std::to_string(inference_steps) + " exceed the schedule length " +
                         std::to_string(steps));
  std::vector<std::size_t> tau(inference_steps);
  for (std::size_t i = 0; i < inference_steps; ++i) tau[i] = i * steps / inference_steps;
  return tau;
}

Tensor sample(const GenerativeModel& model, const Tensor& cond, std::size_t inference_steps, double guidance, Rng& rng) {
  if (!(guidance >= 0.0)) throw ParameterError("guidance scale must be >= 0");
  const auto tau = strided_steps(model.schedule.steps, inference_steps);
  NoGradGuard ng;
  const auto& ncfg = model.net.cfg;
  const std::size_t n = ncfg.channels * ncfg.samples;
  std::vector<double> x(n);
  for (auto& v : x) v = rng.normal();
  const bool use_cond = model.net.conditional() && cond.defined();

  for (std::size_t i = tau.size(); i-- > 0;) {
    const std::size_t t = tau[i];
    const double ab = model.schedule.alpha_bar[t];
    const double ab_prev = i > 0 ? model.schedule.alpha_bar[tau[i - 1]] : 1.0;
    const double beta = 1.0 - ab / ab_prev;
    const Tensor xt = Tensor::from({ncfg.channels, ncfg.samples}, x);
    std::vector<double> eps;
    if (!use_cond) {
      eps = model.net.predict(xt, static_cast<long>(t), {}).to_vector();
    } else if (guidance == 1.0) {
      eps = model.net.predict(xt, static_cast<long>(t), cond).to_vector();
    } else {
      const auto ec = model.net.predict(xt, static_cast<long>(t), cond).to_vector();
      eps = model.net.predict(xt, static_cast<long>(t), {}).to_vector();
      for (std::size_t k = 0; k < n; ++k) eps[k] += guidance * (ec[k] - eps[k]);
    }
    const double coef = beta / std::sqrt(1.0 - ab);
    const double inv_sqrt_alpha = 1.0 / std::sqrt(1.0 - beta);
    for (std::size_t k = 0; k < n; ++k) x[k] = inv_sqrt_alpha * (x[k] - coef * eps[k]);
    if (i > 0) {
      const double sigma = std::sqrt(beta * (1.0 - ab_prev) / (1.0 - ab));
      for (auto& v : x) v += sigma * rng.normal();
    }
  }
  for (auto& v : x) v = std::clamp(v, -1.0, 1.0);
  return Tensor::from({ncfg.channels, ncfg.samples}, std::move(x));
}

EegSegment sample_segment(const GenerativeModel& model, const Tensor& cond, std::size_t inference_steps, double guidance,
                          double sampling_rate_hz, Rng& rng) {
  return to_segment(sample(model, cond, inference_steps, guidance, rng), sampling_rate_hz, true);
}

}  // namespace v2eg
