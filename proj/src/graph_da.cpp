#include "v2eg/graph_da.hpp"

#include <algorithm>
#include <numeric>

#include "v2eg/errors.hpp"

namespace v2eg {

const char* perturbation_name(Perturbation p) {
  switch (p) {
    case Perturbation::none: return "none";
    case Perturbation::noise: return "noise";
    case Perturbation::channel_dropout: return "channel_dropout";
    case Perturbation::time_offset: return "time_offset";
    case Perturbation::amplitude_scale: return "amplitude_scale";
  }
  return "?";
}

void AugmentationConfig::validate() const {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw ParameterError("augmentation.ratio must lie in [0, 1]");
  if (!(noise_std >= 0.0)) throw ParameterError("augmentation.noise_std must be >= 0");
  if (dropout_channels < 0) throw ParameterError("augmentation.dropout_channels must be >= 0");
  if (max_offset_samples < 0) throw ParameterError("augmentation.max_offset_samples must be >= 0");
  if (!(scale_low > 0.0) || !(scale_high >= scale_low))
    throw ParameterError("augmentation.scale_range needs 0 < low <= high");
}

EegSegment time_offset(const EegSegment& x, long offset) {
  const long n = static_cast<long>(x.samples);
  if (offset >= n || -offset >= n) throw ParameterError("time offset magnitude must be below the segment length");
  EegSegment y = x;
  const long shift = (offset % n + n) % n;
  for (std::size_t c = 0; c < x.channels; ++c) {
    auto src = x.channel(c);
    auto dst = y.channel(c);
    for (long t = 0; t < n; ++t) dst[(t + shift) % n] = src[t];
  }
  return y;
}

EegSegment drop_channels(const EegSegment& x, const std::vector<std::size_t>& channels) {
  EegSegment y = x;
  for (std::size_t c : channels) {
    if (c >= x.channels) throw ParameterError("dropout channel index out of range");
    std::fill(y.channel(c).begin(), y.channel(c).end(), 0.0);
  }
  return y;
}

namespace {

void clamp_unit(EegSegment& s) {
  for (auto& v : s.data) v = std::clamp(v, -1.0, 1.0);
}

EegSegment apply(const EegSegment& x, Perturbation kind, const AugmentationConfig& cfg, Rng& rng) {
  switch (kind) {
    case Perturbation::noise: {
      EegSegment y = x;
      for (auto& v : y.data) v += cfg.noise_std * rng.normal();
      clamp_unit(y);
      return y;
    }
    case Perturbation::channel_dropout: {
      // Partial Fisher-Yates draw of distinct channels.
      std::vector<std::size_t> idx(x.channels);
      std::iota(idx.begin(), idx.end(), 0);
      const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(cfg.dropout_channels), x.channels);
      for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(x.channels - i)]);
      idx.resize(k);
      return drop_channels(x, idx);
    }
    case Perturbation::time_offset: {
      const long limit = std::min<long>(cfg.max_offset_samples, static_cast<long>(x.samples) - 1);
      const long off = static_cast<long>(rng.below(static_cast<std::uint64_t>(2 * limit + 1))) - limit;
      return time_offset(x, off);
    }
    case Perturbation::amplitude_scale: {
      EegSegment y = x;
      const double s = rng.uniform(cfg.scale_low, cfg.scale_high);
      for (auto& v : y.data) v *= s;
      clamp_unit(y);
      return y;
    }
    case Perturbation::none: break;
  }
  return x;
}

}  // namespace

AugmentedBatch augment_batch(const std::vector<EegSegment>& batch, const AugmentationConfig& cfg, Rng& rng) {
  cfg.validate();
  const Rng base(rng.next_u64());
  AugmentedBatch out;
  out.segments.reserve(batch.size());
  out.kinds.assign(batch.size(), Perturbation::none);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Rng r = base.derive(i);
    if (cfg.ratio <= 0.0 || !r.bernoulli(cfg.ratio)) {
      out.segments.push_back(batch[i]);
      continue;
    }
    out.augmented.push_back(i);
    if (cfg.stack) {
      EegSegment y = batch[i];
      for (int k = 1; k <= 4; ++k) y = apply(y, static_cast<Perturbation>(k), cfg, r);
      out.kinds[i] = Perturbation::amplitude_scale;  // last kind applied
      out.segments.push_back(std::move(y));
    } else {
      const auto kind = static_cast<Perturbation>(1 + r.below(4));
      out.kinds[i] = kind;
      out.segments.push_back(apply(batch[i], kind, cfg, r));
    }
  }
  return out;
}

}  // namespace v2eg
