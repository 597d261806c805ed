#pragma once

#include <vector>

#include "v2eg/preprocessing.hpp"
#include "v2eg/rng.hpp"

namespace v2eg {

enum class Perturbation { none, noise, channel_dropout, time_offset, amplitude_scale };

const char* perturbation_name(Perturbation p);

struct AugmentationConfig {
  double ratio{0.3};  // per-segment selection probability
  double noise_std{0.05};
  int dropout_channels{3};
  int max_offset_samples{10};
  double scale_low{0.8};
  double scale_high{1.2};
  bool stack{false};  // apply all four kinds to a selected segment instead of one

  // Throws ParameterError.
  void validate() const;
};

struct AugmentedBatch {
  std::vector<EegSegment> segments;
  std::vector<std::size_t> augmented;  // indices of selected segments
  std::vector<Perturbation> kinds;     // per segment, none when unselected
};

// Each segment is selected with probability cfg.ratio and gets one perturbation
// drawn uniformly; output is clamped to [-1, 1]. Segment i uses a stream
// derived from one draw of rng, so results do not depend on thread layout.
AugmentedBatch augment_batch(const std::vector<EegSegment>& batch, const AugmentationConfig& cfg, Rng& rng);

// Circular shift along time: out[t] = x[t - offset mod samples].
EegSegment time_offset(const EegSegment& x, long offset);

// Zeroes the listed channels; others stay bit-identical.
EegSegment drop_channels(const EegSegment& x, const std::vector<std::size_t>& channels);

}  // namespace v2eg
