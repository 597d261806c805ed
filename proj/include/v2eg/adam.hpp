#pragma once

#include <cstdint>
#include <vector>

#include "v2eg/params.hpp"

namespace v2eg {

struct AdamConfig {
  double beta1{0.9};
  double beta2{0.999};
  double eps{1e-8};
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t step{0};
};

// One bias-corrected Adam update of every parameter in params, reading the
// gradients accumulated on the leaves. Each gradient is multiplied by
// grad_scale first (global-norm clipping hands in min(1, max/norm)).
// Throws OptimizerError naming the first parameter with a non-finite gradient;
// no parameter is touched in that case.
void adam_step(ParamStore& params, AdamState& state, double lr, const AdamConfig& cfg = {},
               double grad_scale = 1.0);

// Scale factor that brings the global gradient norm down to max_norm.
double clip_factor(const ParamStore& params, double max_norm);

}  // namespace v2eg
