#pragma once

#include <string>
#include <vector>

#include "v2eg/electrode_graphs.hpp"
#include "v2eg/params.hpp"
#include "v2eg/tensor.hpp"

namespace v2eg {

struct SpgnConfig {
  std::size_t channels{62};
  std::size_t samples{400};
  std::size_t hidden{256};
  std::size_t layers{5};
  std::size_t scales{2};  // powers A^0 .. A^scales
  std::size_t time_dim{128};
  std::size_t cond_dim{512};
  std::size_t graphs{6};  // E-Graph + 5 S-Graphs
  bool spatial_attention{true};
  double attention_slope{0.2};
  std::size_t disc_hidden{64};
  std::size_t disc_pool_width{16};  // pooled time bins per channel
  double init_std{0.02};

  void validate() const;  // ConfigError
};

// Sinusoidal features of step t: sin(t w_i) then cos(t w_i), w_i = 10000^(-i/(dim/2)).
Tensor time_embedding(long t, std::size_t dim);

// Normalized adjacency of every graph as constant tensors; index 0 is the
// E-Graph, whose nonzero pattern is also the attention mask.
struct GraphOperators {
  std::vector<Tensor> a_hat;
  Tensor attention_mask;

  std::size_t nodes() const { return a_hat.empty() ? 0 : a_hat.front().rows(); }
};

GraphOperators make_operators(const GraphSet& graphs);
// Identity operators (no edges) for count graphs of n nodes.
GraphOperators identity_operators(std::size_t n, std::size_t count);

// act(sum_s A^s h W_s) with SiLU; weights.size() = S + 1.
Tensor graph_conv_layer(const Tensor& h, const Tensor& a_hat, const std::vector<Tensor>& weights);

// alpha = masked softmax of leaky_relu(a1^T W h_i + a2^T W h_j) over the
// nonzeros of a_hat, times the edge weight; output = alpha (h W).
Tensor spatial_graph_attention(const Tensor& h, const Tensor& a_hat, const Tensor& mask, const Tensor& w,
                               const Tensor& a1, const Tensor& a2, double slope = 0.2);

// sum_g softmax(lambda)_g branch_g. Throws ConfigError on count mismatch.
Tensor self_play_fuse(const std::vector<Tensor>& branches, const Tensor& lambda);

// Registers spgn.* (denoiser) and disc.* (discriminator) parameters. The
// output projection starts at zero.
void init_spgn_params(ParamStore& store, const SpgnConfig& cfg, Rng& rng);

// Noise prediction for x_t [channels x samples]. cond is the 1 x cond_dim
// pooled condition, or undefined for the null condition.
Tensor denoise(const Tensor& x_t, long t, const Tensor& cond, const GraphOperators& ops, const ParamStore& store,
               const SpgnConfig& cfg);

// Realness score in (0, 1), 1 x 1.
Tensor discriminate(const Tensor& x, const ParamStore& store, const SpgnConfig& cfg);

// Unconditional per-channel MLP denoiser (three layers, no graphs) used as
// the ablation baseline; parameters base.*.
void init_baseline_params(ParamStore& store, const SpgnConfig& cfg, Rng& rng);
Tensor baseline_denoise(const Tensor& x_t, long t, const ParamStore& store, const SpgnConfig& cfg);

// Scalar count of the spatial-attention parameters for cfg.
std::size_t attention_param_count(const SpgnConfig& cfg);

// Either denoiser behind one call; baseline ignores cond and graphs.
struct DenoiserModel {
  SpgnConfig cfg;
  bool baseline{false};
  ParamStore params;
  GraphOperators ops;

  Tensor predict(const Tensor& x_t, long t, const Tensor& cond) const;
  bool has_discriminator() const { return !baseline; }
  bool conditional() const { return !baseline; }
};

DenoiserModel make_model(const SpgnConfig& cfg, bool baseline, GraphOperators ops, Rng& rng);

}  // namespace v2eg
