#include "v2eg/spgn_network.hpp"

#include <cmath>

#include "v2eg/errors.hpp"

namespace v2eg {

void SpgnConfig::validate() const {
  if (channels == 0 || samples == 0 || hidden == 0 || layers == 0 || graphs == 0)
    throw ConfigError("network dimensions must be positive");
  if (time_dim == 0 || time_dim % 2 != 0) throw ConfigError("time embedding width must be a positive even number");
  if (cond_dim == 0) throw ConfigError("condition width must be positive");
  if (disc_pool_width == 0 || disc_hidden == 0) throw ConfigError("discriminator widths must be positive");
}

Tensor time_embedding(long t, std::size_t dim) {
  const std::size_t half = dim / 2;
  std::vector<double> v(dim);
  for (std::size_t i = 0; i < half; ++i) {
    const double w = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    v[i] = std::sin(static_cast<double>(t) * w);
    v[half + i] = std::cos(static_cast<double>(t) * w);
  }
  return Tensor::from({1, dim}, std::move(v));
}

GraphOperators make_operators(const GraphSet& graphs) {
  GraphOperators ops;
  const std::size_t n = graphs.nodes();
  for (const Graph* g : graphs.all()) ops.a_hat.push_back(Tensor::from({n, n}, normalized_adjacency(*g)));
  std::vector<double> mask(n * n);
  const auto a = ops.a_hat.front().data();
  for (std::size_t i = 0; i < n * n; ++i) mask[i] = a[i] != 0.0 ? 1.0 : 0.0;
  ops.attention_mask = Tensor::from({n, n}, std::move(mask));
  return ops;
}

GraphOperators identity_operators(std::size_t n, std::size_t count) {
  GraphOperators ops;
  for (std::size_t g = 0; g < count; ++g) ops.a_hat.push_back(Tensor::identity(n));
  ops.attention_mask = Tensor::identity(n);
  return ops;
}

namespace {

// sum_s A^s (h W_s), without activation.
Tensor multiscale(const Tensor& a_hat, const std::vector<Tensor>& hw) {
  Tensor acc = hw.back();
  for (std::size_t s = hw.size() - 1; s-- > 0;) acc = add(hw[s], matmul(a_hat, acc));
  return acc;
}

void check_finite(const Tensor& t, const std::string& where) {
  for (double v : t.data())
    if (!std::isfinite(v)) throw NumericError("non-finite activation in " + where);
}

std::string layer_key(std::size_t l, const std::string& name) { return "spgn.l" + std::to_string(l) + "." + name; }

}  // namespace

Tensor graph_conv_layer(const Tensor& h, const Tensor& a_hat, const std::vector<Tensor>& weights) {
  if (weights.empty()) throw ConfigError("graph convolution needs at least one scale");
  if (a_hat.rows() != h.rows() || a_hat.cols() != h.rows())
    throw ConfigError("operator " + shape_str(a_hat.shape()) + " does not match features " + shape_str(h.shape()));
  std::vector<Tensor> hw;
  for (const auto& w : weights) {
    if (w.rows() != h.cols()) throw ConfigError("weight " + shape_str(w.shape()) + " does not match features " + shape_str(h.shape()));
    hw.push_back(matmul(h, w));
  }
  return silu(multiscale(a_hat, hw));
}

Tensor spatial_graph_attention(const Tensor& h, const Tensor& a_hat, const Tensor& mask, const Tensor& w,
                               const Tensor& a1, const Tensor& a2, double slope) {
  if (a_hat.rows() != h.rows() || mask.shape() != a_hat.shape())
    throw ConfigError("attention operator does not match features " + shape_str(h.shape()));
  const Tensor wh = matmul(h, w);
  const Tensor scores = leaky_relu(outer_sum(matmul(wh, a1), matmul(wh, a2)), slope);
  const Tensor alpha = mul(masked_softmax_rows(scores, mask), a_hat);
  return matmul(alpha, wh);
}

Tensor self_play_fuse(const std::vector<Tensor>& branches, const Tensor& lambda) {
  if (lambda.shape() != Shape{1, branches.size()})
    throw ConfigError("fusion logits " + shape_str(lambda.shape()) + " for " + std::to_string(branches.size()) + " branches");
  return weighted_sum(branches, softmax_rows(lambda));
}

std::size_t attention_param_count(const SpgnConfig& cfg) {
  return cfg.spatial_attention ? cfg.layers * (cfg.hidden * cfg.hidden + 2 * cfg.hidden) : 0;
}

void init_spgn_params(ParamStore& store, const SpgnConfig& cfg, Rng& rng) {
  cfg.validate();
  const double sd = cfg.init_std;
  const std::size_t h = cfg.hidden;
  store.add_normal("spgn.in.w", {cfg.samples, h}, sd, rng);
  store.add_normal("spgn.in.b", {1, h}, 0.0, rng);
  store.add_normal("spgn.time.w", {cfg.time_dim, h}, sd, rng);
  store.add_normal("spgn.time.b", {1, h}, 0.0, rng);
  store.add_normal("spgn.cond.w", {cfg.cond_dim, h}, sd, rng);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    store.add_normal(layer_key(l, "bias.w"), {h, h}, sd, rng);
    store.add_normal(layer_key(l, "bias.b"), {1, h}, 0.0, rng);
    for (std::size_t s = 0; s <= cfg.scales; ++s) store.add_normal(layer_key(l, "w" + std::to_string(s)), {h, h}, sd, rng);
    if (cfg.spatial_attention) {
      store.add_normal(layer_key(l, "att.w"), {h, h}, sd, rng);
      store.add_normal(layer_key(l, "att.a1"), {h, 1}, sd, rng);
      store.add_normal(layer_key(l, "att.a2"), {h, 1}, sd, rng);
    }
  }
  store.add_normal("spgn.lambda", {1, cfg.graphs}, 0.0, rng);
  store.add_normal("spgn.out.w", {h, cfg.samples}, 0.0, rng);
  store.add_normal("spgn.out.b", {1, cfg.samples}, 0.0, rng);

  const std::size_t pooled = cfg.channels * std::min(cfg.disc_pool_width, cfg.samples);
  store.add_normal("disc.w1", {pooled, cfg.disc_hidden}, sd, rng);
  store.add_normal("disc.b1", {1, cfg.disc_hidden}, 0.0, rng);
  store.add_normal("disc.w2", {cfg.disc_hidden, 1}, sd, rng);
  store.add_normal("disc.b2", {1, 1}, 0.0, rng);
}

Tensor denoise(const Tensor& x_t, long t, const Tensor& cond, const GraphOperators& ops, const ParamStore& store,
               const SpgnConfig& cfg) {
  if (x_t.shape() != Shape{cfg.channels, cfg.samples})
    throw ConfigError("denoiser input " + shape_str(x_t.shape()) + ", expected [" + std::to_string(cfg.channels) + "x" +
                      std::to_string(cfg.samples) + "]");
  if (t < 0) throw ConfigError("diffusion step must be non-negative");
  if (ops.a_hat.size() != cfg.graphs || ops.nodes() != cfg.channels)
    throw ConfigError("graph operators do not match the network config");

  Tensor h = add_row(matmul(x_t, store.get("spgn.in.w")), store.get("spgn.in.b"));
  Tensor e = silu(add_row(matmul(time_embedding(t, cfg.time_dim), store.get("spgn.time.w")), store.get("spgn.time.b")));
  if (cond.defined()) {
    if (cond.shape() != Shape{1, cfg.cond_dim})
      throw ConfigError("condition " + shape_str(cond.shape()) + ", expected [1x" + std::to_string(cfg.cond_dim) + "]");
    e = add(e, matmul(cond, store.get("spgn.cond.w")));
  }
  const Tensor& lambda = store.get("spgn.lambda");

  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const Tensor bias = add(matmul(e, store.get(layer_key(l, "bias.w"))), store.get(layer_key(l, "bias.b")));
    const Tensor z = add_row(h, bias);
    std::vector<Tensor> hw;
    for (std::size_t s = 0; s <= cfg.scales; ++s) hw.push_back(matmul(z, store.get(layer_key(l, "w" + std::to_string(s)))));
    std::vector<Tensor> branches;
    for (const auto& a : ops.a_hat) branches.push_back(multiscale(a, hw));
    Tensor pre = self_play_fuse(branches, lambda);
    if (cfg.spatial_attention)
      pre = add(pre, spatial_graph_attention(z, ops.a_hat.front(), ops.attention_mask, store.get(layer_key(l, "att.w")),
                                             store.get(layer_key(l, "att.a1")), store.get(layer_key(l, "att.a2")),
                                             cfg.attention_slope));
    h = add(h, silu(pre));
    check_finite(h, "spgn layer " + std::to_string(l));
  }
  Tensor out = add_row(matmul(h, store.get("spgn.out.w")), store.get("spgn.out.b"));
  check_finite(out, "spgn output projection");
  return out;
}

namespace {

// samples x bins averaging matrix over consecutive strides.
Tensor pool_matrix(std::size_t samples, std::size_t bins) {
  std::vector<double> m(samples * bins, 0.0);
  for (std::size_t b = 0; b < bins; ++b) {
    const std::size_t lo = b * samples / bins, hi = (b + 1) * samples / bins;
    for (std::size_t t = lo; t < hi; ++t) m[t * bins + b] = 1.0 / static_cast<double>(hi - lo);
  }
  return Tensor::from({samples, bins}, std::move(m));
}

}  // namespace

Tensor discriminate(const Tensor& x, const ParamStore& store, const SpgnConfig& cfg) {
  if (x.shape() != Shape{cfg.channels, cfg.samples}) throw ConfigError("discriminator input " + shape_str(x.shape()));
  const std::size_t bins = std::min(cfg.disc_pool_width, cfg.samples);
  const Tensor pooled = reshape(matmul(x, pool_matrix(cfg.samples, bins)), {1, cfg.channels * bins});
  const Tensor hidden = silu(add(matmul(pooled, store.get("disc.w1")), store.get("disc.b1")));
  return sigmoid(add(matmul(hidden, store.get("disc.w2")), store.get("disc.b2")));
}

void init_baseline_params(ParamStore& store, const SpgnConfig& cfg, Rng& rng) {
  cfg.validate();
  const double sd = cfg.init_std;
  const std::size_t h = cfg.hidden;
  store.add_normal("base.w1", {cfg.samples, h}, sd, rng);
  store.add_normal("base.b1", {1, h}, 0.0, rng);
  store.add_normal("base.time.w", {cfg.time_dim, h}, sd, rng);
  store.add_normal("base.w2", {h, h}, sd, rng);
  store.add_normal("base.b2", {1, h}, 0.0, rng);
  store.add_normal("base.w3", {h, cfg.samples}, 0.0, rng);
  store.add_normal("base.b3", {1, cfg.samples}, 0.0, rng);
}

Tensor baseline_denoise(const Tensor& x_t, long t, const ParamStore& store, const SpgnConfig& cfg) {
  if (x_t.shape() != Shape{cfg.channels, cfg.samples}) throw ConfigError("baseline input " + shape_str(x_t.shape()));
  const Tensor temb = matmul(time_embedding(t, cfg.time_dim), store.get("base.time.w"));
  const Tensor h1 = silu(add_row(add_row(matmul(x_t, store.get("base.w1")), store.get("base.b1")), temb));
  const Tensor h2 = silu(add_row(matmul(h1, store.get("base.w2")), store.get("base.b2")));
  Tensor out = add_row(matmul(h2, store.get("base.w3")), store.get("base.b3"));
  check_finite(out, "baseline output");
  return out;
}

Tensor DenoiserModel::predict(const Tensor& x_t, long t, const Tensor& cond) const {
  return baseline ? baseline_denoise(x_t, t, params, cfg) : denoise(x_t, t, cond, ops, params, cfg);
}

DenoiserModel make_model(const SpgnConfig& cfg, bool baseline, GraphOperators ops, Rng& rng) {
  DenoiserModel m;
  m.cfg = cfg;
  m.baseline = baseline;
  m.ops = std::move(ops);
  if (baseline)
    init_baseline_params(m.params, cfg, rng);
  else
    init_spgn_params(m.params, cfg, rng);
  return m;
}

}  // namespace v2eg
