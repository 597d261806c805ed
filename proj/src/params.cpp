#include "v2eg/params.hpp"

#include <cmath>

#include "v2eg/adam.hpp"
#include "v2eg/errors.hpp"

namespace v2eg {

Tensor& ParamStore::add(const std::string& name, Tensor value) {
  if (contains(name)) throw ConfigError("duplicate parameter name: " + name);
  items_.push_back({name, std::move(value)});
  return items_.back().value;
}

Tensor& ParamStore::add_normal(const std::string& name, Shape shape, double std, Rng& rng) {
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = std == 0.0 ? 0.0 : std * rng.normal();
  return add(name, Tensor::from(std::move(shape), std::move(v), true));
}

const Tensor& ParamStore::get(const std::string& name) const {
  for (const auto& it : items_)
    if (it.name == name) return it.value;
  throw ConfigError("unknown parameter: " + name);
}

Tensor& ParamStore::get(const std::string& name) {
  for (auto& it : items_)
    if (it.name == name) return it.value;
  throw ConfigError("unknown parameter: " + name);
}

bool ParamStore::contains(const std::string& name) const {
  for (const auto& it : items_)
    if (it.name == name) return true;
  return false;
}

std::size_t ParamStore::count() const {
  std::size_t n = 0;
  for (const auto& it : items_) n += it.value.size();
  return n;
}

std::size_t ParamStore::count_prefix(const std::string& prefix) const {
  std::size_t n = 0;
  for (const auto& it : items_)
    if (it.name.rfind(prefix, 0) == 0) n += it.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& it : items_) it.value.zero_grad();
}

double ParamStore::grad_norm() const {
  double ss = 0.0;
  for (const auto& it : items_) {
    if (!it.value.has_grad()) continue;
    for (double g : it.value.grad()) ss += g * g;
  }
  return std::sqrt(ss);
}

// ---------------------------------------------------------------------------

void adam_step(ParamStore& params, AdamState& state, double lr, const AdamConfig& cfg, double grad_scale) {
  auto& items = params.items();
  if (state.m.empty()) {
    state.m.resize(items.size());
    state.v.resize(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
      state.m[i].assign(items[i].value.size(), 0.0);
      state.v[i].assign(items[i].value.size(), 0.0);
    }
  }
  if (state.m.size() != items.size()) {
    throw OptimizerError("optimizer state holds " + std::to_string(state.m.size()) +
                         " moments for " + std::to_string(items.size()) + " parameters");
  }
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (state.m[i].size() != items[i].value.size()) {
      throw OptimizerError("optimizer state shape mismatch for parameter " + items[i].name);
    }
    if (!items[i].value.has_grad()) continue;
    for (double g : items[i].value.grad()) {
      if (!std::isfinite(g)) throw OptimizerError("non-finite gradient for parameter " + items[i].name);
    }
  }

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto& p = items[i].value;
    const bool has = p.has_grad();
    auto g = has ? p.grad() : std::span<const double>{};
    auto w = p.mutable_data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = has ? g[k] * grad_scale : 0.0;
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      w[k] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

double clip_factor(const ParamStore& params, double max_norm) {
  const double norm = params.grad_norm();
  if (!(norm > max_norm)) return 1.0;
  return max_norm / norm;
}

}  // namespace v2eg
