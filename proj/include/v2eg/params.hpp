#pragma once

#include <string>
#include <vector>

#include "v2eg/rng.hpp"
#include "v2eg/tensor.hpp"

namespace v2eg {

struct NamedTensor {
  std::string name;
  Tensor value;
};

// Ordered collection of trainable leaves. Order is insertion order and is
// what checkpoints and optimizer state are keyed on.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor value);
  // Normal(0, std) leaf; std == 0 gives zeros.
  Tensor& add_normal(const std::string& name, Shape shape, double std, Rng& rng);

  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  bool contains(const std::string& name) const;

  std::vector<NamedTensor>& items() { return items_; }
  const std::vector<NamedTensor>& items() const { return items_; }
  std::size_t count() const;  // number of scalar parameters
  // Scalar count of entries whose name starts with prefix.
  std::size_t count_prefix(const std::string& prefix) const;

  void zero_grad();
  double grad_norm() const;

 private:
  std::vector<NamedTensor> items_;
};

}  // namespace v2eg
