#pragma once

// Dense row-major tensors with tape-free reverse-mode differentiation.
//
// A Tensor is a cheap handle onto a shared node. Operations create new nodes
// and, while gradient recording is enabled, remember their inputs plus a
// closure that pushes the output gradient back to them. backward() walks the
// recorded graph once in reverse topological order and then releases it.
//
// Most ops are 2-D (rows x cols); elementwise ops accept any shape.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace v2eg {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  // Rejects non-finite input and length/shape mismatches.
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor identity(std::size_t n);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rows() const;
  std::size_t cols() const;
  std::size_t size() const;
  bool requires_grad() const;

  std::span<const double> data() const;
  double at(std::size_t r, std::size_t c) const;
  double item() const;
  std::vector<double> to_vector() const;

  // Leaf-only mutation used by optimizers and initializers.
  std::span<double> mutable_data();

  // Gradient accumulated by backward(); zero-filled when none arrived yet.
  std::span<const double> grad() const;
  bool has_grad() const;
  void zero_grad();

  // Reverse pass from a scalar. Leaves with requires_grad accumulate into
  // grad(); the recorded graph is released afterwards.
  void backward() const;

  // Same values, no history, no gradient requirement.
  Tensor detach() const;

  const detail::Node* node() const { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend struct OpBuilder;
};

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// When on, every op output is scanned for NaN/Inf and a NumericError names the
// op. Off by default; tests switch it on.
void set_finite_checks(bool enabled);
bool finite_checks();

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// ---- elementwise, same shape ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor square(const Tensor& a);
Tensor log(const Tensor& a);
Tensor silu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope);
// Values above hi pass hi and a zero gradient.
Tensor clamp_max(const Tensor& a, double hi);

// ---- broadcasting helpers ----
// a [m x n] + row [1 x n] added to every row.
Tensor add_row(const Tensor& a, const Tensor& row);
// a [m x n] * s where s is a 1x1 tensor.
Tensor mul_scalar(const Tensor& a, const Tensor& s);
// col_a [m x 1], col_b [n x 1] -> out[i][j] = col_a[i] + col_b[j].
Tensor outer_sum(const Tensor& col_a, const Tensor& col_b);
// Single element of a, as a 1x1 tensor.
Tensor element(const Tensor& a, std::size_t index);

// ---- reductions ----
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// [m x n] -> [1 x n]
Tensor mean_rows(const Tensor& a);

// ---- shape ----
Tensor reshape(const Tensor& a, Shape shape);

// ---- normalizers ----
Tensor softmax_rows(const Tensor& x);
// Softmax restricted to entries where mask != 0; masked entries output 0.
// Every row of mask must have at least one nonzero.
Tensor masked_softmax_rows(const Tensor& x, const Tensor& mask);
// Subtract each row's mean.
Tensor center_rows(const Tensor& a);
// Divide each row by sqrt(sum of squares + eps).
Tensor normalize_rows(const Tensor& a, double eps);
// out[i][k-1] = sum_t a[i][t] a[i][t+k] / (sum_t a[i][t]^2 + eps), k = 1..max_lag.
Tensor autocorrelation(const Tensor& a, std::size_t max_lag, double eps);

// Sum of a list of same-shaped tensors weighted by the entries of a 1xG row.
Tensor weighted_sum(const std::vector<Tensor>& items, const Tensor& weights);

}  // namespace v2eg
