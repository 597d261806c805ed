#include "v2eg/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "v2eg/errors.hpp"

namespace v2eg {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a gradient arrives
  bool requires_grad{false};
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
  }
};

}  // namespace detail

using detail::Node;

namespace {

thread_local bool g_grad_enabled = true;
std::atomic<bool> g_finite_checks{false};

void require_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value in ") + what);
  }
}

void require_2d(const Tensor& t, const char* op) {
  if (t.shape().size() != 2) {
    throw DimensionError(std::string(op) + ": expected a 2-D tensor, got " + shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

}  // namespace

// Helper used by every op: allocates the output, links parents when any of
// them needs a gradient, and runs the optional finite scan.
struct OpBuilder {
  static Tensor make(const char* name, Shape shape, std::vector<double> value,
                     std::vector<Tensor> inputs, std::function<void(Node&)> backward_fn) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    if (g_finite_checks.load(std::memory_order_relaxed)) require_finite(node->value, name);
    if (g_grad_enabled) {
      bool any = false;
      for (const auto& in : inputs) any = any || in.node_->requires_grad;
      if (any) {
        node->requires_grad = true;
        node->parents.reserve(inputs.size());
        for (auto& in : inputs) node->parents.push_back(in.node_);
        node->backward_fn = std::move(backward_fn);
      }
    }
    return Tensor(std::move(node));
  }

  static Node& parent(Node& n, std::size_t i) { return *n.parents[i]; }
  static Node* node_of(const Tensor& t) { return t.node_.get(); }
};

namespace {

// Gradient sink for input i, or nullptr when that input does not need one.
double* grad_of(Node& out, std::size_t i) {
  Node& p = *out.parents[i];
  if (!p.requires_grad) return nullptr;
  p.ensure_grad();
  return p.grad.data();
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << "]";
  return os.str();
}

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
  auto node = std::make_shared<Node>();
  node->value.assign(shape_size(shape), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  require_finite(node->value, "tensor construction");
  return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (values.size() != shape_size(shape)) {
    throw DimensionError("tensor data length " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape));
  }
  require_finite(values, "tensor construction");
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1, 1}, {value}, requires_grad); }

Tensor Tensor::identity(std::size_t n) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  return from({n, n}, std::move(v));
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::rows() const { return node_->shape.empty() ? 1 : node_->shape[0]; }
std::size_t Tensor::cols() const {
  const auto& s = node_->shape;
  return s.size() < 2 ? 1 : s[1];
}
std::size_t Tensor::size() const { return node_->value.size(); }
bool Tensor::requires_grad() const { return node_->requires_grad; }
std::span<const double> Tensor::data() const { return node_->value; }
double Tensor::at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

std::vector<double> Tensor::to_vector() const { return node_->value; }

std::span<double> Tensor::mutable_data() {
  if (node_->backward_fn) throw ContractError("mutable_data() is only allowed on leaf tensors");
  return node_->value;
}

std::span<const double> Tensor::grad() const {
  node_->ensure_grad();
  return node_->grad;
}

bool Tensor::has_grad() const { return !node_->grad.empty(); }

void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::detach() const {
  auto node = std::make_shared<Node>();
  node->shape = node_->shape;
  node->value = node_->value;
  return Tensor(std::move(node));
}

void Tensor::backward() const {
  if (size() != 1) {
    throw ContractError("backward() requires a scalar loss, got shape " + shape_str(shape()));
  }
  if (!node_->requires_grad) return;

  // Iterative DFS post-order gives a topological order of the recorded graph.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->ensure_grad();
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
  // Release the graph; interior gradients are not kept.
  for (Node* n : order) {
    if (n->backward_fn) {
      n->backward_fn = nullptr;
      n->parents.clear();
      n->grad.clear();
      n->grad.shrink_to_fit();
    }
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

void set_finite_checks(bool enabled) { g_finite_checks.store(enabled); }
bool finite_checks() { return g_finite_checks.load(); }

// ---------------------------------------------------------------------------
// linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return OpBuilder::make("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Node& o) {
    const double* g = o.grad.data();
    const double* pa = o.parents[0]->value.data();
    const double* pb = o.parents[1]->value.data();
    if (double* ga = grad_of(o, 0)) {
      // dA = G B^T
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          const double* grow = g + i * n;
          const double* brow = pb + p * n;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          ga[i * k + p] += acc;
        }
      }
    }
    if (double* gb = grad_of(o, 1)) {
      // dB = A^T G
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = pa[i * k + p];
          if (av == 0.0) continue;
          double* gbrow = gb + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
        }
      }
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_2d(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.data()[i * n + j];
  return OpBuilder::make("transpose", {n, m}, std::move(out), {a}, [m, n](Node& o) {
    double* ga = grad_of(o, 0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += o.grad[j * m + i];
  });
}

// ---------------------------------------------------------------------------
// elementwise

namespace {

template <typename Fwd, typename Bwd>
Tensor unary(const char* name, const Tensor& a, Fwd fwd, Bwd bwd) {
  std::vector<double> out(a.size());
  const auto in = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
  return OpBuilder::make(name, a.shape(), std::move(out), {a}, [bwd](Node& o) {
    double* ga = grad_of(o, 0);
    const auto& x = o.parents[0]->value;
    for (std::size_t i = 0; i < x.size(); ++i) ga[i] += o.grad[i] * bwd(x[i], o.value[i]);
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return OpBuilder::make("add", a.shape(), std::move(out), {a, b}, [](Node& o) {
    for (std::size_t k = 0; k < 2; ++k)
      if (double* g = grad_of(o, k))
        for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return OpBuilder::make("sub", a.shape(), std::move(out), {a, b}, [](Node& o) {
    if (double* g = grad_of(o, 0))
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
    if (double* g = grad_of(o, 1))
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] -= o.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return OpBuilder::make("mul", a.shape(), std::move(out), {a, b}, [](Node& o) {
    const auto& av = o.parents[0]->value;
    const auto& bv = o.parents[1]->value;
    if (double* g = grad_of(o, 0))
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * bv[i];
    if (double* g = grad_of(o, 1))
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * av[i];
  });
}

Tensor scale(const Tensor& a, double s) {
  return unary("scale", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary("add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor square(const Tensor& a) {
  return unary("square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor log(const Tensor& a) {
  for (double v : a.data()) {
    if (!(v > 0.0)) throw NumericError("log of non-positive value");
  }
  return unary("log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor silu(const Tensor& a) {
  return unary(
      "silu", a, [](double x) { return x / (1.0 + std::exp(-x)); },
      [](double x, double) {
        const double s = 1.0 / (1.0 + std::exp(-x));
        return s * (1.0 + x * (1.0 - s));
      });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      "sigmoid", a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  return unary(
      "leaky_relu", a, [slope](double x) { return x > 0 ? x : slope * x; },
      [slope](double x, double) { return x > 0 ? 1.0 : slope; });
}

Tensor clamp_max(const Tensor& a, double hi) {
  return unary(
      "clamp_max", a, [hi](double x) { return x > hi ? hi : x; },
      [hi](double x, double) { return x > hi ? 0.0 : 1.0; });
}

// ---------------------------------------------------------------------------
// broadcasting

Tensor add_row(const Tensor& a, const Tensor& row) {
  require_2d(a, "add_row");
  const std::size_t m = a.rows(), n = a.cols();
  if (row.size() != n) {
    throw DimensionError("add_row: row of size " + std::to_string(row.size()) + " for " +
                         shape_str(a.shape()));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += row.data()[j];
  return OpBuilder::make("add_row", a.shape(), std::move(out), {a, row}, [m, n](Node& o) {
    if (double* g = grad_of(o, 0))
      for (std::size_t i = 0; i < m * n; ++i) g[i] += o.grad[i];
    if (double* g = grad_of(o, 1))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += o.grad[i * n + j];
  });
}

Tensor mul_scalar(const Tensor& a, const Tensor& s) {
  if (s.size() != 1) throw DimensionError("mul_scalar: expected 1x1 factor, got " + shape_str(s.shape()));
  const double f = s.data()[0];
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * f;
  return OpBuilder::make("mul_scalar", a.shape(), std::move(out), {a, s}, [](Node& o) {
    const auto& av = o.parents[0]->value;
    const double f = o.parents[1]->value[0];
    if (double* g = grad_of(o, 0))
      for (std::size_t i = 0; i < av.size(); ++i) g[i] += o.grad[i] * f;
    if (double* g = grad_of(o, 1)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < av.size(); ++i) acc += o.grad[i] * av[i];
      g[0] += acc;
    }
  });
}

Tensor outer_sum(const Tensor& col_a, const Tensor& col_b) {
  const std::size_t m = col_a.size(), n = col_b.size();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = col_a.data()[i] + col_b.data()[j];
  return OpBuilder::make("outer_sum", {m, n}, std::move(out), {col_a, col_b}, [m, n](Node& o) {
    if (double* g = grad_of(o, 0))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[i] += o.grad[i * n + j];
    if (double* g = grad_of(o, 1))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += o.grad[i * n + j];
  });
}

Tensor element(const Tensor& a, std::size_t index) {
  if (index >= a.size()) throw DimensionError("element: index out of range");
  return OpBuilder::make("element", {1, 1}, {a.data()[index]}, {a}, [index](Node& o) {
    grad_of(o, 0)[index] += o.grad[0];
  });
}

// ---------------------------------------------------------------------------
// reductions

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return OpBuilder::make("sum", {1, 1}, {acc}, {a}, [](Node& o) {
    double* g = grad_of(o, 0);
    const std::size_t n = o.parents[0]->value.size();
    for (std::size_t i = 0; i < n; ++i) g[i] += o.grad[0];
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor mean_rows(const Tensor& a) {
  require_2d(a, "mean_rows");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += a.data()[i * n + j];
  for (auto& v : out) v /= static_cast<double>(m);
  return OpBuilder::make("mean_rows", {1, n}, std::move(out), {a}, [m, n](Node& o) {
    double* g = grad_of(o, 0);
    const double inv = 1.0 / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += o.grad[j] * inv;
  });
}

// ---------------------------------------------------------------------------
// shape

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw DimensionError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return OpBuilder::make("reshape", std::move(shape), std::move(out), {a}, [](Node& o) {
    double* g = grad_of(o, 0);
    for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
  });
}

// ---------------------------------------------------------------------------
// normalizers

namespace {

// Softmax backward for one row: dx = y * (dy - <dy, y>).
void softmax_row_backward(const double* y, const double* dy, double* dx, std::size_t n) {
  double dot = 0.0;
  for (std::size_t j = 0; j < n; ++j) dot += dy[j] * y[j];
  for (std::size_t j = 0; j < n; ++j) dx[j] += y[j] * (dy[j] - dot);
}

}  // namespace

Tensor softmax_rows(const Tensor& x) {
  require_2d(x, "softmax_rows");
  require_finite(x.data(), "softmax_rows input");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = x.data().data() + i * n;
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (out[i * n + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
  }
  return OpBuilder::make("softmax_rows", x.shape(), std::move(out), {x}, [m, n](Node& o) {
    double* g = grad_of(o, 0);
    for (std::size_t i = 0; i < m; ++i)
      softmax_row_backward(o.value.data() + i * n, o.grad.data() + i * n, g + i * n, n);
  });
}

Tensor masked_softmax_rows(const Tensor& x, const Tensor& mask) {
  require_2d(x, "masked_softmax_rows");
  require_same_shape(x, mask, "masked_softmax_rows");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = x.data().data() + i * n;
    const double* mrow = mask.data().data() + i * n;
    double mx = -INFINITY;
    for (std::size_t j = 0; j < n; ++j)
      if (mrow[j] != 0.0) mx = std::max(mx, row[j]);
    if (mx == -INFINITY) throw ContractError("masked_softmax_rows: row " + std::to_string(i) + " fully masked");
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (mrow[j] != 0.0) z += (out[i * n + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
  }
  // Masked outputs are exactly zero so the unmasked backward formula applies.
  return OpBuilder::make("masked_softmax_rows", x.shape(), std::move(out), {x, mask}, [m, n](Node& o) {
    if (double* g = grad_of(o, 0))
      for (std::size_t i = 0; i < m; ++i)
        softmax_row_backward(o.value.data() + i * n, o.grad.data() + i * n, g + i * n, n);
  });
}

Tensor center_rows(const Tensor& a) {
  require_2d(a, "center_rows");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(a.data().begin(), a.data().end());
  for (std::size_t i = 0; i < m; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += out[i * n + j];
    mu /= static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] -= mu;
  }
  return OpBuilder::make("center_rows", a.shape(), std::move(out), {a}, [m, n](Node& o) {
    double* g = grad_of(o, 0);
    for (std::size_t i = 0; i < m; ++i) {
      double mu = 0.0;
      for (std::size_t j = 0; j < n; ++j) mu += o.grad[i * n + j];
      mu /= static_cast<double>(n);
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += o.grad[i * n + j] - mu;
    }
  });
}

Tensor normalize_rows(const Tensor& a, double eps) {
  require_2d(a, "normalize_rows");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  std::vector<double> norms(m);
  for (std::size_t i = 0; i < m; ++i) {
    double ss = eps;
    for (std::size_t j = 0; j < n; ++j) ss += a.data()[i * n + j] * a.data()[i * n + j];
    norms[i] = std::sqrt(ss);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a.data()[i * n + j] / norms[i];
  }
  return OpBuilder::make("normalize_rows", a.shape(), std::move(out), {a},
                         [m, n, norms = std::move(norms)](Node& o) {
                           double* g = grad_of(o, 0);
                           for (std::size_t i = 0; i < m; ++i) {
                             const double* y = o.value.data() + i * n;
                             const double* dy = o.grad.data() + i * n;
                             double dot = 0.0;
                             for (std::size_t j = 0; j < n; ++j) dot += dy[j] * y[j];
                             for (std::size_t j = 0; j < n; ++j) g[i * n + j] += (dy[j] - y[j] * dot) / norms[i];
                           }
                         });
}

Tensor autocorrelation(const Tensor& a, std::size_t max_lag, double eps) {
  require_2d(a, "autocorrelation");
  const std::size_t m = a.rows(), n = a.cols();
  if (max_lag == 0 || max_lag >= n) {
    throw DimensionError("autocorrelation: max_lag must be in [1, samples)");
  }
  std::vector<double> out(m * max_lag);
  std::vector<double> energy(m);
  std::vector<double> lagged(m * max_lag);
  const double* x = a.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* r = x + i * n;
    double e = eps;
    for (std::size_t t = 0; t < n; ++t) e += r[t] * r[t];
    energy[i] = e;
    for (std::size_t k = 1; k <= max_lag; ++k) {
      double c = 0.0;
      for (std::size_t t = 0; t + k < n; ++t) c += r[t] * r[t + k];
      lagged[i * max_lag + k - 1] = c;
      out[i * max_lag + k - 1] = c / e;
    }
  }
  return OpBuilder::make(
      "autocorrelation", {m, max_lag}, std::move(out), {a},
      [m, n, max_lag, energy = std::move(energy), lagged = std::move(lagged)](Node& o) {
        double* g = grad_of(o, 0);
        const double* x = o.parents[0]->value.data();
        for (std::size_t i = 0; i < m; ++i) {
          const double* r = x + i * n;
          double* gr = g + i * n;
          const double e = energy[i];
          double de = 0.0;  // dL/d(energy)
          for (std::size_t k = 1; k <= max_lag; ++k) {
            const double dy = o.grad[i * max_lag + k - 1];
            if (dy == 0.0) continue;
            const double dc = dy / e;
            de -= dy * lagged[i * max_lag + k - 1] / (e * e);
            for (std::size_t t = 0; t + k < n; ++t) {
              gr[t] += dc * r[t + k];
              gr[t + k] += dc * r[t];
            }
          }
          for (std::size_t t = 0; t < n; ++t) gr[t] += de * 2.0 * r[t];
        }
      });
}

Tensor weighted_sum(const std::vector<Tensor>& items, const Tensor& weights) {
  if (items.empty()) throw DimensionError("weighted_sum: no items");
  if (weights.size() != items.size()) {
    throw DimensionError("weighted_sum: " + std::to_string(items.size()) + " items but " +
                         std::to_string(weights.size()) + " weights");
  }
  const std::size_t len = items[0].size();
  std::vector<double> out(len, 0.0);
  for (std::size_t g = 0; g < items.size(); ++g) {
    require_same_shape(items[0], items[g], "weighted_sum");
    const double w = weights.data()[g];
    for (std::size_t i = 0; i < len; ++i) out[i] += w * items[g].data()[i];
  }
  std::vector<Tensor> inputs = items;
  inputs.push_back(weights);
  const std::size_t count = items.size();
  return OpBuilder::make("weighted_sum", items[0].shape(), std::move(out), std::move(inputs),
                         [count, len](Node& o) {
                           const auto& w = o.parents[count]->value;
                           double* gw = grad_of(o, count);
                           for (std::size_t g = 0; g < count; ++g) {
                             const auto& item = o.parents[g]->value;
                             if (double* gi = grad_of(o, g))
                               for (std::size_t i = 0; i < len; ++i) gi[i] += o.grad[i] * w[g];
                             if (gw) {
                               double acc = 0.0;
                               for (std::size_t i = 0; i < len; ++i) acc += o.grad[i] * item[i];
                               gw[g] += acc;
                             }
                           }
                         });
}

}  // namespace v2eg
