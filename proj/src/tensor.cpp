#include "pgsum/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <utility>

#include "pgsum/errors.hpp"

namespace pgsum {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace detail {

std::vector<double>& TensorNode::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

}  // namespace detail

namespace {

using detail::NodePtr;
using detail::TensorNode;

thread_local Tape* g_current_tape = nullptr;

NodePtr make_node(Shape shape, std::vector<double> value) {
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  return node;
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) {
    throw ContractError(std::string(op) + ": undefined tensor operand");
  }
}

// Builds the result of an operation. `backward` receives the output node and
// is only invoked when the output has a gradient to propagate.
template <class Backward>
Tensor emit(Shape shape, std::vector<double> value,
            std::initializer_list<const Tensor*> inputs, Backward backward) {
  NodePtr out = make_node(std::move(shape), std::move(value));
  Tape* tape = Tape::current();
  if (tape != nullptr) {
    bool any = false;
    for (const Tensor* t : inputs) any = any || t->node()->needs_grad();
    if (any) {
      TensorNode* raw = out.get();
      tape->record(out, [raw, backward = std::move(backward)]() mutable {
        backward(*raw);
      });
    }
  }
  return Tensor::from_node(std::move(out));
}

template <class Backward>
Tensor emit_many(Shape shape, std::vector<double> value,
                 const std::vector<Tensor>& inputs, Backward backward) {
  NodePtr out = make_node(std::move(shape), std::move(value));
  Tape* tape = Tape::current();
  if (tape != nullptr) {
    bool any = false;
    for (const Tensor& t : inputs) any = any || t.node()->needs_grad();
    if (any) {
      TensorNode* raw = out.get();
      tape->record(out, [raw, backward = std::move(backward)]() mutable {
        backward(*raw);
      });
    }
  }
  return Tensor::from_node(std::move(out));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require_defined(a, op);
  require_defined(b, op);
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

template <class F, class DF>
Tensor unary(const Tensor& a, const char* op, F f, DF df) {
  require_defined(a, op);
  const auto& x = a.node()->value;
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  NodePtr an = a.node();
  return emit(a.shape(), std::move(y), {&a}, [an, df](TensorNode& out) {
    if (!an->needs_grad()) return;
    auto& g = an->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += out.grad[i] * df(an->value[i], out.value[i]);
    }
  });
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  for (std::size_t d : shape) {
    if (d == 0) {
      throw DimensionError("tensor extents must be positive, got " +
                           shape_string(shape));
    }
  }
  if (shape_size(shape) != data.size()) {
    throw DimensionError("shape " + shape_string(shape) + " holds " +
                         std::to_string(shape_size(shape)) +
                         " values, data has " + std::to_string(data.size()));
  }
  node_ = make_node(std::move(shape), std::move(data));
  node_->requires_grad = requires_grad;
}

Tensor Tensor::from_node(detail::NodePtr node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::vector<double> data(shape_size(shape), 0.0);
  return Tensor(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::full(Shape shape, double value) {
  std::vector<double> data(shape_size(shape), value);
  return Tensor(std::move(shape), std::move(data));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  Shape shape{values.size()};
  return Tensor(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> values, bool requires_grad) {
  return Tensor({rows, cols}, std::move(values), requires_grad);
}

const Shape& Tensor::shape() const {
  require_defined(*this, "shape");
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) +
                         " out of range for shape " + shape_string(s));
  }
  return s[axis];
}

std::size_t Tensor::size() const { return defined() ? node_->value.size() : 0; }

std::span<const double> Tensor::data() const {
  require_defined(*this, "data");
  return node_->value;
}

std::span<double> Tensor::mutable_data() {
  require_defined(*this, "mutable_data");
  return node_->value;
}

std::vector<double> Tensor::to_vector() const {
  auto d = data();
  return {d.begin(), d.end()};
}

double Tensor::item() const {
  if (size() != 1) {
    throw DimensionError("item() on non-scalar tensor " +
                         shape_string(shape()));
  }
  return node_->value[0];
}

double Tensor::at(std::size_t flat_index) const {
  if (flat_index >= size()) {
    throw IndexError("flat index " + std::to_string(flat_index) +
                     " out of range for " + shape_string(shape()));
  }
  return node_->value[flat_index];
}

bool Tensor::requires_grad() const { return defined() && node_->requires_grad; }

void Tensor::set_requires_grad(bool value) {
  require_defined(*this, "set_requires_grad");
  node_->requires_grad = value;
}

bool Tensor::tracked() const { return defined() && node_->tape != nullptr; }

bool Tensor::has_grad() const { return defined() && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  require_defined(*this, "grad");
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
  require_defined(*this, "mutable_grad");
  return node_->grad_buffer();
}

void Tensor::zero_grad() {
  if (defined()) node_->grad.clear();
}

Tensor Tensor::detach() const {
  require_defined(*this, "detach");
  return Tensor(node_->shape, node_->value);
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

Tape::~Tape() { clear(); }

void Tape::record(detail::NodePtr output, BackwardFn backward) {
  output->tape = this;
  records_.push_back({std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& root) {
  if (!root.defined() || root.size() != 1) {
    throw ContractError("backward requires a scalar root, got " +
                        (root.defined() ? shape_string(root.shape())
                                        : std::string("undefined")));
  }
  if (root.node()->tape != this) {
    throw ContractError("backward root is not tracked by this tape");
  }
  for (auto& r : records_) r.output->grad.clear();
  root.node()->grad_buffer()[0] = 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (!it->output->grad.empty()) it->backward();
  }
}

void Tape::clear() {
  for (auto& r : records_) r.output->tape = nullptr;
  records_.clear();
}

Tape* Tape::current() { return g_current_tape; }

Tape::Scope::Scope(Tape& tape) : previous_(g_current_tape) {
  g_current_tape = &tape;
}

Tape::Scope::~Scope() { g_current_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_current_tape) {
  g_current_tape = nullptr;
}

NoGradScope::~NoGradScope() { g_current_tape = previous_; }

void backward(const Tensor& root) {
  if (!root.defined() || root.node()->tape == nullptr) {
    throw ContractError("backward root is not tape-tracked");
  }
  root.node()->tape->backward(root);
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto& x = a.node()->value;
  const auto& y = b.node()->value;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  NodePtr an = a.node(), bn = b.node();
  return emit(a.shape(), std::move(out), {&a, &b}, [an, bn](TensorNode& o) {
    for (const NodePtr& n : {an, bn}) {
      if (!n->needs_grad()) continue;
      auto& g = n->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const auto& x = a.node()->value;
  const auto& y = b.node()->value;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  NodePtr an = a.node(), bn = b.node();
  return emit(a.shape(), std::move(out), {&a, &b}, [an, bn](TensorNode& o) {
    if (an->needs_grad()) {
      auto& g = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
    if (bn->needs_grad()) {
      auto& g = bn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto& x = a.node()->value;
  const auto& y = b.node()->value;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  NodePtr an = a.node(), bn = b.node();
  return emit(a.shape(), std::move(out), {&a, &b}, [an, bn](TensorNode& o) {
    if (an->needs_grad()) {
      auto& g = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * bn->value[i];
    }
    if (bn->needs_grad()) {
      auto& g = bn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * an->value[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) { return affine(a, factor, 0.0); }

Tensor affine(const Tensor& a, double factor, double offset) {
  return unary(
      a, "affine", [=](double x) { return factor * x + offset; },
      [=](double, double) { return factor; });
}

Tensor mul_scalar(const Tensor& a, const Tensor& s) {
  require_defined(a, "mul_scalar");
  require_defined(s, "mul_scalar");
  if (s.size() != 1) {
    throw DimensionError("mul_scalar: scale factor must have one element, got " +
                         shape_string(s.shape()));
  }
  const double k = s.node()->value[0];
  const auto& x = a.node()->value;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = k * x[i];
  NodePtr an = a.node(), sn = s.node();
  return emit(a.shape(), std::move(out), {&a, &s}, [an, sn](TensorNode& o) {
    const double k = sn->value[0];
    if (an->needs_grad()) {
      auto& g = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += k * o.grad[i];
    }
    if (sn->needs_grad()) {
      double acc = 0.0;
      for (std::size_t i = 0; i < o.grad.size(); ++i) {
        acc += o.grad[i] * an->value[i];
      }
      sn->grad_buffer()[0] += acc;
    }
  });
}

Tensor tanh(const Tensor& a) {
  return unary(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a, "sigmoid",
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, "exp", [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(
      a, "log", [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Tensor log_floor(const Tensor& a, double floor) {
  return unary(
      a, "log_floor", [floor](double x) { return std::log(std::max(x, floor)); },
      [floor](double x, double) { return x > floor ? 1.0 / x : 0.0; });
}

Tensor logaddexp(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "logaddexp");
  const auto& x = a.node()->value;
  const auto& y = b.node()->value;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double m = std::max(x[i], y[i]);
    out[i] = m + std::log(std::exp(x[i] - m) + std::exp(y[i] - m));
  }
  NodePtr an = a.node(), bn = b.node();
  return emit(a.shape(), std::move(out), {&a, &b}, [an, bn](TensorNode& o) {
    // d/da = exp(a - out), d/db = exp(b - out)
    if (an->needs_grad()) {
      auto& g = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] += o.grad[i] * std::exp(an->value[i] - o.value[i]);
      }
    }
    if (bn->needs_grad()) {
      auto& g = bn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] += o.grad[i] * std::exp(bn->value[i] - o.value[i]);
      }
    }
  });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "minimum");
  const auto& x = a.node()->value;
  const auto& y = b.node()->value;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::min(x[i], y[i]);
  NodePtr an = a.node(), bn = b.node();
  // Ties route the gradient to `a`.
  return emit(a.shape(), std::move(out), {&a, &b}, [an, bn](TensorNode& o) {
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      const bool to_a = an->value[i] <= bn->value[i];
      const NodePtr& n = to_a ? an : bn;
      if (n->needs_grad()) n->grad_buffer()[i] += o.grad[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Linear algebra and reshaping
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  auto mismatch = [&] {
    return DimensionError("matmul: incompatible shapes " + shape_string(sa) +
                          " and " + shape_string(sb));
  };
  NodePtr an = a.node(), bn = b.node();
  const auto& A = an->value;
  const auto& B = bn->value;

  if (sa.size() == 2 && sb.size() == 2) {
    const std::size_t m = sa[0], k = sa[1], n = sb[1];
    if (sb[0] != k) throw mismatch();
    std::vector<double> C(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = A[i * k + p];
        if (aip == 0.0) continue;
        const double* brow = &B[p * n];
        double* crow = &C[i * n];
        for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
      }
    }
    return emit({m, n}, std::move(C), {&a, &b},
                [an, bn, m, k, n](TensorNode& o) {
                  const auto& G = o.grad;
                  if (an->needs_grad()) {
                    auto& gA = an->grad_buffer();
                    for (std::size_t i = 0; i < m; ++i) {
                      for (std::size_t p = 0; p < k; ++p) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < n; ++j) {
                          acc += G[i * n + j] * bn->value[p * n + j];
                        }
                        gA[i * k + p] += acc;
                      }
                    }
                  }
                  if (bn->needs_grad()) {
                    auto& gB = bn->grad_buffer();
                    for (std::size_t i = 0; i < m; ++i) {
                      for (std::size_t p = 0; p < k; ++p) {
                        const double aip = an->value[i * k + p];
                        if (aip == 0.0) continue;
                        for (std::size_t j = 0; j < n; ++j) {
                          gB[p * n + j] += aip * G[i * n + j];
                        }
                      }
                    }
                  }
                });
  }

  if (sa.size() == 2 && sb.size() == 1) {
    const std::size_t m = sa[0], k = sa[1];
    if (sb[0] != k) throw mismatch();
    std::vector<double> y(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      const double* arow = &A[i * k];
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * B[p];
      y[i] = acc;
    }
    return emit({m}, std::move(y), {&a, &b}, [an, bn, m, k](TensorNode& o) {
      const auto& G = o.grad;
      if (an->needs_grad()) {
        auto& gA = an->grad_buffer();
        for (std::size_t i = 0; i < m; ++i) {
          const double gi = G[i];
          if (gi == 0.0) continue;
          double* grow = &gA[i * k];
          for (std::size_t p = 0; p < k; ++p) grow[p] += gi * bn->value[p];
        }
      }
      if (bn->needs_grad()) {
        auto& gx = bn->grad_buffer();
        for (std::size_t i = 0; i < m; ++i) {
          const double gi = G[i];
          if (gi == 0.0) continue;
          const double* arow = &an->value[i * k];
          for (std::size_t p = 0; p < k; ++p) gx[p] += gi * arow[p];
        }
      }
    });
  }

  if (sa.size() == 1 && sb.size() == 2) {
    const std::size_t m = sb[0], n = sb[1];
    if (sa[0] != m) throw mismatch();
    std::vector<double> y(n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      const double xi = A[i];
      if (xi == 0.0) continue;
      const double* brow = &B[i * n];
      for (std::size_t j = 0; j < n; ++j) y[j] += xi * brow[j];
    }
    return emit({n}, std::move(y), {&a, &b}, [an, bn, m, n](TensorNode& o) {
      const auto& G = o.grad;
      if (an->needs_grad()) {
        auto& gx = an->grad_buffer();
        for (std::size_t i = 0; i < m; ++i) {
          const double* brow = &bn->value[i * n];
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += brow[j] * G[j];
          gx[i] += acc;
        }
      }
      if (bn->needs_grad()) {
        auto& gB = bn->grad_buffer();
        for (std::size_t i = 0; i < m; ++i) {
          const double xi = an->value[i];
          if (xi == 0.0) continue;
          double* grow = &gB[i * n];
          for (std::size_t j = 0; j < n; ++j) grow[j] += xi * G[j];
        }
      }
    });
  }

  throw mismatch();
}

Tensor transpose(const Tensor& m) {
  require_defined(m, "transpose");
  if (m.rank() != 2) {
    throw DimensionError("transpose: expected a matrix, got " +
                         shape_string(m.shape()));
  }
  const std::size_t r = m.dim(0), c = m.dim(1);
  const auto& v = m.node()->value;
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = v[i * c + j];
  }
  NodePtr mn = m.node();
  return emit({c, r}, std::move(out), {&m}, [mn, r, c](TensorNode& o) {
    if (!mn->needs_grad()) return;
    auto& g = mn->grad_buffer();
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += o.grad[j * r + i];
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  require_defined(a, "reshape");
  if (shape_size(shape) != a.size()) {
    throw DimensionError("reshape: cannot view " + shape_string(a.shape()) +
                         " as " + shape_string(shape));
  }
  NodePtr an = a.node();
  return emit(std::move(shape), an->value, {&a}, [an](TensorNode& o) {
    if (!an->needs_grad()) return;
    auto& g = an->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
  });
}

Tensor add_rowwise(const Tensor& m, const Tensor& v) {
  require_defined(m, "add_rowwise");
  require_defined(v, "add_rowwise");
  if (m.rank() != 2 || v.rank() != 1 || m.dim(1) != v.dim(0)) {
    throw DimensionError("add_rowwise: cannot add " + shape_string(v.shape()) +
                         " to rows of " + shape_string(m.shape()));
  }
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  std::vector<double> out(m.node()->value);
  const auto& x = v.node()->value;
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] += x[j];
  }
  NodePtr mn = m.node(), vn = v.node();
  return emit(m.shape(), std::move(out), {&m, &v},
              [mn, vn, rows, cols](TensorNode& o) {
                if (mn->needs_grad()) {
                  auto& g = mn->grad_buffer();
                  for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
                }
                if (vn->needs_grad()) {
                  auto& g = vn->grad_buffer();
                  for (std::size_t i = 0; i < rows; ++i) {
                    for (std::size_t j = 0; j < cols; ++j) {
                      g[j] += o.grad[i * cols + j];
                    }
                  }
                }
              });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat: no operands");
  for (const Tensor& p : parts) require_defined(p, "concat");
  const std::size_t rank = parts.front().rank();
  if (rank < 1 || rank > 2 || axis >= rank) {
    throw DimensionError("concat: unsupported axis " + std::to_string(axis) +
                         " for shape " + shape_string(parts.front().shape()));
  }
  for (const Tensor& p : parts) {
    bool ok = p.rank() == rank;
    if (ok && rank == 2) ok = p.dim(1 - axis) == parts.front().dim(1 - axis);
    if (!ok) {
      throw DimensionError("concat: shape mismatch " +
                           shape_string(parts.front().shape()) + " vs " +
                           shape_string(p.shape()));
    }
  }

  std::vector<NodePtr> nodes;
  nodes.reserve(parts.size());
  for (const Tensor& p : parts) nodes.push_back(p.node());

  if (rank == 1 || axis == 0) {
    // Contiguous blocks.
    std::vector<double> out;
    std::size_t lead = 0;
    for (const Tensor& p : parts) {
      out.insert(out.end(), p.node()->value.begin(), p.node()->value.end());
      lead += p.dim(0);
    }
    Shape shape = rank == 1 ? Shape{lead} : Shape{lead, parts.front().dim(1)};
    return emit_many(std::move(shape), std::move(out), parts,
                     [nodes](TensorNode& o) {
                       std::size_t offset = 0;
                       for (const NodePtr& n : nodes) {
                         const std::size_t len = n->value.size();
                         if (n->needs_grad()) {
                           auto& g = n->grad_buffer();
                           for (std::size_t i = 0; i < len; ++i) {
                             g[i] += o.grad[offset + i];
                           }
                         }
                         offset += len;
                       }
                     });
  }

  // rank 2, axis 1: interleave rows.
  const std::size_t rows = parts.front().dim(0);
  std::size_t cols = 0;
  for (const Tensor& p : parts) cols += p.dim(1);
  std::vector<double> out(rows * cols);
  std::size_t col0 = 0;
  for (const Tensor& p : parts) {
    const std::size_t c = p.dim(1);
    const auto& v = p.node()->value;
    for (std::size_t i = 0; i < rows; ++i) {
      std::copy_n(&v[i * c], c, &out[i * cols + col0]);
    }
    col0 += c;
  }
  return emit_many({rows, cols}, std::move(out), parts,
                   [nodes, rows, cols](TensorNode& o) {
                     std::size_t col0 = 0;
                     for (const NodePtr& n : nodes) {
                       const std::size_t c = n->shape[1];
                       if (n->needs_grad()) {
                         auto& g = n->grad_buffer();
                         for (std::size_t i = 0; i < rows; ++i) {
                           for (std::size_t j = 0; j < c; ++j) {
                             g[i * c + j] += o.grad[i * cols + col0 + j];
                           }
                         }
                       }
                       col0 += c;
                     }
                   });
}

Tensor slice(const Tensor& a, std::size_t begin, std::size_t end) {
  require_defined(a, "slice");
  if (a.rank() != 1 || begin >= end || end > a.dim(0)) {
    throw DimensionError("slice: range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") invalid for " +
                         shape_string(a.shape()));
  }
  const auto& v = a.node()->value;
  std::vector<double> out(v.begin() + static_cast<std::ptrdiff_t>(begin),
                          v.begin() + static_cast<std::ptrdiff_t>(end));
  NodePtr an = a.node();
  return emit({end - begin}, std::move(out), {&a}, [an, begin](TensorNode& o) {
    if (!an->needs_grad()) return;
    auto& g = an->grad_buffer();
    for (std::size_t i = 0; i < o.grad.size(); ++i) g[begin + i] += o.grad[i];
  });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  require_defined(a, "slice_cols");
  if (a.rank() != 2 || begin >= end || end > a.dim(1)) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") invalid for " +
                         shape_string(a.shape()));
  }
  const std::size_t rows = a.dim(0), cols = a.dim(1), w = end - begin;
  const auto& v = a.node()->value;
  std::vector<double> out(rows * w);
  for (std::size_t i = 0; i < rows; ++i) {
    std::copy_n(&v[i * cols + begin], w, &out[i * w]);
  }
  NodePtr an = a.node();
  return emit({rows, w}, std::move(out), {&a},
              [an, rows, cols, w, begin](TensorNode& o) {
                if (!an->needs_grad()) return;
                auto& g = an->grad_buffer();
                for (std::size_t i = 0; i < rows; ++i) {
                  for (std::size_t j = 0; j < w; ++j) {
                    g[i * cols + begin + j] += o.grad[i * w + j];
                  }
                }
              });
}

Tensor row(const Tensor& m, std::size_t index) {
  require_defined(m, "row");
  if (m.rank() != 2) {
    throw DimensionError("row: expected a matrix, got " +
                         shape_string(m.shape()));
  }
  if (index >= m.dim(0)) {
    throw IndexError("row " + std::to_string(index) + " out of range for " +
                     shape_string(m.shape()));
  }
  const std::size_t cols = m.dim(1);
  const auto& v = m.node()->value;
  std::vector<double> out(v.begin() + static_cast<std::ptrdiff_t>(index * cols),
                          v.begin() +
                              static_cast<std::ptrdiff_t>((index + 1) * cols));
  NodePtr mn = m.node();
  return emit({cols}, std::move(out), {&m}, [mn, index, cols](TensorNode& o) {
    if (!mn->needs_grad()) return;
    auto& g = mn->grad_buffer();
    for (std::size_t j = 0; j < cols; ++j) g[index * cols + j] += o.grad[j];
  });
}

Tensor stack(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw ContractError("stack: no rows");
  for (const Tensor& r : rows) {
    require_defined(r, "stack");
    if (r.rank() != 1 || r.dim(0) != rows.front().dim(0)) {
      throw DimensionError("stack: row shape " + shape_string(r.shape()) +
                           " differs from " +
                           shape_string(rows.front().shape()));
    }
  }
  const std::size_t n = rows.size(), d = rows.front().dim(0);
  std::vector<double> out;
  out.reserve(n * d);
  std::vector<NodePtr> nodes;
  nodes.reserve(n);
  for (const Tensor& r : rows) {
    out.insert(out.end(), r.node()->value.begin(), r.node()->value.end());
    nodes.push_back(r.node());
  }
  return emit_many({n, d}, std::move(out), rows, [nodes, d](TensorNode& o) {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (!nodes[i]->needs_grad()) continue;
      auto& g = nodes[i]->grad_buffer();
      for (std::size_t j = 0; j < d; ++j) g[j] += o.grad[i * d + j];
    }
  });
}

Tensor pad(const Tensor& a, std::size_t length) {
  require_defined(a, "pad");
  if (a.rank() != 1 || length < a.dim(0)) {
    throw DimensionError("pad: cannot pad " + shape_string(a.shape()) +
                         " to length " + std::to_string(length));
  }
  if (length == a.dim(0)) return a;
  std::vector<double> out(length, 0.0);
  std::copy(a.node()->value.begin(), a.node()->value.end(), out.begin());
  NodePtr an = a.node();
  return emit({length}, std::move(out), {&a}, [an](TensorNode& o) {
    if (!an->needs_grad()) return;
    auto& g = an->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Softmax and reductions
// ---------------------------------------------------------------------------

Tensor softmax(const Tensor& logits, std::size_t axis) {
  require_defined(logits, "softmax");
  const std::size_t rank = logits.rank();
  if (rank < 1 || rank > 2 || axis >= rank) {
    throw DimensionError("softmax: axis " + std::to_string(axis) +
                         " invalid for " + shape_string(logits.shape()));
  }
  const auto& x = logits.node()->value;
  for (double v : x) {
    if (!std::isfinite(v)) {
      throw NumericError("softmax: non-finite input value " +
                         std::to_string(v));
    }
  }
  // Describe the layout as `groups` independent runs of `len` values spaced
  // `stride` apart.
  std::size_t groups = 1, len = x.size(), stride = 1, group_step = 0;
  if (rank == 2 && axis == 1) {
    groups = logits.dim(0), len = logits.dim(1), group_step = len;
  } else if (rank == 2) {
    groups = logits.dim(1), len = logits.dim(0), stride = groups;
    group_step = 1;
  }
  std::vector<double> y(x.size());
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t base = g * group_step;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < len; ++i) mx = std::max(mx, x[base + i * stride]);
    double total = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      const double e = std::exp(x[base + i * stride] - mx);
      y[base + i * stride] = e;
      total += e;
    }
    for (std::size_t i = 0; i < len; ++i) y[base + i * stride] /= total;
  }
  NodePtr ln = logits.node();
  return emit(logits.shape(), std::move(y), {&logits},
              [ln, groups, len, stride, group_step](TensorNode& o) {
                if (!ln->needs_grad()) return;
                auto& g = ln->grad_buffer();
                for (std::size_t k = 0; k < groups; ++k) {
                  const std::size_t base = k * group_step;
                  double inner = 0.0;
                  for (std::size_t i = 0; i < len; ++i) {
                    const std::size_t at = base + i * stride;
                    inner += o.value[at] * o.grad[at];
                  }
                  for (std::size_t i = 0; i < len; ++i) {
                    const std::size_t at = base + i * stride;
                    g[at] += o.value[at] * (o.grad[at] - inner);
                  }
                }
              });
}

Tensor sum(const Tensor& a) {
  require_defined(a, "sum");
  double total = 0.0;
  for (double v : a.node()->value) total += v;
  NodePtr an = a.node();
  return emit({1}, {total}, {&a}, [an](TensorNode& o) {
    if (!an->needs_grad()) return;
    auto& g = an->grad_buffer();
    for (double& gi : g) gi += o.grad[0];
  });
}

Tensor dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  const auto& x = a.node()->value;
  const auto& y = b.node()->value;
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) total += x[i] * y[i];
  NodePtr an = a.node(), bn = b.node();
  return emit({1}, {total}, {&a, &b}, [an, bn](TensorNode& o) {
    const double g0 = o.grad[0];
    if (an->needs_grad()) {
      auto& g = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += g0 * bn->value[i];
    }
    if (bn->needs_grad()) {
      auto& g = bn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += g0 * an->value[i];
    }
  });
}

Tensor pick(const Tensor& a, std::size_t flat_index) {
  require_defined(a, "pick");
  if (flat_index >= a.size()) {
    throw IndexError("pick: index " + std::to_string(flat_index) +
                     " out of range for " + shape_string(a.shape()));
  }
  NodePtr an = a.node();
  return emit({1}, {an->value[flat_index]}, {&a},
              [an, flat_index](TensorNode& o) {
                if (an->needs_grad()) an->grad_buffer()[flat_index] += o.grad[0];
              });
}

// ---------------------------------------------------------------------------
// Embeddings and scatter
// ---------------------------------------------------------------------------

Tensor embedding_lookup(const Tensor& table, std::span<const int> ids) {
  require_defined(table, "embedding_lookup");
  if (table.rank() != 2) {
    throw DimensionError("embedding_lookup: table must be a matrix, got " +
                         shape_string(table.shape()));
  }
  if (ids.empty()) throw ContractError("embedding_lookup: no ids");
  const std::size_t rows = table.dim(0), d = table.dim(1);
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= rows) {
      throw IndexError("embedding_lookup: token id " + std::to_string(id) +
                       " outside [0, " + std::to_string(rows) + ")");
    }
  }
  const auto& E = table.node()->value;
  std::vector<double> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::copy_n(&E[static_cast<std::size_t>(ids[i]) * d], d, &out[i * d]);
  }
  NodePtr tn = table.node();
  std::vector<int> idv(ids.begin(), ids.end());
  return emit({ids.size(), d}, std::move(out), {&table},
              [tn, idv = std::move(idv), d](TensorNode& o) {
                if (!tn->needs_grad()) return;
                auto& g = tn->grad_buffer();
                for (std::size_t i = 0; i < idv.size(); ++i) {
                  const std::size_t r = static_cast<std::size_t>(idv[i]);
                  for (std::size_t j = 0; j < d; ++j) {
                    g[r * d + j] += o.grad[i * d + j];
                  }
                }
              });
}

Tensor embedding_row(const Tensor& table, int id) {
  require_defined(table, "embedding_row");
  if (table.rank() != 2) {
    throw DimensionError("embedding_row: table must be a matrix, got " +
                         shape_string(table.shape()));
  }
  if (id < 0 || static_cast<std::size_t>(id) >= table.dim(0)) {
    throw IndexError("embedding_row: token id " + std::to_string(id) +
                     " outside [0, " + std::to_string(table.dim(0)) + ")");
  }
  return row(table, static_cast<std::size_t>(id));
}

Tensor scatter_add(const Tensor& base, const Tensor& values,
                   std::span<const int> indices) {
  require_defined(base, "scatter_add");
  require_defined(values, "scatter_add");
  if (base.rank() != 1 || values.rank() != 1 ||
      values.dim(0) != indices.size()) {
    throw DimensionError("scatter_add: " + std::to_string(indices.size()) +
                         " indices for values " +
                         shape_string(values.shape()) + " into " +
                         shape_string(base.shape()));
  }
  const std::size_t n = base.dim(0);
  for (int idx : indices) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= n) {
      throw IndexError("scatter_add: index " + std::to_string(idx) +
                       " outside [0, " + std::to_string(n) + ")");
    }
  }
  std::vector<double> out(base.node()->value);
  const auto& v = values.node()->value;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    out[static_cast<std::size_t>(indices[k])] += v[k];
  }
  NodePtr bn = base.node(), vn = values.node();
  std::vector<int> idx(indices.begin(), indices.end());
  return emit(base.shape(), std::move(out), {&base, &values},
              [bn, vn, idx = std::move(idx)](TensorNode& o) {
                if (bn->needs_grad()) {
                  auto& g = bn->grad_buffer();
                  for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
                }
                if (vn->needs_grad()) {
                  auto& g = vn->grad_buffer();
                  for (std::size_t k = 0; k < idx.size(); ++k) {
                    g[k] += o.grad[static_cast<std::size_t>(idx[k])];
                  }
                }
              });
}

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

namespace {

// Ridders' method: shrink h by kCon each row, extrapolate the tableau,
// keep the estimate with the smallest error and stop once it blows up.
template <class F>
double ridders(F&& at, double h) {
  constexpr int kTab = 10;
  constexpr double kCon = 1.4, kCon2 = kCon * kCon, kSafe = 2.0;
  double a[kTab][kTab];
  a[0][0] = (at(h) - at(-h)) / (2.0 * h);
  double best = a[0][0], err = std::numeric_limits<double>::max();
  for (int i = 1; i < kTab; ++i) {
    h /= kCon;
    a[0][i] = (at(h) - at(-h)) / (2.0 * h);
    double fac = kCon2;
    for (int j = 1; j <= i; ++j) {
      a[j][i] = (a[j - 1][i] * fac - a[j - 1][i - 1]) / (fac - 1.0);
      fac *= kCon2;
      const double e = std::max(std::abs(a[j][i] - a[j - 1][i]),
                                std::abs(a[j][i] - a[j - 1][i - 1]));
      if (e <= err) {
        err = e;
        best = a[j][i];
      }
    }
    if (std::abs(a[i][i] - a[i - 1][i - 1]) >= kSafe * err) break;
  }
  return best;
}

}  // namespace

GradCheckResult grad_check(const std::function<Tensor()>& f,
                           std::vector<Tensor> params, double step,
                           Stencil stencil) {
  if (!(step > 0.0)) throw ContractError("grad_check: step must be positive");
  std::vector<bool> previous_flags;
  for (Tensor& p : params) {
    previous_flags.push_back(p.requires_grad());
    p.zero_grad();
    p.set_requires_grad(true);
  }

  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    Tape::Scope scope(tape);
    Tensor y = f();
    tape.backward(y);
  }
  for (Tensor& p : params) {
    if (p.has_grad()) {
      auto g = p.grad();
      analytic.emplace_back(g.begin(), g.end());
    } else {
      analytic.emplace_back(p.size(), 0.0);
    }
    p.zero_grad();
  }

  GradCheckResult result;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto data = params[k].mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      auto at = [&](double offset) {
        data[i] = saved + offset;
        return f().item();
      };
      double numeric;
      if (stencil == Stencil::kCentral2) {
        numeric = (at(step) - at(-step)) / (2.0 * step);
      } else if (stencil == Stencil::kRidders) {
        numeric = ridders(at, step);
      } else {
        numeric = (-at(2 * step) + 8 * at(step) - 8 * at(-step) +
                   at(-2 * step)) /
                  (12.0 * step);
      }
      data[i] = saved;
      const double a = analytic[k][i];
      const double denom =
          std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > result.max_relative_error) {
        result = {rel, k, i, a, numeric};
      }
    }
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    params[k].set_requires_grad(previous_flags[k]);
  }
  return result;
}

}  // namespace pgsum
