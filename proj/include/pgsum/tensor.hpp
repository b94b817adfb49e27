#pragma once

// Dense row-major tensors of doubles with define-by-run reverse-mode
// differentiation. Operations executed while a Tape is installed on the
// current thread (see Tape::Scope) are recorded whenever one of their inputs
// requires a gradient; without an installed tape every operation is a plain
// value computation.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace pgsum {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tape;

namespace detail {

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  Tape* tape = nullptr;  // set when the node is the output of a recorded op

  bool needs_grad() const { return requires_grad || tape != nullptr; }
  // Returns the gradient buffer, allocating zeros on first use.
  std::vector<double>& grad_buffer();
};

using NodePtr = std::shared_ptr<TensorNode>;

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;

  std::span<const double> data() const;
  // Writable view for leaves (parameters, inputs). Writing through this on a
  // tracked intermediate invalidates any recorded backward rule.
  std::span<double> mutable_data();
  std::vector<double> to_vector() const;
  double item() const;
  double at(std::size_t flat_index) const;

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool tracked() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // Deep copy of the values, detached from any tape.
  Tensor detach() const;

  const detail::NodePtr& node() const { return node_; }
  static Tensor from_node(detail::NodePtr node);

 private:
  detail::NodePtr node_;
};

// Ordered record of differentiable operations. Inputs of each record always
// precede it, so replaying backward rules in reverse visits nodes in a valid
// topological order.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  void record(detail::NodePtr output, BackwardFn backward);

  // Populates grads of every tracked ancestor of `root` with d(root)/d(node).
  // Leaf gradients accumulate across calls; intermediate ones are recomputed.
  void backward(const Tensor& root);

  void clear();
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  // Tape installed on the calling thread, or nullptr.
  static Tape* current();

  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

 private:
  struct Record {
    detail::NodePtr output;
    BackwardFn backward;
  };
  std::vector<Record> records_;
};

// Suspends recording on the calling thread for its lifetime.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

// Backpropagates from a scalar, tape-tracked root.
void backward(const Tensor& root);

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
// factor * a + offset, elementwise.
Tensor affine(const Tensor& a, double factor, double offset);
// Multiplies every element of `a` by the single element of `s`.
Tensor mul_scalar(const Tensor& a, const Tensor& s);

// Supports matrix x matrix, matrix x vector and vector x matrix.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& m);
// Same values under a new shape with equal element count.
Tensor reshape(const Tensor& a, Shape shape);
// Adds vector `v` to every row of matrix `m`.
Tensor add_rowwise(const Tensor& m, const Tensor& v);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis = 0);
// Elements [begin, end) of a vector.
Tensor slice(const Tensor& a, std::size_t begin, std::size_t end);
// Columns [begin, end) of a matrix.
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
Tensor row(const Tensor& m, std::size_t index);
// Stacks equal-length vectors into the rows of a matrix.
Tensor stack(const std::vector<Tensor>& rows);
// Zero-extends a vector to `length` entries.
Tensor pad(const Tensor& a, std::size_t length);

Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
// log(max(a, floor)); the gradient is zero where the floor is active.
Tensor log_floor(const Tensor& a, double floor);
// log(exp(a) + exp(b)) without overflow.
Tensor logaddexp(const Tensor& a, const Tensor& b);
Tensor minimum(const Tensor& a, const Tensor& b);

// Softmax along `axis` with max-subtraction. Non-finite inputs are rejected.
Tensor softmax(const Tensor& logits, std::size_t axis = 0);

Tensor sum(const Tensor& a);
Tensor dot(const Tensor& a, const Tensor& b);
Tensor pick(const Tensor& a, std::size_t flat_index);

// Rows `ids` of the embedding matrix, as an ids.size() x d matrix.
Tensor embedding_lookup(const Tensor& table, std::span<const int> ids);
// Single row of the embedding matrix as a vector.
Tensor embedding_row(const Tensor& table, int id);

// Copy of `base` with values[k] added at position indices[k].
Tensor scatter_add(const Tensor& base, const Tensor& values,
                   std::span<const int> indices);

// ---------------------------------------------------------------------------
// Finite-difference gradient checking
// ---------------------------------------------------------------------------

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_parameter = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

enum class Stencil {
  kCentral2,  // (f(x+h) - f(x-h)) / 2h
  kCentral4,  // (-f(x+2h) + 8f(x+h) - 8f(x-h) + f(x-2h)) / 12h
  kRidders,   // central differences from h down, Richardson-extrapolated
};

// Compares backprop gradients of the scalar `f` against finite differences
// for every coordinate of every tensor in `params`. Relative error per
// coordinate is |a - n| / max(|a|, |n|, 1e-8).
GradCheckResult grad_check(const std::function<Tensor()>& f,
                           std::vector<Tensor> params, double step = 1e-5,
                           Stencil stencil = Stencil::kCentral2);

}  // namespace pgsum
