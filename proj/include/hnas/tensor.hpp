#pragma once

// Dense row-major tensors of doubles with define-by-run reverse-mode autodiff.
//
// A Tensor is a cheap handle onto a shared node. Ops are free functions that
// record a backward closure whenever any operand requires gradients and grad
// mode is enabled on the calling thread.

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hnas {

using Index = Eigen::Index;
using Shape = std::vector<Index>;
using Array = Eigen::ArrayXd;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Index numel(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  Array value;
  Array grad;
  bool requires_grad = false;
  bool leaf = true;
  bool consumed = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Array& ensure_grad();
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, Array values, bool requires_grad = false);
  static Tensor from(Shape shape, std::initializer_list<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node().shape; }
  Index rank() const { return static_cast<Index>(node().shape.size()); }
  Index dim(Index axis) const;
  Index size() const { return node().value.size(); }

  const Array& data() const { return node().value; }
  // Direct write access; only meaningful on leaves (initialization, optimizers).
  Array& mutable_data() { return node().value; }

  const Array& grad() const;
  Array& mutable_grad() { return node().ensure_grad(); }
  void zero_grad();

  bool requires_grad() const { return node().requires_grad; }
  void set_requires_grad(bool on);
  bool is_leaf() const { return node().leaf; }

  double item() const;
  double at(std::initializer_list<Index> index) const;

  // Same values, no history, no gradient.
  Tensor detach() const;
  // Deep copy of the values into a fresh leaf.
  Tensor clone(bool requires_grad = false) const;

  const std::shared_ptr<detail::Node>& handle() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  detail::Node& node() const;

  std::shared_ptr<detail::Node> node_;

  friend Tensor make_op_result(Shape, Array, std::vector<Tensor> const&, const char*,
                               std::function<void(detail::Node&)>);
};

// Builds an op output; the backward closure receives the output node whose
// grad is populated and must accumulate into its parents.
Tensor make_op_result(Shape shape, Array value, std::vector<Tensor> const& inputs,
                      const char* op, std::function<void(detail::Node&)> backward);

// Accumulates gradients of a scalar loss into every reachable leaf that
// requires them. The graph is released afterwards; a second call on the same
// loss throws std::logic_error.
void backward(const Tensor& loss);

bool grad_enabled();

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

// Elementwise arithmetic. Operands share rank; each extent either matches
// the output or is 1 (broadcast).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }

// (n,k)x(k,m) or batched (B,n,k)x(B,k,m).
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor concat(std::span<const Tensor> parts, Index axis);
Tensor concat(std::initializer_list<Tensor> parts, Index axis);
Tensor narrow(const Tensor& a, Index axis, Index start, Index length);
Tensor reshape(const Tensor& a, Shape shape);
Tensor transpose(const Tensor& a, Index axis0, Index axis1);

Tensor mean(const Tensor& a, Index axis);  // removes `axis`
Tensor sum(const Tensor& a);               // scalar

Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor mish(const Tensor& a);
Tensor softmax(const Tensor& a, Index axis);
Tensor log_softmax(const Tensor& a, Index axis);

// x^p for a strictly positive scalar-or-tensor base.
Tensor pow(const Tensor& a, double exponent);
// max(a, floor) with gradient passing only where a > floor.
Tensor clamp_min(const Tensor& a, double floor);

// x: (B, Cin, L), weight: (Cout, Cin, K) with odd K, bias: (Cout) or undefined.
// Stride 1, zero padding K/2 on both sides; output (B, Cout, L).
Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias = {});

// Mean cross-entropy of logits (N, K) against integer labels.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);
// Mean binary cross-entropy of logits (N) against targets in [0, 1].
Tensor binary_cross_entropy(const Tensor& logits, std::span<const double> targets);

}  // namespace hnas
