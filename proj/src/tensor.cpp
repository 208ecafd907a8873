#include "hnas/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace hnas {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMat>;
using ConstRowMap = Eigen::Map<const RowMat>;

namespace {

thread_local bool t_grad_enabled = true;

void check_finite(const Array& value, const char* op) {
  if (!value.allFinite()) {
    throw NumericError(std::string("non-finite value produced by ") + op);
  }
}

Index normalize_axis(Index axis, Index rank, const char* op) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) {
    throw ShapeError(std::string(op) + ": axis out of range");
  }
  return axis;
}

// Splits a shape around `axis` into (outer, extent, inner) for strided loops.
struct AxisSplit {
  Index outer = 1;
  Index extent = 1;
  Index inner = 1;
};

AxisSplit split_at(const Shape& shape, Index axis) {
  AxisSplit s;
  for (Index i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (Index i = axis + 1; i < static_cast<Index>(shape.size()); ++i) s.inner *= shape[i];
  return s;
}

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(op) + ": rank mismatch " + to_string(a) + " vs " +
                     to_string(b));
  }
  Shape out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i] || b[i] == 1) {
      out[i] = a[i];
    } else if (a[i] == 1) {
      out[i] = b[i];
    } else {
      throw ShapeError(std::string(op) + ": incompatible shapes " + to_string(a) + " vs " +
                       to_string(b));
    }
  }
  return out;
}

// Flat offset into `in` for every element of `out` under broadcasting.
std::vector<Index> broadcast_offsets(const Shape& out, const Shape& in) {
  const std::size_t rank = out.size();
  std::vector<Index> stride(rank, 0);
  Index s = 1;
  for (std::size_t i = rank; i-- > 0;) {
    stride[i] = in[i] == 1 ? 0 : s;
    s *= in[i];
  }
  std::vector<Index> offsets(static_cast<std::size_t>(numel(out)));
  std::vector<Index> counter(rank, 0);
  Index offset = 0;
  for (auto& o : offsets) {
    o = offset;
    for (std::size_t i = rank; i-- > 0;) {
      ++counter[i];
      offset += stride[i];
      if (counter[i] < out[i]) break;
      offset -= stride[i] * out[i];
      counter[i] = 0;
    }
  }
  return offsets;
}

template <typename Fn>
Tensor unary(const Tensor& a, const char* op, Fn forward,
             std::function<Array(const Array& x, const Array& y, const Array& g)> derivative) {
  Array y = forward(a.data());
  return make_op_result(a.shape(), std::move(y), {a}, op,
                        [derivative](detail::Node& self) {
                          auto& x = self.parents[0];
                          if (!x->requires_grad) return;
                          x->ensure_grad() += derivative(x->value, self.value, self.grad);
                        });
}

Array stable_sigmoid(const Array& x) {
  return x.unaryExpr([](double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
}

Array stable_softplus(const Array& x) {
  return x.unaryExpr([](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); });
}

// Columns (Cin*K, B*L) such that conv output = W(Cout, Cin*K) * cols.
RowMat im2col(const Array& x, Index batch, Index cin, Index len, Index k) {
  const Index pad = k / 2;
  RowMat cols = RowMat::Zero(cin * k, batch * len);
  for (Index c = 0; c < cin; ++c) {
    for (Index kk = 0; kk < k; ++kk) {
      auto row = cols.row(c * k + kk);
      for (Index b = 0; b < batch; ++b) {
        const double* src = x.data() + (b * cin + c) * len;
        const Index lo = std::max<Index>(0, pad - kk);
        const Index hi = std::min<Index>(len, len + pad - kk);
        for (Index t = lo; t < hi; ++t) row(b * len + t) = src[t + kk - pad];
      }
    }
  }
  return cols;
}

void col2im_accumulate(const RowMat& cols, Array& dx, Index batch, Index cin, Index len,
                       Index k) {
  const Index pad = k / 2;
  for (Index c = 0; c < cin; ++c) {
    for (Index kk = 0; kk < k; ++kk) {
      auto row = cols.row(c * k + kk);
      for (Index b = 0; b < batch; ++b) {
        double* dst = dx.data() + (b * cin + c) * len;
        const Index lo = std::max<Index>(0, pad - kk);
        const Index hi = std::min<Index>(len, len + pad - kk);
        for (Index t = lo; t < hi; ++t) dst[t + kk - pad] += row(b * len + t);
      }
    }
  }
}

}  // namespace

Index numel(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

Array& detail::Node::ensure_grad() {
  if (grad.size() != value.size()) grad = Array::Zero(value.size());
  return grad;
}

// ---------------------------------------------------------------------------
// Tensor

detail::Node& Tensor::node() const {
  if (!node_) throw std::logic_error("use of undefined tensor");
  return *node_;
}

Tensor Tensor::from(Shape shape, Array values, bool requires_grad) {
  for (Index d : shape) {
    if (d <= 0) throw ShapeError("tensor extents must be positive: " + to_string(shape));
  }
  if (numel(shape) != values.size()) {
    throw ShapeError("tensor data length " + std::to_string(values.size()) +
                     " does not match shape " + to_string(shape));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  if (requires_grad) node->ensure_grad();
  return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::initializer_list<double> values, bool requires_grad) {
  Array a(static_cast<Index>(values.size()));
  std::copy(values.begin(), values.end(), a.data());
  return from(std::move(shape), std::move(a), requires_grad);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const Index n = numel(shape);
  return from(std::move(shape), Array::Constant(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from(Shape{1}, Array::Constant(1, value), requires_grad);
}

Index Tensor::dim(Index axis) const {
  return shape()[static_cast<std::size_t>(normalize_axis(axis, rank(), "dim"))];
}

const Array& Tensor::grad() const {
  auto& n = node();
  if (n.grad.size() != n.value.size()) n.ensure_grad();
  return n.grad;
}

void Tensor::zero_grad() {
  auto& n = node();
  if (n.requires_grad) n.ensure_grad().setZero();
}

void Tensor::set_requires_grad(bool on) {
  auto& n = node();
  if (!n.leaf) throw std::logic_error("requires_grad can only be toggled on leaves");
  n.requires_grad = on;
  if (on) n.ensure_grad();
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
  return data()(0);
}

double Tensor::at(std::initializer_list<Index> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) throw ShapeError("at(): index rank mismatch");
  Index offset = 0;
  std::size_t i = 0;
  for (Index v : index) {
    if (v < 0 || v >= s[i]) throw std::out_of_range("at(): index out of range");
    offset = offset * s[i] + v;
    ++i;
  }
  return data()(offset);
}

Tensor Tensor::detach() const { return from(shape(), data(), false); }

Tensor Tensor::clone(bool requires_grad) const { return from(shape(), data(), requires_grad); }

// ---------------------------------------------------------------------------
// Graph machinery

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

Tensor make_op_result(Shape shape, Array value, std::vector<Tensor> const& inputs,
                      const char* op, std::function<void(detail::Node&)> backward_fn) {
  check_finite(value, op);
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  bool needs = false;
  if (t_grad_enabled) {
    for (const auto& t : inputs) needs = needs || t.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->leaf = false;
    node->parents.reserve(inputs.size());
    for (const auto& t : inputs) node->parents.push_back(t.handle());
    node->backward = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw std::logic_error("backward() on undefined tensor");
  if (loss.size() != 1) {
    throw ShapeError("backward() requires a scalar loss, got " + to_string(loss.shape()));
  }
  detail::Node* root = loss.handle().get();
  if (root->consumed) throw std::logic_error("backward(): graph already consumed");
  if (!root->requires_grad) return;
  if (root->leaf) {
    root->ensure_grad() += 1.0;
    return;
  }

  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      detail::Node* p = n->parents[next++].get();
      if (p->requires_grad && !p->leaf && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (auto* n : order) n->grad = Array::Zero(n->value.size());
  root->grad(0) = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) (*it)->backward(**it);
  for (auto* n : order) {
    n->parents.clear();
    n->backward = nullptr;
    n->grad = Array();
    n->consumed = true;
  }
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic

namespace {

enum class BinaryKind { Add, Sub, Mul };

Tensor binary(const Tensor& a, const Tensor& b, BinaryKind kind, const char* op) {
  Shape out = broadcast_shape(a.shape(), b.shape(), op);
  const bool same = a.shape() == b.shape();
  const Index n = numel(out);
  Array value(n);
  std::shared_ptr<std::vector<Index>> oa, ob;
  if (same) {
    switch (kind) {
      case BinaryKind::Add: value = a.data() + b.data(); break;
      case BinaryKind::Sub: value = a.data() - b.data(); break;
      case BinaryKind::Mul: value = a.data() * b.data(); break;
    }
  } else {
    oa = std::make_shared<std::vector<Index>>(broadcast_offsets(out, a.shape()));
    ob = std::make_shared<std::vector<Index>>(broadcast_offsets(out, b.shape()));
    const Array& av = a.data();
    const Array& bv = b.data();
    for (Index i = 0; i < n; ++i) {
      const double x = av((*oa)[i]);
      const double y = bv((*ob)[i]);
      value(i) = kind == BinaryKind::Add ? x + y : kind == BinaryKind::Sub ? x - y : x * y;
    }
  }
  return make_op_result(std::move(out), std::move(value), {a, b}, op,
                        [kind, oa, ob](detail::Node& self) {
                          auto& pa = self.parents[0];
                          auto& pb = self.parents[1];
                          const Array& g = self.grad;
                          if (!oa) {
                            if (pa->requires_grad) {
                              if (kind == BinaryKind::Mul) pa->ensure_grad() += g * pb->value;
                              else pa->ensure_grad() += g;
                            }
                            if (pb->requires_grad) {
                              if (kind == BinaryKind::Mul) pb->ensure_grad() += g * pa->value;
                              else if (kind == BinaryKind::Sub) pb->ensure_grad() -= g;
                              else pb->ensure_grad() += g;
                            }
                            return;
                          }
                          const Index n = g.size();
                          if (pa->requires_grad) {
                            Array& ga = pa->ensure_grad();
                            for (Index i = 0; i < n; ++i) {
                              ga((*oa)[i]) += kind == BinaryKind::Mul ? g(i) * pb->value((*ob)[i]) : g(i);
                            }
                          }
                          if (pb->requires_grad) {
                            Array& gb = pb->ensure_grad();
                            for (Index i = 0; i < n; ++i) {
                              const double v = kind == BinaryKind::Mul   ? g(i) * pa->value((*oa)[i])
                                               : kind == BinaryKind::Sub ? -g(i)
                                                                         : g(i);
                              gb((*ob)[i]) += v;
                            }
                          }
                        });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::Add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::Sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::Mul, "mul"); }

Tensor scale(const Tensor& a, double factor) {
  return make_op_result(a.shape(), a.data() * factor, {a}, "scale", [factor](detail::Node& self) {
    auto& x = self.parents[0];
    if (x->requires_grad) x->ensure_grad() += self.grad * factor;
  });
}

Tensor add_scalar(const Tensor& a, double value) {
  return make_op_result(a.shape(), a.data() + value, {a}, "add_scalar", [](detail::Node& self) {
    auto& x = self.parents[0];
    if (x->requires_grad) x->ensure_grad() += self.grad;
  });
}

// ---------------------------------------------------------------------------
// Linear algebra and layout

Tensor matmul(const Tensor& a, const Tensor& b) {
  const bool batched = a.rank() == 3;
  if (!((a.rank() == 2 && b.rank() == 2) || (batched && b.rank() == 3))) {
    throw ShapeError("matmul expects 2-D or batched 3-D operands");
  }
  const Index batch = batched ? a.dim(0) : 1;
  const Index n = a.dim(-2), k = a.dim(-1), m = b.dim(-1);
  if (b.dim(-2) != k || (batched && b.dim(0) != batch)) {
    throw ShapeError("matmul: incompatible shapes " + to_string(a.shape()) + " x " +
                     to_string(b.shape()));
  }
  Array value(batch * n * m);
  for (Index i = 0; i < batch; ++i) {
    RowMap(value.data() + i * n * m, n, m).noalias() =
        ConstRowMap(a.data().data() + i * n * k, n, k) * ConstRowMap(b.data().data() + i * k * m, k, m);
  }
  Shape out = batched ? Shape{batch, n, m} : Shape{n, m};
  return make_op_result(std::move(out), std::move(value), {a, b}, "matmul",
                        [batch, n, k, m](detail::Node& self) {
                          auto& pa = self.parents[0];
                          auto& pb = self.parents[1];
                          for (Index i = 0; i < batch; ++i) {
                            ConstRowMap g(self.grad.data() + i * n * m, n, m);
                            if (pa->requires_grad) {
                              RowMap(pa->ensure_grad().data() + i * n * k, n, k).noalias() +=
                                  g * ConstRowMap(pb->value.data() + i * k * m, k, m).transpose();
                            }
                            if (pb->requires_grad) {
                              RowMap(pb->ensure_grad().data() + i * k * m, k, m).noalias() +=
                                  ConstRowMap(pa->value.data() + i * n * k, n, k).transpose() * g;
                            }
                          }
                        });
}

Tensor concat(std::span<const Tensor> parts, Index axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const Index rank = parts[0].rank();
  axis = normalize_axis(axis, rank, "concat");
  Shape out = parts[0].shape();
  out[axis] = 0;
  std::vector<Index> extents;
  for (const auto& p : parts) {
    if (p.rank() != rank) throw ShapeError("concat: rank mismatch");
    for (Index i = 0; i < rank; ++i) {
      if (i != axis && p.shape()[i] != parts[0].shape()[i]) {
        throw ShapeError("concat: shape mismatch " + to_string(p.shape()) + " vs " +
                         to_string(parts[0].shape()));
      }
    }
    extents.push_back(p.shape()[axis]);
    out[axis] += p.shape()[axis];
  }
  const AxisSplit s = split_at(out, axis);
  Array value(numel(out));
  Index start = 0;
  for (std::size_t j = 0; j < parts.size(); ++j) {
    const Index e = extents[j];
    for (Index o = 0; o < s.outer; ++o) {
      value.segment((o * s.extent + start) * s.inner, e * s.inner) =
          parts[j].data().segment(o * e * s.inner, e * s.inner);
    }
    start += e;
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_op_result(std::move(out), std::move(value), inputs, "concat",
                        [s, extents](detail::Node& self) {
                          Index start = 0;
                          for (std::size_t j = 0; j < extents.size(); ++j) {
                            const Index e = extents[j];
                            auto& p = self.parents[j];
                            if (p->requires_grad) {
                              Array& g = p->ensure_grad();
                              for (Index o = 0; o < s.outer; ++o) {
                                g.segment(o * e * s.inner, e * s.inner) +=
                                    self.grad.segment((o * s.extent + start) * s.inner, e * s.inner);
                              }
                            }
                            start += e;
                          }
                        });
}

Tensor concat(std::initializer_list<Tensor> parts, Index axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor narrow(const Tensor& a, Index axis, Index start, Index length) {
  axis = normalize_axis(axis, a.rank(), "narrow");
  const AxisSplit s = split_at(a.shape(), axis);
  if (start < 0 || length <= 0 || start + length > s.extent) {
    throw ShapeError("narrow: range [" + std::to_string(start) + ", " +
                     std::to_string(start + length) + ") outside axis of extent " +
                     std::to_string(s.extent));
  }
  Shape out = a.shape();
  out[axis] = length;
  Array value(numel(out));
  for (Index o = 0; o < s.outer; ++o) {
    value.segment(o * length * s.inner, length * s.inner) =
        a.data().segment((o * s.extent + start) * s.inner, length * s.inner);
  }
  return make_op_result(std::move(out), std::move(value), {a}, "narrow",
                        [s, start, length](detail::Node& self) {
                          auto& p = self.parents[0];
                          if (!p->requires_grad) return;
                          Array& g = p->ensure_grad();
                          for (Index o = 0; o < s.outer; ++o) {
                            g.segment((o * s.extent + start) * s.inner, length * s.inner) +=
                                self.grad.segment(o * length * s.inner, length * s.inner);
                          }
                        });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw ShapeError("reshape: " + to_string(a.shape()) + " -> " + to_string(shape));
  }
  return make_op_result(std::move(shape), a.data(), {a}, "reshape", [](detail::Node& self) {
    auto& p = self.parents[0];
    if (p->requires_grad) p->ensure_grad() += self.grad;
  });
}

Tensor transpose(const Tensor& a, Index axis0, Index axis1) {
  const Index rank = a.rank();
  axis0 = normalize_axis(axis0, rank, "transpose");
  axis1 = normalize_axis(axis1, rank, "transpose");
  Shape out = a.shape();
  std::swap(out[axis0], out[axis1]);
  // Input strides permuted into output order give the source offset of each
  // output element.
  std::vector<Index> in_stride(rank);
  Index s = 1;
  for (Index i = rank; i-- > 0;) {
    in_stride[i] = s;
    s *= a.shape()[i];
  }
  std::swap(in_stride[axis0], in_stride[axis1]);
  auto src = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(a.size()));
  std::vector<Index> counter(rank, 0);
  Index offset = 0;
  for (auto& o : *src) {
    o = offset;
    for (Index i = rank; i-- > 0;) {
      ++counter[i];
      offset += in_stride[i];
      if (counter[i] < out[i]) break;
      offset -= in_stride[i] * out[i];
      counter[i] = 0;
    }
  }
  Array value(a.size());
  for (Index i = 0; i < a.size(); ++i) value(i) = a.data()((*src)[i]);
  return make_op_result(std::move(out), std::move(value), {a}, "transpose", [src](detail::Node& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    Array& g = p->ensure_grad();
    for (Index i = 0; i < self.grad.size(); ++i) g((*src)[i]) += self.grad(i);
  });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor mean(const Tensor& a, Index axis) {
  axis = normalize_axis(axis, a.rank(), "mean");
  const AxisSplit s = split_at(a.shape(), axis);
  Shape out = a.shape();
  out.erase(out.begin() + axis);
  if (out.empty()) out = {1};
  Array value = Array::Zero(s.outer * s.inner);
  for (Index o = 0; o < s.outer; ++o) {
    for (Index j = 0; j < s.extent; ++j) {
      value.segment(o * s.inner, s.inner) += a.data().segment((o * s.extent + j) * s.inner, s.inner);
    }
  }
  value /= static_cast<double>(s.extent);
  return make_op_result(std::move(out), std::move(value), {a}, "mean", [s](detail::Node& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    Array& g = p->ensure_grad();
    const double inv = 1.0 / static_cast<double>(s.extent);
    for (Index o = 0; o < s.outer; ++o) {
      for (Index j = 0; j < s.extent; ++j) {
        g.segment((o * s.extent + j) * s.inner, s.inner) += self.grad.segment(o * s.inner, s.inner) * inv;
      }
    }
  });
}

Tensor sum(const Tensor& a) {
  return make_op_result(Shape{1}, Array::Constant(1, a.data().sum()), {a}, "sum",
                        [](detail::Node& self) {
                          auto& p = self.parents[0];
                          if (p->requires_grad) p->ensure_grad() += self.grad(0);
                        });
}

// ---------------------------------------------------------------------------
// Nonlinearities

Tensor sigmoid(const Tensor& a) {
  return unary(a, "sigmoid", stable_sigmoid,
               [](const Array&, const Array& y, const Array& g) -> Array { return g * y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary(a, "tanh", [](const Array& x) -> Array { return x.tanh(); },
               [](const Array&, const Array& y, const Array& g) -> Array { return g * (1.0 - y.square()); });
}

Tensor relu(const Tensor& a) {
  return unary(a, "relu", [](const Array& x) -> Array { return x.max(0.0); },
               [](const Array& x, const Array&, const Array& g) -> Array {
                 return (x > 0.0).select(g, 0.0);
               });
}

Tensor softplus(const Tensor& a) {
  return unary(a, "softplus", stable_softplus,
               [](const Array& x, const Array&, const Array& g) -> Array { return g * stable_sigmoid(x); });
}

Tensor mish(const Tensor& a) { return mul(a, tanh(softplus(a))); }

Tensor softmax(const Tensor& a, Index axis) {
  axis = normalize_axis(axis, a.rank(), "softmax");
  const AxisSplit s = split_at(a.shape(), axis);
  Array value(a.size());
  const Array& x = a.data();
  for (Index o = 0; o < s.outer; ++o) {
    for (Index i = 0; i < s.inner; ++i) {
      const Index base = o * s.extent * s.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (Index j = 0; j < s.extent; ++j) mx = std::max(mx, x(base + j * s.inner));
      double total = 0.0;
      for (Index j = 0; j < s.extent; ++j) {
        const double e = std::exp(x(base + j * s.inner) - mx);
        value(base + j * s.inner) = e;
        total += e;
      }
      for (Index j = 0; j < s.extent; ++j) value(base + j * s.inner) /= total;
    }
  }
  return make_op_result(a.shape(), std::move(value), {a}, "softmax", [s](detail::Node& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    Array& g = p->ensure_grad();
    const Array& y = self.value;
    for (Index o = 0; o < s.outer; ++o) {
      for (Index i = 0; i < s.inner; ++i) {
        const Index base = o * s.extent * s.inner + i;
        double dot = 0.0;
        for (Index j = 0; j < s.extent; ++j) dot += self.grad(base + j * s.inner) * y(base + j * s.inner);
        for (Index j = 0; j < s.extent; ++j) {
          const Index idx = base + j * s.inner;
          g(idx) += y(idx) * (self.grad(idx) - dot);
        }
      }
    }
  });
}

Tensor log_softmax(const Tensor& a, Index axis) {
  axis = normalize_axis(axis, a.rank(), "log_softmax");
  const AxisSplit s = split_at(a.shape(), axis);
  Array value(a.size());
  const Array& x = a.data();
  for (Index o = 0; o < s.outer; ++o) {
    for (Index i = 0; i < s.inner; ++i) {
      const Index base = o * s.extent * s.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (Index j = 0; j < s.extent; ++j) mx = std::max(mx, x(base + j * s.inner));
      double total = 0.0;
      for (Index j = 0; j < s.extent; ++j) total += std::exp(x(base + j * s.inner) - mx);
      const double lse = mx + std::log(total);
      for (Index j = 0; j < s.extent; ++j) value(base + j * s.inner) = x(base + j * s.inner) - lse;
    }
  }
  return make_op_result(a.shape(), std::move(value), {a}, "log_softmax", [s](detail::Node& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    Array& g = p->ensure_grad();
    for (Index o = 0; o < s.outer; ++o) {
      for (Index i = 0; i < s.inner; ++i) {
        const Index base = o * s.extent * s.inner + i;
        double gsum = 0.0;
        for (Index j = 0; j < s.extent; ++j) gsum += self.grad(base + j * s.inner);
        for (Index j = 0; j < s.extent; ++j) {
          const Index idx = base + j * s.inner;
          g(idx) += self.grad(idx) - std::exp(self.value(idx)) * gsum;
        }
      }
    }
  });
}

Tensor pow(const Tensor& a, double exponent) {
  if (exponent == 0.0) {
    return make_op_result(a.shape(), Array::Ones(a.size()), {a}, "pow", [](detail::Node&) {});
  }
  if ((a.data() <= 0.0).any()) throw NumericError("pow: base must be strictly positive");
  Array value = a.data().pow(exponent);
  return make_op_result(a.shape(), std::move(value), {a}, "pow", [exponent](detail::Node& self) {
    auto& p = self.parents[0];
    if (p->requires_grad) p->ensure_grad() += self.grad * exponent * p->value.pow(exponent - 1.0);
  });
}

Tensor clamp_min(const Tensor& a, double floor) {
  return unary(a, "clamp_min", [floor](const Array& x) -> Array { return x.max(floor); },
               [floor](const Array& x, const Array&, const Array& g) -> Array {
                 return (x > floor).select(g, 0.0);
               });
}

// ---------------------------------------------------------------------------
// Convolution and losses

Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() != 3 || weight.rank() != 3) throw ShapeError("conv1d expects (B,C,L) and (Cout,Cin,K)");
  const Index batch = x.dim(0), cin = x.dim(1), len = x.dim(2);
  const Index cout = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != cin) {
    throw ShapeError("conv1d: input has " + std::to_string(cin) + " channels, kernel expects " +
                     std::to_string(weight.dim(1)));
  }
  if (k % 2 == 0) throw ShapeError("conv1d: kernel width must be odd");
  const bool has_bias = bias.defined();
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != cout)) throw ShapeError("conv1d: bias shape");

  const RowMat cols = im2col(x.data(), batch, cin, len, k);
  ConstRowMap w(weight.data().data(), cout, cin * k);
  RowMat out = w * cols;  // (Cout, B*L)
  Array value(batch * cout * len);
  for (Index b = 0; b < batch; ++b) {
    RowMap dst(value.data() + b * cout * len, cout, len);
    dst = out.middleCols(b * len, len);
    if (has_bias) dst.colwise() += Eigen::Map<const Eigen::VectorXd>(bias.data().data(), cout);
  }
  std::vector<Tensor> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_op_result(Shape{batch, cout, len}, std::move(value), inputs, "conv1d",
                        [batch, cin, len, cout, k, has_bias](detail::Node& self) {
                          auto& px = self.parents[0];
                          auto& pw = self.parents[1];
                          RowMat g(cout, batch * len);
                          for (Index b = 0; b < batch; ++b) {
                            g.middleCols(b * len, len) =
                                ConstRowMap(self.grad.data() + b * cout * len, cout, len);
                          }
                          if (pw->requires_grad) {
                            const RowMat cols = im2col(px->value, batch, cin, len, k);
                            RowMap(pw->ensure_grad().data(), cout, cin * k).noalias() +=
                                g * cols.transpose();
                          }
                          if (px->requires_grad) {
                            const RowMat dcols =
                                ConstRowMap(pw->value.data(), cout, cin * k).transpose() * g;
                            col2im_accumulate(dcols, px->ensure_grad(), batch, cin, len, k);
                          }
                          if (has_bias) {
                            auto& pb = self.parents[2];
                            if (pb->requires_grad) {
                              Eigen::Map<Eigen::VectorXd>(pb->ensure_grad().data(), cout) +=
                                  g.rowwise().sum();
                            }
                          }
                        });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw ShapeError("cross_entropy expects (N, K) logits");
  const Index n = logits.dim(0), k = logits.dim(1);
  if (static_cast<Index>(labels.size()) != n) throw ShapeError("cross_entropy: label count mismatch");
  for (int y : labels) {
    if (y < 0 || y >= k) throw std::out_of_range("cross_entropy: label out of range");
  }
  auto probs = std::make_shared<RowMat>(n, k);
  ConstRowMap z(logits.data().data(), n, k);
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double mx = z.row(i).maxCoeff();
    const auto e = (z.row(i).array() - mx).exp();
    const double s = e.sum();
    probs->row(i) = e / s;
    total += mx + std::log(s) - z(i, labels[static_cast<std::size_t>(i)]);
  }
  std::vector<int> y(labels.begin(), labels.end());
  return make_op_result(Shape{1}, Array::Constant(1, total / static_cast<double>(n)), {logits},
                        "cross_entropy", [probs, y, n, k](detail::Node& self) {
                          auto& p = self.parents[0];
                          if (!p->requires_grad) return;
                          RowMap g(p->ensure_grad().data(), n, k);
                          const double scale = self.grad(0) / static_cast<double>(n);
                          for (Index i = 0; i < n; ++i) {
                            g.row(i) += probs->row(i) * scale;
                            g(i, y[static_cast<std::size_t>(i)]) -= scale;
                          }
                        });
}

Tensor binary_cross_entropy(const Tensor& logits, std::span<const double> targets) {
  if (logits.size() != static_cast<Index>(targets.size())) {
    throw ShapeError("binary_cross_entropy: target count mismatch");
  }
  const Array t = Eigen::Map<const Array>(targets.data(), static_cast<Index>(targets.size()));
  if ((t < 0.0).any() || (t > 1.0).any()) throw std::out_of_range("binary_cross_entropy: target outside [0,1]");
  const Array& z = logits.data();
  const double n = static_cast<double>(z.size());
  const double loss = (stable_softplus(z) - t * z).sum() / n;
  return make_op_result(Shape{1}, Array::Constant(1, loss), {logits}, "binary_cross_entropy",
                        [t, n](detail::Node& self) {
                          auto& p = self.parents[0];
                          if (p->requires_grad) {
                            p->ensure_grad() += (stable_sigmoid(p->value) - t) * (self.grad(0) / n);
                          }
                        });
}

}  // namespace hnas
