#include "hnas/fusion_op.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace hnas {

namespace {

constexpr std::array<std::string_view, kNumFusionOps> kNames{"Sum",      "ScaleDotAttn",      "LinearGLU",
                                                              "ConcatFC", "SqueezeExcitation", "ConcatMish"};

Tensor random_tensor(Shape shape, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Array v(numel(shape));
  for (Index i = 0; i < v.size(); ++i) v(i) = dist(rng);
  return Tensor::from(std::move(shape), std::move(v), true);
}

std::vector<Shape> expected_shapes(FusionOp kind, Index c) {
  switch (kind) {
    case FusionOp::Sum:
    case FusionOp::ScaleDotAttn: return {};
    case FusionOp::LinearGLU: return {{c, c, 1}, {c, c, 1}};
    case FusionOp::ConcatFC: return {{c, 2 * c, 1}, {c}};
    case FusionOp::SqueezeExcitation: return {{c, c}, {c}};
    case FusionOp::ConcatMish: return {{c, c, 1}, {c, c, 1}, {c, 2 * c, 1}, {c}};
  }
  throw std::invalid_argument("unknown fusion op");
}

Tensor attention(const Tensor& x, const Tensor& y) {
  const double inv_sqrt_c = 1.0 / std::sqrt(static_cast<double>(x.dim(1)));
  const Tensor xt = transpose(x, 1, 2);  // (B, L, C)
  const Tensor yt = transpose(y, 1, 2);
  const Tensor weights = softmax(scale(matmul(xt, y), inv_sqrt_c), 2);  // (B, L, L) over keys
  return transpose(matmul(weights, yt), 1, 2);
}

}  // namespace

std::string_view to_string(FusionOp op) { return kNames.at(static_cast<std::size_t>(op)); }

FusionOp fusion_op_from_string(std::string_view name) {
  for (int i = 0; i < kNumFusionOps; ++i) {
    if (kNames[static_cast<std::size_t>(i)] == name) return static_cast<FusionOp>(i);
  }
  throw std::invalid_argument("unknown fusion operator '" + std::string(name) + "'");
}

FusionOpParams FusionOpParams::clone(bool requires_grad) const {
  FusionOpParams out{kind, {}};
  for (const auto& t : tensors) out.tensors.push_back(t.clone(requires_grad));
  return out;
}

FusionOpParams make_op_params(FusionOp kind, Index channels, Rng& rng) {
  FusionOpParams p{kind, {}};
  for (const auto& shape : expected_shapes(kind, channels)) {
    if (shape.size() == 1) {
      p.tensors.push_back(Tensor::zeros(shape, true));
    } else {
      const Index fan_in = shape[1];
      p.tensors.push_back(random_tensor(shape, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng));
    }
  }
  return p;
}

void check_op_params(const FusionOpParams& params, Index channels) {
  const auto shapes = expected_shapes(params.kind, channels);
  if (params.tensors.size() != shapes.size()) {
    throw std::invalid_argument(std::string(to_string(params.kind)) + ": expected " +
                                std::to_string(shapes.size()) + " parameter tensors, got " +
                                std::to_string(params.tensors.size()));
  }
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (params.tensors[i].shape() != shapes[i]) {
      throw ShapeError(std::string(to_string(params.kind)) + ": parameter " + std::to_string(i) + " has shape " +
                       to_string(params.tensors[i].shape()) + ", expected " + to_string(shapes[i]));
    }
  }
}

Tensor apply_fusion_op(FusionOp kind, const Tensor& x, const Tensor& y, const FusionOpParams& params) {
  if (x.rank() != 3 || x.shape() != y.shape()) {
    throw ShapeError("fusion op inputs must share a (B,C,L) shape, got " + to_string(x.shape()) + " and " +
                     to_string(y.shape()));
  }
  if (params.kind != kind) throw std::invalid_argument("fusion op parameters belong to a different operator");
  const Index c = x.dim(1);
  check_op_params(params, c);
  const auto& w = params.tensors;
  switch (kind) {
    case FusionOp::Sum: return x + y;
    case FusionOp::ScaleDotAttn: return attention(x, y);
    case FusionOp::LinearGLU: return conv1d(x, w[0]) * sigmoid(conv1d(y, w[1]));
    case FusionOp::ConcatFC: return relu(conv1d(concat({x, y}, 1), w[0], w[1]));
    case FusionOp::SqueezeExcitation: {
      const Tensor squeeze = mean(x, 2);                                       // (B, C)
      const Tensor excite = sigmoid(matmul(squeeze, w[0]) + reshape(w[1], {1, c}));
      return reshape(excite, {x.dim(0), c, 1}) * y;
    }
    case FusionOp::ConcatMish: {
      const Tensor z = concat({conv1d(x, w[0]), conv1d(y, w[1])}, 1);
      return conv1d(mish(z), w[2], w[3]);
    }
  }
  throw std::invalid_argument("unknown fusion op");
}

}  // namespace hnas
