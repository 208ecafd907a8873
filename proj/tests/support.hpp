#pragma once

#include "hnas/searchspace.hpp"
#include "hnas/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace hnas::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0, bool grad = true) {
  std::uniform_real_distribution<double> u(lo, hi);
  Array values(numel(shape));
  for (Index i = 0; i < values.size(); ++i) values(i) = u(rng);
  return Tensor::from(std::move(shape), std::move(values), grad);
}

struct GradCheck {
  double max_rel = 0.0;
  long checked = 0;
};

using LossFn = std::function<Tensor(const std::vector<Tensor>&)>;

// Contracts a non-scalar output with fixed random weights, then compares the
// analytic gradient of every input element against central differences.
// Error is |a - n| / max(|a|, |n|, 1e-3).
inline GradCheck grad_check(const LossFn& f, const std::vector<Tensor>& inputs, std::uint64_t seed = 1,
                            double step = 1e-5) {
  Tensor weights;
  auto scalar_of = [&](const Tensor& out) {
    if (out.size() == 1) return sum(out);
    if (!weights.defined()) {
      Rng rng(seed);
      weights = random_tensor(out.shape(), rng, -1.0, 1.0, false);
    }
    return sum(out * weights);
  };
  for (auto t : inputs) t.zero_grad();
  backward(scalar_of(f(inputs)));

  GradCheck result;
  NoGradGuard guard;
  for (auto t : inputs) {
    if (!t.requires_grad()) continue;
    const Array analytic = t.grad();
    for (Index i = 0; i < t.size(); ++i) {
      const double saved = t.data()(i);
      t.mutable_data()(i) = saved + step;
      const double up = scalar_of(f(inputs)).item();
      t.mutable_data()(i) = saved - step;
      const double down = scalar_of(f(inputs)).item();
      t.mutable_data()(i) = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic(i);
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-3});
      result.max_rel = std::max(result.max_rel, rel);
      ++result.checked;
    }
  }
  return result;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return INFINITY;
  return (a.data() - b.data()).abs().maxCoeff();
}

}  // namespace hnas::testing
