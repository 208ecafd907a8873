#pragma once

#include "hnas/fusion.hpp"
#include "support.hpp"

#include <utility>
#include <vector>

namespace hnas::testing {

inline FeatureSet random_features(const std::vector<std::vector<int>>& channels, Index batch, Index length, Rng& rng) {
  FeatureSet f;
  for (const auto& m : channels) {
    f.emplace_back();
    for (int c : m) f.back().push_back(random_tensor({batch, c, length}, rng, -1, 1, false));
  }
  return f;
}

// Identity logit +gap/2 on `keep`, -gap/2 elsewhere (Zero takes the negation).
inline void saturate_gate(Tensor& gates, int keep, double gap) {
  auto& d = gates.mutable_data();
  for (Index k = 0; k < gates.dim(0); ++k) {
    const double s = k == keep ? gap / 2 : -gap / 2;
    d(2 * k) = s;
    d(2 * k + 1) = -s;
  }
}

inline void saturate_gamma(Tensor& gamma, FusionOp op, double gap) {
  for (Index f = 0; f < kNumFusionOps; ++f) gamma.mutable_data()(f) = f == static_cast<Index>(op) ? gap / 2 : -gap / 2;
}

inline std::pair<int, int> distinct_pair(int n, Rng& rng) {
  const int a = std::uniform_int_distribution<int>(0, n - 1)(rng);
  int b = std::uniform_int_distribution<int>(0, n - 2)(rng);
  if (b >= a) ++b;
  return {a, b};
}

struct Saturated {
  std::vector<GraphCell> expected;  // topology without parameters
};

// Pushes every gate and gamma of `net` to a random one-hot choice.
inline Saturated saturate_randomly(FusionHypernet& net, double gap, Rng& rng) {
  Saturated out;
  const int sources = net.config().num_sources();
  for (std::size_t p = 0; p < net.cells().size(); ++p) {
    auto& cell = net.cells()[p];
    GraphCell gc;
    std::tie(gc.input_x, gc.input_y) = distinct_pair(sources + static_cast<int>(p), rng);
    saturate_gate(cell.alpha_x, gc.input_x, gap);
    saturate_gate(cell.alpha_y, gc.input_y, gap);
    for (std::size_t d = 0; d < cell.nodes.size(); ++d) {
      auto& node = cell.nodes[d];
      GraphNode gn;
      std::tie(gn.input_x, gn.input_y) = distinct_pair(2 + static_cast<int>(d), rng);
      gn.op = kAllFusionOps[static_cast<std::size_t>(std::uniform_int_distribution<int>(0, kNumFusionOps - 1)(rng))];
      saturate_gate(node.beta_x, gn.input_x, gap);
      saturate_gate(node.beta_y, gn.input_y, gap);
      saturate_gamma(node.gamma, gn.op, gap);
      gc.nodes.push_back(gn);
    }
    out.expected.push_back(gc);
  }
  return out;
}

inline void randomize_head(FusionHypernet& net, Rng& rng) {
  net.head_weight().mutable_data() = random_tensor(net.head_weight().shape(), rng, -1, 1, false).data();
}

}  // namespace hnas::testing
