#pragma once

#include "hnas/supernet.hpp"

namespace hnas::testing {

// Element-by-element copy of the centered (out, in, k) window.
inline Tensor copy_crop(const Tensor& full, Index out, Index in, Index k) {
  const Index cin = full.dim(1), kmax = full.dim(2);
  const Index off = (kmax - k) / 2;
  Array values(out * in * k);
  for (Index o = 0; o < out; ++o)
    for (Index i = 0; i < in; ++i)
      for (Index t = 0; t < k; ++t) values(o * in * k + i * k + t) = full.data()((o * cin + i) * kmax + off + t);
  return Tensor::from({out, in, k}, values);
}

inline Tensor copy_prefix(const Tensor& v, Index n) { return Tensor::from({n}, v.data().head(n).eval()); }

inline Tensor copy_rows(const Tensor& m, Index rows) {
  return Tensor::from({rows, m.dim(1)}, m.data().head(rows * m.dim(1)).eval());
}

// Subnet forward over private copies of the sliced weights.
inline BackboneOutput reference_forward(const ElasticSupernet& net, const BackboneGenome& genome, const Tensor& x) {
  const auto& cfg = net.config();
  BackboneOutput out;
  Tensor h = relu(conv1d(x, net.stem_weight().clone(), net.stem_bias().clone()));
  for (std::size_t j = 0; j < genome.blocks.size(); ++j) {
    const auto& b = genome.blocks[j];
    for (int l = 0; l < b.depth; ++l) {
      const auto& lw = net.layer(static_cast<int>(j), l);
      const Index cout = static_cast<Index>(cfg.base_channels) * b.expands[static_cast<std::size_t>(l)];
      const Tensor w = copy_crop(lw.weight, cout, h.dim(1), b.kernels[static_cast<std::size_t>(l)]);
      h = relu(conv1d(h, w, copy_prefix(lw.bias, cout)));
    }
    out.features.push_back({h, genome.modality, static_cast<int>(j)});
  }
  const Tensor pooled = mean(h, 2);
  out.logits = matmul(pooled, copy_rows(net.head_weight(), pooled.dim(1))) +
               reshape(net.head_bias().clone(), {1, cfg.num_classes});
  return out;
}

inline bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && (a.data() == b.data()).all();
}

}  // namespace hnas::testing
