#pragma once

// The six two-input fusion operators. Every operator maps two (B, C, L)
// tensors to one (B, C, L) tensor.

#include "hnas/searchspace.hpp"
#include "hnas/tensor.hpp"

#include <array>
#include <string_view>
#include <vector>

namespace hnas {

enum class FusionOp { Sum = 0, ScaleDotAttn, LinearGLU, ConcatFC, SqueezeExcitation, ConcatMish };

inline constexpr int kNumFusionOps = 6;
inline constexpr std::array<FusionOp, kNumFusionOps> kAllFusionOps{
    FusionOp::Sum,      FusionOp::ScaleDotAttn,      FusionOp::LinearGLU,
    FusionOp::ConcatFC, FusionOp::SqueezeExcitation, FusionOp::ConcatMish};

std::string_view to_string(FusionOp op);
FusionOp fusion_op_from_string(std::string_view name);

enum class InputGate { Identity = 0, Zero = 1 };

// Learnable tensors of one operator instance:
//   Sum, ScaleDotAttn: none
//   LinearGLU:         W1 (C,C,1), W2 (C,C,1)
//   ConcatFC:          W (C,2C,1), b (C)
//   SqueezeExcitation: W (C,C), b (C)
//   ConcatMish:        W1 (C,C,1), W2 (C,C,1), Wp (C,2C,1), bp (C)
struct FusionOpParams {
  FusionOp kind = FusionOp::Sum;
  std::vector<Tensor> tensors;

  FusionOpParams clone(bool requires_grad) const;
};

FusionOpParams make_op_params(FusionOp kind, Index channels, Rng& rng);
void check_op_params(const FusionOpParams& params, Index channels);

Tensor apply_fusion_op(FusionOp kind, const Tensor& x, const Tensor& y, const FusionOpParams& params);

}  // namespace hnas
