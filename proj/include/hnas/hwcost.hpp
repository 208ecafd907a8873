#pragma once

// Device lookup tables and the latency/energy models built on them.

#include "hnas/fusion_op.hpp"
#include "hnas/searchspace.hpp"
#include "hnas/tensor.hpp"

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hnas {

struct Cost {
  double latency_ms = 0.0;
  double energy_mj = 0.0;

  Cost& operator+=(const Cost& o) {
    latency_ms += o.latency_ms;
    energy_mj += o.energy_mj;
    return *this;
  }
  friend Cost operator+(Cost a, const Cost& b) { return a += b; }
  friend bool operator==(const Cost&, const Cost&) = default;
};

enum class Metric { Latency, Energy };

struct LayerKey {
  int block = 0;
  int slot = 0;
  int kernel = 0;
  int expand = 0;

  friend auto operator<=>(const LayerKey&, const LayerKey&) = default;
};

std::string to_string(const LayerKey& key);

struct DeviceLUT {
  std::string device;
  int version = 1;
  Cost stem;
  Cost head;
  std::map<LayerKey, Cost> layer_costs;
  std::map<FusionOp, Cost> fusion_costs;

  // std::out_of_range naming the missing key.
  const Cost& layer(const LayerKey& key) const;
  const Cost& fusion(FusionOp op) const;

  friend bool operator==(const DeviceLUT&, const DeviceLUT&) = default;
};

// Rejects non-positive costs and any hole in the (block, slot, k, e) grid or
// the operator set.
void validate_lut(const DeviceLUT& lut);
// Additionally requires coverage of every legal layer config of `space`.
void validate_lut(const DeviceLUT& lut, const SearchSpace& space);

// Stem + head overhead plus every active layer.
Cost backbone_cost(const BackboneGenome& genome, const DeviceLUT& lut);

// Sum over C*D nodes of softmax(gamma_node) . LUT(ops, metric); differentiable
// in every gamma.
Tensor fusion_relaxed_cost(std::span<const Tensor> gammas, const FusionMacroConfig& macro, const DeviceLUT& lut,
                           Metric metric);

Cost fusion_ops_cost(std::span<const FusionOp> node_ops, const DeviceLUT& lut);

// Sequential pipeline: every backbone plus every fusion node, one after another.
Cost candidate_cost(const MultimodalGenome& genome, std::span<const FusionOp> node_ops, const DeviceLUT& lut);
std::vector<Cost> candidate_cost(const MultimodalGenome& genome, std::span<const FusionOp> node_ops,
                                 std::span<const DeviceLUT> luts);

struct DeviceProfile {
  std::string name;
  double latency_scale = 1.0;
  double energy_scale = 1.0;
};

// "fast-gpu" (low latency, high energy) or "slow-edge" (high latency, low energy).
DeviceProfile device_profile(std::string_view name);
std::vector<std::string> device_profile_names();

// Deterministic complete LUT; costs strictly increase with k and e within a slot.
DeviceLUT synth_device(std::uint64_t seed, const DeviceProfile& profile, const SearchSpace& space);

std::string lut_to_json(const DeviceLUT& lut);
DeviceLUT lut_from_json(std::string_view text);
void save_lut(const DeviceLUT& lut, const std::filesystem::path& path);
DeviceLUT load_lut(const std::filesystem::path& path);

}  // namespace hnas
