#include "hnas/hwcost.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace hnas {

using ordered_json = nlohmann::ordered_json;

namespace {

// Relative per-operator work on a common fusion width.
double op_weight(FusionOp op) {
  switch (op) {
    case FusionOp::Sum: return 0.2;
    case FusionOp::SqueezeExcitation: return 0.35;
    case FusionOp::LinearGLU: return 0.6;
    case FusionOp::ConcatFC: return 0.7;
    case FusionOp::ScaleDotAttn: return 0.9;
    case FusionOp::ConcatMish: return 1.0;
  }
  return 1.0;
}

ordered_json cost_json(const Cost& c) { return {{"lat_ms", c.latency_ms}, {"ergy_mj", c.energy_mj}}; }

Cost cost_from(const ordered_json& j) { return {j.at("lat_ms").get<double>(), j.at("ergy_mj").get<double>()}; }

void check_positive(const Cost& c, const std::string& what) {
  if (!(c.latency_ms > 0.0) || !(c.energy_mj > 0.0)) throw std::invalid_argument("LUT: non-positive cost for " + what);
}

}  // namespace

std::string to_string(const LayerKey& key) {
  std::ostringstream os;
  os << "(block=" << key.block << ", slot=" << key.slot << ", k=" << key.kernel << ", e=" << key.expand << ")";
  return os.str();
}

const Cost& DeviceLUT::layer(const LayerKey& key) const {
  const auto it = layer_costs.find(key);
  if (it == layer_costs.end()) throw std::out_of_range("LUT '" + device + "' has no layer entry " + to_string(key));
  return it->second;
}

const Cost& DeviceLUT::fusion(FusionOp op) const {
  const auto it = fusion_costs.find(op);
  if (it == fusion_costs.end()) {
    throw std::out_of_range("LUT '" + device + "' has no fusion entry " + std::string(hnas::to_string(op)));
  }
  return it->second;
}

void validate_lut(const DeviceLUT& lut) {
  check_positive(lut.stem, "stem");
  check_positive(lut.head, "head");
  std::set<int> blocks, slots, kernels, expands;
  for (const auto& [key, cost] : lut.layer_costs) {
    check_positive(cost, to_string(key));
    blocks.insert(key.block);
    slots.insert(key.slot);
    kernels.insert(key.kernel);
    expands.insert(key.expand);
  }
  auto contiguous = [](const std::set<int>& s) { return s.empty() || (*s.begin() == 0 && *s.rbegin() == static_cast<int>(s.size()) - 1); };
  if (!contiguous(blocks) || !contiguous(slots)) throw std::invalid_argument("LUT: block/slot indices must be contiguous from 0");
  for (int b : blocks) {
    for (int s : slots) {
      for (int k : kernels) {
        for (int e : expands) {
          if (!lut.layer_costs.contains({b, s, k, e})) {
            throw std::invalid_argument("LUT incomplete: missing layer entry " + to_string(LayerKey{b, s, k, e}));
          }
        }
      }
    }
  }
  for (FusionOp op : kAllFusionOps) {
    const auto it = lut.fusion_costs.find(op);
    if (it == lut.fusion_costs.end()) {
      throw std::invalid_argument("LUT incomplete: missing fusion entry " + std::string(hnas::to_string(op)));
    }
    check_positive(it->second, std::string(hnas::to_string(op)));
  }
}

void validate_lut(const DeviceLUT& lut, const SearchSpace& space) {
  validate_lut(lut);
  for (int b = 0; b < space.num_blocks; ++b) {
    for (int s = 0; s < space.max_depth; ++s) {
      for (int k : space.kernels) {
        for (int e : space.expands) {
          if (!lut.layer_costs.contains({b, s, k, e})) {
            throw std::invalid_argument("LUT does not cover search space: missing " + to_string(LayerKey{b, s, k, e}));
          }
        }
      }
    }
  }
}

Cost backbone_cost(const BackboneGenome& genome, const DeviceLUT& lut) {
  Cost total = lut.stem + lut.head;
  for (std::size_t j = 0; j < genome.blocks.size(); ++j) {
    const auto& b = genome.blocks[j];
    for (int l = 0; l < b.depth; ++l) {
      const auto i = static_cast<std::size_t>(l);
      total += lut.layer({static_cast<int>(j), l, b.kernels[i], b.expands[i]});
    }
  }
  return total;
}

Tensor fusion_relaxed_cost(std::span<const Tensor> gammas, const FusionMacroConfig& macro, const DeviceLUT& lut,
                           Metric metric) {
  if (static_cast<int>(gammas.size()) != macro.cells * macro.nodes) {
    throw ShapeError("fusion_relaxed_cost: expected " + std::to_string(macro.cells * macro.nodes) +
                     " gamma vectors, got " + std::to_string(gammas.size()));
  }
  Array table(kNumFusionOps);
  for (FusionOp op : kAllFusionOps) {
    const Cost& c = lut.fusion(op);
    table(static_cast<Index>(op)) = metric == Metric::Latency ? c.latency_ms : c.energy_mj;
  }
  const Tensor costs = Tensor::from({kNumFusionOps}, table);
  Tensor total;
  for (const auto& g : gammas) {
    if (g.rank() != 1 || g.dim(0) != kNumFusionOps) throw ShapeError("fusion_relaxed_cost: gamma must have 6 entries");
    const Tensor node = sum(softmax(g, 0) * costs);
    total = total.defined() ? total + node : node;
  }
  if (!total.defined()) total = Tensor::scalar(0.0);
  return total;
}

Cost fusion_ops_cost(std::span<const FusionOp> node_ops, const DeviceLUT& lut) {
  Cost total;
  for (FusionOp op : node_ops) total += lut.fusion(op);
  return total;
}

Cost candidate_cost(const MultimodalGenome& genome, std::span<const FusionOp> node_ops, const DeviceLUT& lut) {
  Cost total;
  for (const auto& b : genome.backbones) total += backbone_cost(b, lut);
  return total + fusion_ops_cost(node_ops, lut);
}

std::vector<Cost> candidate_cost(const MultimodalGenome& genome, std::span<const FusionOp> node_ops,
                                 std::span<const DeviceLUT> luts) {
  std::vector<Cost> out;
  for (const auto& lut : luts) out.push_back(candidate_cost(genome, node_ops, lut));
  return out;
}

DeviceProfile device_profile(std::string_view name) {
  if (name == "fast-gpu") return {"fast-gpu", 0.5, 3.0};
  if (name == "slow-edge") return {"slow-edge", 1.5, 1.0};
  throw std::invalid_argument("unknown device profile '" + std::string(name) + "' (expected fast-gpu or slow-edge)");
}

std::vector<std::string> device_profile_names() { return {"fast-gpu", "slow-edge"}; }

DeviceLUT synth_device(std::uint64_t seed, const DeviceProfile& profile, const SearchSpace& space) {
  space.validate();
  Rng rng(seed);
  std::uniform_real_distribution<double> jitter(1.0, 1.05);
  DeviceLUT lut;
  lut.device = profile.name;
  lut.stem = {0.05 * profile.latency_scale * jitter(rng), 0.08 * profile.energy_scale * jitter(rng)};
  lut.head = {0.03 * profile.latency_scale * jitter(rng), 0.05 * profile.energy_scale * jitter(rng)};
  for (int b = 0; b < space.num_blocks; ++b) {
    const double block_factor = 1.0 + 0.1 * b;
    for (int s = 0; s < space.max_depth; ++s) {
      for (int k : space.kernels) {
        for (int e : space.expands) {
          const double work = static_cast<double>(k * e) / 3.0;
          const double lat = (0.02 + 0.01 * work) * block_factor * profile.latency_scale * jitter(rng);
          const double erg = (0.05 + 0.02 * work) * block_factor * profile.energy_scale * jitter(rng);
          lut.layer_costs[{b, s, k, e}] = {lat, erg};
        }
      }
    }
  }
  for (FusionOp op : kAllFusionOps) {
    const double w = op_weight(op);
    lut.fusion_costs[op] = {w * profile.latency_scale * jitter(rng), 1.5 * w * profile.energy_scale * jitter(rng)};
  }
  return lut;
}

std::string lut_to_json(const DeviceLUT& lut) {
  ordered_json j;
  j["device"] = lut.device;
  j["version"] = lut.version;
  j["overheads"] = {{"stem", cost_json(lut.stem)}, {"head", cost_json(lut.head)}};
  j["layer_costs"] = ordered_json::array();
  for (const auto& [k, c] : lut.layer_costs) {
    j["layer_costs"].push_back({{"block", k.block},
                                {"slot", k.slot},
                                {"k", k.kernel},
                                {"e", k.expand},
                                {"lat_ms", c.latency_ms},
                                {"ergy_mj", c.energy_mj}});
  }
  j["fusion_costs"] = ordered_json::array();
  for (const auto& [op, c] : lut.fusion_costs) {
    j["fusion_costs"].push_back({{"op", std::string(to_string(op))}, {"lat_ms", c.latency_ms}, {"ergy_mj", c.energy_mj}});
  }
  return j.dump(2) + "\n";
}

DeviceLUT lut_from_json(std::string_view text) {
  DeviceLUT lut;
  try {
    const auto j = ordered_json::parse(text);
    lut.device = j.at("device").get<std::string>();
    lut.version = j.at("version").get<int>();
    lut.stem = cost_from(j.at("overheads").at("stem"));
    lut.head = cost_from(j.at("overheads").at("head"));
    for (const auto& e : j.at("layer_costs")) {
      const LayerKey key{e.at("block").get<int>(), e.at("slot").get<int>(), e.at("k").get<int>(), e.at("e").get<int>()};
      if (!lut.layer_costs.emplace(key, cost_from(e)).second) {
        throw std::invalid_argument("duplicate layer entry " + to_string(key));
      }
    }
    for (const auto& e : j.at("fusion_costs")) {
      if (!lut.fusion_costs.emplace(fusion_op_from_string(e.at("op").get<std::string>()), cost_from(e)).second) {
        throw std::invalid_argument("duplicate fusion entry");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("malformed LUT document: ") + e.what());
  }
  validate_lut(lut);
  return lut;
}

void save_lut(const DeviceLUT& lut, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write LUT file " + path.string());
  os << lut_to_json(lut);
  if (!os) throw std::runtime_error("failed writing LUT file " + path.string());
}

DeviceLUT load_lut(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open LUT file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return lut_from_json(ss.str());
}

}  // namespace hnas
