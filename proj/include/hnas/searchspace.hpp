#pragma once

// Value-encoded backbone genomes and fusion macro-architectures.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace hnas {

using Rng = std::mt19937_64;

struct SearchSpace {
  int num_blocks = 3;
  int max_depth = 4;
  std::vector<int> depths{2, 3, 4};
  std::vector<int> kernels{3, 5, 7};
  std::vector<int> expands{3, 4, 6};

  void validate() const;
  int max_kernel() const;
  int max_expand() const;
  int encoded_length() const { return num_blocks * (1 + 2 * max_depth); }
};

// Only the first `depth` kernel/expand entries are active; the tail is
// carried along but ignored by equality, costing and forward passes.
struct BlockConfig {
  int depth = 0;
  std::vector<int> kernels;
  std::vector<int> expands;

  friend bool operator==(const BlockConfig& a, const BlockConfig& b);
};

struct BackboneGenome {
  std::string modality;
  std::vector<BlockConfig> blocks;

  friend bool operator==(const BackboneGenome& a, const BackboneGenome& b) = default;
};

struct FusionMacroConfig {
  int cells = 1;
  int nodes = 1;

  friend bool operator==(const FusionMacroConfig&, const FusionMacroConfig&) = default;
};

struct MacroBounds {
  int min_cells = 1;
  int max_cells = 2;
  int min_nodes = 1;
  int max_nodes = 3;

  void validate() const;
};

struct MultimodalGenome {
  std::vector<BackboneGenome> backbones;
  FusionMacroConfig macro;

  friend bool operator==(const MultimodalGenome&, const MultimodalGenome&) = default;
};

// Throws std::invalid_argument describing the first illegal entry.
void validate(const BackboneGenome& genome, const SearchSpace& space);
void validate(const FusionMacroConfig& macro, const MacroBounds& bounds);

// [d, k_1..k_max_depth, e_1..e_max_depth] per block.
std::vector<int> encode(const BackboneGenome& genome);
BackboneGenome decode(std::span<const int> values, const SearchSpace& space,
                      std::string modality = {});
std::string encode_string(const BackboneGenome& genome);  // space separated

BackboneGenome sample_uniform(const SearchSpace& space, Rng& rng, std::string modality = {});
BackboneGenome max_subnet(const SearchSpace& space, std::string modality = {});
BackboneGenome min_subnet(const SearchSpace& space, std::string modality = {});
FusionMacroConfig sample_macro(const MacroBounds& bounds, Rng& rng);

// Per block, with probability p_mut, resamples depth and every active layer.
BackboneGenome mutate(const BackboneGenome& genome, const SearchSpace& space, double p_mut, Rng& rng);
FusionMacroConfig mutate(const FusionMacroConfig& macro, const MacroBounds& bounds, double p_mut,
                         Rng& rng);

// Per block position, with probability p_cross, swaps the parents' blocks.
std::pair<BackboneGenome, BackboneGenome> crossover(const BackboneGenome& first,
                                                    const BackboneGenome& second, double p_cross,
                                                    Rng& rng);

// Exact number of distinct genomes; std::overflow_error beyond 2^63.
std::uint64_t space_size(const SearchSpace& space);

}  // namespace hnas
