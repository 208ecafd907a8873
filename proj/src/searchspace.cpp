#include "hnas/searchspace.hpp"

#include <algorithm>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace hnas {

namespace {

bool contains(const std::vector<int>& set, int v) {
  return std::find(set.begin(), set.end(), v) != set.end();
}

int pick(const std::vector<int>& set, Rng& rng) {
  std::uniform_int_distribution<std::size_t> dist(0, set.size() - 1);
  return set[dist(rng)];
}

bool coin(double p, Rng& rng) {
  if (p <= 0.0) return false;
  if (p >= 1.0) return true;
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
}

void check_probability(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument(std::string(what) + " must lie in [0, 1]");
}

void resample_block(BlockConfig& block, const SearchSpace& space, Rng& rng) {
  block.depth = pick(space.depths, rng);
  for (int l = 0; l < block.depth; ++l) {
    block.kernels[static_cast<std::size_t>(l)] = pick(space.kernels, rng);
    block.expands[static_cast<std::size_t>(l)] = pick(space.expands, rng);
  }
}

BackboneGenome constant_genome(const SearchSpace& space, std::string modality, int d, int k, int e) {
  BackboneGenome g;
  g.modality = std::move(modality);
  for (int j = 0; j < space.num_blocks; ++j) {
    g.blocks.push_back(BlockConfig{d, std::vector<int>(static_cast<std::size_t>(space.max_depth), k),
                                   std::vector<int>(static_cast<std::size_t>(space.max_depth), e)});
  }
  return g;
}

}  // namespace

void SearchSpace::validate() const {
  if (num_blocks < 0) throw std::invalid_argument("search space: num_blocks must be >= 0");
  if (max_depth < 1) throw std::invalid_argument("search space: max_depth must be >= 1");
  if (depths.empty() || kernels.empty() || expands.empty()) {
    throw std::invalid_argument("search space: empty choice set");
  }
  for (int d : depths) {
    if (d < 1 || d > max_depth) throw std::invalid_argument("search space: depth choice outside [1, max_depth]");
  }
  for (int k : kernels) {
    if (k < 1 || k % 2 == 0) throw std::invalid_argument("search space: kernel sizes must be odd and positive");
  }
  for (int e : expands) {
    if (e < 1) throw std::invalid_argument("search space: expand ratios must be positive");
  }
}

int SearchSpace::max_kernel() const { return *std::max_element(kernels.begin(), kernels.end()); }
int SearchSpace::max_expand() const { return *std::max_element(expands.begin(), expands.end()); }

bool operator==(const BlockConfig& a, const BlockConfig& b) {
  if (a.depth != b.depth) return false;
  for (int l = 0; l < a.depth; ++l) {
    const auto i = static_cast<std::size_t>(l);
    if (i >= a.kernels.size() || i >= b.kernels.size()) return false;
    if (a.kernels[i] != b.kernels[i] || a.expands[i] != b.expands[i]) return false;
  }
  return true;
}

void MacroBounds::validate() const {
  if (min_cells < 1 || max_cells < min_cells) throw std::invalid_argument("macro bounds: cells range invalid");
  if (min_nodes < 1 || max_nodes < min_nodes) throw std::invalid_argument("macro bounds: nodes range invalid");
}

void validate(const BackboneGenome& genome, const SearchSpace& space) {
  if (static_cast<int>(genome.blocks.size()) != space.num_blocks) {
    throw std::invalid_argument("genome has " + std::to_string(genome.blocks.size()) +
                                " blocks, space expects " + std::to_string(space.num_blocks));
  }
  for (std::size_t j = 0; j < genome.blocks.size(); ++j) {
    const auto& b = genome.blocks[j];
    const std::string where = "block " + std::to_string(j) + ": ";
    if (!contains(space.depths, b.depth)) throw std::invalid_argument(where + "illegal depth " + std::to_string(b.depth));
    if (static_cast<int>(b.kernels.size()) != space.max_depth || static_cast<int>(b.expands.size()) != space.max_depth) {
      throw std::invalid_argument(where + "layer lists must have max_depth entries");
    }
    for (int l = 0; l < space.max_depth; ++l) {
      const auto i = static_cast<std::size_t>(l);
      if (!contains(space.kernels, b.kernels[i])) {
        throw std::invalid_argument(where + "illegal kernel " + std::to_string(b.kernels[i]));
      }
      if (!contains(space.expands, b.expands[i])) {
        throw std::invalid_argument(where + "illegal expand " + std::to_string(b.expands[i]));
      }
    }
  }
}

void validate(const FusionMacroConfig& macro, const MacroBounds& bounds) {
  if (macro.cells < bounds.min_cells || macro.cells > bounds.max_cells) {
    throw std::invalid_argument("macro: cells " + std::to_string(macro.cells) + " outside bounds");
  }
  if (macro.nodes < bounds.min_nodes || macro.nodes > bounds.max_nodes) {
    throw std::invalid_argument("macro: nodes " + std::to_string(macro.nodes) + " outside bounds");
  }
}

std::vector<int> encode(const BackboneGenome& genome) {
  std::vector<int> out;
  for (const auto& b : genome.blocks) {
    out.push_back(b.depth);
    out.insert(out.end(), b.kernels.begin(), b.kernels.end());
    out.insert(out.end(), b.expands.begin(), b.expands.end());
  }
  return out;
}

BackboneGenome decode(std::span<const int> values, const SearchSpace& space, std::string modality) {
  if (static_cast<int>(values.size()) != space.encoded_length()) {
    throw std::invalid_argument("encoded genome has length " + std::to_string(values.size()) +
                                ", expected " + std::to_string(space.encoded_length()));
  }
  BackboneGenome g;
  g.modality = std::move(modality);
  const auto md = static_cast<std::size_t>(space.max_depth);
  auto it = values.begin();
  for (int j = 0; j < space.num_blocks; ++j) {
    BlockConfig b;
    b.depth = *it++;
    b.kernels.assign(it, it + static_cast<std::ptrdiff_t>(md));
    it += static_cast<std::ptrdiff_t>(md);
    b.expands.assign(it, it + static_cast<std::ptrdiff_t>(md));
    it += static_cast<std::ptrdiff_t>(md);
    g.blocks.push_back(std::move(b));
  }
  validate(g, space);
  return g;
}

std::string encode_string(const BackboneGenome& genome) {
  std::ostringstream os;
  bool first = true;
  for (int v : encode(genome)) {
    os << (first ? "" : " ") << v;
    first = false;
  }
  return os.str();
}

BackboneGenome sample_uniform(const SearchSpace& space, Rng& rng, std::string modality) {
  BackboneGenome g = min_subnet(space, std::move(modality));
  for (auto& b : g.blocks) {
    for (int l = 0; l < space.max_depth; ++l) {
      b.kernels[static_cast<std::size_t>(l)] = pick(space.kernels, rng);
      b.expands[static_cast<std::size_t>(l)] = pick(space.expands, rng);
    }
    b.depth = pick(space.depths, rng);
  }
  return g;
}

BackboneGenome max_subnet(const SearchSpace& space, std::string modality) {
  return constant_genome(space, std::move(modality), *std::max_element(space.depths.begin(), space.depths.end()),
                         space.max_kernel(), space.max_expand());
}

BackboneGenome min_subnet(const SearchSpace& space, std::string modality) {
  return constant_genome(space, std::move(modality), *std::min_element(space.depths.begin(), space.depths.end()),
                         *std::min_element(space.kernels.begin(), space.kernels.end()),
                         *std::min_element(space.expands.begin(), space.expands.end()));
}

FusionMacroConfig sample_macro(const MacroBounds& bounds, Rng& rng) {
  FusionMacroConfig m;
  m.cells = std::uniform_int_distribution<int>(bounds.min_cells, bounds.max_cells)(rng);
  m.nodes = std::uniform_int_distribution<int>(bounds.min_nodes, bounds.max_nodes)(rng);
  return m;
}

BackboneGenome mutate(const BackboneGenome& genome, const SearchSpace& space, double p_mut, Rng& rng) {
  check_probability(p_mut, "p_mut");
  BackboneGenome out = genome;
  for (auto& b : out.blocks) {
    if (coin(p_mut, rng)) resample_block(b, space, rng);
  }
  return out;
}

FusionMacroConfig mutate(const FusionMacroConfig& macro, const MacroBounds& bounds, double p_mut, Rng& rng) {
  check_probability(p_mut, "p_mut");
  return coin(p_mut, rng) ? sample_macro(bounds, rng) : macro;
}

std::pair<BackboneGenome, BackboneGenome> crossover(const BackboneGenome& first, const BackboneGenome& second,
                                                    double p_cross, Rng& rng) {
  check_probability(p_cross, "p_cross");
  if (first.modality != second.modality) {
    throw std::invalid_argument("crossover: modality mismatch '" + first.modality + "' vs '" + second.modality + "'");
  }
  if (first.blocks.size() != second.blocks.size()) throw std::invalid_argument("crossover: block count mismatch");
  std::pair<BackboneGenome, BackboneGenome> children{first, second};
  for (std::size_t j = 0; j < first.blocks.size(); ++j) {
    if (coin(p_cross, rng)) std::swap(children.first.blocks[j], children.second.blocks[j]);
  }
  return children;
}

std::uint64_t space_size(const SearchSpace& space) {
  using u128 = unsigned __int128;
  const u128 limit = u128{1} << 63;
  const u128 per_layer = static_cast<u128>(space.kernels.size()) * space.expands.size();
  u128 per_block = 0;
  for (int d : space.depths) {
    u128 term = 1;
    for (int l = 0; l < d; ++l) {
      term *= per_layer;
      if (term > limit) throw std::overflow_error("space_size exceeds 2^63");
    }
    per_block += term;
    if (per_block > limit) throw std::overflow_error("space_size exceeds 2^63");
  }
  u128 total = 1;
  for (int j = 0; j < space.num_blocks; ++j) {
    total *= per_block;
    if (total > limit) throw std::overflow_error("space_size exceeds 2^63");
  }
  return static_cast<std::uint64_t>(total);
}

}  // namespace hnas
