#pragma once

// Labeled multimodal signal datasets and the synthetic two-latent-bit task.

#include "hnas/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace hnas {

struct MultimodalDataset {
  std::vector<std::string> modalities;
  int channels = 1;
  int length = 16;
  int num_classes = 4;
  std::vector<std::vector<double>> signals;  // per modality, row-major (N, channels, length)
  std::vector<int> labels;

  Index size() const { return static_cast<Index>(labels.size()); }
  Index modality_index(const std::string& name) const;
  // (rows.size(), channels, length) tensor of one modality.
  Tensor batch(std::size_t modality, std::span<const Index> rows) const;
  Tensor all(std::size_t modality) const;
  std::vector<int> batch_labels(std::span<const Index> rows) const;
  MultimodalDataset subset(std::span<const Index> rows) const;
  void validate() const;
};

struct SyntheticTaskSpec {
  int train = 4000;
  int val = 1000;
  int test = 1000;
  int length = 16;
  int channels = 1;
  double noise = 0.3;
};

struct DatasetSplits {
  MultimodalDataset train;
  MultimodalDataset val;
  MultimodalDataset test;
};

// Two modalities; modality 0 sees s_a * template_0 + noise, modality 1 sees
// s_b * template_1 + noise; label = 2*[s_a > 0] + [s_b > 0]. Classes are
// exactly balanced within each split (up to size mod 4).
DatasetSplits generate_synthetic(const SyntheticTaskSpec& spec, std::uint64_t seed);
std::vector<double> synthetic_template(int modality, int channels, int length);

void save_dataset(const MultimodalDataset& data, const std::filesystem::path& path);
MultimodalDataset load_dataset(const std::filesystem::path& path);

void save_splits(const DatasetSplits& splits, const std::filesystem::path& dir);
DatasetSplits load_splits(const std::filesystem::path& dir);

}  // namespace hnas
