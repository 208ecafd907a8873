#pragma once

// Elastic weight-sharing 1-D convolutional backbones.
//
// Every layer slot owns one maximal kernel (C_max, C_max, K_max). A subnet
// uses the first d_j slots of block j, the centered k-wide window of each
// kernel, and the first base*e output channels (input channels follow the
// previous layer). Nothing is copied: slices are taken inside the graph, so
// gradients land in the shared tensors.

#include "hnas/dataset.hpp"
#include "hnas/optim.hpp"
#include "hnas/searchspace.hpp"
#include "hnas/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace hnas {

struct SupernetConfig {
  SearchSpace space;
  int in_channels = 1;
  int base_channels = 8;
  int num_classes = 4;
  int stem_kernel = 3;

  void validate() const;
  int max_channels() const { return base_channels * space.max_expand(); }
};

struct LayerWeights {
  Tensor weight;  // (C_max, C_max, K_max)
  Tensor bias;    // (C_max)
};

class ElasticSupernet {
 public:
  ElasticSupernet(std::string modality, SupernetConfig config, std::uint64_t seed);

  const std::string& modality() const { return modality_; }
  const SupernetConfig& config() const { return config_; }

  const Tensor& stem_weight() const { return stem_weight_; }
  const Tensor& stem_bias() const { return stem_bias_; }
  const LayerWeights& layer(int block, int slot) const;
  const Tensor& head_weight() const { return head_weight_; }  // (C_max, classes)
  const Tensor& head_bias() const { return head_bias_; }

  // Keys are "<block>/<slot>/<role>" plus "stem/..." and "head/...".
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
  void set_trainable(bool on);

  ElasticSupernet clone() const;

 private:
  std::string modality_;
  SupernetConfig config_;
  Tensor stem_weight_, stem_bias_;
  std::vector<std::vector<LayerWeights>> layers_;
  Tensor head_weight_, head_bias_;
};

// Centered width-k window of the first out_channels x in_channels block of a
// (C, C, K) kernel.
Tensor kernel_slice(const Tensor& full, Index out_channels, Index in_channels, int kernel);

struct FeatureMap {
  Tensor values;  // (B, channels, L)
  std::string modality;
  int block = 0;
};

struct BackboneOutput {
  std::vector<FeatureMap> features;  // one per block
  Tensor logits;                     // (B, classes)
};

class Subnet {
 public:
  Subnet(const ElasticSupernet& supernet, BackboneGenome genome);

  BackboneOutput forward(const Tensor& x) const;
  Tensor logits(const Tensor& x) const { return forward(x).logits; }
  const BackboneGenome& genome() const { return genome_; }
  // Output channel count of each block's last active layer.
  std::vector<int> feature_channels() const;

 private:
  const ElasticSupernet* supernet_;
  BackboneGenome genome_;
};

Subnet instantiate_subnet(const ElasticSupernet& supernet, const BackboneGenome& genome);
BackboneOutput extract_features(const ElasticSupernet& supernet, const BackboneGenome& genome, const Tensor& batch);

struct SamplingPolicy {
  int n_random = 2;
  std::vector<BackboneGenome> anchors;  // empty -> {max_subnet, min_subnet}
  double kd_weight = 1.0;
};

struct SupernetTrainConfig {
  int epochs = 5;
  int batch_size = 32;
  AdamOptions adam;
  double min_lr = 1e-5;
  std::uint64_t seed = 0;
  SamplingPolicy policy;
};

struct TrainTrace {
  std::vector<double> epoch_loss;
};

// Sandwich-rule training: each batch sums the task loss of the anchors and
// n_random uniform subnets, plus kd_weight * KL(teacher || student) for every
// subnet other than the max anchor, whose logits serve as detached teacher.
TrainTrace train_supernet(ElasticSupernet& supernet, const MultimodalDataset& data, std::size_t modality,
                          const SupernetTrainConfig& config);

// Soft-target KL divergence, averaged over the batch.
Tensor distillation_loss(const Tensor& student_logits, const Tensor& teacher_logits);

double evaluate_subnet(const ElasticSupernet& supernet, const BackboneGenome& genome,
                       const MultimodalDataset& data, std::size_t modality);

std::vector<int> argmax_rows(const Tensor& logits);

void save_checkpoint(const std::vector<ElasticSupernet>& supernets, const std::filesystem::path& path);
std::vector<ElasticSupernet> load_checkpoint(const std::filesystem::path& path);

}  // namespace hnas
