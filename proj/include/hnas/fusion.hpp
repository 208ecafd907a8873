#pragma once

// Relaxed fusion hypernetwork, its loss and training, and discretization
// into a concrete fusion graph.
//
// Candidate order for cell p is every tapped backbone block (modality-major,
// then block index) followed by the outputs of cells 0..p-1. Inside a cell,
// node d chooses among [X, Y, node_0, ..., node_{d-1}]. Each consumer owns
// one Identity/Zero gate matrix per input slot (x and y), so the relaxed
// inputs become the discrete ones when the gates saturate. A cell's output is
// its last node's output.

#include "hnas/dataset.hpp"
#include "hnas/fusion_op.hpp"
#include "hnas/hwcost.hpp"
#include "hnas/optim.hpp"
#include "hnas/searchspace.hpp"
#include "hnas/supernet.hpp"
#include "hnas/tensor.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace hnas {

// Per modality, per block: (N, C, L).
using FeatureSet = std::vector<std::vector<Tensor>>;

struct HypernetConfig {
  FusionMacroConfig macro;
  std::vector<std::vector<int>> source_channels;  // per modality, per block
  int fusion_channels = 8;
  int num_classes = 4;
  // Initial Zero-minus-Identity logit of every input gate.
  double gate_bias = 1.6;

  int num_sources() const;
  void validate() const;
};

struct Projection {
  Tensor weight;       // (C_f, C_src, 1)
  Tensor bias;         // (C_f)
  double scale = 1.0;  // fixed input scaling, see calibrate()
};

struct NodeArch {
  Tensor beta_x;  // (|F2|, 2) gate logits, column 0 = Identity
  Tensor beta_y;
  Tensor gamma;  // (6)
  std::array<FusionOpParams, kNumFusionOps> ops;
};

struct CellArch {
  Tensor alpha_x;  // (|F1|, 2)
  Tensor alpha_y;
  std::vector<NodeArch> nodes;
};

class FusionHypernet {
 public:
  FusionHypernet(HypernetConfig config, std::uint64_t seed);

  const HypernetConfig& config() const { return config_; }
  std::vector<CellArch>& cells() { return cells_; }
  const std::vector<CellArch>& cells() const { return cells_; }
  std::vector<Projection>& projections() { return projections_; }
  const std::vector<Projection>& projections() const { return projections_; }
  const Tensor& head_weight() const { return head_weight_; }
  const Tensor& head_bias() const { return head_bias_; }
  Tensor& head_weight() { return head_weight_; }

  Tensor forward(const FeatureSet& features) const;

  // Sets every projection's input scale to 1 / RMS of its source over
  // `features`, so all candidates enter the gates at unit scale.
  void calibrate(const FeatureSet& features);

  std::vector<Tensor> input_gates() const;  // every alpha and beta
  std::vector<Tensor> gammas() const;       // C*D vectors, cell-major
  std::vector<Tensor> weight_parameters() const;

  // Gates pinned to Identity for every candidate and uniform gamma.
  void make_dense(double logit = 20.0);
  // Gamma of every node pinned one-hot on `op` with the given logit gap.
  void pin_operator(FusionOp op, double gap = 40.0);

 private:
  HypernetConfig config_;
  std::vector<Projection> projections_;
  std::vector<CellArch> cells_;
  Tensor head_weight_;  // (C_f, classes)
  Tensor head_bias_;
};

// Sum over candidates of softmax(gates[k])[Identity] * candidates[k].
Tensor gated_mixture(const Tensor& gates, std::span<const Tensor> candidates);
inline Tensor relaxed_cell_input(const Tensor& alpha, std::span<const Tensor> candidates) {
  return gated_mixture(alpha, candidates);
}
// Sum over operators of softmax(gamma)_f * f(x, y).
Tensor mixed_op(const Tensor& gamma, const Tensor& x, const Tensor& y,
                const std::array<FusionOpParams, kNumFusionOps>& ops);
Tensor relaxed_node_forward(const NodeArch& node, std::span<const Tensor> candidates);

std::vector<Tensor> project_sources(const std::vector<Projection>& projections, const FeatureSet& features);

struct GraphNode {
  int input_x = 0;
  int input_y = 1;
  FusionOp op = FusionOp::Sum;
  FusionOpParams params;
};

struct GraphCell {
  int input_x = 0;
  int input_y = 1;
  std::vector<GraphNode> nodes;
};

struct FusionGraph {
  HypernetConfig config;
  std::vector<Projection> projections;
  std::vector<GraphCell> cells;
  Tensor head_weight;
  Tensor head_bias;

  std::vector<FusionOp> node_ops() const;
  std::vector<Tensor> parameters() const;
  // Index ranges, acyclicity and parameter shapes.
  void validate() const;
};

// Ordered pair (i, j), i != j, maximizing p_x[i] * p_y[j]; ties go to the
// lexicographically smallest pair.
std::pair<int, int> choose_input_pair(std::span<const double> p_x, std::span<const double> p_y);
// Identity-gate probability per candidate.
std::vector<double> identity_probabilities(const Tensor& gates);

FusionGraph discretize(const FusionHypernet& hypernet);
Tensor graph_forward(const FusionGraph& graph, const FeatureSet& features);

struct LossExponents {
  double a = 1.0;
  double b = 1.0;
  double c = 1.0;
};

struct FusionLoss {
  Tensor total;
  double task = 0.0;
  double latency = 0.0;
  double energy = 0.0;
};

inline constexpr double kTaskLossFloor = 1e-12;

// [L_task]^a + [L_lat]^b + [L_energy]^c.
FusionLoss fusion_loss(const FusionHypernet& hypernet, const FeatureSet& batch, std::span<const int> labels,
                       const DeviceLUT& lut, const LossExponents& exponents);

// Sum over gate matrices of (sum_k P_identity[k] - 1)^2.
Tensor input_budget_penalty(const FusionHypernet& hypernet);

struct FusionTrainConfig {
  int epochs = 25;
  int batch_size = 32;
  double weight_lr = 1e-3;
  double weight_min_lr = 1e-5;
  double arch_lr = 3e-3;
  double arch_min_lr = 3e-5;
  double weight_decay = 1e-4;
  bool search_inputs = true;  // alpha/beta trainable
  bool search_ops = true;     // gamma trainable
  // Weight of input_budget_penalty in the training objective; 0 disables.
  double input_budget = 1.0;
  std::uint64_t seed = 0;
};

FeatureSet select_rows(const FeatureSet& features, std::span<const Index> rows);
Index feature_rows(const FeatureSet& features);

// Block features of every modality over a whole dataset, without gradients.
FeatureSet compute_features(std::span<const ElasticSupernet* const> supernets,
                            std::span<const BackboneGenome> genomes, const MultimodalDataset& data);
std::vector<std::vector<int>> feature_channels(std::span<const ElasticSupernet* const> supernets,
                                               std::span<const BackboneGenome> genomes);

TrainTrace train_fusion(FusionHypernet& hypernet, const FeatureSet& features, std::span<const int> labels,
                        const DeviceLUT& lut, const LossExponents& exponents, const FusionTrainConfig& config);
TrainTrace train_fusion(FusionHypernet& hypernet, std::span<const ElasticSupernet* const> supernets,
                        std::span<const BackboneGenome> genomes, const MultimodalDataset& data, const DeviceLUT& lut,
                        const LossExponents& exponents, const FusionTrainConfig& config);

// Task-loss training of a discrete graph's projections, operator parameters
// and head; the topology stays fixed.
TrainTrace finetune_graph(FusionGraph& graph, const FeatureSet& features, std::span<const int> labels, int epochs,
                          const FusionTrainConfig& config);

double hypernet_accuracy(const FusionHypernet& hypernet, const FeatureSet& features, std::span<const int> labels);
double graph_accuracy(const FusionGraph& graph, const FeatureSet& features, std::span<const int> labels);
double graph_accuracy(const FusionGraph& graph, std::span<const ElasticSupernet* const> supernets,
                      std::span<const BackboneGenome> genomes, const MultimodalDataset& data);

}  // namespace hnas
