#include "hnas/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <tuple>

namespace hnas {

namespace {

Tensor normal_param(Shape shape, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Array v(numel(shape));
  for (Index i = 0; i < v.size(); ++i) v(i) = dist(rng);
  return Tensor::from(std::move(shape), std::move(v), true);
}

Tensor gate_init(Index rows, double bias) {
  Array v(rows * 2);
  for (Index k = 0; k < rows; ++k) {
    v(2 * k) = 0.0;
    v(2 * k + 1) = bias;
  }
  return Tensor::from({rows, 2}, std::move(v), true);
}

// Fixed Frobenius norm sqrt(C_f): a unit-RMS source maps to roughly unit-RMS
// output, leaving per-source magnitude to the input gates.
Tensor normalized_projection(const Tensor& weight) {
  const Tensor inv_norm = pow(sum(weight * weight), -0.5);
  return weight * reshape(inv_norm, {1, 1, 1}) * std::sqrt(static_cast<double>(weight.dim(0)));
}

Tensor head_logits(const Tensor& cell_out, const Tensor& weight, const Tensor& bias) {
  return matmul(mean(cell_out, 2), weight) + reshape(bias, {1, bias.dim(0)});
}

std::vector<Tensor> op_tensors(const std::array<FusionOpParams, kNumFusionOps>& ops) {
  std::vector<Tensor> out;
  for (const auto& p : ops) out.insert(out.end(), p.tensors.begin(), p.tensors.end());
  return out;
}

Projection clone_projection(const Projection& p, bool requires_grad) {
  return {p.weight.clone(requires_grad), p.bias.clone(requires_grad), p.scale};
}

struct ParamGroup {
  std::vector<Tensor> params;
  double lr = 1e-3;
  double min_lr = 0.0;
};

// Shared minibatch loop: shuffles rows each epoch, one Adam step per batch
// and group, cosine schedule per group. Tensors outside every group are
// frozen for the duration.
TrainTrace run_training(Index rows, int epochs, int batch_size, std::uint64_t seed, double weight_decay,
                        std::vector<ParamGroup> groups, std::vector<Tensor> frozen,
                        const std::function<Tensor(std::span<const Index>)>& batch_loss) {
  if (epochs < 0) throw std::invalid_argument("training: epochs must be >= 0");
  if (rows == 0) throw std::invalid_argument("training: empty dataset");
  if (batch_size < 1) throw std::invalid_argument("training: batch_size must be >= 1");
  TrainTrace trace;
  if (epochs == 0) return trace;
  for (auto& t : frozen) t.set_requires_grad(false);
  std::vector<Adam> optimizers;
  for (auto& g : groups) {
    for (auto& t : g.params) t.set_requires_grad(true);
    optimizers.emplace_back(g.params, AdamOptions{g.lr, 0.9, 0.999, 1e-8, weight_decay});
  }
  Rng rng(seed);
  std::vector<Index> order(static_cast<std::size_t>(rows));
  std::iota(order.begin(), order.end(), Index{0});
  const Index batches = (rows + batch_size - 1) / batch_size;
  const long total = static_cast<long>(epochs) * batches;
  long step = 0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (Index b = 0; b < batches; ++b) {
      const Index start = b * batch_size;
      const Index count = std::min<Index>(batch_size, rows - start);
      for (auto& opt : optimizers) opt.zero_grad();
      const Tensor loss = batch_loss(std::span<const Index>(order.data() + start, static_cast<std::size_t>(count)));
      backward(loss);
      for (std::size_t g = 0; g < groups.size(); ++g) {
        optimizers[g].step(cosine_lr(step, CosineSchedule{groups[g].lr, groups[g].min_lr, total}));
      }
      ++step;
      epoch_loss += loss.item();
    }
    trace.epoch_loss.push_back(epoch_loss / static_cast<double>(batches));
  }
  return trace;
}

template <typename Forward>
double chunked_accuracy(const FeatureSet& features, std::span<const int> labels, Forward forward) {
  const Index n = feature_rows(features);
  if (n == 0 || labels.empty()) throw std::invalid_argument("accuracy: empty dataset");
  if (static_cast<Index>(labels.size()) != n) throw ShapeError("accuracy: label count mismatch");
  NoGradGuard guard;
  constexpr Index kChunk = 500;
  Index correct = 0;
  std::vector<Index> rows;
  for (Index start = 0; start < n; start += kChunk) {
    rows.clear();
    for (Index i = start; i < std::min(n, start + kChunk); ++i) rows.push_back(i);
    const auto pred = argmax_rows(forward(select_rows(features, rows)));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (pred[i] == labels[static_cast<std::size_t>(rows[i])]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

int argmax_lowest(std::span<const double> v) {
  int best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

}  // namespace

// ---------------------------------------------------------------------------

int HypernetConfig::num_sources() const {
  int n = 0;
  for (const auto& m : source_channels) n += static_cast<int>(m.size());
  return n;
}

void HypernetConfig::validate() const {
  if (macro.cells < 1 || macro.nodes < 1) throw std::invalid_argument("hypernet: cells and nodes must be >= 1");
  if (!std::isfinite(gate_bias)) throw std::invalid_argument("hypernet: gate_bias must be finite");
  if (fusion_channels < 1 || num_classes < 2) throw std::invalid_argument("hypernet: invalid width or class count");
  if (num_sources() < 2) throw std::invalid_argument("hypernet: need at least two backbone features");
  for (const auto& m : source_channels) {
    for (int c : m) {
      if (c < 1) throw std::invalid_argument("hypernet: source channel counts must be positive");
    }
  }
}

FusionHypernet::FusionHypernet(HypernetConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(seed);
  const Index cf = config_.fusion_channels;
  for (const auto& m : config_.source_channels) {
    for (int c : m) {
      projections_.push_back({normal_param({cf, c, 1}, 1.0 / std::sqrt(static_cast<double>(c)), rng),
                              Tensor::zeros({cf}, true)});
    }
  }
  const Index sources = config_.num_sources();
  for (int p = 0; p < config_.macro.cells; ++p) {
    CellArch cell;
    cell.alpha_x = gate_init(sources + p, config_.gate_bias);
    cell.alpha_y = gate_init(sources + p, config_.gate_bias);
    for (int d = 0; d < config_.macro.nodes; ++d) {
      NodeArch node;
      node.beta_x = gate_init(2 + d, config_.gate_bias);
      node.beta_y = gate_init(2 + d, config_.gate_bias);
      node.gamma = Tensor::zeros({kNumFusionOps}, true);
      for (FusionOp op : kAllFusionOps) node.ops[static_cast<std::size_t>(op)] = make_op_params(op, cf, rng);
      cell.nodes.push_back(std::move(node));
    }
    cells_.push_back(std::move(cell));
  }
  head_weight_ = Tensor::zeros({cf, config_.num_classes}, true);
  head_bias_ = Tensor::zeros({config_.num_classes}, true);
}

Tensor FusionHypernet::forward(const FeatureSet& features) const {
  std::vector<Tensor> candidates = project_sources(projections_, features);
  for (const auto& cell : cells_) {
    std::vector<Tensor> inner{gated_mixture(cell.alpha_x, candidates), gated_mixture(cell.alpha_y, candidates)};
    for (const auto& node : cell.nodes) inner.push_back(relaxed_node_forward(node, inner));
    candidates.push_back(inner.back());
  }
  return head_logits(candidates.back(), head_weight_, head_bias_);
}

void FusionHypernet::calibrate(const FeatureSet& features) {
  std::size_t k = 0;
  for (const auto& modality : features) {
    for (const auto& f : modality) {
      if (k >= projections_.size()) throw ShapeError("calibrate: more features than projections");
      const double rms = std::sqrt(f.data().square().mean());
      projections_[k++].scale = rms > 0.0 ? 1.0 / rms : 1.0;
    }
  }
  if (k != projections_.size()) throw ShapeError("calibrate: feature count mismatch");
}

std::vector<Tensor> FusionHypernet::input_gates() const {
  std::vector<Tensor> out;
  for (const auto& cell : cells_) {
    out.push_back(cell.alpha_x);
    out.push_back(cell.alpha_y);
    for (const auto& node : cell.nodes) {
      out.push_back(node.beta_x);
      out.push_back(node.beta_y);
    }
  }
  return out;
}

std::vector<Tensor> FusionHypernet::gammas() const {
  std::vector<Tensor> out;
  for (const auto& cell : cells_) {
    for (const auto& node : cell.nodes) out.push_back(node.gamma);
  }
  return out;
}

std::vector<Tensor> FusionHypernet::weight_parameters() const {
  std::vector<Tensor> out;
  for (const auto& p : projections_) {
    out.push_back(p.weight);
    out.push_back(p.bias);
  }
  for (const auto& cell : cells_) {
    for (const auto& node : cell.nodes) {
      const auto t = op_tensors(node.ops);
      out.insert(out.end(), t.begin(), t.end());
    }
  }
  out.push_back(head_weight_);
  out.push_back(head_bias_);
  return out;
}

void FusionHypernet::make_dense(double logit) {
  for (auto& g : input_gates()) {
    Array& v = g.mutable_data();
    for (Index k = 0; k < g.dim(0); ++k) {
      v(2 * k) = logit;
      v(2 * k + 1) = -logit;
    }
  }
  for (auto& g : gammas()) g.mutable_data().setZero();
}

void FusionHypernet::pin_operator(FusionOp op, double gap) {
  for (auto& g : gammas()) {
    g.mutable_data().setConstant(-gap / 2);
    g.mutable_data()(static_cast<Index>(op)) = gap / 2;
  }
}

// ---------------------------------------------------------------------------

Tensor gated_mixture(const Tensor& gates, std::span<const Tensor> candidates) {
  if (gates.rank() != 2 || gates.dim(1) != 2) throw ShapeError("gate logits must have shape (K, 2)");
  if (gates.dim(0) != static_cast<Index>(candidates.size())) {
    throw ShapeError("gate rows (" + std::to_string(gates.dim(0)) + ") do not match candidate count (" +
                     std::to_string(candidates.size()) + ")");
  }
  for (const auto& c : candidates) {
    if (c.shape() != candidates[0].shape()) throw ShapeError("candidates must share one shape");
  }
  const Tensor identity = narrow(softmax(gates, 1), 1, 0, 1);  // (K, 1)
  const Shape unit(static_cast<std::size_t>(candidates[0].rank()), 1);
  Tensor out;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    const Tensor term = reshape(narrow(identity, 0, static_cast<Index>(k), 1), unit) * candidates[k];
    out = out.defined() ? out + term : term;
  }
  return out;
}

Tensor mixed_op(const Tensor& gamma, const Tensor& x, const Tensor& y,
                const std::array<FusionOpParams, kNumFusionOps>& ops) {
  if (gamma.rank() != 1 || gamma.dim(0) != kNumFusionOps) throw ShapeError("gamma must have 6 entries");
  const Tensor weights = softmax(gamma, 0);
  const Shape unit(static_cast<std::size_t>(x.rank()), 1);
  Tensor out;
  for (FusionOp op : kAllFusionOps) {
    const auto f = static_cast<Index>(op);
    const Tensor term = reshape(narrow(weights, 0, f, 1), unit) * apply_fusion_op(op, x, y, ops[static_cast<std::size_t>(f)]);
    out = out.defined() ? out + term : term;
  }
  return out;
}

Tensor relaxed_node_forward(const NodeArch& node, std::span<const Tensor> candidates) {
  return mixed_op(node.gamma, gated_mixture(node.beta_x, candidates), gated_mixture(node.beta_y, candidates), node.ops);
}

std::vector<Tensor> project_sources(const std::vector<Projection>& projections, const FeatureSet& features) {
  std::vector<Tensor> out;
  for (const auto& modality : features) {
    for (const auto& f : modality) {
      if (out.size() >= projections.size()) throw ShapeError("more backbone features than fusion projections");
      const auto& p = projections[out.size()];
      out.push_back(conv1d(p.scale == 1.0 ? f : scale(f, p.scale), normalized_projection(p.weight), p.bias));
    }
  }
  if (out.size() != projections.size()) {
    throw ShapeError("fusion expects " + std::to_string(projections.size()) + " backbone features, got " +
                     std::to_string(out.size()));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<FusionOp> FusionGraph::node_ops() const {
  std::vector<FusionOp> out;
  for (const auto& c : cells) {
    for (const auto& n : c.nodes) out.push_back(n.op);
  }
  return out;
}

std::vector<Tensor> FusionGraph::parameters() const {
  std::vector<Tensor> out;
  for (const auto& p : projections) {
    out.push_back(p.weight);
    out.push_back(p.bias);
  }
  for (const auto& c : cells) {
    for (const auto& n : c.nodes) out.insert(out.end(), n.params.tensors.begin(), n.params.tensors.end());
  }
  out.push_back(head_weight);
  out.push_back(head_bias);
  return out;
}

void FusionGraph::validate() const {
  config.validate();
  const int sources = config.num_sources();
  if (static_cast<int>(projections.size()) != sources) throw std::invalid_argument("fusion graph: projection count mismatch");
  if (cells.empty()) throw std::invalid_argument("fusion graph: no cells");
  for (std::size_t p = 0; p < cells.size(); ++p) {
    const auto& c = cells[p];
    const int limit = sources + static_cast<int>(p);
    auto check = [](int i, int j, int limit, const std::string& where) {
      if (i < 0 || j < 0 || i >= limit || j >= limit) {
        throw std::out_of_range(where + ": dangling input index (" + std::to_string(i) + ", " + std::to_string(j) +
                                ") with " + std::to_string(limit) + " candidates");
      }
      if (i == j) throw std::invalid_argument(where + ": inputs must be distinct");
    };
    check(c.input_x, c.input_y, limit, "cell " + std::to_string(p));
    if (c.nodes.empty()) throw std::invalid_argument("fusion graph: cell without nodes");
    for (std::size_t d = 0; d < c.nodes.size(); ++d) {
      const auto& n = c.nodes[d];
      check(n.input_x, n.input_y, 2 + static_cast<int>(d), "cell " + std::to_string(p) + " node " + std::to_string(d));
      if (n.params.kind != n.op) throw std::invalid_argument("fusion graph: node parameters do not match operator");
      check_op_params(n.params, config.fusion_channels);
    }
  }
}

std::pair<int, int> choose_input_pair(std::span<const double> p_x, std::span<const double> p_y) {
  if (p_x.size() != p_y.size()) throw std::invalid_argument("choose_input_pair: probability lengths differ");
  if (p_x.size() < 2) throw std::invalid_argument("discretize: fewer than 2 candidate inputs");
  std::pair<int, int> best{-1, -1};
  double best_score = -1.0;
  for (std::size_t i = 0; i < p_x.size(); ++i) {
    for (std::size_t j = 0; j < p_y.size(); ++j) {
      if (i == j) continue;
      const double s = p_x[i] * p_y[j];
      if (s > best_score) {
        best_score = s;
        best = {static_cast<int>(i), static_cast<int>(j)};
      }
    }
  }
  return best;
}

std::vector<double> identity_probabilities(const Tensor& gates) {
  NoGradGuard guard;
  const Tensor p = softmax(gates.detach(), 1);
  std::vector<double> out(static_cast<std::size_t>(gates.dim(0)));
  for (Index k = 0; k < gates.dim(0); ++k) out[static_cast<std::size_t>(k)] = p.data()(2 * k);
  return out;
}

FusionGraph discretize(const FusionHypernet& hypernet) {
  FusionGraph g;
  g.config = hypernet.config();
  for (const auto& p : hypernet.projections()) g.projections.push_back(clone_projection(p, false));
  for (const auto& cell : hypernet.cells()) {
    GraphCell gc;
    std::tie(gc.input_x, gc.input_y) =
        choose_input_pair(identity_probabilities(cell.alpha_x), identity_probabilities(cell.alpha_y));
    for (const auto& node : cell.nodes) {
      GraphNode gn;
      std::tie(gn.input_x, gn.input_y) =
          choose_input_pair(identity_probabilities(node.beta_x), identity_probabilities(node.beta_y));
      std::vector<double> probs(kNumFusionOps);
      {
        NoGradGuard guard;
        const Tensor s = softmax(node.gamma.detach(), 0);
        for (int f = 0; f < kNumFusionOps; ++f) probs[static_cast<std::size_t>(f)] = s.data()(f);
      }
      gn.op = static_cast<FusionOp>(argmax_lowest(probs));
      gn.params = node.ops[static_cast<std::size_t>(gn.op)].clone(false);
      gc.nodes.push_back(std::move(gn));
    }
    g.cells.push_back(std::move(gc));
  }
  g.head_weight = hypernet.head_weight().clone(false);
  g.head_bias = hypernet.head_bias().clone(false);
  return g;
}

Tensor graph_forward(const FusionGraph& graph, const FeatureSet& features) {
  graph.validate();
  std::vector<Tensor> candidates = project_sources(graph.projections, features);
  for (const auto& cell : graph.cells) {
    std::vector<Tensor> inner{candidates[static_cast<std::size_t>(cell.input_x)],
                              candidates[static_cast<std::size_t>(cell.input_y)]};
    for (const auto& node : cell.nodes) {
      inner.push_back(apply_fusion_op(node.op, inner[static_cast<std::size_t>(node.input_x)],
                                      inner[static_cast<std::size_t>(node.input_y)], node.params));
    }
    candidates.push_back(inner.back());
  }
  return head_logits(candidates.back(), graph.head_weight, graph.head_bias);
}

// ---------------------------------------------------------------------------

FusionLoss fusion_loss(const FusionHypernet& hypernet, const FeatureSet& batch, std::span<const int> labels,
                       const DeviceLUT& lut, const LossExponents& exponents) {
  if (exponents.a < 0.0 || exponents.b < 0.0 || exponents.c < 0.0) {
    throw std::invalid_argument("fusion_loss: exponents must be non-negative");
  }
  const Tensor task = clamp_min(cross_entropy(hypernet.forward(batch), labels), kTaskLossFloor);
  const auto gammas = hypernet.gammas();
  const Tensor lat = fusion_relaxed_cost(gammas, hypernet.config().macro, lut, Metric::Latency);
  const Tensor erg = fusion_relaxed_cost(gammas, hypernet.config().macro, lut, Metric::Energy);
  FusionLoss out;
  out.total = pow(task, exponents.a) + pow(lat, exponents.b) + pow(erg, exponents.c);
  out.task = task.item();
  out.latency = lat.item();
  out.energy = erg.item();
  return out;
}

Index feature_rows(const FeatureSet& features) {
  if (features.empty() || features[0].empty()) return 0;
  return features[0][0].dim(0);
}

FeatureSet select_rows(const FeatureSet& features, std::span<const Index> rows) {
  FeatureSet out;
  for (const auto& modality : features) {
    auto& dst = out.emplace_back();
    for (const auto& f : modality) {
      const Index per = f.size() / f.dim(0);
      Array values(static_cast<Index>(rows.size()) * per);
      for (std::size_t r = 0; r < rows.size(); ++r) {
        values.segment(static_cast<Index>(r) * per, per) = f.data().segment(rows[r] * per, per);
      }
      Shape shape = f.shape();
      shape[0] = static_cast<Index>(rows.size());
      dst.push_back(Tensor::from(std::move(shape), std::move(values)));
    }
  }
  return out;
}

FeatureSet compute_features(std::span<const ElasticSupernet* const> supernets, std::span<const BackboneGenome> genomes,
                            const MultimodalDataset& data) {
  if (supernets.size() != genomes.size()) throw std::invalid_argument("compute_features: one genome per supernet");
  if (data.size() == 0) throw std::invalid_argument("compute_features: empty dataset");
  NoGradGuard guard;
  FeatureSet out;
  constexpr Index kChunk = 500;
  for (std::size_t m = 0; m < supernets.size(); ++m) {
    const Subnet net(*supernets[m], genomes[m]);
    const auto modality = static_cast<std::size_t>(data.modality_index(supernets[m]->modality()));
    std::vector<std::vector<Tensor>> chunks(genomes[m].blocks.size());
    std::vector<Index> rows;
    for (Index start = 0; start < data.size(); start += kChunk) {
      rows.clear();
      for (Index i = start; i < std::min(data.size(), start + kChunk); ++i) rows.push_back(i);
      const auto result = net.forward(data.batch(modality, rows));
      for (std::size_t j = 0; j < result.features.size(); ++j) chunks[j].push_back(result.features[j].values);
    }
    auto& dst = out.emplace_back();
    for (const auto& c : chunks) dst.push_back(c.size() == 1 ? c[0] : concat(c, 0));
  }
  return out;
}

std::vector<std::vector<int>> feature_channels(std::span<const ElasticSupernet* const> supernets,
                                               std::span<const BackboneGenome> genomes) {
  std::vector<std::vector<int>> out;
  for (std::size_t m = 0; m < supernets.size(); ++m) out.push_back(Subnet(*supernets[m], genomes[m]).feature_channels());
  return out;
}

Tensor input_budget_penalty(const FusionHypernet& hypernet) {
  Tensor total = Tensor::scalar(0.0);
  for (const auto& g : hypernet.input_gates()) {
    const Tensor dev = add_scalar(sum(narrow(softmax(g, 1), 1, 0, 1)), -1.0);
    total = total + dev * dev;
  }
  return total;
}

TrainTrace train_fusion(FusionHypernet& hypernet, const FeatureSet& features, std::span<const int> labels,
                        const DeviceLUT& lut, const LossExponents& exponents, const FusionTrainConfig& config) {
  if (static_cast<Index>(labels.size()) != feature_rows(features)) throw ShapeError("train_fusion: label count mismatch");
  std::vector<ParamGroup> groups{{hypernet.weight_parameters(), config.weight_lr, config.weight_min_lr}};
  ParamGroup arch{{}, config.arch_lr, config.arch_min_lr};
  std::vector<Tensor> frozen;
  const auto gates = hypernet.input_gates();
  const auto gammas = hypernet.gammas();
  (config.search_inputs ? arch.params : frozen).insert((config.search_inputs ? arch.params : frozen).end(), gates.begin(), gates.end());
  (config.search_ops ? arch.params : frozen).insert((config.search_ops ? arch.params : frozen).end(), gammas.begin(), gammas.end());
  if (!arch.params.empty()) groups.push_back(std::move(arch));
  if (config.epochs > 0) hypernet.calibrate(features);
  const double budget = config.search_inputs ? config.input_budget : 0.0;
  return run_training(feature_rows(features), config.epochs, config.batch_size, config.seed, config.weight_decay,
                      std::move(groups), std::move(frozen), [&](std::span<const Index> rows) {
                        std::vector<int> y;
                        y.reserve(rows.size());
                        for (Index r : rows) y.push_back(labels[static_cast<std::size_t>(r)]);
                        Tensor total = fusion_loss(hypernet, select_rows(features, rows), y, lut, exponents).total;
                        if (budget > 0.0) total = total + scale(input_budget_penalty(hypernet), budget);
                        return total;
                      });
}

TrainTrace train_fusion(FusionHypernet& hypernet, std::span<const ElasticSupernet* const> supernets,
                        std::span<const BackboneGenome> genomes, const MultimodalDataset& data, const DeviceLUT& lut,
                        const LossExponents& exponents, const FusionTrainConfig& config) {
  const FeatureSet features = compute_features(supernets, genomes, data);
  return train_fusion(hypernet, features, data.labels, lut, exponents, config);
}

TrainTrace finetune_graph(FusionGraph& graph, const FeatureSet& features, std::span<const int> labels, int epochs,
                          const FusionTrainConfig& config) {
  if (static_cast<Index>(labels.size()) != feature_rows(features)) throw ShapeError("finetune_graph: label count mismatch");
  std::vector<ParamGroup> groups{{graph.parameters(), config.weight_lr, config.weight_min_lr}};
  auto trace = run_training(feature_rows(features), epochs, config.batch_size, config.seed + 1, config.weight_decay,
                            std::move(groups), {}, [&](std::span<const Index> rows) {
                              std::vector<int> y;
                              y.reserve(rows.size());
                              for (Index r : rows) y.push_back(labels[static_cast<std::size_t>(r)]);
                              return cross_entropy(graph_forward(graph, select_rows(features, rows)), y);
                            });
  for (auto& t : graph.parameters()) t.set_requires_grad(false);
  return trace;
}

double hypernet_accuracy(const FusionHypernet& hypernet, const FeatureSet& features, std::span<const int> labels) {
  return chunked_accuracy(features, labels, [&](const FeatureSet& f) { return hypernet.forward(f); });
}

double graph_accuracy(const FusionGraph& graph, const FeatureSet& features, std::span<const int> labels) {
  return chunked_accuracy(features, labels, [&](const FeatureSet& f) { return graph_forward(graph, f); });
}

double graph_accuracy(const FusionGraph& graph, std::span<const ElasticSupernet* const> supernets,
                      std::span<const BackboneGenome> genomes, const MultimodalDataset& data) {
  if (data.size() == 0) throw std::invalid_argument("graph_accuracy: empty dataset");
  return graph_accuracy(graph, compute_features(supernets, genomes, data), data.labels);
}

}  // namespace hnas
