#include "hnas/engine.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace hnas {

namespace {

void check_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument(std::string(name) + " must be in [0, 1]");
}

void check_fraction(double f, const char* name) {
  if (!(f > 0.0 && f <= 1.0)) throw std::invalid_argument(std::string(name) + " must be in (0, 1]");
}

std::vector<ScoredCandidate> ordered_records(const std::vector<RunRecord>& records) {
  std::vector<ObjectivePoint> points;
  points.reserve(records.size());
  for (const auto& r : records) points.push_back(r.objectives());
  return eval_score(score(points, kSearchDirections));
}

MultimodalGenome max_genome(const SearchContext& context, const FusionMacroConfig& macro) {
  MultimodalGenome g;
  for (const auto& net : *context.supernets) g.backbones.push_back(max_subnet(context.space(), net.modality()));
  g.macro = macro;
  return g;
}

std::vector<GraphCell> strip_parameters(const FusionGraph& graph) {
  std::vector<GraphCell> out;
  for (const auto& c : graph.cells) {
    GraphCell cell{c.input_x, c.input_y, {}};
    for (const auto& n : c.nodes) cell.nodes.push_back({n.input_x, n.input_y, n.op, {n.op, {}}});
    out.push_back(std::move(cell));
  }
  return out;
}

std::vector<AblationRow> front_rows(AblationMode mode, const RunResult& result) {
  std::vector<AblationRow> rows;
  for (const auto& r : result.front) {
    std::vector<FusionOp> ops;
    for (const auto& c : r.topology) {
      for (const auto& n : c.nodes) ops.push_back(n.op);
    }
    rows.push_back({std::string(to_string(mode)), "candidate " + std::to_string(r.id), r.acc, r.test_acc, r.cost, ops});
  }
  return rows;
}

}  // namespace

void EngineConfig::validate() const {
  if (generations < 0) throw std::invalid_argument("generations must be >= 0");
  if (population < 1) throw std::invalid_argument("population must be >= 1");
  check_probability(p_mut, "p_mut");
  check_probability(p_cross, "p_cross");
  check_fraction(select_fraction, "select_fraction");
  check_fraction(elite_fraction, "elite_fraction");
  if (exponents.a < 0 || exponents.b < 0 || exponents.c < 0) throw std::invalid_argument("loss exponents must be >= 0");
  if (fusion.epochs < 0) throw std::invalid_argument("fusion epochs must be >= 0");
  if (fusion.batch_size < 1) throw std::invalid_argument("fusion batch_size must be >= 1");
  if (!(fusion.input_budget >= 0.0)) throw std::invalid_argument("fusion input_budget must be >= 0");
  if (finetune_epochs < 0) throw std::invalid_argument("finetune_epochs must be >= 0");
  if (fusion_channels < 1) throw std::invalid_argument("fusion_channels must be >= 1");
  macro_bounds.validate();
  if (ablation_macro.cells < 1 || ablation_macro.nodes < 1) throw std::invalid_argument("ablation macro must be >= 1x1");
}

const SearchSpace& SearchContext::space() const { return supernets->front().config().space; }

std::vector<const ElasticSupernet*> SearchContext::supernet_ptrs() const {
  std::vector<const ElasticSupernet*> out;
  for (const auto& n : *supernets) out.push_back(&n);
  return out;
}

void SearchContext::validate() const {
  if (supernets == nullptr || supernets->empty()) throw std::invalid_argument("search context: no supernets");
  if (data == nullptr) throw std::invalid_argument("search context: no dataset");
  if (luts.empty()) throw std::invalid_argument("search context: no device LUT");
  const auto& modalities = data->train.modalities;
  if (modalities.size() != supernets->size()) {
    throw std::invalid_argument("search context: " + std::to_string(supernets->size()) + " supernets for " +
                                std::to_string(modalities.size()) + " modalities");
  }
  for (std::size_t m = 0; m < modalities.size(); ++m) {
    if ((*supernets)[m].modality() != modalities[m]) {
      throw std::invalid_argument("search context: supernet " + std::to_string(m) + " is for '" +
                                  (*supernets)[m].modality() + "', dataset modality is '" + modalities[m] + "'");
    }
    if ((*supernets)[m].config().space.num_blocks != space().num_blocks) {
      throw std::invalid_argument("search context: supernets disagree on the search space");
    }
  }
  for (const auto& lut : luts) validate_lut(lut, space());
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Population initial_population(const EngineConfig& config, const SearchContext& context, Rng& rng) {
  Population pop;
  for (int i = 0; i < config.population; ++i) {
    MultimodalGenome g;
    for (const auto& net : *context.supernets) g.backbones.push_back(sample_uniform(context.space(), rng, net.modality()));
    g.macro = sample_macro(config.macro_bounds, rng);
    pop.members.push_back(std::move(g));
  }
  return pop;
}

FirstStageResult run_first_stage(const Population& population, const SearchContext& context,
                                 const EngineConfig& config) {
  if (population.members.empty()) throw std::invalid_argument("first stage: empty population");
  const auto& nets = *context.supernets;
  FirstStageResult out;
  for (std::size_t m = 0; m < nets.size(); ++m) {
    auto& metrics = out.metrics.emplace_back();
    std::vector<ObjectivePoint> points;
    for (std::size_t i = 0; i < population.members.size(); ++i) {
      const auto& g = population.members[i].backbones.at(m);
      UnimodalMetrics u;
      u.modality = nets[m].modality();
      u.acc = evaluate_subnet(nets[m], g, context.data->val, m);
      u.test_acc = evaluate_subnet(nets[m], g, context.data->test, m);
      u.cost = backbone_cost(g, context.luts.front());
      points.push_back({{u.acc, u.cost.latency_ms, u.cost.energy_mj}, static_cast<std::int64_t>(i)});
      metrics.push_back(std::move(u));
    }
    auto ordered = eval_score(score(points, kSearchDirections));
    auto& selected = out.selected.emplace_back();
    for (const auto& c : select_fraction(ordered, config.select_fraction)) selected.push_back(static_cast<int>(c.point.id));
    out.ordered.push_back(std::move(ordered));
  }
  out.evaluations = static_cast<int>(population.members.size());
  return out;
}

std::vector<PairedCandidate> pair_candidates(const Population& population, const FirstStageResult& first,
                                             const EngineConfig& config, Rng& rng) {
  auto selected = first.selected;
  if (config.random_pairing) {
    for (std::size_t m = 1; m < selected.size(); ++m) std::shuffle(selected[m].begin(), selected[m].end(), rng);
  }
  std::vector<PairedCandidate> out;
  for (std::size_t i = 0; i < selected.front().size(); ++i) {
    PairedCandidate c;
    for (std::size_t m = 0; m < selected.size(); ++m) {
      const auto member = static_cast<std::size_t>(selected[m][i]);
      c.genome.backbones.push_back(population.members[member].backbones[m]);
      c.unimodal.push_back(first.metrics[m][member]);
    }
    c.genome.macro = population.members[static_cast<std::size_t>(selected[0][i])].macro;
    out.push_back(std::move(c));
  }
  return out;
}

FusionOutcome search_fusion(const MultimodalGenome& genome, const SearchContext& context, const EngineConfig& config,
                            const LossExponents& exponents, std::uint64_t seed, FusionRequest request) {
  const auto nets = context.supernet_ptrs();
  const auto& data = *context.data;
  const FeatureSet train = compute_features(nets, genome.backbones, data.train);
  const FeatureSet val = compute_features(nets, genome.backbones, data.val);
  const FeatureSet test = compute_features(nets, genome.backbones, data.test);

  HypernetConfig hc{genome.macro, feature_channels(nets, genome.backbones), config.fusion_channels,
                    data.train.num_classes, config.gate_bias};
  FusionHypernet hypernet(hc, seed);
  FusionTrainConfig fc = config.fusion;
  fc.seed = derive_seed(seed, 1);

  FusionOutcome out;
  if (request.mode == FusionMode::Dense) {
    hypernet.make_dense();
    fc.search_inputs = false;
    fc.search_ops = false;
    out.search_trace = train_fusion(hypernet, train, data.train.labels, context.luts.front(), exponents, fc);
    out.graph.config = hc;
    out.val_acc = hypernet_accuracy(hypernet, val, data.val.labels);
    out.test_acc = hypernet_accuracy(hypernet, test, data.test.labels);
    return out;
  }
  if (request.mode == FusionMode::Pinned) {
    hypernet.pin_operator(request.pinned);
    fc.search_ops = false;
  }
  out.search_trace = train_fusion(hypernet, train, data.train.labels, context.luts.front(), exponents, fc);
  out.graph = discretize(hypernet);
  finetune_graph(out.graph, train, data.train.labels, config.finetune_epochs, fc);
  out.val_acc = graph_accuracy(out.graph, val, data.val.labels);
  out.test_acc = graph_accuracy(out.graph, test, data.test.labels);
  return out;
}

std::vector<RunRecord> run_second_stage(const std::vector<PairedCandidate>& candidates, const SearchContext& context,
                                        const EngineConfig& config, const LossExponents& exponents, int generation,
                                        std::int64_t first_id) {
  if (candidates.empty()) throw std::invalid_argument("second stage: empty selection");
  std::vector<RunRecord> out;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    RunRecord r;
    r.generation = generation;
    r.id = first_id + static_cast<std::int64_t>(i);
    r.seed = derive_seed(config.seed, static_cast<std::uint64_t>(r.id));
    r.genome = candidates[i].genome;
    r.unimodal = candidates[i].unimodal;
    FusionOutcome outcome = search_fusion(r.genome, context, config, exponents, r.seed);
    r.acc = outcome.val_acc;
    r.test_acc = outcome.test_acc;
    const auto ops = outcome.graph.node_ops();
    r.device_costs = candidate_cost(r.genome, ops, context.luts);
    r.cost = r.device_costs.front();
    for (const auto& lut : context.luts) r.devices.push_back(lut.device);
    r.topology = strip_parameters(outcome.graph);
    r.graph = std::make_shared<const FusionGraph>(std::move(outcome.graph));
    out.push_back(std::move(r));
  }
  return out;
}

Population next_generation(const std::vector<RunRecord>& records, const Population& population,
                           const EngineConfig& config, const SearchSpace& space, Rng& rng) {
  if (records.empty()) throw std::invalid_argument("next_generation: no scored candidates");
  std::map<std::int64_t, const RunRecord*> by_id;
  for (const auto& r : records) by_id[r.id] = &r;
  std::vector<MultimodalGenome> elites;
  for (const auto& c : select_fraction(ordered_records(records), config.elite_fraction)) {
    elites.push_back(by_id.at(c.point.id)->genome);
  }
  const auto target = population.members.size();
  Population next;
  next.generation = population.generation + 1;
  for (const auto& e : elites) {
    if (next.members.size() < target) next.members.push_back(e);
  }
  std::uniform_int_distribution<std::size_t> pick(0, elites.size() - 1);
  while (next.members.size() < target) {
    const auto& a = elites[pick(rng)];
    const auto& b = elites[pick(rng)];
    MultimodalGenome first, second;
    for (std::size_t m = 0; m < a.backbones.size(); ++m) {
      auto [x, y] = crossover(a.backbones[m], b.backbones[m], config.p_cross, rng);
      first.backbones.push_back(mutate(x, space, config.p_mut, rng));
      second.backbones.push_back(mutate(y, space, config.p_mut, rng));
    }
    first.macro = mutate(a.macro, config.macro_bounds, config.p_mut, rng);
    second.macro = mutate(b.macro, config.macro_bounds, config.p_mut, rng);
    next.members.push_back(std::move(first));
    if (next.members.size() < target) next.members.push_back(std::move(second));
  }
  return next;
}

std::vector<RunRecord> pareto_front(const std::vector<RunRecord>& records) {
  std::vector<RunRecord> front;
  if (records.empty()) return front;
  std::vector<ObjectivePoint> points;
  for (const auto& r : records) points.push_back(r.objectives());
  const auto fronts = non_dominated_sort(points, kSearchDirections);
  std::vector<std::int64_t> ids = fronts.front();
  std::sort(ids.begin(), ids.end());
  for (std::int64_t id : ids) {
    for (const auto& r : records) {
      if (r.id == id) {
        front.push_back(r);
        break;
      }
    }
  }
  return front;
}

RunResult run(const EngineConfig& config, const SearchContext& context, const RecordSink& sink) {
  config.validate();
  context.validate();
  RunResult result;
  if (config.generations == 0) return result;
  Rng rng(config.seed);
  Population population = initial_population(config, context, rng);
  std::int64_t next_id = 0;
  for (int g = 0; g < config.generations; ++g) {
    const FirstStageResult first = run_first_stage(population, context, config);
    result.first_stage_evaluations += first.evaluations;
    const auto pairs = pair_candidates(population, first, config, rng);
    auto records = run_second_stage(pairs, context, config, config.exponents, g, next_id);
    next_id += static_cast<std::int64_t>(records.size());
    result.second_stage_trainings += static_cast<int>(records.size());
    for (const auto& r : records) {
      if (sink) sink(r);
    }
    if (g + 1 < config.generations) population = next_generation(records, population, config, context.space(), rng);
    result.records.insert(result.records.end(), records.begin(), records.end());
  }
  result.front = pareto_front(result.records);
  return result;
}

std::string_view to_string(AblationMode mode) {
  switch (mode) {
    case AblationMode::FixedBackboneFixedFusion: return "FB+FF";
    case AblationMode::FixedBackboneSearchFusion: return "FB+SF";
    case AblationMode::SearchBoth: return "SB+SF";
    case AblationMode::SearchBothHardware: return "SB+SF+HW";
  }
  return "?";
}

AblationMode ablation_mode_from_string(std::string_view name) {
  for (auto m : {AblationMode::FixedBackboneFixedFusion, AblationMode::FixedBackboneSearchFusion,
                 AblationMode::SearchBoth, AblationMode::SearchBothHardware}) {
    if (to_string(m) == name) return m;
  }
  throw std::invalid_argument("unknown ablation mode '" + std::string(name) +
                              "' (expected FB+FF, FB+SF, SB+SF or SB+SF+HW)");
}

std::vector<AblationRow> ablation_run(AblationMode mode, const EngineConfig& config, const SearchContext& context) {
  config.validate();
  context.validate();
  const std::string name(to_string(mode));
  const auto& lut = context.luts.front();
  switch (mode) {
    case AblationMode::FixedBackboneFixedFusion: {
      const MultimodalGenome g = max_genome(context, config.ablation_macro);
      const auto outcome = search_fusion(g, context, config, config.exponents, derive_seed(config.seed, 0),
                                         {FusionMode::Dense, FusionOp::Sum});
      std::vector<FusionOp> ops;
      for (int n = 0; n < g.macro.cells * g.macro.nodes; ++n) ops.insert(ops.end(), kAllFusionOps.begin(), kAllFusionOps.end());
      return {{name, "dense", outcome.val_acc, outcome.test_acc, candidate_cost(g, ops, lut), ops}};
    }
    case AblationMode::FixedBackboneSearchFusion: {
      const MultimodalGenome g = max_genome(context, config.ablation_macro);
      const auto outcome = search_fusion(g, context, config, config.exponents, derive_seed(config.seed, 0));
      const auto ops = outcome.graph.node_ops();
      return {{name, "searched", outcome.val_acc, outcome.test_acc, candidate_cost(g, ops, lut), ops}};
    }
    case AblationMode::SearchBoth: {
      EngineConfig c = config;
      c.exponents = {config.exponents.a, 0.0, 0.0};
      return front_rows(mode, run(c, context));
    }
    case AblationMode::SearchBothHardware: {
      EngineConfig c = config;
      if (c.exponents.b == 0.0 && c.exponents.c == 0.0) c.exponents.b = c.exponents.c = 1.0;
      return front_rows(mode, run(c, context));
    }
  }
  throw std::invalid_argument("invalid ablation mode");
}

std::vector<AblationRow> single_op_sweep(const EngineConfig& config, const SearchContext& context) {
  config.validate();
  context.validate();
  const MultimodalGenome g = max_genome(context, config.ablation_macro);
  const std::uint64_t seed = derive_seed(config.seed, 0);
  const auto& lut = context.luts.front();
  std::vector<AblationRow> rows;
  for (FusionOp op : kAllFusionOps) {
    const auto outcome = search_fusion(g, context, config, config.exponents, seed, {FusionMode::Pinned, op});
    const auto ops = outcome.graph.node_ops();
    rows.push_back({"single-op", std::string(to_string(op)), outcome.val_acc, outcome.test_acc,
                    candidate_cost(g, ops, lut), ops});
  }
  const auto outcome = search_fusion(g, context, config, config.exponents, seed);
  const auto ops = outcome.graph.node_ops();
  rows.push_back({"single-op", "searchable", outcome.val_acc, outcome.test_acc, candidate_cost(g, ops, lut), ops});
  return rows;
}

}  // namespace hnas
