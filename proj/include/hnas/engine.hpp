#pragma once

// Two-tier search: evolutionary backbone selection (first stage) feeding
// differentiable fusion search on the selected pairs (second stage), with
// elite multimodal candidates seeding the next generation.

#include "hnas/dataset.hpp"
#include "hnas/fusion.hpp"
#include "hnas/hwcost.hpp"
#include "hnas/moo.hpp"
#include "hnas/searchspace.hpp"
#include "hnas/supernet.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hnas {

struct EngineConfig {
  std::uint64_t seed = 0;
  int generations = 30;
  int population = 128;
  double p_mut = 0.4;
  double p_cross = 0.8;
  double select_fraction = 0.25;
  double elite_fraction = 0.5;
  LossExponents exponents;
  FusionTrainConfig fusion;
  int finetune_epochs = 5;
  int fusion_channels = 8;
  double gate_bias = 1.6;
  MacroBounds macro_bounds;
  FusionMacroConfig ablation_macro{1, 2};
  bool random_pairing = false;

  void validate() const;
};

// Frozen supernets (one per modality, in dataset modality order), device
// LUTs (the first drives objectives and the hardware loss) and data splits.
struct SearchContext {
  const std::vector<ElasticSupernet>* supernets = nullptr;
  std::vector<DeviceLUT> luts;
  const DatasetSplits* data = nullptr;

  const SearchSpace& space() const;
  std::vector<const ElasticSupernet*> supernet_ptrs() const;
  void validate() const;
};

struct Population {
  int generation = 0;
  std::vector<MultimodalGenome> members;
};

Population initial_population(const EngineConfig& config, const SearchContext& context, Rng& rng);

struct UnimodalMetrics {
  std::string modality;
  double acc = 0.0;  // validation, the selection objective
  double test_acc = 0.0;
  Cost cost;
};

struct FirstStageResult {
  // [modality][member]
  std::vector<std::vector<UnimodalMetrics>> metrics;
  // [modality]: eval_score order over members; point ids are member indices.
  std::vector<std::vector<ScoredCandidate>> ordered;
  // [modality]: member indices of the selected top fraction, best first.
  std::vector<std::vector<int>> selected;
  int evaluations = 0;
};

FirstStageResult run_first_stage(const Population& population, const SearchContext& context,
                                 const EngineConfig& config);

struct PairedCandidate {
  MultimodalGenome genome;
  std::vector<UnimodalMetrics> unimodal;
};

// Rank-aligned (or shuffled when random_pairing) pairing of the per-modality
// selections; the macro configuration comes from the modality-0 member.
std::vector<PairedCandidate> pair_candidates(const Population& population, const FirstStageResult& first,
                                             const EngineConfig& config, Rng& rng);

struct RunRecord {
  int generation = 0;
  std::int64_t id = 0;
  std::uint64_t seed = 0;
  MultimodalGenome genome;
  std::vector<UnimodalMetrics> unimodal;
  double acc = 0.0;  // validation, the search objective
  double test_acc = 0.0;
  Cost cost;                       // on the primary LUT
  std::vector<Cost> device_costs;  // one per LUT
  std::vector<std::string> devices;
  std::shared_ptr<const FusionGraph> graph;  // topology and weights; may be null when loaded from a log
  std::vector<GraphCell> topology;           // inputs and ops, no parameters

  ObjectivePoint objectives() const { return {{acc, cost.latency_ms, cost.energy_mj}, id}; }
};

struct FusionOutcome {
  FusionGraph graph;
  double val_acc = 0.0;
  double test_acc = 0.0;
  TrainTrace search_trace;
};

enum class FusionMode {
  Search,  // gates and operators searched
  Dense,   // every input gated Identity, uniform operator mix; no discretization
  Pinned,  // operators pinned to one kind, inputs searched
};

struct FusionRequest {
  FusionMode mode = FusionMode::Search;
  FusionOp pinned = FusionOp::Sum;
};

// Searches, discretizes, fine-tunes and evaluates one fusion network on top
// of fixed backbones. In Dense mode the relaxed hypernet itself is evaluated
// and `graph` carries no cells.
FusionOutcome search_fusion(const MultimodalGenome& genome, const SearchContext& context, const EngineConfig& config,
                            const LossExponents& exponents, std::uint64_t seed, FusionRequest request = {});

std::vector<RunRecord> run_second_stage(const std::vector<PairedCandidate>& candidates, const SearchContext& context,
                                        const EngineConfig& config, const LossExponents& exponents, int generation,
                                        std::int64_t first_id);

// Elites (top elite_fraction by eval_score) are carried unchanged; the rest
// is refilled with mutated crossover children of uniformly drawn elites.
Population next_generation(const std::vector<RunRecord>& records, const Population& population,
                           const EngineConfig& config, const SearchSpace& space, Rng& rng);

struct RunResult {
  std::vector<RunRecord> front;  // rank 0 over every record, ordered by id
  std::vector<RunRecord> records;
  int first_stage_evaluations = 0;
  int second_stage_trainings = 0;
};

using RecordSink = std::function<void(const RunRecord&)>;

// `sink` receives each record as soon as its generation completes.
RunResult run(const EngineConfig& config, const SearchContext& context, const RecordSink& sink = {});

// Rank-0 members of the given records, ordered by id.
std::vector<RunRecord> pareto_front(const std::vector<RunRecord>& records);

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

enum class AblationMode { FixedBackboneFixedFusion, FixedBackboneSearchFusion, SearchBoth, SearchBothHardware };

std::string_view to_string(AblationMode mode);
AblationMode ablation_mode_from_string(std::string_view name);  // "FB+FF", "FB+SF", "SB+SF", "SB+SF+HW"

struct AblationRow {
  std::string mode;
  std::string label;
  double acc = 0.0;
  double test_acc = 0.0;
  Cost cost;
  std::vector<FusionOp> ops;
};

// FB modes use max subnets and the ablation macro; SB modes run the full
// search (exponents (1,0,0) or the configured ones) and report their front.
std::vector<AblationRow> ablation_run(AblationMode mode, const EngineConfig& config, const SearchContext& context);

// One row per pinned operator plus one searchable row, on max subnets with
// the ablation macro held fixed.
std::vector<AblationRow> single_op_sweep(const EngineConfig& config, const SearchContext& context);

}  // namespace hnas
