#include "hnas/engine.hpp"
#include "hnas/exports.hpp"
#include "moo_oracle.hpp"

#include <doctest.h>

#include <algorithm>
#include <set>

using namespace hnas;

namespace {

struct Fixture {
  DatasetSplits data = generate_synthetic({120, 60, 60, 8, 1, 0.3}, 1);
  std::vector<ElasticSupernet> nets;
  SearchContext ctx;
  EngineConfig cfg;

  Fixture() {
    SupernetConfig sc;
    sc.base_channels = 2;
    nets.emplace_back("mod0", sc, 1);
    nets.emplace_back("mod1", sc, 2);
    ctx.supernets = &nets;
    ctx.luts = {synth_device(1, device_profile("slow-edge"), sc.space)};
    ctx.data = &data;
    cfg.seed = 5;
    cfg.generations = 2;
    cfg.population = 8;
    cfg.fusion.epochs = 1;
    cfg.finetune_epochs = 0;
    cfg.fusion_channels = 2;
  }
};

std::vector<std::string> log_lines(const std::vector<RunRecord>& records) {
  std::vector<std::string> out;
  for (const auto& r : records) out.push_back(record_to_json_line(r));
  return out;
}

}  // namespace

TEST_CASE("initial population") {
  Fixture f;
  Rng rng(1);
  const auto pop = initial_population(f.cfg, f.ctx, rng);
  CHECK(pop.members.size() == 8);
  for (const auto& m : pop.members) {
    REQUIRE(m.backbones.size() == 2);
    CHECK(m.backbones[0].modality == "mod0");
    CHECK(m.backbones[1].modality == "mod1");
    validate(m.backbones[0], f.ctx.space());
    validate(m.macro, f.cfg.macro_bounds);
  }
}

TEST_CASE("first stage") {
  Fixture f;
  Rng rng(2);
  SUBCASE("a population of one is selected") {
    f.cfg.population = 1;
    const auto pop = initial_population(f.cfg, f.ctx, rng);
    const auto first = run_first_stage(pop, f.ctx, f.cfg);
    CHECK(first.selected[0] == std::vector<int>{0});
    CHECK(first.selected[1] == std::vector<int>{0});
  }
  SUBCASE("top quartile in eval order") {
    f.cfg.population = 16;
    const auto pop = initial_population(f.cfg, f.ctx, rng);
    const auto first = run_first_stage(pop, f.ctx, f.cfg);
    CHECK(first.evaluations == 16);
    for (std::size_t m = 0; m < 2; ++m) {
      REQUIRE(first.selected[m].size() == 4);
      for (std::size_t i = 0; i < 4; ++i) CHECK(first.selected[m][i] == first.ordered[m][i].point.id);
      for (std::size_t i = 0; i < 16; ++i) {
        const auto& u = first.metrics[m][i];
        CHECK(u.cost == backbone_cost(pop.members[i].backbones[m], f.ctx.luts[0]));
        CHECK(u.acc == evaluate_subnet(f.nets[m], pop.members[i].backbones[m], f.data.val, m));
      }
    }
  }
}

TEST_CASE("pairing") {
  Fixture f;
  Rng rng(3);
  f.cfg.population = 16;
  const auto pop = initial_population(f.cfg, f.ctx, rng);
  const auto first = run_first_stage(pop, f.ctx, f.cfg);
  const auto pairs = pair_candidates(pop, first, f.cfg, rng);
  REQUIRE(pairs.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto i0 = static_cast<std::size_t>(first.selected[0][i]);
    const auto i1 = static_cast<std::size_t>(first.selected[1][i]);
    CHECK(pairs[i].genome.backbones[0] == pop.members[i0].backbones[0]);
    CHECK(pairs[i].genome.backbones[1] == pop.members[i1].backbones[1]);
    CHECK(pairs[i].genome.macro == pop.members[i0].macro);
  }
  f.cfg.random_pairing = true;
  Rng r(4);
  const auto shuffled = pair_candidates(pop, first, f.cfg, r);
  std::multiset<std::vector<int>> a, b;
  for (const auto& p : pairs) a.insert(encode(p.genome.backbones[1]));
  for (const auto& p : shuffled) b.insert(encode(p.genome.backbones[1]));
  CHECK(a == b);
}

TEST_CASE("second stage") {
  Fixture f;
  Rng rng(5);
  f.cfg.population = 8;
  const auto pop = initial_population(f.cfg, f.ctx, rng);
  const auto first = run_first_stage(pop, f.ctx, f.cfg);
  const auto pairs = pair_candidates(pop, first, f.cfg, rng);

  SUBCASE("untrained gamma ties go to Sum") {
    f.cfg.fusion.epochs = 0;
    const auto records = run_second_stage(pairs, f.ctx, f.cfg, {1, 1, 1}, 0, 10);
    REQUIRE(records.size() == pairs.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& r = records[i];
      CHECK(r.id == static_cast<std::int64_t>(10 + i));
      Cost expect;
      for (const auto& b : r.genome.backbones) expect += backbone_cost(b, f.ctx.luts[0]);
      for (int n = 0; n < r.genome.macro.cells * r.genome.macro.nodes; ++n) expect += f.ctx.luts[0].fusion(FusionOp::Sum);
      CHECK(r.cost.latency_ms == doctest::Approx(expect.latency_ms).epsilon(1e-14));
      CHECK(r.cost.energy_mj == doctest::Approx(expect.energy_mj).epsilon(1e-14));
      REQUIRE(r.graph != nullptr);
      for (FusionOp op : r.graph->node_ops()) CHECK(op == FusionOp::Sum);
    }
  }
  SUBCASE("task-only exponents give the same search under any LUT") {
    SearchContext other = f.ctx;
    other.luts = {synth_device(77, device_profile("fast-gpu"), f.ctx.space())};
    const auto a = run_second_stage(pairs, f.ctx, f.cfg, {1, 0, 0}, 0, 0);
    const auto b = run_second_stage(pairs, other, f.cfg, {1, 0, 0}, 0, 0);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].acc == b[i].acc);
      CHECK(a[i].graph->node_ops() == b[i].graph->node_ops());
    }
  }
}

TEST_CASE("next generation") {
  Fixture f;
  Rng rng(6);
  const auto pop = initial_population(f.cfg, f.ctx, rng);
  const auto first = run_first_stage(pop, f.ctx, f.cfg);
  const auto pairs = pair_candidates(pop, first, f.cfg, rng);
  const auto records = run_second_stage(pairs, f.ctx, f.cfg, f.cfg.exponents, 0, 0);

  Rng a(9), b(9);
  const auto next = next_generation(records, pop, f.cfg, f.ctx.space(), a);
  CHECK(next.members.size() == pop.members.size());
  CHECK(next.generation == pop.generation + 1);
  CHECK(next.members == next_generation(records, pop, f.cfg, f.ctx.space(), b).members);

  f.cfg.p_mut = 0.0;
  f.cfg.p_cross = 0.0;
  Rng c(10);
  const auto frozen = next_generation(records, pop, f.cfg, f.ctx.space(), c);
  std::vector<ObjectivePoint> pts;
  for (const auto& r : records) pts.push_back(r.objectives());
  const auto elites = select_fraction(eval_score(score(pts, kSearchDirections)), f.cfg.elite_fraction);
  std::set<std::vector<int>> elite_genomes;
  for (const auto& e : elites) {
    const auto& r = *std::find_if(records.begin(), records.end(), [&](const auto& x) { return x.id == e.point.id; });
    for (const auto& bb : r.genome.backbones) elite_genomes.insert(encode(bb));
  }
  for (const auto& m : frozen.members)
    for (const auto& bb : m.backbones) CHECK(elite_genomes.count(encode(bb)) == 1);
}

TEST_CASE("full run") {
  Fixture f;
  SUBCASE("zero generations") {
    f.cfg.generations = 0;
    const auto r = run(f.cfg, f.ctx);
    CHECK(r.front.empty());
    CHECK(r.records.empty());
  }
  SUBCASE("front, budget and determinism") {
    int streamed = 0;
    const auto r = run(f.cfg, f.ctx, [&](const RunRecord&) { ++streamed; });
    CHECK(streamed == static_cast<int>(r.records.size()));
    CHECK(r.first_stage_evaluations == 2 * 8);
    CHECK(r.second_stage_trainings == 2 * 2);
    CHECK(r.records.size() == 4);
    std::set<std::int64_t> ids;
    for (const auto& rec : r.records) ids.insert(rec.id);
    CHECK(ids.size() == r.records.size());

    std::vector<ObjectivePoint> pts;
    for (const auto& rec : r.records) pts.push_back(rec.objectives());
    const auto oracle = hnas::testing::oracle_fronts(pts, kSearchDirections);
    std::vector<std::int64_t> front_ids;
    for (const auto& rec : r.front) front_ids.push_back(rec.id);
    CHECK(front_ids == oracle[0]);

    // The cumulative front only ever improves.
    for (int g = 0; g + 1 < 2; ++g) {
      std::vector<RunRecord> early, late;
      for (const auto& rec : r.records) {
        if (rec.generation <= g) early.push_back(rec);
        late.push_back(rec);
      }
      for (const auto& e : pareto_front(early)) {
        bool covered = false;
        for (const auto& l : pareto_front(late))
          covered = covered || l.id == e.id ||
                    hnas::testing::oracle_dominates(l.objectives(), e.objectives(), kSearchDirections);
        CHECK(covered);
      }
    }
    CHECK(log_lines(run(f.cfg, f.ctx).records) == log_lines(r.records));
  }
}

TEST_CASE("ablations") {
  Fixture f;
  f.cfg.generations = 1;
  f.cfg.population = 4;
  SUBCASE("FB+FF runs no evolution and counts every operator") {
    const auto rows = ablation_run(AblationMode::FixedBackboneFixedFusion, f.cfg, f.ctx);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].mode == "FB+FF");
    CHECK(rows[0].ops.size() == static_cast<std::size_t>(6 * f.cfg.ablation_macro.cells * f.cfg.ablation_macro.nodes));
  }
  SUBCASE("FB+SF") {
    const auto rows = ablation_run(AblationMode::FixedBackboneSearchFusion, f.cfg, f.ctx);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].ops.size() == 2);
  }
  SUBCASE("SB modes report fronts") {
    CHECK_FALSE(ablation_run(AblationMode::SearchBoth, f.cfg, f.ctx).empty());
    CHECK_FALSE(ablation_run(AblationMode::SearchBothHardware, f.cfg, f.ctx).empty());
  }
  SUBCASE("single-operator sweep has seven rows") {
    const auto rows = single_op_sweep(f.cfg, f.ctx);
    REQUIRE(rows.size() == 7);
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(rows[i].label == to_string(kAllFusionOps[i]));
      for (FusionOp op : rows[i].ops) CHECK(op == kAllFusionOps[i]);
    }
    CHECK(rows[6].label == "searchable");
  }
  SUBCASE("mode names") {
    for (auto m : {AblationMode::FixedBackboneFixedFusion, AblationMode::FixedBackboneSearchFusion,
                   AblationMode::SearchBoth, AblationMode::SearchBothHardware})
      CHECK(ablation_mode_from_string(to_string(m)) == m);
    CHECK_THROWS_AS(ablation_mode_from_string("FF"), std::invalid_argument);
  }
}

TEST_CASE("config and context validation") {
  Fixture f;
  EngineConfig bad = f.cfg;
  bad.p_mut = 1.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = f.cfg;
  bad.select_fraction = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = f.cfg;
  bad.fusion.input_budget = -1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  SearchContext ctx = f.ctx;
  ctx.luts.clear();
  CHECK_THROWS(ctx.validate());
  CHECK(derive_seed(1, 2) != derive_seed(1, 3));
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));
}
