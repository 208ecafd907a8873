#include "grad_cases.hpp"
#include "hnas/hwcost.hpp"
#include "support.hpp"

#include <doctest.h>

#include <filesystem>

using namespace hnas;
using namespace hnas::testing;

namespace {

DeviceLUT flat_lut(Cost layer, Cost op) {
  SearchSpace space;
  DeviceLUT lut;
  lut.device = "flat";
  for (int j = 0; j < space.num_blocks; ++j)
    for (int l = 0; l < space.max_depth; ++l)
      for (int k : space.kernels)
        for (int e : space.expands) lut.layer_costs[{j, l, k, e}] = layer;
  for (FusionOp f : kAllFusionOps) lut.fusion_costs[f] = op;
  return lut;
}

}  // namespace

TEST_CASE("backbone cost") {
  SearchSpace space;
  const DeviceLUT lut = flat_lut({1, 2}, {1, 1});
  CHECK(backbone_cost(min_subnet(space), lut) == Cost{6, 12});
  CHECK(backbone_cost(BackboneGenome{}, lut) == Cost{0, 0});
  DeviceLUT with_overhead = lut;
  with_overhead.stem = {0.5, 0.25};
  with_overhead.head = {0.25, 0.5};
  CHECK(backbone_cost(BackboneGenome{}, with_overhead) == Cost{0.75, 0.75});

  const DeviceLUT synth = small_lut(4);
  Rng rng(1);
  for (int t = 0; t < 200; ++t) {
    auto g = sample_uniform(space, rng);
    const Cost before = backbone_cost(g, synth);
    auto& b = g.blocks[static_cast<std::size_t>(t % 3)];
    if (b.depth < 4) {
      ++b.depth;
      CHECK(backbone_cost(g, synth).latency_ms > before.latency_ms);
      CHECK(backbone_cost(g, synth).energy_mj > before.energy_mj);
    }
  }
  DeviceLUT missing = lut;
  missing.layer_costs.erase({1, 0, 3, 3});
  try {
    backbone_cost(min_subnet(space), missing);
    FAIL("expected out_of_range");
  } catch (const std::out_of_range& e) {
    CHECK(std::string(e.what()).find(to_string(LayerKey{1, 0, 3, 3})) != std::string::npos);
  }
}

TEST_CASE("relaxed fusion cost") {
  DeviceLUT lut = flat_lut({1, 1}, {1, 1});
  for (int i = 0; i < 6; ++i) lut.fusion_costs[kAllFusionOps[static_cast<std::size_t>(i)]] = {i + 1.0, 2.0 * (i + 1)};
  const std::vector<Tensor> zero{Tensor::zeros({6})};
  CHECK(fusion_relaxed_cost(zero, {1, 1}, lut, Metric::Latency).item() == doctest::Approx(3.5).epsilon(1e-15));
  CHECK(fusion_relaxed_cost(zero, {1, 1}, lut, Metric::Energy).item() == doctest::Approx(7.0).epsilon(1e-15));

  std::vector<Tensor> onehot{Tensor::zeros({6})};
  onehot[0].mutable_data() << -400, -400, -400, 400, -400, -400;
  CHECK(fusion_relaxed_cost(onehot, {1, 1}, lut, Metric::Latency).item() == 4.0);

  Rng rng(2);
  const DeviceLUT synth = small_lut(5);
  for (int t = 0; t < 20; ++t) {
    std::vector<Tensor> gammas;
    double expect = 0.0;
    for (int n = 0; n < 6; ++n) {
      gammas.push_back(random_tensor({6}, rng, -3, 3, false));
      const Array e = gammas.back().data().exp();
      for (FusionOp f : kAllFusionOps) expect += e(static_cast<Index>(f)) / e.sum() * synth.fusion(f).latency_ms;
    }
    CHECK(fusion_relaxed_cost(gammas, {2, 3}, synth, Metric::Latency).item() == doctest::Approx(expect).epsilon(1e-13));
  }
  CHECK_THROWS_AS(fusion_relaxed_cost(zero, {2, 1}, lut, Metric::Latency), ShapeError);
  for (const auto& c : hardware_grad_cases()) {
    if (c.name == "fusion loss") continue;
    for (int i = 0; i < 10; ++i) {
      const auto inst = c.make(rng);
      CHECK(grad_check(inst.fn, inst.inputs, rng()).max_rel < 1e-4);
    }
  }
}

TEST_CASE("candidate cost") {
  SearchSpace space;
  const DeviceLUT lut = flat_lut({1, 2}, {1, 1});
  BackboneGenome small = min_subnet(space, "b");
  small.blocks.pop_back();
  const MultimodalGenome mm{{min_subnet(space, "a"), small}, {1, 2}};
  const std::vector<FusionOp> ops{FusionOp::Sum, FusionOp::Sum};
  CHECK(candidate_cost(mm, ops, lut) == Cost{12, 22});
  CHECK(candidate_cost(mm, {}, lut) == Cost{10, 20});
  const MultimodalGenome swapped{{small, min_subnet(space, "a")}, {1, 2}};
  CHECK(candidate_cost(swapped, ops, lut) == candidate_cost(mm, ops, lut));

  const std::vector<DeviceLUT> luts{lut, small_lut(1)};
  const auto both = candidate_cost(mm, ops, luts);
  REQUIRE(both.size() == 2);
  CHECK(both[0] == Cost{12, 22});
}

TEST_CASE("one-hot relaxed cost equals the discrete fusion term") {
  Rng rng(3);
  const DeviceLUT lut = small_lut(6);
  for (int t = 0; t < 50; ++t) {
    const FusionMacroConfig macro{pick(rng, 1, 2), pick(rng, 1, 3)};
    std::vector<Tensor> gammas;
    std::vector<FusionOp> ops;
    for (int n = 0; n < macro.cells * macro.nodes; ++n) {
      const FusionOp op = kAllFusionOps[static_cast<std::size_t>(pick(rng, 0, 5))];
      ops.push_back(op);
      Tensor g = Tensor::zeros({6});
      for (Index f = 0; f < 6; ++f) g.mutable_data()(f) = f == static_cast<Index>(op) ? 400 : -400;
      gammas.push_back(g);
    }
    const Cost discrete = fusion_ops_cost(ops, lut);
    CHECK(fusion_relaxed_cost(gammas, macro, lut, Metric::Latency).item() == discrete.latency_ms);
    CHECK(fusion_relaxed_cost(gammas, macro, lut, Metric::Energy).item() == discrete.energy_mj);
  }
}

TEST_CASE("synthetic devices") {
  SearchSpace space;
  const DeviceLUT a = synth_device(7, device_profile("slow-edge"), space);
  const DeviceLUT b = synth_device(7, device_profile("slow-edge"), space);
  CHECK(lut_to_json(a) == lut_to_json(b));
  validate_lut(a, space);

  for (int j = 0; j < space.num_blocks; ++j)
    for (int l = 0; l < space.max_depth; ++l) {
      CHECK(a.layer({j, l, 7, 6}).latency_ms > a.layer({j, l, 3, 3}).latency_ms);
      CHECK(a.layer({j, l, 7, 6}).energy_mj > a.layer({j, l, 3, 3}).energy_mj);
      for (int k : {3, 5})
        for (int e : space.expands) CHECK(a.layer({j, l, k + 2, e}).latency_ms > a.layer({j, l, k, e}).latency_ms);
    }

  const DeviceLUT fast = synth_device(7, device_profile("fast-gpu"), space);
  CHECK(lut_to_json(fast) != lut_to_json(a));
  for (const auto& [key, cost] : fast.layer_costs) {
    CHECK(cost.latency_ms < a.layer(key).latency_ms);
    CHECK(cost.energy_mj > a.layer(key).energy_mj);
  }
  for (const auto& [op, cost] : fast.fusion_costs) CHECK(cost.latency_ms < a.fusion(op).latency_ms);
  CHECK_THROWS_AS(device_profile("tpu"), std::invalid_argument);
  CHECK(device_profile_names().size() == 2);
}

TEST_CASE("LUT files") {
  SearchSpace space;
  const DeviceLUT lut = synth_device(3, device_profile("fast-gpu"), space);
  const auto path = std::filesystem::temp_directory_path() / "hnas_test_lut.json";
  save_lut(lut, path);
  CHECK(load_lut(path) == lut);
  CHECK(lut_from_json(lut_to_json(lut)) == lut);

  DeviceLUT partial = lut;
  partial.layer_costs.erase(partial.layer_costs.begin());
  CHECK_THROWS(lut_from_json(lut_to_json(partial)));
  DeviceLUT no_op = lut;
  no_op.fusion_costs.erase(FusionOp::Sum);
  CHECK_THROWS(lut_from_json(lut_to_json(no_op)));
  DeviceLUT negative = lut;
  negative.fusion_costs[FusionOp::Sum].latency_ms = -1.0;
  CHECK_THROWS(validate_lut(negative));
  CHECK_THROWS(lut_from_json("{\"device\": 3}"));
  CHECK_THROWS(lut_from_json("not json"));
  CHECK_THROWS(save_lut(lut, "/proc/hnas/forbidden/lut.json"));
  std::filesystem::remove(path);
}
