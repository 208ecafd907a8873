#include "hnas/dataset.hpp"
#include "hnas/supernet.hpp"
#include "reference.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

using namespace hnas;
using hnas::testing::bit_equal;
using hnas::testing::reference_forward;

namespace {

SyntheticTaskSpec small_task(int train = 400) {
  SyntheticTaskSpec s;
  s.train = train;
  s.val = 200;
  s.test = 200;
  return s;
}

Tensor first_rows(const MultimodalDataset& d, std::size_t modality, Index n) {
  std::vector<Index> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), Index{0});
  return d.batch(modality, rows);
}

double checksum(const ElasticSupernet& net) {
  double s = 0.0;
  for (const auto& p : net.parameters()) s += p.data().sum() + p.data().abs().sum();
  return s;
}

// The head starts at zero, which hides every other weight from the logits.
void randomize_head(ElasticSupernet& net, Rng& rng) {
  for (auto& [name, p] : net.named_parameters())
    if (name == "head/weight") p.mutable_data() = hnas::testing::random_tensor(p.shape(), rng, -1, 1, false).data();
}

}  // namespace

TEST_CASE("feature shapes follow the last active expand of each block") {
  SupernetConfig cfg;
  ElasticSupernet net("a", cfg, 1);
  BackboneGenome g = max_subnet(cfg.space, "a");
  g.blocks[0].depth = 2;
  g.blocks[0].expands = {6, 3, 6, 6};
  g.blocks[1].depth = 3;
  g.blocks[1].expands = {3, 3, 4, 6};
  g.blocks[2].expands = {3, 3, 3, 6};
  Rng rng(2);
  const auto out = extract_features(net, g, hnas::testing::random_tensor({2, 1, 16}, rng, -1, 1, false));
  REQUIRE(out.features.size() == 3);
  CHECK(out.features[0].values.shape() == Shape{2, 24, 16});
  CHECK(out.features[1].values.shape() == Shape{2, 32, 16});
  CHECK(out.features[2].values.shape() == Shape{2, 48, 16});
  CHECK(out.logits.shape() == Shape{2, 4});
  CHECK(Subnet(net, g).feature_channels() == std::vector<int>{24, 32, 48});
}

TEST_CASE("subnets are slices of the shared weights") {
  SupernetConfig cfg;
  ElasticSupernet net("a", cfg, 3);
  Rng rng(4);
  const Tensor x = hnas::testing::random_tensor({3, 1, 16}, rng, -1, 1, false);

  SUBCASE("shared block prefix gives identical first-block output") {
    BackboneGenome g1 = sample_uniform(cfg.space, rng, "a");
    BackboneGenome g2 = sample_uniform(cfg.space, rng, "a");
    g2.blocks[0] = g1.blocks[0];
    CHECK(bit_equal(extract_features(net, g1, x).features[0].values, extract_features(net, g2, x).features[0].values));
  }
  SUBCASE("cropped-kernel subnet equals a forward over copied weights") {
    BackboneGenome g = min_subnet(cfg.space, "a");
    const auto a = extract_features(net, g, x);
    const auto b = reference_forward(net, g, x);
    CHECK(bit_equal(a.logits, b.logits));
    for (std::size_t j = 0; j < 3; ++j) CHECK(bit_equal(a.features[j].values, b.features[j].values));
  }
  SUBCASE("random subnets equal reference passes") {
    for (int i = 0; i < 10; ++i) {
      const auto g = sample_uniform(cfg.space, rng, "a");
      CHECK(bit_equal(extract_features(net, g, x).logits, reference_forward(net, g, x).logits));
    }
  }
  SUBCASE("nested crops") {
    const Tensor& w = net.layer(1, 2).weight;
    const Tensor direct = kernel_slice(w, 24, 32, 3);
    const Tensor nested = kernel_slice(kernel_slice(w, 32, 40, 5), 24, 32, 3);
    CHECK(bit_equal(direct, nested));
    CHECK(bit_equal(kernel_slice(direct, 24, 32, 3), direct));
    CHECK_THROWS_AS(kernel_slice(w, 8, 8, 4), ShapeError);
  }
  SUBCASE("max subnet touches every weight") {
    const auto g = max_subnet(cfg.space, "a");
    randomize_head(net, rng);
    net.set_trainable(true);
    backward(sum(Subnet(net, g).logits(x)));
    int untouched = 0;
    for (const auto& [name, p] : net.named_parameters()) {
      // The first layer only reads base input channels from the stem.
      if (name.rfind("0/0/", 0) == 0) continue;
      if ((p.grad() == 0.0).all()) ++untouched;
    }
    CHECK(untouched == 0);
    net.set_trainable(false);
  }
  SUBCASE("deterministic and non-degenerate") {
    const auto g = max_subnet(cfg.space, "a");
    randomize_head(net, rng);
    CHECK(bit_equal(extract_features(net, g, x).features[2].values, extract_features(net, g, x).features[2].values));
    const auto lo = extract_features(net, min_subnet(cfg.space, "a"), x).logits;
    CHECK(hnas::testing::max_abs_diff(lo, extract_features(net, g, x).logits) > 0.0);
  }
  SUBCASE("genome mismatch is rejected") {
    SearchSpace other = cfg.space;
    other.num_blocks = 2;
    CHECK_THROWS(Subnet(net, max_subnet(other, "a")));
  }
}

TEST_CASE("supernet training") {
  const auto splits = generate_synthetic(small_task(), 5);
  SupernetConfig cfg;
  cfg.base_channels = 4;

  SUBCASE("zero epochs leave weights unchanged") {
    ElasticSupernet net("mod0", cfg, 1);
    const double before = checksum(net);
    SupernetTrainConfig tc;
    tc.epochs = 0;
    CHECK(train_supernet(net, splits.train, 0, tc).epoch_loss.empty());
    CHECK(checksum(net) == before);
  }
  SUBCASE("max subnet learns its bit and weights stay shared") {
    ElasticSupernet net("mod0", cfg, 1);
    SupernetTrainConfig tc;
    tc.epochs = 5;
    tc.seed = 3;
    const auto trace = train_supernet(net, splits.train, 0, tc);
    REQUIRE(trace.epoch_loss.size() == 5);
    for (double l : trace.epoch_loss) CHECK(std::isfinite(l));
    // One modality carries one of the two label bits, so 0.5 is the ceiling.
    CHECK(evaluate_subnet(net, max_subnet(cfg.space, "mod0"), splits.val, 0) >= 0.45);
    Rng rng(6);
    const Tensor x = first_rows(splits.val, 0, 8);
    for (int i = 0; i < 5; ++i) {
      const auto g = sample_uniform(cfg.space, rng, "mod0");
      CHECK(bit_equal(Subnet(net, g).logits(x), reference_forward(net, g, x).logits));
    }
  }
  SUBCASE("training is deterministic") {
    ElasticSupernet a("mod0", cfg, 1), b("mod0", cfg, 1);
    SupernetTrainConfig tc;
    tc.epochs = 1;
    tc.seed = 4;
    CHECK(train_supernet(a, splits.train, 0, tc).epoch_loss == train_supernet(b, splits.train, 0, tc).epoch_loss);
    for (std::size_t i = 0; i < a.parameters().size(); ++i) CHECK(bit_equal(a.parameters()[i], b.parameters()[i]));
  }
  SUBCASE("empty dataset is rejected") {
    ElasticSupernet net("mod0", cfg, 1);
    CHECK_THROWS_AS(train_supernet(net, splits.train.subset({}), 0, SupernetTrainConfig{}), std::invalid_argument);
  }
}

TEST_CASE("max-only policy without distillation is plain training of the max subnet") {
  const auto splits = generate_synthetic(small_task(96), 8);
  SupernetConfig cfg;
  cfg.base_channels = 2;
  ElasticSupernet net("mod0", cfg, 2);
  const BackboneGenome big = max_subnet(cfg.space, "mod0");

  // Standalone network over copies of the initial weights.
  std::vector<Tensor> params{net.stem_weight().clone(true), net.stem_bias().clone(true)};
  for (int j = 0; j < 3; ++j)
    for (int l = 0; l < 4; ++l) {
      const auto& lw = net.layer(j, l);
      const Index cin = (j == 0 && l == 0) ? cfg.base_channels : lw.weight.dim(1);
      Tensor w = hnas::testing::copy_crop(lw.weight, lw.weight.dim(0), cin, lw.weight.dim(2));
      w.set_requires_grad(true);
      params.push_back(w);
      params.push_back(lw.bias.clone(true));
    }
  params.push_back(net.head_weight().clone(true));
  params.push_back(net.head_bias().clone(true));
  auto plain_forward = [&](const Tensor& x) {
    Tensor h = relu(conv1d(x, params[0], params[1]));
    for (std::size_t i = 0; i < 12; ++i) h = relu(conv1d(h, params[2 + 2 * i], params[3 + 2 * i]));
    return matmul(mean(h, 2), params[26]) + reshape(params[27], {1, cfg.num_classes});
  };

  SupernetTrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 16;
  tc.seed = 12;
  tc.policy.n_random = 0;
  tc.policy.kd_weight = 0.0;
  tc.policy.anchors = {big};
  train_supernet(net, splits.train, 0, tc);

  Adam adam(params, tc.adam);
  Rng rng(tc.seed);
  const auto& data = splits.train;
  std::vector<Index> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), Index{0});
  const Index batches = (data.size() + tc.batch_size - 1) / tc.batch_size;
  const CosineSchedule schedule{tc.adam.lr, tc.min_lr, tc.epochs * batches};
  long step = 0;
  for (int e = 0; e < tc.epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Index b = 0; b < batches; ++b) {
      const Index start = b * tc.batch_size;
      const std::span<const Index> rows(order.data() + start,
                                        static_cast<std::size_t>(std::min<Index>(tc.batch_size, data.size() - start)));
      adam.zero_grad();
      backward(cross_entropy(plain_forward(data.batch(0, rows)), data.batch_labels(rows)));
      adam.step(cosine_lr(step++, schedule));
    }
  }
  const Tensor x = first_rows(splits.val, 0, 16);
  NoGradGuard guard;
  CHECK(hnas::testing::max_abs_diff(Subnet(net, big).logits(x), plain_forward(x)) < 1e-12);
}

TEST_CASE("distillation targets carry no gradient") {
  Rng rng(1);
  Tensor student = hnas::testing::random_tensor({3, 4}, rng);
  Tensor teacher = hnas::testing::random_tensor({3, 4}, rng);
  backward(distillation_loss(student, teacher));
  CHECK((teacher.grad() == 0.0).all());
  CHECK((student.grad() != 0.0).any());
  CHECK(distillation_loss(teacher.detach(), teacher.detach()).item() == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("subnet evaluation") {
  const auto splits = generate_synthetic({2000, 100, 100, 16, 1, 0.3}, 9);
  SupernetConfig cfg;
  cfg.base_channels = 4;
  ElasticSupernet net("mod0", cfg, 5);
  const auto g = max_subnet(cfg.space, "mod0");

  SUBCASE("untrained accuracy is near chance") {
    CHECK(std::abs(evaluate_subnet(net, g, splits.train, 0) - 0.25) < 0.05);
  }
  SUBCASE("single correct sample scores 1") {
    const std::vector<Index> row{0};
    auto one = splits.val.subset(row);
    one.labels[0] = argmax_rows(Subnet(net, g).logits(one.all(0)))[0];
    CHECK(evaluate_subnet(net, g, one, 0) == 1.0);
  }
  SUBCASE("order does not matter") {
    std::vector<Index> rows(static_cast<std::size_t>(splits.val.size()));
    std::iota(rows.begin(), rows.end(), Index{0});
    std::reverse(rows.begin(), rows.end());
    CHECK(evaluate_subnet(net, g, splits.val, 0) == evaluate_subnet(net, g, splits.val.subset(rows), 0));
  }
  SUBCASE("empty dataset is rejected") {
    CHECK_THROWS_AS(evaluate_subnet(net, g, splits.val.subset({}), 0), std::invalid_argument);
  }
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  SupernetConfig cfg;
  cfg.base_channels = 3;
  std::vector<ElasticSupernet> nets{ElasticSupernet("mod0", cfg, 1), ElasticSupernet("mod1", cfg, 2)};
  const auto path = std::filesystem::temp_directory_path() / "hnas_test_ck.bin";
  save_checkpoint(nets, path);
  const auto back = load_checkpoint(path);
  REQUIRE(back.size() == 2);
  for (std::size_t m = 0; m < 2; ++m) {
    CHECK(back[m].modality() == nets[m].modality());
    CHECK(back[m].config().base_channels == 3);
    const auto a = nets[m].named_parameters();
    const auto b = back[m].named_parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].first == b[i].first);
      CHECK(bit_equal(a[i].second, b[i].second));
    }
  }
  std::filesystem::remove(path);
  CHECK_THROWS(load_checkpoint(path));
}
