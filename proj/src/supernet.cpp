#include "hnas/supernet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <stdexcept>

namespace hnas {

namespace {

constexpr char kCheckpointMagic[8] = {'H', 'N', 'A', 'S', 'C', 'K', 'P', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

Tensor normal_tensor(Shape shape, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Array values(numel(shape));
  for (Index i = 0; i < values.size(); ++i) values(i) = dist(rng);
  return Tensor::from(std::move(shape), std::move(values), true);
}

int median_of(std::vector<int> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint truncated");
  return v;
}

void write_string(std::ostream& os, const std::string& s) {
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
  std::string s(read_pod<std::uint32_t>(is), '\0');
  is.read(s.data(), static_cast<std::streamsize>(s.size()));
  if (!is) throw std::runtime_error("checkpoint truncated");
  return s;
}

void write_ints(std::ostream& os, const std::vector<int>& v) {
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(v.size()));
  for (int x : v) write_pod<std::int32_t>(os, x);
}

std::vector<int> read_ints(std::istream& is) {
  std::vector<int> v(read_pod<std::uint32_t>(is));
  for (auto& x : v) x = read_pod<std::int32_t>(is);
  return v;
}

}  // namespace

void SupernetConfig::validate() const {
  space.validate();
  if (in_channels < 1 || base_channels < 1 || num_classes < 2) {
    throw std::invalid_argument("supernet config: channels must be >= 1 and classes >= 2");
  }
  if (stem_kernel < 1 || stem_kernel % 2 == 0) throw std::invalid_argument("supernet config: stem kernel must be odd");
}

ElasticSupernet::ElasticSupernet(std::string modality, SupernetConfig config, std::uint64_t seed)
    : modality_(std::move(modality)), config_(std::move(config)) {
  config_.validate();
  Rng rng(seed);
  const Index cmax = config_.max_channels();
  const Index kmax = config_.space.max_kernel();
  const Index base = config_.base_channels;
  stem_weight_ = normal_tensor({base, config_.in_channels, config_.stem_kernel},
                               std::sqrt(2.0 / (config_.in_channels * config_.stem_kernel)), rng);
  stem_bias_ = Tensor::zeros({base}, true);
  const double fan_in = static_cast<double>(base) * median_of(config_.space.expands) * median_of(config_.space.kernels);
  for (int j = 0; j < config_.space.num_blocks; ++j) {
    auto& block = layers_.emplace_back();
    for (int l = 0; l < config_.space.max_depth; ++l) {
      block.push_back({normal_tensor({cmax, cmax, kmax}, std::sqrt(2.0 / fan_in), rng), Tensor::zeros({cmax}, true)});
    }
  }
  head_weight_ = Tensor::zeros({cmax, config_.num_classes}, true);
  head_bias_ = Tensor::zeros({config_.num_classes}, true);
}

const LayerWeights& ElasticSupernet::layer(int block, int slot) const {
  return layers_.at(static_cast<std::size_t>(block)).at(static_cast<std::size_t>(slot));
}

std::vector<std::pair<std::string, Tensor>> ElasticSupernet::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("stem/weight", stem_weight_);
  out.emplace_back("stem/bias", stem_bias_);
  for (std::size_t j = 0; j < layers_.size(); ++j) {
    for (std::size_t l = 0; l < layers_[j].size(); ++l) {
      const std::string key = std::to_string(j) + "/" + std::to_string(l) + "/";
      out.emplace_back(key + "weight", layers_[j][l].weight);
      out.emplace_back(key + "bias", layers_[j][l].bias);
    }
  }
  out.emplace_back("head/weight", head_weight_);
  out.emplace_back("head/bias", head_bias_);
  return out;
}

std::vector<Tensor> ElasticSupernet::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

void ElasticSupernet::set_trainable(bool on) {
  for (auto& t : parameters()) t.set_requires_grad(on);
}

ElasticSupernet ElasticSupernet::clone() const {
  ElasticSupernet copy = *this;
  copy.stem_weight_ = stem_weight_.clone(stem_weight_.requires_grad());
  copy.stem_bias_ = stem_bias_.clone(stem_bias_.requires_grad());
  for (auto& block : copy.layers_) {
    for (auto& lw : block) {
      lw.weight = lw.weight.clone(lw.weight.requires_grad());
      lw.bias = lw.bias.clone(lw.bias.requires_grad());
    }
  }
  copy.head_weight_ = head_weight_.clone(head_weight_.requires_grad());
  copy.head_bias_ = head_bias_.clone(head_bias_.requires_grad());
  return copy;
}

Tensor kernel_slice(const Tensor& full, Index out_channels, Index in_channels, int kernel) {
  const Index kmax = full.dim(2);
  if (kernel > kmax || (kmax - kernel) % 2 != 0) throw ShapeError("kernel_slice: cannot center-crop");
  Tensor w = full;
  if (out_channels != full.dim(0)) w = narrow(w, 0, 0, out_channels);
  if (in_channels != full.dim(1)) w = narrow(w, 1, 0, in_channels);
  if (kernel != kmax) w = narrow(w, 2, (kmax - kernel) / 2, kernel);
  return w;
}

Subnet::Subnet(const ElasticSupernet& supernet, BackboneGenome genome)
    : supernet_(&supernet), genome_(std::move(genome)) {
  validate(genome_, supernet.config().space);
}

std::vector<int> Subnet::feature_channels() const {
  std::vector<int> out;
  for (const auto& b : genome_.blocks) {
    out.push_back(supernet_->config().base_channels * b.expands[static_cast<std::size_t>(b.depth - 1)]);
  }
  return out;
}

BackboneOutput Subnet::forward(const Tensor& x) const {
  const auto& cfg = supernet_->config();
  if (x.rank() != 3 || x.dim(1) != cfg.in_channels) {
    throw ShapeError("subnet forward: expected (B, " + std::to_string(cfg.in_channels) + ", L), got " +
                     to_string(x.shape()));
  }
  BackboneOutput out;
  Tensor h = relu(conv1d(x, supernet_->stem_weight(), supernet_->stem_bias()));
  for (std::size_t j = 0; j < genome_.blocks.size(); ++j) {
    const auto& block = genome_.blocks[j];
    for (int l = 0; l < block.depth; ++l) {
      const auto& lw = supernet_->layer(static_cast<int>(j), l);
      const Index cout = static_cast<Index>(cfg.base_channels) * block.expands[static_cast<std::size_t>(l)];
      const Tensor w = kernel_slice(lw.weight, cout, h.dim(1), block.kernels[static_cast<std::size_t>(l)]);
      const Tensor b = cout == lw.bias.dim(0) ? lw.bias : narrow(lw.bias, 0, 0, cout);
      h = relu(conv1d(h, w, b));
    }
    out.features.push_back({h, genome_.modality, static_cast<int>(j)});
  }
  const Tensor pooled = mean(h, 2);
  const Index c = pooled.dim(1);
  const Tensor hw = c == supernet_->head_weight().dim(0) ? supernet_->head_weight()
                                                         : narrow(supernet_->head_weight(), 0, 0, c);
  out.logits = matmul(pooled, hw) + reshape(supernet_->head_bias(), {1, cfg.num_classes});
  return out;
}

Subnet instantiate_subnet(const ElasticSupernet& supernet, const BackboneGenome& genome) {
  return Subnet(supernet, genome);
}

BackboneOutput extract_features(const ElasticSupernet& supernet, const BackboneGenome& genome, const Tensor& batch) {
  return Subnet(supernet, genome).forward(batch);
}

Tensor distillation_loss(const Tensor& student_logits, const Tensor& teacher_logits) {
  if (student_logits.shape() != teacher_logits.shape()) throw ShapeError("distillation_loss: logits shape mismatch");
  Tensor teacher_log;
  {
    NoGradGuard guard;
    teacher_log = log_softmax(teacher_logits.detach(), 1);
  }
  const Tensor teacher_p = Tensor::from(teacher_log.shape(), teacher_log.data().exp());
  const Tensor kl = sum(teacher_p * (teacher_log - log_softmax(student_logits, 1)));
  return scale(kl, 1.0 / static_cast<double>(student_logits.dim(0)));
}

std::vector<int> argmax_rows(const Tensor& logits) {
  const Index n = logits.dim(0), k = logits.dim(1);
  std::vector<int> out(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    Index best = 0;
    for (Index j = 1; j < k; ++j) {
      if (logits.data()(i * k + j) > logits.data()(i * k + best)) best = j;
    }
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

TrainTrace train_supernet(ElasticSupernet& supernet, const MultimodalDataset& data, std::size_t modality,
                          const SupernetTrainConfig& config) {
  if (config.epochs < 0) throw std::invalid_argument("train_supernet: epochs must be >= 0");
  if (data.size() == 0) throw std::invalid_argument("train_supernet: empty dataset");
  if (config.batch_size < 1) throw std::invalid_argument("train_supernet: batch_size must be >= 1");
  const auto& space = supernet.config().space;
  auto anchors = config.policy.anchors;
  if (anchors.empty()) anchors = {max_subnet(space, supernet.modality()), min_subnet(space, supernet.modality())};
  if (config.policy.n_random < 0) throw std::invalid_argument("train_supernet: n_random must be >= 0");
  const BackboneGenome largest = max_subnet(space, supernet.modality());

  TrainTrace trace;
  if (config.epochs == 0) return trace;

  supernet.set_trainable(true);
  Adam adam(supernet.parameters(), config.adam);
  Rng rng(config.seed);
  std::vector<Index> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), Index{0});
  const Index batches = (data.size() + config.batch_size - 1) / config.batch_size;
  const CosineSchedule schedule{config.adam.lr, config.min_lr, config.epochs * batches};
  long step = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (Index b = 0; b < batches; ++b) {
      const Index start = b * config.batch_size;
      const Index count = std::min<Index>(config.batch_size, data.size() - start);
      const std::span<const Index> rows(order.data() + start, static_cast<std::size_t>(count));
      const Tensor x = data.batch(modality, rows);
      const std::vector<int> y = data.batch_labels(rows);

      std::vector<BackboneGenome> sampled = anchors;
      for (int r = 0; r < config.policy.n_random; ++r) sampled.push_back(sample_uniform(space, rng, supernet.modality()));

      adam.zero_grad();
      Tensor total;
      Tensor teacher;
      const auto max_it = std::find(sampled.begin(), sampled.end(), largest);
      if (max_it != sampled.end() && config.policy.kd_weight != 0.0) {
        // Teacher pass first so its logits can be detached for the students.
        std::rotate(sampled.begin(), max_it, max_it + 1);
      }
      for (std::size_t s = 0; s < sampled.size(); ++s) {
        const Tensor logits = Subnet(supernet, sampled[s]).logits(x);
        Tensor loss = cross_entropy(logits, y);
        const bool is_teacher = sampled[s] == largest;
        if (is_teacher && !teacher.defined()) {
          teacher = logits.detach();
        } else if (teacher.defined() && config.policy.kd_weight != 0.0) {
          loss = loss + scale(distillation_loss(logits, teacher), config.policy.kd_weight);
        }
        total = total.defined() ? total + loss : loss;
      }
      backward(total);
      adam.step(cosine_lr(step++, schedule));
      epoch_loss += total.item();
    }
    trace.epoch_loss.push_back(epoch_loss / static_cast<double>(batches));
  }
  return trace;
}

double evaluate_subnet(const ElasticSupernet& supernet, const BackboneGenome& genome, const MultimodalDataset& data,
                       std::size_t modality) {
  if (data.size() == 0) throw std::invalid_argument("evaluate_subnet: empty dataset");
  NoGradGuard guard;
  const Subnet net(supernet, genome);
  constexpr Index kChunk = 500;
  Index correct = 0;
  std::vector<Index> rows;
  for (Index start = 0; start < data.size(); start += kChunk) {
    rows.clear();
    for (Index i = start; i < std::min(data.size(), start + kChunk); ++i) rows.push_back(i);
    const auto pred = argmax_rows(net.logits(data.batch(modality, rows)));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (pred[i] == data.labels[static_cast<std::size_t>(rows[i])]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

void save_checkpoint(const std::vector<ElasticSupernet>& supernets, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  write_pod<std::uint32_t>(os, kCheckpointVersion);
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(supernets.size()));
  for (const auto& net : supernets) {
    const auto& c = net.config();
    write_string(os, net.modality());
    write_pod<std::int32_t>(os, c.space.num_blocks);
    write_pod<std::int32_t>(os, c.space.max_depth);
    write_ints(os, c.space.depths);
    write_ints(os, c.space.kernels);
    write_ints(os, c.space.expands);
    write_pod<std::int32_t>(os, c.in_channels);
    write_pod<std::int32_t>(os, c.base_channels);
    write_pod<std::int32_t>(os, c.num_classes);
    write_pod<std::int32_t>(os, c.stem_kernel);
    const auto params = net.named_parameters();
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
    for (const auto& [name, t] : params) {
      write_string(os, name);
      write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
      for (Index d : t.shape()) write_pod<std::int64_t>(os, d);
      os.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
  }
  if (!os) throw std::runtime_error("failed writing checkpoint " + path.string());
}

std::vector<ElasticSupernet> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("not a supernet checkpoint: " + path.string());
  }
  const auto version = read_pod<std::uint32_t>(is);
  if (version != kCheckpointVersion) throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  std::vector<ElasticSupernet> out;
  const auto count = read_pod<std::uint32_t>(is);
  for (std::uint32_t n = 0; n < count; ++n) {
    const std::string modality = read_string(is);
    SupernetConfig c;
    c.space.num_blocks = read_pod<std::int32_t>(is);
    c.space.max_depth = read_pod<std::int32_t>(is);
    c.space.depths = read_ints(is);
    c.space.kernels = read_ints(is);
    c.space.expands = read_ints(is);
    c.in_channels = read_pod<std::int32_t>(is);
    c.base_channels = read_pod<std::int32_t>(is);
    c.num_classes = read_pod<std::int32_t>(is);
    c.stem_kernel = read_pod<std::int32_t>(is);
    ElasticSupernet net(modality, c, 0);
    std::map<std::string, Tensor> slots;
    for (auto& [name, t] : net.named_parameters()) slots.emplace(name, t);
    const auto nparams = read_pod<std::uint32_t>(is);
    if (nparams != slots.size()) throw std::runtime_error("checkpoint tensor count mismatch for " + modality);
    for (std::uint32_t i = 0; i < nparams; ++i) {
      const std::string name = read_string(is);
      auto it = slots.find(name);
      if (it == slots.end()) throw std::runtime_error("checkpoint has unknown tensor " + name);
      Shape shape(read_pod<std::uint32_t>(is));
      for (auto& d : shape) d = read_pod<std::int64_t>(is);
      if (shape != it->second.shape()) throw std::runtime_error("checkpoint shape mismatch for " + name);
      Array& dst = it->second.mutable_data();
      is.read(reinterpret_cast<char*>(dst.data()), static_cast<std::streamsize>(dst.size() * sizeof(double)));
      if (!is) throw std::runtime_error("checkpoint truncated");
    }
    out.push_back(std::move(net));
  }
  return out;
}

}  // namespace hnas
