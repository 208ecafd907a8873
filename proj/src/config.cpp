#include "hnas/config.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hnas {

namespace {

using json = nlohmann::ordered_json;

// Every field with its JSON pointer, in output order.
template <typename Config, typename F>
void visit_fields(Config& c, F&& f) {
  f("/seed", c.seed);
  f("/generations", c.generations);
  f("/population", c.population);
  f("/p_mut", c.p_mut);
  f("/p_cross", c.p_cross);
  f("/select_fraction", c.select_fraction);
  f("/elite_fraction", c.elite_fraction);
  f("/random_pairing", c.random_pairing);
  f("/supernet/epochs", c.supernet_epochs);
  f("/supernet/batch_size", c.supernet_batch);
  f("/supernet/lr", c.supernet_lr);
  f("/supernet/n_random", c.n_random);
  f("/supernet/kd_weight", c.kd_weight);
  f("/supernet/base_channels", c.base_channels);
  f("/fusion/epochs", c.fusion_epochs);
  f("/fusion/finetune_epochs", c.finetune_epochs);
  f("/fusion/batch_size", c.fusion_batch);
  f("/fusion/channels", c.fusion_channels);
  f("/fusion/weight_lr", c.weight_lr);
  f("/fusion/arch_lr", c.arch_lr);
  f("/fusion/arch_min_lr", c.arch_min_lr);
  f("/fusion/weight_decay", c.weight_decay);
  f("/fusion/gate_bias", c.gate_bias);
  f("/fusion/input_budget", c.input_budget);
  f("/exponents/a", c.exponents.a);
  f("/exponents/b", c.exponents.b);
  f("/exponents/c", c.exponents.c);
  f("/macro/min_cells", c.macro_bounds.min_cells);
  f("/macro/max_cells", c.macro_bounds.max_cells);
  f("/macro/min_nodes", c.macro_bounds.min_nodes);
  f("/macro/max_nodes", c.macro_bounds.max_nodes);
  f("/ablation_macro/cells", c.ablation_macro.cells);
  f("/ablation_macro/nodes", c.ablation_macro.nodes);
  f("/dataset/train", c.dataset.train);
  f("/dataset/val", c.dataset.val);
  f("/dataset/test", c.dataset.test);
  f("/dataset/length", c.dataset.length);
  f("/dataset/channels", c.dataset.channels);
  f("/dataset/noise", c.dataset.noise);
  f("/device", c.device);
  f("/luts", c.luts);
  f("/data_dir", c.data_dir);
  f("/checkpoint", c.checkpoint);
  f("/output_dir", c.output_dir);
}

std::string field_name(std::string_view pointer) {
  std::string name(pointer.substr(1));
  for (char& ch : name) {
    if (ch == '/') ch = '.';
  }
  return name;
}

[[noreturn]] void reject(const char* field, const std::string& what) {
  throw std::invalid_argument("config field '" + std::string(field) + "' " + what);
}

void require_probability(double v, const char* field) {
  if (!(v >= 0.0 && v <= 1.0)) reject(field, "must be in [0, 1]");
}

void require_fraction(double v, const char* field) {
  if (!(v > 0.0 && v <= 1.0)) reject(field, "must be in (0, 1]");
}

void require_at_least(double v, double floor, const char* field) {
  if (!(v >= floor)) reject(field, "must be >= " + std::to_string(static_cast<long long>(floor)));
}

void require_positive(double v, const char* field) {
  if (!(v > 0.0) || !std::isfinite(v)) reject(field, "must be a positive number");
}

}  // namespace

void RunConfig::validate() const {
  require_at_least(generations, 0, "generations");
  require_at_least(population, 1, "population");
  require_probability(p_mut, "p_mut");
  require_probability(p_cross, "p_cross");
  require_fraction(select_fraction, "select_fraction");
  require_fraction(elite_fraction, "elite_fraction");
  require_at_least(supernet_epochs, 0, "supernet.epochs");
  require_at_least(supernet_batch, 1, "supernet.batch_size");
  require_positive(supernet_lr, "supernet.lr");
  require_at_least(n_random, 0, "supernet.n_random");
  require_at_least(kd_weight, 0, "supernet.kd_weight");
  require_at_least(base_channels, 1, "supernet.base_channels");
  require_at_least(fusion_epochs, 0, "fusion.epochs");
  require_at_least(finetune_epochs, 0, "fusion.finetune_epochs");
  require_at_least(fusion_batch, 1, "fusion.batch_size");
  require_at_least(fusion_channels, 1, "fusion.channels");
  require_positive(weight_lr, "fusion.weight_lr");
  require_positive(arch_lr, "fusion.arch_lr");
  require_at_least(arch_min_lr, 0, "fusion.arch_min_lr");
  require_at_least(weight_decay, 0, "fusion.weight_decay");
  require_at_least(input_budget, 0, "fusion.input_budget");
  if (!std::isfinite(gate_bias)) reject("fusion.gate_bias", "must be finite");
  require_at_least(exponents.a, 0, "exponents.a");
  require_at_least(exponents.b, 0, "exponents.b");
  require_at_least(exponents.c, 0, "exponents.c");
  require_at_least(macro_bounds.min_cells, 1, "macro.min_cells");
  require_at_least(macro_bounds.max_cells, macro_bounds.min_cells, "macro.max_cells");
  require_at_least(macro_bounds.min_nodes, 1, "macro.min_nodes");
  require_at_least(macro_bounds.max_nodes, macro_bounds.min_nodes, "macro.max_nodes");
  require_at_least(ablation_macro.cells, 1, "ablation_macro.cells");
  require_at_least(ablation_macro.nodes, 1, "ablation_macro.nodes");
  require_at_least(dataset.train, 1, "dataset.train");
  require_at_least(dataset.val, 1, "dataset.val");
  require_at_least(dataset.test, 1, "dataset.test");
  require_at_least(dataset.length, 1, "dataset.length");
  require_at_least(dataset.channels, 1, "dataset.channels");
  if (!(dataset.noise >= 0.0) || !std::isfinite(dataset.noise)) reject("dataset.noise", "must be >= 0");
  try {
    device_profile(device);
  } catch (const std::invalid_argument& e) {
    reject("device", e.what());
  }
  if (output_dir.empty()) reject("output_dir", "must not be empty");
}

void RunConfig::validate_inputs() const {
  validate();
  namespace fs = std::filesystem;
  for (const char* split : {"train.bin", "val.bin", "test.bin"}) {
    if (!fs::exists(data_path() / split)) reject("data_dir", "has no " + std::string(split) + " at " + data_path().string());
  }
  if (!fs::exists(checkpoint_path())) reject("checkpoint", "does not exist: " + checkpoint_path().string());
  for (const auto& p : lut_paths()) {
    if (!fs::exists(p)) reject("luts", "entry does not exist: " + p.string());
  }
}

std::filesystem::path RunConfig::data_path() const {
  return data_dir.empty() ? std::filesystem::path(output_dir) / "data" : std::filesystem::path(data_dir);
}

std::filesystem::path RunConfig::checkpoint_path() const {
  return checkpoint.empty() ? std::filesystem::path(output_dir) / "supernets.bin" : std::filesystem::path(checkpoint);
}

std::vector<std::filesystem::path> RunConfig::lut_paths() const {
  if (luts.empty()) return {std::filesystem::path(output_dir) / ("lut_" + device + ".json")};
  return {luts.begin(), luts.end()};
}

EngineConfig RunConfig::engine() const {
  EngineConfig e;
  e.seed = seed;
  e.generations = generations;
  e.population = population;
  e.p_mut = p_mut;
  e.p_cross = p_cross;
  e.select_fraction = select_fraction;
  e.elite_fraction = elite_fraction;
  e.exponents = exponents;
  e.fusion.epochs = fusion_epochs;
  e.fusion.batch_size = fusion_batch;
  e.fusion.weight_lr = weight_lr;
  e.fusion.weight_min_lr = weight_lr * 1e-2;
  e.fusion.arch_lr = arch_lr;
  e.fusion.arch_min_lr = arch_min_lr;
  e.fusion.weight_decay = weight_decay;
  e.fusion.input_budget = input_budget;
  e.finetune_epochs = finetune_epochs;
  e.fusion_channels = fusion_channels;
  e.gate_bias = gate_bias;
  e.macro_bounds = macro_bounds;
  e.ablation_macro = ablation_macro;
  e.random_pairing = random_pairing;
  return e;
}

SupernetConfig RunConfig::supernet() const {
  SupernetConfig s;
  s.in_channels = dataset.channels;
  s.base_channels = base_channels;
  return s;
}

SupernetTrainConfig RunConfig::supernet_training(std::size_t modality) const {
  SupernetTrainConfig t;
  t.epochs = supernet_epochs;
  t.batch_size = supernet_batch;
  t.adam.lr = supernet_lr;
  t.adam.weight_decay = weight_decay;
  t.min_lr = supernet_lr * 1e-2;
  t.seed = derive_seed(seed, 100 + modality);
  t.policy.n_random = n_random;
  t.policy.kd_weight = kd_weight;
  return t;
}

std::string config_to_json(const RunConfig& config) {
  json j;
  visit_fields(config, [&](const char* pointer, const auto& value) { j[json::json_pointer(pointer)] = value; });
  return j.dump(2) + "\n";
}

RunConfig config_from_json(std::string_view text, RunConfig base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  std::vector<std::string> known;
  visit_fields(base, [&](const char* pointer, auto& value) {
    known.emplace_back(pointer);
    const json::json_pointer ptr(pointer);
    if (!j.contains(ptr)) return;
    try {
      j.at(ptr).get_to(value);
    } catch (const json::exception&) {
      throw std::invalid_argument("config field '" + field_name(pointer) + "' has the wrong type");
    }
  });
  const json flat = j.flatten();
  for (const auto& [key, value] : flat.items()) {
    (void)value;
    bool ok = false;
    for (const auto& k : known) {
      if (key == k || k.starts_with(key + "/") || (k == "/luts" && key.starts_with("/luts/"))) ok = true;
    }
    if (!ok) throw std::invalid_argument("config field '" + field_name(key) + "' is not recognized");
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str(), std::move(base));
}

void apply_environment(RunConfig& config) {
  if (const char* dir = std::getenv(kOutputDirEnv); dir != nullptr && *dir != '\0') config.output_dir = dir;
}

}  // namespace hnas
