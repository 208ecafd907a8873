#pragma once

// Run configuration shared by every CLI command.

#include "hnas/dataset.hpp"
#include "hnas/engine.hpp"
#include "hnas/supernet.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace hnas {

inline constexpr const char* kOutputDirEnv = "HNAS_OUTPUT_DIR";

struct RunConfig {
  std::uint64_t seed = 0;
  int generations = 30;
  int population = 128;
  double p_mut = 0.4;
  double p_cross = 0.8;
  double select_fraction = 0.25;
  double elite_fraction = 0.5;
  bool random_pairing = false;

  int supernet_epochs = 5;
  int supernet_batch = 32;
  double supernet_lr = 1e-3;
  int n_random = 2;
  double kd_weight = 1.0;
  int base_channels = 8;

  int fusion_epochs = 25;
  int finetune_epochs = 5;
  int fusion_batch = 32;
  int fusion_channels = 8;
  double weight_lr = 1e-3;
  double arch_lr = 3e-3;
  double arch_min_lr = 3e-5;
  double weight_decay = 1e-4;
  double gate_bias = 1.6;
  double input_budget = 1.0;
  LossExponents exponents;
  MacroBounds macro_bounds;
  FusionMacroConfig ablation_macro{1, 2};

  SyntheticTaskSpec dataset;
  std::string device = "slow-edge";  // gen-lut profile
  std::vector<std::string> luts;     // LUT files; the first drives the search
  std::string data_dir;              // defaults to <output_dir>/data
  std::string checkpoint;            // defaults to <output_dir>/supernets.bin
  std::string output_dir = "out";

  // std::invalid_argument naming the first offending field.
  void validate() const;
  // Additionally requires every input path the search needs to exist.
  void validate_inputs() const;

  std::filesystem::path data_path() const;
  std::filesystem::path checkpoint_path() const;
  std::vector<std::filesystem::path> lut_paths() const;  // defaults to <output_dir>/lut_<device>.json

  EngineConfig engine() const;
  SupernetConfig supernet() const;
  SupernetTrainConfig supernet_training(std::size_t modality) const;
};

std::string config_to_json(const RunConfig& config);
// Unknown keys are rejected; missing keys keep their defaults.
RunConfig config_from_json(std::string_view text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});
// Replaces output_dir when the environment variable is set and nonempty.
void apply_environment(RunConfig& config);

}  // namespace hnas
