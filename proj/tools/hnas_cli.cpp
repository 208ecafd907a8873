#include "hnas/config.hpp"
#include "hnas/dataset.hpp"
#include "hnas/engine.hpp"
#include "hnas/exports.hpp"
#include "hnas/hwcost.hpp"
#include "hnas/supernet.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace hnas;

namespace {

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> generations, population;
  std::optional<double> p_mut, p_cross, select_fraction, elite_fraction;
  bool random_pairing = false;
  std::optional<int> supernet_epochs, base_channels, n_random;
  std::optional<int> fusion_epochs, finetune_epochs, fusion_channels;
  std::optional<double> arch_lr, input_budget, exp_a, exp_b, exp_c;
  std::optional<int> max_cells, max_nodes;
  std::optional<int> train, val, test, length;
  std::optional<double> noise;
  std::optional<std::string> device, data_dir, checkpoint, output_dir;
  std::vector<std::string> luts;

  void add_to(CLI::App& app) {
    app.add_option("--seed", seed, "Run seed");
    app.add_option("--generations", generations, "Evolutionary generations");
    app.add_option("--population", population, "Population size");
    app.add_option("--p-mut", p_mut, "Mutation probability");
    app.add_option("--p-cross", p_cross, "Crossover probability");
    app.add_option("--select-fraction", select_fraction, "First-stage selection fraction");
    app.add_option("--elite-fraction", elite_fraction, "Elite fraction");
    app.add_flag("--random-pairing", random_pairing, "Pair selected backbones randomly instead of by rank");
    app.add_option("--supernet-epochs", supernet_epochs, "Supernet training epochs");
    app.add_option("--base-channels", base_channels, "Supernet base width");
    app.add_option("--n-random", n_random, "Random subnets per supernet step");
    app.add_option("--fusion-epochs", fusion_epochs, "Fusion search epochs");
    app.add_option("--finetune-epochs", finetune_epochs, "Fine-tuning epochs of discretized graphs");
    app.add_option("--fusion-channels", fusion_channels, "Fusion width");
    app.add_option("--arch-lr", arch_lr, "Architecture learning rate");
    app.add_option("--input-budget", input_budget, "Weight of the input-gate budget term (0 disables)");
    app.add_option("--exp-a", exp_a, "Task loss exponent");
    app.add_option("--exp-b", exp_b, "Latency loss exponent");
    app.add_option("--exp-c", exp_c, "Energy loss exponent");
    app.add_option("--max-cells", max_cells, "Upper bound on fusion cells");
    app.add_option("--max-nodes", max_nodes, "Upper bound on nodes per cell");
    app.add_option("--train", train, "Training samples");
    app.add_option("--val", val, "Validation samples");
    app.add_option("--test", test, "Test samples");
    app.add_option("--length", length, "Signal length");
    app.add_option("--noise", noise, "Noise standard deviation");
    app.add_option("--device", device, "Device profile for gen-lut (fast-gpu, slow-edge)");
    app.add_option("--lut", luts, "Device LUT file; repeatable, the first drives the search");
    app.add_option("--data-dir", data_dir, "Dataset directory");
    app.add_option("--checkpoint", checkpoint, "Supernet checkpoint file");
    app.add_option("--output-dir,-o", output_dir, "Output directory");
  }

  template <typename T, typename U>
  static void set(const std::optional<T>& from, U& to) {
    if (from) to = *from;
  }

  void apply(RunConfig& c) const {
    set(seed, c.seed);
    set(generations, c.generations);
    set(population, c.population);
    set(p_mut, c.p_mut);
    set(p_cross, c.p_cross);
    set(select_fraction, c.select_fraction);
    set(elite_fraction, c.elite_fraction);
    if (random_pairing) c.random_pairing = true;
    set(supernet_epochs, c.supernet_epochs);
    set(base_channels, c.base_channels);
    set(n_random, c.n_random);
    set(fusion_epochs, c.fusion_epochs);
    set(finetune_epochs, c.finetune_epochs);
    set(fusion_channels, c.fusion_channels);
    set(arch_lr, c.arch_lr);
    set(input_budget, c.input_budget);
    set(exp_a, c.exponents.a);
    set(exp_b, c.exponents.b);
    set(exp_c, c.exponents.c);
    set(max_cells, c.macro_bounds.max_cells);
    set(max_nodes, c.macro_bounds.max_nodes);
    set(train, c.dataset.train);
    set(val, c.dataset.val);
    set(test, c.dataset.test);
    set(length, c.dataset.length);
    set(noise, c.dataset.noise);
    set(device, c.device);
    set(data_dir, c.data_dir);
    set(checkpoint, c.checkpoint);
    set(output_dir, c.output_dir);
    if (!luts.empty()) c.luts = luts;
  }
};

struct StageError : std::runtime_error {
  StageError(const std::string& stage, const std::string& what) : std::runtime_error(stage + ": " + what) {}
};

template <typename F>
auto stage(const std::string& name, F&& f) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

struct Inputs {
  DatasetSplits data;
  std::vector<ElasticSupernet> supernets;
  std::vector<DeviceLUT> luts;
};

Inputs load_inputs(const RunConfig& cfg) {
  stage("config", [&] {
    cfg.validate_inputs();
    return 0;
  });
  Inputs in;
  in.data = stage("load dataset", [&] { return load_splits(cfg.data_path()); });
  in.supernets = stage("load checkpoint", [&] { return load_checkpoint(cfg.checkpoint_path()); });
  for (const auto& p : cfg.lut_paths()) in.luts.push_back(stage("load LUT", [&] { return load_lut(p); }));
  return in;
}

SearchContext context_of(const Inputs& in) {
  SearchContext ctx;
  ctx.supernets = &in.supernets;
  ctx.luts = in.luts;
  ctx.data = &in.data;
  stage("search context", [&] {
    ctx.validate();
    return 0;
  });
  return ctx;
}

std::vector<int> block_counts(const MultimodalGenome& g) {
  std::vector<int> out;
  for (const auto& b : g.backbones) out.push_back(static_cast<int>(b.blocks.size()));
  return out;
}

std::vector<std::string> modality_names(const MultimodalGenome& g) {
  std::vector<std::string> out;
  for (const auto& b : g.backbones) out.push_back(b.modality);
  return out;
}

void cmd_gen_data(const RunConfig& cfg) {
  stage("config", [&] {
    cfg.validate();
    return 0;
  });
  const auto splits = generate_synthetic(cfg.dataset, cfg.seed);
  stage("write dataset", [&] {
    save_splits(splits, cfg.data_path());
    return 0;
  });
  std::cout << "wrote " << splits.train.size() << "/" << splits.val.size() << "/" << splits.test.size()
            << " samples to " << cfg.data_path().string() << "\n";
}

void cmd_gen_lut(const RunConfig& cfg, const std::optional<std::string>& out) {
  stage("config", [&] {
    cfg.validate();
    return 0;
  });
  const auto lut = synth_device(cfg.seed, device_profile(cfg.device), cfg.supernet().space);
  const fs::path path = out ? fs::path(*out) : fs::path(cfg.output_dir) / ("lut_" + cfg.device + ".json");
  stage("write LUT", [&] {
    save_lut(lut, path);
    return 0;
  });
  std::cout << "wrote " << cfg.device << " LUT to " << path.string() << "\n";
}

void cmd_train_supernet(const RunConfig& cfg) {
  stage("config", [&] {
    cfg.validate();
    return 0;
  });
  const auto data = stage("load dataset", [&] { return load_splits(cfg.data_path()); });
  std::vector<ElasticSupernet> nets;
  std::ostringstream trace;
  trace << "modality,epoch,loss\n";
  for (std::size_t m = 0; m < data.train.modalities.size(); ++m) {
    const auto& name = data.train.modalities[m];
    nets.emplace_back(name, cfg.supernet(), derive_seed(cfg.seed, 200 + m));
    const auto t = stage("train supernet " + name,
                         [&] { return train_supernet(nets.back(), data.train, m, cfg.supernet_training(m)); });
    for (std::size_t e = 0; e < t.epoch_loss.size(); ++e) trace << name << ',' << e << ',' << t.epoch_loss[e] << '\n';
    const auto& space = nets.back().config().space;
    std::cout << name << ": max subnet val acc " << evaluate_subnet(nets.back(), max_subnet(space, name), data.val, m)
              << ", min subnet val acc " << evaluate_subnet(nets.back(), min_subnet(space, name), data.val, m) << "\n";
  }
  stage("write checkpoint", [&] {
    save_checkpoint(nets, cfg.checkpoint_path());
    write_text(fs::path(cfg.output_dir) / "supernet_trace.csv", trace.str());
    return 0;
  });
  std::cout << "wrote checkpoint " << cfg.checkpoint_path().string() << "\n";
}

void cmd_search(const RunConfig& cfg) {
  const Inputs in = load_inputs(cfg);
  const SearchContext ctx = context_of(in);
  const fs::path out(cfg.output_dir);
  fs::create_directories(out / "graphs");
  fs::create_directories(out / "dot");
  write_text(out / "config_used.json", config_to_json(cfg));
  std::ofstream log(out / "run_log.jsonl", std::ios::binary | std::ios::trunc);
  if (!log) throw StageError("search", "cannot write run log");
  const auto result = stage("search", [&] {
    return run(cfg.engine(), ctx, [&](const RunRecord& r) {
      log << record_to_json_line(r);
      log.flush();
      if (r.graph) save_graph(*r.graph, out / "graphs" / ("candidate_" + std::to_string(r.id) + ".json"));
    });
  });
  stage("export", [&] {
    write_text(out / "front.csv", front_csv(result.records, in.data.train.modalities));
    for (const auto& r : result.front) {
      write_text(out / "dot" / ("candidate_" + std::to_string(r.id) + ".dot"),
                 topology_to_dot(r.topology, block_counts(r.genome), modality_names(r.genome)));
    }
    return 0;
  });
  std::cout << result.records.size() << " candidates, " << result.front.size() << " on the front\n";
  for (const auto& r : result.front) {
    std::cout << "  candidate " << r.id << ": acc " << r.acc << " (test " << r.test_acc << "), " << r.cost.latency_ms
              << " ms, " << r.cost.energy_mj << " mJ\n";
  }
}

void cmd_ablate(const RunConfig& cfg, const std::string& mode) {
  const Inputs in = load_inputs(cfg);
  const SearchContext ctx = context_of(in);
  const auto rows = stage("ablate " + mode, [&] {
    if (mode == "single-op") return single_op_sweep(cfg.engine(), ctx);
    return ablation_run(ablation_mode_from_string(mode), cfg.engine(), ctx);
  });
  std::string file = mode;
  for (char& ch : file) {
    if (ch == '+') ch = '_';
  }
  const fs::path path = fs::path(cfg.output_dir) / ("ablation_" + file + ".csv");
  const std::string table = ablation_csv(rows);
  stage("export", [&] {
    write_text(path, table);
    return 0;
  });
  std::cout << table;
}

void cmd_export_front(const std::string& log, const std::string& out) {
  const auto records = stage("read log", [&] { return read_log(log); });
  stage("export", [&] {
    write_text(out, front_csv(records));
    return 0;
  });
}

void cmd_export_graph(const std::string& graph, const std::string& out) {
  const auto g = stage("read graph", [&] { return load_graph(graph); });
  stage("export", [&] {
    write_text(out, graph_to_dot(g));
    return 0;
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hardware-aware multimodal architecture search on synthetic tasks"};
  app.require_subcommand(1);
  app.fallthrough();
  std::optional<std::string> config_file;
  app.add_option("--config,-c", config_file, "JSON run configuration")->check(CLI::ExistingFile);
  Overrides overrides;
  overrides.add_to(app);

  auto* gen_data = app.add_subcommand("gen-data", "Generate the synthetic train/val/test splits");
  auto* gen_lut = app.add_subcommand("gen-lut", "Synthesize a device latency/energy LUT");
  std::optional<std::string> lut_out;
  gen_lut->add_option("--out", lut_out, "LUT file to write");
  auto* train = app.add_subcommand("train-supernet", "Train one elastic supernet per modality");
  auto* search = app.add_subcommand("search", "Run the two-stage search");
  auto* ablate = app.add_subcommand("ablate", "Run an ablation");
  std::string mode;
  ablate->add_option("--mode", mode, "FB+FF, FB+SF, SB+SF, SB+SF+HW or single-op")->required();
  auto* export_front = app.add_subcommand("export-front", "Write a front CSV from a run log");
  std::string log_path, csv_out;
  export_front->add_option("--log", log_path, "Run log (JSON lines)")->required()->check(CLI::ExistingFile);
  export_front->add_option("--out", csv_out, "CSV to write")->required();
  auto* export_graph = app.add_subcommand("export-graph", "Write a DOT view of a fusion graph");
  std::string graph_path, dot_out;
  export_graph->add_option("--graph", graph_path, "Fusion graph JSON")->required()->check(CLI::ExistingFile);
  export_graph->add_option("--out", dot_out, "DOT file to write")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = stage("config", [&] { return config_file ? load_config(*config_file) : RunConfig{}; });
    apply_environment(cfg);
    overrides.apply(cfg);
    if (gen_data->parsed()) cmd_gen_data(cfg);
    if (gen_lut->parsed()) cmd_gen_lut(cfg, lut_out);
    if (train->parsed()) cmd_train_supernet(cfg);
    if (search->parsed()) cmd_search(cfg);
    if (ablate->parsed()) cmd_ablate(cfg, mode);
    if (export_front->parsed()) cmd_export_front(log_path, csv_out);
    if (export_graph->parsed()) cmd_export_graph(graph_path, dot_out);
  } catch (const std::exception& e) {
    std::cerr << "hnas: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
