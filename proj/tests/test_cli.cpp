#include "hnas/config.hpp"
#include "hnas/exports.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

using namespace hnas;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string output;
};

Result hnas_run(const std::string& args, const fs::path& dir) {
  const fs::path log = dir / "cli_output.txt";
  const std::string cmd = std::string("\"") + HNAS_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.output = fs::exists(log) ? read_text(log) : "";
  return r;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("hnas_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string small(const fs::path& out) {
  return "--train 40 --val 16 --test 16 --population 4 --supernet-epochs 1 --base-channels 2 --fusion-epochs 1 "
         "--finetune-epochs 0 --fusion-channels 2 -o \"" +
         out.string() + "\"";
}

}  // namespace

TEST_CASE("gen-data is deterministic") {
  const auto dir = scratch("data");
  REQUIRE(hnas_run("gen-data --seed 3 " + small(dir / "a"), dir).code == 0);
  REQUIRE(hnas_run("gen-data --seed 3 " + small(dir / "b"), dir).code == 0);
  REQUIRE(hnas_run("gen-data --seed 4 " + small(dir / "c"), dir).code == 0);
  for (const char* f : {"train.bin", "val.bin", "test.bin"}) {
    CHECK(read_text(dir / "a" / "data" / f) == read_text(dir / "b" / "data" / f));
    CHECK(read_text(dir / "a" / "data" / f) != read_text(dir / "c" / "data" / f));
  }
  fs::remove_all(dir);
}

TEST_CASE("gen-lut presets differ") {
  const auto dir = scratch("lut");
  REQUIRE(hnas_run("gen-lut --device slow-edge --out \"" + (dir / "slow.json").string() + "\" -o \"" + dir.string() + "\"", dir).code == 0);
  REQUIRE(hnas_run("gen-lut --device fast-gpu --out \"" + (dir / "fast.json").string() + "\" -o \"" + dir.string() + "\"", dir).code == 0);
  const DeviceLUT slow = load_lut(dir / "slow.json");
  const DeviceLUT fast = load_lut(dir / "fast.json");
  CHECK(slow.device != fast.device);
  CHECK_FALSE(slow == fast);
  CHECK(hnas_run("gen-lut --device tpu -o \"" + dir.string() + "\"", dir).code != 0);
  fs::remove_all(dir);
}

TEST_CASE("pipeline with zero generations and the exporters") {
  const auto dir = scratch("pipeline");
  const auto out = dir / "run";
  REQUIRE(hnas_run("gen-data " + small(out), dir).code == 0);
  REQUIRE(hnas_run("gen-lut " + small(out), dir).code == 0);
  REQUIRE(hnas_run("train-supernet " + small(out), dir).code == 0);
  CHECK(fs::exists(out / "supernets.bin"));

  const auto r = hnas_run("search --generations 0 " + small(out), dir);
  CAPTURE(r.output);
  REQUIRE(r.code == 0);
  CHECK(read_text(out / "front.csv") == front_csv({}));
  CHECK(read_text(out / "run_log.jsonl").empty());
  CHECK(fs::exists(out / "config_used.json"));

  const auto csv = dir / "again.csv";
  REQUIRE(hnas_run("export-front --log \"" + (out / "run_log.jsonl").string() + "\" --out \"" + csv.string() + "\"", dir).code == 0);
  CHECK(read_text(csv) == read_text(out / "front.csv"));

  const auto one = hnas_run("search --generations 1 " + small(dir / "one") + " --data-dir \"" + (out / "data").string() +
                                "\" --checkpoint \"" + (out / "supernets.bin").string() + "\" --lut \"" +
                                (out / "lut_slow-edge.json").string() + "\"",
                            dir);
  CAPTURE(one.output);
  REQUIRE(one.code == 0);
  const auto records = read_log(dir / "one" / "run_log.jsonl");
  REQUIRE(records.size() == 1);
  REQUIRE(hnas_run("export-front --log \"" + (dir / "one" / "run_log.jsonl").string() + "\" --out \"" + csv.string() + "\"", dir).code == 0);
  CHECK(read_text(csv) == read_text(dir / "one" / "front.csv"));

  const auto graph = dir / "one" / "graphs" / ("candidate_" + std::to_string(records[0].id) + ".json");
  REQUIRE(fs::exists(graph));
  const auto dot = dir / "g.dot";
  REQUIRE(hnas_run("export-graph --graph \"" + graph.string() + "\" --out \"" + dot.string() + "\"", dir).code == 0);
  CHECK(read_text(dot) == graph_to_dot(load_graph(graph)));
  fs::remove_all(dir);
}

TEST_CASE("failures exit nonzero and name the stage") {
  const auto dir = scratch("fail");
  const auto r = hnas_run("search " + small(dir / "none"), dir);
  CHECK(r.code != 0);
  CHECK(r.output.find("hnas:") != std::string::npos);
  CHECK(r.output.find("config") != std::string::npos);

  write_text(dir / "bad.json", "{\"population\": 0}");
  const auto b = hnas_run("gen-data -c \"" + (dir / "bad.json").string() + "\"", dir);
  CHECK(b.code != 0);
  CHECK(b.output.find("population") != std::string::npos);

  CHECK(hnas_run("ablate --mode nope " + small(dir / "x"), dir).code != 0);
  CHECK(hnas_run("export-front --log /nonexistent/log --out x.csv", dir).code != 0);
  CHECK(hnas_run("frobnicate", dir).code != 0);
  fs::remove_all(dir);
}

TEST_CASE("config file and overrides") {
  const auto dir = scratch("config");
  write_text(dir / "c.json", "{\"seed\": 5, \"dataset\": {\"train\": 12, \"val\": 4, \"test\": 4}, \"output_dir\": \"" +
                                 (dir / "from_file").string() + "\"}");
  REQUIRE(hnas_run("gen-data -c \"" + (dir / "c.json").string() + "\" --train 8", dir).code == 0);
  CHECK(load_dataset(dir / "from_file" / "data" / "train.bin").size() == 8);
  CHECK(load_dataset(dir / "from_file" / "data" / "val.bin").size() == 4);

  const std::string env = std::string(kOutputDirEnv) + "=\"" + (dir / "from_env").string() + "\" ";
  const std::string cmd = env + "\"" + HNAS_CLI_PATH + "\" gen-data -c \"" + (dir / "c.json").string() + "\" > /dev/null 2>&1";
  REQUIRE(std::system(cmd.c_str()) == 0);
  CHECK(fs::exists(dir / "from_env" / "data" / "train.bin"));
  fs::remove_all(dir);
}
