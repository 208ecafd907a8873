#include "hnas/exports.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace hnas {

namespace {

using json = nlohmann::ordered_json;

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

json tensor_json(const Tensor& t) {
  json j;
  j["shape"] = t.shape();
  j["data"] = std::vector<double>(t.data().begin(), t.data().end());
  return j;
}

Tensor tensor_from(const json& j) {
  const auto shape = j.at("shape").get<Shape>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Index>(data.size()) != numel(shape)) throw std::runtime_error("tensor data does not match its shape");
  Array values = Eigen::Map<const Array>(data.data(), static_cast<Index>(data.size()));
  return Tensor::from(shape, std::move(values));
}

json topology_json(const std::vector<GraphCell>& cells) {
  json out = json::array();
  for (const auto& c : cells) {
    json cell;
    cell["inputs"] = {c.input_x, c.input_y};
    cell["nodes"] = json::array();
    for (const auto& n : c.nodes) {
      json node;
      node["inputs"] = {n.input_x, n.input_y};
      node["op"] = std::string(to_string(n.op));
      cell["nodes"].push_back(std::move(node));
    }
    out.push_back(std::move(cell));
  }
  return out;
}

std::vector<GraphCell> topology_from(const json& j) {
  std::vector<GraphCell> cells;
  for (const auto& c : j) {
    GraphCell cell;
    cell.input_x = c.at("inputs").at(0).get<int>();
    cell.input_y = c.at("inputs").at(1).get<int>();
    for (const auto& n : c.at("nodes")) {
      GraphNode node;
      node.input_x = n.at("inputs").at(0).get<int>();
      node.input_y = n.at("inputs").at(1).get<int>();
      node.op = fusion_op_from_string(n.at("op").get<std::string>());
      node.params.kind = node.op;
      cell.nodes.push_back(std::move(node));
    }
    cells.push_back(std::move(cell));
  }
  return cells;
}

json cost_json(const Cost& c) {
  json j;
  j["lat_ms"] = c.latency_ms;
  j["ergy_mj"] = c.energy_mj;
  return j;
}

Cost cost_from(const json& j) { return {j.at("lat_ms").get<double>(), j.at("ergy_mj").get<double>()}; }

std::string genome_cell(const BackboneGenome& g) { return encode_string(g); }

std::string modality_name(const std::vector<std::string>& names, std::size_t m) {
  return m < names.size() ? names[m] : "mod" + std::to_string(m);
}

}  // namespace

std::string record_to_json_line(const RunRecord& r) {
  json j;
  j["generation"] = r.generation;
  j["id"] = r.id;
  j["seed"] = r.seed;
  j["backbones"] = json::array();
  for (const auto& b : r.genome.backbones) j["backbones"].push_back({{"modality", b.modality}, {"genome", encode(b)}});
  j["macro"] = {{"C", r.genome.macro.cells}, {"D", r.genome.macro.nodes}};
  j["unimodal"] = json::array();
  for (const auto& u : r.unimodal) {
    json e;
    e["modality"] = u.modality;
    e["acc"] = u.acc;
    e["test_acc"] = u.test_acc;
    e["lat_ms"] = u.cost.latency_ms;
    e["ergy_mj"] = u.cost.energy_mj;
    j["unimodal"].push_back(std::move(e));
  }
  j["acc"] = r.acc;
  j["test_acc"] = r.test_acc;
  j["lat_ms"] = r.cost.latency_ms;
  j["ergy_mj"] = r.cost.energy_mj;
  j["devices"] = json::array();
  for (std::size_t i = 0; i < r.device_costs.size(); ++i) {
    json d = cost_json(r.device_costs[i]);
    d["device"] = i < r.devices.size() ? r.devices[i] : "";
    j["devices"].push_back(std::move(d));
  }
  j["graph"] = topology_json(r.topology);
  return j.dump() + "\n";
}

RunRecord record_from_json_line(std::string_view line, const SearchSpace& space) {
  try {
    const json j = json::parse(line);
    RunRecord r;
    r.generation = j.at("generation").get<int>();
    r.id = j.at("id").get<std::int64_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& b : j.at("backbones")) {
      const auto values = b.at("genome").get<std::vector<int>>();
      r.genome.backbones.push_back(decode(values, space, b.at("modality").get<std::string>()));
    }
    r.genome.macro = {j.at("macro").at("C").get<int>(), j.at("macro").at("D").get<int>()};
    for (const auto& u : j.at("unimodal")) {
      r.unimodal.push_back({u.at("modality").get<std::string>(), u.at("acc").get<double>(),
                            u.at("test_acc").get<double>(), cost_from(u)});
    }
    r.acc = j.at("acc").get<double>();
    r.test_acc = j.at("test_acc").get<double>();
    r.cost = cost_from(j);
    for (const auto& d : j.at("devices")) {
      r.device_costs.push_back(cost_from(d));
      r.devices.push_back(d.at("device").get<std::string>());
    }
    r.topology = topology_from(j.at("graph"));
    return r;
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("malformed run record: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("malformed run record: ") + e.what());
  }
}

std::vector<RunRecord> read_log(const std::filesystem::path& path, const SearchSpace& space) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read log " + path.string());
  std::vector<RunRecord> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    try {
      out.push_back(record_from_json_line(line, space));
    } catch (const std::runtime_error& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return out;
}

std::string front_csv(const std::vector<RunRecord>& records, std::vector<std::string> modalities) {
  if (modalities.empty()) {
    if (records.empty()) {
      modalities = {"mod0", "mod1"};
    } else {
      for (const auto& b : records.front().genome.backbones) modalities.push_back(b.modality);
    }
  }
  std::ostringstream out;
  out << "candidate_id,generation";
  for (const auto& m : modalities) out << ",genome_" << m;
  out << ",C,D,acc,lat_ms,ergy_mj,rank,crowding\n";
  if (records.empty()) return out.str();
  std::vector<ObjectivePoint> points;
  std::map<std::int64_t, const RunRecord*> by_id;
  for (const auto& r : records) {
    points.push_back(r.objectives());
    by_id[r.id] = &r;
  }
  for (const auto& c : eval_score(score(points, kSearchDirections))) {
    const RunRecord& r = *by_id.at(c.point.id);
    out << r.id << ',' << r.generation;
    for (const auto& b : r.genome.backbones) out << ',' << genome_cell(b);
    out << ',' << r.genome.macro.cells << ',' << r.genome.macro.nodes << ',' << fmt(r.acc) << ','
        << fmt(r.cost.latency_ms) << ',' << fmt(r.cost.energy_mj) << ',' << c.rank << ',' << fmt(c.crowding) << '\n';
  }
  return out.str();
}

std::string graph_to_json(const FusionGraph& graph) {
  json j;
  const auto& c = graph.config;
  j["config"] = {{"cells", c.macro.cells},
                 {"nodes", c.macro.nodes},
                 {"fusion_channels", c.fusion_channels},
                 {"num_classes", c.num_classes},
                 {"gate_bias", c.gate_bias},
                 {"source_channels", c.source_channels}};
  j["projections"] = json::array();
  for (const auto& p : graph.projections) {
    j["projections"].push_back({{"scale", p.scale}, {"weight", tensor_json(p.weight)}, {"bias", tensor_json(p.bias)}});
  }
  j["cells"] = topology_json(graph.cells);
  for (std::size_t p = 0; p < graph.cells.size(); ++p) {
    for (std::size_t d = 0; d < graph.cells[p].nodes.size(); ++d) {
      auto& params = j["cells"][p]["nodes"][d]["params"];
      params = json::array();
      for (const auto& t : graph.cells[p].nodes[d].params.tensors) params.push_back(tensor_json(t));
    }
  }
  j["head"] = {{"weight", tensor_json(graph.head_weight)}, {"bias", tensor_json(graph.head_bias)}};
  return j.dump(1) + "\n";
}

FusionGraph graph_from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    FusionGraph g;
    const auto& c = j.at("config");
    g.config.macro = {c.at("cells").get<int>(), c.at("nodes").get<int>()};
    g.config.fusion_channels = c.at("fusion_channels").get<int>();
    g.config.num_classes = c.at("num_classes").get<int>();
    g.config.gate_bias = c.at("gate_bias").get<double>();
    g.config.source_channels = c.at("source_channels").get<std::vector<std::vector<int>>>();
    for (const auto& p : j.at("projections")) {
      g.projections.push_back({tensor_from(p.at("weight")), tensor_from(p.at("bias")), p.at("scale").get<double>()});
    }
    g.cells = topology_from(j.at("cells"));
    for (std::size_t p = 0; p < g.cells.size(); ++p) {
      for (std::size_t d = 0; d < g.cells[p].nodes.size(); ++d) {
        for (const auto& t : j.at("cells").at(p).at("nodes").at(d).at("params")) {
          g.cells[p].nodes[d].params.tensors.push_back(tensor_from(t));
        }
      }
    }
    g.head_weight = tensor_from(j.at("head").at("weight"));
    g.head_bias = tensor_from(j.at("head").at("bias"));
    g.validate();
    return g;
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("malformed fusion graph: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("malformed fusion graph: ") + e.what());
  } catch (const std::out_of_range& e) {
    throw std::runtime_error(std::string("malformed fusion graph: ") + e.what());
  }
}

void save_graph(const FusionGraph& graph, const std::filesystem::path& path) { write_text(path, graph_to_json(graph)); }

FusionGraph load_graph(const std::filesystem::path& path) { return graph_from_json(read_text(path)); }

std::string topology_to_dot(const std::vector<GraphCell>& cells, const std::vector<int>& blocks_per_modality,
                            const std::vector<std::string>& modalities) {
  std::ostringstream out;
  out << "digraph fusion {\n  rankdir=LR;\n";
  std::vector<std::string> candidates;
  for (std::size_t m = 0; m < blocks_per_modality.size(); ++m) {
    for (int b = 0; b < blocks_per_modality[m]; ++b) {
      const std::string id = "s" + std::to_string(candidates.size());
      out << "  " << id << " [shape=box, label=\"" << modality_name(modalities, m) << " block " << b << "\"];\n";
      candidates.push_back(id);
    }
  }
  for (std::size_t p = 0; p < cells.size(); ++p) {
    const auto& cell = cells[p];
    const auto pick = [&](int k) -> const std::string& {
      if (k < 0 || static_cast<std::size_t>(k) >= candidates.size()) {
        throw std::out_of_range("cell " + std::to_string(p) + " input " + std::to_string(k) + " is dangling");
      }
      return candidates[static_cast<std::size_t>(k)];
    };
    std::vector<std::string> inner{pick(cell.input_x), pick(cell.input_y)};
    for (std::size_t d = 0; d < cell.nodes.size(); ++d) {
      const auto& n = cell.nodes[d];
      const std::string id = "c" + std::to_string(p) + "n" + std::to_string(d);
      out << "  " << id << " [label=\"cell " << p << " node " << d << "\\n" << to_string(n.op) << "\"];\n";
      for (int k : {n.input_x, n.input_y}) {
        if (k < 0 || static_cast<std::size_t>(k) >= inner.size()) {
          throw std::out_of_range("cell " + std::to_string(p) + " node " + std::to_string(d) + " input is dangling");
        }
        out << "  " << inner[static_cast<std::size_t>(k)] << " -> " << id << ";\n";
      }
      inner.push_back(id);
    }
    candidates.push_back(inner.back());
  }
  out << "  head [shape=doublecircle, label=\"head\"];\n";
  if (!cells.empty()) out << "  " << candidates.back() << " -> head;\n";
  out << "}\n";
  return out.str();
}

std::string graph_to_dot(const FusionGraph& graph, const std::vector<std::string>& modalities) {
  std::vector<int> blocks;
  for (const auto& m : graph.config.source_channels) blocks.push_back(static_cast<int>(m.size()));
  return topology_to_dot(graph.cells, blocks, modalities);
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "mode,label,acc,test_acc,lat_ms,ergy_mj,ops\n";
  for (const auto& r : rows) {
    out << r.mode << ',' << r.label << ',' << fmt(r.acc) << ',' << fmt(r.test_acc) << ',' << fmt(r.cost.latency_ms)
        << ',' << fmt(r.cost.energy_mj) << ',';
    for (std::size_t i = 0; i < r.ops.size(); ++i) out << (i ? " " : "") << to_string(r.ops[i]);
    out << '\n';
  }
  return out.str();
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace hnas
