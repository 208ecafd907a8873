#pragma once

// Run logs (JSON lines), front CSVs, fusion graph documents and DOT views.

#include "hnas/engine.hpp"
#include "hnas/fusion.hpp"
#include "hnas/searchspace.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace hnas {

// One line, newline-terminated, no timings.
std::string record_to_json_line(const RunRecord& record);
// std::runtime_error on malformed input; the graph pointer stays null.
RunRecord record_from_json_line(std::string_view line, const SearchSpace& space = {});
std::vector<RunRecord> read_log(const std::filesystem::path& path, const SearchSpace& space = {});

// candidate_id, generation, genome_<modality>..., C, D, acc, lat_ms, ergy_mj,
// rank, crowding; every record, in eval_score order over the whole set.
std::string front_csv(const std::vector<RunRecord>& records, std::vector<std::string> modalities = {});

std::string graph_to_json(const FusionGraph& graph);
FusionGraph graph_from_json(std::string_view text);
void save_graph(const FusionGraph& graph, const std::filesystem::path& path);
FusionGraph load_graph(const std::filesystem::path& path);

// Sources are labeled "<modality> block <j>"; modality names default to
// mod0, mod1, ...
std::string graph_to_dot(const FusionGraph& graph, const std::vector<std::string>& modalities = {});
// Same view from a topology without parameters.
std::string topology_to_dot(const std::vector<GraphCell>& cells, const std::vector<int>& blocks_per_modality,
                            const std::vector<std::string>& modalities = {});

std::string ablation_csv(const std::vector<AblationRow>& rows);

void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

}  // namespace hnas
