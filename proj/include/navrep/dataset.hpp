#pragma once

#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "navrep/contrastive.hpp"
#include "navrep/instrgen.hpp"
#include "navrep/metrics.hpp"
#include "navrep/worldgen.hpp"

namespace navrep {

// Every artifact file starts with a schema header; loaders reject unknown
// schemas and versions. JSONL files carry it as their first line.
constexpr int kSchemaVersion = 1;

struct Trajectory {
    std::string env_id;
    std::int64_t path_id = -1;
    int language = 0;
    std::vector<int> nodes;
    bool stopped = false;
};

struct Dataset {
    std::map<std::string, EnvGraph> envs;
    std::vector<Path> paths;                                    // path_id == index
    std::vector<std::vector<Instruction>> instructions;         // by path_id
    std::vector<std::int64_t> split_paths[3];                   // indexed by Split

    const EnvGraph& env_of(const Path& p) const;
    const std::vector<std::int64_t>& paths_in(Split s) const {
        return split_paths[static_cast<int>(s)];
    }
};

void write_environments(const std::string& path, const std::vector<EnvGraph>& envs);
std::vector<EnvGraph> read_environments(const std::string& path);

void write_paths(const std::string& path, const std::vector<Path>& paths);
std::vector<Path> read_paths(const std::string& path);

void write_instructions(const std::string& path, const std::vector<std::vector<Instruction>>& by_path);
std::vector<std::vector<Instruction>> read_instructions(const std::string& path);

void write_vocab(const std::string& path);

// manifest.json names the artifact files and per-split counts.
void write_manifest(const std::string& dir, const std::vector<EnvGraph>& envs);
Dataset load_dataset(const std::string& dir);

void write_mined_pairs(const std::string& path, const std::vector<MinedPair>& pairs);
std::vector<MinedPair> read_mined_pairs(const std::string& path);

void write_trajectories(const std::string& path, const std::vector<Trajectory>& trajectories);
std::vector<Trajectory> read_trajectories(const std::string& path);

// EvalReport serialization: deterministic key order, percentages rounded to
// one decimal. Identical reports serialize to identical bytes.
nlohmann::ordered_json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);
void write_report(const std::string& path, const EvalReport& report);
EvalReport read_report(const std::string& path);

// CSV comparison table, one row per report: SR,SPL,NDTW,SDTW x avg,L1,L2,L3.
std::string reports_to_csv(const std::vector<std::pair<std::string, EvalReport>>& rows);

double round1(double v);

// Append-only JSONL run log; the first line snapshots the config and inputs.
class RunLog {
public:
    RunLog() = default;
    RunLog(const std::string& path, const std::string& stage, const nlohmann::ordered_json& config_snapshot,
           const std::map<std::string, std::string>& artifact_hashes);
    void append(const nlohmann::ordered_json& line);
    bool is_open() const { return !path_.empty(); }

private:
    std::string path_;
};

}  // namespace navrep
