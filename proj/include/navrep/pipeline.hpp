#pragma once

#include <optional>
#include <string>
#include <vector>

#include "navrep/agent.hpp"
#include "navrep/config.hpp"
#include "navrep/dataset.hpp"

namespace navrep {

// Stage drivers behind the CLI subcommands. Each is deterministic in
// (config, inputs): all randomness flows through named substreams of the
// experiment seed.

void run_gen_world(const ExperimentConfig& cfg, const std::string& out_dir);
void run_gen_instr(const ExperimentConfig& cfg, const std::string& data_dir);

struct PretrainLangResult {
    double first_loss = 0.0;   // per-anchor loss of the first batch
    double final_loss = 0.0;   // per-anchor loss of the last batch
};
PretrainLangResult run_pretrain_lang(const ExperimentConfig& cfg, const std::string& data_dir,
                                     const std::string& out_ckpt, const std::string& runlog_path = "");

struct MineResult {
    std::size_t mined = 0;
    std::size_t kept = 0;     // after the similarity filter
    int skipped = 0;          // queries with no eligible candidate
};
MineResult run_mine_pairs(const ExperimentConfig& cfg, const std::string& data_dir,
                          const std::string& lang_ckpt, const std::string& out_pairs);

struct PretrainVisResult {
    double final_loss = 0.0;  // per-anchor loss of the last non-skipped batch
    int skipped_batches = 0;  // batches with no eligible anchor
};
PretrainVisResult run_pretrain_vis(const ExperimentConfig& cfg, const std::string& data_dir,
                                   const std::string& pairs_file, const std::string& out_ckpt,
                                   const std::string& runlog_path = "");

struct TrainNavResult {
    double final_il_loss = 0.0;
    double final_rl_loss = 0.0;
    double last_probe_sr = 0.0;  // percent, greedy policy on the probe set
};
// lang_ckpt/vis_ckpt empty only with cfg.nav.from_scratch.
TrainNavResult run_train_nav(const ExperimentConfig& cfg, const std::string& data_dir,
                             const std::string& lang_ckpt, const std::string& vis_ckpt,
                             const std::string& out_ckpt, const std::string& runlog_path = "");

enum class EvalPolicy { greedy, teacher };
struct EvalOptions {
    Split split = Split::val_unseen;
    EvalPolicy policy = EvalPolicy::greedy;
    int workers = 1;
    std::string trajectories_out;   // optional JSONL
    std::string attention_dir;      // optional per-episode attention dumps
};
EvalReport run_eval(const ExperimentConfig& cfg, const std::string& data_dir, const std::string& ckpt,
                    const EvalOptions& options);

// Scores pre-recorded trajectories against the dataset's reference paths.
EvalReport eval_trajectories(const Dataset& ds, const std::vector<Trajectory>& trajectories,
                             const std::string& split, const std::string& checkpoint_hash);

// In-batch retrieval probe: fraction of anchors whose nearest in-batch
// embedding (among 2N-1 candidates) is their positive partner.
struct RetrievalProbe {
    double accuracy = 0.0;        // pairs drawn with the given strategy
    double cross_language = 0.0;  // pairs constrained to two distinct languages
    int batches = 0;
};
RetrievalProbe retrieval_probe(const ExperimentConfig& cfg, const Dataset& ds, ParamStore& store,
                               int batch_pairs, int batches, std::uint64_t seed);

// Batch-averaged per-anchor language loss on deterministic probe batches
// (no training); used to measure progress across checkpoints.
double lang_probe_loss(const ExperimentConfig& cfg, const Dataset& ds, ParamStore& store, int batches,
                       std::uint64_t seed);

// Dotted-path config override ("pretrain_lang.strategy" = "mono"); the value
// is parsed as JSON when possible, else taken as a string.
nlohmann::json apply_override(nlohmann::json base, const std::string& dotted_key, const std::string& value);

struct AblateCell {
    std::string label;
    EvalReport val_seen;
    EvalReport val_unseen;
};
// Expands the axis over the base config and runs the full pipeline per cell
// into out_dir/<label>/; shares the generated dataset across cells. Returns
// cells in axis order and writes comparison.csv.
std::vector<AblateCell> run_ablate(const nlohmann::json& base_config, const std::string& dotted_key,
                                   const std::vector<std::string>& values, const std::string& out_dir);

}  // namespace navrep
