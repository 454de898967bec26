#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace navrep {

struct WorldConfig {
    int num_train = 24;      // train-seen environments
    int num_val_seen = 4;    // how many train-seen envs host held-out val-seen paths
    int num_val_unseen = 4;  // val-unseen environments
    int nodes = 12;
    int degree = 3;
    double object_density = 5.0;
    int feature_dim = 64;
    double alpha = 1.0;
    double noise_std = 0.1;
    int paths_per_env = 40;      // training paths per train-seen env
    int val_paths_per_env = 10;  // held-out paths per hosting env / per val-unseen env
    int path_len_min = 4;
    int path_len_max = 7;
};

struct LanguageConfig {
    std::vector<double> mention_rates = {0.9, 0.7, 0.5};
    std::vector<double> filler_rates = {0.15, 0.25, 0.4};
};

struct LangPretrainConfig {
    std::string strategy = "multi";
    double tau = 0.1;
    int batch = 16;
    int iters = 600;
    double lr = 1e-3;
    double weight_decay = 0.01;
    bool symmetric = false;
    double dropout = 0.0;
    int dim = 64;
    int layers = 2;
};

struct MineConfig {
    double threshold = 0.0;
};

struct VisPretrainConfig {
    double tau = 0.1;
    int batch = 8;
    int iters = 400;
    double lr = 1e-3;
    std::string object_mode = "sampled-10";
    int sample_size = 10;
};

struct NavTrainConfig {
    int hidden = 128;
    int action_embed_dim = 128;
    double lambda_il = 0.4;
    double discount = 0.9;
    double entropy_coef = 0.01;
    int il_batch = 4;
    int rl_batch = 4;
    int iters = 800;
    double lr_lang = 1e-3;
    double lr_other = 1e-3;
    int horizon_slack = 4;
    bool ndtw_reward_clip = false;
    int probe_every = 100;
    int probe_episodes = 12;
    bool from_scratch = false;
};

struct ExperimentConfig {
    std::uint64_t seed = 7;
    WorldConfig world;
    LanguageConfig language;
    LangPretrainConfig pretrain_lang;
    MineConfig mine;
    VisPretrainConfig pretrain_vis;
    NavTrainConfig nav;

    // Parses and validates; unknown keys and out-of-range values raise
    // ConfigError naming the offending field.
    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig load(const std::string& path);
    // Full snapshot (every field), for run-log provenance.
    nlohmann::ordered_json to_json() const;
    void validate() const;
};

}  // namespace navrep
