#include "navrep/config.hpp"

#include <fstream>
#include <set>

#include "navrep/contrastive.hpp"
#include "navrep/error.hpp"
#include "navrep/instrgen.hpp"

namespace navrep {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& field, const std::string& why) {
    throw ConfigError("config field '" + field + "': " + why);
}

void check_known_keys(const json& j, const std::string& scope, const std::set<std::string>& known) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!known.count(it.key())) fail(scope + "." + it.key(), "unknown key");
    }
}

template <typename T>
void get_to(const json& j, const std::string& scope, const std::string& key, T& out) {
    if (!j.contains(key)) return;
    try {
        j.at(key).get_to(out);
    } catch (const json::exception& e) {
        fail(scope + "." + key, std::string("wrong type (") + e.what() + ")");
    }
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    ExperimentConfig cfg;
    check_known_keys(j, "",
                     {"seed", "world", "language", "pretrain_lang", "mine", "pretrain_vis", "nav"});
    get_to(j, "", "seed", cfg.seed);
    if (j.contains("world")) {
        const auto& w = j.at("world");
        check_known_keys(w, "world",
                         {"num_train", "num_val_seen", "num_val_unseen", "nodes", "degree", "object_density",
                          "feature_dim", "alpha", "noise_std", "paths_per_env", "val_paths_per_env",
                          "path_len_min", "path_len_max"});
        get_to(w, "world", "num_train", cfg.world.num_train);
        get_to(w, "world", "num_val_seen", cfg.world.num_val_seen);
        get_to(w, "world", "num_val_unseen", cfg.world.num_val_unseen);
        get_to(w, "world", "nodes", cfg.world.nodes);
        get_to(w, "world", "degree", cfg.world.degree);
        get_to(w, "world", "object_density", cfg.world.object_density);
        get_to(w, "world", "feature_dim", cfg.world.feature_dim);
        get_to(w, "world", "alpha", cfg.world.alpha);
        get_to(w, "world", "noise_std", cfg.world.noise_std);
        get_to(w, "world", "paths_per_env", cfg.world.paths_per_env);
        get_to(w, "world", "val_paths_per_env", cfg.world.val_paths_per_env);
        get_to(w, "world", "path_len_min", cfg.world.path_len_min);
        get_to(w, "world", "path_len_max", cfg.world.path_len_max);
    }
    if (j.contains("language")) {
        const auto& l = j.at("language");
        check_known_keys(l, "language", {"mention_rates", "filler_rates"});
        get_to(l, "language", "mention_rates", cfg.language.mention_rates);
        get_to(l, "language", "filler_rates", cfg.language.filler_rates);
    }
    if (j.contains("pretrain_lang")) {
        const auto& p = j.at("pretrain_lang");
        check_known_keys(p, "pretrain_lang",
                         {"strategy", "tau", "batch", "iters", "lr", "weight_decay", "symmetric", "dropout",
                          "dim", "layers"});
        get_to(p, "pretrain_lang", "strategy", cfg.pretrain_lang.strategy);
        get_to(p, "pretrain_lang", "tau", cfg.pretrain_lang.tau);
        get_to(p, "pretrain_lang", "batch", cfg.pretrain_lang.batch);
        get_to(p, "pretrain_lang", "iters", cfg.pretrain_lang.iters);
        get_to(p, "pretrain_lang", "lr", cfg.pretrain_lang.lr);
        get_to(p, "pretrain_lang", "weight_decay", cfg.pretrain_lang.weight_decay);
        get_to(p, "pretrain_lang", "symmetric", cfg.pretrain_lang.symmetric);
        get_to(p, "pretrain_lang", "dropout", cfg.pretrain_lang.dropout);
        get_to(p, "pretrain_lang", "dim", cfg.pretrain_lang.dim);
        get_to(p, "pretrain_lang", "layers", cfg.pretrain_lang.layers);
    }
    if (j.contains("mine")) {
        check_known_keys(j.at("mine"), "mine", {"threshold"});
        get_to(j.at("mine"), "mine", "threshold", cfg.mine.threshold);
    }
    if (j.contains("pretrain_vis")) {
        const auto& p = j.at("pretrain_vis");
        check_known_keys(p, "pretrain_vis", {"tau", "batch", "iters", "lr", "object_mode", "sample_size"});
        get_to(p, "pretrain_vis", "tau", cfg.pretrain_vis.tau);
        get_to(p, "pretrain_vis", "batch", cfg.pretrain_vis.batch);
        get_to(p, "pretrain_vis", "iters", cfg.pretrain_vis.iters);
        get_to(p, "pretrain_vis", "lr", cfg.pretrain_vis.lr);
        get_to(p, "pretrain_vis", "object_mode", cfg.pretrain_vis.object_mode);
        get_to(p, "pretrain_vis", "sample_size", cfg.pretrain_vis.sample_size);
    }
    if (j.contains("nav")) {
        const auto& n = j.at("nav");
        check_known_keys(n, "nav",
                         {"hidden", "action_embed_dim", "lambda_il", "discount", "entropy_coef", "il_batch",
                          "rl_batch", "iters", "lr_lang", "lr_other", "horizon_slack", "ndtw_reward_clip",
                          "probe_every", "probe_episodes", "from_scratch"});
        get_to(n, "nav", "hidden", cfg.nav.hidden);
        get_to(n, "nav", "action_embed_dim", cfg.nav.action_embed_dim);
        get_to(n, "nav", "lambda_il", cfg.nav.lambda_il);
        get_to(n, "nav", "discount", cfg.nav.discount);
        get_to(n, "nav", "entropy_coef", cfg.nav.entropy_coef);
        get_to(n, "nav", "il_batch", cfg.nav.il_batch);
        get_to(n, "nav", "rl_batch", cfg.nav.rl_batch);
        get_to(n, "nav", "iters", cfg.nav.iters);
        get_to(n, "nav", "lr_lang", cfg.nav.lr_lang);
        get_to(n, "nav", "lr_other", cfg.nav.lr_other);
        get_to(n, "nav", "horizon_slack", cfg.nav.horizon_slack);
        get_to(n, "nav", "ndtw_reward_clip", cfg.nav.ndtw_reward_clip);
        get_to(n, "nav", "probe_every", cfg.nav.probe_every);
        get_to(n, "nav", "probe_episodes", cfg.nav.probe_episodes);
        get_to(n, "nav", "from_scratch", cfg.nav.from_scratch);
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
    }
    return from_json(j);
}

void ExperimentConfig::validate() const {
    if (world.num_train < 1) fail("world.num_train", "must be >= 1");
    if (world.num_val_seen < 1) fail("world.num_val_seen", "must be >= 1");
    if (world.num_val_seen > world.num_train)
        fail("world.num_val_seen", "cannot exceed world.num_train (val-seen paths live in training envs)");
    if (world.val_paths_per_env < 1) fail("world.val_paths_per_env", "must be >= 1");
    if (world.num_val_unseen < 1) fail("world.num_val_unseen", "must be >= 1");
    if (world.nodes < 4) fail("world.nodes", "must be >= 4");
    if (world.degree < 1) fail("world.degree", "must be >= 1");
    if (world.feature_dim < 4) fail("world.feature_dim", "must be >= 4");
    if (world.alpha < 0) fail("world.alpha", "must be >= 0");
    if (world.noise_std < 0) fail("world.noise_std", "must be >= 0");
    if (world.paths_per_env < 1) fail("world.paths_per_env", "must be >= 1");
    if (world.path_len_min < 2) fail("world.path_len_min", "must be >= 2");
    if (world.path_len_max < world.path_len_min) fail("world.path_len_max", "must be >= path_len_min");
    if (language.mention_rates.size() != kNumLanguages) fail("language.mention_rates", "needs 3 entries");
    if (language.filler_rates.size() != kNumLanguages) fail("language.filler_rates", "needs 3 entries");
    for (double r : language.mention_rates)
        if (r < 0 || r > 1) fail("language.mention_rates", "rates must be in [0,1]");
    for (double r : language.filler_rates)
        if (r < 0 || r > 1) fail("language.filler_rates", "rates must be in [0,1]");
    PairStrategy::parse(pretrain_lang.strategy);  // throws ConfigError itself
    if (pretrain_lang.tau <= 0) fail("pretrain_lang.tau", "must be positive");
    if (pretrain_lang.batch < 2) fail("pretrain_lang.batch", "must be >= 2");
    if (pretrain_lang.iters < 0) fail("pretrain_lang.iters", "must be >= 0");
    if (pretrain_lang.lr <= 0) fail("pretrain_lang.lr", "must be positive");
    if (pretrain_lang.dropout < 0 || pretrain_lang.dropout >= 1) fail("pretrain_lang.dropout", "must be in [0,1)");
    if (pretrain_lang.dim < 2 || pretrain_lang.dim % 2 != 0) fail("pretrain_lang.dim", "must be even and >= 2");
    if (pretrain_lang.layers < 1) fail("pretrain_lang.layers", "must be >= 1");
    if (mine.threshold < 0 || mine.threshold > 1) fail("mine.threshold", "must be in [0,1]");
    if (pretrain_vis.tau <= 0) fail("pretrain_vis.tau", "must be positive");
    if (pretrain_vis.batch < 2) fail("pretrain_vis.batch", "must be >= 2");
    if (pretrain_vis.iters < 0) fail("pretrain_vis.iters", "must be >= 0");
    if (pretrain_vis.lr <= 0) fail("pretrain_vis.lr", "must be positive");
    parse_object_mode(pretrain_vis.object_mode);
    if (pretrain_vis.sample_size < 1 || pretrain_vis.sample_size > kNumObjectClasses)
        fail("pretrain_vis.sample_size", "must be in [1,27]");
    if (nav.hidden < 2) fail("nav.hidden", "must be >= 2");
    if (nav.action_embed_dim < 1) fail("nav.action_embed_dim", "must be >= 1");
    if (nav.lambda_il < 0) fail("nav.lambda_il", "must be >= 0");
    if (nav.discount < 0 || nav.discount > 1) fail("nav.discount", "must be in [0,1]");
    if (nav.il_batch < 0 || nav.rl_batch < 0) fail("nav.il_batch/rl_batch", "must be >= 0");
    if (nav.il_batch + nav.rl_batch == 0) fail("nav.il_batch/rl_batch", "at least one batch must be nonempty");
    if (nav.iters < 0) fail("nav.iters", "must be >= 0");
    if (nav.lr_lang <= 0 || nav.lr_other <= 0) fail("nav.lr_lang/lr_other", "must be positive");
    if (nav.horizon_slack < 1) fail("nav.horizon_slack", "must be >= 1");
    if (nav.probe_every < 0) fail("nav.probe_every", "must be >= 0");
}

nlohmann::ordered_json ExperimentConfig::to_json() const {
    nlohmann::ordered_json j;
    j["seed"] = seed;
    j["world"] = {{"num_train", world.num_train},
                  {"num_val_seen", world.num_val_seen},
                  {"num_val_unseen", world.num_val_unseen},
                  {"nodes", world.nodes},
                  {"degree", world.degree},
                  {"object_density", world.object_density},
                  {"feature_dim", world.feature_dim},
                  {"alpha", world.alpha},
                  {"noise_std", world.noise_std},
                  {"paths_per_env", world.paths_per_env},
                  {"val_paths_per_env", world.val_paths_per_env},
                  {"path_len_min", world.path_len_min},
                  {"path_len_max", world.path_len_max}};
    j["language"] = {{"mention_rates", language.mention_rates}, {"filler_rates", language.filler_rates}};
    j["pretrain_lang"] = {{"strategy", pretrain_lang.strategy},
                          {"tau", pretrain_lang.tau},
                          {"batch", pretrain_lang.batch},
                          {"iters", pretrain_lang.iters},
                          {"lr", pretrain_lang.lr},
                          {"weight_decay", pretrain_lang.weight_decay},
                          {"symmetric", pretrain_lang.symmetric},
                          {"dropout", pretrain_lang.dropout},
                          {"dim", pretrain_lang.dim},
                          {"layers", pretrain_lang.layers}};
    j["mine"] = {{"threshold", mine.threshold}};
    j["pretrain_vis"] = {{"tau", pretrain_vis.tau},
                         {"batch", pretrain_vis.batch},
                         {"iters", pretrain_vis.iters},
                         {"lr", pretrain_vis.lr},
                         {"object_mode", pretrain_vis.object_mode},
                         {"sample_size", pretrain_vis.sample_size}};
    j["nav"] = {{"hidden", nav.hidden},
                {"action_embed_dim", nav.action_embed_dim},
                {"lambda_il", nav.lambda_il},
                {"discount", nav.discount},
                {"entropy_coef", nav.entropy_coef},
                {"il_batch", nav.il_batch},
                {"rl_batch", nav.rl_batch},
                {"iters", nav.iters},
                {"lr_lang", nav.lr_lang},
                {"lr_other", nav.lr_other},
                {"horizon_slack", nav.horizon_slack},
                {"ndtw_reward_clip", nav.ndtw_reward_clip},
                {"probe_every", nav.probe_every},
                {"probe_episodes", nav.probe_episodes},
                {"from_scratch", nav.from_scratch}};
    return j;
}

}  // namespace navrep
