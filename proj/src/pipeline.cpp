#include "navrep/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <thread>
#include <unordered_map>

#include "navrep/contrastive.hpp"
#include "navrep/diagnostics.hpp"
#include "navrep/error.hpp"
#include "navrep/kernels.hpp"

namespace navrep {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

EnvSpec env_spec_from(const WorldConfig& w) {
    EnvSpec s;
    s.num_nodes = w.nodes;
    s.degree = w.degree;
    s.object_density = w.object_density;
    s.feature_dim = w.feature_dim;
    s.alpha = w.alpha;
    s.noise_std = w.noise_std;
    return s;
}

std::vector<LanguageSpec> languages_from(const LanguageConfig& l) {
    auto langs = default_languages();
    for (int i = 0; i < kNumLanguages; ++i) {
        langs[static_cast<std::size_t>(i)].mention_rate = l.mention_rates[static_cast<std::size_t>(i)];
        langs[static_cast<std::size_t>(i)].filler_rate = l.filler_rates[static_cast<std::size_t>(i)];
    }
    return langs;
}

LangEncoder lang_encoder_from(const ExperimentConfig& cfg) {
    LangEncoderConfig c;
    c.vocab_size = kVocabSize;
    c.dim = cfg.pretrain_lang.dim;
    c.layers = cfg.pretrain_lang.layers;
    c.dropout = cfg.pretrain_lang.dropout;
    return LangEncoder(c);
}

VisEncoder vis_encoder_from(const ExperimentConfig& cfg) {
    return VisEncoder(VisEncoderConfig{.dim = cfg.world.feature_dim, .prefix = "vis."});
}

NavDecoder nav_decoder_from(const ExperimentConfig& cfg) {
    NavConfig c;
    c.hidden = cfg.nav.hidden;
    c.action_embed_dim = cfg.nav.action_embed_dim;
    c.lambda_il = cfg.nav.lambda_il;
    c.discount = cfg.nav.discount;
    c.entropy_coef = cfg.nav.entropy_coef;
    c.horizon_slack = cfg.nav.horizon_slack;
    c.ndtw_reward_clip = cfg.nav.ndtw_reward_clip;
    return NavDecoder(c, cfg.world.feature_dim, cfg.pretrain_lang.dim);
}

// Per-environment panorama feature cache (features are pure in the env seed).
class PanoramaCache {
public:
    const Tensor& features(const EnvGraph& env, int node) {
        auto& per_env = cache_[env.env_id];
        if (per_env.empty()) per_env.resize(static_cast<std::size_t>(env.num_nodes()));
        auto& slot = per_env[static_cast<std::size_t>(node)];
        if (!slot) slot = render_panorama(env, node).features;
        return *slot;
    }

private:
    std::unordered_map<std::string, std::vector<std::optional<Tensor>>> cache_;
};

std::map<std::string, std::string> hash_inputs(const std::vector<std::pair<std::string, std::string>>& files) {
    std::map<std::string, std::string> out;
    for (const auto& [label, path] : files)
        if (!path.empty() && fs::exists(path)) out[label] = file_hash_hex(path);
    return out;
}

EpisodeScore score_episode(const EnvGraph& env, const Path& gt, const std::vector<int>& visited, bool stopped,
                           int language) {
    EpisodeScore s;
    s.env_id = env.env_id;
    s.path_id = gt.path_id;
    s.language = language;
    // an episode that never stopped is failed regardless of where it ended
    const bool ok = stopped && success(env, visited, gt.nodes);
    s.sr = ok ? 1.0 : 0.0;
    const double shortest = env.geodesic(gt.nodes.front(), gt.nodes.back());
    const double taken = path_length(env, visited);
    s.spl = shortest > 0.0 ? spl(ok, shortest, taken) : (ok ? 1.0 : 0.0);
    s.ndtw = ndtw(env, visited, gt.nodes);
    s.sdtw = ok ? s.ndtw : 0.0;
    return s;
}

}  // namespace

void run_gen_world(const ExperimentConfig& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    Rng stage = Rng(cfg.seed).substream("worldgen");
    const EnvSpec spec = env_spec_from(cfg.world);

    std::vector<EnvGraph> envs;
    auto gen_envs = [&](Split tag, const char* prefix, int count) {
        for (int i = 0; i < count; ++i) {
            char id[32];
            std::snprintf(id, sizeof(id), "%s-%02d", prefix, i);
            EnvGraph env = generate_environment(id, stage.substream(id).seed(), spec);
            env.split = tag;
            envs.push_back(std::move(env));
        }
    };
    gen_envs(Split::train_seen, "train", cfg.world.num_train);
    gen_envs(Split::val_unseen, "unseen", cfg.world.num_val_unseen);

    // Paths: training paths in every train-seen env; held-out val-seen paths
    // in the first num_val_seen train-seen envs (familiar worlds, new routes);
    // val-unseen paths in the never-trained envs. Starts too close to goals
    // are resampled so the 3m success radius stays meaningful.
    std::vector<Path> paths;
    Rng path_stage = Rng(cfg.seed).substream("paths");
    auto add_paths = [&](const EnvGraph& env, Split split, int count, Rng& env_rng) {
        for (int p = 0; p < count; ++p) {
            const int len = cfg.world.path_len_min +
                            static_cast<int>(env_rng.uniform_int(
                                static_cast<std::uint64_t>(cfg.world.path_len_max - cfg.world.path_len_min + 1)));
            Path path;
            bool ok = false;
            for (int attempt = 0; attempt < 40 && !ok; ++attempt) {
                path = sample_path(env, len, env_rng.next_u64());
                ok = env.geodesic(path.nodes.front(), path.nodes.back()) > kSuccessRadius;
            }
            path.path_id = static_cast<std::int64_t>(paths.size());
            path.split = split;
            paths.push_back(std::move(path));
        }
    };
    int train_idx = 0;
    for (const EnvGraph& env : envs) {
        Rng env_rng = path_stage.substream(env.env_id);
        if (env.split == Split::train_seen) {
            add_paths(env, Split::train_seen, cfg.world.paths_per_env, env_rng);
            if (train_idx < cfg.world.num_val_seen)
                add_paths(env, Split::val_seen, cfg.world.val_paths_per_env, env_rng);
            ++train_idx;
        } else {
            add_paths(env, Split::val_unseen, cfg.world.val_paths_per_env, env_rng);
        }
    }

    write_environments(out_dir + "/environments.jsonl", envs);
    write_paths(out_dir + "/paths.jsonl", paths);
    // instructions arrive with gen-instr; write an empty placeholder list
    write_manifest(out_dir, envs);
}

void run_gen_instr(const ExperimentConfig& cfg, const std::string& data_dir) {
    Dataset ds = load_dataset(data_dir);
    const auto langs = languages_from(cfg.language);
    Rng stage = Rng(cfg.seed).substream("instrgen");
    std::vector<std::vector<Instruction>> by_path;
    by_path.reserve(ds.paths.size());
    for (const Path& path : ds.paths) {
        // Seeded by the frame, not the path id: identical frames verbalize
        // identically corpus-wide, which grounds path-pair mining.
        const std::uint64_t seed = mix_seed(stage.seed(), frame_hash(path.frame));
        by_path.push_back(generate_instructions(path, seed, langs));
    }
    write_instructions(data_dir + "/instructions.jsonl", by_path);
    write_vocab(data_dir + "/vocab.json");
}

namespace {

// Shared machinery for sampling a batch of instruction pairs and embedding
// both sides on one tape.
struct PairBatch {
    std::vector<Var> first, second;
    std::vector<const Instruction*> first_src, second_src;
};

PairBatch embed_pair_batch(const Dataset& ds, const std::vector<std::int64_t>& pool, const PairStrategy& strategy,
                           const LangEncoder& enc, ParamCtx& P, int n_pairs, Rng& rng) {
    if (static_cast<int>(pool.size()) < n_pairs)
        throw DataError("not enough training paths for the requested batch size");
    auto picked = rng.sample_without_replacement(pool.size(), static_cast<std::size_t>(n_pairs));
    PairBatch batch;
    for (std::size_t i : picked) {
        const auto& group = ds.instructions.at(static_cast<std::size_t>(pool[i]));
        std::vector<const Instruction*> ptrs;
        for (const auto& ins : group) ptrs.push_back(&ins);
        auto [a, b] = sample_instruction_pair(ptrs, strategy, rng);
        batch.first.push_back(enc.encode(P, a->tokens).sentence);
        batch.second.push_back(enc.encode(P, b->tokens).sentence);
        batch.first_src.push_back(a);
        batch.second_src.push_back(b);
    }
    return batch;
}

}  // namespace

PretrainLangResult run_pretrain_lang(const ExperimentConfig& cfg, const std::string& data_dir,
                                     const std::string& out_ckpt, const std::string& runlog_path) {
    Dataset ds = load_dataset(data_dir);
    if (ds.instructions.empty()) throw DataError("dataset has no instructions; run gen-instr first");
    const auto strategy = PairStrategy::parse(cfg.pretrain_lang.strategy);
    LangEncoder enc = lang_encoder_from(cfg);
    ParamStore store;
    Rng init = Rng(cfg.seed).substream("pretrain-lang-init");
    enc.init_params(store, init);

    AdamW opt;
    opt.lr = cfg.pretrain_lang.lr;
    opt.weight_decay = cfg.pretrain_lang.weight_decay;

    RunLog log;
    if (!runlog_path.empty())
        log = RunLog(runlog_path, "pretrain-lang", cfg.to_json(),
                     hash_inputs({{"manifest", data_dir + "/manifest.json"}}));

    Rng rng = Rng(cfg.seed).substream("pretrain-lang");
    Rng dropout_rng = rng.substream("dropout");
    PretrainLangResult result;
    for (int iter = 0; iter < cfg.pretrain_lang.iters; ++iter) {
        store.zero_grad();
        Tape tape;
        ParamCtx P(tape, store);
        PairBatch batch = embed_pair_batch(ds, ds.paths_in(Split::train_seen), strategy, enc, P,
                                           cfg.pretrain_lang.batch, rng);
        Var loss = lang_loss(batch.first, batch.second, cfg.pretrain_lang.tau, cfg.pretrain_lang.symmetric);
        const double per_anchor = loss.scalar() / static_cast<double>(batch.first.size());
        Var objective = scale(loss, 1.0 / static_cast<double>(batch.first.size()));
        tape.backward(objective);
        opt.step(store, "lang.");
        (void)dropout_rng;
        if (iter == 0) result.first_loss = per_anchor;
        result.final_loss = per_anchor;
        log.append({{"iter", iter}, {"lang_loss", per_anchor}});
    }
    save_checkpoint(store, out_ckpt);
    return result;
}

MineResult run_mine_pairs(const ExperimentConfig& cfg, const std::string& data_dir,
                          const std::string& lang_ckpt, const std::string& out_pairs) {
    Dataset ds = load_dataset(data_dir);
    if (ds.instructions.empty()) throw DataError("dataset has no instructions; run gen-instr first");
    LangEncoder enc = lang_encoder_from(cfg);
    ParamStore store;
    Rng init = Rng(cfg.seed).substream("pretrain-lang-init");
    enc.init_params(store, init);
    load_checkpoint(store, lang_ckpt);

    std::vector<MiningEntry> entries;
    for (std::int64_t pid : ds.paths_in(Split::train_seen)) {
        const Path& path = ds.paths[static_cast<std::size_t>(pid)];
        for (const Instruction& ins : ds.instructions[static_cast<std::size_t>(pid)]) {
            MiningEntry e;
            e.path_id = pid;
            e.env_id = path.env_id;
            e.path_len = static_cast<int>(path.nodes.size());
            e.embedding = enc.sentence_embedding(store, ins.tokens);
            entries.push_back(std::move(e));
        }
    }
    MineResult result;
    auto pairs = mine_path_pairs(entries, &result.skipped);
    result.mined = pairs.size();
    pairs = similarity_filter(std::move(pairs), cfg.mine.threshold);
    result.kept = pairs.size();
    write_mined_pairs(out_pairs, pairs);
    return result;
}

PretrainVisResult run_pretrain_vis(const ExperimentConfig& cfg, const std::string& data_dir,
                                   const std::string& pairs_file, const std::string& out_ckpt,
                                   const std::string& runlog_path) {
    Dataset ds = load_dataset(data_dir);
    auto pairs = read_mined_pairs(pairs_file);
    if (pairs.size() < 2) throw DataError("need at least 2 mined pairs to pretrain");
    VisEncoder enc = vis_encoder_from(cfg);
    ParamStore store;
    Rng init = Rng(cfg.seed).substream("pretrain-vis-init");
    enc.init_params(store, init);

    const auto mode = parse_object_mode(cfg.pretrain_vis.object_mode);
    ObjectSampler sampler;
    sampler.sample_size = cfg.pretrain_vis.sample_size;
    std::vector<int> all_classes(kNumObjectClasses);
    for (int i = 0; i < kNumObjectClasses; ++i) all_classes[static_cast<std::size_t>(i)] = i;

    // group pair indices by path length; a batch draws within one bucket
    std::map<int, std::vector<std::size_t>> by_len;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const Path& p = ds.paths.at(static_cast<std::size_t>(pairs[i].p_path));
        by_len[static_cast<int>(p.nodes.size())].push_back(i);
    }
    std::vector<std::pair<int, const std::vector<std::size_t>*>> buckets;
    std::vector<double> bucket_weight;
    for (const auto& [len, idxs] : by_len) {
        if (idxs.size() >= 2) {
            buckets.emplace_back(len, &idxs);
            bucket_weight.push_back(static_cast<double>(idxs.size()));
        }
    }
    if (buckets.empty()) throw DataError("no path length has 2+ mined pairs; cannot form batches");
    double weight_total = 0;
    for (double w : bucket_weight) weight_total += w;

    RmsProp opt;
    opt.lr = cfg.pretrain_vis.lr;

    RunLog log;
    if (!runlog_path.empty())
        log = RunLog(runlog_path, "pretrain-vis", cfg.to_json(),
                     hash_inputs({{"manifest", data_dir + "/manifest.json"}, {"pairs", pairs_file}}));

    PanoramaCache cache;
    Rng rng = Rng(cfg.seed).substream("pretrain-vis");
    PretrainVisResult result;
    for (int iter = 0; iter < cfg.pretrain_vis.iters; ++iter) {
        // bucket choice weighted by size
        double u = rng.uniform() * weight_total;
        std::size_t bi = 0;
        for (; bi + 1 < buckets.size(); ++bi) {
            if (u < bucket_weight[bi]) break;
            u -= bucket_weight[bi];
        }
        const auto& bucket = *buckets[bi].second;
        const int n = std::min<int>(cfg.pretrain_vis.batch, static_cast<int>(bucket.size()));
        auto picked = rng.sample_without_replacement(bucket.size(), static_cast<std::size_t>(n));

        std::vector<int> sampled_classes;
        switch (mode) {
            case ObjectConstraintMode::sampled: sampled_classes = sampler.draw(rng); break;
            case ObjectConstraintMode::fixed_all: sampled_classes = all_classes; break;
            case ObjectConstraintMode::off: break;
        }

        std::vector<const Path*> p_paths, q_paths;
        std::vector<std::vector<bool>> masks;
        for (std::size_t pi : picked) {
            const MinedPair& mp = pairs[bucket[pi]];
            const Path& p = ds.paths.at(static_cast<std::size_t>(mp.p_path));
            const Path& q = ds.paths.at(static_cast<std::size_t>(mp.q_path));
            p_paths.push_back(&p);
            q_paths.push_back(&q);
            if (mode == ObjectConstraintMode::off) {
                masks.emplace_back(p.nodes.size(), true);
            } else {
                masks.push_back(object_filter(ds.env_of(p), p, ds.env_of(q), q, sampled_classes));
            }
        }
        const int eligible = count_eligible(masks);
        if (eligible == 0) {
            ++result.skipped_batches;
            log.append({{"iter", iter}, {"skipped", true}});
            continue;
        }

        store.zero_grad();
        Tape tape;
        ParamCtx P(tape, store);
        auto encode_path = [&](const Path& path) {
            std::vector<Var> pooled;
            for (int node : path.nodes) {
                Var views = enc.encode_views(P, cache.features(ds.env_of(path), node));
                pooled.push_back(pool_panorama(views));
            }
            return pooled;
        };
        std::vector<std::vector<Var>> p_side, q_side;
        for (std::size_t k = 0; k < p_paths.size(); ++k) {
            p_side.push_back(encode_path(*p_paths[k]));
            q_side.push_back(encode_path(*q_paths[k]));
        }
        Var loss = visual_loss(p_side, q_side, masks, cfg.pretrain_vis.tau);
        const double per_anchor = loss.scalar() / static_cast<double>(eligible);
        Var objective = scale(loss, 1.0 / static_cast<double>(eligible));
        tape.backward(objective);
        opt.step(store, "vis.");
        result.final_loss = per_anchor;
        log.append({{"iter", iter}, {"visual_loss", per_anchor}, {"eligible", eligible}});
    }
    save_checkpoint(store, out_ckpt);
    return result;
}

namespace {

struct NavSetup {
    LangEncoder lang;
    VisEncoder vis;
    NavDecoder decoder;
    NavSetup(const ExperimentConfig& cfg)
        : lang(lang_encoder_from(cfg)), vis(vis_encoder_from(cfg)), decoder(nav_decoder_from(cfg)) {}
};

}  // namespace

TrainNavResult run_train_nav(const ExperimentConfig& cfg, const std::string& data_dir,
                             const std::string& lang_ckpt, const std::string& vis_ckpt,
                             const std::string& out_ckpt, const std::string& runlog_path) {
    Dataset ds = load_dataset(data_dir);
    if (ds.instructions.empty()) throw DataError("dataset has no instructions; run gen-instr first");
    NavSetup net(cfg);
    ParamStore store;
    Rng init = Rng(cfg.seed).substream("train-nav-init");
    net.lang.init_params(store, init);
    net.vis.init_params(store, init);
    net.decoder.init_params(store, init);
    if (!cfg.nav.from_scratch) {
        if (lang_ckpt.empty() && vis_ckpt.empty())
            throw DataError("train-nav needs --lang-ckpt and/or --vis-ckpt (or nav.from_scratch)");
        if (!lang_ckpt.empty()) load_checkpoint(store, lang_ckpt);
        if (!vis_ckpt.empty()) load_checkpoint(store, vis_ckpt);
    }
    Agent agent(net.lang, net.vis, net.decoder);

    AdamW lang_opt;
    lang_opt.lr = cfg.nav.lr_lang;
    RmsProp other_opt;
    other_opt.lr = cfg.nav.lr_other;

    RunLog log;
    if (!runlog_path.empty())
        log = RunLog(runlog_path, "train-nav", cfg.to_json(),
                     hash_inputs({{"manifest", data_dir + "/manifest.json"},
                                  {"lang_ckpt", lang_ckpt},
                                  {"vis_ckpt", vis_ckpt}}));

    const auto& train_paths = ds.paths_in(Split::train_seen);
    if (train_paths.empty()) throw DataError("no training paths in dataset");

    // fixed probe set from val-seen (falls back to train when absent)
    const auto& probe_pool =
        ds.paths_in(Split::val_seen).empty() ? train_paths : ds.paths_in(Split::val_seen);
    std::vector<std::pair<std::int64_t, int>> probe_set;
    for (int i = 0; i < cfg.nav.probe_episodes; ++i) {
        const auto pid = probe_pool[static_cast<std::size_t>(i) % probe_pool.size()];
        probe_set.emplace_back(pid, (i * 4) % 9);
    }

    auto make_episode = [&](std::int64_t pid, int instr_idx) {
        const Path& path = ds.paths[static_cast<std::size_t>(pid)];
        return EpisodeSpec{&ds.env_of(path), &path,
                           &ds.instructions[static_cast<std::size_t>(pid)][static_cast<std::size_t>(instr_idx)]};
    };
    auto probe_sr = [&]() {
        int hits = 0;
        for (const auto& [pid, instr_idx] : probe_set) {
            Tape tape;
            ParamCtx P(tape, store);
            Rollout r = agent.rollout(P, make_episode(pid, instr_idx), RolloutMode::greedy);
            const Path& path = ds.paths[static_cast<std::size_t>(pid)];
            if (r.stopped && success(ds.env_of(path), r.visited, path.nodes)) ++hits;
        }
        return 100.0 * static_cast<double>(hits) / static_cast<double>(probe_set.size());
    };

    Rng rng = Rng(cfg.seed).substream("train-nav");
    TrainNavResult result;
    for (int iter = 0; iter < cfg.nav.iters; ++iter) {
        store.zero_grad();
        Tape tape;
        ParamCtx P(tape, store);

        std::optional<Var> objective;
        double il_value = 0.0, rl_value = 0.0;
        A2cStats stats;
        if (cfg.nav.il_batch > 0) {
            std::optional<Var> il_sum;
            for (int b = 0; b < cfg.nav.il_batch; ++b) {
                const auto pid = train_paths[rng.uniform_int(train_paths.size())];
                const int instr_idx = static_cast<int>(rng.uniform_int(9));
                Rollout r = agent.rollout(P, make_episode(pid, instr_idx), RolloutMode::teacher);
                Var l = il_loss(r);
                il_sum = il_sum ? add(*il_sum, l) : l;
            }
            Var il_mean = scale(*il_sum, 1.0 / static_cast<double>(cfg.nav.il_batch));
            il_value = il_mean.scalar();
            Var weighted = scale(il_mean, cfg.nav.lambda_il);
            objective = objective ? add(*objective, weighted) : weighted;
        }
        if (cfg.nav.rl_batch > 0) {
            std::vector<Rollout> rollouts;
            for (int b = 0; b < cfg.nav.rl_batch; ++b) {
                const auto pid = train_paths[rng.uniform_int(train_paths.size())];
                const int instr_idx = static_cast<int>(rng.uniform_int(9));
                rollouts.push_back(
                    agent.rollout(P, make_episode(pid, instr_idx), RolloutMode::sample, &rng, nullptr, true));
            }
            Var rl = a2c_loss(tape, rollouts, cfg.nav.discount, cfg.nav.entropy_coef, &stats);
            rl_value = rl.scalar();
            objective = objective ? add(*objective, rl) : rl;
        }
        tape.backward(*objective);
        lang_opt.step(store, "lang.");
        other_opt.step(store, "vis.");
        other_opt.step(store, "nav.");

        result.final_il_loss = il_value;
        result.final_rl_loss = rl_value;
        ordered_json line = {{"iter", iter},
                             {"il_loss", il_value},
                             {"rl_loss", rl_value},
                             {"nav_loss", rl_value + cfg.nav.lambda_il * il_value},
                             {"reward", stats.total_reward},
                             {"mean_return", stats.mean_return}};
        if (cfg.nav.probe_every > 0 && (iter + 1) % cfg.nav.probe_every == 0) {
            result.last_probe_sr = probe_sr();
            line["probe_sr"] = result.last_probe_sr;
        }
        log.append(line);
    }
    if (cfg.nav.probe_every > 0 && cfg.nav.iters > 0) result.last_probe_sr = probe_sr();
    save_checkpoint(store, out_ckpt);
    return result;
}

EvalReport run_eval(const ExperimentConfig& cfg, const std::string& data_dir, const std::string& ckpt,
                    const EvalOptions& options) {
    Dataset ds = load_dataset(data_dir);
    if (ds.instructions.empty()) throw DataError("dataset has no instructions; run gen-instr first");
    NavSetup net(cfg);
    ParamStore store;
    Rng init = Rng(cfg.seed).substream("train-nav-init");
    net.lang.init_params(store, init);
    net.vis.init_params(store, init);
    net.decoder.init_params(store, init);
    std::string ckpt_hash = "fresh-init";
    if (!ckpt.empty()) {
        load_checkpoint(store, ckpt);
        ckpt_hash = file_hash_hex(ckpt);
    } else if (options.policy == EvalPolicy::greedy) {
        throw DataError("eval with the greedy policy requires a checkpoint");
    }
    if (options.policy == EvalPolicy::teacher) ckpt_hash = "teacher";
    Agent agent(net.lang, net.vis, net.decoder);

    const auto& pids = ds.paths_in(options.split);
    if (pids.empty()) throw DataError(std::string("no paths in split ") + split_name(options.split));
    struct Job {
        std::int64_t pid;
        int instr;
    };
    std::vector<Job> jobs;
    for (auto pid : pids)
        for (int i = 0; i < static_cast<int>(ds.instructions[static_cast<std::size_t>(pid)].size()); ++i)
            jobs.push_back({pid, i});

    std::vector<EpisodeScore> scores(jobs.size());
    std::vector<Trajectory> trajectories(jobs.size());
    std::vector<Rollout> rollouts(options.attention_dir.empty() ? 0 : jobs.size());

    object_basis(cfg.world.feature_dim);  // warm the shared cache before threading
    const int workers = std::max(1, options.workers);
    auto worker_fn = [&](std::size_t begin, std::size_t end) {
        for (std::size_t k = begin; k < end; ++k) {
            const Path& path = ds.paths[static_cast<std::size_t>(jobs[k].pid)];
            const Instruction& ins =
                ds.instructions[static_cast<std::size_t>(jobs[k].pid)][static_cast<std::size_t>(jobs[k].instr)];
            Tape tape;
            ParamCtx P(tape, store);
            EpisodeSpec episode{&ds.env_of(path), &path, &ins};
            Rollout r = agent.rollout(
                P, episode, options.policy == EvalPolicy::teacher ? RolloutMode::teacher : RolloutMode::greedy);
            scores[k] = score_episode(ds.env_of(path), path, r.visited, r.stopped, ins.language);
            trajectories[k] = Trajectory{path.env_id, path.path_id, ins.language, r.visited, r.stopped};
            if (!options.attention_dir.empty()) {
                // keep only the plain records; tape-linked vars die with the tape
                Rollout kept;
                kept.visited = r.visited;
                kept.stopped = r.stopped;
                kept.steps = r.steps;
                rollouts[k] = std::move(kept);
            }
        }
    };
    if (workers == 1) {
        worker_fn(0, jobs.size());
    } else {
        std::vector<std::thread> threads;
        const std::size_t chunk = (jobs.size() + static_cast<std::size_t>(workers) - 1) / workers;
        for (int w = 0; w < workers; ++w) {
            const std::size_t begin = static_cast<std::size_t>(w) * chunk;
            const std::size_t end = std::min(jobs.size(), begin + chunk);
            if (begin < end) threads.emplace_back(worker_fn, begin, end);
        }
        for (auto& t : threads) t.join();
    }

    if (!options.trajectories_out.empty()) write_trajectories(options.trajectories_out, trajectories);
    if (!options.attention_dir.empty()) {
        fs::create_directories(options.attention_dir);
        for (std::size_t k = 0; k < jobs.size(); ++k) {
            char name[64];
            std::snprintf(name, sizeof(name), "episode-%05zu.json", k);
            std::ofstream os(options.attention_dir + "/" + name);
            os << dump_attention(rollouts[k]).dump(2) << "\n";
        }
    }
    return aggregate_scores(scores, split_name(options.split), ckpt_hash);
}

EvalReport eval_trajectories(const Dataset& ds, const std::vector<Trajectory>& trajectories,
                             const std::string& split, const std::string& checkpoint_hash) {
    if (trajectories.empty()) throw DataError("no trajectories to evaluate");
    std::vector<EpisodeScore> scores;
    for (const auto& t : trajectories) {
        if (t.path_id < 0 || static_cast<std::size_t>(t.path_id) >= ds.paths.size())
            throw DataError("trajectory references unknown path " + std::to_string(t.path_id));
        const Path& path = ds.paths[static_cast<std::size_t>(t.path_id)];
        if (path.env_id != t.env_id) throw DataError("trajectory/reference environment mismatch");
        scores.push_back(score_episode(ds.env_of(path), path, t.nodes, t.stopped, t.language));
    }
    return aggregate_scores(scores, split, checkpoint_hash);
}

RetrievalProbe retrieval_probe(const ExperimentConfig& cfg, const Dataset& ds, ParamStore& store,
                               int batch_pairs, int batches, std::uint64_t seed) {
    LangEncoder enc = lang_encoder_from(cfg);
    Rng rng(seed);
    RetrievalProbe probe;
    probe.batches = batches;

    auto run = [&](bool cross_lang) {
        int hits = 0, total = 0;
        Rng local = rng.substream(cross_lang ? "cross" : "plain");
        for (int b = 0; b < batches; ++b) {
            const auto& pool = ds.paths_in(Split::train_seen);
            auto picked = local.sample_without_replacement(pool.size(), static_cast<std::size_t>(batch_pairs));
            std::vector<Tensor> first, second;
            for (std::size_t i : picked) {
                const auto& group = ds.instructions.at(static_cast<std::size_t>(pool[i]));
                std::vector<const Instruction*> ptrs;
                for (const auto& ins : group) ptrs.push_back(&ins);
                const Instruction *a = nullptr, *b2 = nullptr;
                if (cross_lang) {
                    // two distinct languages, uniformly chosen
                    const int la = static_cast<int>(local.uniform_int(3));
                    int lb = static_cast<int>(local.uniform_int(2));
                    if (lb >= la) ++lb;
                    std::vector<const Instruction*> pa, pb;
                    for (const auto* p : ptrs) {
                        if (p->language == la) pa.push_back(p);
                        if (p->language == lb) pb.push_back(p);
                    }
                    a = pa[local.uniform_int(pa.size())];
                    b2 = pb[local.uniform_int(pb.size())];
                } else {
                    auto pair = sample_instruction_pair(ptrs, PairStrategy::parse("multi"), local);
                    a = pair.first;
                    b2 = pair.second;
                }
                first.push_back(enc.sentence_embedding(store, a->tokens));
                second.push_back(enc.sentence_embedding(store, b2->tokens));
            }
            // normalized embeddings; candidate pool for anchor i is everything
            // except itself (2N-1 entries), positive is second[i]
            auto unit = [](Tensor t) {
                double sq = 0;
                for (double v : t.data) sq += v * v;
                const double inv = 1.0 / std::sqrt(sq);
                for (auto& v : t.data) v *= inv;
                return t;
            };
            for (auto& t : first) t = unit(std::move(t));
            for (auto& t : second) t = unit(std::move(t));
            for (std::size_t i = 0; i < first.size(); ++i) {
                double best = -2.0;
                int best_kind = -1;  // 0: correct positive, 1: anything else
                for (std::size_t k = 0; k < first.size(); ++k) {
                    if (k != i) {
                        const double s = kern::dot(first[i].data.size(), first[i].data.data(), first[k].data.data());
                        if (s > best) {
                            best = s;
                            best_kind = 1;
                        }
                    }
                    const double s2 = kern::dot(first[i].data.size(), first[i].data.data(), second[k].data.data());
                    if (s2 > best) {
                        best = s2;
                        best_kind = k == i ? 0 : 1;
                    }
                }
                hits += best_kind == 0 ? 1 : 0;
                ++total;
            }
        }
        return static_cast<double>(hits) / static_cast<double>(total);
    };
    probe.accuracy = run(false);
    probe.cross_language = run(true);
    return probe;
}

double lang_probe_loss(const ExperimentConfig& cfg, const Dataset& ds, ParamStore& store, int batches,
                       std::uint64_t seed) {
    LangEncoder enc = lang_encoder_from(cfg);
    const auto strategy = PairStrategy::parse(cfg.pretrain_lang.strategy);
    Rng rng(seed);
    double total = 0.0;
    std::int64_t anchors = 0;
    for (int b = 0; b < batches; ++b) {
        Tape tape;
        ParamCtx P(tape, store);
        PairBatch batch =
            embed_pair_batch(ds, ds.paths_in(Split::train_seen), strategy, enc, P, cfg.pretrain_lang.batch, rng);
        total += lang_loss(batch.first, batch.second, cfg.pretrain_lang.tau, cfg.pretrain_lang.symmetric).scalar();
        anchors += static_cast<std::int64_t>(batch.first.size());
    }
    return total / static_cast<double>(anchors);
}

json apply_override(json base, const std::string& dotted_key, const std::string& value) {
    json* node = &base;
    std::size_t start = 0;
    while (true) {
        const std::size_t dot = dotted_key.find('.', start);
        const std::string key = dotted_key.substr(start, dot == std::string::npos ? dot : dot - start);
        if (key.empty()) throw ConfigError("bad override key: " + dotted_key);
        if (dot == std::string::npos) {
            json parsed;
            try {
                parsed = json::parse(value);
            } catch (const json::exception&) {
                parsed = value;  // plain string
            }
            (*node)[key] = parsed;
            break;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
    return base;
}

std::vector<AblateCell> run_ablate(const json& base_config, const std::string& dotted_key,
                                   const std::vector<std::string>& values, const std::string& out_dir) {
    if (values.empty()) throw ConfigError("ablate: no axis values given");
    fs::create_directories(out_dir);

    // The generated dataset is shared across cells whenever the axis does not
    // touch world/language generation.
    const bool axis_touches_data =
        dotted_key.rfind("world.", 0) == 0 || dotted_key.rfind("language.", 0) == 0 || dotted_key == "seed";

    std::vector<AblateCell> cells;
    std::string shared_data;
    std::vector<std::pair<std::string, EvalReport>> csv_rows;
    for (const std::string& value : values) {
        const json cell_json = apply_override(base_config, dotted_key, value);
        const ExperimentConfig cfg = ExperimentConfig::from_json(cell_json);
        std::string label = dotted_key.substr(dotted_key.find('.') + 1) + "=" + value;
        for (auto& ch : label)
            if (ch == '/' || ch == ' ') ch = '_';
        const std::string cell_dir = out_dir + "/" + label;
        fs::create_directories(cell_dir);

        std::string data_dir;
        if (!axis_touches_data && !shared_data.empty()) {
            data_dir = shared_data;
        } else {
            data_dir = axis_touches_data ? cell_dir + "/data" : out_dir + "/data";
            if (!fs::exists(data_dir + "/manifest.json")) {
                run_gen_world(cfg, data_dir);
                run_gen_instr(cfg, data_dir);
            }
            if (!axis_touches_data) shared_data = data_dir;
        }

        const std::string lang_ckpt = cell_dir + "/lang.ckpt";
        const std::string vis_ckpt = cell_dir + "/vis.ckpt";
        const std::string nav_ckpt = cell_dir + "/nav.ckpt";
        run_pretrain_lang(cfg, data_dir, lang_ckpt, cell_dir + "/pretrain_lang.log.jsonl");
        run_mine_pairs(cfg, data_dir, lang_ckpt, cell_dir + "/pairs.jsonl");
        run_pretrain_vis(cfg, data_dir, cell_dir + "/pairs.jsonl", vis_ckpt, cell_dir + "/pretrain_vis.log.jsonl");
        run_train_nav(cfg, data_dir, cfg.nav.from_scratch ? "" : lang_ckpt, cfg.nav.from_scratch ? "" : vis_ckpt,
                      nav_ckpt, cell_dir + "/train_nav.log.jsonl");

        AblateCell cell;
        cell.label = label;
        EvalOptions seen_opts;
        seen_opts.split = Split::val_seen;
        cell.val_seen = run_eval(cfg, data_dir, nav_ckpt, seen_opts);
        EvalOptions unseen_opts;
        unseen_opts.split = Split::val_unseen;
        cell.val_unseen = run_eval(cfg, data_dir, nav_ckpt, unseen_opts);
        write_report(cell_dir + "/report_val_seen.json", cell.val_seen);
        write_report(cell_dir + "/report_val_unseen.json", cell.val_unseen);
        csv_rows.emplace_back(label, cell.val_unseen);
        cells.push_back(std::move(cell));
    }
    std::ofstream os(out_dir + "/comparison.csv", std::ios::trunc);
    os << reports_to_csv(csv_rows);
    return cells;
}

}  // namespace navrep
