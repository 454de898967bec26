#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "navrep/contrastive.hpp"
#include "navrep/diagnostics.hpp"
#include "navrep/error.hpp"
#include "navrep/instrgen.hpp"
#include "navrep/kernels.hpp"
#include "navrep/params.hpp"
#include "navrep/pipeline.hpp"

using namespace navrep;

namespace {

ExperimentConfig load_cfg(const std::string& path) {
    if (path.empty()) return ExperimentConfig{};
    return ExperimentConfig::load(path);
}

int resolve_token(const std::string& spec) {
    try {
        return std::stoi(spec);
    } catch (const std::exception&) {
        const auto table = vocab_table();
        for (std::size_t i = 0; i < table.size(); ++i)
            if (table[i] == spec) return static_cast<int>(i);
        throw DataError("unknown token: " + spec);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"navrep: multilingual navigation representation learning on synthetic worlds"};
    app.require_subcommand(1);

    std::string kernels = "auto";
    app.add_option("--kernels", kernels, "force kernel backend: scalar|avx2 (default: auto-detect)");

    std::string config_path;
    app.add_option("--config", config_path, "experiment config JSON (defaults apply when omitted)");

    // gen-world
    auto* gen_world = app.add_subcommand("gen-world", "generate environments and paths");
    std::string gw_out;
    gen_world->add_option("--out", gw_out, "dataset output directory")->required();

    // gen-instr
    auto* gen_instr = app.add_subcommand("gen-instr", "generate multilingual instructions for a dataset");
    std::string gi_data;
    gen_instr->add_option("--data", gi_data, "dataset directory")->required();

    // pretrain-lang
    auto* pre_lang = app.add_subcommand("pretrain-lang", "contrastive language-representation pretraining");
    std::string pl_data, pl_out, pl_log;
    pre_lang->add_option("--data", pl_data, "dataset directory")->required();
    pre_lang->add_option("--out", pl_out, "output checkpoint")->required();
    pre_lang->add_option("--log", pl_log, "run log JSONL");

    // mine-pairs
    auto* mine = app.add_subcommand("mine-pairs", "mine semantically-aligned path pairs");
    std::string mp_data, mp_ckpt, mp_out;
    mine->add_option("--data", mp_data, "dataset directory")->required();
    mine->add_option("--lang-ckpt", mp_ckpt, "language encoder checkpoint")->required();
    mine->add_option("--out", mp_out, "mined pairs JSONL")->required();

    // pretrain-vis
    auto* pre_vis = app.add_subcommand("pretrain-vis", "contrastive visual-representation pretraining");
    std::string pv_data, pv_pairs, pv_out, pv_log;
    pre_vis->add_option("--data", pv_data, "dataset directory")->required();
    pre_vis->add_option("--pairs", pv_pairs, "mined pairs JSONL")->required();
    pre_vis->add_option("--out", pv_out, "output checkpoint")->required();
    pre_vis->add_option("--log", pv_log, "run log JSONL");

    // train-nav
    auto* train = app.add_subcommand("train-nav", "train the navigation agent (imitation + actor-critic)");
    std::string tn_data, tn_lang, tn_vis, tn_out, tn_log;
    train->add_option("--data", tn_data, "dataset directory")->required();
    train->add_option("--lang-ckpt", tn_lang, "pretrained language checkpoint");
    train->add_option("--vis-ckpt", tn_vis, "pretrained visual checkpoint");
    train->add_option("--out", tn_out, "output checkpoint")->required();
    train->add_option("--log", tn_log, "run log JSONL");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint (or teacher policy) on a split");
    std::string ev_data, ev_ckpt, ev_split = "val-unseen", ev_policy = "greedy", ev_report, ev_traj, ev_attn,
                ev_traj_in;
    int ev_workers = 1;
    eval_cmd->add_option("--data", ev_data, "dataset directory")->required();
    eval_cmd->add_option("--ckpt", ev_ckpt, "checkpoint to evaluate");
    eval_cmd->add_option("--split", ev_split, "train|val-seen|val-unseen");
    eval_cmd->add_option("--policy", ev_policy, "greedy|teacher");
    eval_cmd->add_option("--report", ev_report, "report JSON output")->required();
    eval_cmd->add_option("--trajectories", ev_traj, "trajectory JSONL output");
    eval_cmd->add_option("--from-trajectories", ev_traj_in, "score a stored trajectory file instead of rolling out");
    eval_cmd->add_option("--attention-dir", ev_attn, "per-episode instruction-attention dumps");
    eval_cmd->add_option("--workers", ev_workers, "rollout worker threads");

    // report
    auto* report_cmd = app.add_subcommand("report", "combine reports into a CSV table or a seen/unseen gap");
    std::vector<std::string> rp_inputs;
    std::string rp_csv, rp_seen, rp_unseen, rp_gap;
    report_cmd->add_option("--in", rp_inputs, "labeled report inputs, name=path");
    report_cmd->add_option("--csv", rp_csv, "comparison CSV output");
    report_cmd->add_option("--seen", rp_seen, "val-seen report (gap mode)");
    report_cmd->add_option("--unseen", rp_unseen, "val-unseen report (gap mode)");
    report_cmd->add_option("--gap", rp_gap, "gap table JSON output (gap mode)");

    // ablate
    auto* ablate = app.add_subcommand("ablate", "run a config-axis comparison");
    std::string ab_axis, ab_out;
    std::vector<std::string> ab_values;
    ablate->add_option("--axis", ab_axis, "dotted config key, e.g. pretrain_lang.strategy")->required();
    ablate->add_option("--values", ab_values, "axis values")->required();
    ablate->add_option("--out", ab_out, "output directory")->required();

    // nearest-tokens
    auto* nearest = app.add_subcommand("nearest-tokens", "cosine-nearest tokens in a trained embedding table");
    std::string nt_ckpt, nt_token;
    int nt_k = 5;
    nearest->add_option("--ckpt", nt_ckpt, "checkpoint with a lang.embed table")->required();
    nearest->add_option("--token", nt_token, "token id or surface form")->required();
    nearest->add_option("-k,--top", nt_k, "number of neighbors");

    CLI11_PARSE(app, argc, argv);

    try {
        if (kernels != "auto") kern::set_backend(kern::parse_backend(kernels));

        if (*gen_world) {
            run_gen_world(load_cfg(config_path), gw_out);
            std::printf("wrote dataset skeleton to %s\n", gw_out.c_str());
        } else if (*gen_instr) {
            run_gen_instr(load_cfg(config_path), gi_data);
            std::printf("wrote instructions and vocab to %s\n", gi_data.c_str());
        } else if (*pre_lang) {
            auto res = run_pretrain_lang(load_cfg(config_path), pl_data, pl_out, pl_log);
            std::printf("pretrain-lang done: per-anchor loss %.4f -> %.4f, checkpoint %s\n", res.first_loss,
                        res.final_loss, pl_out.c_str());
        } else if (*mine) {
            auto res = run_mine_pairs(load_cfg(config_path), mp_data, mp_ckpt, mp_out);
            std::printf("mined %zu pairs (%zu kept after filter, %d queries skipped) -> %s\n", res.mined,
                        res.kept, res.skipped, mp_out.c_str());
        } else if (*pre_vis) {
            auto res = run_pretrain_vis(load_cfg(config_path), pv_data, pv_pairs, pv_out, pv_log);
            std::printf("pretrain-vis done: per-anchor loss %.4f (%d batches skipped), checkpoint %s\n",
                        res.final_loss, res.skipped_batches, pv_out.c_str());
        } else if (*train) {
            auto res = run_train_nav(load_cfg(config_path), tn_data, tn_lang, tn_vis, tn_out, tn_log);
            std::printf("train-nav done: IL %.4f RL %.4f probe SR %.1f%%, checkpoint %s\n", res.final_il_loss,
                        res.final_rl_loss, res.last_probe_sr, tn_out.c_str());
        } else if (*eval_cmd) {
            const ExperimentConfig cfg = load_cfg(config_path);
            EvalReport report;
            if (!ev_traj_in.empty()) {
                Dataset ds = load_dataset(ev_data);
                report = eval_trajectories(ds, read_trajectories(ev_traj_in), ev_split,
                                           "trajectories:" + file_hash_hex(ev_traj_in));
            } else {
                EvalOptions opts;
                opts.split = parse_split(ev_split);
                if (ev_policy == "greedy") opts.policy = EvalPolicy::greedy;
                else if (ev_policy == "teacher") opts.policy = EvalPolicy::teacher;
                else throw ConfigError("unknown policy: " + ev_policy);
                opts.workers = ev_workers;
                opts.trajectories_out = ev_traj;
                opts.attention_dir = ev_attn;
                report = run_eval(cfg, ev_data, ev_ckpt, opts);
            }
            write_report(ev_report, report);
            std::printf("%s SR %.1f SPL %.1f NDTW %.1f SDTW %.1f (%lld episodes) -> %s\n", ev_split.c_str(),
                        round1(report.aggregate.sr), round1(report.aggregate.spl), round1(report.aggregate.ndtw),
                        round1(report.aggregate.sdtw), static_cast<long long>(report.aggregate.count),
                        ev_report.c_str());
        } else if (*report_cmd) {
            if (!rp_gap.empty()) {
                if (rp_seen.empty() || rp_unseen.empty())
                    throw ConfigError("gap mode needs --seen and --unseen reports");
                GapTable gap = gap_report(read_report(rp_seen), read_report(rp_unseen));
                std::ofstream os(rp_gap, std::ios::trunc);
                if (!os) throw DataError("cannot write " + rp_gap);
                os << gap_to_json(gap).dump(2) << "\n";
                std::printf("nDTW seen %.1f unseen %.1f gap %.1f -> %s\n", gap.ndtw.seen, gap.ndtw.unseen,
                            gap.ndtw.gap, rp_gap.c_str());
            } else {
                if (rp_inputs.empty() || rp_csv.empty())
                    throw ConfigError("table mode needs --in name=path entries and --csv output");
                std::vector<std::pair<std::string, EvalReport>> rows;
                for (const auto& entry : rp_inputs) {
                    const auto eq = entry.find('=');
                    if (eq == std::string::npos) throw ConfigError("--in expects name=path, got " + entry);
                    rows.emplace_back(entry.substr(0, eq), read_report(entry.substr(eq + 1)));
                }
                std::ofstream os(rp_csv, std::ios::trunc);
                if (!os) throw DataError("cannot write " + rp_csv);
                os << reports_to_csv(rows);
                std::printf("wrote %zu-row comparison to %s\n", rows.size(), rp_csv.c_str());
            }
        } else if (*ablate) {
            nlohmann::json base = nlohmann::json::object();
            if (!config_path.empty()) {
                std::ifstream is(config_path);
                if (!is) throw ConfigError("cannot open config file: " + config_path);
                is >> base;
            }
            auto cells = run_ablate(base, ab_axis, ab_values, ab_out);
            std::printf("ablation over %s: %zu cells -> %s/comparison.csv\n", ab_axis.c_str(), cells.size(),
                        ab_out.c_str());
            for (const auto& cell : cells)
                std::printf("  %s: unseen NDTW %.1f\n", cell.label.c_str(), round1(cell.val_unseen.aggregate.ndtw));
        } else if (*nearest) {
            ParamStore store;
            load_checkpoint(store, nt_ckpt);
            if (!store.contains("lang.embed")) throw DataError("checkpoint has no lang.embed table");
            const int token = resolve_token(nt_token);
            const auto table = vocab_table();
            auto ids = nearest_tokens(store.value("lang.embed"), token, nt_k);
            std::printf("nearest to %s:\n", table[static_cast<std::size_t>(token)].c_str());
            for (int id : ids) std::printf("  %s (id %d)\n", table[static_cast<std::size_t>(id)].c_str(), id);
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const NumericsError& e) {
        std::fprintf(stderr, "numerics error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
