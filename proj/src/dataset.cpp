#include "navrep/dataset.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "navrep/error.hpp"
#include "navrep/params.hpp"

namespace navrep {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

void write_jsonl(const std::string& path, const std::string& schema,
                 const std::vector<ordered_json>& lines) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("cannot open for writing: " + path);
    ordered_json header;
    header["schema"] = schema;
    header["version"] = kSchemaVersion;
    os << header.dump() << "\n";
    for (const auto& l : lines) os << l.dump() << "\n";
    if (!os) throw DataError("write failed: " + path);
}

std::vector<json> read_jsonl(const std::string& path, const std::string& schema) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open: " + path);
    std::string line;
    if (!std::getline(is, line)) throw DataError("empty artifact file: " + path);
    json header;
    try {
        header = json::parse(line);
    } catch (const json::exception& e) {
        throw DataError(path + ": bad header line: " + e.what());
    }
    if (!header.contains("schema") || header.at("schema") != schema)
        throw DataError(path + ": expected schema '" + schema + "'");
    if (!header.contains("version") || header.at("version").get<int>() != kSchemaVersion)
        throw DataError(path + ": unsupported schema version");
    std::vector<json> out;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        try {
            out.push_back(json::parse(line));
        } catch (const json::exception& e) {
            throw DataError(path + ": bad line: " + e.what());
        }
    }
    return out;
}

}  // namespace

const EnvGraph& Dataset::env_of(const Path& p) const {
    auto it = envs.find(p.env_id);
    if (it == envs.end()) throw DataError("path references unknown environment " + p.env_id);
    return it->second;
}

void write_environments(const std::string& path, const std::vector<EnvGraph>& envs) {
    std::vector<ordered_json> lines;
    for (const EnvGraph& e : envs) {
        ordered_json j;
        j["env_id"] = e.env_id;
        j["split"] = split_name(e.split);
        j["seed"] = e.seed;
        j["alpha"] = e.alpha;
        j["noise_std"] = e.noise_std;
        j["nodes"] = json::array();
        for (const auto& p : e.positions) j["nodes"].push_back({p[0], p[1], p[2]});
        j["edges"] = json::array();
        for (const auto& [a, b] : e.edges) j["edges"].push_back({a, b});
        j["signature"] = e.signature.data;
        j["view_objects"] = e.view_objects;
        lines.push_back(std::move(j));
    }
    write_jsonl(path, "navrep/environments", lines);
}

std::vector<EnvGraph> read_environments(const std::string& path) {
    std::vector<EnvGraph> out;
    for (const auto& j : read_jsonl(path, "navrep/environments")) {
        EnvGraph e;
        try {
            e.env_id = j.at("env_id").get<std::string>();
            e.split = parse_split(j.at("split").get<std::string>());
            e.seed = j.at("seed").get<std::uint64_t>();
            e.alpha = j.at("alpha").get<double>();
            e.noise_std = j.at("noise_std").get<double>();
            for (const auto& p : j.at("nodes"))
                e.positions.push_back({p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()});
            for (const auto& ed : j.at("edges")) e.edges.emplace_back(ed.at(0).get<int>(), ed.at(1).get<int>());
            e.signature = Tensor::vec(j.at("signature").get<std::vector<double>>());
            e.view_objects = j.at("view_objects").get<std::vector<std::vector<std::vector<int>>>>();
        } catch (const json::exception& ex) {
            throw DataError(path + ": malformed environment record: " + ex.what());
        }
        if (e.view_objects.size() != e.positions.size())
            throw DataError(path + ": view_objects/positions mismatch for " + e.env_id);
        e.node_objects.assign(e.positions.size(), {});
        for (std::size_t n = 0; n < e.view_objects.size(); ++n) {
            std::set<int> present;
            for (auto& v : e.view_objects[n]) present.insert(v.begin(), v.end());
            e.node_objects[n].assign(present.begin(), present.end());
        }
        e.finalize();
        out.push_back(std::move(e));
    }
    return out;
}

void write_paths(const std::string& path, const std::vector<Path>& paths) {
    std::vector<ordered_json> lines;
    for (const Path& p : paths) {
        ordered_json j;
        j["path_id"] = p.path_id;
        j["env_id"] = p.env_id;
        j["split"] = split_name(p.split);
        j["nodes"] = p.nodes;
        j["frame"] = json::array();
        for (const auto& step : p.frame) {
            ordered_json s;
            s["action"] = action_name(step.action);
            if (step.landmark) s["landmark"] = *step.landmark;
            else s["landmark"] = nullptr;
            j["frame"].push_back(std::move(s));
        }
        lines.push_back(std::move(j));
    }
    write_jsonl(path, "navrep/paths", lines);
}

std::vector<Path> read_paths(const std::string& path) {
    std::vector<Path> out;
    for (const auto& j : read_jsonl(path, "navrep/paths")) {
        Path p;
        try {
            p.path_id = j.at("path_id").get<std::int64_t>();
            p.env_id = j.at("env_id").get<std::string>();
            p.split = parse_split(j.at("split").get<std::string>());
            p.nodes = j.at("nodes").get<std::vector<int>>();
            for (const auto& s : j.at("frame")) {
                FrameStep step;
                step.action = parse_action(s.at("action").get<std::string>());
                if (!s.at("landmark").is_null()) step.landmark = s.at("landmark").get<int>();
                p.frame.push_back(step);
            }
        } catch (const json::exception& ex) {
            throw DataError(path + ": malformed path record: " + ex.what());
        }
        out.push_back(std::move(p));
    }
    return out;
}

void write_instructions(const std::string& path, const std::vector<std::vector<Instruction>>& by_path) {
    std::vector<ordered_json> lines;
    for (const auto& group : by_path) {
        for (const Instruction& ins : group) {
            ordered_json j;
            j["path_id"] = ins.path_id;
            j["language"] = ins.language;
            j["annotator"] = ins.annotator;
            char seed_hex[17];
            std::snprintf(seed_hex, sizeof(seed_hex), "%016llx",
                          static_cast<unsigned long long>(ins.annotator_seed));
            j["annotator_seed"] = seed_hex;
            j["tokens"] = ins.tokens;
            lines.push_back(std::move(j));
        }
    }
    write_jsonl(path, "navrep/instructions", lines);
}

std::vector<std::vector<Instruction>> read_instructions(const std::string& path) {
    std::vector<std::vector<Instruction>> out;
    for (const auto& j : read_jsonl(path, "navrep/instructions")) {
        Instruction ins;
        try {
            ins.path_id = j.at("path_id").get<std::int64_t>();
            ins.language = j.at("language").get<int>();
            ins.annotator = j.at("annotator").get<int>();
            ins.annotator_seed = std::stoull(j.at("annotator_seed").get<std::string>(), nullptr, 16);
            ins.tokens = j.at("tokens").get<std::vector<int>>();
        } catch (const std::exception& ex) {
            throw DataError(path + ": malformed instruction record: " + ex.what());
        }
        if (ins.path_id < 0) throw DataError(path + ": negative path_id");
        if (static_cast<std::size_t>(ins.path_id) >= out.size())
            out.resize(static_cast<std::size_t>(ins.path_id) + 1);
        out[static_cast<std::size_t>(ins.path_id)].push_back(std::move(ins));
    }
    return out;
}

void write_vocab(const std::string& path) {
    ordered_json j;
    j["schema"] = "navrep/vocab";
    j["version"] = kSchemaVersion;
    j["tokens"] = vocab_table();
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("cannot open for writing: " + path);
    os << j.dump(2) << "\n";
}

void write_manifest(const std::string& dir, const std::vector<EnvGraph>& envs) {
    ordered_json j;
    j["schema"] = "navrep/manifest";
    j["version"] = kSchemaVersion;
    j["files"] = {{"environments", "environments.jsonl"},
                  {"paths", "paths.jsonl"},
                  {"instructions", "instructions.jsonl"},
                  {"vocab", "vocab.json"}};
    int counts[3] = {0, 0, 0};
    for (const auto& e : envs) counts[static_cast<int>(e.split)]++;
    j["env_counts"] = {{"train-seen", counts[0]}, {"val-unseen", counts[2]}};
    std::ofstream os(dir + "/manifest.json", std::ios::trunc);
    if (!os) throw DataError("cannot open for writing: " + dir + "/manifest.json");
    os << j.dump(2) << "\n";
}

Dataset load_dataset(const std::string& dir) {
    const std::string manifest_path = dir + "/manifest.json";
    std::ifstream is(manifest_path);
    if (!is) throw DataError("missing dataset manifest: " + manifest_path);
    json manifest;
    try {
        is >> manifest;
    } catch (const json::exception& e) {
        throw DataError(manifest_path + ": " + e.what());
    }
    if (!manifest.contains("schema") || manifest.at("schema") != "navrep/manifest")
        throw DataError(manifest_path + ": not a dataset manifest");
    if (manifest.at("version").get<int>() != kSchemaVersion)
        throw DataError(manifest_path + ": unsupported version");

    Dataset ds;
    const auto& files = manifest.at("files");
    for (auto& e : read_environments(dir + "/" + files.at("environments").get<std::string>()))
        ds.envs.emplace(e.env_id, std::move(e));
    ds.paths = read_paths(dir + "/" + files.at("paths").get<std::string>());
    const std::string instr_file = files.at("instructions").get<std::string>();
    if (std::filesystem::exists(dir + "/" + instr_file))
        ds.instructions = read_instructions(dir + "/" + instr_file);
    for (std::size_t i = 0; i < ds.paths.size(); ++i) {
        if (ds.paths[i].path_id != static_cast<std::int64_t>(i))
            throw DataError("paths file must be sorted by contiguous path_id");
        ds.env_of(ds.paths[i]);  // validates the env reference
        ds.split_paths[static_cast<int>(ds.paths[i].split)].push_back(ds.paths[i].path_id);
    }
    return ds;
}

void write_mined_pairs(const std::string& path, const std::vector<MinedPair>& pairs) {
    std::vector<ordered_json> lines;
    for (const auto& p : pairs) {
        ordered_json j;
        j["p_path_id"] = p.p_path;
        j["q_path_id"] = p.q_path;
        j["similarity"] = p.similarity;
        lines.push_back(std::move(j));
    }
    write_jsonl(path, "navrep/mined-pairs", lines);
}

std::vector<MinedPair> read_mined_pairs(const std::string& path) {
    std::vector<MinedPair> out;
    for (const auto& j : read_jsonl(path, "navrep/mined-pairs")) {
        MinedPair p;
        try {
            p.p_path = j.at("p_path_id").get<std::int64_t>();
            p.q_path = j.at("q_path_id").get<std::int64_t>();
            p.similarity = j.at("similarity").get<double>();
        } catch (const json::exception& ex) {
            throw DataError(path + ": malformed mined pair: " + ex.what());
        }
        out.push_back(p);
    }
    return out;
}

void write_trajectories(const std::string& path, const std::vector<Trajectory>& trajectories) {
    std::vector<ordered_json> lines;
    for (const auto& t : trajectories) {
        ordered_json j;
        j["env_id"] = t.env_id;
        j["path_id"] = t.path_id;
        j["language"] = t.language;
        j["nodes"] = t.nodes;
        j["stopped"] = t.stopped;
        lines.push_back(std::move(j));
    }
    write_jsonl(path, "navrep/trajectories", lines);
}

std::vector<Trajectory> read_trajectories(const std::string& path) {
    std::vector<Trajectory> out;
    for (const auto& j : read_jsonl(path, "navrep/trajectories")) {
        Trajectory t;
        try {
            t.env_id = j.at("env_id").get<std::string>();
            t.path_id = j.at("path_id").get<std::int64_t>();
            t.language = j.at("language").get<int>();
            t.nodes = j.at("nodes").get<std::vector<int>>();
            t.stopped = j.at("stopped").get<bool>();
        } catch (const json::exception& ex) {
            throw DataError(path + ": malformed trajectory: " + ex.what());
        }
        out.push_back(std::move(t));
    }
    return out;
}

double round1(double v) { return std::round(v * 10.0) / 10.0; }

namespace {

ordered_json row_to_json(const MetricRow& r) {
    ordered_json j;
    j["sr"] = round1(r.sr);
    j["spl"] = round1(r.spl);
    j["ndtw"] = round1(r.ndtw);
    j["sdtw"] = round1(r.sdtw);
    j["count"] = r.count;
    return j;
}

MetricRow row_from_json(const json& j) {
    MetricRow r;
    r.sr = j.at("sr").get<double>();
    r.spl = j.at("spl").get<double>();
    r.ndtw = j.at("ndtw").get<double>();
    r.sdtw = j.at("sdtw").get<double>();
    r.count = j.at("count").get<std::int64_t>();
    return r;
}

}  // namespace

ordered_json report_to_json(const EvalReport& report) {
    ordered_json j;
    j["schema"] = "navrep/report";
    j["version"] = kSchemaVersion;
    j["split"] = report.split;
    j["checkpoint"] = report.checkpoint_hash;
    j["aggregate"] = row_to_json(report.aggregate);
    j["per_language"] = ordered_json::object();
    for (const auto& [lang, row] : report.per_language)
        j["per_language"]["L" + std::to_string(lang + 1)] = row_to_json(row);
    j["per_environment"] = ordered_json::object();
    for (const auto& [env, row] : report.per_environment) j["per_environment"][env] = row_to_json(row);
    j["env_weighted_std"] = row_to_json(report.env_weighted_std);
    return j;
}

EvalReport report_from_json(const json& j) {
    if (!j.contains("schema") || j.at("schema") != "navrep/report")
        throw DataError("not an evaluation report");
    if (j.at("version").get<int>() != kSchemaVersion) throw DataError("unsupported report version");
    EvalReport r;
    r.split = j.at("split").get<std::string>();
    r.checkpoint_hash = j.at("checkpoint").get<std::string>();
    r.aggregate = row_from_json(j.at("aggregate"));
    for (auto it = j.at("per_language").begin(); it != j.at("per_language").end(); ++it) {
        const std::string& key = it.key();
        r.per_language[key.at(1) - '1'] = row_from_json(it.value());
    }
    for (auto it = j.at("per_environment").begin(); it != j.at("per_environment").end(); ++it)
        r.per_environment[it.key()] = row_from_json(it.value());
    r.env_weighted_std = row_from_json(j.at("env_weighted_std"));
    return r;
}

void write_report(const std::string& path, const EvalReport& report) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("cannot open for writing: " + path);
    os << report_to_json(report).dump(2) << "\n";
}

EvalReport read_report(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open report: " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw DataError(path + ": " + e.what());
    }
    return report_from_json(j);
}

std::string reports_to_csv(const std::vector<std::pair<std::string, EvalReport>>& rows) {
    std::string csv = "model";
    const char* metrics[4] = {"SR", "SPL", "NDTW", "SDTW"};
    const char* cols[4] = {"avg", "L1", "L2", "L3"};
    for (const char* m : metrics)
        for (const char* c : cols) csv += std::string(",") + m + "_" + c;
    csv += "\n";
    char buf[32];
    for (const auto& [name, rep] : rows) {
        csv += name;
        auto pick_row = [&](int which) -> const MetricRow* {
            if (which == 0) return &rep.aggregate;
            auto it = rep.per_language.find(which - 1);
            return it == rep.per_language.end() ? nullptr : &it->second;
        };
        for (int m = 0; m < 4; ++m) {
            for (int c = 0; c < 4; ++c) {
                const MetricRow* row = pick_row(c);
                double v = 0.0;
                if (row) {
                    switch (m) {
                        case 0: v = row->sr; break;
                        case 1: v = row->spl; break;
                        case 2: v = row->ndtw; break;
                        default: v = row->sdtw; break;
                    }
                }
                std::snprintf(buf, sizeof(buf), ",%.1f", round1(v));
                csv += buf;
            }
        }
        csv += "\n";
    }
    return csv;
}

RunLog::RunLog(const std::string& path, const std::string& stage, const ordered_json& config_snapshot,
               const std::map<std::string, std::string>& artifact_hashes)
    : path_(path) {
    std::ofstream os(path_, std::ios::trunc);
    if (!os) throw DataError("cannot open run log: " + path_);
    ordered_json header;
    header["schema"] = "navrep/runlog";
    header["version"] = kSchemaVersion;
    header["stage"] = stage;
    header["config"] = config_snapshot;
    header["artifact_hashes"] = artifact_hashes;
    os << header.dump() << "\n";
}

void RunLog::append(const ordered_json& line) {
    if (path_.empty()) return;
    std::ofstream os(path_, std::ios::app);
    os << line.dump() << "\n";
}

}  // namespace navrep
