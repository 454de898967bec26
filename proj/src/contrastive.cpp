#include "navrep/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

#include "navrep/error.hpp"
#include "navrep/kernels.hpp"

namespace navrep {

PairStrategy PairStrategy::parse(const std::string& s) {
    PairStrategy out;
    if (s == "multi") {
        out.kind = Kind::multi;
        return out;
    }
    if (s == "mono") {
        out.kind = Kind::mono;
        return out;
    }
    // "L1+L2" style subsets
    if (s.size() == 5 && (s[0] == 'L' || s[0] == 'l') && s[2] == '+' && (s[3] == 'L' || s[3] == 'l')) {
        const int a = s[1] - '1';
        const int b = s[4] - '1';
        if (a >= 0 && a < kNumLanguages && b >= 0 && b < kNumLanguages && a != b) {
            out.kind = Kind::subset;
            out.lang_a = std::min(a, b);
            out.lang_b = std::max(a, b);
            return out;
        }
    }
    throw ConfigError("unknown pairing strategy '" + s + "' (expected multi|mono|L1+L2|L1+L3|L2+L3)");
}

std::string PairStrategy::str() const {
    switch (kind) {
        case Kind::multi: return "multi";
        case Kind::mono: return "mono";
        case Kind::subset:
            return "L" + std::to_string(lang_a + 1) + "+L" + std::to_string(lang_b + 1);
    }
    return "multi";
}

std::pair<const Instruction*, const Instruction*> sample_instruction_pair(
    const std::vector<const Instruction*>& of_path, const PairStrategy& strategy, Rng& rng) {
    switch (strategy.kind) {
        case PairStrategy::Kind::multi: {
            if (of_path.size() < 2) throw DataError("sample_instruction_pair: need at least 2 instructions");
            const std::size_t i = rng.uniform_int(of_path.size());
            std::size_t j = rng.uniform_int(of_path.size() - 1);
            if (j >= i) ++j;
            return {of_path[i], of_path[j]};
        }
        case PairStrategy::Kind::mono: {
            std::vector<std::vector<const Instruction*>> by_lang(kNumLanguages);
            for (const Instruction* ins : of_path) by_lang[static_cast<std::size_t>(ins->language)].push_back(ins);
            std::vector<int> eligible;
            for (int l = 0; l < kNumLanguages; ++l)
                if (by_lang[static_cast<std::size_t>(l)].size() >= 2) eligible.push_back(l);
            if (eligible.empty()) throw DataError("sample_instruction_pair: mono strategy has no valid pair");
            const auto& pool = by_lang[static_cast<std::size_t>(eligible[rng.uniform_int(eligible.size())])];
            const std::size_t i = rng.uniform_int(pool.size());
            std::size_t j = rng.uniform_int(pool.size() - 1);
            if (j >= i) ++j;
            return {pool[i], pool[j]};
        }
        case PairStrategy::Kind::subset: {
            std::vector<const Instruction*> a_pool, b_pool;
            for (const Instruction* ins : of_path) {
                if (ins->language == strategy.lang_a) a_pool.push_back(ins);
                if (ins->language == strategy.lang_b) b_pool.push_back(ins);
            }
            if (a_pool.empty() || b_pool.empty())
                throw DataError("sample_instruction_pair: subset strategy has no valid pair");
            return {a_pool[rng.uniform_int(a_pool.size())], b_pool[rng.uniform_int(b_pool.size())]};
        }
    }
    throw DataError("sample_instruction_pair: bad strategy");
}

namespace {

Var anchored_infonce(const std::vector<Var>& anchors_side, const std::vector<Var>& partner_side, double tau) {
    const std::size_t n = anchors_side.size();
    std::optional<Var> total;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<Var> scores;  // positive first, then the 2(N-1) negatives
        scores.reserve(2 * n - 1);
        scores.push_back(scale(cosine_sim(anchors_side[i], partner_side[i]), 1.0 / tau));
        for (std::size_t k = 0; k < n; ++k) {
            if (k == i) continue;
            scores.push_back(scale(cosine_sim(anchors_side[i], anchors_side[k]), 1.0 / tau));
            scores.push_back(scale(cosine_sim(anchors_side[i], partner_side[k]), 1.0 / tau));
        }
        Var loss_i = neg(pick(log_softmax(concat_vec(scores)), 0));
        total = total ? add(*total, loss_i) : loss_i;
    }
    return *total;
}

}  // namespace

Var lang_loss(const std::vector<Var>& first_side, const std::vector<Var>& second_side, double tau,
              bool symmetric) {
    if (first_side.size() != second_side.size())
        throw std::invalid_argument("lang_loss: side sizes disagree");
    if (first_side.size() < 2)
        throw std::invalid_argument("lang_loss: batch must hold at least 2 pairs");
    if (tau <= 0.0) throw std::invalid_argument("lang_loss: temperature must be positive");
    Var loss = anchored_infonce(first_side, second_side, tau);
    if (symmetric) loss = add(loss, anchored_infonce(second_side, first_side, tau));
    return loss;
}

std::vector<MinedPair> mine_path_pairs(const std::vector<MiningEntry>& entries, int* skipped) {
    // Normalize once; cosine reduces to a dot product.
    std::vector<Tensor> unit;
    unit.reserve(entries.size());
    for (const auto& e : entries) {
        const double sq = kern::dot(e.embedding.data.size(), e.embedding.data.data(), e.embedding.data.data());
        if (sq == 0.0) throw NumericsError("mine_path_pairs: zero-norm instruction embedding");
        Tensor u = e.embedding;
        const double inv = 1.0 / std::sqrt(sq);
        for (auto& x : u.data) x *= inv;
        unit.push_back(std::move(u));
    }
    // Candidate scan order: ascending (path_id, index) within each length
    // bucket, so that keeping the first strict maximum realizes the
    // lowest-path-id tie-break.
    std::map<int, std::vector<std::size_t>> by_len;
    for (std::size_t i = 0; i < entries.size(); ++i) by_len[entries[i].path_len].push_back(i);
    for (auto& [_, bucket] : by_len) {
        std::sort(bucket.begin(), bucket.end(), [&](std::size_t a, std::size_t b) {
            if (entries[a].path_id != entries[b].path_id) return entries[a].path_id < entries[b].path_id;
            return a < b;
        });
    }

    std::vector<MinedPair> out;
    int skip_count = 0;
    for (std::size_t q = 0; q < entries.size(); ++q) {
        const auto& query = entries[q];
        double best = -2.0;
        std::int64_t best_path = -1;
        for (std::size_t idx : by_len[query.path_len]) {
            const auto& cand = entries[idx];
            if (cand.env_id == query.env_id) continue;  // implies cand.path != query.path
            const double sim = kern::dot(unit[q].data.size(), unit[q].data.data(), unit[idx].data.data());
            if (sim > best) {
                best = sim;
                best_path = cand.path_id;
            }
        }
        if (best_path < 0) {
            ++skip_count;
            continue;
        }
        out.push_back(MinedPair{query.path_id, best_path, best});
    }
    if (skipped) *skipped = skip_count;
    return out;
}

std::vector<MinedPair> similarity_filter(std::vector<MinedPair> pairs, double threshold) {
    if (threshold < 0.0 || threshold > 1.0)
        throw std::invalid_argument("similarity_filter: threshold must be in [0,1]");
    if (threshold == 0.0) return pairs;
    pairs.erase(std::remove_if(pairs.begin(), pairs.end(),
                               [&](const MinedPair& p) { return p.similarity < threshold; }),
                pairs.end());
    return pairs;
}

std::vector<int> ObjectSampler::draw(Rng& rng) const {
    auto picked = rng.sample_without_replacement(kNumObjectClasses, static_cast<std::size_t>(sample_size));
    std::vector<int> out(picked.begin(), picked.end());
    std::sort(out.begin(), out.end());
    return out;
}

ObjectConstraintMode parse_object_mode(const std::string& s) {
    if (s == "sampled-10" || s == "sampled") return ObjectConstraintMode::sampled;
    if (s == "fixed-27" || s == "fixed") return ObjectConstraintMode::fixed_all;
    if (s == "off") return ObjectConstraintMode::off;
    throw ConfigError("unknown object constraint mode '" + s + "' (expected sampled-10|fixed-27|off)");
}

const char* object_mode_name(ObjectConstraintMode m) {
    switch (m) {
        case ObjectConstraintMode::sampled: return "sampled-10";
        case ObjectConstraintMode::fixed_all: return "fixed-27";
        case ObjectConstraintMode::off: return "off";
    }
    return "sampled-10";
}

std::vector<bool> object_filter(const EnvGraph& p_env, const Path& p, const EnvGraph& q_env, const Path& q,
                                const std::vector<int>& sampled_classes) {
    if (p.nodes.size() != q.nodes.size())
        throw std::invalid_argument("object_filter: paths must have equal length");
    const std::set<int> sample(sampled_classes.begin(), sampled_classes.end());
    std::vector<bool> mask(p.nodes.size(), false);
    for (std::size_t t = 0; t < p.nodes.size(); ++t) {
        const auto& a = p_env.node_objects[static_cast<std::size_t>(p.nodes[t])];
        const auto& b = q_env.node_objects[static_cast<std::size_t>(q.nodes[t])];
        for (int cls : a) {
            if (!sample.count(cls)) continue;
            if (std::find(b.begin(), b.end(), cls) != b.end()) {
                mask[t] = true;
                break;
            }
        }
    }
    return mask;
}

int count_eligible(const std::vector<std::vector<bool>>& masks) {
    int n = 0;
    for (const auto& m : masks)
        for (bool b : m)
            if (b) ++n;
    return n;
}

Var visual_loss(const std::vector<std::vector<Var>>& first_side, const std::vector<std::vector<Var>>& second_side,
                const std::vector<std::vector<bool>>& masks, double tau) {
    const std::size_t n = first_side.size();
    if (n < 2) throw std::invalid_argument("visual_loss: batch must hold at least 2 pairs");
    if (second_side.size() != n || masks.size() != n)
        throw std::invalid_argument("visual_loss: side/mask sizes disagree");
    if (tau <= 0.0) throw std::invalid_argument("visual_loss: temperature must be positive");
    const std::size_t len = first_side[0].size();
    for (std::size_t k = 0; k < n; ++k) {
        if (first_side[k].size() != len || second_side[k].size() != len || masks[k].size() != len)
            throw std::invalid_argument("visual_loss: all pairs in a batch must share one path length");
    }
    if (count_eligible(masks) == 0) throw std::invalid_argument("visual_loss: no eligible anchors (N_p = 0)");

    std::optional<Var> total;
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t t = 0; t < len; ++t) {
            if (!masks[k][t]) continue;
            std::vector<Var> scores;
            scores.reserve(n);
            for (std::size_t j = 0; j < n; ++j)
                scores.push_back(scale(cosine_sim(first_side[k][t], second_side[j][t]), 1.0 / tau));
            Var loss_kt = neg(pick(log_softmax(concat_vec(scores)), static_cast<std::int64_t>(k)));
            total = total ? add(*total, loss_kt) : loss_kt;
        }
    }
    return *total;
}

}  // namespace navrep
