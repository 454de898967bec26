#include "navrep/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "navrep/dataset.hpp"
#include "navrep/error.hpp"
#include "navrep/kernels.hpp"

namespace navrep {

std::vector<int> nearest_tokens(const Tensor& embedding_table, int token, int k) {
    if (embedding_table.rank() != 2) throw std::invalid_argument("nearest_tokens: table must be [V,d]");
    const std::int64_t v = embedding_table.shape[0];
    const std::int64_t d = embedding_table.shape[1];
    if (token < 0 || token >= v) throw DataError("nearest_tokens: unknown token " + std::to_string(token));
    if (k <= 0) return {};

    const double* q = embedding_table.row_ptr(token);
    const double qn = std::sqrt(kern::dot(static_cast<std::size_t>(d), q, q));
    if (qn == 0.0) throw NumericsError("nearest_tokens: zero-norm query embedding");

    std::vector<std::pair<double, int>> scored;
    scored.reserve(static_cast<std::size_t>(v) - 1);
    for (std::int64_t i = 0; i < v; ++i) {
        if (i == token) continue;  // query excluded
        const double* r = embedding_table.row_ptr(i);
        const double rn = std::sqrt(kern::dot(static_cast<std::size_t>(d), r, r));
        if (rn == 0.0) continue;
        scored.emplace_back(kern::dot(static_cast<std::size_t>(d), q, r) / (qn * rn), static_cast<int>(i));
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;  // deterministic tie-break by token id
    });
    std::vector<int> out;
    for (std::size_t i = 0; i < scored.size() && static_cast<int>(out.size()) < k; ++i)
        out.push_back(scored[i].second);
    return out;
}

nlohmann::ordered_json dump_attention(const Rollout& rollout) {
    nlohmann::ordered_json j;
    j["schema"] = "navrep/attention";
    j["version"] = kSchemaVersion;
    j["steps"] = nlohmann::ordered_json::array();
    for (const auto& step : rollout.steps) {
        nlohmann::ordered_json s;
        s["node"] = step.node_before;
        s["action"] = step.action_index;
        s["text_attention"] = step.text_attention;
        j["steps"].push_back(std::move(s));
    }
    return j;
}

GapTable gap_report(const EvalReport& seen, const EvalReport& unseen) {
    if (seen.checkpoint_hash != unseen.checkpoint_hash)
        throw DataError("gap_report: reports come from different checkpoints (" + seen.checkpoint_hash +
                        " vs " + unseen.checkpoint_hash + ")");
    auto row = [](double a, double b) {
        GapRow r;
        r.seen = round1(a);
        r.unseen = round1(b);
        r.gap = round1(std::abs(r.seen - r.unseen));
        return r;
    };
    GapTable t;
    t.sr = row(seen.aggregate.sr, unseen.aggregate.sr);
    t.spl = row(seen.aggregate.spl, unseen.aggregate.spl);
    t.ndtw = row(seen.aggregate.ndtw, unseen.aggregate.ndtw);
    t.sdtw = row(seen.aggregate.sdtw, unseen.aggregate.sdtw);
    for (const auto& [lang, srow] : seen.per_language) {
        auto it = unseen.per_language.find(lang);
        if (it != unseen.per_language.end()) t.ndtw_per_language[lang] = row(srow.ndtw, it->second.ndtw);
    }
    return t;
}

nlohmann::ordered_json gap_to_json(const GapTable& gap) {
    auto row = [](const GapRow& r) {
        return nlohmann::ordered_json{{"seen", r.seen}, {"unseen", r.unseen}, {"gap", r.gap}};
    };
    nlohmann::ordered_json j;
    j["schema"] = "navrep/gap";
    j["version"] = kSchemaVersion;
    j["sr"] = row(gap.sr);
    j["spl"] = row(gap.spl);
    j["ndtw"] = row(gap.ndtw);
    j["sdtw"] = row(gap.sdtw);
    j["ndtw_per_language"] = nlohmann::ordered_json::object();
    for (const auto& [lang, r] : gap.ndtw_per_language)
        j["ndtw_per_language"]["L" + std::to_string(lang + 1)] = row(r);
    return j;
}

}  // namespace navrep
