#include "navrep/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace navrep {

double dtw(const EnvGraph& env, const std::vector<int>& pred, const std::vector<int>& ref) {
    if (pred.empty() || ref.empty()) throw std::invalid_argument("dtw: empty sequence");
    const std::size_t n = pred.size(), m = ref.size();
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> prev(m + 1, inf), cur(m + 1, inf);
    prev[0] = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = inf;
        for (std::size_t j = 1; j <= m; ++j) {
            const double d = env.geodesic(pred[i - 1], ref[j - 1]);
            cur[j] = d + std::min({prev[j - 1], prev[j], cur[j - 1]});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

double ndtw(const EnvGraph& env, const std::vector<int>& pred, const std::vector<int>& ref) {
    return std::exp(-dtw(env, pred, ref) / (static_cast<double>(ref.size()) * kSuccessRadius));
}

bool success(const EnvGraph& env, const std::vector<int>& pred, const std::vector<int>& ref) {
    if (pred.empty() || ref.empty()) throw std::invalid_argument("success: empty sequence");
    return env.geodesic(pred.back(), ref.back()) < kSuccessRadius;
}

double spl(bool succeeded, double shortest_len, double taken_len) {
    if (shortest_len <= 0.0) throw std::invalid_argument("spl: shortest length must be positive");
    if (taken_len < 0.0) throw std::invalid_argument("spl: negative taken length");
    if (!succeeded) return 0.0;
    return shortest_len / std::max(shortest_len, taken_len);
}

double sdtw(const EnvGraph& env, const std::vector<int>& pred, const std::vector<int>& ref) {
    return success(env, pred, ref) ? ndtw(env, pred, ref) : 0.0;
}

double path_length(const EnvGraph& env, const std::vector<int>& nodes) {
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < nodes.size(); ++i) total += env.edge_length(nodes[i], nodes[i + 1]);
    return total;
}

namespace {

struct Accumulator {
    double sr = 0, spl = 0, ndtw = 0, sdtw = 0;
    std::int64_t count = 0;
    void add(const EpisodeScore& e) {
        sr += e.sr;
        spl += e.spl;
        ndtw += e.ndtw;
        sdtw += e.sdtw;
        ++count;
    }
    MetricRow row() const {
        MetricRow r;
        r.count = count;
        if (count > 0) {
            const double inv = 100.0 / static_cast<double>(count);
            r.sr = sr * inv;
            r.spl = spl * inv;
            r.ndtw = ndtw * inv;
            r.sdtw = sdtw * inv;
        }
        return r;
    }
};

}  // namespace

EvalReport aggregate_scores(const std::vector<EpisodeScore>& episodes, const std::string& split,
                            const std::string& checkpoint_hash) {
    if (episodes.empty()) throw std::invalid_argument("aggregate_scores: no episodes");
    EvalReport report;
    report.split = split;
    report.checkpoint_hash = checkpoint_hash;

    Accumulator all;
    std::map<int, Accumulator> by_lang;
    std::map<std::string, Accumulator> by_env;
    for (const auto& e : episodes) {
        all.add(e);
        by_lang[e.language].add(e);
        by_env[e.env_id].add(e);
    }
    report.aggregate = all.row();
    for (const auto& [lang, acc] : by_lang) report.per_language[lang] = acc.row();
    for (const auto& [env, acc] : by_env) report.per_environment[env] = acc.row();

    // Episode-count-weighted standard deviation of per-environment rows.
    auto weighted_std = [&](auto metric) {
        double wsum = 0, mean = 0;
        for (const auto& [_, row] : report.per_environment) {
            wsum += static_cast<double>(row.count);
            mean += static_cast<double>(row.count) * metric(row);
        }
        mean /= wsum;
        double var = 0;
        for (const auto& [_, row] : report.per_environment)
            var += static_cast<double>(row.count) * (metric(row) - mean) * (metric(row) - mean);
        return std::sqrt(var / wsum);
    };
    report.env_weighted_std.sr = weighted_std([](const MetricRow& r) { return r.sr; });
    report.env_weighted_std.spl = weighted_std([](const MetricRow& r) { return r.spl; });
    report.env_weighted_std.ndtw = weighted_std([](const MetricRow& r) { return r.ndtw; });
    report.env_weighted_std.sdtw = weighted_std([](const MetricRow& r) { return r.sdtw; });
    report.env_weighted_std.count = static_cast<std::int64_t>(report.per_environment.size());
    return report;
}

}  // namespace navrep
