#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "navrep/worldgen.hpp"

namespace navrep {

// Success threshold in meters; also normalizes the DTW exponent.
constexpr double kSuccessRadius = 3.0;

// Classic dynamic-time-warping cost over geodesic distances: every cell on
// the optimal monotone warp contributes dist(pred_i, ref_j).
double dtw(const EnvGraph& env, const std::vector<int>& pred, const std::vector<int>& ref);

// exp(-dtw / (|ref| * success radius)), in (0, 1].
double ndtw(const EnvGraph& env, const std::vector<int>& pred, const std::vector<int>& ref);

// Stop strictly inside the success radius of the reference goal.
bool success(const EnvGraph& env, const std::vector<int>& pred, const std::vector<int>& ref);

// success * shortest / max(shortest, taken); shortest must be positive.
double spl(bool succeeded, double shortest_len, double taken_len);

double sdtw(const EnvGraph& env, const std::vector<int>& pred, const std::vector<int>& ref);

// Metric path length: sum of edge lengths along consecutive nodes.
double path_length(const EnvGraph& env, const std::vector<int>& nodes);

struct EpisodeScore {
    std::string env_id;
    std::int64_t path_id = -1;
    int language = 0;
    double sr = 0.0;    // 0/1
    double spl = 0.0;
    double ndtw = 0.0;
    double sdtw = 0.0;
};

struct MetricRow {
    double sr = 0.0;
    double spl = 0.0;
    double ndtw = 0.0;
    double sdtw = 0.0;
    std::int64_t count = 0;
};

struct EvalReport {
    std::string split;
    std::string checkpoint_hash;
    MetricRow aggregate;                               // percent
    std::map<int, MetricRow> per_language;             // percent
    std::map<std::string, MetricRow> per_environment;  // percent
    MetricRow env_weighted_std;                        // std-dev across envs, weighted by episode count
};

// Means x100 grouped by language and environment; the aggregate equals the
// episode-count-weighted mean of the per-language rows.
EvalReport aggregate_scores(const std::vector<EpisodeScore>& episodes, const std::string& split,
                            const std::string& checkpoint_hash);

}  // namespace navrep
