#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "navrep/agent.hpp"
#include "navrep/metrics.hpp"
#include "navrep/tensor.hpp"

namespace navrep {

// k cosine-nearest rows of the embedding table, excluding the query token;
// ties break toward the lower token id.
std::vector<int> nearest_tokens(const Tensor& embedding_table, int token, int k);

// Step-indexed instruction attention weights of one episode; each row sums
// to 1.
nlohmann::ordered_json dump_attention(const Rollout& rollout);

struct GapRow {
    double seen = 0.0;
    double unseen = 0.0;
    double gap = 0.0;  // |seen - unseen|
};
struct GapTable {
    GapRow sr, spl, ndtw, sdtw;
    std::map<int, GapRow> ndtw_per_language;
};

// Absolute seen/unseen difference per metric. Both reports must come from
// the same checkpoint.
GapTable gap_report(const EvalReport& seen, const EvalReport& unseen);
nlohmann::ordered_json gap_to_json(const GapTable& gap);

}  // namespace navrep
