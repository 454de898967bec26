#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "navrep/encoders.hpp"
#include "navrep/instrgen.hpp"
#include "navrep/params.hpp"
#include "navrep/tape.hpp"
#include "navrep/worldgen.hpp"

namespace navrep {

// Positive-pair sampling strategy: any two of the nine instructions (multi),
// two of the same language (mono), or one from each of two chosen languages.
struct PairStrategy {
    enum class Kind { multi, mono, subset } kind = Kind::multi;
    int lang_a = -1;
    int lang_b = -1;

    static PairStrategy parse(const std::string& s);
    std::string str() const;
};

// Two distinct instructions of the same path under the strategy's language
// constraint. Throws DataError when the strategy admits no valid pair.
std::pair<const Instruction*, const Instruction*> sample_instruction_pair(
    const std::vector<const Instruction*>& of_path, const PairStrategy& strategy, Rng& rng);

// In-batch contrastive loss over N positive pairs. Anchors run over the first
// sides; each anchor's positive is its partner and the other 2(N-1) batch
// embeddings are negatives (the positive itself is excluded from neither the
// numerator nor denominator; the anchor is excluded from both). Returns the
// sum over anchors. `symmetric` adds the mirrored anchors (off by default).
Var lang_loss(const std::vector<Var>& first_side, const std::vector<Var>& second_side, double tau,
              bool symmetric = false);

// ---- path-pair mining ----

struct MinedPair {
    std::int64_t p_path = -1;
    std::int64_t q_path = -1;
    double similarity = 0.0;
};

struct MiningEntry {
    std::int64_t path_id = -1;
    std::string env_id;
    int path_len = 0;       // number of nodes
    Tensor embedding;       // sentence embedding of one instruction
};

// Exact exhaustive retrieval: for every instruction, the most cosine-similar
// instruction whose path lies in a different environment and has the same
// length. Ties break toward the lowest candidate path id. Queries with no
// eligible candidate are skipped (counted in *skipped when given).
std::vector<MinedPair> mine_path_pairs(const std::vector<MiningEntry>& entries, int* skipped = nullptr);

// Keeps pairs with similarity >= threshold. threshold 0 keeps everything.
std::vector<MinedPair> similarity_filter(std::vector<MinedPair> pairs, double threshold);

// ---- object-matching constraint ----

struct ObjectSampler {
    int sample_size = 10;
    // Distinct class ids drawn fresh each training iteration.
    std::vector<int> draw(Rng& rng) const;
};

enum class ObjectConstraintMode { sampled, fixed_all, off };
ObjectConstraintMode parse_object_mode(const std::string& s);
const char* object_mode_name(ObjectConstraintMode m);

// mask[t] = the two step-t panoramas share at least one object class within
// `sampled_classes`.
std::vector<bool> object_filter(const EnvGraph& p_env, const Path& p, const EnvGraph& q_env, const Path& q,
                                const std::vector<int>& sampled_classes);

// Visual contrastive loss over N same-length path pairs. Anchors are the
// mask-true (k, t) panoramas on the first side; candidates at step t are all
// N second-side panoramas (mask-false pairs still serve as negatives).
// Requires at least one eligible anchor.
Var visual_loss(const std::vector<std::vector<Var>>& first_side, const std::vector<std::vector<Var>>& second_side,
                const std::vector<std::vector<bool>>& masks, double tau);

// Number of mask-true anchors (N_p); callers skip batches where this is 0.
int count_eligible(const std::vector<std::vector<bool>>& masks);

}  // namespace navrep
