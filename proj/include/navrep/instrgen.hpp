#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "navrep/rng.hpp"
#include "navrep/worldgen.hpp"

namespace navrep {

// Three constructed languages with pairwise-disjoint vocabularies (only
// [PAD]/[CLS]/[SEP] are shared). A bag-of-tokens model cannot align them;
// any cross-lingual structure has to come from the contrastive objective.
constexpr int kNumLanguages = 3;
constexpr int kTokPad = 0;
constexpr int kTokCls = 1;
constexpr int kTokSep = 2;
constexpr int kLangVocab = 200;  // per-language block size
constexpr int kVocabSize = 3 + kNumLanguages * kLangVocab;
constexpr int kMaxInstructionLen = 160;  // includes [CLS]

constexpr int kActionSynonyms = 3;
constexpr int kLandmarkSynonyms = 3;
constexpr int kConnectiveSynonyms = 3;
constexpr int kFillerTokens = 8;

struct LanguageSpec {
    int id = 0;
    double mention_rate = 0.9;  // probability a step's landmark is verbalized
    double filler_rate = 0.15;
    bool landmark_first = false;  // word-order template
};

// Default templates: L1 verb-first chatty, L2 landmark-first, L3 verb-first
// terse. Mention rates < 1 leave complementary landmark information across
// languages for the same path.
std::vector<LanguageSpec> default_languages();

struct Instruction {
    std::int64_t path_id = -1;
    int language = 0;
    int annotator = 0;
    std::uint64_t annotator_seed = 0;
    std::vector<int> tokens;  // begins with [CLS], length <= 160
};

// Token classification.
enum class TokenKind { special, action, landmark, connective, filler, reserved };
struct TokenInfo {
    TokenKind kind = TokenKind::reserved;
    int language = -1;
    int action = -1;     // ActionKind as int when kind == action
    int landmark = -1;   // object class when kind == landmark
    int synonym = -1;
};
TokenInfo token_info(int token_id);
int language_base(int language);
std::string token_surface(int token_id);
// id -> surface for the whole vocabulary.
std::vector<std::string> vocab_table();

// Deterministic verbalization of a frame. Depends only on
// (frame, language spec, annotator_seed); paths never enter, which is what
// makes identical frames yield token-identical instructions.
std::vector<int> verbalize(const Frame& frame, const LanguageSpec& lang, std::uint64_t annotator_seed);

// Recovers the expressed frame (actions plus the landmarks actually
// mentioned). Throws DataError on unknown token ids or mixed languages.
// A sequence without a trailing [SEP] is treated as truncated and its final,
// possibly partial, step is dropped.
Frame detokenize(const std::vector<int>& tokens);

// 9 instructions for a path: 3 languages x 3 annotator seeds. Deterministic
// in (path.frame, seed).
std::vector<Instruction> generate_instructions(const Path& path, std::uint64_t seed,
                                               const std::vector<LanguageSpec>& langs = default_languages());

}  // namespace navrep
