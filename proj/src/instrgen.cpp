#include "navrep/instrgen.hpp"

#include <algorithm>
#include <stdexcept>

#include "navrep/error.hpp"

namespace navrep {

namespace {

// Per-language block layout (offsets within the 200-token block):
//   [0, 12)    4 actions x 3 synonyms
//   [12, 93)   27 landmark classes x 3 synonyms
//   [93, 96)   connectives
//   [96, 104)  fillers
//   [104, 200) reserved
constexpr int kActionOffset = 0;
constexpr int kLandmarkOffset = 12;
constexpr int kConnectiveOffset = 93;
constexpr int kFillerOffset = 96;
constexpr int kReservedOffset = 104;

int action_token(int lang, ActionKind a, int synonym) {
    return language_base(lang) + kActionOffset + static_cast<int>(a) * kActionSynonyms + synonym;
}

int landmark_token(int lang, int cls, int synonym) {
    return language_base(lang) + kLandmarkOffset + cls * kLandmarkSynonyms + synonym;
}

int connective_token(int lang, int synonym) { return language_base(lang) + kConnectiveOffset + synonym; }

int filler_token(int lang, int which) { return language_base(lang) + kFillerOffset + which; }

}  // namespace

std::vector<LanguageSpec> default_languages() {
    return {
        LanguageSpec{.id = 0, .mention_rate = 0.9, .filler_rate = 0.15, .landmark_first = false},
        LanguageSpec{.id = 1, .mention_rate = 0.7, .filler_rate = 0.25, .landmark_first = true},
        LanguageSpec{.id = 2, .mention_rate = 0.5, .filler_rate = 0.4, .landmark_first = false},
    };
}

int language_base(int language) {
    if (language < 0 || language >= kNumLanguages) throw std::invalid_argument("bad language id");
    return 3 + language * kLangVocab;
}

TokenInfo token_info(int token_id) {
    TokenInfo info;
    if (token_id < 0 || token_id >= kVocabSize) throw DataError("unknown token id " + std::to_string(token_id));
    if (token_id < 3) {
        info.kind = TokenKind::special;
        return info;
    }
    const int lang = (token_id - 3) / kLangVocab;
    const int off = (token_id - 3) % kLangVocab;
    info.language = lang;
    if (off < kLandmarkOffset) {
        info.kind = TokenKind::action;
        info.action = (off - kActionOffset) / kActionSynonyms;
        info.synonym = (off - kActionOffset) % kActionSynonyms;
    } else if (off < kConnectiveOffset) {
        info.kind = TokenKind::landmark;
        info.landmark = (off - kLandmarkOffset) / kLandmarkSynonyms;
        info.synonym = (off - kLandmarkOffset) % kLandmarkSynonyms;
    } else if (off < kFillerOffset) {
        info.kind = TokenKind::connective;
        info.synonym = off - kConnectiveOffset;
    } else if (off < kReservedOffset) {
        info.kind = TokenKind::filler;
        info.synonym = off - kFillerOffset;
    } else {
        info.kind = TokenKind::reserved;
    }
    return info;
}

std::string token_surface(int token_id) {
    if (token_id == kTokPad) return "[PAD]";
    if (token_id == kTokCls) return "[CLS]";
    if (token_id == kTokSep) return "[SEP]";
    const TokenInfo info = token_info(token_id);
    const std::string prefix = "l" + std::to_string(info.language + 1) + ":";
    const char suffix = static_cast<char>('a' + info.synonym);
    switch (info.kind) {
        case TokenKind::action: {
            static const char* kActionWords[4] = {"go", "left", "right", "halt"};
            return prefix + kActionWords[info.action] + "." + suffix;
        }
        case TokenKind::landmark: {
            std::string name = kObjectClasses[static_cast<std::size_t>(info.landmark)];
            for (auto& ch : name)
                if (ch == ' ' || ch == '(' || ch == ')') ch = '_';
            return prefix + name + "." + suffix;
        }
        case TokenKind::connective:
            return prefix + "at." + suffix;
        case TokenKind::filler:
            return prefix + "hm" + std::to_string(info.synonym);
        default:
            return prefix + "res" + std::to_string(token_id);
    }
}

std::vector<std::string> vocab_table() {
    std::vector<std::string> out;
    out.reserve(kVocabSize);
    for (int id = 0; id < kVocabSize; ++id) out.push_back(token_surface(id));
    return out;
}

std::vector<int> verbalize(const Frame& frame, const LanguageSpec& lang, std::uint64_t annotator_seed) {
    std::vector<int> tokens;
    tokens.push_back(kTokCls);
    Rng root(annotator_seed);
    for (std::size_t i = 0; i < frame.size(); ++i) {
        const FrameStep& step = frame[i];
        // One substream per step with a fixed draw order, so omitted landmarks
        // do not desynchronize later choices.
        Rng rng = root.substream(static_cast<std::uint64_t>(i));
        const int a_syn = static_cast<int>(rng.uniform_int(kActionSynonyms));
        const int l_syn = static_cast<int>(rng.uniform_int(kLandmarkSynonyms));
        const int c_syn = static_cast<int>(rng.uniform_int(kConnectiveSynonyms));
        const bool mention = rng.coin(lang.mention_rate);
        const bool filler = rng.coin(lang.filler_rate);
        const int f_syn = static_cast<int>(rng.uniform_int(kFillerTokens));

        const bool say_landmark = mention && step.landmark.has_value();
        if (lang.landmark_first) {
            if (say_landmark) {
                tokens.push_back(landmark_token(lang.id, *step.landmark, l_syn));
                tokens.push_back(connective_token(lang.id, c_syn));
            }
            tokens.push_back(action_token(lang.id, step.action, a_syn));
        } else {
            tokens.push_back(action_token(lang.id, step.action, a_syn));
            if (say_landmark) {
                tokens.push_back(connective_token(lang.id, c_syn));
                tokens.push_back(landmark_token(lang.id, *step.landmark, l_syn));
            }
        }
        if (filler) tokens.push_back(filler_token(lang.id, f_syn));
    }
    tokens.push_back(kTokSep);
    if (tokens.size() > kMaxInstructionLen) tokens.resize(kMaxInstructionLen);  // truncated from the end
    return tokens;
}

Frame detokenize(const std::vector<int>& tokens) {
    if (tokens.empty() || tokens[0] != kTokCls) throw DataError("instruction must begin with [CLS]");
    int lang = -1;
    bool saw_sep = false;

    Frame frame;
    bool step_open = false;            // verb-first: an action waiting for its landmark
    std::optional<int> pending_landmark;  // landmark-first: a landmark waiting for its action
    bool landmark_first = false;

    for (std::size_t i = 1; i < tokens.size(); ++i) {
        const int id = tokens[i];
        if (id == kTokSep) {
            saw_sep = true;
            break;
        }
        const TokenInfo info = token_info(id);
        if (info.kind == TokenKind::special || info.kind == TokenKind::reserved)
            throw DataError("unexpected token id " + std::to_string(id) + " inside instruction");
        if (lang == -1) {
            lang = info.language;
            landmark_first = default_languages()[static_cast<std::size_t>(lang)].landmark_first;
        } else if (info.language != lang) {
            throw DataError("instruction mixes languages");
        }
        switch (info.kind) {
            case TokenKind::action: {
                FrameStep step;
                step.action = static_cast<ActionKind>(info.action);
                if (landmark_first) {
                    step.landmark = pending_landmark;
                    pending_landmark.reset();
                    frame.push_back(step);
                } else {
                    frame.push_back(step);
                    step_open = true;
                }
                break;
            }
            case TokenKind::landmark:
                if (landmark_first) {
                    pending_landmark = info.landmark;
                } else if (step_open && !frame.empty() && !frame.back().landmark) {
                    frame.back().landmark = info.landmark;
                    step_open = false;
                }
                // stray landmark with no open step: ignore (filler-like)
                break;
            case TokenKind::connective:
            case TokenKind::filler:
                break;
            default:
                break;
        }
    }
    if (!saw_sep && !frame.empty()) frame.pop_back();  // truncated mid-step: drop the partial tail
    return frame;
}

std::vector<Instruction> generate_instructions(const Path& path, std::uint64_t seed,
                                               const std::vector<LanguageSpec>& langs) {
    if (path.frame.empty()) throw std::invalid_argument("generate_instructions: path has no semantic frame");
    std::vector<Instruction> out;
    Rng root(seed);
    for (const LanguageSpec& lang : langs) {
        Rng lrng = root.substream(static_cast<std::uint64_t>(lang.id));
        for (int annotator = 0; annotator < 3; ++annotator) {
            Instruction instr;
            instr.path_id = path.path_id;
            instr.language = lang.id;
            instr.annotator = annotator;
            instr.annotator_seed = lrng.substream(static_cast<std::uint64_t>(annotator)).seed();
            instr.tokens = verbalize(path.frame, lang, instr.annotator_seed);
            out.push_back(std::move(instr));
        }
    }
    return out;
}

}  // namespace navrep
