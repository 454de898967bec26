#pragma once

#include <string>
#include <vector>

#include "navrep/params.hpp"
#include "navrep/tape.hpp"

namespace navrep {

// Shared multilingual sentence encoder: token embeddings contextualized by a
// 2-layer bidirectional LSTM; the state at position 0 ([CLS]) is the sentence
// representation.
struct LangEncoderConfig {
    int vocab_size = 603;
    int dim = 64;      // embedding and output width
    int layers = 2;
    double dropout = 0.0;
    std::string prefix = "lang.";
};

class LangEncoder {
public:
    explicit LangEncoder(LangEncoderConfig cfg) : cfg_(cfg) {}

    void init_params(ParamStore& store, Rng& rng) const;

    struct Output {
        Var sentence;      // [dim], state at [CLS]
        Var token_states;  // [n, dim], row 0 is [CLS]
    };
    // Throws std::invalid_argument on an empty instruction.
    Output encode(ParamCtx& P, const std::vector<int>& tokens, Rng* dropout_rng = nullptr) const;

    // Convenience: forward pass on a private tape, returning raw values.
    Tensor sentence_embedding(ParamStore& store, const std::vector<int>& tokens) const;

    const LangEncoderConfig& config() const { return cfg_; }

private:
    LangEncoderConfig cfg_;
    int dir_hidden() const { return cfg_.dim / 2; }
};

// Two-layer projection with ReLU, residual connection, layer normalization.
// Input and output widths are equal (the residual requires it).
struct VisEncoderConfig {
    int dim = 64;
    std::string prefix = "vis.";
};

class VisEncoder {
public:
    explicit VisEncoder(VisEncoderConfig cfg) : cfg_(cfg) {}

    void init_params(ParamStore& store, Rng& rng) const;

    // Rows are views; per-row processing makes this permutation-equivariant.
    Var encode_views(ParamCtx& P, Var features) const;
    Var encode_views(ParamCtx& P, const Tensor& features) const;

    const VisEncoderConfig& config() const { return cfg_; }

private:
    VisEncoderConfig cfg_;
};

// Panorama representation: arithmetic mean of the 36 view encodings.
Var pool_panorama(Var view_encodings);

}  // namespace navrep
