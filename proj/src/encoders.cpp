#include "navrep/encoders.hpp"

#include <cmath>
#include <stdexcept>

#include "navrep/worldgen.hpp"

namespace navrep {

namespace {

std::string layer_name(const std::string& prefix, int layer, bool backward, const char* part) {
    return prefix + "l" + std::to_string(layer) + (backward ? ".bwd." : ".fwd.") + part;
}

}  // namespace

void LangEncoder::init_params(ParamStore& store, Rng& rng) const {
    if (cfg_.dim % 2 != 0) throw std::invalid_argument("LangEncoder: dim must be even");
    const int h = dir_hidden();
    Rng r = rng.substream(cfg_.prefix);
    store.create_uniform(cfg_.prefix + "embed", {cfg_.vocab_size, cfg_.dim}, 0.1, r);
    for (int layer = 0; layer < cfg_.layers; ++layer) {
        const int in_dim = cfg_.dim;  // layer 0 reads embeddings, later layers the concat output
        for (bool backward : {false, true}) {
            const double rx = 1.0 / std::sqrt(static_cast<double>(in_dim));
            const double rh = 1.0 / std::sqrt(static_cast<double>(h));
            store.create_uniform(layer_name(cfg_.prefix, layer, backward, "wx"), {4 * h, in_dim}, rx, r);
            store.create_uniform(layer_name(cfg_.prefix, layer, backward, "wh"), {4 * h, h}, rh, r);
            store.create(layer_name(cfg_.prefix, layer, backward, "b"), Tensor::zeros({4 * h}));
        }
    }
}

LangEncoder::Output LangEncoder::encode(ParamCtx& P, const std::vector<int>& tokens, Rng* dropout_rng) const {
    if (tokens.empty()) throw std::invalid_argument("encode: empty instruction");
    const int n = static_cast<int>(tokens.size());
    const int h = dir_hidden();
    Tape& tape = P.tape();

    Var x = embed(P(cfg_.prefix + "embed"), tokens);  // [n, dim]
    for (int layer = 0; layer < cfg_.layers; ++layer) {
        std::vector<Var> fwd_states(static_cast<std::size_t>(n));
        std::vector<Var> bwd_states(static_cast<std::size_t>(n));
        for (bool backward : {false, true}) {
            Var wx = P(layer_name(cfg_.prefix, layer, backward, "wx"));
            Var wh = P(layer_name(cfg_.prefix, layer, backward, "wh"));
            Var b = P(layer_name(cfg_.prefix, layer, backward, "b"));
            Var state = tape.constant(Tensor::zeros({h}));
            Var cell = tape.constant(Tensor::zeros({h}));
            for (int t = 0; t < n; ++t) {
                const int pos = backward ? n - 1 - t : t;
                auto [state_next, cell_next] = lstm_step(row(x, pos), state, cell, wx, wh, b);
                state = state_next;
                cell = cell_next;
                (backward ? bwd_states : fwd_states)[static_cast<std::size_t>(pos)] = state;
            }
        }
        std::vector<Var> rows;
        rows.reserve(static_cast<std::size_t>(n));
        for (int t = 0; t < n; ++t)
            rows.push_back(concat_vec({fwd_states[static_cast<std::size_t>(t)], bwd_states[static_cast<std::size_t>(t)]}));
        x = stack_rows(rows);  // [n, dim]
        if (cfg_.dropout > 0.0 && dropout_rng) x = dropout(x, cfg_.dropout, *dropout_rng);
    }
    return Output{row(x, 0), x};
}

Tensor LangEncoder::sentence_embedding(ParamStore& store, const std::vector<int>& tokens) const {
    Tape tape;
    ParamCtx P(tape, store);
    return encode(P, tokens).sentence.val();
}

void VisEncoder::init_params(ParamStore& store, Rng& rng) const {
    Rng r = rng.substream(cfg_.prefix);
    const double range = 1.0 / std::sqrt(static_cast<double>(cfg_.dim));
    store.create_uniform(cfg_.prefix + "proj_in", {cfg_.dim, cfg_.dim}, range, r);
    store.create_uniform(cfg_.prefix + "proj_out", {cfg_.dim, cfg_.dim}, range, r);
    store.create(cfg_.prefix + "ln_gain", Tensor::full({cfg_.dim}, 1.0));
    store.create(cfg_.prefix + "ln_bias", Tensor::zeros({cfg_.dim}));
}

Var VisEncoder::encode_views(ParamCtx& P, Var features) const {
    if (features.val().cols() != cfg_.dim)
        throw std::invalid_argument("encode_views: feature dim " + features.val().shape_str() +
                                    " does not match encoder dim");
    Var inner = relu(linear(features, P(cfg_.prefix + "proj_in"), std::nullopt));
    Var projected = linear(inner, P(cfg_.prefix + "proj_out"), std::nullopt);
    return layer_norm(add(projected, features), P(cfg_.prefix + "ln_gain"), P(cfg_.prefix + "ln_bias"));
}

Var VisEncoder::encode_views(ParamCtx& P, const Tensor& features) const {
    return encode_views(P, P.tape().constant(features));
}

Var pool_panorama(Var view_encodings) {
    if (view_encodings.val().rank() != 2 || view_encodings.val().shape[0] != kViewsPerPanorama)
        throw std::invalid_argument("pool_panorama: expected exactly " + std::to_string(kViewsPerPanorama) +
                                    " view encodings, got " + view_encodings.val().shape_str());
    return mean_rows(view_encodings);
}

}  // namespace navrep
