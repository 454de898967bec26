#include "navrep/agent.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "navrep/error.hpp"
#include "navrep/metrics.hpp"

namespace navrep {

Tensor orientation_feature(double heading, double elevation) {
    return Tensor::vec({std::cos(heading), std::sin(heading), std::cos(elevation), std::sin(elevation)});
}

void NavDecoder::init_params(ParamStore& store, Rng& rng) const {
    Rng r = rng.substream(cfg_.prefix);
    const int fd = feat_dim();
    const int h = cfg_.hidden;
    const int a = cfg_.action_embed_dim;
    auto range = [](int fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); };
    store.create_uniform(cfg_.prefix + "view_attn", {fd, h}, range(h), r);
    store.create_uniform(cfg_.prefix + "text_attn", {lang_dim_, h}, range(h), r);
    store.create_uniform(cfg_.prefix + "merge", {h, lang_dim_ + h}, range(lang_dim_ + h), r);
    store.create_uniform(cfg_.prefix + "action_out", {fd, h}, range(h), r);
    store.create_uniform(cfg_.prefix + "act_embed", {a, 4}, range(4), r);
    store.create_uniform(cfg_.prefix + "lstm.wx", {4 * h, fd + a}, range(fd + a), r);
    store.create_uniform(cfg_.prefix + "lstm.wh", {4 * h, h}, range(h), r);
    store.create(cfg_.prefix + "lstm.b", Tensor::zeros({4 * h}));
    store.create_uniform(cfg_.prefix + "value.w", {1, h}, range(h), r);
    store.create(cfg_.prefix + "value.b", Tensor::zeros({1}));
}

NavDecoder::State NavDecoder::initial_state(Tape& tape) const {
    State s;
    s.grounded = tape.constant(Tensor::zeros({cfg_.hidden}));
    s.cell = tape.constant(Tensor::zeros({cfg_.hidden}));
    s.prev_orientation = Tensor::zeros({4});
    return s;
}

NavDecoder::StepOut NavDecoder::step(ParamCtx& P, Var view_feats, Var cand_feats, Var token_states,
                                     const State& state) const {
    Tape& tape = P.tape();
    if (cand_feats.val().rows() < 1) throw std::invalid_argument("decoder step: no candidates");

    // attention over the 36 views, conditioned on the grounded context
    Var view_query = matvec(P(cfg_.prefix + "view_attn"), state.grounded);   // [fd]
    Var view_weights = softmax(matvec(view_feats, view_query));              // [36]
    Var attended_view = vecmat(view_weights, view_feats);                    // [fd]

    // LSTM over [attended view; previous action embedding]
    Var prev_act = matvec(P(cfg_.prefix + "act_embed"), tape.constant(state.prev_orientation));
    auto [context, cell] = lstm_step(concat_vec({attended_view, prev_act}), state.grounded, state.cell,
                                     P(cfg_.prefix + "lstm.wx"), P(cfg_.prefix + "lstm.wh"),
                                     P(cfg_.prefix + "lstm.b"));

    // attention over instruction tokens
    Var text_query = matvec(P(cfg_.prefix + "text_attn"), context);          // [lang_dim]
    Var text_attn = softmax(matvec(token_states, text_query));               // [m]
    Var attended_text = vecmat(text_attn, token_states);                     // [lang_dim]

    Var grounded = tanh_(linear(concat_vec({attended_text, context}), P(cfg_.prefix + "merge"), std::nullopt));

    Var action_query = matvec(P(cfg_.prefix + "action_out"), grounded);      // [fd]
    Var logits = matvec(cand_feats, action_query);                           // [K]

    Var value = pick(add(matvec(P(cfg_.prefix + "value.w"), grounded), P(cfg_.prefix + "value.b")), 0);

    StepOut out;
    out.logits = logits;
    out.text_attn = text_attn;
    out.value = value;
    out.next.grounded = grounded;
    out.next.cell = cell;
    out.next.prev_orientation = state.prev_orientation;
    return out;
}

Var with_view_orientations(Tape& tape, Var encoded_views) {
    const std::int64_t n = encoded_views.val().rows();
    if (n != kViewsPerPanorama)
        throw std::invalid_argument("with_view_orientations: expected 36 views");
    Tensor orient = Tensor::zeros({n, 4});
    for (int m = 0; m < kViewsPerPanorama; ++m) {
        auto [heading, elevation] = EnvGraph::view_direction(m);
        orient.at(m, 0) = std::cos(heading);
        orient.at(m, 1) = std::sin(heading);
        orient.at(m, 2) = std::cos(elevation);
        orient.at(m, 3) = std::sin(elevation);
    }
    return hstack(encoded_views, tape.constant(std::move(orient)));
}

void TeacherTracker::arrive(int node) {
    while (progress_ < gt_->size() && (*gt_)[progress_] == node) ++progress_;
}

int TeacherTracker::action(int current) const {
    const auto& gt = *gt_;
    if (progress_ == gt.size() && current == gt.back()) return 0;  // STOP
    const int target = gt[std::min(progress_, gt.size() - 1)];
    const auto& neighbors = env_->neighbors(current);
    int best_idx = -1;
    double best_dist = 0.0;
    for (std::size_t i = 0; i < neighbors.size(); ++i) {
        const double d = env_->geodesic(neighbors[i], target);
        if (best_idx < 0 || d < best_dist) {  // neighbors sorted by id: ties keep the lowest
            best_idx = static_cast<int>(i);
            best_dist = d;
        }
    }
    return best_idx + 1;
}

double shaped_reward(const EnvGraph& env, const std::vector<int>& gt, const std::vector<int>& visited_before,
                     int node_before, int node_after, bool is_stop, bool ndtw_clip) {
    const int goal = gt.back();
    if (is_stop) {
        return env.geodesic(node_after, goal) < kSuccessRadius ? 3.0 : -3.0;
    }
    const double d_before = env.geodesic(node_before, goal);
    const double d_after = env.geodesic(node_after, goal);
    double r_dist = 0.0;
    if (d_after < d_before) r_dist = 1.0;
    else if (d_after > d_before) r_dist = -1.0;

    std::vector<int> after_path = visited_before;
    after_path.push_back(node_after);
    double r_ndtw = ndtw(env, after_path, gt) - ndtw(env, visited_before, gt);
    if (ndtw_clip && r_ndtw < 0.0) r_ndtw = 0.0;
    return r_dist + r_ndtw;
}

Rollout Agent::rollout(ParamCtx& P, const EpisodeSpec& episode, RolloutMode mode, Rng* rng,
                       const std::vector<int>* forced_actions, bool compute_rewards) const {
    const EnvGraph& env = *episode.env;
    const std::vector<int>& gt = episode.gt->nodes;
    if (mode == RolloutMode::sample && !rng) throw std::invalid_argument("rollout: sample mode needs an rng");
    if (mode == RolloutMode::forced && !forced_actions)
        throw std::invalid_argument("rollout: forced mode needs actions");

    Tape& tape = P.tape();
    auto encoded_instr = lang_->encode(P, episode.instruction->tokens);

    const int horizon = 2 * static_cast<int>(gt.size()) + decoder_->config().horizon_slack;
    Rollout out;
    TeacherTracker teacher(env, gt);
    int current = gt.front();
    out.visited.push_back(current);
    teacher.arrive(current);

    // panorama encodings cached per node within the episode
    std::map<int, Var> encoded_cache;
    auto encoded_views_at = [&](int node) {
        auto it = encoded_cache.find(node);
        if (it != encoded_cache.end()) return it->second;
        Panorama pano = render_panorama(env, node);
        Var enc = vis_->encode_views(P, pano.features);
        Var with_orient = with_view_orientations(tape, enc);  // [36, d+4]
        encoded_cache.emplace(node, with_orient);
        return with_orient;
    };

    NavDecoder::State state = decoder_->initial_state(tape);
    for (int t = 0; t < horizon; ++t) {
        Var views = encoded_views_at(current);
        const auto& neighbors = env.neighbors(current);

        // candidate 0 is STOP (zero feature); then sorted neighbors
        std::vector<int> view_bins;
        Tensor orient = Tensor::zeros({static_cast<std::int64_t>(neighbors.size()), 4});
        for (std::size_t i = 0; i < neighbors.size(); ++i) {
            auto [heading, elevation] = env.direction(current, neighbors[i]);
            view_bins.push_back(EnvGraph::view_index(heading, elevation));
            orient.at(static_cast<std::int64_t>(i), 0) = std::cos(heading);
            orient.at(static_cast<std::int64_t>(i), 1) = std::sin(heading);
            orient.at(static_cast<std::int64_t>(i), 2) = std::cos(elevation);
            orient.at(static_cast<std::int64_t>(i), 3) = std::sin(elevation);
        }
        Var stop_row = tape.constant(Tensor::zeros({1, decoder_->feat_dim()}));
        Var cand = stop_row;
        if (!neighbors.empty()) {
            // the view encoding from the bin facing the neighbor, with the
            // exact orientation toward the neighbor in place of the bin center
            Var neighbor_views = gather_rows(views, view_bins);  // [K, d+4]
            const std::int64_t d = decoder_->feat_dim() - 4;
            std::vector<Var> rows;
            rows.reserve(neighbors.size());
            for (std::size_t i = 0; i < neighbors.size(); ++i)
                rows.push_back(slice(row(neighbor_views, static_cast<std::int64_t>(i)), 0, d));
            Var neighbor_core = stack_rows(rows);
            cand = vstack({stop_row, hstack(neighbor_core, tape.constant(std::move(orient)))});
        }

        auto step_out = decoder_->step(P, views, cand, encoded_instr.token_states, state);
        Var logp = log_softmax(step_out.logits);
        Var probs = softmax(step_out.logits);

        const int teacher_idx = teacher.action(current);
        int chosen = teacher_idx;
        switch (mode) {
            case RolloutMode::teacher:
                chosen = teacher_idx;
                break;
            case RolloutMode::greedy: {
                const auto& pv = probs.val().data;
                chosen = static_cast<int>(std::max_element(pv.begin(), pv.end()) - pv.begin());
                break;
            }
            case RolloutMode::sample: {
                const auto& pv = probs.val().data;
                double u = rng->uniform();
                chosen = static_cast<int>(pv.size()) - 1;
                double acc = 0.0;
                for (std::size_t i = 0; i < pv.size(); ++i) {
                    acc += pv[i];
                    if (u < acc) {
                        chosen = static_cast<int>(i);
                        break;
                    }
                }
                break;
            }
            case RolloutMode::forced:
                chosen = (*forced_actions)[static_cast<std::size_t>(t)];
                break;
        }

        StepRecord rec;
        rec.node_before = current;
        rec.action_index = chosen;
        rec.action_probs = probs.val().data;
        rec.text_attention = step_out.text_attn.val().data;

        out.logp_action.push_back(pick(logp, chosen));
        if (mode == RolloutMode::teacher) out.logp_teacher.push_back(pick(logp, teacher_idx));
        out.value.push_back(step_out.value);
        out.entropy.push_back(neg(dot(probs, logp)));

        const bool is_stop = chosen == 0;
        const int next_node = is_stop ? current : neighbors[static_cast<std::size_t>(chosen - 1)];
        rec.node_after = next_node;
        if (compute_rewards) {
            rec.reward = shaped_reward(env, gt, out.visited, current, next_node, is_stop,
                                       decoder_->config().ndtw_reward_clip);
            out.rewards.push_back(rec.reward);
        }
        out.steps.push_back(std::move(rec));

        if (is_stop) {
            out.stopped = true;
            break;
        }
        const auto [move_heading, move_elevation] = env.direction(current, next_node);
        current = next_node;
        out.visited.push_back(current);
        teacher.arrive(current);
        state = step_out.next;
        state.prev_orientation = orientation_feature(move_heading, move_elevation);
    }
    return out;
}

Var il_loss(const Rollout& teacher_rollout) {
    if (teacher_rollout.logp_teacher.empty()) throw std::invalid_argument("il_loss: not a teacher rollout");
    std::optional<Var> total;
    for (const Var& lp : teacher_rollout.logp_teacher) {
        Var term = neg(lp);
        total = total ? add(*total, term) : term;
    }
    return *total;
}

std::vector<double> discounted_returns(const std::vector<double>& rewards, double discount) {
    std::vector<double> returns(rewards.size());
    double acc = 0.0;
    for (std::size_t i = rewards.size(); i-- > 0;) {
        acc = rewards[i] + discount * acc;
        returns[i] = acc;
    }
    return returns;
}

Var a2c_loss(Tape& tape, const std::vector<Rollout>& rollouts, double discount, double entropy_coef,
             A2cStats* stats, const std::vector<std::vector<double>>* fixed_advantages) {
    if (rollouts.empty()) throw std::invalid_argument("a2c_loss: empty batch");
    std::optional<Var> total;
    double sum_return = 0.0, sum_reward = 0.0, sum_len = 0.0;
    std::int64_t n_steps = 0;
    for (std::size_t ri = 0; ri < rollouts.size(); ++ri) {
        const Rollout& r = rollouts[ri];
        if (r.rewards.size() != r.logp_action.size())
            throw std::invalid_argument("a2c_loss: rollout lacks rewards");
        const auto returns = discounted_returns(r.rewards, discount);
        for (std::size_t t = 0; t < returns.size(); ++t) {
            sum_return += returns[t];
            sum_reward += r.rewards[t];
            ++n_steps;
            const double advantage = fixed_advantages
                                         ? (*fixed_advantages)[ri][t]
                                         : returns[t] - r.value[t].val().data[0];  // constant weight
            Var policy_term = scale(r.logp_action[t], -advantage);
            Var diff = sub(tape.constant(Tensor::scalar(returns[t])), r.value[t]);
            Var value_term = scale(mul(diff, diff), 0.5);
            Var term = add(policy_term, add(scale(value_term, 0.5), scale(r.entropy[t], -entropy_coef)));
            total = total ? add(*total, term) : term;
        }
        sum_len += static_cast<double>(r.steps.size());
    }
    if (!total) throw std::invalid_argument("a2c_loss: batch has no steps");
    if (stats) {
        stats->mean_return = n_steps > 0 ? sum_return / static_cast<double>(n_steps) : 0.0;
        stats->total_reward = sum_reward;
        stats->mean_episode_len = sum_len / static_cast<double>(rollouts.size());
    }
    return scale(*total, 1.0 / static_cast<double>(rollouts.size()));
}

}  // namespace navrep
