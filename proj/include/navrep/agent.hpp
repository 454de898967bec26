#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "navrep/encoders.hpp"
#include "navrep/instrgen.hpp"
#include "navrep/params.hpp"
#include "navrep/worldgen.hpp"

namespace navrep {

struct NavConfig {
    int hidden = 128;
    int action_embed_dim = 128;
    double lambda_il = 0.4;    // L_nav = L_RL + lambda * L_IL
    double discount = 0.9;
    double entropy_coef = 0.01;
    int horizon_slack = 4;     // horizon = 2 * |ground truth| + slack
    bool ndtw_reward_clip = false;
    std::string prefix = "nav.";
};

// Orientation feature (cos/sin of heading and elevation) used for views,
// navigable candidates, and the previous action.
Tensor orientation_feature(double heading, double elevation);

// Attention-LSTM navigation decoder. Per step: attention over the 36 views
// conditioned on the instruction-aware context, an LSTM update, attention
// over instruction tokens, a merged grounded context, and candidate logits.
class NavDecoder {
public:
    NavDecoder(NavConfig cfg, int vis_dim, int lang_dim)
        : cfg_(cfg), vis_dim_(vis_dim), lang_dim_(lang_dim) {}

    void init_params(ParamStore& store, Rng& rng) const;

    int feat_dim() const { return vis_dim_ + 4; }
    const NavConfig& config() const { return cfg_; }

    struct State {
        Var grounded;             // instruction-aware context, feeds the next step
        Var cell;                 // LSTM cell state
        Tensor prev_orientation;  // orientation 4-vector of the executed action
    };
    State initial_state(Tape& tape) const;

    struct StepOut {
        Var logits;     // [K], candidate 0 is STOP
        Var text_attn;  // [m], sums to 1
        Var value;      // scalar baseline
        State next;     // prev_orientation left untouched; rollout fills it in
    };
    // view_feats [36, feat_dim], cand_feats [K, feat_dim], token_states [m, lang_dim].
    StepOut step(ParamCtx& P, Var view_feats, Var cand_feats, Var token_states, const State& state) const;

private:
    NavConfig cfg_;
    int vis_dim_;
    int lang_dim_;
};

// Appends each view's orientation feature to its encoding: [36, d] -> [36, d+4].
Var with_view_orientations(Tape& tape, Var encoded_views);

// Teacher policy over the ground-truth path: tracks how much of the path has
// been consumed (first unvisited occurrence), returns the next candidate
// index (0 = STOP, i+1 = i-th sorted neighbor).
class TeacherTracker {
public:
    TeacherTracker(const EnvGraph& env, const std::vector<int>& gt) : env_(&env), gt_(&gt) {}
    void arrive(int node);
    int action(int current) const;
    std::size_t progress() const { return progress_; }

private:
    const EnvGraph* env_;
    const std::vector<int>* gt_;
    std::size_t progress_ = 0;
};

enum class RolloutMode { teacher, sample, greedy, forced };

struct StepRecord {
    int node_before = -1;
    int node_after = -1;
    int action_index = -1;  // 0 = STOP
    std::vector<double> action_probs;
    std::vector<double> text_attention;
    double reward = 0.0;
};

struct Rollout {
    std::vector<int> visited;  // starts at the episode's start node
    bool stopped = false;
    std::vector<StepRecord> steps;
    std::vector<double> rewards;
    // Tape-linked quantities for loss construction.
    std::vector<Var> logp_action;   // executed action (sample/greedy/forced)
    std::vector<Var> logp_teacher;  // teacher action (teacher mode)
    std::vector<Var> value;
    std::vector<Var> entropy;
};

struct EpisodeSpec {
    const EnvGraph* env = nullptr;
    const Path* gt = nullptr;
    const Instruction* instruction = nullptr;
};

class Agent {
public:
    Agent(const LangEncoder& lang, const VisEncoder& vis, const NavDecoder& decoder)
        : lang_(&lang), vis_(&vis), decoder_(&decoder) {}

    // Runs one episode on the caller's tape. `rng` is required for
    // RolloutMode::sample; `forced_actions` for RolloutMode::forced.
    // Rewards are shaped per step when compute_rewards is set.
    Rollout rollout(ParamCtx& P, const EpisodeSpec& episode, RolloutMode mode, Rng* rng = nullptr,
                    const std::vector<int>* forced_actions = nullptr, bool compute_rewards = false) const;

    const NavDecoder& decoder() const { return *decoder_; }
    const LangEncoder& lang_encoder() const { return *lang_; }
    const VisEncoder& vis_encoder() const { return *vis_; }

private:
    const LangEncoder* lang_;
    const VisEncoder* vis_;
    const NavDecoder* decoder_;
};

// Distance + path-fidelity + stop reward for the transition recorded at
// `step_index` of the rollout.
double shaped_reward(const EnvGraph& env, const std::vector<int>& gt, const std::vector<int>& visited_before,
                     int node_before, int node_after, bool is_stop, bool ndtw_clip);

// Sum over steps of -log p(teacher action) for one teacher-forced rollout.
Var il_loss(const Rollout& teacher_rollout);

// Plain discounted sums, no bootstrapping past episode end.
std::vector<double> discounted_returns(const std::vector<double>& rewards, double discount);

struct A2cStats {
    double mean_return = 0.0;
    double total_reward = 0.0;
    double mean_episode_len = 0.0;
};

// Batch-mean of (policy + 0.5 * value - entropy_coef * entropy). Advantages
// are treated as constants; the value head learns against the returns.
// `fixed_advantages` (per rollout, per step) substitutes the advantage
// weights; finite-difference checks need this, since a detached advantage is
// constant in the gradient but would still vary under re-evaluation.
Var a2c_loss(Tape& tape, const std::vector<Rollout>& rollouts, double discount, double entropy_coef,
             A2cStats* stats = nullptr,
             const std::vector<std::vector<double>>* fixed_advantages = nullptr);

}  // namespace navrep
