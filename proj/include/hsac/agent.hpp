#pragma once

#include "hsac/adam.hpp"
#include "hsac/dist.hpp"
#include "hsac/env.hpp"
#include "hsac/mlp.hpp"
#include "hsac/replay.hpp"
#include "hsac/rng.hpp"

#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace hsac {

enum class AgentVariant { HDQN, EntropySAC, MISAC, AdversarialMISAC };

const char* variant_name(AgentVariant v);
AgentVariant variant_from_name(const std::string& name);
bool is_sac(AgentVariant v);

struct EpsSchedule {
    double start = 1.0;
    double end = 0.05;
    int decay_steps = 50000;

    double at(int64_t step) const {
        if (step >= decay_steps) return end;
        const double f = static_cast<double>(step) / static_cast<double>(decay_steps);
        return start + (end - start) * f;
    }
};

struct Hyperparams {
    double alpha = 0.2;          // entropy/MI temperature
    double gamma = 0.99;
    double tau_gumbel = 0.3;
    double learning_rate = 3e-4;
    int batch_size = 64;
    int buffer_capacity = 50000;
    int updates_per_env_step = 1;
    double dropout = 0.2;        // Q-networks of the SAC variants only
    EpsSchedule controller_eps{1.0, 0.05, 50000};
    EpsSchedule meta_eps{1.0, 0.1, 50000};
    std::vector<int> hidden{256, 256};
    AdamConfig adam;

    void validate() const;
};

struct UpdateResult {
    double loss = std::numeric_limits<double>::quiet_NaN();
    double mi_term = 0.0;        // batch-mean MI before the alpha scaling
    double grad_inf_norm = 0.0;
    bool applied = false;
};

// Precomputed constants of one soft Bellman residual: network inputs, the
// output column regressed per row, and fixed targets.
struct QLossSpec {
    Tensor inputs;
    std::vector<int> columns;
    Tensor targets;
    std::optional<DropoutMask> mask;
};

// Precomputed constants of a policy objective. Controller objectives use
// one input row per (state, goal) pair; meta objectives one row per state.
struct PolicyLossSpec {
    AgentVariant variant = AgentVariant::MISAC;
    double alpha = 0.0;
    int ng = 0;
    Tensor inputs;
    std::vector<Tensor> goal_probs;   // controller MI variants: pi_g per distinct state
    Tensor q_weighted;                // controller: batch-weighted Q1 values per row
    Tensor h_weight;                  // controller entropy variant: per-row batch weight
    std::vector<Tensor> q2_rows;      // meta: Q2 row per distinct state
    std::vector<Tensor> tables;       // meta adversarial: controller table per state
    std::vector<double> state_weight; // batch weight per distinct state
};

// Tape builders for the training objectives. The update functions and the
// finite-difference suite share these, so what gets gradient-checked is
// exactly what gets trained.
Var build_q_loss(Tape& tape, const MlpParams& params, const MlpVars& vars, const QLossSpec& spec);
Var build_controller_policy_loss(Tape& tape, const MlpParams& params, const MlpVars& vars,
                                 const PolicyLossSpec& spec, Var* mi_out = nullptr);
Var build_meta_policy_loss(Tape& tape, const MlpParams& params, const MlpVars& vars,
                           const PolicyLossSpec& spec, Var* mi_out = nullptr);

struct TrainStepStats {
    UpdateResult critic;
    UpdateResult policy;

    bool finite() const;
};

// One hierarchical agent: meta-controller picks goals, controller picks
// atomic actions, both trained off-policy from per-level replay buffers.
// The variant selects which update rules are wired; the train interface is
// identical for all four.
class Agent {
public:
    Agent(AgentVariant variant, const EnvConfig& env, const Hyperparams& hp, uint64_t seed,
          bool observe_visited = false);

    AgentVariant variant() const { return variant_; }
    const Hyperparams& hp() const { return hp_; }
    int num_goals() const { return ng_; }

    // behavior
    int pick_goal(const EnvState& s);
    EnvAction act(const EnvState& s, int goal);

    // experience; adding a controller transition advances the step counter
    // the epsilon schedules run on
    void add_controller_transition(const ControllerTransition& t);
    void add_meta_transition(const MetaTransition& t);

    // one train step per level; no-ops (applied=false) while the buffer is empty
    TrainStepStats train_controller();
    TrainStepStats train_meta();

    // policy table of the current networks at one state: goal distribution
    // plus one action distribution per goal
    PolicyTable policy_table(int position, bool visited = false) const;
    CategoricalDist goal_distribution(int position, bool visited = false) const;
    CategoricalDist action_distribution(int position, int goal, bool visited = false) const;

    // soft state values and TD targets (SAC variants; HDQN uses max-bootstrap
    // targets internally)
    double v1_value(int position, bool visited = false) const;
    double q1_target(const ControllerTransition& t) const;
    double v2_value(int position, bool visited = false) const;
    double q2_target(const MetaTransition& t) const;

    // individual updates; exposed so objectives can be exercised directly
    UpdateResult update_q1(const std::vector<ControllerTransition>& batch,
                           const DropoutMask* frozen_mask = nullptr);
    UpdateResult update_controller_policy(const std::vector<ControllerTransition>& batch,
                                          bool apply_step = true);
    UpdateResult update_q2(const std::vector<MetaTransition>& batch,
                           const DropoutMask* frozen_mask = nullptr);
    UpdateResult update_meta_policy(const std::vector<MetaTransition>& batch,
                                    bool apply_step = true);

    // loss constants as the updates would compute them (targets included,
    // dropout mask left empty)
    QLossSpec q1_loss_spec(const std::vector<ControllerTransition>& batch) const;
    QLossSpec q2_loss_spec(const std::vector<MetaTransition>& batch) const;
    PolicyLossSpec controller_policy_loss_spec(const std::vector<ControllerTransition>& batch) const;
    PolicyLossSpec meta_policy_loss_spec(const std::vector<MetaTransition>& batch) const;

    // networks and buffers (tests construct scenarios through these)
    MlpParams& q1_params() { return q1_; }
    MlpParams& policy_params() { return pi_.value(); }
    MlpParams& q2_params() { return q2_; }
    MlpParams& meta_policy_params() { return mu_.value(); }
    const MlpParams& q1_params() const { return q1_; }
    const MlpParams& q2_params() const { return q2_; }
    ReplayBuffer<ControllerTransition>& controller_buffer() { return ctrl_buffer_; }
    ReplayBuffer<MetaTransition>& meta_buffer() { return meta_buffer_; }

    int64_t env_steps() const { return env_steps_; }
    int64_t adam_skipped() const;
    Rng& action_rng() { return rng_act_; }

    // exact bitwise round-trip of all parameter tensors
    void save_checkpoint(std::ostream& out) const;
    void load_checkpoint(std::istream& in);

    int controller_input_dim() const { return state_dim_ + ng_; }
    int state_input_dim() const { return state_dim_; }
    Tensor encode_state(int position, bool visited) const;
    Tensor encode_state_goal(int position, bool visited, int goal) const;

private:
    struct StateKey {
        int position;
        bool visited;
        bool operator==(const StateKey&) const = default;
    };
    struct StateEval;  // cached per-state network evaluations

    AgentVariant variant_;
    EnvConfig env_;
    Hyperparams hp_;
    bool observe_visited_;
    int ng_;
    int state_dim_;

    MlpParams q1_;
    MlpParams q2_;
    std::optional<MlpParams> pi_;
    std::optional<MlpParams> mu_;
    std::optional<AdamState> adam_q1_;
    std::optional<AdamState> adam_q2_;
    std::optional<AdamState> adam_pi_;
    std::optional<AdamState> adam_mu_;

    ReplayBuffer<ControllerTransition> ctrl_buffer_;
    ReplayBuffer<MetaTransition> meta_buffer_;

    Rng rng_act_;
    Rng rng_sample_;
    Rng rng_dropout_;

    int64_t env_steps_ = 0;

    std::vector<StateEval> eval_states(const std::vector<StateKey>& keys, bool need_q1,
                                       bool need_q2) const;
    double v1_from_eval(const StateEval& e) const;
    double v2_from_eval(const StateEval& e) const;
};

} // namespace hsac
