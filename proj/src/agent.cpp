#include "hsac/agent.hpp"

#include "hsac/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

namespace hsac {

const char* variant_name(AgentVariant v) {
    switch (v) {
    case AgentVariant::HDQN: return "hdqn";
    case AgentVariant::EntropySAC: return "entropy_sac";
    case AgentVariant::MISAC: return "mi_sac";
    case AgentVariant::AdversarialMISAC: return "adversarial_mi_sac";
    }
    return "unknown";
}

AgentVariant variant_from_name(const std::string& name) {
    if (name == "hdqn") return AgentVariant::HDQN;
    if (name == "entropy_sac") return AgentVariant::EntropySAC;
    if (name == "mi_sac") return AgentVariant::MISAC;
    if (name == "adversarial_mi_sac") return AgentVariant::AdversarialMISAC;
    throw std::invalid_argument("unknown agent variant: " + name);
}

bool is_sac(AgentVariant v) { return v != AgentVariant::HDQN; }

void Hyperparams::validate() const {
    if (!(alpha >= 0.0)) throw std::invalid_argument("Hyperparams: alpha must be >= 0");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("Hyperparams: gamma must be in (0,1]");
    if (!(tau_gumbel > 0.0)) throw std::invalid_argument("Hyperparams: tau_gumbel must be positive");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("Hyperparams: learning rate must be positive");
    if (batch_size < 1) throw std::invalid_argument("Hyperparams: batch_size must be >= 1");
    if (batch_size > buffer_capacity)
        throw std::invalid_argument("Hyperparams: batch_size may not exceed buffer_capacity");
    if (updates_per_env_step < 1) throw std::invalid_argument("Hyperparams: updates_per_env_step >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("Hyperparams: dropout in [0,1)");
    if (hidden.empty()) throw std::invalid_argument("Hyperparams: at least one hidden layer");
}

bool TrainStepStats::finite() const {
    const auto ok = [](const UpdateResult& r) { return !r.applied || std::isfinite(r.loss); };
    return ok(critic) && ok(policy);
}

// Loss builders ---------------------------------------------------------

Var build_q_loss(Tape& tape, const MlpParams& params, const MlpVars& vars, const QLossSpec& spec) {
    Var out = mlp_forward(tape, params, vars, spec.inputs, spec.mask ? &*spec.mask : nullptr);
    Var q = tape.gather_cols(out, spec.columns);
    Var diff = tape.sub(q, tape.constant(spec.targets));
    return tape.mul_scalar(tape.mean(tape.mul(diff, diff)), 0.5);
}

Var build_controller_policy_loss(Tape& tape, const MlpParams& params, const MlpVars& vars,
                                 const PolicyLossSpec& spec, Var* mi_out) {
    Var logits = mlp_forward_logits(tape, params, vars, spec.inputs);
    Var probs = tape.softmax_rows(logits);
    Var expected_q = tape.sum(tape.mul(probs, tape.constant(spec.q_weighted)));

    if (spec.variant == AgentVariant::EntropySAC) {
        // minimize -alpha * H(pi_ag(.|s,g)) - E_a[Q1]
        Var h_sum = tape.neg(tape.sum(tape.mul(tape.xlogx(probs), tape.constant(spec.h_weight))));
        return tape.sub(tape.mul_scalar(h_sum, -spec.alpha), expected_q);
    }

    // minimize alpha * I(a;g|s) - E_a[Q1]; the MI term is the one the
    // adversarial meta objective negates
    Var mi_acc = tape.constant(Tensor::scalar(0.0));
    const int d = static_cast<int>(spec.state_weight.size());
    for (int k = 0; k < d; ++k) {
        Var w = tape.constant(spec.goal_probs[static_cast<size_t>(k)]);
        Var rows_k = tape.slice_rows(probs, k * spec.ng, spec.ng);
        Var mi = mi_node(tape, w, rows_k);
        mi_acc = tape.add(mi_acc, tape.mul_scalar(mi, spec.state_weight[static_cast<size_t>(k)]));
    }
    if (mi_out) *mi_out = mi_acc;
    return tape.sub(tape.mul_scalar(mi_acc, spec.alpha), expected_q);
}

Var build_meta_policy_loss(Tape& tape, const MlpParams& params, const MlpVars& vars,
                           const PolicyLossSpec& spec, Var* mi_out) {
    Var logits = mlp_forward_logits(tape, params, vars, spec.inputs);
    Var goal_probs = tape.softmax_rows(logits);
    const bool adversarial = spec.variant == AgentVariant::AdversarialMISAC;

    Var loss = tape.constant(Tensor::scalar(0.0));
    Var mi_acc = tape.constant(Tensor::scalar(0.0));
    const int d = static_cast<int>(spec.state_weight.size());
    for (int k = 0; k < d; ++k) {
        const double wk = spec.state_weight[static_cast<size_t>(k)];
        Var w = tape.slice_rows(goal_probs, k, 1);
        Var eq2 = tape.sum(tape.mul(w, tape.constant(spec.q2_rows[static_cast<size_t>(k)])));
        Var bonus;
        if (adversarial) {
            // same MI expression the controller minimizes, with opposite sign
            bonus = mi_node(tape, w, tape.constant(spec.tables[static_cast<size_t>(k)]));
            mi_acc = tape.add(mi_acc, tape.mul_scalar(bonus, wk));
        } else {
            bonus = entropy_node(tape, w);
        }
        // minimize -alpha * bonus - E_g[Q2]
        Var term = tape.sub(tape.mul_scalar(bonus, -spec.alpha), eq2);
        loss = tape.add(loss, tape.mul_scalar(term, wk));
    }
    if (mi_out) *mi_out = mi_acc;
    return loss;
}

// Agent ------------------------------------------------------------------

namespace {
constexpr uint64_t kInitStream = 0x9e3779b97f4a7c15ULL;
constexpr uint64_t kActStream = 0xc2b2ae3d27d4eb4fULL;
constexpr uint64_t kSampleStream = 0x165667b19e3779f9ULL;
constexpr uint64_t kDropoutStream = 0x27d4eb2f165667c5ULL;

int argmax_row(const Tensor& row) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(row.size()); ++i)
        if (row.v[static_cast<size_t>(i)] > row.v[static_cast<size_t>(best)]) best = i;
    return best;
}

// rows of a batch input matrix written in place
void set_row(Tensor& m, int row, const Tensor& values) {
    std::copy(values.v.begin(), values.v.end(), m.v.begin() + static_cast<size_t>(row) * m.cols());
}

double max_abs(const std::vector<const Tensor*>& grads) {
    double m = 0.0;
    for (const Tensor* g : grads)
        for (double v : g->v) m = std::max(m, std::abs(v));
    return m;
}
} // namespace

struct Agent::StateEval {
    StateKey key;
    CategoricalDist goal;               // SAC only
    std::vector<CategoricalDist> rows;  // SAC only
    Tensor q1_rows;                     // [ng x 2], when requested
    Tensor q2_row;                      // [ng], when requested
};

Agent::Agent(AgentVariant variant, const EnvConfig& env, const Hyperparams& hp, uint64_t seed,
             bool observe_visited)
    : variant_(variant),
      env_(env),
      hp_(hp),
      observe_visited_(observe_visited),
      ng_((env.validate(), hp.validate(), env.ng)),
      state_dim_(env.ng + (observe_visited ? 1 : 0)),
      ctrl_buffer_(hp.buffer_capacity),
      meta_buffer_(hp.buffer_capacity),
      rng_act_(mix64(seed ^ kActStream)),
      rng_sample_(mix64(seed ^ kSampleStream)),
      rng_dropout_(mix64(seed ^ kDropoutStream)) {
    Rng init(mix64(seed ^ kInitStream));
    q1_ = make_mlp(state_dim_ + ng_, hp_.hidden, 2, Head::Linear, init);
    if (is_sac(variant_)) pi_ = make_mlp(state_dim_ + ng_, hp_.hidden, 2, Head::Softmax, init);
    q2_ = make_mlp(state_dim_, hp_.hidden, ng_, Head::Linear, init);
    if (is_sac(variant_)) mu_ = make_mlp(state_dim_, hp_.hidden, ng_, Head::Softmax, init);

    const AdamConfig cfg{hp_.learning_rate, hp_.adam.beta1, hp_.adam.beta2, hp_.adam.epsilon};
    adam_q1_.emplace(q1_, cfg);
    adam_q2_.emplace(q2_, cfg);
    if (is_sac(variant_)) {
        adam_pi_.emplace(*pi_, cfg);
        adam_mu_.emplace(*mu_, cfg);
    }
}

Agent::StateKey Agent::make_key(int position, bool visited) const {
    // the visited bit only distinguishes inputs when the agent observes it
    return StateKey{position, observe_visited_ && visited};
}

Tensor Agent::encode_state(int position, bool visited) const {
    if (position < 1 || position > ng_) throw std::invalid_argument("encode_state: position out of range");
    Tensor t = Tensor::zeros({state_dim_});
    t.v[static_cast<size_t>(position - 1)] = 1.0;
    if (observe_visited_) t.v[static_cast<size_t>(ng_)] = visited ? 1.0 : 0.0;
    return t;
}

Tensor Agent::encode_state_goal(int position, bool visited, int goal) const {
    if (goal < 1 || goal > ng_) throw std::invalid_argument("encode_state_goal: goal out of range");
    Tensor s = encode_state(position, visited);
    Tensor t = Tensor::zeros({state_dim_ + ng_});
    std::copy(s.v.begin(), s.v.end(), t.v.begin());
    t.v[static_cast<size_t>(state_dim_ + goal - 1)] = 1.0;
    return t;
}

std::vector<Agent::StateEval> Agent::eval_states(const std::vector<StateKey>& keys, bool need_q1,
                                                 bool need_q2) const {
    const int d = static_cast<int>(keys.size());
    std::vector<StateEval> out(static_cast<size_t>(d));
    if (d == 0) return out;

    Tensor meta_in = Tensor::zeros({d, state_dim_});
    for (int i = 0; i < d; ++i) {
        out[static_cast<size_t>(i)].key = keys[static_cast<size_t>(i)];
        set_row(meta_in, i, encode_state(keys[static_cast<size_t>(i)].position,
                                         keys[static_cast<size_t>(i)].visited));
    }

    if (is_sac(variant_)) {
        Tensor goal_probs = mlp_eval(*mu_, meta_in);  // [d x ng]
        for (int i = 0; i < d; ++i) {
            auto& e = out[static_cast<size_t>(i)];
            e.goal.p.assign(goal_probs.v.begin() + static_cast<size_t>(i) * ng_,
                            goal_probs.v.begin() + static_cast<size_t>(i + 1) * ng_);
        }
    }

    if (need_q2) {
        Tensor q2_vals = mlp_eval(q2_, meta_in);  // [d x ng]
        for (int i = 0; i < d; ++i) {
            auto& e = out[static_cast<size_t>(i)];
            e.q2_row = Tensor::zeros({ng_});
            std::copy(q2_vals.v.begin() + static_cast<size_t>(i) * ng_,
                      q2_vals.v.begin() + static_cast<size_t>(i + 1) * ng_, e.q2_row.v.begin());
        }
    }

    const bool need_rows = is_sac(variant_);
    if (need_rows || need_q1) {
        Tensor ctrl_in = Tensor::zeros({d * ng_, state_dim_ + ng_});
        for (int i = 0; i < d; ++i)
            for (int g = 1; g <= ng_; ++g)
                set_row(ctrl_in, i * ng_ + g - 1,
                        encode_state_goal(keys[static_cast<size_t>(i)].position,
                                          keys[static_cast<size_t>(i)].visited, g));
        if (need_rows) {
            Tensor probs = mlp_eval(*pi_, ctrl_in);  // [d*ng x 2]
            for (int i = 0; i < d; ++i) {
                auto& e = out[static_cast<size_t>(i)];
                e.rows.resize(static_cast<size_t>(ng_));
                for (int g = 0; g < ng_; ++g) {
                    const size_t base = (static_cast<size_t>(i) * ng_ + g) * 2;
                    e.rows[static_cast<size_t>(g)].p = {probs.v[base], probs.v[base + 1]};
                }
            }
        }
        if (need_q1) {
            Tensor qv = mlp_eval(q1_, ctrl_in);  // [d*ng x 2]
            for (int i = 0; i < d; ++i) {
                auto& e = out[static_cast<size_t>(i)];
                e.q1_rows = Tensor::zeros({ng_, 2});
                std::copy(qv.v.begin() + static_cast<size_t>(i) * ng_ * 2,
                          qv.v.begin() + static_cast<size_t>(i + 1) * ng_ * 2, e.q1_rows.v.begin());
            }
        }
    }
    return out;
}

double Agent::v1_from_eval(const StateEval& e) const {
    // E_{g~pi_g} E_{a~pi_ag} Q1(g,s,a) plus the variant's exploration bonus
    double expected_q = 0.0;
    double expected_row_entropy = 0.0;
    for (int g = 0; g < ng_; ++g) {
        const double wg = e.goal.p[static_cast<size_t>(g)];
        const auto& row = e.rows[static_cast<size_t>(g)].p;
        expected_q += wg * (row[0] * e.q1_rows.at(g, 0) + row[1] * e.q1_rows.at(g, 1));
        expected_row_entropy += wg * entropy(e.rows[static_cast<size_t>(g)]);
    }
    switch (variant_) {
    case AgentVariant::EntropySAC:
        return expected_q + hp_.alpha * expected_row_entropy;
    case AgentVariant::MISAC:
    case AgentVariant::AdversarialMISAC: {
        PolicyTable t{e.goal, e.rows};
        return expected_q - hp_.alpha * mutual_information(t);
    }
    case AgentVariant::HDQN:
        break;
    }
    throw std::logic_error("v1_value: not defined for the HDQN baseline");
}

double Agent::v2_from_eval(const StateEval& e) const {
    if (variant_ == AgentVariant::HDQN) {
        double best = e.q2_row.v[0];
        for (int g = 1; g < ng_; ++g) best = std::max(best, e.q2_row.v[static_cast<size_t>(g)]);
        return best;
    }
    double expected_q2 = 0.0;
    for (int g = 0; g < ng_; ++g)
        expected_q2 += e.goal.p[static_cast<size_t>(g)] * e.q2_row.v[static_cast<size_t>(g)];
    if (variant_ == AgentVariant::AdversarialMISAC) {
        PolicyTable t{e.goal, e.rows};
        return expected_q2 + hp_.alpha * mutual_information(t);
    }
    return expected_q2 + hp_.alpha * entropy(e.goal);
}

PolicyTable Agent::policy_table(int position, bool visited) const {
    if (!is_sac(variant_)) throw std::logic_error("policy_table: HDQN has no stochastic policies");
    auto evals = eval_states({StateKey{position, visited}}, false, false);
    return PolicyTable{evals[0].goal, evals[0].rows};
}

CategoricalDist Agent::goal_distribution(int position, bool visited) const {
    if (!is_sac(variant_)) throw std::logic_error("goal_distribution: HDQN has no stochastic policies");
    auto evals = eval_states({StateKey{position, visited}}, false, false);
    return evals[0].goal;
}

CategoricalDist Agent::action_distribution(int position, int goal, bool visited) const {
    if (!is_sac(variant_)) throw std::logic_error("action_distribution: HDQN has no stochastic policies");
    Tensor probs = mlp_eval(*pi_, encode_state_goal(position, visited, goal));
    return CategoricalDist{{probs.v[0], probs.v[1]}};
}

double Agent::v1_value(int position, bool visited) const {
    auto evals = eval_states({StateKey{position, visited}}, true, false);
    return v1_from_eval(evals[0]);
}

double Agent::q1_target(const ControllerTransition& t) const {
    if (variant_ == AgentVariant::HDQN) {
        if (t.done || t.reached_goal) return t.internal_reward;
        Tensor q = mlp_eval(q1_, encode_state_goal(t.next_state, t.next_visited, t.goal));
        return t.internal_reward + hp_.gamma * std::max(q.v[0], q.v[1]);
    }
    if (t.done) return t.internal_reward;
    return t.internal_reward + hp_.gamma * v1_value(t.next_state, t.next_visited);
}

double Agent::v2_value(int position, bool visited) const {
    auto evals = eval_states({StateKey{position, visited}}, false, true);
    return v2_from_eval(evals[0]);
}

double Agent::q2_target(const MetaTransition& t) const {
    if (t.done) return t.external_return;
    return t.external_return + hp_.gamma * v2_value(t.next_state, t.next_visited);
}

int Agent::pick_goal(const EnvState& s) {
    if (variant_ == AgentVariant::HDQN) {
        const double eps = hp_.meta_eps.at(env_steps_);
        if (rng_act_.bernoulli(eps)) return rng_act_.uniform_int(ng_) + 1;
        Tensor q = mlp_eval(q2_, encode_state(s.position, s.visited_goal));
        return argmax_row(q) + 1;
    }
    Tensor logits = mlp_eval_logits(*mu_, encode_state(s.position, s.visited_goal));
    return gumbel_softmax_sample(logits.v, hp_.tau_gumbel, rng_act_).hard_index + 1;
}

EnvAction Agent::act(const EnvState& s, int goal) {
    if (variant_ == AgentVariant::HDQN) {
        const double eps = hp_.controller_eps.at(env_steps_);
        if (rng_act_.bernoulli(eps)) return static_cast<EnvAction>(rng_act_.uniform_int(2));
        Tensor q = mlp_eval(q1_, encode_state_goal(s.position, s.visited_goal, goal));
        return static_cast<EnvAction>(argmax_row(q));
    }
    Tensor logits = mlp_eval_logits(*pi_, encode_state_goal(s.position, s.visited_goal, goal));
    return static_cast<EnvAction>(gumbel_softmax_sample(logits.v, hp_.tau_gumbel, rng_act_).hard_index);
}

void Agent::add_controller_transition(const ControllerTransition& t) {
    ctrl_buffer_.push(t);
    ++env_steps_;
}

void Agent::add_meta_transition(const MetaTransition& t) { meta_buffer_.push(t); }

// Spec construction ------------------------------------------------------

QLossSpec Agent::q1_loss_spec(const std::vector<ControllerTransition>& batch) const {
    if (batch.empty()) throw std::invalid_argument("q1_loss_spec: empty batch");
    const int b = static_cast<int>(batch.size());
    QLossSpec spec;
    spec.targets = Tensor::zeros({b});

    if (variant_ == AgentVariant::HDQN) {
        Tensor next_in = Tensor::zeros({b, state_dim_ + ng_});
        for (int i = 0; i < b; ++i)
            set_row(next_in, i,
                    encode_state_goal(batch[static_cast<size_t>(i)].next_state,
                                      batch[static_cast<size_t>(i)].next_visited,
                                      batch[static_cast<size_t>(i)].goal));
        Tensor next_q = mlp_eval(q1_, next_in);
        for (int i = 0; i < b; ++i) {
            const auto& t = batch[static_cast<size_t>(i)];
            const bool cut = t.done || t.reached_goal;
            spec.targets.v[static_cast<size_t>(i)] =
                t.internal_reward +
                (cut ? 0.0 : hp_.gamma * std::max(next_q.at(i, 0), next_q.at(i, 1)));
        }
    } else {
        std::vector<StateKey> keys;
        std::vector<int> key_of(static_cast<size_t>(b), -1);
        for (int i = 0; i < b; ++i) {
            const auto& t = batch[static_cast<size_t>(i)];
            if (t.done) continue;
            const StateKey k{t.next_state, t.next_visited};
            auto it = std::find(keys.begin(), keys.end(), k);
            if (it == keys.end()) {
                keys.push_back(k);
                key_of[static_cast<size_t>(i)] = static_cast<int>(keys.size()) - 1;
            } else {
                key_of[static_cast<size_t>(i)] = static_cast<int>(it - keys.begin());
            }
        }
        const auto evals = eval_states(keys, true, false);
        std::vector<double> v1(keys.size());
        for (size_t k = 0; k < keys.size(); ++k) v1[k] = v1_from_eval(evals[k]);
        for (int i = 0; i < b; ++i) {
            const auto& t = batch[static_cast<size_t>(i)];
            spec.targets.v[static_cast<size_t>(i)] =
                t.internal_reward +
                (t.done ? 0.0
                        : hp_.gamma * v1[static_cast<size_t>(key_of[static_cast<size_t>(i)])]);
        }
    }

    spec.inputs = Tensor::zeros({b, state_dim_ + ng_});
    spec.columns.resize(static_cast<size_t>(b));
    for (int i = 0; i < b; ++i) {
        const auto& t = batch[static_cast<size_t>(i)];
        set_row(spec.inputs, i, encode_state_goal(t.state, t.state_visited, t.goal));
        spec.columns[static_cast<size_t>(i)] = t.action;
    }
    return spec;
}

QLossSpec Agent::q2_loss_spec(const std::vector<MetaTransition>& batch) const {
    if (batch.empty()) throw std::invalid_argument("q2_loss_spec: empty batch");
    const int b = static_cast<int>(batch.size());
    QLossSpec spec;
    spec.targets = Tensor::zeros({b});

    std::vector<StateKey> keys;
    std::vector<int> key_of(static_cast<size_t>(b), -1);
    for (int i = 0; i < b; ++i) {
        const auto& t = batch[static_cast<size_t>(i)];
        if (t.done) continue;
        const StateKey k{t.next_state, t.next_visited};
        auto it = std::find(keys.begin(), keys.end(), k);
        if (it == keys.end()) {
            keys.push_back(k);
            key_of[static_cast<size_t>(i)] = static_cast<int>(keys.size()) - 1;
        } else {
            key_of[static_cast<size_t>(i)] = static_cast<int>(it - keys.begin());
        }
    }
    const auto evals = eval_states(keys, false, true);
    for (int i = 0; i < b; ++i) {
        const auto& t = batch[static_cast<size_t>(i)];
        const double v2 =
            t.done ? 0.0 : v2_from_eval(evals[static_cast<size_t>(key_of[static_cast<size_t>(i)])]);
        spec.targets.v[static_cast<size_t>(i)] = t.external_return + (t.done ? 0.0 : hp_.gamma * v2);
    }

    spec.inputs = Tensor::zeros({b, state_dim_});
    spec.columns.resize(static_cast<size_t>(b));
    for (int i = 0; i < b; ++i) {
        const auto& t = batch[static_cast<size_t>(i)];
        set_row(spec.inputs, i, encode_state(t.state, t.state_visited));
        spec.columns[static_cast<size_t>(i)] = t.goal - 1;
    }
    return spec;
}

PolicyLossSpec Agent::controller_policy_loss_spec(const std::vector<ControllerTransition>& batch) const {
    if (!is_sac(variant_))
        throw std::logic_error("controller_policy_loss_spec: HDQN has no policy objective");
    if (batch.empty()) throw std::invalid_argument("controller_policy_loss_spec: empty batch");
    const int b = static_cast<int>(batch.size());
    const double inv_b = 1.0 / static_cast<double>(b);

    PolicyLossSpec spec;
    spec.variant = variant_;
    spec.alpha = hp_.alpha;
    spec.ng = ng_;

    std::vector<StateKey> keys;
    std::vector<int> key_of(static_cast<size_t>(b));
    for (int i = 0; i < b; ++i) {
        const auto& t = batch[static_cast<size_t>(i)];
        const StateKey k{t.state, t.state_visited};
        auto it = std::find(keys.begin(), keys.end(), k);
        if (it == keys.end()) {
            keys.push_back(k);
            spec.state_weight.push_back(0.0);
            key_of[static_cast<size_t>(i)] = static_cast<int>(keys.size()) - 1;
        } else {
            key_of[static_cast<size_t>(i)] = static_cast<int>(it - keys.begin());
        }
        spec.state_weight[static_cast<size_t>(key_of[static_cast<size_t>(i)])] += inv_b;
    }
    const int d = static_cast<int>(keys.size());

    spec.inputs = Tensor::zeros({d * ng_, state_dim_ + ng_});
    for (int k = 0; k < d; ++k)
        for (int g = 1; g <= ng_; ++g)
            set_row(spec.inputs, k * ng_ + g - 1,
                    encode_state_goal(keys[static_cast<size_t>(k)].position,
                                      keys[static_cast<size_t>(k)].visited, g));
    const Tensor q1_vals = mlp_eval(q1_, spec.inputs);

    spec.q_weighted = Tensor::zeros({d * ng_, 2});
    spec.h_weight = Tensor::zeros({d * ng_, 2});
    for (int i = 0; i < b; ++i) {
        const auto& t = batch[static_cast<size_t>(i)];
        const int row = key_of[static_cast<size_t>(i)] * ng_ + t.goal - 1;
        spec.q_weighted.at(row, 0) += inv_b * q1_vals.at(row, 0);
        spec.q_weighted.at(row, 1) += inv_b * q1_vals.at(row, 1);
        spec.h_weight.at(row, 0) += inv_b;
        spec.h_weight.at(row, 1) += inv_b;
    }

    if (variant_ != AgentVariant::EntropySAC) {
        const auto evals = eval_states(keys, false, false);
        for (const auto& e : evals) spec.goal_probs.push_back(Tensor::vec(e.goal.p));
    }
    return spec;
}

PolicyLossSpec Agent::meta_policy_loss_spec(const std::vector<MetaTransition>& batch) const {
    if (!is_sac(variant_))
        throw std::logic_error("meta_policy_loss_spec: HDQN has no policy objective");
    if (batch.empty()) throw std::invalid_argument("meta_policy_loss_spec: empty batch");
    const int b = static_cast<int>(batch.size());
    const double inv_b = 1.0 / static_cast<double>(b);

    PolicyLossSpec spec;
    spec.variant = variant_;
    spec.alpha = hp_.alpha;
    spec.ng = ng_;

    std::vector<StateKey> keys;
    for (int i = 0; i < b; ++i) {
        const auto& t = batch[static_cast<size_t>(i)];
        const StateKey k{t.state, t.state_visited};
        auto it = std::find(keys.begin(), keys.end(), k);
        if (it == keys.end()) {
            keys.push_back(k);
            spec.state_weight.push_back(inv_b);
        } else {
            spec.state_weight[static_cast<size_t>(it - keys.begin())] += inv_b;
        }
    }
    const int d = static_cast<int>(keys.size());

    const auto evals = eval_states(keys, false, true);
    spec.inputs = Tensor::zeros({d, state_dim_});
    for (int k = 0; k < d; ++k) {
        set_row(spec.inputs, k, encode_state(keys[static_cast<size_t>(k)].position,
                                             keys[static_cast<size_t>(k)].visited));
        spec.q2_rows.push_back(evals[static_cast<size_t>(k)].q2_row);
        if (variant_ == AgentVariant::AdversarialMISAC) {
            Tensor rows = Tensor::zeros({ng_, 2});
            for (int g = 0; g < ng_; ++g) {
                rows.at(g, 0) = evals[static_cast<size_t>(k)].rows[static_cast<size_t>(g)].p[0];
                rows.at(g, 1) = evals[static_cast<size_t>(k)].rows[static_cast<size_t>(g)].p[1];
            }
            spec.tables.push_back(std::move(rows));
        }
    }
    return spec;
}

// Updates ------------------------------------------------------------------

UpdateResult Agent::update_q1(const std::vector<ControllerTransition>& batch,
                              const DropoutMask* frozen_mask) {
    UpdateResult res;
    if (batch.empty()) return res;
    QLossSpec spec = q1_loss_spec(batch);
    if (frozen_mask)
        spec.mask = *frozen_mask;
    else if (is_sac(variant_) && hp_.dropout > 0.0)
        spec.mask = make_dropout_mask(q1_, static_cast<int>(batch.size()), hp_.dropout, rng_dropout_);

    Tape tape;
    MlpVars vars = tape_params(tape, q1_);
    Var loss = build_q_loss(tape, q1_, vars, spec);
    tape.backward(loss);

    const auto grads = collect_grads(tape, vars);
    res.loss = tape.value(loss).v[0];
    res.grad_inf_norm = max_abs(grads);
    adam_q1_->step(q1_, grads);
    res.applied = true;
    return res;
}

UpdateResult Agent::update_controller_policy(const std::vector<ControllerTransition>& batch,
                                             bool apply_step) {
    UpdateResult res;
    if (!is_sac(variant_) || batch.empty()) return res;
    const PolicyLossSpec spec = controller_policy_loss_spec(batch);

    Tape tape;
    MlpVars vars = tape_params(tape, *pi_);
    Var mi_acc = -1;
    Var loss = build_controller_policy_loss(tape, *pi_, vars, spec, &mi_acc);
    if (mi_acc >= 0) res.mi_term = tape.value(mi_acc).v[0];
    tape.backward(loss);

    const auto grads = collect_grads(tape, vars);
    res.loss = tape.value(loss).v[0];
    res.grad_inf_norm = max_abs(grads);
    if (apply_step) adam_pi_->step(*pi_, grads);
    res.applied = true;
    return res;
}

UpdateResult Agent::update_q2(const std::vector<MetaTransition>& batch,
                              const DropoutMask* frozen_mask) {
    UpdateResult res;
    if (batch.empty()) return res;
    QLossSpec spec = q2_loss_spec(batch);
    if (frozen_mask)
        spec.mask = *frozen_mask;
    else if (is_sac(variant_) && hp_.dropout > 0.0)
        spec.mask = make_dropout_mask(q2_, static_cast<int>(batch.size()), hp_.dropout, rng_dropout_);

    Tape tape;
    MlpVars vars = tape_params(tape, q2_);
    Var loss = build_q_loss(tape, q2_, vars, spec);
    tape.backward(loss);

    const auto grads = collect_grads(tape, vars);
    res.loss = tape.value(loss).v[0];
    res.grad_inf_norm = max_abs(grads);
    adam_q2_->step(q2_, grads);
    res.applied = true;
    return res;
}

UpdateResult Agent::update_meta_policy(const std::vector<MetaTransition>& batch, bool apply_step) {
    UpdateResult res;
    if (!is_sac(variant_) || batch.empty()) return res;
    const PolicyLossSpec spec = meta_policy_loss_spec(batch);

    Tape tape;
    MlpVars vars = tape_params(tape, *mu_);
    Var mi_acc = -1;
    Var loss = build_meta_policy_loss(tape, *mu_, vars, spec, &mi_acc);
    if (variant_ == AgentVariant::AdversarialMISAC && mi_acc >= 0)
        res.mi_term = tape.value(mi_acc).v[0];
    tape.backward(loss);

    const auto grads = collect_grads(tape, vars);
    res.loss = tape.value(loss).v[0];
    res.grad_inf_norm = max_abs(grads);
    if (apply_step) adam_mu_->step(*mu_, grads);
    res.applied = true;
    return res;
}

TrainStepStats Agent::train_controller() {
    TrainStepStats stats;
    if (ctrl_buffer_.empty()) return stats;
    for (int u = 0; u < hp_.updates_per_env_step; ++u) {
        const auto batch = ctrl_buffer_.sample(hp_.batch_size, rng_sample_);
        stats.critic = update_q1(batch);
        stats.policy = update_controller_policy(batch);
    }
    return stats;
}

TrainStepStats Agent::train_meta() {
    TrainStepStats stats;
    if (meta_buffer_.empty()) return stats;
    const auto batch = meta_buffer_.sample(hp_.batch_size, rng_sample_);
    stats.critic = update_q2(batch);
    stats.policy = update_meta_policy(batch);
    return stats;
}

int64_t Agent::adam_skipped() const {
    int64_t n = adam_q1_->skipped() + adam_q2_->skipped();
    if (adam_pi_) n += adam_pi_->skipped();
    if (adam_mu_) n += adam_mu_->skipped();
    return n;
}

// Checkpointing ------------------------------------------------------------

namespace {

void write_tensor(std::ostream& out, const Tensor& t) {
    out << t.shape.size();
    for (int d : t.shape) out << ' ' << d;
    out << '\n';
    char buf[40];
    for (size_t i = 0; i < t.v.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%a", t.v[i]);
        out << buf << (i + 1 == t.v.size() ? '\n' : ' ');
    }
}

Tensor read_tensor(std::istream& in) {
    size_t rank;
    if (!(in >> rank)) throw std::runtime_error("checkpoint: truncated tensor header");
    std::vector<int> shape(rank);
    for (auto& d : shape)
        if (!(in >> d)) throw std::runtime_error("checkpoint: truncated shape");
    Tensor t = Tensor::zeros(shape);
    for (auto& v : t.v) {
        std::string tok;
        if (!(in >> tok)) throw std::runtime_error("checkpoint: truncated values");
        v = std::strtod(tok.c_str(), nullptr);
    }
    return t;
}

void write_net(std::ostream& out, const char* name, const MlpParams& p) {
    out << "net " << name << ' ' << p.layers.size() << '\n';
    for (const auto& l : p.layers) {
        write_tensor(out, l.w);
        write_tensor(out, l.b);
    }
}

void read_net(std::istream& in, const char* name, MlpParams& p) {
    std::string word, got;
    size_t layers;
    if (!(in >> word >> got >> layers) || word != "net" || got != name || layers != p.layers.size())
        throw std::runtime_error("checkpoint: malformed or mismatched net section");
    for (auto& l : p.layers) {
        Tensor w = read_tensor(in);
        Tensor b = read_tensor(in);
        if (w.shape != l.w.shape || b.shape != l.b.shape)
            throw std::runtime_error("checkpoint: tensor shape mismatch");
        l.w = std::move(w);
        l.b = std::move(b);
    }
}

} // namespace

void Agent::save_checkpoint(std::ostream& out) const {
    out << "hsac-checkpoint 1 " << variant_name(variant_) << ' ' << ng_ << ' '
        << (observe_visited_ ? 1 : 0) << '\n';
    write_net(out, "q1", q1_);
    write_net(out, "q2", q2_);
    if (pi_) write_net(out, "policy", *pi_);
    if (mu_) write_net(out, "meta_policy", *mu_);
    out << "end\n";
}

void Agent::load_checkpoint(std::istream& in) {
    std::string magic, vname;
    int version = 0, ng = 0, vis = 0;
    if (!(in >> magic >> version >> vname >> ng >> vis) || magic != "hsac-checkpoint" || version != 1)
        throw std::runtime_error("checkpoint: bad header");
    if (vname != variant_name(variant_) || ng != ng_ || (vis != 0) != observe_visited_)
        throw std::runtime_error("checkpoint: saved for a different agent configuration");
    read_net(in, "q1", q1_);
    read_net(in, "q2", q2_);
    if (pi_) read_net(in, "policy", *pi_);
    if (mu_) read_net(in, "meta_policy", *mu_);
    std::string tail;
    if (!(in >> tail) || tail != "end") throw std::runtime_error("checkpoint: missing trailer");
}

} // namespace hsac
