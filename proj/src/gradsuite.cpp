#include "hsac/gradsuite.hpp"

#include <algorithm>

namespace hsac {

namespace {

std::vector<ControllerTransition> random_controller_batch(int n, int ng, Rng& rng) {
    std::vector<ControllerTransition> batch(static_cast<size_t>(n));
    for (auto& t : batch) {
        t.goal = rng.uniform_int(ng) + 1;
        t.state = rng.uniform_int(ng - 1) + 2;
        t.action = rng.uniform_int(2);
        t.next_state = rng.uniform_int(ng) + 1;
        t.done = rng.bernoulli(0.3) || t.next_state == 1;
        t.reached_goal = t.next_state == t.goal;
        t.internal_reward = t.reached_goal ? 1.0 : 0.0;
        t.state_visited = false;
        t.next_visited = t.next_state == ng;
        if (t.next_state == 1) t.done = true;
    }
    return batch;
}

std::vector<MetaTransition> random_meta_batch(int n, int ng, Rng& rng) {
    const double fs[3] = {0.0, 0.01, 1.0};
    std::vector<MetaTransition> batch(static_cast<size_t>(n));
    for (auto& t : batch) {
        t.state = rng.uniform_int(ng - 1) + 2;
        t.goal = rng.uniform_int(ng) + 1;
        t.external_return = fs[rng.uniform_int(3)];
        t.next_state = rng.uniform_int(ng) + 1;
        t.done = rng.bernoulli(0.4) || t.next_state == 1;
        t.state_visited = false;
        t.next_visited = t.next_state == ng;
    }
    return batch;
}

// Shifts every parameter, biases included, away from zero. With one-hot
// inputs and zero biases a dead first layer leaves later pre-activations at
// exactly 0, where ReLU has no derivative and central differences measure
// the kink instead of a gradient.
void jitter(MlpParams& p, Rng& rng, double scale) {
    for (auto& l : p.layers) {
        for (double& v : l.w.v) v += (2.0 * rng.uniform() - 1.0) * scale;
        for (double& v : l.b.v) v += (2.0 * rng.uniform() - 1.0) * scale;
    }
}

void record(GradSuiteResult& out, const std::string& name, double err) {
    for (auto& c : out.cases) {
        if (c.name == name) {
            c.max_rel_err = std::max(c.max_rel_err, err);
            out.worst = std::max(out.worst, err);
            return;
        }
    }
    out.cases.push_back({name, err});
    out.worst = std::max(out.worst, err);
}

} // namespace

GradSuiteResult run_gradcheck_suite(int instances, uint64_t seed, double eps) {
    GradSuiteResult out;
    out.instances = instances;
    const AgentVariant sac_variants[] = {AgentVariant::EntropySAC, AgentVariant::MISAC,
                                         AgentVariant::AdversarialMISAC};
    const double alphas[] = {0.0, 0.05, 0.2, 1.0};

    for (int inst = 0; inst < instances; ++inst) {
        Rng rng(mix64(seed + static_cast<uint64_t>(inst)));
        const int ng = 3 + rng.uniform_int(3);
        const EnvConfig env = EnvConfig::make(ng);
        Hyperparams hp;
        hp.hidden = {6, 6};
        hp.batch_size = 5;
        hp.alpha = alphas[inst % 4];
        hp.dropout = 0.2;
        const AgentVariant v = sac_variants[inst % 3];
        Agent agent(v, env, hp, rng.next_u64());
        jitter(agent.q1_params(), rng, 0.05);
        jitter(agent.q2_params(), rng, 0.05);
        jitter(agent.policy_params(), rng, 0.05);
        jitter(agent.meta_policy_params(), rng, 0.05);

        const auto ctrl_batch = random_controller_batch(hp.batch_size, ng, rng);
        const auto meta_batch = random_meta_batch(hp.batch_size, ng, rng);

        // controller critic residual, dropout frozen
        {
            QLossSpec spec = agent.q1_loss_spec(ctrl_batch);
            spec.mask = make_dropout_mask(agent.q1_params(), hp.batch_size, hp.dropout, rng);
            const double err = grad_check(
                agent.q1_params(),
                [&](Tape& t, const MlpParams& p, const MlpVars& vars) {
                    return build_q_loss(t, p, vars, spec);
                },
                eps);
            record(out, "controller_q_residual", err);
        }

        // controller policy objective
        {
            const PolicyLossSpec spec = agent.controller_policy_loss_spec(ctrl_batch);
            const double err = grad_check(
                agent.policy_params(),
                [&](Tape& t, const MlpParams& p, const MlpVars& vars) {
                    return build_controller_policy_loss(t, p, vars, spec);
                },
                eps);
            record(out,
                   v == AgentVariant::EntropySAC ? "controller_policy_entropy"
                                                 : "controller_policy_mi",
                   err);
        }

        // meta critic residual, dropout frozen
        {
            QLossSpec spec = agent.q2_loss_spec(meta_batch);
            spec.mask = make_dropout_mask(agent.q2_params(), hp.batch_size, hp.dropout, rng);
            const double err = grad_check(
                agent.q2_params(),
                [&](Tape& t, const MlpParams& p, const MlpVars& vars) {
                    return build_q_loss(t, p, vars, spec);
                },
                eps);
            record(out,
                   v == AgentVariant::AdversarialMISAC ? "meta_q_residual_adversarial"
                                                       : "meta_q_residual",
                   err);
        }

        // meta policy objective
        {
            const PolicyLossSpec spec = agent.meta_policy_loss_spec(meta_batch);
            const double err = grad_check(
                agent.meta_policy_params(),
                [&](Tape& t, const MlpParams& p, const MlpVars& vars) {
                    return build_meta_policy_loss(t, p, vars, spec);
                },
                eps);
            record(out,
                   v == AgentVariant::AdversarialMISAC ? "meta_policy_adversarial"
                                                       : "meta_policy_entropy",
                   err);
        }
    }
    return out;
}

} // namespace hsac
