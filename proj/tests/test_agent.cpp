#include "hsac/agent.hpp"
#include "hsac/env_oracle.hpp"
#include "hsac/gradsuite.hpp"

#include <doctest.h>

#include <cmath>
#include <map>
#include <sstream>

using namespace hsac;

namespace {

Hyperparams small_hp(double alpha = 0.2) {
    Hyperparams hp;
    hp.hidden = {8, 8};
    hp.batch_size = 6;
    hp.buffer_capacity = 256;
    hp.alpha = alpha;
    return hp;
}

void zero_net(MlpParams& p) {
    for (auto& l : p.layers) {
        for (double& v : l.w.v) v = 0.0;
        for (double& v : l.b.v) v = 0.0;
    }
}

// forces the network output to a constant vector regardless of input
void constant_output(MlpParams& p, const std::vector<double>& out) {
    zero_net(p);
    auto& last = p.layers.back();
    for (size_t i = 0; i < out.size(); ++i) last.b.v[i] = out[i];
}

ControllerTransition ct(int goal, int state, int action, int next_state, bool done) {
    ControllerTransition t;
    t.goal = goal;
    t.state = state;
    t.action = action;
    t.next_state = next_state;
    t.done = done;
    t.reached_goal = next_state == goal;
    t.internal_reward = t.reached_goal ? 1.0 : 0.0;
    t.next_visited = false;
    return t;
}

MetaTransition mt(int state, int goal, double f, int next_state, bool done) {
    MetaTransition t;
    t.state = state;
    t.goal = goal;
    t.external_return = f;
    t.next_state = next_state;
    t.done = done;
    return t;
}

} // namespace

TEST_CASE("replay buffer is a ring with uniform with-replacement sampling") {
    ReplayBuffer<int> buf(4);
    CHECK(buf.empty());
    Rng rng(1);
    CHECK_THROWS_AS(buf.sample(2, rng), std::logic_error);
    for (int i = 0; i < 7; ++i) buf.push(i);
    CHECK(buf.size() == 4);
    // oldest entries were overwritten
    std::map<int, int> counts;
    for (int i = 0; i < 4; ++i) counts[buf[i]]++;
    for (int v : {3, 4, 5, 6}) CHECK(counts[v] == 1);

    // with replacement: a batch larger than the buffer works, counts roughly uniform
    counts.clear();
    const auto batch = buf.sample(40000, rng);
    CHECK(batch.size() == 40000);
    for (int v : batch) counts[v]++;
    for (int v : {3, 4, 5, 6}) CHECK(std::abs(counts[v] / 40000.0 - 0.25) < 0.02);
}

TEST_CASE("v1: goal-independent rows make the MI term vanish") {
    const EnvConfig env = EnvConfig::make(4);
    Agent agent(AgentVariant::MISAC, env, small_hp(0.7), 11);
    zero_net(agent.policy_params());  // every action row uniform, hence identical

    const auto table = agent.policy_table(3);
    CHECK(mutual_information(table) == doctest::Approx(0.0).epsilon(1e-15));

    // V1 must equal E_g E_a Q1 exactly, assembled here from the public pieces
    double expected_q = 0.0;
    for (int g = 1; g <= 4; ++g) {
        const Tensor q = mlp_eval(agent.q1_params(), agent.encode_state_goal(3, false, g));
        const auto row = agent.action_distribution(3, g);
        expected_q += table.goal_dist.p[static_cast<size_t>(g - 1)] *
                      (row.p[0] * q.v[0] + row.p[1] * q.v[1]);
    }
    CHECK(agent.v1_value(3) == doctest::Approx(expected_q).epsilon(1e-12));
}

TEST_CASE("v1 with alpha=0 is the plain expected Q value") {
    const EnvConfig env = EnvConfig::make(4);
    Agent agent(AgentVariant::MISAC, env, small_hp(0.0), 13);
    double expected_q = 0.0;
    const auto table = agent.policy_table(2);
    for (int g = 1; g <= 4; ++g) {
        const Tensor q = mlp_eval(agent.q1_params(), agent.encode_state_goal(2, false, g));
        const auto& row = table.action_dists[static_cast<size_t>(g - 1)];
        expected_q += table.goal_dist.p[static_cast<size_t>(g - 1)] *
                      (row.p[0] * q.v[0] + row.p[1] * q.v[1]);
    }
    CHECK(agent.v1_value(2) == doctest::Approx(expected_q).epsilon(1e-12));
}

TEST_CASE("v1 on random nets matches a hand-assembled soft value") {
    for (AgentVariant v : {AgentVariant::EntropySAC, AgentVariant::MISAC}) {
        const EnvConfig env = EnvConfig::make(5);
        const double alpha = 0.31;
        Agent agent(v, env, small_hp(alpha), 17);
        const int pos = 4;
        const PolicyTable table = agent.policy_table(pos);
        double eq = 0.0, erh = 0.0;
        for (int g = 1; g <= 5; ++g) {
            const Tensor q = mlp_eval(agent.q1_params(), agent.encode_state_goal(pos, false, g));
            const auto& row = table.action_dists[static_cast<size_t>(g - 1)];
            const double wg = table.goal_dist.p[static_cast<size_t>(g - 1)];
            eq += wg * (row.p[0] * q.v[0] + row.p[1] * q.v[1]);
            erh += wg * entropy(row);
        }
        const double expected = v == AgentVariant::EntropySAC
                                    ? eq + alpha * erh
                                    : eq - alpha * mutual_information(table);
        CHECK(agent.v1_value(pos) == doctest::Approx(expected).epsilon(1e-10));
    }
}

TEST_CASE("q1 target arithmetic and terminal cut") {
    const EnvConfig env = EnvConfig::make(4);
    Agent agent(AgentVariant::MISAC, env, small_hp(), 19);
    // done transition bootstraps to zero
    CHECK(agent.q1_target(ct(3, 2, 0, 3, true)) == 1.0);
    CHECK(agent.q1_target(ct(4, 2, 0, 1, true)) == 0.0);

    // force V1(s') = 0.5 exactly: constant Q1 = 0.5, uniform rows (MI = 0)
    constant_output(agent.q1_params(), {0.5, 0.5});
    zero_net(agent.policy_params());
    CHECK(agent.v1_value(3) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(agent.q1_target(ct(3, 2, 1, 3, false)) == doctest::Approx(1.495).epsilon(1e-14));

    // generic consistency: target = r + gamma * V1(next)
    Agent fresh(AgentVariant::EntropySAC, env, small_hp(), 23);
    const auto tr = ct(2, 3, 0, 2, false);
    CHECK(fresh.q1_target(tr) ==
          doctest::Approx(1.0 + fresh.hp().gamma * fresh.v1_value(2)).epsilon(1e-12));
}

TEST_CASE("hdqn q1 target cuts the bootstrap at goal achievement") {
    const EnvConfig env = EnvConfig::make(4);
    Agent agent(AgentVariant::HDQN, env, small_hp(), 29);
    constant_output(agent.q1_params(), {0.3, 0.7});
    // reached goal: no bootstrap even though the episode continues
    CHECK(agent.q1_target(ct(3, 2, 1, 3, false)) == 1.0);
    // not reached: bootstrap with max_a Q1
    CHECK(agent.q1_target(ct(4, 2, 1, 3, false)) ==
          doctest::Approx(0.0 + 0.99 * 0.7).epsilon(1e-14));
}

TEST_CASE("controller backup operator: repeated application reaches the brute-force fixed point") {
    // ng = 3 chain with fixed uniform policies; 12 tabular unknowns Q(g,s,a)
    const int ng = 3;
    const double gamma = 0.99;
    const auto idx = [&](int g, int s, int a) { return ((g - 1) * 2 + (s - 2)) * 2 + a; };

    // transition branches (prob, next) for s in {2,3}
    const auto branches = [&](int s, int a) {
        std::vector<std::pair<double, int>> out;
        if (a == 0) out.push_back({1.0, s - 1});
        else {
            out.push_back({0.5, std::min(s + 1, ng)});
            out.push_back({0.5, s - 1});
        }
        return out;
    };

    // V1(s') with uniform pi_g and uniform rows: MI = 0, mean over goals/actions
    const auto v1_of = [&](const std::vector<double>& q, int s) {
        double acc = 0.0;
        for (int g = 1; g <= ng; ++g)
            for (int a = 0; a < 2; ++a) acc += q[static_cast<size_t>(idx(g, s, a))];
        return acc / (2.0 * ng);
    };

    std::vector<double> q(12, 0.0);
    for (int sweep = 0; sweep < 200000; ++sweep) {
        double delta = 0.0;
        std::vector<double> next(12);
        for (int g = 1; g <= ng; ++g)
            for (int s = 2; s <= ng; ++s)
                for (int a = 0; a < 2; ++a) {
                    double acc = 0.0;
                    for (const auto& [p, sp] : branches(s, a)) {
                        const double r = sp == g ? 1.0 : 0.0;
                        acc += p * (r + (sp == 1 ? 0.0 : gamma * v1_of(q, sp)));
                    }
                    next[static_cast<size_t>(idx(g, s, a))] = acc;
                    delta = std::max(delta, std::abs(acc - q[static_cast<size_t>(idx(g, s, a))]));
                }
        q = std::move(next);
        if (delta < 1e-13) break;
    }

    // brute-force: solve the 12x12 linear system directly
    std::vector<std::vector<double>> A(12, std::vector<double>(12, 0.0));
    std::vector<double> b(12, 0.0);
    for (int g = 1; g <= ng; ++g)
        for (int s = 2; s <= ng; ++s)
            for (int a = 0; a < 2; ++a) {
                const int row = idx(g, s, a);
                A[static_cast<size_t>(row)][static_cast<size_t>(row)] += 1.0;
                for (const auto& [p, sp] : branches(s, a)) {
                    b[static_cast<size_t>(row)] += p * (sp == g ? 1.0 : 0.0);
                    if (sp != 1)
                        for (int gp = 1; gp <= ng; ++gp)
                            for (int ap = 0; ap < 2; ++ap)
                                A[static_cast<size_t>(row)][static_cast<size_t>(idx(gp, sp, ap))] -=
                                    p * gamma / (2.0 * ng);
                }
            }
    // gaussian elimination
    for (int c = 0; c < 12; ++c) {
        int piv = c;
        for (int r = c + 1; r < 12; ++r)
            if (std::abs(A[static_cast<size_t>(r)][static_cast<size_t>(c)]) >
                std::abs(A[static_cast<size_t>(piv)][static_cast<size_t>(c)]))
                piv = r;
        std::swap(A[static_cast<size_t>(c)], A[static_cast<size_t>(piv)]);
        std::swap(b[static_cast<size_t>(c)], b[static_cast<size_t>(piv)]);
        for (int r = c + 1; r < 12; ++r) {
            const double f = A[static_cast<size_t>(r)][static_cast<size_t>(c)] /
                             A[static_cast<size_t>(c)][static_cast<size_t>(c)];
            for (int k = c; k < 12; ++k)
                A[static_cast<size_t>(r)][static_cast<size_t>(k)] -=
                    f * A[static_cast<size_t>(c)][static_cast<size_t>(k)];
            b[static_cast<size_t>(r)] -= f * b[static_cast<size_t>(c)];
        }
    }
    std::vector<double> solved(12);
    for (int r = 11; r >= 0; --r) {
        double acc = b[static_cast<size_t>(r)];
        for (int k = r + 1; k < 12; ++k)
            acc -= A[static_cast<size_t>(r)][static_cast<size_t>(k)] * solved[static_cast<size_t>(k)];
        solved[static_cast<size_t>(r)] = acc / A[static_cast<size_t>(r)][static_cast<size_t>(r)];
    }
    for (int i = 0; i < 12; ++i)
        CHECK(q[static_cast<size_t>(i)] == doctest::Approx(solved[static_cast<size_t>(i)]).epsilon(1e-10));
}

TEST_CASE("q1 update: zero residual means zero gradient and untouched parameters") {
    const EnvConfig env = EnvConfig::make(4);
    Agent agent(AgentVariant::MISAC, env, small_hp(), 31);
    zero_net(agent.q1_params());
    // done transitions with r=0: targets 0, predictions 0
    const std::vector<ControllerTransition> batch{ct(3, 2, 0, 1, true), ct(2, 3, 1, 1, true)};
    const MlpParams before = agent.q1_params();
    const auto res = agent.update_q1(batch);
    CHECK(res.applied);
    CHECK(res.loss == 0.0);
    CHECK(res.grad_inf_norm == 0.0);
    for (size_t i = 0; i < before.layers.size(); ++i) {
        CHECK(agent.q1_params().layers[i].w.v == before.layers[i].w.v);
        CHECK(agent.q1_params().layers[i].b.v == before.layers[i].b.v);
    }
}

TEST_CASE("q1 update loss is the half squared residual") {
    const EnvConfig env = EnvConfig::make(4);
    Agent agent(AgentVariant::MISAC, env, small_hp(), 37);
    zero_net(agent.q1_params());
    // one done transition with r=1: prediction 0, target 1, loss 1/2
    const auto res = agent.update_q1({ct(3, 2, 1, 3, true)});
    CHECK(res.loss == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("q updates do not increase the loss on a frozen problem") {
    const EnvConfig env = EnvConfig::make(4);
    Hyperparams hp = small_hp();
    hp.learning_rate = 1e-3;
    Agent agent(AgentVariant::MISAC, env, hp, 41);
    Rng mask_rng(7);
    // done transitions: targets are constants, so the objective is frozen
    std::vector<ControllerTransition> batch;
    for (int i = 0; i < 6; ++i) batch.push_back(ct(1 + i % 4, 2 + i % 3, i % 2, 1, true));
    const DropoutMask mask = make_dropout_mask(agent.q1_params(), 6, hp.dropout, mask_rng);

    double prev = std::numeric_limits<double>::infinity();
    for (int step = 0; step < 50; ++step) {
        const auto res = agent.update_q1(batch, &mask);
        CHECK(res.loss <= prev + 1e-6);
        prev = res.loss;
    }
}

TEST_CASE("controller policy objective is stationary when MI is zero and Q is constant") {
    const EnvConfig env = EnvConfig::make(4);
    Agent agent(AgentVariant::MISAC, env, small_hp(0.5), 43);
    zero_net(agent.policy_params());       // uniform, goal-independent rows
    constant_output(agent.q1_params(), {0.25, 0.25});
    const std::vector<ControllerTransition> batch{ct(3, 2, 0, 3, false), ct(2, 3, 1, 2, false)};
    const auto res = agent.update_controller_policy(batch, false);
    CHECK(res.applied);
    CHECK(std::abs(res.mi_term) < 1e-15);
    CHECK(res.grad_inf_norm < 1e-12);
}

TEST_CASE("alpha=0 controller policy update is pure Q maximization") {
    const EnvConfig env = EnvConfig::make(4);
    Hyperparams hp = small_hp(0.0);
    hp.learning_rate = 1e-4;
    Agent agent(AgentVariant::MISAC, env, hp, 47);
    std::vector<ControllerTransition> batch;
    for (int i = 0; i < 6; ++i) batch.push_back(ct(1 + (i * 2) % 4, 2 + i % 3, i % 2, 2, false));

    const auto expected_q = [&] {
        double acc = 0.0;
        for (const auto& t : batch) {
            const Tensor q = mlp_eval(agent.q1_params(), agent.encode_state_goal(t.state, false, t.goal));
            const auto row = agent.action_distribution(t.state, t.goal);
            acc += row.p[0] * q.v[0] + row.p[1] * q.v[1];
        }
        return acc / static_cast<double>(batch.size());
    };

    const double before = expected_q();
    agent.update_controller_policy(batch);
    CHECK(expected_q() >= before - 1e-9);
}

TEST_CASE("v2: entropy bonus vanishes for a near-deterministic goal policy") {
    const EnvConfig env = EnvConfig::make(4);
    Agent agent(AgentVariant::EntropySAC, env, small_hp(1.0), 53);
    MlpParams& mu = agent.meta_policy_params();
    zero_net(mu);
    mu.layers.back().b.v[2] = 1000.0;  // goal 3 with overwhelming probability
    const auto g = agent.goal_distribution(2);
    CHECK(g.p[2] == doctest::Approx(1.0).epsilon(1e-12));
    const Tensor q2 = mlp_eval(agent.q2_params(), agent.encode_state(2, false));
    CHECK(agent.v2_value(2) == doctest::Approx(q2.v[2]).epsilon(1e-9));
}

TEST_CASE("v2: uniform goals over 6 with zero Q2 and alpha=1 give ln 6") {
    const EnvConfig env = EnvConfig::make(6);
    Agent agent(AgentVariant::EntropySAC, env, small_hp(1.0), 59);
    zero_net(agent.meta_policy_params());
    zero_net(agent.q2_params());
    CHECK(agent.v2_value(3) == doctest::Approx(std::log(6.0)).epsilon(1e-12));
}

TEST_CASE("adversarial v2 equals expected Q2 plus alpha times the table MI") {
    const EnvConfig env = EnvConfig::make(5);
    const double alpha = 0.37;
    Agent agent(AgentVariant::AdversarialMISAC, env, small_hp(alpha), 61);
    const int pos = 3;
    const PolicyTable table = agent.policy_table(pos);
    const Tensor q2 = mlp_eval(agent.q2_params(), agent.encode_state(pos, false));
    double eq2 = 0.0;
    for (int g = 0; g < 5; ++g) eq2 += table.goal_dist.p[static_cast<size_t>(g)] * q2.v[static_cast<size_t>(g)];
    CHECK(agent.v2_value(pos) ==
          doctest::Approx(eq2 + alpha * mutual_information(table)).epsilon(1e-10));
}

TEST_CASE("q2 target arithmetic") {
    const EnvConfig env = EnvConfig::make(4);
    Hyperparams hp = small_hp(0.0);  // kill the bonus so V2 = E[Q2]
    Agent agent(AgentVariant::EntropySAC, env, hp, 67);
    CHECK(agent.q2_target(mt(2, 3, 1.0, 1, true)) == 1.0);
    constant_output(agent.q2_params(), {0.2, 0.2, 0.2, 0.2});
    CHECK(agent.q2_target(mt(2, 3, 0.01, 3, false)) == doctest::Approx(0.208).epsilon(1e-14));
}

TEST_CASE("meta backup operator on a two-goal chain matches brute-force evaluation") {
    // abstract semi-MDP: 2 states {0,1}, 2 goals, fixed uniform pi_g, alpha
    // entropy bonus; Q2(g,s) has 4 unknowns
    const double gamma = 0.9, alpha = 0.25;
    const double hbonus = alpha * std::log(2.0);  // entropy of the uniform goal policy
    // kernel: P(s'|s,g) and external reward f(s,g); state 1 under goal 1 terminates
    const auto prob_next = [](int s, int g, int sp) {
        if (s == 0) return g == 0 ? (sp == 0 ? 0.3 : 0.7) : (sp == 0 ? 0.8 : 0.2);
        return g == 0 ? (sp == 0 ? 0.5 : 0.5) : (sp == 0 ? 0.1 : 0.9);
    };
    const auto terminal = [](int s, int g) { return s == 1 && g == 1; };
    const auto f_of = [](int s, int g) { return s == 1 && g == 1 ? 1.0 : 0.01 * (s + g); };

    const auto v2_of = [&](const std::vector<double>& q, int s) {
        return 0.5 * (q[static_cast<size_t>(s)] + q[static_cast<size_t>(2 + s)]) + hbonus;
    };
    // layout: q[g*2+s]
    std::vector<double> q(4, 0.0);
    for (int sweep = 0; sweep < 100000; ++sweep) {
        double delta = 0.0;
        std::vector<double> next(4);
        for (int g = 0; g < 2; ++g)
            for (int s = 0; s < 2; ++s) {
                double acc = f_of(s, g);
                if (!terminal(s, g))
                    for (int sp = 0; sp < 2; ++sp)
                        acc += gamma * prob_next(s, g, sp) * v2_of(q, sp);
                next[static_cast<size_t>(g * 2 + s)] = acc;
                delta = std::max(delta, std::abs(acc - q[static_cast<size_t>(g * 2 + s)]));
            }
        q = std::move(next);
        if (delta < 1e-14) break;
    }

    // dense solve of the same 4x4 linear system
    std::vector<std::vector<double>> A(4, std::vector<double>(4, 0.0));
    std::vector<double> b(4, 0.0);
    for (int g = 0; g < 2; ++g)
        for (int s = 0; s < 2; ++s) {
            const int row = g * 2 + s;
            A[static_cast<size_t>(row)][static_cast<size_t>(row)] += 1.0;
            b[static_cast<size_t>(row)] += f_of(s, g);
            if (!terminal(s, g))
                for (int sp = 0; sp < 2; ++sp) {
                    const double w = gamma * prob_next(s, g, sp);
                    b[static_cast<size_t>(row)] += w * hbonus;
                    for (int gp = 0; gp < 2; ++gp)
                        A[static_cast<size_t>(row)][static_cast<size_t>(gp * 2 + sp)] -= 0.5 * w;
                }
        }
    for (int c = 0; c < 4; ++c) {
        int piv = c;
        for (int r = c + 1; r < 4; ++r)
            if (std::abs(A[static_cast<size_t>(r)][static_cast<size_t>(c)]) >
                std::abs(A[static_cast<size_t>(piv)][static_cast<size_t>(c)]))
                piv = r;
        std::swap(A[static_cast<size_t>(c)], A[static_cast<size_t>(piv)]);
        std::swap(b[static_cast<size_t>(c)], b[static_cast<size_t>(piv)]);
        for (int r = c + 1; r < 4; ++r) {
            const double fpiv = A[static_cast<size_t>(r)][static_cast<size_t>(c)] /
                                A[static_cast<size_t>(c)][static_cast<size_t>(c)];
            for (int k = c; k < 4; ++k)
                A[static_cast<size_t>(r)][static_cast<size_t>(k)] -=
                    fpiv * A[static_cast<size_t>(c)][static_cast<size_t>(k)];
            b[static_cast<size_t>(r)] -= fpiv * b[static_cast<size_t>(c)];
        }
    }
    std::vector<double> solved(4);
    for (int r = 3; r >= 0; --r) {
        double acc = b[static_cast<size_t>(r)];
        for (int k = r + 1; k < 4; ++k)
            acc -= A[static_cast<size_t>(r)][static_cast<size_t>(k)] * solved[static_cast<size_t>(k)];
        solved[static_cast<size_t>(r)] = acc / A[static_cast<size_t>(r)][static_cast<size_t>(r)];
    }
    for (int i = 0; i < 4; ++i)
        CHECK(q[static_cast<size_t>(i)] == doctest::Approx(solved[static_cast<size_t>(i)]).epsilon(1e-10));
}

TEST_CASE("minimax symmetry: the MI term is shared bit-for-bit with opposite sign") {
    const EnvConfig env = EnvConfig::make(5);
    Agent agent(AgentVariant::AdversarialMISAC, env, small_hp(0.2), 71);
    // same multiset of states on both levels
    const std::vector<int> states{2, 4, 2, 3, 5, 4};
    std::vector<ControllerTransition> cbatch;
    std::vector<MetaTransition> mbatch;
    for (size_t i = 0; i < states.size(); ++i) {
        cbatch.push_back(ct(1 + static_cast<int>(i) % 5, states[i], static_cast<int>(i) % 2, 2, false));
        mbatch.push_back(mt(states[i], 1 + static_cast<int>(i) % 5, 0.01, 3, false));
    }
    const auto eq9 = agent.update_controller_policy(cbatch, false);
    const auto eq13 = agent.update_meta_policy(mbatch, false);
    // identical doubles, not approximately equal
    CHECK(eq9.mi_term == eq13.mi_term);
    CHECK(eq9.mi_term > 0.0);
}

TEST_CASE("adversarial meta update raises goal entropy against a goal-determined controller") {
    const int ng = 4;
    const EnvConfig env = EnvConfig::make(ng);
    Hyperparams hp;
    hp.hidden = {ng, ng};
    hp.batch_size = 4;
    hp.buffer_capacity = 64;
    hp.alpha = 0.5;
    hp.learning_rate = 3e-3;
    Agent agent(AgentVariant::AdversarialMISAC, env, hp, 73);

    // controller rows: action = parity of the goal, effectively deterministic
    MlpParams& pi = agent.policy_params();
    zero_net(pi);
    for (int j = 0; j < ng; ++j) pi.layers[0].w.at(j, ng + j) = 1.0;   // copy goal one-hot
    for (int j = 0; j < ng; ++j) pi.layers[1].w.at(j, j) = 1.0;        // pass through
    for (int j = 0; j < ng; ++j) {
        pi.layers[2].w.at(0, j) = j % 2 == 0 ? 12.0 : -12.0;
        pi.layers[2].w.at(1, j) = j % 2 == 0 ? -12.0 : 12.0;
    }
    zero_net(agent.q2_params());  // Q2 constant

    const std::vector<MetaTransition> batch{mt(2, 1, 0.0, 3, false), mt(3, 2, 0.0, 2, false)};
    const double h_before =
        entropy(agent.goal_distribution(2)) + entropy(agent.goal_distribution(3));
    double mi_before = agent.update_meta_policy(batch, false).mi_term;
    for (int i = 0; i < 100; ++i) agent.update_meta_policy(batch);
    const double h_after =
        entropy(agent.goal_distribution(2)) + entropy(agent.goal_distribution(3));
    const double mi_after = agent.update_meta_policy(batch, false).mi_term;
    CHECK(h_after > h_before);
    CHECK(mi_after > mi_before);
}

TEST_CASE("epsilon-greedy behavior at the extremes") {
    const EnvConfig env = EnvConfig::make(6);
    Hyperparams hp = small_hp();
    hp.controller_eps = {1.0, 1.0, 1};  // always explore
    hp.meta_eps = {0.0, 0.0, 1};        // never explore
    Agent agent(AgentVariant::HDQN, env, hp, 79);

    EnvState s = env_reset(env);
    int lefts = 0;
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) lefts += agent.act(s, 3) == EnvAction::Left;
    CHECK(std::abs(lefts / static_cast<double>(draws) - 0.5) < 0.02);

    constant_output(agent.q2_params(), {0, 0, 0, 5.0, 0, 0});  // goal 4 dominates
    for (int i = 0; i < 50; ++i) CHECK(agent.pick_goal(s) == 4);

    Hyperparams hp2 = small_hp();
    hp2.controller_eps = {0.0, 0.0, 1};
    Agent greedy(AgentVariant::HDQN, env, hp2, 83);
    constant_output(greedy.q1_params(), {0.0, 2.0});  // right dominates
    for (int i = 0; i < 50; ++i) CHECK(greedy.act(s, 3) == EnvAction::Right);
}

TEST_CASE("softmax action sampling matches the policy probabilities") {
    const EnvConfig env = EnvConfig::make(4);
    Agent agent(AgentVariant::MISAC, env, small_hp(), 89);
    MlpParams& pi = agent.policy_params();
    zero_net(pi);
    pi.layers.back().b.v[0] = std::log(9.0);  // probabilities [0.9, 0.1]
    const EnvState s = env_reset(env);
    int zeros = 0;
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) zeros += agent.act(s, 2) == EnvAction::Left;
    CHECK(std::abs(zeros / static_cast<double>(draws) - 0.9) < 0.01);
}

TEST_CASE("a collapsed goal distribution makes pick_goal constant") {
    const EnvConfig env = EnvConfig::make(5);
    Agent agent(AgentVariant::MISAC, env, small_hp(), 97);
    MlpParams& mu = agent.meta_policy_params();
    zero_net(mu);
    mu.layers.back().b.v[3] = 1000.0;
    const EnvState s = env_reset(env);
    for (int i = 0; i < 100; ++i) CHECK(agent.pick_goal(s) == 4);
}

TEST_CASE("with alpha=0 the three SAC variants share identical policy losses") {
    const EnvConfig env = EnvConfig::make(5);
    const Hyperparams hp = small_hp(0.0);
    Agent a(AgentVariant::EntropySAC, env, hp, 101);
    Agent b(AgentVariant::MISAC, env, hp, 101);
    Agent c(AgentVariant::AdversarialMISAC, env, hp, 101);

    std::vector<ControllerTransition> cbatch;
    std::vector<MetaTransition> mbatch;
    for (int i = 0; i < 6; ++i) {
        cbatch.push_back(ct(1 + i % 5, 2 + i % 4, i % 2, 2 + (i + 1) % 4, false));
        mbatch.push_back(mt(2 + i % 4, 1 + i % 5, 0.01, 2 + (i + 1) % 4, false));
    }
    const double la = a.update_controller_policy(cbatch, false).loss;
    const double lb = b.update_controller_policy(cbatch, false).loss;
    const double lc = c.update_controller_policy(cbatch, false).loss;
    CHECK(std::abs(la - lb) <= 1e-10);
    CHECK(std::abs(lb - lc) <= 1e-10);

    const double ma = a.update_meta_policy(mbatch, false).loss;
    const double mb = b.update_meta_policy(mbatch, false).loss;
    const double mc = c.update_meta_policy(mbatch, false).loss;
    CHECK(std::abs(ma - mb) <= 1e-10);
    CHECK(std::abs(mb - mc) <= 1e-10);
}

TEST_CASE("every update is non-increasing on its own frozen objective at lr 1e-5") {
    const EnvConfig env = EnvConfig::make(4);
    Hyperparams hp = small_hp(0.2);
    hp.learning_rate = 1e-5;
    Rng mask_rng(5);

    std::vector<ControllerTransition> cbatch;
    std::vector<MetaTransition> mbatch;
    for (int i = 0; i < 6; ++i) {
        cbatch.push_back(ct(1 + i % 4, 2 + i % 3, i % 2, 1, true));  // constant targets
        mbatch.push_back(mt(2 + i % 3, 1 + i % 4, 0.01 * i, 1, true));
    }

    for (AgentVariant v :
         {AgentVariant::EntropySAC, AgentVariant::MISAC, AgentVariant::AdversarialMISAC}) {
        Agent agent(v, env, hp, 103);
        const DropoutMask m1 = make_dropout_mask(agent.q1_params(), 6, hp.dropout, mask_rng);
        const double q1_before = agent.update_q1(cbatch, &m1).loss;
        const double q1_after = agent.update_q1(cbatch, &m1).loss;
        CHECK(q1_after <= q1_before + 1e-7);

        const double p_before = agent.update_controller_policy(cbatch, true).loss;
        const double p_after = agent.update_controller_policy(cbatch, false).loss;
        CHECK(p_after <= p_before + 1e-7);

        const DropoutMask m2 = make_dropout_mask(agent.q2_params(), 6, hp.dropout, mask_rng);
        const double q2_before = agent.update_q2(mbatch, &m2).loss;
        const double q2_after = agent.update_q2(mbatch, &m2).loss;
        CHECK(q2_after <= q2_before + 1e-7);

        const double mp_before = agent.update_meta_policy(mbatch, true).loss;
        const double mp_after = agent.update_meta_policy(mbatch, false).loss;
        CHECK(mp_after <= mp_before + 1e-7);
    }
}

TEST_CASE("internal rewards count goal achievements one-for-one") {
    const EnvConfig env = EnvConfig::make(5);
    Hyperparams hp = small_hp();
    hp.batch_size = 4;
    Agent agent(AgentVariant::EntropySAC, env, hp, 107);
    Rng env_rng(11);

    double internal_sum = 0.0;
    int reached_count = 0;
    int meta_transitions = 0;
    int goal_selections = 0;
    for (int episode = 0; episode < 30; ++episode) {
        EnvState s = env_reset(env);
        int goal = agent.pick_goal(s);
        ++goal_selections;
        while (true) {
            const EnvAction a = agent.act(s, goal);
            const StepOutcome out = env_step(env, s, a, env_rng);
            const bool reached = goal_reached(out.next, goal);
            internal_sum += reached ? 1.0 : 0.0;
            reached_count += reached;
            if (reached || out.done) {
                ++meta_transitions;
                if (!out.done) {
                    goal = agent.pick_goal(out.next);
                    ++goal_selections;
                }
            }
            if (out.done) break;
            s = out.next;
        }
    }
    CHECK(internal_sum == doctest::Approx(reached_count));
    CHECK(meta_transitions == goal_selections);
}

TEST_CASE("the four variants run through an identical training-loop interface") {
    const EnvConfig env = EnvConfig::make(4);
    Hyperparams hp = small_hp();
    hp.batch_size = 8;
    for (AgentVariant v : {AgentVariant::HDQN, AgentVariant::EntropySAC, AgentVariant::MISAC,
                           AgentVariant::AdversarialMISAC}) {
        Agent agent(v, env, hp, 109);
        Rng env_rng(13);
        for (int episode = 0; episode < 3; ++episode) {
            EnvState s = env_reset(env);
            int goal = agent.pick_goal(s);
            EnvState tenure_start = s;
            double f_acc = 0.0;
            while (true) {
                const EnvAction a = agent.act(s, goal);
                const StepOutcome out = env_step(env, s, a, env_rng);
                const bool reached = goal_reached(out.next, goal);
                ControllerTransition t = ct(goal, s.position, static_cast<int>(a),
                                            out.next.position, out.done);
                t.state_visited = s.visited_goal;
                t.next_visited = out.next.visited_goal;
                agent.add_controller_transition(t);
                f_acc += out.external_reward;
                const auto cs = agent.train_controller();
                CHECK(cs.finite());
                if (reached || out.done) {
                    MetaTransition m = mt(tenure_start.position, goal, f_acc, out.next.position, out.done);
                    m.state_visited = tenure_start.visited_goal;
                    m.next_visited = out.next.visited_goal;
                    agent.add_meta_transition(m);
                    const auto ms = agent.train_meta();
                    CHECK(ms.finite());
                    if (!out.done) {
                        tenure_start = out.next;
                        f_acc = 0.0;
                        goal = agent.pick_goal(out.next);
                    }
                }
                if (out.done) break;
                s = out.next;
            }
        }
        CHECK(agent.env_steps() > 0);
    }
}

TEST_CASE("identical seeds give bitwise identical parameters after training") {
    const EnvConfig env = EnvConfig::make(4);
    Hyperparams hp = small_hp();
    hp.batch_size = 4;
    auto run = [&](uint64_t seed) {
        Agent agent(AgentVariant::AdversarialMISAC, env, hp, seed);
        Rng env_rng(17);
        for (int episode = 0; episode < 5; ++episode) {
            EnvState s = env_reset(env);
            int goal = agent.pick_goal(s);
            while (true) {
                const EnvAction a = agent.act(s, goal);
                const StepOutcome out = env_step(env, s, a, env_rng);
                const bool reached = goal_reached(out.next, goal);
                agent.add_controller_transition(ct(goal, s.position, static_cast<int>(a),
                                                   out.next.position, out.done));
                agent.train_controller();
                if (reached || out.done) {
                    agent.add_meta_transition(
                        mt(s.position, goal, out.external_reward, out.next.position, out.done));
                    agent.train_meta();
                    if (!out.done) goal = agent.pick_goal(out.next);
                }
                if (out.done) break;
                s = out.next;
            }
        }
        std::ostringstream os;
        agent.save_checkpoint(os);
        return os.str();
    };
    CHECK(run(555) == run(555));
    CHECK(run(555) != run(556));
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    const EnvConfig env = EnvConfig::make(4);
    for (AgentVariant v : {AgentVariant::HDQN, AgentVariant::MISAC}) {
        Agent a(v, env, small_hp(), 113);
        std::ostringstream os;
        a.save_checkpoint(os);

        Agent b(v, env, small_hp(), 999);  // different params until loaded
        std::istringstream is(os.str());
        b.load_checkpoint(is);
        std::ostringstream os2;
        b.save_checkpoint(os2);
        CHECK(os.str() == os2.str());
    }
    // config mismatch is rejected
    Agent a(AgentVariant::MISAC, env, small_hp(), 127);
    std::ostringstream os;
    a.save_checkpoint(os);
    Agent c(AgentVariant::EntropySAC, env, small_hp(), 127);
    std::istringstream is(os.str());
    CHECK_THROWS_AS(c.load_checkpoint(is), std::runtime_error);
}

TEST_CASE("gradients of all training objectives pass a quick finite-difference spot check") {
    const auto result = run_gradcheck_suite(6, 424242, 1e-5);
    CHECK(result.worst < 1e-4);
}

TEST_CASE("hyperparameter validation rejects bad values") {
    Hyperparams hp = small_hp();
    hp.alpha = -0.1;
    CHECK_THROWS_AS(hp.validate(), std::invalid_argument);
    hp = small_hp();
    hp.gamma = 0.0;
    CHECK_THROWS_AS(hp.validate(), std::invalid_argument);
    hp = small_hp();
    hp.tau_gumbel = 0.0;
    CHECK_THROWS_AS(hp.validate(), std::invalid_argument);
    hp = small_hp();
    hp.batch_size = 10000;
    CHECK_THROWS_AS(hp.validate(), std::invalid_argument);
}
