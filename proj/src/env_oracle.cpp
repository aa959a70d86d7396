#include "hsac/env_oracle.hpp"

#include <cmath>
#include <stdexcept>

namespace hsac {

ChainPolicy ChainPolicy::always(EnvAction a, int ng) {
    ChainPolicy p;
    p.p_right.assign(static_cast<size_t>(ng) + 1, {a == EnvAction::Right ? 1.0 : 0.0,
                                                   a == EnvAction::Right ? 1.0 : 0.0});
    return p;
}

ChainPolicy ChainPolicy::uniform(int ng) {
    ChainPolicy p;
    p.p_right.assign(static_cast<size_t>(ng) + 1, {0.5, 0.5});
    return p;
}

void ChainPolicy::validate(int ng) const {
    if (static_cast<int>(p_right.size()) < ng + 1)
        throw std::invalid_argument("ChainPolicy: needs entries for positions 1..ng");
    for (const auto& e : p_right)
        for (double pr : e)
            if (!(pr >= 0.0 && pr <= 1.0))
                throw std::invalid_argument("ChainPolicy: probabilities must lie in [0,1]");
}

namespace {

// Augmented chain: states (position 2..ng, visited bit), position 1 absorbing.
// A transition branch either terminates with an immediate reward or lands in
// another augmented state.
struct Branch {
    double prob;
    bool terminal;
    double reward;  // when terminal
    int state;      // when not
};

struct Chain {
    int ng;
    int n_states;  // 2*(ng-1)

    explicit Chain(int ng_) : ng(ng_), n_states(2 * (ng_ - 1)) {}

    int index(int pos, int vis) const {
        if (pos == ng) vis = 1;  // visiting the top sets the bit
        return (pos - 2) * 2 + vis;
    }

    void branches(int pos, int vis, EnvAction a, std::vector<Branch>& out) const {
        out.clear();
        auto land = [&](double prob, int next_pos) {
            const int nvis = (vis || next_pos == ng) ? 1 : 0;
            if (next_pos == 1)
                out.push_back({prob, true, nvis ? 1.0 : 0.01, -1});
            else
                out.push_back({prob, false, 0.0, index(next_pos, nvis)});
        };
        if (a == EnvAction::Left) {
            land(1.0, pos - 1);
        } else {
            land(0.5, std::min(pos + 1, ng));
            land(0.5, pos - 1);
        }
    }
};

// Gaussian elimination with partial pivoting; A is overwritten.
std::vector<double> solve_dense(std::vector<std::vector<double>> a, std::vector<double> b) {
    const int n = static_cast<int>(b.size());
    for (int col = 0; col < n; ++col) {
        int pivot = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
        if (std::abs(a[pivot][col]) < 1e-300) throw std::runtime_error("solve_dense: singular system");
        std::swap(a[col], a[pivot]);
        std::swap(b[col], b[pivot]);
        for (int r = col + 1; r < n; ++r) {
            const double f = a[r][col] / a[col][col];
            if (f == 0.0) continue;
            for (int c = col; c < n; ++c) a[r][c] -= f * a[col][c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(static_cast<size_t>(n), 0.0);
    for (int r = n - 1; r >= 0; --r) {
        double acc = b[r];
        for (int c = r + 1; c < n; ++c) acc -= a[r][c] * x[c];
        x[static_cast<size_t>(r)] = acc / a[r][r];
    }
    return x;
}

std::vector<double> evaluate_policy(const Chain& chain, const ChainPolicy& policy) {
    const int n = chain.n_states;
    std::vector<std::vector<double>> a(static_cast<size_t>(n),
                                       std::vector<double>(static_cast<size_t>(n), 0.0));
    std::vector<double> b(static_cast<size_t>(n), 0.0);
    // the (top, not-visited) slot aliases (top, visited) and is never used;
    // pin it so the system stays regular
    a[static_cast<size_t>(2 * (chain.ng - 2))][static_cast<size_t>(2 * (chain.ng - 2))] = 1.0;
    std::vector<Branch> br;
    for (int pos = 2; pos <= chain.ng; ++pos) {
        for (int vis = pos == chain.ng ? 1 : 0; vis <= 1; ++vis) {
            const int s = chain.index(pos, vis);
            a[s][s] += 1.0;
            const double pr = policy.p_right[static_cast<size_t>(pos)][static_cast<size_t>(vis)];
            for (int ai = 0; ai <= 1; ++ai) {
                const double pa = ai == 1 ? pr : 1.0 - pr;
                if (pa == 0.0) continue;
                chain.branches(pos, vis, static_cast<EnvAction>(ai), br);
                for (const Branch& t : br) {
                    if (t.terminal) b[s] += pa * t.prob * t.reward;
                    else a[s][t.state] -= pa * t.prob;
                }
            }
        }
    }
    return solve_dense(std::move(a), std::move(b));
}

ChainPolicy greedy_from_values(const Chain& chain, const std::vector<double>& v) {
    ChainPolicy g;
    g.p_right.assign(static_cast<size_t>(chain.ng) + 1, {0.0, 0.0});
    std::vector<Branch> br;
    for (int pos = 2; pos <= chain.ng; ++pos) {
        for (int vis = pos == chain.ng ? 1 : 0; vis <= 1; ++vis) {
            double best = -1.0;
            int best_a = 0;
            for (int ai = 0; ai <= 1; ++ai) {
                chain.branches(pos, vis, static_cast<EnvAction>(ai), br);
                double q = 0.0;
                for (const Branch& t : br) q += t.prob * (t.terminal ? t.reward : v[t.state]);
                if (q > best) {
                    best = q;
                    best_a = ai;
                }
            }
            g.p_right[static_cast<size_t>(pos)][static_cast<size_t>(vis)] = best_a == 1 ? 1.0 : 0.0;
        }
    }
    return g;
}

std::vector<double> value_iteration(const Chain& chain, double residual) {
    std::vector<double> v(static_cast<size_t>(chain.n_states), 0.0);
    std::vector<double> next(v);
    std::vector<Branch> br;
    for (int iter = 0; iter < 20'000'000; ++iter) {
        double delta = 0.0;
        for (int pos = 2; pos <= chain.ng; ++pos) {
            for (int vis = pos == chain.ng ? 1 : 0; vis <= 1; ++vis) {
                const int s = chain.index(pos, vis);
                double best = -1.0;
                for (int ai = 0; ai <= 1; ++ai) {
                    chain.branches(pos, vis, static_cast<EnvAction>(ai), br);
                    double q = 0.0;
                    for (const Branch& t : br) q += t.prob * (t.terminal ? t.reward : v[t.state]);
                    best = std::max(best, q);
                }
                next[static_cast<size_t>(s)] = best;
                delta = std::max(delta, std::abs(best - v[static_cast<size_t>(s)]));
            }
        }
        v.swap(next);
        if (delta < residual) return v;
    }
    throw std::runtime_error("value_iteration: did not reach residual");
}

} // namespace

double optimal_return_oracle(const EnvConfig& cfg) {
    cfg.validate();
    const Chain chain(cfg.ng);
    // One exact evaluation of the greedy policy removes the value-iteration
    // truncation error.
    const ChainPolicy greedy = greedy_from_values(chain, value_iteration(chain, 1e-13));
    return evaluate_policy(chain, greedy)[static_cast<size_t>(chain.index(2, 0))];
}

double optimal_return_oracle(const EnvConfig& cfg, const ChainPolicy& policy) {
    cfg.validate();
    policy.validate(cfg.ng);
    const Chain chain(cfg.ng);
    return evaluate_policy(chain, policy)[static_cast<size_t>(chain.index(2, 0))];
}

ChainPolicy optimal_chain_policy(const EnvConfig& cfg) {
    cfg.validate();
    const Chain chain(cfg.ng);
    return greedy_from_values(chain, value_iteration(chain, 1e-13));
}

} // namespace hsac
