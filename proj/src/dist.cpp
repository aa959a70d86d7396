#include "hsac/dist.hpp"

#include "hsac/kernels.hpp"

#include <cmath>

namespace hsac {

void CategoricalDist::validate() const {
    if (p.empty()) throw std::invalid_argument("CategoricalDist: empty");
    double sum = 0.0;
    for (double x : p) {
        if (!(x >= 0.0)) throw std::invalid_argument("CategoricalDist: negative or NaN probability");
        sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("CategoricalDist: probabilities sum to " + std::to_string(sum));
}

CategoricalDist CategoricalDist::from(std::vector<double> probs) {
    CategoricalDist d{std::move(probs)};
    d.validate();
    return d;
}

void PolicyTable::validate() const {
    goal_dist.validate();
    if (action_dists.size() != goal_dist.p.size())
        throw std::invalid_argument("PolicyTable: one action row per goal required");
    const size_t width = action_dists.front().p.size();
    for (const auto& row : action_dists) {
        row.validate();
        if (row.p.size() != width)
            throw std::invalid_argument("PolicyTable: action rows have differing lengths");
    }
}

double entropy(const CategoricalDist& d) {
    d.validate();
    double h = 0.0;
    for (double x : d.p) h -= kernels::xlogx(x);
    return h;
}

double log_prob(const CategoricalDist& d, int index) {
    d.validate();
    if (index < 0 || index >= d.size()) throw std::invalid_argument("log_prob: index out of range");
    const double p = d.p[static_cast<size_t>(index)];
    if (p == 0.0) throw std::domain_error("log_prob: zero-probability outcome");
    return std::log(p);
}

CategoricalDist marginal_action_dist(const PolicyTable& t) {
    t.validate();
    CategoricalDist out;
    out.p.assign(t.action_dists.front().p.size(), 0.0);
    for (size_t g = 0; g < t.action_dists.size(); ++g) {
        const double wg = t.goal_dist.p[g];
        const auto& row = t.action_dists[g].p;
        for (size_t a = 0; a < row.size(); ++a) out.p[a] += wg * row[a];
    }
    return out;
}

double mutual_information(const PolicyTable& t) {
    const CategoricalDist marginal = marginal_action_dist(t);
    double cond = 0.0;
    for (size_t g = 0; g < t.action_dists.size(); ++g)
        cond += t.goal_dist.p[g] * entropy(t.action_dists[g]);
    return entropy(marginal) - cond;
}

GumbelSample gumbel_softmax_sample(std::span<const double> logits, double tau, Rng& rng) {
    if (!(tau > 0.0)) throw std::invalid_argument("gumbel_softmax_sample: tau must be positive");
    if (logits.empty()) throw std::invalid_argument("gumbel_softmax_sample: empty logits");
    Tensor z = Tensor::zeros({1, static_cast<int>(logits.size())});
    for (size_t i = 0; i < logits.size(); ++i) {
        if (!std::isfinite(logits[i]))
            throw std::invalid_argument("gumbel_softmax_sample: non-finite logit");
        z.v[i] = (logits[i] + rng.gumbel()) / tau;
    }
    kernels::softmax_rows_inplace(z);
    GumbelSample s;
    s.soft = std::move(z.v);
    s.hard_index = 0;
    for (size_t i = 1; i < s.soft.size(); ++i)
        if (s.soft[i] > s.soft[static_cast<size_t>(s.hard_index)]) s.hard_index = static_cast<int>(i);
    return s;
}

Var gumbel_softmax_node(Tape& tape, Var logits, const Tensor& noise, double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("gumbel_softmax_node: tau must be positive");
    Var shifted = tape.add(logits, tape.constant(noise));
    return tape.softmax_rows(tape.mul_scalar(shifted, 1.0 / tau));
}

Var entropy_node(Tape& tape, Var probs) {
    return tape.neg(tape.sum(tape.xlogx(probs)));
}

Var mi_node(Tape& tape, Var goal_probs, Var action_probs) {
    const Tensor& w = tape.value(goal_probs);
    const Tensor& p = tape.value(action_probs);
    const int goals = static_cast<int>(w.size());
    if (p.rows() != goals) throw std::invalid_argument("mi_node: row count != goal count");
    Var w_row = tape.reshape(goal_probs, {1, goals});
    Var mixture = tape.matmul(w_row, action_probs);          // [1 x A]
    Var h_mixture = entropy_node(tape, mixture);
    Var row_entropies = tape.neg(tape.sum_rows(tape.xlogx(action_probs)));  // [G]
    Var expected_row_entropy = tape.dot(tape.reshape(goal_probs, {goals}), row_entropies);
    return tape.sub(h_mixture, expected_row_entropy);
}

} // namespace hsac
