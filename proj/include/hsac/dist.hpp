#pragma once

#include "hsac/rng.hpp"
#include "hsac/tape.hpp"

#include <span>
#include <vector>

namespace hsac {

// Probability vector over a discrete set. Entries must be nonnegative and
// sum to 1 within 1e-9.
struct CategoricalDist {
    std::vector<double> p;

    static CategoricalDist from(std::vector<double> probs);  // validates
    int size() const { return static_cast<int>(p.size()); }
    void validate() const;
};

// A goal distribution together with one action distribution per goal; the
// object conditional mutual information is computed on.
struct PolicyTable {
    CategoricalDist goal_dist;
    std::vector<CategoricalDist> action_dists;  // one row per goal

    void validate() const;
    int num_goals() const { return goal_dist.size(); }
    int num_actions() const { return action_dists.empty() ? 0 : action_dists.front().size(); }
};

// Shannon entropy in nats, with 0*ln(0) = 0. Result lies in [0, ln K].
double entropy(const CategoricalDist& d);

// ln p[index]; zero-mass indices are an error rather than -inf.
double log_prob(const CategoricalDist& d, int index);

// Goal-marginalized action distribution: pi_a(a) = sum_g pi_g(g) pi_ag(a|g).
CategoricalDist marginal_action_dist(const PolicyTable& t);

// Conditional mutual information I(a;g) in nats:
//   H(marginal_action_dist) - sum_g pi_g(g) H(pi_ag(.|g)).
// Zero iff actions are independent of goals; bounded by min(H(a), H(g)).
double mutual_information(const PolicyTable& t);

// One Gumbel-Softmax draw: soft is the temperature-tau relaxation, hard_index
// the argmax used for discrete execution.
struct GumbelSample {
    std::vector<double> soft;
    int hard_index = 0;
};

GumbelSample gumbel_softmax_sample(std::span<const double> logits, double tau, Rng& rng);

// Tape ops -----------------------------------------------------------------

// softmax((logits + noise)/tau) recorded on the tape; noise is frozen, so the
// result is a deterministic differentiable function of the logits.
Var gumbel_softmax_node(Tape& tape, Var logits, const Tensor& noise, double tau);

// Mutual information of one state's policy table, recorded on the tape:
//   H(w * P) - sum_g w_g H(P_g)
// with w the goal probabilities [1 x G] and P the per-goal action
// probabilities [G x A]. Either side may be a constant. This is the single
// code path both the controller and the adversarial meta objective use, so
// their MI terms agree bit-for-bit.
Var mi_node(Tape& tape, Var goal_probs, Var action_probs);

// Entropy of a probability vector/row recorded on the tape.
Var entropy_node(Tape& tape, Var probs);

} // namespace hsac
