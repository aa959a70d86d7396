#pragma once

#include "hsac/rng.hpp"

#include <stdexcept>
#include <vector>

namespace hsac {

// One controller-level step. `internal_reward` is 1 exactly when
// `reached_goal` holds for the post-step state.
struct ControllerTransition {
    int goal = 1;
    int state = 1;
    int action = 0;
    double internal_reward = 0.0;
    int next_state = 1;
    bool done = false;          // environment episode ended on this step
    bool reached_goal = false;
    bool state_visited = false;      // visited-goal bit, used only when observed
    bool next_visited = false;
};

// One meta-controller decision: the external return accumulated over a
// goal's tenure, closed when the goal is reached or the episode ends.
struct MetaTransition {
    int state = 1;
    int goal = 1;
    double external_return = 0.0;
    int next_state = 1;
    bool done = false;
    bool state_visited = false;
    bool next_visited = false;
};

// Fixed-capacity ring buffer with uniform with-replacement sampling.
template <typename T>
class ReplayBuffer {
public:
    explicit ReplayBuffer(int capacity) : capacity_(capacity) {
        if (capacity <= 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
        items_.reserve(static_cast<size_t>(capacity));
    }

    void push(const T& item) {
        if (static_cast<int>(items_.size()) < capacity_) {
            items_.push_back(item);
        } else {
            items_[write_] = item;
            write_ = (write_ + 1) % static_cast<size_t>(capacity_);
        }
    }

    int size() const { return static_cast<int>(items_.size()); }
    int capacity() const { return capacity_; }
    bool empty() const { return items_.empty(); }
    const T& operator[](int i) const { return items_[static_cast<size_t>(i)]; }

    std::vector<T> sample(int batch_size, Rng& rng) const {
        if (items_.empty()) throw std::logic_error("ReplayBuffer::sample: buffer is empty");
        std::vector<T> out;
        out.reserve(static_cast<size_t>(batch_size));
        for (int i = 0; i < batch_size; ++i)
            out.push_back(items_[static_cast<size_t>(rng.uniform_int(size()))]);
        return out;
    }

private:
    int capacity_;
    size_t write_ = 0;
    std::vector<T> items_;
};

} // namespace hsac
