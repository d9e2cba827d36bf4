#pragma once

#include <cstddef>
#include <deque>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "currl/env.hpp"
#include "currl/rng.hpp"
#include "currl/task.hpp"

namespace currl {

/// One experience tuple: the state the scheduler acted from, the action it
/// took, the reward observed after the following interval, and the state it
/// landed in.  There is no terminal flag; curriculum episodes never end.
struct Transition {
    StateVector state_prev;
    TaskId action;
    double reward = 0.0;
    StateVector state_next;
};

/// Bounded FIFO of transitions.  Oldest entries are evicted once capacity is
/// reached; sampling is gated until min_fill transitions have accumulated.
class ReplayBuffer {
  public:
    ReplayBuffer(std::size_t capacity, std::size_t min_fill, int state_dim)
        : capacity_(capacity), min_fill_(min_fill), state_dim_(state_dim) {
        if (capacity == 0) throw ConfigError("replay: capacity must be positive");
        if (min_fill == 0 || min_fill > capacity)
            throw ConfigError("replay: min_fill must be in [1, capacity]");
        if (state_dim <= 0) throw ConfigError("replay: state_dim must be positive");
    }

    void push(Transition t) {
        if (t.state_prev.dim() != state_dim_ || t.state_next.dim() != state_dim_)
            throw std::invalid_argument("replay: transition state dim " +
                                        std::to_string(t.state_prev.dim()) + "/" +
                                        std::to_string(t.state_next.dim()) + ", expected " +
                                        std::to_string(state_dim_));
        if (storage_.size() == capacity_) storage_.pop_front();
        storage_.push_back(std::move(t));
    }

    /// Whether the min-fill training gate is open.
    bool ready() const { return storage_.size() >= min_fill_; }

    std::size_t size() const { return storage_.size(); }
    std::size_t capacity() const { return capacity_; }
    std::size_t min_fill() const { return min_fill_; }
    int state_dim() const { return state_dim_; }

    /// Index 0 is the oldest retained transition.
    const Transition& operator[](std::size_t i) const { return storage_[i]; }

  private:
    std::size_t capacity_;
    std::size_t min_fill_;
    int state_dim_;
    std::deque<Transition> storage_;
};

/// Uniform sample of `count` distinct buffer indices, or nullopt while the
/// min-fill gate is closed.  Frozen algorithm (mirrored by the trace oracle):
/// a partial Fisher-Yates shuffle where position j swaps with
/// j + rng.below(size - j), consuming exactly `count` draws when sampling
/// happens and zero otherwise.
inline std::optional<std::vector<std::size_t>> sample_minibatch(const ReplayBuffer& buffer,
                                                                std::size_t count, Rng& rng) {
    if (count == 0) throw std::invalid_argument("replay: minibatch size must be positive");
    if (!buffer.ready()) return std::nullopt;
    std::size_t n = buffer.size();
    if (count > n)
        throw std::invalid_argument("replay: minibatch " + std::to_string(count) +
                                    " exceeds buffer size " + std::to_string(n));
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t j = 0; j < count; ++j) {
        std::size_t k = j + static_cast<std::size_t>(rng.below(static_cast<int>(n - j)));
        std::swap(idx[j], idx[k]);
    }
    idx.resize(count);
    return idx;
}

}  // namespace currl
