#pragma once

#include <cmath>
#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace currl {

/// Raised when a config value or combination of values is invalid.  The CLI
/// maps this to its "invalid spec" exit code.
class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Raised when a run must stop because the student produced a non-finite
/// evaluation.  The message names the step and task so the failure is
/// attributable.  The CLI maps this to its "runtime failure" exit code.
class RunAbort : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Index of a task in the fixed task set of one experiment.  A thin wrapper
/// rather than a bare int so actions, array indices and counts don't mix
/// silently in signatures.
struct TaskId {
    int value = 0;

    auto operator<=>(const TaskId&) const = default;
};

/// Scalar progress signal reported by a student evaluation.  Higher is
/// better; for cross-entropy students this is the negated evaluation loss.
struct Score {
    double value = 0.0;
};

/// Static description of one task in the training mixture.
struct TaskProfile {
    TaskId id;
    std::string name;
    /// Fraction of the overall training data this task represents.  Profiles
    /// in one experiment sum to 1.
    double data_weight = 0.0;
    /// Whether warm-up phases may select this task.  In the transfer setting
    /// these are the high-resource tasks; the low-resource tasks are the ones
    /// whose final performance the experiment cares about.
    bool warmup_eligible = false;
};

/// Checks a task set for use in an experiment: ids must equal positions,
/// names must be non-empty and unique, weights must be positive and sum to 1
/// within 1e-9, and at least one task must exist.
inline void validate_profiles(const std::vector<TaskProfile>& tasks) {
    if (tasks.empty()) throw ConfigError("task set is empty");
    double weight_sum = 0.0;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        const TaskProfile& t = tasks[i];
        if (t.id.value != static_cast<int>(i))
            throw ConfigError("task '" + t.name + "': id " + std::to_string(t.id.value) +
                              " does not match position " + std::to_string(i));
        if (t.name.empty())
            throw ConfigError("task at position " + std::to_string(i) + " has an empty name");
        for (std::size_t j = 0; j < i; ++j)
            if (tasks[j].name == t.name)
                throw ConfigError("duplicate task name '" + t.name + "'");
        if (!(t.data_weight > 0.0) || !std::isfinite(t.data_weight))
            throw ConfigError("task '" + t.name + "': data_weight must be positive and finite");
        weight_sum += t.data_weight;
    }
    if (std::abs(weight_sum - 1.0) > 1e-9)
        throw ConfigError("task data_weights sum to " + std::to_string(weight_sum) +
                          ", expected 1 within 1e-9");
}

/// Rescales raw weights (e.g. corpus percentages) so they sum to exactly 1.
inline void normalize_weights(std::vector<TaskProfile>& tasks) {
    double sum = 0.0;
    for (const TaskProfile& t : tasks) sum += t.data_weight;
    if (!(sum > 0.0)) throw ConfigError("cannot normalize non-positive weight sum");
    for (TaskProfile& t : tasks) t.data_weight /= sum;
}

/// Tasks a warm-up phase may select.  Empty only if no task is eligible.
inline std::vector<TaskId> warmup_pool(const std::vector<TaskProfile>& tasks) {
    std::vector<TaskId> pool;
    for (const TaskProfile& t : tasks)
        if (t.warmup_eligible) pool.push_back(t.id);
    return pool;
}

}  // namespace currl
