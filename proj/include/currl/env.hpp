#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "currl/rng.hpp"
#include "currl/task.hpp"

namespace currl {

/// Observation handed to a learned scheduler: the per-probe evaluation losses
/// of every task, concatenated task-major.  dim = task_count * probes_per_task
/// and entry (t * probes_per_task + p) is probe p of task t.  Entries are
/// finite and non-negative.
struct StateVector {
    std::vector<double> values;

    int dim() const { return static_cast<int>(values.size()); }
};

/// What a score evaluation should measure: one task's held-out performance,
/// or the unweighted mixture over all tasks.
struct EvalTarget {
    std::optional<TaskId> task;  // empty = mixed over all tasks

    static EvalTarget for_task(TaskId t) { return EvalTarget{t}; }
    static EvalTarget mixed() { return EvalTarget{std::nullopt}; }
    bool is_mixed() const { return !task.has_value(); }
};

/// A multi-task student the scheduler trains.  Implementations own all model
/// state; the scheduler only calls train_on and reads scores/states.
///
/// Contract highlights:
///  - train_on performs exactly one training step on the given task and is
///    the only mutating call besides reset.
///  - eval_score and observe_state are read-only: calling them any number of
///    times, in any order, changes neither the student nor any random stream.
///  - reset(seed) restores the freshly-constructed state for that seed;
///    construction is equivalent to construction + reset.
class StudentEnvironment {
  public:
    virtual ~StudentEnvironment() = default;

    virtual int task_count() const = 0;
    virtual const std::vector<TaskProfile>& tasks() const = 0;
    virtual int probes_per_task() const = 0;

    /// One training step on `task`.  `rng` is the run's master stream; the
    /// student must draw from it only here so runs replay exactly.
    virtual void train_on(TaskId task, Rng& rng) = 0;

    /// Held-out score for `target`; higher is better.
    virtual Score eval_score(const EvalTarget& target) const = 0;

    /// Current observation (see StateVector).
    virtual StateVector observe_state() const = 0;

    /// Returns to the initial state for `seed`.
    virtual void reset(std::uint64_t seed) = 0;

    /// Number of train_on calls since the last reset.
    virtual long steps_trained() const = 0;
};

}  // namespace currl
