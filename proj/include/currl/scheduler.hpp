#pragma once

#include <optional>
#include <string_view>

#include <json.hpp>

#include "currl/env.hpp"
#include "currl/log.hpp"
#include "currl/rng.hpp"
#include "currl/task.hpp"

namespace currl {

/// A selected action together with how it was selected.
struct Decision {
    TaskId action;
    DecisionSource source = DecisionSource::Warmup;
};

/// Result of one decision cycle: the action to train next, plus the reward
/// the scheduler derived from the observation (when it observed) and the
/// exploration rate in force (when the scheduler has one).
struct CycleOutcome {
    Decision next;
    std::optional<double> reward;
    std::optional<double> epsilon;
};

/// A curriculum scheduler: picks which task the student trains on next.
/// The run loop drives it at a fixed cadence; between decisions the selected
/// action repeats.  Schedulers draw randomness only from the Rng handed in,
/// in a documented order, so runs replay exactly.
class Scheduler {
  public:
    virtual ~Scheduler() = default;

    virtual std::string_view kind() const = 0;
    virtual int task_count() const = 0;

    /// Whether the scheduler needs a score observation at this decision step.
    /// The runner evaluates the student only when this returns true, keeping
    /// evaluation cost and reward bookkeeping aligned.
    virtual bool wants_observation(long step) const = 0;

    /// First action of a run, before any training.
    virtual Decision initial_action(Rng& rng) = 0;

    /// One decision cycle at the end of training step `step`: consume the
    /// observation (when wants_observation(step)), update internal estimates,
    /// and select the next action.
    virtual CycleOutcome decision_cycle(long step, TaskId current, std::optional<Score> score,
                                        const StudentEnvironment& env, Rng& rng) = 0;

    /// Internal state for periodic snapshots (value tables etc.); null when
    /// the scheduler has nothing worth recording.
    virtual nlohmann::json snapshot_state() const { return nullptr; }
};

}  // namespace currl
