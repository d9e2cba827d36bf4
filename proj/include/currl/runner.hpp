#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "currl/env.hpp"
#include "currl/log.hpp"
#include "currl/rng.hpp"
#include "currl/scheduler.hpp"
#include "currl/task.hpp"

namespace currl {

/// Which score the scheduler observes at decision steps.
enum class EvalMode {
    CurrentTask,  // held-out score of the task just trained
    Mixed,        // unweighted mixture score over all tasks
};

inline const char* to_string(EvalMode m) {
    return m == EvalMode::CurrentTask ? "current_task" : "mixed";
}

inline EvalMode eval_mode_from_string(const std::string& s) {
    if (s == "current_task") return EvalMode::CurrentTask;
    if (s == "mixed") return EvalMode::Mixed;
    throw ConfigError("unknown eval mode '" + s + "'");
}

/// Loop-level configuration of one run, shared by every scheduler kind.
struct RunConfig {
    long total_steps = 20000;
    /// Decision cadence: the scheduler is consulted after steps that are
    /// multiples of this, and its choice trains for the following interval.
    int action_interval = 10;
    /// Steps before the scheduler's warm-up horizon ends.  The runner only
    /// validates it; schedulers own the behavioral consequences.
    long warmup_steps = 0;
    std::uint64_t seed = 1;
    EvalMode eval_mode = EvalMode::CurrentTask;
    /// Steps between evaluation-trace rows; 0 disables the trace.
    long eval_cadence = 0;
    /// Steps between scheduler snapshots; 0 disables snapshots.
    long snapshot_interval = 0;
    /// Record the state observation at every decision step (needed to probe
    /// Q-networks offline).
    bool record_states = false;

    void validate() const {
        if (total_steps < 0) throw ConfigError("run: total_steps must be >= 0");
        if (action_interval < 1) throw ConfigError("run: action_interval must be >= 1");
        if (warmup_steps < 0) throw ConfigError("run: warmup_steps must be >= 0");
        if (warmup_steps > total_steps)
            throw ConfigError("run: warmup_steps " + std::to_string(warmup_steps) +
                              " exceeds total_steps " + std::to_string(total_steps));
        if (eval_cadence < 0) throw ConfigError("run: eval_cadence must be >= 0");
        if (snapshot_interval < 0) throw ConfigError("run: snapshot_interval must be >= 0");
    }
};

namespace detail {

inline void check_finite_score(double v, long step, const std::string& what) {
    if (!std::isfinite(v))
        throw RunAbort("run aborted at step " + std::to_string(step) + ": " + what +
                       " evaluated to a non-finite score");
}

inline EvalRow make_eval_row(long step, const StudentEnvironment& env) {
    EvalRow row;
    row.step = step;
    const auto& tasks = env.tasks();
    double sum_all = 0.0, sum_low = 0.0;
    int n_low = 0;
    for (const TaskProfile& t : tasks) {
        double s = env.eval_score(EvalTarget::for_task(t.id)).value;
        check_finite_score(s, step, "task '" + t.name + "'");
        row.task_scores.push_back(s);
        sum_all += s;
        if (!t.warmup_eligible) {
            sum_low += s;
            ++n_low;
        }
    }
    row.macro_all = sum_all / static_cast<double>(tasks.size());
    row.macro_low = n_low > 0 ? sum_low / n_low : row.macro_all;
    return row;
}

}  // namespace detail

/// Runs one experiment: a fixed number of student training steps, with the
/// scheduler consulted every action_interval steps.  The loop is the single
/// place that sequences random draws: the scheduler's selection draws for a
/// decision happen before the training draws that decision causes, and the
/// environment draws only inside train_on.  Observations use counter-based
/// noise, so evaluation and state recording consume nothing.
inline RunResult run_experiment(const RunConfig& cfg, StudentEnvironment& env, Scheduler& sched) {
    cfg.validate();
    if (env.task_count() != sched.task_count())
        throw ConfigError("run: environment has " + std::to_string(env.task_count()) +
                          " tasks but scheduler expects " + std::to_string(sched.task_count()));
    if (cfg.eval_cadence > 0 && cfg.eval_cadence % cfg.action_interval != 0)
        throw ConfigError("run: eval_cadence must be a multiple of action_interval");

    RunResult out;
    out.log.scheduler_kind = std::string(sched.kind());
    out.log.seed = cfg.seed;
    out.log.total_steps = cfg.total_steps;
    for (const TaskProfile& t : env.tasks()) out.log.task_names.push_back(t.name);

    Rng rng(derive_seed(cfg.seed, kStreamRun));
    if (cfg.total_steps == 0) return out;

    Decision current = sched.initial_action(rng);
    for (long step = 1; step <= cfg.total_steps; ++step) {
        env.train_on(current.action, rng);

        StepRecord rec;
        rec.step = step;
        rec.action = current.action;
        rec.source = current.source;

        if (step % cfg.action_interval == 0) {
            std::optional<Score> score;
            if (sched.wants_observation(step)) {
                EvalTarget target = cfg.eval_mode == EvalMode::CurrentTask
                                        ? EvalTarget::for_task(current.action)
                                        : EvalTarget::mixed();
                Score s = env.eval_score(target);
                detail::check_finite_score(
                    s.value, step,
                    cfg.eval_mode == EvalMode::CurrentTask
                        ? "task '" + env.tasks()[current.action.value].name + "'"
                        : "mixed evaluation");
                score = s;
            }
            if (cfg.record_states) out.states.push_back({step, env.observe_state()});

            CycleOutcome cycle = sched.decision_cycle(step, current.action, score, env, rng);
            rec.reward = cycle.reward;
            rec.score = score ? std::optional<double>(score->value) : std::nullopt;
            rec.epsilon = cycle.epsilon;
            current = cycle.next;

            if (cfg.snapshot_interval > 0 && step % cfg.snapshot_interval == 0) {
                nlohmann::json st = sched.snapshot_state();
                if (!st.is_null()) out.snapshots.push_back(Snapshot{step, std::move(st)});
            }
        }

        out.log.records.push_back(std::move(rec));
        if (cfg.eval_cadence > 0 && step % cfg.eval_cadence == 0)
            out.eval_trace.push_back(detail::make_eval_row(step, env));
    }
    validate_log(out.log);
    return out;
}

}  // namespace currl
