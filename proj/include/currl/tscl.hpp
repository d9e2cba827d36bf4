#pragma once

#include <cmath>
#include <deque>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "currl/json_util.hpp"
#include "currl/scheduler.hpp"
#include "currl/task.hpp"

namespace currl {

/// Per-action bookkeeping of the bandit-style scheduler: an exponentially
/// weighted estimate q of recent reward, the last observed score h (the
/// baseline the next reward is measured against), and a queue of actions not
/// yet tried.  All estimates start at zero.
struct ReturnTable {
    std::vector<double> q;
    std::vector<double> h;
    std::deque<TaskId> unvisited;
    std::vector<bool> observed;  // whether h[a] holds a real score yet

    int task_count() const { return static_cast<int>(q.size()); }
};

inline ReturnTable make_return_table(int task_count) {
    if (task_count <= 0) throw ConfigError("return table needs at least one task");
    ReturnTable t;
    t.q.assign(task_count, 0.0);
    t.h.assign(task_count, 0.0);
    t.observed.assign(task_count, false);
    for (int i = 0; i < task_count; ++i) t.unvisited.push_back(TaskId{i});
    return t;
}

struct TsclConfig {
    /// Smoothing of the reward estimate: q <- alpha*r + (1-alpha)*q.
    double alpha = 0.1;
    /// Fixed exploration rate of the epsilon-greedy selection.
    double epsilon = 0.1;
    long warmup_steps = 0;
    int action_interval = 10;
    /// Warm-up draws from all tasks instead of only the warmup-eligible pool.
    bool warmup_all_tasks = false;
    /// Keep q frozen during warm-up (h still tracks scores), so the estimates
    /// that drive greedy selection start from post-warm-up evidence.
    bool freeze_q_during_warmup = false;
    /// Skip the q update on each action's first observation, whose reward is
    /// measured against the zero-initialized baseline and therefore spikes.
    bool skip_first_reward = false;

    void validate() const {
        if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("tscl: alpha must be in (0, 1]");
        if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("tscl: epsilon must be in [0, 1]");
        if (warmup_steps < 0) throw ConfigError("tscl: warmup_steps must be >= 0");
        if (action_interval < 1) throw ConfigError("tscl: action_interval must be >= 1");
    }

    nlohmann::json to_json() const {
        return {{"alpha", alpha},
                {"epsilon", epsilon},
                {"warmup_steps", warmup_steps},
                {"action_interval", action_interval},
                {"warmup_all_tasks", warmup_all_tasks},
                {"freeze_q_during_warmup", freeze_q_during_warmup},
                {"skip_first_reward", skip_first_reward}};
    }

    static TsclConfig from_json(const nlohmann::json& j, const std::string& path = "tscl") {
        check_keys(j, path, {"alpha", "epsilon", "warmup_steps", "action_interval",
                             "warmup_all_tasks", "freeze_q_during_warmup", "skip_first_reward"});
        TsclConfig c;
        c.alpha = opt<double>(j, path, "alpha", c.alpha);
        c.epsilon = opt<double>(j, path, "epsilon", c.epsilon);
        c.warmup_steps = opt<long>(j, path, "warmup_steps", c.warmup_steps);
        c.action_interval = opt<int>(j, path, "action_interval", c.action_interval);
        c.warmup_all_tasks = opt<bool>(j, path, "warmup_all_tasks", c.warmup_all_tasks);
        c.freeze_q_during_warmup = opt<bool>(j, path, "freeze_q_during_warmup", c.freeze_q_during_warmup);
        c.skip_first_reward = opt<bool>(j, path, "skip_first_reward", c.skip_first_reward);
        c.validate();
        return c;
    }
};

/// Consumes one score observation for `action`: the reward is the score
/// change since that action was last observed, the baseline h advances to the
/// new score, and q takes an EWMA step.  Returns the reward.
inline double tscl_observe(ReturnTable& table, TaskId action, Score x, double alpha) {
    double r = x.value - table.h[action.value];
    table.h[action.value] = x.value;
    table.q[action.value] = alpha * r + (1.0 - alpha) * table.q[action.value];
    table.observed[action.value] = true;
    return r;
}

/// Like tscl_observe but leaves q untouched (h still advances).  Used while
/// q is frozen and for first observations whose baseline is uninitialized.
inline double tscl_observe_score_only(ReturnTable& table, TaskId action, Score x) {
    double r = x.value - table.h[action.value];
    table.h[action.value] = x.value;
    table.observed[action.value] = true;
    return r;
}

/// Selects the next action.
///
/// Order of precedence, with the draw discipline frozen (the trace oracle in
/// the test suite mirrors it draw for draw):
///   1. If the unvisited queue is live (always in warmup_all_tasks mode;
///      otherwise only outside warm-up), pop its front.  Consumes no draws.
///   2. Draw r = uniform01().  During warm-up, or when r < epsilon, draw one
///      index: warm-up selects uniformly from `pool`, exploration uniformly
///      from all tasks.  Two draws total.
///   3. Otherwise pick argmax |q| (lowest index on ties).  One draw total.
///
/// Selection maximizes the magnitude of expected reward, not its signed
/// value: tasks whose scores are falling (negative learning progress) are as
/// interesting to revisit as tasks that are improving.
inline Decision tscl_select(ReturnTable& table, long step, const TsclConfig& cfg,
                            const std::vector<TaskId>& pool, Rng& rng) {
    bool in_warmup = step < cfg.warmup_steps;
    bool hold_queue = in_warmup && !cfg.warmup_all_tasks;
    if (!hold_queue && !table.unvisited.empty()) {
        TaskId a = table.unvisited.front();
        table.unvisited.pop_front();
        return {a, DecisionSource::UnvisitedQueue};
    }
    double r = rng.uniform01();
    if (in_warmup) {
        if (pool.empty()) throw ConfigError("tscl: warm-up requires a non-empty task pool");
        return {pool[rng.below(static_cast<int>(pool.size()))], DecisionSource::Warmup};
    }
    if (r < cfg.epsilon)
        return {TaskId{rng.below(table.task_count())}, DecisionSource::Random};
    int best = 0;
    for (int i = 1; i < table.task_count(); ++i)
        if (std::abs(table.q[i]) > std::abs(table.q[best])) best = i;
    return {TaskId{best}, DecisionSource::Greedy};
}

/// Bandit-style curriculum scheduler.  Keeps one reward estimate per task and
/// trains the task whose score is changing fastest in magnitude, exploring
/// with fixed probability epsilon.
class TsclScheduler : public Scheduler {
  public:
    TsclScheduler(TsclConfig cfg, std::vector<TaskProfile> profiles)
        : cfg_(cfg), profiles_(std::move(profiles)) {
        cfg_.validate();
        validate_profiles(profiles_);
        table_ = make_return_table(static_cast<int>(profiles_.size()));
        pool_ = cfg_.warmup_all_tasks ? all_tasks() : warmup_pool(profiles_);
        if (cfg_.warmup_steps > 0 && pool_.empty())
            throw ConfigError("tscl: warm-up configured but no task is warmup-eligible");
    }

    std::string_view kind() const override { return "tscl"; }
    int task_count() const override { return table_.task_count(); }
    bool wants_observation(long) const override { return true; }

    Decision initial_action(Rng& rng) override {
        // Mirrors tscl_select at step 0: in warm-up the queue is held and the
        // pool is drawn from; otherwise the queue starts draining.
        return tscl_select(table_, 0, cfg_, pool_, rng);
    }

    CycleOutcome decision_cycle(long step, TaskId current, std::optional<Score> score,
                                const StudentEnvironment&, Rng& rng) override {
        if (!score) throw ConfigError("tscl: decision cycle requires a score observation");
        bool in_warmup = step < cfg_.warmup_steps;
        bool first = !table_.observed[current.value];
        double reward;
        if ((cfg_.freeze_q_during_warmup && in_warmup) || (cfg_.skip_first_reward && first))
            reward = tscl_observe_score_only(table_, current, *score);
        else
            reward = tscl_observe(table_, current, *score, cfg_.alpha);
        Decision next = tscl_select(table_, step, cfg_, pool_, rng);
        return {next, reward, cfg_.epsilon};
    }

    nlohmann::json snapshot_state() const override {
        nlohmann::json unvisited = nlohmann::json::array();
        for (TaskId t : table_.unvisited) unvisited.push_back(t.value);
        return {{"q", table_.q}, {"h", table_.h}, {"unvisited", std::move(unvisited)}};
    }

    const ReturnTable& table() const { return table_; }
    const TsclConfig& config() const { return cfg_; }

  private:
    std::vector<TaskId> all_tasks() const {
        std::vector<TaskId> v;
        for (const TaskProfile& p : profiles_) v.push_back(p.id);
        return v;
    }

    TsclConfig cfg_;
    std::vector<TaskProfile> profiles_;
    ReturnTable table_;
    std::vector<TaskId> pool_;
};

}  // namespace currl
