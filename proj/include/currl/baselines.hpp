#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "currl/json_util.hpp"
#include "currl/scheduler.hpp"
#include "currl/task.hpp"

namespace currl {

/// Non-adaptive reference policies the adaptive schedulers are compared to.
enum class BaselineKind {
    Uniform,       // every task equally often
    Proportional,  // tasks at their data_weight frequencies
};

inline const char* to_string(BaselineKind k) {
    return k == BaselineKind::Uniform ? "uniform" : "proportional";
}

inline BaselineKind baseline_kind_from_string(const std::string& s) {
    if (s == "uniform") return BaselineKind::Uniform;
    if (s == "proportional") return BaselineKind::Proportional;
    throw ConfigError("unknown baseline kind '" + s + "'");
}

/// One draw from the baseline distribution.  Draw discipline (frozen):
/// Uniform consumes one index draw; Proportional consumes one uniform01 and
/// walks the cumulative weights.
inline TaskId baseline_select(BaselineKind kind, const std::vector<TaskProfile>& tasks, Rng& rng) {
    if (kind == BaselineKind::Uniform) return TaskId{rng.below(static_cast<int>(tasks.size()))};
    double r = rng.uniform01();
    double cum = 0.0;
    for (const TaskProfile& t : tasks) {
        cum += t.data_weight;
        if (r < cum) return t.id;
    }
    return tasks.back().id;  // guard against accumulated rounding at r ~ 1
}

struct BaselineConfig {
    BaselineKind kind = BaselineKind::Uniform;
    long warmup_steps = 0;
    bool warmup_all_tasks = false;

    void validate() const {
        if (warmup_steps < 0) throw ConfigError("baseline: warmup_steps must be >= 0");
    }

    nlohmann::json to_json() const {
        return {{"kind", to_string(kind)},
                {"warmup_steps", warmup_steps},
                {"warmup_all_tasks", warmup_all_tasks}};
    }

    static BaselineConfig from_json(const nlohmann::json& j, const std::string& path = "baseline") {
        check_keys(j, path, {"kind", "warmup_steps", "warmup_all_tasks"});
        BaselineConfig c;
        c.kind = baseline_kind_from_string(req<std::string>(j, path, "kind"));
        c.warmup_steps = opt<long>(j, path, "warmup_steps", c.warmup_steps);
        c.warmup_all_tasks = opt<bool>(j, path, "warmup_all_tasks", c.warmup_all_tasks);
        c.validate();
        return c;
    }
};

/// Fixed-distribution scheduler.  Never observes scores, so its log rows
/// carry no reward/score/epsilon; during an optional warm-up phase it draws
/// uniformly from the warm-up pool like the adaptive schedulers do.
class BaselineScheduler : public Scheduler {
  public:
    BaselineScheduler(BaselineConfig cfg, std::vector<TaskProfile> profiles)
        : cfg_(cfg), profiles_(std::move(profiles)) {
        cfg_.validate();
        validate_profiles(profiles_);
        pool_ = cfg_.warmup_all_tasks ? all_tasks() : warmup_pool(profiles_);
        if (cfg_.warmup_steps > 0 && pool_.empty())
            throw ConfigError("baseline: warm-up configured but no task is warmup-eligible");
    }

    std::string_view kind() const override {
        return cfg_.kind == BaselineKind::Uniform ? "uniform" : "proportional";
    }
    int task_count() const override { return static_cast<int>(profiles_.size()); }
    bool wants_observation(long) const override { return false; }

    Decision initial_action(Rng& rng) override { return select(0, rng); }

    CycleOutcome decision_cycle(long step, TaskId, std::optional<Score>, const StudentEnvironment&,
                                Rng& rng) override {
        return {select(step, rng), std::nullopt, std::nullopt};
    }

    const BaselineConfig& config() const { return cfg_; }

  private:
    Decision select(long step, Rng& rng) {
        if (step < cfg_.warmup_steps)
            return {pool_[rng.below(static_cast<int>(pool_.size()))], DecisionSource::Warmup};
        return {baseline_select(cfg_.kind, profiles_, rng), DecisionSource::Random};
    }

    std::vector<TaskId> all_tasks() const {
        std::vector<TaskId> v;
        for (const TaskProfile& p : profiles_) v.push_back(p.id);
        return v;
    }

    BaselineConfig cfg_;
    std::vector<TaskProfile> profiles_;
    std::vector<TaskId> pool_;
};

}  // namespace currl
