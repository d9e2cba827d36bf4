#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "currl/env.hpp"
#include "currl/json_util.hpp"
#include "currl/rng.hpp"
#include "currl/task.hpp"

namespace currl {

/// Closed-form dynamics for one synthetic task.  Held-out loss starts at
/// init_loss and moves toward a floor under training; see
/// SyntheticTransferStudent for the update rule.
struct SyntheticTaskConfig {
    std::string name;
    double data_weight = 0.0;
    bool warmup_eligible = false;
    double floor = 0.1;        // best achievable held-out loss
    double init_loss = 4.0;    // loss before any training; also the forgetting ceiling
    double learn_rate = 0.05;  // fraction of the gap closed per directly trained step
    double forget_rate = 0.0;  // drift back toward init_loss per untrained step
    double overfit_rate = 0.0; // rise of the effective floor per direct exposure
};

/// Configuration for SyntheticTransferStudent, loadable from JSON so the
/// calibration that experiments depend on is versioned data, not code.
struct SyntheticConfig {
    int schema_version = 1;
    int probes_per_task = 25;
    double sigma_obs = 0.0;    // observation noise (state probes and scores)
    double sigma_train = 0.0;  // per-step training noise on each task loss
    long lr_warmup_steps = 0;  // ramp-then-decay learning-rate horizon; 0 = constant
    std::vector<SyntheticTaskConfig> tasks;
    /// transfer[j][i]: fraction of a training step on task j that applies to
    /// task i.  Diagonal is 1; off-diagonal entries are strictly smaller.
    std::vector<std::vector<double>> transfer;

    int task_count() const { return static_cast<int>(tasks.size()); }

    void validate() const {
        if (schema_version != 1)
            throw ConfigError("synthetic config: unsupported schema_version " +
                              std::to_string(schema_version));
        if (tasks.empty()) throw ConfigError("synthetic config: no tasks");
        if (probes_per_task <= 0) throw ConfigError("synthetic config: probes_per_task must be positive");
        if (sigma_obs < 0.0 || sigma_train < 0.0)
            throw ConfigError("synthetic config: noise levels must be non-negative");
        if (lr_warmup_steps < 0) throw ConfigError("synthetic config: lr_warmup_steps must be >= 0");
        for (const SyntheticTaskConfig& t : tasks) {
            const std::string where = "synthetic task '" + t.name + "'";
            if (t.name.empty()) throw ConfigError("synthetic config: task with empty name");
            if (!(t.floor >= 0.0)) throw ConfigError(where + ": floor must be >= 0");
            if (!(t.init_loss > t.floor)) throw ConfigError(where + ": init_loss must exceed floor");
            if (!(t.learn_rate > 0.0 && t.learn_rate <= 1.0))
                throw ConfigError(where + ": learn_rate must be in (0, 1]");
            if (!(t.forget_rate >= 0.0 && t.forget_rate < 1.0))
                throw ConfigError(where + ": forget_rate must be in [0, 1)");
            if (!(t.overfit_rate >= 0.0)) throw ConfigError(where + ": overfit_rate must be >= 0");
        }
        int k = task_count();
        if (static_cast<int>(transfer.size()) != k)
            throw ConfigError("synthetic config: transfer matrix must have one row per task");
        for (int j = 0; j < k; ++j) {
            if (static_cast<int>(transfer[j].size()) != k)
                throw ConfigError("synthetic config: transfer row " + std::to_string(j) +
                                  " must have one entry per task");
            for (int i = 0; i < k; ++i) {
                double m = transfer[j][i];
                if (!std::isfinite(m) || m < 0.0)
                    throw ConfigError("synthetic config: transfer entries must be finite and >= 0");
                if (i == j && m != 1.0)
                    throw ConfigError("synthetic config: transfer diagonal must be exactly 1");
                if (i != j && !(m < 1.0))
                    throw ConfigError("synthetic config: direct training must dominate transfer "
                                      "(off-diagonal entries must be < 1)");
            }
        }
    }

    static SyntheticConfig from_json(const nlohmann::json& j, const std::string& path = "synthetic") {
        check_keys(j, path, {"schema_version", "probes_per_task", "sigma_obs", "sigma_train",
                             "lr_warmup_steps", "tasks", "transfer"});
        SyntheticConfig c;
        c.schema_version = req<int>(j, path, "schema_version");
        c.probes_per_task = opt<int>(j, path, "probes_per_task", c.probes_per_task);
        c.sigma_obs = opt<double>(j, path, "sigma_obs", c.sigma_obs);
        c.sigma_train = opt<double>(j, path, "sigma_train", c.sigma_train);
        c.lr_warmup_steps = opt<long>(j, path, "lr_warmup_steps", c.lr_warmup_steps);
        auto it = j.find("tasks");
        if (it == j.end()) throw ConfigError(path + ": missing required key 'tasks'");
        expect_array(*it, path + ".tasks");
        for (std::size_t i = 0; i < it->size(); ++i) {
            const std::string tp = path + ".tasks[" + std::to_string(i) + "]";
            const nlohmann::json& tj = (*it)[i];
            check_keys(tj, tp, {"name", "data_weight", "warmup_eligible", "floor", "init_loss",
                                "learn_rate", "forget_rate", "overfit_rate"});
            SyntheticTaskConfig t;
            t.name = req<std::string>(tj, tp, "name");
            t.data_weight = req<double>(tj, tp, "data_weight");
            t.warmup_eligible = opt<bool>(tj, tp, "warmup_eligible", false);
            t.floor = req<double>(tj, tp, "floor");
            t.init_loss = req<double>(tj, tp, "init_loss");
            t.learn_rate = req<double>(tj, tp, "learn_rate");
            t.forget_rate = opt<double>(tj, tp, "forget_rate", 0.0);
            t.overfit_rate = opt<double>(tj, tp, "overfit_rate", 0.0);
            c.tasks.push_back(std::move(t));
        }
        auto mt = j.find("transfer");
        if (mt == j.end()) throw ConfigError(path + ": missing required key 'transfer'");
        expect_array(*mt, path + ".transfer");
        for (std::size_t r = 0; r < mt->size(); ++r) {
            expect_array((*mt)[r], path + ".transfer[" + std::to_string(r) + "]");
            c.transfer.push_back((*mt)[r].get<std::vector<double>>());
        }
        c.validate();
        return c;
    }

    nlohmann::json to_json() const {
        nlohmann::json tasks_j = nlohmann::json::array();
        for (const SyntheticTaskConfig& t : tasks)
            tasks_j.push_back({{"name", t.name},
                               {"data_weight", t.data_weight},
                               {"warmup_eligible", t.warmup_eligible},
                               {"floor", t.floor},
                               {"init_loss", t.init_loss},
                               {"learn_rate", t.learn_rate},
                               {"forget_rate", t.forget_rate},
                               {"overfit_rate", t.overfit_rate}});
        return {{"schema_version", schema_version},
                {"probes_per_task", probes_per_task},
                {"sigma_obs", sigma_obs},
                {"sigma_train", sigma_train},
                {"lr_warmup_steps", lr_warmup_steps},
                {"tasks", std::move(tasks_j)},
                {"transfer", transfer}};
    }
};

/// Multi-task student with analytic loss dynamics.  Each task holds a scalar
/// held-out loss l_i in [floor_i, init_loss_i] updated per training step:
///
///   trained task j, for every task i:
///     l_i <- l_i - m(t) * learn_rate_i * transfer[j][i] * (l_i - base_i)
///     l_i <- l_i + forget_rate_i * (init_loss_i - l_i)      (only if i != j)
///     l_i <- clamp(l_i + train_noise, floor_i, init_loss_i)
///
/// where base_i is the plain floor for transfer (i != j) and, for the
/// directly trained task, an effective floor min(init_loss_i, floor_i +
/// overfit_rate_i * exposures_i).  The effective floor rises with direct
/// exposure, so over-training one task eventually raises its held-out loss
/// while forgetting pulls neglected tasks back toward their starting loss.
/// m(t) = min(t/W, sqrt(W/t)) ramps and decays the step size around
/// lr_warmup_steps W (1 everywhere when W == 0).
///
/// Scores are negated losses.  Observation noise is counter-based: it depends
/// only on (seed, steps trained, task, probe), so eval_score/observe_state
/// are pure reads and repeated observation is bit-identical.
class SyntheticTransferStudent : public StudentEnvironment {
  public:
    SyntheticTransferStudent(SyntheticConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
        cfg_.validate();
        for (int i = 0; i < cfg_.task_count(); ++i) {
            const SyntheticTaskConfig& t = cfg_.tasks[i];
            profiles_.push_back(TaskProfile{TaskId{i}, t.name, t.data_weight, t.warmup_eligible});
        }
        normalize_weights(profiles_);
        validate_profiles(profiles_);
        reset(seed);
    }

    int task_count() const override { return cfg_.task_count(); }
    const std::vector<TaskProfile>& tasks() const override { return profiles_; }
    int probes_per_task() const override { return cfg_.probes_per_task; }
    long steps_trained() const override { return steps_done_; }
    const SyntheticConfig& config() const { return cfg_; }

    void reset(std::uint64_t seed) override {
        losses_.clear();
        exposures_.assign(cfg_.task_count(), 0);
        for (const SyntheticTaskConfig& t : cfg_.tasks) losses_.push_back(t.init_loss);
        steps_done_ = 0;
        obs_seed_ = derive_seed(seed, kStreamObs);
    }

    void train_on(TaskId task, Rng& rng) override {
        check_task(task);
        int j = task.value;
        double m = lr_multiplier(steps_done_ + 1);
        for (int i = 0; i < cfg_.task_count(); ++i) {
            const SyntheticTaskConfig& t = cfg_.tasks[i];
            double base = (i == j) ? effective_floor(i) : t.floor;
            double next = losses_[i] - m * t.learn_rate * cfg_.transfer[j][i] * (losses_[i] - base);
            if (i != j) next += t.forget_rate * (t.init_loss - losses_[i]);
            if (cfg_.sigma_train > 0.0) next += cfg_.sigma_train * rng.normal();
            losses_[i] = std::clamp(next, t.floor, t.init_loss);
        }
        ++exposures_[j];
        ++steps_done_;
    }

    Score eval_score(const EvalTarget& target) const override {
        if (!target.is_mixed()) {
            check_task(*target.task);
            return Score{-noisy_loss(target.task->value)};
        }
        double sum = 0.0;
        for (int i = 0; i < cfg_.task_count(); ++i) sum += noisy_loss(i);
        return Score{-sum / cfg_.task_count()};
    }

    StateVector observe_state() const override {
        StateVector s;
        s.values.reserve(static_cast<std::size_t>(cfg_.task_count()) * cfg_.probes_per_task);
        for (int i = 0; i < cfg_.task_count(); ++i)
            for (int p = 0; p < cfg_.probes_per_task; ++p) {
                double v = losses_[i] + cfg_.sigma_obs * noise(i, p);
                s.values.push_back(std::max(0.0, v));
            }
        return s;
    }

    /// Noise-free loss of one task; used by tests and calibration tooling.
    double true_loss(TaskId task) const {
        check_task(task);
        return losses_[task.value];
    }

    long exposures(TaskId task) const {
        check_task(task);
        return exposures_[task.value];
    }

  private:
    // Counter channel for score evaluations, disjoint from probe indices.
    static constexpr std::uint64_t kEvalChannel = 1u << 20;

    void check_task(TaskId t) const {
        if (t.value < 0 || t.value >= cfg_.task_count())
            throw std::out_of_range("task id " + std::to_string(t.value) + " out of range");
    }

    double lr_multiplier(long step) const {
        if (cfg_.lr_warmup_steps <= 0) return 1.0;
        double w = static_cast<double>(cfg_.lr_warmup_steps);
        double t = static_cast<double>(step);
        return std::min(t / w, std::sqrt(w / t));
    }

    double effective_floor(int i) const {
        const SyntheticTaskConfig& t = cfg_.tasks[i];
        return std::min(t.init_loss, t.floor + t.overfit_rate * static_cast<double>(exposures_[i]));
    }

    double noise(int task, std::uint64_t channel) const {
        return counter_gaussian(obs_seed_, static_cast<std::uint64_t>(steps_done_),
                                static_cast<std::uint64_t>(task), channel);
    }

    double noisy_loss(int task) const {
        if (cfg_.sigma_obs == 0.0) return losses_[task];
        return std::max(0.0, losses_[task] + cfg_.sigma_obs * noise(task, kEvalChannel));
    }

    SyntheticConfig cfg_;
    std::vector<TaskProfile> profiles_;
    std::vector<double> losses_;
    std::vector<long> exposures_;
    long steps_done_ = 0;
    std::uint64_t obs_seed_ = 0;
};

}  // namespace currl
