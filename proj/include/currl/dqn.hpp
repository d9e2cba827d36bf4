#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "currl/epsilon.hpp"
#include "currl/json_util.hpp"
#include "currl/mlp.hpp"
#include "currl/replay.hpp"
#include "currl/scheduler.hpp"
#include "currl/task.hpp"

namespace currl {

struct DqnConfig {
    double gamma = 0.99;
    double tau = 0.005;  // soft target-update rate
    double lr = 2.5e-4;
    int minibatch_size = 32;
    std::vector<int> hidden_dims{512, 512};
    double huber_delta = 1.0;
    double rmsprop_rho = 0.99;
    double rmsprop_stabilizer = 1e-8;
    int train_steps_per_decision = 1;
    /// Select actions with the online network instead of the (default) target
    /// network.  The target net changes slowly, which keeps selection stable
    /// between consecutive decisions.
    bool select_with_online = false;
    /// Warm-up draws from all tasks instead of only the warmup-eligible pool.
    bool warmup_all_tasks = false;
    /// Do not store the first post-warm-up transition, whose reward is
    /// measured against a zero baseline and whose previous state is unknown.
    bool skip_first_reward = false;
    long warmup_steps = 0;
    EpsilonSchedule epsilon;
    std::size_t replay_capacity = 10000;
    std::size_t replay_min = 1000;

    void validate() const {
        if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("dqn: gamma must be in [0, 1)");
        if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("dqn: tau must be in (0, 1]");
        if (!(lr >= 0.0)) throw ConfigError("dqn: lr must be >= 0");
        if (minibatch_size < 1) throw ConfigError("dqn: minibatch_size must be >= 1");
        if (hidden_dims.empty()) throw ConfigError("dqn: at least one hidden layer required");
        for (int h : hidden_dims)
            if (h < 1) throw ConfigError("dqn: hidden dims must be positive");
        if (!(huber_delta > 0.0)) throw ConfigError("dqn: huber_delta must be positive");
        if (!(rmsprop_rho >= 0.0 && rmsprop_rho < 1.0))
            throw ConfigError("dqn: rmsprop_rho must be in [0, 1)");
        if (!(rmsprop_stabilizer > 0.0)) throw ConfigError("dqn: rmsprop_stabilizer must be positive");
        if (train_steps_per_decision < 1)
            throw ConfigError("dqn: train_steps_per_decision must be >= 1");
        if (warmup_steps < 0) throw ConfigError("dqn: warmup_steps must be >= 0");
        if (replay_capacity == 0) throw ConfigError("dqn: replay_capacity must be positive");
        if (replay_min == 0 || replay_min > replay_capacity)
            throw ConfigError("dqn: replay_min must be in [1, replay_capacity]");
        if (static_cast<std::size_t>(minibatch_size) > replay_min)
            throw ConfigError("dqn: minibatch_size cannot exceed replay_min");
        epsilon.validate();
    }

    nlohmann::json to_json() const {
        return {{"gamma", gamma},
                {"tau", tau},
                {"lr", lr},
                {"minibatch_size", minibatch_size},
                {"hidden_dims", hidden_dims},
                {"huber_delta", huber_delta},
                {"rmsprop_rho", rmsprop_rho},
                {"rmsprop_stabilizer", rmsprop_stabilizer},
                {"train_steps_per_decision", train_steps_per_decision},
                {"select_with_online", select_with_online},
                {"warmup_all_tasks", warmup_all_tasks},
                {"skip_first_reward", skip_first_reward},
                {"warmup_steps", warmup_steps},
                {"epsilon", epsilon.to_json()},
                {"replay_capacity", replay_capacity},
                {"replay_min", replay_min}};
    }

    static DqnConfig from_json(const nlohmann::json& j, const std::string& path = "dqn") {
        check_keys(j, path,
                   {"gamma", "tau", "lr", "minibatch_size", "hidden_dims", "huber_delta",
                    "rmsprop_rho", "rmsprop_stabilizer", "train_steps_per_decision",
                    "select_with_online", "warmup_all_tasks", "skip_first_reward", "warmup_steps",
                    "epsilon", "replay_capacity", "replay_min"});
        DqnConfig c;
        c.gamma = opt<double>(j, path, "gamma", c.gamma);
        c.tau = opt<double>(j, path, "tau", c.tau);
        c.lr = opt<double>(j, path, "lr", c.lr);
        c.minibatch_size = opt<int>(j, path, "minibatch_size", c.minibatch_size);
        if (has_key(j, "hidden_dims")) c.hidden_dims = j.at("hidden_dims").get<std::vector<int>>();
        c.huber_delta = opt<double>(j, path, "huber_delta", c.huber_delta);
        c.rmsprop_rho = opt<double>(j, path, "rmsprop_rho", c.rmsprop_rho);
        c.rmsprop_stabilizer = opt<double>(j, path, "rmsprop_stabilizer", c.rmsprop_stabilizer);
        c.train_steps_per_decision =
            opt<int>(j, path, "train_steps_per_decision", c.train_steps_per_decision);
        c.select_with_online = opt<bool>(j, path, "select_with_online", c.select_with_online);
        c.warmup_all_tasks = opt<bool>(j, path, "warmup_all_tasks", c.warmup_all_tasks);
        c.skip_first_reward = opt<bool>(j, path, "skip_first_reward", c.skip_first_reward);
        c.warmup_steps = opt<long>(j, path, "warmup_steps", c.warmup_steps);
        if (has_key(j, "epsilon")) c.epsilon = EpsilonSchedule::from_json(j.at("epsilon"), path + ".epsilon");
        c.replay_capacity = static_cast<std::size_t>(
            opt<long>(j, path, "replay_capacity", static_cast<long>(c.replay_capacity)));
        c.replay_min =
            static_cast<std::size_t>(opt<long>(j, path, "replay_min", static_cast<long>(c.replay_min)));
        c.validate();
        return c;
    }
};

/// TD(0) targets y = r + gamma * max_a Q_target(s').  Curriculum episodes
/// never terminate, so there is no terminal zeroing of the bootstrap term.
inline std::vector<double> td_targets(const std::vector<Transition>& batch, double gamma,
                                      const Mlp& target_net) {
    std::vector<double> y;
    y.reserve(batch.size());
    for (const Transition& t : batch) {
        std::vector<double> q = forward(target_net, t.state_next.values);
        double best = q[0];
        for (double v : q) best = std::max(best, v);
        y.push_back(t.reward + gamma * best);
    }
    return y;
}

/// One minibatch update of the online network.  Per sample, the Huber loss
/// (residual Q_online(s)[a] - y) flows back only through the taken action's
/// output unit; the loss and gradients use mean reduction over the batch.
/// Returns the minibatch loss.  Throws RunAbort if the loss or any target is
/// non-finite, so a diverged run stops instead of logging garbage.
inline double dqn_train_step(Mlp& online, const Mlp& target_net, const std::vector<Transition>& batch,
                             const DqnConfig& cfg, RmsPropState& opt) {
    if (batch.empty()) throw std::invalid_argument("dqn: empty training batch");
    std::vector<double> y = td_targets(batch, cfg.gamma, target_net);
    Mlp grads = zero_clone(online);
    double loss = 0.0;
    double inv_n = 1.0 / static_cast<double>(batch.size());
    ForwardCache cache;
    std::vector<double> out_grad(static_cast<std::size_t>(online.output_dim()), 0.0);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (!std::isfinite(y[i])) throw RunAbort("dqn: non-finite TD target in training batch");
        const Transition& tr = batch[i];
        std::vector<double> q = forward(online, tr.state_prev.values, &cache);
        double err = q[tr.action.value] - y[i];
        loss += huber(err, cfg.huber_delta) * inv_n;
        out_grad[tr.action.value] = huber_grad(err, cfg.huber_delta) * inv_n;
        backward_accumulate(online, cache, out_grad, grads);
        out_grad[tr.action.value] = 0.0;
    }
    if (!std::isfinite(loss)) throw RunAbort("dqn: non-finite training loss");
    rmsprop_step(online, grads, opt, cfg.lr);
    return loss;
}

/// Soft target update theta_target += tau * (theta_online - theta_target).
/// Written in increment form so theta_target == theta_online is an exact
/// fixed point and repeated updates contract the gap by (1 - tau) each call.
inline void soft_update(const Mlp& online, Mlp& target_net, double tau) {
    if (online.dims != target_net.dims) throw std::invalid_argument("soft_update: shape mismatch");
    for (int l = 0; l < online.layer_count(); ++l) {
        for (std::size_t i = 0; i < online.w[l].a.size(); ++i)
            target_net.w[l].a[i] += tau * (online.w[l].a[i] - target_net.w[l].a[i]);
        for (std::size_t i = 0; i < online.b[l].size(); ++i)
            target_net.b[l][i] += tau * (online.b[l][i] - target_net.b[l][i]);
    }
}

/// Epsilon-greedy selection over Q(state).  Draw discipline (frozen): one
/// uniform01 always; one index draw only on the exploration branch.  Greedy
/// ties resolve to the lowest task id.
inline Decision dqn_select(const StateVector& state, double eps, const Mlp& net, Rng& rng) {
    double r = rng.uniform01();
    if (r < eps) return {TaskId{rng.below(net.output_dim())}, DecisionSource::Random};
    std::vector<double> q = forward(net, state.values);
    int best = 0;
    for (int i = 1; i < static_cast<int>(q.size()); ++i)
        if (q[i] > q[best]) best = i;
    return {TaskId{best}, DecisionSource::Greedy};
}

/// Q-network curriculum scheduler.  Observes the student's per-probe losses
/// as state, rewards score change between consecutive observations, learns
/// action values with TD(0) from a replay buffer, and selects
/// epsilon-greedily.  During warm-up it only draws from the warm-up pool;
/// observation, storage and training all start when warm-up ends.
class DqnScheduler : public Scheduler {
  public:
    DqnScheduler(DqnConfig cfg, std::vector<TaskProfile> profiles, int probes_per_task,
                 std::uint64_t seed)
        : cfg_(std::move(cfg)),
          profiles_(std::move(profiles)),
          probes_per_task_(probes_per_task),
          buffer_(cfg_.replay_capacity, cfg_.replay_min,
                  static_cast<int>(profiles_.size()) * probes_per_task) {
        cfg_.validate();
        validate_profiles(profiles_);
        if (probes_per_task < 1) throw ConfigError("dqn: probes_per_task must be >= 1");
        pool_ = cfg_.warmup_all_tasks ? all_tasks() : warmup_pool(profiles_);
        if (cfg_.warmup_steps > 0 && pool_.empty())
            throw ConfigError("dqn: warm-up configured but no task is warmup-eligible");
        std::vector<int> dims;
        dims.push_back(static_cast<int>(profiles_.size()) * probes_per_task);
        for (int h : cfg_.hidden_dims) dims.push_back(h);
        dims.push_back(static_cast<int>(profiles_.size()));
        Rng init_rng(derive_seed(seed, kStreamNetInit));
        online_ = make_mlp(dims, init_rng);
        target_ = online_;
        opt_ = make_rmsprop_state(online_, cfg_.rmsprop_rho, cfg_.rmsprop_stabilizer);
    }

    std::string_view kind() const override { return "dqn"; }
    int task_count() const override { return static_cast<int>(profiles_.size()); }
    bool wants_observation(long step) const override { return step >= cfg_.warmup_steps; }

    /// First action: a warm-up pool draw when a warm-up phase exists (one
    /// index draw), otherwise the fixed first task (no draws).
    Decision initial_action(Rng& rng) override {
        if (cfg_.warmup_steps > 0)
            return {pool_[rng.below(static_cast<int>(pool_.size()))], DecisionSource::Warmup};
        return {TaskId{0}, DecisionSource::UnvisitedQueue};
    }

    /// Post-warm-up cycle, in frozen draw order: store the new transition,
    /// train (minibatch index draws) if the buffer gate is open, then select
    /// (one uniform01, plus one index draw on exploration).  During warm-up:
    /// a single pool index draw.
    CycleOutcome decision_cycle(long step, TaskId current, std::optional<Score> score,
                                const StudentEnvironment& env, Rng& rng) override {
        last_step_ = step;
        if (step < cfg_.warmup_steps) {
            Decision next{pool_[rng.below(static_cast<int>(pool_.size()))], DecisionSource::Warmup};
            return {next, std::nullopt, epsilon_at(step, cfg_.epsilon)};
        }
        if (!score) throw ConfigError("dqn: decision cycle requires a score observation");

        StateVector state = env.observe_state();
        double reward = score->value - prev_score_;
        bool first = !prev_state_.has_value();
        if (!first || !cfg_.skip_first_reward) {
            Transition t;
            // The first observation has no predecessor; fall back to a
            // self-transition from the just-observed state.
            t.state_prev = first ? state : *prev_state_;
            t.action = current;
            t.reward = reward;
            t.state_next = state;
            buffer_.push(std::move(t));
        }

        if (buffer_.ready()) {
            for (int i = 0; i < cfg_.train_steps_per_decision; ++i) {
                auto idx = sample_minibatch(buffer_, static_cast<std::size_t>(cfg_.minibatch_size), rng);
                std::vector<Transition> batch;
                batch.reserve(idx->size());
                for (std::size_t s : *idx) batch.push_back(buffer_[s]);
                try {
                    last_loss_ = dqn_train_step(online_, target_, batch, cfg_, opt_);
                } catch (const RunAbort& e) {
                    throw RunAbort("run aborted at step " + std::to_string(step) + ": " + e.what());
                }
                soft_update(online_, target_, cfg_.tau);
                ++train_steps_done_;
            }
        }

        double eps = epsilon_at(step, cfg_.epsilon);
        Decision next = dqn_select(state, eps, selection_net(), rng);
        prev_state_ = std::move(state);
        prev_score_ = score->value;
        return {next, reward, eps};
    }

    nlohmann::json snapshot_state() const override {
        return {{"train_steps", train_steps_done_},
                {"buffer_size", buffer_.size()},
                {"last_loss", last_loss_}};
    }

    const Mlp& online() const { return online_; }
    const Mlp& target() const { return target_; }
    const Mlp& selection_net() const { return cfg_.select_with_online ? online_ : target_; }
    const ReplayBuffer& buffer() const { return buffer_; }
    const RmsPropState& optimizer() const { return opt_; }
    long train_steps_done() const { return train_steps_done_; }
    const DqnConfig& config() const { return cfg_; }

    /// Self-contained snapshot of everything needed to probe or resume the
    /// learned scheduler.  Replay contents are summarized, not persisted.
    nlohmann::json checkpoint_json() const {
        return {{"format_version", 1},
                {"kind", "dqn"},
                {"task_count", task_count()},
                {"probes_per_task", probes_per_task_},
                {"config", cfg_.to_json()},
                {"online", mlp_to_json(online_)},
                {"target", mlp_to_json(target_)},
                {"optimizer", rmsprop_to_json(opt_)},
                {"steps_seen", last_step_},
                {"train_steps", train_steps_done_},
                {"buffer", {{"size", buffer_.size()},
                            {"capacity", buffer_.capacity()},
                            {"min_fill", buffer_.min_fill()}}}};
    }

  private:
    std::vector<TaskId> all_tasks() const {
        std::vector<TaskId> v;
        for (const TaskProfile& p : profiles_) v.push_back(p.id);
        return v;
    }

    DqnConfig cfg_;
    std::vector<TaskProfile> profiles_;
    int probes_per_task_;
    ReplayBuffer buffer_;
    std::vector<TaskId> pool_;
    Mlp online_;
    Mlp target_;
    RmsPropState opt_;
    std::optional<StateVector> prev_state_;
    double prev_score_ = 0.0;
    long train_steps_done_ = 0;
    long last_step_ = 0;
    double last_loss_ = 0.0;
};

/// Read-side view of a checkpoint, as consumed by the probing tool.
struct DqnCheckpoint {
    int task_count = 0;
    int probes_per_task = 0;
    bool select_with_online = false;
    Mlp online;
    Mlp target;
    long steps_seen = 0;

    const Mlp& selection_net() const { return select_with_online ? online : target; }

    static DqnCheckpoint from_json(const nlohmann::json& j) {
        if (j.at("format_version").get<int>() != 1)
            throw ConfigError("checkpoint: unsupported format_version");
        if (j.at("kind").get<std::string>() != "dqn")
            throw ConfigError("checkpoint: not a q-network checkpoint");
        DqnCheckpoint c;
        c.task_count = j.at("task_count").get<int>();
        c.probes_per_task = j.at("probes_per_task").get<int>();
        c.select_with_online = j.at("config").at("select_with_online").get<bool>();
        c.online = mlp_from_json(j.at("online"));
        c.target = mlp_from_json(j.at("target"));
        c.steps_seen = j.at("steps_seen").get<long>();
        if (c.online.output_dim() != c.task_count ||
            c.online.input_dim() != c.task_count * c.probes_per_task)
            throw ConfigError("checkpoint: network shape does not match task/probe counts");
        return c;
    }
};

}  // namespace currl
