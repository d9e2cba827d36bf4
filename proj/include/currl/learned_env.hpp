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
#include "currl/mlp.hpp"
#include "currl/rng.hpp"
#include "currl/task.hpp"

namespace currl {

struct LearnedTaskConfig {
    std::string name;
    double data_weight = 0.0;
    bool warmup_eligible = false;
    /// Tasks in the same family share class structure, so a shared trunk
    /// genuinely transfers between them.
    int family = 0;
};

/// Configuration of the trainable toy student.
struct LearnedConfig {
    int schema_version = 1;
    int input_dim = 16;
    int hidden_dim = 24;
    int classes = 4;
    int train_total = 8000;     // training examples across all tasks, split by data_weight
    int heldout_per_task = 64;  // evaluation examples per task
    int probes_per_task = 25;   // probe batches per task in the state vector
    int probe_batch = 8;        // examples averaged per probe batch
    int minibatch = 16;
    double lr = 0.05;
    double family_spread = 2.0;  // separation of class means across families
    double task_shift = 0.35;    // offset of a task's means from its family's
    double sample_noise = 1.0;   // within-class spread
    std::vector<LearnedTaskConfig> tasks;

    int task_count() const { return static_cast<int>(tasks.size()); }

    void validate() const {
        if (schema_version != 1)
            throw ConfigError("learned config: unsupported schema_version " +
                              std::to_string(schema_version));
        if (tasks.empty()) throw ConfigError("learned config: no tasks");
        if (input_dim < 1 || hidden_dim < 1 || classes < 2)
            throw ConfigError("learned config: model dims out of range");
        if (train_total < task_count() * minibatch)
            throw ConfigError("learned config: train_total too small for the task count");
        if (heldout_per_task < 1 || probes_per_task < 1 || probe_batch < 1 || minibatch < 1)
            throw ConfigError("learned config: dataset sizes must be positive");
        if (!(lr > 0.0)) throw ConfigError("learned config: lr must be positive");
        if (!(family_spread > 0.0) || !(sample_noise > 0.0) || task_shift < 0.0)
            throw ConfigError("learned config: distribution scales out of range");
        for (const LearnedTaskConfig& t : tasks) {
            if (t.name.empty()) throw ConfigError("learned config: task with empty name");
            if (t.family < 0) throw ConfigError("learned config: family indices must be >= 0");
        }
    }

    static LearnedConfig from_json(const nlohmann::json& j, const std::string& path = "learned") {
        check_keys(j, path,
                   {"schema_version", "input_dim", "hidden_dim", "classes", "train_total",
                    "heldout_per_task", "probes_per_task", "probe_batch", "minibatch", "lr",
                    "family_spread", "task_shift", "sample_noise", "tasks"});
        LearnedConfig c;
        c.schema_version = req<int>(j, path, "schema_version");
        c.input_dim = opt<int>(j, path, "input_dim", c.input_dim);
        c.hidden_dim = opt<int>(j, path, "hidden_dim", c.hidden_dim);
        c.classes = opt<int>(j, path, "classes", c.classes);
        c.train_total = opt<int>(j, path, "train_total", c.train_total);
        c.heldout_per_task = opt<int>(j, path, "heldout_per_task", c.heldout_per_task);
        c.probes_per_task = opt<int>(j, path, "probes_per_task", c.probes_per_task);
        c.probe_batch = opt<int>(j, path, "probe_batch", c.probe_batch);
        c.minibatch = opt<int>(j, path, "minibatch", c.minibatch);
        c.lr = opt<double>(j, path, "lr", c.lr);
        c.family_spread = opt<double>(j, path, "family_spread", c.family_spread);
        c.task_shift = opt<double>(j, path, "task_shift", c.task_shift);
        c.sample_noise = opt<double>(j, path, "sample_noise", c.sample_noise);
        auto it = j.find("tasks");
        if (it == j.end()) throw ConfigError(path + ": missing required key 'tasks'");
        expect_array(*it, path + ".tasks");
        for (std::size_t i = 0; i < it->size(); ++i) {
            const std::string tp = path + ".tasks[" + std::to_string(i) + "]";
            check_keys((*it)[i], tp, {"name", "data_weight", "warmup_eligible", "family"});
            LearnedTaskConfig t;
            t.name = req<std::string>((*it)[i], tp, "name");
            t.data_weight = req<double>((*it)[i], tp, "data_weight");
            t.warmup_eligible = opt<bool>((*it)[i], tp, "warmup_eligible", false);
            t.family = opt<int>((*it)[i], tp, "family", 0);
            c.tasks.push_back(std::move(t));
        }
        c.validate();
        return c;
    }

    nlohmann::json to_json() const {
        nlohmann::json tasks_j = nlohmann::json::array();
        for (const LearnedTaskConfig& t : tasks)
            tasks_j.push_back({{"name", t.name},
                               {"data_weight", t.data_weight},
                               {"warmup_eligible", t.warmup_eligible},
                               {"family", t.family}});
        return {{"schema_version", schema_version},
                {"input_dim", input_dim},
                {"hidden_dim", hidden_dim},
                {"classes", classes},
                {"train_total", train_total},
                {"heldout_per_task", heldout_per_task},
                {"probes_per_task", probes_per_task},
                {"probe_batch", probe_batch},
                {"minibatch", minibatch},
                {"lr", lr},
                {"family_spread", family_spread},
                {"task_shift", task_shift},
                {"sample_noise", sample_noise},
                {"tasks", std::move(tasks_j)}};
    }
};

/// A real (if tiny) multi-task student: a shared tanh trunk with one softmax
/// classification head per task, trained by plain SGD on synthetic Gaussian
/// cluster data.  Tasks in the same family share class means up to a
/// per-task shift, so trunk features learned on one family member transfer
/// to the other; training data per task is sized by data_weight, so
/// low-weight tasks genuinely overfit when hammered.
///
/// Scores are negated cross-entropy on held-out data.  The state vector is
/// the per-probe-batch cross-entropy on fixed probe batches.  Training
/// cycles deterministically through each task's examples and consumes no
/// randomness at train time; all stochasticity is in dataset generation.
class TinyLearnedStudent : public StudentEnvironment {
  public:
    TinyLearnedStudent(LearnedConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
        cfg_.validate();
        for (int i = 0; i < cfg_.task_count(); ++i)
            profiles_.push_back(TaskProfile{TaskId{i}, cfg_.tasks[i].name, cfg_.tasks[i].data_weight,
                                            cfg_.tasks[i].warmup_eligible});
        normalize_weights(profiles_);
        validate_profiles(profiles_);
        reset(seed);
    }

    int task_count() const override { return cfg_.task_count(); }
    const std::vector<TaskProfile>& tasks() const override { return profiles_; }
    int probes_per_task() const override { return cfg_.probes_per_task; }
    long steps_trained() const override { return steps_done_; }
    const LearnedConfig& config() const { return cfg_; }

    void reset(std::uint64_t seed) override {
        generate_data(Rng(derive_seed(seed, kStreamData)));
        init_model(Rng(derive_seed(seed, kStreamEnvInit)));
        cursors_.assign(cfg_.task_count(), 0);
        steps_done_ = 0;
    }

    void train_on(TaskId task, Rng&) override {
        check_task(task);
        int t = task.value;
        const Dataset& data = train_[t];
        int n = static_cast<int>(data.labels.size());

        Matrix gw1(cfg_.hidden_dim, cfg_.input_dim);
        std::vector<double> gb1(cfg_.hidden_dim, 0.0);
        Matrix gw2(cfg_.classes, cfg_.hidden_dim);
        std::vector<double> gb2(cfg_.classes, 0.0);

        for (int b = 0; b < cfg_.minibatch; ++b) {
            int idx = cursors_[t];
            cursors_[t] = (cursors_[t] + 1) % n;
            const double* x = data.x.row(idx);

            std::vector<double> z(cfg_.hidden_dim);
            for (int h = 0; h < cfg_.hidden_dim; ++h)
                z[h] = std::tanh(b1_[h] + dot(w1_.row(h), x, cfg_.input_dim));
            std::vector<double> logits(cfg_.classes);
            for (int c = 0; c < cfg_.classes; ++c)
                logits[c] = b2_[t][c] + dot(w2_[t].row(c), z.data(), cfg_.hidden_dim);
            std::vector<double> p = softmax_of(logits);

            // dCE/dlogit = p - onehot(label)
            p[data.labels[idx]] -= 1.0;
            std::vector<double> dz(cfg_.hidden_dim, 0.0);
            for (int c = 0; c < cfg_.classes; ++c) {
                double d = p[c];
                double* grow = gw2.row(c);
                const double* wrow = w2_[t].row(c);
                for (int h = 0; h < cfg_.hidden_dim; ++h) {
                    grow[h] += d * z[h];
                    dz[h] += d * wrow[h];
                }
                gb2[c] += d;
            }
            for (int h = 0; h < cfg_.hidden_dim; ++h) {
                double d = dz[h] * (1.0 - z[h] * z[h]);
                double* grow = gw1.row(h);
                for (int i = 0; i < cfg_.input_dim; ++i) grow[i] += d * x[i];
                gb1[h] += d;
            }
        }

        double scale = cfg_.lr / cfg_.minibatch;
        for (std::size_t i = 0; i < w1_.a.size(); ++i) w1_.a[i] -= scale * gw1.a[i];
        for (int h = 0; h < cfg_.hidden_dim; ++h) b1_[h] -= scale * gb1[h];
        for (std::size_t i = 0; i < w2_[t].a.size(); ++i) w2_[t].a[i] -= scale * gw2.a[i];
        for (int c = 0; c < cfg_.classes; ++c) b2_[t][c] -= scale * gb2[c];
        ++steps_done_;
    }

    Score eval_score(const EvalTarget& target) const override {
        if (!target.is_mixed()) {
            check_task(*target.task);
            return Score{-heldout_ce(target.task->value)};
        }
        double sum = 0.0;
        for (int t = 0; t < cfg_.task_count(); ++t) sum += heldout_ce(t);
        return Score{-sum / cfg_.task_count()};
    }

    StateVector observe_state() const override {
        StateVector s;
        s.values.reserve(static_cast<std::size_t>(cfg_.task_count()) * cfg_.probes_per_task);
        for (int t = 0; t < cfg_.task_count(); ++t)
            for (int p = 0; p < cfg_.probes_per_task; ++p) {
                double ce = 0.0;
                for (int b = 0; b < cfg_.probe_batch; ++b) {
                    int idx = p * cfg_.probe_batch + b;
                    ce += sample_ce(t, probe_[t], idx);
                }
                s.values.push_back(ce / cfg_.probe_batch);
            }
        return s;
    }

    /// Training examples held for one task (exposed for tests).
    int train_size(TaskId task) const {
        check_task(task);
        return static_cast<int>(train_[task.value].labels.size());
    }

  private:
    struct Dataset {
        Matrix x;  // one row per example
        std::vector<int> labels;
    };

    void check_task(TaskId t) const {
        if (t.value < 0 || t.value >= cfg_.task_count())
            throw std::out_of_range("task id " + std::to_string(t.value) + " out of range");
    }

    static std::vector<double> softmax_of(const std::vector<double>& z) {
        double mx = *std::max_element(z.begin(), z.end());
        std::vector<double> p(z.size());
        double sum = 0.0;
        for (std::size_t i = 0; i < z.size(); ++i) {
            p[i] = std::exp(z[i] - mx);
            sum += p[i];
        }
        for (double& v : p) v /= sum;
        return p;
    }

    /// Cross-entropy of one stored example under the current model.
    double sample_ce(int task, const Dataset& data, int idx) const {
        const double* x = data.x.row(idx);
        std::vector<double> z(cfg_.hidden_dim);
        for (int h = 0; h < cfg_.hidden_dim; ++h)
            z[h] = std::tanh(b1_[h] + dot(w1_.row(h), x, cfg_.input_dim));
        std::vector<double> logits(cfg_.classes);
        for (int c = 0; c < cfg_.classes; ++c)
            logits[c] = b2_[task][c] + dot(w2_[task].row(c), z.data(), cfg_.hidden_dim);
        double mx = *std::max_element(logits.begin(), logits.end());
        double sum = 0.0;
        for (double v : logits) sum += std::exp(v - mx);
        return std::log(sum) - (logits[data.labels[idx]] - mx);
    }

    double heldout_ce(int task) const {
        const Dataset& data = heldout_[task];
        double ce = 0.0;
        for (std::size_t i = 0; i < data.labels.size(); ++i)
            ce += sample_ce(task, data, static_cast<int>(i));
        return ce / static_cast<double>(data.labels.size());
    }

    void generate_data(Rng rng) {
        int k = cfg_.task_count();
        int families = 0;
        for (const LearnedTaskConfig& t : cfg_.tasks) families = std::max(families, t.family + 1);

        // Class means per family, then a per-task shift.  Draw order frozen:
        // family means, task shifts, then per-task datasets (train, held-out,
        // probe) in task order.
        std::vector<std::vector<std::vector<double>>> mu(families);
        for (int f = 0; f < families; ++f) {
            mu[f].resize(cfg_.classes);
            for (int c = 0; c < cfg_.classes; ++c) {
                mu[f][c].resize(cfg_.input_dim);
                for (double& v : mu[f][c]) v = cfg_.family_spread * rng.normal();
            }
        }
        std::vector<std::vector<double>> shift(k);
        for (int t = 0; t < k; ++t) {
            shift[t].resize(cfg_.input_dim);
            for (double& v : shift[t]) v = cfg_.task_shift * rng.normal();
        }

        double weight_sum = 0.0;
        for (const LearnedTaskConfig& t : cfg_.tasks) weight_sum += t.data_weight;

        train_.assign(k, Dataset{});
        heldout_.assign(k, Dataset{});
        probe_.assign(k, Dataset{});
        for (int t = 0; t < k; ++t) {
            int n_train = std::max(
                cfg_.minibatch,
                static_cast<int>(std::lround(cfg_.train_total * cfg_.tasks[t].data_weight / weight_sum)));
            fill_dataset(train_[t], t, n_train, mu, shift, rng);
            fill_dataset(heldout_[t], t, cfg_.heldout_per_task, mu, shift, rng);
            fill_dataset(probe_[t], t, cfg_.probes_per_task * cfg_.probe_batch, mu, shift, rng);
        }
    }

    void fill_dataset(Dataset& data, int task, int n,
                      const std::vector<std::vector<std::vector<double>>>& mu,
                      const std::vector<std::vector<double>>& shift, Rng& rng) {
        data.x = Matrix(n, cfg_.input_dim);
        data.labels.resize(n);
        int family = cfg_.tasks[task].family;
        for (int i = 0; i < n; ++i) {
            int label = i % cfg_.classes;  // balanced labels
            data.labels[i] = label;
            double* row = data.x.row(i);
            for (int d = 0; d < cfg_.input_dim; ++d)
                row[d] = mu[family][label][d] + shift[task][d] + cfg_.sample_noise * rng.normal();
        }
    }

    void init_model(Rng rng) {
        double bound1 = 1.0 / std::sqrt(static_cast<double>(cfg_.input_dim));
        w1_ = Matrix(cfg_.hidden_dim, cfg_.input_dim);
        for (double& v : w1_.a) v = (2.0 * rng.uniform01() - 1.0) * bound1;
        b1_.assign(cfg_.hidden_dim, 0.0);
        double bound2 = 1.0 / std::sqrt(static_cast<double>(cfg_.hidden_dim));
        w2_.assign(cfg_.task_count(), Matrix(cfg_.classes, cfg_.hidden_dim));
        b2_.assign(cfg_.task_count(), std::vector<double>(cfg_.classes, 0.0));
        for (int t = 0; t < cfg_.task_count(); ++t)
            for (double& v : w2_[t].a) v = (2.0 * rng.uniform01() - 1.0) * bound2;
    }

    LearnedConfig cfg_;
    std::vector<TaskProfile> profiles_;
    std::vector<Dataset> train_, heldout_, probe_;
    Matrix w1_;
    std::vector<double> b1_;
    std::vector<Matrix> w2_;
    std::vector<std::vector<double>> b2_;
    std::vector<int> cursors_;
    long steps_done_ = 0;
};

}  // namespace currl
